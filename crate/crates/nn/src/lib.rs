//! A small deterministic CPU tensor engine and the conditional GAN built on it.

pub mod gan;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use layers::{Activation, Conv2d, ConvTranspose2d, InstanceNorm, Layer, Module, PadMode, Residual, Sequential};
pub use optim::Adam;
pub use tensor::{Tensor, TensorError};

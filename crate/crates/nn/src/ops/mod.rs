//! Functional forward and backward kernels. Every reduction accumulates in
//! f64 in a fixed order per output element, and work is split by output
//! plane, so results do not depend on the number of threads.

mod act;
mod conv;
mod norm;

pub use act::{act_backward, act_forward, ActKind};
pub use conv::{
    conv2d, conv2d_backward, conv_output_size, conv_transpose2d, conv_transpose2d_backward, conv_transpose_output_size, pad2d,
    pad2d_backward, ConvGrads, PadMode,
};
pub use norm::{instance_norm, instance_norm_backward, NormGrads, INSTANCE_NORM_EPS};

use serde::{Deserialize, Serialize};

use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActKind {
    Relu,
    LeakyRelu { slope: f32 },
    Tanh,
    Sigmoid,
}

impl ActKind {
    pub const LEAKY_DEFAULT: ActKind = ActKind::LeakyRelu { slope: 0.2 };

    #[inline]
    fn apply(self, x: f32) -> f32 {
        match self {
            ActKind::Relu => x.max(0.0),
            ActKind::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            ActKind::Tanh => x.tanh(),
            ActKind::Sigmoid => (1.0 / (1.0 + (-(x as f64)).exp())) as f32,
        }
    }

    #[inline]
    fn derivative(self, x: f32) -> f32 {
        match self {
            ActKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActKind::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            ActKind::Tanh => {
                let t = (x as f64).tanh();
                (1.0 - t * t) as f32
            }
            ActKind::Sigmoid => {
                let s = 1.0 / (1.0 + (-(x as f64)).exp());
                (s * (1.0 - s)) as f32
            }
        }
    }
}

pub fn act_forward(x: &Tensor, kind: ActKind) -> Tensor {
    x.map(|v| kind.apply(v))
}

pub fn act_backward(x: &Tensor, kind: ActKind, gout: &Tensor) -> Result<Tensor, TensorError> {
    x.zip_map(gout, |v, g| g * kind.derivative(v))
}

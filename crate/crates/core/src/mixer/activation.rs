use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Hardswish,
    Gelu,
    Relu,
    Silu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [
        ActivationKind::Hardswish,
        ActivationKind::Gelu,
        ActivationKind::Relu,
        ActivationKind::Silu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Hardswish => "hardswish",
            ActivationKind::Gelu => "gelu",
            ActivationKind::Relu => "relu",
            ActivationKind::Silu => "silu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }

    pub fn apply<T: Scalar>(self, x: T) -> T {
        let c = |v: f64| T::from_f64(v).unwrap();
        match self {
            ActivationKind::Hardswish => x * (x + c(3.0)).max(T::zero()).min(c(6.0)) / c(6.0),
            ActivationKind::Relu => x.max(T::zero()),
            ActivationKind::Silu => x * sigmoid(x),
            ActivationKind::Gelu => {
                let v = x.to_f64().unwrap();
                c(0.5 * v * (1.0 + libm::erf(v * FRAC_1_SQRT_2)))
            }
        }
    }

    /// Derivative with respect to the input.
    ///
    /// Hardswish takes 0 at x = -3 and 1 at x = 3; ReLU takes 0 at the origin.
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        let c = |v: f64| T::from_f64(v).unwrap();
        match self {
            ActivationKind::Hardswish => {
                if x <= c(-3.0) {
                    T::zero()
                } else if x >= c(3.0) {
                    T::one()
                } else {
                    (x + x + c(3.0)) / c(6.0)
                }
            }
            ActivationKind::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ActivationKind::Silu => {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            }
            ActivationKind::Gelu => {
                let v = x.to_f64().unwrap();
                let cdf = 0.5 * (1.0 + libm::erf(v * FRAC_1_SQRT_2));
                let pdf = (-0.5 * v * v).exp() / (2.0 * PI).sqrt();
                c(cdf + v * pdf)
            }
        }
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

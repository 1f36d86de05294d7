use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::numerics::Vector;

/// Componentwise activation function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    /// `max(z, 0) + slope·min(z, 0)` with a fixed slope in `(0, 1]`.
    LeakyRelu {
        slope: f64,
    },
    /// Same shape as leaky ReLU but the slope is a trainable parameter
    /// (one scalar per layer).
    Prelu {
        slope: f64,
    },
    /// `log(1 + e^{βz}) / β`.
    Softplus {
        beta: f64,
    },
    Identity,
}

impl Activation {
    pub fn validate(&self) -> Result<(), Error> {
        match *self {
            Activation::LeakyRelu { slope } if !(slope > 0.0 && slope <= 1.0) => Err(
                Error::InvalidArgument(format!("leaky relu slope must be in (0,1], got {slope}")),
            ),
            Activation::Prelu { slope } if !slope.is_finite() => Err(Error::InvalidArgument(
                format!("prelu slope must be finite, got {slope}"),
            )),
            Activation::Softplus { beta } if !(beta > 0.0 && beta.is_finite()) => Err(
                Error::InvalidArgument(format!("softplus beta must be > 0, got {beta}")),
            ),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn apply_scalar(&self, z: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { slope } | Activation::Prelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Softplus { beta } => {
                let bz = beta * z;
                (bz.max(0.0) + (-bz.abs()).exp().ln_1p()) / beta
            }
            Activation::Identity => z,
        }
    }

    /// Derivative; for the piecewise-linear kinds the value at exactly 0 is
    /// the negative-side slope.
    #[inline]
    pub fn deriv_scalar(&self, z: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { slope } | Activation::Prelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Softplus { beta } => logistic(beta * z),
            Activation::Identity => 1.0,
        }
    }

    pub fn apply(&self, z: &[f64]) -> Vector {
        z.iter().map(|&v| self.apply_scalar(v)).collect()
    }

    pub fn deriv(&self, z: &[f64]) -> Vector {
        z.iter().map(|&v| self.deriv_scalar(v)).collect()
    }

    /// Whether the scalar function is differentiable on all of ℝ.
    pub fn is_differentiable(&self) -> bool {
        match *self {
            Activation::LeakyRelu { slope } | Activation::Prelu { slope } => slope == 1.0,
            Activation::Softplus { .. } | Activation::Identity => true,
        }
    }

    /// Closed-form range of the derivative over ℝ as `(inf, sup)`.
    /// Softplus never attains its bounds.
    pub fn derivative_bounds(&self) -> (f64, f64) {
        match *self {
            Activation::LeakyRelu { slope } | Activation::Prelu { slope } => {
                (slope.min(1.0), slope.max(1.0))
            }
            Activation::Softplus { .. } => (0.0, 1.0),
            Activation::Identity => (1.0, 1.0),
        }
    }

    pub fn trainable_slope(&self) -> bool {
        matches!(self, Activation::Prelu { .. })
    }

    pub(crate) fn kind_code(&self) -> u8 {
        match self {
            Activation::Identity => 1,
            Activation::LeakyRelu { .. } => 2,
            Activation::Prelu { .. } => 3,
            Activation::Softplus { .. } => 4,
        }
    }

    pub(crate) fn parameter(&self) -> f64 {
        match *self {
            Activation::LeakyRelu { slope } | Activation::Prelu { slope } => slope,
            Activation::Softplus { beta } => beta,
            Activation::Identity => 0.0,
        }
    }

    pub(crate) fn from_code(code: u8, parameter: f64) -> Option<Activation> {
        match code {
            1 => Some(Activation::Identity),
            2 => Some(Activation::LeakyRelu { slope: parameter }),
            3 => Some(Activation::Prelu { slope: parameter }),
            4 => Some(Activation::Softplus { beta: parameter }),
            _ => None,
        }
    }
}

#[inline]
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::LeakyRelu { slope } => write!(f, "leaky_relu:{slope}"),
            Activation::Prelu { slope } => write!(f, "prelu:{slope}"),
            Activation::Softplus { beta } => write!(f, "softplus:{beta}"),
            Activation::Identity => write!(f, "identity"),
        }
    }
}

/// Parses `identity`, `leaky_relu[:slope]`, `prelu[:slope]`,
/// `softplus[:beta]`.
impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let num = |default: f64| -> Result<f64, Error> {
            arg.map_or(Ok(default), |a| {
                a.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad activation parameter '{a}'")))
            })
        };
        let act = match name.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Activation::Identity,
            "leaky_relu" | "lrelu" | "leakyrelu" => Activation::LeakyRelu { slope: num(0.01)? },
            "prelu" => Activation::Prelu { slope: num(0.25)? },
            "softplus" => Activation::Softplus { beta: num(1.0)? },
            other => return Err(Error::Config(format!("unknown activation '{other}'"))),
        };
        act.validate()?;
        Ok(act)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn leaky_relu_negative_side() {
        let a = Activation::LeakyRelu { slope: 0.1 };
        assert!((a.apply_scalar(-1.0) + 0.1).abs() < 1e-15);
        assert_eq!(a.deriv_scalar(-1.0), 0.1);
        assert_eq!(a.apply_scalar(2.0), 2.0);
    }

    #[test]
    fn softplus_at_zero() {
        let a = Activation::Softplus { beta: 1.0 };
        assert_eq!(a.deriv_scalar(0.0), 0.5);
        assert!((a.apply_scalar(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn softplus_does_not_overflow() {
        let a = Activation::Softplus { beta: 2.0 };
        assert_eq!(a.apply_scalar(1e4), 1e4);
        assert!(a.apply_scalar(-1e4) >= 0.0);
        assert!(a.apply_scalar(-1e4) < 1e-300);
        assert_eq!(a.deriv_scalar(1e4), 1.0);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        let mut rng = Rng::new(5);
        let kinds = [
            Activation::LeakyRelu { slope: 0.2 },
            Activation::Prelu { slope: 0.7 },
            Activation::Softplus { beta: 1.0 },
            Activation::Softplus { beta: 3.0 },
            Activation::Identity,
        ];
        for act in kinds {
            for _ in 0..100 {
                let mut z = rng.uniform_range(-5.0, 5.0);
                if z.abs() < 10.0 * h {
                    z += 0.1; // keep away from the kink
                }
                let fd = (act.apply_scalar(z + h) - act.apply_scalar(z - h)) / (2.0 * h);
                assert!(
                    (fd - act.deriv_scalar(z)).abs() <= 1e-6,
                    "{act} at {z}: fd {fd} vs {}",
                    act.deriv_scalar(z)
                );
            }
        }
    }

    #[test]
    fn parse_round_trip() {
        for s in ["identity", "leaky_relu:0.01", "prelu:0.25", "softplus:2"] {
            let a: Activation = s.parse().unwrap();
            let b: Activation = a.to_string().parse().unwrap();
            assert_eq!(a, b);
        }
        assert!("leaky_relu:1.5".parse::<Activation>().is_err());
        assert!("tanh".parse::<Activation>().is_err());
    }
}

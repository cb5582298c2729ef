//! Membership functions and t-norms.
//!
//! Coarse masses are turned into typicality degrees by a nondecreasing
//! membership function with μ(1) = 1, and fine/coarse evidence is conjoined
//! with a continuous t-norm. Every function has an exact derivative; at kinks
//! the right-hand derivative (membership) or a fixed subgradient (t-norms) is
//! returned so training stays deterministic.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {x} outside [0, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MembershipFamily {
    Gaussian,
    Triangular,
    Trapezoidal,
}

impl std::str::FromStr for MembershipFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "triangular" => Ok(Self::Triangular),
            "trapezoidal" => Ok(Self::Trapezoidal),
            other => Err(Error::Config(format!("unknown membership family `{other}`"))),
        }
    }
}

/// A nondecreasing map [0,1] → [0,1] with μ(1) = 1.
///
/// * gaussian: `exp(-(1-x)² / 2σ²)`
/// * triangular: `clamp((x-a)/(1-a), 0, 1)`
/// * trapezoidal: `clamp((x-a)/(b-a), 0, 1)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum MembershipFn {
    Gaussian { sigma: f64 },
    Triangular { a: f64 },
    Trapezoidal { a: f64, b: f64 },
}

impl Default for MembershipFn {
    fn default() -> Self {
        MembershipFn::Gaussian { sigma: 1.0 }
    }
}

impl MembershipFn {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::Gaussian { sigma }.validated()
    }

    pub fn triangular(a: f64) -> Result<Self> {
        Self::Triangular { a }.validated()
    }

    pub fn trapezoidal(a: f64, b: f64) -> Result<Self> {
        Self::Trapezoidal { a, b }.validated()
    }

    /// Family defaults: σ = 1, triangular a = 0, trapezoidal a = 0, b = 0.5.
    pub fn default_for(family: MembershipFamily) -> Self {
        match family {
            MembershipFamily::Gaussian => Self::Gaussian { sigma: 1.0 },
            MembershipFamily::Triangular => Self::Triangular { a: 0.0 },
            MembershipFamily::Trapezoidal => Self::Trapezoidal { a: 0.0, b: 0.5 },
        }
    }

    pub fn family(&self) -> MembershipFamily {
        match self {
            Self::Gaussian { .. } => MembershipFamily::Gaussian,
            Self::Triangular { .. } => MembershipFamily::Triangular,
            Self::Trapezoidal { .. } => MembershipFamily::Trapezoidal,
        }
    }

    pub fn validated(self) -> Result<Self> {
        let ok = match self {
            Self::Gaussian { sigma } => sigma.is_finite() && sigma > 0.0,
            Self::Triangular { a } => (0.0..1.0).contains(&a),
            Self::Trapezoidal { a, b } => (0.0..1.0).contains(&a) && b > a && b <= 1.0,
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::Config(format!("invalid membership parameters {self:?}")))
        }
    }

    /// μ(x) for x ∈ [0, 1].
    pub fn degree(&self, x: f64) -> Result<f64> {
        check_unit("membership argument", x)?;
        Ok(self.degree_unit(x))
    }

    /// dμ/dx for x ∈ [0, 1], right-hand at kinks.
    pub fn grad(&self, x: f64) -> Result<f64> {
        check_unit("membership argument", x)?;
        Ok(self.grad_unit(x))
    }

    pub(crate) fn degree_unit(&self, x: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => (-(1.0 - x).powi(2) / (2.0 * sigma * sigma)).exp(),
            Self::Triangular { a } => ((x - a) / (1.0 - a)).clamp(0.0, 1.0),
            Self::Trapezoidal { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
        }
    }

    pub(crate) fn grad_unit(&self, x: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => {
                (1.0 - x) / (sigma * sigma) * self.degree_unit(x)
            }
            Self::Triangular { a } => {
                if x >= a {
                    1.0 / (1.0 - a)
                } else {
                    0.0
                }
            }
            Self::Trapezoidal { a, b } => {
                if x >= a && x < b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TNorm {
    #[default]
    Product,
    Godel,
    Lukasiewicz,
}

impl TNorm {
    pub const ALL: [TNorm; 3] = [TNorm::Product, TNorm::Godel, TNorm::Lukasiewicz];

    /// T(a, b) for a, b ∈ [0, 1].
    pub fn apply(&self, a: f64, b: f64) -> Result<f64> {
        check_unit("t-norm argument a", a)?;
        check_unit("t-norm argument b", b)?;
        Ok(self.apply_unit(a, b))
    }

    /// (∂T/∂a, ∂T/∂b). Gödel ties credit `a`; Łukasiewicz is (1, 1) on a+b-1 ≥ 0.
    pub fn grads(&self, a: f64, b: f64) -> Result<(f64, f64)> {
        check_unit("t-norm argument a", a)?;
        check_unit("t-norm argument b", b)?;
        Ok(self.grads_unit(a, b))
    }

    pub(crate) fn apply_unit(&self, a: f64, b: f64) -> f64 {
        match self {
            TNorm::Product => a * b,
            TNorm::Godel => a.min(b),
            TNorm::Lukasiewicz => (a + b - 1.0).max(0.0),
        }
    }

    pub(crate) fn grads_unit(&self, a: f64, b: f64) -> (f64, f64) {
        match self {
            TNorm::Product => (b, a),
            TNorm::Godel => {
                if a <= b {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            TNorm::Lukasiewicz => {
                if a + b - 1.0 >= 0.0 {
                    (1.0, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }
}

impl fmt::Display for TNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TNorm::Product => "product",
            TNorm::Godel => "godel",
            TNorm::Lukasiewicz => "lukasiewicz",
        })
    }
}

impl std::str::FromStr for TNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(TNorm::Product),
            "godel" | "goedel" | "min" => Ok(TNorm::Godel),
            "lukasiewicz" => Ok(TNorm::Lukasiewicz),
            other => Err(Error::Config(format!("unknown t-norm `{other}`"))),
        }
    }
}

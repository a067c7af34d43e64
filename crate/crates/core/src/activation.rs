use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Built-in sigmoidal activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmoidKind {
    Logistic,
    Tanh,
    HardTanh,
}

impl SigmoidKind {
    pub const ALL: [SigmoidKind; 3] = [SigmoidKind::Logistic, SigmoidKind::Tanh, SigmoidKind::HardTanh];

    pub fn name(self) -> &'static str {
        match self {
            SigmoidKind::Logistic => "logistic",
            SigmoidKind::Tanh => "tanh",
            SigmoidKind::HardTanh => "hard_tanh",
        }
    }

    /// Limits at minus and plus infinity.
    pub fn limits(self) -> (f64, f64) {
        match self {
            SigmoidKind::Logistic => (0.0, 1.0),
            SigmoidKind::Tanh | SigmoidKind::HardTanh => (-1.0, 1.0),
        }
    }

    /// A point where the derivative is nonzero.
    pub fn smooth_point(self) -> f64 {
        0.0
    }

    pub fn value_at_smooth_point(self) -> f64 {
        match self {
            SigmoidKind::Logistic => 0.5,
            SigmoidKind::Tanh | SigmoidKind::HardTanh => 0.0,
        }
    }

    pub fn derivative_at_smooth_point(self) -> f64 {
        match self {
            SigmoidKind::Logistic => 0.25,
            SigmoidKind::Tanh | SigmoidKind::HardTanh => 1.0,
        }
    }

    pub fn eval_f64(self, x: f64) -> f64 {
        match self {
            SigmoidKind::Logistic => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            SigmoidKind::Tanh => x.tanh(),
            SigmoidKind::HardTanh => x.clamp(-1.0, 1.0),
        }
    }

    /// Distances `(σ(-k) - α, β - σ(k))` computed without cancellation.
    pub fn tail_gaps(self, k: f64) -> (f64, f64) {
        (self.lower_gap(-k), self.upper_gap(k))
    }

    /// `σ(t) − α`
    pub fn lower_gap(self, t: f64) -> f64 {
        match self {
            SigmoidKind::Logistic => 1.0 / (1.0 + (-t).exp()),
            SigmoidKind::Tanh => 2.0 / (1.0 + (-2.0 * t).exp()),
            SigmoidKind::HardTanh => t.clamp(-1.0, 1.0) + 1.0,
        }
    }

    /// `β − σ(t)`
    pub fn upper_gap(self, t: f64) -> f64 {
        match self {
            SigmoidKind::Logistic => 1.0 / (1.0 + t.exp()),
            SigmoidKind::Tanh => 2.0 / (1.0 + (2.0 * t).exp()),
            SigmoidKind::HardTanh => 1.0 - t.clamp(-1.0, 1.0),
        }
    }

    /// `(σ(z+u) − σ(z))/σ′(z) − u` at the smooth point `z`, accurate for
    /// tiny `u`.
    pub fn id_residual(self, u: f64) -> f64 {
        fn tanh_res(u: f64) -> f64 {
            if u.abs() < 1e-3 {
                let u2 = u * u;
                u * u2 * (-1.0 / 3.0 + u2 * (2.0 / 15.0 - u2 * 17.0 / 315.0))
            } else {
                u.tanh() - u
            }
        }
        match self {
            SigmoidKind::Tanh => tanh_res(u),
            // 4(σ(u) − 1/2) = 2 tanh(u/2)
            SigmoidKind::Logistic => 2.0 * tanh_res(u / 2.0),
            SigmoidKind::HardTanh => u.clamp(-1.0, 1.0) - u,
        }
    }

    /// Checks the two defining properties: distinct finite limits and a
    /// nonzero derivative at the smooth point.
    pub fn validate(self) -> Result<()> {
        let (a, b) = self.limits();
        if a == b || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("{}: limits must differ", self.name())));
        }
        let z = self.smooth_point();
        let h = 1e-6;
        let numeric = (self.eval_f64(z + h) - self.eval_f64(z - h)) / (2.0 * h);
        let stated = self.derivative_at_smooth_point();
        if stated == 0.0 || (numeric - stated).abs() > 1e-4 {
            return Err(Error::InvalidArgument(format!("{}: derivative at {z} is {numeric}", self.name())));
        }
        Ok(())
    }
}

impl fmt::Display for SigmoidKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SigmoidKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" | "sigmoid" => Ok(SigmoidKind::Logistic),
            "tanh" => Ok(SigmoidKind::Tanh),
            "hard_tanh" | "hardtanh" | "hard-tanh" => Ok(SigmoidKind::HardTanh),
            other => Err(Error::InvalidArgument(format!("unknown sigmoidal kind '{other}'"))),
        }
    }
}

/// Per-neuron activation tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    /// `x ↦ 1[x ≥ 0]`
    Step,
    Id,
    Sigma(SigmoidKind),
}

impl Activation {
    pub fn is_step_or_id(self) -> bool {
        matches!(self, Activation::Step | Activation::Id)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Step => f.write_str("step"),
            Activation::Id => f.write_str("id"),
            Activation::Sigma(k) => write!(f, "sigma:{k}"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(Activation::Step),
            "id" => Ok(Activation::Id),
            _ => match s.strip_prefix("sigma:") {
                Some(kind) => Ok(Activation::Sigma(kind.parse()?)),
                None => Err(Error::Malformed(format!("unknown activation '{s}'"))),
            },
        }
    }
}

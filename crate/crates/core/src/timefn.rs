//! Scalar coefficient profiles in the time variable.
//!
//! All model coefficients (conformal factor, drift strength, Lyapunov
//! coefficients, curvature lower bounds) are members of a small closed
//! family of profiles for which antiderivatives are available in closed
//! form. Exponential weights `exp(-∫ k)` are therefore evaluated exactly
//! and quadrature is reserved for the outer integrals that need it.

use serde::{Deserialize, Serialize};

/// A scalar function of time with exact value, derivative and integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TimeFn {
    /// `c`
    Constant(f64),
    /// `amp * exp(rate * t)`
    Exp { amp: f64, rate: f64 },
    /// `coeff * t^exponent` (only queried for `t > 0`)
    Power { coeff: f64, exponent: f64 },
    /// Curvature-type profile `2(d-1) / (r0_sq - 2(d-1) t)`, the sharp
    /// lower bound of the Bakry-Emery tensor on the shrinking sphere.
    SphereCurvature { dim: usize, r0_sq: f64 },
    /// `factor * inner`
    Scaled(f64, Box<TimeFn>),
    /// Pointwise sum of profiles.
    Sum(Vec<TimeFn>),
}

impl TimeFn {
    pub const ZERO: TimeFn = TimeFn::Constant(0.0);

    pub fn value(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => *c,
            TimeFn::Exp { amp, rate } => amp * (rate * t).exp(),
            TimeFn::Power { coeff, exponent } => coeff * t.powf(*exponent),
            TimeFn::SphereCurvature { dim, r0_sq } => {
                let c = 2.0 * (*dim as f64 - 1.0);
                c / (r0_sq - c * t)
            }
            TimeFn::Scaled(a, f) => a * f.value(t),
            TimeFn::Sum(fs) => fs.iter().map(|f| f.value(t)).sum(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant(_) => 0.0,
            TimeFn::Exp { amp, rate } => amp * rate * (rate * t).exp(),
            TimeFn::Power { coeff, exponent } => coeff * exponent * t.powf(exponent - 1.0),
            TimeFn::SphereCurvature { dim, r0_sq } => {
                let c = 2.0 * (*dim as f64 - 1.0);
                let denom = r0_sq - c * t;
                c * c / (denom * denom)
            }
            TimeFn::Scaled(a, f) => a * f.derivative(t),
            TimeFn::Sum(fs) => fs.iter().map(|f| f.derivative(t)).sum(),
        }
    }

    /// Exact antiderivative difference `∫_a^b f(u) du`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => c * (b - a),
            TimeFn::Exp { amp, rate } => {
                if rate.abs() < 1e-300 {
                    amp * (b - a)
                } else {
                    amp * ((rate * b).exp() - (rate * a).exp()) / rate
                }
            }
            TimeFn::Power { coeff, exponent } => {
                if (exponent + 1.0).abs() < 1e-12 {
                    coeff * (b / a).ln()
                } else {
                    coeff * (b.powf(exponent + 1.0) - a.powf(exponent + 1.0)) / (exponent + 1.0)
                }
            }
            TimeFn::SphereCurvature { dim, r0_sq } => {
                let c = 2.0 * (*dim as f64 - 1.0);
                ((r0_sq - c * a) / (r0_sq - c * b)).ln()
            }
            TimeFn::Scaled(s, f) => s * f.integral(a, b),
            TimeFn::Sum(fs) => fs.iter().map(|f| f.integral(a, b)).sum(),
        }
    }

    pub fn plus(self, other: TimeFn) -> TimeFn {
        TimeFn::Sum(vec![self, other])
    }

    pub fn scaled(self, factor: f64) -> TimeFn {
        TimeFn::Scaled(factor, Box::new(self))
    }
}

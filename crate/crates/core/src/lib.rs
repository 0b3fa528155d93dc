//! Numerical laboratory for time-inhomogeneous diffusions on evolving
//! model spaces: simulation of the process and its damped parallel
//! transport, construction of evolution systems of measures, probabilistic
//! gradient representations, and Monte Carlo verification of the
//! associated functional inequalities — all validated against a
//! closed-form Gaussian oracle on the flat fixture family.

pub mod coefficients;
pub mod diffusion;
pub mod error;
pub mod geometry;
pub mod inequalities;
pub mod measures;
pub mod oracle;
pub mod quad;
pub mod report;
pub mod rng;
pub mod semigroup;
pub mod testfn;
pub mod timefn;

pub use error::{Error, Result};
pub use geometry::{DriftSpec, Model, ModelKind, SpacePoint};
pub use report::{Verdict, VerdictReport};
pub use timefn::TimeFn;

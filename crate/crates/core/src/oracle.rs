//! Closed-form Gaussian reference for the flat-based model family with
//! linear radial drift: exact transition kernel, exact limiting measures,
//! exact gradients, moments and L^p norms. Every Monte Carlo estimator in
//! the crate is validated against this module on the fixtures where it
//! applies.
//!
//! In chart coordinates the solution of the linear SDE is
//! `X_t = m x + N(0, sigma2 I)` with contraction `m = exp(-∫_s^t λ)` and
//! kernel variance `sigma2 = 2 ∫_s^t c(r)^{-2} exp(-2∫_r^t λ) dr`; the
//! limiting measure is `N(0, v(t) I)` with the same integral extended to
//! `-∞`, when it converges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Model;
use crate::quad;
use crate::testfn::TestFunction;

/// Exact transition/measure parameters of the Gaussian fixture family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MehlerParams {
    pub dim: usize,
    pub s: f64,
    pub t: f64,
    /// Contraction factor `exp(-∫_s^t λ)`.
    pub m: f64,
    /// Coordinate variance of the transition kernel.
    pub sigma2: f64,
    /// Coordinate variance of the limiting measure at `t`; `None` when the
    /// defining integral diverges (no evolution system of measures).
    pub v_t: Option<f64>,
    /// Coordinate variance of the limiting measure at `s`.
    pub v_s: Option<f64>,
    /// Conformal factors, for converting coordinate moments to metric ones.
    pub c_s: f64,
    pub c_t: f64,
}

fn kernel_integrand(model: &Model, t: f64) -> impl Fn(f64) -> f64 + '_ {
    move |r: f64| {
        let c = model.conformal(r);
        let lam = match &model.drift {
            crate::geometry::DriftSpec::Zero => 0.0,
            crate::geometry::DriftSpec::LinearRadial { lambda } => lambda.integral(r, t),
        };
        (-2.0 * lam).exp() / (c * c)
    }
}

fn lambda_integral(model: &Model, a: f64, b: f64) -> f64 {
    match &model.drift {
        crate::geometry::DriftSpec::Zero => 0.0,
        crate::geometry::DriftSpec::LinearRadial { lambda } => lambda.integral(a, b),
    }
}

pub fn mehler_params(
    model: &Model,
    s: f64,
    t: f64,
    q: &crate::coefficients::QuadratureSettings,
) -> Result<MehlerParams> {
    if !model.is_flat_based() {
        return Err(Error::Precondition("oracle covers the flat-based family only".into()));
    }
    if s > t {
        return Err(Error::Domain("need s <= t".into()));
    }
    let m = (-lambda_integral(model, s, t)).exp();
    let f = kernel_integrand(model, t);
    let sigma2 = 2.0 * quad::integrate(&f, s, t, q.rel_tol.min(1e-10));
    let v_t = quad::integrate_tail_left(&f, t, q.rel_tol.min(1e-10), q.divergence_threshold, q.max_doublings)
        .finite()
        .map(|x| 2.0 * x);
    let fs = kernel_integrand(model, s);
    let v_s = quad::integrate_tail_left(&fs, s, q.rel_tol.min(1e-10), q.divergence_threshold, q.max_doublings)
        .finite()
        .map(|x| 2.0 * x);
    Ok(MehlerParams {
        dim: model.dim,
        s,
        t,
        m,
        sigma2,
        v_t,
        v_s,
        c_s: model.conformal(s),
        c_t: model.conformal(t),
    })
}

/// 1-d expectation `E g(N(mean, var))` by adaptive quadrature over twelve
/// standard deviations (exact to ~1e-10 for the fixture class, including
/// the kinked capped functions).
pub fn gaussian_e1<F: Fn(f64) -> f64>(mean: f64, var: f64, g: F) -> f64 {
    if var <= 0.0 {
        return g(mean);
    }
    let sd = var.sqrt();
    let density = |x: f64| {
        let z = (x - mean) / sd;
        (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    };
    quad::integrate(&|x| g(x) * density(x), mean - 12.0 * sd, mean + 12.0 * sd, 1e-11)
}

/// Expectation of a fixture function under `N(mean, var I)`, in closed
/// form where available and by 1-d quadrature otherwise. Divergent
/// exponential moments return `+inf`.
pub fn gaussian_expect(mean: &[f64], var: f64, f: &TestFunction) -> f64 {
    match f {
        TestFunction::Constant(c) => *c,
        TestFunction::Coordinate(i) => mean[*i],
        TestFunction::Norm2 => {
            mean.iter().map(|c| c * c).sum::<f64>() + mean.len() as f64 * var
        }
        TestFunction::GaussianBump { center, width } => {
            let w2 = width * width;
            let total = w2 + var;
            let mut p = (w2 / total).powf(mean.len() as f64 / 2.0);
            for (mu, c) in mean.iter().zip(center) {
                p *= (-(mu - c) * (mu - c) / (2.0 * total)).exp();
            }
            p
        }
        TestFunction::LipCap { axis, .. } => {
            let fx = f.clone();
            let ax = *axis;
            gaussian_e1(mean[ax], var, move |x| {
                let mut coords = vec![0.0; ax + 1];
                coords[ax] = x;
                fx.value(&coords)
            })
        }
        TestFunction::ExpRadial { lambda } => {
            let denom = 1.0 - 2.0 * lambda * var;
            if denom <= 0.0 {
                return f64::INFINITY;
            }
            let d = mean.len() as f64;
            denom.powf(-d / 2.0)
                * (lambda * mean.iter().map(|c| c * c).sum::<f64>() / denom).exp()
        }
    }
}

/// Gradient of `x -> E f(N(x, var I))` evaluated at `mean`.
pub fn gaussian_expect_gradient(mean: &[f64], var: f64, f: &TestFunction) -> Vec<f64> {
    let mut g = vec![0.0; mean.len()];
    match f {
        TestFunction::Constant(_) => {}
        TestFunction::Coordinate(i) => g[*i] = 1.0,
        TestFunction::Norm2 => {
            for (gi, mu) in g.iter_mut().zip(mean) {
                *gi = 2.0 * mu;
            }
        }
        TestFunction::GaussianBump { center, width } => {
            let p = gaussian_expect(mean, var, f);
            let total = width * width + var;
            for ((gi, mu), c) in g.iter_mut().zip(mean).zip(center) {
                *gi = -(mu - c) / total * p;
            }
        }
        TestFunction::LipCap { axis, .. } => {
            let fx = f.clone();
            let ax = *axis;
            g[ax] = gaussian_e1(mean[ax], var, move |x| {
                let mut coords = vec![0.0; ax + 1];
                coords[ax] = x;
                fx.euclid_gradient(&coords)[ax]
            });
        }
        TestFunction::ExpRadial { lambda } => {
            let denom = 1.0 - 2.0 * lambda * var;
            if denom <= 0.0 {
                for gi in g.iter_mut() {
                    *gi = f64::INFINITY;
                }
                return g;
            }
            let p = gaussian_expect(mean, var, f);
            for (gi, mu) in g.iter_mut().zip(mean) {
                *gi = 2.0 * lambda * mu / denom * p;
            }
        }
    }
    g
}

/// Exact `P_{s,t} f (x)` in chart coordinates.
pub fn exact_p(params: &MehlerParams, x: &[f64], f: &TestFunction) -> f64 {
    let mean: Vec<f64> = x.iter().map(|c| params.m * c).collect();
    gaussian_expect(&mean, params.sigma2, f)
}

/// Exact coordinate gradient of `P_{s,t} f` at `x`: the Mehler map gives
/// `∇ P f = m P(∇ f)`, i.e. the chain rule through `mean = m x`.
pub fn exact_gradient(params: &MehlerParams, x: &[f64], f: &TestFunction) -> Vec<f64> {
    let mean: Vec<f64> = x.iter().map(|c| params.m * c).collect();
    gaussian_expect_gradient(&mean, params.sigma2, f)
        .into_iter()
        .map(|g| params.m * g)
        .collect()
}

/// Expectation of a fixture function under the limiting measure at `t`.
pub fn exact_mu_expectation(params: &MehlerParams, f: &TestFunction) -> Result<f64> {
    let v = params
        .v_t
        .ok_or_else(|| Error::Precondition("limiting measure does not exist".into()))?;
    Ok(gaussian_expect(&vec![0.0; params.dim], v, f))
}

/// Second metric moment `μ_t(ρ_t(o, ·)^2) = d c(t)^2 v(t)`.
pub fn exact_mu_rho2(params: &MehlerParams) -> Result<f64> {
    let v = params
        .v_t
        .ok_or_else(|| Error::Precondition("limiting measure does not exist".into()))?;
    Ok(params.dim as f64 * params.c_t * params.c_t * v)
}

/// Exponential metric moment `μ_t(exp(λ ρ_t^2))`: `(1 - 2 λ c² v)^{-d/2}`
/// when `2 λ c² v < 1`, `+inf` otherwise.
pub fn exact_mu_exp_moment(params: &MehlerParams, lambda: f64) -> Result<f64> {
    let v = params
        .v_t
        .ok_or_else(|| Error::Precondition("limiting measure does not exist".into()))?;
    let eff = lambda * params.c_t * params.c_t;
    let denom = 1.0 - 2.0 * eff * v;
    if denom <= 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(denom.powf(-(params.dim as f64) / 2.0))
    }
}

/// `L^p(N(0, var))` norm of a 1-d function, by quadrature.
pub fn lp_norm_1d<F: Fn(f64) -> f64>(var: f64, f: F, p: f64) -> f64 {
    gaussian_e1(0.0, var, |x| f(x).abs().powf(p)).powf(1.0 / p)
}

//! Scalar coefficient profiles and hypothesis checks: curvature-drift
//! lower bounds, Lyapunov integrals, non-explosion integral tests and the
//! rate functions entering the contractivity criteria.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Model, ModelKind};
use crate::quad::{self, Improper};
use crate::report::{Verdict, VerdictReport};
use crate::timefn::TimeFn;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    pub rel_tol: f64,
    pub divergence_threshold: f64,
    pub max_doublings: u32,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings { rel_tol: 1e-8, divergence_threshold: 1e12, max_doublings: 60 }
    }
}

/// Increasing profile `phi` used in radial Lyapunov conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhiFn {
    /// `phi(r) = r`
    R,
    /// `phi(r) = r^2`
    RSquared,
    /// `phi(r) = exp(lambda r^2) - 1`
    ExpRSquared { lambda: f64 },
}

impl PhiFn {
    pub fn value(&self, r: f64) -> f64 {
        match self {
            PhiFn::R => r,
            PhiFn::RSquared => r * r,
            PhiFn::ExpRSquared { lambda } => (lambda * r * r).exp() - 1.0,
        }
    }
}

/// Radial Lyapunov data: `(L_t + d/dt) phi(rho_t) <= a(t) - c(t) phi(rho_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpec {
    pub phi: PhiFn,
    pub a: TimeFn,
    pub c: TimeFn,
    pub m: TimeFn,
}

/// Parameters of the curvature-drift hypothesis: the radius `epsilon` of
/// the curvature ball, the splitting function `ell` and the drift norm at
/// the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H3Config {
    pub epsilon: f64,
    pub ell: TimeFn,
    pub z_at_origin: TimeFn,
}

impl Default for H3Config {
    fn default() -> Self {
        H3Config {
            epsilon: 1.0,
            ell: TimeFn::Constant(1.0),
            z_at_origin: TimeFn::ZERO,
        }
    }
}

/// Logarithmic derivative of a conformal-factor preset.
fn log_derivative(f: &TimeFn) -> Result<TimeFn> {
    match f {
        TimeFn::Constant(_) => Ok(TimeFn::ZERO),
        TimeFn::Exp { rate, .. } => Ok(TimeFn::Constant(*rate)),
        TimeFn::Power { exponent, .. } => {
            Ok(TimeFn::Power { coeff: *exponent, exponent: -1.0 })
        }
        TimeFn::Scaled(_, inner) => log_derivative(inner),
        _ => Err(Error::Domain("conformal factor preset has no closed log-derivative".into())),
    }
}

/// Sharp scalar lower bound `k(t)` of the curvature-drift tensor, as an
/// exactly integrable profile.
pub fn k_bound(model: &Model) -> TimeFn {
    let lambda = match &model.drift {
        crate::geometry::DriftSpec::Zero => TimeFn::ZERO,
        crate::geometry::DriftSpec::LinearRadial { lambda } => lambda.clone(),
    };
    match model.kind {
        ModelKind::StaticFlat => lambda,
        ModelKind::ConformalFlat => {
            let logc = log_derivative(&model.conformal_factor)
                .expect("conformal presets always have a log-derivative");
            lambda.plus(logc.scaled(-1.0))
        }
        ModelKind::ShrinkingSphere => TimeFn::SphereCurvature {
            dim: model.dim,
            r0_sq: model.initial_radius_sq,
        },
    }
}

/// Supremum of `|Ric_t|` over the ball of radius `epsilon`: zero on the
/// flat kinds, the (global) constant curvature on the sphere.
pub fn k_eps(model: &Model, t: f64, _epsilon: f64) -> f64 {
    match model.kind {
        ModelKind::StaticFlat | ModelKind::ConformalFlat => 0.0,
        ModelKind::ShrinkingSphere => (model.dim as f64 - 1.0) / model.radius_sq(t),
    }
}

/// `H(t) = ∫_{-inf}^t exp(-∫_r^t c) a(r) dr`, or `Divergent`.
pub fn h2_profile(spec: &LyapunovSpec, t: f64, q: &QuadratureSettings) -> Improper {
    let a = &spec.a;
    let c = &spec.c;
    quad::integrate_tail_left(
        &|r| (-c.integral(r, t)).exp() * a.value(r),
        t,
        q.rel_tol,
        q.divergence_threshold,
        q.max_doublings,
    )
}

/// The quadratic-in-drift coefficient of the uniqueness hypothesis.
pub fn b1_coefficient(model: &Model, cfg: &H3Config, r: f64) -> f64 {
    let d = model.dim as f64;
    let ke = k_eps(model, r, cfg.epsilon);
    let z = cfg.z_at_origin.value(r);
    let inner = 3.0 * (d - 1.0) / cfg.epsilon + 3.0 * ke * cfg.epsilon + 2.0 * z;
    2.0 * d + 0.25 * inner * inner / cfg.ell.value(r)
}

/// `H_1(t) = ∫_{-inf}^t exp(-∫_r^t (2k - ell)) B_1(r) dr`, or `Divergent`.
pub fn h1_profile(model: &Model, cfg: &H3Config, t: f64, q: &QuadratureSettings) -> Improper {
    let k = k_bound(model);
    quad::integrate_tail_left(
        &|r| {
            let a1_int = 2.0 * k.integral(r, t) - cfg.ell.integral(r, t);
            (-a1_int).exp() * b1_coefficient(model, cfg, r)
        },
        t,
        q.rel_tol,
        q.divergence_threshold,
        q.max_doublings,
    )
}

/// Classification of `∫_{-inf}^t k` using the exact chunk integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailClass {
    Converged(f64),
    GrowsUnbounded,
    Unclear,
}

pub fn classify_k_integral(k: &TimeFn, t: f64, q: &QuadratureSettings) -> TailClass {
    let mut len = 1.0f64;
    let mut total = k.integral(t - len, t);
    let mut prev_inc = f64::INFINITY;
    let mut decay_runs = 0u32;
    let mut grow_runs = 0u32;
    for _ in 0..q.max_doublings {
        let inc = k.integral(t - 2.0 * len, t - len);
        total += inc;
        if total > q.divergence_threshold.min(500.0) {
            return TailClass::GrowsUnbounded;
        }
        if inc.abs() < 0.75 * prev_inc.abs() || inc.abs() < 1e-300 {
            decay_runs += 1;
            grow_runs = 0;
        } else if inc >= 0.5 * prev_inc && inc > 0.0 {
            grow_runs += 1;
            decay_runs = 0;
        } else {
            decay_runs = 0;
            grow_runs = 0;
        }
        if decay_runs >= 3 && 3.0 * inc.abs() <= q.rel_tol.max(1e-10) * total.abs().max(1e-300) {
            return TailClass::Converged(total);
        }
        if grow_runs >= 10 && total > 1.0 {
            return TailClass::GrowsUnbounded;
        }
        prev_inc = inc;
        len *= 2.0;
    }
    TailClass::Unclear
}

/// Checks the three admissibility conditions of the uniqueness
/// hypothesis: finiteness of `∫ exp(-2∫k)`, divergence of `∫ k`, and
/// finiteness of `H_1(t)`.
pub fn check_h3(model: &Model, cfg: &H3Config, t: f64, q: &QuadratureSettings) -> VerdictReport {
    let k = k_bound(model);
    let weight_int = quad::integrate_tail_left(
        &|r| (-2.0 * k.integral(r, t)).exp(),
        t,
        q.rel_tol,
        q.divergence_threshold,
        q.max_doublings,
    );
    let k_class = classify_k_integral(&k, t, q);
    let h1 = h1_profile(model, cfg, t, q);

    let weight_ok = weight_int.finite().is_some();
    let h1_ok = h1.finite().is_some();
    let verdict = match (weight_ok, k_class, h1_ok) {
        (true, TailClass::GrowsUnbounded, true) => Verdict::Pass,
        (_, TailClass::Converged(_), _) => Verdict::Fail,
        (false, _, _) | (_, _, false) => Verdict::Fail,
        (_, TailClass::Unclear, _) => Verdict::Inconclusive,
    };
    let inputs = serde_json::json!({
        "t": t,
        "epsilon": cfg.epsilon,
        "weight_integral": weight_int.finite(),
        "k_integral_class": format!("{k_class:?}"),
        "h1": h1.finite(),
    });
    VerdictReport::new(
        "check_h3",
        "curvature-drift hypothesis: exp-weight integral finite, k-integral divergent, H1 finite",
        inputs,
        weight_int.finite().unwrap_or(f64::INFINITY),
        h1.finite().unwrap_or(f64::INFINITY),
        0.0,
        verdict,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NonExplosionVerdict {
    NonExplosive,
    Inconclusive,
}

/// Integral test `∫_1^inf dt ∫_1^t exp(-∫_r^t psi) dr = inf` for
/// non-explosion. Divergence of the outer integral is certified through
/// non-decaying chunk increments; anything else is inconclusive.
pub fn nonexplosion_test(psi: &TimeFn, q: &QuadratureSettings) -> NonExplosionVerdict {
    let inner = |t: f64| -> f64 {
        if t <= 1.0 {
            return 0.0;
        }
        quad::integrate(
            &|r| {
                let a = psi.integral(r, t);
                // inf - inf inside the coefficient integral means the
                // damping already dominates; the true integrand limit is 0
                if a.is_nan() {
                    0.0
                } else {
                    (-a).exp()
                }
            },
            1.0,
            t,
            q.rel_tol.max(1e-9),
        )
    };
    let mut lo = 1.0f64;
    let mut len = 1.0f64;
    let mut total = 0.0f64;
    let mut prev_inc = -1.0f64;
    let mut grow_runs = 0u32;
    let mut decay_runs = 0u32;
    for _ in 0..18 {
        let inc = quad::integrate(&inner, lo, lo + len, q.rel_tol.max(1e-9));
        total += inc;
        if total > q.divergence_threshold {
            return NonExplosionVerdict::NonExplosive;
        }
        if prev_inc >= 0.0 {
            if inc >= prev_inc {
                grow_runs += 1;
                decay_runs = 0;
            } else if inc < 0.5 * prev_inc {
                decay_runs += 1;
                grow_runs = 0;
            }
        }
        if grow_runs >= 4 && total > 1.0 {
            return NonExplosionVerdict::NonExplosive;
        }
        if decay_runs >= 4 {
            return NonExplosionVerdict::Inconclusive;
        }
        prev_inc = inc;
        lo += len;
        len *= 2.0;
    }
    NonExplosionVerdict::Inconclusive
}

fn coth(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 / x + x / 3.0 - x * x * x / 45.0
    } else {
        1.0 / x.tanh()
    }
}

/// Upper bound of `(L_t + d/dt) rho_t` at radius `rho`:
/// `F_t(rho) - k(t) rho + |Z_t|(o)` with the curvature comparison term
/// `F_t(s) = sqrt(k_eps (d-1)) coth(sqrt(k_eps/(d-1)) (s ∧ eps)) + k_eps (s ∧ eps)`.
pub fn radial_drift_bound(model: &Model, t: f64, rho: f64, cfg: &H3Config) -> Result<f64> {
    if rho <= 0.0 {
        return Err(Error::Domain("radius must be positive".into()));
    }
    let d = model.dim as f64;
    let s = rho.min(cfg.epsilon);
    let ke = k_eps(model, t, cfg.epsilon);
    let f = if ke <= 0.0 {
        (d - 1.0) / s
    } else {
        (ke * (d - 1.0)).sqrt() * coth((ke / (d - 1.0)).sqrt() * s) + ke * s
    };
    let k = model.curvature_drift_scalar(t);
    Ok(f - k * rho + cfg.z_at_origin.value(t))
}

/// Increasing rate functions used in the Lyapunov contractivity criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaSpec {
    /// `gamma(r) = alpha r`
    Linear { alpha: f64 },
    /// `gamma(r) = alpha r^delta`
    PowerLaw { alpha: f64, delta: f64 },
    /// `gamma(r) = log r` (fails the integrability requirement)
    Log,
}

impl GammaSpec {
    pub fn value(&self, r: f64) -> f64 {
        match self {
            GammaSpec::Linear { alpha } => alpha * r,
            GammaSpec::PowerLaw { alpha, delta } => alpha * r.powf(*delta),
            GammaSpec::Log => r.ln(),
        }
    }
}

/// Tests `(L_t + d/dt) rho_t^2 <= c - gamma(rho_t^2)` on a sample grid of
/// `(t, rho)` values, reporting the smallest admissible `c`, or failure
/// when the left side grows through the boundary of the grid.
pub fn lyapunov_gamma_check(
    model: &Model,
    gamma: &GammaSpec,
    cfg: &H3Config,
    t_grid: &[f64],
    rho_grid: &[f64],
) -> Result<VerdictReport> {
    let d = model.dim as f64;
    let mut c_needed = f64::NEG_INFINITY;
    let mut boundary_growth = false;
    for &t in t_grid {
        let values: Vec<f64> = rho_grid
            .iter()
            .map(|&rho| {
                Ok(2.0 * d
                    + 2.0 * rho * radial_drift_bound(model, t, rho, cfg)?
                    + gamma.value(rho * rho))
            })
            .collect::<Result<_>>()?;
        c_needed = values.iter().fold(c_needed, |a, &v| a.max(v));
        // still increasing at the edge of the grid: no finite constant is
        // certified, whatever the interior maximum was
        if values.len() >= 2 && values[values.len() - 1] > values[values.len() - 2] {
            boundary_growth = true;
        }
    }
    let verdict = if boundary_growth { Verdict::Fail } else { Verdict::Pass };
    Ok(VerdictReport::new(
        "lyapunov_gamma",
        "space-time Lyapunov drift condition on the squared radius",
        serde_json::json!({"gamma": gamma, "rho_max": rho_grid.last(), "t_grid": t_grid}),
        c_needed,
        if verdict == Verdict::Pass { c_needed } else { f64::INFINITY },
        0.0,
        verdict,
    ))
}

/// Ultraboundedness envelope `exp(c (t-s)^{-delta/(delta-1)})`.
pub fn ultrabound_rate(c: f64, delta: f64, dt: f64) -> Result<f64> {
    if delta <= 1.0 {
        return Err(Error::Domain("delta must exceed 1".into()));
    }
    if dt <= 0.0 {
        return Err(Error::Domain("time increment must be positive".into()));
    }
    Ok((c * dt.powf(-delta / (delta - 1.0))).exp())
}

/// `G(r) = ∫_r^inf ds / (s gamma(log(s)/lambda))`, evaluated in closed
/// form for the power-law rate and by quadrature otherwise.
pub fn g_transform(gamma: &GammaSpec, lambda: f64, r: f64, q: &QuadratureSettings) -> Result<f64> {
    if r <= 1.0 {
        return Err(Error::Domain("G is defined for r > 1".into()));
    }
    if let GammaSpec::PowerLaw { alpha, delta } = gamma {
        if *delta > 1.0 {
            return Ok(lambda.powf(*delta) / (alpha * (delta - 1.0))
                * r.ln().powf(1.0 - delta));
        }
    }
    let integrand = |s: f64| 1.0 / (s * gamma.value(s.ln() / lambda));
    match quad::integrate_tail_right(&integrand, r, q.rel_tol, q.divergence_threshold, q.max_doublings)
    {
        Improper::Finite(v) => Ok(v),
        Improper::Divergent => Err(Error::InadmissibleRate(
            "rate function fails the integrability requirement".into(),
        )),
    }
}

/// Bound on the exponential moment flow: `G^{-1}(lambda dt / 4)`,
/// inverted by bisection on `log r`.
pub fn theta_bound(gamma: &GammaSpec, lambda: f64, dt: f64, q: &QuadratureSettings) -> Result<f64> {
    let target = lambda * dt / 4.0;
    // G decreases from +inf (near r = 1 when gamma(0+) = 0) to 0
    let mut lo = 1.0 + 1e-9;
    let mut hi = 2.0;
    while g_transform(gamma, lambda, hi, q)? > target {
        hi = hi * hi;
        if hi > 1e300 {
            return Err(Error::InadmissibleRate("bisection bracket exhausted".into()));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if g_transform(gamma, lambda, mid, q)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Rate pair extracted from a contractivity constant: the entropy-energy
/// coefficient `gamma_t(t-s)` and the additive constant `beta~`.
pub fn beta_from_contractivity(
    k: &TimeFn,
    p: f64,
    q_exp: f64,
    s: f64,
    t: f64,
    log_c: f64,
) -> Result<(f64, f64)> {
    if !(2.0 <= p && p < q_exp) {
        return Err(Error::Domain("need 2 <= p < q".into()));
    }
    if log_c < 0.0 {
        return Err(Error::Domain("log of the operator constant must be >= 0".into()));
    }
    let weight = quad::integrate(&|r| (-2.0 * k.integral(r, t)).exp(), s, t, 1e-10);
    let gamma = 4.0 * p * (q_exp - 1.0) / (q_exp - p) * weight;
    let beta = p * q_exp / (q_exp - p) * log_c;
    Ok((gamma, beta))
}

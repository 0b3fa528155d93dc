//! Monte Carlo estimators for the two-parameter semigroup: plain
//! expectations, the probabilistic gradient representation (damped
//! transport against the driving noise), common-random-number finite
//! differences, gradient-bound checks and the dimension-free Harnack
//! inequality.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{k_bound, QuadratureSettings};
use crate::diffusion::{
    advance, init_state, stream_endpoint, ExplosionGuard, TimeGrid,
};
use crate::error::{Error, Result};
use crate::geometry::{grad_norm_sq, Model, SpacePoint};
use crate::measures::ParticleEnsemble;
use crate::oracle;
use crate::quad;
use crate::report::{Verdict, VerdictReport};
use crate::rng::{mean_stderr, sub_seed, NoiseStream};
use crate::testfn::TestFunction;
use crate::timefn::TimeFn;

pub const UNRELIABLE_EXIT_FRACTION: f64 = 1e-3;

/// A Monte Carlo estimate with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub exits: u64,
    /// Set when more than 0.1% of paths hit the explosion guard.
    pub unreliable: bool,
}

impl MCEstimate {
    fn from_samples(values: &[f64], seed: u64, exits: u64) -> MCEstimate {
        let (mean, stderr) = mean_stderr(values);
        MCEstimate {
            mean,
            stderr,
            n_paths: values.len() as u64,
            seed,
            exits,
            unreliable: exits as f64 > UNRELIABLE_EXIT_FRACTION * values.len() as f64,
        }
    }
}

/// Generic endpoint functional estimator: `E[g(X_t)]` over `n_paths`
/// independent paths, deterministic under fixed seed regardless of the
/// parallel schedule.
pub fn estimate_functional<G>(
    model: &Model,
    grid: &TimeGrid,
    x: &SpacePoint,
    g: &G,
    n_paths: u64,
    master_seed: u64,
) -> Result<MCEstimate>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    if n_paths < 100 {
        return Err(Error::Precondition("need at least 100 paths".into()));
    }
    let guard = ExplosionGuard::default();
    let results: Vec<(f64, bool)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut noise = NoiseStream::new(master_seed, p);
            let (end, exit) = stream_endpoint(model, grid, x, &mut noise, &guard)?;
            Ok((g(&end.coords), exit.is_some()))
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let exits = results.iter().filter(|r| r.1).count() as u64;
    Ok(MCEstimate::from_samples(&values, master_seed, exits))
}

/// `P_{s,t} f (x)` by plain Monte Carlo.
pub fn estimate_p(
    model: &Model,
    grid: &TimeGrid,
    x: &SpacePoint,
    f: &TestFunction,
    n_paths: u64,
    master_seed: u64,
) -> Result<MCEstimate> {
    estimate_functional(model, grid, x, &|c: &[f64]| f.value(c), n_paths, master_seed)
}

/// Weight profile of the gradient representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BismutSchedule {
    Linear,
    /// `h(r) = ∫_s^r e^{2∫_s^ρ k} dρ / ∫_s^t e^{2∫_s^ρ k} dρ`, the
    /// variance-minimizing choice.
    VarianceOptimal,
}

impl BismutSchedule {
    /// `h'(r)` on `[s, t]` for the given curvature profile.
    fn derivative(&self, k: &TimeFn, s: f64, t: f64, r: f64, denom: f64) -> f64 {
        match self {
            BismutSchedule::Linear => 1.0 / (t - s),
            BismutSchedule::VarianceOptimal => (2.0 * k.integral(s, r)).exp() / denom,
        }
    }

    fn normalizer(&self, k: &TimeFn, s: f64, t: f64) -> f64 {
        match self {
            BismutSchedule::Linear => 1.0,
            BismutSchedule::VarianceOptimal => {
                quad::integrate(&|r| (2.0 * k.integral(s, r)).exp(), s, t, 1e-10)
            }
        }
    }
}

/// Frame components of `∇^s P_{s,t} f (x)` through the probabilistic
/// representation: `(1/√2) E[f(X_t) ∫_s^t h'(r) Q_{s,r}^* dB_r]`.
pub fn bismut_gradient(
    model: &Model,
    grid: &TimeGrid,
    x: &SpacePoint,
    f: &TestFunction,
    schedule: BismutSchedule,
    n_paths: u64,
    master_seed: u64,
) -> Result<Vec<MCEstimate>> {
    if !f.is_bounded() {
        return Err(Error::Precondition(
            "gradient representation requires a bounded test function".into(),
        ));
    }
    if n_paths < 100 {
        return Err(Error::Precondition("need at least 100 paths".into()));
    }
    let d = model.dim;
    let k = k_bound(model);
    let denom = schedule.normalizer(&k, grid.s, grid.t);
    let guard = ExplosionGuard::default();
    let dt = grid.dt();
    let samples: Vec<(Vec<f64>, bool)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut noise = NoiseStream::new(master_seed, p);
            let mut st = init_state(model, grid.s, x)?;
            let mut integral = vec![0.0f64; d];
            for i in 0..grid.n_steps {
                let r = grid.time(i);
                let dbeta = noise.gaussian_increment(d, dt);
                let hp = schedule.derivative(&k, grid.s, grid.t, r, denom);
                // left-endpoint (Ito) evaluation of h'(r) Q* dB
                for a in 0..d {
                    let mut acc = 0.0;
                    for b in 0..d {
                        acc += st.q[(b, a)] * dbeta[b];
                    }
                    integral[a] += hp * acc;
                }
                advance(model, &mut st, grid.time(i + 1), i, &dbeta, &guard)?;
            }
            let fv = f.value(&st.point.coords);
            let exited = st.exited.is_some();
            Ok((
                integral.iter().map(|i| fv * i / std::f64::consts::SQRT_2).collect(),
                exited,
            ))
        })
        .collect::<Result<_>>()?;
    let exits = samples.iter().filter(|s| s.1).count() as u64;
    let mut out = Vec::with_capacity(d);
    for a in 0..d {
        let comp: Vec<f64> = samples.iter().map(|s| s.0[a]).collect();
        out.push(MCEstimate::from_samples(&comp, master_seed, exits));
    }
    Ok(out)
}

/// Frame components of `∇^s P_{s,t} f (x)` by central finite differences
/// of `estimate_p` with common random numbers (flat-based models).
pub fn finite_difference_gradient(
    model: &Model,
    grid: &TimeGrid,
    x: &SpacePoint,
    f: &TestFunction,
    step: f64,
    n_paths: u64,
    master_seed: u64,
) -> Result<Vec<MCEstimate>> {
    if !model.is_flat_based() {
        return Err(Error::Precondition(
            "finite differences are implemented on the flat-based charts".into(),
        ));
    }
    let guard = ExplosionGuard::default();
    let c_s = model.conformal(grid.s);
    let mut out = Vec::with_capacity(model.dim);
    for i in 0..model.dim {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.coords[i] += step;
        xm.coords[i] -= step;
        let diffs: Vec<f64> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                // identical streams reproduce identical increments, so the
                // difference estimator has tiny variance
                let (ep, _) =
                    stream_endpoint(model, grid, &xp, &mut NoiseStream::new(master_seed, p), &guard)?;
                let (em, _) =
                    stream_endpoint(model, grid, &xm, &mut NoiseStream::new(master_seed, p), &guard)?;
                // frame component = coordinate partial / c(s)
                Ok((f.value(&ep.coords) - f.value(&em.coords)) / (2.0 * step * c_s))
            })
            .collect::<Result<_>>()?;
        out.push(MCEstimate::from_samples(&diffs, master_seed, 0));
    }
    Ok(out)
}

/// Exponent coefficient of the Harnack inequality:
/// `p / (4(p-1)) · (∫_s^t exp(2∫_s^r k) dr)^{-1}` per unit `ρ_s²`.
pub fn harnack_coefficient(model: &Model, s: f64, t: f64, p: f64) -> Result<f64> {
    if p <= 1.0 {
        return Err(Error::Domain("Harnack inequality needs p > 1".into()));
    }
    let k = k_bound(model);
    let denom = quad::integrate(&|r| (2.0 * k.integral(s, r)).exp(), s, t, 1e-10);
    Ok(p / (4.0 * (p - 1.0)) / denom)
}

/// Verifies `|P f|^p (x) ≤ (P |f|^p)(y) · exp(coeff · ρ_s(x,y)^2)` with
/// independent sub-seeds for the two sides and a relative-SE tolerance on
/// the right side.
pub fn harnack_check(
    model: &Model,
    grid: &TimeGrid,
    x: &SpacePoint,
    y: &SpacePoint,
    f: &TestFunction,
    p: f64,
    n_paths: u64,
    master_seed: u64,
) -> Result<VerdictReport> {
    if !f.is_bounded() {
        return Err(Error::Precondition("Harnack check needs a bounded f".into()));
    }
    let coeff = harnack_coefficient(model, grid.s, grid.t, p)?;
    let rho = crate::geometry::distance(model, grid.s, x, y)?;
    let lhs_est = estimate_p(model, grid, x, f, n_paths, sub_seed(master_seed, 1))?;
    let rhs_est = estimate_functional(
        model,
        grid,
        y,
        &|c: &[f64]| f.value(c).abs().powf(p),
        n_paths,
        sub_seed(master_seed, 2),
    )?;
    let lhs = lhs_est.mean.abs().powf(p);
    let factor = (coeff * rho * rho).exp();
    let rhs = rhs_est.mean * factor;
    // relative SEs: |Pf|^p amplifies the left error by p/|Pf|
    let rel_se = {
        let l = if lhs_est.mean.abs() > 0.0 {
            p * lhs_est.stderr / lhs_est.mean.abs()
        } else {
            0.0
        };
        let r = if rhs_est.mean.abs() > 0.0 { rhs_est.stderr / rhs_est.mean.abs() } else { 0.0 };
        (l * l + r * r).sqrt()
    };
    let tol = 3.0 * rel_se * rhs.abs();
    let verdict = if lhs <= rhs + tol { Verdict::Pass } else { Verdict::Fail };
    Ok(VerdictReport::new(
        "harnack",
        "dimension-free Harnack inequality between two basepoints",
        serde_json::json!({
            "s": grid.s, "t": grid.t, "p": p, "rho": rho,
            "coefficient": coeff, "n_paths": n_paths, "seed": master_seed,
        }),
        lhs,
        rhs,
        tol,
        verdict,
    ))
}

/// Checks the L^p gradient contraction
/// `‖ |∇^s P_{s,t} f|_s ‖_{p,μ_s} ≤ exp(-∫_s^t k) ‖ |∇^t f|_t ‖_{p,μ_t}`
/// over a subsample of the provided ensembles, with the left side
/// estimated by the probabilistic gradient representation.
#[allow(clippy::too_many_arguments)]
pub fn gradient_bound_check(
    model: &Model,
    grid: &TimeGrid,
    f: &TestFunction,
    p: f64,
    ens_s: &ParticleEnsemble,
    ens_t: &ParticleEnsemble,
    n_points: usize,
    n_paths: u64,
    master_seed: u64,
) -> Result<VerdictReport> {
    if ens_s.points.is_empty() || ens_t.points.is_empty() {
        return Err(Error::Precondition("both ensembles must be non-empty".into()));
    }
    if (ens_s.time - grid.s).abs() > 1e-12 || (ens_t.time - grid.t).abs() > 1e-12 {
        return Err(Error::Precondition("ensemble times must match the grid".into()));
    }
    let k = k_bound(model);
    let decay = (-k.integral(grid.s, grid.t)).exp();

    // left side over a deterministic subsample of mu_s
    let stride = (ens_s.points.len() / n_points.max(1)).max(1);
    let pts: Vec<&SpacePoint> = ens_s.points.iter().step_by(stride).take(n_points).collect();
    let mut lhs_pow = Vec::with_capacity(pts.len());
    let mut se_terms = Vec::with_capacity(pts.len());
    for (j, pt) in pts.iter().enumerate() {
        let comps = bismut_gradient(
            model,
            grid,
            pt,
            f,
            BismutSchedule::VarianceOptimal,
            n_paths,
            sub_seed(master_seed, j as u64),
        )?;
        // frame components are g_s-orthonormal, so the metric norm is the
        // Euclidean norm of the component vector
        let norm = comps.iter().map(|c| c.mean * c.mean).sum::<f64>().sqrt();
        let se = comps.iter().map(|c| c.stderr * c.stderr).sum::<f64>().sqrt();
        lhs_pow.push(norm.powf(p));
        se_terms.push(if norm > 0.0 { p * norm.powf(p - 1.0) * se } else { se });
    }
    let n = lhs_pow.len() as f64;
    let lhs_p = crate::rng::pairwise_sum(&lhs_pow) / n;
    let lhs = lhs_p.powf(1.0 / p);
    // delta-method propagation through the p-mean
    let se_sum_sq = se_terms.iter().map(|s| s * s).sum::<f64>();
    let lhs_se = if lhs > 0.0 {
        se_sum_sq.sqrt() / n / p / lhs.powf(p - 1.0)
    } else {
        se_sum_sq.sqrt() / n
    };

    // right side: exact gradient of f under mu_t
    let rhs_pow: Vec<f64> = ens_t
        .points
        .iter()
        .map(|pt| {
            let g = f.euclid_gradient(&pt.coords);
            grad_norm_sq(model, grid.t, pt, &g).sqrt().powf(p)
        })
        .collect();
    let (rhs_mean, rhs_se_raw) = mean_stderr(&rhs_pow);
    let rhs_norm = rhs_mean.powf(1.0 / p);
    let rhs = decay * rhs_norm;
    let rhs_se = if rhs_norm > 0.0 {
        decay * rhs_se_raw / (p * rhs_norm.powf(p - 1.0))
    } else {
        0.0
    };

    let tol = 3.0 * (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
    let verdict = if lhs <= rhs + tol { Verdict::Pass } else { Verdict::Fail };
    Ok(VerdictReport::new(
        "gradient_bound",
        "L^p gradient contraction of the semigroup against the exact gradient norm",
        serde_json::json!({
            "s": grid.s, "t": grid.t, "p": p, "decay": decay,
            "n_points": pts.len(), "n_paths": n_paths, "seed": master_seed,
        }),
        lhs,
        rhs,
        tol,
        verdict,
    ))
}

/// Convenience: exact frame components of the oracle gradient, for
/// fixture comparisons (flat-based models only).
pub fn oracle_gradient_frame(
    model: &Model,
    s: f64,
    t: f64,
    x: &SpacePoint,
    f: &TestFunction,
    q: &QuadratureSettings,
) -> Result<Vec<f64>> {
    let params = oracle::mehler_params(model, s, t, q)?;
    let g = oracle::exact_gradient(&params, &x.coords, f);
    let c = model.conformal(s);
    Ok(g.into_iter().map(|gi| gi / c).collect())
}

//! Evolution systems of measures as particle ensembles: the Cesàro
//! time-average construction, pushforward propagation, plug-in moments and
//! exponential moments, invariance residuals, convergence-rate fits and
//! the differentiation identity along the measure flow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::PhiFn;
use crate::diffusion::{stream_endpoint, ExplosionGuard, TimeGrid};
use crate::error::{Error, Result};
use crate::geometry::{distance, Model, SpacePoint};
use crate::report::{Verdict, VerdictReport};
use crate::rng::{mean_stderr, sub_seed, NoiseStream};
use crate::testfn::TestFunction;

/// An empirical measure: uniformly weighted particles at a common time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub time: f64,
    pub points: Vec<SpacePoint>,
    pub seed: u64,
    /// Construction record (kind, window, step size).
    pub provenance: serde_json::Value,
    /// More than 0.1% of the paths hit the explosion guard.
    pub unreliable: bool,
}

impl ParticleEnsemble {
    pub fn n(&self) -> usize {
        self.points.len()
    }
}

fn steps_for(span: f64, dt_target: f64) -> usize {
    ((span / dt_target).ceil() as usize).max(1)
}

/// Cesàro construction of `μ_{s,t}`: each particle starts at the origin at
/// an independent uniform time `r ∈ [s, t]` and runs to `t`, sampling
/// `(t-s)^{-1} ∫_s^t P_{r,t}(o, ·) dr`.
pub fn cesaro_ensemble(
    model: &Model,
    s: f64,
    t: f64,
    n: usize,
    master_seed: u64,
    dt_target: f64,
) -> Result<ParticleEnsemble> {
    if n < 1_000 {
        return Err(Error::Precondition("Cesàro construction needs n >= 1000".into()));
    }
    if !(s < t) {
        return Err(Error::Domain("need s < t".into()));
    }
    model.check_time(t)?;
    let guard = ExplosionGuard::default();
    let results: Vec<(SpacePoint, bool)> = (0..n as u64)
        .into_par_iter()
        .map(|p| {
            let mut noise = NoiseStream::new(master_seed, p);
            let r = s + (t - s) * noise.uniform();
            let grid = TimeGrid::new(r, t, steps_for(t - r, dt_target))?;
            let origin = model.origin(r);
            let (end, exit) = stream_endpoint(model, &grid, &origin, &mut noise, &guard)?;
            Ok((end, exit.is_some()))
        })
        .collect::<Result<_>>()?;
    let exits = results.iter().filter(|r| r.1).count();
    Ok(ParticleEnsemble {
        time: t,
        points: results.into_iter().map(|r| r.0).collect(),
        seed: master_seed,
        provenance: serde_json::json!({
            "kind": "cesaro", "s": s, "t": t, "dt": dt_target, "exits": exits,
        }),
        unreliable: exits as f64 > 1e-3 * n as f64,
    })
}

/// Pushforward `P^*_{s,t} μ_s`: every particle advanced by an independent
/// path.
pub fn propagate_ensemble(
    model: &Model,
    ens: &ParticleEnsemble,
    t: f64,
    master_seed: u64,
    dt_target: f64,
) -> Result<ParticleEnsemble> {
    let s = ens.time;
    if t == s {
        return Ok(ens.clone());
    }
    if t < s {
        return Err(Error::Domain("cannot propagate backwards".into()));
    }
    model.check_time(t)?;
    let guard = ExplosionGuard::default();
    let grid = TimeGrid::new(s, t, steps_for(t - s, dt_target))?;
    let results: Vec<(SpacePoint, bool)> = ens
        .points
        .par_iter()
        .enumerate()
        .map(|(p, x0)| {
            let mut noise = NoiseStream::new(master_seed, p as u64);
            let (end, exit) = stream_endpoint(model, &grid, x0, &mut noise, &guard)?;
            Ok((end, exit.is_some()))
        })
        .collect::<Result<_>>()?;
    let exits = results.iter().filter(|r| r.1).count();
    Ok(ParticleEnsemble {
        time: t,
        points: results.into_iter().map(|r| r.0).collect(),
        seed: master_seed,
        provenance: serde_json::json!({
            "kind": "propagated", "from": s, "t": t, "dt": dt_target, "exits": exits,
        }),
        unreliable: ens.unreliable || exits as f64 > 1e-3 * ens.n() as f64,
    })
}

/// A plug-in estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub value: f64,
    pub se: f64,
}

/// `μ(φ(ρ_t(o, ·)))`.
pub fn moment(model: &Model, ens: &ParticleEnsemble, phi: PhiFn) -> Result<Moment> {
    let o = model.origin(ens.time);
    let values: Vec<f64> = ens
        .points
        .iter()
        .map(|p| distance(model, ens.time, &o, p).map(|r| phi.value(r)))
        .collect::<Result<_>>()?;
    let (value, se) = mean_stderr(&values);
    Ok(Moment { value, se })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExpMomentOutcome {
    Finite { value: f64, se: f64 },
    /// The top percentile carries most of the mass: the plug-in average is
    /// not trustworthy evidence of integrability.
    DivergenceSuspected { value: f64, se: f64, tail_share: f64 },
}

/// `μ(exp(λ ρ_t²))` with a heavy-tail heuristic: flagged when the top 1%
/// of the order statistics contributes more than half the sum.
pub fn exp_moment(model: &Model, ens: &ParticleEnsemble, lambda: f64) -> Result<ExpMomentOutcome> {
    let o = model.origin(ens.time);
    let values: Vec<f64> = ens
        .points
        .iter()
        .map(|p| distance(model, ens.time, &o, p).map(|r| (lambda * r * r).exp()))
        .collect::<Result<_>>()?;
    let (value, se) = mean_stderr(&values);
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top = (sorted.len() / 100).max(1);
    let top_sum: f64 = sorted[..top].iter().sum();
    let total: f64 = sorted.iter().sum();
    let tail_share = top_sum / total;
    if tail_share > 0.5 {
        Ok(ExpMomentOutcome::DivergenceSuspected { value, se, tail_share })
    } else {
        Ok(ExpMomentOutcome::Finite { value, se })
    }
}

/// Invariance defect `|∫ P_{s,t} f dμ_s − ∫ f dμ_t|`: the first integral
/// is estimated with one path per particle, which is unbiased for the
/// double average.
pub fn invariance_residual(
    model: &Model,
    ens_s: &ParticleEnsemble,
    ens_t: &ParticleEnsemble,
    f: &TestFunction,
    master_seed: u64,
    dt_target: f64,
) -> Result<Moment> {
    let (s, t) = (ens_s.time, ens_t.time);
    if !(s < t) {
        return Err(Error::Precondition("ensembles must satisfy s < t".into()));
    }
    let guard = ExplosionGuard::default();
    let grid = TimeGrid::new(s, t, steps_for(t - s, dt_target))?;
    let lhs: Vec<f64> = ens_s
        .points
        .par_iter()
        .enumerate()
        .map(|(p, x0)| {
            let mut noise = NoiseStream::new(master_seed, p as u64);
            let (end, _) = stream_endpoint(model, &grid, x0, &mut noise, &guard)?;
            Ok(f.value(&end.coords))
        })
        .collect::<Result<_>>()?;
    let rhs: Vec<f64> = ens_t.points.iter().map(|p| f.value(&p.coords)).collect();
    let (lm, ls) = mean_stderr(&lhs);
    let (rm, rs) = mean_stderr(&rhs);
    Ok(Moment { value: (lm - rm).abs(), se: (ls * ls + rs * rs).sqrt() })
}

/// Settings of the convergence-rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    /// Particles per ensemble point used for the inner `P_{s,t} f` estimate.
    pub inner_paths: u64,
    /// Ensemble points per `s`-value.
    pub n_points: usize,
    pub dt: f64,
    /// How far behind `s` the Cesàro construction starts.
    pub burn_in: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig { inner_paths: 64, n_points: 512, dt: 5e-3, burn_in: 20.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    /// `(∫_s^t k, log residual)` per usable `s`-value.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub verdict: Verdict,
}

/// Fits the decay of `‖P_{s,t} f − μ_t(f)‖_{2, μ_s}` against `∫_s^t k`:
/// the exponential-rate statement predicts slope `-1`. Residuals are
/// variance-debiased against the inner Monte Carlo noise; `s`-values whose
/// debiased residual hits the noise floor are dropped, and the fit is
/// `Inconclusive` with fewer than two usable points.
pub fn convergence_decay(
    model: &Model,
    t: f64,
    f: &TestFunction,
    s_grid: &[f64],
    mu_t_f: f64,
    cfg: &DecayConfig,
    master_seed: u64,
) -> Result<DecayReport> {
    if s_grid.len() < 4 {
        return Err(Error::Precondition("need at least 4 s-values".into()));
    }
    let k = crate::coefficients::k_bound(model);
    let guard = ExplosionGuard::default();
    let mut points = Vec::new();
    for (si, &s) in s_grid.iter().enumerate() {
        if !(s < t) {
            return Err(Error::Domain("s-grid must precede t".into()));
        }
        let ens = cesaro_ensemble(
            model,
            s - cfg.burn_in,
            s,
            cfg.n_points.max(1_000),
            sub_seed(master_seed, 2 * si as u64),
            cfg.dt,
        )?;
        let grid = TimeGrid::new(s, t, steps_for(t - s, cfg.dt))?;
        let inner_seed = sub_seed(master_seed, 2 * si as u64 + 1);
        let per_point: Vec<(f64, f64)> = ens.points[..cfg.n_points.min(ens.n())]
            .par_iter()
            .enumerate()
            .map(|(j, x0)| {
                let vals: Vec<f64> = (0..cfg.inner_paths)
                    .map(|q| {
                        let mut noise = NoiseStream::new(
                            inner_seed,
                            j as u64 * cfg.inner_paths + q,
                        );
                        let (end, _) = stream_endpoint(model, &grid, x0, &mut noise, &guard)?;
                        Ok(f.value(&end.coords))
                    })
                    .collect::<Result<_>>()?;
                let (m, se) = mean_stderr(&vals);
                Ok((m, se))
            })
            .collect::<Result<_>>()?;
        let sq: Vec<f64> =
            per_point.iter().map(|(m, _)| (m - mu_t_f) * (m - mu_t_f)).collect();
        let noise_floor: Vec<f64> = per_point.iter().map(|(_, se)| se * se).collect();
        let (raw, raw_se) = mean_stderr(&sq);
        let (floor, _) = mean_stderr(&noise_floor);
        let debiased = raw - floor;
        // usable only when clearly above the combined noise
        if debiased > 3.0 * raw_se && debiased > 0.1 * floor {
            let kint = k.integral(s, t);
            points.push((kint, 0.5 * debiased.ln()));
        }
    }
    if points.len() < 2 {
        return Ok(DecayReport {
            points,
            slope: f64::NAN,
            intercept: f64::NAN,
            verdict: Verdict::Inconclusive,
        });
    }
    // least squares of log residual against ∫k
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let verdict = if (slope + 1.0).abs() <= 0.2 { Verdict::Pass } else { Verdict::Fail };
    Ok(DecayReport { points, slope, intercept, verdict })
}

/// Space-time test functions with an analytic `(∂_r + L_r) f` on the
/// flat-based models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpaceTimeFn {
    /// `f(r, x) = |x|^2 e^{rate r}`
    Norm2TimesExp { rate: f64 },
}

impl SpaceTimeFn {
    pub fn value(&self, r: f64, x: &[f64]) -> f64 {
        match self {
            SpaceTimeFn::Norm2TimesExp { rate } => {
                x.iter().map(|c| c * c).sum::<f64>() * (rate * r).exp()
            }
        }
    }

    /// `(∂_r + L_r) f` with `L_r = c(r)^{-2} Δ + Z_r · ∇`.
    pub fn generator_applied(&self, model: &Model, r: f64, x: &[f64]) -> Result<f64> {
        if !model.is_flat_based() {
            return Err(Error::Precondition(
                "analytic generator available on the flat-based charts only".into(),
            ));
        }
        match self {
            SpaceTimeFn::Norm2TimesExp { rate } => {
                let c = model.conformal(r);
                let lam = model.drift_lambda(r);
                let n2: f64 = x.iter().map(|c| c * c).sum();
                let d = model.dim as f64;
                Ok((rate * n2 + 2.0 * d / (c * c) - 2.0 * lam * n2) * (rate * r).exp())
            }
        }
    }
}

/// Central difference of `r ↦ μ_r(f(r, ·))` against the ensemble average
/// of `(∂_r + L_r) f`, the differentiation identity of the measure flow.
pub fn flow_derivative_check(
    model: &Model,
    base: &ParticleEnsemble,
    f: &SpaceTimeFn,
    r: f64,
    dr: f64,
    master_seed: u64,
    dt_target: f64,
) -> Result<VerdictReport> {
    if base.time >= r - dr {
        return Err(Error::Precondition("base ensemble must predate r - dr".into()));
    }
    let minus = propagate_ensemble(model, base, r - dr, sub_seed(master_seed, 1), dt_target)?;
    let mid = propagate_ensemble(model, &minus, r, sub_seed(master_seed, 2), dt_target)?;
    let plus = propagate_ensemble(model, &mid, r + dr, sub_seed(master_seed, 3), dt_target)?;
    let v_minus: Vec<f64> =
        minus.points.iter().map(|p| f.value(r - dr, &p.coords)).collect();
    let v_plus: Vec<f64> = plus.points.iter().map(|p| f.value(r + dr, &p.coords)).collect();
    let gen: Vec<f64> = mid
        .points
        .iter()
        .map(|p| f.generator_applied(model, r, &p.coords))
        .collect::<Result<_>>()?;
    let (mp, sp) = mean_stderr(&v_plus);
    let (mm, sm) = mean_stderr(&v_minus);
    let lhs = (mp - mm) / (2.0 * dr);
    let (rhs, sg) = mean_stderr(&gen);
    let se = ((sp * sp + sm * sm).sqrt() / (2.0 * dr)).hypot(sg);
    // O(dr^2) discretization allowance on top of the statistical tolerance
    let tol = 3.0 * se + dr * dr + 10.0 * dt_target;
    let verdict = if (lhs - rhs).abs() <= tol { Verdict::Pass } else { Verdict::Fail };
    Ok(VerdictReport::new(
        "flow_derivative",
        "differentiation identity of the measure flow",
        serde_json::json!({"r": r, "dr": dr, "n": base.n(), "seed": master_seed}),
        lhs,
        rhs,
        tol,
        verdict,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cesaro_concentrates_for_short_windows() {
        let model = Model::ou(2);
        let ens = cesaro_ensemble(&model, -0.01, 0.0, 1_000, 1, 1e-3).unwrap();
        let m = moment(&model, &ens, PhiFn::RSquared).unwrap();
        assert!(m.value < 0.1);
    }

    #[test]
    fn cesaro_requires_enough_particles() {
        let model = Model::ou(2);
        assert!(cesaro_ensemble(&model, -1.0, 0.0, 10, 1, 1e-2).is_err());
    }

    #[test]
    fn ou_second_moment_is_dimension() {
        let model = Model::ou(2);
        let ens = cesaro_ensemble(&model, -20.0, 0.0, 20_000, 5, 1e-2).unwrap();
        let m = moment(&model, &ens, PhiFn::RSquared).unwrap();
        assert!((m.value - 2.0).abs() < 3.0 * m.se + 0.1, "{} +- {}", m.value, m.se);
    }

    #[test]
    fn propagation_is_identity_at_equal_times() {
        let model = Model::ou(2);
        let ens = cesaro_ensemble(&model, -5.0, 0.0, 1_000, 2, 1e-2).unwrap();
        let same = propagate_ensemble(&model, &ens, 0.0, 9, 1e-2).unwrap();
        assert_eq!(ens.points, same.points);
    }

    #[test]
    fn invariance_residual_small_on_fixture() {
        let model = Model::ou(2);
        let ens_s = cesaro_ensemble(&model, -20.0, 0.0, 10_000, 3, 1e-2).unwrap();
        let ens_t = propagate_ensemble(&model, &ens_s, 1.0, 13, 1e-2).unwrap();
        let f = TestFunction::GaussianBump { center: vec![0.0, 0.0], width: 1.0 };
        let res = invariance_residual(&model, &ens_s, &ens_t, &f, 17, 1e-2).unwrap();
        assert!(res.value <= 3.0 * res.se + 0.02, "{} +- {}", res.value, res.se);
    }

    #[test]
    fn shifted_ensemble_breaks_invariance() {
        let model = Model::ou(2);
        let ens_s = cesaro_ensemble(&model, -20.0, 0.0, 10_000, 4, 1e-2).unwrap();
        let mut ens_t = propagate_ensemble(&model, &ens_s, 1.0, 14, 1e-2).unwrap();
        for p in ens_t.points.iter_mut() {
            p.coords[0] += 1.0;
        }
        let f = TestFunction::LipCap { axis: 0, center: 0.0, slope: 1.0, cap: 10.0 };
        let res = invariance_residual(&model, &ens_s, &ens_t, &f, 18, 1e-2).unwrap();
        assert!(res.value > 5.0 * res.se, "{} +- {}", res.value, res.se);
    }

    #[test]
    fn exp_moment_matches_gaussian_and_flags_boundary() {
        let model = Model::ou(2);
        let ens = cesaro_ensemble(&model, -20.0, 0.0, 100_000, 6, 1e-2).unwrap();
        match exp_moment(&model, &ens, 0.25).unwrap() {
            ExpMomentOutcome::Finite { value, .. } => {
                assert!((value - 2.0).abs() < 0.15, "{value}");
            }
            other => panic!("unexpected {other:?}"),
        }
        match exp_moment(&model, &ens, 0.5).unwrap() {
            ExpMomentOutcome::DivergenceSuspected { .. } => {}
            other => panic!("boundary case not flagged: {other:?}"),
        }
    }

    #[test]
    fn flow_derivative_on_ou() {
        let model = Model::ou(2);
        let base = cesaro_ensemble(&model, -20.0, -1.0, 20_000, 7, 1e-2).unwrap();
        let f = SpaceTimeFn::Norm2TimesExp { rate: -1.0 };
        let rep = flow_derivative_check(&model, &base, &f, 0.5, 0.05, 19, 5e-3).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass);
    }

    #[test]
    fn spacetime_generator_matches_difference_quotient() {
        let model = Model::ou(2);
        let f = SpaceTimeFn::Norm2TimesExp { rate: -1.0 };
        // at x with |x|^2 = 2: (∂_r + L) f = (-2 + 4 - 4) e^{-r}
        let x = [1.0, 1.0];
        assert_relative_eq!(
            f.generator_applied(&model, 0.0, &x).unwrap(),
            -2.0,
            max_relative = 1e-12
        );
    }
}

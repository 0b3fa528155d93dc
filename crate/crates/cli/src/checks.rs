//! The check registry: maps check ids from the config to the library
//! operations and collects their verdict reports plus optional plot data.

use evodiff::coefficients::{
    check_h3, h1_profile, nonexplosion_test, H3Config, NonExplosionVerdict, PhiFn,
};
use evodiff::diffusion::{
    simulate_coupling, simulate_path, ExplosionGuard, TimeGrid,
};
use evodiff::geometry::distance;
use evodiff::inequalities::{
    hyper_q_threshold, semigroup_lsi_check, super_lsi_check, supercontractivity_check,
    HyperSchedule, HyperVariant,
};
use evodiff::measures::{
    cesaro_ensemble, convergence_decay, invariance_residual, moment, propagate_ensemble,
    DecayConfig,
};
use evodiff::rng::{sub_seed, NoiseStream};
use evodiff::semigroup::{
    bismut_gradient, finite_difference_gradient, harnack_check, BismutSchedule,
};
use evodiff::testfn::TestFunction;
use evodiff::{Model, ModelKind, SpacePoint, Verdict, VerdictReport};

use crate::config::ExperimentConfig;

/// Plot-data series emitted alongside the verdicts.
pub struct PlotSeries {
    pub name: String,
    pub header: String,
    pub rows: Vec<String>,
}

pub struct CheckOutput {
    pub reports: Vec<VerdictReport>,
    pub plots: Vec<PlotSeries>,
}

fn ok(reports: Vec<VerdictReport>) -> CheckOutput {
    CheckOutput { reports, plots: Vec::new() }
}

fn basepoint(model: &Model, s: f64) -> SpacePoint {
    match model.kind {
        ModelKind::ShrinkingSphere => model.origin(s),
        _ => {
            let mut coords = vec![0.0; model.dim];
            coords[0] = 1.0;
            SpacePoint::new(coords)
        }
    }
}

fn test_family(model: &Model) -> Vec<TestFunction> {
    let amb = model.ambient_dim();
    vec![
        TestFunction::GaussianBump { center: vec![0.0; amb], width: 1.0 },
        TestFunction::LipCap { axis: 0, center: 0.0, slope: 1.0, cap: 10.0 },
        TestFunction::Constant(1.0),
    ]
}

pub fn run_check(id: &str, cfg: &ExperimentConfig) -> Result<CheckOutput, String> {
    let model = cfg.model.to_model()?;
    let seed = cfg.master_seed;
    let w = &cfg.window;
    let grid = TimeGrid::new(w.s, w.t, w.n_steps).map_err(|e| e.to_string())?;
    let lib = |e: evodiff::Error| e.to_string();
    match id {
        "h3" => {
            let rep = check_h3(&model, &H3Config::default(), w.t, &cfg.quadrature);
            Ok(ok(vec![rep]))
        }
        "nonexplosion" => {
            use evodiff::TimeFn;
            let cases = [
                ("nonexplosion_const", TimeFn::Constant(1.0), Verdict::Pass),
                ("nonexplosion_zero", TimeFn::Constant(0.0), Verdict::Pass),
                (
                    "nonexplosion_exp",
                    TimeFn::Exp { amp: 1.0, rate: 1.0 },
                    Verdict::Inconclusive,
                ),
            ];
            let reports = cases
                .iter()
                .map(|(cid, psi, expected)| {
                    let verdict = match nonexplosion_test(psi, &cfg.quadrature) {
                        NonExplosionVerdict::NonExplosive => Verdict::Pass,
                        NonExplosionVerdict::Inconclusive => Verdict::Inconclusive,
                    };
                    VerdictReport::new(
                        *cid,
                        "integral criterion for non-explosion",
                        serde_json::json!({"psi": psi, "expected": format!("{expected}")}),
                        f64::NAN,
                        f64::NAN,
                        0.0,
                        verdict,
                    )
                })
                .collect();
            Ok(ok(reports))
        }
        "cesaro" => {
            let ens_s = cesaro_ensemble(
                &model,
                w.s - cfg.grids.burn_in,
                w.s,
                cfg.grids.n_particles,
                sub_seed(seed, 1),
                cfg.grids.dt_ensemble,
            )
            .map_err(lib)?;
            let ens_t = propagate_ensemble(
                &model,
                &ens_s,
                w.t,
                sub_seed(seed, 2),
                cfg.grids.dt_ensemble,
            )
            .map_err(lib)?;
            let mut reports = Vec::new();
            let m = moment(&model, &ens_t, PhiFn::RSquared).map_err(lib)?;
            let h1 = h1_profile(&model, &H3Config::default(), w.t, &cfg.quadrature)
                .finite()
                .unwrap_or(f64::INFINITY);
            let tol = 3.0 * m.se;
            reports.push(VerdictReport::new(
                "cesaro_second_moment",
                "second radial moment against the uniqueness-profile bound",
                serde_json::json!({"t": w.t, "n": ens_t.n()}),
                m.value,
                h1,
                tol,
                if m.value <= h1 + tol { Verdict::Pass } else { Verdict::Fail },
            ));
            for (i, f) in test_family(&model).iter().enumerate() {
                let res = invariance_residual(
                    &model,
                    &ens_s,
                    &ens_t,
                    f,
                    sub_seed(seed, 10 + i as u64),
                    cfg.grids.dt_ensemble,
                )
                .map_err(lib)?;
                let tol = 3.0 * res.se + 1e-9;
                reports.push(VerdictReport::new(
                    format!("cesaro_invariance_{i}"),
                    "defining invariance identity of the measure system",
                    serde_json::json!({"f": f}),
                    res.value,
                    tol,
                    tol,
                    if res.value <= tol { Verdict::Pass } else { Verdict::Fail },
                ));
            }
            // negative control: a shifted target ensemble must be detected
            if model.is_flat_based() {
                let mut shifted = ens_t.clone();
                for p in shifted.points.iter_mut() {
                    p.coords[0] += 1.0;
                }
                let f = TestFunction::LipCap { axis: 0, center: 0.0, slope: 1.0, cap: 10.0 };
                let res = invariance_residual(
                    &model,
                    &ens_s,
                    &shifted,
                    &f,
                    sub_seed(seed, 20),
                    cfg.grids.dt_ensemble,
                )
                .map_err(lib)?;
                reports.push(VerdictReport::new(
                    "cesaro_negative_control",
                    "shifted ensemble breaks invariance by more than 5 SE",
                    serde_json::json!({"shift": 1.0}),
                    res.value,
                    5.0 * res.se,
                    res.se,
                    if res.value > 5.0 * res.se { Verdict::Pass } else { Verdict::Fail },
                ));
            }
            Ok(ok(reports))
        }
        "coupling" => {
            let x0 = model.origin(w.s);
            let y0 = basepoint(&model, w.s);
            let guard = ExplosionGuard::default();
            let k = evodiff::coefficients::k_bound(&model);
            let decay = (-k.integral(w.s, w.t)).exp();
            let rho0 = distance(&model, w.s, &x0, &y0).map_err(lib)?;
            if model.is_flat_based() {
                let mut noise = NoiseStream::new(seed, 0);
                let c = simulate_coupling(&model, &grid, &x0, &y0, &mut noise, &guard)
                    .map_err(lib)?;
                let lhs = c.distances[grid.n_steps];
                let rhs = decay * rho0;
                let verdict =
                    if (lhs - rhs).abs() <= 1e-12 { Verdict::Pass } else { Verdict::Fail };
                Ok(ok(vec![VerdictReport::new(
                    "coupling_exact",
                    "parallel coupling contracts exactly at the curvature rate",
                    serde_json::json!({"rho0": rho0}),
                    lhs,
                    rhs,
                    1e-12,
                    verdict,
                )]))
            } else {
                let n = cfg.grids.n_paths.min(5_000);
                let vals: Vec<f64> = (0..n)
                    .map(|p| {
                        let mut noise = NoiseStream::new(seed, p);
                        let c =
                            simulate_coupling(&model, &grid, &x0, &y0, &mut noise, &guard)
                                .map_err(lib)?;
                        Ok(c.distances[grid.n_steps])
                    })
                    .collect::<Result<_, String>>()?;
                let (mean, se) = evodiff::rng::mean_stderr(&vals);
                let rhs = decay * rho0;
                let tol = 3.0 * se;
                Ok(ok(vec![VerdictReport::new(
                    "coupling_mc",
                    "mean coupled distance below the contraction bound",
                    serde_json::json!({"rho0": rho0, "n": n}),
                    mean,
                    rhs,
                    tol,
                    if mean <= rhs + tol { Verdict::Pass } else { Verdict::Fail },
                )]))
            }
        }
        "qbound" => {
            let n = cfg.grids.n_paths.min(2_000);
            let x0 = basepoint(&model, w.s);
            let guard = ExplosionGuard::default();
            let k = evodiff::coefficients::k_bound(&model);
            let allowance = 1.0 + 10.0 * grid.dt();
            let mut worst = f64::NEG_INFINITY;
            for p in 0..n {
                let mut noise = NoiseStream::new(sub_seed(seed, 3), p);
                let traj =
                    simulate_path(&model, &grid, &x0, &mut noise, &guard).map_err(lib)?;
                for (i, q) in traj.q_matrices.iter().enumerate() {
                    let norm = q[(0, 0)].abs();
                    let bound = (-k.integral(w.s, grid.time(i))).exp() * allowance;
                    worst = worst.max(norm - bound);
                }
            }
            Ok(ok(vec![VerdictReport::new(
                "q_bound",
                "damped transport norm below the exponential curvature bound pathwise",
                serde_json::json!({"n_paths": n, "allowance": allowance}),
                worst,
                0.0,
                0.0,
                if worst <= 0.0 { Verdict::Pass } else { Verdict::Fail },
            )]))
        }
        "bismut" => {
            if !model.is_flat_based() {
                return Ok(ok(vec![VerdictReport::new(
                    "bismut",
                    "gradient representation against common-random-number differences",
                    serde_json::json!({}),
                    f64::NAN,
                    f64::NAN,
                    0.0,
                    Verdict::NotApplicable,
                )]));
            }
            let x = basepoint(&model, w.s);
            let f = TestFunction::LipCap { axis: 0, center: 0.0, slope: 1.0, cap: 10.0 };
            let n = cfg.grids.n_paths;
            let bg = bismut_gradient(
                &model,
                &grid,
                &x,
                &f,
                BismutSchedule::VarianceOptimal,
                n,
                sub_seed(seed, 4),
            )
            .map_err(lib)?;
            let fd = finite_difference_gradient(
                &model,
                &grid,
                &x,
                &f,
                1e-3,
                n.min(20_000),
                sub_seed(seed, 5),
            )
            .map_err(lib)?;
            let mut reports = Vec::new();
            for (i, (a, b)) in bg.iter().zip(&fd).enumerate() {
                let comb = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
                let tol = 3.0 * comb + 3.0 * grid.dt();
                reports.push(VerdictReport::new(
                    format!("bismut_component_{i}"),
                    "gradient representation against common-random-number differences",
                    serde_json::json!({"n_paths": n}),
                    (a.mean - b.mean).abs(),
                    tol,
                    tol,
                    if (a.mean - b.mean).abs() <= tol { Verdict::Pass } else { Verdict::Fail },
                ));
            }
            Ok(ok(reports))
        }
        "lsi" => {
            let x = basepoint(&model, w.s);
            let f = TestFunction::GaussianBump {
                center: vec![0.0; model.ambient_dim()],
                width: 1.0,
            };
            let rep = semigroup_lsi_check(&model, &grid, &x, &f, cfg.grids.n_paths, sub_seed(seed, 6))
                .map_err(lib)?;
            Ok(ok(vec![rep]))
        }
        "harnack" => {
            let f = TestFunction::GaussianBump {
                center: vec![0.0; model.ambient_dim()],
                width: 1.0,
            };
            let mut reports = Vec::new();
            for pair in 0..5u64 {
                let mut rs = NoiseStream::new(sub_seed(seed, 30 + pair), 0);
                let (x, y) = random_pair(&model, w.s, &mut rs);
                let rep = harnack_check(
                    &model,
                    &grid,
                    &x,
                    &y,
                    &f,
                    2.0,
                    cfg.grids.n_paths,
                    sub_seed(seed, 40 + pair),
                )
                .map_err(lib)?;
                reports.push(rep);
            }
            Ok(ok(reports))
        }
        "hyper" => {
            let k = evodiff::coefficients::k_bound(&model);
            let mut reports = Vec::new();
            let mut rows = Vec::new();
            for variant in [HyperVariant::SingularWeight, HyperVariant::NelsonType] {
                let sched = HyperSchedule { p: 2.0, k: k.clone(), s: w.s, t: w.t, variant };
                let th = hyper_q_threshold(&sched, &cfg.quadrature).map_err(lib)?;
                rows.push(format!("{variant:?},{}", th.q_max));
                reports.push(VerdictReport::new(
                    format!("hyper_{variant:?}"),
                    "admissible target exponent of the p-to-q contractivity statement",
                    serde_json::json!({"p": 2.0, "variant": format!("{variant:?}")}),
                    th.q_max,
                    f64::NAN,
                    0.0,
                    th.verdict,
                ));
            }
            Ok(CheckOutput {
                reports,
                plots: vec![PlotSeries {
                    name: "q_threshold".into(),
                    header: "variant,q_max".into(),
                    rows,
                }],
            })
        }
        "expmoment" => {
            let ens = cesaro_ensemble(
                &model,
                w.t - cfg.grids.burn_in,
                w.t,
                cfg.grids.n_particles,
                sub_seed(seed, 7),
                cfg.grids.dt_ensemble,
            )
            .map_err(lib)?;
            let rep = supercontractivity_check(&model, Some(&ens), &cfg.grids.lambda_grid)
                .map_err(lib)?;
            Ok(ok(vec![rep]))
        }
        "decay" => {
            let ens_t = cesaro_ensemble(
                &model,
                w.t - cfg.grids.burn_in,
                w.t,
                cfg.grids.n_particles,
                sub_seed(seed, 8),
                cfg.grids.dt_ensemble,
            )
            .map_err(lib)?;
            let f = TestFunction::LipCap { axis: 0, center: 0.0, slope: 1.0, cap: 10.0 };
            let mu_f = {
                let vals: Vec<f64> =
                    ens_t.points.iter().map(|p| f.value(&p.coords)).collect();
                evodiff::rng::mean_stderr(&vals).0
            };
            let dc = DecayConfig {
                dt: cfg.grids.dt_ensemble,
                burn_in: cfg.grids.burn_in,
                ..DecayConfig::default()
            };
            let rep = convergence_decay(
                &model,
                w.t,
                &f,
                &cfg.grids.s_grid,
                mu_f,
                &dc,
                sub_seed(seed, 9),
            )
            .map_err(lib)?;
            let rows = rep
                .points
                .iter()
                .map(|(k, l)| format!("{k},{l}"))
                .collect();
            Ok(CheckOutput {
                reports: vec![VerdictReport::new(
                    "decay_rate",
                    "fitted exponential decay of the semigroup toward the system",
                    serde_json::json!({"s_grid": cfg.grids.s_grid}),
                    rep.slope,
                    -1.0,
                    0.2,
                    rep.verdict,
                )],
                plots: vec![PlotSeries {
                    name: "decay".into(),
                    header: "k_integral,log_residual".into(),
                    rows,
                }],
            })
        }
        "superlsi" => {
            let ens = cesaro_ensemble(
                &model,
                w.s - cfg.grids.burn_in,
                w.s,
                cfg.grids.n_particles,
                sub_seed(seed, 11),
                cfg.grids.dt_ensemble,
            )
            .map_err(lib)?;
            let family = test_family(&model);
            let (profile, rep) =
                super_lsi_check(&model, &ens, &cfg.grids.r_grid, &family).map_err(lib)?;
            let rows = profile
                .r_grid
                .iter()
                .zip(profile.beta.iter().zip(&profile.se))
                .map(|(r, (b, s))| format!("{r},{b},{s}"))
                .collect();
            Ok(CheckOutput {
                reports: vec![rep],
                plots: vec![PlotSeries {
                    name: "beta_profile".into(),
                    header: "r,beta,se".into(),
                    rows,
                }],
            })
        }
        other => Err(format!("unknown check id '{other}'")),
    }
}

fn random_pair(model: &Model, s: f64, rs: &mut NoiseStream) -> (SpacePoint, SpacePoint) {
    match model.kind {
        ModelKind::ShrinkingSphere => {
            let r = model.radius(s);
            let draw = |rs: &mut NoiseStream| {
                let v: Vec<f64> =
                    (0..model.ambient_dim()).map(|_| rs.normal()).collect();
                let n: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                SpacePoint::new(v.iter().map(|c| c * r / n).collect())
            };
            (draw(rs), draw(rs))
        }
        _ => {
            let draw = |rs: &mut NoiseStream| {
                SpacePoint::new((0..model.dim).map(|_| 0.7 * rs.normal()).collect())
            };
            (draw(rs), draw(rs))
        }
    }
}

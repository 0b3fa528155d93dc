//! Experiment runner: executes the configured checks and emits
//! machine-readable reports with a deterministic body.
//!
//! Exit codes: 0 = no check failed, 1 = at least one fail verdict,
//! 2 = configuration or schema error.

mod checks;
mod config;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use evodiff::coefficients::{PhiFn, QuadratureSettings};
use evodiff::diffusion::{simulate_path, ExplosionGuard, TimeGrid};
use evodiff::measures::{cesaro_ensemble, moment, ParticleEnsemble};
use evodiff::rng::NoiseStream;
use evodiff::testfn::TestFunction;
use evodiff::VerdictReport;

use config::{CoefficientSpec, ExperimentConfig, ModelConfig, WindowConfig};

#[derive(Parser)]
#[command(name = "evodiff", version, about = "Diffusion semigroup verification runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for path-parallel estimators (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: $EVODIFF_OUT, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every check listed in the config, in declared order.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run only the hypothesis checks (coefficient bounds, non-explosion).
    CheckHypotheses {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate sample paths of the configured model.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Number of paths (overrides grids.n_paths).
        #[arg(long)]
        paths: Option<u64>,
    },
    /// Construct the particle ensemble for the evolution system of measures.
    Measures {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a single named check on a named model fixture.
    Verify {
        #[arg(long)]
        check: String,
        #[arg(long)]
        model: String,
        #[arg(long)]
        seed_value: Option<u64>,
    },
    /// Regenerate the closed-form oracle fixtures and compare them with the
    /// committed copy.
    OracleSelftest {
        /// Rewrite the committed fixture file instead of comparing.
        #[arg(long)]
        bless: bool,
        /// Fixture file location (default: the copy committed with the crate).
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Re-render verdicts.csv from an existing report.json.
    Report,
}

#[derive(Serialize)]
struct RunReport {
    config_hash: String,
    seed: u64,
    versions: Versions,
    reports: Vec<VerdictReport>,
}

#[derive(Serialize)]
struct Versions {
    evodiff: &'static str,
    runner: &'static str,
}

fn versions() -> Versions {
    Versions { evodiff: env!("CARGO_PKG_VERSION"), runner: env!("CARGO_PKG_VERSION") }
}

fn out_dir(cli_out: &Option<PathBuf>, cfg_out: Option<&str>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| cfg_out.map(PathBuf::from))
        .or_else(|| std::env::var_os("EVODIFF_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

fn write_file(path: &Path, body: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| format!("cannot create {}: {e}", parent.display()))?;
    }
    std::fs::write(path, body).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn write_verdicts_csv(dir: &Path, reports: &[VerdictReport]) -> Result<(), String> {
    let mut csv = String::from("check_id,lhs,rhs,slack,se,verdict\n");
    for r in reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    write_file(&dir.join("verdicts.csv"), &csv)
}

fn exit_code_for(reports: &[VerdictReport]) -> i32 {
    if reports.iter().any(|r| r.verdict.is_fail()) {
        1
    } else {
        0
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<(ExperimentConfig, String), String> {
    let (mut cfg, raw) = ExperimentConfig::from_path(path)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    Ok((cfg, raw))
}

fn execute_checks(
    ids: &[String],
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<(Vec<VerdictReport>, Vec<(String, f64)>), String> {
    let mut reports = Vec::new();
    let mut timings = Vec::new();
    for id in ids {
        let started = Instant::now();
        let out = checks::run_check(id, cfg)?;
        timings.push((id.clone(), started.elapsed().as_secs_f64()));
        reports.extend(out.reports);
        for plot in out.plots {
            let mut body = plot.header.clone();
            body.push('\n');
            for row in &plot.rows {
                body.push_str(row);
                body.push('\n');
            }
            write_file(&dir.join("plotdata").join(format!("{}.csv", plot.name)), &body)?;
        }
    }
    Ok((reports, timings))
}

fn emit_run_outputs(
    dir: &Path,
    cfg_raw: &str,
    seed: u64,
    reports: Vec<VerdictReport>,
    timings: Vec<(String, f64)>,
    total: f64,
) -> Result<i32, String> {
    let report = RunReport {
        config_hash: sha256_hex(cfg_raw.as_bytes()),
        seed,
        versions: versions(),
        reports,
    };
    let body = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    write_file(&dir.join("report.json"), &body)?;
    let timing = serde_json::json!({
        "total_seconds": total,
        "per_check": timings.iter().map(|(id, s)| {
            serde_json::json!({"check": id, "seconds": s})
        }).collect::<Vec<_>>(),
    });
    write_file(
        &dir.join("timing.json"),
        &serde_json::to_string_pretty(&timing).map_err(|e| e.to_string())?,
    )?;
    write_verdicts_csv(dir, &report.reports)?;
    for r in &report.reports {
        println!("{:<28} {}", r.check_id, r.verdict);
    }
    Ok(exit_code_for(&report.reports))
}

fn cmd_run(cfg_path: &Path, cli: &Cli, ids_override: Option<Vec<String>>) -> Result<i32, String> {
    let (cfg, raw) = load_config(cfg_path, cli.seed)?;
    let dir = out_dir(&cli.out, cfg.out_dir.as_deref());
    let ids = ids_override.unwrap_or_else(|| cfg.checks.clone());
    let started = Instant::now();
    let (reports, timings) = execute_checks(&ids, &cfg, &dir)?;
    emit_run_outputs(&dir, &raw, cfg.master_seed, reports, timings, started.elapsed().as_secs_f64())
}

fn cmd_simulate(cfg_path: &Path, cli: &Cli, paths: Option<u64>) -> Result<i32, String> {
    let (cfg, _) = load_config(cfg_path, cli.seed)?;
    let n = paths.unwrap_or(cfg.grids.n_paths);
    if n == 0 {
        return Err("simulate needs at least one path (--paths > 0)".into());
    }
    let model = cfg.model.to_model()?;
    let grid = TimeGrid::new(cfg.window.s, cfg.window.t, cfg.window.n_steps)
        .map_err(|e| e.to_string())?;
    let x0 = model.origin(grid.s);
    let guard = ExplosionGuard::default();
    let dir = out_dir(&cli.out, cfg.out_dir.as_deref());
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut dump = if cfg.dump_trajectories {
        let f = std::fs::File::create(dir.join("trajectories.jsonl"))
            .map_err(|e| e.to_string())?;
        Some(std::io::BufWriter::new(f))
    } else {
        None
    };
    let mut radii = Vec::with_capacity(n as usize);
    let mut exits = 0u64;
    for p in 0..n {
        let mut noise = NoiseStream::new(cfg.master_seed, p);
        let traj = simulate_path(&model, &grid, &x0, &mut noise, &guard)
            .map_err(|e| e.to_string())?;
        if traj.exited.is_some() {
            exits += 1;
        }
        let end = &traj.points[grid.n_steps];
        radii.push(end.norm());
        if let Some(w) = dump.as_mut() {
            for (i, pt) in traj.points.iter().enumerate() {
                let rec = serde_json::json!({
                    "t": grid.time(i),
                    "coords": pt.coords,
                    "q_norm": traj.q_matrices[i][(0, 0)].abs(),
                });
                writeln!(w, "{rec}").map_err(|e| e.to_string())?;
            }
        }
    }
    let (mean, se) = evodiff::rng::mean_stderr(&radii);
    println!("paths: {n}  exits: {exits}  endpoint radius: {mean:.6} +/- {se:.6}");
    Ok(0)
}

fn ensemble_jsonl(model_cfg: &ModelConfig, ens: &ParticleEnsemble) -> Result<String, String> {
    let model_hash =
        sha256_hex(serde_json::to_string(model_cfg).map_err(|e| e.to_string())?.as_bytes());
    let mut body = serde_json::json!({
        "time": ens.time,
        "n": ens.n(),
        "seed": ens.seed,
        "model_hash": model_hash,
    })
    .to_string();
    body.push('\n');
    for p in &ens.points {
        body.push_str(&serde_json::json!({ "coords": p.coords }).to_string());
        body.push('\n');
    }
    Ok(body)
}

fn cmd_measures(cfg_path: &Path, cli: &Cli) -> Result<i32, String> {
    let (cfg, _) = load_config(cfg_path, cli.seed)?;
    let model = cfg.model.to_model()?;
    let w = &cfg.window;
    let ens = cesaro_ensemble(
        &model,
        w.t - cfg.grids.burn_in,
        w.t,
        cfg.grids.n_particles,
        cfg.master_seed,
        cfg.grids.dt_ensemble,
    )
    .map_err(|e| e.to_string())?;
    let dir = out_dir(&cli.out, cfg.out_dir.as_deref());
    write_file(
        &dir.join("ensembles").join("cesaro.jsonl"),
        &ensemble_jsonl(&cfg.model, &ens)?,
    )?;
    let m2 = moment(&model, &ens, PhiFn::RSquared).map_err(|e| e.to_string())?;
    println!(
        "ensemble at t = {}: n = {}, second radial moment {:.6} +/- {:.6}",
        ens.time,
        ens.n(),
        m2.value,
        m2.se
    );
    Ok(0)
}

fn fixture_config(model: &str, seed: u64) -> Result<ExperimentConfig, String> {
    let (model_cfg, window) = match model {
        "ou" => (
            ModelConfig {
                kind: "ou".into(),
                dim: 2,
                conformal: None,
                drift: None,
                initial_radius: None,
            },
            WindowConfig { s: 0.0, t: 1.0, n_steps: 1_000 },
        ),
        "conformal" => (
            ModelConfig {
                kind: "conformal_flat".into(),
                dim: 2,
                conformal: Some(CoefficientSpec { preset: "exp".into(), params: vec![1.0, -1.0] }),
                drift: Some(CoefficientSpec { preset: "constant".into(), params: vec![1.0] }),
                initial_radius: None,
            },
            WindowConfig { s: 0.0, t: 1.0, n_steps: 1_000 },
        ),
        "sphere" => (
            ModelConfig {
                kind: "shrinking_sphere".into(),
                dim: 2,
                conformal: None,
                drift: None,
                initial_radius: Some(0.0),
            },
            WindowConfig { s: -2.0, t: -1.0, n_steps: 1_000 },
        ),
        other => return Err(format!("unknown model fixture '{other}' (field model)")),
    };
    Ok(ExperimentConfig {
        master_seed: seed,
        model: model_cfg,
        window,
        grids: Default::default(),
        quadrature: QuadratureSettings::default(),
        checks: Vec::new(),
        out_dir: None,
        dump_trajectories: false,
    })
}

fn cmd_verify(check: &str, model: &str, seed: u64) -> Result<i32, String> {
    let cfg = fixture_config(model, seed)?;
    let out = checks::run_check(check, &cfg)?;
    for r in &out.reports {
        println!("{}", serde_json::to_string_pretty(r).map_err(|e| e.to_string())?);
    }
    Ok(exit_code_for(&out.reports))
}

/// Closed-form oracle quantities: every value below is computed by exact
/// formulas and deterministic quadrature, so the rendered JSON is stable
/// across runs and platforms.
fn oracle_fixture_body() -> Result<String, String> {
    use evodiff::{inequalities, oracle, Model};
    let q = QuadratureSettings::default();
    let lib = |e: evodiff::Error| e.to_string();

    let ou = Model::ou(2);
    let p_ou = oracle::mehler_params(&ou, 0.0, 1.0, &q).map_err(lib)?;
    let conf = Model::conformal_flat(
        2,
        evodiff::TimeFn::Exp { amp: 1.0, rate: -1.0 },
        evodiff::geometry::DriftSpec::LinearRadial { lambda: evodiff::TimeFn::Constant(1.0) },
    );
    let p_conf = oracle::mehler_params(&conf, 0.0, 1.0, &q).map_err(lib)?;
    let nelson = inequalities::hyper_q_threshold(
        &inequalities::HyperSchedule {
            p: 2.0,
            k: evodiff::TimeFn::Constant(1.0),
            s: 0.0,
            t: 1.0,
            variant: inequalities::HyperVariant::NelsonType,
        },
        &q,
    )
    .map_err(lib)?;
    let fixture = serde_json::json!({
        "ou": {
            "params": p_ou,
            "p_coordinate_at_x10": oracle::exact_p(&p_ou, &[1.0, 0.0], &TestFunction::Coordinate(0)),
            "mu_rho2": oracle::exact_mu_rho2(&p_ou).map_err(lib)?,
            "mu_exp_moment_quarter": oracle::exact_mu_exp_moment(&p_ou, 0.25).map_err(lib)?,
            "lsi_constant": inequalities::lsi_constant(&ou, 0.0, 1.0),
            "harnack_coefficient": evodiff::semigroup::harnack_coefficient(&ou, 0.0, 1.0, 2.0).map_err(lib)?,
            "nelson_q_max": nelson.q_max,
        },
        "conformal": {
            "params": p_conf,
        },
    });
    serde_json::to_string_pretty(&fixture).map_err(|e| e.to_string())
}

fn cmd_oracle_selftest(bless: bool, fixtures: Option<&Path>) -> Result<i32, String> {
    let default = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/oracle.json"));
    let path = fixtures.unwrap_or(&default);
    let body = oracle_fixture_body()?;
    if bless {
        write_file(path, &body)?;
        println!("wrote {}", path.display());
        return Ok(0);
    }
    let committed = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read committed fixtures {}: {e}", path.display()))?;
    if committed == body {
        println!("oracle-selftest: fixtures are diff-clean");
        Ok(0)
    } else {
        eprintln!("oracle-selftest: regenerated fixtures differ from {}", path.display());
        Ok(1)
    }
}

fn cmd_report(cli: &Cli) -> Result<i32, String> {
    let dir = out_dir(&cli.out, None);
    let body = std::fs::read_to_string(dir.join("report.json"))
        .map_err(|e| format!("cannot read report.json in {}: {e}", dir.display()))?;
    let parsed: serde_json::Value =
        serde_json::from_str(&body).map_err(|e| format!("malformed report.json: {e}"))?;
    let reports: Vec<VerdictReport> =
        serde_json::from_value(parsed["reports"].clone())
            .map_err(|e| format!("malformed report.json: {e}"))?;
    write_verdicts_csv(&dir, &reports)?;
    let fails = reports.iter().filter(|r| r.verdict.is_fail()).count();
    println!("{} verdicts, {} failed", reports.len(), fails);
    Ok(if fails > 0 { 1 } else { 0 })
}

fn dispatch(cli: &Cli) -> Result<i32, String> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    match &cli.command {
        Command::Run { config } => cmd_run(config, cli, None),
        Command::CheckHypotheses { config } => {
            cmd_run(config, cli, Some(vec!["h3".into(), "nonexplosion".into()]))
        }
        Command::Simulate { config, paths } => cmd_simulate(config, cli, *paths),
        Command::Measures { config } => cmd_measures(config, cli),
        Command::Verify { check, model, seed_value } => {
            cmd_verify(check, model, seed_value.or(cli.seed).unwrap_or(1))
        }
        Command::OracleSelftest { bless, fixtures } => {
            cmd_oracle_selftest(*bless, fixtures.as_deref())
        }
        Command::Report => cmd_report(cli),
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => std::process::exit(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}

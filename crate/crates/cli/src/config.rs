//! Declarative experiment configuration: schema-validated TOML with
//! named coefficient presets (no runtime expression parsing).

use serde::{Deserialize, Serialize};

use evodiff::coefficients::QuadratureSettings;
use evodiff::geometry::DriftSpec;
use evodiff::{Model, TimeFn};

/// `{ preset, params }` coefficient schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub preset: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl CoefficientSpec {
    pub fn to_timefn(&self) -> Result<TimeFn, String> {
        let need = |n: usize| -> Result<(), String> {
            if self.params.len() == n {
                Ok(())
            } else {
                Err(format!(
                    "preset '{}' takes {} parameter(s), got {}",
                    self.preset,
                    n,
                    self.params.len()
                ))
            }
        };
        match self.preset.as_str() {
            "constant" => {
                need(1)?;
                Ok(TimeFn::Constant(self.params[0]))
            }
            "exp" => {
                need(2)?;
                Ok(TimeFn::Exp { amp: self.params[0], rate: self.params[1] })
            }
            "power" => {
                need(2)?;
                Ok(TimeFn::Power { coeff: self.params[0], exponent: self.params[1] })
            }
            other => Err(format!("unknown coefficient preset '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: String,
    pub dim: usize,
    #[serde(default)]
    pub conformal: Option<CoefficientSpec>,
    #[serde(default)]
    pub drift: Option<CoefficientSpec>,
    #[serde(default)]
    pub initial_radius: Option<f64>,
}

impl ModelConfig {
    pub fn to_model(&self) -> Result<Model, String> {
        let drift = match &self.drift {
            None => DriftSpec::Zero,
            Some(spec) => DriftSpec::LinearRadial { lambda: spec.to_timefn()? },
        };
        match self.kind.as_str() {
            "ou" => Ok(Model::ou(self.dim)),
            "static_flat" => Ok(Model::static_flat(self.dim, drift)),
            "conformal_flat" => {
                let c = self
                    .conformal
                    .as_ref()
                    .ok_or("model.conformal is required for kind 'conformal_flat'")?
                    .to_timefn()?;
                Ok(Model::conformal_flat(self.dim, c, drift))
            }
            "shrinking_sphere" => {
                let r0 = self.initial_radius.unwrap_or(0.0);
                Model::shrinking_sphere(self.dim, r0).map_err(|e| e.to_string())
            }
            other => Err(format!("unknown model kind '{other}' (field model.kind)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub s: f64,
    pub t: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_paths: u64,
    pub n_particles: usize,
    pub lambda_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub burn_in: f64,
    pub dt_ensemble: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_paths: 10_000,
            n_particles: 10_000,
            lambda_grid: vec![0.1, 0.25, 0.4],
            s_grid: vec![-1.0, -2.0, -3.0, -4.0],
            r_grid: vec![0.5, 1.0, 2.0, 4.0],
            burn_in: 20.0,
            dt_ensemble: 1e-2,
        }
    }
}

fn default_quadrature() -> QuadratureSettings {
    QuadratureSettings::default()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub model: ModelConfig,
    pub window: WindowConfig,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default = "default_quadrature")]
    pub quadrature: QuadratureSettings,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub out_dir: Option<String>,
    /// Dump per-step trajectory records for `simulate`.
    #[serde(default)]
    pub dump_trajectories: bool,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<(ExperimentConfig, String), String> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&raw).map_err(|e| format!("config error: {e}"))?;
        cfg.model.to_model()?;
        if !(cfg.window.s < cfg.window.t) {
            return Err("config error: window.s must precede window.t".into());
        }
        Ok((cfg, raw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            master_seed = 1
            checks = ["h3"]
            [model]
            kind = "ou"
            dim = 2
            [window]
            s = 0.0
            t = 1.0
            n_steps = 100
            "#,
        )
        .unwrap();
        assert_eq!(cfg.checks, vec!["h3"]);
        assert!(cfg.model.to_model().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let res: Result<ExperimentConfig, _> = toml::from_str(
            r#"
            master_seed = 1
            bogus = true
            [model]
            kind = "ou"
            dim = 2
            [window]
            s = 0.0
            t = 1.0
            n_steps = 100
            "#,
        );
        assert!(res.is_err());
    }

    #[test]
    fn bad_model_kind_names_the_field() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            master_seed = 1
            [model]
            kind = "klein_bottle"
            dim = 2
            [window]
            s = 0.0
            t = 1.0
            n_steps = 100
            "#,
        )
        .unwrap();
        let err = cfg.model.to_model().unwrap_err();
        assert!(err.contains("model.kind"), "{err}");
    }

    #[test]
    fn presets_translate() {
        let spec = CoefficientSpec { preset: "exp".into(), params: vec![1.0, -1.0] };
        assert_eq!(spec.to_timefn().unwrap(), TimeFn::Exp { amp: 1.0, rate: -1.0 });
        let bad = CoefficientSpec { preset: "exp".into(), params: vec![1.0] };
        assert!(bad.to_timefn().is_err());
    }
}

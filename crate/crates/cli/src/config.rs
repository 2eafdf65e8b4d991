//! Run configuration for `run-qpt`.
//!
//! ```toml
//! schema = "qptsim-run/1"
//! system = "alanine.toml"
//! library = "library.toml"
//! histogram = "rf_histogram.toml"
//! seed = 1
//! noise_sigma = 0.01
//!
//! [relaxation]
//! model = "rates"              # or "uniform"
//! file = "relaxation_table1.toml"
//!
//! [toggles]
//! designed_pulses = true
//! incoherence = true
//! spectators = false
//! relaxation = true
//! noise = true
//! preparation = true
//! ```
//!
//! Paths are relative to the configuration file. Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

pub const RUN_SCHEMA: &str = "qptsim-run/1";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub system: PathBuf,
    #[serde(default)]
    pub library: Option<PathBuf>,
    pub histogram: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub condition_bound: Option<f64>,
    #[serde(default)]
    pub relaxation: Option<RelaxationConfig>,
    #[serde(default)]
    pub toggles: TogglesConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelaxationVariant {
    Rates,
    Uniform,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationConfig {
    pub model: RelaxationVariant,
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TogglesConfig {
    #[serde(default)]
    pub designed_pulses: bool,
    #[serde(default)]
    pub incoherence: bool,
    #[serde(default)]
    pub spectators: bool,
    #[serde(default)]
    pub relaxation: bool,
    #[serde(default)]
    pub noise: bool,
    #[serde(default)]
    pub preparation: bool,
}

impl From<TogglesConfig> for qptsim::qpt::Toggles {
    fn from(t: TogglesConfig) -> Self {
        qptsim::qpt::Toggles {
            designed_pulses: t.designed_pulses,
            incoherence: t.incoherence,
            spectators: t.spectators,
            relaxation: t.relaxation,
            noise: t.noise,
            preparation: t.preparation,
        }
    }
}

fn config_err(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Core(qptsim::Error::config(path.display().to_string(), message))
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<RunConfig, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(path, e.to_string()))?;
        if cfg.schema != RUN_SCHEMA {
            return Err(config_err(
                path,
                format!("field `schema`: expected `{RUN_SCHEMA}`, found `{}`", cfg.schema),
            ));
        }
        if !(cfg.noise_sigma.is_finite() && cfg.noise_sigma >= 0.0) {
            return Err(config_err(path, "field `noise_sigma` must be finite and nonnegative"));
        }
        if cfg.toggles.designed_pulses && cfg.library.is_none() {
            return Err(config_err(path, "toggle `designed_pulses` requires `library`"));
        }
        if cfg.toggles.relaxation {
            match &cfg.relaxation {
                None => return Err(config_err(path, "toggle `relaxation` requires a [relaxation] table")),
                Some(r) if r.model == RelaxationVariant::Rates && r.file.is_none() => {
                    return Err(config_err(path, "relaxation model `rates` requires `file`"))
                }
                Some(r) if r.model == RelaxationVariant::Uniform && r.eta.is_none() => {
                    return Err(config_err(path, "relaxation model `uniform` requires `eta`"))
                }
                _ => {}
            }
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.system = base.join(&cfg.system);
        cfg.histogram = base.join(&cfg.histogram);
        cfg.library = cfg.library.map(|p| base.join(p));
        if let Some(r) = cfg.relaxation.as_mut() {
            r.file = r.file.take().map(|p| base.join(p));
        }
        for p in cfg.input_files() {
            if !p.exists() {
                return Err(config_err(path, format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Every file the run reads besides the configuration itself. Pulse
    /// schedules referenced by the library are included.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let mut files = vec![self.system.clone(), self.histogram.clone()];
        if let Some(l) = &self.library {
            files.push(l.clone());
        }
        if let Some(RelaxationConfig { file: Some(f), .. }) = &self.relaxation {
            files.push(f.clone());
        }
        files
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "schema = \"qptsim-run/1\"\nsystem = \"a\"\nhistogram = \"b\"\ncolour = 3\n";
        let err = RunConfig::parse(text, Path::new("run.toml")).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn toggles_need_their_inputs() {
        let text = "schema = \"qptsim-run/1\"\nsystem = \"a\"\nhistogram = \"b\"\n[toggles]\nrelaxation = true\n";
        let err = RunConfig::parse(text, Path::new("run.toml")).unwrap_err();
        assert!(err.to_string().contains("relaxation"), "{err}");
    }
}

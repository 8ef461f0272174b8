//! The `simulate` run configuration.
//!
//! ```toml
//! version = 1
//! seed = 7
//! replicates = 2000
//! alpha = 0.05
//!
//! [model]
//! p = 26
//! p_intra = 0.6
//! p_inter = [0.01, 0.4]
//! rho = [0.2]
//! redraw_adjacency = false
//!
//! [design]
//! n = [100, 300, 500]
//! stats = ["empirical", "fisher"]
//! procedures = [
//!   { method = "bonferroni" },
//!   { method = "sidak", step_down = true },
//! ]
//!
//! [calibration]
//! maxt_draws = 1000
//! bootstrap_draws = 100
//! omega = "gaussian"
//!
//! [output]
//! histogram = "hist.csv"
//! histogram_bins = 40
//! ```

use std::path::{Path, PathBuf};

use corrgraph::pipeline::{Calibration, OmegaSource};
use corrgraph::procedures::{Method, ProcedureKind};
use corrgraph::simulation::ExperimentConfig;
use corrgraph::StatKind;
use serde::Deserialize;

use crate::io::{CliResult, Failure};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub replicates: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub model: ModelSection,
    pub design: DesignSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub p: usize,
    pub p_intra: f64,
    pub p_inter: Vec<f64>,
    pub rho: Vec<f64>,
    #[serde(default)]
    pub redraw_adjacency: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub n: Vec<usize>,
    pub stats: Vec<String>,
    pub procedures: Vec<ProcedureEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcedureEntry {
    pub method: String,
    #[serde(default)]
    pub step_down: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    #[serde(default = "default_maxt_draws")]
    pub maxt_draws: usize,
    #[serde(default = "default_bootstrap_draws")]
    pub bootstrap_draws: usize,
    #[serde(default = "default_omega")]
    pub omega: String,
}

fn default_maxt_draws() -> usize {
    Calibration::default().maxt_draws
}

fn default_bootstrap_draws() -> usize {
    Calibration::default().bootstrap_draws
}

fn default_omega() -> String {
    "gaussian".into()
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            maxt_draws: default_maxt_draws(),
            bootstrap_draws: default_bootstrap_draws(),
            omega: default_omega(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub histogram: Option<PathBuf>,
    pub histogram_bins: Option<usize>,
}

fn key_error(key: &str, message: impl std::fmt::Display) -> Failure {
    Failure::usage(format!("invalid config at `{key}`: {message}"))
}

pub fn parse_omega(s: &str) -> Option<OmegaSource> {
    match s {
        "gaussian" => Some(OmegaSource::Gaussian),
        "fourth-moment" | "fourth_moment" | "general" => Some(OmegaSource::FourthMoment),
        _ => None,
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::io::io_failure(path, e))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))?;
        if config.version != SCHEMA_VERSION {
            return Err(key_error(
                "version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", config.version),
            ));
        }
        Ok(config)
    }

    /// Converts to the library configuration, reporting the offending key.
    pub fn to_experiment(&self) -> CliResult<ExperimentConfig> {
        let stats = self
            .design
            .stats
            .iter()
            .enumerate()
            .map(|(i, s)| s.parse::<StatKind>().map_err(|e| key_error(&format!("design.stats[{i}]"), e)))
            .collect::<CliResult<Vec<_>>>()?;
        let procedures = self
            .design
            .procedures
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let key = format!("design.procedures[{i}]");
                let method = p.method.parse::<Method>().map_err(|e| key_error(&format!("{key}.method"), e))?;
                ProcedureKind::new(method, p.step_down).map_err(|e| key_error(&key, e))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let omega = parse_omega(&self.calibration.omega).ok_or_else(|| {
            key_error(
                "calibration.omega",
                format!("expected `gaussian` or `fourth-moment`, got `{}`", self.calibration.omega),
            )
        })?;
        let checks: [(&str, bool, String); 9] = [
            ("replicates", self.replicates >= 1, "must be at least 1".into()),
            ("alpha", self.alpha > 0.0 && self.alpha < 1.0, "must lie in (0, 1)".into()),
            ("model.p", self.model.p >= 2 && self.model.p.is_multiple_of(2), "must be even and at least 2".into()),
            ("model.p_intra", (0.0..=1.0).contains(&self.model.p_intra), "must lie in [0, 1]".into()),
            ("model.p_inter", !self.model.p_inter.is_empty() && self.model.p_inter.iter().all(|v| (0.0..=1.0).contains(v)), "needs values in [0, 1]".into()),
            ("model.rho", !self.model.rho.is_empty() && self.model.rho.iter().all(|r| r.abs() < 1.0), "needs values in (-1, 1)".into()),
            ("design.n", !self.design.n.is_empty() && self.design.n.iter().all(|&n| n >= 4), "needs sample sizes of at least 4".into()),
            ("design.stats", !stats.is_empty(), "must not be empty".into()),
            ("design.procedures", !procedures.is_empty(), "must not be empty".into()),
        ];
        if let Some((key, _, msg)) = checks.into_iter().find(|(_, ok, _)| !ok) {
            return Err(key_error(key, msg));
        }
        let calibration = Calibration {
            maxt_draws: self.calibration.maxt_draws,
            bootstrap_draws: self.calibration.bootstrap_draws,
            omega,
        };
        if procedures.iter().any(|p| p.method.needs_draws()) {
            calibration.validate().map_err(|e| key_error("calibration", e))?;
        }
        let histogram_bins = match (&self.output.histogram, self.output.histogram_bins) {
            (Some(_), None) => Some(40),
            (Some(_), Some(0)) => return Err(key_error("output.histogram_bins", "must be positive")),
            (Some(_), bins) => bins,
            (None, Some(_)) => return Err(key_error("output.histogram_bins", "requires output.histogram")),
            (None, None) => None,
        };
        Ok(ExperimentConfig {
            p: self.model.p,
            p_intra: self.model.p_intra,
            p_inter: self.model.p_inter.clone(),
            rho: self.model.rho.clone(),
            n: self.design.n.clone(),
            stats,
            procedures,
            alpha: self.alpha,
            replicates: self.replicates,
            calibration,
            seed: self.seed,
            redraw_adjacency: self.model.redraw_adjacency,
            histogram_bins,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
replicates = 3
[model]
p = 6
p_intra = 0.5
p_inter = [0.1]
rho = [0.2]
[design]
n = [50]
stats = ["fisher"]
procedures = [{ method = "sidak", step_down = true }]
"#;

    fn parse(text: &str) -> CliResult<ExperimentConfig> {
        let config: RunConfig = toml::from_str(text).map_err(Failure::usage)?;
        config.to_experiment()
    }

    #[test]
    fn minimal_config() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.procedures, vec![ProcedureKind::step_down(Method::Sidak)]);
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.calibration, Calibration::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("replicates = 3", "replicates = 3\nreplicatse = 4");
        assert!(toml::from_str::<RunConfig>(&text).is_err());
        let text = MINIMAL.replace("rho = [0.2]", "rho = [0.2]\nextra = 1");
        assert!(toml::from_str::<RunConfig>(&text).is_err());
    }

    #[test]
    fn errors_name_the_key() {
        let e = parse(&MINIMAL.replace("\"fisher\"", "\"pearson\"")).unwrap_err();
        assert!(e.message.contains("design.stats[0]"), "{}", e.message);
        let e = parse(&MINIMAL.replace("p = 6", "p = 7")).unwrap_err();
        assert!(e.message.contains("model.p"), "{}", e.message);
        let e = parse(&MINIMAL.replace("method = \"sidak\"", "method = \"bh\"")).unwrap_err();
        assert!(e.message.contains("design.procedures[0]"), "{}", e.message);
    }
}

use std::path::Path;

use anyhow::{bail, Context};
use edr_core::pipeline::RunConfig;
use edr_core::report::{DEFAULT_BINS, DEFAULT_SWEEP_GRID};
use edr_core::value::SynthConfig;
use serde::{Deserialize, Serialize};

/// Retention comparison settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Absolute limits in normalized cost units. When absent, `fractions`
    /// of the total compressed cost are used.
    pub limits: Option<Vec<f64>>,
    pub fractions: Vec<f64>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            limits: None,
            fractions: vec![0.8, 0.4, 0.2, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: Vec<(f64, f64)>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grid: DEFAULT_SWEEP_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub bins: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { bins: DEFAULT_BINS }
    }
}

/// Structured config file; every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub run: RunConfig,
    /// Stream generated when no `--input` directory is given.
    pub synth: SynthConfig,
    pub compare: CompareConfig,
    pub sweep: SweepConfig,
    pub report: ReportConfig,
}

impl CliConfig {
    /// Parse a `.toml` or JSON config file.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let config = if is_toml {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.run.validate()?;
        self.synth.validate()?;
        if self.compare.fractions.iter().any(|f| !(*f > 0.0)) {
            bail!("compare fractions must be positive");
        }
        if let Some(l) = &self.compare.limits {
            if l.is_empty() || l.iter().any(|m| !(*m > 0.0)) {
                bail!("compare limits must be a nonempty list of positive numbers");
            }
        }
        if self.sweep.grid.is_empty() {
            bail!("sweep grid is empty");
        }
        if self.report.bins == 0 {
            bail!("report bins must be at least 1");
        }
        Ok(())
    }
}

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::buffering::{DmmParams, LboParams};
use crate::codec::{CompressionModel, EncoderConfig};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::storage::Policy;
use crate::types::{ClassModel, ClassScores, DOTA_LIKELIHOODS, NUM_CLASSES};
use crate::value::{NoiseConfig, ValueParams};

/// How stored frame sizes are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelMode {
    /// Sizes only; compressed cost follows the phi model.
    #[default]
    Modeled,
    /// Frames are JPEG-encoded at the chosen quality.
    Real,
}

/// Where per-frame detector scores come from.
///
/// Textual forms: `gt`, `synthetic`, `trace` (scores embedded in the input
/// stream) and `replay:<path>`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScoreSource {
    #[default]
    GroundTruth,
    Synthetic,
    Trace,
    Replay(PathBuf),
}

impl FromStr for ScoreSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" | "ground_truth" => Ok(ScoreSource::GroundTruth),
            "synthetic" => Ok(ScoreSource::Synthetic),
            "trace" => Ok(ScoreSource::Trace),
            _ => match s.strip_prefix("replay:") {
                Some(p) if !p.is_empty() => Ok(ScoreSource::Replay(p.into())),
                _ => Err(Error::param(format!(
                    "unknown score source '{s}' (expected gt, synthetic, trace or replay:<path>)"
                ))),
            },
        }
    }
}

impl fmt::Display for ScoreSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreSource::GroundTruth => f.write_str("gt"),
            ScoreSource::Synthetic => f.write_str("synthetic"),
            ScoreSource::Trace => f.write_str("trace"),
            ScoreSource::Replay(p) => write!(f, "replay:{}", p.display()),
        }
    }
}

impl TryFrom<String> for ScoreSource {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScoreSource> for String {
    fn from(s: ScoreSource) -> String {
        s.to_string()
    }
}

/// Every tunable of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub value: ValueParams,
    pub dmm: DmmParams,
    pub lbo: LboParams,
    pub compression: CompressionModel,
    pub pixels: PixelMode,
    pub encoder: EncoderConfig,
    /// Aging factor for buffer values.
    pub lambda: f64,
    /// Gaussian smoothing width over buffer values; 0 disables smoothing.
    pub sigma: f64,
    /// Per-class tag thresholds.
    pub thresholds: ClassScores,
    /// Class likelihoods; information measures are derived from these.
    pub likelihoods: ClassScores,
    /// Storage capacity in normalized cost units; `None` is unlimited.
    pub capacity: Option<f64>,
    pub policy: Policy,
    pub scores: ScoreSource,
    /// Noise for the synthetic score provider.
    pub noise: NoiseConfig,
    /// Size normalizing raw costs. `None` uses the stream's own reference.
    pub reference_max_bytes: Option<u64>,
    pub seed: u64,
    pub execution: Execution,
    /// Run the four stages on separate threads.
    pub threaded: bool,
    /// Bound of each inter-stage queue in threaded mode.
    pub queue_depth: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            value: ValueParams::default(),
            dmm: DmmParams::default(),
            lbo: LboParams::default(),
            compression: CompressionModel::default(),
            pixels: PixelMode::Modeled,
            encoder: EncoderConfig::default(),
            lambda: 1e-6,
            sigma: 0.0,
            thresholds: [0.5; NUM_CLASSES],
            likelihoods: DOTA_LIKELIHOODS,
            capacity: None,
            policy: Policy::Priority,
            scores: ScoreSource::GroundTruth,
            noise: NoiseConfig::default(),
            reference_max_bytes: None,
            seed: 0,
            execution: Execution::default(),
            threaded: false,
            queue_depth: 256,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.value.validate()?;
        self.dmm.validate()?;
        self.lbo.validate()?;
        self.compression.validate()?;
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::param(format!("lambda {} must lie in [0,1)", self.lambda)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(format!("sigma {} must be a nonnegative number", self.sigma)));
        }
        if self.thresholds.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::param("class thresholds must lie in [0,1]"));
        }
        self.class_model()?;
        if let Some(m) = self.capacity {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::param(format!("capacity {m} must be positive")));
            }
        }
        if self.reference_max_bytes == Some(0) {
            return Err(Error::param("reference_max_bytes must be positive"));
        }
        if !(self.noise.vad_sigma >= 0.0 && self.noise.oad_sigma >= 0.0) {
            return Err(Error::param("noise levels must be nonnegative"));
        }
        if self.queue_depth == 0 {
            return Err(Error::param("queue_depth must be at least 1"));
        }
        Ok(())
    }

    pub fn class_model(&self) -> Result<ClassModel> {
        ClassModel::from_likelihoods(self.likelihoods)
    }
}

//! Frame valuation: information measures, the hybrid anomaly/classification
//! value, the legacy per-event value, and score providers.

mod provider;
mod synth;

pub use provider::{NoiseConfig, ScoreProvider, Scores};
pub use synth::{synthesize_trace, SynthConfig, SyntheticFrame, SyntheticStream};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassScores, NUM_CLASSES};

/// Weights of the anomaly score (`alpha`) and of the class-information term
/// (`beta`) in [`hybrid_value`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValueParams {
    pub alpha: f64,
    pub beta: f64,
}

impl ValueParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = ValueParams { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::param(format!(
                "alpha/beta must lie in [0,1], got ({}, {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

impl Default for ValueParams {
    fn default() -> Self {
        ValueParams { alpha: 1.0, beta: 1.0 }
    }
}

/// Normalized information measure per class: `-log2 P_i` divided by the
/// largest anomaly-class measure. The normal class (index 0) is always 0 and
/// its likelihood is ignored.
pub fn info_measures(likelihoods: &ClassScores) -> Result<ClassScores> {
    let mut w = [0.0; NUM_CLASSES];
    for i in 1..NUM_CLASSES {
        let p = likelihoods[i];
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::param(format!(
                "likelihood of class {i} must lie in (0,1), got {p}"
            )));
        }
        w[i] = -p.log2();
    }
    let max = w[1..].iter().copied().fold(f64::MIN, f64::max);
    for x in &mut w[1..] {
        *x /= max;
    }
    Ok(w)
}

/// `min(1, alpha * s + beta * sum_{i>=1} w_i * o_i)`.
///
/// The upper clamp keeps the value in `[0, 1]`; index 0 of `o` (normal) never
/// contributes.
pub fn hybrid_value(s: f64, o: &ClassScores, params: ValueParams, w: &ClassScores) -> f64 {
    let expected_info: f64 = o[1..].iter().zip(&w[1..]).map(|(o, w)| o * w).sum();
    (params.alpha * s + params.beta * expected_info).min(1.0)
}

/// Value of every event under the older rule-based scheme: `-log2 P`,
/// normalized so the rarest event scores 1.
pub fn legacy_event_values(likelihoods: &[f64]) -> Result<Vec<f64>> {
    let mut v = Vec::with_capacity(likelihoods.len());
    for (j, &p) in likelihoods.iter().enumerate() {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::param(format!(
                "likelihood of event {j} must lie in (0,1], got {p}"
            )));
        }
        v.push(-p.log2());
    }
    let max = v.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for x in &mut v {
            *x /= max;
        }
    }
    Ok(v)
}

/// Frame value when `event` is the detected event.
pub fn legacy_event_value(event: usize, likelihoods: &[f64]) -> Result<f64> {
    let v = legacy_event_values(likelihoods)?;
    v.get(event)
        .copied()
        .ok_or_else(|| Error::param(format!("event index {event} out of range")))
}

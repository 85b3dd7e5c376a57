//! Per-frame compression quality: minimize `c * phi(d) - K * v * d` over
//! `d in [0, 1]`, with `K = eta / zeta`.

use serde::{Deserialize, Serialize};

use crate::codec::CompressionModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LboParams {
    pub eta: f64,
    pub zeta: f64,
}

impl Default for LboParams {
    fn default() -> Self {
        LboParams { eta: 0.9, zeta: 1.7 }
    }
}

impl LboParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.zeta > 0.0) || !self.ratio().is_finite() {
            return Err(Error::param("LBO needs eta >= 0 and zeta > 0"));
        }
        Ok(())
    }

    /// Value-to-cost exchange rate `K = eta / zeta`.
    pub fn ratio(&self) -> f64 {
        self.eta / self.zeta
    }
}

/// Objective being minimized, for a given ratio `k`.
pub fn lbo_objective(d: f64, cost: f64, value: f64, k: f64, model: &CompressionModel) -> f64 {
    cost * model.eval(d) - k * value * d
}

/// Closed-form minimizer of the per-frame objective.
///
/// The objective is convex, so the stationary point
/// `d = (1 - c a1 a2 / (K v ln 2)) / a2` clamped to `[0, 1]` is optimal. When the
/// objective is flat (no cost and no reward) the smaller quality wins.
pub fn lbo_decide(cost: f64, smoothed_value: f64, params: &LboParams, model: &CompressionModel) -> f64 {
    let reward = params.ratio() * smoothed_value;
    if reward <= 0.0 {
        return 0.0;
    }
    if cost <= 0.0 {
        return 1.0;
    }
    let d = (1.0 - cost * model.a1 * model.a2 / (reward * std::f64::consts::LN_2)) / model.a2;
    d.clamp(0.0, 1.0)
}

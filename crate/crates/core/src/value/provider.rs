use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TraceRecord;
use crate::types::{normalize_class_scores, ClassScores, EventClass, ObjectObservation};

/// ChaCha stream used for score noise; frame structure uses stream 0.
pub(crate) const SCORE_STREAM: u64 = 1;

/// Gaussian noise levels applied to ground-truth scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Standard deviation of the anomaly-score noise.
    pub vad_sigma: f64,
    /// Standard deviation of the per-class confidence noise.
    pub oad_sigma: f64,
}

impl NoiseConfig {
    pub fn uniform(sigma: f64) -> Self {
        NoiseConfig {
            vad_sigma: sigma,
            oad_sigma: sigma,
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig::uniform(0.3)
    }
}

/// Detector output for one frame. `o` is already normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub s: f64,
    pub o: ClassScores,
    /// Objects carried inside a replayed trace record, if any.
    pub objects: Option<Vec<ObjectObservation>>,
    /// Label carried inside a replayed trace record, if any.
    pub gt_class: Option<EventClass>,
}

/// Source of per-frame anomaly and class scores.
pub enum ScoreProvider {
    /// Recorded detector output, one record per frame in frame order.
    Replay(Box<dyn Iterator<Item = Result<TraceRecord>> + Send>),
    /// Labels used as perfect detector scores.
    GroundTruth,
    /// Labels blurred with Gaussian noise.
    Synthetic { noise: NoiseConfig, rng: ChaCha8Rng },
}

impl ScoreProvider {
    pub fn replay<I>(records: I) -> Self
    where
        I: IntoIterator<Item = Result<TraceRecord>>,
        I::IntoIter: Send + 'static,
    {
        ScoreProvider::Replay(Box::new(records.into_iter()))
    }

    pub fn synthetic(noise: NoiseConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SCORE_STREAM);
        ScoreProvider::Synthetic { noise, rng }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            ScoreProvider::Replay(_) => "replay",
            ScoreProvider::GroundTruth => "ground_truth",
            ScoreProvider::Synthetic { .. } => "synthetic",
        }
    }

    /// Scores for `frame_id`. Frames must be requested in stream order.
    pub fn next(&mut self, frame_id: u64, gt_class: Option<EventClass>) -> Result<Scores> {
        match self {
            ScoreProvider::Replay(records) => {
                let rec = records.next().transpose()?.ok_or_else(|| Error::Misaligned {
                    frame_id,
                    reason: "score trace ended before this frame".into(),
                })?;
                if rec.frame_id != frame_id {
                    return Err(Error::Misaligned {
                        frame_id,
                        reason: format!("score trace has frame {} where this frame was expected", rec.frame_id),
                    });
                }
                let o = normalize_class_scores(&rec.o).map_err(|e| Error::InvalidFrame {
                    frame_id,
                    reason: e.to_string(),
                })?;
                Ok(Scores {
                    s: rec.s,
                    o,
                    objects: rec.objects,
                    gt_class: rec.gt_class,
                })
            }
            ScoreProvider::GroundTruth => {
                let gt = require_gt(frame_id, gt_class)?;
                Ok(Scores {
                    s: if gt.is_normal() { 0.0 } else { 1.0 },
                    o: gt.one_hot(),
                    objects: None,
                    gt_class: None,
                })
            }
            ScoreProvider::Synthetic { noise, rng } => {
                let gt = require_gt(frame_id, gt_class)?;
                Ok(noisy_scores(gt, *noise, rng))
            }
        }
    }
}

fn require_gt(frame_id: u64, gt: Option<EventClass>) -> Result<EventClass> {
    gt.ok_or_else(|| Error::Misaligned {
        frame_id,
        reason: "ground-truth label required by the score provider is missing".into(),
    })
}

pub(crate) fn noisy_scores(gt: EventClass, noise: NoiseConfig, rng: &mut ChaCha8Rng) -> Scores {
    let mut gauss = |sigma: f64| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    };
    let n = gauss(noise.vad_sigma).abs();
    let s = if gt.is_normal() { n } else { 1.0 - n }.clamp(0.0, 1.0);
    let mut o = gt.one_hot();
    for x in &mut o {
        *x = (*x + gauss(noise.oad_sigma)).clamp(0.0, 1.0);
    }
    let o = normalize_class_scores(&o).unwrap_or_else(|_| gt.one_hot());
    Scores {
        s,
        o,
        objects: None,
        gt_class: None,
    }
}

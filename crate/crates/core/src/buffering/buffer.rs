use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassScores, EventClass, FrameRecord, NUM_CLASSES};

/// Fraction of the frame's track ids already seen in the buffer. A frame with
/// no tracked objects counts as fully similar.
pub fn similarity(frame_tracks: &[u64], buffer_tracks: &HashSet<u64>) -> f64 {
    // Duplicate ids within a frame count once.
    let mut uniq: Vec<u64> = frame_tracks.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    if uniq.is_empty() {
        return 1.0;
    }
    let shared = uniq.iter().filter(|t| buffer_tracks.contains(t)).count();
    shared as f64 / uniq.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AnomalyStats {
    pub mean: f64,
    pub max: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub frame_id: u64,
    pub bbox: [f64; 4],
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTrack {
    pub object_class: String,
    pub points: Vec<TrackPoint>,
}

/// Searchable summary of a buffer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BufferTag {
    pub anomaly: AnomalyStats,
    /// Classes with at least one frame scoring above its threshold.
    pub classes: Vec<EventClass>,
    pub objects: BTreeMap<u64, ObjectTrack>,
}

impl BufferTag {
    pub fn has_class(&self, class: EventClass) -> bool {
        self.classes.contains(&class)
    }
}

/// A closed buffer with its per-frame decisions, value and storage cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBuffer {
    /// Creation index, unique and increasing within a run.
    pub index: u64,
    pub frames: Vec<FrameRecord>,
    pub smoothed: Vec<f64>,
    pub decisions: Vec<f64>,
    /// Post-compression cost of each frame.
    pub costs: Vec<f64>,
    pub tags: BufferTag,
    pub value: f64,
    pub cost: f64,
}

impl FrameBuffer {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn first_frame_id(&self) -> u64 {
        self.frames.first().map_or(0, FrameRecord::frame_id)
    }
}

/// Buffer value `(1 + lambda)^k * max_i(v_i d_i)`.
pub fn buffer_value(frames: &[FrameRecord], decisions: &[f64], index: u64, lambda: f64) -> f64 {
    let peak = frames
        .iter()
        .zip(decisions)
        .map(|(f, d)| f.value() * d)
        .fold(0.0, f64::max);
    (1.0 + lambda).powf(index as f64) * peak
}

pub fn finalize_buffer(
    frames: Vec<FrameRecord>,
    smoothed: Vec<f64>,
    decisions: Vec<f64>,
    costs: Vec<f64>,
    index: u64,
    lambda: f64,
    thresholds: &ClassScores,
) -> Result<FrameBuffer> {
    if frames.is_empty() {
        return Err(Error::param("cannot finalize an empty buffer"));
    }
    let n = frames.len();
    if smoothed.len() != n || decisions.len() != n || costs.len() != n {
        return Err(Error::param(format!(
            "buffer {index}: {n} frames but {} smoothed values, {} decisions, {} costs",
            smoothed.len(),
            decisions.len(),
            costs.len()
        )));
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::param(format!("aging factor lambda {lambda} must lie in [0,1)")));
    }
    if decisions.iter().any(|d| !(0.0..=1.0).contains(d)) {
        return Err(Error::param(format!("buffer {index}: decision outside [0,1]")));
    }

    let value = buffer_value(&frames, &decisions, index, lambda);
    let cost = costs.iter().sum();
    let tags = build_tags(&frames, thresholds);
    Ok(FrameBuffer {
        index,
        frames,
        smoothed,
        decisions,
        costs,
        tags,
        value,
        cost,
    })
}

fn build_tags(frames: &[FrameRecord], thresholds: &ClassScores) -> BufferTag {
    let n = frames.len() as f64;
    let mean = frames.iter().map(FrameRecord::anomaly_score).sum::<f64>() / n;
    let max = frames.iter().map(FrameRecord::anomaly_score).fold(0.0, f64::max);
    let variance = frames
        .iter()
        .map(|f| (f.anomaly_score() - mean).powi(2))
        .sum::<f64>()
        / n;

    let mut hit = [false; NUM_CLASSES];
    for f in frames {
        for (i, o) in f.class_scores().iter().enumerate() {
            hit[i] |= *o > thresholds[i];
        }
    }
    let classes = EventClass::all().filter(|c| hit[c.id()]).collect();

    let mut objects: BTreeMap<u64, ObjectTrack> = BTreeMap::new();
    for f in frames {
        for o in f.objects() {
            objects
                .entry(o.track_id)
                .or_insert_with(|| ObjectTrack {
                    object_class: o.object_class.clone(),
                    points: Vec::new(),
                })
                .points
                .push(TrackPoint {
                    frame_id: f.frame_id(),
                    bbox: o.bbox,
                    confidence: o.confidence,
                });
        }
    }

    BufferTag {
        anomaly: AnomalyStats { mean, max, variance },
        classes,
        objects,
    }
}

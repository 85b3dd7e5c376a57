//! Four-stage recording pipeline: capture → value estimation → buffer
//! management → prioritization.
//!
//! [`run_pipeline`] drives the stages either inline on the calling thread or,
//! with `threaded = true`, on one thread per stage joined by bounded
//! single-producer/single-consumer queues. Both drivers share the stage code
//! and produce identical reports.
//!
//! [`prepare`] runs the first three stages once so the storage stage can be
//! replayed under several policies and capacities ([`PreparedRun::retain`]).

mod config;
mod stages;

pub use config::{PixelMode, RunConfig, ScoreSource};

use std::collections::BTreeMap;
use std::sync::mpsc::sync_channel;

use serde::{Deserialize, Serialize};

use crate::buffering::AnomalyStats;
use crate::error::{Error, Result};
use crate::ingest::CapturedFrame;
use crate::par::{self, Execution};
use crate::report::GroupStats;
use crate::storage::{Policy, StorageState};
use crate::types::{normalize_cost, EventClass, ObjectObservation};
use crate::value::{ScoreProvider, SyntheticStream};
use stages::{Buffering, Capture, ProcessedBuffer, Storage, Valuation};

pub const REPORT_SCHEMA: &str = "edr.report/1";
/// Costs are normalized by the stream's reference frame size.
pub const COST_UNIT: &str = "normalized";

pub type FrameIter = Box<dyn Iterator<Item = Result<CapturedFrame>> + Send>;

/// Everything a run consumes besides its configuration.
pub struct StreamInputs {
    pub frames: FrameIter,
    pub scores: ScoreProvider,
    /// Separate label trace; labels may instead ride on replayed scores.
    pub labels: Option<BTreeMap<u64, EventClass>>,
    /// Separate object trace; objects may instead ride on replayed scores.
    pub objects: Option<BTreeMap<u64, Vec<ObjectObservation>>>,
}

impl StreamInputs {
    /// Inputs backed by an in-memory synthetic stream. `scores` picks the
    /// provider: ground truth, fresh synthetic noise seeded with `seed`, or
    /// the stream's own embedded trace. Replay paths are not accepted here.
    pub fn from_synthetic(stream: &SyntheticStream, scores: &ScoreSource, noise: crate::value::NoiseConfig, seed: u64) -> Result<Self> {
        let reference = stream.reference_max_bytes;
        let frames = stream
            .frames
            .iter()
            .map(|f| {
                Ok(CapturedFrame {
                    frame_id: f.frame_id,
                    raw_bytes: f.raw_bytes,
                    raw_cost: normalize_cost(f.raw_bytes, reference)?,
                    reference_max_bytes: reference,
                    image: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let provider = match scores {
            ScoreSource::GroundTruth => ScoreProvider::GroundTruth,
            ScoreSource::Synthetic => ScoreProvider::synthetic(noise, seed),
            ScoreSource::Trace => ScoreProvider::replay(stream.scores.clone().into_iter().map(Ok)),
            ScoreSource::Replay(p) => {
                return Err(Error::param(format!(
                    "replay source {} cannot drive an in-memory stream",
                    p.display()
                )))
            }
        };
        Ok(StreamInputs {
            frames: Box::new(frames.into_iter().map(Ok)),
            scores: provider,
            labels: Some(stream.labels().collect()),
            objects: Some(stream.frames.iter().map(|f| (f.frame_id, f.objects.clone())).collect()),
        })
    }
}

/// Per-frame ledger row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub frame_id: u64,
    /// Creation index of the buffer holding this frame.
    pub buffer: u64,
    pub gt_class: Option<EventClass>,
    pub s: f64,
    /// Highest-scoring class and its normalized score.
    pub top_class: EventClass,
    pub top_score: f64,
    pub v: f64,
    pub v_hat: f64,
    pub d: f64,
    /// Raw cost before compression.
    pub c: f64,
    /// Cost after compression.
    pub c_hat: f64,
    /// Codec quality in real-pixel mode.
    pub quality: Option<u8>,
    /// Whether the frame's buffer is in the store at end of run.
    pub stored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fate {
    Stored,
    Evicted,
    Rejected,
}

/// Per-buffer ledger row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferRow {
    pub k: u64,
    pub first_frame: u64,
    pub frames: usize,
    pub value: f64,
    pub cost: f64,
    pub anomaly: AnomalyStats,
    pub classes: Vec<EventClass>,
    pub tracks: Vec<u64>,
    pub fate: Fate,
    /// Buffer whose arrival evicted this one.
    pub evicted_by: Option<u64>,
}

/// Totals derived from the ledgers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub frames: usize,
    pub buffers: usize,
    pub stored_buffers: usize,
    pub evicted_buffers: usize,
    pub rejected_buffers: usize,
    pub stored_cost: f64,
    /// Frames carrying a ground-truth label.
    pub labeled_frames: usize,
    pub normal: GroupStats,
    pub anomaly: GroupStats,
    /// One entry per event class, in id order.
    pub by_class: Vec<GroupStats>,
}

impl Aggregates {
    pub fn from_ledgers(frames: &[FrameRow], buffers: &[BufferRow], stored_cost: f64) -> Self {
        let count = |f: Fate| buffers.iter().filter(|b| b.fate == f).count();
        let labeled = || frames.iter().filter(|f| f.gt_class.is_some());
        Aggregates {
            frames: frames.len(),
            buffers: buffers.len(),
            stored_buffers: count(Fate::Stored),
            evicted_buffers: count(Fate::Evicted),
            rejected_buffers: count(Fate::Rejected),
            stored_cost,
            labeled_frames: labeled().count(),
            normal: GroupStats::from_rows("normal", labeled().filter(|f| f.gt_class.is_some_and(|c| c.is_normal()))),
            anomaly: GroupStats::from_rows("anomaly", labeled().filter(|f| f.gt_class.is_some_and(|c| c.is_anomaly()))),
            by_class: EventClass::all()
                .map(|c| GroupStats::from_rows(c.name(), frames.iter().filter(|f| f.gt_class == Some(c))))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub policy: Policy,
    pub capacity: Option<f64>,
    pub cost_unit: String,
    pub frames: Vec<FrameRow>,
    pub buffers: Vec<BufferRow>,
    pub aggregates: Aggregates,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: RunReport = serde_json::from_str(text)?;
        if r.schema != REPORT_SCHEMA {
            return Err(Error::Report(format!("report schema '{}', expected '{REPORT_SCHEMA}'", r.schema)));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub store: StorageState,
}

/// Run all four stages over `inputs`.
pub fn run_pipeline(config: &RunConfig, inputs: StreamInputs) -> Result<RunOutput> {
    config.validate()?;
    let storage = Storage::new(config.policy, config.capacity)?;
    if config.threaded {
        run_threaded(config, inputs, storage)
    } else {
        let mut storage = storage;
        for_each_buffer(config, inputs, |b| storage.accept(b))?;
        Ok(storage.finish())
    }
}

fn for_each_buffer(config: &RunConfig, inputs: StreamInputs, mut sink: impl FnMut(ProcessedBuffer) -> Result<()>) -> Result<()> {
    let capture = Capture::new(inputs.frames, inputs.labels, inputs.objects);
    let mut valuation = Valuation::new(inputs.scores, config)?;
    let mut buffering = Buffering::new(config);
    for frame in capture {
        if let Some(b) = buffering.push(valuation.process(frame?)?)? {
            sink(b)?;
        }
    }
    if let Some(b) = buffering.finish()? {
        sink(b)?;
    }
    Ok(())
}

fn run_threaded(config: &RunConfig, inputs: StreamInputs, mut storage: Storage) -> Result<RunOutput> {
    let depth = config.queue_depth;
    let capture = Capture::new(inputs.frames, inputs.labels, inputs.objects);
    let mut valuation = Valuation::new(inputs.scores, config)?;
    let mut buffering = Buffering::new(config);

    std::thread::scope(|scope| {
        let (frame_tx, frame_rx) = sync_channel(depth);
        let (valued_tx, valued_rx) = sync_channel(depth);
        let (buffer_tx, buffer_rx) = sync_channel(depth);

        scope.spawn(move || {
            for item in capture {
                if frame_tx.send(item).is_err() {
                    break;
                }
            }
        });
        scope.spawn(move || {
            for item in frame_rx {
                let out = item.and_then(|f| valuation.process(f));
                let failed = out.is_err();
                if valued_tx.send(out).is_err() || failed {
                    break;
                }
            }
        });
        scope.spawn(move || {
            for item in valued_rx {
                match item.and_then(|f| buffering.push(f)) {
                    Ok(None) => {}
                    Ok(Some(b)) => {
                        if buffer_tx.send(Ok(b)).is_err() {
                            return;
                        }
                    }
                    Err(e) => {
                        let _ = buffer_tx.send(Err(e));
                        return;
                    }
                }
            }
            if let Some(b) = buffering.finish().transpose() {
                let _ = buffer_tx.send(b);
            }
        });

        for item in buffer_rx {
            storage.accept(item?)?;
        }
        Ok(storage.finish())
    })
}

/// Output of the first three stages, ready for storage replay.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    buffers: Vec<ProcessedBuffer>,
}

/// Run capture, valuation and buffering once, keeping every finalized buffer.
pub fn prepare(config: &RunConfig, inputs: StreamInputs) -> Result<PreparedRun> {
    config.validate()?;
    let mut buffers = Vec::new();
    for_each_buffer(config, inputs, |b| {
        buffers.push(b);
        Ok(())
    })?;
    Ok(PreparedRun { buffers })
}

impl PreparedRun {
    pub fn buffer_count(&self) -> usize {
        self.buffers.len()
    }

    /// Total compressed cost of every buffer, i.e. the store size needed to
    /// keep everything.
    pub fn total_cost(&self) -> f64 {
        self.buffers.iter().map(|b| b.stored.buffer.cost).sum()
    }

    /// Storage stage alone under the given policy and capacity.
    pub fn retain(&self, policy: Policy, capacity: Option<f64>) -> Result<RunOutput> {
        let mut storage = Storage::new(policy, capacity)?;
        for b in &self.buffers {
            storage.accept(b.clone())?;
        }
        Ok(storage.finish())
    }

    /// [`retain`](Self::retain) over several settings, in parallel when
    /// `exec` allows. Results follow the order of `settings`.
    pub fn retain_many(&self, settings: &[(Policy, Option<f64>)], exec: Execution) -> Result<Vec<RunOutput>> {
        par::try_map(exec, settings, |(p, m)| self.retain(*p, *m))
    }
}

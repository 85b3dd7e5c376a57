//! The four pipeline stages. Each is a plain state machine so the
//! synchronous and threaded drivers share every line of processing logic.

use std::collections::{BTreeMap, HashMap};

use image::RgbImage;

use super::{Aggregates, BufferRow, Fate, FrameIter, FrameRow, RunConfig, RunOutput, RunReport, REPORT_SCHEMA};
use crate::buffering::{finalize_buffer, lbo_decide, smooth_values, Segmenter};
use crate::codec::{encode_frame, modeled_cost};
use crate::error::{Error, Result};
use crate::pipeline::PixelMode;
use crate::storage::{EvictionReason, Policy, StorageState, StoredBuffer};
use crate::types::{ClassScores, EventClass, FrameRecord, ObjectObservation};
use crate::value::{hybrid_value, ScoreProvider};
use crate::ingest::CapturedFrame;
use crate::par;

pub(crate) struct StreamFrame {
    captured: CapturedFrame,
    gt_class: Option<EventClass>,
    objects: Option<Vec<ObjectObservation>>,
}

/// Stage 1: joins frame payloads with labels and object observations.
pub(crate) struct Capture {
    frames: FrameIter,
    labels: Option<BTreeMap<u64, EventClass>>,
    objects: Option<BTreeMap<u64, Vec<ObjectObservation>>>,
    last: Option<u64>,
    failed: bool,
}

impl Capture {
    pub(crate) fn new(
        frames: FrameIter,
        labels: Option<BTreeMap<u64, EventClass>>,
        objects: Option<BTreeMap<u64, Vec<ObjectObservation>>>,
    ) -> Self {
        Capture {
            frames,
            labels,
            objects,
            last: None,
            failed: false,
        }
    }

    fn join(&mut self, captured: CapturedFrame) -> Result<StreamFrame> {
        let id = captured.frame_id;
        if self.last.is_some_and(|l| id <= l) {
            return Err(Error::Misaligned {
                frame_id: id,
                reason: format!("frame ids must increase, previous was {}", self.last.unwrap_or(0)),
            });
        }
        self.last = Some(id);
        let gt_class = match &mut self.labels {
            Some(m) => Some(m.remove(&id).ok_or_else(|| Error::Misaligned {
                frame_id: id,
                reason: "no ground-truth label for this frame".into(),
            })?),
            None => None,
        };
        let objects = match &mut self.objects {
            Some(m) => Some(m.remove(&id).ok_or_else(|| Error::Misaligned {
                frame_id: id,
                reason: "no object record for this frame".into(),
            })?),
            None => None,
        };
        Ok(StreamFrame {
            captured,
            gt_class,
            objects,
        })
    }
}

impl Iterator for Capture {
    type Item = Result<StreamFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let out = match self.frames.next()? {
            Ok(f) => self.join(f),
            Err(e) => Err(e),
        };
        self.failed = out.is_err();
        Some(out)
    }
}

pub(crate) struct ValuedFrame {
    record: FrameRecord,
    image: Option<RgbImage>,
    reference_max_bytes: u64,
}

/// Stage 2: detector scores and hybrid frame value.
pub(crate) struct Valuation {
    provider: ScoreProvider,
    params: crate::value::ValueParams,
    weights: ClassScores,
}

impl Valuation {
    pub(crate) fn new(provider: ScoreProvider, config: &RunConfig) -> Result<Self> {
        Ok(Valuation {
            provider,
            params: config.value,
            weights: config.class_model()?.info_measures,
        })
    }

    pub(crate) fn process(&mut self, frame: StreamFrame) -> Result<ValuedFrame> {
        let StreamFrame {
            captured,
            gt_class,
            objects,
        } = frame;
        let id = captured.frame_id;
        let scores = self.provider.next(id, gt_class)?;
        let gt_class = gt_class.or(scores.gt_class);
        let objects = objects.or(scores.objects).unwrap_or_default();
        let v = hybrid_value(scores.s, &scores.o, self.params, &self.weights);
        let record = FrameRecord::new(id, captured.raw_cost, scores.s, scores.o, v, objects, gt_class)?;
        Ok(ValuedFrame {
            record,
            image: captured.image,
            reference_max_bytes: captured.reference_max_bytes,
        })
    }
}

/// A finalized buffer on its way to storage.
#[derive(Debug, Clone)]
pub(crate) struct ProcessedBuffer {
    pub(crate) stored: StoredBuffer,
    pub(crate) qualities: Vec<Option<u8>>,
}

/// Stage 3: DMM segmentation, smoothing, LBO decisions, encoding and
/// finalization.
pub(crate) struct Buffering {
    segmenter: Segmenter,
    open: Vec<(Option<RgbImage>, u64)>,
    next_index: u64,
    config: RunConfig,
}

impl Buffering {
    pub(crate) fn new(config: &RunConfig) -> Self {
        Buffering {
            segmenter: Segmenter::new(config.dmm),
            open: Vec::new(),
            next_index: 0,
            config: config.clone(),
        }
    }

    pub(crate) fn push(&mut self, frame: ValuedFrame) -> Result<Option<ProcessedBuffer>> {
        let closed = self.segmenter.push(frame.record);
        let extras = closed.as_ref().map(|_| std::mem::take(&mut self.open));
        self.open.push((frame.image, frame.reference_max_bytes));
        match (closed, extras) {
            (Some(frames), Some(extras)) => self.build(frames, extras).map(Some),
            _ => Ok(None),
        }
    }

    pub(crate) fn finish(&mut self) -> Result<Option<ProcessedBuffer>> {
        match self.segmenter.finish() {
            Some(frames) => {
                let extras = std::mem::take(&mut self.open);
                self.build(frames, extras).map(Some)
            }
            None => Ok(None),
        }
    }

    fn build(&mut self, frames: Vec<FrameRecord>, extras: Vec<(Option<RgbImage>, u64)>) -> Result<ProcessedBuffer> {
        let index = self.next_index;
        self.next_index += 1;
        let cfg = &self.config;
        let values: Vec<f64> = frames.iter().map(FrameRecord::value).collect();
        let smoothed = smooth_values(&values, cfg.sigma);

        // Modeled decisions are too cheap to be worth fanning out.
        let exec = match cfg.pixels {
            PixelMode::Modeled => par::Execution::Sequential,
            PixelMode::Real => cfg.execution,
        };
        let per_frame = par::try_map_indexed(exec, frames.len(), |i| -> Result<_> {
            let f = &frames[i];
            let d = lbo_decide(f.raw_cost(), smoothed[i], &cfg.lbo, &cfg.compression);
            match cfg.pixels {
                PixelMode::Modeled => Ok((d, modeled_cost(f.raw_cost(), d, &cfg.compression), Vec::new(), None)),
                PixelMode::Real => {
                    let (image, reference) = &extras[i];
                    let image = image.as_ref().ok_or_else(|| Error::Codec {
                        frame_id: f.frame_id(),
                        reason: "real-pixel mode needs image frames".into(),
                    })?;
                    let enc = encode_frame(image, d, f.frame_id(), &cfg.encoder, *reference)?;
                    Ok((d, enc.cost, enc.payload, enc.quality))
                }
            }
        })?;

        let mut decisions = Vec::with_capacity(frames.len());
        let mut costs = Vec::with_capacity(frames.len());
        let mut payloads = Vec::new();
        let mut qualities = Vec::with_capacity(frames.len());
        for (d, c, payload, q) in per_frame {
            decisions.push(d);
            costs.push(c);
            qualities.push(q);
            if cfg.pixels == PixelMode::Real {
                payloads.push(payload);
            }
        }
        let buffer = finalize_buffer(frames, smoothed, decisions, costs, index, cfg.lambda, &cfg.thresholds)?;
        Ok(ProcessedBuffer {
            stored: StoredBuffer { buffer, payloads },
            qualities,
        })
    }
}

/// Stage 4: storage insertion and ledger bookkeeping.
pub(crate) struct Storage {
    state: StorageState,
    frames: Vec<FrameRow>,
    buffers: Vec<BufferRow>,
    oversize: Vec<u64>,
}

impl Storage {
    pub(crate) fn new(policy: Policy, capacity: Option<f64>) -> Result<Self> {
        Ok(Storage {
            state: StorageState::new(policy, capacity)?,
            frames: Vec::new(),
            buffers: Vec::new(),
            oversize: Vec::new(),
        })
    }

    pub(crate) fn accept(&mut self, pb: ProcessedBuffer) -> Result<()> {
        let b = &pb.stored.buffer;
        for (i, f) in b.frames.iter().enumerate() {
            let (top_class, top_score) = f.top_class();
            self.frames.push(FrameRow {
                frame_id: f.frame_id(),
                buffer: b.index,
                gt_class: f.gt_class(),
                s: f.anomaly_score(),
                top_class,
                top_score,
                v: f.value(),
                v_hat: b.smoothed[i],
                d: b.decisions[i],
                c: f.raw_cost(),
                c_hat: b.costs[i],
                quality: pb.qualities[i],
                stored: false,
            });
        }
        self.buffers.push(BufferRow {
            k: b.index,
            first_frame: b.first_frame_id(),
            frames: b.len(),
            value: b.value,
            cost: b.cost,
            anomaly: b.tags.anomaly,
            classes: b.tags.classes.clone(),
            tracks: b.tags.objects.keys().copied().collect(),
            fate: Fate::Stored,
            evicted_by: None,
        });
        if self.state.capacity().is_some_and(|m| b.cost > m) {
            self.oversize.push(b.index);
            return Ok(());
        }
        self.state.insert_buffer(pb.stored)?;
        Ok(())
    }

    pub(crate) fn finish(mut self) -> RunOutput {
        let mut fates: HashMap<u64, (Fate, Option<u64>)> = HashMap::new();
        for e in self.state.eviction_log() {
            let fate = match e.reason {
                EvictionReason::Displaced { by } | EvictionReason::Overwritten { by } => (Fate::Evicted, Some(by)),
                EvictionReason::Rejected => (Fate::Rejected, None),
            };
            fates.insert(e.buffer_id, fate);
        }
        for id in &self.oversize {
            fates.insert(*id, (Fate::Rejected, None));
        }
        for row in &mut self.buffers {
            if !self.state.contains(row.k) {
                let (fate, by) = fates.get(&row.k).copied().unwrap_or((Fate::Rejected, None));
                row.fate = fate;
                row.evicted_by = by;
            }
        }
        let stored: std::collections::HashSet<u64> =
            self.buffers.iter().filter(|b| b.fate == Fate::Stored).map(|b| b.k).collect();
        for f in &mut self.frames {
            f.stored = stored.contains(&f.buffer);
        }
        let aggregates = Aggregates::from_ledgers(&self.frames, &self.buffers, self.state.total_cost());
        RunOutput {
            report: RunReport {
                schema: REPORT_SCHEMA.to_string(),
                policy: self.state.policy(),
                capacity: self.state.capacity(),
                cost_unit: super::COST_UNIT.to_string(),
                frames: self.frames,
                buffers: self.buffers,
                aggregates,
            },
            store: self.state,
        }
    }
}

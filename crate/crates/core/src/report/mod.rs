//! Evaluation tables derived from [`RunReport`] ledgers: compression
//! statistics by group, priority-vs-FIFO retention, per-class decision
//! histograms and (α, β) value-method sweeps.
//!
//! Every number here is a pure function of the frame ledger, so the tables
//! can be re-derived from a saved report at any time.

mod emit;

pub use emit::{RatioRow, Tables};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::pipeline::{run_pipeline, FrameRow, RunConfig, RunReport, StreamInputs};
use crate::storage::Policy;
use crate::types::EventClass;
use crate::value::ValueParams;

pub const DEFAULT_BINS: usize = 20;

/// VAD-only, OAD-only and four hybrid weightings.
pub const DEFAULT_SWEEP_GRID: [(f64, f64); 6] = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.9, 0.1), (0.5, 0.5), (0.1, 0.9)];

/// Mean, median (midpoint of the two central values for even counts) and
/// population standard deviation. All zero for an empty slice.
///
/// Moments are taken about the first element, which keeps them exact for
/// constant data and well conditioned when values cluster.
pub fn summarize(xs: &[f64]) -> (f64, f64, f64) {
    let Some(&x0) = xs.first() else {
        return (0.0, 0.0, 0.0);
    };
    let n = xs.len() as f64;
    let shift = xs.iter().map(|x| x - x0).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - x0 - shift).powi(2)).sum::<f64>() / n;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    (x0 + shift, median, var.sqrt())
}

/// Size and decision statistics of one frame group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub frames: usize,
    pub raw_cost: f64,
    /// After compression, whether or not the buffer was kept.
    pub compressed_cost: f64,
    /// After compression, counting only frames of stored buffers.
    pub stored_cost: f64,
    pub d_avg: f64,
    pub d_med: f64,
    pub d_std: f64,
}

impl GroupStats {
    pub fn from_rows<'a>(group: &str, rows: impl IntoIterator<Item = &'a FrameRow>) -> Self {
        let mut frames = 0;
        let (mut raw, mut compressed, mut stored) = (0.0, 0.0, 0.0);
        let mut ds = Vec::new();
        for r in rows {
            frames += 1;
            raw += r.c;
            compressed += r.c_hat;
            if r.stored {
                stored += r.c_hat;
            }
            ds.push(r.d);
        }
        let (d_avg, d_med, d_std) = summarize(&ds);
        GroupStats {
            group: group.to_string(),
            frames,
            raw_cost: raw,
            compressed_cost: compressed,
            stored_cost: stored,
            d_avg,
            d_med,
            d_std,
        }
    }
}

fn require_labels(run: &RunReport) -> Result<()> {
    match run.frames.iter().find(|f| f.gt_class.is_none()) {
        Some(f) => Err(Error::Report(format!("frame {} has no ground-truth label", f.frame_id))),
        None => Ok(()),
    }
}

/// `a / b`, with 0 when `a` is 0 and `None` when only `b` is.
fn ratio(a: f64, b: f64) -> Option<f64> {
    if a == 0.0 {
        Some(0.0)
    } else if b == 0.0 {
        None
    } else {
        Some(a / b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub cost_unit: String,
    pub normal: GroupStats,
    pub anomaly: GroupStats,
    /// Anomalous-to-normal raw cost.
    pub raw_ratio: Option<f64>,
    /// Anomalous-to-normal stored cost.
    pub stored_ratio: Option<f64>,
    /// `stored_ratio / raw_ratio`.
    pub amplification: Option<f64>,
}

pub fn compression_report(run: &RunReport) -> Result<CompressionReport> {
    require_labels(run)?;
    let is_anomaly = |f: &&FrameRow| f.gt_class.is_some_and(|c| c.is_anomaly());
    let normal = GroupStats::from_rows("normal", run.frames.iter().filter(|f| !is_anomaly(f)));
    let anomaly = GroupStats::from_rows("anomaly", run.frames.iter().filter(is_anomaly));
    let raw_ratio = ratio(anomaly.raw_cost, normal.raw_cost);
    let stored_ratio = ratio(anomaly.stored_cost, normal.stored_cost);
    let amplification = match (stored_ratio, raw_ratio) {
        (Some(s), Some(r)) => ratio(s, r),
        _ => None,
    };
    Ok(CompressionReport {
        cost_unit: run.cost_unit.clone(),
        normal,
        anomaly,
        raw_ratio,
        stored_ratio,
        amplification,
    })
}

/// Retained frame counts of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionCounts {
    pub normal: usize,
    pub anomaly: usize,
    /// Anomalous share of retained frames.
    pub anomaly_fraction: f64,
    /// Anomalous-to-normal retained frames.
    pub anomaly_to_normal: Option<f64>,
}

impl RetentionCounts {
    pub fn from_report(run: &RunReport) -> Result<Self> {
        require_labels(run)?;
        let (mut normal, mut anomaly) = (0usize, 0usize);
        for f in run.frames.iter().filter(|f| f.stored) {
            if f.gt_class.is_some_and(|c| c.is_anomaly()) {
                anomaly += 1;
            } else {
                normal += 1;
            }
        }
        let total = normal + anomaly;
        Ok(RetentionCounts {
            normal,
            anomaly,
            anomaly_fraction: if total == 0 { 0.0 } else { anomaly as f64 / total as f64 },
            anomaly_to_normal: ratio(anomaly as f64, normal as f64),
        })
    }
}

/// One memory limit of the retention comparison, flattened for CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionRow {
    pub limit: f64,
    pub priority_normal: usize,
    pub priority_anomaly: usize,
    pub priority_fraction: f64,
    pub priority_ratio: Option<f64>,
    pub fifo_normal: usize,
    pub fifo_anomaly: usize,
    pub fifo_fraction: f64,
    pub fifo_ratio: Option<f64>,
    /// Policy retaining more anomalous frames; `None` on a tie.
    pub better: Option<Policy>,
}

fn same_stream(a: &RunReport, b: &RunReport) -> bool {
    a.frames.len() == b.frames.len()
        && a.frames
            .iter()
            .zip(&b.frames)
            .all(|(x, y)| x.frame_id == y.frame_id && x.gt_class == y.gt_class)
}

pub fn retention_report(priority: &[RunReport], fifo: &[RunReport], limits: &[f64]) -> Result<Vec<RetentionRow>> {
    if priority.len() != limits.len() || fifo.len() != limits.len() {
        return Err(Error::Report(format!(
            "{} priority runs and {} FIFO runs for {} limits",
            priority.len(),
            fifo.len(),
            limits.len()
        )));
    }
    let mut rows = Vec::with_capacity(limits.len());
    for ((p, f), &limit) in priority.iter().zip(fifo).zip(limits) {
        if !same_stream(p, f) || !same_stream(p, &priority[0]) {
            return Err(Error::Report(format!("runs at limit {limit} do not share one input stream")));
        }
        let pc = RetentionCounts::from_report(p)?;
        let fc = RetentionCounts::from_report(f)?;
        rows.push(RetentionRow {
            limit,
            priority_normal: pc.normal,
            priority_anomaly: pc.anomaly,
            priority_fraction: pc.anomaly_fraction,
            priority_ratio: pc.anomaly_to_normal,
            fifo_normal: fc.normal,
            fifo_anomaly: fc.anomaly,
            fifo_fraction: fc.anomaly_fraction,
            fifo_ratio: fc.anomaly_to_normal,
            better: match pc.anomaly.cmp(&fc.anomaly) {
                std::cmp::Ordering::Greater => Some(Policy::Priority),
                std::cmp::Ordering::Less => Some(Policy::Fifo),
                std::cmp::Ordering::Equal => None,
            },
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub class: EventClass,
    /// `bins + 1` uniform edges over [0, 1].
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Bin of `d` among `bins` uniform bins; `d = 1` lands in the top bin.
pub fn bin_index(d: f64, bins: usize) -> usize {
    ((d * bins as f64).floor() as usize).min(bins - 1)
}

/// Decision histograms for the 16 anomaly classes.
pub fn per_class_histograms(run: &RunReport, bins: usize) -> Result<Vec<ClassHistogram>> {
    if bins == 0 {
        return Err(Error::param("histograms need at least one bin"));
    }
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut hists: Vec<ClassHistogram> = EventClass::anomalies()
        .map(|class| ClassHistogram {
            class,
            edges: edges.clone(),
            counts: vec![0; bins],
        })
        .collect();
    for f in &run.frames {
        if let Some(c) = f.gt_class.filter(|c| c.is_anomaly()) {
            hists[c.id() - 1].counts[bin_index(f.d, bins)] += 1;
        }
    }
    Ok(hists)
}

/// One (α, β) combination of a sweep with its full run.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub alpha: f64,
    pub beta: f64,
    pub report: RunReport,
}

/// Sweep statistics for one group, flattened for CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub group: String,
    pub frames: usize,
    pub d_avg: f64,
    pub d_med: f64,
    pub d_std: f64,
}

/// Runs the pipeline once per `(alpha, beta)` on identical inputs. `inputs`
/// must yield the same stream on every call.
pub fn value_method_sweep<F>(base: &RunConfig, grid: &[(f64, f64)], inputs: F, exec: Execution) -> Result<Vec<SweepRun>>
where
    F: Fn() -> Result<StreamInputs> + Sync + Send,
{
    if grid.is_empty() {
        return Err(Error::param("sweep grid is empty"));
    }
    par::try_map(exec, grid, |&(alpha, beta)| {
        let config = RunConfig {
            value: ValueParams::new(alpha, beta)?,
            execution: Execution::Sequential,
            threaded: false,
            ..base.clone()
        };
        let report = run_pipeline(&config, inputs()?)?.report;
        Ok(SweepRun { alpha, beta, report })
    })
}

/// Normal and anomaly rows for every sweep run, in grid order.
pub fn sweep_rows(runs: &[SweepRun]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(2 * runs.len());
    for r in runs {
        let c = compression_report(&r.report)?;
        for g in [c.normal, c.anomaly] {
            rows.push(SweepRow {
                alpha: r.alpha,
                beta: r.beta,
                group: g.group,
                frames: g.frames,
                d_avg: g.d_avg,
                d_med: g.d_med,
                d_std: g.d_std,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests;

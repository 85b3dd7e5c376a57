//! Value-driven event data recorder.
//!
//! Frames from a driving-video stream are scored (anomaly score plus a
//! per-class confidence vector), grouped into buffers by a deterministic
//! Mealy machine, compressed with per-frame qualities chosen by a convex
//! rate/value tradeoff, and retained under a storage budget by a min-heap
//! that evicts the lowest-value buffers first.
//!
//! The crate works in two modes:
//!
//! * **modeled** – frames carry only a normalized raw cost and compression is
//!   simulated through the quality→ratio model [`codec::CompressionModel`];
//! * **real pixels** – frames carry RGB images which are JPEG-encoded at the
//!   chosen quality.
//!
//! Batch workloads (parameter sweeps, policy comparisons, per-buffer encoding)
//! go through [`par`], which uses rayon when the `parallel` feature is on and
//! falls back to plain iterators otherwise.

pub mod buffering;
pub mod codec;
pub mod error;
pub mod ingest;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod storage;
pub mod types;
pub mod value;

pub use error::{Error, Result};
pub use types::{ClassModel, EventClass, FrameRecord, ObjectObservation, NUM_CLASSES};

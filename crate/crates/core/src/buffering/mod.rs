//! Buffer management: stream segmentation, value smoothing, per-frame quality
//! selection and buffer finalization.

mod buffer;
mod dmm;
mod lbo;
mod smooth;

pub use buffer::{finalize_buffer, similarity, AnomalyStats, BufferTag, FrameBuffer, ObjectTrack, TrackPoint};
pub use dmm::{DmmAction, DmmMode, DmmParams, DmmState, Segmenter};
pub use lbo::{lbo_decide, lbo_objective, LboParams};
pub use smooth::{gaussian_kernel, smooth_values};

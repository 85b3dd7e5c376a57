//! Deterministic Mealy machine deciding where one buffer ends and the next
//! begins.
//!
//! A filling buffer is closed when the incoming frame would exceed the length
//! cap, when its track similarity to the buffer drops below the floor, or when
//! its value departs from the buffer's running mean by more than the jump
//! threshold. The triggering frame opens the next buffer.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::buffer::similarity;
use crate::error::{Error, Result};
use crate::types::FrameRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmmParams {
    pub max_len: usize,
    pub similarity_floor: f64,
    pub value_jump: f64,
}

impl Default for DmmParams {
    fn default() -> Self {
        DmmParams {
            max_len: 100,
            similarity_floor: 0.2,
            value_jump: 0.3,
        }
    }
}

impl DmmParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::param("max_len must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.similarity_floor) || !(0.0..=1.0).contains(&self.value_jump) {
            return Err(Error::param("similarity_floor and value_jump must lie in [0,1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmmMode {
    Empty,
    Filling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmmAction {
    Append,
    TerminateThenStart,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DmmState {
    len: usize,
    value_sum: f64,
    tracks: HashSet<u64>,
}

impl DmmState {
    pub fn mode(&self) -> DmmMode {
        if self.len == 0 {
            DmmMode::Empty
        } else {
            DmmMode::Filling
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Mean raw value of the frames in the open buffer.
    pub fn mean_value(&self) -> f64 {
        if self.len == 0 {
            0.0
        } else {
            self.value_sum / self.len as f64
        }
    }

    pub fn similarity(&self, frame_tracks: &[u64]) -> f64 {
        similarity(frame_tracks, &self.tracks)
    }

    pub fn step(&mut self, params: &DmmParams, value: f64, xi: f64, frame_tracks: &[u64]) -> DmmAction {
        let action = if self.mode() == DmmMode::Filling
            && (self.len >= params.max_len
                || xi < params.similarity_floor
                || (value - self.mean_value()).abs() > params.value_jump)
        {
            DmmAction::TerminateThenStart
        } else {
            DmmAction::Append
        };
        if action == DmmAction::TerminateThenStart {
            self.reset();
        }
        self.len += 1;
        self.value_sum += value;
        self.tracks.extend(frame_tracks.iter().copied());
        action
    }

    pub fn reset(&mut self) {
        self.len = 0;
        self.value_sum = 0.0;
        self.tracks.clear();
    }
}

/// Drives a [`DmmState`] over a frame stream and collects buffers.
#[derive(Debug, Default)]
pub struct Segmenter {
    params: DmmParams,
    state: DmmState,
    open: Vec<FrameRecord>,
    track_scratch: Vec<u64>,
}

impl Segmenter {
    pub fn new(params: DmmParams) -> Self {
        Segmenter {
            params,
            ..Default::default()
        }
    }

    /// Feed one frame; returns the frames of a buffer closed by this frame.
    pub fn push(&mut self, frame: FrameRecord) -> Option<Vec<FrameRecord>> {
        self.track_scratch.clear();
        self.track_scratch.extend(frame.track_ids());
        let xi = self.state.similarity(&self.track_scratch);
        let action = self.state.step(&self.params, frame.value(), xi, &self.track_scratch);
        let closed = match action {
            DmmAction::TerminateThenStart => Some(std::mem::take(&mut self.open)),
            DmmAction::Append => None,
        };
        self.open.push(frame);
        closed
    }

    /// Close the open buffer at end of stream.
    pub fn finish(&mut self) -> Option<Vec<FrameRecord>> {
        self.state.reset();
        (!self.open.is_empty()).then(|| std::mem::take(&mut self.open))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{EventClass, ObjectObservation};
    use proptest::prelude::*;

    fn frame(id: u64, v: f64, tracks: &[u64]) -> FrameRecord {
        let objects = tracks
            .iter()
            .map(|&t| ObjectObservation::new(t, "car", [0.1, 0.1, 0.2, 0.2], 0.9).unwrap())
            .collect();
        FrameRecord::new(id, 0.5, 0.0, EventClass::NORMAL.one_hot(), v, objects, None).unwrap()
    }

    #[test]
    fn capacity_rule() {
        let p = DmmParams {
            max_len: 3,
            ..DmmParams::default()
        };
        let mut s = DmmState::default();
        for _ in 0..3 {
            assert_eq!(s.step(&p, 0.1, 1.0, &[]), DmmAction::Append);
        }
        assert_eq!(s.len(), 3);
        assert_eq!(s.step(&p, 0.1, 1.0, &[]), DmmAction::TerminateThenStart);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn no_trigger_appends() {
        let p = DmmParams::default();
        let mut s = DmmState::default();
        assert_eq!(s.mode(), DmmMode::Empty);
        s.step(&p, 0.4, 1.0, &[1]);
        assert_eq!(s.mode(), DmmMode::Filling);
        assert_eq!(s.step(&p, 0.4, 1.0, &[1]), DmmAction::Append);
    }

    #[test]
    fn value_jump_terminates() {
        let p = DmmParams {
            value_jump: 0.2,
            ..DmmParams::default()
        };
        let mut s = DmmState::default();
        s.step(&p, 0.1, 1.0, &[]);
        assert!((s.mean_value() - 0.1).abs() < 1e-15);
        assert_eq!(s.step(&p, 0.5, 1.0, &[]), DmmAction::TerminateThenStart);
        assert_eq!(s.mean_value(), 0.5);
    }

    #[test]
    fn similarity_floor_terminates() {
        let p = DmmParams::default();
        let mut s = DmmState::default();
        s.step(&p, 0.0, 1.0, &[1, 2]);
        let xi = s.similarity(&[7, 8, 9, 1]);
        assert_eq!(xi, 0.25);
        assert_eq!(s.step(&p, 0.0, xi, &[7, 8, 9, 1]), DmmAction::Append);
        let xi = s.similarity(&[20, 21, 22, 23, 24, 25]);
        assert_eq!(xi, 0.0);
        assert_eq!(s.step(&p, 0.0, xi, &[20]), DmmAction::TerminateThenStart);
    }

    /// Independent segmentation oracle: walks the trace with explicit index
    /// bookkeeping, recomputing the buffer mean and track set from scratch.
    fn oracle_boundaries(values: &[f64], tracks: &[Vec<u64>], p: &DmmParams) -> Vec<usize> {
        let mut starts = vec![0];
        for t in 1..values.len() {
            let start = *starts.last().unwrap();
            let n = t - start;
            let mean = values[start..t].iter().sum::<f64>() / n as f64;
            let seen: Vec<u64> = tracks[start..t].iter().flatten().copied().collect();
            let xi = if tracks[t].is_empty() {
                1.0
            } else {
                tracks[t].iter().filter(|id| seen.contains(id)).count() as f64 / tracks[t].len() as f64
            };
            if n >= p.max_len || xi < p.similarity_floor || (values[t] - mean).abs() > p.value_jump {
                starts.push(t);
            }
        }
        starts
    }

    #[test]
    fn ten_frame_trace_matches_oracle() {
        let p = DmmParams {
            max_len: 4,
            similarity_floor: 0.5,
            value_jump: 0.2,
        };
        let values = [0.1, 0.1, 0.5, 0.5, 0.45, 0.5, 0.5, 0.55, 0.5, 0.0];
        let tracks: Vec<Vec<u64>> = vec![
            vec![1],
            vec![1, 2],
            vec![2],
            vec![2, 3],
            vec![9, 10, 11],
            vec![9],
            vec![9],
            vec![9],
            vec![9],
            vec![9],
        ];
        let mut seg = Segmenter::new(p);
        let mut starts = vec![];
        let mut consumed = 0;
        for (i, (v, t)) in values.iter().zip(&tracks).enumerate() {
            if let Some(b) = seg.push(frame(i as u64, *v, t)) {
                consumed += b.len();
                starts.push(consumed);
            }
        }
        let mut expected = oracle_boundaries(&values, &tracks, &p);
        expected.remove(0);
        assert_eq!(starts, expected);
        // mean=0.1, v=0.5, jump=0.2 closes the first buffer at frame 2
        assert_eq!(expected[0], 2);
        assert!(seg.finish().is_some());
        assert!(seg.finish().is_none());
    }

    proptest! {
        #[test]
        fn segmentation_partitions_stream(
            values in proptest::collection::vec(0.0..=1.0f64, 0..300),
            max_len in 1usize..20, floor in 0.0..=1.0f64, jump in 0.0..=1.0f64, seed in 0u64..1000,
        ) {
            let p = DmmParams { max_len, similarity_floor: floor, value_jump: jump };
            let mut seg = Segmenter::new(p);
            let mut out: Vec<u64> = vec![];
            let mut sizes = vec![];
            for (i, v) in values.iter().enumerate() {
                let t = [(i as u64 + seed) / 7, (i as u64 * 3 + seed) / 11];
                if let Some(b) = seg.push(frame(i as u64, *v, &t)) {
                    sizes.push(b.len());
                    out.extend(b.iter().map(|f| f.frame_id()));
                }
            }
            if let Some(b) = seg.finish() {
                sizes.push(b.len());
                out.extend(b.iter().map(|f| f.frame_id()));
            }
            prop_assert_eq!(out, (0..values.len() as u64).collect::<Vec<_>>());
            prop_assert!(sizes.iter().all(|&n| n >= 1 && n <= max_len));
        }

        #[test]
        fn step_is_deterministic(vals in proptest::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..50)) {
            let p = DmmParams::default();
            let mut a = DmmState::default();
            let mut b = DmmState::default();
            for (v, xi) in vals {
                prop_assert_eq!(a.step(&p, v, xi, &[1]), b.step(&p, v, xi, &[1]));
                prop_assert_eq!(&a, &b);
            }
        }
    }
}

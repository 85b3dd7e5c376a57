//! Domain types shared across the recorder, plus score and cost normalization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of event classes: the normal class plus eight anomaly categories,
/// each in an ego and a non-ego variant.
pub const NUM_CLASSES: usize = 17;

/// Per-class confidence vector, indexed by [`EventClass::id`].
pub type ClassScores = [f64; NUM_CLASSES];

const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "N", "ST", "AH", "LA", "OC", "TC", "VP", "VO", "OO", "ST*", "AH*", "LA*", "OC*", "TC*", "VP*",
    "VO*", "OO*",
];

/// Traffic event class. Id 0 is normal driving, ids 1–8 are ego-involved
/// anomalies and ids 9–16 the matching non-ego anomalies (written with `*`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventClass(u8);

impl EventClass {
    pub const NORMAL: EventClass = EventClass(0);

    pub fn from_id(id: usize) -> Option<Self> {
        (id < NUM_CLASSES).then_some(EventClass(id as u8))
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.id()]
    }

    pub fn is_normal(self) -> bool {
        self.0 == 0
    }

    pub fn is_anomaly(self) -> bool {
        self.0 != 0
    }

    pub fn is_ego(self) -> bool {
        (1..=8).contains(&self.0)
    }

    pub fn all() -> impl Iterator<Item = EventClass> {
        (0..NUM_CLASSES as u8).map(EventClass)
    }

    pub fn anomalies() -> impl Iterator<Item = EventClass> {
        (1..NUM_CLASSES as u8).map(EventClass)
    }

    pub fn one_hot(self) -> ClassScores {
        let mut o = [0.0; NUM_CLASSES];
        o[self.id()] = 1.0;
        o
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CLASS_NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| EventClass(i as u8))
            .ok_or_else(|| Error::param(format!("unknown event class '{s}'")))
    }
}

impl Serialize for EventClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EventClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One tracked object in a frame. Bounding boxes are normalized image
/// coordinates `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectObservation {
    pub track_id: u64,
    pub object_class: String,
    pub bbox: [f64; 4],
    pub confidence: f64,
}

impl ObjectObservation {
    pub fn new(track_id: u64, object_class: impl Into<String>, bbox: [f64; 4], confidence: f64) -> Result<Self> {
        let o = ObjectObservation {
            track_id,
            object_class: object_class.into(),
            bbox,
            confidence,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        let [x1, y1, x2, y2] = self.bbox;
        if !self.bbox.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::param(format!("track {}: bbox outside [0,1]", self.track_id)));
        }
        if x1 > x2 || y1 > y2 {
            return Err(Error::param(format!("track {}: inverted bbox", self.track_id)));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::param(format!("track {}: confidence outside [0,1]", self.track_id)));
        }
        Ok(())
    }
}

/// A frame after value estimation. Only constructible through [`FrameRecord::new`],
/// which enforces the field invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    frame_id: u64,
    raw_cost: f64,
    anomaly_score: f64,
    class_scores: ClassScores,
    value: f64,
    objects: Vec<ObjectObservation>,
    gt_class: Option<EventClass>,
}

impl FrameRecord {
    pub fn new(
        frame_id: u64,
        raw_cost: f64,
        anomaly_score: f64,
        class_scores: ClassScores,
        value: f64,
        objects: Vec<ObjectObservation>,
        gt_class: Option<EventClass>,
    ) -> Result<Self> {
        let bad = |reason: String| Error::InvalidFrame { frame_id, reason };
        for (name, x) in [("raw_cost", raw_cost), ("anomaly_score", anomaly_score), ("value", value)] {
            if !(0.0..=1.0).contains(&x) {
                return Err(bad(format!("{name} {x} outside [0,1]")));
            }
        }
        if class_scores.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(bad("class score outside [0,1]".into()));
        }
        let sum: f64 = class_scores.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(bad(format!("class scores sum to {sum}, expected 1")));
        }
        for o in &objects {
            o.validate().map_err(|e| bad(e.to_string()))?;
        }
        Ok(FrameRecord {
            frame_id,
            raw_cost,
            anomaly_score,
            class_scores,
            value,
            objects,
            gt_class,
        })
    }

    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }
    pub fn raw_cost(&self) -> f64 {
        self.raw_cost
    }
    pub fn anomaly_score(&self) -> f64 {
        self.anomaly_score
    }
    pub fn class_scores(&self) -> &ClassScores {
        &self.class_scores
    }
    pub fn value(&self) -> f64 {
        self.value
    }
    pub fn objects(&self) -> &[ObjectObservation] {
        &self.objects
    }
    pub fn gt_class(&self) -> Option<EventClass> {
        self.gt_class
    }

    pub fn track_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.objects.iter().map(|o| o.track_id)
    }

    /// Most confident class and its score. Ties resolve to the lower id.
    pub fn top_class(&self) -> (EventClass, f64) {
        let mut best = 0;
        for i in 1..NUM_CLASSES {
            if self.class_scores[i] > self.class_scores[best] {
                best = i;
            }
        }
        (EventClass(best as u8), self.class_scores[best])
    }
}

/// Class likelihoods and their normalized information measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub likelihoods: ClassScores,
    pub info_measures: ClassScores,
}

/// Anomaly-class likelihoods observed in the DoTA dataset, ids 1..=16.
/// The normal class carries likelihood 1 (no information).
pub const DOTA_LIKELIHOODS: ClassScores = [
    1.0, 0.011, 0.057, 0.054, 0.023, 0.163, 0.012, 0.010, 0.089, 0.010, 0.091, 0.104, 0.081, 0.207,
    0.010, 0.011, 0.070,
];

impl ClassModel {
    pub fn from_likelihoods(likelihoods: ClassScores) -> Result<Self> {
        let info_measures = crate::value::info_measures(&likelihoods)?;
        Ok(ClassModel {
            likelihoods,
            info_measures,
        })
    }

    pub fn dota() -> Self {
        Self::from_likelihoods(DOTA_LIKELIHOODS).expect("built-in likelihoods are valid")
    }
}

impl Default for ClassModel {
    fn default() -> Self {
        Self::dota()
    }
}

/// Rescale a nonnegative score vector so it sums to one.
pub fn normalize_class_scores(raw: &ClassScores) -> Result<ClassScores> {
    if raw.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::DegenerateScores("negative or non-finite entry".into()));
    }
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(Error::DegenerateScores("all entries are zero".into()));
    }
    let mut out = *raw;
    for x in &mut out {
        *x /= sum;
    }
    Ok(out)
}

/// Storage cost relative to a reference size, clamped to 1.
pub fn normalize_cost(raw_bytes: u64, reference_max_bytes: u64) -> Result<f64> {
    if reference_max_bytes == 0 {
        return Err(Error::param("reference_max_bytes must be positive"));
    }
    Ok((raw_bytes as f64 / reference_max_bytes as f64).min(1.0))
}

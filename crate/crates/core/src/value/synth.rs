//! Seeded generator for long driving streams with interspersed anomaly clips.
//!
//! Normal driving is laid out as a sequence of short "videos"; anomaly clips
//! are inserted at video boundaries, each clip carrying one anomaly class.
//! Every video and clip gets its own population of object tracks, so track
//! similarity drops to zero at boundaries just as with concatenated footage.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::provider::{noisy_scores, NoiseConfig, SCORE_STREAM};
use crate::error::{Error, Result};
use crate::ingest::TraceRecord;
use crate::types::{ClassScores, EventClass, ObjectObservation, DOTA_LIKELIHOODS};

const OBJECT_CLASSES: [&str; 5] = ["car", "truck", "pedestrian", "bicycle", "bus"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub frames: usize,
    /// Target fraction of anomalous frames.
    pub anomaly_rate: f64,
    /// Relative frequency of each anomaly class (index 0 ignored).
    pub class_mix: ClassScores,
    pub clip_len_min: usize,
    pub clip_len_max: usize,
    pub video_len_min: usize,
    pub video_len_max: usize,
    pub noise: NoiseConfig,
    /// Encoded size of an ordinary frame.
    pub frame_bytes: u64,
    /// Relative standard deviation of frame sizes.
    pub frame_bytes_jitter: f64,
    /// Size of a maximum-quality frame, used to normalize costs.
    pub reference_max_bytes: u64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let mut mix = DOTA_LIKELIHOODS;
        mix[0] = 0.0;
        let total: f64 = mix.iter().sum();
        mix.iter_mut().for_each(|x| *x /= total);
        SynthConfig {
            frames: 100_000,
            anomaly_rate: 0.005,
            class_mix: mix,
            clip_len_min: 30,
            clip_len_max: 100,
            video_len_min: 300,
            video_len_max: 500,
            noise: NoiseConfig::default(),
            frame_bytes: 107_663,
            frame_bytes_jitter: 0.0,
            reference_max_bytes: 600_000,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.anomaly_rate) {
            return Err(Error::param("anomaly_rate must lie in [0,1]"));
        }
        let mix_sum: f64 = self.class_mix[1..].iter().sum();
        if self.class_mix.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(Error::param("class mix entries must be nonnegative"));
        }
        if self.anomaly_rate > 0.0 {
            if mix_sum <= 0.0 {
                return Err(Error::param("empty class mix with nonzero anomaly rate"));
            }
            if (mix_sum - 1.0).abs() > 1e-6 {
                return Err(Error::param(format!("class mix sums to {mix_sum}, expected 1")));
            }
        }
        if self.clip_len_min == 0 || self.clip_len_min > self.clip_len_max {
            return Err(Error::param("clip length range is empty"));
        }
        if self.video_len_min == 0 || self.video_len_min > self.video_len_max {
            return Err(Error::param("video length range is empty"));
        }
        if self.reference_max_bytes == 0 {
            return Err(Error::param("reference_max_bytes must be positive"));
        }
        if self.noise.vad_sigma < 0.0 || self.noise.oad_sigma < 0.0 || self.frame_bytes_jitter < 0.0 {
            return Err(Error::param("noise levels must be nonnegative"));
        }
        Ok(())
    }
}

/// Frame metadata produced by the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFrame {
    pub frame_id: u64,
    pub raw_bytes: u64,
    pub gt_class: EventClass,
    pub objects: Vec<ObjectObservation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStream {
    pub frames: Vec<SyntheticFrame>,
    /// Noisy detector scores, one record per frame, labels and objects embedded.
    pub scores: Vec<TraceRecord>,
    pub reference_max_bytes: u64,
}

impl SyntheticStream {
    pub fn labels(&self) -> impl Iterator<Item = (u64, EventClass)> + '_ {
        self.frames.iter().map(|f| (f.frame_id, f.gt_class))
    }

    pub fn anomaly_frames(&self) -> usize {
        self.frames.iter().filter(|f| f.gt_class.is_anomaly()).count()
    }
}

enum Segment {
    Video(usize),
    Clip(usize, EventClass),
}

pub fn synthesize_trace(config: &SynthConfig) -> Result<SyntheticStream> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let anomalous = ((config.frames as f64) * config.anomaly_rate).round() as usize;
    let anomalous = anomalous.min(config.frames);
    let normal = config.frames - anomalous;

    let mut clips = Vec::new();
    if anomalous > 0 {
        let mix = WeightedIndex::new(&config.class_mix[1..])
            .map_err(|e| Error::param(format!("class mix: {e}")))?;
        let mut remaining = anomalous;
        while remaining > 0 {
            let len = rng.random_range(config.clip_len_min..=config.clip_len_max).min(remaining);
            let class = EventClass::from_id(1 + mix.sample(&mut rng)).expect("mix index in range");
            clips.push((len, class));
            remaining -= len;
        }
    }

    let mut videos = Vec::new();
    let mut remaining = normal;
    while remaining > 0 {
        let len = rng.random_range(config.video_len_min..=config.video_len_max).min(remaining);
        videos.push(len);
        remaining -= len;
    }

    // Each clip goes after a uniformly chosen number of normal videos.
    let mut slots: Vec<usize> = clips.iter().map(|_| rng.random_range(0..=videos.len())).collect();
    slots.sort_unstable();
    let mut layout = Vec::with_capacity(videos.len() + clips.len());
    let mut next_clip = 0;
    for v in 0..=videos.len() {
        while next_clip < clips.len() && slots[next_clip] == v {
            let (len, class) = clips[next_clip];
            layout.push(Segment::Clip(len, class));
            next_clip += 1;
        }
        if v < videos.len() {
            layout.push(Segment::Video(videos[v]));
        }
    }

    let mut frames = Vec::with_capacity(config.frames);
    let mut tracks = TrackSim::default();
    for seg in layout {
        let (len, class) = match seg {
            Segment::Video(len) => (len, EventClass::NORMAL),
            Segment::Clip(len, class) => (len, class),
        };
        tracks.reset(&mut rng);
        for _ in 0..len {
            let jitter: f64 = StandardNormal.sample(&mut rng);
            let bytes = (config.frame_bytes as f64 * (1.0 + config.frame_bytes_jitter * jitter)).round();
            frames.push(SyntheticFrame {
                frame_id: frames.len() as u64,
                raw_bytes: bytes.max(1.0) as u64,
                gt_class: class,
                objects: tracks.step(&mut rng),
            });
        }
    }

    let mut score_rng = ChaCha8Rng::seed_from_u64(config.seed);
    score_rng.set_stream(SCORE_STREAM);
    let scores = frames
        .iter()
        .map(|f| {
            let sc = noisy_scores(f.gt_class, config.noise, &mut score_rng);
            TraceRecord {
                frame_id: f.frame_id,
                s: sc.s,
                o: sc.o,
                gt_class: Some(f.gt_class),
                objects: Some(f.objects.clone()),
            }
        })
        .collect();

    Ok(SyntheticStream {
        frames,
        scores,
        reference_max_bytes: config.reference_max_bytes,
    })
}

#[derive(Default)]
struct TrackSim {
    next_id: u64,
    live: Vec<(u64, &'static str, [f64; 4], f64)>,
}

impl TrackSim {
    fn spawn(&mut self, rng: &mut ChaCha8Rng) {
        let w = rng.random_range(0.03..0.3);
        let h = rng.random_range(0.03..0.3);
        let x = rng.random_range(0.0..1.0 - w);
        let y = rng.random_range(0.3..1.0 - h);
        let class = OBJECT_CLASSES[rng.random_range(0..OBJECT_CLASSES.len())];
        self.live.push((self.next_id, class, [x, y, x + w, y + h], rng.random_range(0.5..1.0)));
        self.next_id += 1;
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) {
        self.live.clear();
        for _ in 0..rng.random_range(2..=6) {
            self.spawn(rng);
        }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> Vec<ObjectObservation> {
        self.live.retain(|_| rng.random::<f64>() >= 1.0 / 60.0);
        if rng.random::<f64>() < 0.05 {
            self.spawn(rng);
        }
        for (_, _, bbox, conf) in &mut self.live {
            let dx = rng.random_range(-0.005..0.005);
            let dy = rng.random_range(-0.005..0.005);
            let w = bbox[2] - bbox[0];
            let h = bbox[3] - bbox[1];
            let x = (bbox[0] + dx).clamp(0.0, 1.0 - w);
            let y = (bbox[1] + dy).clamp(0.0, 1.0 - h);
            *bbox = [x, y, x + w, y + h];
            *conf = (*conf + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0);
        }
        self.live
            .iter()
            .map(|&(track_id, class, bbox, confidence)| ObjectObservation {
                track_id,
                object_class: class.to_string(),
                bbox,
                confidence,
            })
            .collect()
    }
}

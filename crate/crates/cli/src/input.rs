//! Stream directories and in-memory synthetic streams.
//!
//! A stream directory holds:
//!
//! ```text
//! stream.json     reference size and generator settings
//! sizes.csv       frame_id,raw_bytes (modeled mode)
//! frames/         frame_%08d.{jpg,png} (real-pixel mode)
//! labels.jsonl    ground-truth classes (optional)
//! objects.jsonl   object observations (optional)
//! scores.jsonl    detector score trace (optional)
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use edr_core::ingest::{
    read_frames, read_labels, read_objects, read_score_trace, write_lines, write_sizes, write_trace, FrameMode, LabelRecord,
    ObjectRecord, SizeRow,
};
use edr_core::pipeline::{PixelMode, RunConfig, ScoreSource, StreamInputs};
use edr_core::value::{ScoreProvider, SynthConfig, SyntheticStream};
use serde::{Deserialize, Serialize};

pub const STREAM_FILE: &str = "stream.json";
pub const SIZES_FILE: &str = "sizes.csv";
pub const FRAMES_DIR: &str = "frames";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const OBJECTS_FILE: &str = "objects.jsonl";
pub const SCORES_FILE: &str = "scores.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub reference_max_bytes: Option<u64>,
    pub frames: usize,
    pub anomaly_frames: usize,
    pub synth: Option<SynthConfig>,
}

pub fn write_stream_dir(stream: &SyntheticStream, synth: &SynthConfig, dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let sizes: Vec<SizeRow> = stream
        .frames
        .iter()
        .map(|f| SizeRow {
            frame_id: f.frame_id,
            raw_bytes: f.raw_bytes,
        })
        .collect();
    write_sizes(&sizes, dir.join(SIZES_FILE))?;
    let labels: Vec<LabelRecord> = stream
        .labels()
        .map(|(frame_id, gt_class)| LabelRecord { frame_id, gt_class })
        .collect();
    write_lines(&labels, dir.join(LABELS_FILE))?;
    let objects: Vec<ObjectRecord> = stream
        .frames
        .iter()
        .map(|f| ObjectRecord {
            frame_id: f.frame_id,
            objects: f.objects.clone(),
        })
        .collect();
    write_lines(&objects, dir.join(OBJECTS_FILE))?;
    write_trace(&stream.scores, dir.join(SCORES_FILE))?;
    let meta = StreamMeta {
        reference_max_bytes: Some(stream.reference_max_bytes),
        frames: stream.frames.len(),
        anomaly_frames: stream.anomaly_frames(),
        synth: Some(synth.clone()),
    };
    let path = dir.join(STREAM_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Where a command's frames come from.
pub enum Source {
    Dir(PathBuf),
    Memory(SyntheticStream),
}

fn replay(path: &Path) -> anyhow::Result<ScoreProvider> {
    Ok(ScoreProvider::replay(read_score_trace(path)?))
}

impl Source {
    /// Fresh inputs for one pipeline run; callable repeatedly.
    pub fn open(&self, cfg: &RunConfig) -> anyhow::Result<StreamInputs> {
        match self {
            Source::Memory(stream) => {
                if cfg.pixels == PixelMode::Real {
                    bail!("real-pixel mode needs an --input directory with a {FRAMES_DIR}/ image sequence");
                }
                match &cfg.scores {
                    ScoreSource::Replay(path) => {
                        let mut inputs = StreamInputs::from_synthetic(stream, &ScoreSource::GroundTruth, cfg.noise, cfg.seed)?;
                        inputs.scores = replay(path)?;
                        Ok(inputs)
                    }
                    other => Ok(StreamInputs::from_synthetic(stream, other, cfg.noise, cfg.seed)?),
                }
            }
            Source::Dir(dir) => open_dir(dir, cfg),
        }
    }
}

fn read_meta(dir: &Path) -> anyhow::Result<Option<StreamMeta>> {
    let path = dir.join(STREAM_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
}

fn open_dir(dir: &Path, cfg: &RunConfig) -> anyhow::Result<StreamInputs> {
    if !dir.is_dir() {
        bail!("input directory {} does not exist", dir.display());
    }
    let meta_reference = read_meta(dir)?.and_then(|m| m.reference_max_bytes);
    let reference = cfg.reference_max_bytes.or(meta_reference);
    let frames = match cfg.pixels {
        PixelMode::Modeled => {
            let Some(reference_max_bytes) = reference else {
                bail!("modeled mode needs reference_max_bytes in the config or in {STREAM_FILE}");
            };
            read_frames(dir.join(SIZES_FILE), FrameMode::Modeled { reference_max_bytes })?
        }
        PixelMode::Real => read_frames(
            dir.join(FRAMES_DIR),
            FrameMode::Real {
                reference_max_bytes: reference,
            },
        )?,
    };
    let labels_path = dir.join(LABELS_FILE);
    let labels = labels_path.exists().then(|| read_labels(&labels_path)).transpose()?;
    let objects_path = dir.join(OBJECTS_FILE);
    let objects = objects_path.exists().then(|| read_objects(&objects_path)).transpose()?;
    let scores = match &cfg.scores {
        ScoreSource::GroundTruth | ScoreSource::Synthetic if labels.is_none() => {
            bail!("score source '{}' needs {}", cfg.scores, labels_path.display())
        }
        ScoreSource::GroundTruth => ScoreProvider::GroundTruth,
        ScoreSource::Synthetic => ScoreProvider::synthetic(cfg.noise, cfg.seed),
        ScoreSource::Trace => replay(&dir.join(SCORES_FILE))?,
        ScoreSource::Replay(path) => replay(path)?,
    };
    Ok(StreamInputs {
        frames,
        scores,
        labels,
        objects,
    })
}

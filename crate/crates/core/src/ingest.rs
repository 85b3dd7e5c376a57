//! Trace and frame-source readers and writers.
//!
//! Score, label and object traces are line-delimited JSON, one record per
//! frame, each carrying a `schema` tag:
//!
//! ```text
//! {"schema":"edr.trace/1","frame_id":0,"s":0.12,"o":[...17 reals...],"gt_class":"N","objects":[...]}
//! {"schema":"edr.labels/1","frame_id":0,"gt_class":"OC"}
//! {"schema":"edr.objects/1","frame_id":0,"objects":[{"track_id":3,"object_class":"car","bbox":[x1,y1,x2,y2],"confidence":0.9}]}
//! ```
//!
//! Frame ids must be strictly increasing within a file. Modeled frame sources
//! are CSV files with a `frame_id,raw_bytes` header; real frame sources are
//! directories of `frame_%08d.{jpg,jpeg,png}` images with contiguous ids.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_jpeg, QUALITY_MAX};
use crate::error::{Error, Result};
use crate::types::{normalize_cost, ClassScores, EventClass, ObjectObservation};

pub const TRACE_SCHEMA: &str = "edr.trace/1";
pub const LABEL_SCHEMA: &str = "edr.labels/1";
pub const OBJECT_SCHEMA: &str = "edr.objects/1";

/// Recorded detector output for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub frame_id: u64,
    pub s: f64,
    pub o: ClassScores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_class: Option<EventClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<ObjectObservation>>,
}

impl TraceRecord {
    pub fn new(frame_id: u64, s: f64, o: ClassScores) -> Self {
        TraceRecord {
            frame_id,
            s,
            o,
            gt_class: None,
            objects: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub frame_id: u64,
    pub gt_class: EventClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub frame_id: u64,
    pub objects: Vec<ObjectObservation>,
}

/// A line-delimited record type with a schema tag.
pub trait TraceLine: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
    fn frame_id(&self) -> u64;
    fn check(&self) -> std::result::Result<(), String> {
        Ok(())
    }
}

impl TraceLine for TraceRecord {
    const SCHEMA: &'static str = TRACE_SCHEMA;
    fn frame_id(&self) -> u64 {
        self.frame_id
    }
    fn check(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.s) {
            return Err(format!("anomaly score {} outside [0,1]", self.s));
        }
        if self.o.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err("class score outside [0,1]".into());
        }
        check_objects(self.objects.iter().flatten())
    }
}

impl TraceLine for LabelRecord {
    const SCHEMA: &'static str = LABEL_SCHEMA;
    fn frame_id(&self) -> u64 {
        self.frame_id
    }
}

impl TraceLine for ObjectRecord {
    const SCHEMA: &'static str = OBJECT_SCHEMA;
    fn frame_id(&self) -> u64 {
        self.frame_id
    }
    fn check(&self) -> std::result::Result<(), String> {
        check_objects(self.objects.iter())
    }
}

fn check_objects<'a>(mut objects: impl Iterator<Item = &'a ObjectObservation>) -> std::result::Result<(), String> {
    objects.try_for_each(|o| o.validate().map_err(|e| e.to_string()))
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema: &'a str,
    #[serde(flatten)]
    record: &'a T,
}

#[derive(Deserialize)]
struct SchemaTag {
    schema: Option<String>,
}

/// Streaming reader yielding validated records in file order.
pub struct TraceReader<T, R> {
    path: PathBuf,
    lines: std::io::Lines<R>,
    line: u64,
    last_id: Option<u64>,
    failed: bool,
    _marker: PhantomData<T>,
}

impl<T: TraceLine, R: BufRead> TraceReader<T, R> {
    pub fn new(reader: R, path: impl Into<PathBuf>) -> Self {
        TraceReader {
            path: path.into(),
            lines: reader.lines(),
            line: 0,
            last_id: None,
            failed: false,
            _marker: PhantomData,
        }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn parse(&mut self, text: &str) -> Result<T> {
        let tag: SchemaTag = serde_json::from_str(text).map_err(|e| self.err(e.to_string()))?;
        match tag.schema.as_deref() {
            Some(s) if s == T::SCHEMA => {}
            Some(s) => return Err(self.err(format!("unsupported schema '{s}', expected '{}'", T::SCHEMA))),
            None => return Err(self.err("missing schema tag")),
        }
        let rec: T = serde_json::from_str(text).map_err(|e| self.err(e.to_string()))?;
        rec.check().map_err(|e| self.err(e))?;
        let id = rec.frame_id();
        match self.last_id {
            Some(prev) if id == prev => return Err(self.err(format!("duplicate frame_id {id}"))),
            Some(prev) if id < prev => {
                return Err(self.err(format!("frame_id {id} follows {prev}; ids must increase")))
            }
            _ => {}
        }
        self.last_id = Some(id);
        Ok(rec)
    }
}

impl<T: TraceLine, R: BufRead> Iterator for TraceReader<T, R> {
    type Item = Result<T>;

    fn next(&mut self) -> Option<Result<T>> {
        if self.failed {
            return None;
        }
        let line = self.lines.next()?;
        self.line += 1;
        let out = match line {
            Err(e) => Err(self.err(e.to_string())),
            Ok(text) => self.parse(&text),
        };
        self.failed = out.is_err();
        Some(out)
    }
}

fn open_reader<T: TraceLine>(path: &Path) -> Result<TraceReader<T, BufReader<File>>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(TraceReader::new(BufReader::new(f), path))
}

pub fn read_score_trace(path: impl AsRef<Path>) -> Result<TraceReader<TraceRecord, BufReader<File>>> {
    open_reader(path.as_ref())
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<BTreeMap<u64, EventClass>> {
    open_reader::<LabelRecord>(path.as_ref())?
        .map(|r| r.map(|l| (l.frame_id, l.gt_class)))
        .collect()
}

pub fn read_objects(path: impl AsRef<Path>) -> Result<BTreeMap<u64, Vec<ObjectObservation>>> {
    open_reader::<ObjectRecord>(path.as_ref())?
        .map(|r| r.map(|o| (o.frame_id, o.objects)))
        .collect()
}

/// Write records as schema-tagged JSON lines. Ids must be strictly increasing.
pub fn write_lines<T: TraceLine>(records: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for w in records.windows(2) {
        if w[1].frame_id() <= w[0].frame_id() {
            return Err(Error::param(format!(
                "records out of order: frame {} follows {}",
                w[1].frame_id(),
                w[0].frame_id()
            )));
        }
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in records {
        serde_json::to_writer(&mut w, &Envelope { schema: T::SCHEMA, record: r })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trace(records: &[TraceRecord], path: impl AsRef<Path>) -> Result<()> {
    write_lines(records, path)
}

/// A captured frame: normalized raw cost plus pixels in real mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedFrame {
    pub frame_id: u64,
    pub raw_bytes: u64,
    pub raw_cost: f64,
    /// Size that `raw_cost` was normalized by.
    pub reference_max_bytes: u64,
    pub image: Option<RgbImage>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameMode {
    /// Sizes file; costs normalized by the given reference.
    Modeled { reference_max_bytes: u64 },
    /// Image directory. The reference defaults to the maximum-quality
    /// encoded size of the first frame.
    Real { reference_max_bytes: Option<u64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub frame_id: u64,
    pub raw_bytes: u64,
}

pub fn read_sizes(path: impl AsRef<Path>) -> Result<Vec<SizeRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.into(),
        line: 0,
        reason: e.to_string(),
    })?;
    let mut rows: Vec<SizeRow> = Vec::new();
    for (i, row) in rdr.deserialize::<SizeRow>().enumerate() {
        // header is line 1
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::Parse {
            path: path.into(),
            line,
            reason: e.to_string(),
        })?;
        if let Some(prev) = rows.last() {
            if row.frame_id != prev.frame_id + 1 {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    reason: format!("gap in frame ids: {} follows {}", row.frame_id, prev.frame_id),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_sizes(rows: &[SizeRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Report(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Report(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const IMAGE_EXTS: [&str; 3] = ["jpg", "jpeg", "png"];

/// Sorted `(frame_id, path)` pairs of an image-sequence directory.
pub fn list_frame_images(dir: impl AsRef<Path>) -> Result<Vec<(u64, PathBuf)>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !ext.as_deref().is_some_and(|e| IMAGE_EXTS.contains(&e)) {
            continue;
        }
        let Some(id) = p
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.strip_prefix("frame_"))
            .and_then(|s| s.parse::<u64>().ok())
        else {
            continue;
        };
        found.push((id, p));
    }
    found.sort();
    for w in found.windows(2) {
        if w[1].0 != w[0].0 + 1 {
            return Err(Error::Misaligned {
                frame_id: w[0].0 + 1,
                reason: format!("missing frame image in {}", dir.display()),
            });
        }
    }
    Ok(found)
}

/// Frame source for the capture stage.
pub fn read_frames(path: impl AsRef<Path>, mode: FrameMode) -> Result<Box<dyn Iterator<Item = Result<CapturedFrame>> + Send>> {
    let path = path.as_ref();
    match mode {
        FrameMode::Modeled { reference_max_bytes } => {
            let rows = read_sizes(path)?;
            normalize_cost(0, reference_max_bytes)?;
            Ok(Box::new(rows.into_iter().map(move |r| {
                Ok(CapturedFrame {
                    frame_id: r.frame_id,
                    raw_bytes: r.raw_bytes,
                    raw_cost: normalize_cost(r.raw_bytes, reference_max_bytes)?,
                    reference_max_bytes,
                    image: None,
                })
            })))
        }
        FrameMode::Real { reference_max_bytes } => {
            let files = list_frame_images(path)?;
            let mut reference = reference_max_bytes;
            Ok(Box::new(files.into_iter().map(move |(frame_id, file)| {
                let image = image::open(&file)
                    .map_err(|e| Error::Codec {
                        frame_id,
                        reason: format!("{}: {e}", file.display()),
                    })?
                    .to_rgb8();
                let raw_bytes = encode_jpeg(&image, QUALITY_MAX, frame_id)?.len() as u64;
                let reference = *reference.get_or_insert(raw_bytes);
                Ok(CapturedFrame {
                    frame_id,
                    raw_bytes,
                    raw_cost: normalize_cost(raw_bytes, reference)?,
                    reference_max_bytes: reference,
                    image: Some(image),
                })
            })))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn rec(id: u64) -> TraceRecord {
        TraceRecord::new(id, 0.25, EventClass::NORMAL.one_hot())
    }

    fn line(r: &TraceRecord) -> String {
        serde_json::to_string(&Envelope { schema: TRACE_SCHEMA, record: r }).unwrap()
    }

    fn read(text: &str) -> Vec<Result<TraceRecord>> {
        TraceReader::<TraceRecord, _>::new(Cursor::new(text.to_string()), "mem").collect()
    }

    #[test]
    fn empty_and_valid() {
        assert!(read("").is_empty());
        let text = [0, 1, 5].map(|i| line(&rec(i))).join("\n");
        let out: Vec<_> = read(&text).into_iter().map(|r| r.unwrap().frame_id).collect();
        assert_eq!(out, vec![0, 1, 5]);
    }

    #[test]
    fn wrong_vector_length_names_line() {
        let good = line(&rec(0));
        let bad = format!(r#"{{"schema":"{TRACE_SCHEMA}","frame_id":1,"s":0.1,"o":[{}]}}"#, vec!["0.0"; 16].join(","));
        let out = read(&format!("{good}\n{bad}\n{good}"));
        assert_eq!(out.len(), 2);
        match &out[1] {
            Err(Error::Parse { line, reason, .. }) => {
                assert_eq!(*line, 2);
                assert!(reason.contains("17"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ordering_and_schema_errors() {
        let dup = format!("{}\n{}", line(&rec(3)), line(&rec(3)));
        assert!(read(&dup)[1].as_ref().unwrap_err().to_string().contains("duplicate"));
        let back = format!("{}\n{}", line(&rec(3)), line(&rec(2)));
        assert!(read(&back)[1].is_err());
        let no_schema = r#"{"frame_id":0,"s":0.1,"o":[]}"#;
        assert!(read(no_schema)[0].is_err());
        let wrong = line(&rec(0)).replace(TRACE_SCHEMA, "edr.trace/99");
        assert!(read(&wrong)[0].as_ref().unwrap_err().to_string().contains("unsupported"));
        let out_of_range = line(&TraceRecord::new(0, 1.5, EventClass::NORMAL.one_hot()));
        assert!(read(&out_of_range)[0].is_err());
        assert!(read("\n")[0].is_err());
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        write_trace(&[], &p).unwrap();
        assert_eq!(read_score_trace(&p).unwrap().count(), 0);

        let mut r = rec(4);
        r.gt_class = Some("TC*".parse().unwrap());
        r.objects = Some(vec![ObjectObservation::new(2, "bus", [0.0, 0.1, 0.5, 0.6], 0.7).unwrap()]);
        let recs = vec![rec(1), r, rec(9)];
        write_trace(&recs, &p).unwrap();
        let back: Vec<_> = read_score_trace(&p).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(back, recs);

        assert!(write_trace(&[rec(2), rec(1)], &p).is_err());
    }

    #[test]
    fn labels_and_objects() {
        let dir = tempfile::tempdir().unwrap();
        let lp = dir.path().join("labels.jsonl");
        write_lines(
            &[
                LabelRecord { frame_id: 0, gt_class: EventClass::NORMAL },
                LabelRecord { frame_id: 1, gt_class: "VO".parse().unwrap() },
            ],
            &lp,
        )
        .unwrap();
        let labels = read_labels(&lp).unwrap();
        assert_eq!(labels[&1].name(), "VO");

        let op = dir.path().join("objects.jsonl");
        let obj = ObjectObservation::new(7, "car", [0.1, 0.1, 0.3, 0.3], 0.9).unwrap();
        write_lines(&[ObjectRecord { frame_id: 0, objects: vec![obj.clone()] }], &op).unwrap();
        assert_eq!(read_objects(&op).unwrap()[&0], vec![obj]);
    }

    #[test]
    fn sizes_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sizes.csv");
        std::fs::write(&p, "frame_id,raw_bytes\n0,100000\n1,120000\n").unwrap();
        let frames: Vec<_> = read_frames(&p, FrameMode::Modeled { reference_max_bytes: 200_000 })
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        let costs: Vec<f64> = frames.iter().map(|f| f.raw_cost).collect();
        assert_eq!(costs, vec![0.5, 0.6]);

        std::fs::write(&p, "frame_id,raw_bytes\n0,100000\n2,120000\n").unwrap();
        match read_sizes(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn image_directory() {
        let dir = tempfile::tempdir().unwrap();
        for i in [0u64, 1] {
            let img = RgbImage::from_fn(32, 16, |x, y| image::Rgb([(x * 8) as u8, (y * 16) as u8, (i * 100) as u8]));
            img.save(dir.path().join(format!("frame_{i:08}.png"))).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let frames: Vec<_> = read_frames(dir.path(), FrameMode::Real { reference_max_bytes: None })
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(frames.iter().map(|f| f.frame_id).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(frames[0].raw_cost, 1.0);
        assert!(frames.iter().all(|f| f.image.is_some()));

        RgbImage::new(4, 4).save(dir.path().join("frame_00000003.png")).unwrap();
        match read_frames(dir.path(), FrameMode::Real { reference_max_bytes: None }) {
            Err(Error::Misaligned { frame_id, .. }) => assert_eq!(frame_id, 2),
            Err(e) => panic!("{e}"),
            Ok(_) => panic!("gap not detected"),
        }
    }
}

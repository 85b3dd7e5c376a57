use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{compression_report, per_class_histograms, GroupStats, RetentionRow, SweepRow};
use crate::error::{Error, Result};
use crate::pipeline::RunReport;
use crate::types::EventClass;

/// Anomalous-to-normal cost ratios of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub cost_unit: String,
    pub raw_ratio: Option<f64>,
    pub stored_ratio: Option<f64>,
    pub amplification: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub class: EventClass,
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Flat report tables. Each nonempty table becomes `<name>.csv`; the whole
/// set is also written as one JSON bundle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tables {
    pub compression: Vec<GroupStats>,
    pub ratios: Vec<RatioRow>,
    pub classes: Vec<GroupStats>,
    pub histograms: Vec<HistogramRow>,
    pub retention: Vec<RetentionRow>,
    pub sweep: Vec<SweepRow>,
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Report(format!("{}: {e}", path.display()))
}

fn write_table<T: Serialize>(dir: &Path, name: &str, rows: &[T], written: &mut Vec<PathBuf>) -> Result<()> {
    if rows.is_empty() {
        return Ok(());
    }
    let path = dir.join(format!("{name}.csv"));
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

impl Tables {
    /// Compression, per-class and histogram tables of a labeled run.
    pub fn from_run(run: &RunReport, bins: usize) -> Result<Self> {
        let c = compression_report(run)?;
        let histograms = per_class_histograms(run, bins)?
            .into_iter()
            .flat_map(|h| {
                let class = h.class;
                h.counts.iter().enumerate().map(move |(bin, &count)| HistogramRow {
                    class,
                    bin,
                    lo: h.edges[bin],
                    hi: h.edges[bin + 1],
                    count,
                }).collect::<Vec<_>>()
            })
            .collect();
        Ok(Tables {
            ratios: vec![RatioRow {
                cost_unit: c.cost_unit,
                raw_ratio: c.raw_ratio,
                stored_ratio: c.stored_ratio,
                amplification: c.amplification,
            }],
            compression: vec![c.normal, c.anomaly],
            classes: run.aggregates.by_class.clone(),
            histograms,
            ..Default::default()
        })
    }

    /// Write one CSV per nonempty table; returns the files written.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        write_table(dir, "compression", &self.compression, &mut written)?;
        write_table(dir, "ratios", &self.ratios, &mut written)?;
        write_table(dir, "classes", &self.classes, &mut written)?;
        write_table(dir, "histograms", &self.histograms, &mut written)?;
        write_table(dir, "retention", &self.retention, &mut written)?;
        write_table(dir, "sweep", &self.sweep, &mut written)?;
        Ok(written)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

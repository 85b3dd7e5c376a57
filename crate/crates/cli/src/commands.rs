use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use edr_core::codec::{codec_quality, encode_jpeg, fit_phi, QUALITY_MAX};
use edr_core::ingest::{read_frames, FrameMode};
use edr_core::pipeline::{prepare, run_pipeline, RunReport};
use edr_core::report::{compression_report, retention_report, sweep_rows, value_method_sweep, Tables};
use edr_core::storage::{self, Policy, TagPredicate};
use edr_core::value::synthesize_trace;
use serde::Serialize;

use crate::config::CliConfig;
use crate::input::{write_stream_dir, Source};
use crate::{Failure, Phase};

pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";
pub const TIMING_FILE: &str = "timing.json";
pub const TABLES_FILE: &str = "tables.json";
pub const STORE_DIR: &str = "store";
pub const TABLES_DIR: &str = "tables";

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn json_pretty(v: &impl Serialize) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn prepare_out(out: &Path, cfg: &CliConfig) -> Result<(), Failure> {
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .runtime()?;
    write(&out.join(CONFIG_FILE), &json_pretty(cfg).runtime()?).runtime()
}

fn source(cfg: &CliConfig, input: Option<&Path>) -> Result<Source, Failure> {
    match input {
        Some(dir) => Ok(Source::Dir(dir.to_path_buf())),
        None => Ok(Source::Memory(synthesize_trace(&cfg.synth).input()?)),
    }
}

pub fn synth(cfg: &CliConfig, out: &Path) -> Result<(), Failure> {
    let stream = synthesize_trace(&cfg.synth).input()?;
    write_stream_dir(&stream, &cfg.synth, out).runtime()?;
    write(&out.join(CONFIG_FILE), &json_pretty(cfg).runtime()?).runtime()?;
    out!(
        "wrote {} frames ({} anomalous) to {}",
        stream.frames.len(),
        stream.anomaly_frames(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Timing {
    frames: usize,
    seconds: f64,
    frames_per_second: f64,
    threaded: bool,
}

pub fn run(cfg: &CliConfig, input: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let src = source(cfg, input)?;
    let inputs = src.open(&cfg.run).input()?;
    prepare_out(out, cfg)?;

    let start = Instant::now();
    let output = run_pipeline(&cfg.run, inputs).runtime()?;
    let seconds = start.elapsed().as_secs_f64();

    let report = &output.report;
    write(&out.join(REPORT_FILE), &report.to_json().runtime()?).runtime()?;
    storage::persist(&output.store, out.join(STORE_DIR)).runtime()?;
    let frames = report.frames.len();
    let timing = Timing {
        frames,
        seconds,
        frames_per_second: if seconds > 0.0 { frames as f64 / seconds } else { 0.0 },
        threaded: cfg.run.threaded,
    };
    write(&out.join(TIMING_FILE), &json_pretty(&timing).runtime()?).runtime()?;

    let agg = &report.aggregates;
    out!(
        "{frames} frames, {} buffers: {} stored, {} evicted, {} rejected; stored cost {:.4} {}",
        agg.buffers, agg.stored_buffers, agg.evicted_buffers, agg.rejected_buffers, agg.stored_cost, report.cost_unit
    );
    if agg.labeled_frames == frames && frames > 0 {
        let tables = Tables::from_run(report, cfg.report.bins).runtime()?;
        emit_tables(&tables, &out.join(TABLES_DIR))?;
        print_compression(report)?;
    }
    Ok(())
}

fn emit_tables(tables: &Tables, dir: &Path) -> Result<(), Failure> {
    tables.write_csv(dir).runtime()?;
    tables.write_json(dir.join(TABLES_FILE)).runtime()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn print_compression(report: &RunReport) -> Result<(), Failure> {
    let c = compression_report(report).runtime()?;
    out!("group      frames   raw_cost  stored_cost  avg_d  med_d  std_d");
    for g in [&c.normal, &c.anomaly] {
        out!(
            "{:<8} {:>8} {:>10.3} {:>12.3} {:>6.3} {:>6.3} {:>6.3}",
            g.group, g.frames, g.raw_cost, g.stored_cost, g.d_avg, g.d_med, g.d_std
        );
    }
    out!(
        "anomaly/normal cost ratio: raw {} stored {} (x{})",
        fmt_opt(c.raw_ratio),
        fmt_opt(c.stored_ratio),
        fmt_opt(c.amplification)
    );
    Ok(())
}

pub fn compare(
    cfg: &CliConfig,
    input: Option<&Path>,
    out: &Path,
    (first, second): (Policy, Policy),
    limits: Option<Vec<f64>>,
) -> Result<(), Failure> {
    if limits.as_ref().is_some_and(|l| l.iter().any(|m| !(*m > 0.0))) {
        return Err(Failure {
            code: crate::EXIT_INPUT,
            error: anyhow!("--limits must be positive"),
        });
    }
    let src = source(cfg, input)?;
    let prepared = prepare(&cfg.run, src.open(&cfg.run).input()?).runtime()?;
    prepare_out(out, cfg)?;
    let limits = limits.or_else(|| cfg.compare.limits.clone()).unwrap_or_else(|| {
        let total = prepared.total_cost();
        cfg.compare.fractions.iter().map(|f| f * total).collect()
    });
    let settings: Vec<(Policy, Option<f64>)> = limits
        .iter()
        .flat_map(|m| [(first, Some(*m)), (second, Some(*m))])
        .collect();
    let runs = prepared.retain_many(&settings, cfg.run.execution).runtime()?;
    let (a, b): (Vec<_>, Vec<_>) = runs.into_iter().map(|r| r.report).enumerate().partition(|(i, _)| i % 2 == 0);
    let a: Vec<RunReport> = a.into_iter().map(|(_, r)| r).collect();
    let b: Vec<RunReport> = b.into_iter().map(|(_, r)| r).collect();
    let rows = retention_report(&a, &b, &limits).runtime()?;

    out!("columns: {first} | {second}");
    out!("limit        normal  anomaly  ratio%   | normal  anomaly  ratio%   better");
    for r in &rows {
        out!(
            "{:<10.4} {:>8} {:>8} {:>7.3}  | {:>6} {:>8} {:>7.3}   {}",
            r.limit,
            r.priority_normal,
            r.priority_anomaly,
            100.0 * r.priority_fraction,
            r.fifo_normal,
            r.fifo_anomaly,
            100.0 * r.fifo_fraction,
            r.better.map_or("-".to_string(), |p| p.to_string())
        );
    }
    let tables = Tables {
        retention: rows,
        ..Default::default()
    };
    emit_tables(&tables, out)
}

/// `"1,0;0,1"` → `[(1, 0), (0, 1)]`.
pub fn parse_grid(s: &str) -> anyhow::Result<Vec<(f64, f64)>> {
    let grid = s
        .split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (a, b) = pair.split_once(',').ok_or_else(|| anyhow!("grid entry '{pair}' is not alpha,beta"))?;
            Ok((a.trim().parse()?, b.trim().parse()?))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if grid.is_empty() {
        bail!("sweep grid is empty");
    }
    Ok(grid)
}

pub fn sweep(cfg: &CliConfig, input: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let src = source(cfg, input)?;
    src.open(&cfg.run).input()?;
    prepare_out(out, cfg)?;
    let open = || src.open(&cfg.run).map_err(|e| edr_core::Error::InvalidParam(format!("{e:#}")));
    let runs = value_method_sweep(&cfg.run, &cfg.sweep.grid, open, cfg.run.execution).runtime()?;
    let rows = sweep_rows(&runs).runtime()?;
    out!("alpha  beta  group      avg_d  med_d  std_d");
    for r in &rows {
        out!(
            "{:<5} {:<5} {:<8} {:>6.3} {:>6.3} {:>6.3}",
            r.alpha, r.beta, r.group, r.d_avg, r.d_med, r.d_std
        );
    }
    let tables = Tables {
        sweep: rows,
        ..Default::default()
    };
    emit_tables(&tables, out)
}

#[derive(Serialize)]
struct PhiSample {
    frame_id: u64,
    quality: u8,
    d: f64,
    bytes: u64,
    ratio: f64,
}

/// Encodes each image at each quality and fits the model to
/// `(d, encoded bytes / uncompressed RGB bytes)` samples.
pub fn calibrate_phi(cfg: &CliConfig, images: &Path, out: &Path, qualities: &[u8]) -> Result<(), Failure> {
    let q_min = cfg.run.encoder.quality_min.clamp(1, QUALITY_MAX);
    let qualities: Vec<u8> = if qualities.is_empty() {
        (0..=20).map(|i| (q_min as f64 + i as f64 * (QUALITY_MAX - q_min) as f64 / 20.0).round() as u8).collect()
    } else {
        qualities.to_vec()
    };
    if let Some(q) = qualities.iter().find(|q| !(q_min..=QUALITY_MAX).contains(q)) {
        return Err(Failure {
            code: crate::EXIT_INPUT,
            error: anyhow!("quality {q} outside [{q_min}, {QUALITY_MAX}]"),
        });
    }
    if !images.is_dir() {
        return Err(Failure {
            code: crate::EXIT_INPUT,
            error: anyhow!("image directory {} does not exist", images.display()),
        });
    }
    let frames = read_frames(images, FrameMode::Real { reference_max_bytes: None }).input()?;
    let mut samples = Vec::new();
    let mut count = 0usize;
    for frame in frames {
        let frame = frame.input()?;
        let img = frame.image.as_ref().expect("real mode yields images");
        let raw = (img.width() as u64 * img.height() as u64 * 3) as f64;
        count += 1;
        for &q in &qualities {
            let bytes = encode_jpeg(img, q, frame.frame_id).runtime()?.len() as u64;
            let d = (q - q_min) as f64 / (QUALITY_MAX - q_min) as f64;
            debug_assert_eq!(codec_quality(d, q_min), q);
            samples.push(PhiSample {
                frame_id: frame.frame_id,
                quality: q,
                d,
                bytes,
                ratio: bytes as f64 / raw,
            });
        }
    }
    if count == 0 {
        return Err(Failure {
            code: crate::EXIT_INPUT,
            error: anyhow!("no frame_%08d images in {}", images.display()),
        });
    }
    let points: Vec<(f64, f64)> = samples.iter().map(|s| (s.d, s.ratio)).collect();
    let fit = fit_phi(&points).runtime()?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).runtime()?;
    write(&out.join("phi.json"), &json_pretty(&fit).runtime()?).runtime()?;
    let mut w = csv_writer(&out.join("phi_samples.csv")).runtime()?;
    for s in &samples {
        w.serialize(s).context("writing samples").runtime()?;
    }
    w.flush().context("writing samples").runtime()?;
    out!(
        "a1 = {:.6}  a2 = {:.6}  a3 = {:.6}  rms = {:.3e}  ({} samples from {} images)",
        fit.model.a1,
        fit.model.a2,
        fit.model.a3,
        fit.rms,
        samples.len(),
        count
    );
    Ok(())
}

fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn report(cfg: &CliConfig, input: &Path, out: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(input)
        .with_context(|| format!("reading {}", input.display()))
        .input()?;
    let run = RunReport::from_json(&text).input()?;
    let tables = Tables::from_run(&run, cfg.report.bins).input()?;
    emit_tables(&tables, out)?;
    print_compression(&run)
}

pub fn query(store: &Path, predicate: &str) -> Result<(), Failure> {
    let pred: TagPredicate = predicate.parse().input()?;
    let state = storage::load(store).input()?;
    let hits = state.query_tags(|t| pred.matches(t));
    for id in &hits {
        let b = &state.get(*id).expect("query returns stored ids").buffer;
        let classes: Vec<String> = b.tags.classes.iter().map(|c| c.to_string()).collect();
        out!(
            "{id}\tvalue={:.6}\tcost={:.6}\tframes={}..{}\tclasses={}",
            b.value,
            b.cost,
            b.first_frame_id(),
            b.first_frame_id() + b.len() as u64 - 1,
            classes.join(",")
        );
    }
    eprintln!("{} of {} stored buffers match", hits.len(), state.len());
    Ok(())
}

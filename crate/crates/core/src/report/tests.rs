use super::*;
use crate::pipeline::{prepare, Aggregates, ScoreSource, COST_UNIT, REPORT_SCHEMA};
use crate::value::{synthesize_trace, NoiseConfig, SynthConfig, SyntheticStream};
use proptest::prelude::*;

fn row(id: u64, gt: &str, d: f64, c: f64, c_hat: f64, stored: bool) -> FrameRow {
    let gt: EventClass = gt.parse().unwrap();
    FrameRow {
        frame_id: id,
        buffer: 0,
        gt_class: Some(gt),
        s: 0.0,
        top_class: gt,
        top_score: 1.0,
        v: 0.0,
        v_hat: 0.0,
        d,
        c,
        c_hat,
        quality: None,
        stored,
    }
}

fn report(frames: Vec<FrameRow>) -> RunReport {
    let aggregates = Aggregates::from_ledgers(&frames, &[], 0.0);
    RunReport {
        schema: REPORT_SCHEMA.into(),
        policy: Policy::Priority,
        capacity: None,
        cost_unit: COST_UNIT.into(),
        frames,
        buffers: vec![],
        aggregates,
    }
}

fn six_frames() -> RunReport {
    report(vec![
        row(0, "N", 0.0, 0.5, 0.1, true),
        row(1, "N", 0.2, 0.5, 0.2, true),
        row(2, "N", 0.4, 0.5, 0.3, false),
        row(3, "OC", 0.6, 0.4, 0.35, true),
        row(4, "OC", 0.8, 0.4, 0.4, true),
        row(5, "TC*", 1.0, 0.4, 0.45, true),
    ])
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn summary_statistics() {
    assert_eq!(summarize(&[]), (0.0, 0.0, 0.0));
    assert_eq!(summarize(&[0.3]), (0.3, 0.3, 0.0));
    let (m, med, sd) = summarize(&[4.0, 1.0, 3.0, 2.0]);
    assert_eq!((m, med), (2.5, 2.5));
    assert!(close(sd, 1.25f64.sqrt()));
}

#[test]
fn compression_matches_hand_oracle() {
    let c = compression_report(&six_frames()).unwrap();
    let n = &c.normal;
    assert_eq!(n.frames, 3);
    assert!(close(n.raw_cost, 1.5) && close(n.compressed_cost, 0.6) && close(n.stored_cost, 0.3));
    assert!(close(n.d_avg, 0.2) && close(n.d_med, 0.2) && close(n.d_std, (0.08f64 / 3.0).sqrt()));
    let a = &c.anomaly;
    assert_eq!(a.frames, 3);
    assert!(close(a.raw_cost, 1.2) && close(a.compressed_cost, 1.2) && close(a.stored_cost, 1.2));
    assert!(close(a.d_avg, 0.8) && close(a.d_med, 0.8) && close(a.d_std, (0.08f64 / 3.0).sqrt()));
    assert!(close(c.raw_ratio.unwrap(), 0.8));
    assert!(close(c.stored_ratio.unwrap(), 4.0));
    assert!(close(c.amplification.unwrap(), 5.0));
}

#[test]
fn all_normal_run_has_zero_anomaly_row() {
    let c = compression_report(&report(vec![row(0, "N", 0.0, 0.5, 0.1, true), row(1, "N", 0.0, 0.5, 0.1, true)])).unwrap();
    assert_eq!(c.anomaly.frames, 0);
    assert_eq!(c.anomaly.stored_cost, 0.0);
    assert_eq!(c.stored_ratio, Some(0.0));
    assert_eq!(c.raw_ratio, Some(0.0));
}

#[test]
fn unlabeled_frames_are_an_error() {
    let mut r = six_frames();
    r.frames[2].gt_class = None;
    assert!(compression_report(&r).is_err());
    assert!(RetentionCounts::from_report(&r).is_err());
}

fn stream(frames: usize, rate: f64, seed: u64, noise: NoiseConfig) -> SyntheticStream {
    synthesize_trace(&SynthConfig {
        frames,
        anomaly_rate: rate,
        seed,
        noise,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn ground_truth_run_decisions_are_degenerate() {
    let s = stream(5000, 0.02, 1, NoiseConfig::default());
    let inp = StreamInputs::from_synthetic(&s, &ScoreSource::GroundTruth, NoiseConfig::default(), 0).unwrap();
    let run = run_pipeline(&RunConfig::default(), inp).unwrap().report;
    let c = compression_report(&run).unwrap();
    assert_eq!((c.normal.d_avg, c.normal.d_med, c.normal.d_std), (0.0, 0.0, 0.0));
    assert!(c.anomaly.d_avg > 0.0);
    assert_eq!(c.anomaly.d_std, 0.0);
}

#[test]
fn retention_rows() {
    let a = six_frames();
    let rows = retention_report(std::slice::from_ref(&a), std::slice::from_ref(&a), &[1.0]).unwrap();
    assert_eq!(rows[0].priority_normal, rows[0].fifo_normal);
    assert_eq!(rows[0].priority_anomaly, 3);
    assert_eq!(rows[0].priority_normal, 2);
    assert!(close(rows[0].priority_fraction, 0.6));
    assert_eq!(rows[0].priority_ratio, Some(1.5));
    assert_eq!(rows[0].better, None);

    let mut fewer = a.clone();
    fewer.frames[4].stored = false;
    let rows = retention_report(&[a.clone(), a.clone()], &[fewer.clone(), fewer], &[2.0, 1.0]).unwrap();
    assert!(rows.iter().all(|r| r.better == Some(Policy::Priority)));

    let mut other = a.clone();
    other.frames[0].gt_class = Some("ST".parse().unwrap());
    assert!(retention_report(std::slice::from_ref(&a), &[other], &[1.0]).is_err());
    assert!(retention_report(std::slice::from_ref(&a), &[], &[1.0]).is_err());
}

#[test]
fn histograms_basic() {
    let r = six_frames();
    let h = per_class_histograms(&r, DEFAULT_BINS).unwrap();
    assert_eq!(h.len(), 16);
    assert_eq!(h[0].edges.len(), 21);
    assert!(h.iter().all(|x| x.counts.len() == 20));
    let st = &h[0];
    assert_eq!(st.class.name(), "ST");
    assert_eq!(st.counts.iter().sum::<usize>(), 0);
    let tc_star = h.iter().find(|x| x.class.name() == "TC*").unwrap();
    assert_eq!(tc_star.counts[19], 1);
    assert_eq!(tc_star.counts.iter().sum::<usize>(), 1);
    assert!(per_class_histograms(&r, 0).is_err());
}

proptest! {
    #[test]
    fn histogram_recount(ds in proptest::collection::vec((0.0f64..=1.0, 0usize..17), 0..200), bins in 1usize..30) {
        let frames: Vec<FrameRow> = ds.iter().enumerate().map(|(i, (d, c))| {
            row(i as u64, EventClass::from_id(*c).unwrap().name(), *d, 0.1, 0.1, true)
        }).collect();
        let r = report(frames);
        let h = per_class_histograms(&r, bins).unwrap();
        for hist in &h {
            for (b, &count) in hist.counts.iter().enumerate() {
                let lo = b as f64 / bins as f64;
                let hi = (b + 1) as f64 / bins as f64;
                let expect = r.frames.iter().filter(|f| {
                    f.gt_class == Some(hist.class) && f.d >= lo && (f.d < hi || (b == bins - 1 && f.d <= 1.0))
                }).count();
                prop_assert_eq!(count, expect);
            }
        }
    }
}

#[test]
fn sweep_single_point_equals_plain_run() {
    let s = stream(3000, 0.03, 2, NoiseConfig::default());
    let base = RunConfig::default();
    let make = || StreamInputs::from_synthetic(&s, &ScoreSource::Trace, NoiseConfig::default(), 0);
    let runs = value_method_sweep(&base, &[(1.0, 0.0)], make, Execution::Parallel).unwrap();
    let rows = sweep_rows(&runs).unwrap();
    let plain = run_pipeline(
        &RunConfig {
            value: ValueParams::new(1.0, 0.0).unwrap(),
            ..base
        },
        make().unwrap(),
    )
    .unwrap();
    let c = compression_report(&plain.report).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].d_avg, rows[0].d_med, rows[0].d_std), (c.normal.d_avg, c.normal.d_med, c.normal.d_std));
    assert_eq!((rows[1].d_avg, rows[1].d_med, rows[1].d_std), (c.anomaly.d_avg, c.anomaly.d_med, c.anomaly.d_std));
    assert!(value_method_sweep(&RunConfig::default(), &[], make, Execution::Sequential).is_err());
}

#[test]
fn sweep_zero_weights_give_zero_decisions() {
    let s = stream(2000, 0.05, 3, NoiseConfig::default());
    let make = || StreamInputs::from_synthetic(&s, &ScoreSource::Trace, NoiseConfig::default(), 0);
    let runs = value_method_sweep(&RunConfig::default(), &[(0.0, 0.0)], make, Execution::Sequential).unwrap();
    assert!(runs[0].report.frames.iter().all(|f| f.v == 0.0 && f.d == 0.0));
}

#[test]
fn sweep_vad_weight_widens_gap_when_oad_is_noisier() {
    let noise = NoiseConfig {
        vad_sigma: 0.15,
        oad_sigma: 0.5,
    };
    let s = stream(10_000, 0.03, 4, noise);
    let make = || StreamInputs::from_synthetic(&s, &ScoreSource::Trace, noise, 0);
    let runs = value_method_sweep(&RunConfig::default(), &[(0.9, 0.1), (0.1, 0.9)], make, Execution::Parallel).unwrap();
    let rows = sweep_rows(&runs).unwrap();
    let gap = |i: usize| rows[2 * i + 1].d_avg - rows[2 * i].d_avg;
    assert!(gap(0) > gap(1), "{} vs {}", gap(0), gap(1));
}

fn csv_records(path: &std::path::Path) -> Vec<serde_json::Map<String, serde_json::Value>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            headers
                .iter()
                .zip(r.iter())
                .map(|(h, v)| (h.to_string(), serde_json::Value::String(v.to_string())))
                .collect()
        })
        .collect()
}

/// A CSV cell agrees with a JSON value if it is its textual form.
fn cell_agrees(cell: &str, json: &serde_json::Value) -> bool {
    match json {
        serde_json::Value::Null => cell.is_empty(),
        serde_json::Value::Bool(b) => cell == b.to_string(),
        serde_json::Value::Number(n) => cell.parse::<f64>().ok() == n.as_f64(),
        serde_json::Value::String(s) => cell == s,
        _ => false,
    }
}

#[test]
fn csv_and_json_agree() {
    let s = stream(4000, 0.03, 5, NoiseConfig::default());
    let make = || StreamInputs::from_synthetic(&s, &ScoreSource::Trace, NoiseConfig::default(), 0);
    let base = RunConfig::default();
    let run = run_pipeline(&base, make().unwrap()).unwrap().report;
    let mut tables = Tables::from_run(&run, DEFAULT_BINS).unwrap();
    let prepared = prepare(&base, make().unwrap()).unwrap();
    let limits = [prepared.total_cost() / 2.0, prepared.total_cost() / 4.0];
    let pr: Vec<_> = limits.iter().map(|m| prepared.retain(Policy::Priority, Some(*m)).unwrap().report).collect();
    let fr: Vec<_> = limits.iter().map(|m| prepared.retain(Policy::Fifo, Some(*m)).unwrap().report).collect();
    tables.retention = retention_report(&pr, &fr, &limits).unwrap();
    tables.sweep = sweep_rows(&value_method_sweep(&base, &DEFAULT_SWEEP_GRID, make, Execution::Parallel).unwrap()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let files = tables.write_csv(dir.path()).unwrap();
    assert_eq!(files.len(), 6);
    let json: serde_json::Value = serde_json::from_str(&tables.to_json().unwrap()).unwrap();
    for f in files {
        let name = f.file_stem().unwrap().to_str().unwrap();
        let rows = json[name].as_array().unwrap();
        let csv = csv_records(&f);
        assert_eq!(rows.len(), csv.len(), "{name}");
        for (j, c) in rows.iter().zip(&csv) {
            let j = j.as_object().unwrap();
            assert_eq!(j.len(), c.len(), "{name}");
            for (k, v) in j {
                let cell = c[k].as_str().unwrap();
                assert!(cell_agrees(cell, v), "{name}.{k}: csv {cell} vs json {v}");
            }
        }
    }
}

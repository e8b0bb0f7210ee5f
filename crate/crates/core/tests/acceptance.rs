//! Acceptance gate: one PASS / FAIL / SKIPPED line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout. A
//! positional argument filters criteria by name, the way libtest filters tests.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{Datelike, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trafficast::cells::{GruParams, LstmParams};
use trafficast::datapipe::{
    encode, iqr_bounds, make_windows, parse_csv, prepare, quantile, split, FeatureFrame, FeatureSet, PipelineConfig,
    ScalerParams, SplitPlan, WindowConfig, WindowedDataset,
};
use trafficast::metrics::DEFAULT_EPSILON;
use trafficast::network::{
    mse_loss_and_grad, predict_dataset, train, train_with_validator, CellKind, ModelConfig, Network, TrainConfig,
};
use trafficast::{cells::CellState, Matrix};

use common::{bin, pearson, real_metro_csv, run_ok, write_metro_like, MetroSpec};

enum Verdict {
    Pass(String),
    Fail(String),
    Skipped(String),
}

use Verdict::*;

type Check = fn() -> Vec<(&'static str, Verdict)>;

fn main() {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, Check); 9] = [
        ("c1_gradient_correctness", c1_gradients),
        ("c2_cell_equation_fidelity", c2_scalar_cells),
        ("c3_overfit_sine", c3_overfit),
        ("c4_desk_scale_metro", c4_desk_scale),
        ("c5_preprocessing_oracles", c5_preprocessing),
        ("c6_early_stopping", c6_early_stopping),
        ("c7_cli_determinism", c7_determinism),
        ("c8_dataset_contract", c8_dataset),
        ("c9_grid_study", c9_grid),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let verdicts = check();
        let secs = start.elapsed().as_secs_f64();
        for (label, v) in verdicts {
            let (tag, detail) = match v {
                Pass(d) => ("PASS", d),
                Fail(d) => {
                    failed += 1;
                    ("FAIL", d)
                }
                Skipped(d) => ("SKIPPED", d),
            };
            println!("acceptance {label:<4} {name:<28} {tag:<7} {detail} [{secs:.1}s]");
        }
    }
    println!("acceptance: {ran} criteria checked, {failed} failing");
    if failed > 0 {
        std::process::exit(1);
    }
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn within_budget(elapsed: Duration, budget_secs: u64) -> bool {
    elapsed <= Duration::from_secs(budget_secs)
}

// ---------------------------------------------------------------- 1

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn seq_loss(net: &Network, xs: &[Matrix], y: &Matrix) -> f64 {
    mse_loss_and_grad(&net.predict_window(xs).unwrap(), y).unwrap().0
}

/// Largest violation of the 1e-4 relative / 1e-7 absolute tolerance over
/// every parameter of one random network, or None if all agree.
fn gradient_mismatch(kind: CellKind, rng: &mut ChaCha8Rng) -> Option<String> {
    let hidden = rng.gen_range(1..=4);
    let input = rng.gen_range(1..=3);
    let seq = rng.gen_range(1..=5);
    let batch = rng.gen_range(1..=3);
    let depth = rng.gen_range(1..=2);
    let mut sizes = vec![hidden];
    if depth == 2 {
        sizes.push(rng.gen_range(1..=4));
    }
    let mut net = Network::new(ModelConfig {
        cell_kind: kind,
        layer_sizes: sizes.clone(),
        input_dim: input,
        horizon: 1,
        seed: rng.gen(),
    })
    .unwrap();
    for m in net.tensors_mut() {
        let noise = random_matrix(rng, m.rows(), m.cols(), 0.5);
        *m = m.add(&noise).unwrap();
    }
    let xs: Vec<Matrix> = (0..seq).map(|_| random_matrix(rng, input, batch, 1.0)).collect();
    let y = random_matrix(rng, 1, batch, 1.0);
    let (pred, cache) = net.forward_sequence(&xs).unwrap();
    let (_, d_pred) = mse_loss_and_grad(&pred, &y).unwrap();
    let grads = net.backward_sequence(&cache, &d_pred).unwrap();
    let names: Vec<String> = net.tensors().into_iter().map(|(n, _)| n).collect();
    let h = 1e-5;
    for (ti, name) in names.iter().enumerate() {
        for k in 0..grads.tensors[ti].as_slice().len() {
            let mut plus = net.clone();
            plus.tensors_mut()[ti].as_mut_slice()[k] += h;
            let mut minus = net.clone();
            minus.tensors_mut()[ti].as_mut_slice()[k] -= h;
            let numeric = (seq_loss(&plus, &xs, &y) - seq_loss(&minus, &xs, &y)) / (2.0 * h);
            let analytic = grads.tensors[ti].as_slice()[k];
            let abs = (numeric - analytic).abs();
            let rel = abs / numeric.abs().max(analytic.abs());
            if abs > 1e-7 && rel > 1e-4 {
                return Some(format!(
                    "{kind} layers {sizes:?} input {input} seq {seq}: {name}[{k}] analytic {analytic:e} numeric {numeric:e}"
                ));
            }
        }
    }
    None
}

fn c1_gradients() -> Vec<(&'static str, Verdict)> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    for kind in [CellKind::Lstm, CellKind::Gru] {
        for _ in 0..50 {
            if let Some(msg) = gradient_mismatch(kind, &mut rng) {
                failures.push(msg);
            }
        }
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "100 random configs, {} mismatches, {:.1}s (budget 60s){}",
        failures.len(),
        elapsed.as_secs_f64(),
        failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
    );
    vec![("1", verdict(failures.is_empty() && within_budget(elapsed, 60), detail))]
}

// ---------------------------------------------------------------- 2

fn c2_scalar_cells() -> Vec<(&'static str, Verdict)> {
    let x = Matrix::zeros(1, 1);
    let lstm = LstmParams::zeros(1, 1);
    let prev = CellState {
        h: Matrix::zeros(1, 1),
        c: Some(Matrix::filled(1, 1, 1.0)),
    };
    let h_lstm = lstm.step(&x, &prev).unwrap().0.h.get(0, 0);
    // f = i = o = 0.5, C~ = 0, C = 0.5, h = 0.5 tanh(0.5)
    let lstm_oracle = 0.5 * 0.5f64.tanh();

    let gru = GruParams::zeros(1, 1);
    let prev = CellState {
        h: Matrix::filled(1, 1, 1.0),
        c: None,
    };
    let h_gru = gru.step(&x, &prev).unwrap().0.h.get(0, 0);
    // z = 0.5, H~ = tanh(0) = 0, h = 0.5 * 1 + 0.5 * 0
    let ok = (h_lstm - lstm_oracle).abs() < 1e-12 && (h_lstm - 0.2310586).abs() < 1e-7 && (h_gru - 0.5).abs() < 1e-12;
    vec![(
        "2",
        verdict(ok, format!("lstm h = {h_lstm:.12} (hand 0.5 tanh 0.5 = {lstm_oracle:.12}), gru h = {h_gru}")),
    )]
}

// ---------------------------------------------------------------- 3

/// 64 windows (lookback 6, horizon 1) of a noiseless daily sine in [0, 1].
fn sine_dataset() -> WindowedDataset {
    let lookback = 6;
    let n = 64;
    let series: Vec<f64> = (0..n + lookback)
        .map(|t| 0.5 + 0.5 * (std::f64::consts::TAU * t as f64 / 24.0).sin())
        .collect();
    let base = common::ts(2016, 1, 1, 0);
    WindowedDataset {
        inputs: (0..n)
            .map(|i| Matrix::from_vec(lookback, 1, series[i..i + lookback].to_vec()).unwrap())
            .collect(),
        targets: Matrix::from_vec(n, 1, series[lookback..].to_vec()).unwrap(),
        target_timestamps: (0..n).map(|i| base + chrono::Duration::hours((i + lookback) as i64)).collect(),
        lookback,
        horizon: 1,
        n_features: 1,
    }
}

fn c3_overfit() -> Vec<(&'static str, Verdict)> {
    let ds = sine_dataset();
    let mut out = Vec::new();
    for (label, kind) in [("3a", CellKind::Lstm), ("3b", CellKind::Gru)] {
        let start = Instant::now();
        let mut net = Network::new(ModelConfig {
            cell_kind: kind,
            layer_sizes: vec![16],
            input_dim: 1,
            horizon: 1,
            seed: 42,
        })
        .unwrap();
        let cfg = TrainConfig {
            max_epochs: 2000,
            ..TrainConfig::default()
        };
        let report = train(&mut net, &ds, &ds, &cfg).unwrap();
        let pred = predict_dataset(&net, &ds).unwrap();
        let mse = mse_loss_and_grad(&pred, &ds.targets.transpose()).unwrap().0;
        let elapsed = start.elapsed();
        out.push((
            label,
            verdict(
                mse < 1e-3 && within_budget(elapsed, 180),
                format!(
                    "{kind} hidden 16: train mse {mse:.3e} (target < 1e-3) after {} epochs, {:.1}s (budget 180s)",
                    report.history.len(),
                    elapsed.as_secs_f64()
                ),
            ),
        ));
    }
    out
}

// ---------------------------------------------------------------- 4

fn metro_file(dir: &Path) -> (std::path::PathBuf, &'static str) {
    match real_metro_csv() {
        Some(p) => (p, "real Metro file"),
        None => (write_metro_like(dir, "metro.csv", &MetroSpec::full()), "synthetic Metro-like file"),
    }
}

fn c4_desk_scale() -> Vec<(&'static str, Verdict)> {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (path, source) = metro_file(dir.path());
    let parsed = parse_csv(&path).unwrap();
    let tail = &parsed.records[parsed.records.len() - 2500..];

    let mut pipeline = PipelineConfig::new(6, FeatureSet::Reduced);
    pipeline.split = SplitPlan::TailFraction { test_fraction: 0.1 };
    let prepared = match prepare(tail, &pipeline) {
        Ok(p) => p,
        Err(e) => return vec![("4", Fail(format!("preprocessing failed: {e}")))],
    };
    let mut net = Network::new(ModelConfig {
        cell_kind: CellKind::Lstm,
        layer_sizes: vec![32, 16],
        input_dim: prepared.columns.len(),
        horizon: 1,
        seed: 42,
    })
    .unwrap();
    let cfg = TrainConfig {
        max_epochs: 60,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &prepared.train, &prepared.val, &cfg).unwrap();
    let ev = trafficast::cli::evaluate_on_test(&net, &prepared.scaler, &prepared.test).unwrap();
    let r = pearson(&ev.predicted, &ev.actual);
    let zero_hours = ev.actual.iter().filter(|v| **v == 0.0).count();
    let elapsed = start.elapsed();
    let windows = prepared.sizes.train_windows + prepared.sizes.val_windows + prepared.sizes.test_windows;
    vec![(
        "4",
        verdict(
            r > 0.8 && ev.report.mape.is_finite() && within_budget(elapsed, 600),
            format!(
                "{source}, {windows} windows, {} epochs: pearson {r:.4} (target > 0.8), mape {:.4} finite with {zero_hours} zero-volume test hours (eps {DEFAULT_EPSILON:e}), {:.1}s (budget 600s)",
                report.history.len(),
                ev.report.mape,
                elapsed.as_secs_f64()
            ),
        ),
    )]
}

// ---------------------------------------------------------------- 5

/// k-th smallest value by rank counting, without sorting.
fn order_statistic(values: &[f64], k: usize) -> f64 {
    for &v in values {
        let below = values.iter().filter(|&&w| w < v).count();
        let equal = values.iter().filter(|&&w| w == v).count();
        if below <= k && k < below + equal {
            return v;
        }
    }
    unreachable!("rank {k} exists")
}

fn oracle_quantile(values: &[f64], q: f64) -> f64 {
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let a = order_statistic(values, lo);
    if frac == 0.0 {
        a
    } else {
        a + frac * (order_statistic(values, lo + 1) - a)
    }
}

fn hourly_frame(stamps: &[NaiveDateTime], rng: &mut ChaCha8Rng) -> FeatureFrame {
    let values: Vec<f64> = stamps.iter().flat_map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..7000.0)]).collect();
    FeatureFrame::new(
        vec!["temp".into(), "traffic_volume".into()],
        stamps.to_vec(),
        Matrix::from_vec(stamps.len(), 2, values).unwrap(),
    )
    .unwrap()
}

/// Brute force: every start whose lookback + horizon hours are consecutive.
fn oracle_window_count(stamps: &[NaiveDateTime], span: usize) -> usize {
    (0..stamps.len())
        .filter(|&i| {
            i + span <= stamps.len() && (1..span).all(|k| stamps[i + k] - stamps[i + k - 1] == chrono::Duration::hours(1))
        })
        .count()
}

fn c5_preprocessing() -> Vec<(&'static str, Verdict)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_q: f64 = 0.0;
    let mut worst_bound: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(5..=200);
        let values: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen::<f64>() < 0.2 {
                    (rng.gen_range(0..5) as f64) * 10.0
                } else {
                    rng.gen_range(-1e3..1e3)
                }
            })
            .collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        for q in [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0] {
            worst_q = worst_q.max((quantile(&sorted, q).unwrap() - oracle_quantile(&values, q)).abs());
        }
        let (q1, q3, lower, upper) = iqr_bounds(&values).unwrap();
        let (oq1, oq3) = (oracle_quantile(&values, 0.25), oracle_quantile(&values, 0.75));
        let oiqr = oq3 - oq1;
        for (a, b) in [(q1, oq1), (q3, oq3), (lower, oq1 - 1.5 * oiqr), (upper, oq3 + 1.5 * oiqr)] {
            worst_bound = worst_bound.max((a - b).abs());
        }
    }

    let mut worst_round_trip: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(2..100);
        let base = common::ts(2016, 1, 1, 0);
        let stamps: Vec<NaiveDateTime> = (0..n).map(|i| base + chrono::Duration::hours(i as i64)).collect();
        let frame = hourly_frame(&stamps, &mut rng);
        let scaler = ScalerParams::fit(&frame).unwrap();
        let scaled = scaler.transform(&frame).unwrap();
        let back = scaler.inverse_target(&scaled.column(1));
        for (a, b) in back.iter().zip(frame.column(1)) {
            worst_round_trip = worst_round_trip.max((a - b).abs());
        }
    }

    let mut window_mismatches = 0;
    for _ in 0..300 {
        let n = rng.gen_range(1..150);
        let gap_rate = rng.gen_range(0.0..0.3);
        let mut t = common::ts(2016, 1, 1, 0);
        let mut stamps = Vec::with_capacity(n);
        for _ in 0..n {
            stamps.push(t);
            let step = if rng.gen::<f64>() < gap_rate { rng.gen_range(2..30) } else { 1 };
            t += chrono::Duration::hours(step);
        }
        let lookback = rng.gen_range(1..=12);
        let frame = hourly_frame(&stamps, &mut rng);
        let cfg = WindowConfig::new(lookback, FeatureSet::Reduced);
        let got = match make_windows(&frame, &cfg) {
            Ok(ds) => ds.len(),
            Err(_) => 0,
        };
        if got != oracle_window_count(&stamps, lookback + 1) {
            window_mismatches += 1;
        }
    }

    let ok = worst_q <= 1e-12 && worst_bound <= 1e-12 && worst_round_trip < 1e-9 && window_mismatches == 0;
    vec![(
        "5",
        verdict(
            ok,
            format!(
                "max |quantile - oracle| {worst_q:e}, max |iqr bound - oracle| {worst_bound:e} (1000 arrays, tol 1e-12); scaler round trip {worst_round_trip:e} (tol 1e-9); window count mismatches {window_mismatches}/300"
            ),
        ),
    )]
}

// ---------------------------------------------------------------- 6

fn c6_early_stopping() -> Vec<(&'static str, Verdict)> {
    let ds = sine_dataset();
    let mut net = Network::new(ModelConfig {
        cell_kind: CellKind::Lstm,
        layer_sizes: vec![4],
        input_dim: 1,
        horizon: 1,
        seed: 6,
    })
    .unwrap();
    let cfg = TrainConfig {
        max_epochs: 100,
        base_lr: 1e-2,
        ..TrainConfig::default()
    };
    // Improves once (epoch 2), then plateaus.
    let scripted = [0.5, 0.4, 0.4, 0.45, 0.41, 0.9, 0.4, 0.3, 0.2];
    let mut snapshot = None;
    let report = train_with_validator(&mut net, &ds, &cfg, |n, epoch| {
        if epoch == 2 {
            snapshot = Some(n.clone());
        }
        Ok(scripted[epoch - 1])
    })
    .unwrap();
    let snapshot = snapshot.unwrap();
    let probe: Vec<Matrix> = (0..6).map(|t| Matrix::filled(1, 3, 0.1 * t as f64)).collect();
    let same_prediction = net.predict_window(&probe).unwrap() == snapshot.predict_window(&probe).unwrap();
    let epochs = report.history.len();
    vec![(
        "6",
        verdict(
            epochs == 7 && report.best_epoch == 2 && report.stopped_early && same_prediction,
            format!(
                "best epoch {} of {epochs} run (expected 2 of 7, patience 5), restored predictions equal snapshot: {same_prediction}",
                report.best_epoch
            ),
        ),
    )]
}

// ---------------------------------------------------------------- 7

fn c7_determinism() -> Vec<(&'static str, Verdict)> {
    let dir = tempfile::tempdir().unwrap();
    let data = write_metro_like(dir.path(), "metro.csv", &MetroSpec::small());
    let train_into = |out: &Path| {
        run_ok(bin().args([
            "train",
            "--data",
            data.to_str().unwrap(),
            "--cell",
            "lstm",
            "--lookback",
            "6",
            "--layers",
            "16,8",
            "--epochs",
            "3",
            "--seed",
            "123",
            "--out",
            out.to_str().unwrap(),
        ]));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train_into(&a);
    train_into(&b);
    let same = |f: &str| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
    let (curve, model) = (same("loss_curve.csv"), same("model.txt"));
    vec![(
        "7",
        verdict(curve && model, format!("loss_curve.csv identical: {curve}, model.txt identical: {model}")),
    )]
}

// ---------------------------------------------------------------- 8

fn c8_dataset() -> Vec<(&'static str, Verdict)> {
    let mut out = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    match real_metro_csv() {
        Some(path) => {
            let stats_out = dir.path().join("stats.csv");
            let o = run_ok(bin().args(["stats", "--data", path.to_str().unwrap(), "--out", stats_out.to_str().unwrap()]));
            let stdout = String::from_utf8_lossy(&o.stdout);
            out.push((
                "8a",
                verdict(stdout.contains("rows_read=48204\n"), format!("stats on {}: {}", path.display(), stdout.lines().next().unwrap_or(""))),
            ));
        }
        None => out.push((
            "8a",
            Skipped("real Metro file not available (set TRAFFICAST_METRO_CSV to its path); 48204-row count not checked".into()),
        )),
    }

    let (path, source) = metro_file(dir.path());
    let parsed = parse_csv(&path).unwrap();
    let frame = encode(&parsed.records, FeatureSet::All).unwrap();
    let (train_f, val_f, test_f) = split(&frame, 2017, 0.2).unwrap();
    let max_train = *train_f.timestamps.last().unwrap();
    let min_val = val_f.timestamps[0];
    let min_test = test_f.timestamps[0];
    let test_2018 = test_f.timestamps.iter().all(|t| t.year() == 2018);
    out.push((
        "8b",
        verdict(
            max_train < min_val && min_val < min_test && test_2018,
            format!("{source}: max(train) {max_train} < min(val) {min_val} < min(test) {min_test}, test all 2018: {test_2018}"),
        ),
    ));
    out
}

// ---------------------------------------------------------------- 9

fn c9_grid() -> Vec<(&'static str, Verdict)> {
    let dir = tempfile::tempdir().unwrap();
    let (path, source) = metro_file(dir.path());
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get()).min(4);
    let out = dir.path().join("grid");
    let start = Instant::now();
    let status = bin()
        .args([
            "grid",
            "--data",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--scale",
            "0.05",
            "--jobs",
            &jobs.to_string(),
        ])
        .output()
        .unwrap();
    let elapsed = start.elapsed();
    let report = std::fs::read_to_string(out.join("grid_report.csv")).unwrap_or_default();
    let mut rdr = csv::Reader::from_reader(report.as_bytes());
    let header_ok = rdr
        .headers()
        .map(|h| h.iter().collect::<Vec<_>>().join(",") == trafficast::cli::GRID_HEADER)
        .unwrap_or(false);
    let rows: Vec<csv::StringRecord> = rdr.records().filter_map(|r| r.ok()).collect();
    let ok_rows = rows
        .iter()
        .filter(|r| r.len() == 10 && &r[9] == "ok" && r[4].parse::<f64>().is_ok_and(f64::is_finite))
        .count();
    let failures: Vec<String> = rows.iter().filter(|r| &r[9] != "ok").map(|r| format!("{}/{}/{}/{}: {}", &r[0], &r[1], &r[2], &r[3], &r[9])).collect();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let secs = elapsed.as_secs_f64();
    // Meeting the budget on fewer cores implies meeting it on four; missing
    // it there says nothing about a four-core machine.
    let timing = if within_budget(elapsed, 45 * 60) {
        Pass(format!("{secs:.0}s with --jobs {jobs} on {cores} core(s) (budget 2700s on 4 cores)"))
    } else if cores >= 4 {
        Fail(format!("{secs:.0}s with --jobs {jobs} on {cores} cores (budget 2700s)"))
    } else {
        Skipped(format!(
            "{secs:.0}s with --jobs {jobs} exceeds 2700s, but the budget is for 4 cores and this machine has {cores}"
        ))
    };
    vec![
        (
            "9a",
            verdict(
                status.status.success() && header_ok && rows.len() == 16 && ok_rows == 16,
                format!(
                    "{source}, --scale 0.05, --jobs {jobs}: {ok_rows}/16 runs ok, {} rows, header ok: {header_ok}{}",
                    rows.len(),
                    failures.first().map(|f| format!("; first failure {f}")).unwrap_or_default()
                ),
            ),
        ),
        ("9b", timing),
    ]
}

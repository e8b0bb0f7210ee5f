//! `trafficast` command-line driver.
//!
//! Every file is written through [`write_atomic`], so an interrupted run never
//! leaves a partial file under its final name.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datapipe::{
    describe, describe_csv, encode, iqr_filter, parse_csv, prepare, prepare_test, FeatureSet, ParsedCsv, PipelineConfig,
    Prepared, RawRecord, ScalerParams, SplitSizes,
};
use crate::error::Error;
use crate::fsutil::write_atomic;
use crate::metrics::{evaluate, EvalReport, DEFAULT_EPSILON};
use crate::network::{
    load_model, predict_dataset, save_model, train, CellKind, EpochRecord, ModelConfig, Network, TrainConfig, TrainReport,
};

pub const LOSS_CURVE_HEADER: &str = "epoch,train_loss,val_loss";
pub const PREDICTIONS_HEADER: &str = "timestamp,actual,predicted";
pub const GRID_HEADER: &str = "cell,lookback,features,setting,mse,mae,mape,epochs_ran,wall_seconds,status";

/// Hidden sizes and epoch budgets of the two network settings.
pub const SETTING_A: (&[usize], usize) = (&[128, 64, 32, 16], 300);
pub const SETTING_B: (&[usize], usize) = (&[256, 128, 64, 32], 500);

#[derive(Debug, Parser)]
#[command(name = "trafficast", version, about = "LSTM/GRU hourly traffic-volume forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-column statistics and would-be IQR removals.
    Stats(StatsArgs),
    /// Preprocess, train one model, write model.txt, loss_curve.csv, run.json.
    Train(TrainArgs),
    /// Evaluate a saved model on the test split of a data file.
    Eval(EvalArgs),
    /// Run the 16-run cell x lookback x features x setting grid.
    Grid(GridArgs),
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV (column,count,mean,std,min,q25,q50,q75,max).
    #[arg(long)]
    pub out: PathBuf,
}

/// Comma-separated hidden sizes as one flag value.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSizes(pub Vec<usize>);

fn parse_layers(s: &str) -> Result<LayerSizes, String> {
    let sizes: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("`{p}` is not a layer size")))
        .collect::<Result<_, _>>()?;
    if sizes.is_empty() || sizes.contains(&0) {
        return Err("layer sizes must be positive integers".into());
    }
    Ok(LayerSizes(sizes))
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1]"))
    }
}

fn parse_positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn parse_non_negative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a non-negative number")),
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "lstm", value_parser = |s: &str| s.parse::<CellKind>().map_err(|e| e.to_string()))]
    pub cell: CellKind,
    /// Hours of history per window.
    #[arg(long, default_value_t = 24, value_parser = clap::value_parser!(u32).range(1..))]
    pub lookback: u32,
    #[arg(long, default_value = "all", value_parser = |s: &str| s.parse::<FeatureSet>().map_err(|e| e.to_string()))]
    pub features: FeatureSet,
    /// Comma-separated hidden sizes, bottom layer first.
    #[arg(long, default_value = "128,64,32,16", value_parser = parse_layers)]
    pub layers: LayerSizes,
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u32).range(1..))]
    pub epochs: u32,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..))]
    pub batch: u32,
    #[arg(long, default_value_t = 1e-4, value_parser = parse_positive_f64)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-5, value_parser = parse_non_negative_f64)]
    pub decay: f64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub patience: u32,
    #[arg(long, env = "TRAFFICAST_SEED", default_value_t = 42)]
    pub seed: u64,
    /// Train on this fraction of the data (latest train rows, earliest test rows).
    #[arg(long, value_parser = parse_fraction)]
    pub scale: Option<f64>,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 2017)]
    pub train_end_year: i32,
    /// Replay the configuration stored in a previous run.json.
    #[arg(long, conflicts_with_all = ["cell", "lookback", "features", "layers", "epochs", "batch", "lr", "decay", "patience", "scale", "val_fraction", "train_end_year"])]
    pub from_run: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Encode the data with this feature set instead of the model's own.
    #[arg(long, value_parser = |s: &str| s.parse::<FeatureSet>().map_err(|e| e.to_string()))]
    pub features: Option<FeatureSet>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of the data each run uses.
    #[arg(long, value_parser = parse_fraction)]
    pub scale: Option<f64>,
    /// Runs executed concurrently; 1 keeps the grid strictly sequential.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: u32,
    /// Cap on epochs for both settings (defaults: A 300, B 500).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_epochs: Option<u32>,
    #[arg(long, env = "TRAFFICAST_SEED", default_value_t = 42)]
    pub seed: u64,
}

/// Command-line misuse detected after clap parsing; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Everything needed to reproduce one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub cell_kind: CellKind,
    pub layer_sizes: Vec<usize>,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub sizes: SplitSizes,
    pub columns: Vec<String>,
    pub epochs_ran: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

pub struct RunOutcome {
    pub network: Network,
    pub prepared: Prepared,
    pub report: TrainReport,
}

/// Status code for a failed command: 2 for misuse or a missing input file.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(Error::Io { source, .. }) = cause.downcast_ref::<Error>() {
            if source.kind() == std::io::ErrorKind::NotFound {
                return 2;
            }
        }
    }
    1
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Stats(a) => cmd_stats(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Grid(a) => cmd_grid(&a),
    }
}

fn read_data(path: &Path) -> anyhow::Result<ParsedCsv> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "data file not found")).into());
    }
    Ok(parse_csv(path)?)
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

pub fn cmd_stats(args: &StatsArgs) -> anyhow::Result<()> {
    let parsed = read_data(&args.data)?;
    let frame = encode(&parsed.records, FeatureSet::All)?;
    let stats = describe(&frame)?;
    write_atomic(&args.out, describe_csv(&stats)?.as_bytes())?;

    let outlier_cols: Vec<String> = ["temp", "rain_1h"].map(String::from).to_vec();
    let (kept, bounds) = iqr_filter(&frame, &outlier_cols)?;
    println!("rows_read={}", parsed.raw_rows);
    println!("duplicate_timestamps={}", parsed.duplicates_removed);
    println!("rows_after_dedup={}", parsed.records.len());
    for b in &bounds {
        println!(
            "iqr column={} q1={} q3={} lower={} upper={} would_remove={}",
            b.column, b.q1, b.q3, b.lower, b.upper, b.removed
        );
    }
    println!("iqr rows_would_remain={}", kept.len());
    Ok(())
}

fn run_config_from_args(args: &TrainArgs) -> anyhow::Result<RunConfig> {
    if let Some(path) = &args.from_run {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let summary: RunSummary = serde_json::from_str(&text).with_context(|| format!("{} is not a run.json", path.display()))?;
        let mut cfg = summary.config;
        if let Some(d) = &args.data {
            cfg.data = d.clone();
        }
        return Ok(cfg);
    }
    let data = args
        .data
        .clone()
        .ok_or_else(|| UsageError("--data is required unless --from-run is given".into()))?;
    if !(0.0..1.0).contains(&args.val_fraction) {
        return Err(UsageError(format!("--val-fraction {} outside [0, 1)", args.val_fraction)).into());
    }
    let mut pipeline = PipelineConfig::new(args.lookback as usize, args.features);
    pipeline.split = crate::datapipe::SplitPlan::Year {
        train_end_year: args.train_end_year,
    };
    pipeline.val_fraction = args.val_fraction;
    pipeline.scale = args.scale;
    Ok(RunConfig {
        data,
        cell_kind: args.cell,
        layer_sizes: args.layers.0.clone(),
        pipeline,
        train: TrainConfig {
            base_lr: args.lr,
            decay: args.decay,
            batch_size: args.batch as usize,
            max_epochs: args.epochs as usize,
            patience: args.patience as usize,
            seed: args.seed,
        },
    })
}

/// Preprocesses `records` and trains one model as described by `cfg`.
pub fn execute_run(records: &[RawRecord], cfg: &RunConfig) -> anyhow::Result<RunOutcome> {
    let prepared = prepare(records, &cfg.pipeline)?;
    let mut network = Network::new(ModelConfig {
        cell_kind: cfg.cell_kind,
        layer_sizes: cfg.layer_sizes.clone(),
        input_dim: prepared.columns.len(),
        horizon: cfg.pipeline.window.horizon,
        seed: cfg.train.seed,
    })?;
    let report = train(&mut network, &prepared.train, &prepared.val, &cfg.train)?;
    network.meta.insert("pipeline".into(), serde_json::to_string(&cfg.pipeline)?);
    network.meta.insert("scaler".into(), serde_json::to_string(&prepared.scaler)?);
    Ok(RunOutcome {
        network,
        prepared,
        report,
    })
}

pub fn loss_curve_csv(history: &[EpochRecord]) -> String {
    let mut s = format!("{LOSS_CURVE_HEADER}\n");
    for r in history {
        writeln!(s, "{},{},{}", r.epoch, r.train_loss, r.val_loss).unwrap();
    }
    s
}

/// Writes model.txt, loss_curve.csv and run.json into `dir`.
fn write_run_outputs(dir: &Path, cfg: &RunConfig, outcome: &RunOutcome) -> anyhow::Result<()> {
    ensure_dir(dir)?;
    save_model(&outcome.network, &dir.join("model.txt"))?;
    write_atomic(&dir.join("loss_curve.csv"), loss_curve_csv(&outcome.report.history).as_bytes())?;
    let summary = RunSummary {
        config: cfg.clone(),
        sizes: outcome.prepared.sizes.clone(),
        columns: outcome.prepared.columns.clone(),
        epochs_ran: outcome.report.history.len(),
        best_epoch: outcome.report.best_epoch,
        best_val_loss: outcome.report.best_val_loss,
        stopped_early: outcome.report.stopped_early,
    };
    write_atomic(&dir.join("run.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let cfg = run_config_from_args(args)?;
    let parsed = read_data(&cfg.data)?;
    let outcome = execute_run(&parsed.records, &cfg)?;
    write_run_outputs(&args.out, &cfg, &outcome)?;
    let r = &outcome.report;
    println!(
        "trained {} {:?}: {} epochs, best epoch {} (val mse {:.6e}), outputs in {}",
        cfg.cell_kind,
        cfg.layer_sizes,
        r.history.len(),
        r.best_epoch,
        r.best_val_loss,
        args.out.display()
    );
    Ok(())
}

fn model_meta<T: serde::de::DeserializeOwned>(net: &Network, key: &str) -> anyhow::Result<T> {
    let raw = net
        .meta
        .get(key)
        .ok_or_else(|| Error::ModelFormat(format!("model carries no `{key}` metadata")))?;
    Ok(serde_json::from_str(raw).map_err(|e| Error::ModelFormat(format!("bad `{key}` metadata: {e}")))?)
}

/// Test-split predictions in vehicles per hour, with their report.
pub struct Evaluation {
    pub report: EvalReport,
    pub timestamps: Vec<chrono::NaiveDateTime>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

pub fn evaluate_on_test(net: &Network, scaler: &ScalerParams, test: &crate::datapipe::WindowedDataset) -> anyhow::Result<Evaluation> {
    let pred = predict_dataset(net, test)?;
    let pred_scaled = pred.row(0).to_vec();
    let target_scaled = test.targets.transpose().row(0).to_vec();
    let report = evaluate(&pred_scaled, &target_scaled, scaler, DEFAULT_EPSILON)?;
    Ok(Evaluation {
        report,
        timestamps: test.target_timestamps.clone(),
        actual: scaler.inverse_target(&target_scaled),
        predicted: scaler.inverse_target(&pred_scaled),
    })
}

#[derive(Serialize)]
struct MetricsJson<'a> {
    #[serde(flatten)]
    report: &'a EvalReport,
    mape_percent: f64,
}

fn write_eval_outputs(dir: &Path, ev: &Evaluation) -> anyhow::Result<()> {
    ensure_dir(dir)?;
    let metrics = MetricsJson {
        report: &ev.report,
        mape_percent: ev.report.mape * 100.0,
    };
    write_atomic(&dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)?.as_bytes())?;
    let mut csv = format!("{PREDICTIONS_HEADER}\n");
    for ((t, a), p) in ev.timestamps.iter().zip(&ev.actual).zip(&ev.predicted) {
        writeln!(csv, "{},{},{}", t.format(crate::datapipe::DATE_FORMAT), a, p).unwrap();
    }
    write_atomic(&dir.join("predictions.csv"), csv.as_bytes())?;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let net = load_model(&args.model)?;
    let mut pipeline: PipelineConfig = model_meta(&net, "pipeline")?;
    let scaler: ScalerParams = model_meta(&net, "scaler")?;
    let parsed = read_data(&args.data)?;
    if let Some(fs) = args.features {
        if fs != pipeline.window.feature_set {
            let data_cols = encode(&parsed.records[..1], fs)?.column_names;
            return Err(Error::FeatureMismatch {
                model: scaler.columns.clone(),
                data: data_cols,
            }
            .into());
        }
        pipeline.window.feature_set = fs;
    }
    let test = prepare_test(&parsed.records, &pipeline, &scaler)?;
    let ev = evaluate_on_test(&net, &scaler, &test)?;
    write_eval_outputs(&args.out, &ev)?;
    println!(
        "n={} mse={:.4} mae={:.4} mape={:.4}%",
        ev.report.n,
        ev.report.mse,
        ev.report.mae,
        ev.report.mape * 100.0
    );
    Ok(())
}

#[derive(Clone, Debug)]
pub struct GridCell {
    pub cell: CellKind,
    pub lookback: usize,
    pub features: FeatureSet,
    pub setting: char,
}

impl GridCell {
    pub fn name(&self) -> String {
        format!("{}_l{}_{}_{}", self.cell, self.lookback, self.features, self.setting)
    }
}

/// The 16 runs: both cells, lookbacks 6 and 24, both feature sets, settings A and B.
pub fn grid_cells() -> Vec<GridCell> {
    let mut out = Vec::with_capacity(16);
    for cell in [CellKind::Lstm, CellKind::Gru] {
        for lookback in [6, 24] {
            for features in [FeatureSet::All, FeatureSet::Reduced] {
                for setting in ['A', 'B'] {
                    out.push(GridCell {
                        cell,
                        lookback,
                        features,
                        setting,
                    });
                }
            }
        }
    }
    out
}

pub struct GridRow {
    pub cell: GridCell,
    pub result: Result<(EvalReport, usize), String>,
    pub wall_seconds: f64,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn grid_report_csv(rows: &[GridRow]) -> String {
    let mut s = format!("{GRID_HEADER}\n");
    for r in rows {
        let c = &r.cell;
        match &r.result {
            Ok((m, epochs)) => writeln!(
                s,
                "{},{},{},{},{},{},{},{},{:.3},ok",
                c.cell, c.lookback, c.features, c.setting, m.mse, m.mae, m.mape, epochs, r.wall_seconds
            ),
            Err(e) => writeln!(
                s,
                "{},{},{},{},NaN,NaN,NaN,0,{:.3},{}",
                c.cell,
                c.lookback,
                c.features,
                c.setting,
                r.wall_seconds,
                csv_field(&format!("error: {e}"))
            ),
        }
        .unwrap();
    }
    s
}

fn grid_run(records: &[RawRecord], args: &GridArgs, cell: &GridCell) -> anyhow::Result<(EvalReport, usize)> {
    let (layers, epochs) = if cell.setting == 'A' { SETTING_A } else { SETTING_B };
    let mut pipeline = PipelineConfig::new(cell.lookback, cell.features);
    pipeline.scale = args.scale;
    let cfg = RunConfig {
        data: args.data.clone(),
        cell_kind: cell.cell,
        layer_sizes: layers.to_vec(),
        pipeline,
        train: TrainConfig {
            max_epochs: args.max_epochs.map_or(epochs, |m| (m as usize).min(epochs)),
            seed: args.seed,
            ..TrainConfig::default()
        },
    };
    let outcome = execute_run(records, &cfg)?;
    let dir = args.out.join("runs").join(cell.name());
    write_run_outputs(&dir, &cfg, &outcome)?;
    let ev = evaluate_on_test(&outcome.network, &outcome.prepared.scaler, &outcome.prepared.test)?;
    write_eval_outputs(&dir, &ev)?;
    Ok((ev.report, outcome.report.history.len()))
}

pub fn cmd_grid(args: &GridArgs) -> anyhow::Result<()> {
    let parsed = read_data(&args.data)?;
    ensure_dir(&args.out)?;
    let cells = grid_cells();
    let run_one = |cell: &GridCell| {
        let start = Instant::now();
        let result = grid_run(&parsed.records, args, cell).map_err(|e| format!("{e:#}"));
        let wall_seconds = start.elapsed().as_secs_f64();
        match &result {
            Ok((m, epochs)) => log::info!("{}: mse {:.2} after {epochs} epochs ({wall_seconds:.1}s)", cell.name(), m.mse),
            Err(e) => log::warn!("{} failed: {e}", cell.name()),
        }
        GridRow {
            cell: cell.clone(),
            result,
            wall_seconds,
        }
    };
    let rows: Vec<GridRow> = if args.jobs <= 1 {
        cells.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs as usize)
            .build()
            .context("cannot start worker threads")?;
        pool.install(|| cells.par_iter().map(run_one).collect())
    };
    write_atomic(&args.out.join("grid_report.csv"), grid_report_csv(&rows).as_bytes())?;
    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    println!("grid: {} runs, {} failed, report in {}", rows.len(), failed, args.out.join("grid_report.csv").display());
    if failed > 0 {
        bail!("{failed} of {} grid runs failed", rows.len());
    }
    Ok(())
}

//! `occulstm` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or flag error, 3 data or precondition
//! error, 4 numerical failure.

pub mod config;
pub mod plot;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use occupancy_core::dataio::{group_by_day, make_windows, require_labels, DayGroup};
use occupancy_core::eval::{evaluate_model, predict_label, Evaluation};
use occupancy_core::model::{Mode, Model, ModelConfig};
use occupancy_core::synth::{gen_readings, gen_schedule, RoomParams};
use occupancy_core::train::{fit, TrainError, TrainHistory, TrainHyper};
use occupancy_core::{load_checkpoint, parse_sensor_csv, save_checkpoint, split_by_days, write_sensor_csv, DataError};

use config::{ConfigFile, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::DivergedLoss { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "occulstm", version, about = "Room occupancy estimation from environmental sensors")]
pub struct Cli {
    /// `key = value` file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled sensor log.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on labelled data.
    Evaluate(EvaluateArgs),
    /// Predict occupancy for every window of a sensor log.
    Predict(PredictArgs),
    /// Draw truth and prediction series as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub days: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "data.csv")]
    pub out: PathBuf,
    /// Ground-truth schedule CSV; defaults to `<out>.schedule.csv`.
    #[arg(long)]
    pub schedule_out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

impl ModelArgs {
    pub fn resolve(self, file: &ConfigFile) -> Result<RunConfig, CliError> {
        let d = RunConfig::default();
        let cfg = RunConfig {
            mode: file.resolve(self.mode, "mode", d.mode)?,
            hidden_dim: file.resolve(self.hidden_dim, "hidden_dim", d.hidden_dim)?,
            window_len: file.resolve(self.window_len, "window_len", d.window_len)?,
            stride: file.resolve(self.stride, "stride", d.stride)?,
            epochs: file.resolve(self.epochs, "epochs", d.epochs)?,
            batch_size: file.resolve(self.batch, "batch", d.batch_size)?,
            learning_rate: file.resolve(self.learning_rate, "lr", d.learning_rate)?,
            seed: file.resolve(self.seed, "seed", d.seed)?,
            n_train: file.resolve(self.n_train, "n_train", d.n_train)?,
            n_val: file.resolve(self.n_val, "n_val", d.n_val)?,
            n_test: file.resolve(self.n_test, "n_test", d.n_test)?,
            threads: file.resolve(self.threads, "threads", d.threads)?,
            clip_norm: file.resolve_opt(self.clip_norm, "clip_norm")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "model.ckpt")]
    pub checkpoint: PathBuf,
    /// Per-epoch history CSV; defaults to `<checkpoint>.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subset {
    All,
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Which days of the file to score, using the train/val/test split.
    #[arg(long, value_enum, default_value = "all")]
    pub subset: Subset,
    /// Must match the checkpoint when given.
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Directory for metrics.csv, metrics.txt and series.csv.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Append the sixteen class probabilities to each line.
    #[arg(long)]
    pub probs: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, default_value = "plot.svg")]
    pub out: PathBuf,
    #[arg(long, default_value = "Occupancy: truth vs prediction")]
    pub title: String,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Regular output goes to `out`,
/// diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("run `occulstm --help` for usage");
            }
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Synth(a) => cmd_synth(a, &file, out),
        Command::Train(a) => cmd_train(a, &file, out),
        Command::Evaluate(a) => cmd_evaluate(a, &file, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Data(format!("cannot write output: {e}")))
}

pub fn cmd_synth(a: SynthArgs, file: &ConfigFile, out: &mut dyn Write) -> Result<(), CliError> {
    let days = file.resolve(a.days, "days", 11)?;
    if days == 0 {
        return Err(CliError::Usage("`days` must be at least 1".into()));
    }
    let seed = file.resolve(a.seed, "seed", 1)?;
    let (schedule, readings) = synthesize(days as usize, seed);
    write(&a.out, &write_sensor_csv(&readings))?;
    let schedule_path = a.schedule_out.unwrap_or_else(|| sibling(&a.out, ".schedule.csv"));
    write(&schedule_path, &schedule.to_csv())?;
    emit(out, &format!("wrote {} readings over {days} days to {}\n", readings.len(), a.out.display()))
}

/// Default synthetic corpus for `days` days.
pub fn synthesize(days: usize, seed: u64) -> (occupancy_core::OccupancySchedule, Vec<occupancy_core::SensorReading>) {
    let schedule = gen_schedule(days, occupancy_core::seed::derive_seed(seed, "synth/schedule"));
    let readings = gen_readings(&schedule, &RoomParams::default(), occupancy_core::seed::derive_seed(seed, "synth/sensors"));
    (schedule, readings)
}

/// Splits labelled readings and trains according to `cfg`.
pub fn train_on_readings(
    readings: &[occupancy_core::SensorReading],
    cfg: &RunConfig,
) -> Result<(Model, TrainHistory), CliError> {
    require_labels(readings)?;
    let split = split_by_days(readings, cfg.n_train, cfg.n_val, cfg.n_test)?;
    let model_cfg = ModelConfig::new(cfg.mode, cfg.hidden_dim, cfg.window_len);
    let hyper = TrainHyper {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        clip_norm: cfg.clip_norm,
        threads: cfg.threads,
        stride: cfg.stride,
    };
    Ok(fit(&model_cfg, &split, &hyper)?)
}

pub fn cmd_train(a: TrainArgs, file: &ConfigFile, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = a.model.resolve(file)?;
    let readings = parse_sensor_csv(&read(&a.data)?)?;
    let (model, history) = train_on_readings(&readings, &cfg)?;
    write(&a.checkpoint, &save_checkpoint(&model))?;
    let history_path = a.history.unwrap_or_else(|| sibling(&a.checkpoint, ".history.csv"));
    write(&history_path, &history.to_csv())?;
    let summary = match (history.best_epoch, history.epochs.last()) {
        (Some(best), Some(_)) => {
            let rec = &history.epochs[best - 1];
            format!(
                "{} trained for {} epochs; best epoch {best}: val loss {:.6}, val micro-F1 {:.4}\n",
                cfg.mode.as_str(),
                history.epochs.len(),
                rec.val_loss,
                rec.val_f1
            )
        }
        _ => format!("{} initialized without training (0 epochs)\n", cfg.mode.as_str()),
    };
    emit(out, &summary)
}

/// Days of `readings` selected by `subset`.
pub fn select_days(
    readings: &[occupancy_core::SensorReading],
    subset: Subset,
    counts: (usize, usize, usize),
) -> Result<Vec<DayGroup>, CliError> {
    if subset == Subset::All {
        return Ok(group_by_day(readings));
    }
    let split = split_by_days(readings, counts.0, counts.1, counts.2)?;
    Ok(match subset {
        Subset::Train => split.train,
        Subset::Val => split.val,
        _ => split.test,
    })
}

/// Windows the selected days with the checkpoint's settings and scores.
pub fn evaluate_days(model: &Model, days: &[DayGroup]) -> Result<Evaluation, CliError> {
    let windows = make_windows(days, &model.norm, model.config.window_len, 1);
    if windows.is_empty() {
        return Err(CliError::Data("no complete window in the evaluation data".into()));
    }
    evaluate_model(model, &windows).map_err(|e| CliError::Data(e.to_string()))
}

pub fn cmd_evaluate(a: EvaluateArgs, file: &ConfigFile, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_checkpoint(&read(&a.checkpoint)?).map_err(|e| CliError::Data(e.to_string()))?;
    if let Some(w) = file.resolve_opt(a.window_len, "window_len")? {
        if w != model.config.window_len {
            return Err(CliError::Data(format!(
                "window_len {w} does not match the checkpoint's {}",
                model.config.window_len
            )));
        }
    }
    let d = RunConfig::default();
    let counts = (
        file.resolve(a.n_train, "n_train", d.n_train)?,
        file.resolve(a.n_val, "n_val", d.n_val)?,
        file.resolve(a.n_test, "n_test", d.n_test)?,
    );
    let readings = parse_sensor_csv(&read(&a.data)?)?;
    if readings.is_empty() {
        return Err(CliError::Data("evaluation data has no rows".into()));
    }
    require_labels(&readings)?;
    let days = select_days(&readings, a.subset, counts)?;
    let eval = evaluate_days(&model, &days)?;
    let text = eval.report.to_text();
    if let Some(dir) = &a.out_dir {
        write(&dir.join("metrics.csv"), &eval.report.to_csv())?;
        write(&dir.join("metrics.txt"), &text)?;
        write(&dir.join("series.csv"), &eval.series_csv())?;
    }
    emit(out, &format!("{} model, {} windows\n{text}", model.config.mode.as_str(), eval.series.len()))
}

pub fn cmd_predict(a: PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_checkpoint(&read(&a.checkpoint)?).map_err(|e| CliError::Data(e.to_string()))?;
    if a.probs && model.config.mode == Mode::Regressor {
        return Err(CliError::Usage("--probs needs a classifier checkpoint".into()));
    }
    let readings = parse_sensor_csv(&read(&a.data)?)?;
    let windows = make_windows(&group_by_day(&readings), &model.norm, model.config.window_len, 1);
    if windows.is_empty() {
        return Err(CliError::Data(format!(
            "need at least {} consecutive same-day rows for one window",
            model.config.window_len
        )));
    }
    let mut text = String::new();
    for i in 0..windows.len() {
        let fp = model.forward(windows.window(i)).map_err(|e| CliError::Data(e.to_string()))?;
        let _ = write!(text, "{},{}", windows.timestamps[i], predict_label(&fp));
        if a.probs {
            for p in &fp.probs {
                let _ = write!(text, ",{p}");
            }
        }
        text.push('\n');
    }
    emit(out, &text)
}

pub fn cmd_plot(a: PlotArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.series)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", a.series.display())))?;
    let rows = plot::parse_series_csv(&text)?;
    write(&a.out, &plot::render_svg(&rows, &a.title))
}

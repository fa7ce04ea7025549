//! Losses, backpropagation, Adam and the training loop.

mod adam;
mod backward;
mod gradcheck;
pub mod loss;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64;
use rayon::prelude::*;
use thiserror::Error;

pub use adam::{adam_update, AdamState};
#[doc(hidden)]
pub use backward::{backward_mutated, GradientMutation};
pub use backward::{backward, backward_into};
#[doc(hidden)]
pub use gradcheck::gradient_check_mutated;
pub use gradcheck::{gradient_check, max_relative_error, CheckProblem, FD_STEP};
pub use loss::{bce_loss, mse_loss, Target};

use crate::dataio::{compute_norm_stats, make_windows, DataError, DatasetSplit, NormStats, WindowedDataset};
use crate::encoding::clamp_count;
use crate::eval::{micro_f1, predict_label};
use crate::model::{Mode, Model, ModelConfig, ModelError, Parameters};
use crate::seed::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("no windows available for {0}")]
    EmptyDataset(&'static str),
    #[error("loss became non-finite in epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("cached forward pass does not match: {0}")]
    CacheMismatch(String),
    #[error("parameter, gradient and optimizer shapes differ")]
    ShapeMismatch,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Rescale the batch gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
    /// Worker threads for per-window gradients; results do not depend on it.
    pub threads: usize,
    pub stride: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper { epochs: 30, batch_size: 32, learning_rate: 1e-3, seed: 1, clip_norm: None, threads: 1, stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_f1\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_f1);
        }
        out
    }
}

/// Fits normalization on the training days, windows every partition and
/// trains. Returns the parameters of the best validation epoch.
pub fn fit(config: &ModelConfig, split: &DatasetSplit, hyper: &TrainHyper) -> Result<(Model, TrainHistory), TrainError> {
    let norm = compute_norm_stats(&split.train).map_err(|_| TrainError::EmptyDataset("training"))?;
    let train = make_windows(&split.train, &norm, config.window_len, hyper.stride);
    let val = make_windows(&split.val, &norm, config.window_len, hyper.stride);
    fit_windows(config, norm, &train, &val, hyper)
}

struct Batcher {
    pool: Option<rayon::ThreadPool>,
}

impl Batcher {
    fn new(threads: usize) -> Self {
        let pool = (threads > 1)
            .then(|| rayon::ThreadPoolBuilder::new().num_threads(threads).build().ok())
            .flatten();
        Batcher { pool }
    }

    /// Applies `f` to each index, preserving order.
    fn map<T: Send>(&self, idx: &[usize], f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        match &self.pool {
            Some(pool) => pool.install(|| idx.par_iter().map(|&i| f(i)).collect()),
            None => idx.iter().map(|&i| f(i)).collect(),
        }
    }
}

fn window_gradient(
    params: &Parameters,
    mode: Mode,
    data: &WindowedDataset,
    labels: &[u32],
    i: usize,
) -> Result<(f64, Parameters), TrainError> {
    let fp = crate::model::forward_sequence(&params.lstm, &params.head, mode, data.window(i))?;
    backward(params, &fp, Target::for_mode(mode, clamp_count(labels[i])))
}

/// Mean loss and micro-F1 over a labelled window set.
pub fn validate(model: &Model, data: &WindowedDataset) -> Result<(f64, f64), TrainError> {
    validate_with(model, data, &Batcher::new(1))
}

fn validate_with(model: &Model, data: &WindowedDataset, batcher: &Batcher) -> Result<(f64, f64), TrainError> {
    let labels = data.labels()?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let outcomes = batcher.map(&idx, |i| -> Result<_, TrainError> {
        let fp = model.forward(data.window(i))?;
        let truth = clamp_count(labels[i]);
        Ok((loss::loss(&fp, Target::for_mode(model.config.mode, truth)), predict_label(&fp), truth))
    });
    let mut total = 0.0;
    let (mut preds, mut truths) = (Vec::with_capacity(idx.len()), Vec::with_capacity(idx.len()));
    for o in outcomes {
        let (l, p, t) = o?;
        total += l;
        preds.push(p);
        truths.push(t);
    }
    let f1 = micro_f1(&preds, &truths).map_err(|_| TrainError::EmptyDataset("validation"))?;
    Ok((total / data.len() as f64, f1))
}

/// Training loop over pre-built windows.
pub fn fit_windows(
    config: &ModelConfig,
    norm: NormStats,
    train: &WindowedDataset,
    val: &WindowedDataset,
    hyper: &TrainHyper,
) -> Result<(Model, TrainHistory), TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let labels = train.labels()?;
    val.labels()?;

    let mut model = Model::new(*config, norm, derive_seed(hyper.seed, "init"));
    let mut history = TrainHistory::default();
    if hyper.epochs == 0 {
        return Ok((model, history));
    }

    let batcher = Batcher::new(hyper.threads);
    let mut rng = Pcg64::seed_from_u64(derive_seed(hyper.seed, "shuffle"));
    let mut adam = AdamState::new(&model.params, hyper.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, Parameters)> = None;
    let batch_size = hyper.batch_size.max(1);

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let params = &model.params;
            let per_window = batcher.map(batch, |i| window_gradient(params, config.mode, train, &labels, i));
            let mut grads = model.params.zeros_like();
            for r in per_window {
                let (l, g) = r?;
                epoch_loss += l;
                grads.add_assign(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            let norm = grads.l2_norm();
            if !epoch_loss.is_finite() || !norm.is_finite() {
                return Err(TrainError::DivergedLoss { epoch });
            }
            if let Some(max) = hyper.clip_norm {
                if norm > max {
                    grads.scale(max / norm);
                }
            }
            adam_update(&mut model.params, &grads, &mut adam)?;
        }
        let (val_loss, val_f1) = validate_with(&model, val, &batcher)?;
        if !val_loss.is_finite() {
            return Err(TrainError::DivergedLoss { epoch });
        }
        history.epochs.push(EpochRecord { epoch, train_loss: epoch_loss / train.len() as f64, val_loss, val_f1 });

        // Higher is better for both.
        let score = match config.mode {
            Mode::Classifier => val_f1,
            Mode::Regressor => -val_loss,
        };
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, model.params.clone()));
            history.best_epoch = Some(epoch);
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{DayGroup, SensorReading, NUM_FEATURES};

    fn toy_windows(n: usize, window_len: usize) -> WindowedDataset {
        // Class is encoded in the sign pattern of the inputs.
        let mut windows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = (i % 3) as u32 * 4;
            for t in 0..window_len {
                for k in 0..NUM_FEATURES {
                    windows.push(label as f64 / 4.0 - 1.0 + 0.05 * ((i + t + k) as f64).sin());
                }
            }
            labels.push(Some(label));
        }
        WindowedDataset {
            window_len,
            stride: 1,
            windows,
            labels,
            timestamps: (0..n as i64).collect(),
            short_days: 0,
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let cfg = ModelConfig::new(Mode::Classifier, 4, 3);
        let ds = toy_windows(6, 3);
        let hyper = TrainHyper { epochs: 0, ..TrainHyper::default() };
        let (model, hist) = fit_windows(&cfg, NormStats::identity(), &ds, &ds, &hyper).unwrap();
        assert!(hist.epochs.is_empty());
        assert_eq!(model.params, crate::model::init_params(&cfg, derive_seed(hyper.seed, "init")));
    }

    #[test]
    fn empty_sets_rejected() {
        let cfg = ModelConfig::new(Mode::Classifier, 4, 3);
        let ds = toy_windows(6, 3);
        let empty = ds.subset(&[]);
        let hyper = TrainHyper::default();
        assert_eq!(
            fit_windows(&cfg, NormStats::identity(), &empty, &ds, &hyper).unwrap_err(),
            TrainError::EmptyDataset("training")
        );
        assert!(fit_windows(&cfg, NormStats::identity(), &ds, &empty, &hyper).is_err());
    }

    #[test]
    fn diverging_run_reports_epoch() {
        let cfg = ModelConfig::new(Mode::Regressor, 4, 3);
        let mut ds = toy_windows(6, 3);
        ds.windows[0] = f64::NAN;
        let hyper = TrainHyper { epochs: 3, ..TrainHyper::default() };
        assert_eq!(
            fit_windows(&cfg, NormStats::identity(), &ds, &ds, &hyper).unwrap_err(),
            TrainError::DivergedLoss { epoch: 1 }
        );
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = ModelConfig::new(Mode::Classifier, 6, 3);
        let ds = toy_windows(40, 3);
        let one = TrainHyper { epochs: 3, batch_size: 8, threads: 1, ..TrainHyper::default() };
        let four = TrainHyper { threads: 4, ..one.clone() };
        let a = fit_windows(&cfg, NormStats::identity(), &ds, &ds, &one).unwrap();
        let b = fit_windows(&cfg, NormStats::identity(), &ds, &ds, &four).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn learns_toy_problem() {
        let cfg = ModelConfig::new(Mode::Classifier, 8, 3);
        let ds = toy_windows(30, 3);
        let hyper = TrainHyper { epochs: 150, batch_size: 10, learning_rate: 1e-2, ..TrainHyper::default() };
        let (model, hist) = fit_windows(&cfg, NormStats::identity(), &ds, &ds, &hyper).unwrap();
        let (_, f1) = validate(&model, &ds).unwrap();
        assert_eq!(f1, 1.0);
        let first = hist.epochs.first().unwrap().train_loss;
        let last = hist.epochs.last().unwrap().train_loss;
        assert!(last < first);
        assert!(hist.to_csv().starts_with("epoch,train_loss,val_loss,val_f1\n1,"));
    }

    #[test]
    fn fit_from_split_uses_training_statistics() {
        let day = |d: i64, co2: f64| DayGroup {
            day: d,
            readings: (0..6)
                .map(|i| SensorReading {
                    timestamp: d * 86_400 + i * 300,
                    temperature: 21.0,
                    humidity: 40.0,
                    co2: co2 + i as f64,
                    noise: 40.0,
                    pressure: 1000.0,
                    people: Some(i as u32 % 2),
                })
                .collect(),
        };
        let split = DatasetSplit { train: vec![day(0, 400.0)], val: vec![day(1, 900.0)], test: vec![] };
        let cfg = ModelConfig::new(Mode::Classifier, 4, 2);
        let hyper = TrainHyper { epochs: 1, ..TrainHyper::default() };
        let (model, hist) = fit(&cfg, &split, &hyper).unwrap();
        assert_eq!(model.norm.mean[2], 402.5);
        assert_eq!(hist.epochs.len(), 1);
    }
}

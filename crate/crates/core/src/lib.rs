//! Room occupancy estimation from environmental sensor time series.
//!
//! The pipeline turns sensor logs (temperature, humidity, CO₂, noise,
//! pressure) into fixed-length windows, classifies each window with a
//! single-layer LSTM into one of sixteen occupancy classes, and scores the
//! predictions with precision, recall and F1. A regression head is provided
//! as a baseline, and a mass-balance simulator produces labelled data.

pub mod checkpoint;
pub mod dataio;
pub mod encoding;
pub mod eval;
pub mod model;
pub mod seed;
pub mod synth;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use dataio::{
    compute_norm_stats, make_windows, parse_sensor_csv, split_by_days, write_sensor_csv,
    DataError, DatasetSplit, DayGroup, NormStats, SensorReading, WindowedDataset, NUM_FEATURES,
};
pub use encoding::{clamp_count, decode_argmax, one_hot_encode, ClassLabel, OneHotVector, NUM_CLASSES};
pub use eval::{evaluate_model, ConfusionCounts, Evaluation, MetricsReport};
pub use model::{Gate, HeadParams, LstmParams, LstmState, Mode, Model, ModelConfig, Parameters};
pub use synth::{gen_readings, gen_schedule, OccupancySchedule, RoomParams};
pub use train::{fit, AdamState, TrainError, TrainHistory, TrainHyper};

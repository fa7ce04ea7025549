//! Plain-text model checkpoints.
//!
//! ```text
//! OCCULSTM v1
//! mode = classifier
//! input_dim = 5
//! hidden_dim = 64
//! window_len = 12
//! norm_mean = <5 values>
//! norm_std = <5 values>
//! array W_f 64 5
//! <one line per row>
//! ...
//! end
//! ```
//!
//! Every value is written with 17 significant digits, so loading restores
//! the exact bits that were saved.

use std::fmt::Write as _;

use thiserror::Error;

use crate::dataio::{NormStats, NUM_FEATURES};
use crate::model::{Mode, Model, ModelConfig, Parameters};

pub const MAGIC: &str = "OCCULSTM v1";

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint (expected `{MAGIC}` header)")]
    BadMagic,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("missing field `{0}`")]
    MissingField(&'static str),
}

fn fmt_value(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn write_values(out: &mut String, values: &[f64]) {
    for (i, &v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        fmt_value(out, v);
    }
    out.push('\n');
}

pub fn save_checkpoint(model: &Model) -> String {
    let c = &model.config;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "mode = {}", c.mode.as_str());
    let _ = writeln!(out, "input_dim = {}", c.input_dim);
    let _ = writeln!(out, "hidden_dim = {}", c.hidden_dim);
    let _ = writeln!(out, "window_len = {}", c.window_len);
    out.push_str("norm_mean = ");
    write_values(&mut out, &model.norm.mean);
    out.push_str("norm_std = ");
    write_values(&mut out, &model.norm.std);
    for ((name, (rows, cols)), data) in
        Parameters::array_names().iter().zip(model.params.array_shapes()).zip(model.params.arrays())
    {
        let _ = writeln!(out, "array {name} {rows} {cols}");
        for row in data.chunks(cols) {
            write_values(&mut out, row);
        }
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), CheckpointError> {
        self.inner
            .by_ref()
            .map(|(i, l)| (i + 1, l.trim()))
            .find(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .ok_or(CheckpointError::Parse { line: 0, reason: "unexpected end of file".into() })
    }
}

fn parse_err(line: usize, reason: impl Into<String>) -> CheckpointError {
    CheckpointError::Parse { line, reason: reason.into() }
}

fn parse_values(line: usize, text: &str, expected: usize) -> Result<Vec<f64>, CheckpointError> {
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| parse_err(line, format!("bad number `{t}`"))))
        .collect::<Result<_, _>>()?;
    if values.len() != expected {
        return Err(parse_err(line, format!("expected {expected} values, found {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(parse_err(line, "non-finite value"));
    }
    Ok(values)
}

fn field<'a>(lines: &mut Lines<'a>, key: &'static str) -> Result<(usize, &'a str), CheckpointError> {
    let (n, l) = lines.next().map_err(|_| CheckpointError::MissingField(key))?;
    match l.split_once('=') {
        Some((k, v)) if k.trim() == key => Ok((n, v.trim())),
        _ => Err(CheckpointError::MissingField(key)),
    }
}

fn usize_field(lines: &mut Lines<'_>, key: &'static str) -> Result<usize, CheckpointError> {
    let (n, v) = field(lines, key)?;
    v.parse().map_err(|_| parse_err(n, format!("`{key}` must be a non-negative integer")))
}

pub fn load_checkpoint(text: &str) -> Result<Model, CheckpointError> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    match lines.next() {
        Ok((_, MAGIC)) => {}
        _ => return Err(CheckpointError::BadMagic),
    }
    let (n, mode) = field(&mut lines, "mode")?;
    let mode: Mode = mode.parse().map_err(|e: String| parse_err(n, e))?;
    let input_dim = usize_field(&mut lines, "input_dim")?;
    let hidden_dim = usize_field(&mut lines, "hidden_dim")?;
    let window_len = usize_field(&mut lines, "window_len")?;
    if input_dim != NUM_FEATURES || hidden_dim == 0 || window_len == 0 {
        return Err(parse_err(0, "input_dim must be 5; hidden_dim and window_len must be positive"));
    }
    let (n, v) = field(&mut lines, "norm_mean")?;
    let mean = parse_values(n, v, NUM_FEATURES)?;
    let (n, v) = field(&mut lines, "norm_std")?;
    let std = parse_values(n, v, NUM_FEATURES)?;
    if std.iter().any(|&s| s <= 0.0) {
        return Err(parse_err(n, "norm_std entries must be positive"));
    }

    let mut config = ModelConfig::new(mode, hidden_dim, window_len);
    config.input_dim = input_dim;
    let mut params = Parameters::zeros(input_dim, hidden_dim, mode.out_dim());
    let shapes = params.array_shapes();
    for ((name, (rows, cols)), dst) in Parameters::array_names().iter().zip(shapes).zip(params.arrays_mut()) {
        let (n, header) = lines.next()?;
        let expected = format!("array {name} {rows} {cols}");
        if header.split_whitespace().collect::<Vec<_>>().join(" ") != expected {
            return Err(parse_err(n, format!("expected `{expected}`, found `{header}`")));
        }
        for r in 0..rows {
            let (n, row) = lines.next()?;
            dst[r * cols..(r + 1) * cols].copy_from_slice(&parse_values(n, row, cols)?);
        }
    }
    match lines.next() {
        Ok((_, "end")) => {}
        Ok((n, other)) => return Err(parse_err(n, format!("expected `end`, found `{other}`"))),
        Err(_) => return Err(CheckpointError::MissingField("end")),
    }
    let norm = NormStats { mean: mean.try_into().expect("length checked"), std: std.try_into().expect("length checked") };
    Ok(Model { config, norm, params })
}

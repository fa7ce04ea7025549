//! LSTM trunk, classification/regression head and parameter containers.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use thiserror::Error;

use crate::dataio::{NormStats, NUM_FEATURES};
use crate::encoding::NUM_CLASSES;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `out += self · x`
    pub fn mul_vec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (row, o) in self.data.chunks_exact(self.cols).zip(out.iter_mut()) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `out += selfᵀ · y`
    pub fn tmul_vec_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        for (row, &yr) in self.data.chunks_exact(self.cols).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yr;
            }
        }
    }

    /// `self += y ⊗ x`
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        for (row, &yr) in self.data.chunks_exact_mut(self.cols).zip(y) {
            for (a, xv) in row.iter_mut().zip(x) {
                *a += yr * xv;
            }
        }
    }
}

/// The four LSTM gates, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Output = 2,
    Cell = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Output, Gate::Cell];

    pub fn suffix(self) -> &'static str {
        match self {
            Gate::Forget => "f",
            Gate::Input => "i",
            Gate::Output => "o",
            Gate::Cell => "c",
        }
    }
}

/// Input weights `w`, recurrent weights `u` and biases `b`, indexed by
/// [`Gate`].
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w: [Matrix; 4],
    pub u: [Matrix; 4],
    pub b: [Vec<f64>; 4],
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmParams {
            w: std::array::from_fn(|_| Matrix::zeros(hidden_dim, input_dim)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden_dim, hidden_dim)),
            b: std::array::from_fn(|_| vec![0.0; hidden_dim]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w[0].cols
    }

    pub fn hidden_dim(&self) -> usize {
        self.w[0].rows
    }
}

/// Affine output layer applied to the final hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(out_dim: usize, hidden_dim: usize) -> Self {
        HeadParams { w: Matrix::zeros(out_dim, hidden_dim), b: vec![0.0; out_dim] }
    }

    pub fn out_dim(&self) -> usize {
        self.b.len()
    }
}

/// Every trainable array of the model. Also used as the shape of gradient
/// and optimizer-moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub lstm: LstmParams,
    pub head: HeadParams,
}

impl Parameters {
    pub fn zeros(input_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        Parameters { lstm: LstmParams::zeros(input_dim, hidden_dim), head: HeadParams::zeros(out_dim, hidden_dim) }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.lstm.input_dim(), self.lstm.hidden_dim(), self.head.out_dim())
    }

    /// Names of the arrays in [`Self::arrays`] order.
    pub fn array_names() -> Vec<String> {
        let mut names = Vec::with_capacity(14);
        for g in Gate::ALL {
            let s = g.suffix();
            names.push(format!("W_{s}"));
            names.push(format!("U_{s}"));
            names.push(format!("b_{s}"));
        }
        names.push("W_out".into());
        names.push("b_out".into());
        names
    }

    /// `(rows, cols)` of each array; vectors are `(len, 1)`.
    pub fn array_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(14);
        for g in Gate::ALL {
            let i = g as usize;
            shapes.push((self.lstm.w[i].rows, self.lstm.w[i].cols));
            shapes.push((self.lstm.u[i].rows, self.lstm.u[i].cols));
            shapes.push((self.lstm.b[i].len(), 1));
        }
        shapes.push((self.head.w.rows, self.head.w.cols));
        shapes.push((self.head.b.len(), 1));
        shapes
    }

    pub fn arrays(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(14);
        for g in Gate::ALL {
            let i = g as usize;
            out.push(&self.lstm.w[i].data);
            out.push(&self.lstm.u[i].data);
            out.push(&self.lstm.b[i]);
        }
        out.push(&self.head.w.data);
        out.push(&self.head.b);
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let LstmParams { w, u, b } = &mut self.lstm;
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(14);
        for ((wm, um), bv) in w.iter_mut().zip(u.iter_mut()).zip(b.iter_mut()) {
            out.push(&mut wm.data);
            out.push(&mut um.data);
            out.push(bv);
        }
        out.push(&mut self.head.w.data);
        out.push(&mut self.head.b);
        out
    }

    pub fn num_params(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    /// `self += other`
    pub fn add_assign(&mut self, other: &Parameters) {
        for (dst, src) in self.arrays_mut().into_iter().zip(other.arrays()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.arrays_mut() {
            a.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.arrays().iter().flat_map(|a| a.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn same_shape(&self, other: &Parameters) -> bool {
        self.array_shapes() == other.array_shapes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Sixteen-way softmax over occupancy classes.
    Classifier,
    /// Single linear output predicting a real-valued count.
    Regressor,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Classifier => "classifier",
            Mode::Regressor => "regressor",
        }
    }

    pub fn out_dim(self) -> usize {
        match self {
            Mode::Classifier => NUM_CLASSES,
            Mode::Regressor => 1,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "classifier" => Ok(Mode::Classifier),
            "regressor" => Ok(Mode::Regressor),
            other => Err(format!("unknown mode `{other}` (expected classifier or regressor)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub window_len: usize,
    pub mode: Mode,
}

impl ModelConfig {
    pub fn new(mode: Mode, hidden_dim: usize, window_len: usize) -> Self {
        ModelConfig { input_dim: NUM_FEATURES, hidden_dim, num_classes: NUM_CLASSES, window_len, mode }
    }

    pub fn out_dim(&self) -> usize {
        self.mode.out_dim()
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::new(Mode::Classifier, 64, 12)
    }
}

/// Trained (or freshly initialized) model with its input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub norm: NormStats,
    pub params: Parameters,
}

impl Model {
    pub fn new(config: ModelConfig, norm: NormStats, seed: u64) -> Self {
        Model { config, norm, params: init_params(&config, seed) }
    }

    /// Forward pass over one normalized window.
    pub fn forward(&self, window: &[f64]) -> Result<ForwardPass, ModelError> {
        forward_sequence(&self.params.lstm, &self.params.head, self.config.mode, window)
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh_act(x: f64) -> f64 {
    x.tanh()
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Recurrent state: hidden output `h` and cell `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState { h: vec![0.0; hidden_dim], c: vec![0.0; hidden_dim] }
    }
}

/// Gate outputs of one step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GateActivations {
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub o: Vec<f64>,
    pub c_tilde: Vec<f64>,
}

/// One LSTM step:
///
/// ```text
/// f  = σ(W_f x + U_f h + b_f)      i = σ(W_i x + U_i h + b_i)
/// o  = σ(W_o x + U_o h + b_o)      c̃ = tanh(W_c x + U_c h + b_c)
/// c' = f ⊙ c + i ⊙ c̃               h' = o ⊙ tanh(c')
/// ```
pub fn lstm_step(
    params: &LstmParams,
    x: &[f64],
    prev: &LstmState,
) -> Result<(LstmState, GateActivations), ModelError> {
    let hidden = params.hidden_dim();
    if x.len() != params.input_dim() {
        return Err(ModelError::DimensionMismatch(format!(
            "input has {} features, parameters expect {}",
            x.len(),
            params.input_dim()
        )));
    }
    if prev.h.len() != hidden || prev.c.len() != hidden {
        return Err(ModelError::DimensionMismatch(format!(
            "state has sizes ({}, {}), hidden size is {hidden}",
            prev.h.len(),
            prev.c.len()
        )));
    }
    let pre = |g: Gate| {
        let k = g as usize;
        let mut a = params.b[k].clone();
        params.w[k].mul_vec_acc(x, &mut a);
        params.u[k].mul_vec_acc(&prev.h, &mut a);
        a
    };
    let f: Vec<f64> = pre(Gate::Forget).into_iter().map(sigmoid).collect();
    let i: Vec<f64> = pre(Gate::Input).into_iter().map(sigmoid).collect();
    let o: Vec<f64> = pre(Gate::Output).into_iter().map(sigmoid).collect();
    let c_tilde: Vec<f64> = pre(Gate::Cell).into_iter().map(tanh_act).collect();
    let c: Vec<f64> = (0..hidden).map(|j| f[j] * prev.c[j] + i[j] * c_tilde[j]).collect();
    let h: Vec<f64> = (0..hidden).map(|j| o[j] * tanh_act(c[j])).collect();
    Ok((LstmState { h, c }, GateActivations { f, i, o, c_tilde }))
}

/// Inputs, incoming state and gates of one unrolled step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub prev: LstmState,
    pub gates: GateActivations,
    pub next: LstmState,
}

/// Result of running a window through the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub mode: Mode,
    /// Raw head outputs.
    pub logits: Vec<f64>,
    /// Softmax of the logits for the classifier; the raw output for the
    /// regressor.
    pub probs: Vec<f64>,
    pub steps: Vec<StepCache>,
}

impl ForwardPass {
    pub fn final_hidden(&self) -> &[f64] {
        &self.steps.last().expect("non-empty window").next.h
    }
}

/// Unrolls the LSTM over a row-major `[steps × input_dim]` window from a
/// zero state and applies the head to the last hidden state.
pub fn forward_sequence(
    lstm: &LstmParams,
    head: &HeadParams,
    mode: Mode,
    window: &[f64],
) -> Result<ForwardPass, ModelError> {
    let input = lstm.input_dim();
    if window.is_empty() || !window.len().is_multiple_of(input) {
        return Err(ModelError::DimensionMismatch(format!(
            "window of {} values is not a positive multiple of {input}",
            window.len()
        )));
    }
    if head.w.cols != lstm.hidden_dim() || head.out_dim() != mode.out_dim() {
        return Err(ModelError::DimensionMismatch(format!(
            "head is {}x{}, expected {}x{}",
            head.w.rows,
            head.w.cols,
            mode.out_dim(),
            lstm.hidden_dim()
        )));
    }
    let mut state = LstmState::zeros(lstm.hidden_dim());
    let mut steps = Vec::with_capacity(window.len() / input);
    for x in window.chunks_exact(input) {
        let (next, gates) = lstm_step(lstm, x, &state)?;
        steps.push(StepCache { x: x.to_vec(), prev: state, gates, next: next.clone() });
        state = next;
    }
    let mut logits = head.b.clone();
    head.w.mul_vec_acc(&state.h, &mut logits);
    let probs = match mode {
        Mode::Classifier => softmax(&logits),
        Mode::Regressor => logits.clone(),
    };
    Ok(ForwardPass { mode, logits, probs, steps })
}

/// Glorot-uniform bound for a `fan_out × fan_in` matrix.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot-uniform weights, zero biases except a forget-gate bias of 1.
/// Deterministic in `seed`.
pub fn init_params(config: &ModelConfig, seed: u64) -> Parameters {
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut fill = |m: &mut Matrix| {
        let s = glorot_bound(m.cols, m.rows);
        m.data.iter_mut().for_each(|v| *v = rng.gen_range(-s..=s));
    };
    let mut p = Parameters::zeros(config.input_dim, config.hidden_dim, config.out_dim());
    for k in 0..4 {
        fill(&mut p.lstm.w[k]);
        fill(&mut p.lstm.u[k]);
    }
    fill(&mut p.head.w);
    p.lstm.b[Gate::Forget as usize].iter_mut().for_each(|b| *b = 1.0);
    p
}

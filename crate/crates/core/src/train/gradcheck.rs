//! Central finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use twofloat::{consts::LN_2, TwoFloat};

use super::backward::{backward_mutated, GradientMutation};
use super::loss::{loss, Target, PROB_CLIP};
use crate::encoding::clamp_count;
use crate::model::{forward_sequence, init_params, ModelConfig, Mode, Parameters};
use crate::seed::derive_seed;

pub const FD_STEP: f64 = 1e-6;

/// Random model, window and target for a gradient check.
pub struct CheckProblem {
    pub params: Parameters,
    pub window: Vec<f64>,
    pub target: Target,
    pub mode: Mode,
}

impl CheckProblem {
    pub fn random(config: &ModelConfig, seed: u64) -> Self {
        let mut params = init_params(config, derive_seed(seed, "gradcheck/init"));
        let mut rng = Pcg64::seed_from_u64(derive_seed(seed, "gradcheck/data"));
        // Non-zero biases so every gate path carries signal.
        for a in params.arrays_mut() {
            a.iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
        let window = (0..config.window_len * config.input_dim).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let label = clamp_count(rng.gen_range(0..16));
        let target = Target::for_mode(config.mode, label);
        CheckProblem { params, window, target, mode: config.mode }
    }

    pub fn loss_at(&self, params: &Parameters) -> f64 {
        let fp = forward_sequence(&params.lstm, &params.head, self.mode, &self.window).expect("consistent dims");
        loss(&fp, self.target)
    }

    pub fn analytic(&self, mutation: Option<GradientMutation>) -> Parameters {
        let fp = forward_sequence(&self.params.lstm, &self.params.head, self.mode, &self.window)
            .expect("consistent dims");
        let mut grads = self.params.zeros_like();
        backward_mutated(&self.params, &fp, self.target, &mut grads, mutation).expect("matching cache");
        grads
    }

    /// Central differences with step [`FD_STEP`]. Losses are evaluated in
    /// double-double arithmetic by a forward pass separate from the f64
    /// one, so cancellation in `L(θ+ε) − L(θ−ε)` stays far below the
    /// gradient magnitudes being checked.
    pub fn numeric(&self) -> Parameters {
        let mut grads = self.params.zeros_like();
        let eps = TwoFloat::from(FD_STEP);
        let sizes: Vec<usize> = self.params.arrays().iter().map(|a| a.len()).collect();
        for (a, &len) in sizes.iter().enumerate() {
            for j in 0..len {
                let up = self.precise_loss(Some((a, j, eps)));
                let down = self.precise_loss(Some((a, j, -eps)));
                grads.arrays_mut()[a][j] = f64::from((up - down) / (eps * 2.0));
            }
        }
        grads
    }

    /// Loss with array `a`, entry `j` shifted by `delta`, in double-double
    /// precision.
    fn precise_loss(&self, shift: Option<(usize, usize, TwoFloat)>) -> TwoFloat {
        let arrays: Vec<Vec<TwoFloat>> = self
            .params
            .arrays()
            .iter()
            .enumerate()
            .map(|(a, values)| {
                values
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| match shift {
                        Some((sa, sj, d)) if sa == a && sj == j => TwoFloat::from(v) + d,
                        _ => TwoFloat::from(v),
                    })
                    .collect()
            })
            .collect();
        let input = self.params.lstm.input_dim();
        let hidden = self.params.lstm.hidden_dim();
        let out_dim = self.params.head.out_dim();
        // Array order: (W, U, b) per gate f, i, o, c, then W_out, b_out.
        let affine = |m: &[TwoFloat], v: &[TwoFloat], cols: usize, acc: &mut [TwoFloat]| {
            for (r, slot) in acc.iter_mut().enumerate() {
                for c in 0..cols {
                    *slot += m[r * cols + c] * v[c];
                }
            }
        };
        let sig = |x: TwoFloat| dd_div(TwoFloat::from(1.0), TwoFloat::from(1.0) + dd_exp(-x));
        let zero = TwoFloat::from(0.0);
        let mut h = vec![zero; hidden];
        let mut c = vec![zero; hidden];
        for x in self.window.chunks_exact(input) {
            let x: Vec<TwoFloat> = x.iter().map(|&v| TwoFloat::from(v)).collect();
            let mut gates: Vec<Vec<TwoFloat>> = Vec::with_capacity(4);
            for g in 0..4 {
                let mut pre = arrays[3 * g + 2].clone();
                affine(&arrays[3 * g], &x, input, &mut pre);
                affine(&arrays[3 * g + 1], &h, hidden, &mut pre);
                gates.push(pre);
            }
            for j in 0..hidden {
                let f = sig(gates[0][j]);
                let i = sig(gates[1][j]);
                let o = sig(gates[2][j]);
                let ct = dd_tanh(gates[3][j]);
                c[j] = f * c[j] + i * ct;
                h[j] = o * dd_tanh(c[j]);
            }
        }
        let mut z = arrays[13].clone();
        affine(&arrays[12], &h, hidden, &mut z);
        debug_assert_eq!(z.len(), out_dim);
        match self.target {
            Target::Count(t) => {
                let d = z[0] - t;
                d * d
            }
            Target::Class(label) => {
                let max = z.iter().copied().fold(z[0], |a, b| if b > a { b } else { a });
                let exps: Vec<TwoFloat> = z.iter().map(|&v| dd_exp(v - max)).collect();
                let sum = exps.iter().copied().fold(zero, |a, b| a + b);
                let lo = TwoFloat::from(PROB_CLIP);
                let hi = TwoFloat::from(1.0 - PROB_CLIP);
                let mut total = zero;
                for (k, e) in exps.iter().enumerate() {
                    let mut p = dd_div(*e, sum);
                    if p < lo {
                        p = lo;
                    } else if p > hi {
                        p = hi;
                    }
                    total -= if k == label.index() { dd_ln(p) } else { dd_ln(TwoFloat::from(1.0) - p) };
                }
                total / out_dim as f64
            }
        }
    }
}

// twofloat's own exp and division are only accurate to about 1e-17
// relative, which is too coarse for differencing losses at a step of 1e-6.
fn dd_div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q = a / b;
    q + (a - q * b) / b
}

fn dd_exp(x: TwoFloat) -> TwoFloat {
    let k = (x.hi() / std::f64::consts::LN_2).round();
    // exp(x) = 2^k · exp(r)^(2^10), with |r| < 2^-11.
    let r = (x - LN_2 * k) / 1024.0;
    let mut term = TwoFloat::from(1.0);
    let mut sum = TwoFloat::from(1.0);
    for n in 1..=12 {
        term = term * r / n as f64;
        sum += term;
    }
    for _ in 0..10 {
        sum = sum * sum;
    }
    sum * 2f64.powi(k as i32)
}

fn dd_tanh(x: TwoFloat) -> TwoFloat {
    let e = dd_exp(-(x.abs() * 2.0));
    let t = dd_div(TwoFloat::from(1.0) - e, TwoFloat::from(1.0) + e);
    if x.hi() < 0.0 {
        -t
    } else {
        t
    }
}

fn dd_ln(x: TwoFloat) -> TwoFloat {
    let mut y = TwoFloat::from(x.hi().ln());
    for _ in 0..2 {
        y += x * dd_exp(-y) - 1.0;
    }
    y
}

/// `max |a − n| / max(|a|, |n|, 1e-8)` over every entry.
pub fn max_relative_error(analytic: &Parameters, numeric: &Parameters) -> f64 {
    analytic
        .arrays()
        .iter()
        .zip(numeric.arrays())
        .flat_map(|(a, n)| a.iter().zip(n.iter()))
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Largest relative disagreement between backpropagated and
/// finite-difference gradients on a random problem.
pub fn gradient_check(config: &ModelConfig, seed: u64) -> f64 {
    gradient_check_mutated(config, seed, None)
}

#[doc(hidden)]
pub fn gradient_check_mutated(config: &ModelConfig, seed: u64, mutation: Option<GradientMutation>) -> f64 {
    let problem = CheckProblem::random(config, seed);
    max_relative_error(&problem.analytic(mutation), &problem.numeric())
}

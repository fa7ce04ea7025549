//! Loss functions and their gradients with respect to the head output.

use crate::encoding::{one_hot_encode, ClassLabel, OneHotVector, NUM_CLASSES};
use crate::model::{ForwardPass, Mode};

/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before logs.
pub const PROB_CLIP: f64 = 1e-12;

/// What a window should predict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Class(ClassLabel),
    Count(f64),
}

impl Target {
    /// Target appropriate for `mode` given a capped class label.
    pub fn for_mode(mode: Mode, label: ClassLabel) -> Self {
        match mode {
            Mode::Classifier => Target::Class(label),
            Mode::Regressor => Target::Count(label.value() as f64),
        }
    }
}

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Binary cross-entropy averaged over the sixteen one-hot positions.
pub fn bce_loss(probs: &[f64], target: &OneHotVector) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(target.bits())
        .map(|(&p, &y)| {
            let p = clip(p);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / NUM_CLASSES as f64
}

/// `∂bce/∂p`. Entries whose probability sits outside the clip range get a
/// zero derivative, matching the flat clipped loss there.
pub fn bce_grad_probs(probs: &[f64], target: &OneHotVector) -> Vec<f64> {
    let n = NUM_CLASSES as f64;
    probs
        .iter()
        .zip(target.bits())
        .map(|(&p, &y)| {
            if !(PROB_CLIP..=1.0 - PROB_CLIP).contains(&p) {
                0.0
            } else {
                (-y / p + (1.0 - y) / (1.0 - p)) / n
            }
        })
        .collect()
}

pub fn mse_loss(pred: f64, target: f64) -> f64 {
    let d = pred - target;
    d * d
}

/// Loss of a forward pass against its target.
pub fn loss(fp: &ForwardPass, target: Target) -> f64 {
    match target {
        Target::Class(label) => bce_loss(&fp.probs, &one_hot_encode(label)),
        Target::Count(count) => mse_loss(fp.logits[0], count),
    }
}

/// `∂loss/∂logits`, chained through the softmax for the classifier.
pub fn logit_grad(fp: &ForwardPass, target: Target) -> Vec<f64> {
    match target {
        Target::Class(label) => {
            let g = bce_grad_probs(&fp.probs, &one_hot_encode(label));
            let dot: f64 = g.iter().zip(&fp.probs).map(|(a, b)| a * b).sum();
            fp.probs.iter().zip(&g).map(|(p, gi)| p * (gi - dot)).collect()
        }
        Target::Count(count) => vec![2.0 * (fp.logits[0] - count)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::clamp_count;

    #[test]
    fn bce_examples() {
        let target = one_hot_encode(clamp_count(4));
        assert!(bce_loss(target.bits(), &target) <= 1e-10);
        let uniform = [1.0 / 16.0; 16];
        // (1/16)(-ln 1/16) + (15/16)(-ln 15/16), evaluated independently.
        assert!((bce_loss(&uniform, &target) - 0.233_791_658_706_459_3).abs() < 1e-12);
        assert!((bce_loss(&[0.5; 16], &target) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(3.0, 3.0), 0.0);
        assert!((mse_loss(10.1, 13.0) - 8.41).abs() < 1e-12);
        assert_eq!(mse_loss(2.5, -1.0), mse_loss(-1.0, 2.5));
    }

    #[test]
    fn clipped_entries_have_zero_derivative() {
        let target = one_hot_encode(clamp_count(0));
        let g = bce_grad_probs(target.bits(), &target);
        assert!(g.iter().all(|&v| v == 0.0));
    }
}

//! Backpropagation through time for the LSTM trunk and head.

use super::loss::{logit_grad, loss, Target};
use super::TrainError;
use crate::model::{ForwardPass, Gate, Mode, Parameters};

/// Deliberate corruption of one gate's gradient, used to show that the
/// gradient check catches a wrong derivative.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMutation {
    NegateGate(Gate),
}

fn check_cache(params: &Parameters, fp: &ForwardPass, target: Target) -> Result<(), TrainError> {
    let hidden = params.lstm.hidden_dim();
    let input = params.lstm.input_dim();
    if fp.steps.is_empty() {
        return Err(TrainError::CacheMismatch("forward pass has no steps".into()));
    }
    if fp.logits.len() != params.head.out_dim() {
        return Err(TrainError::CacheMismatch(format!(
            "cached output has {} entries, head produces {}",
            fp.logits.len(),
            params.head.out_dim()
        )));
    }
    let matches_mode = matches!(
        (fp.mode, target),
        (Mode::Classifier, Target::Class(_)) | (Mode::Regressor, Target::Count(_))
    );
    if !matches_mode {
        return Err(TrainError::CacheMismatch(format!("target {target:?} does not fit {} mode", fp.mode.as_str())));
    }
    if fp.steps.iter().any(|s| s.x.len() != input || s.next.h.len() != hidden) {
        return Err(TrainError::CacheMismatch("cached step dimensions differ from parameters".into()));
    }
    Ok(())
}

/// Loss and exact gradients for one window. `grads` is overwritten.
pub fn backward_into(
    params: &Parameters,
    fp: &ForwardPass,
    target: Target,
    grads: &mut Parameters,
) -> Result<f64, TrainError> {
    backward_mutated(params, fp, target, grads, None)
}

/// Loss and exact gradients for one window, in a fresh buffer.
pub fn backward(params: &Parameters, fp: &ForwardPass, target: Target) -> Result<(f64, Parameters), TrainError> {
    let mut grads = params.zeros_like();
    let l = backward_into(params, fp, target, &mut grads)?;
    Ok((l, grads))
}

#[doc(hidden)]
pub fn backward_mutated(
    params: &Parameters,
    fp: &ForwardPass,
    target: Target,
    grads: &mut Parameters,
    mutation: Option<GradientMutation>,
) -> Result<f64, TrainError> {
    check_cache(params, fp, target)?;
    if !grads.same_shape(params) {
        return Err(TrainError::ShapeMismatch);
    }
    for a in grads.arrays_mut() {
        a.fill(0.0);
    }
    let hidden = params.lstm.hidden_dim();

    let dz = logit_grad(fp, target);
    let h_last = fp.final_hidden();
    grads.head.w.add_outer(&dz, h_last);
    grads.head.b.iter_mut().zip(&dz).for_each(|(g, d)| *g += d);

    let mut dh = vec![0.0; hidden];
    params.head.w.tmul_vec_acc(&dz, &mut dh);
    let mut dc = vec![0.0; hidden];
    let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hidden]);

    for step in fp.steps.iter().rev() {
        let g = &step.gates;
        for j in 0..hidden {
            let tc = step.next.c[j].tanh();
            let d_o = dh[j] * tc;
            let dcj = dc[j] + dh[j] * g.o[j] * (1.0 - tc * tc);
            let d_f = dcj * step.prev.c[j];
            let d_i = dcj * g.c_tilde[j];
            let d_ct = dcj * g.i[j];
            dc[j] = dcj * g.f[j];
            da[Gate::Forget as usize][j] = d_f * g.f[j] * (1.0 - g.f[j]);
            da[Gate::Input as usize][j] = d_i * g.i[j] * (1.0 - g.i[j]);
            da[Gate::Output as usize][j] = d_o * g.o[j] * (1.0 - g.o[j]);
            da[Gate::Cell as usize][j] = d_ct * (1.0 - g.c_tilde[j] * g.c_tilde[j]);
        }
        if let Some(GradientMutation::NegateGate(gate)) = mutation {
            da[gate as usize].iter_mut().for_each(|v| *v = -*v);
        }
        dh.fill(0.0);
        for k in 0..4 {
            grads.lstm.w[k].add_outer(&da[k], &step.x);
            grads.lstm.u[k].add_outer(&da[k], &step.prev.h);
            grads.lstm.b[k].iter_mut().zip(&da[k]).for_each(|(b, d)| *b += d);
            params.lstm.u[k].tmul_vec_acc(&da[k], &mut dh);
        }
    }
    Ok(loss(fp, target))
}

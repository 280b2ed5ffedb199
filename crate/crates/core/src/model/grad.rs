//! Batch losses, analytic gradients, and the finite-difference audit.

use super::{layer_slices, layer_slices_mut, softmax_unchecked, Dense, GraderModel, HeadKind};
use crate::error::{Error, Result};
use crate::rng;
use crate::scale::GradeScale;
use rand::Rng;

/// One training example: a chunk's features and its response's reference.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a [f64],
    pub reference: f64,
}

/// Mean-over-batch gradient with the same layer shapes as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub hidden: Option<Dense>,
    pub output: Dense,
    /// Mean batch loss at the current parameters.
    pub loss: f64,
}

impl BatchGradient {
    pub fn params(&self) -> Vec<&[f64]> {
        layer_slices(self.hidden.as_ref(), &self.output)
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        layer_slices_mut(self.hidden.as_mut(), &mut self.output)
    }
}

fn check_batch(model: &GraderModel, batch: &[Example<'_>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    for ex in batch {
        if !ex.reference.is_finite() {
            return Err(Error::Domain(format!("non-finite reference {}", ex.reference)));
        }
        if ex.features.len() != model.input_dim {
            return Err(Error::Dimension {
                what: "feature vector",
                expected: model.input_dim,
                actual: ex.features.len(),
            });
        }
    }
    Ok(())
}

/// Target class of a reference for the cross-entropy head.
fn ce_target(model: &GraderModel, reference: f64) -> Result<usize> {
    if !model.scale.on_grid(reference) {
        return Err(Error::Domain(format!("reference score {reference} is off the grade grid")));
    }
    let clamped = reference.clamp(model.scale.min_score(), model.scale.max_score());
    model.scale.nearest_index(clamped)
}

/// Loss of one example plus the gradient of that loss with respect to the
/// head output.
fn loss_and_output_grad(model: &GraderModel, output: &[f64], reference: f64) -> Result<(f64, Vec<f64>)> {
    let scale = &model.scale;
    match model.head {
        HeadKind::Ce => {
            let k = ce_target(model, reference)?;
            let mut d = softmax_unchecked(output);
            let loss = super::ce_loss_index(output, k);
            d[k] -= 1.0;
            Ok((loss, d))
        }
        HeadKind::Fa => {
            let p = softmax_unchecked(output);
            let e: f64 = p.iter().zip(scale.scores()).map(|(p, s)| p * s).sum();
            let r = e - reference;
            let d = p
                .iter()
                .zip(scale.scores())
                .map(|(p, s)| 2.0 * r * p * (s - e))
                .collect();
            Ok((r * r, d))
        }
        HeadKind::Reg => {
            let r = output[0] - reference;
            Ok((r * r, vec![2.0 * r]))
        }
    }
}

/// Mean loss of the model's head over a batch.
pub fn batch_loss(model: &GraderModel, batch: &[Example<'_>]) -> Result<f64> {
    check_batch(model, batch)?;
    let mut total = 0.0;
    for ex in batch {
        let t = model.trace(ex.features)?;
        total += loss_and_output_grad(model, &t.output, ex.reference)?.0;
    }
    Ok(total / batch.len() as f64)
}

/// Mean-over-batch gradient of the head's loss with respect to every
/// parameter. Pure: the model is not modified.
pub fn backward(model: &GraderModel, batch: &[Example<'_>]) -> Result<BatchGradient> {
    check_batch(model, batch)?;
    let mut grad = BatchGradient {
        hidden: model.hidden.as_ref().map(|h| Dense::zeros(h.out_dim, h.in_dim)),
        output: Dense::zeros(model.output.out_dim, model.output.in_dim),
        loss: 0.0,
    };
    let fan_in = model.output.in_dim;
    let mut total = 0.0;

    for ex in batch {
        let trace = model.trace(ex.features)?;
        let (loss, d_out) = loss_and_output_grad(model, &trace.output, ex.reference)?;
        total += loss;
        let head_input = trace.hidden.as_deref().unwrap_or(ex.features);

        for (c, &dz) in d_out.iter().enumerate() {
            let row = &mut grad.output.weights[c * fan_in..(c + 1) * fan_in];
            for (g, a) in row.iter_mut().zip(head_input) {
                *g += dz * a;
            }
            grad.output.bias[c] += dz;
        }

        if let (Some(gh), Some(act)) = (grad.hidden.as_mut(), trace.hidden.as_ref()) {
            let d = ex.features.len();
            for (j, a) in act.iter().enumerate() {
                let da: f64 = d_out
                    .iter()
                    .enumerate()
                    .map(|(c, dz)| model.output.weights[c * fan_in + j] * dz)
                    .sum();
                let dpre = da * (1.0 - a * a);
                for (g, x) in gh.weights[j * d..(j + 1) * d].iter_mut().zip(ex.features) {
                    *g += dpre * x;
                }
                gh.bias[j] += dpre;
            }
        }
    }

    let inv = 1.0 / batch.len() as f64;
    for buf in grad.params_mut() {
        for g in buf.iter_mut() {
            *g *= inv;
        }
    }
    grad.loss = total * inv;
    Ok(grad)
}

/// Compares [`backward`] against central differences for every parameter
/// and returns the worst relative error `|a - n| / max(1e-12, |a| + |n|)`.
pub fn grad_check(model: &GraderModel, batch: &[Example<'_>], step: f64) -> Result<f64> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {step}")));
    }
    let analytic: Vec<f64> = backward(model, batch)?
        .params()
        .iter()
        .flat_map(|s| s.iter().copied())
        .collect();

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut flat = 0;
    let buffers = probe.params().len();
    for b in 0..buffers {
        let len = probe.params()[b].len();
        for i in 0..len {
            let original = probe.params()[b][i];
            probe.params_mut()[b][i] = original + step;
            let plus = batch_loss(&probe, batch)?;
            probe.params_mut()[b][i] = original - step;
            let minus = batch_loss(&probe, batch)?;
            probe.params_mut()[b][i] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[flat];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
            worst = worst.max(rel);
            flat += 1;
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub step: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            input_dim: 6,
            hidden_dim: 8,
            batch_size: 8,
            step: 1e-5,
        }
    }
}

/// Runs [`grad_check`] on a model and batch drawn from `seed`'s gradient
/// audit stream. Features are uniform in [-1.5, 1.5]; references are
/// uniform over the grade grid.
pub fn random_audit(head: HeadKind, seed: u64, scale: &GradeScale, config: &AuditConfig) -> Result<f64> {
    if config.batch_size == 0 || config.input_dim == 0 {
        return Err(Error::Domain("audit needs a non-empty batch and input".into()));
    }
    let mut r = rng::stream(seed, rng::STREAM_GRADCHECK);
    let model = GraderModel::init(head, config.input_dim, config.hidden_dim, scale.clone(), &mut r)?;
    let steps = ((scale.max_score() - scale.min_score()) / scale.grid_step()).round() as u32;
    let xs: Vec<Vec<f64>> = (0..config.batch_size)
        .map(|_| (0..config.input_dim).map(|_| r.random_range(-1.5..1.5)).collect())
        .collect();
    let refs: Vec<f64> = (0..config.batch_size)
        .map(|_| scale.min_score() + scale.grid_step() * r.random_range(0..=steps) as f64)
        .collect();
    let batch: Vec<Example<'_>> = xs
        .iter()
        .zip(&refs)
        .map(|(x, &reference)| Example { features: x, reference })
        .collect();
    grad_check(&model, &batch, config.step)
}

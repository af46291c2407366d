use ndarray::{Array2, Array3};

use super::Gradients;
use crate::error::{Error, Result};
use crate::rtucker::RtModel;

pub const DEFAULT_EPS: f64 = 1e-10;

/// One AdaGrad update over a flat parameter block.
///
/// Weight decay is folded into the gradient (`g' = g + ω·p`), the squared
/// `g'` is accumulated, and `p -= lr · g' / (√acc + ε)`. Entries flagged in
/// `fixed` are left untouched, accumulator included.
pub fn adagrad_step(
    params: &mut [f64],
    grads: &[f64],
    accumulator: &mut [f64],
    fixed: Option<&[bool]>,
    lr: f64,
    weight_decay: f64,
    eps: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != accumulator.len() {
        return Err(Error::Dimension(format!(
            "adagrad: {} params, {} grads, {} accumulators",
            params.len(),
            grads.len(),
            accumulator.len()
        )));
    }
    if let Some(mask) = fixed {
        if mask.len() != params.len() {
            return Err(Error::Dimension("adagrad: fixed mask length".into()));
        }
    }
    for idx in 0..params.len() {
        if fixed.is_some_and(|m| m[idx]) {
            continue;
        }
        let g = grads[idx] + weight_decay * params[idx];
        accumulator[idx] += g * g;
        params[idx] -= lr * g / (accumulator[idx].sqrt() + eps);
    }
    Ok(())
}

/// Accumulated squared gradients for every parameter class of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaGradState {
    pub entities: Array2<f64>,
    pub relations: Array2<f64>,
    pub core: Array3<f64>,
    pub log_alpha: Option<Vec<f64>>,
    pub eps: f64,
}

impl AdaGradState {
    pub fn new(model: &RtModel, eps: f64) -> Self {
        AdaGradState {
            entities: Array2::zeros(model.entities.dim()),
            relations: Array2::zeros(model.relations.dim()),
            core: Array3::zeros(model.core.values().dim()),
            log_alpha: model.gates.as_ref().map(|g| vec![0.0; g.len()]),
            eps,
        }
    }

    /// Applies one step to all free parameters. Gate locations are not decayed.
    pub fn apply(&mut self, model: &mut RtModel, grads: &Gradients, lr: f64, weight_decay: f64) -> Result<()> {
        let eps = self.eps;
        adagrad_step(
            slice_mut(model.entities.as_slice_mut()),
            slice(grads.entities.as_slice()),
            slice_mut(self.entities.as_slice_mut()),
            None,
            lr,
            weight_decay,
            eps,
        )?;
        if !model.relations_fixed {
            adagrad_step(
                slice_mut(model.relations.as_slice_mut()),
                slice(grads.relations.as_slice()),
                slice_mut(self.relations.as_slice_mut()),
                None,
                lr,
                weight_decay,
                eps,
            )?;
        }
        if !model.core.is_fully_fixed() {
            let mask = model.core.fixed_mask().cloned();
            adagrad_step(
                slice_mut(model.core.values_mut().as_slice_mut()),
                slice(grads.core.as_slice()),
                slice_mut(self.core.as_slice_mut()),
                mask.as_ref().map(|m| slice(m.as_slice())),
                lr,
                weight_decay,
                eps,
            )?;
        }
        match (&mut model.gates, &mut self.log_alpha, &grads.log_alpha) {
            (Some(gates), Some(acc), Some(g)) => {
                adagrad_step(gates.log_alpha_mut(), g, acc, None, lr, 0.0, eps)?;
            }
            (None, _, None) => {}
            _ => return Err(Error::Dimension("gate gradients do not match model gates".into())),
        }
        Ok(())
    }
}

fn slice<T>(s: Option<&[T]>) -> &[T] {
    s.expect("parameters are stored in standard layout")
}

fn slice_mut<T>(s: Option<&mut [T]>) -> &mut [T] {
    s.expect("parameters are stored in standard layout")
}

//! Trainable parameters and the Adam optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// A parameter tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moments plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl AdamState {
    /// Fresh state with zero moments shaped like `params`.
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Param>) -> Self {
        let shapes: Vec<Tensor> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        Self {
            config,
            step: 0,
            first_moment: shapes.clone(),
            second_moment: shapes,
        }
    }
}

/// One bias-corrected Adam update; gradients are zeroed afterwards.
pub fn adam_step(params: &mut [&mut Param], state: &mut AdamState) -> Result<()> {
    if params.len() != state.first_moment.len() {
        return Err(Error::Dimension(format!(
            "adam: {} parameters but state tracks {}",
            params.len(),
            state.first_moment.len()
        )));
    }
    for (p, m) in params.iter().zip(&state.first_moment) {
        if p.value.shape() != m.shape() {
            return Err(Error::Dimension(format!(
                "adam: parameter {:?} vs moment {:?}",
                p.value.shape(),
                m.shape()
            )));
        }
    }
    state.step += 1;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = state.config;
    let bc1 = 1.0 - (b1 as f64).powi(state.step.min(i32::MAX as u64) as i32);
    let bc2 = 1.0 - (b2 as f64).powi(state.step.min(i32::MAX as u64) as i32);
    let (bc1, bc2) = (bc1 as f32, bc2 as f32);
    for ((p, m), v) in params
        .iter_mut()
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        let Param { value, grad } = &mut **p;
        for (((w, &g), m), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        grad.fill(0.0);
    }
    Ok(())
}

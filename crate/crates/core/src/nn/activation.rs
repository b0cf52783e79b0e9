use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

pub const DEFAULT_LEAKY_SLOPE: f32 = 0.2;

#[inline]
pub(crate) fn leaky(x: f32, slope: f32) -> f32 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Elementwise `max(x, slope * x)` for `0 <= slope <= 1`.
pub fn leaky_relu(input: &Tensor, slope: f32) -> Tensor {
    let data = input.data().iter().map(|&x| leaky(x, slope)).collect();
    Tensor::from_vec(input.shape(), data).expect("shape preserved")
}

/// Gradient of [`leaky_relu`] given its *input* and the upstream gradient.
pub fn leaky_relu_backward(input: &Tensor, grad_out: &Tensor, slope: f32) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::Dimension(format!(
            "leaky_relu backward: input {:?} vs gradient {:?}",
            input.shape(),
            grad_out.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { slope * g })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// Mean squared error over every element, and its gradient `2 (p - t) / count`.
pub fn mse_loss(prediction: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if prediction.shape() != target.shape() {
        return Err(Error::Dimension(format!(
            "mse: prediction {:?} vs target {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    let count = prediction.len().max(1) as f64;
    let mut sum = 0.0f64;
    let grad = prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d as f64 * d as f64;
            (2.0 * d as f64 / count) as f32
        })
        .collect();
    Ok((
        (sum / count) as f32,
        Tensor::from_vec(prediction.shape(), grad)?,
    ))
}

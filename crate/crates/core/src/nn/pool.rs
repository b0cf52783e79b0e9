//! Non-overlapping max pooling and index-routed max unpooling.

use crate::error::{Error, Result};
use crate::nn::tensor::{expect_rank, Tensor};

/// Argmax positions recorded by [`maxpool`], one per pooled element.
///
/// Positions are offsets within the channel row of the *unpooled* signal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub channels: usize,
    /// Pooled (short) length.
    pub len: usize,
    pub window: usize,
    pub positions: Vec<usize>,
}

pub(crate) fn maxpool_into(
    x: &[f32],
    channels: usize,
    len: usize,
    window: usize,
    out: &mut [f32],
    positions: &mut [usize],
) {
    let plen = len / window;
    for c in 0..channels {
        let row = &x[c * len..(c + 1) * len];
        for j in 0..plen {
            let base = j * window;
            let mut best = base;
            for i in base + 1..base + window {
                // Strict comparison keeps the first element on ties.
                if row[i] > row[best] {
                    best = i;
                }
            }
            out[c * plen + j] = row[best];
            positions[c * plen + j] = best;
        }
    }
}

/// Max over non-overlapping windows along time: `[C, L] -> [C, L / window]`.
pub fn maxpool(input: &Tensor, window: usize) -> Result<(Tensor, PoolIndices)> {
    let s = expect_rank(input, 2, "maxpool input [C, L]")?;
    let (c, l) = (s[0], s[1]);
    if window == 0 || l % window != 0 {
        return Err(Error::Dimension(format!(
            "maxpool: length {l} is not divisible by window {window}"
        )));
    }
    let plen = l / window;
    let mut out = Tensor::zeros(&[c, plen]);
    let mut positions = vec![0; c * plen];
    maxpool_into(input.data(), c, l, window, out.data_mut(), &mut positions);
    Ok((
        out,
        PoolIndices {
            channels: c,
            len: plen,
            window,
            positions,
        },
    ))
}

/// Routes the upstream gradient to the recorded argmax positions.
pub fn maxpool_backward(grad_out: &Tensor, indices: &PoolIndices) -> Result<Tensor> {
    // Max pooling's input gradient is exactly the unpooling of its output gradient.
    max_unpool(grad_out, indices)
}

pub(crate) fn unpool_into(x: &[f32], idx: &PoolIndices, out: &mut [f32]) {
    let full = idx.len * idx.window;
    out.fill(0.0);
    for c in 0..idx.channels {
        for j in 0..idx.len {
            let k = c * idx.len + j;
            out[c * full + idx.positions[k]] = x[k];
        }
    }
}

pub(crate) fn unpool_backward_into(gout: &[f32], idx: &PoolIndices, gx: &mut [f32]) {
    let full = idx.len * idx.window;
    for c in 0..idx.channels {
        for j in 0..idx.len {
            let k = c * idx.len + j;
            gx[k] = gout[c * full + idx.positions[k]];
        }
    }
}

impl PoolIndices {
    /// Checks that every position lies inside its own pooling window.
    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.channels * self.len {
            return Err(Error::Internal(format!(
                "pool indices hold {} positions for {} x {} outputs",
                self.positions.len(),
                self.channels,
                self.len
            )));
        }
        for (k, &p) in self.positions.iter().enumerate() {
            let j = k % self.len;
            if p < j * self.window || p >= (j + 1) * self.window {
                return Err(Error::Internal(format!(
                    "pool index {p} at output {k} outside window [{}, {})",
                    j * self.window,
                    (j + 1) * self.window
                )));
            }
        }
        Ok(())
    }
}

/// Scatters `input` to the recorded positions, zeros elsewhere: `[C, L] -> [C, L * window]`.
pub fn max_unpool(input: &Tensor, indices: &PoolIndices) -> Result<Tensor> {
    let s = expect_rank(input, 2, "max_unpool input [C, L]")?;
    if s[0] != indices.channels || s[1] != indices.len {
        return Err(Error::Dimension(format!(
            "max_unpool: input {:?} does not match pooled shape [{}, {}]",
            s, indices.channels, indices.len
        )));
    }
    indices.validate()?;
    let mut out = Tensor::zeros(&[indices.channels, indices.len * indices.window]);
    unpool_into(input.data(), indices, out.data_mut());
    Ok(out)
}

/// Gathers the upstream gradient from the scattered positions.
pub fn max_unpool_backward(grad_out: &Tensor, indices: &PoolIndices) -> Result<Tensor> {
    let s = expect_rank(grad_out, 2, "max_unpool gradient [C, L]")?;
    if s[0] != indices.channels || s[1] != indices.len * indices.window {
        return Err(Error::Dimension(format!(
            "max_unpool backward: gradient {:?} does not match unpooled shape [{}, {}]",
            s,
            indices.channels,
            indices.len * indices.window
        )));
    }
    indices.validate()?;
    let mut gx = Tensor::zeros(&[indices.channels, indices.len]);
    unpool_backward_into(grad_out.data(), indices, gx.data_mut());
    Ok(gx)
}

//! The convolution-only denoising autoencoder.
//!
//! ```text
//! dirty [2, N]
//!   -> IQ-Mixer (2x2 conv)                       [1, N]
//!   -> 3 x (conv1d K -> leaky -> maxpool 2)      [C, N/2] [C, N/4] [latent, N/8]
//!   -> 3 x (unpool 2 -> conv1d^T K -> leaky)     [C, N/4] [C, N/2] [1, N]
//!   -> IQ-Unmixer (2x2 conv^T, linear)           [2, N]
//! ```
//!
//! Decoder stage `j` unpools with the indices of encoder stage `S - 1 - j`, so
//! the reconstruction depends on where the encoder's maxima were, not only on
//! the latent values.

mod checkpoint;
mod train;

pub use checkpoint::{
    load_checkpoint, read_checkpoint_info, save_checkpoint, Checkpoint, CheckpointInfo,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use train::{evaluate_mse, new_adam, train, EpochLog, TrainConfig, TrainOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    conv_backward, conv_forward, convt_backward, convt_forward, leaky, maxpool_into,
    unpool_backward_into, unpool_into, ConvGeom, Param, PoolIndices, Tensor, DEFAULT_LEAKY_SLOPE,
};
use crate::waveform::IqSignal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub num_samples: usize,
    pub kernel_size: usize,
    pub channels: usize,
    pub num_stages: usize,
    pub pool_window: usize,
    /// Channels of the last encoder conv. Equal to `channels` by default; 1
    /// gives a strict 16:1 element-count bottleneck.
    pub latent_channels: usize,
    pub activation_slope: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk_scale()
    }
}

impl ModelConfig {
    /// N = 1000 with the kernel size that worked best at that length.
    pub fn desk_scale() -> Self {
        Self {
            num_samples: 1000,
            kernel_size: 300,
            channels: 64,
            num_stages: 3,
            pool_window: 2,
            latent_channels: 64,
            activation_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    /// 40k-sample records with 64 kernels of size 200.
    pub fn full_scale() -> Self {
        Self {
            num_samples: 40_000,
            kernel_size: 200,
            ..Self::desk_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_stages == 0 || self.pool_window < 2 {
            return Err(Error::Config(format!(
                "need at least one stage and pool_window >= 2, got {} stages, window {}",
                self.num_stages, self.pool_window
            )));
        }
        let factor = self
            .pool_window
            .checked_pow(self.num_stages as u32)
            .ok_or_else(|| Error::Config("pool_window^num_stages overflows".into()))?;
        if self.num_samples == 0 || !self.num_samples.is_multiple_of(factor) {
            return Err(Error::Config(format!(
                "num_samples {} must be a positive multiple of pool_window^num_stages = {factor}",
                self.num_samples
            )));
        }
        if self.kernel_size < 2 {
            return Err(Error::Config(format!(
                "kernel_size must be at least 2, got {}",
                self.kernel_size
            )));
        }
        if self.channels == 0 || self.latent_channels == 0 {
            return Err(Error::Config("channel counts must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.activation_slope) {
            return Err(Error::Config(format!(
                "activation_slope must be in [0, 1], got {}",
                self.activation_slope
            )));
        }
        Ok(())
    }

    /// Temporal length seen by encoder stage `s`.
    pub fn stage_len(&self, s: usize) -> usize {
        self.num_samples / self.pool_window.pow(s as u32)
    }

    pub fn latent_len(&self) -> usize {
        self.stage_len(self.num_stages)
    }

    /// Input and output channels of encoder conv `s`.
    pub fn encoder_channels(&self, s: usize) -> (usize, usize) {
        let ci = if s == 0 { 1 } else { self.channels };
        let co = if s + 1 == self.num_stages {
            self.latent_channels
        } else {
            self.channels
        };
        (ci, co)
    }

    /// Temporal lengths through the network: input, mixer output, each pooled
    /// encoder output, each decoder output, and the unmixer output.
    pub fn layer_lengths(&self) -> Vec<usize> {
        let s = self.num_stages;
        let mut v = vec![self.num_samples; 2];
        v.extend((1..=s).map(|i| self.stage_len(i)));
        v.extend((0..s).rev().map(|i| self.stage_len(i)));
        v.push(self.num_samples);
        v
    }

    /// Input samples per latent sample: `2N / (N / window^S)`.
    pub fn compression_ratio(&self) -> f64 {
        2.0 * self.num_samples as f64 / self.latent_len() as f64
    }

    /// Input elements per latent element, counting latent channels.
    pub fn element_compression_ratio(&self) -> f64 {
        self.compression_ratio() / self.latent_channels as f64
    }

    fn enc_geom(&self, s: usize) -> ConvGeom {
        let (ci, co) = self.encoder_channels(s);
        ConvGeom {
            ci,
            co,
            k: self.kernel_size,
            len: self.stage_len(s),
        }
    }

    fn iq_geom(&self) -> ConvGeom {
        ConvGeom {
            ci: 2,
            co: 1,
            k: 2,
            len: self.num_samples,
        }
    }

    /// Shapes of every parameter tensor in checkpoint order.
    pub fn parameter_shapes(&self) -> Vec<Vec<usize>> {
        let k = self.kernel_size;
        let mut v = vec![vec![1, 1, 2, 2], vec![1]];
        for s in 0..self.num_stages {
            let (ci, co) = self.encoder_channels(s);
            v.push(vec![co, ci, k]);
            v.push(vec![co]);
        }
        for j in 0..self.num_stages {
            let (ci, co) = self.encoder_channels(self.num_stages - 1 - j);
            v.push(vec![co, ci, k]);
            v.push(vec![ci]);
        }
        v.push(vec![1, 1, 2, 2]);
        v.push(vec![1]);
        v
    }
}

/// Kernels and bias of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weight: Param,
    pub bias: Param,
}

/// All trainable parameters. Decoder layer `j` stores its kernels in the
/// transposed layout `[C_in, C_out, K]` of the encoder stage it mirrors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub mixer: ConvLayer,
    pub encoder: Vec<ConvLayer>,
    pub decoder: Vec<ConvLayer>,
    pub unmixer: ConvLayer,
}

fn uniform(shape: &[usize], bound: f32, rng: &mut ChaCha8Rng) -> Param {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Param::new(Tensor::from_vec(shape, data).expect("shape matches"))
}

/// Builds a freshly initialized model: kernels uniform in `±sqrt(1 / fan_in)`,
/// biases zero.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<ModelWeights> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = cfg.num_stages;
    let mut layers = Vec::new();
    for (li, pair) in cfg.parameter_shapes().chunks(2).enumerate() {
        let w = &pair[0];
        let fan_in = match li {
            // Mixer: two rows by two taps. Unmixer: one row, two taps per output.
            0 => 4,
            _ if li == 2 * s + 1 => 2,
            // Encoder kernels [C_out, C_in, K]; decoder kernels [C_in, C_out, K].
            _ if li <= s => w[1] * w[2],
            _ => w[0] * w[2],
        };
        layers.push(ConvLayer {
            weight: uniform(w, (1.0 / fan_in as f32).sqrt(), &mut rng),
            bias: Param::new(Tensor::zeros(&pair[1])),
        });
    }
    let unmixer = layers.pop().expect("unmixer");
    let mut it = layers.into_iter();
    let mixer = it.next().expect("mixer");
    let encoder: Vec<_> = it.by_ref().take(s).collect();
    let decoder: Vec<_> = it.collect();
    Ok(ModelWeights {
        config: *cfg,
        mixer,
        encoder,
        decoder,
        unmixer,
    })
}

/// Per-example activations kept for the backward pass.
struct Trace {
    input: Vec<f32>,
    /// `enc_in[s]` feeds encoder conv `s`; `enc_in[S]` is the latent.
    enc_in: Vec<Vec<f32>>,
    enc_pre: Vec<Vec<f32>>,
    enc_idx: Vec<PoolIndices>,
    /// Unpooled inputs of each transposed conv.
    dec_in: Vec<Vec<f32>>,
    dec_pre: Vec<Vec<f32>>,
    dec_out: Vec<f32>,
    output: Vec<f32>,
}

/// Parameter gradients of one example, in checkpoint order.
pub(crate) type Grads = Vec<Vec<f32>>;

impl ModelWeights {
    /// Every parameter in checkpoint order.
    pub fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.mixer.weight, &self.mixer.bias];
        for l in self.encoder.iter().chain(&self.decoder) {
            v.push(&l.weight);
            v.push(&l.bias);
        }
        v.push(&self.unmixer.weight);
        v.push(&self.unmixer.bias);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.mixer.weight, &mut self.mixer.bias];
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
        }
        v.push(&mut self.unmixer.weight);
        v.push(&mut self.unmixer.bias);
        v
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Checks that every tensor has the shape the config implies.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let shapes = self.config.parameter_shapes();
        let params = self.params();
        if params.len() != shapes.len() {
            return Err(Error::Dimension(format!(
                "model has {} parameter tensors, config implies {}",
                params.len(),
                shapes.len()
            )));
        }
        for (i, (p, s)) in params.iter().zip(&shapes).enumerate() {
            if p.value.shape() != s.as_slice() || p.grad.shape() != s.as_slice() {
                return Err(Error::Dimension(format!(
                    "parameter {i} has shape {:?}, config implies {s:?}",
                    p.value.shape()
                )));
            }
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let s = batch.shape();
        let n = self.config.num_samples;
        if s.len() != 3 || s[1] != 2 || s[2] != n {
            return Err(Error::Dimension(format!(
                "model expects [batch, 2, {n}] input, got {s:?}"
            )));
        }
        Ok(s[0])
    }

    fn trace(&self, x: &[f32]) -> Trace {
        let cfg = &self.config;
        let slope = cfg.activation_slope;
        let stages = cfg.num_stages;
        let n = cfg.num_samples;

        let mut mixed = vec![0.0; n];
        conv_forward(
            x,
            self.mixer.weight.value.data(),
            self.mixer.bias.value.data(),
            &cfg.iq_geom(),
            &mut mixed,
        );

        let mut enc_in = vec![mixed];
        let mut enc_pre = Vec::with_capacity(stages);
        let mut enc_idx = Vec::with_capacity(stages);
        for (s, layer) in self.encoder.iter().enumerate() {
            let g = cfg.enc_geom(s);
            let mut pre = vec![0.0; g.co * g.len];
            conv_forward(
                &enc_in[s],
                layer.weight.value.data(),
                layer.bias.value.data(),
                &g,
                &mut pre,
            );
            let act: Vec<f32> = pre.iter().map(|&v| leaky(v, slope)).collect();
            let plen = g.len / cfg.pool_window;
            let mut pooled = vec![0.0; g.co * plen];
            let mut positions = vec![0; g.co * plen];
            maxpool_into(
                &act,
                g.co,
                g.len,
                cfg.pool_window,
                &mut pooled,
                &mut positions,
            );
            enc_pre.push(pre);
            enc_idx.push(PoolIndices {
                channels: g.co,
                len: plen,
                window: cfg.pool_window,
                positions,
            });
            enc_in.push(pooled);
        }

        let mut dec_in = Vec::with_capacity(stages);
        let mut dec_pre: Vec<Vec<f32>> = Vec::with_capacity(stages);
        let mut h = enc_in[stages].clone();
        for (j, layer) in self.decoder.iter().enumerate() {
            let s = stages - 1 - j;
            let g = cfg.enc_geom(s);
            let mut up = vec![0.0; g.co * g.len];
            unpool_into(&h, &enc_idx[s], &mut up);
            let mut pre = vec![0.0; g.ci * g.len];
            convt_forward(
                &up,
                layer.weight.value.data(),
                layer.bias.value.data(),
                &g,
                &mut pre,
            );
            h = pre.iter().map(|&v| leaky(v, slope)).collect();
            dec_in.push(up);
            dec_pre.push(pre);
        }

        let mut output = vec![0.0; 2 * n];
        let b = self.unmixer.bias.value.data()[0];
        convt_forward(
            &h,
            self.unmixer.weight.value.data(),
            &[b, b],
            &cfg.iq_geom(),
            &mut output,
        );
        Trace {
            input: x.to_vec(),
            enc_in,
            enc_pre,
            enc_idx,
            dec_in,
            dec_pre,
            dec_out: h,
            output,
        }
    }

    /// Gradients of all parameters given dLoss/dOutput for one example.
    fn backward(&self, t: &Trace, gout: &[f32]) -> Grads {
        let cfg = &self.config;
        let slope = cfg.activation_slope;
        let stages = cfg.num_stages;
        let n = cfg.num_samples;
        let mut grads: Grads = cfg
            .parameter_shapes()
            .iter()
            .map(|s| vec![0.0; s.iter().product()])
            .collect();
        let np = grads.len();

        let (gw_u, rest) = grads.split_at_mut(np - 1);
        let mut gb_u = [0.0f32; 2];
        let mut gh = vec![0.0; n];
        convt_backward(
            &t.dec_out,
            self.unmixer.weight.value.data(),
            gout,
            &cfg.iq_geom(),
            Some(&mut gh),
            &mut gw_u[np - 2],
            &mut gb_u,
        );
        rest[0][0] = gb_u[0] + gb_u[1];

        for j in (0..stages).rev() {
            let s = stages - 1 - j;
            let g = cfg.enc_geom(s);
            let layer = &self.decoder[j];
            let gpre: Vec<f32> = t.dec_pre[j]
                .iter()
                .zip(&gh)
                .map(|(&p, &d)| if p > 0.0 { d } else { slope * d })
                .collect();
            let mut gup = vec![0.0; g.co * g.len];
            let wi = 2 + 2 * stages + 2 * j;
            let (a, b) = grads.split_at_mut(wi + 1);
            convt_backward(
                &t.dec_in[j],
                layer.weight.value.data(),
                &gpre,
                &g,
                Some(&mut gup),
                &mut a[wi],
                &mut b[0],
            );
            let idx = &t.enc_idx[s];
            gh = vec![0.0; idx.channels * idx.len];
            unpool_backward_into(&gup, idx, &mut gh);
        }

        // gh is now the latent gradient.
        for s in (0..stages).rev() {
            let g = cfg.enc_geom(s);
            let layer = &self.encoder[s];
            let mut gact = vec![0.0; g.co * g.len];
            unpool_into(&gh, &t.enc_idx[s], &mut gact);
            let gpre: Vec<f32> = t.enc_pre[s]
                .iter()
                .zip(&gact)
                .map(|(&p, &d)| if p > 0.0 { d } else { slope * d })
                .collect();
            let wi = 2 + 2 * s;
            let (a, b) = grads.split_at_mut(wi + 1);
            let mut gin = vec![0.0; g.ci * g.len];
            conv_backward(
                &t.enc_in[s],
                layer.weight.value.data(),
                &gpre,
                &g,
                Some(&mut gin),
                &mut a[wi],
                &mut b[0],
            );
            gh = gin;
        }

        let (a, b) = grads.split_at_mut(1);
        conv_backward(
            &t.input,
            self.mixer.weight.value.data(),
            &gh,
            &cfg.iq_geom(),
            None,
            &mut a[0],
            &mut b[0],
        );
        grads
    }

    /// Reconstructs a `[batch, 2, N]` tensor. Examples are independent and may
    /// run in parallel; the result does not depend on the thread count.
    pub fn forward(&self, dirty: &Tensor) -> Result<Tensor> {
        let b = self.check_batch(dirty)?;
        let n = self.config.num_samples;
        let rows: Vec<Vec<f32>> = (0..b)
            .into_par_iter()
            .map(|i| self.trace(dirty.outer(i)).output)
            .collect();
        let mut out = Tensor::zeros(&[b, 2, n]);
        for (i, r) in rows.iter().enumerate() {
            out.outer_mut(i).copy_from_slice(r);
        }
        Ok(out)
    }

    /// Mean-squared reconstruction loss of a batch; when `accumulate` is set
    /// the gradients are added to each parameter's `grad`.
    ///
    /// Per-example gradients are computed independently and summed in example
    /// order, so the result is the same for any thread count.
    pub fn loss_and_grad(
        &mut self,
        dirty: &Tensor,
        clean: &Tensor,
        accumulate: bool,
    ) -> Result<f64> {
        let b = self.check_batch(dirty)?;
        if clean.shape() != dirty.shape() {
            return Err(Error::Dimension(format!(
                "target {:?} does not match input {:?}",
                clean.shape(),
                dirty.shape()
            )));
        }
        let count = dirty.len() as f64;
        let chunk = rayon::current_num_threads().max(1);
        let mut sum = 0.0f64;
        for start in (0..b).step_by(chunk) {
            let end = (start + chunk).min(b);
            let results: Vec<(f64, Option<Grads>)> = (start..end)
                .into_par_iter()
                .map(|i| {
                    let t = self.trace(dirty.outer(i));
                    let target = clean.outer(i);
                    let mut sq = 0.0f64;
                    let gout: Vec<f32> = t
                        .output
                        .iter()
                        .zip(target)
                        .map(|(&p, &y)| {
                            let d = p - y;
                            sq += d as f64 * d as f64;
                            (2.0 * d as f64 / count) as f32
                        })
                        .collect();
                    let grads = accumulate.then(|| self.backward(&t, &gout));
                    (sq, grads)
                })
                .collect();
            for (sq, grads) in results {
                sum += sq;
                if let Some(grads) = grads {
                    for (p, g) in self.params_mut().into_iter().zip(grads) {
                        for (a, v) in p.grad.data_mut().iter_mut().zip(g) {
                            *a += v;
                        }
                    }
                }
            }
        }
        Ok(sum / count)
    }

    /// Output of the first `num_stages` encoder stages (the latent code),
    /// shaped `[latent_channels, N / window^S]`.
    pub fn encode(&self, dirty: &IqSignal) -> Result<Tensor> {
        let x = self.signal_rows(dirty)?;
        let t = self.trace(&x);
        let cfg = &self.config;
        Tensor::from_vec(
            &[cfg.latent_channels, cfg.latent_len()],
            t.enc_in[cfg.num_stages].clone(),
        )
    }

    fn signal_rows(&self, sig: &IqSignal) -> Result<Vec<f32>> {
        let n = self.config.num_samples;
        if sig.len() != n {
            return Err(Error::Dimension(format!(
                "model expects {n} samples, signal has {}",
                sig.len()
            )));
        }
        let mut x = vec![0.0; 2 * n];
        crate::dataset::signal_to_rows(sig, &mut x);
        Ok(x)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// Something that maps a dirty record to a cleaned one of the same length.
pub trait Denoiser: Sync {
    fn num_samples(&self) -> usize;
    fn denoise(&self, dirty: &IqSignal) -> Result<IqSignal>;
}

impl Denoiser for ModelWeights {
    fn num_samples(&self) -> usize {
        self.config.num_samples
    }

    fn denoise(&self, dirty: &IqSignal) -> Result<IqSignal> {
        let x = self.signal_rows(dirty)?;
        let out = self.trace(&x).output;
        Ok(crate::dataset::rows_to_signal(&out, dirty.sample_rate_hz))
    }
}

/// Pass-through, for baselines and harness checks.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl Denoiser for Identity {
    fn num_samples(&self) -> usize {
        self.0
    }

    fn denoise(&self, dirty: &IqSignal) -> Result<IqSignal> {
        Ok(dirty.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            num_samples: 64,
            kernel_size: 5,
            channels: 3,
            latent_channels: 2,
            ..ModelConfig::desk_scale()
        }
    }

    #[test]
    fn lengths_and_ratio() {
        let cfg = ModelConfig::desk_scale();
        assert_eq!(
            cfg.layer_lengths(),
            vec![1000, 1000, 500, 250, 125, 250, 500, 1000, 1000]
        );
        assert_eq!(cfg.compression_ratio(), 16.0);
        assert_eq!(cfg.element_compression_ratio(), 0.25);
        let strict = ModelConfig {
            latent_channels: 1,
            ..cfg
        };
        assert_eq!(strict.element_compression_ratio(), 16.0);
    }

    #[test]
    fn config_invariants() {
        let bad = ModelConfig {
            num_samples: 1001,
            ..ModelConfig::desk_scale()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = ModelConfig {
            kernel_size: 1,
            ..ModelConfig::desk_scale()
        };
        assert!(bad.validate().is_err());
        assert!(ModelConfig::full_scale().validate().is_ok());
    }

    #[test]
    fn build_is_seeded_and_shaped() {
        let a = build_model(&tiny(), 1).unwrap();
        assert_eq!(a, build_model(&tiny(), 1).unwrap());
        assert_ne!(a, build_model(&tiny(), 2).unwrap());
        a.validate().unwrap();
        assert_eq!(a.encoder[0].weight.value.shape(), [3, 1, 5]);
        assert_eq!(a.encoder[2].weight.value.shape(), [2, 3, 5]);
        assert_eq!(a.decoder[0].weight.value.shape(), [2, 3, 5]);
        assert_eq!(a.decoder[0].bias.value.shape(), [3]);
        assert_eq!(a.decoder[2].weight.value.shape(), [3, 1, 5]);
        assert_eq!(a.decoder[2].bias.value.shape(), [1]);
    }

    #[test]
    fn zeros_forward_is_finite() {
        let m = build_model(&ModelConfig::desk_scale(), 0).unwrap();
        let out = m.forward(&Tensor::zeros(&[1, 2, 1000])).unwrap();
        assert_eq!(out.shape(), [1, 2, 1000]);
        assert!(out.all_finite());
    }

    #[test]
    fn wrong_length_rejected() {
        let m = build_model(&tiny(), 0).unwrap();
        assert!(matches!(
            m.forward(&Tensor::zeros(&[1, 2, 128])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn batch_independence() {
        let m = build_model(&tiny(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f32> = (0..8 * 2 * 64)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let batch = Tensor::from_vec(&[8, 2, 64], data).unwrap();
        let all = m.forward(&batch).unwrap();
        for i in 0..8 {
            let one = Tensor::from_vec(&[1, 2, 64], batch.outer(i).to_vec()).unwrap();
            let out = m.forward(&one).unwrap();
            for (a, b) in out.data().iter().zip(all.outer(i)) {
                assert!((a - b).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn loss_matches_forward() {
        let mut m = build_model(&tiny(), 3).unwrap();
        let x = Tensor::from_vec(
            &[2, 2, 64],
            (0..256).map(|i| (i as f32 * 0.1).sin()).collect(),
        )
        .unwrap();
        let y = Tensor::zeros(&[2, 2, 64]);
        let out = m.forward(&x).unwrap();
        let (expected, _) = crate::nn::mse_loss(&out, &y).unwrap();
        let loss = m.loss_and_grad(&x, &y, false).unwrap();
        assert!((loss - expected as f64).abs() < 1e-6 * expected.max(1e-6) as f64 + 1e-9);
        assert!(m
            .params()
            .iter()
            .all(|p| p.grad.data().iter().all(|g| *g == 0.0)));
    }
}

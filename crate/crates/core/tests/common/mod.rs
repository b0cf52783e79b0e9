//! Finite-difference and adjoint checks shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radalt_core::autoencoder::{build_model, ModelConfig, ModelWeights};
use radalt_core::nn::*;

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// `||a - b|| / max(||a||, ||b||)` over whole gradient vectors.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let mut d = 0.0;
    let (mut na, mut nb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        d += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    let scale = na.max(nb).sqrt();
    if scale == 0.0 {
        d.sqrt()
    } else {
        d.sqrt() / scale
    }
}

fn dot(a: &Tensor, r: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(r.data())
        .map(|(x, y)| *x as f64 * *y as f64)
        .sum()
}

/// Central differences of `loss` with respect to every element of `x`.
pub fn numeric_grad(x: &Tensor, eps: f32, loss: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            p.data_mut()[i] += eps;
            let mut m = x.clone();
            m.data_mut()[i] -= eps;
            (loss(&p) - loss(&m)) / (2.0 * eps as f64)
        })
        .collect()
}

fn widen(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

type Forward = fn(&Tensor, &Tensor, &Tensor) -> radalt_core::Result<Tensor>;
type Backward = fn(&Tensor, &Tensor, &Tensor) -> radalt_core::Result<ConvGrads>;

/// Largest relative error over the input, weight and bias gradients of a
/// layer under the loss `sum(r * layer(x))`.
fn check_layer(
    seed: u64,
    x_shape: &[usize],
    w_shape: &[usize],
    b_len: usize,
    forward: Forward,
    backward: Backward,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rand_tensor(&mut rng, x_shape);
    let w = rand_tensor(&mut rng, w_shape);
    let b = rand_tensor(&mut rng, &[b_len]);
    let y = forward(&x, &w, &b).unwrap();
    let r = rand_tensor(&mut rng, y.shape());
    let g = backward(&x, &w, &r).unwrap();
    let eps = 1e-2;
    let gx = numeric_grad(&x, eps, |x| dot(&forward(x, &w, &b).unwrap(), &r));
    let gw = numeric_grad(&w, eps, |w| dot(&forward(&x, w, &b).unwrap(), &r));
    let gb = numeric_grad(&b, eps, |b| dot(&forward(&x, &w, b).unwrap(), &r));
    rel_err(&gx, &widen(&g.input))
        .max(rel_err(&gw, &widen(&g.weight)))
        .max(rel_err(&gb, &widen(&g.bias)))
}

/// Random small shapes: (channels in, channels out, kernel, length).
fn shapes(seed: u64) -> (usize, usize, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (
        rng.random_range(1..5),
        rng.random_range(1..5),
        rng.random_range(1..8),
        rng.random_range(4..20),
    )
}

pub fn conv1d_grad_error(seed: u64) -> f64 {
    let (ci, co, k, n) = shapes(seed);
    check_layer(seed, &[ci, n], &[co, ci, k], co, conv1d, conv1d_backward)
}

pub fn conv1d_transposed_grad_error(seed: u64) -> f64 {
    let (ci, co, k, n) = shapes(seed);
    check_layer(
        seed,
        &[co, n],
        &[co, ci, k],
        ci,
        conv1d_transposed,
        conv1d_transposed_backward,
    )
}

pub fn iq_mix_grad_error(seed: u64) -> f64 {
    let (_, co, _, n) = shapes(seed);
    check_layer(
        seed,
        &[2, n],
        &[co, 1, 2, 2],
        co,
        iq_mix_conv2d,
        iq_mix_conv2d_backward,
    )
}

pub fn iq_unmix_grad_error(seed: u64) -> f64 {
    let (ci, _, _, n) = shapes(seed);
    check_layer(
        seed,
        &[ci, n],
        &[ci, 1, 2, 2],
        1,
        iq_unmix_conv2d_transposed,
        iq_unmix_conv2d_transposed_backward,
    )
}

/// maxpool -> leaky ReLU -> unpool, checked with respect to the input.
pub fn pooling_path_grad_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.random_range(1..4);
    let n = 2 * rng.random_range(2..12);
    let x = rand_tensor(&mut rng, &[c, n]);
    let slope = 0.2;
    let path = |x: &Tensor| {
        let (p, idx) = maxpool(x, 2).unwrap();
        let a = leaky_relu(&p, slope);
        (max_unpool(&a, &idx).unwrap(), p, idx)
    };
    let (y, pooled, idx) = path(&x);
    let r = rand_tensor(&mut rng, y.shape());
    let g = max_unpool_backward(&r, &idx).unwrap();
    let g = leaky_relu_backward(&pooled, &g, slope).unwrap();
    let g = maxpool_backward(&g, &idx).unwrap();
    let num = numeric_grad(&x, 1e-3, |x| dot(&path(x).0, &r));
    rel_err(&num, &widen(&g))
}

pub fn mse_grad_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..40);
    let p = rand_tensor(&mut rng, &[2, n]);
    let t = rand_tensor(&mut rng, &[2, n]);
    let (_, g) = mse_loss(&p, &t).unwrap();
    let loss = |p: &Tensor| {
        let s: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
            .sum();
        s / p.len() as f64
    };
    rel_err(&numeric_grad(&p, 1e-2, loss), &widen(&g))
}

pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        num_samples: 32,
        kernel_size: 5,
        channels: 3,
        latent_channels: 2,
        ..ModelConfig::desk_scale()
    }
}

/// Full model: analytic parameter gradients of the MSE loss against central
/// differences, for a sample of entries of every parameter tensor.
pub fn model_grad_error(seed: u64) -> f64 {
    let cfg = tiny_model_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model: ModelWeights = build_model(&cfg, seed).unwrap();
    for p in model.params_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.1f32..0.1);
        }
    }
    let dirty = rand_tensor(&mut rng, &[2, 2, cfg.num_samples]);
    let clean = rand_tensor(&mut rng, &[2, 2, cfg.num_samples]);
    model.zero_grad();
    model.loss_and_grad(&dirty, &clean, true).unwrap();
    let analytic: Vec<Tensor> = model.params().iter().map(|p| p.grad.clone()).collect();

    let loss = |m: &ModelWeights| -> f64 {
        let out = m.forward(&dirty).unwrap();
        let s: f64 = out
            .data()
            .iter()
            .zip(clean.data())
            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
            .sum();
        s / out.len() as f64
    };
    // Within a region where no leaky unit changes side and no pooling argmax
    // switches, the loss is quadratic in any single parameter, so central
    // differences are exact for every step size. Unpooling is discontinuous
    // where an argmax switches; steps that cross such a point give
    // step-dependent estimates and are skipped.
    let eps = 1e-2f32;
    let central = |t: usize, i: usize, h: f32| {
        let mut plus = model.clone();
        plus.params_mut()[t].value.data_mut()[i] += h;
        let mut minus = model.clone();
        minus.params_mut()[t].value.data_mut()[i] -= h;
        (loss(&plus) - loss(&minus)) / (2.0 * h as f64)
    };
    let (mut num, mut ana) = (Vec::new(), Vec::new());
    let (mut tried, mut skipped) = (0usize, 0usize);
    for (t, grad) in analytic.iter().enumerate() {
        let len = grad.len();
        let picks: Vec<usize> = if len <= 12 {
            (0..len).collect()
        } else {
            (0..12).map(|_| rng.random_range(0..len)).collect()
        };
        for i in picks {
            let wide = central(t, i, eps);
            let narrow = central(t, i, eps / 2.0);
            tried += 1;
            if (wide - narrow).abs() > 0.02 * wide.abs().max(narrow.abs()) + 1e-6 {
                skipped += 1;
                continue;
            }
            num.push(wide);
            ana.push(grad.data()[i] as f64);
        }
    }
    if skipped * 2 > tried {
        return f64::INFINITY;
    }
    rel_err(&num, &ana)
}

/// `|<y, A x> - <A^T y, x>| / (|<y, A x>|)` for the conv/transposed-conv pair.
pub fn conv_adjoint_error(seed: u64) -> f64 {
    let (ci, co, k, n) = shapes(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rand_tensor(&mut rng, &[ci, n]);
    let y = rand_tensor(&mut rng, &[co, n]);
    let w = rand_tensor(&mut rng, &[co, ci, k]);
    let ax = conv1d(&x, &w, &Tensor::zeros(&[co])).unwrap();
    let aty = conv1d_transposed(&y, &w, &Tensor::zeros(&[ci])).unwrap();
    let lhs = dot(&ax, &y);
    let rhs = dot(&aty, &x);
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12)
}

/// Same identity for the IQ mixer and unmixer.
pub fn iq_adjoint_error(seed: u64) -> f64 {
    let (_, co, _, n) = shapes(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rand_tensor(&mut rng, &[2, n]);
    let y = rand_tensor(&mut rng, &[co, n]);
    let w = rand_tensor(&mut rng, &[co, 1, 2, 2]);
    let ax = iq_mix_conv2d(&x, &w, &Tensor::zeros(&[co])).unwrap();
    let aty = iq_unmix_conv2d_transposed(&y, &w, &Tensor::zeros(&[1])).unwrap();
    let lhs = dot(&ax, &y);
    let rhs = dot(&aty, &x);
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12)
}

pub const GRADIENT_TOLERANCE: f64 = 1e-3;
pub const ADJOINT_TOLERANCE: f64 = 1e-4;
/// End-to-end model check: f32 forward passes through three unpooling stages
/// leave more rounding in the differences than a single layer does.
pub const COMPOSITE_TOLERANCE: f64 = 1e-2;

type Check = (&'static str, fn(u64) -> f64, f64);

/// Every check, named, over `seeds`; returns the worst error of each.
pub fn all_gradient_checks(seeds: std::ops::Range<u64>) -> Vec<(&'static str, f64, f64)> {
    let checks: [Check; 9] = [
        ("conv1d", conv1d_grad_error, GRADIENT_TOLERANCE),
        ("iq mixer conv2d", iq_mix_grad_error, GRADIENT_TOLERANCE),
        (
            "transposed conv1d",
            conv1d_transposed_grad_error,
            GRADIENT_TOLERANCE,
        ),
        ("iq unmixer conv2d", iq_unmix_grad_error, GRADIENT_TOLERANCE),
        (
            "pool/activation/unpool path",
            pooling_path_grad_error,
            GRADIENT_TOLERANCE,
        ),
        ("mse loss", mse_grad_error, GRADIENT_TOLERANCE),
        (
            "full model (composite)",
            model_grad_error,
            COMPOSITE_TOLERANCE,
        ),
        ("conv adjoint", conv_adjoint_error, ADJOINT_TOLERANCE),
        ("iq mixer adjoint", iq_adjoint_error, ADJOINT_TOLERANCE),
    ];
    checks
        .iter()
        .map(|(name, f, tol)| {
            let worst = seeds.clone().map(f).fold(0.0, f64::max);
            (*name, worst, *tol)
        })
        .collect()
}

/// Measured fading on a full-scale chirp: (envelope std, bandwidth holding
/// 99.99 % of the envelope energy, energy fraction above 0.1 B).
pub fn fading_stats(seed: u64) -> (f64, f64, f64) {
    use radalt_core::channel::{apply_amplitude_fading, FadingParams};
    use radalt_core::waveform::{generate_cwlfm, ChirpParams};
    use rustfft::{num_complex::Complex64, FftPlanner};

    let p = ChirpParams::full_scale();
    let clean = generate_cwlfm(&p).unwrap();
    let faded =
        apply_amplitude_fading(&clean, &FadingParams::default(), p.bandwidth_hz, seed).unwrap();
    // The chirp never vanishes, so the envelope is the sample-wise ratio.
    let g: Vec<f64> = faded
        .samples
        .iter()
        .zip(&clean.samples)
        .map(|(f, c)| (f / c).re as f64 - 1.0)
        .collect();
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    let std = (g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();

    let mut spec: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v - mean, 0.0)).collect();
    FftPlanner::new()
        .plan_fft_forward(spec.len())
        .process(&mut spec);
    let len = spec.len();
    let mut by_freq: Vec<(f64, f64)> = spec
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let signed = if k <= len / 2 {
                k as f64
            } else {
                k as f64 - len as f64
            };
            ((signed * p.sample_rate_hz / len as f64).abs(), v.norm_sqr())
        })
        .collect();
    by_freq.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = by_freq.iter().map(|v| v.1).sum();
    let mut acc = 0.0;
    let mut bw = 0.0;
    for &(f, e) in &by_freq {
        acc += e;
        if acc >= 0.9999 * total {
            bw = f;
            break;
        }
    }
    let above: f64 = by_freq
        .iter()
        .filter(|v| v.0 > 0.1 * p.bandwidth_hz)
        .map(|v| v.1)
        .sum();
    (std, bw, above / total)
}

/// SNR measured from the noise actually added to a full-scale chirp.
pub fn measured_snr_db(target_db: f64, seed: u64) -> f64 {
    use radalt_core::channel::{add_awgn, NoiseParams};
    use radalt_core::waveform::{generate_cwlfm, ChirpParams};

    let clean = generate_cwlfm(&ChirpParams::full_scale()).unwrap();
    let noisy = add_awgn(&clean, &NoiseParams { snr_db: target_db }, seed).unwrap();
    let sig: f64 = clean.samples.iter().map(|v| v.norm_sqr() as f64).sum();
    let noise: f64 = noisy
        .samples
        .iter()
        .zip(&clean.samples)
        .map(|(a, b)| (a - b).norm_sqr() as f64)
        .sum();
    10.0 * (sig / noise).log10()
}

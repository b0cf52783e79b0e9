use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use radalt_core::autoencoder::{build_model, ModelConfig};
use radalt_core::dataset::signals_to_tensor;
use radalt_core::nn::{conv1d, conv1d_backward, Tensor};
use radalt_core::rangeproc::stretch_process;
use radalt_core::waveform::{apply_delay, generate_cwlfm, ChirpParams};

fn ramp(shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|i| ((i * 7919) % 1000) as f32 / 1000.0 - 0.5)
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn conv(c: &mut Criterion) {
    let x = ramp(&[1, 64, 1000]);
    let w = ramp(&[64, 64, 300]);
    let b = ramp(&[64]);
    c.bench_function("conv1d 64x64 k300 n1000", |bench| {
        bench.iter(|| conv1d(black_box(&x), black_box(&w), black_box(&b)).unwrap())
    });
    let g = conv1d(&x, &w, &b).unwrap();
    c.bench_function("conv1d backward 64x64 k300 n1000", |bench| {
        bench.iter(|| conv1d_backward(black_box(&x), black_box(&w), black_box(&g)).unwrap())
    });
}

fn stretch(c: &mut Criterion) {
    let params = ChirpParams::full_scale();
    let reference = generate_cwlfm(&params).unwrap();
    let rx = apply_delay(&reference, 0.004 * params.duration_s()).unwrap();
    c.bench_function("stretch process n40000", |bench| {
        bench.iter(|| stretch_process(black_box(&rx), &reference, &params).unwrap())
    });
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("model forward");
    group.sample_size(10);
    for (name, cfg) in [
        (
            "desk c16",
            ModelConfig {
                channels: 16,
                latent_channels: 16,
                ..ModelConfig::desk_scale()
            },
        ),
        ("desk c64", ModelConfig::desk_scale()),
    ] {
        let model = build_model(&cfg, 0).unwrap();
        let chirp = generate_cwlfm(&ChirpParams {
            num_samples: cfg.num_samples,
            ..ChirpParams::desk_scale()
        })
        .unwrap();
        let batch = signals_to_tensor(&[&chirp; 16]).unwrap();
        group.bench_function(format!("{name} batch16"), |bench| {
            bench.iter(|| model.forward(black_box(&batch)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, conv, stretch, forward);
criterion_main!(benches);

use radalt_core::autoencoder::{build_model, ModelConfig};
use radalt_core::dataset::signals_to_tensor;
use radalt_core::waveform::{generate_cwlfm, ChirpParams};

/// Parameter count from the layer list, counted independently of the model.
fn expected_parameters(c: &ModelConfig) -> usize {
    let (k, ch, lat) = (c.kernel_size, c.channels, c.latent_channels);
    let iq = 4 + 1;
    let mut enc = Vec::new();
    for s in 0..c.num_stages {
        let ci = if s == 0 { 1 } else { ch };
        let co = if s + 1 == c.num_stages { lat } else { ch };
        enc.push((ci, co));
    }
    let encoder: usize = enc.iter().map(|(ci, co)| co * ci * k + co).sum();
    let decoder: usize = enc.iter().map(|(ci, co)| co * ci * k + ci).sum();
    2 * iq + encoder + decoder
}

#[test]
fn desk_and_full_scale_lengths() {
    for (cfg, n) in [
        (ModelConfig::desk_scale(), 1000),
        (ModelConfig::full_scale(), 40000),
    ] {
        assert_eq!(cfg.num_samples, n);
        assert_eq!(
            cfg.layer_lengths(),
            vec![n, n, n / 2, n / 4, n / 8, n / 4, n / 2, n, n]
        );
        assert_eq!(cfg.compression_ratio(), 16.0);
        let m = build_model(&cfg, 0).unwrap();
        assert_eq!(m.num_parameters(), expected_parameters(&cfg));
    }
}

#[test]
fn forty_thousand_sample_forward_and_latent() {
    let cfg = ModelConfig {
        channels: 4,
        latent_channels: 4,
        ..ModelConfig::full_scale()
    };
    let m = build_model(&cfg, 3).unwrap();
    let chirp = generate_cwlfm(&ChirpParams::full_scale()).unwrap();
    let latent = m.encode(&chirp).unwrap();
    assert_eq!(latent.shape(), [4, 5000]);
    let x = signals_to_tensor(&[&chirp]).unwrap();
    let y = m.forward(&x).unwrap();
    assert_eq!(y.shape(), [1, 2, 40000]);
    assert!(y.data().iter().all(|v| v.is_finite()));
}

mod common;

use common::{fading_stats, measured_snr_db};

#[test]
fn fading_envelope_std_and_bandwidth() {
    let b = 24e6;
    for seed in 0..5 {
        let (std, bw, above) = fading_stats(seed);
        assert!((std - 0.3).abs() <= 0.05, "seed {seed}: std {std}");
        assert!(bw <= 0.1 * b, "seed {seed}: bandwidth {bw}");
        assert!(above < 1e-9, "seed {seed}: {above}");
    }
}

#[test]
fn awgn_hits_target_snr() {
    for (i, target) in [-25.0, -10.0, 0.0, 10.0, 30.0].into_iter().enumerate() {
        let got = measured_snr_db(target, i as u64);
        assert!((got - target).abs() <= 0.2, "{target} dB: measured {got}");
    }
}

mod common;

use common::*;

#[test]
fn every_layer_matches_finite_differences() {
    for (name, worst, tol) in all_gradient_checks(0..8) {
        println!("{name}: worst relative error {worst:.2e} (tolerance {tol:.0e})");
        assert!(worst < tol, "{name}: {worst:e} >= {tol:e}");
    }
}

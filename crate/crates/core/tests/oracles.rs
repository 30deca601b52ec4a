mod common;

use common::oracles;

fn pass(c: oracles::Check) {
    if let Err(e) = c {
        panic!("{e}");
    }
}

#[test]
fn fft_matches_quadratic_dft() {
    pass(oracles::fft_oracle(50));
}

#[test]
fn welch_segments_peak_and_parseval() {
    pass(oracles::welch_oracle(50));
}

#[test]
fn cross_entropy_closed_forms() {
    pass(oracles::cross_entropy_oracle(50));
}

#[test]
fn splits_never_leak() {
    pass(oracles::split_trials(200));
}

#[test]
fn metrics_match_direct_counting() {
    pass(oracles::metrics_oracle(100));
}

#[test]
fn full_rank_pca_reconstructs() {
    pass(oracles::pca_reconstruction(120, 100));
}

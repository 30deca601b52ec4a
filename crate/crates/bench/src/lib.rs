//! Shared fixtures for the benchmarks.

use flowpat_core::dataset::build_split;
use flowpat_core::domain::default_envelope;
use flowpat_core::synth::{generate_corpus, SynthConfig};
use flowpat_core::{DatasetSplit, SplitProtocol, WINDOW_LEN};

/// A deterministic batch of smooth 500-sample windows.
pub fn windows(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..WINDOW_LEN).map(|t| 2.5 + ((i * 7 + t) as f64 * 0.01).sin()).collect())
        .collect()
}

/// A small synthetic split: two experiments per envelope row.
pub fn small_split(train_per_pattern: usize, eval_per_pattern: usize) -> DatasetSplit {
    let cfg = SynthConfig {
        duration_s: 60.0,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(2, &cfg, &default_envelope()).expect("corpus");
    build_split(&corpus, SplitProtocol::ExperimentBased, train_per_pattern, eval_per_pattern, WINDOW_LEN, 1)
        .expect("split")
}

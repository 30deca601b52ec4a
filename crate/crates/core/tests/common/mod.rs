#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;

use flowpat_core::domain::{CapacitanceTrace, Experiment, FlowPattern};

/// Trace whose sample `i` holds the value `offset + i`, so every window can be
/// traced back to its start.
pub fn ramp_experiment(id: &str, label: FlowPattern, len: usize, offset: f64) -> Experiment {
    Experiment {
        id: id.to_string(),
        inclination_deg: 0.0,
        u_gs_mps: 1.0,
        u_os_mps: 1.0,
        label,
        trace: CapacitanceTrace::new_unclamped(100.0, (0..len).map(|i| offset + i as f64).collect()).unwrap(),
    }
}

pub fn refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
    rows.iter().map(|r| r.as_slice()).collect()
}

/// Synthetic corpus over the default envelope.
pub fn synth_corpus(n_per_row: usize, seed: u64) -> Vec<Experiment> {
    let cfg = flowpat_core::synth::SynthConfig {
        seed,
        ..Default::default()
    };
    flowpat_core::synth::generate_corpus(n_per_row, &cfg, &flowpat_core::domain::default_envelope()).unwrap()
}

pub fn small_split(protocol: flowpat_core::SplitProtocol, train_q: usize, eval_q: usize, seed: u64) -> flowpat_core::DatasetSplit {
    let corpus = synth_corpus(2, seed);
    flowpat_core::dataset::build_split(&corpus, protocol, train_q, eval_q, flowpat_core::WINDOW_LEN, seed).unwrap()
}

//! Benchmark fixtures.

use sivsaw::experiments::{odar_sequence, DEFAULT_QUBIT_FREQ};
use sivsaw::{ExperimentContext, PulseSequence};

/// Default context pinned to one worker so timings are per-core.
pub fn context() -> ExperimentContext {
    ExperimentContext {
        workers: 1,
        ..Default::default()
    }
}

/// Resonant 20 ns, 2 mW ODAR shot.
pub fn odar_shot(ctx: &ExperimentContext) -> PulseSequence {
    odar_sequence(ctx, DEFAULT_QUBIT_FREQ, 20e-9, 2e-3).expect("default ODAR sequence compiles")
}

pub fn grid(a: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + step * i as f64).collect()
}

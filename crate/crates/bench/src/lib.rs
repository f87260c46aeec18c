//! Shared fixtures for the criterion benchmarks.

use clab_core::synth::{generate_sequence, SizeDistribution, SynthConfig, TaskSequence};

/// A mid-sized sequence matching the benchmark defaults' shape.
pub fn benchmark_sequence(num_tasks: usize) -> TaskSequence {
    let cfg = SynthConfig {
        num_tasks,
        size_dist: SizeDistribution {
            pareto_shape: 1.5,
            s_min: 2,
            s_max: 500,
        },
        seed: 42,
        ..SynthConfig::default()
    };
    generate_sequence(&cfg).expect("benchmark sequence generates")
}

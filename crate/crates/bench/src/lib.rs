//! Shared fixtures for the benchmarks.

use edgecache::{compute_path_sets, generate_instance, GeneratorConfig, NetworkInstance, PathSets};

/// A hour-scale grid instance and its k = 4 path sets.
pub fn fixture(side: usize, consumers: usize, seed: u64) -> (NetworkInstance, PathSets) {
    let inst = generate_instance(&GeneratorConfig::hour_scale(side, consumers), seed).expect("fixture instance");
    let sets = compute_path_sets(&inst, 4);
    (inst, sets)
}

/// Rotation and rescheduling period used by the benchmarks, in seconds.
pub const PERIOD_S: f64 = 10.0 * 3600.0;

//! Fixtures shared by the benchmarks.

use hieralm::random::{random_instance, rng, RandomSpec};
use hieralm::{build_instance, GridSpec, ProblemData};

/// Grid sizes benchmarked, smallest first. `20x20` is the reference size.
pub const GRID_SIZES: [(usize, usize); 3] = [(6, 6), (12, 12), (20, 20)];

pub fn grid(rows: usize, cols: usize, kappa: f64) -> ProblemData {
    let spec = GridSpec::new(rows, cols, kappa).expect("valid grid spec");
    build_instance(&spec).expect("grid builds").0
}

/// `count` random instances from a fixed seed.
pub fn random_batch(seed: u64, count: usize) -> Vec<ProblemData> {
    let mut r = rng(seed);
    let spec = RandomSpec {
        n_max: 12,
        m1_max: 8,
        m2_max: 8,
        ..RandomSpec::default()
    };
    (0..count).map(|_| random_instance(&mut r, &spec)).collect()
}

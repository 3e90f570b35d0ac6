//! Seeded random small instances for property checks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::problem::ProblemData;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub n_max: usize,
    pub m1_max: usize,
    pub m2_max: usize,
    /// Allow empty constraint blocks.
    pub allow_empty: bool,
    /// Entries of `A1`, `A2`, `b1`, `b2` are uniform in `[-bound, bound]`.
    pub bound: f64,
    /// Draw `x0` and set `b = A x0`, so the constraints are consistent.
    pub feasible: bool,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            n_max: 6,
            m1_max: 4,
            m2_max: 4,
            allow_empty: false,
            bound: 2.0,
            feasible: false,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

/// Draws one instance. `Q = B'B / n + I / 2` is positive definite so every
/// augmented Lagrangian subproblem has a unique minimizer.
pub fn random_instance<R: Rng>(rng: &mut R, spec: &RandomSpec) -> ProblemData {
    let lo = usize::from(!spec.allow_empty);
    let n = rng.random_range(1..=spec.n_max.max(1));
    let m1 = rng.random_range(lo.min(spec.m1_max)..=spec.m1_max);
    let m2 = rng.random_range(lo.min(spec.m2_max)..=spec.m2_max);

    let b = uniform_matrix(rng, n, n, 1.0);
    let q = b.tr_mul(&b) / n as f64 + DMatrix::identity(n, n) * 0.5;
    let q = (&q + q.transpose()) * 0.5;
    let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));

    let a1 = uniform_matrix(rng, m1, n, spec.bound);
    let a2 = uniform_matrix(rng, m2, n, spec.bound);
    let (b1, b2) = if spec.feasible {
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        (&a1 * &x0, &a2 * &x0)
    } else {
        (
            DVector::from_fn(m1, |_, _| rng.random_range(-spec.bound..=spec.bound)),
            DVector::from_fn(m2, |_, _| rng.random_range(-spec.bound..=spec.bound)),
        )
    };
    ProblemData::new(q, c, a1, b1, a2, b2).expect("generated dimensions agree")
}

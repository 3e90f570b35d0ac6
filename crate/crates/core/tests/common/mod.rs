//! Reference computations written independently of the library's
//! factorizations, shared by the integration tests.

#![allow(dead_code)]

use hieralm::ProblemData;
use nalgebra::{DMatrix, DVector};

/// Eigen-split of a symmetric PSD matrix into range and null space.
struct Split {
    range: Vec<(f64, DVector<f64>)>,
    null: Vec<DVector<f64>>,
}

fn split(h: &DMatrix<f64>) -> Split {
    let eig = h.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = 1e-10 * top.max(1e-300);
    let mut out = Split {
        range: Vec::new(),
        null: Vec::new(),
    };
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i).into_owned();
        if l > tol {
            out.range.push((l, v));
        } else {
            out.null.push(v);
        }
    }
    out
}

/// Minimum-norm least squares through the eigenvectors of `A'A`, refined
/// against the residual so accuracy does not degrade with `cond(A)^2`.
fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    if a.nrows() == 0 || n == 0 {
        return x;
    }
    let range = split(&(a.transpose() * a)).range;
    let apply = |rhs: &DVector<f64>| {
        let atb = a.transpose() * rhs;
        range
            .iter()
            .fold(DVector::zeros(n), |acc, (l, v)| acc + v * (v.dot(&atb) / l))
    };
    for _ in 0..3 {
        x += apply(&(b - a * &x));
    }
    x
}

/// Orthonormal basis of `null(A)`: eigenvectors of `A'A` with their
/// row-space components removed by refined least squares.
fn null_basis(a: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for z in split(&(a.transpose() * a)).null {
        let mut z = &z - lstsq(a, &(a * &z));
        for q in &basis {
            z -= q * q.dot(&z);
        }
        basis.push(z.normalize());
    }
    basis
}

/// Shift minimizing `sigma1 ||s1||^2 + sigma2 ||s2||^2` over `s = b - A x`,
/// by least squares on the row-scaled stacked system.
pub fn weighted_shift(p: &ProblemData, sigma1: f64, sigma2: f64) -> (DVector<f64>, DVector<f64>) {
    let (w1, w2) = (sigma1.sqrt(), sigma2.sqrt());
    let a = DMatrix::from_fn(p.m(), p.n(), |i, j| {
        if i < p.m1() {
            w1 * p.a1[(i, j)]
        } else {
            w2 * p.a2[(i - p.m1(), j)]
        }
    });
    let b = DVector::from_fn(p.m(), |i, _| {
        if i < p.m1() {
            w1 * p.b1[i]
        } else {
            w2 * p.b2[i - p.m1()]
        }
    });
    let x = lstsq(&a, &b);
    (&p.b1 - &p.a1 * &x, &p.b2 - &p.a2 * &x)
}

/// Lexicographic shift `(s1*, s2*)`: stage-1 least squares, then stage-2
/// least squares over an explicit null-space basis of `A1`.
pub fn reference_shift(p: &ProblemData) -> (DVector<f64>, DVector<f64>) {
    let n = p.n();
    let x1 = lstsq(&p.a1, &p.b1);
    let basis: Vec<DVector<f64>> = if p.m1() == 0 {
        (0..n)
            .map(|i| DVector::from_fn(n, |j, _| f64::from(u8::from(i == j))))
            .collect()
    } else {
        null_basis(&p.a1)
    };
    let x = if basis.is_empty() {
        x1
    } else {
        let z = DMatrix::from_columns(&basis);
        let step = lstsq(&(&p.a2 * &z), &(&p.b2 - &p.a2 * &x1));
        x1 + z * step
    };
    (&p.b1 - &p.a1 * &x, &p.b2 - &p.a2 * &x)
}

/// Solution of `min (1/2)x'Qx + c'x  s.t.  A x = t` for positive definite
/// `Q` and consistent `t`, via a slightly regularized Schur complement.
pub fn reference_qp(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    t: &DVector<f64>,
) -> DVector<f64> {
    let chol = q.clone().cholesky().expect("Q positive definite");
    let qi_at = chol.solve(&a.transpose());
    let qi_c = chol.solve(c);
    let schur = a * &qi_at;
    let m = schur.nrows();
    let scale = schur.diagonal().amax().max(1.0);
    let reg = &schur + DMatrix::<f64>::identity(m, m) * (1e-13 * scale);
    let rhs = -(t + a * &qi_c);
    let mut y = reg
        .clone()
        .cholesky()
        .expect("regularized Schur complement")
        .solve(&rhs);
    // two refinement steps against the unregularized system
    for _ in 0..2 {
        let r = &rhs - &schur * &y;
        y += reg.clone().cholesky().unwrap().solve(&r);
    }
    -(qi_c + qi_at * y)
}

pub fn objective(q: &DMatrix<f64>, c: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let mut f = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            f += 0.5 * x[i] * q[(i, j)] * x[j];
        }
        f += c[i] * x[i];
    }
    f
}

/// Brute-force check of the stage values over the grid `[-5, 5]^n`.
/// Returns `(best stage-1 value, best stage-2 value among points within
/// `band` of the stage-1 optimum, number of such points)`.
pub fn grid_search(p: &ProblemData, step: f64, f1_star: f64, band: f64) -> (f64, f64, usize) {
    let n = p.n();
    let ticks = (10.0 / step).round() as usize + 1;
    let total = ticks.pow(n as u32);
    let (mut best1, mut best2, mut near) = (f64::INFINITY, f64::INFINITY, 0);
    let mut x = vec![0.0; n];
    for idx in 0..total {
        let mut rest = idx;
        for xi in x.iter_mut() {
            *xi = -5.0 + (rest % ticks) as f64 * step;
            rest /= ticks;
        }
        let f1 = half_sq_residual(&p.a1, &p.b1, &x);
        best1 = best1.min(f1);
        if f1 <= f1_star + band {
            near += 1;
            best2 = best2.min(half_sq_residual(&p.a2, &p.b2, &x));
        }
    }
    (best1, best2, near)
}

fn half_sq_residual(a: &DMatrix<f64>, b: &DVector<f64>, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        let mut r = -b[i];
        for (j, xj) in x.iter().enumerate() {
            r += a[(i, j)] * xj;
        }
        acc += r * r;
    }
    0.5 * acc
}

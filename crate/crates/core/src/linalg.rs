//! Dense factorization helpers shared by the oracle, the shift solver and
//! the subproblem solver.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Numerical-rank cutoff `max(rows, cols) * eps * sigma_max`.
pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Thin SVD truncated to numerical rank.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// `rows x rank`
    u: DMatrix<f64>,
    /// `rank`, descending
    s: DVector<f64>,
    /// `rank x cols`
    v_t: DMatrix<f64>,
    sigma_max: f64,
    tol: f64,
}

impl ThinSvd {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        Self::with_floor(a, 0.0)
    }

    /// As [`ThinSvd::new`], but singular values at or below `floor` are also
    /// treated as zero. Used when `a` is computed with cancellation and its
    /// own scale says nothing about its noise level.
    pub fn with_floor(a: &DMatrix<f64>, floor: f64) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Ok(ThinSvd {
                u: DMatrix::zeros(m, 0),
                s: DVector::zeros(0),
                v_t: DMatrix::zeros(0, n),
                sigma_max: 0.0,
                tol: 0.0,
            });
        }
        let (u, sv, v_t) = if m > n {
            let qr = a.clone().qr();
            let (u, s, v_t) = square_svd(&qr.r());
            (qr.q() * u, s, v_t)
        } else if m < n {
            let qr = a.transpose().qr();
            let (u, s, v_t) = square_svd(&qr.r().transpose());
            (u, s, v_t * qr.q().transpose())
        } else {
            square_svd(a)
        };

        let sigma_max = sv.iter().copied().fold(0.0, f64::max);
        let tol = rank_tolerance(m, n, sigma_max).max(floor);
        let mut keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > tol).collect();
        keep.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));

        Ok(ThinSvd {
            u: u.select_columns(keep.iter()),
            s: DVector::from_iterator(keep.len(), keep.iter().map(|&i| sv[i])),
            v_t: v_t.select_rows(keep.iter()),
            sigma_max,
            tol,
        })
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.s
    }

    /// Orthonormal basis of the row space, as rows (`rank x cols`).
    pub fn v_t(&self) -> &DMatrix<f64> {
        &self.v_t
    }

    /// Minimum-norm least-squares solution `A^+ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut w = self.u.tr_mul(b);
        w.component_div_assign(&self.s);
        self.v_t.tr_mul(&w)
    }

    /// Removes the row-space component: `(I - V V^T) w`.
    pub fn project_onto_null_space(&self, w: &DVector<f64>) -> DVector<f64> {
        w - self.v_t.tr_mul(&(&self.v_t * w))
    }
}

fn square_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    nalgebra_svd(a).unwrap_or_else(|| {
        log::debug!(
            "falling back to Jacobi SVD for a {}x{} matrix",
            a.nrows(),
            a.ncols()
        );
        jacobi_svd(a)
    })
}

/// nalgebra's bidiagonal SVD, rejected unless it reconstructs `a` and its
/// factors are orthonormal. It is known to return wrong factors for some
/// rank-deficient inputs.
fn nalgebra_svd(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let svd = a.clone().try_svd(true, true, 5.0 * f64::EPSILON, 0)?;
    let u = svd.u?;
    let v_t = svd.v_t?;
    let sv = svd.singular_values;
    let (m, n) = a.shape();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let tol = 1e3 * m.max(n) as f64 * f64::EPSILON;
    let recon = &u * DMatrix::from_diagonal(&sv) * &v_t - a;
    let k = sv.len();
    let eye = DMatrix::<f64>::identity(k, k);
    if recon.norm() > tol * scale
        || (u.transpose() * &u - &eye).norm() > tol
        || (&v_t * v_t.transpose() - &eye).norm() > tol
    {
        return None;
    }
    Some((u, sv, v_t))
}

/// One-sided Jacobi SVD. Slower than the bidiagonal method but reliable on
/// rank-deficient matrices.
pub fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    if m < n {
        let (u, s, v_t) = jacobi_svd(&a.transpose());
        return (v_t.transpose(), s, u.transpose());
    }
    // Orthogonalize the columns of w = a v.
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let (alpha, beta, gamma) = {
                    let ci = w.column(i);
                    let cj = w.column(j);
                    (ci.norm_squared(), cj.norm_squared(), ci.dot(&cj))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut w, &mut v] {
                    for r in 0..mat.nrows() {
                        let (x, y) = (mat[(r, i)], mat[(r, j)]);
                        mat[(r, i)] = c * x - s * y;
                        mat[(r, j)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s = DVector::from_iterator(n, order.iter().map(|&j| norms[j]));
    let smax = s.iter().copied().fold(0.0, f64::max);
    let mut u = DMatrix::zeros(m, n);
    for (k, &j) in order.iter().enumerate() {
        if norms[j] > f64::MIN_POSITIVE * 1e3 && norms[j] > f64::EPSILON * f64::EPSILON * smax {
            u.set_column(k, &(w.column(j) / norms[j]));
        }
    }
    let v_t = v.select_columns(order.iter()).transpose();
    (u, s, v_t)
}

/// Minimum-norm solution of `min ||A x - b||` and the numerical rank of `A`.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "least squares: matrix has {} rows, rhs has {}",
            a.nrows(),
            b.len()
        )));
    }
    let svd = ThinSvd::new(a)?;
    Ok((svd.solve(b), svd.rank()))
}

/// Cholesky factor of a symmetric matrix, rejected when a pivot is tiny
/// relative to the largest (`d_min^2 <= eps * d_max^2`).
pub fn well_conditioned_cholesky(h: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = h.clone().cholesky()?;
    let l = chol.l_dirty();
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    if !(dmin > 0.0) || dmin * dmin <= f64::EPSILON * dmax * dmax {
        return None;
    }
    Some(chol)
}

/// Solver for a symmetric positive semidefinite system `H x = r`.
///
/// Cholesky when `H` is numerically definite; otherwise an
/// eigendecomposition gives the minimum-norm solution of a consistent
/// system and detects inconsistent right-hand sides.
#[derive(Debug, Clone)]
pub enum PsdSolver {
    Cholesky(Cholesky<f64, Dyn>),
    Eigen {
        vectors: DMatrix<f64>,
        /// Reciprocal eigenvalues, zero on the numerical null space.
        inv_values: DVector<f64>,
        null_mask: Vec<bool>,
    },
}

/// Right-hand side has a component in the null space of a singular system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inconsistent {
    pub null_component: f64,
}

impl PsdSolver {
    pub fn new(h: &DMatrix<f64>) -> Self {
        if let Some(chol) = well_conditioned_cholesky(h) {
            return PsdSolver::Cholesky(chol);
        }
        let n = h.nrows();
        let eig = h.clone().symmetric_eigen();
        let scale = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let tol = n as f64 * f64::EPSILON * scale;
        let null_mask: Vec<bool> = eig.eigenvalues.iter().map(|&v| v <= tol).collect();
        let inv_values = DVector::from_iterator(
            n,
            eig.eigenvalues
                .iter()
                .zip(&null_mask)
                .map(|(&v, &null)| if null { 0.0 } else { 1.0 / v }),
        );
        log::debug!(
            "singular system: {} of {n} eigenvalues below {tol:.3e}",
            null_mask.iter().filter(|&&z| z).count()
        );
        PsdSolver::Eigen {
            vectors: eig.eigenvectors,
            inv_values,
            null_mask,
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, PsdSolver::Eigen { .. })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> std::result::Result<DVector<f64>, Inconsistent> {
        match self {
            PsdSolver::Cholesky(chol) => Ok(chol.solve(rhs)),
            PsdSolver::Eigen {
                vectors,
                inv_values,
                null_mask,
            } => {
                let coeffs = vectors.tr_mul(rhs);
                let null_component = coeffs
                    .iter()
                    .zip(null_mask)
                    .filter(|(_, &z)| z)
                    .map(|(c, _)| c * c)
                    .sum::<f64>()
                    .sqrt();
                if null_component > 1e-8 * (1.0 + rhs.norm()) {
                    return Err(Inconsistent { null_component });
                }
                Ok(vectors * coeffs.component_mul(inv_values))
            }
        }
    }
}

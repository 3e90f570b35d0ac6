//! Direct solution of the shifted equality-constrained QP
//!
//! ```text
//! minimize (1/2) x'Qx + c'x  subject to  A x = b - s
//! ```
//!
//! through its KKT system `[Q A'; A 0] [x; l] = [-c; b - s]`. Serves as a
//! reference independent of the augmented Lagrangian iteration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{well_conditioned_cholesky, ThinSvd};
use crate::problem::{objective_value, HierarchicalShift, ProblemData};

#[derive(Debug, Clone)]
pub struct KktSolution {
    pub x: DVector<f64>,
    pub lambda1: DVector<f64>,
    pub lambda2: DVector<f64>,
    pub objective: f64,
    /// `||A x - b + s||` at the returned point.
    pub feasibility: f64,
}

/// Solves the shifted QP. When `Q` is positive definite the multipliers come
/// from the Schur complement `A Q^-1 A'`; otherwise the full KKT matrix is
/// solved in the minimum-norm sense. Fails if the shifted constraints are
/// inconsistent.
pub fn solve_shifted_qp(p: &ProblemData, shift: &HierarchicalShift) -> Result<KktSolution> {
    p.ensure_finite()?;
    shift.check_dims(p)?;
    let (n, m1, m) = (p.n(), p.m1(), p.m());
    let a = p.stacked_a();
    let target = p.stacked_b() - stack(&shift.s1, &shift.s2);

    let (x, lambda) = match well_conditioned_cholesky(&p.q) {
        Some(chol) => {
            let q_inv_at = chol.solve(&a.transpose());
            let q_inv_c = chol.solve(&p.c);
            let schur = &a * &q_inv_at;
            let rhs = -(&target + &a * &q_inv_c);
            let lambda = ThinSvd::new(&schur)?.solve(&rhs);
            let x = -(q_inv_c + q_inv_at * &lambda);
            (x, lambda)
        }
        None => {
            let mut kkt = DMatrix::zeros(n + m, n + m);
            kkt.view_mut((0, 0), (n, n)).copy_from(&p.q);
            kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
            kkt.view_mut((n, 0), (m, n)).copy_from(&a);
            let rhs = stack(&-&p.c, &target);
            let sol = ThinSvd::new(&kkt)?.solve(&rhs);
            (sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned())
        }
    };

    let feasibility = (&a * &x - &target).norm();
    if feasibility > 1e-8 * (1.0 + target.norm()) {
        return Err(Error::InvalidProblem(format!(
            "shifted constraints are inconsistent (residual {feasibility:.3e})"
        )));
    }
    Ok(KktSolution {
        objective: objective_value(p, &x)?,
        lambda1: lambda.rows(0, m1).into_owned(),
        lambda2: lambda.rows(m1, m - m1).into_owned(),
        x,
        feasibility,
    })
}

fn stack(top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        top.len() + bottom.len(),
        top.iter().chain(bottom.iter()).copied(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ShiftKind;
    use approx::assert_abs_diff_eq;

    #[test]
    fn projection_onto_line() {
        // minimize (1/2)||x||^2 s.t. x1 + x2 = 2 -> x = (1, 1), lambda = -1
        let p = ProblemData::single_level(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 2.0),
        )
        .unwrap();
        let s = solve_shifted_qp(&p, &HierarchicalShift::zero_for(&p)).unwrap();
        assert_abs_diff_eq!(s.x, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-14);
        assert_abs_diff_eq!(s.lambda1[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.objective, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_q_uses_full_system() {
        // minimize x1 s.t. x1 - x2 = 0, x2 = 3 (Q = 0)
        let p = ProblemData::new(
            DMatrix::zeros(2, 2),
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            DVector::zeros(1),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            DVector::from_element(1, 4.0),
        )
        .unwrap();
        let shift = HierarchicalShift::new(
            DVector::zeros(1),
            DVector::from_element(1, 1.0),
            ShiftKind::OracleExact,
        )
        .unwrap();
        let s = solve_shifted_qp(&p, &shift).unwrap();
        assert_abs_diff_eq!(s.x, DVector::from_vec(vec![3.0, 3.0]), epsilon = 1e-12);
        assert_abs_diff_eq!(s.objective, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn inconsistent_shift_rejected() {
        let p = ProblemData::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.0),
        )
        .unwrap();
        assert!(solve_shifted_qp(&p, &HierarchicalShift::zero_for(&p)).is_err());
    }
}

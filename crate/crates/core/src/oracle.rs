//! Exact hierarchically optimal shift by two-stage least squares.
//!
//! Stage 1 takes the minimum-norm minimizer `x_dag` of `||b1 - A1 x||` and
//! sets `s1* = b1 - A1 x_dag`. Stage 2 minimizes `||b2 - A2 x||` over the
//! affine set `{x : A1 x = A1 x_dag}` with the null-space method and sets
//! `s2* = b2 - A2 x_ddag`. Both shifts are unique even though the
//! minimizers are not; the minimum-norm representatives are returned.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{rank_tolerance, ThinSvd};
use crate::problem::{HierarchicalShift, ProblemData, ShiftKind};

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub shift: HierarchicalShift,
    pub x_dag: DVector<f64>,
    pub x_ddag: DVector<f64>,
    /// Numerical rank of `A1`.
    pub rank1: usize,
    /// `(1/2) ||s1*||^2`
    pub stage1_value: f64,
    /// `(1/2) ||s2*||^2`
    pub stage2_value: f64,
}

#[derive(Debug, Clone)]
pub struct Stage1 {
    pub s1: DVector<f64>,
    pub x_dag: DVector<f64>,
    pub rank1: usize,
}

pub fn stage1_shift(p: &ProblemData) -> Result<Stage1> {
    p.ensure_finite()?;
    let svd = ThinSvd::new(&p.a1)?;
    Ok(stage1_from_svd(p, &svd))
}

fn stage1_from_svd(p: &ProblemData, svd: &ThinSvd) -> Stage1 {
    let x_dag = svd.solve(&p.b1);
    let s1 = &p.b1 - &p.a1 * &x_dag;
    Stage1 {
        s1,
        x_dag,
        rank1: svd.rank(),
    }
}

/// Stage-2 shift given a stage-1 minimizer.
///
/// `rank1` selects how many leading right singular vectors of `A1` span its
/// row space; the remaining directions form the null space searched here.
pub fn stage2_shift(
    p: &ProblemData,
    x_dag: &DVector<f64>,
    rank1: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    p.ensure_finite()?;
    if x_dag.len() != p.n() {
        return Err(Error::Dimension(format!(
            "x_dag has length {}, expected {}",
            x_dag.len(),
            p.n()
        )));
    }
    let svd = ThinSvd::new(&p.a1)?;
    if rank1 > svd.rank() {
        return Err(Error::Dimension(format!(
            "rank1 = {rank1} exceeds numerical rank {} of A1",
            svd.rank()
        )));
    }
    let row_space = svd.v_t().rows(0, rank1).into_owned();
    let s = svd.singular_values();
    let kappa1 = if rank1 == 0 { 1.0 } else { s[0] / s[rank1 - 1] };
    stage2_with_row_space(p, x_dag, &row_space, kappa1).map(|(s2, x, _)| (s2, x))
}

/// Null-space step with an implicit orthonormal basis `Z` of `null(A1)`:
/// the minimum-norm solution of `min ||r - A2 P w||` with `P = I - V V^T`
/// lies in `range(P)`, so it equals `Z z` for the minimum-norm reduced
/// solution `z` of `min ||r - A2 Z z||`.
///
/// Returns `s2*`, `x_ddag` and the factorization of `A2 P`.
fn stage2_with_row_space(
    p: &ProblemData,
    x_dag: &DVector<f64>,
    v_t: &DMatrix<f64>,
    kappa1: f64,
) -> Result<(DVector<f64>, DVector<f64>, ThinSvd)> {
    let residual = &p.b2 - &p.a2 * x_dag;
    if p.m2() == 0 || v_t.nrows() == p.n() {
        let none = ThinSvd::new(&DMatrix::zeros(p.m2(), 0))?;
        return Ok((residual, x_dag.clone(), none));
    }
    // A2 (I - V V^T)
    let reduced = &p.a2 - (&p.a2 * v_t.transpose()) * v_t;
    let svd2 = ThinSvd::with_floor(&reduced, noise_floor(p, kappa1))?;
    let step = svd2.solve(&residual);
    let step = &step - v_t.tr_mul(&(v_t * &step));
    let x_ddag = x_dag + step;
    let s2 = &p.b2 - &p.a2 * &x_ddag;
    Ok((s2, x_ddag, svd2))
}

/// Size below which singular values of `A2 (I - V V^T)` are cancellation
/// noise. Errors in the row-space basis `V` grow with the condition number
/// `kappa1` of `A1` restricted to its numerical rank.
fn noise_floor(p: &ProblemData, kappa1: f64) -> f64 {
    let dim = p.m2().max(p.n()).max(p.m1());
    10.0 * rank_tolerance(dim, 1, p.a2.norm()) * kappa1.max(1.0)
}

fn condition(svd: &ThinSvd) -> f64 {
    let s = svd.singular_values();
    if s.is_empty() {
        1.0
    } else {
        s[0] / s[s.len() - 1]
    }
}

/// The oracle together with the two factorizations it was built from.
#[derive(Debug, Clone)]
pub struct LexFactors {
    /// `A1`
    pub svd1: ThinSvd,
    /// `A2` restricted to `null(A1)`; rank 0 when there is no freedom left.
    /// Its `V^T` has `n` columns unless it is empty.
    pub svd2: ThinSvd,
    pub oracle: OracleResult,
}

pub fn lex_factors(p: &ProblemData) -> Result<LexFactors> {
    p.ensure_finite()?;
    let svd1 = ThinSvd::new(&p.a1)?;
    let stage1 = stage1_from_svd(p, &svd1);
    let (s2, x_ddag, svd2) = stage2_with_row_space(p, &stage1.x_dag, svd1.v_t(), condition(&svd1))?;
    let stage1_value = 0.5 * stage1.s1.norm_squared();
    let stage2_value = 0.5 * s2.norm_squared();
    let oracle = OracleResult {
        shift: HierarchicalShift {
            s1: stage1.s1,
            s2,
            kind: ShiftKind::OracleExact,
        },
        x_dag: stage1.x_dag,
        x_ddag,
        rank1: stage1.rank1,
        stage1_value,
        stage2_value,
    };
    Ok(LexFactors { svd1, svd2, oracle })
}

/// Hierarchically optimal shift `s* = (s1*, s2*)`.
pub fn hierarchical_shift(p: &ProblemData) -> Result<OracleResult> {
    lex_factors(p).map(|f| f.oracle)
}

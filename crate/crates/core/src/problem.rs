//! Prioritized convex QP data model.
//!
//! ```text
//! minimize    (1/2) x^T Q x + c^T x
//! subject to  A1 x - b1 = 0      (high priority)
//!             A2 x - b2 = 0      (low priority)
//! ```
//!
//! Either constraint block may be empty.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry tolerance on `max |Q_ij - Q_ji|`.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub a2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

impl ProblemData {
    /// Builds a problem and checks that the dimensions agree.
    ///
    /// Symmetry and semidefiniteness of `q` are not checked here; see
    /// [`validate_problem`].
    pub fn new(
        q: DMatrix<f64>,
        c: DVector<f64>,
        a1: DMatrix<f64>,
        b1: DVector<f64>,
        a2: DMatrix<f64>,
        b2: DVector<f64>,
    ) -> Result<Self> {
        let p = ProblemData {
            q,
            c,
            a1,
            b1,
            a2,
            b2,
        };
        if let Some(msg) = p.dimension_error() {
            return Err(Error::Dimension(msg));
        }
        Ok(p)
    }

    /// Problem with an empty low-priority block.
    pub fn single_level(
        q: DMatrix<f64>,
        c: DVector<f64>,
        a1: DMatrix<f64>,
        b1: DVector<f64>,
    ) -> Result<Self> {
        let n = q.ncols();
        Self::new(q, c, a1, b1, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn n(&self) -> usize {
        self.q.ncols()
    }

    pub fn m1(&self) -> usize {
        self.a1.nrows()
    }

    pub fn m2(&self) -> usize {
        self.a2.nrows()
    }

    pub fn m(&self) -> usize {
        self.m1() + self.m2()
    }

    /// `[A1; A2]`
    pub fn stacked_a(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut a = DMatrix::zeros(self.m(), n);
        a.rows_mut(0, self.m1()).copy_from(&self.a1);
        a.rows_mut(self.m1(), self.m2()).copy_from(&self.a2);
        a
    }

    /// `[b1; b2]`
    pub fn stacked_b(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.m());
        b.rows_mut(0, self.m1()).copy_from(&self.b1);
        b.rows_mut(self.m1(), self.m2()).copy_from(&self.b2);
        b
    }

    /// Euclidean norm of the stacked right-hand side.
    pub fn b_norm(&self) -> f64 {
        (self.b1.norm_squared() + self.b2.norm_squared()).sqrt()
    }

    fn dimension_error(&self) -> Option<String> {
        let n = self.q.ncols();
        if n == 0 {
            return Some("problem must have at least one variable".into());
        }
        if self.q.nrows() != n {
            return Some(format!("Q is {}x{}, expected square", self.q.nrows(), n));
        }
        if self.c.len() != n {
            return Some(format!("c has {} entries, expected n = {n}", self.c.len()));
        }
        for (name, a, b) in [("A1", &self.a1, &self.b1), ("A2", &self.a2, &self.b2)] {
            if a.ncols() != n {
                return Some(format!(
                    "{name} has {} columns, expected n = {n}",
                    a.ncols()
                ));
            }
            if b.len() != a.nrows() {
                return Some(format!(
                    "b{} has {} entries but {name} has {} rows",
                    &name[1..],
                    b.len(),
                    a.nrows()
                ));
            }
        }
        None
    }

    fn non_finite_field(&self) -> Option<&'static str> {
        let fields: [(&'static str, &[f64]); 6] = [
            ("Q", self.q.as_slice()),
            ("c", self.c.as_slice()),
            ("A1", self.a1.as_slice()),
            ("b1", self.b1.as_slice()),
            ("A2", self.a2.as_slice()),
            ("b2", self.b2.as_slice()),
        ];
        fields
            .into_iter()
            .find(|(_, v)| v.iter().any(|x| !x.is_finite()))
            .map(|(name, _)| name)
    }

    pub(crate) fn ensure_finite(&self) -> Result<()> {
        match self.non_finite_field() {
            Some(name) => Err(Error::NonFinite(name.into())),
            None => Ok(()),
        }
    }
}

/// Where a shift came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    /// Exact hierarchically optimal shift from the lexicographic oracle.
    OracleExact,
    /// Weighted least-squares approximation at weights `(sigma1, sigma2)`.
    SigmaApproximate { sigma1: f64, sigma2: f64 },
    /// No shift (standard augmented Lagrangian).
    Zero,
}

/// A shift `(s1, s2)` added to the two constraint blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalShift {
    pub s1: DVector<f64>,
    pub s2: DVector<f64>,
    pub kind: ShiftKind,
}

impl HierarchicalShift {
    pub fn new(s1: DVector<f64>, s2: DVector<f64>, kind: ShiftKind) -> Result<Self> {
        if let ShiftKind::SigmaApproximate { sigma1, sigma2 } = kind {
            if !(sigma1 > 0.0 && sigma2 > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "sigma-approximate shift needs positive weights, got ({sigma1}, {sigma2})"
                )));
            }
        }
        Ok(HierarchicalShift { s1, s2, kind })
    }

    pub fn zero(m1: usize, m2: usize) -> Self {
        HierarchicalShift {
            s1: DVector::zeros(m1),
            s2: DVector::zeros(m2),
            kind: ShiftKind::Zero,
        }
    }

    pub fn zero_for(p: &ProblemData) -> Self {
        Self::zero(p.m1(), p.m2())
    }

    pub fn norm(&self) -> f64 {
        (self.s1.norm_squared() + self.s2.norm_squared()).sqrt()
    }

    /// Per-block distances `(||s1 - t1||, ||s2 - t2||)`.
    pub fn block_distances(&self, other: &HierarchicalShift) -> (f64, f64) {
        ((&self.s1 - &other.s1).norm(), (&self.s2 - &other.s2).norm())
    }

    /// `||self - other||` over both blocks.
    pub fn distance(&self, other: &HierarchicalShift) -> f64 {
        let (d1, d2) = self.block_distances(other);
        d1.hypot(d2)
    }

    pub(crate) fn check_dims(&self, p: &ProblemData) -> Result<()> {
        if self.s1.len() != p.m1() || self.s2.len() != p.m2() {
            return Err(Error::Dimension(format!(
                "shift has lengths ({}, {}), problem has (m1, m2) = ({}, {})",
                self.s1.len(),
                self.s2.len(),
                p.m1(),
                p.m2()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Warning => f.write_str("warning"),
            Severity::Error => f.write_str("error"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    fn from_findings(findings: Vec<Finding>) -> Self {
        let ok = findings.iter().all(|f| f.severity != Severity::Error);
        ValidationReport { ok, findings }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    pub fn has_message(&self, needle: &str) -> bool {
        self.findings.iter().any(|f| f.message.contains(needle))
    }
}

fn infinity_norm(q: &DMatrix<f64>) -> f64 {
    q.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Checks dimensions, finiteness, symmetry and positive semidefiniteness.
///
/// A diagonal `Q` is judged from its entries. Otherwise a Cholesky
/// factorization is tried first, and only when that fails is the full
/// symmetric eigendecomposition computed to decide between "singular PSD" (warning) and "indefinite" (error). The PSD
/// threshold is `lambda_min >= -1e-8 * (1 + ||Q||_inf)`.
pub fn validate_problem(p: &ProblemData) -> ValidationReport {
    let mut findings = Vec::new();
    let mut push = |severity, message: String| findings.push(Finding { severity, message });

    if let Some(msg) = p.dimension_error() {
        push(Severity::Error, format!("dimension mismatch: {msg}"));
        return ValidationReport::from_findings(findings);
    }
    if let Some(name) = p.non_finite_field() {
        push(Severity::Error, format!("non-finite entry in {name}"));
        return ValidationReport::from_findings(findings);
    }

    let n = p.n();
    let asym = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (p.q[(i, j)] - p.q[(j, i)]).abs())
        .fold(0.0, f64::max);
    if asym > SYMMETRY_TOL {
        push(
            Severity::Error,
            format!("Q not symmetric (max |Q_ij - Q_ji| = {asym:.3e})"),
        );
        return ValidationReport::from_findings(findings);
    }

    if let Some(lambda_min) = troublesome_min_eigenvalue(&p.q) {
        let psd_tol = 1e-8 * (1.0 + infinity_norm(&p.q));
        if lambda_min < -psd_tol {
            push(
                Severity::Error,
                format!("Q not PSD (smallest eigenvalue {lambda_min:.3e})"),
            );
        } else {
            push(
                Severity::Warning,
                format!(
                    "Q is singular (smallest eigenvalue {lambda_min:.3e}); \
                     subproblem solvability is checked at solve time"
                ),
            );
        }
    }

    if p.m() == 0 {
        log::debug!("problem has no constraints");
    }
    ValidationReport::from_findings(findings)
}

/// `None` when `q` is numerically positive definite, otherwise its smallest
/// eigenvalue. Diagonal matrices are read off directly.
fn troublesome_min_eigenvalue(q: &DMatrix<f64>) -> Option<f64> {
    let n = q.nrows();
    if n == 0 {
        return None;
    }
    let diagonal = (0..n).all(|j| (0..n).all(|i| i == j || q[(i, j)] == 0.0));
    if diagonal {
        let d = q.diagonal();
        let (lo, hi) = (d.min(), d.max());
        return (!(lo > f64::EPSILON * hi)).then_some(lo);
    }
    if crate::linalg::well_conditioned_cholesky(q).is_some() {
        return None;
    }
    let eig = q.clone().symmetric_eigen();
    Some(
        eig.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min),
    )
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}

/// `(1/2) x^T Q x + c^T x`
pub fn objective_value(p: &ProblemData, x: &DVector<f64>) -> Result<f64> {
    check_len("x", x.len(), p.n())?;
    Ok(0.5 * x.dot(&(&p.q * x)) + p.c.dot(x))
}

/// Shifted constraint residuals `(A1 x - b1 + s1, A2 x - b2 + s2)`.
pub fn constraint_residuals(
    p: &ProblemData,
    x: &DVector<f64>,
    shift: &HierarchicalShift,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_len("x", x.len(), p.n())?;
    shift.check_dims(p)?;
    let r1 = &p.a1 * x - &p.b1 + &shift.s1;
    let r2 = &p.a2 * x - &p.b2 + &shift.s2;
    Ok((r1, r2))
}

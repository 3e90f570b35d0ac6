//! Weighted infeasibility-control problem and its weight schedule.
//!
//! For weights `sigma = (sigma1, sigma2)` the approximate shift is
//! `s(sigma) = (b1 - A1 x, b2 - A2 x)` where `x` minimizes
//! `sigma1 ||b1 - A1 x||^2 + sigma2 ||b2 - A2 x||^2`. As
//! `eta = sigma1 / sigma2` grows the shift tends to the hierarchically
//! optimal one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{lex_factors, LexFactors, OracleResult};
use crate::problem::{HierarchicalShift, ProblemData, ShiftKind};

/// Largest `sigma1` produced by [`SigmaSchedule::sigma_at`]; both weights
/// are rescaled together beyond it.
pub const SIGMA1_CEILING: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPair {
    pub sigma1: f64,
    pub sigma2: f64,
}

impl SigmaPair {
    pub fn new(sigma1: f64, sigma2: f64) -> Result<Self> {
        let pair = SigmaPair { sigma1, sigma2 };
        if !(sigma1 > 0.0 && sigma2 > 0.0) || !pair.eta().is_finite() {
            return Err(Error::InvalidConfig(format!(
                "weights must be positive with finite ratio, got ({sigma1}, {sigma2})"
            )));
        }
        Ok(pair)
    }

    pub fn eta(&self) -> f64 {
        self.sigma1 / self.sigma2
    }
}

/// Geometric weight schedule `sigma_i^(k) = sigma_i0 * factor_i^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSigmaSchedule")]
pub struct SigmaSchedule {
    sigma1_0: f64,
    sigma1_factor: f64,
    sigma2_0: f64,
    sigma2_factor: f64,
    eta_cap: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSigmaSchedule {
    sigma1_0: f64,
    sigma1_factor: f64,
    sigma2_0: f64,
    sigma2_factor: f64,
    #[serde(default = "default_eta_cap")]
    eta_cap: f64,
}

fn default_eta_cap() -> f64 {
    1e12
}

impl TryFrom<RawSigmaSchedule> for SigmaSchedule {
    type Error = Error;

    fn try_from(r: RawSigmaSchedule) -> Result<Self> {
        SigmaSchedule::new(
            r.sigma1_0,
            r.sigma1_factor,
            r.sigma2_0,
            r.sigma2_factor,
            r.eta_cap,
        )
    }
}

impl Default for SigmaSchedule {
    fn default() -> Self {
        SigmaSchedule {
            sigma1_0: 1.0,
            sigma1_factor: 10.0,
            sigma2_0: 1.0,
            sigma2_factor: 1.1,
            eta_cap: default_eta_cap(),
        }
    }
}

impl SigmaSchedule {
    /// The ratio `eta^(k)` must increase strictly and without bound, which
    /// requires `sigma1_factor > sigma2_factor >= 1`.
    pub fn new(
        sigma1_0: f64,
        sigma1_factor: f64,
        sigma2_0: f64,
        sigma2_factor: f64,
        eta_cap: f64,
    ) -> Result<Self> {
        let all_finite = [sigma1_0, sigma1_factor, sigma2_0, sigma2_factor, eta_cap]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidConfig("sigma schedule must be finite".into()));
        }
        if !(sigma1_0 > 0.0 && sigma2_0 > 0.0) {
            return Err(Error::InvalidConfig(
                "initial sigma weights must be positive".into(),
            ));
        }
        if !(sigma2_factor >= 1.0 && sigma1_factor > sigma2_factor) {
            return Err(Error::InvalidConfig(format!(
                "need sigma1_factor > sigma2_factor >= 1, got {sigma1_factor} and {sigma2_factor}"
            )));
        }
        if !(eta_cap >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eta_cap must be >= 1, got {eta_cap}"
            )));
        }
        Ok(SigmaSchedule {
            sigma1_0,
            sigma1_factor,
            sigma2_0,
            sigma2_factor,
            eta_cap,
        })
    }

    pub fn eta_cap(&self) -> f64 {
        self.eta_cap
    }

    /// Weights at outer iteration `k`.
    ///
    /// Both weights are divided by `max(1, sigma1 / 1e12)`, which leaves the
    /// minimizer unchanged. If the ratio then exceeds `eta_cap`, `sigma2` is
    /// raised to `sigma1 / eta_cap`.
    pub fn sigma_at(&self, k: usize) -> SigmaPair {
        let kf = k as f64;
        let (mut s1, mut s2) = match i32::try_from(k) {
            Ok(ki) => (
                self.sigma1_0 * self.sigma1_factor.powi(ki),
                self.sigma2_0 * self.sigma2_factor.powi(ki),
            ),
            Err(_) => (f64::INFINITY, f64::INFINITY),
        };
        if !(s1.is_finite() && s2.is_finite()) {
            // Work in logs when the raw powers overflow.
            let l1 = self.sigma1_0.ln() + kf * self.sigma1_factor.ln();
            let l2 = self.sigma2_0.ln() + kf * self.sigma2_factor.ln();
            let excess = (l1 - SIGMA1_CEILING.ln()).max(0.0);
            s1 = (l1 - excess).exp();
            s2 = (l2 - excess).exp();
        } else {
            let scale = (s1 / SIGMA1_CEILING).max(1.0);
            s1 /= scale;
            s2 /= scale;
        }
        if s1 / s2 > self.eta_cap {
            log::warn!("eta^({k}) = {:.3e} capped at {:.3e}", s1 / s2, self.eta_cap);
            s2 = s1 / self.eta_cap;
        }
        SigmaPair {
            sigma1: s1,
            sigma2: s2,
        }
    }
}

/// Minimum-norm minimizer of `sigma1 ||b1 - A1 x||^2 + sigma2 ||b2 - A2 x||^2`
/// and its shift. Use [`RsigmaSolver`] for repeated solves.
pub fn solve_rsigma(
    p: &ProblemData,
    sigma: SigmaPair,
) -> Result<(DVector<f64>, HierarchicalShift)> {
    RsigmaSolver::new(p)?.solve(sigma)
}

/// Repeated weighted solves against one problem.
///
/// With `A1 = U1 S1 V1^T`, every `x` splits as `x = V1 y + z` with `z` in
/// `null(A1)`. Writing `y = y_dag + d`, minimizing over `z` first leaves
///
/// ```text
/// s1(d) = s1* - U1 S1 d,   s2(d) = s2* - C d,   C = (I - P_B) A2 V1,
/// ```
///
/// where `P_B` projects onto the range of `A2` restricted to `null(A1)`.
/// With `mu = sigma2 / sigma1` the weighted problem reduces to
/// `(S1^2 + mu C^T C) d = mu C^T s2*`, a small positive definite system
/// that stays well conditioned however small `mu` gets. Only the unweighted
/// factorizations of the oracle are needed.
#[derive(Debug, Clone)]
pub struct RsigmaSolver {
    star: HierarchicalShift,
    x_ddag: DVector<f64>,
    /// `V1^T`, `r1 x n`
    v1_t: DMatrix<f64>,
    /// `S1^2`
    s1_sq: DVector<f64>,
    /// `U1 S1`
    u1_s1: DMatrix<f64>,
    c: DMatrix<f64>,
    ctc: DMatrix<f64>,
    ct_s2: DVector<f64>,
    /// Change of the null-space part of `x` per unit `d`, minus `V1`.
    k: DMatrix<f64>,
    rank: usize,
}

impl RsigmaSolver {
    pub fn new(problem: &ProblemData) -> Result<Self> {
        let factors = lex_factors(problem)?;
        Ok(Self::from_factors(problem, &factors))
    }

    /// Builds the solver from factorizations already computed for `problem`.
    pub fn from_factors(problem: &ProblemData, f: &LexFactors) -> Self {
        let (svd1, svd2) = (&f.svd1, &f.svd2);
        let r1 = svd1.rank();
        let v1_t = svd1.v_t().clone();
        let s1 = svd1.singular_values();
        let mut u1_s1 = svd1.u().clone();
        for (mut col, s) in u1_s1.column_iter_mut().zip(s1.iter()) {
            col *= *s;
        }
        let a2_v1 = &problem.a2 * v1_t.transpose();
        let (c, k) = if svd2.rank() == 0 {
            (a2_v1, DMatrix::zeros(problem.n(), r1))
        } else {
            let ub = svd2.u();
            let coeffs = ub.transpose() * &a2_v1;
            let c = &a2_v1 - ub * &coeffs;
            let mut scaled = coeffs;
            for (mut row, s) in scaled.row_iter_mut().zip(svd2.singular_values().iter()) {
                row /= *s;
            }
            let k = svd2.v_t().transpose() * scaled;
            let k = &k - v1_t.transpose() * (&v1_t * &k);
            (c, k)
        };
        let ctc = c.transpose() * &c;
        let ct_s2 = c.transpose() * &f.oracle.shift.s2;
        RsigmaSolver {
            star: f.oracle.shift.clone(),
            x_ddag: f.oracle.x_ddag.clone(),
            s1_sq: s1.map(|v| v * v),
            u1_s1,
            c,
            ctc,
            ct_s2,
            k,
            rank: r1 + svd2.rank(),
            v1_t,
        }
    }

    /// Numerical rank of the stacked constraint matrix.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn solve(&self, sigma: SigmaPair) -> Result<(DVector<f64>, HierarchicalShift)> {
        let sigma = SigmaPair::new(sigma.sigma1, sigma.sigma2)?;
        let mu = sigma.sigma2 / sigma.sigma1;
        let mut h = &self.ctc * mu;
        for (i, v) in self.s1_sq.iter().enumerate() {
            h[(i, i)] += v;
        }
        let d = if h.is_empty() {
            DVector::zeros(0)
        } else {
            h.cholesky()
                .ok_or(Error::Decomposition("weighted reduced system"))?
                .solve(&(&self.ct_s2 * mu))
        };
        let x = &self.x_ddag + self.v1_t.tr_mul(&d) - &self.k * &d;
        let shift = HierarchicalShift {
            s1: &self.star.s1 - &self.u1_s1 * &d,
            s2: &self.star.s2 - &self.c * &d,
            kind: ShiftKind::SigmaApproximate {
                sigma1: sigma.sigma1,
                sigma2: sigma.sigma2,
            },
        };
        Ok((x, shift))
    }
}

/// Approximate shifts `s(sigma^(k))` for `k = 0..count`.
pub fn approximate_shift_sequence(
    p: &ProblemData,
    schedule: &SigmaSchedule,
    count: usize,
) -> Result<Vec<HierarchicalShift>> {
    if count == 0 {
        return Err(Error::InvalidConfig(
            "shift sequence needs count >= 1".into(),
        ));
    }
    let solver = RsigmaSolver::new(p)?;
    (0..count)
        .map(|k| solver.solve(schedule.sigma_at(k)).map(|(_, s)| s))
        .collect()
}

/// One row of a shift sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    pub norm_s1: f64,
    pub norm_s2: f64,
    pub r1: f64,
    pub r2: f64,
}

/// Approximate shifts for `k = 0..count` together with their per-block
/// distances to the oracle shift.
pub fn shift_sweep(
    p: &ProblemData,
    schedule: &SigmaSchedule,
    count: usize,
    oracle: &OracleResult,
) -> Result<Vec<SweepRow>> {
    let shifts = approximate_shift_sequence(p, schedule, count)?;
    Ok(shifts
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let (r1, r2) = s.block_distances(&oracle.shift);
            let (sigma1, sigma2) = match s.kind {
                ShiftKind::SigmaApproximate { sigma1, sigma2 } => (sigma1, sigma2),
                _ => unreachable!("weighted solve always tags its shift"),
            };
            SweepRow {
                k,
                sigma1,
                sigma2,
                norm_s1: s.s1.norm(),
                norm_s2: s.s2.norm(),
                r1,
                r2,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn one_var_conflict() -> ProblemData {
        ProblemData::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn default_schedule_values() {
        let s = SigmaSchedule::default();
        assert_eq!(
            s.sigma_at(0),
            SigmaPair {
                sigma1: 1.0,
                sigma2: 1.0
            }
        );
        let k2 = s.sigma_at(2);
        assert_relative_eq!(k2.sigma1, 100.0, max_relative = 1e-15);
        assert_relative_eq!(k2.sigma2, 1.21, max_relative = 1e-15);
    }

    #[test]
    fn schedule_rescales_and_caps() {
        let s = SigmaSchedule::default();
        for k in 0..400 {
            let sp = s.sigma_at(k);
            assert!(sp.sigma1 <= SIGMA1_CEILING * (1.0 + 1e-12));
            assert!(sp.sigma2 > 0.0 && sp.sigma2.is_finite());
            assert!(sp.eta() <= s.eta_cap() * (1.0 + 1e-12));
        }
        // k = 13: raw eta = 1e13 / 1.1^13 exceeds the cap.
        assert_relative_eq!(s.sigma_at(13).eta(), 1e12, max_relative = 1e-12);
        assert_relative_eq!(s.sigma_at(400).eta(), 1e12, max_relative = 1e-12);
    }

    #[test]
    fn equal_factors_rejected() {
        assert!(SigmaSchedule::new(1.0, 1.1, 1.0, 1.1, 1e12).is_err());
        assert!(SigmaSchedule::new(1.0, 10.0, 1.0, 0.9, 1e12).is_err());
        assert!(SigmaSchedule::new(0.0, 10.0, 1.0, 1.1, 1e12).is_err());
        assert!(SigmaSchedule::new(1.0, 10.0, 1.0, 1.1, 0.5).is_err());
        let bad: std::result::Result<SigmaSchedule, _> = serde_json::from_str(
            r#"{"sigma1_0":1,"sigma1_factor":2,"sigma2_0":1,"sigma2_factor":2}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn one_variable_equal_weights() {
        // minimize (1 - x)^2 + x^2: x = 1/2
        let p = one_var_conflict();
        let (x, s) = solve_rsigma(&p, SigmaPair::new(1.0, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(x[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.s1[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.s2[0], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn one_variable_large_ratio() {
        // x = eta / (eta + 1)
        let p = one_var_conflict();
        let (x, s) = solve_rsigma(&p, SigmaPair::new(1e6, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(x[0], 1e6 / (1e6 + 1.0), epsilon = 1e-14);
        assert_abs_diff_eq!(s.s1[0], 0.0, epsilon = 2e-6);
        assert_abs_diff_eq!(s.s2[0], -1.0, epsilon = 2e-6);
    }

    #[test]
    fn satisfies_weighted_normal_equations() {
        let mut rng = crate::random::rng(11);
        for _ in 0..30 {
            let p = crate::random::random_instance(&mut rng, &Default::default());
            let solver = RsigmaSolver::new(&p).unwrap();
            for k in [0, 3, 6] {
                let sigma = SigmaSchedule::default().sigma_at(k);
                let (x, _) = solver.solve(sigma).unwrap();
                let mu = sigma.sigma2 / sigma.sigma1;
                let w2 = DVector::from_iterator(
                    p.m(),
                    std::iter::repeat_n(1.0, p.m1()).chain(std::iter::repeat_n(mu, p.m2())),
                );
                let a = p.stacked_a();
                let g = a.tr_mul(&(&a * &x - p.stacked_b()).component_mul(&w2));
                assert!(g.norm() < 1e-9 * (1.0 + p.b_norm()), "{}", g.norm());
            }
        }
    }

    #[test]
    fn sequence_is_monotone_on_one_variable_instance() {
        let p = one_var_conflict();
        let seq = approximate_shift_sequence(&p, &SigmaSchedule::default(), 4).unwrap();
        for w in seq.windows(2) {
            assert!(w[1].s1.norm() < w[0].s1.norm());
            assert!(w[1].s2.norm() > w[0].s2.norm());
        }
        for (k, s) in seq.iter().enumerate() {
            let eta = SigmaSchedule::default().sigma_at(k).eta();
            assert_abs_diff_eq!(s.s1[0], 1.0 / (eta + 1.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn feasible_instance_gives_zero_shifts() {
        let p = ProblemData::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 2.0),
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            DVector::from_element(1, 0.0),
        )
        .unwrap();
        for s in approximate_shift_sequence(&p, &SigmaSchedule::default(), 10).unwrap() {
            assert!(s.norm() < 1e-10, "{}", s.norm());
        }
    }

    #[test]
    fn zero_count_rejected() {
        let p = one_var_conflict();
        assert!(approximate_shift_sequence(&p, &SigmaSchedule::default(), 0).is_err());
    }
}

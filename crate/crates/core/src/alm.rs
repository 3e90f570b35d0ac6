//! Augmented Lagrangian method with infeasibility control.
//!
//! Each outer iteration
//!
//! 1. obtains a shift: the weighted approximation `s(sigma^(k))`, or zero
//!    for the standard method;
//! 2. minimizes the augmented Lagrangian
//!    `f(x) + lh1'r1 + lh2'r2 + (rho/2)(||r1||^2 + ||r2||^2)` with
//!    `r_i = A_i x - b_i + s_i`, using the projected multipliers `lh`;
//! 3. updates `s`, `lambda`, the projected multipliers, `u` and `rho`.
//!
//! Row `k` of the trace is the state after the `k`-th pass through these
//! steps, and the shift reported with it is the one used to compute `x^(k)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::{RsigmaSolver, SigmaSchedule};
use crate::error::{Error, Result};
use crate::linalg::PsdSolver;
use crate::oracle::{lex_factors, OracleResult};
use crate::problem::{
    constraint_residuals, objective_value, validate_problem, HierarchicalShift, ProblemData,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    InfeasibilityControl,
    #[serde(rename = "standard-al")]
    StandardAl,
}

/// A box bound, either the same for every component or given per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Uniform(f64),
    PerComponent(Vec<f64>),
}

impl Bound {
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Bound::Uniform(v) => *v,
            Bound::PerComponent(v) => v[i],
        }
    }

    fn check_len(&self, len: usize, name: &str) -> Result<()> {
        match self {
            Bound::PerComponent(v) if v.len() != len => Err(Error::InvalidConfig(format!(
                "{name} has {} entries, expected {len}",
                v.len()
            ))),
            Bound::PerComponent(v) if v.iter().any(|x| x.is_nan()) => {
                Err(Error::InvalidConfig(format!("{name} contains NaN")))
            }
            Bound::Uniform(x) if x.is_nan() => Err(Error::InvalidConfig(format!("{name} is NaN"))),
            _ => Ok(()),
        }
    }
}

/// Subproblem tolerance sequence `eps^(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EpsSchedule {
    /// Direct factorization; the achieved gradient norm is recorded and only
    /// the round-off floor is enforced.
    Exact,
    /// `eps0 * factor^k`
    Geometric { eps0: f64, factor: f64 },
}

impl EpsSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            EpsSchedule::Exact => 0.0,
            EpsSchedule::Geometric { eps0, factor } => {
                eps0 * factor.powi(i32::try_from(k).unwrap_or(i32::MAX))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Penalty is kept when `u^(k+1) <= tau * u^(k)`.
    pub tau: f64,
    /// Penalty growth factor.
    pub gamma: f64,
    pub box1_lo: Bound,
    pub box1_hi: Bound,
    pub box2_lo: Bound,
    pub box2_hi: Bound,
    pub rho0: f64,
    pub u0: f64,
    pub sigma_schedule: SigmaSchedule,
    pub eps_schedule: EpsSchedule,
    pub kkt_tol: f64,
    pub max_iter: usize,
    pub rho_cap: f64,
    pub mode: Mode,
    /// Keep every iterate's vectors in the report.
    pub keep_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau: 0.1,
            gamma: 5.0,
            box1_lo: Bound::Uniform(-1e6),
            box1_hi: Bound::Uniform(1e6),
            box2_lo: Bound::Uniform(-1e6),
            box2_hi: Bound::Uniform(1e6),
            rho0: 1.0,
            u0: 1e3,
            sigma_schedule: SigmaSchedule::default(),
            eps_schedule: EpsSchedule::Exact,
            kkt_tol: 1e-6,
            max_iter: 50,
            rho_cap: 1e14,
            mode: Mode::InfeasibilityControl,
            keep_iterates: false,
        }
    }
}

impl SolverConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self, m1: usize, m2: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must exceed 1, got {}", self.gamma));
        }
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return bad(format!("rho0 must be positive, got {}", self.rho0));
        }
        if !(self.u0 > 0.0 && self.u0.is_finite()) {
            return bad(format!("u0 must be positive, got {}", self.u0));
        }
        if !(self.kkt_tol > 0.0) {
            return bad(format!("kkt_tol must be positive, got {}", self.kkt_tol));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        if !(self.rho_cap > 0.0) {
            return bad(format!("rho_cap must be positive, got {}", self.rho_cap));
        }
        if let EpsSchedule::Geometric { eps0, factor } = self.eps_schedule {
            if !(eps0 > 0.0 && factor > 0.0 && factor < 1.0) {
                return bad(format!(
                    "geometric eps schedule needs eps0 > 0 and factor in (0, 1), got {eps0}, {factor}"
                ));
            }
        }
        self.box1_lo.check_len(m1, "box1_lo")?;
        self.box1_hi.check_len(m1, "box1_hi")?;
        self.box2_lo.check_len(m2, "box2_lo")?;
        self.box2_hi.check_len(m2, "box2_hi")?;
        for (lo, hi, m, name) in [
            (&self.box1_lo, &self.box1_hi, m1, "box 1"),
            (&self.box2_lo, &self.box2_hi, m2, "box 2"),
        ] {
            if let Some(i) = (0..m).find(|&i| lo.at(i) > hi.at(i)) {
                return bad(format!("{name}: lo > hi at component {i}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// KKT residual of the shifted problem.
    #[serde(rename = "E")]
    pub e: f64,
    pub norm_s1: f64,
    pub norm_s2: f64,
    pub r1: f64,
    pub r2: f64,
    pub rho: f64,
    pub norm_lambda1: f64,
    pub norm_lambda2: f64,
    pub subproblem_grad_norm: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    DivergenceSuspected,
}

/// Full algorithm state after iteration `k`.
#[derive(Debug, Clone)]
pub struct IterateSnapshot {
    pub k: usize,
    pub x: DVector<f64>,
    /// Shift used to compute `x`.
    pub shift: HierarchicalShift,
    pub s1: DVector<f64>,
    pub s2: DVector<f64>,
    pub lambda1: DVector<f64>,
    pub lambda2: DVector<f64>,
    pub lambda1_hat: DVector<f64>,
    pub lambda2_hat: DVector<f64>,
    pub u: f64,
    pub rho: f64,
}

/// State before the first iteration.
#[derive(Debug, Clone)]
pub struct InitialState {
    pub lambda1_hat: DVector<f64>,
    pub lambda2_hat: DVector<f64>,
    pub u: f64,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x_final: DVector<f64>,
    pub trace: Vec<IterationRecord>,
    pub shift_final: HierarchicalShift,
    pub objective_final: f64,
    pub lambda1: DVector<f64>,
    pub lambda2: DVector<f64>,
    pub initial: InitialState,
    /// Empty unless [`SolverConfig::keep_iterates`] is set.
    pub iterates: Vec<IterateSnapshot>,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn last(&self) -> &IterationRecord {
        self.trace
            .last()
            .expect("a report holds at least one iteration")
    }
}

/// Value of the augmented Lagrangian at `x`.
pub fn augmented_lagrangian_value(
    p: &ProblemData,
    x: &DVector<f64>,
    lambda1_hat: &DVector<f64>,
    lambda2_hat: &DVector<f64>,
    rho: f64,
    shift: &HierarchicalShift,
) -> Result<f64> {
    check_multipliers(p, lambda1_hat, lambda2_hat)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "rho must be positive, got {rho}"
        )));
    }
    let (r1, r2) = constraint_residuals(p, x, shift)?;
    Ok(objective_value(p, x)?
        + lambda1_hat.dot(&r1)
        + lambda2_hat.dot(&r2)
        + 0.5 * rho * (r1.norm_squared() + r2.norm_squared()))
}

fn check_multipliers(p: &ProblemData, l1: &DVector<f64>, l2: &DVector<f64>) -> Result<()> {
    if l1.len() != p.m1() || l2.len() != p.m2() {
        return Err(Error::Dimension(format!(
            "multipliers have lengths ({}, {}), expected ({}, {})",
            l1.len(),
            l2.len(),
            p.m1(),
            p.m2()
        )));
    }
    Ok(())
}

/// Minimizes the augmented Lagrangian for a sequence of `(rho, shift,
/// multiplier)` triples, reusing `A^T A` and the factorization of
/// `Q + rho A^T A` while `rho` is unchanged.
pub struct SubproblemSolver<'a> {
    problem: &'a ProblemData,
    gram: DMatrix<f64>,
    factors: HashMap<u64, PsdSolver>,
}

impl<'a> SubproblemSolver<'a> {
    pub fn new(problem: &'a ProblemData) -> Self {
        let gram = problem.a1.transpose() * &problem.a1 + problem.a2.transpose() * &problem.a2;
        SubproblemSolver {
            problem,
            gram,
            factors: HashMap::new(),
        }
    }

    fn factor(&mut self, rho: f64) -> &PsdSolver {
        let p = self.problem;
        let gram = &self.gram;
        // Only the current penalty is ever reused.
        self.factors.retain(|&key, _| key == rho.to_bits());
        self.factors.entry(rho.to_bits()).or_insert_with(|| {
            log::debug!("factoring subproblem matrix for rho = {rho:.3e}");
            PsdSolver::new(&(&p.q + gram * rho))
        })
    }

    /// Returns the minimizer and the gradient norm reached there.
    ///
    /// `iteration` only labels errors.
    pub fn solve(
        &mut self,
        lambda1_hat: &DVector<f64>,
        lambda2_hat: &DVector<f64>,
        rho: f64,
        shift: &HierarchicalShift,
        eps: f64,
        iteration: usize,
    ) -> Result<(DVector<f64>, f64)> {
        let p = self.problem;
        check_multipliers(p, lambda1_hat, lambda2_hat)?;
        shift.check_dims(p)?;
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rho must be positive, got {rho}"
            )));
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eps must be nonnegative, got {eps}"
            )));
        }

        let rhs = -&p.c - p.a1.tr_mul(lambda1_hat) - p.a2.tr_mul(lambda2_hat)
            + p.a1.tr_mul(&(&p.b1 - &shift.s1)) * rho
            + p.a2.tr_mul(&(&p.b2 - &shift.s2)) * rho;
        let tol = eps.max(1e-10 * (1.0 + rhs.norm()));

        let gradient = |x: &DVector<f64>| -> DVector<f64> {
            let r1 = &p.a1 * x - &p.b1 + &shift.s1;
            let r2 = &p.a2 * x - &p.b2 + &shift.s2;
            &p.q * x
                + &p.c
                + p.a1.tr_mul(&(lambda1_hat + r1 * rho))
                + p.a2.tr_mul(&(lambda2_hat + r2 * rho))
        };

        let solver = self.factor(rho);
        let unbounded = |_| Error::SubproblemUnbounded { iteration };
        let mut x = solver.solve(&rhs).map_err(unbounded)?;
        let mut grad = gradient(&x);
        let mut grad_norm = grad.norm();
        // Iterative refinement for badly conditioned penalties.
        for _ in 0..3 {
            if grad_norm <= tol {
                break;
            }
            let candidate = &x - solver.solve(&grad).map_err(unbounded)?;
            let g = gradient(&candidate);
            if g.norm() >= grad_norm {
                break;
            }
            x = candidate;
            grad = g;
            grad_norm = grad.norm();
        }
        if !(grad_norm <= tol) {
            return Err(Error::SubproblemInaccurate {
                iteration,
                grad_norm,
                tol,
            });
        }
        Ok((x, grad_norm))
    }
}

/// One-shot subproblem solve; see [`SubproblemSolver`].
pub fn solve_subproblem(
    p: &ProblemData,
    lambda1_hat: &DVector<f64>,
    lambda2_hat: &DVector<f64>,
    rho: f64,
    shift: &HierarchicalShift,
    eps: f64,
) -> Result<(DVector<f64>, f64)> {
    SubproblemSolver::new(p).solve(lambda1_hat, lambda2_hat, rho, shift, eps, 0)
}

/// Componentwise clamp onto `[lo, hi]`.
pub fn project_box(v: &DVector<f64>, lo: &Bound, hi: &Bound) -> DVector<f64> {
    DVector::from_iterator(
        v.len(),
        v.iter()
            .enumerate()
            .map(|(i, &x)| x.max(lo.at(i)).min(hi.at(i))),
    )
}

/// Keep `rho` after sufficient decrease `u_new <= tau * u_old`, otherwise
/// multiply it by `gamma`.
pub fn update_penalty(u_new: f64, u_old: f64, rho: f64, tau: f64, gamma: f64) -> f64 {
    if u_new <= tau * u_old {
        rho
    } else {
        gamma * rho
    }
}

/// `||Q x + c + A1' l1 + A2' l2|| + ||A1 x - b1 + s1|| + ||A2 x - b2 + s2||`
pub fn kkt_residual(
    p: &ProblemData,
    x: &DVector<f64>,
    lambda1: &DVector<f64>,
    lambda2: &DVector<f64>,
    shift: &HierarchicalShift,
) -> Result<f64> {
    check_multipliers(p, lambda1, lambda2)?;
    let (r1, r2) = constraint_residuals(p, x, shift)?;
    let stationarity = &p.q * x + &p.c + p.a1.tr_mul(lambda1) + p.a2.tr_mul(lambda2);
    Ok(stationarity.norm() + r1.norm() + r2.norm())
}

/// Runs the method, computing the oracle shift first.
pub fn run(p: &ProblemData, cfg: &SolverConfig) -> Result<SolveReport> {
    let validation = validate_problem(p);
    if !validation.ok {
        let msg = validation
            .errors()
            .map(|f| f.message.clone())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::InvalidProblem(msg));
    }
    for f in &validation.findings {
        log::warn!("{}", f.message);
    }
    cfg.validate(p.m1(), p.m2())?;
    let factors = lex_factors(p)?;
    let rsigma = match cfg.mode {
        Mode::InfeasibilityControl => Some(RsigmaSolver::from_factors(p, &factors)),
        Mode::StandardAl => None,
    };
    iterate(p, cfg, &factors.oracle, rsigma)
}

/// Runs the method with a precomputed oracle shift (used for `r1`, `r2`).
///
/// The problem is assumed to have passed [`validate_problem`].
pub fn run_with_oracle(
    p: &ProblemData,
    cfg: &SolverConfig,
    oracle: &OracleResult,
) -> Result<SolveReport> {
    cfg.validate(p.m1(), p.m2())?;
    let rsigma = match cfg.mode {
        Mode::InfeasibilityControl => Some(RsigmaSolver::new(p)?),
        Mode::StandardAl => None,
    };
    iterate(p, cfg, oracle, rsigma)
}

/// `(x, shift, lambda1, lambda2)` of the latest iteration.
type FinalState = (DVector<f64>, HierarchicalShift, DVector<f64>, DVector<f64>);

fn iterate(
    p: &ProblemData,
    cfg: &SolverConfig,
    oracle: &OracleResult,
    rsigma: Option<RsigmaSolver>,
) -> Result<SolveReport> {
    oracle.shift.check_dims(p)?;
    let mut subproblem = SubproblemSolver::new(p);

    let mut lambda1_hat = project_box(&DVector::zeros(p.m1()), &cfg.box1_lo, &cfg.box1_hi);
    let mut lambda2_hat = project_box(&DVector::zeros(p.m2()), &cfg.box2_lo, &cfg.box2_hi);
    let mut u = cfg.u0;
    let mut rho = cfg.rho0;
    let initial = InitialState {
        lambda1_hat: lambda1_hat.clone(),
        lambda2_hat: lambda2_hat.clone(),
        u,
        rho,
    };

    let mut trace = Vec::new();
    let mut iterates = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut last: Option<FinalState> = None;

    for j in 0..cfg.max_iter {
        let k = j + 1;

        // Step 1
        let shift = match &rsigma {
            Some(solver) => solver.solve(cfg.sigma_schedule.sigma_at(j))?.1,
            None => HierarchicalShift::zero_for(p),
        };

        // Step 2
        let eps = cfg.eps_schedule.at(j);
        let (x, grad_norm) = subproblem.solve(&lambda1_hat, &lambda2_hat, rho, &shift, eps, k)?;

        // Step 3
        let (s1, s2) = constraint_residuals(p, &x, &shift)?;
        let lambda1 = &lambda1_hat + &s1 * rho;
        let lambda2 = &lambda2_hat + &s2 * rho;
        lambda1_hat = project_box(&lambda1, &cfg.box1_lo, &cfg.box1_hi);
        lambda2_hat = project_box(&lambda2, &cfg.box2_lo, &cfg.box2_hi);
        let u_next = s1.norm() + s2.norm();
        rho = update_penalty(u_next, u, rho, cfg.tau, cfg.gamma);
        u = u_next;

        let e = kkt_residual(p, &x, &lambda1, &lambda2, &shift)?;
        let (r1, r2) = shift.block_distances(&oracle.shift);
        let record = IterationRecord {
            k,
            e,
            norm_s1: s1.norm(),
            norm_s2: s2.norm(),
            r1,
            r2,
            rho,
            norm_lambda1: lambda1.norm(),
            norm_lambda2: lambda2.norm(),
            subproblem_grad_norm: grad_norm,
            u,
        };
        log::info!(
            "k={k} E={e:.3e} |s1|={:.3e} |s2|={:.3e} rho={rho:.3e}",
            record.norm_s1,
            record.norm_s2
        );
        trace.push(record);
        if cfg.keep_iterates {
            iterates.push(IterateSnapshot {
                k,
                x: x.clone(),
                shift: shift.clone(),
                s1,
                s2,
                lambda1: lambda1.clone(),
                lambda2: lambda2.clone(),
                lambda1_hat: lambda1_hat.clone(),
                lambda2_hat: lambda2_hat.clone(),
                u,
                rho,
            });
        }
        last = Some((x, shift, lambda1, lambda2));

        if e <= cfg.kkt_tol {
            status = SolveStatus::Converged;
            break;
        }
        if rho > cfg.rho_cap || !e.is_finite() {
            status = SolveStatus::DivergenceSuspected;
            break;
        }
    }

    let (x_final, shift_final, lambda1, lambda2) =
        last.expect("max_iter >= 1 guarantees one iteration");
    Ok(SolveReport {
        status,
        objective_final: objective_value(p, &x_final)?,
        x_final,
        trace,
        shift_final,
        lambda1,
        lambda2,
        initial,
        iterates,
    })
}

/// Checks the update identities on a report produced with
/// `keep_iterates`. Returns one message per violation.
///
/// * `lambda^(k) = lh^(k-1) + rho^(k-1) s^(k)` (bitwise)
/// * `u^(k) = ||s1^(k)|| + ||s2^(k)||` (bitwise)
/// * `rho^(k) / rho^(k-1)` is exactly 1 or `gamma`
/// * `lh^(k)` lies in the boxes
pub fn verify_bookkeeping(report: &SolveReport, cfg: &SolverConfig) -> Vec<String> {
    let mut out = Vec::new();
    if report.iterates.len() != report.trace.len() {
        out.push(format!(
            "report holds {} iterates for {} trace rows",
            report.iterates.len(),
            report.trace.len()
        ));
        return out;
    }
    let mut prev_l1h = &report.initial.lambda1_hat;
    let mut prev_l2h = &report.initial.lambda2_hat;
    let mut prev_rho = report.initial.rho;
    let in_box = |v: &DVector<f64>, lo: &Bound, hi: &Bound| {
        v.iter()
            .enumerate()
            .all(|(i, &x)| lo.at(i) <= x && x <= hi.at(i))
    };
    if !in_box(prev_l1h, &cfg.box1_lo, &cfg.box1_hi)
        || !in_box(prev_l2h, &cfg.box2_lo, &cfg.box2_hi)
    {
        out.push("initial projected multipliers outside boxes".into());
    }
    for (snap, rec) in report.iterates.iter().zip(&report.trace) {
        let k = snap.k;
        if prev_l1h + &snap.s1 * prev_rho != snap.lambda1
            || prev_l2h + &snap.s2 * prev_rho != snap.lambda2
        {
            out.push(format!("k={k}: multiplier recursion violated"));
        }
        if snap.s1.norm() + snap.s2.norm() != snap.u || rec.u != snap.u {
            out.push(format!("k={k}: u differs from ||s1|| + ||s2||"));
        }
        if !(snap.rho == prev_rho || snap.rho == prev_rho * cfg.gamma) || rec.rho != snap.rho {
            out.push(format!(
                "k={k}: rho ratio {} not in {{1, gamma}}",
                snap.rho / prev_rho
            ));
        }
        if !in_box(&snap.lambda1_hat, &cfg.box1_lo, &cfg.box1_hi)
            || !in_box(&snap.lambda2_hat, &cfg.box2_lo, &cfg.box2_hi)
        {
            out.push(format!("k={k}: projected multipliers outside boxes"));
        }
        prev_l1h = &snap.lambda1_hat;
        prev_l2h = &snap.lambda2_hat;
        prev_rho = snap.rho;
    }
    out
}

//! Augmented Lagrangian method with infeasibility control for convex
//! quadratic programs with two priority levels of equality constraints.
//!
//! When the constraints cannot all hold, the solver targets the problem
//! shifted by the hierarchically optimal shift: the smallest violation of
//! the high-priority block, then the smallest violation of the low-priority
//! block among points achieving it. The shift is approximated at each outer
//! iteration by a weighted least-squares problem whose weight ratio grows
//! without bound.
//!
//! * [`problem`] / [`io`]: data model and JSON instance files
//! * [`oracle`]: exact shift by lexicographic least squares
//! * [`control`]: weighted approximations and their schedule
//! * [`alm`]: the outer iteration and the standard method for comparison
//! * [`netflow`]: grid network-flow instances
//! * [`report`]: trace CSV and tables

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alm;
pub mod control;
pub mod error;
pub mod io;
pub mod kkt;
pub mod linalg;
pub mod netflow;
pub mod oracle;
pub mod problem;
pub mod random;
pub mod report;

pub use alm::{
    run, run_with_oracle, verify_bookkeeping, Bound, EpsSchedule, IterationRecord, Mode,
    SolveReport, SolveStatus, SolverConfig,
};
pub use control::{SigmaPair, SigmaSchedule};
pub use error::{Error, Result};
pub use netflow::{build_instance, GridSpec};
pub use oracle::{hierarchical_shift, OracleResult};
pub use problem::{HierarchicalShift, ProblemData, ShiftKind, ValidationReport};

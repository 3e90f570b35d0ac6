//! Trace CSV files and fixed-width iteration tables.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::alm::{IterationRecord, SolveReport, SolveStatus};
use crate::control::SweepRow;
use crate::error::Result;

/// Process exit code for a finished solve.
pub fn exit_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Converged => 0,
        SolveStatus::MaxIter => 2,
        SolveStatus::DivergenceSuspected => 3,
    }
}

/// Writes the trace as CSV: `k, E, norm_s1, norm_s2, r1, r2, rho,
/// norm_lambda1, norm_lambda2`, then `subproblem_grad_norm, u`. Values use
/// the shortest representation that parses back to the same double.
pub fn write_trace_csv<W: Write>(trace: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in trace {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<IterationRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Scientific notation with three significant digits and a signed two-digit
/// exponent, e.g. `5.12e+00`, `2.09e-07`.
pub fn sci3(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.2e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

const TABLE_COLUMNS: [&str; 9] = [
    "k",
    "E",
    "|s1|",
    "|s2|",
    "r1",
    "r2",
    "rho",
    "|lambda1|",
    "|lambda2|",
];

/// Renders the trace in the same column layout as the CSV.
pub fn render_table(trace: &[IterationRecord]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:>4}", TABLE_COLUMNS[0]));
    for name in &TABLE_COLUMNS[1..] {
        out.push_str(&format!(" {name:>10}"));
    }
    out.push('\n');
    for rec in trace {
        out.push_str(&format!("{:>4}", rec.k));
        for v in [
            rec.e,
            rec.norm_s1,
            rec.norm_s2,
            rec.r1,
            rec.r2,
            rec.rho,
            rec.norm_lambda1,
            rec.norm_lambda2,
        ] {
            out.push_str(&format!(" {:>10}", sci3(v)));
        }
        out.push('\n');
    }
    out
}

pub fn render_sweep_table(rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{:>4} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "k", "sigma1", "sigma2", "|s1|", "|s2|", "r1", "r2"
    );
    for r in rows {
        out.push_str(&format!("{:>4}", r.k));
        for v in [r.sigma1, r.sigma2, r.norm_s1, r.norm_s2, r.r1, r.r2] {
            out.push_str(&format!(" {:>10}", sci3(v)));
        }
        out.push('\n');
    }
    out
}

/// Final state of one solve, as printed side by side by `compare`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_e: f64,
    pub final_rho: f64,
    pub norm_lambda1: f64,
    pub norm_lambda2: f64,
    pub objective: f64,
}

impl From<&SolveReport> for RunSummary {
    fn from(r: &SolveReport) -> Self {
        let last = r.last();
        RunSummary {
            status: r.status,
            iterations: r.iterations(),
            final_e: last.e,
            final_rho: last.rho,
            norm_lambda1: last.norm_lambda1,
            norm_lambda2: last.norm_lambda2,
            objective: r.objective_final,
        }
    }
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max-iter",
        SolveStatus::DivergenceSuspected => "divergence-suspected",
    }
}

pub fn render_comparison(left: (&str, &RunSummary), right: (&str, &RunSummary)) -> String {
    let (ln, l) = left;
    let (rn, r) = right;
    let mut out = format!("{:<12} {:>22} {:>22}\n", "", ln, rn);
    out.push_str(&format!(
        "{:<12} {:>22} {:>22}\n",
        "status",
        status_name(l.status),
        status_name(r.status)
    ));
    out.push_str(&format!(
        "{:<12} {:>22} {:>22}\n",
        "iterations", l.iterations, r.iterations
    ));
    for (name, a, b) in [
        ("final E", l.final_e, r.final_e),
        ("final rho", l.final_rho, r.final_rho),
        ("|lambda1|", l.norm_lambda1, r.norm_lambda1),
        ("|lambda2|", l.norm_lambda2, r.norm_lambda2),
        ("objective", l.objective, r.objective),
    ] {
        out.push_str(&format!("{:<12} {:>22} {:>22}\n", name, sci3(a), sci3(b)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sci3_matches_table_style() {
        assert_eq!(sci3(5.12), "5.12e+00");
        assert_eq!(sci3(2.09e-7), "2.09e-07");
        assert_eq!(sci3(1.9073486328125e13), "1.91e+13");
        assert_eq!(sci3(625.0), "6.25e+02");
        assert_eq!(sci3(0.0), "0.00e+00");
        assert_eq!(sci3(9.999), "1.00e+01");
        assert_eq!(sci3(-3.0e-120), "-3.00e-120");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(SolveStatus::Converged), 0);
        assert_eq!(exit_code(SolveStatus::MaxIter), 2);
        assert_eq!(exit_code(SolveStatus::DivergenceSuspected), 3);
    }

    #[test]
    fn csv_header_order() {
        let mut buf = Vec::new();
        let rec = IterationRecord {
            k: 1,
            e: 5.12,
            norm_s1: 2.89,
            norm_s2: 2.24,
            r1: 0.0,
            r2: 0.0,
            rho: 1.0,
            norm_lambda1: 2.89,
            norm_lambda2: 2.24,
            subproblem_grad_norm: 1e-15,
            u: 5.13,
        };
        write_trace_csv(&[rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "k,E,norm_s1,norm_s2,r1,r2,rho,norm_lambda1,norm_lambda2,subproblem_grad_norm,u"
        );
        let table = render_table(&[rec]);
        assert!(table.contains("5.12e+00"));
        assert!(table.contains("1.00e+00"));
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
    }

    proptest! {
        #[test]
        fn trace_csv_round_trip(rows in prop::collection::vec(
            (0usize..1000, prop::array::uniform10(finite())), 0..20)) {
            let trace: Vec<IterationRecord> = rows.iter().map(|(k, v)| IterationRecord {
                k: *k, e: v[0], norm_s1: v[1], norm_s2: v[2], r1: v[3], r2: v[4],
                rho: v[5], norm_lambda1: v[6], norm_lambda2: v[7],
                subproblem_grad_norm: v[8], u: v[9],
            }).collect();
            let mut buf = Vec::new();
            write_trace_csv(&trace, &mut buf).unwrap();
            let back = read_trace_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), trace.len());
            for (a, b) in back.iter().zip(&trace) {
                prop_assert_eq!(a.k, b.k);
                for (x, y) in [(a.e, b.e), (a.norm_s1, b.norm_s1), (a.norm_s2, b.norm_s2),
                    (a.r1, b.r1), (a.r2, b.r2), (a.rho, b.rho), (a.norm_lambda1, b.norm_lambda1),
                    (a.norm_lambda2, b.norm_lambda2), (a.subproblem_grad_norm, b.subproblem_grad_norm),
                    (a.u, b.u)] {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}

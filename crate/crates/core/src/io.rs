//! JSON instance files.
//!
//! ```json
//! {
//!   "n": 2, "m1": 1, "m2": 0,
//!   "Q": [[1.0, 0.0], [0.0, 1.0]],
//!   "c": [0.0, 0.0],
//!   "A1": {"format": "coo", "rows": 1, "cols": 2, "entries": [[0, 0, 1.0]]},
//!   "b1": [1.0],
//!   "A2": [],
//!   "b2": [],
//!   "meta": {"generator": "grid"}
//! }
//! ```
//!
//! Matrices are dense row lists or COO triplets. Numbers are written in
//! shortest round-trip form, so save followed by load is bit-exact.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum CooTag {
    Coo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CooMatrix {
    format: CooTag,
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixRepr {
    Dense(Vec<Vec<f64>>),
    Coo(CooMatrix),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    n: usize,
    m1: usize,
    m2: usize,
    #[serde(rename = "Q")]
    q: MatrixRepr,
    c: Vec<f64>,
    #[serde(rename = "A1")]
    a1: MatrixRepr,
    b1: Vec<f64>,
    #[serde(rename = "A2")]
    a2: MatrixRepr,
    b2: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

/// Storage choice when writing matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixLayout {
    Dense,
    Coo,
    /// COO when at most a quarter of the entries are nonzero.
    #[default]
    Auto,
}

/// A problem together with its optional free-form metadata block.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: ProblemData,
    pub meta: Option<serde_json::Value>,
}

fn to_repr(a: &DMatrix<f64>, layout: MatrixLayout) -> MatrixRepr {
    let nnz = a.iter().filter(|v| **v != 0.0).count();
    let coo = match layout {
        MatrixLayout::Dense => false,
        MatrixLayout::Coo => true,
        MatrixLayout::Auto => 4 * nnz <= a.len() && a.nrows() > 0,
    };
    if coo {
        let entries = (0..a.nrows())
            .flat_map(|i| (0..a.ncols()).map(move |j| (i, j)))
            .filter(|&(i, j)| a[(i, j)] != 0.0)
            .map(|(i, j)| (i, j, a[(i, j)]))
            .collect();
        MatrixRepr::Coo(CooMatrix {
            format: CooTag::Coo,
            rows: a.nrows(),
            cols: a.ncols(),
            entries,
        })
    } else {
        MatrixRepr::Dense(a.row_iter().map(|r| r.iter().copied().collect()).collect())
    }
}

fn invalid(name: &str, msg: String) -> Error {
    Error::Dimension(format!("{name}: {msg}"))
}

fn from_repr(repr: MatrixRepr, name: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    match repr {
        MatrixRepr::Dense(data) => {
            if data.len() != rows {
                return Err(invalid(
                    name,
                    format!("has {} rows, declared {rows}", data.len()),
                ));
            }
            if let Some((i, r)) = data.iter().enumerate().find(|(_, r)| r.len() != cols) {
                return Err(invalid(
                    name,
                    format!("row {i} has {} entries, expected {cols}", r.len()),
                ));
            }
            Ok(DMatrix::from_fn(rows, cols, |i, j| data[i][j]))
        }
        MatrixRepr::Coo(coo) => {
            if coo.rows != rows || coo.cols != cols {
                return Err(invalid(
                    name,
                    format!("is {}x{}, declared {rows}x{cols}", coo.rows, coo.cols),
                ));
            }
            let mut a = DMatrix::zeros(rows, cols);
            let mut seen = std::collections::HashSet::new();
            for (k, &(i, j, v)) in coo.entries.iter().enumerate() {
                if i >= rows || j >= cols {
                    return Err(invalid(
                        name,
                        format!("entry {k} at ({i}, {j}) out of range"),
                    ));
                }
                if !seen.insert((i, j)) {
                    return Err(invalid(name, format!("duplicate entry at ({i}, {j})")));
                }
                a[(i, j)] = v;
            }
            Ok(a)
        }
    }
}

fn vector(data: Vec<f64>, name: &str, len: usize) -> Result<DVector<f64>> {
    if data.len() != len {
        return Err(invalid(
            name,
            format!("has {} entries, expected {len}", data.len()),
        ));
    }
    Ok(DVector::from_vec(data))
}

/// Serializes an instance to a JSON string.
pub fn instance_to_string(
    p: &ProblemData,
    meta: Option<&serde_json::Value>,
    layout: MatrixLayout,
) -> Result<String> {
    p.ensure_finite()?;
    let doc = InstanceDoc {
        n: p.n(),
        m1: p.m1(),
        m2: p.m2(),
        q: to_repr(&p.q, layout),
        c: p.c.iter().copied().collect(),
        a1: to_repr(&p.a1, layout),
        b1: p.b1.iter().copied().collect(),
        a2: to_repr(&p.a2, layout),
        b2: p.b2.iter().copied().collect(),
        meta: meta.cloned(),
    };
    serde_json::to_string(&doc).map_err(|e| Error::parse("instance", &e))
}

/// Parses an instance from JSON text. `context` names the source in errors.
pub fn instance_from_str(text: &str, context: &str) -> Result<Instance> {
    let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| Error::parse(context, &e))?;
    let (n, m1, m2) = (doc.n, doc.m1, doc.m2);
    let problem = ProblemData::new(
        from_repr(doc.q, "Q", n, n)?,
        vector(doc.c, "c", n)?,
        from_repr(doc.a1, "A1", m1, n)?,
        vector(doc.b1, "b1", m1)?,
        from_repr(doc.a2, "A2", m2, n)?,
        vector(doc.b2, "b2", m2)?,
    )?;
    problem.ensure_finite()?;
    Ok(Instance {
        problem,
        meta: doc.meta,
    })
}

pub fn save_instance(
    p: &ProblemData,
    meta: Option<&serde_json::Value>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let text = instance_to_string(p, meta, MatrixLayout::Auto)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn save_problem(p: &ProblemData, path: impl AsRef<Path>) -> Result<()> {
    save_instance(p, None, path)
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    instance_from_str(&text, &path.display().to_string())
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<ProblemData> {
    load_instance(path).map(|i| i.problem)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ProblemData {
        ProblemData::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]),
            DVector::from_vec(vec![0.1, -1.0 / 3.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_vec(vec![1e-300]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_each_layout() {
        let p = sample();
        for layout in [MatrixLayout::Dense, MatrixLayout::Coo, MatrixLayout::Auto] {
            let s = instance_to_string(&p, None, layout).unwrap();
            let back = instance_from_str(&s, "mem").unwrap();
            assert_eq!(back.problem, p);
        }
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let meta = serde_json::json!({"note": "x"});
        save_instance(&sample(), Some(&meta), &path).unwrap();
        let inst = load_instance(&path).unwrap();
        assert_eq!(inst.problem, sample());
        assert_eq!(inst.meta, Some(meta));
    }

    #[test]
    fn string_in_matrix_cell() {
        let text = r#"{"n":1,"m1":0,"m2":0,"Q":[["one"]],"c":[0],"A1":[],"b1":[],"A2":[],"b2":[]}"#;
        let err = instance_from_str(text, "bad.json").unwrap_err();
        match err {
            Error::Parse { context, line, .. } => {
                assert_eq!(context, "bad.json");
                assert_eq!(line, 1);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn row_count_mismatch() {
        let text =
            r#"{"n":1,"m1":2,"m2":0,"Q":[[1]],"c":[0],"A1":[[1]],"b1":[1,2],"A2":[],"b2":[]}"#;
        let err = instance_from_str(text, "bad.json").unwrap_err();
        assert!(err.to_string().contains("A1"), "{err}");
    }

    #[test]
    fn coo_errors() {
        let base = |entries: &str| {
            format!(
                r#"{{"n":2,"m1":0,"m2":0,"Q":{{"format":"coo","rows":2,"cols":2,"entries":{entries}}},"c":[0,0],"A1":[],"b1":[],"A2":[],"b2":[]}}"#
            )
        };
        assert!(instance_from_str(&base("[[0,0,1],[1,1,1]]"), "ok").is_ok());
        assert!(instance_from_str(&base("[[0,0,1],[0,0,2]]"), "dup").is_err());
        assert!(instance_from_str(&base("[[2,0,1]]"), "range").is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let mut p = sample();
        p.c[0] = f64::NAN;
        assert!(matches!(
            instance_to_string(&p, None, MatrixLayout::Dense),
            Err(Error::NonFinite(_))
        ));
        let text = r#"{"n":1,"m1":0,"m2":0,"Q":[[1e999]],"c":[0],"A1":[],"b1":[],"A2":[],"b2":[]}"#;
        assert!(instance_from_str(text, "inf").is_err());
    }
}

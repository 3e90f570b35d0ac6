//! Grid network-flow instances.
//!
//! Nodes sit on a `rows x cols` grid and every horizontal or vertical
//! neighbour pair is joined by two directed edges. The top row supplies one
//! unit per node, the bottom row demands one unit per node. Flow balance at
//! demand and intermediate nodes is the high-priority block; supply nodes
//! form the low-priority block, whose right-hand side is raised by `kappa`
//! to make the system infeasible for `kappa > 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemData;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub kappa: f64,
    /// Objective `Q = q_scale * I`.
    pub q_scale: f64,
    /// Objective `c = c_scale * e`.
    pub c_scale: f64,
}

impl GridSpec {
    /// `rows x cols` grid with objective `(1/2)||x||^2 + 0.1 e'x`.
    pub fn new(rows: usize, cols: usize, kappa: f64) -> Result<Self> {
        let spec = GridSpec {
            rows,
            cols,
            kappa,
            q_scale: 1.0,
            c_scale: 0.1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 1 {
            return Err(Error::InvalidConfig(format!(
                "grid needs rows >= 2 and cols >= 1, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "kappa must be finite and nonnegative, got {}",
                self.kappa
            )));
        }
        if !(self.q_scale > 0.0 && self.q_scale.is_finite() && self.c_scale.is_finite()) {
            return Err(Error::InvalidConfig(
                "q_scale must be positive and c_scale finite".into(),
            ));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn num_edges(&self) -> usize {
        edge_count(self.rows, self.cols)
    }
}

/// `2 (rows (cols - 1) + (rows - 1) cols)`
pub fn edge_count(rows: usize, cols: usize) -> usize {
    2 * (rows * cols.saturating_sub(1) + rows.saturating_sub(1) * cols)
}

/// Node-edge incidence matrix with its directed edge list.
#[derive(Debug, Clone)]
pub struct GridIncidence {
    pub rows: usize,
    pub cols: usize,
    /// `nodes x edges`; column `j` has `+1` at the head and `-1` at the tail
    /// of edge `j`.
    pub a: DMatrix<f64>,
    /// `(tail, head)` node indices per edge.
    pub edges: Vec<(usize, usize)>,
}

impl GridIncidence {
    /// Row-major node index.
    pub fn node(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }
}

/// Incidence matrix of the bidirectional grid. Edges are ordered rightward,
/// leftward, downward, upward, each group by tail node in row-major order.
pub fn grid_incidence(rows: usize, cols: usize) -> Result<GridIncidence> {
    if rows * cols < 2 {
        return Err(Error::InvalidConfig(format!(
            "grid {rows}x{cols} has fewer than two nodes"
        )));
    }
    let node = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::with_capacity(edge_count(rows, cols));
    let cells = || (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c)));
    edges.extend(
        cells()
            .filter(|&(_, c)| c + 1 < cols)
            .map(|(r, c)| (node(r, c), node(r, c + 1))),
    );
    edges.extend(
        cells()
            .filter(|&(_, c)| c > 0)
            .map(|(r, c)| (node(r, c), node(r, c - 1))),
    );
    edges.extend(
        cells()
            .filter(|&(r, _)| r + 1 < rows)
            .map(|(r, c)| (node(r, c), node(r + 1, c))),
    );
    edges.extend(
        cells()
            .filter(|&(r, _)| r > 0)
            .map(|(r, c)| (node(r, c), node(r - 1, c))),
    );

    let mut a = DMatrix::zeros(rows * cols, edges.len());
    for (j, &(tail, head)) in edges.iter().enumerate() {
        a[(head, j)] = 1.0;
        a[(tail, j)] = -1.0;
    }
    Ok(GridIncidence {
        rows,
        cols,
        a,
        edges,
    })
}

/// Which nodes landed in which constraint block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub generator: String,
    pub rows: usize,
    pub cols: usize,
    pub kappa: f64,
    /// Node index of each high-priority row (demand and intermediate nodes).
    pub high_priority_nodes: Vec<usize>,
    /// Node index of each low-priority row (supply nodes).
    pub low_priority_nodes: Vec<usize>,
}

pub fn build_instance(spec: &GridSpec) -> Result<(ProblemData, GridMeta)> {
    spec.validate()?;
    let inc = grid_incidence(spec.rows, spec.cols)?;
    let n = inc.edges.len();
    let supply = |node: usize| node < spec.cols;
    let demand = |node: usize| node >= (spec.rows - 1) * spec.cols;
    let b = |node: usize| {
        if supply(node) {
            -1.0
        } else if demand(node) {
            1.0
        } else {
            0.0
        }
    };

    let (low, high): (Vec<usize>, Vec<usize>) = (0..spec.num_nodes()).partition(|&i| supply(i));
    let a1 = inc.a.select_rows(high.iter());
    let a2 = inc.a.select_rows(low.iter());
    let b1 = DVector::from_iterator(high.len(), high.iter().map(|&i| b(i)));
    let b2 = DVector::from_iterator(low.len(), low.iter().map(|&i| b(i) + spec.kappa));

    let p = ProblemData::new(
        DMatrix::identity(n, n) * spec.q_scale,
        DVector::from_element(n, spec.c_scale),
        a1,
        b1,
        a2,
        b2,
    )?;
    let meta = GridMeta {
        generator: "grid".into(),
        rows: spec.rows,
        cols: spec.cols,
        kappa: spec.kappa,
        high_priority_nodes: high,
        low_priority_nodes: low,
    };
    Ok((p, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_counts() {
        assert_eq!(grid_incidence(20, 20).unwrap().a.shape(), (400, 1520));
        assert_eq!(grid_incidence(2, 2).unwrap().a.shape(), (4, 8));
        assert_eq!(edge_count(3, 5), 2 * (3 * 4 + 2 * 5));
        assert!(grid_incidence(1, 1).is_err());
    }

    #[test]
    fn columns_have_one_head_one_tail() {
        for (r, c) in [(2, 1), (2, 2), (3, 4), (5, 5)] {
            let inc = grid_incidence(r, c).unwrap();
            for (j, col) in inc.a.column_iter().enumerate() {
                let (tail, head) = inc.edges[j];
                assert_eq!(col[head], 1.0);
                assert_eq!(col[tail], -1.0);
                assert_eq!(col.iter().filter(|v| **v != 0.0).count(), 2);
                assert_eq!(col.sum(), 0.0);
            }
        }
    }

    #[test]
    fn edge_order_is_right_left_down_up() {
        let inc = grid_incidence(2, 2).unwrap();
        assert_eq!(
            inc.edges,
            vec![
                (0, 1),
                (2, 3),
                (1, 0),
                (3, 2),
                (0, 2),
                (1, 3),
                (2, 0),
                (3, 1)
            ]
        );
        assert_eq!(inc.node(1, 1), 3);
    }

    #[test]
    fn partition_and_rhs() {
        let (p, meta) = build_instance(&GridSpec::new(20, 20, 0.0).unwrap()).unwrap();
        assert_eq!((p.m1(), p.m2(), p.n()), (380, 20, 1520));
        assert_eq!(p.b1.sum(), 20.0);
        assert_eq!(p.b2.sum(), -20.0);
        assert_eq!(meta.low_priority_nodes, (0..20).collect::<Vec<_>>());
        assert_eq!(meta.high_priority_nodes.len(), 380);
        assert!(p.c.iter().all(|&v| v == 0.1));
        assert_eq!(p.q, DMatrix::identity(1520, 1520));

        let (p, _) = build_instance(&GridSpec::new(20, 20, 0.5).unwrap()).unwrap();
        assert!(p.b2.iter().all(|&v| v == -0.5));
        // e'A = 0 while e'b = 10
        assert_eq!(p.b1.sum() + p.b2.sum(), 10.0);
    }

    #[test]
    fn invalid_specs() {
        assert!(GridSpec::new(1, 5, 0.0).is_err());
        assert!(GridSpec::new(2, 0, 0.0).is_err());
        assert!(GridSpec::new(3, 3, -0.1).is_err());
    }
}

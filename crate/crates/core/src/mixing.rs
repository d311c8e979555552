//! Doubly stochastic consensus weights.
//!
//! The default construction spreads `1/|E|` on every edge and puts the
//! remainder on the diagonal. When some node is incident to every edge (the
//! center of a star, or either end of a single edge) the diagonal would vanish,
//! so the denominator becomes `|E| + 1` instead.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::graph::{GraphError, InterferenceGraph, NodeId};
use crate::linalg;
use crate::scalar::{count, Scalar};

/// Square consensus matrix indexed by `support` (ascending node ids).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingMatrix<T> {
    support: Vec<NodeId>,
    /// Edges of the support subgraph as local index pairs `(i, j)`, `i < j`.
    edges: Vec<(usize, usize)>,
    weights: Vec<T>,
    theta: T,
}

impl<T: Scalar> MixingMatrix<T> {
    /// Uniform edge weights over the whole graph.
    pub fn from_graph(g: &InterferenceGraph) -> Self {
        let n = g.len();
        let e = g.edge_count();
        let mut edges = Vec::with_capacity(e);
        for i in 0..n {
            for &j in g.neighbors_of(i) {
                if i < j {
                    edges.push((i, j));
                }
            }
        }
        let zero_diagonal = (0..n).any(|i| g.degree_of(i) == e);
        let denom = if e == 0 {
            1
        } else if zero_diagonal {
            e + 1
        } else {
            e
        };
        let d: T = count(denom);
        let mut weights = vec![T::zero(); n * n];
        for i in 0..n {
            for &j in g.neighbors_of(i) {
                weights[i * n + j] = T::one() / d;
            }
            weights[i * n + i] = count::<T>(denom - g.degree_of(i)) / d;
        }
        let theta = weights
            .iter()
            .copied()
            .filter(|&w| w > T::zero())
            .fold(T::one(), T::min);
        MixingMatrix {
            support: g.node_ids().to_vec(),
            edges,
            weights,
            theta,
        }
    }

    /// Matrix over the closed neighborhood of `b`, built from the edges
    /// whose endpoints both lie in that neighborhood.
    pub fn local(g: &InterferenceGraph, b: NodeId) -> Result<Self, GraphError> {
        let hood = g.closed_neighborhood(b)?;
        let sub = g.induced(&hood)?;
        Ok(Self::from_graph(&sub))
    }

    /// Wraps raw weights without any validation; used to probe the validator.
    pub fn from_parts(support: Vec<NodeId>, edges: Vec<(usize, usize)>, weights: Vec<T>) -> Self {
        let theta = weights
            .iter()
            .copied()
            .filter(|&w| w > T::zero())
            .fold(T::infinity(), T::min);
        MixingMatrix {
            support,
            edges,
            weights,
            theta,
        }
    }

    pub fn support(&self) -> &[NodeId] {
        &self.support
    }

    pub fn size(&self) -> usize {
        self.support.len()
    }

    /// Smallest positive entry.
    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.weights[i * self.size() + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        let n = self.size();
        &self.weights[i * n..(i + 1) * n]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Local position of node `id` in the support.
    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.support.binary_search(&id).ok()
    }

    fn is_edge(&self, i: usize, j: usize) -> bool {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges.binary_search(&key).is_ok()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.size();
        (0..n).all(|i| (0..n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Checks row/column sums, nonnegativity, and that the sparsity pattern
    /// is exactly the support graph plus the diagonal.
    pub fn validate(&self, tol: T) -> MixingReport<T> {
        let n = self.size();
        let mut report = MixingReport {
            max_row_error: T::zero(),
            max_col_error: T::zero(),
            min_positive: T::infinity(),
            negative_entries: Vec::new(),
            support_mismatches: Vec::new(),
            tol,
        };
        for i in 0..n {
            let row: T = (0..n).map(|j| self.get(i, j)).sum();
            let col: T = (0..n).map(|j| self.get(j, i)).sum();
            report.max_row_error = report.max_row_error.max((row - T::one()).abs());
            report.max_col_error = report.max_col_error.max((col - T::one()).abs());
            for j in 0..n {
                let w = self.get(i, j);
                if w < T::zero() {
                    report.negative_entries.push((self.support[i], self.support[j]));
                }
                if w > T::zero() {
                    report.min_positive = report.min_positive.min(w);
                }
                let allowed = i == j || self.is_edge(i, j);
                if (w > T::zero()) != allowed {
                    report.support_mismatches.push((self.support[i], self.support[j]));
                }
            }
        }
        report
    }

    /// `d[n] = ‖Wⁿ − 11ᵀ/I‖₂` for `n = 1..=n_max`.
    pub fn consensus_decay(&self, n_max: usize) -> Vec<T> {
        let n = self.size();
        let avg = T::one() / count::<T>(n);
        let mut power = self.weights.clone();
        let mut out = Vec::with_capacity(n_max);
        for step in 1..=n_max {
            if step > 1 {
                power = linalg::matmul(&power, &self.weights, n);
            }
            let diff: Vec<T> = power.iter().map(|&w| w - avg).collect();
            out.push(linalg::spectral_norm(&diff, n));
        }
        out
    }

    /// Writes the matrix as CSV with a header row of node ids.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["node".to_string()];
        header.extend(self.support.iter().map(|id| id.to_string()));
        wtr.write_record(&header)?;
        for (i, id) in self.support.iter().enumerate() {
            let mut rec = vec![id.to_string()];
            rec.extend(self.row(i).iter().map(|w| w.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Result of a doubly-stochastic check.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport<T> {
    pub max_row_error: T,
    pub max_col_error: T,
    pub min_positive: T,
    pub negative_entries: Vec<(NodeId, NodeId)>,
    /// Entries whose positivity disagrees with the support graph.
    pub support_mismatches: Vec<(NodeId, NodeId)>,
    pub tol: T,
}

impl<T: Scalar> MixingReport<T> {
    pub fn passed(&self) -> bool {
        self.max_row_error <= self.tol
            && self.max_col_error <= self.tol
            && self.negative_entries.is_empty()
            && self.support_mismatches.is_empty()
    }
}

impl<T: Scalar> fmt::Display for MixingReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: row err {:e}, col err {:e}, min positive {}, {} negative, {} support mismatches",
            if self.passed() { "pass" } else { "FAIL" },
            self.max_row_error.to_f64().unwrap_or(f64::NAN),
            self.max_col_error.to_f64().unwrap_or(f64::NAN),
            self.min_positive,
            self.negative_entries.len(),
            self.support_mismatches.len()
        )
    }
}

/// Least-squares slope of `ln d[n]` against `n`, as a ratio. `None` when fewer
/// than two positive samples exist.
pub fn fit_decay_ratio<T: Scalar>(d: &[T]) -> Option<T> {
    let pts: Vec<(T, T)> = d
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > T::min_positive_value())
        .map(|(i, &v)| (count::<T>(i + 1), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = count::<T>(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / m;
    let my = pts.iter().map(|p| p.1).sum::<T>() / m;
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some((sxy / sxx).exp())
}

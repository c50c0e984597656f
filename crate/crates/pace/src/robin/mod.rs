//! Graph-theoretic outlier pruning: invariant-based compatibility tests,
//! hypergraph construction, exact maximum clique / hyperclique search, and
//! the pruning pipeline that combines them.
//!
//! A compatibility test is sound: when it fails, the tested subset must
//! contain an outlier. Inliers therefore form a hyperclique of the
//! compatibility hypergraph, and the maximum hyperclique is returned as the
//! surviving measurement set.

use nalgebra::{Vector2, Vector3};

use crate::{Error, Result};

mod bounds;
mod clique;
mod winding;

pub use bounds::{compute_pair_bounds, test_pair_3d, PairBounds};
pub use clique::{max_clique, max_hyperclique};
pub use winding::{
    build_winding_dictionary_lp, learn_winding_dictionary, test_triplet_2d, winding_order_2d,
    ConvexShapeModel, SignSet, WindingDictionary,
};

/// n-uniform undirected hypergraph over measurement indices. For `n = 2`
/// this is an ordinary graph.
#[derive(Debug, Clone)]
pub struct CompatibilityHypergraph {
    n: usize,
    num_nodes: usize,
    edges: std::collections::BTreeSet<Vec<usize>>,
}

impl CompatibilityHypergraph {
    pub fn new(num_nodes: usize, n: usize) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(Error::InvalidInput("uniformity must be 2 or 3".into()));
        }
        Ok(CompatibilityHypergraph {
            n,
            num_nodes,
            edges: Default::default(),
        })
    }

    pub fn uniformity(&self) -> usize {
        self.n
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Inserts a hyperedge; the node tuple is sorted internally.
    pub fn insert_edge(&mut self, mut nodes: Vec<usize>) -> Result<()> {
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "edge must have exactly {} distinct nodes",
                self.n
            )));
        }
        if nodes.iter().any(|&v| v >= self.num_nodes) {
            return Err(Error::InvalidInput("edge node out of range".into()));
        }
        self.edges.insert(nodes);
        Ok(())
    }

    pub fn has_edge(&self, nodes: &[usize]) -> bool {
        let mut k = nodes.to_vec();
        k.sort_unstable();
        self.edges.contains(&k)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.edges.iter()
    }

    /// Checks that every n-subset of `set` is an edge.
    pub fn is_hyperclique(&self, set: &[usize]) -> bool {
        let mut s = set.to_vec();
        s.sort_unstable();
        let mut ok = true;
        for_each_combination(s.len(), self.n, |idx| {
            let sub: Vec<usize> = idx.iter().map(|&t| s[t]).collect();
            if !self.edges.contains(&sub) {
                ok = false;
            }
        });
        ok
    }
}

/// Enumerates all `C(n, k)` index combinations in lexicographic order.
pub(crate) fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n || k == 0 {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // Advance to the next combination.
        let mut i = k - 1;
        while idx[i] == i + n - k {
            if i == 0 {
                return;
            }
            i -= 1;
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Builds the compatibility hypergraph by running `test` on every n-subset.
pub fn build_compatibility_graph(
    num_nodes: usize,
    n: usize,
    mut test: impl FnMut(&[usize]) -> bool,
) -> Result<CompatibilityHypergraph> {
    let mut g = CompatibilityHypergraph::new(num_nodes, n)?;
    for_each_combination(num_nodes, n, |subset| {
        if test(subset) {
            g.edges.insert(subset.to_vec());
        }
    });
    Ok(g)
}

/// Measurements fed to the pruning pipeline.
#[derive(Debug, Clone, Copy)]
pub enum Measurements<'a> {
    ThreeD(&'a [Vector3<f64>]),
    TwoD(&'a [Vector2<f64>]),
}

/// Compatibility invariant selecting the test family.
#[derive(Debug, Clone, Copy)]
pub enum Invariant<'a> {
    /// Pairwise distance test against precomputed convex-hull bounds.
    Pair3D { bounds: &'a PairBounds, beta: f64 },
    /// Triplet winding-order test against per-shape dictionaries.
    Triplet2D { dicts: &'a [WindingDictionary] },
}

/// Output of the pruning pipeline.
#[derive(Debug, Clone)]
pub struct RobinResult {
    /// Indices of measurements in the maximum (hyper)clique, ascending.
    pub survivors: Vec<usize>,
    /// Set when there were fewer measurements than the invariant arity; all
    /// indices are returned untested in that case.
    pub degenerate: bool,
}

/// Prunes outliers: builds the compatibility hypergraph for the chosen
/// invariant and returns the maximum (hyper)clique node set.
pub fn robin(meas: Measurements<'_>, invariant: Invariant<'_>) -> Result<RobinResult> {
    match (meas, invariant) {
        (Measurements::ThreeD(points), Invariant::Pair3D { bounds, beta }) => {
            if beta < 0.0 {
                return Err(Error::InvalidInput("beta must be >= 0".into()));
            }
            let n = points.len();
            if n < 2 {
                return Ok(RobinResult {
                    survivors: (0..n).collect(),
                    degenerate: true,
                });
            }
            if bounds.len() != n {
                return Err(Error::InvalidInput("bounds size mismatch".into()));
            }
            let g = build_compatibility_graph(n, 2, |s| {
                let (i, j) = (s[0], s[1]);
                test_pair_3d(
                    &points[i],
                    &points[j],
                    (bounds.bmin(i, j), bounds.bmax(i, j)),
                    beta,
                )
            })?;
            Ok(RobinResult {
                survivors: max_clique(&g)?,
                degenerate: false,
            })
        }
        (Measurements::TwoD(pixels), Invariant::Triplet2D { dicts }) => {
            let n = pixels.len();
            if n < 3 {
                return Ok(RobinResult {
                    survivors: (0..n).collect(),
                    degenerate: true,
                });
            }
            let g = build_compatibility_graph(n, 3, |s| {
                test_triplet_2d(
                    (s[0], s[1], s[2]),
                    &pixels[s[0]],
                    &pixels[s[1]],
                    &pixels[s[2]],
                    dicts,
                )
            })?;
            Ok(RobinResult {
                survivors: max_hyperclique(&g)?,
                degenerate: false,
            })
        }
        _ => Err(Error::InvalidInput(
            "measurement type does not match invariant".into(),
        )),
    }
}

#[cfg(test)]
mod tests;

//! Undirected graphs with the symmetric normalized adjacency.
//!
//! The normalized Laplacian `I - Ã` is never stored; it is applied as
//! `F - ÃF` so every Laplacian product costs exactly one SpMM.

use std::collections::HashSet;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::CsrMatrix;

/// Immutable undirected graph without self-loops.
///
/// `adjacency` is symmetric, `degrees[i]` is its row sum and `norm_adj`
/// holds `A_ij / sqrt(d_i d_j)`. Rows of isolated nodes are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph<T> {
    n: usize,
    adjacency: CsrMatrix<T>,
    degrees: Vec<T>,
    norm_adj: CsrMatrix<T>,
}

/// Index maps produced by [`SparseGraph::induce_subgraph`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRemap {
    pub old_to_new: Vec<Option<usize>>,
    pub new_to_old: Vec<usize>,
}

impl<T: Real> SparseGraph<T> {
    /// Build from unweighted undirected edges. Repeated pairs (in either
    /// orientation) collapse to one edge of weight 1 and self-loops are dropped.
    pub fn from_edges(edges: &[(usize, usize)], n: usize) -> Result<Self> {
        let weighted: Vec<_> = edges.iter().map(|&(u, v)| (u, v, T::one())).collect();
        Self::from_weighted_edges(&weighted, n)
    }

    /// Build from weighted undirected edges. Weights must be positive and
    /// finite; for a repeated pair the first occurrence wins.
    pub fn from_weighted_edges(edges: &[(usize, usize, T)], n: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        let mut triplets = Vec::with_capacity(2 * edges.len());
        for (k, &(u, v, w)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::Input(format!(
                    "edge {k} ({u}, {v}) has an endpoint outside 0..{n}"
                )));
            }
            if !(w.is_finite() && w > T::zero()) {
                return Err(Error::Input(format!("edge {k} ({u}, {v}) has non-positive weight {w}")));
            }
            if u == v || !seen.insert((u.min(v), u.max(v))) {
                continue;
            }
            triplets.push((u, v, w));
            triplets.push((v, u, w));
        }
        let adjacency = CsrMatrix::from_triplets(n, n, triplets)?;
        Self::from_adjacency(adjacency)
    }

    /// Wrap a symmetric adjacency with an empty diagonal.
    pub fn from_adjacency(adjacency: CsrMatrix<T>) -> Result<Self> {
        let n = adjacency.n_rows();
        if adjacency.n_cols() != n {
            return Err(Error::Input(format!(
                "adjacency is {}x{}, not square",
                n,
                adjacency.n_cols()
            )));
        }
        if !adjacency.is_symmetric() {
            return Err(Error::Input("adjacency is not symmetric".into()));
        }
        if (0..n).any(|i| adjacency.get(i, i) != T::zero()) {
            return Err(Error::Input("adjacency has self-loops".into()));
        }
        let degrees: Vec<T> = (0..n).map(|i| adjacency.row(i).1.iter().copied().sum()).collect();
        let inv_sqrt: Vec<T> = degrees
            .iter()
            .map(|&d| if d > T::zero() { T::one() / d.sqrt() } else { T::zero() })
            .collect();
        let norm_adj = adjacency.map_values(|i, j, a| a * inv_sqrt[i] * inv_sqrt[j])?;
        Ok(SparseGraph {
            n,
            adjacency,
            degrees,
            norm_adj,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Undirected edge count.
    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn adjacency(&self) -> &CsrMatrix<T> {
        &self.adjacency
    }

    pub fn degrees(&self) -> &[T] {
        &self.degrees
    }

    pub fn norm_adj(&self) -> &CsrMatrix<T> {
        &self.norm_adj
    }

    /// Each undirected edge once as `(u, v, w)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.adjacency.iter().filter(|&(i, j, _)| i < j)
    }

    /// `ÃF`.
    pub fn propagate(&self, f: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.norm_adj.spmm(f)
    }

    /// `(I - Ã)F`.
    pub fn laplacian_apply(&self, f: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        let af = self.propagate(f)?;
        f.sub(&af)
    }

    /// `tr(Fᵀ(I - Ã)F)` computed as `tr(FᵀF) - tr(FᵀÃF)`.
    pub fn laplacian_quadratic(&self, f: &DenseMatrix<T>) -> Result<T> {
        if f.rows() != self.n {
            return Err(Error::shape(
                "laplacian_quadratic",
                format!("{} rows", self.n),
                format!("{} rows", f.rows()),
            ));
        }
        let af = self.propagate(f)?;
        Ok(f.frobenius_sq() - f.dot(&af)?)
    }

    /// Subgraph on `keep` (duplicates ignored) with degrees recomputed inside
    /// the subgraph. New indices follow ascending old index order.
    pub fn induce_subgraph(&self, keep: &[usize]) -> Result<(Self, NodeRemap)> {
        if keep.is_empty() {
            return Err(Error::Input("induce_subgraph needs at least one node".into()));
        }
        let mut old_to_new = vec![None; self.n];
        for &v in keep {
            if v >= self.n {
                return Err(Error::Input(format!("node {v} outside 0..{}", self.n)));
            }
            old_to_new[v] = Some(0);
        }
        let mut new_to_old = Vec::new();
        for (v, slot) in old_to_new.iter_mut().enumerate() {
            if slot.is_some() {
                *slot = Some(new_to_old.len());
                new_to_old.push(v);
            }
        }
        let mut triplets = Vec::new();
        for (i, j, w) in self.adjacency.iter() {
            if let (Some(a), Some(b)) = (old_to_new[i], old_to_new[j]) {
                triplets.push((a, b, w));
            }
        }
        let sub = CsrMatrix::from_triplets(new_to_old.len(), new_to_old.len(), triplets)?;
        Ok((Self::from_adjacency(sub)?, NodeRemap { old_to_new, new_to_old }))
    }

    /// Relabel nodes so old node `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let triplets = self.adjacency.iter().map(|(i, j, w)| (perm[i], perm[j], w)).collect();
        Self::from_adjacency(CsrMatrix::from_triplets(self.n, self.n, triplets)?)
    }

    /// Power-iteration estimate of the spectral radius of `Ã`.
    pub fn spectral_radius_estimate(&self, iters: usize) -> Result<T> {
        if self.n == 0 {
            return Ok(T::zero());
        }
        // Deterministic start vector with no special alignment to the graph.
        let mut v = DenseMatrix::from_fn(self.n, 1, |i, _| T::lit(1.0 + ((i * 7919) % 97) as f64 / 97.0));
        let mut radius = T::zero();
        for _ in 0..iters {
            let norm = v.frobenius_sq().sqrt();
            if norm == T::zero() {
                return Ok(T::zero());
            }
            v = v.scale(T::one() / norm);
            let w = self.propagate(&v)?;
            radius = w.frobenius_sq().sqrt();
            v = w;
        }
        Ok(radius)
    }

    pub fn cast<U: Real>(&self) -> SparseGraph<U> {
        SparseGraph {
            n: self.n,
            adjacency: self.adjacency.cast(),
            degrees: self.degrees.iter().map(|&d| U::lit(d.to_f64_lossless())).collect(),
            norm_adj: self.norm_adj.cast(),
        }
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut hit = vec![false; n];
    if perm.len() != n {
        return Err(Error::Input(format!("permutation has {} entries for {n} nodes", perm.len())));
    }
    for &p in perm {
        if p >= n || std::mem::replace(&mut hit[p], true) {
            return Err(Error::Input("not a permutation".into()));
        }
    }
    Ok(())
}

/// Parsed edge list. `weighted` is true when any line carried a third column.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList<T> {
    pub edges: Vec<(usize, usize, T)>,
    pub weighted: bool,
}

impl<T: Real> EdgeList<T> {
    /// One plus the largest endpoint, or 0 for an empty list.
    pub fn min_nodes(&self) -> usize {
        self.edges.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0)
    }
}

/// Parse `u<TAB>v[<TAB>w]` lines; `#` starts a comment and blank lines are
/// skipped. Any run of whitespace is accepted as a separator.
pub fn parse_edge_list<T: Real>(text: &str, origin: &Path) -> Result<EdgeList<T>> {
    let mut edges = Vec::new();
    let mut weighted = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(err(format!("expected 2 or 3 fields, found {}", fields.len())));
        }
        let node = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad node id `{s}`")));
        let u = node(fields[0])?;
        let v = node(fields[1])?;
        let w = match fields.get(2) {
            Some(s) => {
                weighted = true;
                let w: f64 = s.parse().map_err(|_| err(format!("bad weight `{s}`")))?;
                if !(w.is_finite() && w > 0.0) {
                    return Err(err(format!("weight must be positive, got {w}")));
                }
                T::lit(w)
            }
            None => T::one(),
        };
        edges.push((u, v, w));
    }
    Ok(EdgeList { edges, weighted })
}

pub fn read_edge_list<T: Real>(path: &Path) -> Result<EdgeList<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path)
}

/// Write each undirected edge once. Weights are written only when some
/// edge weight differs from 1.
pub fn write_edge_list<T: Real>(graph: &SparseGraph<T>, path: &Path) -> Result<()> {
    let weighted = graph.edges().any(|(_, _, w)| w != T::one());
    let mut out = String::new();
    for (u, v, w) in graph.edges() {
        if weighted {
            out.push_str(&format!("{u}\t{v}\t{:e}\n", w.to_f64_lossless()));
        } else {
            out.push_str(&format!("{u}\t{v}\n"));
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type G = SparseGraph<f64>;

    fn path3() -> G {
        G::from_edges(&[(0, 1), (1, 2)], 3).unwrap()
    }

    #[test]
    fn single_edge_normalizes_to_swap() {
        let g = G::from_edges(&[(0, 1)], 2).unwrap();
        assert_eq!(g.norm_adj().to_dense(), DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
    }

    #[test]
    fn path_normalization_by_hand() {
        let g = path3();
        let h = 1.0 / 2f64.sqrt();
        assert!((g.norm_adj().get(0, 1) - h).abs() < 1e-15);
        assert!((g.norm_adj().get(1, 2) - h).abs() < 1e-15);
        assert_eq!(g.norm_adj().get(0, 2), 0.0);
        assert!((g.norm_adj().get(0, 1) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn isolated_node_has_zero_row() {
        let g = G::from_edges(&[], 1).unwrap();
        assert_eq!(g.norm_adj().nnz(), 0);
        assert_eq!(g.degrees(), &[0.0]);
    }

    #[test]
    fn duplicates_and_self_loops_are_dropped() {
        let g = G::from_edges(&[(0, 1), (1, 0), (0, 1), (2, 2)], 3).unwrap();
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.degrees(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn out_of_range_endpoint_is_input_error() {
        assert!(matches!(G::from_edges(&[(0, 3)], 3), Err(Error::Input(_))));
    }

    #[test]
    fn quadratic_on_path_indicator() {
        let f = DenseMatrix::from_rows(&[[1.0], [0.0], [0.0]]).unwrap();
        assert!((path3().laplacian_quadratic(&f).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn induced_subgraphs() {
        let g = path3();
        let (sub, remap) = g.induce_subgraph(&[0, 1]).unwrap();
        assert_eq!(sub.norm_adj().to_dense(), DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
        assert_eq!(remap.old_to_new, vec![Some(0), Some(1), None]);
        let (all, _) = g.induce_subgraph(&[2, 0, 1]).unwrap();
        assert_eq!(all.norm_adj(), g.norm_adj());
        let (single, _) = g.induce_subgraph(&[0]).unwrap();
        assert_eq!((single.n(), single.norm_adj().nnz()), (1, 0));
        assert!(g.induce_subgraph(&[]).is_err());
    }

    #[test]
    fn edge_list_errors_name_the_line() {
        let text = "# header\n0\t1\n1 x\n";
        let err = parse_edge_list::<f64>(text, Path::new("e.tsv")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn edge_list_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.tsv");
        let g = G::from_weighted_edges(&[(0, 1, 2.5), (1, 3, 1.0)], 4).unwrap();
        write_edge_list(&g, &p).unwrap();
        let back = read_edge_list::<f64>(&p).unwrap();
        assert!(back.weighted);
        assert_eq!(G::from_weighted_edges(&back.edges, 4).unwrap(), g);
    }

    fn random_graph() -> impl Strategy<Value = (G, Vec<f64>)> {
        (2usize..14).prop_flat_map(|n| {
            (
                prop::collection::vec((0..n, 0..n), 0..3 * n),
                prop::collection::vec(-2.0f64..2.0, n * 2),
            )
                .prop_map(move |(e, f)| (G::from_edges(&e, n).unwrap(), f))
        })
    }

    proptest! {
        #[test]
        fn sqrt_degree_vector_is_fixed((g, _) in random_graph()) {
            let v = DenseMatrix::from_fn(g.n(), 1, |i, _| g.degrees()[i].sqrt());
            let av = g.propagate(&v).unwrap();
            prop_assert!(av.max_abs_diff(&v).unwrap() <= 1e-10);
            prop_assert!(g.spectral_radius_estimate(200).unwrap() <= 1.0 + 1e-9);
        }

        #[test]
        fn quadratic_matches_edge_sum_and_permutes((g, vals) in random_graph(), seed in 0u64..1000) {
            let n = g.n();
            let f = DenseMatrix::from_vec(n, 2, vals).unwrap();
            let q = g.laplacian_quadratic(&f).unwrap();
            let d = g.degrees();
            let mut want = 0.0;
            for (i, j, _) in g.edges() {
                for c in 0..2 {
                    let diff = f.get(i, c) / d[i].sqrt() - f.get(j, c) / d[j].sqrt();
                    want += diff * diff;
                }
            }
            // Isolated rows contribute ‖F_i‖² through the identity part.
            for i in 0..n {
                if d[i] == 0.0 {
                    want += f.row(i).iter().map(|x| x * x).sum::<f64>();
                }
            }
            prop_assert!(q >= -1e-12);
            prop_assert!((q - want).abs() <= 1e-10 * (1.0 + want.abs()));

            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let gp = g.permute(&perm).unwrap();
            let mut fp = DenseMatrix::zeros(n, 2);
            for i in 0..n {
                fp.row_mut(perm[i]).copy_from_slice(f.row(i));
            }
            let qp = gp.laplacian_quadratic(&fp).unwrap();
            prop_assert!((q - qp).abs() <= 1e-12 * (1.0 + q.abs()));
        }
    }
}

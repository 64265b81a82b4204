use serde::Serialize;

use super::budget::max_edges;
use super::dtw::dtw_distance;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

/// Binary symmetric graph over feature nodes for one snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotGraph {
    /// 1-based snapshot index.
    pub index: usize,
    /// `N × N`, entries 0 or 1, zero diagonal.
    pub adjacency: Tensor,
    pub edges: Vec<Edge>,
    pub degree_distribution: Vec<f64>,
}

impl SnapshotGraph {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn from_edges(index: usize, n: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut adj = vec![0.0; n * n];
        for e in &edges {
            if e.a == e.b || e.a >= n || e.b >= n {
                return Err(Error::InvalidArgument(format!("bad edge ({}, {}) for {n} nodes", e.a, e.b)));
            }
            adj[e.a * n + e.b] = 1.0;
            adj[e.b * n + e.a] = 1.0;
        }
        let adjacency = Tensor::matrix(n, n, adj)?;
        let degree_distribution = degree_distribution(&adjacency);
        Ok(Self {
            index,
            adjacency,
            edges,
            degree_distribution,
        })
    }
}

/// Columns `(s−1)·δ .. s·δ` of an `N × W` window, for 1-based `s`.
pub fn snapshot_segment(window: &Tensor, s: usize, n_snapshots: usize) -> Result<Tensor> {
    let w = window.cols();
    if n_snapshots == 0 || w % n_snapshots != 0 {
        return Err(Error::InvalidArgument(format!("{n_snapshots} snapshots do not divide window {w}")));
    }
    if s == 0 || s > n_snapshots {
        return Err(Error::InvalidArgument(format!("snapshot {s} outside 1..={n_snapshots}")));
    }
    let delta = w / n_snapshots;
    let n = window.rows();
    let mut out = Vec::with_capacity(n * delta);
    for i in 0..n {
        out.extend_from_slice(&window.row(i)[(s - 1) * delta..s * delta]);
    }
    Tensor::matrix(n, delta, out)
}

/// All pairwise DTW distances between node rows, in lexicographic `(i, j)` order.
pub fn pairwise_dtw(segment: &Tensor, band: Option<usize>) -> Result<Vec<Edge>> {
    let n = segment.rows();
    let mut out = Vec::with_capacity(max_edges(n));
    for a in 0..n {
        for b in a + 1..n {
            out.push(Edge {
                a,
                b,
                distance: dtw_distance(segment.row(a), segment.row(b), band)?,
            });
        }
    }
    Ok(out)
}

/// Keeps the `k` largest-distance pairs; equal distances keep the
/// lexicographically smaller pair.
pub fn top_k_edges(mut pairs: Vec<Edge>, k: usize) -> Vec<Edge> {
    pairs.sort_by(|x, y| y.distance.total_cmp(&x.distance).then((x.a, x.b).cmp(&(y.a, y.b))));
    pairs.truncate(k);
    pairs.sort_by_key(|e| (e.a, e.b));
    pairs
}

pub fn build_snapshot_graph(
    window: &Tensor,
    s: usize,
    n_snapshots: usize,
    k: usize,
    band: Option<usize>,
) -> Result<SnapshotGraph> {
    let n = window.rows();
    if k == 0 || k > max_edges(n) {
        return Err(Error::InvalidArgument(format!("edge budget {k} outside 1..={}", max_edges(n))));
    }
    let seg = snapshot_segment(window, s, n_snapshots)?;
    let edges = top_k_edges(pairwise_dtw(&seg, band)?, k);
    SnapshotGraph::from_edges(s, n, edges)
}

/// Entry `k` is the fraction of nodes with degree `k`, for `k = 0..N−1`.
pub fn degree_distribution(adjacency: &Tensor) -> Vec<f64> {
    let n = adjacency.rows();
    let mut dist = vec![0.0; n];
    for i in 0..n {
        let deg = adjacency.row(i).iter().filter(|&&v| v != 0.0).count();
        dist[deg.min(n - 1)] += 1.0;
    }
    dist.iter_mut().for_each(|v| *v /= n as f64);
    dist
}

/// Symmetric KL divergence in nats after adding `eps` to every entry and renormalizing.
pub fn sym_kl(da: &[f64], db: &[f64], eps: f64) -> Result<f64> {
    if da.len() != db.len() || da.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "distribution lengths {} and {} differ",
            da.len(),
            db.len()
        )));
    }
    for d in [da, db] {
        let s: f64 = d.iter().sum();
        if d.iter().any(|&v| v < 0.0 || !v.is_finite()) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("sym_kl inputs must be probability vectors".into()));
        }
    }
    let smooth = |d: &[f64]| {
        let total: f64 = d.iter().map(|v| v + eps).sum();
        d.iter().map(|v| (v + eps) / total).collect::<Vec<f64>>()
    };
    let (a, b) = (smooth(da), smooth(db));
    let mut total = 0.0;
    for (&x, &y) in a.iter().zip(&b) {
        // x ln(x/y) + y ln(y/x) = (hi − lo) ln(hi/lo); ordering each pair
        // makes the sum bitwise symmetric in its arguments.
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        total += (hi - lo) * (hi / lo).ln();
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergentPair {
    /// 1-based snapshot indices with `p < q`.
    pub p: usize,
    pub q: usize,
    pub divergence: f64,
}

/// The snapshot pair with the largest symmetric KL between degree
/// distributions, plus every pair's divergence in lexicographic order.
pub fn select_divergent_pair(graphs: &[SnapshotGraph], eps: f64) -> Result<(DivergentPair, Vec<DivergentPair>)> {
    if graphs.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 snapshots, got {}", graphs.len())));
    }
    let mut all = Vec::new();
    for i in 0..graphs.len() {
        for j in i + 1..graphs.len() {
            all.push(DivergentPair {
                p: i + 1,
                q: j + 1,
                divergence: sym_kl(&graphs[i].degree_distribution, &graphs[j].degree_distribution, eps)?,
            });
        }
    }
    let mut best = all[0];
    for c in &all[1..] {
        if c.divergence > best.divergence {
            best = *c;
        }
    }
    Ok((best, all))
}

/// Entrywise mean adjacency of every snapshot except `p` and `q` (1-based).
pub fn anchor_graph(graphs: &[SnapshotGraph], p: usize, q: usize) -> Result<Tensor> {
    if graphs.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 snapshots, got {}", graphs.len())));
    }
    if p == q || p == 0 || q == 0 || p > graphs.len() || q > graphs.len() {
        return Err(Error::InvalidArgument(format!("invalid snapshot pair ({p}, {q})")));
    }
    let n = graphs[0].n_nodes();
    let mut acc = vec![0.0; n * n];
    for g in graphs.iter().filter(|g| g.index != p && g.index != q) {
        for (a, v) in acc.iter_mut().zip(g.adjacency.data()) {
            *a += v;
        }
    }
    let m = (graphs.len() - 2) as f64;
    acc.iter_mut().for_each(|v| *v /= m);
    Tensor::matrix(n, n, acc)
}

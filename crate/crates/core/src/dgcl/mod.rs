//! Dynamic graph contrastive learning over DTW snapshot graphs.

mod budget;
mod dtw;
mod gcn;
mod snapshot;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use budget::{edge_budget, edge_density, expected_degree, max_edges, PowerLawBudget};
pub use dtw::dtw_distance;
pub use gcn::{diagonal_log_softmax, graph_contrastive_score, normalized_adjacency, GcnEncoder};
pub use snapshot::{
    anchor_graph, build_snapshot_graph, degree_distribution, pairwise_dtw, select_divergent_pair, snapshot_segment,
    sym_kl, top_k_edges, DivergentPair, Edge, SnapshotGraph,
};

use crate::diffcore::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamStore};

/// Number of per-node segment statistics used as GCN input.
pub const SEGMENT_STATS: usize = 6;

/// Where GCN node features come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GcnFeatures {
    /// Mean, std, min, max, first and last value of each node's segment (constants).
    #[default]
    SegmentStats,
    /// Temporal-pass activations averaged over the snapshot's time span, so the
    /// contrastive term also shapes the embedder.
    Embedding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgclConfig {
    pub n_snapshots: usize,
    pub temperature: f64,
    pub gamma: f64,
    pub override_edges: Option<usize>,
    pub band: Option<usize>,
    pub kl_epsilon: f64,
    pub gcn_hidden: usize,
    pub gcn_out: usize,
    pub features: GcnFeatures,
}

impl Default for DgclConfig {
    fn default() -> Self {
        Self {
            n_snapshots: 10,
            temperature: 0.1,
            gamma: 3.0,
            override_edges: None,
            band: None,
            kl_epsilon: 1e-8,
            gcn_hidden: 32,
            gcn_out: 32,
            features: GcnFeatures::SegmentStats,
        }
    }
}

impl DgclConfig {
    pub fn validate(&self, window: usize) -> Result<()> {
        if self.n_snapshots < 3 {
            return Err(Error::Config(format!("need at least 3 snapshots, got {}", self.n_snapshots)));
        }
        if window % self.n_snapshots != 0 {
            return Err(Error::Config(format!(
                "{} snapshots do not divide window {window}",
                self.n_snapshots
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if self.band == Some(0) {
            return Err(Error::Config("DTW band must be at least 1".into()));
        }
        if !(self.kl_epsilon > 0.0) {
            return Err(Error::Config("KL smoothing must be positive".into()));
        }
        if self.gcn_hidden == 0 || self.gcn_out == 0 {
            return Err(Error::Config("GCN widths must be positive".into()));
        }
        Ok(())
    }

    pub fn budget(&self, n_nodes: usize) -> PowerLawBudget {
        PowerLawBudget {
            gamma: self.gamma,
            n_nodes,
            override_edges: self.override_edges,
        }
    }

    pub fn encoder(&self, embed_channels: usize) -> GcnEncoder {
        let in_dim = match self.features {
            GcnFeatures::SegmentStats => SEGMENT_STATS,
            GcnFeatures::Embedding => embed_channels,
        };
        GcnEncoder::new("dgcl.gcn", in_dim, self.gcn_hidden, self.gcn_out)
    }

    pub fn declare(&self, store: &mut ParamStore, embed_channels: usize, seed: u64) -> Result<()> {
        self.encoder(embed_channels).declare(store, seed)
    }
}

/// Per-node `(mean, std, min, max, first, last)` of a segment `N × δ`.
pub fn segment_features(segment: &Tensor) -> Tensor {
    let (n, d) = (segment.rows(), segment.cols());
    let mut out = Vec::with_capacity(n * SEGMENT_STATS);
    for i in 0..n {
        let row = segment.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.extend_from_slice(&[mean, var.sqrt(), lo, hi, row[0], row[d - 1]]);
    }
    Tensor::from_parts(vec![n, SEGMENT_STATS], out)
}

/// The data-dependent, non-differentiable part of the regularizer for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub budget: usize,
    pub graphs: Vec<SnapshotGraph>,
    pub pair: DivergentPair,
    /// Divergence of every unordered snapshot pair.
    pub divergences: Vec<DivergentPair>,
    pub anchor: Tensor,
    pub a_hat_p: Tensor,
    pub a_hat_q: Tensor,
    pub a_hat_anchor: Tensor,
    /// Segment statistics of snapshot `p`, snapshot `q` and the anchor mean.
    pub features_p: Tensor,
    pub features_q: Tensor,
    pub features_anchor: Tensor,
}

pub fn build_topology(window: &Tensor, cfg: &DgclConfig) -> Result<Topology> {
    let (n, w) = (window.rows(), window.cols());
    cfg.validate(w)?;
    let k = cfg.budget(n).edges()?;
    let s = cfg.n_snapshots;
    let mut graphs = Vec::with_capacity(s);
    let mut stats = Vec::with_capacity(s);
    for idx in 1..=s {
        let seg = snapshot_segment(window, idx, s)?;
        stats.push(segment_features(&seg));
        graphs.push(SnapshotGraph::from_edges(idx, n, top_k_edges(pairwise_dtw(&seg, cfg.band)?, k))?);
    }
    let (pair, divergences) = select_divergent_pair(&graphs, cfg.kl_epsilon)?;
    let anchor = anchor_graph(&graphs, pair.p, pair.q)?;
    let mut anchor_stats = vec![0.0; n * SEGMENT_STATS];
    for (i, st) in stats.iter().enumerate() {
        if i + 1 != pair.p && i + 1 != pair.q {
            for (a, v) in anchor_stats.iter_mut().zip(st.data()) {
                *a += v / (s - 2) as f64;
            }
        }
    }
    Ok(Topology {
        budget: k,
        a_hat_p: normalized_adjacency(&graphs[pair.p - 1].adjacency)?,
        a_hat_q: normalized_adjacency(&graphs[pair.q - 1].adjacency)?,
        a_hat_anchor: normalized_adjacency(&anchor)?,
        features_p: stats[pair.p - 1].clone(),
        features_q: stats[pair.q - 1].clone(),
        features_anchor: Tensor::from_parts(vec![n, SEGMENT_STATS], anchor_stats),
        graphs,
        pair,
        divergences,
        anchor,
    })
}

/// Node features for `p`, `q` and the anchor from temporal activations `[N, C, W]`.
fn embedding_features(g: &mut Graph, seq_raw: NodeId, topo: &Topology, s: usize) -> Result<[NodeId; 3]> {
    let shape = g.value(seq_raw).shape().to_vec();
    let (n, c, w) = (shape[0], shape[1], shape[2]);
    let delta = w / s;
    let flat = g.reshape(seq_raw, &[n * c, w])?;
    let mut pick = |weights: Vec<f64>| -> Result<NodeId> {
        let sel = g.constant(Tensor::matrix(w, 1, weights)?);
        let v = g.matmul(flat, sel)?;
        g.reshape(v, &[n, c])
    };
    let span = |idx: usize| -> Vec<f64> {
        (0..w).map(|t| if t / delta + 1 == idx { 1.0 / delta as f64 } else { 0.0 }).collect()
    };
    let (p, q) = (topo.pair.p, topo.pair.q);
    let anchor: Vec<f64> = (0..w)
        .map(|t| {
            let idx = t / delta + 1;
            if idx == p || idx == q {
                0.0
            } else {
                1.0 / (delta * (s - 2)) as f64
            }
        })
        .collect();
    Ok([pick(span(p))?, pick(span(q))?, pick(anchor)?])
}

#[derive(Clone, Copy, Debug)]
pub struct DgclNodes {
    pub loss: NodeId,
    pub z_anchor: NodeId,
    pub z_p: NodeId,
    pub z_q: NodeId,
}

/// Contrastive score on a frozen topology. `seq_raw` is required when the
/// config takes node features from the embedder.
pub fn dgcl_loss(
    g: &mut Graph,
    p: &Bound,
    topo: &Topology,
    cfg: &DgclConfig,
    seq_raw: Option<NodeId>,
) -> Result<DgclNodes> {
    let [fp, fq, fa] = match cfg.features {
        GcnFeatures::SegmentStats => [
            g.constant(topo.features_p.clone()),
            g.constant(topo.features_q.clone()),
            g.constant(topo.features_anchor.clone()),
        ],
        GcnFeatures::Embedding => {
            let raw = seq_raw.ok_or_else(|| {
                Error::InvalidArgument("embedding features need the temporal activations".into())
            })?;
            embedding_features(g, raw, topo, cfg.n_snapshots)?
        }
    };
    let channels = g.value(fp).cols();
    let enc = cfg.encoder(channels);
    let z_p = enc.encode(g, p, &topo.a_hat_p, fp)?;
    let z_q = enc.encode(g, p, &topo.a_hat_q, fq)?;
    let z_anchor = enc.encode(g, p, &topo.a_hat_anchor, fa)?;
    let loss = graph_contrastive_score(g, z_anchor, z_p, z_q, cfg.temperature)?;
    Ok(DgclNodes {
        loss,
        z_anchor,
        z_p,
        z_q,
    })
}

pub const DIAGNOSTICS_HEADER: &str = "window,record,snapshot,a,b,value";

/// Appends one window's topology as CSV rows.
///
/// Record kinds: `edge` (nodes `a`,`b`, value = DTW distance), `degree`
/// (`a` = degree, value = fraction of nodes), `divergence` (snapshots `a`,`b`,
/// value = symmetric KL) and `pair` (the selected snapshots and divergence).
/// Snapshot indices are 1-based; empty cells are left blank.
pub fn write_diagnostics_rows<W: Write>(out: &mut W, window_start: usize, topo: &Topology) -> std::io::Result<()> {
    for g in &topo.graphs {
        for e in &g.edges {
            writeln!(out, "{window_start},edge,{},{},{},{}", g.index, e.a, e.b, e.distance)?;
        }
        for (k, v) in g.degree_distribution.iter().enumerate() {
            writeln!(out, "{window_start},degree,{},{k},,{v}", g.index)?;
        }
    }
    for d in &topo.divergences {
        writeln!(out, "{window_start},divergence,,{},{},{}", d.p, d.q, d.divergence)?;
    }
    writeln!(out, "{window_start},pair,,{},{},{}", topo.pair.p, topo.pair.q, topo.pair.divergence)
}

pub fn write_diagnostics(path: &Path, windows: &[(usize, Topology)]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{DIAGNOSTICS_HEADER}").expect("write to memory");
    for (start, topo) in windows {
        write_diagnostics_rows(&mut buf, *start, topo).expect("write to memory");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

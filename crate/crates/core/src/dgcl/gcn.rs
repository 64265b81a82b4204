use crate::diffcore::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::params::{Bound, Init, ParamStore};

/// `D̃^(−1/2) (A + I) D̃^(−1/2)` for a symmetric non-negative adjacency.
pub fn normalized_adjacency(adjacency: &Tensor) -> Result<Tensor> {
    if adjacency.ndim() != 2 || adjacency.rows() != adjacency.cols() {
        return Err(Error::shape("normalized_adjacency", format!("{:?} is not square", adjacency.shape())));
    }
    let n = adjacency.rows();
    if adjacency.data().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument("adjacency must be non-negative".into()));
    }
    let mut a = adjacency.data().to_vec();
    for i in 0..n {
        a[i * n + i] += 1.0;
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / a[i * n..(i + 1) * n].iter().sum::<f64>().sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Tensor::matrix(n, n, a)
}

/// Two-layer graph convolution `Â ReLU(Â X W₁) W₂` with unit-norm output rows.
#[derive(Clone, Debug)]
pub struct GcnEncoder {
    pub prefix: String,
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
}

impl GcnEncoder {
    pub fn new(prefix: &str, in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        Self {
            prefix: prefix.to_owned(),
            in_dim,
            hidden,
            out_dim,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn declare(&self, store: &mut ParamStore, seed: u64) -> Result<()> {
        store.declare(&self.name("w1"), &[self.in_dim, self.hidden], Init::FanIn(self.in_dim), seed)?;
        store.declare(&self.name("w2"), &[self.hidden, self.out_dim], Init::FanIn(self.hidden), seed)
    }

    /// `a_hat` is a precomputed normalized adjacency (held constant);
    /// `features` is `N × in_dim`.
    pub fn encode(&self, g: &mut Graph, p: &Bound, a_hat: &Tensor, features: NodeId) -> Result<NodeId> {
        let a = g.constant(a_hat.clone());
        let ax = g.matmul(a, features)?;
        let h = g.matmul(ax, p.id(&self.name("w1"))?)?;
        let h = g.relu(h)?;
        let ah = g.matmul(a, h)?;
        let z = g.matmul(ah, p.id(&self.name("w2"))?)?;
        g.normalize_rows(z)
    }
}

/// `mean_i log softmax_j(u_i · v_j / τ)` evaluated at `j = i`.
pub fn diagonal_log_softmax(g: &mut Graph, u: NodeId, v: NodeId, tau: f64) -> Result<NodeId> {
    let vt = g.transpose(v)?;
    let sim = g.matmul(u, vt)?;
    let sim = g.scale(sim, 1.0 / tau)?;
    let ls = g.log_softmax(sim, 1)?;
    let diag = g.diagonal(ls)?;
    g.mean(diag)
}

/// Anchor-positive score for both divergent snapshots minus the score between them.
pub fn graph_contrastive_score(g: &mut Graph, za: NodeId, zp: NodeId, zq: NodeId, tau: f64) -> Result<NodeId> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let shapes = [za, zp, zq].map(|z| g.value(z).shape().to_vec());
    if shapes[0].len() != 2 || shapes.iter().any(|s| *s != shapes[0]) {
        return Err(Error::shape("graph_contrastive_score", format!("embedding shapes {shapes:?}")));
    }
    let pa = diagonal_log_softmax(g, zp, za, tau)?;
    let qa = diagonal_log_softmax(g, zq, za, tau)?;
    let pq = diagonal_log_softmax(g, zp, zq, tau)?;
    let pos = g.add(pa, qa)?;
    g.sub(pos, pq)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_normalizes_to_identity() {
        let a = normalized_adjacency(&Tensor::zeros(&[3, 3])).unwrap();
        assert_eq!(a, Tensor::eye(3));
    }

    #[test]
    fn two_node_edge() {
        let a = normalized_adjacency(&Tensor::matrix(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap()).unwrap();
        assert!(a.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn zero_weights_give_zero_rows() {
        let mut store = ParamStore::new();
        let enc = GcnEncoder::new("gcn", 6, 4, 3);
        store.declare("gcn.w1", &[6, 4], Init::Zeros, 0).unwrap();
        store.declare("gcn.w2", &[4, 3], Init::Zeros, 0).unwrap();
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(Tensor::ones(&[5, 6]));
        let z = enc.encode(&mut g, &p, &Tensor::eye(5), x).unwrap();
        assert!(g.value(z).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singleton_batch_scores_zero() {
        let mut g = Graph::new();
        let z = [0.3, -0.2].map(|v| g.constant(Tensor::matrix(1, 2, vec![v, 1.0]).unwrap()));
        let s = graph_contrastive_score(&mut g, z[0], z[1], z[0], 0.1).unwrap();
        assert_eq!(g.value(s).item(), 0.0);
    }

    #[test]
    fn identical_rows_score_log_inverse_batch() {
        let mut g = Graph::new();
        let rows = Tensor::matrix(4, 2, vec![0.6, 0.8, 0.6, 0.8, 0.6, 0.8, 0.6, 0.8]).unwrap();
        let z = g.constant(rows);
        let s = graph_contrastive_score(&mut g, z, z, z, 0.1).unwrap();
        assert!((g.value(s).item() - (0.25f64).ln()).abs() < 1e-9);
    }
}

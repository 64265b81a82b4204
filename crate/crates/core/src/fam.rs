//! Frequency-aware attention mixer: positional encoding, per-channel spectral
//! top-K filtering, multi-head attention and a gated pair of feed-forward nets.

use serde::{Deserialize, Serialize};

use crate::diffcore::{spectral_bins, Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::params::{Bound, Init, ParamStore};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub spectral_k: usize,
    pub ffn_hidden: usize,
}

impl Default for FamConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            d_model: 128,
            n_heads: 4,
            spectral_k: 6,
            ffn_hidden: 256,
        }
    }
}

impl FamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.d_model == 0 || self.n_heads == 0 || self.ffn_hidden == 0 {
            return Err(Error::Config("FAM sizes must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        if self.d_model % 2 != 0 {
            return Err(Error::Config("d_model must be even for positional encoding".into()));
        }
        if self.spectral_k == 0 {
            return Err(Error::Config("spectral_k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Sinusoidal table `PE(pos, 2i) = sin(pos / 10000^(2i/d))`, `PE(pos, 2i+1) = cos(·)`.
pub fn positional_encoding(len: usize, d: usize) -> Result<Tensor> {
    if d % 2 != 0 {
        return Err(Error::InvalidArgument(format!("positional encoding needs an even width, got {d}")));
    }
    let mut out = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            out[pos * d + 2 * i] = angle.sin();
            out[pos * d + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::matrix(len, d, out)
}

pub fn positional_encode(g: &mut Graph, z: NodeId) -> Result<NodeId> {
    let shape = g.value(z).shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::shape("positional_encode", format!("expected L x d, got {shape:?}")));
    }
    let pe = g.constant(positional_encoding(shape[0], shape[1])?);
    g.add(z, pe)
}

/// Keep-mask over `[rows, bins]` retaining the `k` largest-magnitude bins of
/// each row; equal magnitudes prefer the lower bin index.
pub fn topk_mask(spectrum: &Tensor, k: usize) -> Result<Vec<bool>> {
    if spectrum.ndim() != 3 || spectrum.shape()[2] != 2 {
        return Err(Error::shape("topk_mask", format!("expected [rows, bins, 2], got {:?}", spectrum.shape())));
    }
    let (rows, bins) = (spectrum.shape()[0], spectrum.shape()[1]);
    if k == 0 || k > bins {
        return Err(Error::InvalidArgument(format!("spectral k = {k} outside 1..={bins}")));
    }
    let d = spectrum.data();
    let mut mask = vec![false; rows * bins];
    let mut order: Vec<usize> = Vec::with_capacity(bins);
    for r in 0..rows {
        let mag = |b: usize| d[(r * bins + b) * 2].hypot(d[(r * bins + b) * 2 + 1]);
        order.clear();
        order.extend(0..bins);
        order.sort_by(|&a, &b| mag(b).total_cmp(&mag(a)).then(a.cmp(&b)));
        for &b in &order[..k] {
            mask[r * bins + b] = true;
        }
    }
    Ok(mask)
}

/// Hard top-`k` spectral filter along the sequence axis of `z` (`L × d`), per channel.
pub fn spectral_topk_filter(g: &mut Graph, z: NodeId, k: usize) -> Result<NodeId> {
    let shape = g.value(z).shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::shape("spectral_topk_filter", format!("expected L x d, got {shape:?}")));
    }
    let len = shape[0];
    if k == 0 || k > spectral_bins(len) {
        return Err(Error::InvalidArgument(format!(
            "spectral k = {k} outside 1..={} for length {len}",
            spectral_bins(len)
        )));
    }
    let channels = g.transpose(z)?;
    let spec = g.rfft(channels)?;
    let mask = topk_mask(g.value(spec), k)?;
    let kept = g.mask_bins(spec, mask)?;
    let back = g.irfft(kept, len)?;
    g.transpose(back)
}

pub struct AttentionOutput {
    pub out: NodeId,
    /// Per-head `L × L` attention weights.
    pub weights: Vec<NodeId>,
}

pub struct FamOutput {
    pub out: NodeId,
    /// Filtered input of each layer.
    pub filtered: Vec<NodeId>,
    /// Attention weights, indexed `[layer][head]`.
    pub attention: Vec<Vec<NodeId>>,
}

#[derive(Clone, Debug)]
pub struct Fam {
    pub prefix: String,
    pub d_in: usize,
    pub cfg: FamConfig,
}

impl Fam {
    pub fn new(prefix: &str, d_in: usize, cfg: &FamConfig) -> Self {
        Self {
            prefix: prefix.to_owned(),
            d_in,
            cfg: cfg.clone(),
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn declare(&self, store: &mut ParamStore, seed: u64) -> Result<()> {
        self.cfg.validate()?;
        let (d, dk, hid) = (self.cfg.d_model, self.cfg.head_dim(), self.cfg.ffn_hidden);
        store.declare(&self.name("in.w"), &[self.d_in, d], Init::FanIn(self.d_in), seed)?;
        store.declare(&self.name("in.b"), &[d], Init::Zeros, seed)?;
        for l in 0..self.cfg.n_layers {
            for h in 0..self.cfg.n_heads {
                for m in ["wq", "wk", "wv"] {
                    store.declare(&self.name(&format!("l{l}.h{h}.{m}")), &[d, dk], Init::FanIn(d), seed)?;
                }
            }
            store.declare(&self.name(&format!("l{l}.wo")), &[d, d], Init::FanIn(d), seed)?;
            store.declare(&self.name(&format!("l{l}.ln1.gain")), &[d], Init::Ones, seed)?;
            store.declare(&self.name(&format!("l{l}.ln1.bias")), &[d], Init::Zeros, seed)?;
            for f in ["ffn1", "ffn2"] {
                store.declare(&self.name(&format!("l{l}.{f}.w1")), &[d, hid], Init::FanIn(d), seed)?;
                store.declare(&self.name(&format!("l{l}.{f}.b1")), &[hid], Init::Zeros, seed)?;
                store.declare(&self.name(&format!("l{l}.{f}.w2")), &[hid, d], Init::FanIn(hid), seed)?;
                store.declare(&self.name(&format!("l{l}.{f}.b2")), &[d], Init::Zeros, seed)?;
            }
            store.declare(&self.name(&format!("l{l}.wg")), &[d, d], Init::FanIn(d), seed)?;
            store.declare(&self.name(&format!("l{l}.ln2.gain")), &[d], Init::Ones, seed)?;
            store.declare(&self.name(&format!("l{l}.ln2.bias")), &[d], Init::Zeros, seed)?;
        }
        Ok(())
    }

    /// The `k` actually used for sequences of length `len`: the configured
    /// value clamped to the number of available real-FFT bins.
    pub fn effective_k(&self, len: usize) -> usize {
        self.cfg.spectral_k.min(spectral_bins(len))
    }

    /// `Concat_h(softmax(Q_h K_hᵀ / sqrt(d_k)) V_h) W^O` for layer `l`.
    pub fn multi_head_attention(&self, g: &mut Graph, p: &Bound, l: usize, h_in: NodeId) -> Result<AttentionOutput> {
        let scale = 1.0 / (self.cfg.head_dim() as f64).sqrt();
        let mut heads = Vec::with_capacity(self.cfg.n_heads);
        let mut weights = Vec::with_capacity(self.cfg.n_heads);
        for h in 0..self.cfg.n_heads {
            let proj = |g: &mut Graph, m: &str| -> Result<NodeId> {
                let w = p.id(&self.name(&format!("l{l}.h{h}.{m}")))?;
                g.matmul(h_in, w)
            };
            let q = proj(g, "wq")?;
            let k = proj(g, "wk")?;
            let v = proj(g, "wv")?;
            let kt = g.transpose(k)?;
            let scores = g.matmul(q, kt)?;
            let scores = g.scale(scores, scale)?;
            let a = g.softmax(scores, 1)?;
            weights.push(a);
            heads.push(g.matmul(a, v)?);
        }
        let cat = g.concat(&heads, 1)?;
        let out = g.matmul(cat, p.id(&self.name(&format!("l{l}.wo")))?)?;
        Ok(AttentionOutput { out, weights })
    }

    fn ffn(&self, g: &mut Graph, p: &Bound, l: usize, which: &str, x: NodeId) -> Result<NodeId> {
        let id = |part: &str| p.id(&self.name(&format!("l{l}.{which}.{part}")));
        let hidden = g.linear(x, id("w1")?, id("b1")?)?;
        let hidden = g.relu(hidden)?;
        g.linear(hidden, id("w2")?, id("b2")?)
    }

    /// `g ⊙ FFN₁(x) + (1 − g) ⊙ FFN₂(x) + x` with `g = σ(W_g(FFN₁ + FFN₂))`.
    /// Returns the sum before layer normalization, and the gate.
    pub fn gated_ffn_combine(&self, g: &mut Graph, p: &Bound, l: usize, x: NodeId) -> Result<(NodeId, NodeId)> {
        let f1 = self.ffn(g, p, l, "ffn1", x)?;
        let f2 = self.ffn(g, p, l, "ffn2", x)?;
        let (sum, gate) = gated_sum(g, f1, f2, p.id(&self.name(&format!("l{l}.wg")))?)?;
        Ok((g.add(sum, x)?, gate))
    }

    pub fn layer(&self, g: &mut Graph, p: &Bound, l: usize, x: NodeId) -> Result<(NodeId, NodeId, Vec<NodeId>)> {
        let len = g.value(x).rows();
        let filtered = spectral_topk_filter(g, x, self.effective_k(len))?;
        let attn = self.multi_head_attention(g, p, l, filtered)?;
        let res = g.add(filtered, attn.out)?;
        let ln = |g: &mut Graph, which: &str, v: NodeId| -> Result<NodeId> {
            let gain = p.id(&self.name(&format!("l{l}.{which}.gain")))?;
            let bias = p.id(&self.name(&format!("l{l}.{which}.bias")))?;
            g.layer_norm(v, gain, bias, LAYER_NORM_EPS)
        };
        let attn_out = ln(g, "ln1", res)?;
        let (combined, _) = self.gated_ffn_combine(g, p, l, attn_out)?;
        let out = ln(g, "ln2", combined)?;
        Ok((out, filtered, attn.weights))
    }

    /// `z`: `L × d_in`. Returns `L × d_model`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, z: NodeId) -> Result<FamOutput> {
        let shape = g.value(z).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.d_in {
            return Err(Error::shape("fam_forward", format!("input {shape:?}, expected L x {}", self.d_in)));
        }
        let h = g.linear(z, p.id(&self.name("in.w"))?, p.id(&self.name("in.b"))?)?;
        let mut h = positional_encode(g, h)?;
        let mut filtered = Vec::new();
        let mut attention = Vec::new();
        for l in 0..self.cfg.n_layers {
            let (out, f, a) = self.layer(g, p, l, h)?;
            filtered.push(f);
            attention.push(a);
            h = out;
        }
        Ok(FamOutput {
            out: h,
            filtered,
            attention,
        })
    }
}

/// `(g ⊙ a + (1 − g) ⊙ b, g)` with `g = σ((a + b) W_g)`.
pub fn gated_sum(g: &mut Graph, a: NodeId, b: NodeId, wg: NodeId) -> Result<(NodeId, NodeId)> {
    let s = g.add(a, b)?;
    let pre = g.matmul(s, wg)?;
    let gate = g.sigmoid(pre)?;
    // g ⊙ a + (1 − g) ⊙ b = b + g ⊙ (a − b)
    let diff = g.sub(a, b)?;
    let scaled = g.mul(gate, diff)?;
    Ok((g.add(b, scaled)?, gate))
}

//! Multi-perspective embedder: temporal and attribute dilated causal
//! convolution stacks plus a graph-attention view over feature nodes.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, NodeId, Padding, Tensor};
use crate::error::{Error, Result};
use crate::params::{Bound, Init, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpeConfig {
    /// Output channels of each DCN stack (`d_out`).
    pub channels: usize,
    pub dilations: Vec<usize>,
    pub kernel_size: usize,
    /// Width `F` of the projected node features `h̄`.
    pub gat_dim: usize,
    pub gat_conv_channels: usize,
    pub gat_conv_kernel: usize,
    pub gat_dropout: f64,
    pub readout: Readout,
}

/// How the temporal and attribute stacks collapse their time axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    /// Average over all `W` steps.
    #[default]
    Mean,
    /// The final step only; with causal convolutions it summarizes the
    /// most recent receptive field.
    Last,
}

impl Default for MpeConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            dilations: vec![1, 2, 4, 8],
            kernel_size: 2,
            gat_dim: 32,
            gat_conv_channels: 32,
            gat_conv_kernel: 3,
            gat_dropout: 0.1,
            readout: Readout::Mean,
        }
    }
}

impl MpeConfig {
    pub fn output_width(&self) -> usize {
        2 * self.channels + self.gat_conv_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.gat_dim == 0 || self.gat_conv_channels == 0 {
            return Err(Error::Config("MPE widths must be positive".into()));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::Config("DCN dilations must be non-empty and positive".into()));
        }
        if self.kernel_size == 0 {
            return Err(Error::Config("DCN kernel size must be positive".into()));
        }
        if self.gat_conv_kernel % 2 == 0 {
            return Err(Error::Config("GAT convolution kernel must be odd".into()));
        }
        if !(0.0..1.0).contains(&self.gat_dropout) {
            return Err(Error::Config("GAT dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Gated residual stack of dilated causal convolutions over `[B, C, T]` inputs.
#[derive(Clone, Debug)]
pub struct DcnStack {
    pub prefix: String,
    pub in_channels: usize,
    pub channels: usize,
    pub dilations: Vec<usize>,
    pub kernel_size: usize,
}

impl DcnStack {
    pub fn new(prefix: &str, in_channels: usize, cfg: &MpeConfig) -> Self {
        Self {
            prefix: prefix.to_owned(),
            in_channels,
            channels: cfg.channels,
            dilations: cfg.dilations.clone(),
            kernel_size: cfg.kernel_size,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn n_layers(&self) -> usize {
        self.dilations.len()
    }

    /// Steps of history one output position can see.
    pub fn receptive_field(&self) -> usize {
        1 + self.dilations.iter().map(|d| d * (self.kernel_size - 1)).sum::<usize>()
    }

    pub fn declare(&self, store: &mut ParamStore, seed: u64) -> Result<()> {
        let (c, k) = (self.channels, self.kernel_size);
        store.declare(&self.name("in.w"), &[c, self.in_channels, 1], Init::FanIn(self.in_channels), seed)?;
        store.declare(&self.name("in.b"), &[c], Init::Zeros, seed)?;
        for l in 0..self.n_layers() {
            for branch in ["filter", "gate"] {
                store.declare(&self.name(&format!("l{l}.{branch}.w")), &[c, c, k], Init::FanIn(c * k), seed)?;
                store.declare(&self.name(&format!("l{l}.{branch}.b")), &[c], Init::Zeros, seed)?;
            }
            store.declare(&self.name(&format!("l{l}.res.w")), &[c, c, 1], Init::FanIn(c), seed)?;
            store.declare(&self.name(&format!("l{l}.res.b")), &[c], Init::Zeros, seed)?;
        }
        Ok(())
    }

    /// Input projection `Z⁽⁰⁾` followed by every gated layer; `[B, Cin, T] -> [B, C, T]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: NodeId) -> Result<NodeId> {
        let mut z = self.project(g, p, x)?;
        for l in 0..self.n_layers() {
            z = self.layer(g, p, l, z)?;
        }
        Ok(z)
    }

    pub fn project(&self, g: &mut Graph, p: &Bound, x: NodeId) -> Result<NodeId> {
        g.conv1d(x, p.id(&self.name("in.w"))?, p.id(&self.name("in.b"))?, 1, Padding::Causal)
    }

    /// `Z⁽ᵏ⁾ = Z⁽ᵏ⁻¹⁾ + W_res(tanh(conv_f(Z)) ⊙ σ(conv_g(Z)))`.
    pub fn layer(&self, g: &mut Graph, p: &Bound, l: usize, z: NodeId) -> Result<NodeId> {
        let d = self.dilations[l];
        let conv = |g: &mut Graph, branch: &str| -> Result<NodeId> {
            let w = p.id(&self.name(&format!("l{l}.{branch}.w")))?;
            let b = p.id(&self.name(&format!("l{l}.{branch}.b")))?;
            g.conv1d(z, w, b, d, Padding::Causal)
        };
        let f = conv(g, "filter")?;
        let f = g.tanh(f)?;
        let s = conv(g, "gate")?;
        let s = g.sigmoid(s)?;
        let gated = g.mul(f, s)?;
        let res = g.conv1d(
            gated,
            p.id(&self.name(&format!("l{l}.res.w")))?,
            p.id(&self.name(&format!("l{l}.res.b")))?,
            1,
            Padding::Causal,
        )?;
        g.add(z, res)
    }
}

/// Single-head attention over feature nodes followed by a convolution along the node axis.
#[derive(Clone, Debug)]
pub struct GatLayer {
    pub prefix: String,
    pub window: usize,
    pub dim: usize,
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub dropout: f64,
}

pub struct GatOutput {
    /// Row-stochastic `N × N` attention matrix.
    pub attention: NodeId,
    /// `N × conv_channels`.
    pub z: NodeId,
}

impl GatLayer {
    pub fn new(prefix: &str, window: usize, cfg: &MpeConfig) -> Self {
        Self {
            prefix: prefix.to_owned(),
            window,
            dim: cfg.gat_dim,
            conv_channels: cfg.gat_conv_channels,
            conv_kernel: cfg.gat_conv_kernel,
            dropout: cfg.gat_dropout,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn declare(&self, store: &mut ParamStore, seed: u64) -> Result<()> {
        let f = self.dim;
        store.declare(&self.name("proj.w"), &[self.window, f], Init::FanIn(self.window), seed)?;
        store.declare(&self.name("proj.b"), &[f], Init::Zeros, seed)?;
        store.declare(&self.name("a_src"), &[f, 1], Init::FanIn(f), seed)?;
        store.declare(&self.name("a_dst"), &[f, 1], Init::FanIn(f), seed)?;
        store.declare(
            &self.name("conv.w"),
            &[self.conv_channels, f, self.conv_kernel],
            Init::FanIn(f * self.conv_kernel),
            seed,
        )?;
        store.declare(&self.name("conv.b"), &[self.conv_channels], Init::Zeros, seed)
    }

    /// `x`: raw window `N × W`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: NodeId, rng: Option<&mut ChaCha8Rng>) -> Result<GatOutput> {
        let n = g.value(x).rows();
        let h = g.linear(x, p.id(&self.name("proj.w"))?, p.id(&self.name("proj.b"))?)?;
        let attention = self.attention(g, p, h)?;
        let mixed = g.matmul(attention, h)?;
        // Convolve along the node axis with the F embedding widths as channels.
        let seq = g.transpose(mixed)?;
        let seq = g.reshape(seq, &[1, self.dim, n])?;
        let conv = g.conv1d(seq, p.id(&self.name("conv.w"))?, p.id(&self.name("conv.b"))?, 1, Padding::Same)?;
        let conv = g.reshape(conv, &[self.conv_channels, n])?;
        let z = g.transpose(conv)?;
        let z = g.dropout(z, self.dropout, rng)?;
        Ok(GatOutput { attention, z })
    }

    /// `A_ij = softmax_j(LeakyReLU(a_srcᵀ h̄_i + a_dstᵀ h̄_j))` for `h` of shape `N × F`.
    pub fn attention(&self, g: &mut Graph, p: &Bound, h: NodeId) -> Result<NodeId> {
        let n = g.value(h).rows();
        let s = g.matmul(h, p.id(&self.name("a_src"))?)?;
        let t = g.matmul(h, p.id(&self.name("a_dst"))?)?;
        let ones_row = g.constant(Tensor::ones(&[1, n]));
        let ones_col = g.constant(Tensor::ones(&[n, 1]));
        let si = g.matmul(s, ones_row)?;
        let tt = g.transpose(t)?;
        let tj = g.matmul(ones_col, tt)?;
        let e = g.add(si, tj)?;
        let e = g.leaky_relu(e)?;
        g.softmax(e, 1)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MpeOutput {
    pub z_seq: NodeId,
    pub z_fea: NodeId,
    pub z_gat: NodeId,
    pub z_unified: NodeId,
    pub attention: NodeId,
    /// Temporal-pass activations before pooling, `[N, C, W]`.
    pub seq_raw: NodeId,
}

/// One-hot on the final of `len` positions, as a column or a row.
fn last_selector(len: usize, column: bool) -> Result<Tensor> {
    let mut v = vec![0.0; len];
    v[len - 1] = 1.0;
    if column {
        Tensor::matrix(len, 1, v)
    } else {
        Tensor::matrix(1, len, v)
    }
}

/// The full embedder for windows of `n_features × window`.
#[derive(Clone, Debug)]
pub struct Mpe {
    pub temporal: DcnStack,
    pub attribute: DcnStack,
    pub gat: GatLayer,
    pub readout: Readout,
}

impl Mpe {
    pub fn new(window: usize, cfg: &MpeConfig) -> Self {
        Self {
            temporal: DcnStack::new("mpe.seq", 1, cfg),
            attribute: DcnStack::new("mpe.fea", 1, cfg),
            gat: GatLayer::new("mpe.gat", window, cfg),
            readout: cfg.readout,
        }
    }

    pub fn declare(&self, store: &mut ParamStore, seed: u64) -> Result<()> {
        self.temporal.declare(store, seed)?;
        self.attribute.declare(store, seed)?;
        self.gat.declare(store, seed)
    }

    pub fn output_width(&self) -> usize {
        self.temporal.channels + self.attribute.channels + self.gat.conv_channels
    }

    /// Raw temporal activations `[N, C, W]`: each node row is one batch item.
    pub fn temporal_raw(&self, g: &mut Graph, p: &Bound, x: NodeId) -> Result<NodeId> {
        let (n, w) = (g.value(x).rows(), g.value(x).cols());
        let input = g.reshape(x, &[n, 1, w])?;
        self.temporal.forward(g, p, input)
    }

    /// Raw attribute activations `[W, C, N]`: each time step is one batch item
    /// and the convolution runs along the node axis.
    pub fn attribute_raw(&self, g: &mut Graph, p: &Bound, x: NodeId) -> Result<NodeId> {
        let (n, w) = (g.value(x).rows(), g.value(x).cols());
        let xt = g.transpose(x)?;
        let input = g.reshape(xt, &[w, 1, n])?;
        self.attribute.forward(g, p, input)
    }

    /// `N × C`: temporal activations reduced over time.
    pub fn temporal(&self, g: &mut Graph, p: &Bound, x: NodeId) -> Result<(NodeId, NodeId)> {
        let raw = self.temporal_raw(g, p, x)?;
        let pooled = match self.readout {
            Readout::Mean => g.mean_axis(raw, 2)?,
            Readout::Last => {
                let s = g.value(raw).shape().to_vec();
                let flat = g.reshape(raw, &[s[0] * s[1], s[2]])?;
                let pick = g.constant(last_selector(s[2], true)?);
                let v = g.matmul(flat, pick)?;
                g.reshape(v, &[s[0], s[1]])?
            }
        };
        Ok((pooled, raw))
    }

    /// `N × C`: attribute activations reduced over time, transposed back to node-major.
    pub fn attribute(&self, g: &mut Graph, p: &Bound, x: NodeId) -> Result<NodeId> {
        let raw = self.attribute_raw(g, p, x)?;
        let pooled = match self.readout {
            Readout::Mean => g.mean_axis(raw, 0)?,
            Readout::Last => {
                let s = g.value(raw).shape().to_vec();
                let flat = g.reshape(raw, &[s[0], s[1] * s[2]])?;
                let pick = g.constant(last_selector(s[0], false)?);
                let v = g.matmul(pick, flat)?;
                g.reshape(v, &[s[1], s[2]])?
            }
        };
        g.transpose(pooled)
    }

    pub fn embed(&self, g: &mut Graph, p: &Bound, x: NodeId, rng: Option<&mut ChaCha8Rng>) -> Result<MpeOutput> {
        let shape = g.value(x).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.gat.window {
            return Err(Error::shape("mpe_embed", format!("window {shape:?}, expected N x {}", self.gat.window)));
        }
        if shape[0] < 2 {
            return Err(Error::shape("mpe_embed", "at least 2 feature nodes required"));
        }
        let (z_seq, seq_raw) = self.temporal(g, p, x)?;
        let z_fea = self.attribute(g, p, x)?;
        let gat = self.gat.forward(g, p, x, rng)?;
        let z_unified = g.concat(&[z_seq, z_fea, gat.z], 1)?;
        Ok(MpeOutput {
            z_seq,
            z_fea,
            z_gat: gat.z,
            z_unified,
            attention: gat.attention,
            seq_raw,
        })
    }
}

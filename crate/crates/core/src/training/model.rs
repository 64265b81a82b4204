use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::dataio::Window;
use crate::dgcl::{build_topology, dgcl_loss, Topology};
use crate::diffcore::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::fam::Fam;
use crate::mpe::{Mpe, MpeOutput};
use crate::params::{Bound, Init, ParamStore};

pub const FORECAST_W: &str = "head.forecast.w";
pub const FORECAST_B: &str = "head.forecast.b";
pub const RECON_W: &str = "head.recon.w";
pub const RECON_B: &str = "head.recon.b";

/// Loss components of one window, or their mean over many.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub forecast: f64,
    pub reconstruction: f64,
    /// Contrastive score; 0 when the graph term is not computed.
    pub graph: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Componentwise mean in slice order.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let n = items.len().max(1) as f64;
        let mut acc = LossBreakdown::default();
        for b in items {
            acc.forecast += b.forecast;
            acc.reconstruction += b.reconstruction;
            acc.graph += b.graph;
            acc.total += b.total;
        }
        LossBreakdown {
            forecast: acc.forecast / n,
            reconstruction: acc.reconstruction / n,
            graph: acc.graph / n,
            total: acc.total / n,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardNodes {
    pub embedding: MpeOutput,
    pub fam_out: NodeId,
    /// `[N]`
    pub forecast: NodeId,
    /// `N × W`
    pub reconstruction: NodeId,
    pub forecast_loss: NodeId,
    pub reconstruction_loss: NodeId,
    pub graph_loss: Option<NodeId>,
    pub total: NodeId,
}

/// Point predictions for one window, computed without dropout.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub forecast: Vec<f64>,
    pub reconstruction: Tensor,
}

/// All learnable state plus the configuration that shaped it.
///
/// This is also the checkpoint type; see [`Model::to_text`].
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub n_features: usize,
    /// Completed training epochs.
    pub epoch: usize,
    pub params: ParamStore,
}

/// Per-node affine map `x W + b`, `x: N × d`.
pub fn affine_head(g: &mut Graph, p: &Bound, x: NodeId, w: &str, b: &str) -> Result<NodeId> {
    g.linear(x, p.id(w)?, p.id(b)?)
}

/// `[N]` one-step-ahead prediction.
pub fn forecast_head(g: &mut Graph, p: &Bound, fam_out: NodeId) -> Result<NodeId> {
    let y = affine_head(g, p, fam_out, FORECAST_W, FORECAST_B)?;
    let n = g.value(y).rows();
    g.reshape(y, &[n])
}

/// `N × W` reconstruction of the window.
pub fn reconstruct_head(g: &mut Graph, p: &Bound, fam_out: NodeId) -> Result<NodeId> {
    affine_head(g, p, fam_out, RECON_W, RECON_B)
}

impl Model {
    /// Freshly initialised model for series with `n_features` channels.
    pub fn init(config: &TrainConfig, n_features: usize) -> Result<Self> {
        config.validate()?;
        if n_features < 2 {
            return Err(Error::Config(format!("need at least 2 features, got {n_features}")));
        }
        let seed = config.seed;
        let mut params = ParamStore::new();
        let mpe = Mpe::new(config.window, &config.mpe());
        mpe.declare(&mut params, seed)?;
        let fam = Fam::new("fam", mpe.output_width(), &config.fam());
        fam.declare(&mut params, seed)?;
        let d = config.d_model;
        params.declare(FORECAST_W, &[d, 1], Init::FanIn(d), seed)?;
        params.declare(FORECAST_B, &[1], Init::Zeros, seed)?;
        params.declare(RECON_W, &[d, config.window], Init::FanIn(d), seed)?;
        params.declare(RECON_B, &[config.window], Init::Zeros, seed)?;
        if config.dgcl_enabled {
            config.dgcl().declare(&mut params, config.dcn_channels, seed)?;
        }
        Ok(Self {
            config: config.clone(),
            n_features,
            epoch: 0,
            params,
        })
    }

    pub fn mpe(&self) -> Mpe {
        Mpe::new(self.config.window, &self.config.mpe())
    }

    pub fn fam(&self) -> Fam {
        Fam::new("fam", self.mpe().output_width(), &self.config.fam())
    }

    /// Frozen topology for `window`, or `None` when the graph term is off.
    pub fn topology(&self, window: &Window) -> Result<Option<Topology>> {
        if !self.config.uses_dgcl() {
            return Ok(None);
        }
        build_topology(&window.values, &self.config.dgcl()).map(Some)
    }

    fn check_window(&self, window: &Window) -> Result<()> {
        if window.n_features() != self.n_features || window.len() != self.config.window {
            return Err(Error::shape(
                "model_forward",
                format!(
                    "window {:?}, expected {} x {}",
                    window.values.shape(),
                    self.n_features,
                    self.config.window
                ),
            ));
        }
        Ok(())
    }

    /// Builds the full objective on `g`. The graph term is added only when
    /// `topo` is given and the config uses it.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        window: &Window,
        topo: Option<&Topology>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardNodes> {
        self.check_window(window)?;
        let cfg = &self.config;
        let x = g.constant(window.values.clone());
        let embedding = self.mpe().embed(g, p, x, rng)?;
        let fam_out = self.fam().forward(g, p, embedding.z_unified)?.out;
        let forecast = forecast_head(g, p, fam_out)?;
        let reconstruction = reconstruct_head(g, p, fam_out)?;
        let target = g.constant(Tensor::vector(window.target.clone()));
        let forecast_loss = g.rmse(forecast, target)?;
        let reconstruction_loss = g.rmse(reconstruction, x)?;
        let weighted = g.scale(reconstruction_loss, cfg.beta)?;
        let mut total = g.add(forecast_loss, weighted)?;
        let mut graph_loss = None;
        if let (true, Some(topo)) = (cfg.uses_dgcl(), topo) {
            let nodes = dgcl_loss(g, p, topo, &cfg.dgcl(), Some(embedding.seq_raw))?;
            let weighted = g.scale(nodes.loss, cfg.lambda)?;
            total = g.add(total, weighted)?;
            graph_loss = Some(nodes.loss);
        }
        Ok(ForwardNodes {
            embedding,
            fam_out,
            forecast,
            reconstruction,
            forecast_loss,
            reconstruction_loss,
            graph_loss,
            total,
        })
    }

    fn breakdown(g: &Graph, nodes: &ForwardNodes) -> LossBreakdown {
        LossBreakdown {
            forecast: g.value(nodes.forecast_loss).item(),
            reconstruction: g.value(nodes.reconstruction_loss).item(),
            graph: nodes.graph_loss.map_or(0.0, |id| g.value(id).item()),
            total: g.value(nodes.total).item(),
        }
    }

    /// Forward-only loss.
    pub fn loss(&self, window: &Window, topo: Option<&Topology>, rng: Option<&mut ChaCha8Rng>) -> Result<LossBreakdown> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let nodes = self.forward(&mut g, &p, window, topo, rng)?;
        Ok(Self::breakdown(&g, &nodes))
    }

    /// Loss and the gradient of the total with respect to every parameter,
    /// in store order.
    pub fn loss_and_grads(
        &self,
        window: &Window,
        topo: Option<&Topology>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(LossBreakdown, Vec<Tensor>)> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let nodes = self.forward(&mut g, &p, window, topo, rng)?;
        let loss = Self::breakdown(&g, &nodes);
        if !loss.total.is_finite() {
            return Ok((loss, Vec::new()));
        }
        g.backward(nodes.total, None)?;
        Ok((loss, p.grads(&g)))
    }

    pub fn predict(&self, window: &Window) -> Result<Prediction> {
        self.check_window(window)?;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let x = g.constant(window.values.clone());
        let embedding = self.mpe().embed(&mut g, &p, x, None)?;
        let fam_out = self.fam().forward(&mut g, &p, embedding.z_unified)?.out;
        let forecast = forecast_head(&mut g, &p, fam_out)?;
        let reconstruction = reconstruct_head(&mut g, &p, fam_out)?;
        Ok(Prediction {
            forecast: g.value(forecast).data().to_vec(),
            reconstruction: g.value(reconstruction).clone(),
        })
    }
}

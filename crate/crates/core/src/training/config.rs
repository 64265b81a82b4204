use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::Normalization;
use crate::dgcl::{DgclConfig, GcnFeatures};
use crate::error::{Error, Result};
use crate::fam::FamConfig;
use crate::mpe::{MpeConfig, Readout};

/// Every tunable of a run, as one flat key-value document.
///
/// Keys match field names. Unknown keys are rejected; missing keys take
/// their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub window: usize,
    pub stride: usize,
    /// Fraction of the train half used for fitting; the rest validates.
    pub train_ratio: f64,
    pub normalization: Normalization,

    pub beta: f64,
    pub lambda: f64,
    /// When false, no DGCL parameters exist and the graph term is never computed.
    pub dgcl_enabled: bool,

    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Record the mean validation loss after every epoch.
    pub track_validation: bool,

    pub dcn_channels: usize,
    pub dcn_dilations: Vec<usize>,
    pub dcn_kernel: usize,
    pub gat_dim: usize,
    pub gat_conv_channels: usize,
    pub gat_conv_kernel: usize,
    pub gat_dropout: f64,
    pub readout: Readout,

    pub fam_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub spectral_k: usize,
    pub ffn_hidden: usize,

    pub snapshots: usize,
    pub temperature: f64,
    pub gamma: f64,
    pub edges: Option<usize>,
    pub dtw_band: Option<usize>,
    pub kl_epsilon: f64,
    pub gcn_hidden: usize,
    pub gcn_out: usize,
    pub gcn_features: GcnFeatures,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let mpe = MpeConfig::default();
        let fam = FamConfig::default();
        let dgcl = DgclConfig::default();
        Self {
            window: 100,
            stride: 1,
            train_ratio: 0.8,
            normalization: Normalization::MinMax,
            beta: 0.1,
            lambda: -0.1,
            dgcl_enabled: true,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 5.0,
            epochs: 10,
            batch_size: 32,
            seed: 42,
            track_validation: true,
            dcn_channels: mpe.channels,
            dcn_dilations: mpe.dilations,
            dcn_kernel: mpe.kernel_size,
            gat_dim: mpe.gat_dim,
            gat_conv_channels: mpe.gat_conv_channels,
            gat_conv_kernel: mpe.gat_conv_kernel,
            gat_dropout: mpe.gat_dropout,
            readout: mpe.readout,
            fam_layers: fam.n_layers,
            d_model: fam.d_model,
            n_heads: fam.n_heads,
            spectral_k: fam.spectral_k,
            ffn_hidden: fam.ffn_hidden,
            snapshots: dgcl.n_snapshots,
            temperature: dgcl.temperature,
            gamma: dgcl.gamma,
            edges: dgcl.override_edges,
            dtw_band: dgcl.band,
            kl_epsilon: dgcl.kl_epsilon,
            gcn_hidden: dgcl.gcn_hidden,
            gcn_out: dgcl.gcn_out,
            gcn_features: dgcl.features,
        }
    }
}

impl TrainConfig {
    pub fn mpe(&self) -> MpeConfig {
        MpeConfig {
            channels: self.dcn_channels,
            dilations: self.dcn_dilations.clone(),
            kernel_size: self.dcn_kernel,
            gat_dim: self.gat_dim,
            gat_conv_channels: self.gat_conv_channels,
            gat_conv_kernel: self.gat_conv_kernel,
            gat_dropout: self.gat_dropout,
            readout: self.readout,
        }
    }

    pub fn fam(&self) -> FamConfig {
        FamConfig {
            n_layers: self.fam_layers,
            d_model: self.d_model,
            n_heads: self.n_heads,
            spectral_k: self.spectral_k,
            ffn_hidden: self.ffn_hidden,
        }
    }

    pub fn dgcl(&self) -> DgclConfig {
        DgclConfig {
            n_snapshots: self.snapshots,
            temperature: self.temperature,
            gamma: self.gamma,
            override_edges: self.edges,
            band: self.dtw_band,
            kl_epsilon: self.kl_epsilon,
            gcn_hidden: self.gcn_hidden,
            gcn_out: self.gcn_out,
            features: self.gcn_features,
        }
    }

    /// Whether the graph term is computed at all.
    pub fn uses_dgcl(&self) -> bool {
        self.dgcl_enabled && self.lambda != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::Config(format!("window {} must be at least 2", self.window)));
        }
        if self.stride < 1 || self.batch_size < 1 {
            return Err(Error::Config("stride and batch_size must be at least 1".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config(format!("train_ratio {} must lie in (0, 1)", self.train_ratio)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta {} must be non-negative", self.beta)));
        }
        if !(-1.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} must lie in [-1, 1]", self.lambda)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("Adam decay rates must lie in [0, 1) and epsilon be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        self.mpe().validate()?;
        self.fam().validate()?;
        if self.dgcl_enabled {
            self.dgcl().validate(self.window)?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = TrainConfig::default();
        let back = TrainConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
        let mut with_edges = cfg.clone();
        with_edges.edges = Some(16);
        with_edges.gcn_features = GcnFeatures::Embedding;
        let text = with_edges.to_toml_string();
        assert!(text.contains("edges = 16"));
        assert_eq!(TrainConfig::from_toml_str(&text).unwrap(), with_edges);
    }

    #[test]
    fn partial_documents_take_defaults() {
        let cfg = TrainConfig::from_toml_str("lambda = 0.3\nwindow = 40\nsnapshots = 4\n").unwrap();
        assert_eq!(cfg.lambda, 0.3);
        assert_eq!(cfg.window, 40);
        assert_eq!(cfg.beta, 0.1);
        assert_eq!(cfg.normalization, Normalization::MinMax);
    }

    #[test]
    fn invalid_documents_are_rejected() {
        assert!(TrainConfig::from_toml_str("lamda = 0.3").is_err());
        assert!(TrainConfig::from_toml_str("lambda = 1.5").is_err());
        assert!(TrainConfig::from_toml_str("beta = -0.1").is_err());
        assert!(TrainConfig::from_toml_str("learning_rate = 0.0").is_err());
        assert!(TrainConfig::from_toml_str("d_model = 30\nn_heads = 4").is_err());
        assert!(TrainConfig::from_toml_str("snapshots = 7").is_err());
        assert!(TrainConfig::from_toml_str("normalization = \"z-score\"").is_ok());
    }
}

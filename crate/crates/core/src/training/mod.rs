//! Heads, objective, optimizer loop, checkpoints and the λ sweep.

mod checkpoint;
mod config;
mod model;
mod optim;
mod sweep;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use model::{
    affine_head, forecast_head, reconstruct_head, ForwardNodes, LossBreakdown, Model, Prediction, FORECAST_B,
    FORECAST_W, RECON_B, RECON_W,
};
pub use optim::{clip_global_norm, global_norm, Adam};
pub use sweep::{lambda_grid, lambda_sweep, SweepRow};

use crate::dataio::{make_windows, split_train_val, Dataset, Window};
use crate::dgcl::Topology;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::params::stable_hash;

/// Normalized, split data ready for training and scoring.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub feature_names: Vec<String>,
    pub train: Tensor,
    pub validation: Tensor,
    pub test: Tensor,
    pub test_labels: Option<Vec<u8>>,
}

/// Normalizes with statistics fitted on the train half (unless already
/// normalized) and splits it into fitting and validation parts.
pub fn prepare(dataset: &Dataset, cfg: &TrainConfig) -> Result<PreparedData> {
    let mut ds = dataset.clone();
    if ds.norm_stats.is_none() {
        ds.normalize(cfg.normalization)?;
    }
    let (train, validation) = split_train_val(&ds.train, cfg.train_ratio, cfg.window)?;
    Ok(PreparedData {
        feature_names: ds.feature_names,
        train,
        validation,
        test: ds.test,
        test_labels: ds.test_labels,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train: LossBreakdown,
    pub validation: Option<LossBreakdown>,
}

pub type LossTrace = Vec<EpochRecord>;

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub trace: LossTrace,
}

pub const LOSS_TRACE_HEADER: &str =
    "epoch,forecast,reconstruction,graph,total,val_forecast,val_reconstruction,val_graph,val_total";

pub fn write_loss_trace<W: Write>(out: &mut W, trace: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(out, "{LOSS_TRACE_HEADER}")?;
    for r in trace {
        let t = r.train;
        write!(out, "{},{},{},{},{}", r.epoch, t.forecast, t.reconstruction, t.graph, t.total)?;
        match r.validation {
            Some(v) => writeln!(out, ",{},{},{},{}", v.forecast, v.reconstruction, v.graph, v.total)?,
            None => writeln!(out, ",,,,")?,
        }
    }
    Ok(())
}

pub fn save_loss_trace(path: &Path, trace: &[EpochRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_loss_trace(&mut buf, trace).expect("write to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Dropout stream for one window visit; independent of batch composition.
pub fn dropout_rng(seed: u64, epoch: usize, window: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut key = [0u8; 17];
    key[0] = b'd';
    key[1..9].copy_from_slice(&(epoch as u64).to_le_bytes());
    key[9..].copy_from_slice(&(window as u64).to_le_bytes());
    rng.set_stream(stable_hash(&key));
    rng
}

fn shuffle_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut key = [0u8; 9];
    key[0] = b's';
    key[1..].copy_from_slice(&(epoch as u64).to_le_bytes());
    rng.set_stream(stable_hash(&key));
    rng
}

/// Windows of `series` with their frozen topologies (empty when unused).
pub struct WindowSet {
    pub windows: Vec<Window>,
    pub topologies: Vec<Option<Topology>>,
}

impl WindowSet {
    pub fn build(model: &Model, series: &Tensor) -> Result<Self> {
        let windows = make_windows(series, model.config.window, model.config.stride)?;
        let topologies = windows.iter().map(|w| model.topology(w)).collect::<Result<_>>()?;
        Ok(Self { windows, topologies })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Mean loss without dropout.
    pub fn mean_loss(&self, model: &Model) -> Result<LossBreakdown> {
        let losses = self
            .windows
            .iter()
            .zip(&self.topologies)
            .map(|(w, t)| model.loss(w, t.as_ref(), None))
            .collect::<Result<Vec<_>>>()?;
        Ok(LossBreakdown::mean(&losses))
    }
}

/// Mini-batch Adam on `train`, recording mean losses per epoch.
///
/// Each step visits its windows in ascending index order, sums their
/// gradients in that order, divides by the batch size, clips by global
/// norm and applies one Adam update. A non-finite loss or gradient stops
/// training with the 0-based index of the offending step.
pub fn train(train: &Tensor, validation: Option<&Tensor>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let model = Model::init(cfg, train.cols())?;
    train_from(model, train, validation)
}

/// Continues training an existing model for `model.config.epochs` epochs.
pub fn train_from(mut model: Model, train: &Tensor, validation: Option<&Tensor>) -> Result<TrainOutcome> {
    let cfg = model.config.clone();
    if train.cols() != model.n_features {
        return Err(Error::Data(format!(
            "series has {} features, model expects {}",
            train.cols(),
            model.n_features
        )));
    }
    let fit = WindowSet::build(&model, train)?;
    let val = match (cfg.track_validation, validation) {
        (true, Some(v)) => Some(WindowSet::build(&model, v)?),
        _ => None,
    };
    let mut opt = Adam::new(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        let epoch = model.epoch + 1;
        let mut order: Vec<usize> = (0..fit.len()).collect();
        order.shuffle(&mut shuffle_rng(cfg.seed, epoch));
        let mut losses = vec![LossBreakdown::default(); fit.len()];
        for batch in order.chunks(cfg.batch_size) {
            let mut batch = batch.to_vec();
            batch.sort_unstable();
            let mut sum: Option<Vec<Tensor>> = None;
            for &i in &batch {
                let mut rng = dropout_rng(cfg.seed, epoch, i);
                let (loss, grads) = model.loss_and_grads(&fit.windows[i], fit.topologies[i].as_ref(), Some(&mut rng))?;
                if !loss.total.is_finite() || grads.iter().any(|g| !g.all_finite()) {
                    return Err(Error::NonFinite { step });
                }
                losses[i] = loss;
                match sum.as_mut() {
                    None => sum = Some(grads),
                    Some(acc) => acc.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g)),
                }
            }
            let mut grads = sum.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            for g in grads.iter_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= inv);
            }
            clip_global_norm(&mut grads, cfg.clip_norm);
            opt.update(model.params.values_mut(), &grads);
            step += 1;
        }
        model.epoch = epoch;
        let validation = val.as_ref().map(|v| v.mean_loss(&model)).transpose()?;
        trace.push(EpochRecord {
            epoch,
            train: LossBreakdown::mean(&losses),
            validation,
        });
    }
    Ok(TrainOutcome { model, trace })
}

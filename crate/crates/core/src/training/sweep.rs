use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::{train, PreparedData};
use crate::error::{Error, Result};
use crate::eval::{aggregate_runs, evaluate_run};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    /// False for the λ = 0 row, which trains without the graph module.
    pub dgcl: bool,
    pub f1: f64,
    pub auc: f64,
    pub f1_std: f64,
    pub auc_std: f64,
}

/// `-1.0, -0.9, ..., 1.0`, each value computed as `i / 10` so 0 is exact.
pub fn lambda_grid() -> Vec<f64> {
    (-10i32..=10).map(|i| f64::from(i) / 10.0).collect()
}

/// Trains and evaluates once per `(λ, seed)`; rows follow `lambdas` order.
/// No λ is chosen here.
pub fn lambda_sweep(data: &PreparedData, cfg: &TrainConfig, lambdas: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one λ and one seed".into()));
    }
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut run_cfg = cfg.clone();
        run_cfg.lambda = lambda;
        run_cfg.dgcl_enabled = lambda != 0.0;
        run_cfg.validate()?;
        let mut reports = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            run_cfg.seed = seed;
            let outcome = train(&data.train, Some(&data.validation), &run_cfg)?;
            reports.push(evaluate_run(&outcome.model, data)?);
        }
        let agg = aggregate_runs(&reports)?;
        rows.push(SweepRow {
            lambda,
            dgcl: run_cfg.dgcl_enabled,
            f1: agg.f1.mean,
            auc: agg.auc.mean,
            f1_std: agg.f1.std,
            auc_std: agg.auc.std,
        });
    }
    Ok(rows)
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edge budget from a truncated power-law degree prior, or an explicit count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawBudget {
    pub gamma: f64,
    pub n_nodes: usize,
    pub override_edges: Option<usize>,
}

impl PowerLawBudget {
    pub fn expected_degree(&self) -> Result<f64> {
        expected_degree(self.gamma, self.n_nodes)
    }

    pub fn edges(&self) -> Result<usize> {
        edge_budget(self.gamma, self.n_nodes, self.override_edges)
    }
}

pub fn max_edges(n: usize) -> usize {
    n * (n - 1) / 2
}

/// `E(X) = Σ n·n^(−γ) / Σ n^(−γ)` over `n = 1..=N`.
pub fn expected_degree(gamma: f64, n: usize) -> Result<f64> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("power-law exponent must exceed 1, got {gamma}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 nodes, got {n}")));
    }
    let (num, den) = (1..=n).fold((0.0, 0.0), |(num, den), k| {
        let w = (k as f64).powf(-gamma);
        (num + k as f64 * w, den + w)
    });
    Ok(num / den)
}

/// `K = floor(N·E(X)/2)` clamped to `[1, N(N−1)/2]`; an override is used as is.
pub fn edge_budget(gamma: f64, n: usize, override_edges: Option<usize>) -> Result<usize> {
    let e = expected_degree(gamma, n)?;
    let max = max_edges(n);
    if let Some(k) = override_edges {
        if k == 0 || k > max {
            return Err(Error::InvalidArgument(format!("edge override {k} outside 1..={max} for {n} nodes")));
        }
        return Ok(k);
    }
    let k = (n as f64 * e / 2.0).floor() as usize;
    Ok(k.clamp(1, max))
}

/// `2K / (N(N−1))`.
pub fn edge_density(edges: usize, n: usize) -> f64 {
    2.0 * edges as f64 / (n as f64 * (n as f64 - 1.0))
}

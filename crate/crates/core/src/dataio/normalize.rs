use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    #[default]
    MinMax,
    ZScore,
}

/// Per-feature affine map `v -> (v - offset) / scale`.
///
/// For min-max, `offset` is the train minimum and `scale` is `max - min`;
/// for z-score they are the mean and population standard deviation. A zero
/// scale (constant feature) maps every value to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub method: Normalization,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

pub fn fit_normalizer(train: &Tensor, method: Normalization) -> Result<NormStats> {
    if train.ndim() != 2 {
        return Err(Error::shape("fit_normalizer", format!("expected T x N, got {:?}", train.shape())));
    }
    let (t, n) = (train.rows(), train.cols());
    let mut offset = Vec::with_capacity(n);
    let mut scale = Vec::with_capacity(n);
    for j in 0..n {
        let col = (0..t).map(|i| train.at2(i, j));
        match method {
            Normalization::MinMax => {
                let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                offset.push(lo);
                scale.push(hi - lo);
            }
            Normalization::ZScore => {
                let mean = col.clone().sum::<f64>() / t as f64;
                let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
                offset.push(mean);
                scale.push(var.sqrt());
            }
        }
    }
    Ok(NormStats { method, offset, scale })
}

impl NormStats {
    pub fn n_features(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, m: &Tensor) -> Result<Tensor> {
        if m.ndim() != 2 || m.cols() != self.n_features() {
            return Err(Error::shape(
                "apply_normalizer",
                format!("stats for {} features, matrix {:?}", self.n_features(), m.shape()),
            ));
        }
        let n = m.cols();
        let mut out = m.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let j = k % n;
            *v = if self.scale[j] > 0.0 {
                (*v - self.offset[j]) / self.scale[j]
            } else {
                0.0
            };
        }
        Ok(out)
    }
}

pub fn apply_normalizer(m: &Tensor, stats: &NormStats) -> Result<Tensor> {
    stats.apply(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Tensor {
        Tensor::matrix(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn min_max_examples() {
        let stats = fit_normalizer(&col(&[2.0, 6.0, 3.0]), Normalization::MinMax).unwrap();
        assert_eq!(stats.apply(&col(&[4.0])).unwrap().item(), 0.5);
        assert_eq!(stats.apply(&col(&[8.0])).unwrap().item(), 1.5);
        let flat = fit_normalizer(&col(&[5.0, 5.0]), Normalization::MinMax).unwrap();
        assert_eq!(flat.apply(&col(&[5.0])).unwrap().item(), 0.0);
    }

    #[test]
    fn z_score_centres_and_scales() {
        let stats = fit_normalizer(&col(&[1.0, 3.0]), Normalization::ZScore).unwrap();
        assert_eq!(stats.offset, vec![2.0]);
        assert_eq!(stats.scale, vec![1.0]);
        assert_eq!(stats.apply(&col(&[4.0])).unwrap().item(), 2.0);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let stats = fit_normalizer(&col(&[1.0, 2.0]), Normalization::MinMax).unwrap();
        assert!(stats.apply(&Tensor::zeros(&[2, 2])).is_err());
    }
}

//! Residual scoring, thresholding, point adjustment and metrics.

mod metrics;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub use metrics::{auc_roc, point_adjust, prf1, select_threshold, Prf1};

use crate::dataio::{make_windows, Window};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::training::{Model, PreparedData};

/// One anomaly score per timestep of a scored series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTrace {
    pub scores: Vec<f64>,
    /// Min-max rescaled copy of `scores`; all zero when the scores are constant.
    pub normalized: Vec<f64>,
    /// Whether the timestep is the forecast target of at least one window.
    /// Uncovered entries hold filled values.
    pub covered: Vec<bool>,
}

impl ScoreTrace {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn covered_scores(&self) -> Vec<f64> {
        self.scores.iter().zip(&self.covered).filter(|(_, &c)| c).map(|(&s, _)| s).collect()
    }
}

pub fn min_max_normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

fn row_rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Residual contribution of one window: forecast RMSE over features at the
/// target step plus `beta` times the reconstruction RMSE of the last column.
pub fn window_contribution(window: &Window, forecast: &[f64], reconstruction: &Tensor, beta: f64) -> f64 {
    let w = window.len();
    let n = window.n_features();
    let last: Vec<f64> = (0..n).map(|i| window.values.at2(i, w - 1)).collect();
    let rec: Vec<f64> = (0..n).map(|i| reconstruction.at2(i, w - 1)).collect();
    row_rmse(forecast, &window.target) + beta * row_rmse(&rec, &last)
}

/// Spreads per-window contributions over a series of `length` steps.
///
/// A window's contribution is attributed to its forecast target
/// `start + w`; covered steps average their contributions. Steps before the
/// first covered one take its score and later gaps repeat the previous score.
pub fn assemble_scores(length: usize, w: usize, contributions: &[(usize, f64)]) -> Result<ScoreTrace> {
    let mut sum = vec![0.0; length];
    let mut count = vec![0usize; length];
    for &(start, c) in contributions {
        let t = start + w;
        if t >= length {
            return Err(Error::InvalidArgument(format!("window at {start} targets {t} beyond length {length}")));
        }
        sum[t] += c;
        count[t] += 1;
    }
    let first = count
        .iter()
        .position(|&c| c > 0)
        .ok_or_else(|| Error::Data("no window covers the series".into()))?;
    let mut scores = vec![0.0; length];
    let first_score = sum[first] / count[first] as f64;
    let mut prev = first_score;
    for t in 0..length {
        scores[t] = if count[t] > 0 {
            sum[t] / count[t] as f64
        } else if t < first {
            first_score
        } else {
            prev
        };
        prev = scores[t];
    }
    Ok(ScoreTrace {
        normalized: min_max_normalize(&scores),
        covered: count.iter().map(|&c| c > 0).collect(),
        scores,
    })
}

/// Scores every timestep of `series` (`T × N`, already normalized).
pub fn score_series(model: &Model, series: &Tensor) -> Result<ScoreTrace> {
    let cfg = &model.config;
    let windows = make_windows(series, cfg.window, cfg.stride)?;
    let mut contributions = Vec::with_capacity(windows.len());
    for w in &windows {
        let pred = model.predict(w)?;
        contributions.push((w.start, window_contribution(w, &pred.forecast, &pred.reconstruction, cfg.beta)));
    }
    assemble_scores(series.rows(), cfg.window, &contributions)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    /// Metrics before point adjustment.
    pub raw: Prf1,
    pub raw_predictions: Vec<u8>,
    pub adjusted_predictions: Vec<u8>,
}

/// Threshold from validation scores, then metrics on the labelled test scores.
pub fn evaluate_scores(seed: u64, validation: &ScoreTrace, test: &ScoreTrace, labels: &[u8]) -> Result<EvalReport> {
    if labels.len() != test.len() {
        return Err(Error::Data(format!("{} labels for {} scored timesteps", labels.len(), test.len())));
    }
    let threshold = select_threshold(&validation.covered_scores())?;
    let raw_predictions: Vec<u8> = test.scores.iter().map(|&s| u8::from(s > threshold)).collect();
    let adjusted_predictions = point_adjust(&raw_predictions, labels)?;
    let raw = prf1(&raw_predictions, labels)?;
    let adj = prf1(&adjusted_predictions, labels)?;
    Ok(EvalReport {
        seed,
        threshold,
        precision: adj.precision,
        recall: adj.recall,
        f1: adj.f1,
        auc: auc_roc(&test.scores, labels)?,
        raw,
        raw_predictions,
        adjusted_predictions,
    })
}

pub fn evaluate_run(model: &Model, data: &PreparedData) -> Result<EvalReport> {
    let labels = data
        .test_labels
        .as_deref()
        .ok_or_else(|| Error::Data("evaluation needs a labelled test set".into()))?;
    let validation = score_series(model, &data.validation)?;
    let test = score_series(model, &data.test)?;
    evaluate_scores(model.config.seed, &validation, &test, labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    /// Two-sided 95% Student-t interval for the mean.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MetricSummary {
    pub fn from_values(v: &[f64]) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidArgument("no values to summarize".into()));
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        if v.len() == 1 {
            return Ok(Self {
                mean,
                std: 0.0,
                ci_low: mean,
                ci_high: mean,
            });
        }
        let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let t = StudentsT::new(0.0, 1.0, n - 1.0)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .inverse_cdf(0.975);
        let half = t * std / n.sqrt();
        Ok(Self {
            mean,
            std,
            ci_low: mean - half,
            ci_high: mean + half,
        })
    }

    /// True when the two 95% intervals share at least one point.
    pub fn overlaps(&self, other: &MetricSummary) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
    pub auc: MetricSummary,
}

pub fn aggregate_runs(reports: &[EvalReport]) -> Result<Aggregate> {
    let pick = |f: fn(&EvalReport) -> f64| MetricSummary::from_values(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(Aggregate {
        runs: reports.len(),
        precision: pick(|r| r.precision)?,
        recall: pick(|r| r.recall)?,
        f1: pick(|r| r.f1)?,
        auc: pick(|r| r.auc)?,
    })
}

/// `timestep,score[,label]` with min-max normalized scores.
pub fn write_score_trace<W: Write>(out: &mut W, trace: &ScoreTrace, labels: Option<&[u8]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != trace.len() {
            return Err(Error::Data(format!("{} labels for {} scores", l.len(), trace.len())));
        }
    }
    let io = |e| Error::Data(format!("writing score trace: {e}"));
    match labels {
        Some(_) => writeln!(out, "timestep,score,label").map_err(io)?,
        None => writeln!(out, "timestep,score").map_err(io)?,
    }
    for (t, s) in trace.normalized.iter().enumerate() {
        match labels {
            Some(l) => writeln!(out, "{t},{s},{}", l[t]).map_err(io)?,
            None => writeln!(out, "{t},{s}").map_err(io)?,
        }
    }
    Ok(())
}

pub fn save_score_trace(path: &Path, trace: &ScoreTrace, labels: Option<&[u8]>) -> Result<()> {
    let mut buf = Vec::new();
    write_score_trace(&mut buf, trace, labels)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(min_max_normalize(&[1.0, 3.0, 5.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(min_max_normalize(&[2.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn aggregate_example() {
        let s = MetricSummary::from_values(&[0.8, 0.9]).unwrap();
        assert!((s.mean - 0.85).abs() < 1e-15);
        assert!((s.std - 0.070_710_678_118_654_76).abs() < 1e-12);
        let same = MetricSummary::from_values(&[0.7; 5]).unwrap();
        assert_eq!((same.std, same.ci_low, same.ci_high), (0.0, 0.7, 0.7));
        // t(0.975, 1) = 12.7062
        assert!((s.ci_high - (0.85 + 12.706_204_736 * s.std / 2f64.sqrt())).abs() < 1e-6);
        assert!(!same.overlaps(&MetricSummary::from_values(&[0.9; 3]).unwrap()));
        assert!(s.overlaps(&same));
    }

    #[test]
    fn trace_assembly_and_export() {
        let t = assemble_scores(6, 2, &[(0, 1.0), (1, 3.0), (3, 5.0)]).unwrap();
        assert_eq!(t.scores, vec![1.0, 1.0, 1.0, 3.0, 3.0, 5.0]);
        assert_eq!(t.covered, vec![false, false, true, true, false, true]);
        let mut out = Vec::new();
        write_score_trace(&mut out, &t, Some(&[0, 0, 0, 1, 1, 0])).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("timestep,score,label\n0,0,0\n"));
        assert!(text.ends_with("5,1,0\n"));
    }
}

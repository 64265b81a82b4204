//! Central finite-difference verification of traced gradients.

use super::graph::{Graph, NodeId};
use super::ops::Op;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub param: NodeId,
    pub label: Option<String>,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Entry feeds a spectral bin the mask removes; compared against exact zero.
    pub masked: bool,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct ParamDeviation {
    pub param: NodeId,
    pub label: Option<String>,
    pub entries: usize,
    pub max_abs_deviation: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub params: Vec<ParamDeviation>,
    pub failures: Vec<GradCheckEntry>,
    pub checked: usize,
    pub masked: usize,
    /// Removed bins seen at the inputs of spectral masks anywhere in the trace.
    pub masked_bins: usize,
    /// Of those, how many received a gradient other than exactly zero.
    pub masked_bins_nonzero: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.masked_bins_nonzero == 0
    }
}

fn count_masked_bins(graph: &Graph, report: &mut GradCheckReport) {
    for i in 0..graph.len() {
        let Op::MaskBins { mask } = graph.op(NodeId(i)) else { continue };
        let spectrum = graph.inputs(NodeId(i))[0];
        let Some(g) = graph.grad(spectrum) else { continue };
        for (idx, v) in g.data().iter().enumerate() {
            if mask[idx / 2] == 0.0 {
                report.masked_bins += 1;
                report.masked_bins_nonzero += usize::from(*v != 0.0);
            }
        }
    }
}

fn masked_entries(graph: &Graph, param: NodeId) -> Vec<bool> {
    let n = graph.value(param).len();
    let mut masked = vec![false; n];
    for (_, op) in graph.consumers(param) {
        if let Op::MaskBins { mask } = op {
            for (i, m) in masked.iter_mut().enumerate() {
                if mask[i / 2] == 0.0 {
                    *m = true;
                }
            }
        }
    }
    masked
}

/// Compares the analytic gradient of the graph's final (scalar) node against
/// `(f(x + h) - f(x - h)) / 2h` for every entry of every learnable leaf.
///
/// An entry passes when `|analytic - numeric| <= atol + rtol * |numeric|`.
/// Entries that reach the output only through a removed spectral bin must have
/// an analytic gradient of exactly zero, as must every removed bin itself.
pub fn check_gradients(graph: &mut Graph, step: f64, rtol: f64, atol: f64) -> Result<GradCheckReport> {
    if step <= 0.0 {
        return Err(Error::InvalidArgument(format!("finite-difference step {step} must be positive")));
    }
    let out = graph.forward()?;
    if out.len() != 1 {
        return Err(Error::shape("check_gradients", format!("output must be scalar, got {:?}", out.shape())));
    }
    let output = NodeId(graph.len() - 1);
    graph.backward(output, None)?;

    let mut report = GradCheckReport::default();
    for param in graph.params() {
        let original = graph.value(param).clone();
        let analytic = graph
            .grad(param)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(original.shape()));
        let masked = masked_entries(graph, param);
        let label = graph.label(param).map(str::to_owned);
        let mut dev = ParamDeviation {
            param,
            label: label.clone(),
            entries: original.len(),
            max_abs_deviation: 0.0,
            failures: 0,
        };
        for idx in 0..original.len() {
            let mut probe = original.clone();
            probe.data_mut()[idx] = original.data()[idx] + step;
            graph.set_value(param, probe.clone())?;
            let plus = graph.forward()?.item();
            probe.data_mut()[idx] = original.data()[idx] - step;
            graph.set_value(param, probe)?;
            let minus = graph.forward()?.item();
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data()[idx];
            let (passed, deviation) = if masked[idx] {
                (a == 0.0, a.abs())
            } else {
                let d = (a - numeric).abs();
                (d <= atol + rtol * numeric.abs(), d)
            };
            dev.max_abs_deviation = dev.max_abs_deviation.max(deviation);
            report.checked += 1;
            report.masked += masked[idx] as usize;
            if !passed {
                dev.failures += 1;
                report.failures.push(GradCheckEntry {
                    param,
                    label: label.clone(),
                    index: idx,
                    analytic: a,
                    numeric,
                    masked: masked[idx],
                    passed,
                });
            }
        }
        graph.set_value(param, original)?;
        report.params.push(dev);
    }
    graph.forward()?;
    graph.backward(output, None)?;
    count_masked_bins(graph, &mut report);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let mut g = Graph::new();
        let w = g.param(Tensor::scalar(3.0));
        g.mul(w, w).unwrap();
        let r = check_gradients(&mut g, 1e-3, 1e-9, 1e-12).unwrap();
        assert!(r.passed(), "{:?}", r.failures);
        assert_eq!(g.grad(w).unwrap().item(), 6.0);
    }

    #[test]
    fn tanh_matches_sech_squared() {
        let mut g = Graph::new();
        let w = g.param(Tensor::scalar(0.5));
        let y = g.tanh(w).unwrap();
        let r = check_gradients(&mut g, 1e-5, 1e-6, 0.0).unwrap();
        assert!(r.passed());
        let sech2 = 1.0 / 0.5f64.cosh().powi(2);
        assert!((g.grad(w).unwrap().item() - sech2).abs() < 1e-12);
        assert!((sech2 - 0.7864).abs() < 1e-4);
        let _ = y;
    }

    #[test]
    fn masked_spectral_bin_has_zero_gradient() {
        // Spectrum parameter of a length-6 signal: 4 bins, keep bins 0 and 2.
        let mut g = Graph::new();
        let spec = g.param(Tensor::new(vec![4, 2], vec![0.3, 0.0, 1.0, -0.4, 0.7, 0.2, -0.5, 0.0]).unwrap());
        let m = g.mask_bins(spec, vec![true, false, true, false]).unwrap();
        let x = g.irfft(m, 6).unwrap();
        let sq = g.mul(x, x).unwrap();
        g.mean(sq).unwrap();
        let r = check_gradients(&mut g, 1e-6, 1e-4, 1e-6).unwrap();
        assert!(r.passed(), "{:?}", r.failures);
        assert_eq!(r.masked, 4);
        let grad = g.grad(spec).unwrap();
        assert_eq!(&grad.data()[2..4], &[0.0, 0.0]);
        assert_eq!(&grad.data()[6..8], &[0.0, 0.0]);
    }

    #[test]
    fn failures_are_reported_not_raised() {
        // A wrong analytic gradient cannot be produced through the public API,
        // so check that a very tight tolerance makes an ordinary entry fail.
        let mut g = Graph::new();
        let w = g.param(Tensor::scalar(0.7));
        g.exp(w).unwrap();
        let r = check_gradients(&mut g, 1e-1, 0.0, 0.0).unwrap();
        assert!(!r.passed());
        assert_eq!(r.failures.len(), 1);
    }
}

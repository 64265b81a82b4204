use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_binary(name: &str, v: &[u8]) -> Result<()> {
    if v.iter().any(|&x| x > 1) {
        return Err(Error::InvalidArgument(format!("{name} must be 0/1")));
    }
    Ok(())
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidArgument(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Exact 1-D two-means on `scores`; returns the midpoint of the two cluster means.
///
/// The split minimizing the within-cluster sum of squares is found by a
/// scan over the sorted values; the earliest split wins ties.
pub fn select_threshold(scores: &[f64]) -> Result<f64> {
    if scores.len() < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 validation scores, got {}", scores.len())));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("validation scores must be finite".into()));
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    if s[0] == s[s.len() - 1] {
        return Ok(s[0]);
    }
    let k = best_split(&s);
    let mean = |part: &[f64]| part.iter().sum::<f64>() / part.len() as f64;
    Ok((mean(&s[..k]) + mean(&s[k..])) / 2.0)
}

/// Size of the lower cluster for sorted `s`.
///
/// Prefix sums give every split's SSE in one pass; splits within rounding
/// distance of the minimum are then rescored directly so near-ties resolve
/// the same way a from-scratch computation would.
fn best_split(s: &[f64]) -> usize {
    let n = s.len();
    let (total, total_sq) = s.iter().fold((0.0, 0.0), |(a, b), &v| (a + v, b + v * v));
    let (mut sum, mut sq) = (0.0, 0.0);
    let mut fast = Vec::with_capacity(n - 1);
    for k in 1..n {
        sum += s[k - 1];
        sq += s[k - 1] * s[k - 1];
        let (nl, nr) = (k as f64, (n - k) as f64);
        let (rs, rsq) = (total - sum, total_sq - sq);
        fast.push((sq - sum * sum / nl) + (rsq - rs * rs / nr));
    }
    let min = fast.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * (total_sq + 1.0);
    let mut best = (f64::INFINITY, 1);
    for (i, &f) in fast.iter().enumerate() {
        if f <= min + tol {
            let k = i + 1;
            let v = sse(&s[..k]) + sse(&s[k..]);
            if v < best.0 {
                best = (v, k);
            }
        }
    }
    best.1
}

fn sse(part: &[f64]) -> f64 {
    let m = part.iter().sum::<f64>() / part.len() as f64;
    part.iter().map(|v| (v - m) * (v - m)).sum()
}

/// Expands any hit inside a maximal run of positive labels to the whole run.
pub fn point_adjust(raw: &[u8], labels: &[u8]) -> Result<Vec<u8>> {
    check_lengths(raw.len(), labels.len())?;
    check_binary("predictions", raw)?;
    check_binary("labels", labels)?;
    let mut out = raw.to_vec();
    let mut t = 0;
    while t < labels.len() {
        if labels[t] == 0 {
            t += 1;
            continue;
        }
        let start = t;
        while t < labels.len() && labels[t] == 1 {
            t += 1;
        }
        if raw[start..t].contains(&1) {
            out[start..t].iter_mut().for_each(|v| *v = 1);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1; a zero denominator gives 0.
pub fn prf1(pred: &[u8], labels: &[u8]) -> Result<Prf1> {
    check_lengths(pred.len(), labels.len())?;
    check_binary("predictions", pred)?;
    check_binary("labels", labels)?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &l) in pred.iter().zip(labels) {
        match (p, l) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Prf1 {
        tp,
        fp,
        fn_,
        tn,
        precision,
        recall,
        f1,
    })
}

/// Mann-Whitney estimate of the ROC area, ties counted one half.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    check_binary("labels", labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument("AUC needs both positive and negative labels".into()));
    }
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("scores must not be NaN".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the pair count keeps the half-credit for ties exact.
    let mut twice: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] == 1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        twice += 2 * p * neg_below + p * n;
        neg_below += n;
        i = j;
    }
    Ok((twice as f64 / 2.0) / (pos as f64 * neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let t = select_threshold(&[0.1, 0.11, 0.9, 0.92]).unwrap();
        assert!((t - 0.5075).abs() < 1e-12);
        assert_eq!(select_threshold(&[0.3; 5]).unwrap(), 0.3);
        assert_eq!(select_threshold(&[0.92, 0.1, 0.9, 0.11]).unwrap(), t);
        assert!(select_threshold(&[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn adjustment_examples() {
        assert_eq!(point_adjust(&[0, 0, 1, 0, 0], &[0, 1, 1, 1, 0]).unwrap(), vec![0, 1, 1, 1, 0]);
        assert_eq!(point_adjust(&[0; 5], &[0, 1, 1, 1, 0]).unwrap(), vec![0; 5]);
        assert_eq!(point_adjust(&[1, 0, 0, 0, 0], &[0, 1, 1, 1, 0]).unwrap(), vec![1, 0, 0, 0, 0]);
        assert!(point_adjust(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn prf1_examples() {
        let m = prf1(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (1, 1, 1, 1));
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
        let m = prf1(&[0, 1, 1], &[0, 1, 1]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = prf1(&[0, 0], &[0, 0]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0.1, 0.9], &[0, 1]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.4; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(auc_roc(&[0.2, 0.8, 0.5, 0.5], &[0, 1, 0, 1]).unwrap(), 0.875);
        assert!(auc_roc(&[0.2, 0.8], &[1, 1]).is_err());
    }
}

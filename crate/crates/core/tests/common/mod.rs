//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use contrastad::dgcl::SnapshotGraph;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Minimum cost over every monotone warping path, enumerated recursively.
pub fn dtw_exhaustive(a: &[f64], b: &[f64], band: Option<usize>) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, band: Option<usize>, acc: f64, best: &mut f64) {
        if let Some(r) = band {
            if i.abs_diff(j) > r {
                return;
            }
        }
        let acc = acc + (a[i] - b[j]).abs();
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, band, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, band, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, band, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, band, 0.0, &mut best);
    best
}

/// Direct `Σ KL` in both directions after ε-smoothing.
pub fn sym_kl_direct(a: &[f64], b: &[f64], eps: f64) -> f64 {
    let norm = |d: &[f64]| {
        let s: f64 = d.iter().map(|v| v + eps).sum();
        d.iter().map(|v| (v + eps) / s).collect::<Vec<_>>()
    };
    let (a, b) = (norm(a), norm(b));
    a.iter().zip(&b).map(|(x, y)| x * (x / y).ln() + y * (y / x).ln()).sum()
}

/// Every unordered pair, keeping the first strict maximum.
pub fn best_pair_exhaustive(graphs: &[SnapshotGraph], eps: f64) -> (usize, usize) {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for i in 0..graphs.len() {
        for j in i + 1..graphs.len() {
            let d = contrastad::dgcl::sym_kl(&graphs[i].degree_distribution, &graphs[j].degree_distribution, eps)
                .unwrap();
            if d > best.2 {
                best = (i + 1, j + 1, d);
            }
        }
    }
    (best.0, best.1)
}

/// Two-means threshold by trying every split of the sorted values and
/// computing each cluster's sum of squares from scratch.
pub fn threshold_exhaustive(scores: &[f64]) -> f64 {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    if s[0] == s[s.len() - 1] {
        return s[0];
    }
    let mean = |p: &[f64]| p.iter().sum::<f64>() / p.len() as f64;
    let sse = |p: &[f64]| {
        let m = mean(p);
        p.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    };
    let mut best = (f64::INFINITY, 1);
    for k in 1..s.len() {
        let v = sse(&s[..k]) + sse(&s[k..]);
        if v < best.0 {
            best = (v, k);
        }
    }
    (mean(&s[..best.1]) + mean(&s[best.1..])) / 2.0
}

/// Pair-count AUC.
pub fn auc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    credit += 1.0;
                } else if scores[i] == scores[j] {
                    credit += 0.5;
                }
            }
        }
    }
    credit / pairs
}

/// Point adjustment by scanning each labelled position's segment.
pub fn point_adjust_naive(raw: &[u8], labels: &[u8]) -> Vec<u8> {
    let n = labels.len();
    (0..n)
        .map(|t| {
            if labels[t] == 0 {
                return raw[t];
            }
            let mut lo = t;
            while lo > 0 && labels[lo - 1] == 1 {
                lo -= 1;
            }
            let mut hi = t;
            while hi + 1 < n && labels[hi + 1] == 1 {
                hi += 1;
            }
            u8::from(raw[lo..=hi].contains(&1))
        })
        .collect()
}

pub fn prf1_naive(pred: &[u8], labels: &[u8]) -> (f64, f64, f64) {
    let tp = pred.iter().zip(labels).filter(|(&p, &l)| p == 1 && l == 1).count() as f64;
    let pp = pred.iter().filter(|&&p| p == 1).count() as f64;
    let ap = labels.iter().filter(|&&l| l == 1).count() as f64;
    let p = if pp > 0.0 { tp / pp } else { 0.0 };
    let r = if ap > 0.0 { tp / ap } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Binary sequence with runs, so labelled segments have realistic structure.
pub fn random_runs(rng: &mut ChaCha8Rng, len: usize, p_switch: f64) -> Vec<u8> {
    let mut v = Vec::with_capacity(len);
    let mut cur = u8::from(rng.random_bool(0.3));
    for _ in 0..len {
        if rng.random_bool(p_switch) {
            cur ^= 1;
        }
        v.push(cur);
    }
    v
}

/// Scores with deliberate ties: values on a coarse grid.
pub fn random_scores(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| f64::from(rng.random_range(0..12u8)) / 8.0).collect()
}

//! Pairwise-coupled synthetic telemetry with relational anomalies.
//!
//! Features come in (leader, follower) pairs. A leader is a zero-mean mix of
//! two sinusoids and a smooth AR(1) component; its follower is an offset,
//! scaled, lagged copy plus light noise. Inside an anomaly segment the
//! follower of one pair tracks the *negated* leader. The leader is zero-mean
//! and symmetric, so the follower's marginal level and spread are unchanged
//! while its relation to the leader flips.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Anomalous interval `[start, start + len)` in absolute timesteps of the full series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalySegment {
    pub start: usize,
    pub len: usize,
}

impl AnomalySegment {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t < self.end()
    }
}

/// `count` segments of `len` steps spread evenly over the test half of a
/// series of `length` steps.
pub fn spread_segments(length: usize, count: usize, len: usize) -> Vec<AnomalySegment> {
    let half = length / 2;
    let test_len = length - half;
    let gap = test_len / (count + 1);
    (1..=count)
        .map(|k| AnomalySegment {
            start: half + k * gap - len / 2,
            len,
        })
        .collect()
}

const AR_COEF: f64 = 0.9;
const AR_STD: f64 = 0.25;
const FOLLOWER_NOISE: f64 = 0.05;

struct Pair {
    leader: usize,
    follower: usize,
    lag: usize,
    gain: f64,
}

/// Index of the pair whose coupling segment `k` inverts.
pub fn designated_pair(segment: usize, n_features: usize) -> (usize, usize) {
    let p = segment % (n_features / 2);
    (2 * p, 2 * p + 1)
}

pub fn generate_synthetic(
    n_features: usize,
    length: usize,
    segments: &[AnomalySegment],
    seed: u64,
) -> Result<Dataset> {
    if n_features < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 features, got {n_features}")));
    }
    let half = length / 2;
    if half < 2 {
        return Err(Error::InvalidArgument(format!("length {length} is too short")));
    }
    let mut sorted = segments.to_vec();
    sorted.sort_by_key(|s| s.start);
    for s in &sorted {
        if s.len == 0 || s.start < half || s.end() > length {
            return Err(Error::InvalidArgument(format!(
                "segment {}..{} must be non-empty and inside the test half {half}..{length}",
                s.start,
                s.end()
            )));
        }
    }
    for w in sorted.windows(2) {
        if w[1].start < w[0].end() {
            return Err(Error::InvalidArgument(format!(
                "segments {}..{} and {}..{} overlap",
                w[0].start,
                w[0].end(),
                w[1].start,
                w[1].end()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ar_noise = Normal::new(0.0, AR_STD).expect("valid normal");
    let obs_noise = Normal::new(0.0, FOLLOWER_NOISE).expect("valid normal");
    let max_lag = 3;

    // Leaders are generated with `max_lag` steps of history so every lag is defined.
    let mut leaders: Vec<Vec<f64>> = Vec::new();
    let mut pairs = Vec::new();
    let n_pairs = n_features / 2;
    for p in 0..n_pairs {
        let p1 = rng.random_range(20.0..60.0);
        let p2 = rng.random_range(60.0..150.0);
        let (ph1, ph2) = (rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU));
        let (a1, a2) = (rng.random_range(0.6..1.0), rng.random_range(0.3..0.6));
        let mut u = 0.0;
        let series: Vec<f64> = (0..length + max_lag)
            .map(|t| {
                u = AR_COEF * u + ar_noise.sample(&mut rng);
                let t = t as f64;
                a1 * (std::f64::consts::TAU * t / p1 + ph1).sin() + a2 * (std::f64::consts::TAU * t / p2 + ph2).sin() + u
            })
            .collect();
        leaders.push(series);
        pairs.push(Pair {
            leader: 2 * p,
            follower: 2 * p + 1,
            lag: rng.random_range(1..=max_lag),
            gain: rng.random_range(0.7..1.3),
        });
    }
    // An odd feature count leaves one free-running leader.
    let extra = (n_features % 2 == 1).then(|| {
        let period = rng.random_range(30.0..90.0);
        let mut u = 0.0;
        (0..length)
            .map(|t| {
                u = AR_COEF * u + ar_noise.sample(&mut rng);
                (std::f64::consts::TAU * t as f64 / period).sin() + u
            })
            .collect::<Vec<f64>>()
    });
    let offsets: Vec<f64> = (0..n_features).map(|_| rng.random_range(-2.0..2.0)).collect();
    let scales: Vec<f64> = (0..n_features).map(|_| rng.random_range(0.5..2.0)).collect();

    let mut values = vec![0.0; length * n_features];
    for (p, pair) in pairs.iter().enumerate() {
        let s = &leaders[p];
        for t in 0..length {
            let inverted = segments
                .iter()
                .enumerate()
                .any(|(k, seg)| seg.contains(t) && designated_pair(k, n_features).0 == pair.leader);
            let lagged = pair.gain * s[t + max_lag - pair.lag];
            let follower = if inverted { -lagged } else { lagged } + obs_noise.sample(&mut rng);
            values[t * n_features + pair.leader] = s[t + max_lag];
            values[t * n_features + pair.follower] = follower;
        }
    }
    if let Some(x) = &extra {
        for (t, &v) in x.iter().enumerate() {
            values[t * n_features + n_features - 1] = v;
        }
    }
    for (k, v) in values.iter_mut().enumerate() {
        let j = k % n_features;
        *v = offsets[j] + scales[j] * *v;
    }

    let all = Tensor::matrix(length, n_features, values)?;
    let labels: Vec<u8> = (half..length)
        .map(|t| segments.iter().any(|s| s.contains(t)) as u8)
        .collect();
    Dataset::new(
        (0..n_features).map(|j| format!("x{j}")).collect(),
        all.slice_rows(0, half)?,
        all.slice_rows(half, length)?,
        Some(labels),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_a_seed() {
        let segs = spread_segments(400, 2, 20);
        let a = generate_synthetic(5, 400, &segs, 9).unwrap();
        let b = generate_synthetic(5, 400, &segs, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(5, 400, &segs, 10).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn label_counts() {
        let none = generate_synthetic(4, 200, &[], 0).unwrap();
        assert!(none.test_labels.as_ref().unwrap().iter().all(|&l| l == 0));
        let one = generate_synthetic(4, 400, &[AnomalySegment { start: 250, len: 50 }], 0).unwrap();
        assert_eq!(one.test_labels.unwrap().iter().map(|&l| l as usize).sum::<usize>(), 50);
    }

    #[test]
    fn rejects_bad_segments() {
        assert!(generate_synthetic(4, 400, &[AnomalySegment { start: 150, len: 10 }], 0).is_err());
        let overlap = [AnomalySegment { start: 250, len: 20 }, AnomalySegment { start: 260, len: 5 }];
        assert!(generate_synthetic(4, 400, &overlap, 0).is_err());
        assert!(generate_synthetic(3, 400, &[], 0).is_err());
        assert!(generate_synthetic(4, 400, &[AnomalySegment { start: 390, len: 20 }], 0).is_err());
    }

    #[test]
    fn segments_land_in_test_half() {
        let segs = spread_segments(4000, 3, 50);
        assert_eq!(segs.len(), 3);
        for s in &segs {
            assert!(s.start >= 2000 && s.end() <= 4000);
        }
    }

    #[test]
    fn inversion_flips_the_follower_only() {
        let seg = AnomalySegment { start: 300, len: 40 };
        let clean = generate_synthetic(4, 400, &[], 3).unwrap();
        let broken = generate_synthetic(4, 400, &[seg], 3).unwrap();
        assert_eq!(clean.train, broken.train);
        for t in 0..200 {
            let (c, b) = (clean.test.row(t), broken.test.row(t));
            assert_eq!(c[0], b[0]);
            assert_eq!(c[2..], b[2..]);
            if !seg.contains(t + 200) {
                assert_eq!(c[1], b[1]);
            }
        }
    }
}

use crate::error::{Error, Result};

/// Dynamic time warping with absolute-difference local cost and steps
/// `(1,0)`, `(0,1)`, `(1,1)`; the sum of costs along the cheapest path.
///
/// With `band = Some(r)` only cells with `|i - j| <= r` are reachable
/// (Sakoe-Chiba). For equal lengths the diagonal is always inside the band.
pub fn dtw_distance(a: &[f64], b: &[f64], band: Option<usize>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("DTW needs non-empty sequences".into()));
    }
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "DTW needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let r = band.unwrap_or(n);
    let mut prev = vec![f64::INFINITY; n + 1];
    let mut cur = vec![f64::INFINITY; n + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur.fill(f64::INFINITY);
        let lo = i.saturating_sub(r).max(1);
        let hi = (i + r).min(n);
        for j in lo..=hi {
            let best = prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = (a[i - 1] - b[j - 1]).abs() + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[n];
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::InvalidArgument("no warping path inside the band".into()))
    }
}

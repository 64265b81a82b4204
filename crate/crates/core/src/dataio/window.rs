use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// A sliding-window slice of a `T × N` series, stored node-major as `N × W`.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub start: usize,
    pub values: Tensor,
    /// Observation at `start + W`, one value per feature.
    pub target: Vec<f64>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_features(&self) -> usize {
        self.values.rows()
    }

    /// Index of the forecast target in the source series.
    pub fn target_index(&self) -> usize {
        self.start + self.len()
    }
}

fn check_window_args(length: usize, w: usize, stride: usize) -> Result<()> {
    if w < 2 {
        return Err(Error::InvalidArgument(format!("window length {w} must be at least 2")));
    }
    if stride < 1 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if length < w + 1 {
        return Err(Error::Data(format!(
            "series of length {length} is too short for window {w} plus a forecast target"
        )));
    }
    Ok(())
}

/// Number of windows `make_windows` yields.
pub fn window_count(length: usize, w: usize, stride: usize) -> Result<usize> {
    check_window_args(length, w, stride)?;
    Ok((length - w - 1) / stride + 1)
}

/// Window starting at `start`; `start + w` must be a valid row of `series`.
pub fn window_at(series: &Tensor, start: usize, w: usize) -> Result<Window> {
    if series.ndim() != 2 || start + w >= series.rows() {
        return Err(Error::shape(
            "window_at",
            format!("window {start}+{w} with target in series {:?}", series.shape()),
        ));
    }
    let n = series.cols();
    let mut values = vec![0.0; n * w];
    for t in 0..w {
        for (j, &v) in series.row(start + t).iter().enumerate() {
            values[j * w + t] = v;
        }
    }
    Ok(Window {
        start,
        values: Tensor::matrix(n, w, values)?,
        target: series.row(start + w).to_vec(),
    })
}

pub fn make_windows(series: &Tensor, w: usize, stride: usize) -> Result<Vec<Window>> {
    if series.ndim() != 2 {
        return Err(Error::shape("make_windows", format!("expected T x N, got {:?}", series.shape())));
    }
    let count = window_count(series.rows(), w, stride)?;
    (0..count).map(|k| window_at(series, k * stride, w)).collect()
}

/// Chronological split: the first `floor(ratio * T)` rows train, the rest validate.
pub fn split_train_val(train: &Tensor, ratio: f64, w: usize) -> Result<(Tensor, Tensor)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    if train.ndim() != 2 {
        return Err(Error::shape("split_train_val", format!("expected T x N, got {:?}", train.shape())));
    }
    let t = train.rows();
    let cut = (ratio * t as f64).floor() as usize;
    if cut < w + 1 || t - cut < w + 1 {
        return Err(Error::Data(format!(
            "split of {t} rows at {cut} leaves a part shorter than window {w} + 1"
        )));
    }
    Ok((train.slice_rows(0, cut)?, train.slice_rows(cut, t)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(t: usize, n: usize) -> Tensor {
        Tensor::matrix(t, n, (0..t * n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn counts_and_targets() {
        let wins = make_windows(&series(12, 2), 10, 1).unwrap();
        assert_eq!(wins.len(), 2);
        assert_eq!(wins[0].start, 0);
        assert_eq!(wins[1].target_index(), 11);
        assert_eq!(wins[1].target, series(12, 2).row(11).to_vec());
        assert_eq!(make_windows(&series(11, 2), 10, 1).unwrap().len(), 1);
        assert!(make_windows(&series(10, 2), 10, 1).is_err());
    }

    #[test]
    fn window_layout_is_node_major() {
        let s = series(4, 2);
        let w = window_at(&s, 1, 2).unwrap();
        // rows of s: (0,1) (2,3) (4,5) (6,7)
        assert_eq!(w.values.data(), &[2.0, 4.0, 3.0, 5.0]);
        assert_eq!(w.target, vec![6.0, 7.0]);
    }

    #[test]
    fn strided_count_formula() {
        for (len, w, stride) in [(100, 10, 3), (25, 4, 7), (11, 10, 5)] {
            let got = make_windows(&series(len, 2), w, stride).unwrap().len();
            assert_eq!(got, (len - w - 1) / stride + 1);
        }
    }

    #[test]
    fn split_examples() {
        let (a, b) = split_train_val(&series(100, 2), 0.8, 10).unwrap();
        assert_eq!((a.rows(), b.rows()), (80, 20));
        assert!(split_train_val(&series(5, 2), 0.8, 10).is_err());
        let (a, b) = split_train_val(&series(10, 1), 0.5, 2).unwrap();
        assert_eq!(a.data(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(b.data(), &[5.0, 6.0, 7.0, 8.0, 9.0]);
        assert!(split_train_val(&series(10, 1), 1.0, 2).is_err());
    }
}

//! Forward kernels and vector-Jacobian products for every traced operation.

use super::fft;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Slope used by [`Op::LeakyRelu`].
pub const LEAKY_SLOPE: f64 = 0.01;

/// Zero padding scheme for 1-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Left-only padding: output at `t` sees inputs at `<= t`.
    Causal,
    /// Symmetric padding for odd kernels; output length equals input length.
    Same,
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    AddRow,
    Matmul,
    Conv1d { dilation: usize, padding: Padding },
    Tanh,
    Sigmoid,
    Relu,
    LeakyRelu,
    Softmax { axis: usize },
    LogSoftmax { axis: usize },
    LayerNorm { eps: f64 },
    Dropout { mask: Vec<f64> },
    Concat { axis: usize },
    Transpose,
    Reshape { shape: Vec<usize> },
    MeanAll,
    MeanAxis { axis: usize },
    Sqrt,
    Log,
    Exp,
    Scale { factor: f64 },
    Rfft,
    Irfft { n: usize },
    MaskBins { mask: Vec<f64> },
    NormalizeRows,
    Diagonal,
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::AddRow => "add_row",
            Op::Matmul => "matmul",
            Op::Conv1d { .. } => "conv1d",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::Relu => "relu",
            Op::LeakyRelu => "leaky_relu",
            Op::Softmax { .. } => "softmax",
            Op::LogSoftmax { .. } => "log_softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Dropout { .. } => "dropout",
            Op::Concat { .. } => "concat",
            Op::Transpose => "transpose",
            Op::Reshape { .. } => "reshape",
            Op::MeanAll => "mean",
            Op::MeanAxis { .. } => "mean_axis",
            Op::Sqrt => "sqrt",
            Op::Log => "log",
            Op::Exp => "exp",
            Op::Scale { .. } => "scale",
            Op::Rfft => "rfft",
            Op::Irfft { .. } => "irfft",
            Op::MaskBins { .. } => "mask_bins",
            Op::NormalizeRows => "normalize_rows",
            Op::Diagonal => "diagonal",
        }
    }
}

/// `(outer, len, inner)` decomposition of `shape` around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn same_shape(op: &Op, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op.name(),
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn conv_offset(j: usize, k: usize, dilation: usize, padding: Padding) -> isize {
    match padding {
        Padding::Causal => (j as isize - (k as isize - 1)) * dilation as isize,
        Padding::Same => (j as isize - (k as isize - 1) / 2) * dilation as isize,
    }
}

/// Range of output positions `t` for which `t + off` is a valid input index.
fn valid_range(len: usize, off: isize) -> (usize, usize) {
    let lo = if off < 0 { (-off) as usize } else { 0 };
    let hi = if off > 0 {
        len.saturating_sub(off as usize)
    } else {
        len
    };
    (lo.min(len), hi)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn layer_norm_stats(x: &[f64], eps: f64) -> (f64, f64) {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    (mean, (var + eps).sqrt())
}

pub(crate) fn eval(op: &Op, ins: &[&Tensor]) -> Result<Tensor> {
    match op {
        Op::Leaf => unreachable!("leaf nodes carry their own value"),
        Op::Add => {
            same_shape(op, ins[0], ins[1])?;
            Ok(zip_map(ins[0], ins[1], |a, b| a + b))
        }
        Op::Sub => {
            same_shape(op, ins[0], ins[1])?;
            Ok(zip_map(ins[0], ins[1], |a, b| a - b))
        }
        Op::Mul => {
            same_shape(op, ins[0], ins[1])?;
            Ok(zip_map(ins[0], ins[1], |a, b| a * b))
        }
        Op::AddRow => {
            let (x, b) = (ins[0], ins[1]);
            let d = *x.shape().last().unwrap_or(&1);
            if b.ndim() != 1 || b.len() != d || x.ndim() == 0 {
                return Err(Error::shape(
                    op.name(),
                    format!("cannot add {:?} to rows of {:?}", b.shape(), x.shape()),
                ));
            }
            let mut out = x.clone();
            for row in out.data_mut().chunks_mut(d) {
                for (o, &bv) in row.iter_mut().zip(b.data()) {
                    *o += bv;
                }
            }
            Ok(out)
        }
        Op::Matmul => {
            let (a, b) = (ins[0], ins[1]);
            if a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows() {
                return Err(Error::shape(
                    op.name(),
                    format!("{:?} x {:?}", a.shape(), b.shape()),
                ));
            }
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            Ok(Tensor::from_parts(
                vec![m, n],
                matmul_kernel(a.data(), b.data(), m, k, n),
            ))
        }
        Op::Conv1d { dilation, padding } => {
            let (x, w, bias) = (ins[0], ins[1], ins[2]);
            if x.ndim() != 3
                || w.ndim() != 3
                || bias.ndim() != 1
                || w.shape()[1] != x.shape()[1]
                || bias.len() != w.shape()[0]
                || *dilation == 0
                || (*padding == Padding::Same && w.shape()[2] % 2 == 0)
            {
                return Err(Error::shape(
                    op.name(),
                    format!(
                        "input {:?}, weight {:?}, bias {:?}, dilation {dilation}, {padding:?}",
                        x.shape(),
                        w.shape(),
                        bias.shape()
                    ),
                ));
            }
            let (nb, cin, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (cout, k) = (w.shape()[0], w.shape()[2]);
            let (xd, wd) = (x.data(), w.data());
            let mut out = vec![0.0; nb * cout * len];
            for b in 0..nb {
                for o in 0..cout {
                    let orow = &mut out[(b * cout + o) * len..(b * cout + o + 1) * len];
                    orow.iter_mut().for_each(|v| *v = bias.data()[o]);
                    for c in 0..cin {
                        let xrow = &xd[(b * cin + c) * len..(b * cin + c + 1) * len];
                        for j in 0..k {
                            let wv = wd[(o * cin + c) * k + j];
                            if wv == 0.0 {
                                continue;
                            }
                            let off = conv_offset(j, k, *dilation, *padding);
                            let (lo, hi) = valid_range(len, off);
                            if lo >= hi {
                                continue;
                            }
                            let src = &xrow[(lo as isize + off) as usize..(hi as isize + off) as usize];
                            for (o, &xv) in orow[lo..hi].iter_mut().zip(src) {
                                *o += wv * xv;
                            }
                        }
                    }
                }
            }
            Ok(Tensor::from_parts(vec![nb, cout, len], out))
        }
        Op::Tanh => Ok(ins[0].map(f64::tanh)),
        Op::Sigmoid => Ok(ins[0].map(sigmoid)),
        Op::Relu => Ok(ins[0].map(|v| v.max(0.0))),
        Op::LeakyRelu => Ok(ins[0].map(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v })),
        Op::Softmax { axis } | Op::LogSoftmax { axis } => {
            let x = ins[0];
            if *axis >= x.ndim() {
                return Err(Error::shape(
                    op.name(),
                    format!("axis {axis} out of range for {:?}", x.shape()),
                ));
            }
            let log = matches!(op, Op::LogSoftmax { .. });
            let (outer, len, inner) = split_axis(x.shape(), *axis);
            let xd = x.data();
            let mut out = vec![0.0; x.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |a: usize| (o * len + a) * inner + i;
                    let max = (0..len).map(|a| xd[idx(a)]).fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = (0..len).map(|a| (xd[idx(a)] - max).exp()).sum();
                    for a in 0..len {
                        out[idx(a)] = if log {
                            xd[idx(a)] - max - sum.ln()
                        } else {
                            (xd[idx(a)] - max).exp() / sum
                        };
                    }
                }
            }
            Ok(Tensor::from_parts(x.shape().to_vec(), out))
        }
        Op::LayerNorm { eps } => {
            let (x, gain, bias) = (ins[0], ins[1], ins[2]);
            let d = *x.shape().last().unwrap_or(&0);
            if x.ndim() == 0 || gain.shape() != [d] || bias.shape() != [d] {
                return Err(Error::shape(
                    op.name(),
                    format!(
                        "input {:?}, gain {:?}, bias {:?}",
                        x.shape(),
                        gain.shape(),
                        bias.shape()
                    ),
                ));
            }
            let mut out = vec![0.0; x.len()];
            for (row, orow) in x.data().chunks(d).zip(out.chunks_mut(d)) {
                let (mean, sd) = layer_norm_stats(row, *eps);
                for j in 0..d {
                    orow[j] = gain.data()[j] * (row[j] - mean) / sd + bias.data()[j];
                }
            }
            Ok(Tensor::from_parts(x.shape().to_vec(), out))
        }
        Op::Dropout { mask } => {
            if mask.len() != ins[0].len() {
                return Err(Error::shape(op.name(), "mask length differs from input"));
            }
            let data = ins[0].data().iter().zip(mask).map(|(a, m)| a * m).collect();
            Ok(Tensor::from_parts(ins[0].shape().to_vec(), data))
        }
        Op::Concat { axis } => {
            let first = ins[0];
            if *axis >= first.ndim() {
                return Err(Error::shape(op.name(), format!("axis {axis} for {:?}", first.shape())));
            }
            let mut total = 0;
            for t in ins {
                let ok = t.ndim() == first.ndim()
                    && t.shape()
                        .iter()
                        .zip(first.shape())
                        .enumerate()
                        .all(|(i, (a, b))| i == *axis || a == b);
                if !ok {
                    let shapes: Vec<_> = ins.iter().map(|t| t.shape().to_vec()).collect();
                    return Err(Error::shape(op.name(), format!("incompatible parts {shapes:?}")));
                }
                total += t.shape()[*axis];
            }
            let mut shape = first.shape().to_vec();
            shape[*axis] = total;
            let (outer, _, inner) = split_axis(&shape, *axis);
            let mut out = Vec::with_capacity(shape.iter().product());
            for o in 0..outer {
                for t in ins {
                    let chunk = t.shape()[*axis] * inner;
                    out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
                }
            }
            Ok(Tensor::from_parts(shape, out))
        }
        Op::Transpose => {
            if ins[0].ndim() != 2 {
                return Err(Error::shape(op.name(), format!("needs a matrix, got {:?}", ins[0].shape())));
            }
            Ok(ins[0].transposed())
        }
        Op::Reshape { shape } => ins[0].clone().reshaped(shape.clone()),
        Op::MeanAll => Ok(Tensor::scalar(ins[0].sum() / ins[0].len() as f64)),
        Op::MeanAxis { axis } => {
            let x = ins[0];
            if *axis >= x.ndim() {
                return Err(Error::shape(op.name(), format!("axis {axis} for {:?}", x.shape())));
            }
            let (outer, len, inner) = split_axis(x.shape(), *axis);
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for a in 0..len {
                    let src = &x.data()[(o * len + a) * inner..(o * len + a + 1) * inner];
                    for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            out.iter_mut().for_each(|v| *v /= len as f64);
            let mut shape = x.shape().to_vec();
            shape.remove(*axis);
            Ok(Tensor::from_parts(shape, out))
        }
        Op::Sqrt => Ok(ins[0].map(f64::sqrt)),
        Op::Log => Ok(ins[0].map(f64::ln)),
        Op::Exp => Ok(ins[0].map(f64::exp)),
        Op::Scale { factor } => Ok(ins[0].map(|v| v * factor)),
        Op::Rfft => {
            let x = ins[0];
            if x.ndim() == 0 {
                return Err(Error::shape(op.name(), "scalar input"));
            }
            let n = *x.shape().last().unwrap();
            let mut shape = x.shape().to_vec();
            *shape.last_mut().unwrap() = fft::bins(n);
            shape.push(2);
            Ok(Tensor::from_parts(shape, fft::rfft_rows(x.data(), n)))
        }
        Op::Irfft { n } => {
            let s = ins[0];
            let nd = s.ndim();
            if nd < 2 || s.shape()[nd - 1] != 2 || s.shape()[nd - 2] != fft::bins(*n) {
                return Err(Error::shape(
                    op.name(),
                    format!("spectrum {:?} does not match length {n}", s.shape()),
                ));
            }
            let mut shape = s.shape()[..nd - 1].to_vec();
            *shape.last_mut().unwrap() = *n;
            Ok(Tensor::from_parts(shape, fft::irfft_rows(s.data(), *n)))
        }
        Op::MaskBins { mask } => {
            let s = ins[0];
            if s.ndim() < 2 || *s.shape().last().unwrap() != 2 || mask.len() * 2 != s.len() {
                return Err(Error::shape(
                    op.name(),
                    format!("mask of {} bins for spectrum {:?}", mask.len(), s.shape()),
                ));
            }
            let data = s
                .data()
                .chunks(2)
                .zip(mask)
                .flat_map(|(c, &m)| [c[0] * m, c[1] * m])
                .collect();
            Ok(Tensor::from_parts(s.shape().to_vec(), data))
        }
        Op::NormalizeRows => {
            let x = ins[0];
            if x.ndim() != 2 {
                return Err(Error::shape(op.name(), format!("needs a matrix, got {:?}", x.shape())));
            }
            let d = x.cols();
            let mut out = x.data().to_vec();
            for row in out.chunks_mut(d) {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.iter_mut().for_each(|v| *v /= norm);
                }
            }
            Ok(Tensor::from_parts(x.shape().to_vec(), out))
        }
        Op::Diagonal => {
            let x = ins[0];
            if x.ndim() != 2 || x.rows() != x.cols() {
                return Err(Error::shape(op.name(), format!("needs a square matrix, got {:?}", x.shape())));
            }
            let n = x.rows();
            Ok(Tensor::from_parts(vec![n], (0..n).map(|i| x.at2(i, i)).collect()))
        }
    }
}

/// Gradients with respect to each input. Entries for inputs with
/// `need[i] == false` may be `None`.
pub(crate) fn vjp(op: &Op, ins: &[&Tensor], out: &Tensor, g: &Tensor, need: &[bool]) -> Vec<Option<Tensor>> {
    let want = |i: usize| need.get(i).copied().unwrap_or(false);
    match op {
        Op::Leaf => Vec::new(),
        Op::Add => vec![want(0).then(|| g.clone()), want(1).then(|| g.clone())],
        Op::Sub => vec![want(0).then(|| g.clone()), want(1).then(|| g.map(|v| -v))],
        Op::Mul => vec![
            want(0).then(|| zip_map(g, ins[1], |a, b| a * b)),
            want(1).then(|| zip_map(g, ins[0], |a, b| a * b)),
        ],
        Op::AddRow => {
            let d = ins[1].len();
            let gb = want(1).then(|| {
                let mut acc = vec![0.0; d];
                for row in g.data().chunks(d) {
                    for (a, v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                Tensor::from_parts(vec![d], acc)
            });
            vec![want(0).then(|| g.clone()), gb]
        }
        Op::Matmul => {
            let (a, b) = (ins[0], ins[1]);
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            let ga = want(0).then(|| {
                let bt = b.transposed();
                Tensor::from_parts(vec![m, k], matmul_kernel(g.data(), bt.data(), m, n, k))
            });
            let gb = want(1).then(|| {
                let at = a.transposed();
                Tensor::from_parts(vec![k, n], matmul_kernel(at.data(), g.data(), k, m, n))
            });
            vec![ga, gb]
        }
        Op::Conv1d { dilation, padding } => {
            let (x, w) = (ins[0], ins[1]);
            let (nb, cin, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (cout, k) = (w.shape()[0], w.shape()[2]);
            let (xd, wd, gd) = (x.data(), w.data(), g.data());
            let mut gx = want(0).then(|| vec![0.0; x.len()]);
            let mut gw = want(1).then(|| vec![0.0; w.len()]);
            for b in 0..nb {
                for o in 0..cout {
                    let grow = &gd[(b * cout + o) * len..(b * cout + o + 1) * len];
                    for c in 0..cin {
                        let xbase = (b * cin + c) * len;
                        for j in 0..k {
                            let widx = (o * cin + c) * k + j;
                            let off = conv_offset(j, k, *dilation, *padding);
                            let (lo, hi) = valid_range(len, off);
                            if lo >= hi {
                                continue;
                            }
                            let span = (xbase as isize + lo as isize + off) as usize
                                ..(xbase as isize + hi as isize + off) as usize;
                            let gsrc = &grow[lo..hi];
                            if let Some(gw) = gw.as_mut() {
                                let mut acc = 0.0;
                                for (&gv, &xv) in gsrc.iter().zip(&xd[span.clone()]) {
                                    acc += gv * xv;
                                }
                                gw[widx] += acc;
                            }
                            if let Some(gx) = gx.as_mut() {
                                let wv = wd[widx];
                                if wv != 0.0 {
                                    for (d, &gv) in gx[span].iter_mut().zip(gsrc) {
                                        *d += wv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            let gbias = want(2).then(|| {
                let mut acc = vec![0.0; cout];
                for b in 0..nb {
                    for o in 0..cout {
                        acc[o] += gd[(b * cout + o) * len..(b * cout + o + 1) * len].iter().sum::<f64>();
                    }
                }
                Tensor::from_parts(vec![cout], acc)
            });
            vec![
                gx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
                gw.map(|d| Tensor::from_parts(w.shape().to_vec(), d)),
                gbias,
            ]
        }
        Op::Tanh => vec![Some(zip_map(g, out, |g, y| g * (1.0 - y * y)))],
        Op::Sigmoid => vec![Some(zip_map(g, out, |g, y| g * y * (1.0 - y)))],
        Op::Relu => vec![Some(zip_map(g, ins[0], |g, x| if x > 0.0 { g } else { 0.0 }))],
        Op::LeakyRelu => vec![Some(zip_map(g, ins[0], |g, x| {
            if x > 0.0 {
                g
            } else {
                LEAKY_SLOPE * g
            }
        }))],
        Op::Softmax { axis } | Op::LogSoftmax { axis } => {
            let log = matches!(op, Op::LogSoftmax { .. });
            let (outer, len, inner) = split_axis(out.shape(), *axis);
            let (yd, gd) = (out.data(), g.data());
            let mut gx = vec![0.0; out.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |a: usize| (o * len + a) * inner + i;
                    if log {
                        let gsum: f64 = (0..len).map(|a| gd[idx(a)]).sum();
                        for a in 0..len {
                            gx[idx(a)] = gd[idx(a)] - yd[idx(a)].exp() * gsum;
                        }
                    } else {
                        let dot: f64 = (0..len).map(|a| gd[idx(a)] * yd[idx(a)]).sum();
                        for a in 0..len {
                            gx[idx(a)] = yd[idx(a)] * (gd[idx(a)] - dot);
                        }
                    }
                }
            }
            vec![Some(Tensor::from_parts(out.shape().to_vec(), gx))]
        }
        Op::LayerNorm { eps } => {
            let (x, gain) = (ins[0], ins[1]);
            let d = gain.len();
            let mut gx = vec![0.0; x.len()];
            let mut ggain = vec![0.0; d];
            let mut gbias = vec![0.0; d];
            let mut xhat = vec![0.0; d];
            let mut gxhat = vec![0.0; d];
            for ((row, grow), gxrow) in x.data().chunks(d).zip(g.data().chunks(d)).zip(gx.chunks_mut(d)) {
                let (mean, sd) = layer_norm_stats(row, *eps);
                for j in 0..d {
                    xhat[j] = (row[j] - mean) / sd;
                    gxhat[j] = grow[j] * gain.data()[j];
                    ggain[j] += grow[j] * xhat[j];
                    gbias[j] += grow[j];
                }
                let m1 = gxhat.iter().sum::<f64>() / d as f64;
                let m2 = gxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                for j in 0..d {
                    gxrow[j] = (gxhat[j] - m1 - xhat[j] * m2) / sd;
                }
            }
            vec![
                want(0).then(|| Tensor::from_parts(x.shape().to_vec(), gx)),
                want(1).then(|| Tensor::from_parts(vec![d], ggain)),
                want(2).then(|| Tensor::from_parts(vec![d], gbias)),
            ]
        }
        Op::Dropout { mask } => {
            let data = g.data().iter().zip(mask).map(|(a, m)| a * m).collect();
            vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
        }
        Op::Concat { axis } => {
            let (outer, _, inner) = split_axis(out.shape(), *axis);
            let total_chunk = out.shape()[*axis] * inner;
            let mut offset = 0;
            let mut grads = Vec::with_capacity(ins.len());
            for (idx, t) in ins.iter().enumerate() {
                let chunk = t.shape()[*axis] * inner;
                if want(idx) {
                    let mut d = Vec::with_capacity(t.len());
                    for o in 0..outer {
                        let start = o * total_chunk + offset;
                        d.extend_from_slice(&g.data()[start..start + chunk]);
                    }
                    grads.push(Some(Tensor::from_parts(t.shape().to_vec(), d)));
                } else {
                    grads.push(None);
                }
                offset += chunk;
            }
            grads
        }
        Op::Transpose => vec![Some(g.transposed())],
        Op::Reshape { .. } => vec![Some(Tensor::from_parts(ins[0].shape().to_vec(), g.data().to_vec()))],
        Op::MeanAll => {
            let n = ins[0].len() as f64;
            vec![Some(Tensor::full(ins[0].shape(), g.item() / n))]
        }
        Op::MeanAxis { axis } => {
            let x = ins[0];
            let (outer, len, inner) = split_axis(x.shape(), *axis);
            let mut gx = vec![0.0; x.len()];
            for o in 0..outer {
                for a in 0..len {
                    for i in 0..inner {
                        gx[(o * len + a) * inner + i] = g.data()[o * inner + i] / len as f64;
                    }
                }
            }
            vec![Some(Tensor::from_parts(x.shape().to_vec(), gx))]
        }
        Op::Sqrt => vec![Some(zip_map(g, out, |g, y| g / (2.0 * y)))],
        Op::Log => vec![Some(zip_map(g, ins[0], |g, x| g / x))],
        Op::Exp => vec![Some(zip_map(g, out, |g, y| g * y))],
        Op::Scale { factor } => vec![Some(g.map(|v| v * factor))],
        Op::Rfft => {
            let n = *ins[0].shape().last().unwrap();
            vec![Some(Tensor::from_parts(
                ins[0].shape().to_vec(),
                fft::rfft_rows_backward(g.data(), n),
            ))]
        }
        Op::Irfft { n } => vec![Some(Tensor::from_parts(
            ins[0].shape().to_vec(),
            fft::irfft_rows_backward(g.data(), *n),
        ))],
        Op::MaskBins { mask } => {
            let data = g
                .data()
                .chunks(2)
                .zip(mask)
                .flat_map(|(c, &m)| [c[0] * m, c[1] * m])
                .collect();
            vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
        }
        Op::NormalizeRows => {
            let x = ins[0];
            let d = x.cols();
            let mut gx = vec![0.0; x.len()];
            for ((xrow, yrow), (grow, gxrow)) in x
                .data()
                .chunks(d)
                .zip(out.data().chunks(d))
                .zip(g.data().chunks(d).zip(gx.chunks_mut(d)))
            {
                let norm = xrow.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    continue;
                }
                let dot: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                for j in 0..d {
                    gxrow[j] = (grow[j] - yrow[j] * dot) / norm;
                }
            }
            vec![Some(Tensor::from_parts(x.shape().to_vec(), gx))]
        }
        Op::Diagonal => {
            let n = ins[0].rows();
            let mut gx = vec![0.0; n * n];
            for i in 0..n {
                gx[i * n + i] = g.data()[i];
            }
            vec![Some(Tensor::from_parts(vec![n, n], gx))]
        }
    }
}

use rand::Rng;

use super::ops::{self, Op, Padding};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    requires_grad: bool,
    label: Option<String>,
}

/// Define-by-run computation trace.
///
/// Every builder method evaluates its node immediately, so nodes are always in
/// topological order. [`Graph::forward`] replays the trace after leaf values
/// are changed; data-dependent decisions taken at build time (dropout masks,
/// spectral bin masks) are part of the trace and are replayed unchanged.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    stale: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool, label: Option<String>) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value,
            requires_grad,
            label,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Learnable leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, true, None)
    }

    pub fn param_named(&mut self, name: impl Into<String>, value: Tensor) -> NodeId {
        self.leaf(value, true, Some(name.into()))
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false, None)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.nodes[id.0].label.as_deref()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf)
    }

    /// Ids of every learnable leaf, in creation order.
    pub fn params(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .map(NodeId)
            .filter(|&id| self.is_leaf(id) && self.requires_grad(id))
            .collect()
    }

    /// Replace a leaf value. The trace becomes stale until [`Graph::forward`] runs.
    pub fn set_value(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::InvalidArgument(format!("node {} is not a leaf", id.0)));
        }
        if node.value.shape() != value.shape() {
            return Err(Error::shape(
                "set_value",
                format!("{:?} vs {:?}", node.value.shape(), value.shape()),
            ));
        }
        node.value = value;
        self.stale = true;
        Ok(())
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>) -> Result<NodeId> {
        let value = {
            let ins: Vec<&Tensor> = inputs.iter().map(|i| &self.nodes[i.0].value).collect();
            ops::eval(&op, &ins)?
        };
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
            label: None,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Recompute every non-leaf node in order and return the final node's value.
    pub fn forward(&mut self) -> Result<Tensor> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument("forward on an empty graph".into()));
        }
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let value = {
                let node = &self.nodes[i];
                let ins: Vec<&Tensor> = node.inputs.iter().map(|j| &self.nodes[j.0].value).collect();
                ops::eval(&node.op, &ins)?
            };
            self.nodes[i].value = value;
        }
        self.stale = false;
        Ok(self.nodes.last().unwrap().value.clone())
    }

    /// Reverse-mode sweep from `output`. With no seed the output must be a
    /// single element and the seed defaults to 1.
    pub fn backward(&mut self, output: NodeId, seed: Option<Tensor>) -> Result<()> {
        if self.stale {
            return Err(Error::StaleTrace);
        }
        let out_shape = self.nodes[output.0].value.shape().to_vec();
        let seed = match seed {
            Some(s) if s.shape() != out_shape.as_slice() => {
                return Err(Error::shape(
                    "backward",
                    format!("seed {:?} vs output {:?}", s.shape(), out_shape),
                ))
            }
            Some(s) => s,
            None if self.nodes[output.0].value.len() == 1 => Tensor::full(&out_shape, 1.0),
            None => {
                return Err(Error::shape(
                    "backward",
                    format!("implicit seed needs a scalar output, got {out_shape:?}"),
                ))
            }
        };

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let ins: Vec<&Tensor> = node.inputs.iter().map(|j| &self.nodes[j.0].value).collect();
            let need: Vec<bool> = node.inputs.iter().map(|j| self.nodes[j.0].requires_grad).collect();
            let input_grads = ops::vjp(&node.op, &ins, &node.value, &g, &need);
            for (j, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !self.nodes[j.0].requires_grad {
                    continue;
                }
                match &mut grads[j.0] {
                    Some(acc) => acc.add_assign(&ig),
                    slot => *slot = Some(ig),
                }
            }
            grads[i] = Some(g);
        }
        for (i, g) in grads.iter_mut().enumerate() {
            if !self.nodes[i].requires_grad {
                *g = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradient from the last [`Graph::backward`]; `None` for nodes that do not
    /// require gradients or were not reached.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn zero_grads(&mut self) {
        self.grads.clear();
    }

    pub(crate) fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub(crate) fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    /// Nodes that consume `id` directly.
    pub(crate) fn consumers(&self, id: NodeId) -> impl Iterator<Item = (NodeId, &Op)> {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.inputs.contains(&id))
            .map(|(i, n)| (NodeId(i), &n.op))
    }

    // --- operations -------------------------------------------------------

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add, vec![a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub, vec![a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul, vec![a, b])
    }

    /// Adds a length-`d` vector to every trailing row of `x`.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::AddRow, vec![x, bias])
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Matmul, vec![a, b])
    }

    /// `x @ w + b` for `x: [m, k]`, `w: [k, n]`, `b: [n]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    /// `x: [batch, c_in, len]`, `w: [c_out, c_in, k]`, `b: [c_out]`.
    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        dilation: usize,
        padding: Padding,
    ) -> Result<NodeId> {
        self.push(Op::Conv1d { dilation, padding }, vec![x, w, b])
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Tanh, vec![x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid, vec![x])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Relu, vec![x])
    }

    pub fn leaky_relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::LeakyRelu, vec![x])
    }

    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.push(Op::Softmax { axis }, vec![x])
    }

    pub fn log_softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.push(Op::LogSoftmax { axis }, vec![x])
    }

    /// Normalises over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        self.push(Op::LayerNorm { eps }, vec![x, gain, bias])
    }

    /// Inverted dropout: kept units are scaled by `1 / (1 - p)`. With `rng`
    /// absent (inference) or `p == 0` this is the identity.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: NodeId, p: f64, rng: Option<&mut R>) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout rate {p} outside [0, 1)")));
        }
        let Some(rng) = rng else { return Ok(x) };
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.push(Op::Dropout { mask }, vec![x])
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no inputs"));
        }
        self.push(Op::Concat { axis }, parts.to_vec())
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Transpose, vec![x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.push(Op::Reshape { shape: shape.to_vec() }, vec![x])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::MeanAll, vec![x])
    }

    pub fn mean_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.push(Op::MeanAxis { axis }, vec![x])
    }

    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sqrt, vec![x])
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Log, vec![x])
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Exp, vec![x])
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        self.push(Op::Scale { factor }, vec![x])
    }

    /// Real FFT along the last axis: `[..., n]` to `[..., n/2 + 1, 2]`.
    pub fn rfft(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Rfft, vec![x])
    }

    /// Inverse of [`Graph::rfft`] for signals of length `n`.
    pub fn irfft(&mut self, spectrum: NodeId, n: usize) -> Result<NodeId> {
        self.push(Op::Irfft { n }, vec![spectrum])
    }

    /// Multiplies each `(re, im)` bin by a fixed 0/1 mask of shape `[..., bins]`.
    pub fn mask_bins(&mut self, spectrum: NodeId, mask: Vec<bool>) -> Result<NodeId> {
        let mask = mask.into_iter().map(|m| if m { 1.0 } else { 0.0 }).collect();
        self.push(Op::MaskBins { mask }, vec![spectrum])
    }

    /// Scales each row to unit L2 norm; zero rows stay zero.
    pub fn normalize_rows(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::NormalizeRows, vec![x])
    }

    pub fn diagonal(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Diagonal, vec![x])
    }

    /// Square root of the mean squared difference.
    pub fn rmse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let d = self.sub(pred, target)?;
        let sq = self.mul(d, d)?;
        let m = self.mean(sq)?;
        self.sqrt(m)
    }
}

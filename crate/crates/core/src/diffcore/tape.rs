use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use super::kernels::{self, ConvDims};
use super::tensor::{complex_to_planar, planar_to_complex, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A fixed complex-linear operator usable as a tape node. Inputs and outputs
/// are complex vectors; the tape feeds them as planar real pairs, so the
/// real transpose of the node is exactly the complex adjoint.
pub trait LinearMap: Send + Sync {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64>;
    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64>;
    fn name(&self) -> &str {
        "linear"
    }
}

#[derive(Clone)]
enum OpKind {
    Leaf { param: bool },
    Conv2d { pad: usize },
    BatchNorm { eps: f64 },
    Relu,
    Upsample,
    PixMul { coil: Arc<Tensor> },
    Linear { map: Arc<dyn LinearMap> },
    L2 { target: Arc<Tensor> },
    Sum,
    Add,
}

impl fmt::Debug for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            OpKind::Leaf { param: true } => "param",
            OpKind::Leaf { param: false } => "leaf",
            OpKind::Conv2d { .. } => "conv2d",
            OpKind::BatchNorm { .. } => "batchnorm2d",
            OpKind::Relu => "relu",
            OpKind::Upsample => "upsample_nn2x",
            OpKind::PixMul { .. } => "complex_pixmul",
            OpKind::Linear { map } => map.name(),
            OpKind::L2 { .. } => "l2_loss",
            OpKind::Sum => "sum",
            OpKind::Add => "add",
        };
        f.write_str(name)
    }
}

#[derive(Debug)]
enum Saved {
    None,
    Padded(Vec<f64>),
    Norm { xhat: Vec<f64>, inv_std: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    kind: OpKind,
    inputs: Vec<NodeId>,
    saved: Saved,
    value: Tensor,
}

/// Append-only record of a forward computation. Inputs of every node
/// precede it, so a reverse sweep over the node list is a valid
/// topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a constant input (latent, coil map, ...). It may receive a
    /// gradient but is never reported as a parameter.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, false)
    }

    /// Records a trainable parameter.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor, param: bool) -> NodeId {
        self.nodes.push(Node {
            kind: OpKind::Leaf { param },
            inputs: Vec::new(),
            saved: Saved::None,
            value,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_param(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].kind, OpKind::Leaf { param: true })
    }

    /// Name of the operator that produced `id`, for diagnostics.
    pub fn op_name(&self, id: NodeId) -> String {
        format!("{:?}", self.nodes[id.0].kind)
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::invalid(format!("node {} is not on this tape", id.0)))
        }
    }

    fn record(&mut self, kind: OpKind, inputs: Vec<NodeId>) -> Result<NodeId> {
        for &i in &inputs {
            self.check(i)?;
        }
        let values: Vec<&Tensor> = inputs.iter().map(|&i| &self.nodes[i.0].value).collect();
        let (value, saved) = evaluate(&kind, &values)?;
        self.nodes.push(Node {
            kind,
            inputs,
            saved,
            value,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Re-evaluates every node from the leaf values.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let value = match node.kind {
                OpKind::Leaf { .. } => node.value.clone(),
                _ => {
                    let inputs: Vec<&Tensor> = node.inputs.iter().map(|i| &values[i.0]).collect();
                    evaluate(&node.kind, &inputs)?.0
                }
            };
            values.push(value);
        }
        Ok(values)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        self.check(loss)?;
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, node {} has shape {:?}",
                loss.0,
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let contributions = self.node_backward(node, &g);
            grads[idx] = Some(g);
            for (input, gin) in node.inputs.iter().zip(contributions) {
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&gin).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(gin),
                }
            }
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| g.map(|g| Tensor::new(node.value.shape().to_vec(), g).expect("gradient shape")))
            .collect();
        Ok(Gradients { grads })
    }

    fn node_backward(&self, node: &Node, g: &[f64]) -> Vec<Vec<f64>> {
        let input = |k: usize| &self.nodes[node.inputs[k].0].value;
        match (&node.kind, &node.saved) {
            (OpKind::Leaf { .. }, _) => Vec::new(),
            (OpKind::Conv2d { pad }, Saved::Padded(cols)) => {
                let dims = conv_dims(input(0), input(1), *pad).expect("validated at record time");
                let (gx, gw, gb) = kernels::conv2d_backward(g, cols, input(1).data(), &dims);
                vec![gx, gw, gb]
            }
            (OpKind::BatchNorm { .. }, Saved::Norm { xhat, inv_std }) => {
                let (gx, ggamma, gbeta) =
                    kernels::batchnorm_backward(g, xhat, inv_std, input(1).data());
                vec![gx, ggamma, gbeta]
            }
            (OpKind::Relu, _) => {
                let x = input(0).data();
                vec![g.iter().zip(x).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect()]
            }
            (OpKind::Upsample, _) => {
                let (c, h, w) = input(0).chw().expect("validated at record time");
                vec![kernels::upsample2x_backward(g, c, h, w)]
            }
            (OpKind::PixMul { coil }, _) => {
                vec![kernels::complex_mul_planar(g, coil.data(), true)]
            }
            (OpKind::Linear { map }, _) => {
                let adj = map.adjoint(&planar_to_complex(g));
                let mut out = vec![0.0; input(0).len()];
                complex_to_planar(&adj, &mut out);
                vec![out]
            }
            (OpKind::L2 { target }, _) => {
                let scale = 2.0 * g[0];
                vec![input(0)
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(p, t)| scale * (p - t))
                    .collect()]
            }
            (OpKind::Sum, _) => vec![vec![g[0]; input(0).len()]],
            (OpKind::Add, _) => node.inputs.iter().map(|_| g.to_vec()).collect(),
            (kind, _) => unreachable!("missing saved context for {kind:?}"),
        }
    }
}

/// Gradients from one backward sweep, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the loss does not depend on the node.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// The gradient, or zeros shaped like the node's value.
    pub fn get_or_zeros(&self, tape: &Tape, id: NodeId) -> Tensor {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(id).shape().to_vec()))
    }

    /// Gradients of all parameter nodes, in recording order.
    pub fn params<'a>(&'a self, tape: &'a Tape) -> impl Iterator<Item = (NodeId, Tensor)> + 'a {
        (0..tape.len())
            .map(NodeId)
            .filter(|&id| tape.is_param(id))
            .map(move |id| (id, self.get_or_zeros(tape, id)))
    }
}

fn conv_dims(x: &Tensor, w: &Tensor, pad: usize) -> Result<ConvDims> {
    let (in_ch, height, width) = x.chw()?;
    let [out_ch, w_in, kh, kw] = w.shape()[..] else {
        return Err(Error::shape(format!(
            "conv weight must be out×in×kh×kw, got {:?}",
            w.shape()
        )));
    };
    if w_in != in_ch {
        return Err(Error::shape(format!(
            "conv weight expects {w_in} input channels, input has {in_ch}"
        )));
    }
    if height + 2 * pad < kh || width + 2 * pad < kw {
        return Err(Error::shape(format!(
            "kernel {kh}x{kw} larger than padded input {height}x{width} (pad {pad})"
        )));
    }
    Ok(ConvDims {
        in_ch,
        height,
        width,
        out_ch,
        kh,
        kw,
        pad,
    })
}

fn check_channel_vector(t: &Tensor, channels: usize, what: &str) -> Result<()> {
    if t.len() != channels {
        return Err(Error::shape(format!(
            "{what} has {} entries, expected one per channel ({channels})",
            t.len()
        )));
    }
    Ok(())
}

fn evaluate(kind: &OpKind, inputs: &[&Tensor]) -> Result<(Tensor, Saved)> {
    match kind {
        OpKind::Leaf { .. } => unreachable!("leaves are not evaluated"),
        OpKind::Conv2d { pad } => {
            let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
            let dims = conv_dims(x, w, *pad)?;
            check_channel_vector(b, dims.out_ch, "conv bias")?;
            let (out, cols) = kernels::conv2d_forward(x.data(), w.data(), b.data(), &dims);
            let shape = vec![dims.out_ch, dims.out_h(), dims.out_w()];
            Ok((Tensor::new(shape, out)?, Saved::Padded(cols)))
        }
        OpKind::BatchNorm { eps } => {
            let (x, gamma, beta) = (inputs[0], inputs[1], inputs[2]);
            let (c, _, _) = x.chw()?;
            check_channel_vector(gamma, c, "batch-norm gamma")?;
            check_channel_vector(beta, c, "batch-norm beta")?;
            let (out, xhat, inv_std) =
                kernels::batchnorm_forward(x.data(), c, gamma.data(), beta.data(), *eps);
            Ok((
                Tensor::new(x.shape().to_vec(), out)?,
                Saved::Norm { xhat, inv_std },
            ))
        }
        OpKind::Relu => {
            let x = inputs[0];
            let out = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            Ok((Tensor::new(x.shape().to_vec(), out)?, Saved::None))
        }
        OpKind::Upsample => {
            let (c, h, w) = inputs[0].chw()?;
            let out = kernels::upsample2x(inputs[0].data(), c, h, w);
            Ok((Tensor::new(vec![c, 2 * h, 2 * w], out)?, Saved::None))
        }
        OpKind::PixMul { coil } => {
            let x = inputs[0];
            let (c, h, w) = x.chw()?;
            if c != 2 {
                return Err(Error::shape(format!("complex image needs 2 channels, got {c}")));
            }
            if coil.shape() != x.shape() {
                return Err(Error::shape(format!(
                    "coil map shape {:?} does not match image {:?}",
                    coil.shape(),
                    [c, h, w]
                )));
            }
            let out = kernels::complex_mul_planar(x.data(), coil.data(), false);
            Ok((Tensor::new(x.shape().to_vec(), out)?, Saved::None))
        }
        OpKind::Linear { map } => {
            let x = inputs[0];
            if x.shape().first() != Some(&2) || x.len() != 2 * map.input_len() {
                return Err(Error::shape(format!(
                    "{} expects a 2-channel input of {} complex values, got shape {:?}",
                    map.name(),
                    map.input_len(),
                    x.shape()
                )));
            }
            let y = map.apply(&planar_to_complex(x.data()));
            Ok((Tensor::from_complex_vec(&y), Saved::None))
        }
        OpKind::L2 { target } => {
            let pred = inputs[0];
            if pred.len() != target.len() {
                return Err(Error::shape(format!(
                    "l2 loss: prediction has {} values, target {}",
                    pred.len(),
                    target.len()
                )));
            }
            let v = pred
                .data()
                .iter()
                .zip(target.data())
                .map(|(p, t)| (p - t) * (p - t))
                .sum();
            Ok((Tensor::scalar(v), Saved::None))
        }
        OpKind::Sum => Ok((Tensor::scalar(inputs[0].data().iter().sum()), Saved::None)),
        OpKind::Add => {
            let shape = inputs[0].shape();
            if inputs.iter().any(|t| t.shape() != shape) {
                return Err(Error::shape("add: operand shapes differ"));
            }
            let mut out = inputs[0].data().to_vec();
            for t in &inputs[1..] {
                out.iter_mut().zip(t.data()).for_each(|(a, b)| *a += b);
            }
            Ok((Tensor::new(shape.to_vec(), out)?, Saved::None))
        }
    }
}

/// Stride-1 correlation of `x` (in_ch × h × w) with `w` (out × in × kh × kw)
/// plus per-channel bias, zero padding `pad` on every side.
pub fn record_conv2d(tape: &mut Tape, x: NodeId, w: NodeId, b: NodeId, pad: usize) -> Result<NodeId> {
    tape.record(OpKind::Conv2d { pad }, vec![x, w, b])
}

/// Single-sample batch normalization: each channel is standardized over its
/// spatial extent using the current statistics, then scaled and shifted.
pub fn record_batchnorm2d(
    tape: &mut Tape,
    x: NodeId,
    gamma: NodeId,
    beta: NodeId,
    eps: f64,
) -> Result<NodeId> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("batch-norm eps must be positive, got {eps}")));
    }
    tape.record(OpKind::BatchNorm { eps }, vec![x, gamma, beta])
}

pub fn record_relu(tape: &mut Tape, x: NodeId) -> Result<NodeId> {
    tape.record(OpKind::Relu, vec![x])
}

pub fn record_upsample_nn2x(tape: &mut Tape, x: NodeId) -> Result<NodeId> {
    tape.record(OpKind::Upsample, vec![x])
}

/// Pixel-wise complex product with a constant planar image `c`.
pub fn record_complex_pixmul(tape: &mut Tape, x: NodeId, c: Arc<Tensor>) -> Result<NodeId> {
    tape.record(OpKind::PixMul { coil: c }, vec![x])
}

/// Applies a fixed linear operator to a 2-channel complex input. The output
/// is a `[2, m]` planar measurement vector.
pub fn record_linear(tape: &mut Tape, x: NodeId, map: Arc<dyn LinearMap>) -> Result<NodeId> {
    tape.record(OpKind::Linear { map }, vec![x])
}

/// Squared Euclidean distance between `pred` and a constant target.
pub fn record_l2_loss(tape: &mut Tape, pred: NodeId, target: Arc<Tensor>) -> Result<NodeId> {
    tape.record(OpKind::L2 { target }, vec![pred])
}

pub fn record_sum(tape: &mut Tape, x: NodeId) -> Result<NodeId> {
    tape.record(OpKind::Sum, vec![x])
}

/// Element-wise sum of same-shaped nodes.
pub fn record_add(tape: &mut Tape, terms: &[NodeId]) -> Result<NodeId> {
    if terms.is_empty() {
        return Err(Error::invalid("add needs at least one operand"));
    }
    tape.record(OpKind::Add, terms.to_vec())
}

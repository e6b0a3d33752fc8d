// SPDX-License-Identifier: Apache-2.0

//! A small reverse-mode tape over `f64` feature maps.
//!
//! Forward calls append nodes holding their values; [`Tape::backward`]
//! walks the nodes in reverse recording order and returns gradients for
//! every convolution layer registered with the tape.

use crate::cnn::{conv2d, logistic, ConvParams};
use crate::error::{Error, Result};
use crate::fixedpoint::{quantize_value, QFormat};
use crate::tensor::Tensor3;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Conv { input: NodeId, layer: usize },
    Add(Vec<NodeId>),
    Relu(NodeId),
    Sigmoid(NodeId),
    /// Straight-through activation quantizer.
    Quantize(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor3<f64>,
}

/// Gradients of one convolution layer, laid out like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

pub struct Tape<'a> {
    layers: &'a [ConvParams<f64>],
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    /// `layers` are the weights the forward pass uses (already passed
    /// through the weight quantizer when training quantized).
    pub fn new(layers: &'a [ConvParams<f64>]) -> Self {
        Self { layers, nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Tensor3<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Tensor3<f64> {
        &self.nodes[id].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, value: Tensor3<f64>) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn conv(&mut self, input: NodeId, layer: usize) -> Result<NodeId> {
        let params = self.layers.get(layer).ok_or_else(|| Error::State(format!("no layer {layer} on the tape")))?;
        let value = conv2d(&self.nodes[input].value, params)?;
        Ok(self.push(Op::Conv { input, layer }, value))
    }

    pub fn add(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        let first = &self.nodes[inputs[0]].value;
        let mut value = first.clone();
        for &i in &inputs[1..] {
            let other = &self.nodes[i].value;
            if !other.same_shape(&value) {
                return Err(Error::shape("add operands differ in shape"));
            }
            for (a, &b) in value.data_mut().iter_mut().zip(other.data()) {
                *a += b;
            }
        }
        Ok(self.push(Op::Add(inputs.to_vec()), value))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let value = self.nodes[input].value.map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(Op::Relu(input), value)
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        let value = self.nodes[input].value.map(logistic);
        self.push(Op::Sigmoid(input), value)
    }

    pub fn quantize(&mut self, input: NodeId, q: QFormat) -> NodeId {
        let value = self.nodes[input].value.map(|v| quantize_value(v, q));
        self.push(Op::Quantize(input), value)
    }

    /// Propagates `seed` (the gradient of the loss with respect to node
    /// `output`) back to every layer's weights and biases.
    pub fn backward(&self, output: NodeId, seed: &Tensor3<f64>) -> Result<Vec<LayerGrad>> {
        if self.nodes.is_empty() || output >= self.nodes.len() {
            return Err(Error::State("backward called before a completed forward pass".into()));
        }
        if !seed.same_shape(&self.nodes[output].value) {
            return Err(Error::shape("seed gradient does not match the output node"));
        }
        let mut grads: Vec<Option<Tensor3<f64>>> = vec![None; self.nodes.len()];
        grads[output] = Some(seed.clone());
        let mut layer_grads: Vec<LayerGrad> = self
            .layers
            .iter()
            .map(|p| LayerGrad { kernel: vec![0.0; p.kernel.len()], bias: vec![0.0; p.bias.len()] })
            .collect();

        for id in (0..=output).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Input => {}
                Op::Conv { input, layer } => {
                    let needs_input = !matches!(self.nodes[*input].op, Op::Input);
                    let dx = conv_backward(
                        &self.nodes[*input].value,
                        &self.layers[*layer],
                        &g,
                        &mut layer_grads[*layer],
                        needs_input,
                    );
                    if let Some(dx) = dx {
                        accumulate(&mut grads[*input], dx);
                    }
                }
                Op::Add(inputs) => {
                    for &i in inputs {
                        accumulate(&mut grads[i], g.clone());
                    }
                }
                Op::Relu(input) => {
                    let x = &self.nodes[*input].value;
                    let mut dx = g;
                    for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
                        if xv <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads[*input], dx);
                }
                Op::Sigmoid(input) => {
                    let y = &self.nodes[id].value;
                    let mut dx = g;
                    for (d, &yv) in dx.data_mut().iter_mut().zip(y.data()) {
                        *d *= yv * (1.0 - yv);
                    }
                    accumulate(&mut grads[*input], dx);
                }
                Op::Quantize(input) => accumulate(&mut grads[*input], g),
            }
        }
        Ok(layer_grads)
    }
}

fn accumulate(slot: &mut Option<Tensor3<f64>>, g: Tensor3<f64>) {
    match slot {
        Some(existing) => {
            for (a, &b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

/// Weight/bias gradients of a same-size convolution, and optionally the
/// input gradient.
pub fn conv_backward(
    x: &Tensor3<f64>,
    p: &ConvParams<f64>,
    dout: &Tensor3<f64>,
    grad: &mut LayerGrad,
    needs_input: bool,
) -> Option<Tensor3<f64>> {
    let (rows, cols) = (x.rows(), x.cols());
    let (cin, cout) = (p.in_ch, p.out_ch);
    let ntaps = p.kh * p.kw;
    // [tap][ci][co] layouts keep the inner loops contiguous.
    let mut packed = vec![0.0; p.kernel.len()];
    for co in 0..cout {
        for ci in 0..cin {
            for ky in 0..p.kh {
                for kx in 0..p.kw {
                    packed[((ky * p.kw + kx) * cin + ci) * cout + co] = p.weight(co, ci, ky, kx);
                }
            }
        }
    }
    let mut dw = vec![0.0; ntaps * cin * cout];
    let mut dx = needs_input.then(|| Tensor3::zeros(rows, cols, cin));
    let taps: Vec<_> = p.taps().collect();
    for r in 0..rows {
        for c in 0..cols {
            let g = dout.cell(r, c);
            for (b, &gv) in grad.bias.iter_mut().zip(g) {
                *b += gv;
            }
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            for &(ky, kx, dy, dxo) in &taps {
                let (rr, cc) = (r as isize + dy, c as isize + dxo);
                if rr < 0 || cc < 0 || rr >= rows as isize || cc >= cols as isize {
                    continue;
                }
                let (rr, cc) = (rr as usize, cc as usize);
                let tap = ky * p.kw + kx;
                let xin = x.cell(rr, cc);
                for (ci, &xv) in xin.iter().enumerate() {
                    let off = (tap * cin + ci) * cout;
                    if xv != 0.0 {
                        for (d, &gv) in dw[off..off + cout].iter_mut().zip(g) {
                            *d += xv * gv;
                        }
                    }
                    if let Some(dx) = dx.as_mut() {
                        let w = &packed[off..off + cout];
                        let s: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
                        let i = dx.index(rr, cc, ci);
                        dx.data_mut()[i] += s;
                    }
                }
            }
        }
    }
    for co in 0..cout {
        for ci in 0..cin {
            for ky in 0..p.kh {
                for kx in 0..p.kw {
                    grad.kernel[p.kernel_index(co, ci, ky, kx)] += dw[((ky * p.kw + kx) * cin + ci) * cout + co];
                }
            }
        }
    }
    dx
}

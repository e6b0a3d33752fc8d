// SPDX-License-Identifier: Apache-2.0

//! The segmentation network: a 5×5 feature encoder, a stack of three-branch
//! dilated blocks and a 1×1 output mapping, evaluated either in floating
//! point or in bit-exact fixed point.
//!
//! A block computes `x + conv3x3(x) + conv3x3_dilated2(x)`. Because the
//! dilated taps sit on the even positions of a 5×5 footprint and the dense
//! taps on the inner 3×3, the whole block is one 5×5 convolution (see
//! [`fuse_block_to_5x5`]); the hardware model relies on that layout.

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{quantize_raw, requantize_with, MacUnit, QFormat, RoundingMode};
use crate::spherical::INPUT_CHANNELS;
use crate::tensor::Tensor3;

pub const HIDDEN_CHANNELS: usize = 64;
pub const DEFAULT_BLOCKS: usize = 10;

/// Convolution weights, kernel laid out `[out][in][kh][kw]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams<T = f32> {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub dilation: usize,
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Float + Default> ConvParams<T> {
    pub fn zeros(out_ch: usize, in_ch: usize, kh: usize, kw: usize, dilation: usize) -> Self {
        assert!(kh % 2 == 1 && kw % 2 == 1, "only centered (odd) kernels are supported");
        assert!(dilation >= 1);
        Self {
            out_ch,
            in_ch,
            kh,
            kw,
            dilation,
            kernel: vec![T::zero(); out_ch * in_ch * kh * kw],
            bias: vec![T::zero(); out_ch],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        out_ch: usize,
        in_ch: usize,
        kh: usize,
        kw: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(out_ch, in_ch, kh, kw, dilation);
        let fan = ((in_ch + out_ch) * kh * kw) as f64;
        let bound = (6.0 / fan).sqrt();
        for w in &mut p.kernel {
            *w = T::from(rng.gen_range(-bound..bound)).unwrap();
        }
        p
    }

    #[inline]
    pub fn kernel_index(&self, co: usize, ci: usize, ky: usize, kx: usize) -> usize {
        ((co * self.in_ch + ci) * self.kh + ky) * self.kw + kx
    }

    pub fn weight(&self, co: usize, ci: usize, ky: usize, kx: usize) -> T {
        self.kernel[self.kernel_index(co, ci, ky, kx)]
    }

    pub fn shape(&self) -> LayerShape {
        LayerShape { out_ch: self.out_ch, in_ch: self.in_ch, kh: self.kh, kw: self.kw }
    }

    pub fn param_count(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }

    pub fn cast<U: Float + Default>(&self) -> ConvParams<U> {
        ConvParams {
            out_ch: self.out_ch,
            in_ch: self.in_ch,
            kh: self.kh,
            kw: self.kw,
            dilation: self.dilation,
            kernel: self.kernel.iter().map(|&v| U::from(v).unwrap()).collect(),
            bias: self.bias.iter().map(|&v| U::from(v).unwrap()).collect(),
        }
    }

    /// Signed tap offsets `(dy, dx)` in kernel order.
    pub fn taps(&self) -> impl Iterator<Item = (usize, usize, isize, isize)> + '_ {
        let (hy, hx, d) = ((self.kh / 2) as isize, (self.kw / 2) as isize, self.dilation as isize);
        (0..self.kh).flat_map(move |ky| {
            (0..self.kw).map(move |kx| (ky, kx, (ky as isize - hy) * d, (kx as isize - hx) * d))
        })
    }
}

/// Weights of one three-branch block; the identity branch has none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipNetBlockParams<T = f32> {
    pub dense3: ConvParams<T>,
    pub dilated3: ConvParams<T>,
}

impl<T: Float + Default> ChipNetBlockParams<T> {
    pub fn zeros(channels: usize) -> Self {
        Self {
            dense3: ConvParams::zeros(channels, channels, 3, 3, 1),
            dilated3: ConvParams::zeros(channels, channels, 3, 3, 2),
        }
    }

    pub fn glorot<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        Self {
            dense3: ConvParams::glorot(channels, channels, 3, 3, 1, rng),
            dilated3: ConvParams::glorot(channels, channels, 3, 3, 2, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.dense3.out_ch
    }

    pub fn param_count(&self) -> usize {
        self.dense3.param_count() + self.dilated3.param_count()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.dense3.out_ch;
        for (name, p, d) in [("dense", &self.dense3, 1), ("dilated", &self.dilated3, 2)] {
            if (p.out_ch, p.in_ch, p.kh, p.kw, p.dilation) != (c, c, 3, 3, d) {
                return Err(Error::shape(format!("{name} branch must be a {c}->{c} 3x3 kernel with dilation {d}")));
            }
        }
        Ok(())
    }

    pub fn cast<U: Float + Default>(&self) -> ChipNetBlockParams<U> {
        ChipNetBlockParams { dense3: self.dense3.cast(), dilated3: self.dilated3.cast() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network<T = f32> {
    pub encoder: ConvParams<T>,
    pub blocks: Vec<ChipNetBlockParams<T>>,
    pub output: ConvParams<T>,
}

impl<T: Float + Default> Network<T> {
    /// All-zero network with `channels` hidden channels.
    pub fn zeros(in_channels: usize, channels: usize, blocks: usize) -> Self {
        Self {
            encoder: ConvParams::zeros(channels, in_channels, 5, 5, 1),
            blocks: (0..blocks).map(|_| ChipNetBlockParams::zeros(channels)).collect(),
            output: ConvParams::zeros(1, channels, 1, 1, 1),
        }
    }

    pub fn glorot<R: Rng + ?Sized>(in_channels: usize, channels: usize, blocks: usize, rng: &mut R) -> Self {
        Self {
            encoder: ConvParams::glorot(channels, in_channels, 5, 5, 1, rng),
            blocks: (0..blocks).map(|_| ChipNetBlockParams::glorot(channels, rng)).collect(),
            output: ConvParams::glorot(1, channels, 1, 1, 1, rng),
        }
    }

    /// The full-size architecture: 14 → 64, ten blocks, 64 → 1.
    pub fn chipnet<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::glorot(INPUT_CHANNELS, HIDDEN_CHANNELS, DEFAULT_BLOCKS, rng)
    }

    pub fn in_channels(&self) -> usize {
        self.encoder.in_ch
    }

    pub fn channels(&self) -> usize {
        self.encoder.out_ch
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.encoder.out_ch;
        if (self.encoder.kh, self.encoder.kw, self.encoder.dilation) != (5, 5, 1) {
            return Err(Error::shape("encoder must be a dense 5x5 kernel"));
        }
        for b in &self.blocks {
            b.validate()?;
            if b.channels() != c {
                return Err(Error::shape("block width differs from encoder output"));
            }
        }
        let o = &self.output;
        if (o.out_ch, o.in_ch, o.kh, o.kw) != (1, c, 1, 1) {
            return Err(Error::shape(format!("output layer must be 1x1 {c}->1")));
        }
        Ok(())
    }

    pub fn cast<U: Float + Default>(&self) -> Network<U> {
        Network {
            encoder: self.encoder.cast(),
            blocks: self.blocks.iter().map(|b| b.cast()).collect(),
            output: self.output.cast(),
        }
    }
}

/// Kernel dimensions of a layer, independent of its values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kh: usize,
    pub kw: usize,
}

impl LayerShape {
    pub const fn new(out_ch: usize, in_ch: usize, kh: usize, kw: usize) -> Self {
        Self { out_ch, in_ch, kh, kw }
    }

    pub fn params(&self) -> usize {
        self.out_ch * self.in_ch * self.kh * self.kw + self.out_ch
    }
}

/// Parameters including biases.
pub fn count_params(net: &Network) -> usize {
    net.encoder.param_count() + net.blocks.iter().map(|b| b.param_count()).sum::<usize>() + net.output.param_count()
}

/// Multiplications of one same-size (zero-padded) convolution over `rows × cols`.
pub fn count_mults(layer: LayerShape, rows: usize, cols: usize) -> u64 {
    (layer.out_ch * layer.in_ch * layer.kh * layer.kw) as u64 * (rows * cols) as u64
}

pub fn count_block_mults(channels: usize, rows: usize, cols: usize) -> u64 {
    2 * count_mults(LayerShape::new(channels, channels, 3, 3), rows, cols)
}

/// Per-cell probabilities of drivable space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbMap {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl ProbMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::shape("probability map length does not match its dimensions"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::domain("probabilities must lie in [0, 1]"));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn filled(rows: usize, cols: usize, v: f32) -> Self {
        Self::new(rows, cols, vec![v; rows * cols]).expect("valid constant map")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.cols + c]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

pub fn logistic<T: Float>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Same-size 2-D convolution with zero padding and optional dilation.
pub fn conv2d<T: Float + Default>(input: &Tensor3<T>, p: &ConvParams<T>) -> Result<Tensor3<T>> {
    if input.channels() != p.in_ch {
        return Err(Error::shape(format!("input has {} channels, layer expects {}", input.channels(), p.in_ch)));
    }
    let (rows, cols) = (input.rows(), input.cols());
    let (cin, cout) = (p.in_ch, p.out_ch);
    // Repack to [ky][kx][ci][co] so the innermost loop runs over output channels.
    let mut packed = vec![T::zero(); p.kernel.len()];
    for co in 0..cout {
        for ci in 0..cin {
            for ky in 0..p.kh {
                for kx in 0..p.kw {
                    packed[((ky * p.kw + kx) * cin + ci) * cout + co] = p.weight(co, ci, ky, kx);
                }
            }
        }
    }
    let taps: Vec<_> = p.taps().collect();
    let mut out = Tensor3::zeros(rows, cols, cout);
    for r in 0..rows {
        for c in 0..cols {
            let acc = out.cell_mut(r, c);
            acc.copy_from_slice(&p.bias);
            for &(ky, kx, dy, dx) in &taps {
                let (rr, cc) = (r as isize + dy, c as isize + dx);
                if rr < 0 || cc < 0 || rr >= rows as isize || cc >= cols as isize {
                    continue;
                }
                let x = input.cell(rr as usize, cc as usize);
                let base = (ky * p.kw + kx) * cin;
                for (ci, &xv) in x.iter().enumerate() {
                    if xv == T::zero() {
                        continue;
                    }
                    let w = &packed[(base + ci) * cout..(base + ci + 1) * cout];
                    for (a, &wv) in acc.iter_mut().zip(w) {
                        *a = *a + xv * wv;
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn relu<T: Float + Default>(t: &Tensor3<T>) -> Tensor3<T> {
    t.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_in_place<T: Float>(data: &mut [T]) {
    for v in data {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// `x + dense(x) + dilated(x)` before the activation.
pub fn block_preactivation<T: Float + Default>(input: &Tensor3<T>, p: &ChipNetBlockParams<T>) -> Result<Tensor3<T>> {
    p.validate()?;
    if input.channels() != p.channels() {
        return Err(Error::shape(format!("block expects {} channels, got {}", p.channels(), input.channels())));
    }
    let mut sum = conv2d(input, &p.dense3)?;
    let dilated = conv2d(input, &p.dilated3)?;
    for ((s, &d), &x) in sum.data_mut().iter_mut().zip(dilated.data()).zip(input.data()) {
        *s = x + *s + d;
    }
    Ok(sum)
}

pub fn block_forward<T: Float + Default>(input: &Tensor3<T>, p: &ChipNetBlockParams<T>) -> Result<Tensor3<T>> {
    let mut out = block_preactivation(input, p)?;
    relu_in_place(out.data_mut());
    Ok(out)
}

/// The single 5×5 convolution equivalent to a block's three branches.
pub fn fuse_block_to_5x5<T: Float + Default>(p: &ChipNetBlockParams<T>) -> ConvParams<T> {
    let c = p.channels();
    let mut fused = ConvParams::zeros(c, c, 5, 5, 1);
    for co in 0..c {
        for ci in 0..c {
            for a in 0..3 {
                for b in 0..3 {
                    let dense = fused.kernel_index(co, ci, a + 1, b + 1);
                    fused.kernel[dense] = fused.kernel[dense] + p.dense3.weight(co, ci, a, b);
                    let dilated = fused.kernel_index(co, ci, 2 * a, 2 * b);
                    fused.kernel[dilated] = fused.kernel[dilated] + p.dilated3.weight(co, ci, a, b);
                }
            }
            if co == ci {
                let center = fused.kernel_index(co, ci, 2, 2);
                fused.kernel[center] = fused.kernel[center] + T::one();
            }
        }
        fused.bias[co] = p.dense3.bias[co] + p.dilated3.bias[co];
    }
    fused
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Float,
    Fixed { weights: QFormat, activations: QFormat },
}

impl Mode {
    pub const FIXED_18: Mode = Mode::Fixed { weights: QFormat::WEIGHTS_18, activations: QFormat::ACTIVATIONS_18 };
}

fn check_input<T>(input: &Tensor3<T>, in_channels: usize) -> Result<()> {
    if input.channels() != in_channels {
        return Err(Error::shape(format!("input has {} channels, network expects {in_channels}", input.channels())));
    }
    if input.rows() == 0 || input.cols() == 0 {
        return Err(Error::shape("input grid is empty"));
    }
    Ok(())
}

/// Logit map (pre-squashing) in floating point.
pub fn network_logits<T: Float + Default>(input: &Tensor3<T>, net: &Network<T>) -> Result<Tensor3<T>> {
    net.validate()?;
    check_input(input, net.in_channels())?;
    let mut x = conv2d(input, &net.encoder)?;
    relu_in_place(x.data_mut());
    for b in &net.blocks {
        x = block_forward(&x, b)?;
    }
    conv2d(&x, &net.output)
}

pub fn network_forward(input: &Tensor3<f32>, net: &Network<f32>, mode: Mode) -> Result<ProbMap> {
    match mode {
        Mode::Float => {
            let logits = network_logits(input, net)?;
            let values = logits.data().iter().map(|&v| logistic(v)).collect();
            ProbMap::new(input.rows(), input.cols(), values)
        }
        Mode::Fixed { weights, activations } => {
            let qnet = QuantizedNetwork::from_network(net, weights, activations)?;
            Ok(fixed_forward(input, &qnet)?.prob)
        }
    }
}

/// One layer's weights as raw fixed-point integers in the weight format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedConv {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub dilation: usize,
    pub kernel: Vec<i32>,
    pub bias: Vec<i32>,
}

impl QuantizedConv {
    pub fn from_params<T: Float + Default + Into<f64>>(p: &ConvParams<T>, q: QFormat, mode: RoundingMode) -> Self {
        Self {
            out_ch: p.out_ch,
            in_ch: p.in_ch,
            kh: p.kh,
            kw: p.kw,
            dilation: p.dilation,
            kernel: p.kernel.iter().map(|&w| quantize_raw(w.into(), q, mode)).collect(),
            bias: p.bias.iter().map(|&b| quantize_raw(b.into(), q, mode)).collect(),
        }
    }

    pub fn dequantize(&self, q: QFormat) -> ConvParams<f32> {
        let s = q.scale();
        ConvParams {
            out_ch: self.out_ch,
            in_ch: self.in_ch,
            kh: self.kh,
            kw: self.kw,
            dilation: self.dilation,
            kernel: self.kernel.iter().map(|&r| (r as f64 / s) as f32).collect(),
            bias: self.bias.iter().map(|&r| (r as f64 / s) as f32).collect(),
        }
    }

    #[inline]
    pub fn weight(&self, co: usize, ci: usize, ky: usize, kx: usize) -> i32 {
        self.kernel[((co * self.in_ch + ci) * self.kh + ky) * self.kw + kx]
    }

    pub fn shape(&self) -> LayerShape {
        LayerShape { out_ch: self.out_ch, in_ch: self.in_ch, kh: self.kh, kw: self.kw }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedBlock {
    pub dense3: QuantizedConv,
    pub dilated3: QuantizedConv,
}

/// A network whose weights are fixed-point integers, with the formats used
/// for weights and activations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedNetwork {
    pub weights: QFormat,
    pub activations: QFormat,
    pub rounding: RoundingMode,
    pub encoder: QuantizedConv,
    pub blocks: Vec<QuantizedBlock>,
    pub output: QuantizedConv,
}

impl QuantizedNetwork {
    pub fn from_network<T: Float + Default + Into<f64>>(net: &Network<T>, weights: QFormat, activations: QFormat) -> Result<Self> {
        Self::from_network_with(net, weights, activations, RoundingMode::default())
    }

    pub fn from_network_with<T: Float + Default + Into<f64>>(
        net: &Network<T>,
        weights: QFormat,
        activations: QFormat,
        rounding: RoundingMode,
    ) -> Result<Self> {
        net.validate()?;
        let q = |p: &ConvParams<T>| QuantizedConv::from_params(p, weights, rounding);
        let qnet = Self {
            weights,
            activations,
            rounding,
            encoder: q(&net.encoder),
            blocks: net.blocks.iter().map(|b| QuantizedBlock { dense3: q(&b.dense3), dilated3: q(&b.dilated3) }).collect(),
            output: q(&net.output),
        };
        qnet.mac_unit()?;
        Ok(qnet)
    }

    pub fn dequantize(&self) -> Network<f32> {
        Network {
            encoder: self.encoder.dequantize(self.weights),
            blocks: self
                .blocks
                .iter()
                .map(|b| ChipNetBlockParams { dense3: b.dense3.dequantize(self.weights), dilated3: b.dilated3.dequantize(self.weights) })
                .collect(),
            output: self.output.dequantize(self.weights),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.encoder.in_ch
    }

    pub fn channels(&self) -> usize {
        self.encoder.out_ch
    }

    /// Widest accumulator any layer needs: a 5×5 window over every input
    /// channel plus the bias and identity terms.
    pub fn mac_unit(&self) -> Result<MacUnit> {
        let fan_in = self.in_channels().max(self.channels()) * 25 + 2;
        MacUnit::new(self.activations, self.weights, fan_in)
    }
}

/// Fixed-point forward result: the saturated logit integers (activation
/// format) and the squashed probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedForward {
    pub logits: Tensor3<i32>,
    pub prob: ProbMap,
}

/// Quantizes a real tensor into raw activation integers.
pub fn quantize_activations(input: &Tensor3<f32>, q: QFormat, mode: RoundingMode) -> Tensor3<i32> {
    input.map(|v| quantize_raw(v as f64, q, mode))
}

/// Exact integer convolution: `Σ x·w + (bias << F_act)`, accumulated into `acc`.
fn fixed_conv_accumulate(input: &Tensor3<i32>, p: &QuantizedConv, act_fraction: u8, acc: &mut Tensor3<i128>) {
    let (rows, cols) = (input.rows(), input.cols());
    let (cin, cout) = (p.in_ch, p.out_ch);
    let mut packed = vec![0i64; p.kernel.len()];
    for co in 0..cout {
        for ci in 0..cin {
            for ky in 0..p.kh {
                for kx in 0..p.kw {
                    packed[((ky * p.kw + kx) * cin + ci) * cout + co] = p.weight(co, ci, ky, kx) as i64;
                }
            }
        }
    }
    let (hy, hx, d) = ((p.kh / 2) as isize, (p.kw / 2) as isize, p.dilation as isize);
    for r in 0..rows {
        for c in 0..cols {
            let out = acc.cell_mut(r, c);
            for (a, &b) in out.iter_mut().zip(&p.bias) {
                *a += (b as i128) << act_fraction;
            }
            for ky in 0..p.kh {
                let rr = r as isize + (ky as isize - hy) * d;
                if rr < 0 || rr >= rows as isize {
                    continue;
                }
                for kx in 0..p.kw {
                    let cc = c as isize + (kx as isize - hx) * d;
                    if cc < 0 || cc >= cols as isize {
                        continue;
                    }
                    let x = input.cell(rr as usize, cc as usize);
                    let base = (ky * p.kw + kx) * cin;
                    for (ci, &xv) in x.iter().enumerate() {
                        if xv == 0 {
                            continue;
                        }
                        let w = &packed[(base + ci) * cout..(base + ci + 1) * cout];
                        for (a, &wv) in out.iter_mut().zip(w) {
                            *a += (xv as i64 * wv) as i128;
                        }
                    }
                }
            }
        }
    }
}

fn finish_layer(acc: &Tensor3<i128>, net: &QuantizedNetwork, apply_relu: bool) -> Tensor3<i32> {
    let shift = net.weights.fraction_bits as u32;
    acc.map(|a| {
        let v = requantize_with(a, shift, net.activations, net.rounding);
        if apply_relu && v < 0 {
            0
        } else {
            v
        }
    })
}

/// Reference fixed-point convolution layer on raw activations.
pub fn fixed_conv2d(input: &Tensor3<i32>, layer: &QuantizedConv, net: &QuantizedNetwork, apply_relu: bool) -> Result<Tensor3<i32>> {
    if input.channels() != layer.in_ch {
        return Err(Error::shape(format!("input has {} channels, layer expects {}", input.channels(), layer.in_ch)));
    }
    let mut acc = Tensor3::zeros(input.rows(), input.cols(), layer.out_ch);
    fixed_conv_accumulate(input, layer, net.activations.fraction_bits, &mut acc);
    Ok(finish_layer(&acc, net, apply_relu))
}

/// Reference fixed-point block: identity, dense and dilated branches summed
/// exactly, then one requantization and ReLU.
pub fn fixed_block(input: &Tensor3<i32>, block: &QuantizedBlock, net: &QuantizedNetwork) -> Result<Tensor3<i32>> {
    let c = block.dense3.out_ch;
    if input.channels() != c {
        return Err(Error::shape(format!("block expects {c} channels, got {}", input.channels())));
    }
    let wf = net.weights.fraction_bits;
    let mut acc = input.map(|x| (x as i128) << wf);
    fixed_conv_accumulate(input, &block.dense3, net.activations.fraction_bits, &mut acc);
    fixed_conv_accumulate(input, &block.dilated3, net.activations.fraction_bits, &mut acc);
    Ok(finish_layer(&acc, net, true))
}

pub fn logits_to_prob(logits: &Tensor3<i32>, q: QFormat) -> ProbMap {
    let s = q.scale();
    let values = logits.data().iter().map(|&r| logistic(r as f64 / s) as f32).collect();
    ProbMap::new(logits.rows(), logits.cols(), values).expect("logistic output lies in [0, 1]")
}

pub fn fixed_forward(input: &Tensor3<f32>, net: &QuantizedNetwork) -> Result<FixedForward> {
    check_input(input, net.in_channels())?;
    let x = quantize_activations(input, net.activations, net.rounding);
    fixed_forward_raw(&x, net)
}

pub fn fixed_forward_raw(input: &Tensor3<i32>, net: &QuantizedNetwork) -> Result<FixedForward> {
    check_input(input, net.in_channels())?;
    let mut x = fixed_conv2d(input, &net.encoder, net, true)?;
    for b in &net.blocks {
        x = fixed_block(&x, b, net)?;
    }
    let logits = fixed_conv2d(&x, &net.output, net, false)?;
    let prob = logits_to_prob(&logits, net.activations);
    Ok(FixedForward { logits, prob })
}

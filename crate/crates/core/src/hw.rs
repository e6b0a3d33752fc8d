// SPDX-License-Identifier: Apache-2.0

//! Cycle-approximate, bit-exact model of the convolution datapath.
//!
//! Each of the 64 slices owns one input channel: a zero-padding RAM feeds a
//! line buffer that emits one 5×5 window per streamed pixel, and two 5×5
//! multiplier arrays hold the fused kernels of the two output channels
//! produced in the current pass. An adder tree sums the slices, adds the
//! bias (and for blocks the identity branch), requantizes and applies ReLU.
//! A layer of `C` output channels therefore takes `⌈C/2⌉` passes of
//! `(H+4)(W+4)` cycles.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cnn::{logits_to_prob, LayerShape, Network, ProbMap, QuantizedBlock, QuantizedConv, QuantizedNetwork};
use crate::error::{Error, Result};
use crate::fixedpoint::{quantize_raw, requantize_with, FixedTensor};
use crate::spherical::InputTensor;
use crate::tensor::Tensor3;

pub const WINDOW: usize = 5;
/// Border added on each side by the padding RAM.
pub const HALO: usize = WINDOW / 2;
pub const DEFAULT_SLICES: usize = 64;
pub const DEFAULT_CLOCK_HZ: f64 = 350e6;

pub type Window = [[i32; WINDOW]; WINDOW];

/// Single-channel `(H+4) × (W+4)` feature RAM, zero at power-up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddingRam {
    rows: usize,
    cols: usize,
    data: Vec<i32>,
}

impl PaddingRam {
    pub fn new(rows: usize, cols: usize) -> Self {
        let (pr, pc) = (rows + 2 * HALO, cols + 2 * HALO);
        Self { rows, cols, data: vec![0; pr * pc] }
    }

    pub fn padded_rows(&self) -> usize {
        self.rows + 2 * HALO
    }

    pub fn padded_cols(&self) -> usize {
        self.cols + 2 * HALO
    }

    /// Writes image pixel `(r, c)` at its offset inside the border.
    pub fn write(&mut self, r: usize, c: usize, v: i32) {
        assert!(r < self.rows && c < self.cols, "pixel ({r}, {c}) outside the image");
        let pc = self.padded_cols();
        self.data[(r + HALO) * pc + c + HALO] = v;
    }

    pub fn load(&mut self, image: &[i32]) {
        assert_eq!(image.len(), self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                self.write(r, c, image[r * self.cols + c]);
            }
        }
    }

    /// Contents in raster order, the order the line buffer consumes them.
    pub fn stream(&self) -> &[i32] {
        &self.data
    }
}

pub fn padded_write_read(image: &[i32], rows: usize, cols: usize) -> Vec<i32> {
    let mut ram = PaddingRam::new(rows, cols);
    ram.load(image);
    ram.data
}

/// Four padded rows plus five registers of shift storage.
#[derive(Debug, Clone)]
pub struct LineBuffer {
    width: usize,
    regs: VecDeque<i32>,
    shifts: usize,
}

impl LineBuffer {
    pub fn new(padded_cols: usize) -> Self {
        assert!(padded_cols >= WINDOW);
        let cap = Self::depth(padded_cols);
        Self { width: padded_cols, regs: VecDeque::with_capacity(cap), shifts: 0 }
    }

    /// Shifts needed before the first window is valid.
    pub fn depth(padded_cols: usize) -> usize {
        (WINDOW - 1) * padded_cols + WINDOW
    }

    pub fn shifts(&self) -> usize {
        self.shifts
    }

    /// Shifts one pixel in; returns the window whose bottom-right corner is
    /// that pixel once it lies wholly inside the padded image.
    pub fn shift(&mut self, px: i32) -> Option<Window> {
        if self.regs.len() == Self::depth(self.width) {
            self.regs.pop_front();
        }
        self.regs.push_back(px);
        let col = self.shifts % self.width;
        self.shifts += 1;
        if self.shifts < Self::depth(self.width) || col < WINDOW - 1 {
            return None;
        }
        let newest = self.regs.len() - 1;
        let mut w = [[0; WINDOW]; WINDOW];
        for (i, row) in w.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.regs[newest - ((WINDOW - 1 - i) * self.width + (WINDOW - 1 - j))];
            }
        }
        Some(w)
    }
}

pub fn line_buffer_stream(padded: &[i32], padded_rows: usize, padded_cols: usize) -> Vec<Window> {
    assert_eq!(padded.len(), padded_rows * padded_cols);
    let mut lb = LineBuffer::new(padded_cols);
    padded.iter().filter_map(|&px| lb.shift(px)).collect()
}

/// 5×5 weight registers of one multiplier array, raw weight-format values.
/// The center register may hold the sum of a dense and a dilated tap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MultiplierArray {
    pub taps: [[i64; WINDOW]; WINDOW],
}

impl MultiplierArray {
    pub const ZERO: MultiplierArray = MultiplierArray { taps: [[0; WINDOW]; WINDOW] };

    /// Adds the `(co, ci)` kernel of `layer` at its dilated positions.
    pub fn place(&mut self, layer: &QuantizedConv, co: usize, ci: usize) -> Result<()> {
        let (hy, hx, d) = (layer.kh / 2, layer.kw / 2, layer.dilation);
        if hy * d > HALO || hx * d > HALO {
            return Err(Error::Config(format!(
                "a {}x{} kernel with dilation {d} does not fit a 5x5 array",
                layer.kh, layer.kw
            )));
        }
        for ky in 0..layer.kh {
            for kx in 0..layer.kw {
                let (y, x) = (HALO + ky * d - hy * d, HALO + kx * d - hx * d);
                self.taps[y][x] += layer.weight(co, ci, ky, kx) as i64;
            }
        }
        Ok(())
    }

    pub fn single(layer: &QuantizedConv, co: usize, ci: usize) -> Result<Self> {
        let mut a = Self::ZERO;
        a.place(layer, co, ci)?;
        Ok(a)
    }

    /// Dense 3×3 on the inner taps and dilated 3×3 on the even taps.
    pub fn fused(block: &QuantizedBlock, co: usize, ci: usize) -> Result<Self> {
        let mut a = Self::ZERO;
        a.place(&block.dense3, co, ci)?;
        a.place(&block.dilated3, co, ci)?;
        Ok(a)
    }

    pub fn mac(&self, w: &Window) -> i128 {
        let mut acc = 0i128;
        for (wr, tr) in w.iter().zip(&self.taps) {
            for (&x, &t) in wr.iter().zip(tr) {
                acc += x as i128 * t as i128;
            }
        }
        acc
    }
}

/// Partial sums of one slice's two arrays over a window stream.
pub fn conv_slice(windows: &[Window], a: &MultiplierArray, b: &MultiplierArray) -> (Vec<i128>, Vec<i128>) {
    windows.iter().map(|w| (a.mac(w), b.mac(w))).unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub slices: usize,
    pub clock_hz: f64,
    /// Cycles charged per feature-buffer swap between layers.
    pub swap_overhead_cycles: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { slices: DEFAULT_SLICES, clock_hz: DEFAULT_CLOCK_HZ, swap_overhead_cycles: 0 }
    }
}

impl SimConfig {
    pub fn max_passes(&self) -> usize {
        self.slices / 2
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmState {
    pub layer: usize,
    pub swap_phase: bool,
    pub pass: usize,
    pub pixel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub cycle: u64,
    pub layer: usize,
    pub pass: usize,
    pub pixel_index: usize,
}

pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut s = String::from("cycle,layer,pass,pixel_index\n");
    for t in trace {
        s.push_str(&format!("{},{},{},{}\n", t.cycle, t.layer, t.pass, t.pixel_index));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub rows: usize,
    pub cols: usize,
    pub cycles_per_pass: u64,
    pub passes_per_layer: Vec<u64>,
    pub swap_overhead_cycles: u64,
    pub total_cycles: u64,
    pub clock_hz: f64,
    pub time_s: f64,
}

impl CycleReport {
    pub fn time_ms(&self) -> f64 {
        self.time_s * 1e3
    }

    pub fn total_passes(&self) -> u64 {
        self.passes_per_layer.iter().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for CycleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "grid            {} x {}", self.rows, self.cols)?;
        writeln!(f, "cycles/pass     {}", self.cycles_per_pass)?;
        writeln!(f, "layers          {}", self.passes_per_layer.len())?;
        writeln!(f, "passes          {}", self.total_passes())?;
        writeln!(f, "swap overhead   {} cycles/swap", self.swap_overhead_cycles)?;
        writeln!(f, "total cycles    {}", self.total_cycles)?;
        write!(f, "time            {:.4} ms at {:.1} MHz", self.time_ms(), self.clock_hz / 1e6)
    }
}

/// Layer shapes as the datapath sees them: blocks are single fused 5×5
/// layers.
pub fn layer_shapes<T>(net: &Network<T>) -> Vec<LayerShape> {
    let c = net.encoder.out_ch;
    let mut v = vec![LayerShape::new(c, net.encoder.in_ch, 5, 5)];
    v.extend(net.blocks.iter().map(|_| LayerShape::new(c, c, 5, 5)));
    v.push(LayerShape::new(net.output.out_ch, net.output.in_ch, 1, 1));
    v
}

pub fn quantized_layer_shapes(net: &QuantizedNetwork) -> Vec<LayerShape> {
    let c = net.encoder.out_ch;
    let mut v = vec![LayerShape::new(c, net.encoder.in_ch, 5, 5)];
    v.extend(net.blocks.iter().map(|_| LayerShape::new(c, c, 5, 5)));
    v.push(LayerShape::new(net.output.out_ch, net.output.in_ch, 1, 1));
    v
}

pub fn passes_for(out_ch: usize) -> u64 {
    out_ch.div_ceil(2) as u64
}

pub fn cycles_per_pass(rows: usize, cols: usize) -> u64 {
    ((rows + 2 * HALO) * (cols + 2 * HALO)) as u64
}

pub fn cycle_model(rows: usize, cols: usize, layers: &[LayerShape], cfg: &SimConfig) -> CycleReport {
    let cpp = cycles_per_pass(rows, cols);
    let passes_per_layer: Vec<u64> = layers.iter().map(|l| passes_for(l.out_ch)).collect();
    let swaps = layers.len().saturating_sub(1) as u64;
    let total_cycles = passes_per_layer.iter().sum::<u64>() * cpp + swaps * cfg.swap_overhead_cycles;
    CycleReport {
        rows,
        cols,
        cycles_per_pass: cpp,
        passes_per_layer,
        swap_overhead_cycles: cfg.swap_overhead_cycles,
        total_cycles,
        clock_hz: cfg.clock_hz,
        time_s: total_cycles as f64 / cfg.clock_hz,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub logits: Tensor3<i32>,
    pub prob: ProbMap,
    pub report: CycleReport,
    pub trace: Vec<TraceRecord>,
}

enum LayerKind<'a> {
    Conv(&'a QuantizedConv, bool),
    Block(&'a QuantizedBlock),
}

impl LayerKind<'_> {
    fn channels(&self) -> (usize, usize) {
        match self {
            LayerKind::Conv(l, _) => (l.in_ch, l.out_ch),
            LayerKind::Block(b) => (b.dense3.in_ch, b.dense3.out_ch),
        }
    }

    fn array(&self, co: usize, ci: usize) -> Result<MultiplierArray> {
        match self {
            LayerKind::Conv(l, _) => MultiplierArray::single(l, co, ci),
            LayerKind::Block(b) => MultiplierArray::fused(b, co, ci),
        }
    }

    fn bias(&self, co: usize) -> i32 {
        match self {
            LayerKind::Conv(l, _) => l.bias[co],
            LayerKind::Block(b) => b.dense3.bias[co] + b.dilated3.bias[co],
        }
    }
}

struct Datapath<'a> {
    net: &'a QuantizedNetwork,
    cfg: &'a SimConfig,
    rows: usize,
    cols: usize,
    cycle: u64,
    fsm: FsmState,
    trace: Vec<TraceRecord>,
}

impl Datapath<'_> {
    fn checkpoint(&mut self) {
        self.trace.push(TraceRecord {
            cycle: self.cycle,
            layer: self.fsm.layer,
            pass: self.fsm.pass,
            pixel_index: self.fsm.pixel,
        });
    }

    /// One layer over channel-major feature maps.
    fn layer(&mut self, maps: &[Vec<i32>], kind: LayerKind<'_>) -> Result<Vec<Vec<i32>>> {
        let (cin, cout) = kind.channels();
        if cin > self.cfg.slices {
            return Err(Error::Config(format!("{cin} input channels exceed {} slices", self.cfg.slices)));
        }
        let passes = passes_for(cout) as usize;
        if passes > self.cfg.max_passes() {
            return Err(Error::Config(format!("{cout} output channels need more than {} passes", self.cfg.max_passes())));
        }
        let (rows, cols) = (self.rows, self.cols);
        let pixels = rows * cols;
        let rams: Vec<PaddingRam> = maps
            .iter()
            .map(|m| {
                let mut ram = PaddingRam::new(rows, cols);
                ram.load(m);
                ram
            })
            .collect();
        let wf = self.net.weights.fraction_bits as u32;
        let af = self.net.activations.fraction_bits as u32;
        let mut out = vec![vec![0i32; pixels]; cout];

        for pass in 0..passes {
            self.fsm.pass = pass;
            self.fsm.pixel = 0;
            self.checkpoint();
            let lanes: Vec<usize> = (2 * pass..(2 * pass + 2).min(cout)).collect();
            let mut sums = vec![vec![0i128; pixels]; 2];
            // Slices beyond the layer's input channels see zero weights and
            // contribute nothing; they are skipped.
            for (ci, ram) in rams.iter().enumerate() {
                let a = kind.array(lanes[0], ci)?;
                let b = match lanes.get(1) {
                    Some(&co) => kind.array(co, ci)?,
                    None => MultiplierArray::ZERO,
                };
                let mut lb = LineBuffer::new(ram.padded_cols());
                let mut k = 0;
                for &px in ram.stream() {
                    if let Some(w) = lb.shift(px) {
                        sums[0][k] += a.mac(&w);
                        sums[1][k] += b.mac(&w);
                        if let LayerKind::Block(_) = kind {
                            for (lane, &co) in lanes.iter().enumerate() {
                                if co == ci {
                                    sums[lane][k] += (w[HALO][HALO] as i128) << wf;
                                }
                            }
                        }
                        k += 1;
                    }
                }
                if k != pixels {
                    return Err(Error::State(format!("line buffer emitted {k} windows for {pixels} pixels")));
                }
            }
            let relu = !matches!(kind, LayerKind::Conv(_, false));
            for (lane, &co) in lanes.iter().enumerate() {
                let bias = (kind.bias(co) as i128) << af;
                for (o, &s) in out[co].iter_mut().zip(&sums[lane]) {
                    let v = requantize_with(s + bias, wf, self.net.activations, self.net.rounding);
                    *o = if relu && v < 0 { 0 } else { v };
                }
            }
            self.cycle += cycles_per_pass(rows, cols);
            self.fsm.pixel = pixels;
            self.checkpoint();
        }
        Ok(out)
    }
}

/// Runs a quantized frame (`rows × cols × channels`, activation format)
/// through the modeled datapath.
pub fn run_network_sim(input: &FixedTensor, net: &QuantizedNetwork, cfg: &SimConfig) -> Result<SimOutput> {
    if input.qformat != net.activations {
        return Err(Error::Config(format!(
            "input is {} but the network expects {} activations",
            input.qformat, net.activations
        )));
    }
    let [rows, cols, ch] = input.shape[..] else {
        return Err(Error::shape(format!("input must be rows x cols x channels, got {:?}", input.shape)));
    };
    if ch != net.in_channels() {
        return Err(Error::shape(format!("input has {ch} channels, network expects {}", net.in_channels())));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::shape("input grid is empty"));
    }
    let mut maps: Vec<Vec<i32>> =
        (0..ch).map(|c| (0..rows * cols).map(|i| input.raw[i * ch + c]).collect()).collect();

    let mut dp = Datapath { net, cfg, rows, cols, cycle: 0, fsm: FsmState::default(), trace: Vec::new() };
    let mut kinds = vec![LayerKind::Conv(&net.encoder, true)];
    kinds.extend(net.blocks.iter().map(LayerKind::Block));
    kinds.push(LayerKind::Conv(&net.output, false));
    let n = kinds.len();
    for (i, kind) in kinds.into_iter().enumerate() {
        dp.fsm = FsmState { layer: i, ..FsmState::default() };
        maps = dp.layer(&maps, kind)?;
        if i + 1 < n {
            dp.fsm.swap_phase = true;
            dp.cycle += cfg.swap_overhead_cycles;
        }
    }
    let oc = maps.len();
    let logits = Tensor3::from_fn(rows, cols, oc, |r, c, k| maps[k][r * cols + c]);
    let prob = logits_to_prob(&logits, net.activations);
    let report = cycle_model(rows, cols, &quantized_layer_shapes(net), cfg);
    debug_assert_eq!(report.total_cycles, dp.cycle);
    Ok(SimOutput { logits, prob, report, trace: dp.trace })
}

/// Quantizes a real input tensor the way the reference does.
pub fn quantize_input(input: &InputTensor, net: &QuantizedNetwork) -> Result<FixedTensor> {
    let raw = input.data().iter().map(|&v| quantize_raw(v as f64, net.activations, net.rounding)).collect();
    FixedTensor::new(net.activations, raw, vec![input.rows(), input.cols(), input.channels()])
}

pub fn simulate_frame(input: &InputTensor, net: &QuantizedNetwork, cfg: &SimConfig) -> Result<SimOutput> {
    run_network_sim(&quantize_input(input, net)?, net, cfg)
}

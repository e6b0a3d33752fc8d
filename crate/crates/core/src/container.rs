// SPDX-License-Identifier: Apache-2.0

//! Two small little-endian binary containers: `CTEN` for tensors and
//! `CNW1` for network weights.
//!
//! `CTEN`: magic, version byte, dtype byte (0 = f32, 1 = fixed followed by
//! the N and F bytes), rank byte, rank × u32 dims, row-major payload.
//!
//! `CNW1`: magic, u32 layer count, then per layer a u16-prefixed UTF-8
//! name, a kind byte, 4 × u32 dims `[out, in, kh, kw]`, total and
//! fraction bits, and the raw i32 weights followed by the biases. Float
//! weights are stored as their IEEE bit patterns with both bit counts
//! zero. Two trailing bytes give the activation format (zero for float).

use crate::cnn::{ChipNetBlockParams, ConvParams, Network, ProbMap, QuantizedBlock, QuantizedConv, QuantizedNetwork};
use crate::error::{Error, Result};
use crate::fixedpoint::{FixedTensor, QFormat, RoundingMode};
use crate::tensor::Tensor3;

pub const CTEN_MAGIC: &[u8; 4] = b"CTEN";
pub const CTEN_VERSION: u8 = 1;
pub const CNW_MAGIC: &[u8; 4] = b"CNW1";

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    Fixed { qformat: QFormat, raw: Vec<i32> },
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::Fixed { raw, .. } => raw.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cten {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Cten {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!("dims {dims:?} need {n} values, got {}", data.len())));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::shape("rank exceeds 255"));
        }
        Ok(Self { dims, data })
    }

    pub fn from_tensor(t: &Tensor3<f32>) -> Self {
        Self { dims: vec![t.rows(), t.cols(), t.channels()], data: TensorData::F32(t.data().to_vec()) }
    }

    pub fn from_prob(p: &ProbMap) -> Self {
        Self { dims: vec![p.rows(), p.cols()], data: TensorData::F32(p.values().to_vec()) }
    }

    pub fn from_fixed(t: &FixedTensor) -> Self {
        Self { dims: t.shape.clone(), data: TensorData::Fixed { qformat: t.qformat, raw: t.raw.clone() } }
    }

    /// A rank-3 f32 tensor.
    pub fn to_tensor(&self) -> Result<Tensor3<f32>> {
        match (&self.dims[..], &self.data) {
            (&[r, c, k], TensorData::F32(v)) => Ok(Tensor3::from_vec(r, c, k, v.clone())),
            (_, TensorData::Fixed { .. }) => Err(Error::FormatMismatch("expected an f32 tensor, found fixed point".into())),
            _ => Err(Error::FormatMismatch(format!("expected a rank-3 tensor, found dims {:?}", self.dims))),
        }
    }

    /// A rank-2 (or `rows × cols × 1`) f32 probability map.
    pub fn to_prob(&self) -> Result<ProbMap> {
        let TensorData::F32(v) = &self.data else {
            return Err(Error::FormatMismatch("expected an f32 probability map".into()));
        };
        match self.dims[..] {
            [r, c] | [r, c, 1] => ProbMap::new(r, c, v.clone()),
            _ => Err(Error::FormatMismatch(format!("expected a rank-2 map, found dims {:?}", self.dims))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(16 + 4 * self.dims.len() + 4 * self.data.len());
        b.extend_from_slice(CTEN_MAGIC);
        b.push(CTEN_VERSION);
        match &self.data {
            TensorData::F32(_) => b.push(0),
            TensorData::Fixed { qformat, .. } => b.extend_from_slice(&[1, qformat.total_bits, qformat.fraction_bits]),
        }
        b.push(self.dims.len() as u8);
        for &d in &self.dims {
            b.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| b.extend_from_slice(&x.to_le_bytes())),
            TensorData::Fixed { raw, .. } => raw.iter().for_each(|x| b.extend_from_slice(&x.to_le_bytes())),
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != CTEN_MAGIC {
            return Err(Error::Container("not a CTEN file".into()));
        }
        let version = r.u8()?;
        if version != CTEN_VERSION {
            return Err(Error::Container(format!("unsupported CTEN version {version}")));
        }
        let dtype = r.u8()?;
        let qformat = match dtype {
            0 => None,
            1 => Some(r.qformat()?),
            d => return Err(Error::Container(format!("unknown dtype code {d}"))),
        };
        let rank = r.u8()? as usize;
        let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::Container("dims overflow".into()))?;
        if r.remaining() != n.saturating_mul(4) {
            return Err(Error::Container(format!("payload holds {} bytes, dims {dims:?} need {}", r.remaining(), n * 4)));
        }
        let data = match qformat {
            None => TensorData::F32((0..n).map(|_| r.u32().map(f32::from_bits)).collect::<Result<_>>()?),
            Some(q) => {
                let raw: Vec<i32> = (0..n).map(|_| r.i32()).collect::<Result<_>>()?;
                if let Some(v) = raw.iter().find(|&&v| !q.contains_raw(v as i64)) {
                    return Err(Error::Container(format!("raw value {v} does not fit {q}")));
                }
                TensorData::Fixed { qformat: q, raw }
            }
        };
        Ok(Self { dims, data })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Container(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn qformat(&mut self) -> Result<QFormat> {
        let (n, f) = (self.u8()?, self.u8()?);
        QFormat::new(n, f).map_err(|_| Error::Container(format!("invalid fixed-point format ({n}, {f})")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv = 0,
    BlockDense = 1,
    BlockDilated = 2,
    Output = 3,
}

impl LayerKind {
    fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => LayerKind::Conv,
            1 => LayerKind::BlockDense,
            2 => LayerKind::BlockDilated,
            3 => LayerKind::Output,
            _ => return Err(Error::Container(format!("unknown layer kind {c}"))),
        })
    }

    fn dilation(self) -> usize {
        if self == LayerKind::BlockDilated {
            2
        } else {
            1
        }
    }
}

/// Weights as stored: floating point or quantized.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightFile {
    Float(Network<f32>),
    Fixed(QuantizedNetwork),
}

impl WeightFile {
    pub fn is_fixed(&self) -> bool {
        matches!(self, WeightFile::Fixed(_))
    }

    pub fn float_network(&self) -> Network<f32> {
        match self {
            WeightFile::Float(n) => n.clone(),
            WeightFile::Fixed(q) => q.dequantize(),
        }
    }
}

struct RawLayer {
    name: String,
    kind: LayerKind,
    dims: [usize; 4],
    kernel: Vec<i32>,
    bias: Vec<i32>,
}

fn float_layer(name: String, kind: LayerKind, p: &ConvParams<f32>) -> RawLayer {
    RawLayer {
        name,
        kind,
        dims: [p.out_ch, p.in_ch, p.kh, p.kw],
        kernel: p.kernel.iter().map(|v| v.to_bits() as i32).collect(),
        bias: p.bias.iter().map(|v| v.to_bits() as i32).collect(),
    }
}

fn fixed_layer(name: String, kind: LayerKind, p: &QuantizedConv) -> RawLayer {
    RawLayer { name, kind, dims: [p.out_ch, p.in_ch, p.kh, p.kw], kernel: p.kernel.clone(), bias: p.bias.clone() }
}

fn layers_of<L>(
    encoder: &L,
    blocks: impl Iterator<Item = (L, L)>,
    output: &L,
    make: impl Fn(String, LayerKind, &L) -> RawLayer,
) -> Vec<RawLayer> {
    let mut v = vec![make("encoder".into(), LayerKind::Conv, encoder)];
    for (i, (d, l)) in blocks.enumerate() {
        v.push(make(format!("block{i}.dense"), LayerKind::BlockDense, &d));
        v.push(make(format!("block{i}.dilated"), LayerKind::BlockDilated, &l));
    }
    v.push(make("output".into(), LayerKind::Output, output));
    v
}

pub fn encode_cnw(w: &WeightFile) -> Vec<u8> {
    let (layers, wq, aq) = match w {
        WeightFile::Float(n) => (
            layers_of(&n.encoder, n.blocks.iter().map(|b| (b.dense3.clone(), b.dilated3.clone())), &n.output, float_layer),
            (0, 0),
            (0, 0),
        ),
        WeightFile::Fixed(q) => (
            layers_of(&q.encoder, q.blocks.iter().map(|b| (b.dense3.clone(), b.dilated3.clone())), &q.output, fixed_layer),
            (q.weights.total_bits, q.weights.fraction_bits),
            (q.activations.total_bits, q.activations.fraction_bits),
        ),
    };
    let mut b = Vec::new();
    b.extend_from_slice(CNW_MAGIC);
    b.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in &layers {
        b.extend_from_slice(&(l.name.len() as u16).to_le_bytes());
        b.extend_from_slice(l.name.as_bytes());
        b.push(l.kind as u8);
        for d in l.dims {
            b.extend_from_slice(&(d as u32).to_le_bytes());
        }
        b.extend_from_slice(&[wq.0, wq.1]);
        for v in l.kernel.iter().chain(&l.bias) {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b.extend_from_slice(&[aq.0, aq.1]);
    b
}

pub fn decode_cnw(bytes: &[u8]) -> Result<WeightFile> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != CNW_MAGIC {
        return Err(Error::Container("not a CNW1 file".into()));
    }
    let count = r.u32()? as usize;
    if count < 2 {
        return Err(Error::Container(format!("{count} layers cannot form a network")));
    }
    let mut layers = Vec::with_capacity(count.min(1024));
    let mut bits = None;
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Container("layer name is not UTF-8".into()))?;
        let kind = LayerKind::from_code(r.u8()?)?;
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let (n, f) = (r.u8()?, r.u8()?);
        if *bits.get_or_insert((n, f)) != (n, f) {
            return Err(Error::Container(format!("layer {name} uses a different weight format")));
        }
        let nk = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).filter(|&v| v <= r.remaining() / 4);
        let nk = nk.ok_or_else(|| Error::Container(format!("layer {name} dims exceed the file")))?;
        let kernel = (0..nk).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;
        let bias = (0..dims[0]).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;
        if dims[2] % 2 == 0 || dims[3] % 2 == 0 {
            return Err(Error::Container(format!("layer {name} has an even kernel size")));
        }
        layers.push(RawLayer { name, kind, dims, kernel, bias });
    }
    let (an, af) = (r.u8()?, r.u8()?);
    if r.remaining() != 0 {
        return Err(Error::Container(format!("{} trailing bytes", r.remaining())));
    }
    let expected = |i: usize| match i {
        0 => LayerKind::Conv,
        i if i == count - 1 => LayerKind::Output,
        i if i % 2 == 1 => LayerKind::BlockDense,
        _ => LayerKind::BlockDilated,
    };
    if !count.is_multiple_of(2) || layers.iter().enumerate().any(|(i, l)| l.kind != expected(i)) {
        return Err(Error::Container("layer kinds are out of order".into()));
    }

    let (wn, wf) = bits.expect("at least two layers");
    let result = if (wn, wf) == (0, 0) {
        let conv = |l: &RawLayer| ConvParams {
            out_ch: l.dims[0],
            in_ch: l.dims[1],
            kh: l.dims[2],
            kw: l.dims[3],
            dilation: l.kind.dilation(),
            kernel: l.kernel.iter().map(|&v| f32::from_bits(v as u32)).collect(),
            bias: l.bias.iter().map(|&v| f32::from_bits(v as u32)).collect(),
        };
        let blocks = layers[1..count - 1]
            .chunks(2)
            .map(|c| ChipNetBlockParams { dense3: conv(&c[0]), dilated3: conv(&c[1]) })
            .collect();
        let net = Network { encoder: conv(&layers[0]), blocks, output: conv(&layers[count - 1]) };
        WeightFile::Float(net)
    } else {
        let wq = QFormat::new(wn, wf).map_err(|_| Error::Container(format!("invalid weight format ({wn}, {wf})")))?;
        let aq = QFormat::new(an, af).map_err(|_| Error::Container(format!("invalid activation format ({an}, {af})")))?;
        for l in &layers {
            if let Some(v) = l.kernel.iter().chain(&l.bias).find(|&&v| !wq.contains_raw(v as i64)) {
                return Err(Error::Container(format!("layer {} value {v} does not fit {wq}", l.name)));
            }
        }
        let conv = |l: &RawLayer| QuantizedConv {
            out_ch: l.dims[0],
            in_ch: l.dims[1],
            kh: l.dims[2],
            kw: l.dims[3],
            dilation: l.kind.dilation(),
            kernel: l.kernel.clone(),
            bias: l.bias.clone(),
        };
        let blocks = layers[1..count - 1]
            .chunks(2)
            .map(|c| QuantizedBlock { dense3: conv(&c[0]), dilated3: conv(&c[1]) })
            .collect();
        WeightFile::Fixed(QuantizedNetwork {
            weights: wq,
            activations: aq,
            rounding: RoundingMode::default(),
            encoder: conv(&layers[0]),
            blocks,
            output: conv(&layers[count - 1]),
        })
    };
    let shape_check = match &result {
        WeightFile::Float(n) => n.validate(),
        WeightFile::Fixed(q) => q.dequantize().validate(),
    };
    shape_check.map_err(|e| Error::Container(format!("inconsistent layer shapes: {e}")))?;
    Ok(result)
}

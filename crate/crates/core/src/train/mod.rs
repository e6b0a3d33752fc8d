// SPDX-License-Identifier: Apache-2.0

//! Desk-scale training: a float64 reverse-mode tape, cross-entropy loss,
//! Adam, and quantization-aware fine-tuning with straight-through
//! weight and activation quantizers.

mod adam;
mod loss;
pub mod synth;
mod tape;

pub use adam::{adam_step, AdamState};
pub use loss::{cross_entropy, PROB_EPSILON};
pub use synth::{synth_dataset, toy_grid, Sample, SceneConfig};
pub use tape::{conv_backward, LayerGrad, NodeId, Tape};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cnn::{network_forward, ChipNetBlockParams, ConvParams, Mode, Network};
use crate::error::{Error, Result};
use crate::fixedpoint::{quantize_value, QFormat};
use crate::metrics::{confusion, metrics, ConfusionCounts, Metrics};
use crate::postprocess::DEFAULT_THRESHOLD;
use crate::tensor::Tensor3;

/// Forward value of a straight-through quantizer: every element snapped to
/// the `q` grid. The backward pass is [`ste_backward`].
pub fn ste_quantize(w: &[f64], q: QFormat) -> Vec<f64> {
    w.iter().map(|&v| quantize_value(v, q)).collect()
}

/// Gradient reaching the master weights through the quantizer.
pub fn ste_backward(upstream: &[f64]) -> Vec<f64> {
    upstream.to_vec()
}

fn ste_layer(p: &ConvParams<f64>, q: QFormat) -> ConvParams<f64> {
    ConvParams { kernel: ste_quantize(&p.kernel, q), bias: ste_quantize(&p.bias, q), ..p.clone() }
}

/// Layers in evaluation order: encoder, then dense and dilated branch of
/// each block, then the output mapping.
pub fn flatten_layers(net: &Network<f64>) -> Vec<ConvParams<f64>> {
    let mut v = vec![net.encoder.clone()];
    for b in &net.blocks {
        v.push(b.dense3.clone());
        v.push(b.dilated3.clone());
    }
    v.push(net.output.clone());
    v
}

pub fn unflatten_layers(layers: &[ConvParams<f64>]) -> Result<Network<f64>> {
    if layers.len() < 2 || !layers.len().is_multiple_of(2) {
        return Err(Error::shape(format!("{} layers cannot form encoder, blocks and output", layers.len())));
    }
    let n = layers.len();
    let blocks = layers[1..n - 1]
        .chunks(2)
        .map(|c| ChipNetBlockParams { dense3: c[0].clone(), dilated3: c[1].clone() })
        .collect();
    let net = Network { encoder: layers[0].clone(), blocks, output: layers[n - 1].clone() };
    net.validate()?;
    Ok(net)
}

/// Weight and activation formats used during quantized training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub weights: QFormat,
    pub activations: QFormat,
}

impl QuantSpec {
    pub const BITS_18: QuantSpec = QuantSpec { weights: QFormat::WEIGHTS_18, activations: QFormat::ACTIVATIONS_18 };

    pub fn mode(&self) -> Mode {
        Mode::Fixed { weights: self.weights, activations: self.activations }
    }
}

/// Records the network's forward pass on a fresh tape and returns the
/// probability node.
pub fn record_forward(
    tape: &mut Tape<'_>,
    input: &Tensor3<f64>,
    blocks: usize,
    activations: Option<QFormat>,
) -> Result<NodeId> {
    let quant = |tape: &mut Tape<'_>, id| match activations {
        Some(q) => tape.quantize(id, q),
        None => id,
    };
    let x = tape.input(input.clone());
    let x = quant(tape, x);
    let e = tape.conv(x, 0)?;
    let mut h = tape.relu(e);
    h = quant(tape, h);
    for b in 0..blocks {
        let dense = tape.conv(h, 1 + 2 * b)?;
        let dilated = tape.conv(h, 2 + 2 * b)?;
        let sum = tape.add(&[h, dense, dilated])?;
        h = tape.relu(sum);
        h = quant(tape, h);
    }
    let logits = tape.conv(h, 1 + 2 * blocks)?;
    Ok(tape.sigmoid(logits))
}

/// Loss and parameter gradients for one frame.
pub fn loss_and_grads(
    layers: &[ConvParams<f64>],
    input: &Tensor3<f64>,
    target: &[bool],
    activations: Option<QFormat>,
) -> Result<(f64, Vec<LayerGrad>, Tensor3<f64>)> {
    let blocks = (layers.len() - 2) / 2;
    let mut tape = Tape::new(layers);
    let out = record_forward(&mut tape, input, blocks, activations)?;
    let (loss, seed) = cross_entropy(tape.value(out), target)?;
    let grads = tape.backward(out, &seed)?;
    Ok((loss, grads, tape.value(out).clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub quantize: Option<QuantSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, learning_rate: 1e-3, seed: 0, quantize: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Floating-point master weights.
    pub network: Network<f64>,
    pub history: Vec<EpochStats>,
}

impl TrainOutcome {
    /// The weights the forward pass saw during the last epoch.
    pub fn forward_network(&self, quantize: Option<QuantSpec>) -> Network<f64> {
        match quantize {
            None => self.network.clone(),
            Some(q) => {
                let layers: Vec<_> = flatten_layers(&self.network).iter().map(|l| ste_layer(l, q.weights)).collect();
                unflatten_layers(&layers).expect("shape preserved")
            }
        }
    }
}

/// Per-frame Adam training. With `quantize` set, every convolution's
/// forward weights and every post-ReLU activation pass through
/// straight-through quantizers while the master weights stay continuous.
pub fn train(init: &Network<f64>, data: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::domain("training set is empty"));
    }
    init.validate()?;
    let (rows, cols) = (data[0].input.rows(), data[0].input.cols());
    for s in data {
        if s.input.rows() != rows || s.input.cols() != cols || s.input.channels() != init.in_channels() {
            return Err(Error::shape("training samples differ in shape"));
        }
        if s.label.rows() != rows || s.label.cols() != cols {
            return Err(Error::shape("label map does not match its input"));
        }
    }
    let inputs: Vec<Tensor3<f64>> = data.iter().map(|s| s.input.cast()).collect();
    let mut master = flatten_layers(init);
    let sizes: Vec<usize> = master.iter().flat_map(|l| [l.kernel.len(), l.bias.len()]).collect();
    let mut adam = AdamState::new(&sizes);
    adam.learning_rate = cfg.learning_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        let mut counts = ConfusionCounts::default();
        for &i in &order {
            let forward: Vec<ConvParams<f64>> = match cfg.quantize {
                Some(q) => master.iter().map(|l| ste_layer(l, q.weights)).collect(),
                None => master.clone(),
            };
            let (loss, grads, pred) =
                loss_and_grads(&forward, &inputs[i], data[i].label.data(), cfg.quantize.map(|q| q.activations))?;
            total_loss += loss;
            let hard: Vec<bool> = pred.data().iter().map(|&p| p >= DEFAULT_THRESHOLD as f64).collect();
            counts = counts + confusion(&hard, data[i].label.data(), None)?;

            let grad_vecs: Vec<Vec<f64>> = grads
                .into_iter()
                .flat_map(|g| [ste_backward(&g.kernel), ste_backward(&g.bias)])
                .collect();
            let grad_refs: Vec<&[f64]> = grad_vecs.iter().map(|g| g.as_slice()).collect();
            let mut params: Vec<&mut [f64]> =
                master.iter_mut().flat_map(|l| [l.kernel.as_mut_slice(), l.bias.as_mut_slice()]).collect();
            adam_step(&mut adam, &mut params, &grad_refs)?;
        }
        let stats = EpochStats { epoch, loss: total_loss / data.len() as f64, f1: metrics(&counts).f1 };
        log::info!("epoch {epoch}: loss {:.5} f1 {:?}", stats.loss, stats.f1);
        history.push(stats);
    }
    Ok(TrainOutcome { network: unflatten_layers(&master)?, history })
}

/// The two-stage recipe at toy scale: float training, then an optional
/// quantized fine-tune continuing from the float weights.
pub fn train_toy(
    data: &[Sample],
    init: &Network<f64>,
    epochs: usize,
    quantize: Option<QuantSpec>,
    seed: u64,
) -> Result<TrainOutcome> {
    train(init, data, &TrainConfig { epochs, quantize, seed, ..TrainConfig::default() })
}

/// Cell-level metrics of `net` over a dataset at the default threshold.
pub fn evaluate(net: &Network<f64>, data: &[Sample], mode: Mode) -> Result<Metrics> {
    let net32: Network<f32> = net.cast();
    let mut counts = ConfusionCounts::default();
    for s in data {
        let prob = network_forward(&s.input, &net32, mode)?;
        let hard: Vec<bool> = prob.values().iter().map(|&p| p >= DEFAULT_THRESHOLD).collect();
        counts = counts + confusion(&hard, s.label.data(), None)?;
    }
    Ok(metrics(&counts))
}

/// Loss history as `epoch,loss,f1` CSV.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,loss,f1\n");
    for h in history {
        let f1 = h.f1.map_or_else(|| "undef".to_string(), |v| format!("{v:.6}"));
        s.push_str(&format!("{},{:.8},{}\n", h.epoch, h.loss, f1));
    }
    s
}

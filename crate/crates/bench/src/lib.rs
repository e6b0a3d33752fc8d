// SPDX-License-Identifier: Apache-2.0

//! Shared fixtures for the benchmarks.

use chipnet_core::spherical::INPUT_CHANNELS;
use chipnet_core::{InputTensor, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_input(rows: usize, cols: usize, seed: u64) -> InputTensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    InputTensor::from_fn(rows, cols, INPUT_CHANNELS, |_, _, _| r.gen_range(-10.0..10.0))
}

pub fn random_network(channels: usize, blocks: usize, seed: u64) -> Network<f32> {
    Network::glorot(INPUT_CHANNELS, channels, blocks, &mut ChaCha8Rng::seed_from_u64(seed))
}

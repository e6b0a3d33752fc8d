// SPDX-License-Identifier: Apache-2.0

//! Dense row-major `rows × cols × channels` feature maps.

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Channel-innermost (HWC) feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3<T = f32> {
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T> Tensor3<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

impl<T: Copy + Default> Tensor3<T> {
    pub fn zeros(rows: usize, cols: usize, channels: usize) -> Self {
        Self { rows, cols, channels, data: vec![T::default(); rows * cols * channels] }
    }

    /// Panics if `data.len() != rows * cols * channels`.
    pub fn from_vec(rows: usize, cols: usize, channels: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols * channels, "tensor data length does not match shape");
        Self { rows, cols, channels, data }
    }

    pub fn from_fn(rows: usize, cols: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols * channels);
        for r in 0..rows {
            for c in 0..cols {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self { rows, cols, channels, data }
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize, ch: usize) -> usize {
        (r * self.cols + c) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, ch: usize) -> T {
        self.data[self.index(r, c, ch)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, ch: usize, v: T) {
        let i = self.index(r, c, ch);
        self.data[i] = v;
    }

    /// All channels of one cell.
    pub fn cell(&self, r: usize, c: usize) -> &[T] {
        let i = self.index(r, c, 0);
        &self.data[i..i + self.channels]
    }

    pub fn cell_mut(&mut self, r: usize, c: usize) -> &mut [T] {
        let i = self.index(r, c, 0);
        let n = self.channels;
        &mut self.data[i..i + n]
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Tensor3<U> {
        Tensor3 { rows: self.rows, cols: self.cols, channels: self.channels, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Single channel extracted as a `rows × cols × 1` map.
    pub fn channel(&self, ch: usize) -> Tensor3<T> {
        Tensor3::from_fn(self.rows, self.cols, 1, |r, c, _| self.get(r, c, ch))
    }

    pub fn same_shape<U>(&self, other: &Tensor3<U>) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.channels == other.channels
    }
}

impl<T: Float + Default> Tensor3<T> {
    pub fn max_abs_diff(&self, other: &Tensor3<T>) -> T {
        assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn cast<U: Float + Default>(&self) -> Tensor3<U> {
        self.map(|v| U::from(v).unwrap())
    }
}

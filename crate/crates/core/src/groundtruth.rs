// SPDX-License-Identifier: Apache-2.0

//! Per-cell training labels from a camera-view ground-truth image.
//!
//! A cell is drivable when both its nearest and its furthest point project
//! onto positive ground-truth pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::pgm::GrayImage;
use crate::spherical::{feature, InputTensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraProjection {
    /// Row-major 3×4 matrix mapping homogeneous LiDAR points to image space.
    pub k: [[f64; 4]; 3],
}

impl CameraProjection {
    /// `[I₃ | 0]`.
    pub const IDENTITY: CameraProjection =
        CameraProjection { k: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]] };

    /// Orthographic top view: pixel column from `x`, row from `y`, at
    /// `pixels_per_meter`, with `(x0, y0)` at the image origin.
    pub fn top_view(x0: f64, y0: f64, pixels_per_meter: f64) -> Self {
        let s = pixels_per_meter;
        CameraProjection { k: [[s, 0.0, 0.0, -s * x0], [0.0, s, 0.0, -s * y0], [0.0, 0.0, 0.0, 1.0]] }
    }
}

/// `(u, v) = (x̂/ẑ, ŷ/ẑ)` with `[x̂ ŷ ẑ]ᵀ = K·[x y z 1]ᵀ`.
pub fn project_to_camera(p: [f64; 3], cam: &CameraProjection) -> Result<(f64, f64)> {
    let h = [p[0], p[1], p[2], 1.0];
    let row = |i: usize| cam.k[i].iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
    let (xh, yh, zh) = (row(0), row(1), row(2));
    if zh == 0.0 {
        return Err(Error::DivisionUndefined);
    }
    if zh < 0.0 {
        return Err(Error::BehindCamera(zh));
    }
    Ok((xh / zh, yh / zh))
}

/// Ground-truth label image; positive samples are drivable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GtImage {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u16>,
}

impl GtImage {
    pub fn new(width: usize, height: usize, labels: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::shape("ground-truth image dimensions do not match its data"));
        }
        Ok(Self { width, height, labels })
    }

    pub fn from_gray(img: GrayImage) -> Self {
        Self { width: img.width, height: img.height, labels: img.pixels }
    }

    /// Label at rounded pixel coordinates, `None` outside the image.
    pub fn sample(&self, u: f64, v: f64) -> Option<u16> {
        let (col, row) = (u.round(), v.round());
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return None;
        }
        Some(self.labels[row as usize * self.width + col as usize])
    }

    fn positive_at(&self, p: [f64; 3], cam: &CameraProjection) -> bool {
        project_to_camera(p, cam).ok().and_then(|(u, v)| self.sample(u, v)).is_some_and(|l| l > 0)
    }
}

pub type CellLabels = BinaryMask;

pub fn label_cells(tensor: &InputTensor, gt: &GtImage, cam: &CameraProjection) -> CellLabels {
    let point = |cell: &[f32], base: usize| {
        [cell[base + feature::X] as f64, cell[base + feature::Y] as f64, cell[base + feature::Z] as f64]
    };
    BinaryMask::from_fn(tensor.rows(), tensor.cols(), |r, c| {
        let cell = tensor.cell(r, c);
        if cell[feature::NEAREST + feature::RHO] <= 0.0 {
            return false;
        }
        gt.positive_at(point(cell, feature::NEAREST), cam) && gt.positive_at(point(cell, feature::FURTHEST), cam)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spherical::INPUT_CHANNELS;
    use proptest::prelude::*;

    #[test]
    fn projection_examples() {
        let cam = CameraProjection::IDENTITY;
        assert_eq!(project_to_camera([2.0, 4.0, 2.0], &cam).unwrap(), (1.0, 2.0));
        assert_eq!(project_to_camera([0.0, 0.0, 1.0], &cam).unwrap(), (0.0, 0.0));
        assert!(matches!(project_to_camera([1.0, 1.0, -1.0], &cam), Err(Error::BehindCamera(_))));
        assert!(matches!(project_to_camera([1.0, 1.0, 0.0], &cam), Err(Error::DivisionUndefined)));
    }

    fn cell_tensor(near: [f32; 3], far: [f32; 3]) -> InputTensor {
        let mut t = InputTensor::zeros(1, 2, INPUT_CHANNELS);
        let cell = t.cell_mut(0, 0);
        cell[..3].copy_from_slice(&near);
        cell[7..10].copy_from_slice(&far);
        cell[feature::RHO] = 1.0;
        cell[feature::FURTHEST + feature::RHO] = 2.0;
        t
    }

    #[test]
    fn labeling_cases() {
        let cam = CameraProjection::IDENTITY;
        let t = cell_tensor([1.0, 1.0, 1.0], [2.0, 0.0, 2.0]);
        let all = GtImage::new(3, 3, vec![1; 9]).unwrap();
        let labels = label_cells(&t, &all, &cam);
        assert!(labels.get(0, 0));
        assert!(!labels.get(0, 1), "empty cell");
        let none = GtImage::new(3, 3, vec![0; 9]).unwrap();
        assert_eq!(label_cells(&t, &none, &cam).count(), 0);
        // nearest lands on (1,1) = positive, furthest on (1,0) = zero
        let mut mixed = vec![0; 9];
        mixed[4] = 1;
        let mixed = GtImage::new(3, 3, mixed).unwrap();
        assert!(!label_cells(&t, &mixed, &cam).get(0, 0));
        let behind = cell_tensor([1.0, 1.0, -1.0], [2.0, 0.0, 2.0]);
        assert!(!label_cells(&behind, &all, &cam).get(0, 0));
    }

    proptest! {
        #[test]
        fn scale_invariance(x in -5f64..5.0, y in -5f64..5.0, z in 0.1f64..5.0, s in 0.1f64..10.0) {
            let cam = CameraProjection::IDENTITY;
            let (u, v) = project_to_camera([x, y, z], &cam).unwrap();
            let (u2, v2) = project_to_camera([s * x, s * y, s * z], &cam).unwrap();
            prop_assert!((u - u2).abs() < 1e-9 && (v - v2).abs() < 1e-9);
        }

        #[test]
        fn labels_monotone_in_gt(bits in prop::collection::vec(any::<bool>(), 16), extra in prop::collection::vec(any::<bool>(), 16), pts in prop::collection::vec((0f32..4.0, 0f32..4.0), 8)) {
            let mut t = InputTensor::zeros(2, 4, INPUT_CHANNELS);
            for (i, &(u, v)) in pts.iter().enumerate() {
                let cell = t.cell_mut(i / 4, i % 4);
                cell[..3].copy_from_slice(&[u, v, 1.0]);
                cell[7..10].copy_from_slice(&[v, u, 1.0]);
                cell[feature::RHO] = 1.0;
            }
            let small = GtImage::new(4, 4, bits.iter().map(|&b| b as u16).collect()).unwrap();
            let big = GtImage::new(4, 4, bits.iter().zip(&extra).map(|(&a, &b)| (a || b) as u16).collect()).unwrap();
            let cam = CameraProjection::IDENTITY;
            prop_assert!(label_cells(&t, &small, &cam).is_subset_of(&label_cells(&t, &big, &cam)));
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Spherical-view binning of a point cloud into the azimuth × elevation mesh
//! and construction of the 14-channel network input.
//!
//! Each occupied cell contributes two 7-feature records: the point nearest
//! to the scanner (channels 0..7) and the one furthest away (channels
//! 7..14), each as `(x, y, z, θ, φ, ρ, r)` with angles in degrees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{Point, PointCloud};
use crate::tensor::Tensor3;

pub const FEATURES_PER_POINT: usize = 7;
pub const INPUT_CHANNELS: usize = 2 * FEATURES_PER_POINT;

/// Channel offsets inside a 7-feature record.
pub mod feature {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const THETA: usize = 3;
    pub const PHI: usize = 4;
    pub const RHO: usize = 5;
    pub const INTENSITY: usize = 6;
    pub const NEAREST: usize = 0;
    pub const FURTHEST: usize = 7;
}

/// `rows × cols × 14` spherical-view input grid.
pub type InputTensor = Tensor3<f32>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub azimuth_min: f64,
    /// Exclusive.
    pub azimuth_max: f64,
    pub azimuth_bin: f64,
    pub rows: usize,
    pub elevation_min: f64,
    pub elevation_max: f64,
    /// Azimuth of the sensor frame's forward direction, measured from +x toward +y.
    pub forward_azimuth: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            azimuth_min: -45.0,
            azimuth_max: 45.0,
            azimuth_bin: 0.5,
            rows: 64,
            elevation_min: -24.9,
            elevation_max: 2.0,
            forward_azimuth: 0.0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        let span = self.azimuth_max - self.azimuth_min;
        if !(self.azimuth_bin > 0.0 && span > 0.0) {
            return Err(Error::Config("azimuth window and bin must be positive".into()));
        }
        let cols = span / self.azimuth_bin;
        if (cols - cols.round()).abs() > 1e-9 || cols.round() < 1.0 {
            return Err(Error::Config(format!("azimuth span {span} is not a multiple of bin {}", self.azimuth_bin)));
        }
        if self.rows == 0 {
            return Err(Error::Config("rows must be positive".into()));
        }
        if !(self.elevation_min < self.elevation_max) {
            return Err(Error::Config("elevation_min must be below elevation_max".into()));
        }
        Ok(())
    }

    pub fn cols(&self) -> usize {
        ((self.azimuth_max - self.azimuth_min) / self.azimuth_bin).round() as usize
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols()
    }

    /// Column index for an azimuth, or `None` outside `[azimuth_min, azimuth_max)`.
    pub fn column_of(&self, theta: f64) -> Option<usize> {
        if theta < self.azimuth_min || theta >= self.azimuth_max {
            return None;
        }
        let col = ((theta - self.azimuth_min) / self.azimuth_bin).floor() as usize;
        Some(col.min(self.cols() - 1))
    }

    pub fn row_of(&self, phi: f64) -> Option<usize> {
        if phi < self.elevation_min || phi > self.elevation_max {
            return None;
        }
        let span = self.elevation_max - self.elevation_min;
        let row = ((phi - self.elevation_min) / span * self.rows as f64).floor();
        Some((row.max(0.0) as usize).min(self.rows - 1))
    }

    /// Azimuth (degrees) of a column's center.
    pub fn column_center(&self, col: usize) -> f64 {
        self.azimuth_min + (col as f64 + 0.5) * self.azimuth_bin
    }
}

/// Azimuth θ and elevation φ in degrees, range ρ in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spherical {
    pub theta: f64,
    pub phi: f64,
    pub rho: f64,
}

pub fn to_spherical(p: &Point) -> Result<Spherical> {
    let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
    let rho = (x * x + y * y + z * z).sqrt();
    if rho == 0.0 {
        return Err(Error::UndefinedAngle);
    }
    let theta = y.atan2(x).to_degrees();
    // atan2 returns -180 for (negative x, -0.0); fold it onto +180.
    let theta = if theta <= -180.0 { theta + 360.0 } else { theta };
    let phi = (z / rho).clamp(-1.0, 1.0).asin().to_degrees();
    Ok(Spherical { theta, phi, rho })
}

fn wrap_degrees(a: f64) -> f64 {
    let mut a = a % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinCounts {
    pub binned: usize,
    pub outside_roi: usize,
    /// Points whose angles are undefined, plus returns dropped while parsing.
    pub invalid: usize,
}

/// Per-cell point index lists, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    rows: usize,
    cols: usize,
    cells: Vec<Vec<u32>>,
    pub counts: BinCounts,
}

impl CellGrid {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self { rows, cols, cells: vec![Vec::new(); rows * cols], counts: BinCounts::default() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, r: usize, c: usize) -> &[u32] {
        &self.cells[r * self.cols + c]
    }

    pub fn push(&mut self, r: usize, c: usize, idx: u32) {
        self.cells[r * self.cols + c].push(idx);
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_empty()).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &[u32])> + '_ {
        self.cells.iter().enumerate().map(move |(i, v)| (i / self.cols, i % self.cols, v.as_slice()))
    }
}

/// Assigns every point inside the RoI to its azimuth/elevation cell.
pub fn bin_points(cloud: &PointCloud, cfg: &GridConfig) -> CellGrid {
    bin_points_shifted(cloud, cfg, 0.0)
}

fn bin_points_shifted(cloud: &PointCloud, cfg: &GridConfig, shift: f64) -> CellGrid {
    let mut grid = CellGrid::empty(cfg.rows, cfg.cols());
    grid.counts.invalid = cloud.dropped_invalid;
    for (idx, p) in cloud.points.iter().enumerate() {
        let Ok(s) = to_spherical(p) else {
            grid.counts.invalid += 1;
            continue;
        };
        // Relative azimuth inside the (possibly shifted) window.
        let theta = wrap_degrees(s.theta - cfg.forward_azimuth) - shift;
        match (cfg.column_of(theta), cfg.row_of(s.phi)) {
            (Some(col), Some(row)) => {
                grid.push(row, col, idx as u32);
                grid.counts.binned += 1;
            }
            _ => grid.counts.outside_roi += 1,
        }
    }
    grid
}

fn features(p: &Point) -> [f32; FEATURES_PER_POINT] {
    let s = to_spherical(p).expect("binned points have defined angles");
    [p.x, p.y, p.z, s.theta as f32, s.phi as f32, s.rho as f32, p.intensity]
}

/// Indices of the nearest and furthest point of a non-empty cell; equal
/// ranges resolve to the lowest point index.
fn extremes(cell: &[u32], cloud: &PointCloud) -> (u32, u32) {
    let rho = |i: u32| {
        let p = &cloud.points[i as usize];
        let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
        x * x + y * y + z * z
    };
    let mut near = (rho(cell[0]), cell[0]);
    let mut far = near;
    for &i in &cell[1..] {
        let key = (rho(i), i);
        if key.0 < near.0 || (key.0 == near.0 && i < near.1) {
            near = key;
        }
        if key.0 > far.0 || (key.0 == far.0 && i < far.1) {
            far = key;
        }
    }
    (near.1, far.1)
}

pub fn build_input_tensor(grid: &CellGrid, cloud: &PointCloud) -> InputTensor {
    let mut tensor = InputTensor::zeros(grid.rows(), grid.cols(), INPUT_CHANNELS);
    for (r, c, cell) in grid.iter() {
        if cell.is_empty() {
            continue;
        }
        let (near, far) = extremes(cell, cloud);
        let out = tensor.cell_mut(r, c);
        out[..FEATURES_PER_POINT].copy_from_slice(&features(&cloud.points[near as usize]));
        out[FEATURES_PER_POINT..].copy_from_slice(&features(&cloud.points[far as usize]));
    }
    tensor
}

/// Convenience: bin and build in one step.
pub fn preprocess(cloud: &PointCloud, cfg: &GridConfig) -> (CellGrid, InputTensor) {
    let grid = bin_points(cloud, cfg);
    let tensor = build_input_tensor(&grid, cloud);
    (grid, tensor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsageStats {
    pub point_usage_fraction: f64,
    pub cell_occupancy_fraction: f64,
}

pub fn usage_stats(grid: &CellGrid, tensor: &InputTensor, roi_point_count: usize) -> Result<UsageStats> {
    if roi_point_count == 0 {
        return Err(Error::domain("RoI point count must be positive"));
    }
    if tensor.rows() != grid.rows() || tensor.cols() != grid.cols() {
        return Err(Error::shape("tensor and cell grid dimensions differ"));
    }
    let stored: usize = grid.iter().map(|(_, _, cell)| cell.len()).sum();
    if stored > roi_point_count {
        return Err(Error::domain(format!("RoI count {roi_point_count} is below the {stored} stored points")));
    }
    let represented: usize = grid.iter().map(|(_, _, cell)| cell.len().min(2)).sum();
    let total_cells = grid.rows() * grid.cols();
    Ok(UsageStats {
        point_usage_fraction: represented as f64 / roi_point_count as f64,
        cell_occupancy_fraction: grid.occupied_cells() as f64 / total_cells as f64,
    })
}

/// Bins with the azimuth window shifted by `degrees` and relabels columns
/// back onto the canonical window. Point features are left untouched.
pub fn rotate_roi(cloud: &PointCloud, cfg: &GridConfig, degrees: f64) -> Result<InputTensor> {
    Ok(rotate_roi_grid(cloud, cfg, degrees)?.1)
}

pub fn rotate_roi_grid(cloud: &PointCloud, cfg: &GridConfig, degrees: f64) -> Result<(CellGrid, InputTensor)> {
    cfg.validate()?;
    let lo = cfg.azimuth_min + degrees;
    let hi = cfg.azimuth_max + degrees;
    if !degrees.is_finite() || lo <= -180.0 || hi > 180.0 {
        return Err(Error::domain(format!("rotation by {degrees}° moves the window outside (-180, 180]")));
    }
    let grid = bin_points_shifted(cloud, cfg, degrees);
    let tensor = build_input_tensor(&grid, cloud);
    Ok((grid, tensor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn pt(x: f32, y: f32, z: f32) -> Point {
        Point::new(x, y, z, 0.5)
    }

    /// Point at range `rho`, azimuth `theta`, elevation `phi` (degrees).
    fn polar(theta: f64, phi: f64, rho: f64) -> Point {
        let (t, p) = (theta.to_radians(), phi.to_radians());
        pt((rho * p.cos() * t.cos()) as f32, (rho * p.cos() * t.sin()) as f32, (rho * p.sin()) as f32)
    }

    #[test]
    fn spherical_examples() {
        let s = to_spherical(&pt(1.0, 0.0, 0.0)).unwrap();
        assert_eq!((s.theta, s.phi, s.rho), (0.0, 0.0, 1.0));
        let s = to_spherical(&pt(1.0, 1.0, 0.0)).unwrap();
        assert!((s.theta - 45.0).abs() < 1e-12);
        assert_eq!(s.phi, 0.0);
        assert!((s.rho - 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(to_spherical(&pt(0.0, 0.0, 0.0)), Err(Error::UndefinedAngle)));
        let s = to_spherical(&pt(-1.0, -0.0, 0.0)).unwrap();
        assert_eq!(s.theta, 180.0);
    }

    #[test]
    fn default_grid_is_180_by_64() {
        let cfg = GridConfig::default();
        cfg.validate().unwrap();
        assert_eq!((cfg.rows, cfg.cols()), (64, 180));
    }

    #[test]
    fn azimuth_boundaries() {
        let cfg = GridConfig::default();
        assert_eq!(cfg.column_of(-45.0), Some(0));
        assert_eq!(cfg.column_of(0.0), Some(90));
        assert_eq!(cfg.column_of(45.0), None);
        let cloud = PointCloud::new(vec![polar(0.0, -10.0, 10.0), pt(1.0, 1.0, -0.2), pt(10.0, 0.0, 5.0)], "t");
        let grid = bin_points(&cloud, &cfg);
        assert_eq!(grid.counts, BinCounts { binned: 1, outside_roi: 2, invalid: 0 });
        let row = cfg.row_of(-10.0).unwrap();
        assert_eq!(grid.cell(row, 90), &[0]);
    }

    #[test]
    fn nearest_and_furthest_selection() {
        let cfg = GridConfig::default();
        let cloud = PointCloud::new(vec![polar(0.1, -5.0, 20.0), polar(0.2, -5.0, 5.0)], "t");
        let (grid, tensor) = preprocess(&cloud, &cfg);
        let row = cfg.row_of(-5.0).unwrap();
        assert_eq!(grid.cell(row, 90).len(), 2);
        let cell = tensor.cell(row, 90);
        assert!((cell[feature::RHO] - 5.0).abs() < 1e-4);
        assert!((cell[feature::FURTHEST + feature::RHO] - 20.0).abs() < 1e-4);
        assert_eq!(cell[feature::X], cloud.points[1].x);
        assert_eq!(cell[feature::FURTHEST + feature::X], cloud.points[0].x);
    }

    #[test]
    fn single_point_duplicates_and_empty_is_zero() {
        let cfg = GridConfig::default();
        let cloud = PointCloud::new(vec![polar(10.2, -3.0, 12.0)], "t");
        let (_, tensor) = preprocess(&cloud, &cfg);
        let (row, col) = (cfg.row_of(-3.0).unwrap(), cfg.column_of(10.2).unwrap());
        let cell = tensor.cell(row, col);
        assert_eq!(cell[..7], cell[7..]);
        assert!(tensor.cell(0, 0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tie_breaks_to_lowest_index() {
        let cfg = GridConfig::default();
        let a = Point::new(10.0, 0.0, -1.0, 0.1);
        let b = Point::new(10.0, 0.0, -1.0, 0.9);
        let cloud = PointCloud::new(vec![a, b], "t");
        let (grid, tensor) = preprocess(&cloud, &cfg);
        let (r, c, _) = grid.iter().find(|(_, _, v)| !v.is_empty()).unwrap();
        assert_eq!(tensor.get(r, c, feature::INTENSITY), 0.1);
        assert_eq!(tensor.get(r, c, feature::FURTHEST + feature::INTENSITY), 0.1);
    }

    #[test]
    fn usage_examples() {
        let grid = CellGrid::empty(4, 4);
        let tensor = InputTensor::zeros(4, 4, INPUT_CHANNELS);
        let s = usage_stats(&grid, &tensor, 100).unwrap();
        assert_eq!((s.point_usage_fraction, s.cell_occupancy_fraction), (0.0, 0.0));
        assert!(matches!(usage_stats(&grid, &tensor, 0), Err(Error::Domain(_))));

        let mut full = CellGrid::empty(2, 3);
        let mut i = 0;
        for r in 0..2 {
            for c in 0..3 {
                full.push(r, c, i);
                full.push(r, c, i + 1);
                i += 2;
            }
        }
        let tensor = InputTensor::zeros(2, 3, INPUT_CHANNELS);
        let s = usage_stats(&full, &tensor, 12).unwrap();
        assert_eq!((s.point_usage_fraction, s.cell_occupancy_fraction), (1.0, 1.0));
    }

    /// Uniform 64-ring scan at 0.17° azimuth steps over the RoI.
    #[test]
    fn uniform_hdl64_scan_usage() {
        let cfg = GridConfig::default();
        let span = cfg.elevation_max - cfg.elevation_min;
        let mut points = Vec::new();
        let thetas: Vec<f64> = (0..).map(|i| -44.99 + 0.17 * i as f64).take_while(|&t| t < 45.0).collect();
        for ring in 0..64 {
            let phi = cfg.elevation_min + (ring as f64 + 0.5) * span / 64.0;
            for &t in &thetas {
                points.push(polar(t, phi, 30.0));
            }
        }
        let cloud = PointCloud::new(points, "hdl");
        let (grid, tensor) = preprocess(&cloud, &cfg);
        assert_eq!(grid.counts.binned, cloud.len());

        // Oracle: count thetas per half-degree cell directly.
        let mut per_col = [0usize; 180];
        for &t in &thetas {
            per_col[((t + 45.0) / 0.5).floor() as usize] += 1;
        }
        let kept: usize = per_col.iter().map(|&n| n.min(2)).sum();
        let expected = kept as f64 / thetas.len() as f64;

        let stats = usage_stats(&grid, &tensor, grid.counts.binned).unwrap();
        assert_eq!(stats.cell_occupancy_fraction, 1.0);
        assert!((stats.point_usage_fraction - expected).abs() < 1e-12);
        assert!((stats.point_usage_fraction - 2.0 / 3.0).abs() < 0.03);
    }

    #[test]
    fn rotation_examples() {
        let cfg = GridConfig::default();
        // 5° up to f32 rounding of the coordinates
        let cloud = PointCloud::new(vec![polar(5.0 + 1e-4, -5.0, 10.0)], "t");
        let t = rotate_roi(&cloud, &cfg, 5.0).unwrap();
        let row = cfg.row_of(-5.0).unwrap();
        assert!(t.get(row, 90, feature::RHO) > 0.0);
        assert!(matches!(rotate_roi(&cloud, &cfg, 170.0), Err(Error::Domain(_))));
        assert_eq!(rotate_roi(&cloud, &cfg, 0.0).unwrap(), preprocess(&cloud, &cfg).1);
    }

    fn arb_cloud() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((-60f64..60.0, -26f64..3.0, 1f64..80.0), 1..300)
    }

    proptest! {
        #[test]
        fn invariants_hold(spec in arb_cloud(), seed in any::<u64>()) {
            let cfg = GridConfig::default();
            let points: Vec<Point> = spec.iter().map(|&(t, p, r)| polar(t, p, r)).collect();
            let cloud = PointCloud::new(points.clone(), "p");
            let (grid, tensor) = preprocess(&cloud, &cfg);
            let c = grid.counts;
            prop_assert_eq!(c.binned + c.outside_roi + c.invalid, cloud.len());
            for (r, col, cell) in grid.iter() {
                let v = tensor.cell(r, col);
                if cell.is_empty() {
                    prop_assert!(v.iter().all(|&x| x == 0.0));
                } else {
                    prop_assert!(v[feature::RHO] <= v[feature::FURTHEST + feature::RHO]);
                }
            }

            let mut shuffled = points;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let cloud2 = PointCloud::new(shuffled, "p");
            let (grid2, tensor2) = preprocess(&cloud2, &cfg);
            prop_assert_eq!(&tensor, &tensor2);
            prop_assert_eq!(
                usage_stats(&grid, &tensor, c.binned.max(1)).ok(),
                usage_stats(&grid2, &tensor2, c.binned.max(1)).ok()
            );
            prop_assert_eq!(rotate_roi(&cloud, &cfg, 0.0).unwrap(), tensor);
        }
    }
}

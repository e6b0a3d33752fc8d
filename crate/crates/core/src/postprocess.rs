// SPDX-License-Identifier: Apache-2.0

//! Turns a probability map into a metric top-view drivable map.
//!
//! Steps: threshold, keep the largest connected component, dilate with the
//! radius-1 disk, pick one boundary reference point per azimuth column,
//! close the points into a polygon and rasterize it onto the grid map.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cnn::ProbMap;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::pgm::write_pgm;
use crate::spherical::{feature, GridConfig, InputTensor};

pub const DEFAULT_THRESHOLD: f32 = 0.5;

pub fn threshold_map(p: &ProbMap, thr: f32) -> Result<BinaryMask> {
    if !(thr > 0.0 && thr < 1.0) {
        return Err(Error::domain(format!("threshold must lie in (0, 1), got {thr}")));
    }
    Ok(BinaryMask::from_fn(p.rows(), p.cols(), |r, c| p.get(r, c) >= thr))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
        }
    }
}

/// Component labels (0 = background, 1.. in raster order of first cell) and sizes.
pub fn label_components(m: &BinaryMask, conn: Connectivity) -> (Vec<u32>, Vec<usize>) {
    let (rows, cols) = (m.rows(), m.cols());
    let mut labels = vec![0u32; rows * cols];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..rows * cols {
        if !m.data()[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (r, c) = ((i / cols) as isize, (i % cols) as isize);
            for &(dr, dc) in conn.offsets() {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                    continue;
                }
                let j = nr as usize * cols + nc as usize;
                if m.data()[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

pub fn largest_connected_component(m: &BinaryMask) -> BinaryMask {
    largest_connected_component_with(m, Connectivity::Four)
}

/// Keeps the biggest component; equal sizes go to the one whose first cell
/// comes earliest in raster order.
pub fn largest_connected_component_with(m: &BinaryMask, conn: Connectivity) -> BinaryMask {
    let (labels, sizes) = label_components(m, conn);
    let Some(best) = sizes.iter().enumerate().fold(None, |best: Option<(usize, usize)>, (i, &s)| match best {
        Some((_, bs)) if bs >= s => best,
        _ => Some((i, s)),
    }) else {
        return BinaryMask::new(m.rows(), m.cols());
    };
    let keep = best.0 as u32 + 1;
    BinaryMask::from_vec(m.rows(), m.cols(), labels.iter().map(|&l| l == keep).collect()).unwrap()
}

/// Dilation by the radius-1 disk (center plus 4-neighbors), clipped at the border.
pub fn dilate(m: &BinaryMask) -> BinaryMask {
    let (rows, cols) = (m.rows(), m.cols());
    BinaryMask::from_fn(rows, cols, |r, c| {
        m.get(r, c)
            || (r > 0 && m.get(r - 1, c))
            || (r + 1 < rows && m.get(r + 1, c))
            || (c > 0 && m.get(r, c - 1))
            || (c + 1 < cols && m.get(r, c + 1))
    })
}

/// A polygon vertex source: column index and vehicle-frame position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub col: usize,
    pub x: f64,
    pub y: f64,
}

/// One boundary point per azimuth column that contains drivable cells: the
/// nearest non-drivable return, or the furthest return when the whole column
/// is drivable.
pub fn column_reference_points(mask: &BinaryMask, tensor: &InputTensor) -> Result<Vec<ReferencePoint>> {
    if mask.rows() != tensor.rows() || mask.cols() != tensor.cols() {
        return Err(Error::shape("mask and tensor dimensions differ"));
    }
    let near_rho = feature::NEAREST + feature::RHO;
    let far_rho = feature::FURTHEST + feature::RHO;
    let mut points = Vec::new();
    for col in 0..mask.cols() {
        let occupied: Vec<usize> = (0..mask.rows()).filter(|&r| tensor.get(r, col, near_rho) > 0.0).collect();
        if !occupied.iter().any(|&r| mask.get(r, col)) {
            continue;
        }
        let obstacle = occupied
            .iter()
            .copied()
            .filter(|&r| !mask.get(r, col))
            .min_by(|&a, &b| tensor.get(a, col, near_rho).total_cmp(&tensor.get(b, col, near_rho)));
        let (row, base) = match obstacle {
            Some(r) => (r, feature::NEAREST),
            None => {
                let r = occupied
                    .iter()
                    .copied()
                    .rev()
                    .max_by(|&a, &b| tensor.get(a, col, far_rho).total_cmp(&tensor.get(b, col, far_rho)))
                    .expect("column has occupied cells");
                (r, feature::FURTHEST)
            }
        };
        points.push(ReferencePoint {
            col,
            x: tensor.get(row, col, base + feature::X) as f64,
            y: tensor.get(row, col, base + feature::Y) as f64,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    /// Vehicle-frame vertices `(x forward, y left)` in meters, implicitly closed.
    pub vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::domain("a polygon needs at least 3 vertices"));
        }
        Ok(Self { vertices })
    }

    /// Shoelace area (absolute).
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                a.0 * b.1 - b.0 * a.1
            })
            .sum();
        twice.abs() / 2.0
    }

    pub fn edges(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// `x_m,y_m` lines.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x_m,y_m\n");
        for (x, y) in &self.vertices {
            s.push_str(&format!("{x},{y}\n"));
        }
        s
    }
}

/// Where the polygon is closed near the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolygonAnchors {
    pub x_near: f64,
    /// Right-most and left-most azimuth rays (degrees).
    pub azimuth_right: f64,
    pub azimuth_left: f64,
}

impl PolygonAnchors {
    pub fn new(grid: &GridConfig, map: &GridMapConfig) -> Self {
        Self { x_near: map.x_min, azimuth_right: grid.azimuth_min, azimuth_left: grid.azimuth_max }
    }

    fn corners(&self) -> ((f64, f64), (f64, f64)) {
        let y = |az: f64| self.x_near * az.to_radians().tan();
        ((self.x_near, y(self.azimuth_right)), (self.x_near, y(self.azimuth_left)))
    }
}

/// Reference points in column order, closed by the two near-range anchors.
/// `None` when there are no points (nothing is drivable).
pub fn build_polygon(points: &[ReferencePoint], anchors: &PolygonAnchors) -> Option<Polygon> {
    if points.is_empty() {
        return None;
    }
    let mut ordered = points.to_vec();
    ordered.sort_by_key(|p| p.col);
    let (right, left) = anchors.corners();
    let mut vertices = Vec::with_capacity(ordered.len() + 2);
    vertices.push(right);
    vertices.extend(ordered.iter().map(|p| (p.x, p.y)));
    vertices.push(left);
    Some(Polygon { vertices })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridMapConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: f64,
}

impl Default for GridMapConfig {
    fn default() -> Self {
        Self { x_min: 6.0, x_max: 46.0, y_min: -10.0, y_max: 10.0, resolution: 0.05 }
    }
}

impl GridMapConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, span) in [("x", self.x_max - self.x_min), ("y", self.y_max - self.y_min)] {
            let n = span / self.resolution;
            if !(self.resolution > 0.0 && span > 0.0) || (n - n.round()).abs() > 1e-6 {
                return Err(Error::Config(format!("{name} span {span} is not a multiple of {}", self.resolution)));
            }
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        ((self.x_max - self.x_min) / self.resolution).round() as usize
    }

    pub fn ny(&self) -> usize {
        ((self.y_max - self.y_min) / self.resolution).round() as usize
    }

    pub fn center_x(&self, ix: usize) -> f64 {
        self.x_min + (ix as f64 + 0.5) * self.resolution
    }

    pub fn center_y(&self, iy: usize) -> f64 {
        self.y_min + (iy as f64 + 0.5) * self.resolution
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    #[default]
    NotDrivable,
    Drivable,
    DontCare,
}

impl CellState {
    pub fn gray(self) -> u8 {
        match self {
            CellState::NotDrivable => 0,
            CellState::Drivable => 255,
            CellState::DontCare => 127,
        }
    }

    /// Inverse of [`CellState::gray`] for 8-bit images; mid-gray values are don't-care.
    pub fn from_gray(v: u16, maxval: u16) -> Self {
        let v = v as f64 / maxval as f64;
        if v > 0.75 {
            CellState::Drivable
        } else if v < 0.25 {
            CellState::NotDrivable
        } else {
            CellState::DontCare
        }
    }
}

/// Top-view map, x-major: `cells[ix * ny + iy]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub config: GridMapConfig,
    cells: Vec<CellState>,
}

impl GridMap {
    pub fn new(config: GridMapConfig) -> Self {
        Self { cells: vec![CellState::NotDrivable; config.nx() * config.ny()], config }
    }

    pub fn nx(&self) -> usize {
        self.config.nx()
    }

    pub fn ny(&self) -> usize {
        self.config.ny()
    }

    pub fn get(&self, ix: usize, iy: usize) -> CellState {
        self.cells[ix * self.ny() + iy]
    }

    pub fn set(&mut self, ix: usize, iy: usize, v: CellState) {
        let ny = self.ny();
        self.cells[ix * ny + iy] = v;
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }

    /// Image layout: row 0 is the far edge (`x_max`), column 0 the left edge (`y_max`).
    pub fn to_image(&self) -> (usize, usize, Vec<u8>) {
        let (nx, ny) = (self.nx(), self.ny());
        let mut px = Vec::with_capacity(nx * ny);
        for row in 0..nx {
            let ix = nx - 1 - row;
            for col in 0..ny {
                px.push(self.get(ix, ny - 1 - col).gray());
            }
        }
        (ny, nx, px)
    }

    pub fn from_image(config: GridMapConfig, width: usize, height: usize, maxval: u16, px: &[u16]) -> Result<Self> {
        let mut map = Self::new(config);
        let (nx, ny) = (map.nx(), map.ny());
        if (width, height) != (ny, nx) || px.len() != nx * ny {
            return Err(Error::shape(format!("image is {width}x{height}, grid map needs {ny}x{nx}")));
        }
        for row in 0..nx {
            for col in 0..ny {
                map.set(nx - 1 - row, ny - 1 - col, CellState::from_gray(px[row * ny + col], maxval));
            }
        }
        Ok(map)
    }
}

fn iy_range(cfg: &GridMapConfig, lo: f64, hi: f64) -> Option<(usize, usize)> {
    let ny = cfg.ny();
    if hi < lo || ny == 0 {
        return None;
    }
    let guess = |y: f64| ((y - cfg.y_min) / cfg.resolution - 0.5).clamp(0.0, (ny - 1) as f64) as usize;
    let mut start = guess(lo);
    while start > 0 && cfg.center_y(start - 1) >= lo {
        start -= 1;
    }
    while start < ny && cfg.center_y(start) < lo {
        start += 1;
    }
    let mut end = guess(hi);
    while end + 1 < ny && cfg.center_y(end + 1) <= hi {
        end += 1;
    }
    loop {
        if cfg.center_y(end) <= hi {
            break;
        }
        if end == 0 {
            return None;
        }
        end -= 1;
    }
    (start <= end && start < ny).then_some((start, end))
}

/// Marks every cell whose center lies inside the polygon (even-odd rule,
/// boundary inclusive). Each map column `x = const` is filled between
/// sorted edge crossings.
pub fn rasterize(poly: &Polygon, cfg: &GridMapConfig) -> GridMap {
    let mut map = GridMap::new(*cfg);
    let mut crossings = Vec::new();
    for ix in 0..cfg.nx() {
        let xc = cfg.center_x(ix);
        crossings.clear();
        let mark = |map: &mut GridMap, lo: f64, hi: f64| {
            if let Some((a, b)) = iy_range(cfg, lo, hi) {
                for iy in a..=b {
                    map.set(ix, iy, CellState::Drivable);
                }
            }
        };
        for ((x0, y0), (x1, y1)) in poly.edges() {
            if (x0 > xc) != (x1 > xc) {
                crossings.push((y1 - y0) * (xc - x0) / (x1 - x0) + y0);
            } else if x0 == xc && x1 == xc {
                mark(&mut map, y0.min(y1), y0.max(y1));
            } else if x0 == xc {
                mark(&mut map, y0, y0);
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            mark(&mut map, pair[0], pair[1]);
        }
    }
    map
}

/// Cells whose centers fall outside the azimuth window of the spherical grid.
pub fn roi_dont_care(map_cfg: &GridMapConfig, grid: &GridConfig) -> Vec<bool> {
    let (nx, ny) = (map_cfg.nx(), map_cfg.ny());
    let mut out = Vec::with_capacity(nx * ny);
    for ix in 0..nx {
        for iy in 0..ny {
            let az = map_cfg.center_y(iy).atan2(map_cfg.center_x(ix)).to_degrees() - grid.forward_azimuth;
            out.push(!(az >= grid.azimuth_min && az < grid.azimuth_max));
        }
    }
    out
}

/// Binary P5 graymap, 400 wide and 800 tall at the default configuration.
pub fn render_pgm(map: &GridMap) -> Vec<u8> {
    let (w, h, px) = map.to_image();
    write_pgm(w, h, &px)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostprocessOutput {
    pub mask: BinaryMask,
    pub reference_points: Vec<ReferencePoint>,
    pub polygon: Option<Polygon>,
    pub map: GridMap,
}

/// The full chain from probabilities to a rasterized top-view map.
pub fn postprocess(
    prob: &ProbMap,
    tensor: &InputTensor,
    thr: f32,
    grid: &GridConfig,
    map_cfg: &GridMapConfig,
) -> Result<PostprocessOutput> {
    map_cfg.validate()?;
    let mask = dilate(&largest_connected_component(&threshold_map(prob, thr)?));
    let reference_points = column_reference_points(&mask, tensor)?;
    let polygon = build_polygon(&reference_points, &PolygonAnchors::new(grid, map_cfg));
    let map = match &polygon {
        Some(p) => rasterize(p, map_cfg),
        None => GridMap::new(*map_cfg),
    };
    Ok(PostprocessOutput { mask, reference_points, polygon, map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spherical::INPUT_CHANNELS;
    use proptest::prelude::*;

    fn mask(rows: &[&str]) -> BinaryMask {
        let cols = rows[0].len();
        BinaryMask::from_fn(rows.len(), cols, |r, c| rows[r].as_bytes()[c] == b'#')
    }

    #[test]
    fn threshold_semantics() {
        let half = ProbMap::filled(3, 4, 0.5);
        assert_eq!(threshold_map(&half, 0.5).unwrap().count(), 12);
        assert_eq!(threshold_map(&ProbMap::filled(3, 4, 0.49), 0.5).unwrap().count(), 0);
        assert!(threshold_map(&half, 1.0).is_err());
        assert!(threshold_map(&half, 0.0).is_err());
    }

    #[test]
    fn lcc_cases() {
        let blob = mask(&[".##.", ".##.", "...."]);
        assert_eq!(largest_connected_component(&blob), blob);
        let two = mask(&["###..", "#.#..", "....#", "...##"]);
        assert_eq!(largest_connected_component(&two), mask(&["###..", "#.#..", ".....", "....."]));
        let tie = mask(&["##..", "##..", "...#", "..##", "...#"]);
        assert_eq!(largest_connected_component(&tie), mask(&["##..", "##..", "....", "....", "...."]));
        let empty = BinaryMask::new(3, 3);
        assert_eq!(largest_connected_component(&empty), empty);
        // diagonal neighbors join only under 8-connectivity
        let diag = mask(&["#..", ".#.", "..#"]);
        assert_eq!(largest_connected_component(&diag).count(), 1);
        assert_eq!(largest_connected_component_with(&diag, Connectivity::Eight).count(), 3);
    }

    #[test]
    fn dilation_cases() {
        let center = mask(&["...", ".#.", "..."]);
        assert_eq!(dilate(&center), mask(&[".#.", "###", ".#."]));
        let full = BinaryMask::filled(4, 4, true);
        assert_eq!(dilate(&full), full);
        let corner = mask(&["#..", "...", "..."]);
        assert_eq!(dilate(&corner).count(), 3);
    }

    fn column_tensor(rhos: &[f32]) -> InputTensor {
        let mut t = InputTensor::zeros(rhos.len(), 1, INPUT_CHANNELS);
        for (r, &rho) in rhos.iter().enumerate() {
            let cell = t.cell_mut(r, 0);
            for base in [feature::NEAREST, feature::FURTHEST] {
                cell[base + feature::X] = rho;
                cell[base + feature::Y] = 0.1 * rho;
                cell[base + feature::RHO] = rho;
            }
            cell[feature::FURTHEST + feature::RHO] = rho + 0.5;
            cell[feature::FURTHEST + feature::X] = rho + 0.5;
        }
        t
    }

    #[test]
    fn reference_point_cases() {
        let t = column_tensor(&[5.0, 10.0, 15.0]);
        let m = BinaryMask::from_vec(3, 1, vec![true, true, false]).unwrap();
        let pts = column_reference_points(&m, &t).unwrap();
        assert_eq!(pts, vec![ReferencePoint { col: 0, x: 15.0, y: 1.5 }]);

        let all = BinaryMask::filled(3, 1, true);
        let pts = column_reference_points(&all, &t).unwrap();
        assert_eq!(pts[0].x, 15.5);
        assert!(column_reference_points(&BinaryMask::filled(3, 1, false), &t).unwrap().is_empty());
    }

    fn anchors() -> PolygonAnchors {
        PolygonAnchors::new(&GridConfig::default(), &GridMapConfig::default())
    }

    fn rp(col: usize, x: f64, y: f64) -> ReferencePoint {
        ReferencePoint { col, x, y }
    }

    #[test]
    fn polygon_construction() {
        let p = build_polygon(&[rp(0, 20.0, -1.0), rp(1, 20.0, 0.0), rp(2, 20.0, 1.0)], &anchors()).unwrap();
        assert_eq!(p.vertices.len(), 5);
        let rect = build_polygon(&[rp(0, 20.0, -6.0), rp(5, 20.0, 6.0)], &anchors()).unwrap();
        assert!((rect.area() - 14.0 * 12.0).abs() < 1e-9);
        let single = build_polygon(&[rp(3, 30.0, 0.0)], &anchors()).unwrap();
        assert_eq!(single.vertices.len(), 3);
        assert!(build_polygon(&[], &anchors()).is_none());
    }

    #[test]
    fn grid_dimensions_and_rectangles() {
        let cfg = GridMapConfig::default();
        cfg.validate().unwrap();
        assert_eq!((cfg.nx(), cfg.ny()), (800, 400));
        let all = Polygon::new(vec![(0.0, -20.0), (50.0, -20.0), (50.0, 20.0), (0.0, 20.0)]).unwrap();
        assert_eq!(rasterize(&all, &cfg).count(CellState::Drivable), 320_000);
        let rect = Polygon::new(vec![(10.0, -5.0), (20.0, -5.0), (20.0, 5.0), (10.0, 5.0)]).unwrap();
        assert_eq!(rasterize(&rect, &cfg).count(CellState::Drivable), 200 * 200);
    }

    #[test]
    fn boundary_cells_count_as_inside() {
        let cfg = GridMapConfig { x_min: 0.0, x_max: 4.0, y_min: 0.0, y_max: 4.0, resolution: 1.0 };
        // edges pass exactly through the centers at 0.5 and 2.5
        let sq = Polygon::new(vec![(0.5, 0.5), (2.5, 0.5), (2.5, 2.5), (0.5, 2.5)]).unwrap();
        assert_eq!(rasterize(&sq, &cfg).count(CellState::Drivable), 9);
    }

    #[test]
    fn pgm_rendering() {
        let cfg = GridMapConfig::default();
        let map = GridMap::new(cfg);
        let bytes = render_pgm(&map);
        let header = b"P5\n400 800\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len() - header.len(), 320_000);
        assert!(bytes[header.len()..].iter().all(|&b| b == 0));

        let small = GridMapConfig { x_min: 0.0, x_max: 3.0, y_min: 0.0, y_max: 2.0, resolution: 1.0 };
        let mut board = GridMap::new(small);
        for ix in 0..3 {
            for iy in 0..2 {
                if (ix + iy) % 2 == 0 {
                    board.set(ix, iy, CellState::Drivable);
                }
            }
        }
        board.set(0, 1, CellState::DontCare);
        // row 0 = ix 2, column 0 = iy 1
        let expect: Vec<u8> = vec![0, 255, 255, 0, 127, 255];
        let bytes = render_pgm(&board);
        assert_eq!(&bytes[bytes.len() - 6..], &expect[..]);
        let img = crate::pgm::read_pgm(&bytes).unwrap();
        assert_eq!(GridMap::from_image(small, img.width, img.height, img.maxval, &img.pixels).unwrap(), board);
    }

    #[test]
    fn empty_probability_gives_black_map() {
        let grid = GridConfig { rows: 4, azimuth_bin: 22.5, ..GridConfig::default() };
        let t = InputTensor::zeros(4, 4, INPUT_CHANNELS);
        let out = postprocess(&ProbMap::filled(4, 4, 0.0), &t, 0.5, &grid, &GridMapConfig::default()).unwrap();
        assert!(out.polygon.is_none());
        assert_eq!(out.map.count(CellState::Drivable), 0);
    }

    proptest! {
        #[test]
        fn dilation_is_extensive_and_monotone(bits in prop::collection::vec(any::<bool>(), 48), extra in prop::collection::vec(any::<bool>(), 48)) {
            let m1 = BinaryMask::from_vec(6, 8, bits.clone()).unwrap();
            let m2 = BinaryMask::from_vec(6, 8, bits.iter().zip(&extra).map(|(&a, &b)| a || b).collect()).unwrap();
            prop_assert!(m1.is_subset_of(&dilate(&m1)));
            prop_assert!(dilate(&m1).is_subset_of(&dilate(&m2)));
        }

        #[test]
        fn lcc_is_single_component(bits in prop::collection::vec(any::<bool>(), 64)) {
            let m = BinaryMask::from_vec(8, 8, bits).unwrap();
            let l = largest_connected_component(&m);
            prop_assert!(l.is_subset_of(&m));
            let (_, sizes) = label_components(&l, Connectivity::Four);
            prop_assert!(sizes.len() <= 1);
        }

        #[test]
        fn threshold_is_antitone(vals in prop::collection::vec(0f32..=1.0, 30), a in 0.01f32..0.99, b in 0.01f32..0.99) {
            let p = ProbMap::new(5, 6, vals).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(threshold_map(&p, hi).unwrap().is_subset_of(&threshold_map(&p, lo).unwrap()));
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Procedural road scenes for desk-scale training.
//!
//! Each frame ray-casts a flat road of random width and lateral offset,
//! raised rough terrain on both sides and optionally a parked vehicle,
//! then bins the returns and labels the cells against a top-view
//! ground-truth image. On the spherical grid the road shows up as a
//! trapezoid that widens toward the sensor.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::groundtruth::{label_cells, CameraProjection, GtImage};
use crate::mask::BinaryMask;
use crate::pointcloud::{Point, PointCloud};
use crate::spherical::{rotate_roi, GridConfig, InputTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub grid: GridConfig,
    pub sensor_height: f64,
    pub max_range: f64,
    /// Horizontal angular step between returns, degrees.
    pub azimuth_step: f64,
    pub road_half_width: (f64, f64),
    pub road_offset: (f64, f64),
    pub vehicle_probability: f64,
    pub range_noise: f64,
    pub dropout: f64,
    /// Candidate RoI rotations (degrees); one is drawn per frame.
    pub rotations: Vec<f64>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            grid: toy_grid(),
            sensor_height: 1.73,
            max_range: 80.0,
            azimuth_step: 0.5,
            road_half_width: (3.0, 6.0),
            road_offset: (-1.5, 1.5),
            vehicle_probability: 0.4,
            range_noise: 0.01,
            dropout: 0.05,
            rotations: vec![0.0],
        }
    }
}

/// 36 × 16 grid over the usual field of view.
pub fn toy_grid() -> GridConfig {
    GridConfig { azimuth_bin: 2.5, rows: 16, ..GridConfig::default() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scene {
    pub road_offset: f64,
    pub road_half_width: f64,
    /// Footprint `[x0, x1] × [y0, y1]` of a vehicle standing on the ground.
    pub vehicle: Option<[f64; 4]>,
    pub rotation: f64,
}

const VEHICLE_HEIGHT: f64 = 1.5;

impl Scene {
    pub fn random<R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Self {
        let road_offset = rng.gen_range(cfg.road_offset.0..=cfg.road_offset.1);
        let road_half_width = rng.gen_range(cfg.road_half_width.0..=cfg.road_half_width.1);
        let vehicle = rng.gen_bool(cfg.vehicle_probability).then(|| {
            let x0 = rng.gen_range(8.0..25.0);
            let yc = road_offset + rng.gen_range(-(road_half_width - 1.0)..=(road_half_width - 1.0));
            [x0, x0 + 4.0, yc - 0.9, yc + 0.9]
        });
        let rotation = cfg.rotations[rng.gen_range(0..cfg.rotations.len())];
        Self { road_offset, road_half_width, vehicle, rotation }
    }

    pub fn is_drivable(&self, x: f64, y: f64) -> bool {
        let on_road = (y - self.road_offset).abs() <= self.road_half_width;
        let blocked = self.vehicle.is_some_and(|[x0, x1, y0, y1]| x >= x0 && x <= x1 && y >= y0 && y <= y1);
        on_road && !blocked
    }

    /// Distance along unit direction `d` to the vehicle box, if hit.
    fn vehicle_hit(&self, d: [f64; 3], ground_z: f64) -> Option<f64> {
        let [x0, x1, y0, y1] = self.vehicle?;
        let (lo, hi) = ([x0, y0, ground_z], [x1, y1, ground_z + VEHICLE_HEIGHT]);
        let (mut tmin, mut tmax) = (0.0f64, f64::INFINITY);
        for k in 0..3 {
            if d[k].abs() < 1e-12 {
                if 0.0 < lo[k] || 0.0 > hi[k] {
                    return None;
                }
                continue;
            }
            let (a, b) = (lo[k] / d[k], hi[k] / d[k]);
            tmin = tmin.max(a.min(b));
            tmax = tmax.min(a.max(b));
        }
        (tmin <= tmax && tmin > 0.0).then_some(tmin)
    }

    /// Ray-casts one sweep. Azimuths cover the grid window widened by the
    /// scene's rotation.
    pub fn scan<R: Rng + ?Sized>(&self, cfg: &SceneConfig, rng: &mut R) -> PointCloud {
        let g = &cfg.grid;
        let ground_z = -cfg.sensor_height;
        let ring_step = (g.elevation_max - g.elevation_min) / g.rows as f64;
        let (lo, hi) = (g.azimuth_min + self.rotation, g.azimuth_max + self.rotation);
        let steps = ((hi - lo) / cfg.azimuth_step).round() as usize;
        let mut points = Vec::new();
        for ring in 0..g.rows {
            let phi = (g.elevation_min + (ring as f64 + 0.5) * ring_step).to_radians();
            for s in 0..steps {
                if rng.gen_bool(cfg.dropout) {
                    continue;
                }
                let jitter = rng.gen_range(-0.1..0.1) * cfg.azimuth_step;
                let theta = (lo + (s as f64 + 0.5) * cfg.azimuth_step + jitter).to_radians();
                let d = [phi.cos() * theta.cos(), phi.cos() * theta.sin(), phi.sin()];
                let ground = (phi < 0.0).then(|| ground_z / d[2]);
                let (t, intensity, lift) = match (self.vehicle_hit(d, ground_z), ground) {
                    (Some(tv), Some(tg)) if tv < tg => (tv, rng.gen_range(0.2..0.6), 0.0),
                    (Some(tv), None) => (tv, rng.gen_range(0.2..0.6), 0.0),
                    (_, Some(tg)) => {
                        let (x, y) = (tg * d[0], tg * d[1]);
                        if self.is_drivable(x, y) {
                            (tg, rng.gen_range(0.05..0.3), 0.0)
                        } else {
                            (tg, rng.gen_range(0.4..0.9), rng.gen_range(0.1..0.4))
                        }
                    }
                    (None, None) => continue,
                };
                if t > cfg.max_range {
                    continue;
                }
                let t = t * (1.0 + rng.gen_range(-cfg.range_noise..=cfg.range_noise));
                let p = [t * d[0], t * d[1], t * d[2] + lift];
                points.push(Point::new(p[0] as f32, p[1] as f32, p[2] as f32, intensity as f32));
            }
        }
        PointCloud::new(points, "synthetic")
    }

    /// Top-view ground truth covering `x ∈ [0, 64)`, `y ∈ [-40, 40)` at
    /// 4 px/m, with its projection.
    pub fn ground_truth(&self) -> (GtImage, CameraProjection) {
        const PPM: f64 = 4.0;
        let (x0, y0) = (0.0, -40.0);
        let (width, height) = ((64.0 * PPM) as usize, (80.0 * PPM) as usize);
        let mut labels = vec![0u16; width * height];
        for v in 0..height {
            for u in 0..width {
                let (x, y) = (x0 + u as f64 / PPM, y0 + v as f64 / PPM);
                if self.is_drivable(x, y) {
                    labels[v * width + u] = 255;
                }
            }
        }
        let gt = GtImage::new(width, height, labels).expect("dimensions are consistent");
        (gt, CameraProjection::top_view(x0, y0, PPM))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: InputTensor,
    pub label: BinaryMask,
}

pub fn synth_frame<R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Result<(Scene, PointCloud, Sample)> {
    let scene = Scene::random(cfg, rng);
    let cloud = scene.scan(cfg, rng);
    let input = rotate_roi(&cloud, &cfg.grid, scene.rotation)?;
    let (gt, cam) = scene.ground_truth();
    let label = label_cells(&input, &gt, &cam);
    Ok((scene, cloud, Sample { input, label }))
}

pub fn synth_dataset(cfg: &SceneConfig, frames: usize, seed: u64) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..frames).map(|_| synth_frame(cfg, &mut rng).map(|(_, _, s)| s)).collect()
}

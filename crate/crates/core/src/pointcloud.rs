// SPDX-License-Identifier: Apache-2.0

//! Raw LiDAR frame ingestion and scanner-rate arithmetic.
//!
//! Two on-disk layouts are supported: the KITTI Velodyne `.bin` layout
//! (little-endian `f32` quadruples `x, y, z, r`, 16 bytes per point) and a
//! plain CSV export with one `x,y,z,intensity` record per line.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KITTI_POINT_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    /// Reflectance, clamped into `[0, 1]` on ingestion.
    pub intensity: f32,
}

impl Point {
    pub const fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub source_id: String,
    /// Returns dropped during parsing because a coordinate was not finite.
    pub dropped_invalid: usize,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, source_id: impl Into<String>) -> Self {
        Self { points, source_id: source_id.into(), dropped_invalid: 0 }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Serializes back to the KITTI 16-byte-per-point layout.
    pub fn to_kitti_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.points.len() * KITTI_POINT_BYTES);
        for p in &self.points {
            for v in [p.x, p.y, p.z, p.intensity] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

struct Sanitizer {
    clamped: usize,
    dropped: usize,
}

impl Sanitizer {
    fn new() -> Self {
        Self { clamped: 0, dropped: 0 }
    }

    fn accept(&mut self, x: f32, y: f32, z: f32, r: f32) -> Option<Point> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            self.dropped += 1;
            return None;
        }
        let intensity = if r.is_nan() {
            self.clamped += 1;
            0.0
        } else if !(0.0..=1.0).contains(&r) {
            self.clamped += 1;
            r.clamp(0.0, 1.0)
        } else {
            r
        };
        Some(Point { x, y, z, intensity })
    }

    fn finish(self, points: Vec<Point>, source_id: &str) -> PointCloud {
        if self.clamped > 0 {
            debug!("{source_id}: clamped {} intensity values into [0, 1]", self.clamped);
        }
        if self.dropped > 0 {
            debug!("{source_id}: dropped {} non-finite points", self.dropped);
        }
        PointCloud { points, source_id: source_id.to_owned(), dropped_invalid: self.dropped }
    }
}

/// Decodes a KITTI Velodyne frame.
pub fn parse_kitti_bin(bytes: &[u8]) -> Result<PointCloud> {
    parse_kitti_bin_named(bytes, "")
}

pub fn parse_kitti_bin_named(bytes: &[u8], source_id: &str) -> Result<PointCloud> {
    if bytes.is_empty() {
        return Err(Error::EmptyFrame);
    }
    if !bytes.len().is_multiple_of(KITTI_POINT_BYTES) {
        return Err(Error::MalformedFrame(format!(
            "{} bytes is not a multiple of {KITTI_POINT_BYTES}",
            bytes.len()
        )));
    }
    let mut sanitizer = Sanitizer::new();
    let points = bytes
        .chunks_exact(KITTI_POINT_BYTES)
        .filter_map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap());
            sanitizer.accept(f(0), f(1), f(2), f(3))
        })
        .collect();
    Ok(sanitizer.finish(points, source_id))
}

/// Parses `x,y,z,intensity` lines. Blank lines and `#` comments are skipped.
pub fn parse_csv_points(text: &str) -> Result<PointCloud> {
    parse_csv_points_named(text, "")
}

pub fn parse_csv_points_named(text: &str, source_id: &str) -> Result<PointCloud> {
    let mut sanitizer = Sanitizer::new();
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = [0f32; 4];
        let mut count = 0;
        for field in line.split(',') {
            if count == 4 {
                return Err(Error::Parse { line: line_no, msg: "more than 4 fields".into() });
            }
            fields[count] = field.trim().parse::<f32>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("non-numeric field {:?}", field.trim()),
            })?;
            count += 1;
        }
        if count != 4 {
            return Err(Error::Parse { line: line_no, msg: format!("expected 4 fields, found {count}") });
        }
        if let Some(p) = sanitizer.accept(fields[0], fields[1], fields[2], fields[3]) {
            points.push(p);
        }
    }
    Ok(sanitizer.finish(points, source_id))
}

/// Scanner description: `scanners` vertical lasers, `points_per_second`
/// returns, spinning at `rpm` over a `vertical_fov` degree field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarSpec {
    pub scanners: f64,
    pub points_per_second: f64,
    pub rpm: f64,
    pub vertical_fov: f64,
}

impl LidarSpec {
    pub const HDL_64E: LidarSpec =
        LidarSpec { scanners: 64.0, points_per_second: 1_330_000.0, rpm: 600.0, vertical_fov: 26.90 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRates {
    pub frames_per_second: f64,
    pub points_per_frame: f64,
    /// Degrees.
    pub azimuthal_resolution: f64,
    /// Degrees.
    pub polar_resolution: f64,
}

pub fn scan_rates(spec: &LidarSpec) -> Result<ScanRates> {
    let fields = [
        ("scanners", spec.scanners),
        ("points_per_second", spec.points_per_second),
        ("rpm", spec.rpm),
        ("vertical_fov", spec.vertical_fov),
    ];
    for (name, v) in fields {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::domain(format!("{name} must be strictly positive, got {v}")));
        }
    }
    let LidarSpec { scanners: n, points_per_second: m, rpm: r, vertical_fov: phi } = *spec;
    Ok(ScanRates {
        frames_per_second: r / 60.0,
        points_per_frame: 60.0 * m / r,
        azimuthal_resolution: 360.0 * n * r / (60.0 * m),
        polar_resolution: phi / n,
    })
}

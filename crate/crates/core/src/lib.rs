// SPDX-License-Identifier: Apache-2.0

//! Spherical-view LiDAR drivable-region segmentation.
//!
//! The pipeline runs from raw frames ([`pointcloud`]) through spherical
//! binning ([`spherical`]) into a compact CNN ([`cnn`]) that can be evaluated
//! in floating point or bit-exact fixed point ([`fixedpoint`]), trained at
//! desk scale ([`train`]), modeled cycle by cycle on its FPGA datapath
//! ([`hw`]), and turned into a metric top-view map ([`postprocess`]).

pub mod cnn;
pub mod config;
pub mod container;
pub mod error;
pub mod fixedpoint;
pub mod groundtruth;
pub mod hw;
pub mod mask;
pub mod metrics;
pub mod pgm;
pub mod pointcloud;
pub mod postprocess;
pub mod spherical;
pub mod tensor;
pub mod train;

pub use cnn::{ChipNetBlockParams, ConvParams, Mode, Network, ProbMap, QuantizedNetwork};
pub use config::PipelineConfig;
pub use container::{Cten, TensorData, WeightFile};
pub use error::{Error, Result};
pub use hw::{CycleReport, SimConfig};
pub use mask::BinaryMask;
pub use postprocess::{GridMap, GridMapConfig, Polygon};
pub use fixedpoint::{FixedTensor, QFormat, RoundingMode};
pub use pointcloud::{LidarSpec, Point, PointCloud, ScanRates};
pub use spherical::{CellGrid, GridConfig, InputTensor, UsageStats};
pub use tensor::Tensor3;

//! Radar detection pipeline for 4D imaging radar: synthetic FMCW TDMA-MIMO
//! data, radar-cube processing, lidar-style supervision, CFAR baselines, a
//! learned occupancy detector, and point-cloud metrics.
//!
//! Coordinates everywhere: x right, y boresight, z up (meters).

pub mod array;
pub mod cfar;
pub mod error;
pub mod eval;
pub mod grid;
pub mod groundtruth;
pub mod neural;
pub mod pipeline;
pub mod simulate;
pub mod types;
pub mod waveform;

pub use array::ArrayGeometry;
pub use error::{Error, Result};
pub use grid::{GridConfig, PolarGrid, SineAxis, VoxelIndex};
pub use rustfft::num_complex::Complex64;
pub use types::{grid_to_point_cloud, AdcFrame, OccupancyGrid, PointCloud, RadarCube};
pub use waveform::{DerivedQuantities, WaveformConfig};

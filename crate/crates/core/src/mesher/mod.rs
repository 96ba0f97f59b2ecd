//! Volume to surface: isosurface extraction, mesh statistics and STL/OBJ I/O.
//!
//! The extractor samples the volume at pixel centers and layer heights and
//! places the surface at `level - 0.5`, so a pure 0/255 stack encloses the
//! same voxels for every level in `1..=255` and a grayscale stack shrinks as
//! the level rises. Padding with zeros on all six sides closes the solid at
//! the first and last frame and wherever a frame touches the window edge.

mod islands;
mod marching;
mod section;
mod stats;
mod stl;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ParamInterval, TriangleMesh, VoxelVolume};

pub use islands::retain_largest_component;
pub use section::{cross_section, fill_section};
pub use stats::{mesh_statistics, MeshStatistics};
pub use stl::{encode_stl, export_obj, export_stl, parse_stl, parse_stl_bytes, STL_HEADER_LEN};

/// Allowed values of [`MeshConfig::step`].
pub const STEPS: [u32; 5] = [1, 2, 4, 8, 16];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("step must be one of 1, 2, 4, 8, 16, got {0}")]
    InvalidStep(u32),
    #[error("at least 2 layers are needed to mesh, got {0}")]
    InsufficientLayers(usize),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed STL at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Threshold and resolution controls for extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMeshConfig")]
pub struct MeshConfig {
    pub level: u8,
    pub step: u32,
    pub cap_ends: bool,
    /// Drop every piece of material except the largest before extraction.
    #[serde(default)]
    pub keep_largest: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeshConfig {
    #[serde(default = "default_level")]
    level: u8,
    #[serde(default = "default_step")]
    step: u32,
    #[serde(default = "default_cap")]
    cap_ends: bool,
    #[serde(default)]
    keep_largest: bool,
}

fn default_level() -> u8 {
    128
}

fn default_step() -> u32 {
    1
}

fn default_cap() -> bool {
    true
}

impl TryFrom<RawMeshConfig> for MeshConfig {
    type Error = MeshError;

    fn try_from(raw: RawMeshConfig) -> Result<Self, MeshError> {
        Ok(MeshConfig::new(raw.level, raw.step, raw.cap_ends)?.with_keep_largest(raw.keep_largest))
    }
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            level: default_level(),
            step: default_step(),
            cap_ends: default_cap(),
            keep_largest: false,
        }
    }
}

impl MeshConfig {
    pub fn new(level: u8, step: u32, cap_ends: bool) -> Result<Self, MeshError> {
        check_step(step)?;
        Ok(Self {
            level,
            step,
            cap_ends,
            keep_largest: false,
        })
    }

    pub fn with_keep_largest(mut self, keep_largest: bool) -> Self {
        self.keep_largest = keep_largest;
        self
    }

    /// The scalar value the surface passes through.
    pub fn isovalue(&self) -> f64 {
        self.level as f64 - 0.5
    }
}

fn check_step(step: u32) -> Result<(), MeshError> {
    if STEPS.contains(&step) {
        Ok(())
    } else {
        Err(MeshError::InvalidStep(step))
    }
}

/// Keeps layers `0, step, 2*step, ...` and always the last one. Heights and
/// parameter values of the kept layers are preserved, so the final interval
/// may be shorter than the others.
pub fn subsample(volume: &VoxelVolume, step: u32) -> Result<VoxelVolume, MeshError> {
    check_step(step)?;
    if step == 1 {
        return Ok(volume.clone());
    }
    let n = volume.len();
    let mut keep: Vec<usize> = (0..n).step_by(step as usize).collect();
    if keep.last() != Some(&(n - 1)) {
        keep.push(n - 1);
    }
    let layers = keep.iter().map(|&i| volume.layers()[i].clone()).collect();
    let z = keep.iter().map(|&i| volume.layer_z(i)).collect();
    let t = keep.iter().map(|&i| volume.layer_t(i)).collect();
    let p = volume.param();
    let param = ParamInterval::new(p.t_min(), p.t_max(), keep.len())?;
    Ok(VoxelVolume::with_heights(
        layers,
        volume.layer_pitch() * step as f64,
        param,
        z,
        t,
    )?)
}

/// Subsamples by `cfg.step`, then extracts the `level - 0.5` isosurface with
/// outward-facing triangles.
pub fn extract_isosurface(volume: &VoxelVolume, cfg: &MeshConfig) -> Result<TriangleMesh, MeshError> {
    check_step(cfg.step)?;
    if volume.len() < 2 {
        return Err(MeshError::InsufficientLayers(volume.len()));
    }
    let mut volume = subsample(volume, cfg.step)?;
    if cfg.keep_largest {
        volume = retain_largest_component(&volume, cfg.level)?;
    }
    let (w, h, n) = (volume.width(), volume.height(), volume.len());
    let pitch = volume.pixel_pitch();
    let (ox, oy) = volume.origin();
    let pad_z = usize::from(cfg.cap_ends);

    // Grid index j grows with y, so image row = h - j for padded j.
    let sample = |i: usize, j: usize, k: usize| -> f64 {
        if i == 0 || j == 0 || i > w || j > h || k < pad_z || k >= n + pad_z {
            return 0.0;
        }
        let layer = &volume.layers()[k - pad_z];
        layer.get(i - 1, h - j) as f64
    };

    let xs: Vec<f64> = (0..w + 2).map(|i| (i as f64 - 1.0) * pitch).collect();
    let ys: Vec<f64> = (0..h + 2).map(|j| (j as f64 - 1.0) * pitch).collect();
    let mut zs: Vec<f64> = (0..n).map(|k| volume.layer_z(k)).collect();
    if cfg.cap_ends {
        let below = zs[0] - (zs[1] - zs[0]);
        let above = zs[n - 1] + (zs[n - 1] - zs[n - 2]);
        zs.insert(0, below);
        zs.push(above);
    }

    let field = marching::Field {
        dims: [w + 2, h + 2, n + 2 * pad_z],
        sample: &sample,
        coords: [xs, ys, zs],
        origin: [ox, oy - (h as f64 - 1.0) * pitch, 0.0],
    };
    let (vertices, triangles) = marching::polygonize(&field, cfg.isovalue());
    log::debug!(
        "extracted {} triangles from {}x{}x{} voxels at level {}",
        triangles.len(),
        w,
        h,
        n,
        cfg.level
    );
    Ok(TriangleMesh::new(vertices, triangles)?)
}

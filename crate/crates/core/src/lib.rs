//! Building blocks for turning one-parameter families of plane regions into
//! printable solids.
//!
//! The pipeline is: a family generator produces a region for every parameter
//! value, [`raster`] turns each region into a grayscale [`FrameRaster`],
//! [`stack`] persists frames as a PNG directory and assembles them into a
//! [`VoxelVolume`], and [`mesher`] extracts a closed triangle mesh from the
//! volume and writes it as STL. [`printcheck`] looks at the result with a
//! printer's eyes.
//!
//! Data-parallel loops (pixel rows, frames, mesh slabs) use rayon when the
//! `parallel` feature is enabled (the default) and run sequentially
//! otherwise. Output is bitwise identical either way.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod exec;
pub mod exprlang;
pub mod families;
pub mod mesher;
pub mod model;
pub mod printcheck;
pub mod raster;
pub mod stack;

pub use model::{FrameRaster, ModelError, ParamInterval, PathKind, PathSpec, TriangleMesh, VoxelVolume};

//! The static-animation data model.
//!
//! A static animation is a solid whose horizontal cross sections are the
//! frames of a deforming plane family. Discretized, that is a stack of
//! rasters ([`VoxelVolume`]) indexed by samples of a parameter interval
//! ([`ParamInterval`]). Layer `i` sits at height `i * layer_pitch` and holds
//! the frame for `param.sample(i)`; recovering a frame is just reading a
//! layer back ([`VoxelVolume::slice`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprlang;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("index {index} out of range for {len} layers")]
    OutOfRange { index: usize, len: usize },
    #[error("invalid parameter interval: {0}")]
    Interval(String),
    #[error("inconsistent frames: {0}")]
    Consistency(String),
    #[error("invalid raster: {0}")]
    Raster(String),
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("invalid path: {0}")]
    Path(String),
}

/// A closed parameter interval sampled at `frame_count` evenly spaced points,
/// both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct ParamInterval {
    t_min: f64,
    t_max: f64,
    frame_count: usize,
}

#[derive(Deserialize)]
struct RawInterval {
    t_min: f64,
    t_max: f64,
    frame_count: usize,
}

impl TryFrom<RawInterval> for ParamInterval {
    type Error = ModelError;

    fn try_from(raw: RawInterval) -> Result<Self, Self::Error> {
        ParamInterval::new(raw.t_min, raw.t_max, raw.frame_count)
    }
}

impl ParamInterval {
    pub fn new(t_min: f64, t_max: f64, frame_count: usize) -> Result<Self, ModelError> {
        if !t_min.is_finite() || !t_max.is_finite() {
            return Err(ModelError::Interval("bounds must be finite".into()));
        }
        if t_min >= t_max {
            return Err(ModelError::Interval(format!(
                "t_min ({t_min}) must be below t_max ({t_max})"
            )));
        }
        if frame_count < 2 {
            return Err(ModelError::Interval(format!(
                "frame_count must be at least 2, got {frame_count}"
            )));
        }
        Ok(Self {
            t_min,
            t_max,
            frame_count,
        })
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    /// Spacing between consecutive samples.
    pub fn spacing(&self) -> f64 {
        (self.t_max - self.t_min) / (self.frame_count - 1) as f64
    }

    /// The `i`-th sample. The last index returns `t_max` exactly.
    pub fn sample(&self, i: usize) -> f64 {
        if i + 1 == self.frame_count {
            return self.t_max;
        }
        self.t_min + i as f64 * self.spacing()
    }

    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.frame_count).map(|i| self.sample(i))
    }

    /// Shrinks both ends by `epsilon`, keeping the frame count.
    pub fn trimmed(&self, epsilon: f64) -> Result<Self, ModelError> {
        if !(epsilon >= 0.0) {
            return Err(ModelError::Interval(format!(
                "trim epsilon must be non-negative, got {epsilon}"
            )));
        }
        let (lo, hi) = (self.t_min + epsilon, self.t_max - epsilon);
        if lo >= hi {
            return Err(ModelError::Interval(format!(
                "trimming by {epsilon} leaves an empty interval"
            )));
        }
        Self::new(lo, hi, self.frame_count)
    }
}

/// One grayscale frame. Row 0 is the top of the image; the plane's y axis
/// points up, so pixel `(col, row)` has its center at
/// `(origin.0 + col * pitch, origin.1 - row * pitch)` millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRaster {
    width: usize,
    height: usize,
    values: Vec<u8>,
    pixel_pitch: f64,
    origin: (f64, f64),
}

impl FrameRaster {
    pub fn new(
        width: usize,
        height: usize,
        values: Vec<u8>,
        pixel_pitch: f64,
        origin: (f64, f64),
    ) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::Raster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(ModelError::Raster(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                values.len()
            )));
        }
        if !(pixel_pitch > 0.0) || !pixel_pitch.is_finite() {
            return Err(ModelError::Raster(format!(
                "pixel pitch must be positive, got {pixel_pitch}"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            pixel_pitch,
            origin,
        })
    }

    /// A frame of zeros.
    pub fn blank(
        width: usize,
        height: usize,
        pixel_pitch: f64,
        origin: (f64, f64),
    ) -> Result<Self, ModelError> {
        Self::new(width, height, vec![0; width * height], pixel_pitch, origin)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn into_values(self) -> Vec<u8> {
        self.values
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.values[row * self.width + col]
    }

    /// Physical center of a pixel in millimetres.
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin.0 + col as f64 * self.pixel_pitch,
            self.origin.1 - row as f64 * self.pixel_pitch,
        )
    }

    /// Total coverage as a fraction of the frame: sum of values / (255 * pixels).
    pub fn white_fraction(&self) -> f64 {
        let sum: u64 = self.values.iter().map(|&v| v as u64).sum();
        sum as f64 / (255.0 * self.values.len() as f64)
    }

    /// Same pixel grid and physical placement.
    pub fn same_geometry(&self, other: &FrameRaster) -> bool {
        self.width == other.width && self.height == other.height && self.pixel_pitch == other.pixel_pitch
    }

    pub fn with_placement(mut self, pixel_pitch: f64, origin: (f64, f64)) -> Result<Self, ModelError> {
        if !(pixel_pitch > 0.0) || !pixel_pitch.is_finite() {
            return Err(ModelError::Raster(format!(
                "pixel pitch must be positive, got {pixel_pitch}"
            )));
        }
        self.pixel_pitch = pixel_pitch;
        self.origin = origin;
        Ok(self)
    }
}

/// Stacked frames. Layer 0 is the bottom (`t_min`, z = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    layers: Vec<FrameRaster>,
    layer_pitch: f64,
    param: ParamInterval,
    layer_z: Vec<f64>,
    layer_t: Vec<f64>,
}

impl VoxelVolume {
    pub fn new(layers: Vec<FrameRaster>, layer_pitch: f64, param: ParamInterval) -> Result<Self, ModelError> {
        if layers.len() != param.frame_count() {
            return Err(ModelError::Consistency(format!(
                "{} frames supplied for an interval of {} samples",
                layers.len(),
                param.frame_count()
            )));
        }
        let layer_z = (0..layers.len()).map(|i| i as f64 * layer_pitch).collect();
        let layer_t = param.samples().collect();
        Self::with_heights(layers, layer_pitch, param, layer_z, layer_t)
    }

    pub(crate) fn with_heights(
        layers: Vec<FrameRaster>,
        layer_pitch: f64,
        param: ParamInterval,
        layer_z: Vec<f64>,
        layer_t: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if !(layer_pitch > 0.0) || !layer_pitch.is_finite() {
            return Err(ModelError::Consistency(format!(
                "layer pitch must be positive, got {layer_pitch}"
            )));
        }
        let first = layers
            .first()
            .ok_or_else(|| ModelError::Consistency("no frames".into()))?;
        if let Some((i, f)) = layers.iter().enumerate().find(|(_, f)| !f.same_geometry(first)) {
            return Err(ModelError::Consistency(format!(
                "frame {i} is {}x{} at pitch {}, frame 0 is {}x{} at pitch {}",
                f.width(),
                f.height(),
                f.pixel_pitch(),
                first.width(),
                first.height(),
                first.pixel_pitch()
            )));
        }
        debug_assert_eq!(layer_z.len(), layers.len());
        debug_assert_eq!(layer_t.len(), layers.len());
        Ok(Self {
            layers,
            layer_pitch,
            param,
            layer_z,
            layer_t,
        })
    }

    /// The fiber over the `i`-th parameter sample.
    pub fn slice(&self, i: usize) -> Result<&FrameRaster, ModelError> {
        self.layers.get(i).ok_or(ModelError::OutOfRange {
            index: i,
            len: self.layers.len(),
        })
    }

    pub fn layers(&self) -> &[FrameRaster] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer_pitch(&self) -> f64 {
        self.layer_pitch
    }

    pub fn param(&self) -> &ParamInterval {
        &self.param
    }

    /// Height of layer `i` in millimetres.
    pub fn layer_z(&self, i: usize) -> f64 {
        self.layer_z[i]
    }

    /// Parameter value of layer `i`.
    pub fn layer_t(&self, i: usize) -> f64 {
        self.layer_t[i]
    }

    pub fn width(&self) -> usize {
        self.layers[0].width()
    }

    pub fn height(&self) -> usize {
        self.layers[0].height()
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.layers[0].pixel_pitch()
    }

    pub fn origin(&self) -> (f64, f64) {
        self.layers[0].origin()
    }

    /// Distance between the bottom and top layers.
    pub fn height_mm(&self) -> f64 {
        self.layer_z[self.layer_z.len() - 1] - self.layer_z[0]
    }

    /// Moves every layer's origin by `(dx, dy)` millimetres.
    pub fn translated(mut self, dx: f64, dy: f64) -> Self {
        for layer in &mut self.layers {
            layer.origin = (layer.origin.0 + dx, layer.origin.1 + dy);
        }
        self
    }
}

/// Indexed triangle mesh in millimetres. Triangles wind counter-clockwise
/// when viewed from outside.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[u32; 3]>) -> Result<Self, ModelError> {
        let n = vertices.len();
        for (i, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v as usize >= n) {
                return Err(ModelError::Mesh(format!(
                    "triangle {i} references a vertex beyond {n}"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(ModelError::Mesh(format!("triangle {i} repeats a vertex")));
            }
        }
        if let Some(v) = vertices.iter().find(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(ModelError::Mesh(format!("non-finite vertex {v:?}")));
        }
        Ok(Self { vertices, triangles })
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [[f64; 3]; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unnormalized normal: (b - a) x (c - a), length twice the area.
    pub fn area_vector(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.corners(t);
        cross(sub(b, a), sub(c, a))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * norm(self.area_vector(t))
    }

    /// Unit outward normal, or zero for a degenerate triangle.
    pub fn unit_normal(&self, t: usize) -> [f64; 3] {
        let n = self.area_vector(t);
        let len = norm(n);
        if len > 0.0 {
            [n[0] / len, n[1] / len, n[2] / len]
        } else {
            [0.0; 3]
        }
    }

    /// Indices of triangles with area at or below `tolerance`.
    pub fn degenerate_triangles(&self, tolerance: f64) -> Vec<usize> {
        (0..self.triangles.len())
            .filter(|&t| self.triangle_area(t) <= tolerance)
            .collect()
    }

    /// Axis-aligned bounds `(min, max)`, `None` for a mesh without vertices.
    pub fn bounding_box(&self) -> Option<([f64; 3], [f64; 3])> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        Some(it.fold((first, first), |(mut lo, mut hi), v| {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
            (lo, hi)
        }))
    }

    pub fn translated(mut self, delta: [f64; 3]) -> Self {
        for v in &mut self.vertices {
            for k in 0..3 {
                v[k] += delta[k];
            }
        }
        self
    }
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// How a path through the complex parameter plane is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PathKind {
    /// Upper boundary of the main cardioid of the Mandelbrot set, parameter in radians.
    CardioidBoundary,
    /// Circle of radius 1/4 about -1, parameter in radians.
    Period2Circle,
    /// Piecewise-linear path; each segment takes an equal share of the interval.
    Polyline { points: Vec<[f64; 2]> },
    /// Real and imaginary parts as expressions in `t`.
    Expression { x: String, y: String },
}

/// A path `t -> c` with the interval it is sampled over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPath")]
pub struct PathSpec {
    #[serde(flatten)]
    pub kind: PathKind,
    pub t_range: ParamInterval,
    #[serde(default)]
    pub trim_epsilon: f64,
}

#[derive(Deserialize)]
struct RawPath {
    #[serde(flatten)]
    kind: PathKind,
    t_range: ParamInterval,
    #[serde(default)]
    trim_epsilon: f64,
}

impl TryFrom<RawPath> for PathSpec {
    type Error = ModelError;

    fn try_from(raw: RawPath) -> Result<Self, Self::Error> {
        PathSpec::new(raw.kind, raw.t_range, raw.trim_epsilon)
    }
}

impl PathSpec {
    pub fn new(kind: PathKind, t_range: ParamInterval, trim_epsilon: f64) -> Result<Self, ModelError> {
        let spec = Self {
            kind,
            t_range,
            trim_epsilon,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.t_range
            .trimmed(self.trim_epsilon)
            .map_err(|e| ModelError::Path(e.to_string()))?;
        match &self.kind {
            PathKind::Polyline { points } => {
                if points.len() < 2 {
                    return Err(ModelError::Path(format!(
                        "polyline needs at least 2 points, got {}",
                        points.len()
                    )));
                }
                if points.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(ModelError::Path("polyline points must be finite".into()));
                }
            }
            PathKind::Expression { x, y } => {
                for (name, src) in [("x", x), ("y", y)] {
                    exprlang::parse(src).map_err(|e| ModelError::Path(format!("{name}(t): {e}")))?;
                }
            }
            PathKind::CardioidBoundary | PathKind::Period2Circle => {}
        }
        Ok(())
    }

    /// The interval actually sampled: `t_range` shrunk by `trim_epsilon` at both ends.
    pub fn sampled_range(&self) -> ParamInterval {
        self.t_range
            .trimmed(self.trim_epsilon)
            .expect("validated on construction")
    }
}

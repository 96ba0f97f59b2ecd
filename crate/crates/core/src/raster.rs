//! Frame rasterization with regular-grid supersampling.
//!
//! Each pixel is probed at `n x n` points placed at offsets `(k + 0.5) / n`
//! inside the pixel; its value is the covered fraction scaled to 0..=255
//! (rounded). White (255) is inside the region. Rasters come out in family
//! units: `pixel_pitch` is the family-space pixel size and `origin` the
//! family coordinates of pixel (0, 0). Use [`FrameRaster::with_placement`]
//! to move to millimetres.
//!
//! Sample coordinates are computed from integer sample indices about the
//! window center, so a window symmetric about an axis yields sample
//! positions that are exact mirror images.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::exprlang::{Compiled, EvalError};
use crate::families::{self, EscapeParams, FlowerParams, TreeSquare};
use crate::model::{FrameRaster, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("invalid raster config: {0}")]
    Config(String),
    #[error("boundary evaluation failed at theta = {theta}: {message}")]
    Boundary { theta: f64, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Axis-aligned rectangle in family units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    pub const fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub const fn square(half: f64) -> Self {
        Self::new(-half, half, -half, half)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    fn validate(&self) -> Result<(), RasterError> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.width() > 0.0) || !(self.height() > 0.0) {
            return Err(RasterError::Config(format!(
                "window must have positive finite extent, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Window used for flower frames.
pub const FLOWER_WINDOW: Window = Window::square(3.2);
/// Window used for Julia frames.
pub const JULIA_WINDOW: Window = Window::square(2.0);
/// Window used for hyperbola frames.
pub const HYPERBOLA_WINDOW: Window = Window::square(3.0);

/// Square window around `squares` with a `margin` fraction added on every side.
pub fn fit_window(squares: &[TreeSquare], margin: f64) -> Option<Window> {
    let (x0, y0, x1, y1) = families::tree_bounds(squares)?;
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let half = 0.5 * (x1 - x0).max(y1 - y0) * (1.0 + 2.0 * margin);
    Some(Window::new(cx - half, cx + half, cy - half, cy + half))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterConfig {
    /// Pixels across the window.
    pub resolution: usize,
    pub window: Window,
    /// Samples per pixel side.
    #[serde(default = "RasterConfig::default_supersample")]
    pub supersample: usize,
}

impl RasterConfig {
    pub const DEFAULT_SUPERSAMPLE: usize = 4;

    fn default_supersample() -> usize {
        Self::DEFAULT_SUPERSAMPLE
    }

    pub fn new(resolution: usize, window: Window, supersample: usize) -> Result<Self, RasterError> {
        let cfg = Self {
            resolution,
            window,
            supersample,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        if self.resolution < 16 {
            return Err(RasterError::Config(format!(
                "resolution must be at least 16, got {}",
                self.resolution
            )));
        }
        if !(1..=8).contains(&self.supersample) {
            return Err(RasterError::Config(format!(
                "supersample must be in 1..=8, got {}",
                self.supersample
            )));
        }
        self.window.validate()
    }

    /// The pixel grid this config produces.
    pub fn grid(&self) -> Grid {
        let pixel = self.window.width() / self.resolution as f64;
        let height = ((self.window.height() / pixel).round() as usize).max(1);
        let (cx, cy) = self.window.center();
        Grid {
            width: self.resolution,
            height,
            pixel,
            center: (cx, cy),
            n: self.supersample,
        }
    }
}

/// Pixel and sample geometry of a raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    /// Pixel size in family units.
    pub pixel: f64,
    pub center: (f64, f64),
    /// Samples per pixel side.
    pub n: usize,
}

impl Grid {
    /// x of sample column `s` (`0..width * n`).
    #[inline]
    pub fn sample_x(&self, s: usize) -> f64 {
        let k = (2 * s + 1) as f64 - (self.width * self.n) as f64;
        self.center.0 + k * (self.pixel / (2 * self.n) as f64)
    }

    /// y of sample row `s` (`0..height * n`); row 0 is the top.
    #[inline]
    pub fn sample_y(&self, s: usize) -> f64 {
        let k = (self.height * self.n) as f64 - (2 * s + 1) as f64;
        self.center.1 + k * (self.pixel / (2 * self.n) as f64)
    }

    /// Family coordinates of a pixel center.
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        let kx = (2 * col + 1) as f64 - self.width as f64;
        let ky = self.height as f64 - (2 * row + 1) as f64;
        (
            self.center.0 + kx * (self.pixel / 2.0),
            self.center.1 + ky * (self.pixel / 2.0),
        )
    }

    fn coverage(&self, hits: usize) -> u8 {
        let total = self.n * self.n;
        ((255 * hits + total / 2) / total) as u8
    }

    fn into_raster(self, values: Vec<u8>) -> Result<FrameRaster, RasterError> {
        let origin = self.pixel_center(0, 0);
        Ok(FrameRaster::new(
            self.width,
            self.height,
            values,
            self.pixel,
            origin,
        )?)
    }
}

/// A star-shaped region `r <= radius(theta)` about the origin.
pub trait PolarBoundary: Sync {
    fn radius(&self, theta: f64) -> Result<f64, String>;

    /// An upper bound on `|d radius / d theta|`, if known. Enables skipping
    /// supersampling for pixels that are provably entirely inside or outside;
    /// the result is the same as full sampling.
    fn slope_bound(&self) -> Option<f64> {
        None
    }
}

impl PolarBoundary for FlowerParams {
    fn radius(&self, theta: f64) -> Result<f64, String> {
        Ok(FlowerParams::radius(self, theta))
    }

    fn slope_bound(&self) -> Option<f64> {
        Some(families::polar_flower_slope_bound(self.amplitude))
    }
}

/// Boundary given by a closure.
pub struct FnBoundary<F>(pub F);

impl<F: Fn(f64) -> f64 + Sync> PolarBoundary for FnBoundary<F> {
    fn radius(&self, theta: f64) -> Result<f64, String> {
        Ok((self.0)(theta))
    }
}

/// Boundary `r(theta, t)` from an expression over the variables `theta` and `t`.
pub struct ExprBoundary<'a> {
    compiled: &'a Compiled,
    t: f64,
}

impl<'a> ExprBoundary<'a> {
    /// `compiled` must have been built with the variable order `["theta", "t"]`.
    pub fn new(compiled: &'a Compiled, t: f64) -> Self {
        Self { compiled, t }
    }

    pub fn variables() -> [&'static str; 2] {
        ["theta", "t"]
    }
}

impl PolarBoundary for ExprBoundary<'_> {
    fn radius(&self, theta: f64) -> Result<f64, String> {
        self.compiled
            .eval(&[theta, self.t])
            .map_err(|e: EvalError| e.to_string())
    }
}

/// Rasterizes the region inside a polar boundary.
pub fn rasterize_polar(boundary: &dyn PolarBoundary, cfg: &RasterConfig) -> Result<FrameRaster, RasterError> {
    cfg.validate()?;
    let grid = cfg.grid();
    let n = grid.n;
    let slope = boundary.slope_bound();
    // samples sit within this distance of their pixel center
    let spread = (0.5 - 0.5 / n as f64) * grid.pixel * std::f64::consts::SQRT_2;
    let mut values = vec![0u8; grid.width * grid.height];

    let eval = |theta: f64| {
        boundary
            .radius(theta)
            .map_err(|message| RasterError::Boundary { theta, message })
    };

    let errors = std::sync::Mutex::new(Vec::<(usize, RasterError)>::new());
    exec::for_each_chunk_mut(&mut values, grid.width, |row, out| {
        let result = (|| -> Result<(), RasterError> {
            for (col, px) in out.iter_mut().enumerate() {
                if let Some(l) = slope {
                    let (xc, yc) = grid.pixel_center(col, row);
                    let rc = xc.hypot(yc);
                    if rc > spread {
                        let b = eval(yc.atan2(xc))?;
                        let wobble = l * (spread / rc).asin() + 1e-9;
                        if rc + spread < b - wobble {
                            *px = 255;
                            continue;
                        }
                        if rc - spread > b + wobble {
                            *px = 0;
                            continue;
                        }
                    }
                }
                let mut hits = 0;
                for b in 0..n {
                    let y = grid.sample_y(row * n + b);
                    for a in 0..n {
                        let x = grid.sample_x(col * n + a);
                        if x.hypot(y) <= eval(y.atan2(x))? {
                            hits += 1;
                        }
                    }
                }
                *px = grid.coverage(hits);
            }
            Ok(())
        })();
        if let Err(e) = result {
            errors.lock().expect("poisoned").push((row, e));
        }
    });
    let mut errors = errors.into_inner().expect("poisoned");
    errors.sort_by_key(|(row, _)| *row);
    if let Some((_, e)) = errors.into_iter().next() {
        return Err(e);
    }
    grid.into_raster(values)
}

/// Same contract as [`rasterize_polar`] but always probes every sample.
/// Kept as an independent reference for the accelerated path.
pub fn rasterize_polar_exhaustive(
    boundary: &dyn PolarBoundary,
    cfg: &RasterConfig,
) -> Result<FrameRaster, RasterError> {
    struct NoSlope<'a>(&'a dyn PolarBoundary);
    impl PolarBoundary for NoSlope<'_> {
        fn radius(&self, theta: f64) -> Result<f64, String> {
            self.0.radius(theta)
        }
    }
    rasterize_polar(&NoSlope(boundary), cfg)
}

/// Rasterizes any point-membership predicate.
pub fn rasterize_membership<P>(inside: P, cfg: &RasterConfig) -> Result<FrameRaster, RasterError>
where
    P: Fn(f64, f64) -> bool + Sync + Send,
{
    cfg.validate()?;
    let grid = cfg.grid();
    let n = grid.n;
    let mut values = vec![0u8; grid.width * grid.height];
    exec::for_each_chunk_mut(&mut values, grid.width, |row, out| {
        for (col, px) in out.iter_mut().enumerate() {
            let mut hits = 0;
            for b in 0..n {
                let y = grid.sample_y(row * n + b);
                for a in 0..n {
                    if inside(grid.sample_x(col * n + a), y) {
                        hits += 1;
                    }
                }
            }
            *px = grid.coverage(hits);
        }
    });
    grid.into_raster(values)
}

/// Rasterizes a union of squares.
pub fn rasterize_regions(squares: &[TreeSquare], cfg: &RasterConfig) -> Result<FrameRaster, RasterError> {
    cfg.validate()?;
    let grid = cfg.grid();
    let n = grid.n;
    let bounds: Vec<_> = squares.iter().map(TreeSquare::bounds).collect();
    let half_sample = grid.pixel / (2 * n) as f64;
    let sample_cols = grid.width * n;
    let mut values = vec![0u8; grid.width * grid.height];

    exec::for_each_chunk_mut(&mut values, grid.width, |row, out| {
        let y_top = grid.sample_y(row * n) + half_sample;
        let y_bottom = grid.sample_y(row * n + n - 1) - half_sample;
        let mut counts = vec![0usize; grid.width];
        let mut mask = vec![false; sample_cols];
        for b in 0..n {
            let y = grid.sample_y(row * n + b);
            mask.iter_mut().for_each(|m| *m = false);
            for (sq, &(x0, y0, x1, y1)) in squares.iter().zip(&bounds) {
                if y1 < y_bottom || y0 > y_top || y < y0 || y > y1 {
                    continue;
                }
                let first = sample_index_at_or_after(&grid, x0);
                let last = sample_index_at_or_before(&grid, x1);
                let (Some(first), Some(last)) = (first, last) else {
                    continue;
                };
                for (s, hit) in mask.iter_mut().enumerate().take(last + 1).skip(first) {
                    if !*hit && sq.contains(grid.sample_x(s), y) {
                        *hit = true;
                    }
                }
            }
            for (s, &m) in mask.iter().enumerate() {
                if m {
                    counts[s / n] += 1;
                }
            }
        }
        for (px, &c) in out.iter_mut().zip(&counts) {
            *px = grid.coverage(c);
        }
    });
    grid.into_raster(values)
}

// Range of sample columns whose x lies in [x0, x1], widened by one sample for
// rounding; `contains` makes the final call.
fn sample_index_at_or_after(grid: &Grid, x: f64) -> Option<usize> {
    let step = grid.pixel / grid.n as f64;
    let left = grid.sample_x(0);
    let f = ((x - left) / step).floor() - 1.0;
    let total = (grid.width * grid.n) as f64;
    if f >= total {
        return None;
    }
    Some(f.max(0.0) as usize)
}

fn sample_index_at_or_before(grid: &Grid, x: f64) -> Option<usize> {
    let step = grid.pixel / grid.n as f64;
    let left = grid.sample_x(0);
    let f = ((x - left) / step).ceil() + 1.0;
    if f < 0.0 {
        return None;
    }
    Some((f as usize).min(grid.width * grid.n - 1))
}

/// Rasterizes the filled Julia set of `p.c`: a sample is white when its orbit
/// stays bounded for `p.max_iter` steps.
pub fn rasterize_escape(p: &EscapeParams, cfg: &RasterConfig) -> Result<FrameRaster, RasterError> {
    let (c, max_iter, radius) = (p.c, p.max_iter, p.escape_radius);
    rasterize_membership(
        move |x, y| {
            families::escape_time(c, num_complex::Complex64::new(x, y), max_iter, radius).is_bounded()
        },
        cfg,
    )
}

/// Rasterizes the thickened hyperbola `|xy - t| <= half_width`.
pub fn rasterize_hyperbola(t: f64, half_width: f64, cfg: &RasterConfig) -> Result<FrameRaster, RasterError> {
    if !(half_width > 0.0) {
        return Err(RasterError::Config(format!(
            "half width must be positive, got {half_width}"
        )));
    }
    rasterize_membership(
        move |x, y| families::hyperbola_frame_membership((x, y), t, half_width),
        cfg,
    )
}

/// Rasterizes a Mandelbrot membership image: white where `c` stays bounded.
pub fn rasterize_mandelbrot(max_iter: u32, cfg: &RasterConfig) -> Result<FrameRaster, RasterError> {
    rasterize_membership(
        move |x, y| families::mandelbrot_membership(num_complex::Complex64::new(x, y), max_iter),
        cfg,
    )
}

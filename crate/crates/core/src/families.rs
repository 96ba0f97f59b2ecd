//! Built-in deforming families: polar flowers, Pythagorean trees, filled
//! Julia sets along paths in the Mandelbrot set, and the hyperbolas `xy = t`.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::exprlang::{self, Compiled};
use crate::model::{PathKind, PathSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("angle {0} degrees outside (0, 45]")]
    AngleOutOfRange(f64),
    #[error("tree depth {depth} exceeds the limit of {limit}")]
    DepthLimit { depth: u32, limit: u32 },
    #[error("invalid escape parameters: {0}")]
    Escape(String),
    #[error("path expression: {0}")]
    Expression(String),
}

/// Deepest Pythagorean tree we are willing to build (2^17 - 1 squares).
pub const MAX_TREE_DEPTH: u32 = 16;

/// Boundary radius of the flower `r = 2 + s cos(5 theta + 2 pi t)`.
/// The one-parameter family of the tutorial is the diagonal `s = t`.
pub fn polar_flower_boundary(s: f64, t: f64, theta: f64) -> f64 {
    2.0 + s * (5.0 * theta + 2.0 * PI * t).cos()
}

/// Largest `|dr/dtheta|` of [`polar_flower_boundary`] for amplitude `s`.
pub fn polar_flower_slope_bound(s: f64) -> f64 {
    5.0 * s.abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowerParams {
    pub amplitude: f64,
    pub phase: f64,
}

impl FlowerParams {
    /// The tutorial family: amplitude and phase both equal `t`.
    pub fn coupled(t: f64) -> Self {
        Self {
            amplitude: t,
            phase: t,
        }
    }

    pub fn radius(&self, theta: f64) -> f64 {
        polar_flower_boundary(self.amplitude, self.phase, theta)
    }
}

/// One square of a Pythagorean tree. Corners run counter-clockwise starting
/// at the left end of the edge the square grows from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeSquare {
    pub corners: [[f64; 2]; 4],
    pub depth: u32,
}

impl TreeSquare {
    fn on_base(p: [f64; 2], q: [f64; 2], depth: u32) -> Self {
        let n = [-(q[1] - p[1]), q[0] - p[0]];
        Self {
            corners: [p, q, [q[0] + n[0], q[1] + n[1]], [p[0] + n[0], p[1] + n[1]]],
            depth,
        }
    }

    pub fn side(&self) -> f64 {
        let [p, q, ..] = self.corners;
        (q[0] - p[0]).hypot(q[1] - p[1])
    }

    pub fn area(&self) -> f64 {
        let s = self.side();
        s * s
    }

    /// Axis-aligned bounds `(x_min, y_min, x_max, y_max)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.corners.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), p| (a.min(p[0]), b.min(p[1]), c.max(p[0]), d.max(p[1])),
        )
    }

    /// Closed point-in-square test (counter-clockwise convex quad).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0..4).all(|k| {
            let a = self.corners[k];
            let b = self.corners[(k + 1) % 4];
            (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]) >= 0.0
        })
    }
}

/// All squares of the Pythagorean tree with minimal triangle angle
/// `theta_deg`, generation by generation (the root first).
///
/// The root is the unit square standing on the x axis, centered at the
/// origin. On the top edge of every square sits a right triangle whose
/// hypotenuse is that edge; the angle `theta` is at the right end, so the
/// left leg has relative length `sin theta` and the right leg `cos theta`.
/// The child squares stand on those legs.
pub fn pythagorean_tree(depth: u32, theta_deg: f64) -> Result<Vec<TreeSquare>, FamilyError> {
    if !(theta_deg > 0.0 && theta_deg <= 45.0) {
        return Err(FamilyError::AngleOutOfRange(theta_deg));
    }
    if depth > MAX_TREE_DEPTH {
        return Err(FamilyError::DepthLimit {
            depth,
            limit: MAX_TREE_DEPTH,
        });
    }
    let theta = theta_deg.to_radians();
    let (sin, cos) = theta.sin_cos();

    let root = TreeSquare::on_base([-0.5, 0.0], [0.5, 0.0], 0);
    let mut out = Vec::with_capacity((1usize << (depth + 1)) - 1);
    out.push(root);
    let mut start = 0;
    for d in 1..=depth {
        let end = out.len();
        for i in start..end {
            let sq = out[i];
            let [_, _, top_right, top_left] = sq.corners;
            let u = [top_right[0] - top_left[0], top_right[1] - top_left[1]];
            let n = [-u[1], u[0]];
            // apex = top_left + sin * (sin * u + cos * n)
            let apex = [
                top_left[0] + sin * (sin * u[0] + cos * n[0]),
                top_left[1] + sin * (sin * u[1] + cos * n[1]),
            ];
            out.push(TreeSquare::on_base(top_left, apex, d));
            out.push(TreeSquare::on_base(apex, top_right, d));
        }
        start = end;
    }
    Ok(out)
}

/// Bounds `(x_min, y_min, x_max, y_max)` of a set of squares.
pub fn tree_bounds(squares: &[TreeSquare]) -> Option<(f64, f64, f64, f64)> {
    squares
        .iter()
        .map(TreeSquare::bounds)
        .reduce(|a, b| (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeParams {
    pub c: Complex64,
    pub max_iter: u32,
    pub escape_radius: f64,
}

impl EscapeParams {
    pub const DEFAULT_MAX_ITER: u32 = 500;
    pub const DEFAULT_RADIUS: f64 = 2.0;

    pub fn new(c: Complex64, max_iter: u32, escape_radius: f64) -> Result<Self, FamilyError> {
        if max_iter == 0 {
            return Err(FamilyError::Escape("max_iter must be at least 1".into()));
        }
        if !(escape_radius >= 2.0) {
            return Err(FamilyError::Escape(format!(
                "escape radius must be at least 2, got {escape_radius}"
            )));
        }
        Ok(Self {
            c,
            max_iter,
            escape_radius,
        })
    }

    pub fn with_defaults(c: Complex64) -> Self {
        Self {
            c,
            max_iter: Self::DEFAULT_MAX_ITER,
            escape_radius: Self::DEFAULT_RADIUS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Escape {
    Bounded,
    /// `|z_n| > R` first held for this `n` (`z_0` is step 0).
    EscapedAt(u32),
}

impl Escape {
    pub fn is_bounded(self) -> bool {
        self == Escape::Bounded
    }
}

/// Iterates `z <- z^2 + c` from `z0`.
pub fn julia_escape(p: &EscapeParams, z0: Complex64) -> Escape {
    escape_time(p.c, z0, p.max_iter, p.escape_radius)
}

#[inline]
pub(crate) fn escape_time(c: Complex64, z0: Complex64, max_iter: u32, radius: f64) -> Escape {
    if !(z0.re.is_finite() && z0.im.is_finite() && c.re.is_finite() && c.im.is_finite()) {
        return Escape::EscapedAt(0);
    }
    let r2 = radius * radius;
    let (mut x, mut y) = (z0.re, z0.im);
    if x * x + y * y > r2 {
        return Escape::EscapedAt(0);
    }
    for n in 1..=max_iter {
        let (xx, yy) = (x * x, y * y);
        y = 2.0 * x * y + c.im;
        x = xx - yy + c.re;
        if x * x + y * y > r2 {
            return Escape::EscapedAt(n);
        }
    }
    Escape::Bounded
}

/// `c` belongs to the Mandelbrot set (to `max_iter` iterations) when the
/// critical orbit of 0 stays within radius 2.
pub fn mandelbrot_membership(c: Complex64, max_iter: u32) -> bool {
    escape_time(c, Complex64::new(0.0, 0.0), max_iter.max(1), 2.0).is_bounded()
}

/// Boundary of the main cardioid; `[0, pi]` traces the upper half from the
/// cusp at 1/4 to -3/4.
pub fn cardioid_path(t: f64) -> Complex64 {
    let (s, c) = t.sin_cos();
    Complex64::new(0.5 * c * (1.0 - c) + 0.25, 0.5 * s * (1.0 - c))
}

/// Boundary of the period-2 disk `|c + 1| = 1/4`.
pub fn period2_circle_path(t: f64) -> Complex64 {
    let (s, c) = t.sin_cos();
    Complex64::new(-1.0 + 0.25 * c, 0.25 * s)
}

/// Thickened level set `|xy - t| <= w` of the hyperbola family.
pub fn hyperbola_frame_membership(point: (f64, f64), t: f64, half_width: f64) -> bool {
    (point.0 * point.1 - t).abs() <= half_width
}

/// Default thickening of the hyperbola curves, in family units.
pub const HYPERBOLA_HALF_WIDTH: f64 = 0.05;

/// A [`PathSpec`] ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct PathEvaluator {
    spec: PathSpec,
    exprs: Option<(Compiled, Compiled)>,
}

impl PathEvaluator {
    pub fn new(spec: &PathSpec) -> Result<Self, FamilyError> {
        let exprs = match &spec.kind {
            PathKind::Expression { x, y } => {
                let compile = |name: &str, src: &str| {
                    exprlang::parse(src)
                        .map_err(|e| FamilyError::Expression(format!("{name}(t): {e}")))
                        .and_then(|e| {
                            Compiled::new(&e, &["t"])
                                .map_err(|e| FamilyError::Expression(format!("{name}(t): {e}")))
                        })
                };
                Some((compile("x", x)?, compile("y", y)?))
            }
            _ => None,
        };
        Ok(Self {
            spec: spec.clone(),
            exprs,
        })
    }

    pub fn spec(&self) -> &PathSpec {
        &self.spec
    }

    /// `gamma(t)`. Polylines are parametrized over the untrimmed `t_range`,
    /// each segment taking an equal share.
    pub fn point(&self, t: f64) -> Result<Complex64, FamilyError> {
        Ok(match &self.spec.kind {
            PathKind::CardioidBoundary => cardioid_path(t),
            PathKind::Period2Circle => period2_circle_path(t),
            PathKind::Polyline { points } => {
                let r = &self.spec.t_range;
                let u = ((t - r.t_min()) / (r.t_max() - r.t_min())).clamp(0.0, 1.0);
                let segs = points.len() - 1;
                let pos = u * segs as f64;
                let k = (pos.floor() as usize).min(segs - 1);
                let f = pos - k as f64;
                let (a, b) = (points[k], points[k + 1]);
                Complex64::new(a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))
            }
            PathKind::Expression { .. } => {
                let (x, y) = self.exprs.as_ref().expect("compiled on construction");
                let re = x
                    .eval(&[t])
                    .map_err(|e| FamilyError::Expression(format!("x({t}): {e}")))?;
                let im = y
                    .eval(&[t])
                    .map_err(|e| FamilyError::Expression(format!("y({t}): {e}")))?;
                Complex64::new(re, im)
            }
        })
    }

    /// `(t, gamma(t))` at `n` evenly spaced points of the trimmed range.
    pub fn samples(&self, n: usize) -> Result<Vec<(f64, Complex64)>, FamilyError> {
        let r = self.spec.sampled_range();
        (0..n)
            .map(|i| {
                let t = if n < 2 {
                    r.t_min()
                } else if i + 1 == n {
                    r.t_max()
                } else {
                    r.t_min() + i as f64 * (r.t_max() - r.t_min()) / (n - 1) as f64
                };
                self.point(t).map(|c| (t, c))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamInterval;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn flower_values() {
        assert_eq!(polar_flower_boundary(1.0, 1.0, 0.0), 3.0);
        assert_eq!(polar_flower_boundary(0.0, 0.37, 1.9), 2.0);
        assert!((polar_flower_boundary(0.5, 0.5, 0.0) - 1.5).abs() < 1e-15);
        assert_eq!(FlowerParams::coupled(1.0).radius(0.0), 3.0);
    }

    #[test]
    fn tree_depth_zero_is_unit_square() {
        let t = pythagorean_tree(0, 30.0).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].corners, [[-0.5, 0.0], [0.5, 0.0], [0.5, 1.0], [-0.5, 1.0]]);
    }

    #[test]
    fn tree_children_at_thirty_degrees() {
        let t = pythagorean_tree(1, 30.0).unwrap();
        assert_eq!(t.len(), 3);
        assert!((t[1].side() - 0.5).abs() < 1e-12);
        assert!((t[2].side() - 0.8660254).abs() < 1e-6);
        // the short leg is on the left, as drawn in the construction figure
        assert!(t[1].bounds().0 < t[2].bounds().0);
        // apex at (-0.5 + 0.25, 1 + 0.433)
        let apex = t[1].corners[1];
        assert!((apex[0] + 0.25).abs() < 1e-12);
        assert!((apex[1] - (1.0 + 0.75f64.sqrt() / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn tree_is_symmetric_at_forty_five() {
        let t = pythagorean_tree(6, 45.0).unwrap();
        let (x0, _, x1, _) = tree_bounds(&t).unwrap();
        assert!((x0 + x1).abs() < 1e-9);
    }

    #[test]
    fn tree_guards() {
        assert_eq!(pythagorean_tree(3, 0.0), Err(FamilyError::AngleOutOfRange(0.0)));
        assert!(pythagorean_tree(3, 45.5).is_err());
        assert!(matches!(
            pythagorean_tree(17, 30.0),
            Err(FamilyError::DepthLimit { .. })
        ));
    }

    #[test]
    fn square_containment() {
        let sq = pythagorean_tree(0, 45.0).unwrap()[0];
        assert!(sq.contains(0.0, 0.5));
        assert!(sq.contains(0.5, 1.0));
        assert!(!sq.contains(0.6, 0.5));
    }

    #[test]
    fn julia_examples() {
        let p0 = EscapeParams::with_defaults(c(0.0, 0.0));
        assert_eq!(julia_escape(&p0, c(0.5, 0.0)), Escape::Bounded);
        assert!(matches!(julia_escape(&p0, c(2.5, 0.0)), Escape::EscapedAt(_)));
        let p = EscapeParams::new(c(-1.0, 0.0), 1000, 2.0).unwrap();
        assert_eq!(julia_escape(&p, c(0.0, 0.0)), Escape::Bounded);
        assert_eq!(julia_escape(&p0, c(f64::NAN, 0.0)), Escape::EscapedAt(0));
        assert!(EscapeParams::new(c(0.0, 0.0), 0, 2.0).is_err());
        assert!(EscapeParams::new(c(0.0, 0.0), 10, 1.5).is_err());
    }

    #[test]
    fn mandelbrot_examples() {
        assert!(mandelbrot_membership(c(0.0, 0.0), 500));
        assert!(!mandelbrot_membership(c(1.0, 0.0), 500));
        // 0, 1, 2, 5: first exceeds 2 at step 3
        assert_eq!(
            escape_time(c(1.0, 0.0), c(0.0, 0.0), 500, 2.0),
            Escape::EscapedAt(3)
        );
        assert!(mandelbrot_membership(c(0.25, 0.0), 1000));
    }

    #[test]
    fn path_values() {
        let cusp = cardioid_path(0.0);
        assert!((cusp - c(0.25, 0.0)).norm() < 1e-12);
        let basilica = cardioid_path(PI);
        assert!((basilica - c(-0.75, 0.0)).norm() < 1e-12);
        let eps = cardioid_path(0.075);
        assert!((eps.re - 0.251402).abs() < 5e-7);
        assert!((eps.im - 0.000105321).abs() < 5e-10);
        assert!((period2_circle_path(0.0) - c(-0.75, 0.0)).norm() < 1e-15);
        assert!((period2_circle_path(PI) - c(-1.25, 0.0)).norm() < 1e-15);
        assert!((period2_circle_path(PI / 2.0) - c(-1.0, 0.25)).norm() < 1e-15);
    }

    #[test]
    fn hyperbola_examples() {
        assert!(hyperbola_frame_membership((1.0, 1.0), 1.0, 0.05));
        assert!(hyperbola_frame_membership((0.0, 2.0), 0.0, 0.05));
        assert!(!hyperbola_frame_membership((1.0, 1.0), 0.5, 0.05));
    }

    #[test]
    fn path_evaluator_kinds() {
        let range = ParamInterval::new(0.0, PI, 3).unwrap();
        let card = PathSpec::new(PathKind::CardioidBoundary, range, 0.0).unwrap();
        let s = PathEvaluator::new(&card).unwrap().samples(3).unwrap();
        assert!((s[0].1 - c(0.25, 0.0)).norm() < 1e-9);
        assert!((s[1].1 - c(0.25, 0.5)).norm() < 1e-9);
        assert!((s[2].1 - c(-0.75, 0.0)).norm() < 1e-9);

        let unit = ParamInterval::new(0.0, 1.0, 2).unwrap();
        let line = PathSpec::new(
            PathKind::Polyline {
                points: vec![[-0.75, 0.0], [-1.0, 0.25], [-1.0, 0.5]],
            },
            unit,
            0.0,
        )
        .unwrap();
        let ev = PathEvaluator::new(&line).unwrap();
        assert_eq!(ev.point(0.25).unwrap(), c(-0.875, 0.125));
        assert_eq!(ev.point(1.0).unwrap(), c(-1.0, 0.5));

        let expr = PathSpec::new(
            PathKind::Expression {
                x: "0.5*cos(t)*(1-cos(t)) + 0.25".into(),
                y: "0.5*sin(t)*(1-cos(t))".into(),
            },
            range,
            0.075,
        )
        .unwrap();
        let ev = PathEvaluator::new(&expr).unwrap();
        let first = ev.samples(2).unwrap()[0];
        assert_eq!(first.0, 0.075);
        assert!((first.1 - cardioid_path(0.075)).norm() < 1e-15);

        let bad = PathSpec {
            kind: PathKind::Expression {
                x: "ln(t)".into(),
                y: "0".into(),
            },
            t_range: ParamInterval::new(-1.0, 1.0, 2).unwrap(),
            trim_epsilon: 0.0,
        };
        assert!(PathEvaluator::new(&bad).unwrap().point(-0.5).is_err());
    }

    #[test]
    fn brute_force_iteration_oracle() {
        // low iteration counts can only over-include points of M
        let n = 32;
        for i in 0..n {
            for j in 0..n {
                let z = c(
                    -2.0 + 4.0 * (i as f64 + 0.5) / n as f64,
                    -2.0 + 4.0 * (j as f64 + 0.5) / n as f64,
                );
                let lo = mandelbrot_membership(z, 64);
                let hi = mandelbrot_membership(z, 4096);
                if hi {
                    assert!(lo, "{z} in M at 4096 but not at 64");
                }
                if lo != hi {
                    // must be near the 4096-iteration boundary: some point
                    // within 0.1 is classified as a member
                    let near = (0..=20).any(|a| {
                        (0..=20).any(|b| {
                            let w = z + c(-0.1 + 0.01 * a as f64, -0.1 + 0.01 * b as f64);
                            (w - z).norm() <= 0.1 && mandelbrot_membership(w, 4096)
                        })
                    });
                    assert!(near, "{z} misclassified far from the boundary");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn flower_is_periodic(s in -2.0f64..2.0, t in -2.0f64..2.0, th in -7.0f64..7.0) {
            let a = polar_flower_boundary(s, t, th);
            let b = polar_flower_boundary(s, t, th + 2.0 * PI);
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!(a >= 2.0 - s.abs() - 1e-12 && a <= 2.0 + s.abs() + 1e-12);
        }

        #[test]
        fn tree_counts_and_areas(depth in 0u32..9, theta in 1.0f64..45.0) {
            let tree = pythagorean_tree(depth, theta).unwrap();
            prop_assert_eq!(tree.len(), (1usize << (depth + 1)) - 1);
            for d in 0..=depth {
                let area: f64 = tree.iter().filter(|s| s.depth == d).map(|s| s.area()).sum();
                prop_assert!((area - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn tree_squares_are_squares(theta in 1.0f64..=45.0) {
            for sq in pythagorean_tree(5, theta).unwrap() {
                let s = sq.side();
                for k in 0..4 {
                    let a = sq.corners[k];
                    let b = sq.corners[(k + 1) % 4];
                    let e = (b[0] - a[0]).hypot(b[1] - a[1]);
                    prop_assert!((e - s).abs() <= 1e-9 * s.max(1.0));
                }
                let d = (sq.corners[2][0] - sq.corners[0][0]).hypot(sq.corners[2][1] - sq.corners[0][1]);
                prop_assert!((d - s * 2f64.sqrt()).abs() <= 1e-9 * s.max(1.0));
            }
        }

        #[test]
        fn smaller_radius_escapes_no_later(re in -2.5f64..2.5, im in -2.5f64..2.5,
                                           zr in -2.0f64..2.0, zi in -2.0f64..2.0,
                                           r in 2.0f64..10.0, k in 0.2f64..1.0) {
            let big = escape_time(c(re, im), c(zr, zi), 200, r);
            let small = escape_time(c(re, im), c(zr, zi), 200, (r * k).max(2.0));
            if let Escape::EscapedAt(n) = big {
                match small {
                    Escape::EscapedAt(m) => prop_assert!(m <= n),
                    Escape::Bounded => prop_assert!(false, "smaller radius stayed bounded"),
                }
            }
        }

        #[test]
        fn mandelbrot_conjugate_symmetry(re in -2.0f64..1.0, im in -1.5f64..1.5) {
            prop_assert_eq!(
                mandelbrot_membership(c(re, im), 300),
                mandelbrot_membership(c(re, -im), 300)
            );
        }

        #[test]
        fn cardioid_reflection(t in -10.0f64..10.0) {
            let a = cardioid_path(2.0 * PI - t);
            let b = cardioid_path(t).conj();
            prop_assert!((a - b).norm() < 1e-12);
        }
    }
}

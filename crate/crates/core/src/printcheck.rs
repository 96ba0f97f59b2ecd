//! Printability heuristics for extrusion printers.
//!
//! Overhang is measured from the vertical: a wall is 0°, a flat ceiling is
//! 90°. Only downward-facing triangles can overhang, and triangles lying on
//! the build plate are ignored since the plate supports them.

use serde::Serialize;
use thiserror::Error;

use crate::mesher::mesh_statistics;
use crate::model::TriangleMesh;

/// Faces within this distance (mm) of the lowest point count as on the plate.
pub const PLATE_TOLERANCE_MM: f64 = 0.01;
/// Below this fraction of the bounding-box footprint, plate contact is reported as low.
pub const LOW_CONTACT_FRACTION: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckError {
    #[error("overhang threshold must lie strictly between 0 and 90 degrees, got {0}")]
    Threshold(f64),
    #[error("mesh is not watertight: {boundary} boundary edges, {nonmanifold} non-manifold edges, {misoriented} misoriented edges")]
    NotWatertight {
        boundary: usize,
        nonmanifold: usize,
        misoriented: usize,
    },
    #[error("mesh has no triangles")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverhangReport {
    pub threshold_deg: f64,
    pub max_overhang_deg: f64,
    pub flagged_triangles: usize,
    pub flagged_area_mm2: f64,
    pub worst_triangle: Option<usize>,
    /// Area of the faces resting on the plate.
    pub contact_area_mm2: f64,
}

/// Overhang of one triangle in degrees, `None` unless it faces downward.
pub fn overhang_angle_deg(normal: [f64; 3]) -> Option<f64> {
    (normal[2] < 0.0).then(|| (-normal[2]).min(1.0).asin().to_degrees())
}

fn on_plate(m: &TriangleMesh, t: usize, floor: f64) -> bool {
    m.corners(t).iter().all(|p| p[2] - floor <= PLATE_TOLERANCE_MM)
}

fn min_z(m: &TriangleMesh) -> Option<f64> {
    m.bounding_box().map(|(lo, _)| lo[2])
}

fn contact_area(m: &TriangleMesh, floor: f64) -> f64 {
    (0..m.triangles().len())
        .filter(|&t| on_plate(m, t, floor))
        .map(|t| m.triangle_area(t))
        .sum()
}

/// Flags downward faces steeper than `threshold_deg` from vertical, skipping
/// faces on the plate.
pub fn overhang_report(m: &TriangleMesh, threshold_deg: f64) -> Result<OverhangReport, CheckError> {
    if !(threshold_deg > 0.0 && threshold_deg < 90.0) {
        return Err(CheckError::Threshold(threshold_deg));
    }
    let floor = min_z(m).ok_or(CheckError::Empty)?;
    let s = mesh_statistics(m);
    if !s.watertight {
        return Err(CheckError::NotWatertight {
            boundary: s.boundary_edge_count,
            nonmanifold: s.nonmanifold_edge_count,
            misoriented: s.misoriented_edge_count,
        });
    }
    let mut report = OverhangReport {
        threshold_deg,
        max_overhang_deg: 0.0,
        flagged_triangles: 0,
        flagged_area_mm2: 0.0,
        worst_triangle: None,
        contact_area_mm2: 0.0,
    };
    for t in 0..m.triangles().len() {
        if on_plate(m, t, floor) {
            report.contact_area_mm2 += m.triangle_area(t);
            continue;
        }
        let Some(angle) = overhang_angle_deg(m.unit_normal(t)) else {
            continue;
        };
        if report.worst_triangle.is_none() || angle > report.max_overhang_deg {
            report.max_overhang_deg = angle;
            report.worst_triangle = Some(t);
        }
        if angle > threshold_deg {
            report.flagged_triangles += 1;
            report.flagged_area_mm2 += m.triangle_area(t);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub mesh: TriangleMesh,
    /// Applied z translation in mm.
    pub shift_z: f64,
    pub contact_area_mm2: f64,
    pub footprint_area_mm2: f64,
    pub warning: Option<String>,
}

/// Drops the mesh onto z = 0. Rotation is left to the user; a warning is
/// produced when little of the model touches the plate.
pub fn place_on_plate(m: &TriangleMesh) -> Result<Placement, CheckError> {
    let (lo, hi) = m
        .bounding_box()
        .filter(|_| !m.is_empty())
        .ok_or(CheckError::Empty)?;
    let shift_z = -lo[2];
    let mesh = if shift_z == 0.0 {
        m.clone()
    } else {
        m.clone().translated([0.0, 0.0, shift_z])
    };
    let floor = min_z(&mesh).expect("non-empty");
    let contact = contact_area(&mesh, floor);
    let footprint = (hi[0] - lo[0]) * (hi[1] - lo[1]);
    let warning = (contact < LOW_CONTACT_FRACTION * footprint).then(|| {
        format!(
            "only {contact:.3} mm² of a {footprint:.3} mm² footprint touches the build plate; \
             consider rotating the model so a flat face lies on the plate"
        )
    });
    Ok(Placement {
        mesh,
        shift_z,
        contact_area_mm2: contact,
        footprint_area_mm2: footprint,
        warning,
    })
}

/// Analytic meshes used to exercise the checks.
pub mod fixtures {
    use std::f64::consts::PI;

    use crate::model::TriangleMesh;

    /// Axis-aligned box with outward triangles.
    pub fn cuboid(lo: [f64; 3], hi: [f64; 3]) -> TriangleMesh {
        let v = (0..8)
            .map(|i| {
                [
                    if i & 1 == 0 { lo[0] } else { hi[0] },
                    if i & 2 == 0 { lo[1] } else { hi[1] },
                    if i & 4 == 0 { lo[2] } else { hi[2] },
                ]
            })
            .collect();
        let quads: [[u32; 4]; 6] = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        let t = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        TriangleMesh::new(v, t).expect("cuboid")
    }

    /// A solid of revolution about the z axis through the given
    /// `(radius, z)` profile, bottom to top. Zero radii become poles.
    pub fn revolve(profile: &[(f64, f64)], segments: usize) -> TriangleMesh {
        let mut vertices = Vec::new();
        let mut rings: Vec<Vec<u32>> = Vec::new();
        for &(r, z) in profile {
            if r == 0.0 {
                vertices.push([0.0, 0.0, z]);
                rings.push(vec![(vertices.len() - 1) as u32]);
            } else {
                let start = vertices.len() as u32;
                for s in 0..segments {
                    let a = 2.0 * PI * s as f64 / segments as f64;
                    vertices.push([r * a.cos(), r * a.sin(), z]);
                }
                rings.push((start..start + segments as u32).collect());
            }
        }
        let ring_at = |ring: &[u32], s: usize| ring[if ring.len() == 1 { 0 } else { s % segments }];
        let mut triangles = Vec::new();
        for w in rings.windows(2) {
            let (below, above) = (&w[0], &w[1]);
            for s in 0..segments {
                let (a, b) = (ring_at(below, s), ring_at(below, s + 1));
                let (c, d) = (ring_at(above, s), ring_at(above, s + 1));
                if a != b {
                    triangles.push([a, b, d]);
                }
                if c != d {
                    triangles.push([a, d, c]);
                }
            }
        }
        // flat ends
        for (ring, up) in [(&rings[0], false), (&rings[rings.len() - 1], true)] {
            if ring.len() == 1 {
                continue;
            }
            let z = vertices[ring[0] as usize][2];
            vertices.push([0.0, 0.0, z]);
            let c = (vertices.len() - 1) as u32;
            for s in 0..segments {
                let (a, b) = (ring[s], ring[(s + 1) % segments]);
                triangles.push(if up { [c, a, b] } else { [c, b, a] });
            }
        }
        TriangleMesh::new(vertices, triangles).expect("revolved solid")
    }

    /// Truncated cone standing on its small end whose side leans
    /// `overhang_deg` from vertical.
    pub fn overhang_frustum(
        overhang_deg: f64,
        bottom_radius: f64,
        height: f64,
        segments: usize,
    ) -> TriangleMesh {
        let top = bottom_radius + height * overhang_deg.to_radians().tan();
        revolve(&[(bottom_radius, 0.0), (top, height)], segments)
    }

    /// Sphere resting on the plate at a single pole.
    pub fn sphere(radius: f64, rings: usize, segments: usize) -> TriangleMesh {
        let profile: Vec<(f64, f64)> = (0..=rings)
            .map(|i| {
                let phi = PI * i as f64 / rings as f64;
                let r = if i == 0 || i == rings {
                    0.0
                } else {
                    radius * phi.sin()
                };
                (r, radius * (1.0 - phi.cos()))
            })
            .collect();
        revolve(&profile, segments)
    }

    /// Half ball with its flat face on top, curved side hanging below.
    pub fn hemisphere_bowl(radius: f64, rings: usize, segments: usize) -> TriangleMesh {
        let profile: Vec<(f64, f64)> = (0..=rings)
            .map(|i| {
                let phi = 0.5 * PI * i as f64 / rings as f64;
                let r = if i == 0 { 0.0 } else { radius * phi.sin() };
                (r, radius * (1.0 - phi.cos()))
            })
            .collect();
        revolve(&profile, segments)
    }
}

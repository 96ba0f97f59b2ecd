//! Marching cubes with face-consistent ambiguity resolution.
//!
//! Each cell is polygonized by first drawing the iso-contour on its six
//! faces (marching squares), then chaining the face segments into closed
//! loops and triangulating every loop. Ambiguous faces (diagonal corners on
//! the same side) are resolved with the asymptotic decider, which looks only
//! at the face's four values, so two cells sharing a face always draw the
//! same segments there, traversed in opposite directions. Vertices live on
//! grid edges and are keyed by edge, so the merged mesh is watertight
//! without any epsilon welding.

use std::collections::HashMap;

use crate::exec;

/// Corner offsets of a cell.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Cell edges as corner pairs, lower corner first.
const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [3, 2],
    [4, 5],
    [7, 6],
    [0, 3],
    [1, 2],
    [4, 7],
    [5, 6],
    [0, 4],
    [1, 5],
    [3, 7],
    [2, 6],
];

/// Faces, corners counter-clockwise seen from outside the cell.
const FACES: [[usize; 4]; 6] = [
    [0, 3, 2, 1],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [3, 7, 6, 2],
    [0, 4, 7, 3],
    [1, 2, 6, 5],
];

const fn edge_between(a: usize, b: usize) -> usize {
    let mut e = 0;
    while e < 12 {
        let [p, q] = EDGES[e];
        if (p == a && q == b) || (p == b && q == a) {
            return e;
        }
        e += 1;
    }
    panic!("corners are not adjacent");
}

const fn face_edges() -> [[usize; 4]; 6] {
    let mut out = [[0; 4]; 6];
    let mut f = 0;
    while f < 6 {
        let mut k = 0;
        while k < 4 {
            out[f][k] = edge_between(FACES[f][k], FACES[f][(k + 1) % 4]);
            k += 1;
        }
        f += 1;
    }
    out
}

/// `FACE_EDGES[f][k]` joins `FACES[f][k]` and `FACES[f][k + 1]`.
const FACE_EDGES: [[usize; 4]; 6] = face_edges();

const fn edge_faces() -> [[usize; 2]; 12] {
    let mut out = [[usize::MAX; 2]; 12];
    let mut f = 0;
    while f < 6 {
        let mut k = 0;
        while k < 4 {
            let e = FACE_EDGES[f][k];
            if out[e][0] == usize::MAX {
                out[e][0] = f;
            } else {
                out[e][1] = f;
            }
            k += 1;
        }
        f += 1;
    }
    out
}

const EDGE_FACES: [[usize; 2]; 12] = edge_faces();

fn share_face(a: usize, b: usize) -> bool {
    EDGE_FACES[a].iter().any(|f| EDGE_FACES[b].contains(f))
}

/// Axis of a cell edge: 0 = x, 1 = y, 2 = z.
fn edge_axis(e: usize) -> usize {
    let [p, q] = EDGES[e];
    (0..3).find(|&a| CORNERS[p][a] != CORNERS[q][a]).expect("edge")
}

/// Scalar samples on a regular grid plus the physical position of each grid
/// line. Samples outside the stored data read as zero.
pub(crate) struct Field<'a> {
    pub dims: [usize; 3],
    pub sample: &'a (dyn Fn(usize, usize, usize) -> f64 + Sync),
    pub coords: [Vec<f64>; 3],
    pub origin: [f64; 3],
}

impl Field<'_> {
    fn key(&self, i: usize, j: usize, k: usize, axis: usize) -> u64 {
        (((k * self.dims[1] + j) * self.dims[0] + i) * 3 + axis) as u64
    }

    fn edge_point(&self, base: [usize; 3], axis: usize, iso: f64) -> [f64; 3] {
        let mut far = base;
        far[axis] += 1;
        let v0 = (self.sample)(base[0], base[1], base[2]);
        let v1 = (self.sample)(far[0], far[1], far[2]);
        let t = (iso - v0) / (v1 - v0);
        let mut p = [0.0; 3];
        for a in 0..3 {
            let lo = self.coords[a][base[a]];
            p[a] = if a == axis {
                let hi = self.coords[a][far[a]];
                lo + t * (hi - lo)
            } else {
                lo
            };
        }
        [
            self.origin[0] + p[0],
            self.origin[1] + p[1],
            self.origin[2] + p[2],
        ]
    }
}

// Centroid vertices get keys above every grid-edge key.
const CENTER_TAG: u64 = 1 << 63;

struct SlabMesh {
    keys: Vec<u64>,
    positions: Vec<[f64; 3]>,
    triangles: Vec<[u32; 3]>,
}

/// Extracts the surface `value = iso` with normals pointing toward lower
/// values. Returns vertices and triangles in a schedule-independent order.
pub(crate) fn polygonize(field: &Field<'_>, iso: f64) -> (Vec<[f64; 3]>, Vec<[u32; 3]>) {
    let [nx, ny, nz] = field.dims;
    if nx < 2 || ny < 2 || nz < 2 {
        return (Vec::new(), Vec::new());
    }
    let slabs = exec::map_range(nz - 1, |k| polygonize_slab(field, iso, k));

    let total: usize = slabs.iter().map(|s| s.triangles.len()).sum();
    let mut index: HashMap<u64, u32> = HashMap::with_capacity(total / 2 + 16);
    let mut vertices = Vec::with_capacity(total / 2 + 16);
    let mut triangles = Vec::with_capacity(total);
    for slab in slabs {
        let remap: Vec<u32> = slab
            .keys
            .iter()
            .zip(&slab.positions)
            .map(|(&key, &pos)| {
                *index.entry(key).or_insert_with(|| {
                    vertices.push(pos);
                    (vertices.len() - 1) as u32
                })
            })
            .collect();
        triangles.extend(
            slab.triangles
                .iter()
                .map(|t| [remap[t[0] as usize], remap[t[1] as usize], remap[t[2] as usize]]),
        );
    }
    (vertices, triangles)
}

fn polygonize_slab(field: &Field<'_>, iso: f64, k: usize) -> SlabMesh {
    let [nx, ny, _] = field.dims;
    let mut out = SlabMesh {
        keys: Vec::new(),
        positions: Vec::new(),
        triangles: Vec::new(),
    };
    let mut local: HashMap<u64, u32> = HashMap::new();
    let plane = |kk: usize| -> Vec<f64> {
        let mut v = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                v.push((field.sample)(i, j, kk));
            }
        }
        v
    };
    let (lower, upper) = (plane(k), plane(k + 1));

    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let mut vals = [0.0; 8];
            for (c, off) in CORNERS.iter().enumerate() {
                let src = if off[2] == 0 { &lower } else { &upper };
                vals[c] = src[(j + off[1]) * nx + i + off[0]];
            }
            let inside: [bool; 8] = vals.map(|v| v > iso);
            if inside.iter().all(|&b| b) || inside.iter().all(|&b| !b) {
                continue;
            }
            let cell = (k * ny + j) * nx + i;
            polygonize_cell(
                field,
                iso,
                [i, j, k],
                cell as u64,
                &vals,
                &inside,
                &mut out,
                &mut local,
            );
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn polygonize_cell(
    field: &Field<'_>,
    iso: f64,
    base: [usize; 3],
    cell: u64,
    vals: &[f64; 8],
    inside: &[bool; 8],
    out: &mut SlabMesh,
    local: &mut HashMap<u64, u32>,
) {
    // next[e] = edge where the contour segment starting on edge e ends
    let mut next = [usize::MAX; 12];
    for (f, corners) in FACES.iter().enumerate() {
        let ins = corners.map(|c| inside[c]);
        // crossings in walk order: (position k, leaving the inside?)
        let mut leaving = [usize::MAX; 2];
        let mut entering = [usize::MAX; 2];
        let (mut nl, mut ne) = (0, 0);
        for kk in 0..4 {
            let (a, b) = (ins[kk], ins[(kk + 1) % 4]);
            if a && !b {
                leaving[nl] = kk;
                nl += 1;
            } else if !a && b {
                entering[ne] = kk;
                ne += 1;
            }
        }
        debug_assert_eq!(nl, ne);
        let edge = |kk: usize| FACE_EDGES[f][kk];
        match nl {
            0 => {}
            1 => next[edge(leaving[0])] = edge(entering[0]),
            _ => {
                let v = corners.map(|c| vals[c]);
                let denom = (v[0] + v[2]) - (v[1] + v[3]);
                let saddle = (v[0] * v[2] - v[1] * v[3]) / denom;
                let inside_connected = saddle > iso;
                for &l in &leaving {
                    // entering crossings just before / just after l in walk order
                    let target = if inside_connected {
                        (1..4).map(|d| (l + d) % 4).find(|p| entering.contains(p))
                    } else {
                        (1..4).map(|d| (l + 4 - d) % 4).find(|p| entering.contains(p))
                    };
                    next[edge(l)] = edge(target.expect("crossings alternate"));
                }
            }
        }
    }

    let mut used = [false; 12];
    let mut loop_no = 0u64;
    for start in 0..12 {
        if next[start] == usize::MAX || used[start] {
            continue;
        }
        let mut ring = Vec::with_capacity(12);
        let mut e = start;
        while !used[e] {
            used[e] = true;
            ring.push(e);
            e = next[e];
            debug_assert!(e != usize::MAX, "open contour");
        }
        debug_assert_eq!(e, start);

        let mut vertex = |e: usize| -> u32 {
            let axis = edge_axis(e);
            let lo = CORNERS[EDGES[e][0]];
            let g = [base[0] + lo[0], base[1] + lo[1], base[2] + lo[2]];
            let key = field.key(g[0], g[1], g[2], axis);
            *local.entry(key).or_insert_with(|| {
                out.keys.push(key);
                out.positions.push(field.edge_point(g, axis, iso));
                (out.keys.len() - 1) as u32
            })
        };
        let ids: Vec<u32> = ring.iter().map(|&e| vertex(e)).collect();

        // Loops wind with the inside on the left; emitting (a, c, b) makes
        // normals point toward lower values.
        let n = ring.len();
        if n == 3 {
            out.triangles.push([ids[0], ids[2], ids[1]]);
        } else if let Some(apex) =
            (0..n).find(|&a| (2..n - 1).all(|d| !share_face(ring[a], ring[(a + d) % n])))
        {
            for d in 1..n - 1 {
                let (b, c) = ((apex + d) % n, (apex + d + 1) % n);
                out.triangles.push([ids[apex], ids[c], ids[b]]);
            }
        } else {
            let mut center = [0.0; 3];
            for &id in &ids {
                let p = out.positions[id as usize];
                for a in 0..3 {
                    center[a] += p[a];
                }
            }
            let center = center.map(|c| c / n as f64);
            let key = CENTER_TAG | (cell << 3) | loop_no;
            out.keys.push(key);
            out.positions.push(center);
            let cid = (out.keys.len() - 1) as u32;
            for d in 0..n {
                out.triangles.push([cid, ids[(d + 1) % n], ids[d]]);
            }
        }
        loop_no += 1;
    }
}

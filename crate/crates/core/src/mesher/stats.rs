use serde::Serialize;

use crate::model::{cross, dot, sub, TriangleMesh};

/// Topology and size summary of a mesh.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshStatistics {
    pub vertex_count: usize,
    pub triangle_count: usize,
    pub edge_count: usize,
    /// Undirected edges used by exactly one triangle.
    pub boundary_edge_count: usize,
    /// Undirected edges used by three or more triangles.
    pub nonmanifold_edge_count: usize,
    /// Edges shared by two triangles that traverse it in the same direction.
    pub misoriented_edge_count: usize,
    pub euler_characteristic: i64,
    /// Connected components, counting triangles that share a vertex as connected.
    pub component_count: usize,
    /// Components enclosing positive volume, i.e. separate pieces of material.
    pub solid_count: usize,
    /// Components enclosing negative volume, i.e. cavities inside a solid.
    pub void_count: usize,
    /// Signed volume in mm³, positive for outward orientation.
    pub enclosed_volume: f64,
    pub surface_area: f64,
    pub bounding_box: Option<([f64; 3], [f64; 3])>,
    /// Every edge is shared by exactly two oppositely oriented triangles.
    pub watertight: bool,
}

pub fn mesh_statistics(m: &TriangleMesh) -> MeshStatistics {
    // Directed edges packed as (low << 33) | (high << 1) | reversed.
    let mut edges: Vec<u64> = Vec::with_capacity(3 * m.triangles().len());
    for t in m.triangles() {
        for k in 0..3 {
            let (a, b) = (t[k] as u64, t[(k + 1) % 3] as u64);
            let (lo, hi, rev) = if a < b { (a, b, 0) } else { (b, a, 1) };
            edges.push((lo << 33) | (hi << 1) | rev);
        }
    }
    edges.sort_unstable();

    let (mut edge_count, mut boundary, mut nonmanifold, mut misoriented) = (0, 0, 0, 0);
    let mut i = 0;
    while i < edges.len() {
        let key = edges[i] >> 1;
        let mut j = i;
        let mut forward = 0;
        while j < edges.len() && edges[j] >> 1 == key {
            forward += usize::from(edges[j] & 1 == 0);
            j += 1;
        }
        match j - i {
            1 => boundary += 1,
            2 if forward != 1 => misoriented += 1,
            2 => {}
            _ => nonmanifold += 1,
        }
        edge_count += 1;
        i = j;
    }

    let bbox = m.bounding_box();
    let center = bbox.map_or([0.0; 3], |(lo, hi)| {
        [
            0.5 * (lo[0] + hi[0]),
            0.5 * (lo[1] + hi[1]),
            0.5 * (lo[2] + hi[2]),
        ]
    });
    let (roots, component_count) = components(m);
    let mut component_volume = vec![0.0; component_count];
    let mut area = 0.0;
    for t in 0..m.triangles().len() {
        let [a, b, c] = m.corners(t);
        let (a, b, c) = (sub(a, center), sub(b, center), sub(c, center));
        component_volume[roots[t]] += dot(a, cross(b, c));
        area += m.triangle_area(t);
    }
    let volume: f64 = component_volume.iter().sum();
    let solid_count = component_volume.iter().filter(|&&v| v > 0.0).count();
    let void_count = component_volume.iter().filter(|&&v| v < 0.0).count();

    let v = m.vertices().len();
    MeshStatistics {
        vertex_count: v,
        triangle_count: m.triangles().len(),
        edge_count,
        boundary_edge_count: boundary,
        nonmanifold_edge_count: nonmanifold,
        misoriented_edge_count: misoriented,
        euler_characteristic: v as i64 - edge_count as i64 + m.triangles().len() as i64,
        component_count,
        solid_count,
        void_count,
        enclosed_volume: volume / 6.0,
        surface_area: area,
        bounding_box: bbox,
        watertight: boundary == 0 && nonmanifold == 0 && misoriented == 0,
    }
}

/// Component index of every triangle, and the number of components.
fn components(m: &TriangleMesh) -> (Vec<usize>, usize) {
    let mut parent: Vec<u32> = (0..m.vertices().len() as u32).collect();
    fn find(p: &mut [u32], mut x: u32) -> u32 {
        while p[x as usize] != x {
            p[x as usize] = p[p[x as usize] as usize];
            x = p[x as usize];
        }
        x
    }
    let mut used = vec![false; parent.len()];
    for t in m.triangles() {
        for &v in t {
            used[v as usize] = true;
        }
        let r = find(&mut parent, t[0]);
        for &v in &t[1..] {
            let s = find(&mut parent, v);
            parent[s as usize] = r;
        }
    }
    let mut index = vec![usize::MAX; parent.len()];
    let mut count = 0;
    for v in 0..parent.len() as u32 {
        if used[v as usize] && find(&mut parent, v) == v {
            index[v as usize] = count;
            count += 1;
        }
    }
    let roots = m
        .triangles()
        .iter()
        .map(|t| index[find(&mut parent, t[0]) as usize])
        .collect();
    (roots, count)
}

#[cfg(test)]
pub(crate) fn unit_cube() -> TriangleMesh {
    let v = (0..8)
        .map(|i| [(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64])
        .collect();
    let quads = [
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
    TriangleMesh::new(v, t).unwrap()
}

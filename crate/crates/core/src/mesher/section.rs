use crate::model::{FrameRaster, TriangleMesh};

/// Segments where the plane `z = height` cuts the mesh, in (x, y).
pub fn cross_section(m: &TriangleMesh, height: f64) -> Vec<[[f64; 2]; 2]> {
    let mut out = Vec::new();
    for t in 0..m.triangles().len() {
        let c = m.corners(t);
        let mut hits = Vec::with_capacity(2);
        for k in 0..3 {
            let (p, q) = (c[k], c[(k + 1) % 3]);
            let (dp, dq) = (p[2] - height, q[2] - height);
            if (dp < 0.0) != (dq < 0.0) {
                let s = dp / (dp - dq);
                hits.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
            }
        }
        if let [a, b] = hits[..] {
            out.push([a, b]);
        }
    }
    out
}

/// Even-odd fill of closed section segments sampled at the pixel centers of
/// `like`. Returns one flag per pixel in row-major order.
pub fn fill_section(segments: &[[[f64; 2]; 2]], like: &FrameRaster) -> Vec<bool> {
    let (w, h) = (like.width(), like.height());
    let mut inside = vec![false; w * h];
    let mut xs = Vec::new();
    for row in 0..h {
        let y = like.pixel_center(0, row).1;
        xs.clear();
        for [a, b] in segments {
            if (a[1] <= y) != (b[1] <= y) {
                let s = (y - a[1]) / (b[1] - a[1]);
                xs.push(a[0] + s * (b[0] - a[0]));
            }
        }
        xs.sort_by(f64::total_cmp);
        let mut crossings = 0;
        for col in 0..w {
            let x = like.pixel_center(col, row).0;
            while crossings < xs.len() && xs[crossings] < x {
                crossings += 1;
            }
            inside[row * w + col] = crossings % 2 == 1;
        }
    }
    inside
}

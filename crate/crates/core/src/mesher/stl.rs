use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::MeshError;
use crate::model::TriangleMesh;

pub const STL_HEADER_LEN: usize = 80;
const RECORD_LEN: usize = 50;

fn io_error(path: &Path, source: std::io::Error) -> MeshError {
    MeshError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn header() -> [u8; STL_HEADER_LEN] {
    let mut h = [b' '; STL_HEADER_LEN];
    let name = format!("statica {}", env!("CARGO_PKG_VERSION"));
    h[..name.len()].copy_from_slice(name.as_bytes());
    h
}

/// Binary little-endian STL bytes: header, count, then one 50-byte record
/// per triangle (normal, three vertices, zero attribute).
pub fn encode_stl(m: &TriangleMesh) -> Vec<u8> {
    let n = m.triangles().len();
    let mut out = Vec::with_capacity(STL_HEADER_LEN + 4 + RECORD_LEN * n);
    out.extend_from_slice(&header());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for t in 0..n {
        let normal = m.unit_normal(t);
        for c in normal {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        for p in m.corners(t) {
            for c in p {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}

/// Writes binary STL and returns the number of bytes written.
pub fn export_stl(m: &TriangleMesh, path: impl AsRef<Path>) -> Result<usize, MeshError> {
    let path = path.as_ref();
    let bytes = encode_stl(m);
    std::fs::write(path, &bytes).map_err(|e| io_error(path, e))?;
    Ok(bytes.len())
}

/// Wavefront OBJ with 1-based face indices.
pub fn export_obj(m: &TriangleMesh, path: impl AsRef<Path>) -> Result<usize, MeshError> {
    let path = path.as_ref();
    let mut s = String::new();
    for v in m.vertices() {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
    }
    for t in m.triangles() {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    std::fs::write(path, &s).map_err(|e| io_error(path, e))?;
    Ok(s.len())
}

pub fn parse_stl(path: impl AsRef<Path>) -> Result<TriangleMesh, MeshError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    parse_stl_bytes(&bytes)
}

/// Decodes binary or ASCII STL. Corners with bitwise-equal coordinates are
/// merged into one vertex; triangles that collapse under merging are dropped.
pub fn parse_stl_bytes(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    let binary_len = |n: usize| STL_HEADER_LEN + 4 + RECORD_LEN * n;
    if bytes.len() >= STL_HEADER_LEN + 4 {
        let n = u32::from_le_bytes(bytes[80..84].try_into().expect("4 bytes")) as usize;
        if bytes.len() == binary_len(n) {
            return parse_binary(bytes, n);
        }
    }
    if bytes.starts_with(b"solid") {
        if let Ok(s) = std::str::from_utf8(bytes) {
            if s.contains("facet") || s.contains("endsolid") {
                return parse_ascii(s);
            }
        }
    }
    if bytes.len() < STL_HEADER_LEN + 4 {
        return Err(MeshError::Format {
            offset: bytes.len(),
            message: format!(
                "file has {} bytes, shorter than the 84-byte binary header",
                bytes.len()
            ),
        });
    }
    let n = u32::from_le_bytes(bytes[80..84].try_into().expect("4 bytes")) as usize;
    let complete = (bytes.len() - 84) / RECORD_LEN;
    if complete < n {
        let offset = binary_len(complete);
        Err(MeshError::Format {
            offset,
            message: format!(
                "header declares {n} triangles ({} bytes) but triangle {complete} is cut off at {} bytes",
                binary_len(n),
                bytes.len()
            ),
        })
    } else {
        Err(MeshError::Format {
            offset: binary_len(n),
            message: format!(
                "header declares {n} triangles but {} trailing bytes follow them",
                bytes.len() - binary_len(n)
            ),
        })
    }
}

fn parse_binary(bytes: &[u8], n: usize) -> Result<TriangleMesh, MeshError> {
    let f = |at: usize| f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let mut w = Welder::default();
    for t in 0..n {
        let base = 84 + t * RECORD_LEN + 12;
        let corners: [[f32; 3]; 3] =
            std::array::from_fn(|k| std::array::from_fn(|a| f(base + 12 * k + 4 * a)));
        w.push(corners);
    }
    w.finish()
}

fn parse_ascii(s: &str) -> Result<TriangleMesh, MeshError> {
    let mut w = Welder::default();
    let mut corners: Vec<[f32; 3]> = Vec::with_capacity(3);
    let mut tokens = token_offsets(s);
    let bad = |offset: usize, message: String| MeshError::Format { offset, message };
    while let Some((at, tok)) = tokens.next() {
        match tok {
            "vertex" => {
                let mut p = [0f32; 3];
                for c in &mut p {
                    let (at, tok) = tokens
                        .next()
                        .ok_or_else(|| bad(s.len(), "vertex needs three coordinates".into()))?;
                    *c = tok
                        .parse()
                        .map_err(|_| bad(at, format!("expected a number, found {tok:?}")))?;
                }
                corners.push(p);
            }
            "endloop" => {
                if corners.len() != 3 {
                    return Err(bad(
                        at,
                        format!("facet has {} vertices, expected 3", corners.len()),
                    ));
                }
                w.push([corners[0], corners[1], corners[2]]);
                corners.clear();
            }
            _ => {}
        }
    }
    if !corners.is_empty() {
        return Err(bad(s.len(), "unterminated facet".into()));
    }
    w.finish()
}

fn token_offsets(s: &str) -> impl Iterator<Item = (usize, &str)> {
    s.split_ascii_whitespace()
        .map(move |tok| (tok.as_ptr() as usize - s.as_ptr() as usize, tok))
}

#[derive(Default)]
struct Welder {
    index: HashMap<[u32; 3], u32>,
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[u32; 3]>,
    dropped: usize,
}

impl Welder {
    fn push(&mut self, corners: [[f32; 3]; 3]) {
        let ids = corners.map(|p| {
            let key = p.map(f32::to_bits);
            *self.index.entry(key).or_insert_with(|| {
                self.vertices.push(p.map(f64::from));
                (self.vertices.len() - 1) as u32
            })
        });
        if ids[0] == ids[1] || ids[1] == ids[2] || ids[0] == ids[2] {
            self.dropped += 1;
        } else {
            self.triangles.push(ids);
        }
    }

    fn finish(self) -> Result<TriangleMesh, MeshError> {
        if self.dropped > 0 {
            log::warn!("dropped {} STL facets with repeated corners", self.dropped);
        }
        Ok(TriangleMesh::new(self.vertices, self.triangles)?)
    }
}

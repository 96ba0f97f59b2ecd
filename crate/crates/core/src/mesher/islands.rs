use crate::model::{FrameRaster, ModelError, VoxelVolume};

/// Zeroes every voxel at or above `level` that is not face-connected to the
/// largest such region. Ties go to the region met first in layer, row,
/// column order.
pub fn retain_largest_component(volume: &VoxelVolume, level: u8) -> Result<VoxelVolume, ModelError> {
    let (w, h, n) = (volume.width(), volume.height(), volume.len());
    let mut values: Vec<u8> = volume
        .layers()
        .iter()
        .flat_map(|f| f.values().iter().copied())
        .collect();
    let inside = |v: u8| level > 0 && v >= level;

    const UNSEEN: u32 = u32::MAX;
    let mut label = vec![UNSEEN; values.len()];
    let mut sizes: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..values.len() {
        if label[start] != UNSEEN || !inside(values[start]) {
            continue;
        }
        let id = sizes.len() as u32;
        let mut size = 0;
        label[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            size += 1;
            let (c, r, k) = (p % w, (p / w) % h, p / (w * h));
            let mut visit = |q: usize| {
                if label[q] == UNSEEN && inside(values[q]) {
                    label[q] = id;
                    stack.push(q);
                }
            };
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < w {
                visit(p + 1);
            }
            if r > 0 {
                visit(p - w);
            }
            if r + 1 < h {
                visit(p + w);
            }
            if k > 0 {
                visit(p - w * h);
            }
            if k + 1 < n {
                visit(p + w * h);
            }
        }
        sizes.push(size);
    }
    let Some(keep) = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i as u32)
    else {
        return Ok(volume.clone());
    };
    if sizes.len() > 1 {
        log::info!("dropping {} detached pieces", sizes.len() - 1);
    }
    for (v, &l) in values.iter_mut().zip(&label) {
        if l != UNSEEN && l != keep {
            *v = 0;
        }
    }

    let layers = values
        .chunks_exact(w * h)
        .map(|chunk| FrameRaster::new(w, h, chunk.to_vec(), volume.pixel_pitch(), volume.origin()))
        .collect::<Result<Vec<_>, _>>()?;
    VoxelVolume::with_heights(
        layers,
        volume.layer_pitch(),
        *volume.param(),
        (0..n).map(|k| volume.layer_z(k)).collect(),
        (0..n).map(|k| volume.layer_t(k)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamInterval;

    fn volume(values: &[&[u8]], w: usize) -> VoxelVolume {
        let frames = values
            .iter()
            .map(|v| FrameRaster::new(w, v.len() / w, v.to_vec(), 1.0, (0.0, 0.0)).unwrap())
            .collect();
        VoxelVolume::new(frames, 1.0, ParamInterval::new(0.0, 1.0, values.len()).unwrap()).unwrap()
    }

    #[test]
    fn keeps_only_the_biggest_region() {
        #[rustfmt::skip]
        let v = volume(&[
            &[200, 200, 0, 90,
              0,   0,   0, 0],
            &[200, 0,   0, 255,
              0,   0,   0, 0],
        ], 4);
        let out = retain_largest_component(&v, 128).unwrap();
        assert_eq!(out.slice(0).unwrap().values(), &[200, 200, 0, 90, 0, 0, 0, 0]);
        assert_eq!(out.slice(1).unwrap().values(), &[200, 0, 0, 0, 0, 0, 0, 0]);
        // below-level voxels are untouched
        assert_eq!(out.slice(0).unwrap().get(3, 0), 90);
    }

    #[test]
    fn diagonal_contact_does_not_connect() {
        let v = volume(&[&[255, 0, 0, 255], &[255, 0, 0, 0]], 2);
        let out = retain_largest_component(&v, 128).unwrap();
        assert_eq!(out.slice(0).unwrap().values(), &[255, 0, 0, 0]);
        assert_eq!(out.slice(1).unwrap().values(), &[255, 0, 0, 0]);
    }

    #[test]
    fn empty_volume_is_unchanged() {
        let v = volume(&[&[0, 0], &[0, 0]], 2);
        assert_eq!(retain_largest_component(&v, 128).unwrap(), v);
    }
}

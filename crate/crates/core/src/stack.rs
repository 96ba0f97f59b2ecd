//! Frame stacks on disk.
//!
//! A stack is a directory of 8-bit grayscale PNGs named
//! `<basename>_<1000 + i>.png`, so plain alphabetical order is stack order
//! for up to 9000 frames, plus an optional `stack.json` sidecar carrying the
//! physical units that PNG cannot. Import is tolerant of what other tools
//! write: RGB is reduced to luminance, 16-bit samples are narrowed, and an
//! alpha channel is either rejected (strict) or composited over black.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageEncoder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::model::{FrameRaster, ModelError, ParamInterval, VoxelVolume};
use crate::raster::Window;

/// Sidecar file name.
pub const META_FILE: &str = "stack.json";
/// First frame number in file names.
pub const FIRST_FRAME_NUMBER: usize = 1000;
/// Beyond this many frames a stack is taller than most printers at 0.2 mm layers.
pub const FRAME_WARNING_LIMIT: usize = 1500;
/// Default physical width of a frame.
pub const DEFAULT_MODEL_WIDTH_MM: f64 = 80.0;
/// Default layer thickness.
pub const DEFAULT_LAYER_PITCH_MM: f64 = 0.2;

#[derive(Debug, Error)]
pub enum StackError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: image has an alpha channel; remove the alpha layer or import leniently")]
    Alpha { path: PathBuf },
    #[error("inconsistent frames: {0}")]
    Consistency(String),
    #[error("need at least 2 PNG frames, found {found} in {dir}")]
    InsufficientFrames { dir: PathBuf, found: usize },
    #[error("{path}: bad stack metadata: {message}")]
    Meta { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StackError + '_ {
    move |source| StackError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Contents of `stack.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackMeta {
    pub pixel_pitch_mm: f64,
    pub layer_pitch_mm: f64,
    pub window: Window,
    pub t_min: f64,
    pub t_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl StackMeta {
    pub fn read(dir: &Path) -> Result<Option<Self>, StackError> {
        let path = dir.join(META_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let meta: StackMeta = serde_json::from_str(&text).map_err(|e| StackError::Meta {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if !(meta.pixel_pitch_mm > 0.0) || !(meta.layer_pitch_mm > 0.0) {
            return Err(StackError::Meta {
                path,
                message: "pitches must be positive".into(),
            });
        }
        Ok(Some(meta))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, StackError> {
        let path = dir.join(META_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("meta serializes");
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }
}

/// File name of frame `i`.
pub fn frame_file_name(basename: &str, i: usize) -> String {
    format!("{basename}_{}.png", FIRST_FRAME_NUMBER + i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportedStack {
    pub paths: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Writes each frame as an 8-bit grayscale PNG without alpha.
pub fn export_png_stack(
    frames: &[FrameRaster],
    dir: &Path,
    basename: &str,
) -> Result<ExportedStack, StackError> {
    if let Some(first) = frames.first() {
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| !f.same_geometry(first)) {
            return Err(StackError::Consistency(format!(
                "frame {i} is {}x{}, frame 0 is {}x{}",
                f.width(),
                f.height(),
                first.width(),
                first.height()
            )));
        }
    }
    let mut warnings = Vec::new();
    if frames.len() > FRAME_WARNING_LIMIT {
        let msg = format!(
            "{} frames is more than {FRAME_WARNING_LIMIT}; at {DEFAULT_LAYER_PITCH_MM} mm per layer the model may not fit the printer",
            frames.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let paths = exec::try_map_range(frames.len(), |i| {
        let path = dir.join(frame_file_name(basename, i));
        write_gray_png(&frames[i], &path)?;
        Ok::<_, StackError>(path)
    })?;
    Ok(ExportedStack { paths, warnings })
}

pub fn write_gray_png(frame: &FrameRaster, path: &Path) -> Result<(), StackError> {
    let bytes = encode_gray_png(frame.values(), frame.width(), frame.height()).map_err(|message| {
        StackError::Format {
            path: path.to_path_buf(),
            message,
        }
    })?;
    fs::write(path, bytes).map_err(io_err(path))
}

/// Encodes 8-bit grayscale pixels as PNG.
pub fn encode_gray_png(values: &[u8], width: usize, height: usize) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(values, width as u32, height as u32, image::ExtendedColorType::L8)
        .map_err(|e| e.to_string())?;
    Ok(out)
}

/// PNG files of `dir` in byte-lexicographic name order.
pub fn list_png_files(dir: &Path) -> Result<Vec<PathBuf>, StackError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort_by(|a, b| {
        let name = |p: &PathBuf| p.file_name().map(|n| n.as_encoded_bytes().to_vec());
        name(a).cmp(&name(b))
    });
    Ok(files)
}

fn decode(path: &Path) -> Result<DynamicImage, StackError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| StackError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn narrow16(v: u16) -> u8 {
    ((v as u32 * 255 + 32767) / 65535) as u8
}

fn over_black(c: u8, a: u8) -> u8 {
    ((c as u32 * a as u32 + 127) / 255) as u8
}

fn luminance(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.2126 * r as f64 + 0.7152 * g as f64 + 0.0722 * b as f64;
    y.round().clamp(0.0, 255.0) as u8
}

/// Reduces an image to 8-bit luminance; alpha, if any, is composited over black.
pub fn to_luminance(img: &DynamicImage) -> Vec<u8> {
    match img {
        DynamicImage::ImageLuma8(b) => b.as_raw().clone(),
        DynamicImage::ImageLuma16(b) => b.as_raw().iter().map(|&v| narrow16(v)).collect(),
        DynamicImage::ImageLumaA8(b) => b
            .as_raw()
            .chunks_exact(2)
            .map(|p| over_black(p[0], p[1]))
            .collect(),
        DynamicImage::ImageLumaA16(b) => b
            .as_raw()
            .chunks_exact(2)
            .map(|p| over_black(narrow16(p[0]), narrow16(p[1])))
            .collect(),
        DynamicImage::ImageRgb8(b) => b
            .as_raw()
            .chunks_exact(3)
            .map(|p| luminance(p[0], p[1], p[2]))
            .collect(),
        DynamicImage::ImageRgb16(b) => b
            .as_raw()
            .chunks_exact(3)
            .map(|p| luminance(narrow16(p[0]), narrow16(p[1]), narrow16(p[2])))
            .collect(),
        other => {
            let rgba = strip_alpha_image(other).to_rgb8();
            rgba.as_raw()
                .chunks_exact(3)
                .map(|p| luminance(p[0], p[1], p[2]))
                .collect()
        }
    }
}

/// The image with any alpha channel composited over black and dropped.
/// 16-bit images are narrowed to 8 bits.
pub fn strip_alpha_image(img: &DynamicImage) -> DynamicImage {
    match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageRgb8(_) => img.clone(),
        DynamicImage::ImageLuma16(b) => DynamicImage::ImageLuma8(
            image::GrayImage::from_raw(
                b.width(),
                b.height(),
                b.as_raw().iter().map(|&v| narrow16(v)).collect(),
            )
            .expect("same size"),
        ),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            let la = img.to_luma_alpha16();
            let raw = la
                .as_raw()
                .chunks_exact(2)
                .map(|p| over_black(narrow16(p[0]), narrow16(p[1])))
                .collect();
            DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(la.width(), la.height(), raw).expect("same size"),
            )
        }
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgb32F(_) => {
            let rgb = img.to_rgb16();
            let raw = rgb.as_raw().iter().map(|&v| narrow16(v)).collect();
            DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(rgb.width(), rgb.height(), raw).expect("same size"),
            )
        }
        _ => {
            let rgba = img.to_rgba16();
            let raw = rgba
                .as_raw()
                .chunks_exact(4)
                .flat_map(|p| {
                    let a = narrow16(p[3]);
                    [
                        over_black(narrow16(p[0]), a),
                        over_black(narrow16(p[1]), a),
                        over_black(narrow16(p[2]), a),
                    ]
                })
                .collect();
            DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(rgba.width(), rgba.height(), raw).expect("same size"),
            )
        }
    }
}

/// Rewrites `input` to `output` without an alpha channel.
pub fn strip_alpha(input: &Path, output: &Path) -> Result<(), StackError> {
    let img = strip_alpha_image(&decode(input)?);
    let (w, h) = (img.width(), img.height());
    let color = match &img {
        DynamicImage::ImageLuma8(_) => image::ExtendedColorType::L8,
        _ => image::ExtendedColorType::Rgb8,
    };
    let file = fs::File::create(output).map_err(io_err(output))?;
    image::codecs::png::PngEncoder::new(BufWriter::new(file))
        .write_image(img.as_bytes(), w, h, color)
        .map_err(|e| StackError::Format {
            path: output.to_path_buf(),
            message: e.to_string(),
        })
}

/// Loads a PNG directory as a volume. Files are taken in name order;
/// physical units come from `stack.json` when present.
pub fn import_png_stack(dir: &Path, strict_alpha: bool) -> Result<VoxelVolume, StackError> {
    let files = list_png_files(dir)?;
    if files.len() < 2 {
        return Err(StackError::InsufficientFrames {
            dir: dir.to_path_buf(),
            found: files.len(),
        });
    }
    let meta = StackMeta::read(dir)?;
    let decoded = exec::try_map_range(files.len(), |i| {
        let path = &files[i];
        let img = decode(path)?;
        if strict_alpha && img.color().has_alpha() {
            return Err(StackError::Alpha { path: path.clone() });
        }
        Ok((img.width() as usize, img.height() as usize, to_luminance(&img)))
    })?;

    let (w, h) = (decoded[0].0, decoded[0].1);
    if let Some((i, d)) = decoded.iter().enumerate().find(|(_, d)| (d.0, d.1) != (w, h)) {
        return Err(StackError::Consistency(format!(
            "{} is {}x{}, {} is {w}x{h}",
            files[i].display(),
            d.0,
            d.1,
            files[0].display()
        )));
    }

    let pixel_pitch = meta
        .as_ref()
        .map_or(DEFAULT_MODEL_WIDTH_MM / w as f64, |m| m.pixel_pitch_mm);
    let layer_pitch = meta.as_ref().map_or(DEFAULT_LAYER_PITCH_MM, |m| m.layer_pitch_mm);
    let (t_min, t_max) = meta.as_ref().map_or((0.0, 1.0), |m| (m.t_min, m.t_max));
    let origin = match &meta {
        Some(m) => window_origin_mm(&m.window, w, h, pixel_pitch),
        None => centered_origin(w, h, pixel_pitch),
    };

    let mut touching = 0;
    let frames = decoded
        .into_iter()
        .map(|(_, _, values)| {
            if touches_border(&values, w, h) {
                touching += 1;
            }
            FrameRaster::new(w, h, values, pixel_pitch, origin)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if touching > 0 {
        log::warn!(
            "{touching} frame(s) in {} have white pixels on the image border; the mesh is closed there by padding",
            dir.display()
        );
    }
    let param = ParamInterval::new(t_min, t_max, frames.len())?;
    Ok(assemble(frames, layer_pitch, param)?)
}

/// Millimetre position of pixel (0, 0) for a `w x h` raster of `window`
/// (as produced by [`crate::raster::RasterConfig::grid`]) at `pixel_pitch_mm`.
pub fn window_origin_mm(window: &Window, w: usize, h: usize, pixel_pitch_mm: f64) -> (f64, f64) {
    let unit = pixel_pitch_mm * w as f64 / window.width();
    let (cx, cy) = window.center();
    (
        (cx - 0.5 * window.width()) * unit + 0.5 * pixel_pitch_mm,
        (cy + 0.5 * h as f64 * window.width() / w as f64) * unit - 0.5 * pixel_pitch_mm,
    )
}

/// Origin that centers a `w x h` frame on (0, 0).
pub fn centered_origin(w: usize, h: usize, pitch: f64) -> (f64, f64) {
    (-0.5 * (w as f64 - 1.0) * pitch, 0.5 * (h as f64 - 1.0) * pitch)
}

fn touches_border(values: &[u8], w: usize, h: usize) -> bool {
    let row = |r: usize| values[r * w..(r + 1) * w].iter().any(|&v| v > 0);
    let col = |c: usize| (0..h).any(|r| values[r * w + c] > 0);
    row(0) || row(h - 1) || col(0) || col(w - 1)
}

/// Stacks frames bottom to top.
pub fn assemble(
    frames: Vec<FrameRaster>,
    layer_pitch: f64,
    param: ParamInterval,
) -> Result<VoxelVolume, ModelError> {
    VoxelVolume::new(frames, layer_pitch, param)
}

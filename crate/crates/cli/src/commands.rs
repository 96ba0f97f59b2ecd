//! The pipeline stages behind each subcommand.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;
use statica_core::families::{self, EscapeParams, FlowerParams, PathEvaluator};
use statica_core::mesher::{self, MeshConfig, MeshStatistics};
use statica_core::printcheck::{self, OverhangReport};
use statica_core::raster::{self, ExprBoundary, RasterConfig, Window};
use statica_core::stack::{self, StackMeta};
use statica_core::{exprlang, FrameRaster, ParamInterval};

use crate::config::{Family, JobConfig, DEFAULT_TREE_DEPTH};
use crate::CliError;

/// Overhang threshold used when none is given.
pub const DEFAULT_THRESHOLD_DEG: f64 = 45.0;

/// Margin around the union of all tree frames, as a fraction of its size.
pub const TREE_MARGIN: f64 = 0.1;

/// Frames in millimetres plus what is needed to describe them in `stack.json`.
#[derive(Debug, Clone)]
pub struct Generated {
    pub frames: Vec<FrameRaster>,
    pub window: Window,
    pub param: ParamInterval,
}

fn gen_err(e: impl fmt::Display) -> CliError {
    CliError::Generation(e.to_string())
}

/// Renders every frame of the configured family. `progress(done, total)` is
/// called after each frame.
pub fn generate_frames(cfg: &JobConfig, progress: &dyn Fn(usize, usize)) -> Result<Generated, CliError> {
    let param = cfg.frame_interval();
    let ts: Vec<f64> = param.samples().collect();
    let depth = cfg.tree_depth.unwrap_or(DEFAULT_TREE_DEPTH);

    let window = match (cfg.raster.window, cfg.default_window()) {
        (Some(w), _) | (None, Some(w)) => w,
        (None, None) => {
            let mut all = Vec::new();
            for &t in &ts {
                all.extend(families::pythagorean_tree(depth, t).map_err(gen_err)?);
            }
            raster::fit_window(&all, TREE_MARGIN).ok_or_else(|| gen_err("empty tree"))?
        }
    };
    let rc = RasterConfig::new(cfg.raster.resolution, window, cfg.raster.supersample).map_err(gen_err)?;

    let expr = match (&cfg.family, &cfg.expression) {
        (Family::Expression, Some(src)) => {
            let e = exprlang::parse(src).map_err(gen_err)?;
            Some(exprlang::Compiled::new(&e, &ExprBoundary::variables()).map_err(gen_err)?)
        }
        _ => None,
    };
    let path = match &cfg.path {
        Some(spec) => Some(PathEvaluator::new(spec).map_err(gen_err)?),
        None => None,
    };
    let escape = cfg.escape.unwrap_or_default();

    let mut frames = Vec::with_capacity(ts.len());
    for (i, &t) in ts.iter().enumerate() {
        let frame = match cfg.family {
            Family::PolarFlower => {
                let p = FlowerParams {
                    amplitude: cfg.amplitude.unwrap_or(t),
                    phase: t,
                };
                raster::rasterize_polar(&p, &rc)
            }
            Family::Expression => {
                raster::rasterize_polar(&ExprBoundary::new(expr.as_ref().expect("compiled above"), t), &rc)
            }
            Family::PythagoreanTree => {
                let squares = families::pythagorean_tree(depth, t).map_err(gen_err)?;
                raster::rasterize_regions(&squares, &rc)
            }
            Family::JuliaPath => {
                let c = path.as_ref().expect("validated").point(t).map_err(gen_err)?;
                let p = EscapeParams::new(c, escape.max_iter, escape.escape_radius).map_err(gen_err)?;
                raster::rasterize_escape(&p, &rc)
            }
            Family::Hyperbola => {
                raster::rasterize_hyperbola(t, cfg.half_width.unwrap_or(families::HYPERBOLA_HALF_WIDTH), &rc)
            }
        }
        .map_err(|e| gen_err(format!("frame {i} (t = {t}): {e}")))?;
        frames.push(frame);
        progress(i + 1, ts.len());
    }

    let first = &frames[0];
    let pitch = cfg.scale.model_width_mm / first.width() as f64;
    let origin = stack::window_origin_mm(&window, first.width(), first.height(), pitch);
    let frames = frames
        .into_iter()
        .map(|f| f.with_placement(pitch, origin))
        .collect::<Result<Vec<_>, _>>()
        .map_err(gen_err)?;
    Ok(Generated {
        frames,
        window,
        param,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateSummary {
    pub frames_dir: PathBuf,
    pub frame_count: usize,
    /// Frames were already up to date and not rewritten.
    pub skipped: bool,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl fmt::Display for GenerateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.skipped {
            write!(
                f,
                "{} frames in {} are up to date",
                self.frame_count,
                self.frames_dir.display()
            )
        } else {
            write!(
                f,
                "wrote {} frames to {} in {:.2} s",
                self.frame_count,
                self.frames_dir.display(),
                self.elapsed.as_secs_f64()
            )
        }
    }
}

fn expected_files(cfg: &JobConfig) -> Vec<PathBuf> {
    let dir = cfg.frames_dir();
    (0..cfg.frame_interval().frame_count())
        .map(|i| dir.join(stack::frame_file_name(cfg.name(), i)))
        .collect()
}

/// True when the frame directory already holds this config's frames.
pub fn frames_up_to_date(cfg: &JobConfig) -> bool {
    let dir = cfg.frames_dir();
    let Ok(Some(meta)) = StackMeta::read(&dir) else {
        return false;
    };
    meta.config_hash.as_deref() == Some(cfg.frames_hash().as_str())
        && expected_files(cfg).iter().all(|p| p.is_file())
        && stack::list_png_files(&dir).is_ok_and(|f| f.len() == cfg.frame_interval().frame_count())
}

/// Removes `<name>_<digits>.png` files left by earlier runs.
fn clear_old_frames(dir: &Path, name: &str) -> Result<(), CliError> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Ok(());
    };
    let prefix = format!("{name}_");
    for entry in entries.flatten() {
        let file = entry.file_name();
        let Some(file) = file.to_str() else { continue };
        let is_frame = file
            .strip_prefix(&prefix)
            .and_then(|rest| rest.strip_suffix(".png"))
            .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()));
        if is_frame {
            std::fs::remove_file(entry.path())
                .map_err(|e| gen_err(format!("{}: {e}", entry.path().display())))?;
        }
    }
    Ok(())
}

/// Renders the frames and writes the PNG stack with its `stack.json`.
pub fn cmd_generate(cfg: &JobConfig, progress: &dyn Fn(usize, usize)) -> Result<GenerateSummary, CliError> {
    let start = Instant::now();
    let dir = cfg.frames_dir();
    let generated = generate_frames(cfg, progress)?;
    clear_old_frames(&dir, cfg.name())?;
    let exported = stack::export_png_stack(&generated.frames, &dir, cfg.name()).map_err(gen_err)?;
    let first = &generated.frames[0];
    StackMeta {
        pixel_pitch_mm: first.pixel_pitch(),
        layer_pitch_mm: cfg.scale.layer_pitch_mm,
        window: generated.window,
        t_min: generated.param.t_min(),
        t_max: generated.param.t_max(),
        config_hash: Some(cfg.frames_hash()),
    }
    .write(&dir)
    .map_err(gen_err)?;
    Ok(GenerateSummary {
        frames_dir: dir,
        frame_count: exported.paths.len(),
        skipped: false,
        warnings: exported.warnings,
        elapsed: start.elapsed(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshSummary {
    pub stl: PathBuf,
    pub bytes: usize,
    pub statistics: MeshStatistics,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl fmt::Display for MeshSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "wrote {} ({} bytes) in {:.2} s",
            self.stl.display(),
            self.bytes,
            self.elapsed.as_secs_f64()
        )?;
        write!(f, "{}", StatsDisplay(&self.statistics))
    }
}

struct StatsDisplay<'a>(&'a MeshStatistics);

impl fmt::Display for StatsDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.0;
        writeln!(
            f,
            "vertices {}, triangles {}, boundary edges {}, euler characteristic {}",
            s.vertex_count, s.triangle_count, s.boundary_edge_count, s.euler_characteristic
        )?;
        writeln!(
            f,
            "components {} ({} solid, {} void)",
            s.component_count, s.solid_count, s.void_count
        )?;
        writeln!(
            f,
            "volume {:.3} mm³, surface area {:.3} mm²",
            s.enclosed_volume, s.surface_area
        )?;
        if let Some((lo, hi)) = s.bounding_box {
            writeln!(
                f,
                "bounding box [{:.3}, {:.3}, {:.3}] to [{:.3}, {:.3}, {:.3}] mm",
                lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]
            )?;
        }
        write!(f, "watertight: {}", if s.watertight { "yes" } else { "no" })
    }
}

fn mesh_err(stage: &str) -> impl Fn(&dyn fmt::Display) -> CliError + '_ {
    move |e| CliError::Meshing(format!("{stage}: {e}"))
}

/// Imports a frame directory, extracts the surface, sets it on z = 0 and
/// writes binary STL.
pub fn cmd_mesh(
    dir: &Path,
    mesh: &MeshConfig,
    strict_alpha: bool,
    out: &Path,
) -> Result<MeshSummary, CliError> {
    let start = Instant::now();
    let volume = stack::import_png_stack(dir, strict_alpha).map_err(|e| mesh_err("import")(&e))?;
    let mut m = mesher::extract_isosurface(&volume, mesh).map_err(|e| mesh_err("extract")(&e))?;
    if let Some((lo, _)) = m.bounding_box() {
        m = m.translated([0.0, 0.0, -lo[2]]);
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| mesh_err("export")(&format!("{}: {e}", parent.display())))?;
    }
    let bytes = mesher::export_stl(&m, out).map_err(|e| mesh_err("export")(&e))?;
    Ok(MeshSummary {
        stl: out.to_path_buf(),
        bytes,
        statistics: mesher::mesh_statistics(&m),
        elapsed: start.elapsed(),
    })
}

/// Printability report for an STL file.
#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub statistics: MeshStatistics,
    /// Absent when the mesh is not watertight.
    pub overhang: Option<OverhangReport>,
    pub warnings: Vec<String>,
}

impl CheckSummary {
    pub fn watertight(&self) -> bool {
        self.statistics.watertight
    }
}

impl CheckSummary {
    /// Everything beyond the mesh statistics.
    fn findings(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.statistics.watertight {
            write!(
                f,
                "\nnot watertight: {} boundary edges, {} non-manifold edges, {} misoriented edges",
                self.statistics.boundary_edge_count,
                self.statistics.nonmanifold_edge_count,
                self.statistics.misoriented_edge_count
            )?;
        }
        if let Some(o) = &self.overhang {
            write!(
                f,
                "\nmax overhang {:.1}° from vertical; {} triangles ({:.3} mm²) beyond {}°",
                o.max_overhang_deg, o.flagged_triangles, o.flagged_area_mm2, o.threshold_deg
            )?;
        }
        for w in &self.warnings {
            write!(f, "\nwarning: {w}")?;
        }
        Ok(())
    }
}

impl fmt::Display for CheckSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", StatsDisplay(&self.statistics))?;
        self.findings(f)
    }
}

/// Parses an STL and reports topology, overhangs and plate contact. Only an
/// unreadable file is an error; the caller decides what a leaky mesh means.
pub fn cmd_check(stl: &Path, threshold_deg: f64) -> Result<CheckSummary, CliError> {
    if !(threshold_deg > 0.0 && threshold_deg < 90.0) {
        return Err(CliError::Config(format!(
            "--threshold-deg must lie strictly between 0 and 90, got {threshold_deg}"
        )));
    }
    let m = mesher::parse_stl(stl).map_err(|e| CliError::Validation(format!("{}: {e}", stl.display())))?;
    let statistics = mesher::mesh_statistics(&m);
    let mut warnings = Vec::new();
    let overhang = if statistics.watertight && !m.is_empty() {
        let report = printcheck::overhang_report(&m, threshold_deg)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if report.flagged_triangles > 0 {
            warnings.push(format!(
                "{} triangles ({:.3} mm²) overhang more than {threshold_deg}° and may need support",
                report.flagged_triangles, report.flagged_area_mm2
            ));
        }
        Some(report)
    } else {
        None
    };
    if !m.is_empty() {
        let placement = printcheck::place_on_plate(&m).map_err(|e| CliError::Validation(e.to_string()))?;
        if placement.shift_z.abs() > printcheck::PLATE_TOLERANCE_MM {
            warnings.push(format!(
                "lowest point is at z = {:.3} mm, not on the build plate",
                -placement.shift_z
            ));
        }
        warnings.extend(placement.warning);
    } else {
        warnings.push("mesh has no triangles".into());
    }
    Ok(CheckSummary {
        statistics,
        overhang,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub generate: GenerateSummary,
    pub mesh: MeshSummary,
    pub check: CheckSummary,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.generate)?;
        write!(f, "{}", self.mesh)?;
        self.check.findings(f)
    }
}

/// Generate, mesh and check. Frames are reused when the directory already
/// holds frames for an identical configuration.
pub fn cmd_run(cfg: &JobConfig, progress: &dyn Fn(f64)) -> Result<RunSummary, CliError> {
    let generate = if frames_up_to_date(cfg) {
        log::info!(
            "frames in {} match the config, skipping generation",
            cfg.frames_dir().display()
        );
        GenerateSummary {
            frames_dir: cfg.frames_dir(),
            frame_count: cfg.frame_interval().frame_count(),
            skipped: true,
            warnings: Vec::new(),
            elapsed: Duration::ZERO,
        }
    } else {
        cmd_generate(cfg, &|done, total| progress(0.7 * done as f64 / total as f64))?
    };
    progress(0.7);
    let mesh = cmd_mesh(&cfg.frames_dir(), &cfg.mesh, false, &cfg.stl_path())?;
    progress(0.95);
    let check = cmd_check(&cfg.stl_path(), DEFAULT_THRESHOLD_DEG)?;
    if !check.watertight() {
        return Err(CliError::Validation(format!(
            "{} is not watertight ({} boundary edges)",
            cfg.stl_path().display(),
            check.statistics.boundary_edge_count
        )));
    }
    progress(1.0);
    Ok(RunSummary {
        generate,
        mesh,
        check,
    })
}

//! Job configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statica_core::exprlang;
use statica_core::mesher::MeshConfig;
use statica_core::raster::{RasterConfig, Window, FLOWER_WINDOW, HYPERBOLA_WINDOW, JULIA_WINDOW};
use statica_core::stack::{DEFAULT_LAYER_PITCH_MM, DEFAULT_MODEL_WIDTH_MM};
use statica_core::{ParamInterval, PathSpec};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    PolarFlower,
    PythagoreanTree,
    JuliaPath,
    Hyperbola,
    Expression,
}

impl Family {
    pub fn default_name(self) -> &'static str {
        match self {
            Family::PolarFlower => "flowers",
            Family::PythagoreanTree => "tree",
            Family::JuliaPath => "julia",
            Family::Hyperbola => "hyperbola",
            Family::Expression => "expression",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterSection {
    pub resolution: usize,
    /// Defaults per family; trees fit the window to every frame at once.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    #[serde(default = "default_supersample")]
    pub supersample: usize,
}

fn default_supersample() -> usize {
    RasterConfig::DEFAULT_SUPERSAMPLE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleConfig {
    #[serde(default = "default_width")]
    pub model_width_mm: f64,
    #[serde(default = "default_layer")]
    pub layer_pitch_mm: f64,
}

fn default_width() -> f64 {
    DEFAULT_MODEL_WIDTH_MM
}

fn default_layer() -> f64 {
    DEFAULT_LAYER_PITCH_MM
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            model_width_mm: DEFAULT_MODEL_WIDTH_MM,
            layer_pitch_mm: DEFAULT_LAYER_PITCH_MM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Frame directory; defaults to `out/<name>/frames`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_dir: Option<PathBuf>,
    /// Model path; defaults to `out/<name>/<name>.stl`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stl: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscapeSection {
    #[serde(default = "default_max_iter")]
    pub max_iter: u32,
    #[serde(default = "default_radius")]
    pub escape_radius: f64,
}

fn default_max_iter() -> u32 {
    statica_core::families::EscapeParams::DEFAULT_MAX_ITER
}

fn default_radius() -> f64 {
    statica_core::families::EscapeParams::DEFAULT_RADIUS
}

impl Default for EscapeSection {
    fn default() -> Self {
        Self {
            max_iter: default_max_iter(),
            escape_radius: default_radius(),
        }
    }
}

/// One end-to-end job: which family, how to sample and render it, how to mesh it.
///
/// `param` is required except for `julia-path`, whose frames follow the
/// path's own (trimmed) interval. For `pythagorean-tree` the parameter is
/// the branching angle in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<ParamInterval>,
    pub raster: RasterSection,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub scale: ScaleConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Fixed flower amplitude; by default the amplitude follows `t`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree_depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escape: Option<EscapeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    /// Polar boundary `r(theta, t)` for the `expression` family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
}

pub const DEFAULT_TREE_DEPTH: u32 = 9;

fn config_error(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {message}"))
}

impl JobConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        Self::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, CliError> {
        if !value.is_object() {
            return Err(CliError::Config("config must be a JSON object".into()));
        }
        for key in ["family", "raster"] {
            if value.get(key).is_none() {
                return Err(config_error(key, "missing required key"));
            }
        }
        let cfg: JobConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            config_error(if path == "." { "config" } else { &path }, e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks family-specific keys and that every expression parses.
    pub fn validate(&self) -> Result<(), CliError> {
        let needs_param = self.family != Family::JuliaPath;
        match (needs_param, &self.param) {
            (true, None) => return Err(config_error("param", "missing required key")),
            (false, Some(_)) => {
                return Err(config_error(
                    "param",
                    "julia-path frames follow path.t_range; remove param",
                ))
            }
            _ => {}
        }
        let unexpected = |key: &str, present: bool| {
            if present {
                Err(config_error(
                    key,
                    format!("not used by the {:?} family", self.family),
                ))
            } else {
                Ok(())
            }
        };
        match self.family {
            Family::PolarFlower => {
                if let Some(a) = self.amplitude {
                    if !a.is_finite() {
                        return Err(config_error("amplitude", "must be finite"));
                    }
                }
            }
            Family::PythagoreanTree => {
                let p = self.param.expect("checked");
                if !(p.t_min() > 0.0 && p.t_max() <= 45.0) {
                    return Err(config_error("param", "tree angles must lie in (0, 45] degrees"));
                }
                if self.tree_depth.unwrap_or(DEFAULT_TREE_DEPTH) > statica_core::families::MAX_TREE_DEPTH {
                    return Err(config_error(
                        "tree_depth",
                        format!("at most {}", statica_core::families::MAX_TREE_DEPTH),
                    ));
                }
            }
            Family::JuliaPath => {
                if self.path.is_none() {
                    return Err(config_error("path", "missing required key"));
                }
                let e = self.escape.unwrap_or_default();
                statica_core::families::EscapeParams::new(Default::default(), e.max_iter, e.escape_radius)
                    .map_err(|err| config_error("escape", err))?;
            }
            Family::Hyperbola => {
                if let Some(w) = self.half_width {
                    if w.is_nan() || w <= 0.0 {
                        return Err(config_error("half_width", "must be positive"));
                    }
                }
            }
            Family::Expression => {
                let src = self
                    .expression
                    .as_deref()
                    .ok_or_else(|| config_error("expression", "missing required key"))?;
                let e = exprlang::parse(src).map_err(|err| config_error("expression", err))?;
                exprlang::Compiled::new(&e, &["theta", "t"])
                    .map_err(|err| config_error("expression", err))?;
            }
        }
        unexpected(
            "amplitude",
            self.amplitude.is_some() && self.family != Family::PolarFlower,
        )?;
        unexpected(
            "tree_depth",
            self.tree_depth.is_some() && self.family != Family::PythagoreanTree,
        )?;
        unexpected("path", self.path.is_some() && self.family != Family::JuliaPath)?;
        unexpected(
            "escape",
            self.escape.is_some() && self.family != Family::JuliaPath,
        )?;
        unexpected(
            "half_width",
            self.half_width.is_some() && self.family != Family::Hyperbola,
        )?;
        unexpected(
            "expression",
            self.expression.is_some() && self.family != Family::Expression,
        )?;

        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) {
                return Err(config_error("name", "must be a non-empty file-name stem"));
            }
        }
        let s = &self.scale;
        if !(s.model_width_mm > 0.0 && s.model_width_mm.is_finite()) {
            return Err(config_error("scale.model_width_mm", "must be positive"));
        }
        if !(s.layer_pitch_mm > 0.0 && s.layer_pitch_mm.is_finite()) {
            return Err(config_error("scale.layer_pitch_mm", "must be positive"));
        }
        if let Some(w) = self.raster.window {
            RasterConfig::new(self.raster.resolution, w, self.raster.supersample)
                .map_err(|e| config_error("raster", e))?;
        } else {
            RasterConfig::new(self.raster.resolution, JULIA_WINDOW, self.raster.supersample)
                .map_err(|e| config_error("raster", e))?;
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.family.default_name())
    }

    /// The interval frames are generated over.
    pub fn frame_interval(&self) -> ParamInterval {
        match (&self.param, &self.path) {
            (Some(p), _) => *p,
            (None, Some(path)) => path.sampled_range(),
            (None, None) => unreachable!("validated"),
        }
    }

    /// Overrides the number of frames.
    pub fn set_frame_count(&mut self, n: usize) -> Result<(), CliError> {
        let reinterval = |p: &ParamInterval| {
            ParamInterval::new(p.t_min(), p.t_max(), n).map_err(|e| config_error("frames", e))
        };
        if let Some(p) = &self.param {
            self.param = Some(reinterval(p)?);
        } else if let Some(path) = &mut self.path {
            path.t_range = reinterval(&path.t_range)?;
        }
        Ok(())
    }

    /// Family default window, used when the config gives none. Trees return
    /// `None` because their window depends on the frames.
    pub fn default_window(&self) -> Option<Window> {
        match self.family {
            Family::PolarFlower | Family::Expression => Some(FLOWER_WINDOW),
            Family::JuliaPath => Some(JULIA_WINDOW),
            Family::Hyperbola => Some(HYPERBOLA_WINDOW),
            Family::PythagoreanTree => None,
        }
    }

    pub fn frames_dir(&self) -> PathBuf {
        self.output
            .frames_dir
            .clone()
            .unwrap_or_else(|| Path::new("out").join(self.name()).join("frames"))
    }

    pub fn stl_path(&self) -> PathBuf {
        self.output.stl.clone().unwrap_or_else(|| {
            Path::new("out")
                .join(self.name())
                .join(format!("{}.stl", self.name()))
        })
    }

    /// Sends both outputs into `dir`.
    pub fn redirect_output(&mut self, dir: &Path) {
        self.output.frames_dir = Some(dir.join("frames"));
        self.output.stl = Some(dir.join(format!("{}.stl", self.name())));
    }

    /// Hash of everything that determines the frames.
    pub fn frames_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("object");
        obj.remove("output");
        obj.remove("mesh");
        hash_value(&v)
    }

    /// Hash of everything that determines the model, output paths excluded.
    pub fn job_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("output");
        hash_value(&v)
    }
}

fn hash_value(v: &serde_json::Value) -> String {
    let text = serde_json::to_string(v).expect("value serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLOWERS: &str = r#"{
        "family": "polar-flower",
        "param": {"t_min": 0.2, "t_max": 1.0, "frame_count": 161},
        "raster": {"resolution": 512}
    }"#;

    #[test]
    fn minimal_flower_config() {
        let c = JobConfig::from_json(FLOWERS).unwrap();
        assert_eq!(c.name(), "flowers");
        assert_eq!(c.mesh, MeshConfig::default());
        assert_eq!(c.raster.supersample, 4);
        assert_eq!(c.frames_dir(), Path::new("out/flowers/frames"));
    }

    #[test]
    fn missing_family_is_named() {
        let err = JobConfig::from_json(r#"{"raster": {"resolution": 64}}"#).unwrap_err();
        assert!(err.to_string().contains("family"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn nested_errors_carry_the_key_path() {
        let bad = FLOWERS.replace("\"resolution\": 512", "\"resolution\": \"big\"");
        let err = JobConfig::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("raster.resolution"), "{err}");
        let bad = FLOWERS.replace("\"frame_count\": 161", "\"frame_count\": 1");
        assert!(JobConfig::from_json(&bad)
            .unwrap_err()
            .to_string()
            .contains("param"));
    }

    #[test]
    fn family_keys_are_checked() {
        let no_path = r#"{"family":"julia-path","raster":{"resolution":64}}"#;
        assert!(JobConfig::from_json(no_path)
            .unwrap_err()
            .to_string()
            .starts_with("path"));
        let bad_expr = r#"{"family":"expression","expression":"2 + cos(",
            "param":{"t_min":0,"t_max":1,"frame_count":2},"raster":{"resolution":64}}"#;
        let err = JobConfig::from_json(bad_expr).unwrap_err().to_string();
        assert!(err.starts_with("expression") && err.contains("byte 8"), "{err}");
        let stray = FLOWERS.replace("\"family\"", "\"tree_depth\": 3, \"family\"");
        assert!(JobConfig::from_json(&stray)
            .unwrap_err()
            .to_string()
            .contains("tree_depth"));
    }

    #[test]
    fn malformed_json_is_an_error() {
        for text in [
            "",
            "{",
            "[]",
            "null",
            "{\"family\": 3}",
            "{\"family\":\"polar-flower\",\"raster\":{}}",
        ] {
            assert!(JobConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn hashes_ignore_outputs() {
        let a = JobConfig::from_json(FLOWERS).unwrap();
        let mut b = a.clone();
        b.redirect_output(Path::new("/tmp/x"));
        assert_eq!(a.frames_hash(), b.frames_hash());
        assert_eq!(a.job_hash(), b.job_hash());
        b.mesh.level = 3;
        assert_eq!(a.frames_hash(), b.frames_hash());
        assert_ne!(a.job_hash(), b.job_hash());
    }

    #[test]
    fn frame_override() {
        let mut c = JobConfig::from_json(FLOWERS).unwrap();
        c.set_frame_count(11).unwrap();
        assert_eq!(c.frame_interval().frame_count(), 11);
        assert!(c.set_frame_count(1).is_err());
    }
}

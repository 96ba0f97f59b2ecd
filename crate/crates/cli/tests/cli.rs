use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use statica::config::JobConfig;
use statica_core::families::PathEvaluator;
use statica_core::mesher::{encode_stl, parse_stl};
use statica_core::printcheck::fixtures;
use statica_core::stack::StackMeta;
use statica_core::TriangleMesh;

fn statica(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_statica"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../examples")
}

/// A shipped example with its outputs moved into `dir` and `edit` applied.
fn example_config(name: &str, dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value =
        serde_json::from_str(&fs::read_to_string(examples().join(format!("{name}.json"))).unwrap()).unwrap();
    v["output"] = json!({
        "frames_dir": dir.join("frames"),
        "stl": dir.join("model.stl"),
    });
    edit(&mut v);
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn png_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    names
}

#[test]
fn every_shipped_example_is_a_valid_config() {
    for name in [
        "flowers",
        "tree",
        "cardioid",
        "trimmed-cardioid",
        "period-2",
        "hyperbola",
    ] {
        let cfg = JobConfig::load(&examples().join(format!("{name}.json"))).unwrap();
        assert_eq!(cfg.name(), name);
    }
}

#[test]
fn generate_names_frames_like_the_tutorial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config("flowers", dir.path(), |v| v["raster"]["resolution"] = json!(32));
    let out = statica(&["generate", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    assert!(text(&out).contains("161 frames"));
    let names = png_names(&dir.path().join("frames"));
    assert_eq!(names.len(), 161);
    assert_eq!(names[0], "flowers_1000.png");
    assert_eq!(names[160], "flowers_1160.png");
    let meta = StackMeta::read(&dir.path().join("frames")).unwrap().unwrap();
    assert_eq!((meta.t_min, meta.t_max), (0.2, 1.0));
    assert!((meta.pixel_pitch_mm - 80.0 / 32.0).abs() < 1e-12);
    assert_eq!(meta.layer_pitch_mm, 0.2);
}

#[test]
fn frames_flag_overrides_the_count_and_clears_old_frames() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config("flowers", dir.path(), |v| v["raster"]["resolution"] = json!(16));
    let cfg = cfg.to_str().unwrap();
    assert!(statica(&["generate", "--config", cfg, "--frames", "9"])
        .status
        .success());
    assert!(statica(&["generate", "--config", cfg, "--frames", "5"])
        .status
        .success());
    assert_eq!(png_names(&dir.path().join("frames")).len(), 5);
}

#[test]
fn tree_stack_has_one_frame_per_angle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config("tree", dir.path(), |v| v["raster"]["resolution"] = json!(48));
    let out = statica(&["generate", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    assert_eq!(png_names(&dir.path().join("frames")).len(), 76);
}

#[test]
fn trimmed_cardioid_starts_at_the_implosion_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config("trimmed-cardioid", dir.path(), |v| {
        v["raster"]["resolution"] = json!(16);
        v["path"]["t_range"]["frame_count"] = json!(4);
    });
    let job = JobConfig::load(&cfg).unwrap();
    let first = job.frame_interval().sample(0);
    assert!((first - 0.075).abs() < 1e-15);
    let c = PathEvaluator::new(job.path.as_ref().unwrap())
        .unwrap()
        .point(first)
        .unwrap();
    assert!((c.re - 0.251402).abs() < 5e-7, "{c}");
    assert!((c.im - 0.000105321).abs() < 5e-10, "{c}");

    let out = statica(&["generate", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    let meta = StackMeta::read(&dir.path().join("frames")).unwrap().unwrap();
    assert_eq!(meta.t_min, first);
}

#[test]
fn strict_alpha_names_the_offending_file() {
    let dir = tempfile::tempdir().unwrap();
    let gray = image::GrayImage::from_pixel(8, 8, image::Luma([255]));
    gray.save(dir.path().join("f_1000.png")).unwrap();
    let rgba = image::RgbaImage::from_pixel(8, 8, image::Rgba([255, 255, 255, 128]));
    rgba.save(dir.path().join("f_1001.png")).unwrap();
    let stl = dir.path().join("out.stl");
    let args = |strict: bool| {
        let mut a = vec![
            "mesh",
            "--frames",
            dir.path().to_str().unwrap(),
            "--out",
            stl.to_str().unwrap(),
        ];
        if strict {
            a.push("--strict-alpha");
        }
        statica(&a)
    };
    let out = args(true);
    assert_eq!(out.status.code(), Some(3), "{}", text(&out));
    assert!(
        text(&out).contains("f_1001.png") && text(&out).contains("alpha"),
        "{}",
        text(&out)
    );
    let out = args(false);
    assert!(out.status.success(), "{}", text(&out));
    assert!(text(&out).contains("boundary edges 0"));
}

#[test]
fn mesh_errors_carry_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = statica(&["mesh", "--frames", dir.path().to_str().unwrap(), "--out", "x.stl"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out).contains("mesh: import:"), "{}", text(&out));
    let out = statica(&["mesh", "--frames", ".", "--step", "3", "--out", "x.stl"]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out));
}

fn write_stl(dir: &Path, name: &str, m: &TriangleMesh) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, encode_stl(m)).unwrap();
    p
}

#[test]
fn check_fails_on_an_open_surface() {
    let dir = tempfile::tempdir().unwrap();
    let tri = TriangleMesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
    let p = write_stl(dir.path(), "tri.stl", &tri);
    let out = statica(&["check", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(text(&out).contains("3 boundary edges"), "{}", text(&out));
}

#[test]
fn check_warns_about_overhangs_but_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cone = fixtures::overhang_frustum(50.0, 10.0, 5.0, 96);
    let p = write_stl(dir.path(), "cone.stl", &cone);
    let out = statica(&["check", p.to_str().unwrap(), "--threshold-deg", "45"]);
    assert!(out.status.success(), "{}", text(&out));
    assert!(
        text(&out).contains("warning:") && text(&out).contains("overhang more than 45"),
        "{}",
        text(&out)
    );
    let out = statica(&["check", p.to_str().unwrap(), "--threshold-deg", "60"]);
    assert!(out.status.success());
    assert!(!text(&out).contains("overhang more than"), "{}", text(&out));

    let out = statica(&["check", p.to_str().unwrap(), "--json"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let max = report["overhang"]["max_overhang_deg"].as_f64().unwrap();
    // facets sit at r cos(pi/n), which lowers the slope slightly
    assert!((max - 50.0).abs() < 0.05, "{max}");
    assert_eq!(report["statistics"]["watertight"], json!(true));
}

#[test]
fn check_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.stl");
    fs::write(&p, [0u8; 100]).unwrap();
    let out = statica(&["check", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(text(&out).contains("byte"), "{}", text(&out));
}

#[test]
fn run_is_idempotent_and_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let small = |v: &mut Value| {
        v["raster"]["resolution"] = json!(48);
        v["param"]["frame_count"] = json!(41);
    };
    let cfg_a = example_config("flowers", a.path(), small);
    let cfg_b = example_config("flowers", b.path(), small);

    let first = statica(&["run", "--config", cfg_a.to_str().unwrap()]);
    assert!(first.status.success(), "{}", text(&first));
    let stl_a = fs::read(a.path().join("model.stl")).unwrap();
    let frame = fs::read(a.path().join("frames/flowers_1020.png")).unwrap();
    let stamp = fs::metadata(a.path().join("frames/flowers_1020.png"))
        .unwrap()
        .modified()
        .unwrap();

    let again = statica(&["run", "--config", cfg_a.to_str().unwrap()]);
    assert!(again.status.success());
    assert!(text(&again).contains("up to date"), "{}", text(&again));
    assert_eq!(
        fs::metadata(a.path().join("frames/flowers_1020.png"))
            .unwrap()
            .modified()
            .unwrap(),
        stamp
    );
    assert_eq!(fs::read(a.path().join("model.stl")).unwrap(), stl_a);

    assert!(statica(&["run", "--config", cfg_b.to_str().unwrap()])
        .status
        .success());
    assert_eq!(fs::read(b.path().join("model.stl")).unwrap(), stl_a);
    assert_eq!(fs::read(b.path().join("frames/flowers_1020.png")).unwrap(), frame);

    let m = parse_stl(a.path().join("model.stl")).unwrap();
    let (lo, _) = m.bounding_box().unwrap();
    assert_eq!(lo[2], 0.0);
}

#[test]
fn changing_the_config_regenerates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config("flowers", dir.path(), |v| {
        v["raster"]["resolution"] = json!(16);
        v["param"]["frame_count"] = json!(5);
    });
    assert!(statica(&["run", "--config", cfg.to_str().unwrap()])
        .status
        .success());
    let cfg = example_config("flowers", dir.path(), |v| {
        v["raster"]["resolution"] = json!(16);
        v["param"]["frame_count"] = json!(5);
        v["amplitude"] = json!(0.3);
    });
    let out = statica(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(!text(&out).contains("up to date"), "{}", text(&out));
    // a mesh-only change keeps the frames
    let cfg = example_config("flowers", dir.path(), |v| {
        v["raster"]["resolution"] = json!(16);
        v["param"]["frame_count"] = json!(5);
        v["amplitude"] = json!(0.3);
        v["mesh"]["level"] = json!(200);
    });
    let out = statica(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(text(&out).contains("up to date"), "{}", text(&out));
}

#[test]
fn cardioid_prints_as_one_piece() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config("cardioid", dir.path(), |v| {
        v["raster"]["resolution"] = json!(128);
        v["path"]["t_range"]["frame_count"] = json!(41);
    });
    let out = statica(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    let report = statica(&["check", dir.path().join("model.stl").to_str().unwrap(), "--json"]);
    let report: Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(report["statistics"]["solid_count"], json!(1));
    assert_eq!(report["statistics"]["boundary_edge_count"], json!(0));
}

#[test]
fn missing_family_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    fs::write(&p, r#"{"raster": {"resolution": 64}}"#).unwrap();
    let out = statica(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out).contains("family"), "{}", text(&out));

    fs::write(&p, "{ not json").unwrap();
    assert_eq!(
        statica(&["generate", "--config", p.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    let missing = dir.path().join("nope.json");
    assert_eq!(
        statica(&["run", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn expression_family_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    let cfg = json!({
        "family": "expression",
        "expression": "1 + t * cos(3 * theta)",
        "param": {"t_min": 0.0, "t_max": 0.5, "frame_count": 6},
        "raster": {"resolution": 32},
        "output": {"frames_dir": dir.path().join("frames"), "stl": dir.path().join("m.stl")},
    });
    fs::write(&p, cfg.to_string()).unwrap();
    let out = statica(&["run", "--config", p.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    assert_eq!(png_names(&dir.path().join("frames"))[0], "expression_1000.png");
}

#[test]
fn coarser_steps_give_fewer_triangles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config("flowers", dir.path(), |v| {
        v["raster"]["resolution"] = json!(128);
        v["param"]["frame_count"] = json!(81);
    });
    assert!(statica(&["generate", "--config", cfg.to_str().unwrap()])
        .status
        .success());
    let frames = dir.path().join("frames");
    let count = |step: &str| {
        let out_path = dir.path().join(format!("s{step}.stl"));
        let out = statica(&[
            "mesh",
            "--frames",
            frames.to_str().unwrap(),
            "--step",
            step,
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", text(&out));
        let m = parse_stl(&out_path).unwrap();
        assert!(statica_core::mesher::mesh_statistics(&m).watertight);
        m.triangles().len()
    };
    let counts: Vec<usize> = ["1", "2", "4", "16"].iter().map(|s| count(s)).collect();
    assert!(counts.windows(2).all(|w| w[1] < w[0]), "{counts:?}");
    // caps and side walls swept around the outline do not thin out with z
    // subsampling, so step 4 keeps well over a third of the triangles
    let ratio = counts[2] as f64 / counts[0] as f64;
    eprintln!("step 4 / step 1 triangle ratio {ratio:.3}");
    assert!(ratio < 0.9, "{ratio}");
}

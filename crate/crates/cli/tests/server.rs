use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::Engine;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use statica::config::JobConfig;
use statica::server::{router, AppState};
use statica_core::families::{cardioid_path, mandelbrot_membership, PathEvaluator};
use statica_core::model::PathSpec;
use tower::ServiceExt;

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, uri: &str, body: &Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, bytes) = call(app, req).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn app(dir: &std::path::Path) -> Router {
    router(AppState::new(dir.to_path_buf()))
}

#[tokio::test]
async fn mandelbrot_tile_matches_membership() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let uri = "/api/mandelbrot?x_min=-2&x_max=1&y_min=-1.5&y_max=1.5&px=256&max_iter=200";
    let (status, png) = get(&app, uri).await;
    assert_eq!(status, StatusCode::OK);
    let img = image::load_from_memory(&png).unwrap().to_luma8();
    assert_eq!(img.dimensions(), (256, 256));
    let pitch = 3.0 / 256.0;
    let pixel = |x: f64, y: f64| {
        let col = ((x + 2.0) / pitch - 0.5).round() as u32;
        let row = ((1.5 - y) / pitch - 0.5).round() as u32;
        img.get_pixel(col.min(255), row.min(255))[0]
    };
    assert_eq!(pixel(0.0, 0.0), 255);
    assert_eq!(pixel(1.0, 0.0), 0);
    // a coarse pass over the tile against the membership oracle
    let mut disagree = 0;
    for row in (0..256).step_by(8) {
        for col in (0..256).step_by(8) {
            let c = num_complex::Complex64::new(
                -2.0 + (col as f64 + 0.5) * pitch,
                1.5 - (row as f64 + 0.5) * pitch,
            );
            let want = if mandelbrot_membership(c, 200) { 255 } else { 0 };
            disagree += usize::from(img.get_pixel(col, row)[0] != want);
        }
    }
    assert_eq!(disagree, 0);

    let (_, again) = get(&app, uri).await;
    assert_eq!(again, png);
}

#[tokio::test]
async fn mandelbrot_rejects_bad_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    for uri in [
        "/api/mandelbrot?px=0",
        "/api/mandelbrot?px=4096",
        "/api/mandelbrot?px=abc",
        "/api/mandelbrot?x_min=1&x_max=-1",
        "/api/mandelbrot?max_iter=0",
    ] {
        let (status, _) = get(&app, uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
    }
}

#[tokio::test]
async fn preview_follows_the_cardioid() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let path = json!({"kind": "cardioid-boundary", "t_range": {"t_min": 0, "t_max": std::f64::consts::PI, "frame_count": 2}});
    let (status, body) = post(&app, "/api/path/preview", &json!({"path": path, "samples": 3})).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let frames = body["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 3);
    let expect = [(0.25, 0.0), (0.25, 0.5), (-0.75, 0.0)];
    let spec: PathSpec = serde_json::from_value(path).unwrap();
    let eval = PathEvaluator::new(&spec).unwrap();
    for (f, (re, im)) in frames.iter().zip(expect) {
        let (c_re, c_im) = (f["c_re"].as_f64().unwrap(), f["c_im"].as_f64().unwrap());
        assert!((c_re - re).abs() < 1e-9 && (c_im - im).abs() < 1e-9, "{f}");
        let t = f["t"].as_f64().unwrap();
        let c = eval.point(t).unwrap();
        assert!((c.re - c_re).abs() < 1e-12 && (c.im - c_im).abs() < 1e-12);
        assert_eq!(cardioid_path(t), c);
        let png = base64::engine::general_purpose::STANDARD
            .decode(f["png_base64"].as_str().unwrap())
            .unwrap();
        assert_eq!(image::load_from_memory(&png).unwrap().width(), 192);
    }
}

#[tokio::test]
async fn preview_of_a_constant_path_repeats_the_frame() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let req = json!({
        "path": {"kind": "polyline", "points": [[-1.0, 0.0], [-1.0, 0.0]], "t_range": {"t_min": 0, "t_max": 1, "frame_count": 2}},
        "samples": 2,
        "raster": {"resolution": 32, "window": {"x_min": -2, "x_max": 2, "y_min": -2, "y_max": 2}},
    });
    let (status, body) = post(&app, "/api/path/preview", &req).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let f = body["frames"].as_array().unwrap();
    assert_eq!(f[0]["png_base64"], f[1]["png_base64"]);
}

#[tokio::test]
async fn preview_reports_expression_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let bad = json!({
        "path": {"kind": "expression", "x": "cos(", "y": "t", "t_range": {"t_min": 0, "t_max": 1, "frame_count": 2}},
        "samples": 4,
    });
    let (status, body) = post(&app, "/api/path/preview", &bad).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("byte 4"), "{body}");

    let too_many = json!({
        "path": {"kind": "cardioid-boundary", "t_range": {"t_min": 0, "t_max": 1, "frame_count": 2}},
        "samples": 65,
    });
    let (status, _) = post(&app, "/api/path/preview", &too_many).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

fn small_flower(dir: &std::path::Path) -> Value {
    json!({
        "family": "polar-flower",
        "name": "flowers",
        "param": {"t_min": 0.2, "t_max": 1.0, "frame_count": 21},
        "raster": {"resolution": 48},
        "output": {"frames_dir": dir.join("frames"), "stl": dir.join("flowers.stl")},
    })
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn jobs_run_the_cli_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir.path().join("work"));

    let (status, _) = get(&app, "/api/jobs/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = post(&app, "/api/jobs", &json!({"family": "polar-flower"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let config = small_flower(&dir.path().join("ignored"));
    let (status, body) = post(&app, "/api/jobs", &config).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    let id = body["job_id"].as_str().unwrap().to_string();

    // same model with different output paths is the same job
    let (status, again) = post(&app, "/api/jobs", &small_flower(&dir.path().join("elsewhere"))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(again["job_id"], json!(id));

    let start = Instant::now();
    let mut last_progress = 0.0;
    let status = loop {
        let (code, body) = get(&app, &format!("/api/jobs/{id}")).await;
        assert_eq!(code, StatusCode::OK);
        let s: Value = serde_json::from_slice(&body).unwrap();
        let progress = s["progress"].as_f64().unwrap();
        assert!(progress >= last_progress);
        last_progress = progress;
        match s["status"].as_str().unwrap() {
            "done" | "failed" => break s,
            "queued" | "running" => {}
            other => panic!("unexpected status {other}"),
        }
        assert!(start.elapsed() < Duration::from_secs(120), "job did not finish");
        tokio::time::sleep(Duration::from_millis(50)).await;
    };
    assert_eq!(status["status"], json!("done"), "{status}");
    assert_eq!(status["progress"], json!(1.0));
    let url = status["stl_url"].as_str().unwrap();
    let (code, served) = get(&app, url).await;
    assert_eq!(code, StatusCode::OK);

    // the CLI produces the same bytes for the same config
    let local = dir.path().join("local");
    let cfg = JobConfig::from_value(small_flower(&local)).unwrap();
    tokio::task::spawn_blocking(move || statica::cmd_run(&cfg, &|_| {}).unwrap())
        .await
        .unwrap();
    assert_eq!(served, std::fs::read(local.join("flowers.stl")).unwrap());
}

#[tokio::test]
async fn model_of_unknown_job_is_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, _) = get(&app, "/api/jobs/abc/model.stl").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cors_is_enabled() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let req = Request::get("/api/mandelbrot?px=16")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}

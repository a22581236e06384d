use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy")
}

fn kpcacam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpcacam"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn kpcacam")
}

fn fixtures_arg() -> String {
    format!("fixtures:{}", toy().display())
}

fn run_ok(args: &[&str]) -> Output {
    let out = kpcacam(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn cam_writes_heatmap_and_overlay_per_image() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    run_ok(&["cam", "--backend", &fixtures_arg(), "--method", "eigen", "--out", out]);
    let names: Vec<String> = std::fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.iter().filter(|n| n.ends_with(".cam.npy")).count(), 12);
    assert_eq!(names.iter().filter(|n| n.ends_with(".cam.png")).count(), 12);
    let r = report(tmp.path());
    assert_eq!(r["header"]["kind"], "cam");
    assert_eq!(r["summary"]["written"], 12);
    let cam = kpcacam::npy::load_heatmap(tmp.path().join("toy_000.cam.npy")).unwrap();
    assert_eq!(cam.dim(), (32, 32));
    assert_eq!(cam.max(), 1.0);
}

#[test]
fn kpca_requires_kernel() {
    let tmp = TempDir::new().unwrap();
    let out = kpcacam(&["cam", "--backend", &fixtures_arg(), "--method", "kpca", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--kernel"));
    assert!(!tmp.path().join("report.json").exists());
}

#[test]
fn bad_flags_exit_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let b = fixtures_arg();
    for args in [
        vec!["cam", "--backend", &b, "--method", "eigen", "--kernel", "rbf", "--out", out],
        vec!["cam", "--backend", &b, "--method", "kpca", "--kernel", "linear", "--gamma", "1", "--out", out],
        vec!["road", "--backend", &b, "--method", "eigen", "--morf-fraction", "1.5", "--out", out],
        vec!["cam", "--backend", "pytorch:x", "--method", "eigen", "--out", out],
        vec!["cam", "--backend", "fixtures:/nonexistent", "--method", "eigen", "--out", out],
        vec!["cam", "--method", "eigen", "--out", out],
    ] {
        assert_eq!(kpcacam(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn kernel_parameters_are_echoed() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    run_ok(&[
        "localize", "--backend", &fixtures_arg(), "--method", "kpca", "--kernel", "sigmoid", "--gamma", "0.1", "--out", out,
    ]);
    let r = report(tmp.path());
    assert_eq!(r["header"]["method"], "kpca_cam[sigmoid gamma=0.1 r=0]");
    assert_eq!(r["header"]["config"]["kernel"]["gamma"], 0.1);
    assert_eq!(r["summary"]["evaluated"], 12);
}

#[test]
fn road_reports_are_byte_identical_across_runs_and_job_counts() {
    let tmp = TempDir::new().unwrap();
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, jobs) in dirs.iter().zip(["1", "1", "4"]) {
        run_ok(&[
            "road", "--backend", &fixtures_arg(), "--method", "kpca", "--kernel", "sigmoid", "--seed", "3", "--jobs", jobs,
            "--out", dir.to_str().unwrap(),
        ]);
    }
    let bytes: Vec<Vec<u8>> = dirs.iter().map(|d| std::fs::read(d.join("report.json")).unwrap()).collect();
    assert_eq!(bytes[0], bytes[1]);
    assert_eq!(bytes[0], bytes[2]);
    let r = report(&dirs[0]);
    assert_eq!(r["header"]["seed"], 3);
    assert_eq!(r["summary"]["correct_count"], 10);
}

/// Copy of the toy corpus that the caller may damage.
fn corpus_copy(tmp: &Path) -> PathBuf {
    let dst = tmp.join("corpus");
    for entry in walk(&toy()) {
        let rel = entry.strip_prefix(toy()).unwrap();
        let target = dst.join(rel);
        std::fs::create_dir_all(target.parent().unwrap()).unwrap();
        std::fs::copy(&entry, &target).unwrap();
    }
    dst
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files
}

#[test]
fn missing_ground_truth_is_a_per_image_error() {
    let tmp = TempDir::new().unwrap();
    let corpus = corpus_copy(tmp.path());
    std::fs::remove_file(corpus.join("toy_003/gt.json")).unwrap();
    let out = tmp.path().join("out");
    let res = kpcacam(&[
        "localize", "--backend", &format!("fixtures:{}", corpus.display()), "--method", "eigen", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["summary"]["evaluated"], 11);
    assert_eq!(r["errors"][0]["image_id"], "toy_003");
}

#[test]
fn no_correct_images_gives_null_mean() {
    let tmp = TempDir::new().unwrap();
    let corpus = corpus_copy(tmp.path());
    let first = tmp.path().join("first");
    run_ok(&["road", "--backend", &fixtures_arg(), "--method", "eigen", "--out", first.to_str().unwrap()]);
    // relabel every image with a class the model does not rank first
    for row in report(&first)["rows"].as_array().unwrap() {
        let p = corpus.join(format!("{}/gt.json", row["image_id"].as_str().unwrap()));
        let mut gt: Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
        gt["class_index"] = ((row["predicted_class"].as_u64().unwrap() + 1) % 7).into();
        std::fs::write(&p, serde_json::to_vec(&gt).unwrap()).unwrap();
    }
    let out = tmp.path().join("out");
    run_ok(&[
        "road", "--backend", &format!("fixtures:{}", corpus.display()), "--method", "eigen", "--out",
        out.to_str().unwrap(),
    ]);
    let r = report(&out);
    assert_eq!(r["summary"]["correct_count"], 0);
    assert!(r["summary"]["mean_delta_pct"].is_null());
    assert_eq!(r["rows"].as_array().unwrap().len(), 12);
}

#[test]
fn report_merges_methods_into_rows() {
    let tmp = TempDir::new().unwrap();
    let p = |d: &str| tmp.path().join(d);
    let b = fixtures_arg();
    run_ok(&["localize", "--backend", &b, "--method", "eigen", "--out", p("le").to_str().unwrap()]);
    run_ok(&["road", "--backend", &b, "--method", "eigen", "--out", p("re").to_str().unwrap()]);
    run_ok(&[
        "localize", "--backend", &b, "--method", "kpca", "--kernel", "rbf", "--out", p("lk").to_str().unwrap(),
    ]);
    let reports = ["le", "re", "lk"].map(|d| p(d).join("report.json").to_str().unwrap().to_string());
    let out = run_ok(&["report", &reports[0], &reports[1], &reports[2], "--out", p("cmp").to_str().unwrap()]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout, std::fs::read_to_string(p("cmp/comparison.txt")).unwrap());
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("method"));
    let cmp: Value = serde_json::from_slice(&std::fs::read(p("cmp/comparison.json")).unwrap()).unwrap();
    let rows = cmp["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["method"], "eigen_cam");
    assert!(rows[0]["loc1"].is_f64() && rows[0]["road_delta_pct"].is_f64());
    assert_eq!(rows[1]["method"], "kpca_cam[rbf gamma=0.001]");
    assert!(rows[1]["road_delta_pct"].is_null());

    let out = run_ok(&["report", &reports[1], "--out", p("one").to_str().unwrap()]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);

    let dup = kpcacam(&["report", &reports[0], &reports[0], "--out", p("dup").to_str().unwrap()]);
    assert_eq!(dup.status.code(), Some(2));
}

#[test]
fn report_rejects_schema_mismatch_and_foreign_manifests() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    run_ok(&["localize", "--backend", &fixtures_arg(), "--method", "eigen", "--out", a.to_str().unwrap()]);
    let path = a.join("report.json");

    let mut v = report(&a);
    v["schema_version"] = 99.into();
    let bumped = tmp.path().join("bumped.json");
    std::fs::write(&bumped, serde_json::to_vec(&v).unwrap()).unwrap();
    let res = kpcacam(&["report", bumped.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("schema"));

    let mut v = report(&a);
    v["header"]["manifest_sha256"] = "0".repeat(64).into();
    v["header"]["kind"] = "road".into();
    v["summary"] = serde_json::json!({"mean_delta_pct": -1.0, "correct_count": 1, "evaluated": 1, "morf_fraction": 0.25});
    v["rows"] = serde_json::json!([]);
    let foreign = tmp.path().join("foreign.json");
    std::fs::write(&foreign, serde_json::to_vec(&v).unwrap()).unwrap();
    let res = kpcacam(&[
        "report", path.to_str().unwrap(), foreign.to_str().unwrap(), "--out", tmp.path().join("y").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("manifest"));
}

#[test]
fn onnx_backend_matches_fixture_backend() {
    let tmp = TempDir::new().unwrap();
    let model = toy().join("model.onnx");
    let dirs = [tmp.path().join("onnx"), tmp.path().join("fix")];
    run_ok(&[
        "localize", "--backend", &format!("onnx:{}", model.display()), "--method", "eigen", "--out",
        dirs[0].to_str().unwrap(),
    ]);
    run_ok(&["localize", "--backend", &fixtures_arg(), "--method", "eigen", "--out", dirs[1].to_str().unwrap()]);
    let (a, b) = (report(&dirs[0]), report(&dirs[1]));
    assert_eq!(a["header"]["config"]["backend"]["kind"], "onnx");
    assert_eq!(a["header"]["manifest_sha256"], b["header"]["manifest_sha256"]);
    assert_eq!(a["summary"]["top1_count"], b["summary"]["top1_count"]);
    assert_eq!(a["summary"]["loc1"], b["summary"]["loc1"]);
    for (ra, rb) in a["rows"].as_array().unwrap().iter().zip(b["rows"].as_array().unwrap()) {
        assert_eq!(ra["pred_box"], rb["pred_box"]);
    }
}

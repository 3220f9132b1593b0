use std::path::Path;
use std::process::{Command, Output};

use nestseg::grid::LabelMask;
use nestseg::io::{read_label_mask, write_label_mask};

fn nestseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nestseg"))
        .args(args)
        .env("NESTSEG_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = nestseg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_scene(dir: &Path, seed: &str) {
    // one outer with one or two inners
    ok(&["synth", "--out-dir", p(dir), "--seed", seed, "--height", "64", "--width", "64", "--n-outer", "1"]);
}

#[test]
fn eval_identical_masks_gives_all_ones() {
    let t = tempfile::tempdir().unwrap();
    small_scene(t.path(), "3");
    let inner = t.path().join("inner.sseg");
    let outer = t.path().join("outer.sseg");
    let csv = ok(&[
        "eval", "--gt-inner", p(&inner), "--pred-inner", p(&inner),
        "--gt-outer", p(&outer), "--pred-outer", p(&outer), "--nesting", "one-to-many",
    ]);
    for line in csv.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let (name, rest) = line.split_once(',').unwrap();
        if name.starts_with("IoU_R") || name.starts_with("AP") || name.starts_with("JTPR") {
            assert!(rest.split(',').all(|v| v == "1.0"), "{line}");
        }
        if name.starts_with("FP") || name.starts_with("FN") {
            assert!(rest.split(',').all(|v| v == "0"), "{line}");
        }
    }
}

#[test]
fn penalty_of_ground_truth_is_lower_limit() {
    let t = tempfile::tempdir().unwrap();
    small_scene(t.path(), "5");
    let inner = t.path().join("inner.sseg");
    let outer = t.path().join("outer.sseg");
    let text = ok(&["penalty", "--pred-inner", p(&inner), "--pred-outer", p(&outer), "--gt-outer", p(&outer)]);
    assert_eq!(text, format!("wbr = {:?}\n", 1.0 / (1.0 + 1e-7)));
    let json = ok(&[
        "penalty", "--pred-inner", p(&inner), "--pred-outer", p(&outer), "--gt-outer", p(&outer),
        "--pred-inner-b", p(&inner), "--gt-inner", p(&inner), "--json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["wbr"].as_f64().unwrap(), 1.0 / (1.0 + 1e-7));
    assert_eq!(v["pair_ratio"].as_f64().unwrap(), 1.0);
}

#[test]
fn synth_twice_is_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    for ext in ["sseg", "png"] {
        let (a, b) = (t.path().join(format!("a{ext}")), t.path().join(format!("b{ext}")));
        ok(&["synth", "--out-dir", p(&a), "--seed", "7", "--ext", ext]);
        ok(&["synth", "--out-dir", p(&b), "--seed", "7", "--ext", ext]);
        for f in [format!("inner.{ext}"), format!("outer.{ext}"), "scene.json".into()] {
            assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{f}");
        }
    }
}

#[test]
fn fields_nms_reconstruct_recover_instances() {
    let t = tempfile::tempdir().unwrap();
    small_scene(t.path(), "9");
    let outer = t.path().join("outer.sseg");
    let f = t.path().join("f");
    ok(&["fields", "--mask", p(&outer), "--out-dir", p(&f)]);
    let (d, r) = (f.join("d.ssegf"), f.join("r.ssegf"));
    let pred = t.path().join("pred.png");
    ok(&["nms", "--d", p(&d), "--r", p(&r), "--out", p(&pred)]);
    assert_eq!(read_label_mask(&pred).unwrap().instance_count(), 1);
    let render = t.path().join("render.sseg");
    let json = ok(&["reconstruct", "--d", p(&d), "--r", p(&r), "--mask", p(&outer), "--render", p(&render)]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["polygons"].as_array().unwrap().len(), 1);
    assert_eq!(v["polygons"][0]["radii"].as_array().unwrap().len(), 32);
    assert_eq!(read_label_mask(&render).unwrap().ids(), vec![1]);
}

#[test]
fn config_file_drives_eval() {
    let t = tempfile::tempdir().unwrap();
    let mut m = LabelMask::zeros(6, 6);
    m.set(1, 1, 1);
    m.set(1, 2, 1);
    let gt = t.path().join("gt.png");
    write_label_mask(&gt, &m).unwrap();
    let cfg = t.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "format = \"json\"\n[metrics]\ntaus = [0.5]\n[[images]]\ngt_inner = {:?}\npred_inner = {:?}\n",
            p(&gt),
            p(&gt)
        ),
    )
    .unwrap();
    let json = ok(&["eval", "--config", p(&cfg)]);
    let report = nestseg::io::parse_json_report(&json).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].inner.ap, 1.0);
    let md = ok(&["eval", "--config", p(&cfg), "--format", "markdown", "--taus", "0.3,0.6"]);
    assert!(md.contains("| metric | τ=0.3 | τ=0.6 |"));
}

#[test]
fn demo_fit_writes_both_traces() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("demo");
    let text = ok(&[
        "demo-fit", "--out-dir", p(&out), "--height", "40", "--width", "40", "--n-outer", "1", "--iterations", "5",
    ]);
    assert!(text.contains("1/1 scenes"), "{text}");
    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("demo_fit.json")).unwrap()).unwrap();
    assert_eq!(v["runs"][0]["wbr"]["loss_trace"].as_array().unwrap().len(), 6);
    assert_eq!(v["runs"][0]["baseline"]["loss_trace"].as_array().unwrap().len(), 6);
}

#[test]
fn bad_usage_and_failures_exit_nonzero() {
    let out = nestseg(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = nestseg(&["eval", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let out = nestseg(&["penalty", "--pred-inner", "/nope.sseg", "--pred-outer", "/nope.sseg", "--gt-outer", "/nope.sseg"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("nestseg: error:") && err.contains("/nope.sseg"), "{err}");
    let t = tempfile::tempdir().unwrap();
    let out = nestseg(&["synth", "--out-dir", p(t.path()), "--n-outer", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_returns_status_in_process() {
    assert_eq!(nestseg_cli::run(["nestseg", "--help"]), 0);
    assert_eq!(nestseg_cli::run(["nestseg"]), 2);
}

#[test]
fn one_to_one_on_shared_outers_warns() {
    let t = tempfile::tempdir().unwrap();
    ok(&["synth", "--out-dir", p(t.path()), "--seed", "1", "--n-outer", "1", "--inner-min", "2", "--inner-max", "2"]);
    let inner = t.path().join("inner.sseg");
    let outer = t.path().join("outer.sseg");
    let out = nestseg(&[
        "eval", "--gt-inner", p(&inner), "--pred-inner", p(&inner),
        "--gt-outer", p(&outer), "--pred-outer", p(&outer),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("consider one-to-many"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("JTPR_outer,2.0,"));
}

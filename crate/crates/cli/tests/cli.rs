use std::path::Path;
use std::process::{Command, Output};

fn depthcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthcast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_every_verb() {
    let out = depthcast(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for verb in ["calibrate", "solve", "render", "eval", "demo", "run"] {
        assert!(text.contains(verb), "{verb} missing from help");
    }
}

#[test]
fn missing_scene_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let scene = dir.path().join("absent.toml");
    for verb in ["run", "calibrate", "solve"] {
        let out = depthcast(&[verb, "--scene", arg(&scene), "--out", arg(&out_dir)]);
        assert!(!out.status.success(), "{verb} succeeded");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("absent.toml"), "{err}");
        assert!(!out_dir.exists(), "{verb} left outputs behind");
    }
}

#[test]
fn bad_method_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let demo = dir.path().join("demo");
    assert!(depthcast(&["demo", "--kind", "two-planes", "--out", arg(&demo)])
        .status
        .success());
    let out = depthcast(&[
        "solve",
        "--scene",
        arg(&demo.join("scene.toml")),
        "--out",
        arg(&dir.path().join("sol")),
        "--method",
        "eo:9:1",
    ]);
    assert!(!out.status.success());
}

#[test]
fn demo_run_writes_report_and_every_referenced_image() {
    let dir = tempfile::tempdir().unwrap();
    let demo = dir.path().join("demo");
    let out = depthcast(&[
        "demo",
        "--kind",
        "two-planes",
        "--out",
        arg(&demo),
        "--run",
        "--threads",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = demo.join("run");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("metrics.json")).unwrap()).unwrap();
    let records = report["records"].as_array().unwrap();
    assert_eq!(records.len(), 4);
    for r in records {
        for key in ["recombined", "difference", "mask"] {
            let f = r["images"][key].as_str().unwrap();
            assert!(run.join(f).exists(), "{f} missing");
        }
    }
    for m in report["methods"].as_array().unwrap() {
        for f in m["patterns"].as_array().unwrap() {
            assert!(run.join(f.as_str().unwrap()).exists());
        }
    }
}

#[test]
fn verbs_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let demo = dir.path().join("demo");
    let scene = demo.join("scene.toml");
    assert!(depthcast(&["demo", "--kind", "head-and-box", "--out", arg(&demo)])
        .status
        .success());

    let cal = dir.path().join("cal");
    let out = depthcast(&["calibrate", "--scene", arg(&scene), "--out", arg(&cal)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(cal.join("gamma.json").exists());

    let sol = dir.path().join("sol");
    let out = depthcast(&[
        "solve",
        "--scene",
        arg(&scene),
        "--calibration",
        arg(&cal),
        "--out",
        arg(&sol),
        "--method",
        "eo",
        "--a",
        "-100",
        "--b",
        "255",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let patterns = sol.join("EO_-100^255");
    assert!(patterns.join("pattern_p0.png").exists());
    assert!(patterns.join("solver.json").exists());

    let ren = dir.path().join("ren");
    let out = depthcast(&[
        "render",
        "--scene",
        arg(&scene),
        "--patterns",
        arg(&patterns),
        "--out",
        arg(&ren),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let scores = dir.path().join("scores.json");
    let out = depthcast(&[
        "eval",
        "--scene",
        arg(&scene),
        "--images",
        arg(&ren),
        "--out",
        arg(&scores),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let scores: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&scores).unwrap()).unwrap();
    let scores = scores.as_array().unwrap();
    assert_eq!(scores.len(), 2);
    for s in scores {
        let ssim = s["ssim"].as_f64().unwrap();
        assert!(ssim > 0.0 && ssim <= 1.0);
        assert!(s["masked_pixels"].as_u64().unwrap() > 0);
    }
}

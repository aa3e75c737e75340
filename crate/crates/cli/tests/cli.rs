use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mmreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmreg")).args(args).output().unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not one JSON line ({e}): {text}"))
}

fn synth(dir: &Path) {
    let out = mmreg(&[
        "synth",
        "--seed",
        "3",
        "--size",
        "96",
        "--rotation",
        "-20",
        "--tx",
        "4",
        "--ty",
        "-2",
        "--deform",
        "1.5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    for name in [
        "he.png",
        "shg.png",
        "ground_truth_transform.txt",
        "ground_truth_field.mmdf",
        "landmarks_source.csv",
        "landmarks_target.csv",
    ] {
        assert!(tmp.path().join(name).is_file(), "{name}");
    }
}

#[test]
fn ground_truth_field_recovers_landmarks() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    let out = mmreg(&[
        "evaluate",
        "--landmarks-a",
        &p("landmarks_source.csv"),
        "--landmarks-b",
        &p("landmarks_target.csv"),
        "--field",
        &p("ground_truth_field.mmdf"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["count"], 25);
    assert!(report["mean"].as_f64().unwrap() < 0.01, "{report}");
    assert_eq!(report["unit"], "px");
}

#[test]
fn mismatched_landmarks_exit_with_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    fs::write(&a, "x,y\n1,2\n3,4\n").unwrap();
    fs::write(&b, "x,y\n1,2\n").unwrap();
    let out = mmreg(&[
        "evaluate",
        "--landmarks-a",
        a.to_str().unwrap(),
        "--landmarks-b",
        b.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_json(&out);
    assert!(
        err["message"].as_str().unwrap().contains("landmark count mismatch"),
        "{err}"
    );
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(mmreg(&["register", "--source", "a.png"]).status.code(), Some(2));
    assert_eq!(mmreg(&["frobnicate"]).status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let he = tmp.path().join("he.png");
    let out = mmreg(&[
        "register",
        "--source",
        he.to_str().unwrap(),
        "--target",
        he.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let manifest = tmp.path().join("m.csv");
    fs::write(
        &manifest,
        "source,target,landmarks_source,landmarks_target\nhe.png,shg.png,,\n",
    )
    .unwrap();
    let out = mmreg(&[
        "ablate",
        "--pairs",
        manifest.to_str().unwrap(),
        "--matchers",
        "sift",
        "--out",
        tmp.path().join("t.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_inputs_report_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere.png");
    let out = mmreg(&[
        "warp",
        "--image",
        missing.to_str().unwrap(),
        "--field",
        "f.mmdf",
        "--out",
        tmp.path().join("o.png").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "input");
    assert!(err["message"].as_str().unwrap().contains("nowhere.png"), "{err}");
}

#[test]
fn warp_with_ground_truth_field() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let warped = tmp.path().join("warped.png");
    let out = mmreg(&[
        "warp",
        "--image",
        tmp.path().join("he.png").to_str().unwrap(),
        "--field",
        tmp.path().join("ground_truth_field.mmdf").to_str().unwrap(),
        "--out",
        warped.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let img = mmreg::io::load_image(&warped).unwrap();
    assert_eq!((img.width(), img.height(), img.channels()), (96, 96, 3));
}

#[test]
fn register_writes_outputs_to_the_configured_directory() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let config = tmp.path().join("c.toml");
    let out_dir = tmp.path().join("run");
    fs::write(
        &config,
        format!(
            "angles = [0.0, 330.0]\nresolutions = [96]\noutput_dir = \"{}\"\n\n[[levels]]\nscale = 1.0\niterations = 5\nmi_window = 32\nmi_stride = 16\n",
            out_dir.display()
        ),
    )
    .unwrap();
    let out = mmreg(&[
        "register",
        "--source",
        tmp.path().join("he.png").to_str().unwrap(),
        "--target",
        tmp.path().join("shg.png").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["transform.txt", "field.mmdf", "report.json", "overlay.png"] {
        assert!(out_dir.join(name).is_file(), "{name}");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["candidates"].as_array().unwrap().len(), 2);
    assert!(report["folding"]["fold_count"].is_u64());
    let overlay = mmreg::io::load_image(out_dir.join("overlay.png")).unwrap();
    assert_eq!((overlay.width(), overlay.channels()), (96, 3));
}

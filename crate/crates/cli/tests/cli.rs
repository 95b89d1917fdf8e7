use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn egodepth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egodepth")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SCENE: &str = r#"
width = 96
height = 64
focal = 80.0
frames = 5
seed = 2

[motion]
t_dir = [0.1, 0.0, 1.0]
speed = 1.5
omega = [0.0, -0.01, 0.0]

[[primitive]]
kind = "fronto_wall"
z0 = 25.0

[[primitive]]
kind = "ground_plane"
height = 1.5

[[primitive]]
kind = "slab"
z0 = 8.0
rect = [10, 20, 40, 60]
"#;

#[test]
fn synth_run_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene.toml");
    fs::write(&scene, SCENE).unwrap();
    let seq = tmp.path().join("seq");
    let out = egodepth(&["synth", "--scene", p(&scene), "--output", p(&seq)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_dir(seq.join("frames")).unwrap().count(), 5);

    let config = tmp.path().join("run.toml");
    fs::write(&config, "input_dir = \"seq/frames\"\noutput_dir = \"labels\"\nflow_dir = \"seq/flow\"\n").unwrap();
    let out = egodepth(&["run", "--config", p(&config), "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("labeled          2"), "{stdout}");
    assert!(tmp.path().join("labels/dataset.jsonl").is_file());

    let out = egodepth(&[
        "eval",
        "--pred",
        p(&tmp.path().join("labels/depth")),
        "--gt",
        p(&seq.join("gt")),
        "--median-scale",
        "--json",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ordinal = report["ordinal_agreement"].as_f64().unwrap();
    assert!(ordinal > 0.95, "{report}");
}

#[test]
fn missing_config_keys_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(&config, "output_dir = \"out\"\nbogus = 1\n").unwrap();
    let out = egodepth(&["run", "--config", p(&config)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_flag_value_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(&config, "input_dir = \".\"\noutput_dir = \"out\"\n").unwrap();
    let out = egodepth(&["run", "--config", p(&config), "--preset", "mars"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_input_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir_all(tmp.path().join("frames")).unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(&config, "input_dir = \"frames\"\noutput_dir = \"out\"\n").unwrap();
    let out = egodepth(&["run", "--config", p(&config)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_without_labels_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene.toml");
    // A motionless camera: every pair is too slow.
    fs::write(&scene, SCENE.replace("speed = 1.5", "speed = 0.0").replace("omega = [0.0, -0.01, 0.0]", "omega = [0.0, 0.0, 0.0]")).unwrap();
    let seq = tmp.path().join("seq");
    assert!(egodepth(&["synth", "--scene", p(&scene), "--output", p(&seq), "--frames", "3"]).status.success());
    let config = tmp.path().join("run.toml");
    fs::write(&config, "input_dir = \"seq/frames\"\noutput_dir = \"out\"\nflow_dir = \"seq/flow\"\n").unwrap();
    let out = egodepth(&["run", "--config", p(&config)]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("out/dataset.jsonl").is_file());
}

#[test]
fn invalid_scene_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene.toml");
    fs::write(&scene, "width = 0\nheight = 10\n").unwrap();
    let out = egodepth(&["synth", "--scene", p(&scene), "--output", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_subcommands() {
    let out = egodepth(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["run", "eval", "synth"] {
        assert!(text.contains(cmd), "{text}");
    }
}

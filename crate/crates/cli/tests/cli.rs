use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rotorsplat"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn rotorsplat")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SPEC: &str = r#"{
  "blobs": [
    {"center": [0.0, 0.0, 0.0], "motion": {"type": "linear", "velocity": [0.4, 0.0, 0.0]},
     "radius": 0.3, "color": [0.9, 0.3, 0.1]}
  ],
  "cameras": {"count": 4, "radius": 4.0, "elevation": 0.3, "fov_x": 0.8},
  "times": 3, "width": 24, "height": 24, "test_every": 3
}"#;

fn synth(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("spec.json");
    fs::write(&spec, SPEC).unwrap();
    let data = dir.join("data");
    let o = run(&["synth", spec.to_str().unwrap(), data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    data
}

#[test]
fn synth_then_eval_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    assert!(data.join("transforms_train.json").exists());
    assert!(data.join("transforms_test.json").exists());
    let gt = data.join("ground_truth.r4gs");
    let o = run(&["eval", gt.to_str().unwrap(), data.to_str().unwrap(), "--split", "test"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let psnr: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("mean_psnr\t"))
        .expect("mean_psnr line")
        .parse()
        .unwrap();
    // Only PNG quantization separates the ground truth from its own renders.
    assert!(psnr > 45.0, "{out}");
}

#[test]
fn render_flow_and_slice_debug() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let gt = data.join("ground_truth.r4gs");
    let cam = data.join("camera_0.json");
    let png = dir.path().join("view.png");
    let o = run(&[
        "render", gt.to_str().unwrap(), "--camera", cam.to_str().unwrap(), "--time", "0.5", "--out",
        png.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(&fs::read(&png).unwrap()[1..4], b"PNG");

    let flow = dir.path().join("flow.png");
    let o = run(&[
        "flow", gt.to_str().unwrap(), "--camera", cam.to_str().unwrap(), "--time", "0.5", "--out",
        flow.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(flow.exists());

    let o = run(&["slice-debug", gt.to_str().unwrap(), "--index", "0", "--time", "0.5"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let speed = out.lines().find_map(|l| l.strip_prefix("speed ")).unwrap();
    let v: Vec<f64> = speed.split(' ').map(|s| s.parse().unwrap()).collect();
    // Six significant digits are printed, and the constructed speed is 0.4 along x.
    assert!((v[0] - 0.4).abs() < 1e-5 && v[1].abs() < 1e-5 && v[2].abs() < 1e-5, "{out}");
    assert!(out.contains("visible true"));
}

#[test]
fn short_training_run_writes_checkpoint_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let cfg = dir.path().join("cfg.txt");
    fs::write(&cfg, "steps = 6\ninit_count = 64\nlog_interval = 3\nbatch = 2\n").unwrap();
    let ckpt = dir.path().join("model.r4gs");
    let log = dir.path().join("log.jsonl");
    let o = run(&[
        "train", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", ckpt.to_str().unwrap(),
        "--log", log.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ckpt.exists());
    let lines: Vec<String> = fs::read_to_string(&log).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].contains("\"step\":6"));
}

#[test]
fn usage_errors_exit_nonzero() {
    assert!(!run(&[]).status.success());
    assert!(!run(&["render"]).status.success());
    assert!(!run(&["slice-debug", "/nonexistent.r4gs", "--index", "0", "--time", "0"]).status.success());

    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let cfg = dir.path().join("bad.txt");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = run(&[
        "train", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out",
        dir.path().join("m").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));

    let gt = data.join("ground_truth.r4gs");
    let o = run(&["slice-debug", gt.to_str().unwrap(), "--index", "99", "--time", "0"]);
    assert!(!o.status.success());
    let o = run(&["eval", gt.to_str().unwrap(), data.to_str().unwrap(), "--split", "bogus"]);
    assert!(!o.status.success());
}

//! End-to-end runs of the `neural-flow` binary: file formats, manifests,
//! determinism, and the documented exit codes (0 ok, 2 usage, 3 data,
//! 4 numeric).

use std::path::Path;
use std::process::Command;

use neural_flow::activation::ActivationFamily;
use neural_flow::flow::{integrate_reference, FlowProblem};
use neural_flow::matrix::Matrix;
use neural_flow::network::{save_path, Network};
use neural_flow::params::{ParamPath, ParamSegment, StructureKind};
use neural_flow::state::LatentState;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_neural-flow"))
}

fn sample_path() -> ParamPath {
    ParamPath::new(
        StructureKind::Separation,
        vec![
            ParamSegment::dense(
                0.5,
                Matrix::from_rows(&[vec![0.4, 0.1], vec![0.0, 0.3]]).unwrap(),
                vec![0.5, 0.7],
                0.5,
            )
            .unwrap(),
            ParamSegment::dense(
                0.5,
                Matrix::from_rows(&[vec![0.2, 0.0], vec![0.1, 0.1]]).unwrap(),
                vec![0.3, 0.2],
                0.25,
            )
            .unwrap(),
        ],
    )
    .unwrap()
}

fn write_inputs(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let path_file = dir.join("path.json");
    std::fs::write(&path_file, save_path(&sample_path()).unwrap()).unwrap();
    let z0_file = dir.join("z0.csv");
    std::fs::write(&z0_file, "channel_kind=scalar,D=2\n1.0,2.0\n-0.5,0.25\n").unwrap();
    (path_file, z0_file)
}

#[test]
fn integrate_matches_library_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (path_file, z0_file) = write_inputs(dir.path());
    let out = dir.path().join("out.csv");

    let run = |out: &Path| {
        let status = bin()
            .args(["integrate", "--path"])
            .arg(&path_file)
            .arg("--z0")
            .arg(&z0_file)
            .args(["--substeps", "64", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    run(&out);

    // compare with an in-process reference run
    let fam = ActivationFamily::relu();
    let expected = integrate_reference(
        &FlowProblem::new(sample_path(), LatentState::scalars(&[1.0, 2.0]), fam).unwrap(),
        64,
    )
    .unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    let first_row: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|t| t.parse().unwrap())
        .collect();
    for (a, b) in first_row.iter().zip(expected.flatten()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    // reruns are byte-comparable, including the manifest
    let out2 = dir.path().join("out2.csv");
    run(&out2);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
    let manifest = std::fs::read_to_string(dir.path().join("out.csv.manifest")).unwrap();
    assert!(manifest.contains("command=integrate"));
    assert!(manifest.contains("substeps=64"));
}

#[test]
fn integrate_missing_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let (_, z0_file) = write_inputs(dir.path());
    let output = bin()
        .args(["integrate", "--path"])
        .arg(dir.path().join("nope.json"))
        .arg("--z0")
        .arg(&z0_file)
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    assert!(!output.stderr.is_empty());
}

#[test]
fn integrate_zero_substeps_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (path_file, z0_file) = write_inputs(dir.path());
    let output = bin()
        .args(["integrate", "--path"])
        .arg(&path_file)
        .arg("--z0")
        .arg(&z0_file)
        .args(["--substeps", "0", "--out"])
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn discretize_emits_model_and_layer_count() {
    let dir = tempfile::tempdir().unwrap();
    let (path_file, _) = write_inputs(dir.path());
    let model = dir.path().join("model.json");
    let status = bin()
        .args(["discretize", "--path"])
        .arg(&path_file)
        .args(["--dt", "0.125", "--scheme", "split", "--out"])
        .arg(&model)
        .status()
        .unwrap();
    assert!(status.success());

    let net = Network::load(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(net.depth(), 8); // T = 1 at dt = 0.125
    let manifest = std::fs::read_to_string(dir.path().join("model.json.manifest")).unwrap();
    assert!(manifest.contains("layers=8"));
}

#[test]
fn discretize_exports_error_table() {
    let dir = tempfile::tempdir().unwrap();
    let (path_file, z0_file) = write_inputs(dir.path());
    let table = dir.path().join("errors.csv");
    let status = bin()
        .args(["discretize", "--path"])
        .arg(&path_file)
        .args(["--dt", "0.125", "--scheme", "split", "--out"])
        .arg(dir.path().join("m.json"))
        .args(["--measure-dts", "0.25,0.125"])
        .arg("--probes")
        .arg(&z0_file)
        .arg("--error-out")
        .arg(&table)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "dt,sup_error,ratio_to_prev");
    assert_eq!(lines.count(), 2);

    // the flag combination is validated up front
    let output = bin()
        .args(["discretize", "--path"])
        .arg(&path_file)
        .args(["--dt", "0.125", "--scheme", "split", "--out"])
        .arg(dir.path().join("m2.json"))
        .args(["--measure-dts", "0.25"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(!dir.path().join("m2.json").exists());
}

#[test]
fn discretize_scheme_structure_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (path_file, _) = write_inputs(dir.path());
    let output = bin()
        .args(["discretize", "--path"])
        .arg(&path_file)
        .args(["--dt", "0.125", "--scheme", "euler", "--out"])
        .arg(dir.path().join("x.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn corrupt_model_document_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"format_version\": 2, \"kind\": \"param_path\"}").unwrap();
    let (_, z0_file) = write_inputs(dir.path());
    let output = bin()
        .args(["integrate", "--path"])
        .arg(&bad)
        .arg("--z0")
        .arg(&z0_file)
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("version"), "stderr: {stderr}");
}

#[test]
fn verify_core_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.txt");
    let output = bin()
        .args(["verify", "--suite", "core", "--seed", "3", "--out"])
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("overall: PASS"));
    assert!(text.contains("[PASS]"));
}

#[test]
fn train_command_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
            "target": "linear2x",
            "num_probes": 41,
            "structure": "separation",
            "d_latent": 2,
            "depth": 2,
            "dt": 0.25,
            "alpha_init": 0.0,
            "max_iters": 400,
            "lr0": 0.05,
            "seed": 3
        }"#,
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let status = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    for f in [
        "model.json",
        "path.json",
        "loss.csv",
        "metrics.txt",
        "run.manifest",
    ] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    // the saved model loads and evaluates
    let net = Network::load(&std::fs::read_to_string(out_dir.join("model.json")).unwrap()).unwrap();
    assert_eq!(net.d_in(), 1);
}

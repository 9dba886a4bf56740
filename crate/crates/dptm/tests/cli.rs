//! Drives the compiled binary the way a user would: write a config, run it,
//! inspect and validate the artifacts with the report subcommand.

use std::path::Path;
use std::process::{Command, Output};

fn dptm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dptm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    let text = format!(
        "rounds = 2\n{extra}\n[benchmark]\nper_class = 40\n"
    );
    std::fs::write(&path, text).expect("write config");
    path
}

#[test]
fn run_then_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), "");
    let out = tmp.path().join("artifacts");

    let run = dptm(&[
        "run",
        config.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        run.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("run complete:"), "stdout: {stdout}");

    for name in [
        "config.echo.toml",
        "metrics.csv",
        "selection.toml",
        "source.bin",
        "source.toml",
        "target.bin",
        "target.toml",
        "model_r0.bin",
        "model_r0.toml",
        "model_r2.bin",
        "model_r2.toml",
    ] {
        assert!(out.join(name).is_file(), "missing artifact {name}");
    }

    // The seed override must land in the echoed config.
    let echo = std::fs::read_to_string(out.join("config.echo.toml")).unwrap();
    assert!(echo.contains("seed = 5"), "echo: {echo}");

    let report = dptm(&["report", out.to_str().unwrap()]);
    assert!(
        report.status.success(),
        "report failed: {}",
        String::from_utf8_lossy(&report.stderr)
    );
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("rounds          2 (+ source baseline)"), "report: {text}");
    assert!(text.contains("3 checkpoints, 2 datasets, 0 traces"), "report: {text}");
    assert!(text.contains("hashes consistent"), "report: {text}");
}

#[test]
fn reruns_are_identical_and_seeds_matter() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), "");
    let mut metrics = Vec::new();
    for (dir, seed) in [("a", "9"), ("b", "9"), ("c", "10")] {
        let out = tmp.path().join(dir);
        let run = dptm(&[
            "run",
            config.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(run.status.success());
        metrics.push(std::fs::read(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1], "same seed must reproduce metrics.csv");
    assert_ne!(metrics[0], metrics[2], "different seed must change the run");
}

#[test]
fn dump_traces_records_latent_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), "");
    let out = tmp.path().join("traced");
    let run = dptm(&[
        "run",
        config.to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--dump-traces",
    ]);
    assert!(run.status.success());
    assert!(out.join("trace_r1.bin").is_file());
    assert!(out.join("trace_r2.bin").is_file());

    let report = dptm(&["report", out.to_str().unwrap()]);
    assert!(report.status.success());
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("2 traces"), "report: {text}");
}

#[test]
fn out_dir_from_config_file_is_honored() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("from-config");
    let config = small_config(
        tmp.path(),
        &format!("out_dir = {:?}", out.to_str().unwrap()),
    );
    let run = dptm(&["run", config.to_str().unwrap(), "--seed", "1"]);
    assert!(
        run.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(out.join("metrics.csv").is_file());
}

#[test]
fn bad_inputs_fail_loudly() {
    let tmp = tempfile::tempdir().unwrap();

    // Unknown key.
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "no_such_setting = 1\n").unwrap();
    let run = dptm(&["run", bad.to_str().unwrap()]);
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("error:"));

    // Invalid value caught by validation.
    let invalid = tmp.path().join("invalid.toml");
    std::fs::write(&invalid, "entropy_threshold = -1.0\n").unwrap();
    let run = dptm(&["run", invalid.to_str().unwrap()]);
    assert!(!run.status.success());

    // Report on a directory that is not a run.
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let report = dptm(&["report", empty.to_str().unwrap()]);
    assert!(!report.status.success());
    assert!(String::from_utf8_lossy(&report.stderr).contains("error:"));
}

#[test]
fn report_rejects_a_truncated_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), "");
    let out = tmp.path().join("damaged");
    let run = dptm(&[
        "run",
        config.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success());

    let victim = out.join("model_r1.bin");
    let bytes = std::fs::read(&victim).unwrap();
    std::fs::write(&victim, &bytes[..bytes.len() - 8]).unwrap();

    let report = dptm(&["report", out.to_str().unwrap()]);
    assert!(!report.status.success(), "report must reject a short checkpoint");
}

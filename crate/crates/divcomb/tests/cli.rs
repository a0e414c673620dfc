use std::path::Path;
use std::process::{Command, Output};

fn divcomb(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divcomb"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn error_line(out: &Output) -> String {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = stderr.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    lines[0].to_string()
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&divcomb(&["synth", "--frequency", "yearly", "-n", "24", "--seed", "3", "-o", "train.csv"], d));
    ok(&divcomb(&["synth", "--frequency", "yearly", "-n", "6", "--seed", "4", "-o", "new.csv"], d));
    std::fs::write(d.join("run.toml"), "frequency = \"yearly\"\nmax_epochs = 2\nseed = 5\n").unwrap();
    ok(&divcomb(&["prepare", "--data", "train.csv", "--config", "run.toml"], d));
    assert!(d.join("metadata/summary.json").exists());
    ok(&divcomb(&["train", "--config", "run.toml", "--max-epochs", "1"], d));
    let history = std::fs::read_to_string(d.join("model.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2, "flag overrides the file's max_epochs");
    ok(&divcomb(&["forecast", "--data", "new.csv", "--out", "fc"], d));
    let fc = std::fs::read_to_string(d.join("fc/forecasts.csv")).unwrap();
    assert_eq!(fc.lines().next(), Some("series_id,h,forecast"));
    assert_eq!(fc.lines().count(), 1 + 6 * 6);
    ok(&divcomb(&["evaluate", "--data", "new.csv", "--out", "ev"], d));
    assert!(d.join("ev/scores.csv").exists() && d.join("ev/ranks.csv").exists());
    ok(&divcomb(&["explain", "--data", "new.csv", "--out", "ex", "--method", "theta", "--svg"], d));
    assert!(d.join("ex/heatmaps.csv").exists());
    assert!(d.join("ex/svg/Y1.svg").exists());
}

#[test]
fn errors_are_single_coded_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.csv"), "Y1,1,2,3,4,5,6,7,8\nY2,1,2\n").unwrap();
    let line = error_line(&divcomb(&["prepare", "--data", "bad.csv", "--frequency", "yearly"], d));
    assert!(line.starts_with("PARSE_ERROR: "), "{line}");
    assert!(line.contains("row 2"), "{line}");

    std::fs::write(d.join("nums.csv"), "Y3,abc\n").unwrap();
    let line = error_line(&divcomb(&["prepare", "--data", "nums.csv", "--frequency", "yearly"], d));
    assert!(line.starts_with("PARSE_ERROR: row 1, column 2"), "{line}");

    let line = error_line(&divcomb(&["prepare", "--data", "missing.csv", "--frequency", "yearly"], d));
    assert!(line.starts_with("IO_ERROR: "), "{line}");

    std::fs::write(d.join("empty.csv"), "").unwrap();
    let line = error_line(&divcomb(&["prepare", "--data", "empty.csv", "--frequency", "yearly"], d));
    assert!(line.starts_with("EMPTY_DATASET: "), "{line}");

    std::fs::write(d.join("model.bin"), b"not a model").unwrap();
    let line = error_line(&divcomb(&["forecast", "--data", "empty.csv"], d));
    assert!(line.starts_with("CORRUPT_FILE: "), "{line}");

    std::fs::write(d.join("typo.toml"), "frequncy = \"yearly\"\n").unwrap();
    let line = error_line(&divcomb(&["prepare", "--data", "empty.csv", "--config", "typo.toml"], d));
    assert!(line.starts_with("CONFIG_ERROR: "), "{line}");
}

#[test]
fn frequency_mismatch_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&divcomb(&["synth", "--frequency", "yearly", "-n", "8", "--seed", "1", "-o", "y.csv"], d));
    ok(&divcomb(&["prepare", "--data", "y.csv", "--frequency", "yearly"], d));
    ok(&divcomb(&["train", "--max-epochs", "1"], d));
    let line = error_line(&divcomb(&["forecast", "--data", "y.csv", "--frequency", "monthly"], d));
    assert!(line.starts_with("FREQUENCY_MISMATCH: "), "{line}");
}

//! End-to-end checks of the binary: config loading, overrides, output
//! shapes, determinism and exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_segstream"))
}

const TINY_CONFIG: &str = r#"
seed = 17
segmenters = ["vad", "e2e"]
strategies = ["e2_dummy_last"]
eos_thresholds = [2.2, 3.7]
silence_thresholds_ms = [600]
report_utterances = 2

[corpus]
num_utterances = 3
long_form_floor_ms = 5000
long_form_target_ms = 9000
"#;

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn experiment_writes_the_documented_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    for out in ["a", "b"] {
        let status = bin()
            .args(["experiment", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = read_dir_sorted(&dir.path().join("a"));
    let b = read_dir_sorted(&dir.path().join("b"));
    assert_eq!(a, b, "reruns must be byte-identical");
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"segmenters.csv"));
    assert!(names.contains(&"strategies.csv"));
    assert!(names.contains(&"corpus.jsonl"));
    let segmenters = a
        .iter()
        .find(|(n, _)| n == "segmenters.csv")
        .map(|(_, c)| String::from_utf8(c.clone()).unwrap())
        .unwrap();
    assert_eq!(
        segmenters.lines().next().unwrap(),
        "segmenter,sl50_s,sl90_s,eos50_ms,eos90_ms,wer_2nd,wer_1st,ower"
    );
    assert_eq!(segmenters.lines().count(), 3);
}

#[test]
fn seed_and_set_overrides_change_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let run = |out: &str, extra: &[&str]| {
        let status = bin()
            .args(["experiment", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .args(extra)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read_to_string(dir.path().join(out).join("segmenters.csv")).unwrap()
    };
    let base = run("base", &[]);
    let reseeded = run("reseeded", &["--seed", "23"]);
    assert_ne!(base, reseeded);
    let overridden = run("overridden", &["--set", "corpus.num_utterances=2"]);
    assert_ne!(base, overridden);
}

#[test]
fn sweep_oracle_and_report_produce_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    for (cmd, file) in [
        ("sweep", "sweep.csv"),
        ("oracle", "oracle.csv"),
        ("report", "report.txt"),
    ] {
        let out = dir.path().join(cmd);
        let status = bin()
            .args([cmd, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success(), "{cmd} failed");
        assert!(out.join(file).exists(), "{file} missing");
    }
    let sweep = std::fs::read_to_string(dir.path().join("sweep/sweep.csv")).unwrap();
    assert_eq!(
        sweep.lines().next().unwrap(),
        "eos_threshold,silence_length_threshold_ms,wer_2nd,sl50_s"
    );
    // One row per grid point plus the header.
    assert_eq!(sweep.lines().count(), 3);
    let oracle = std::fs::read_to_string(dir.path().join("oracle/oracle.csv")).unwrap();
    assert_eq!(
        oracle.lines().next().unwrap(),
        "segmenter,sl50,wer_standard,ower_standard,wer_merged,ower_merged"
    );
}

#[test]
fn invalid_configuration_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "segmenters = []\n").unwrap();
    let status = bin()
        .args(["experiment", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert!(!status.success());

    let status = bin()
        .args(["experiment", "--set", "nonsense"])
        .arg("--out")
        .arg(dir.path().join("out2"))
        .status()
        .unwrap();
    assert!(!status.success());
}

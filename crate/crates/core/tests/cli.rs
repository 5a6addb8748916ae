use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use wearmil::cohort::{Modality, PatientId};
use wearmil::hrv::{segment_features, EcgRecording, PeakDetectorConfig, DEFAULT_FS};
use wearmil::ingest::{load_modality_table, write_ecg_file};
use wearmil::synth::{synthetic_ecg, EcgSynthConfig};

const SMALL_MODEL: &str = "embed_dim = 8\nencoder_hidden = 8\nattention_dim = 4\nmax_epochs = 4\npatience = 2\n";

fn wearmil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wearmil")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth(dir: &Path, seed: &str, patients: &str) {
    ok(&wearmil(&["synth", "--seed", seed, "--patients", patients, "--out-dir", s(dir)]));
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.cfg");
    std::fs::write(&p, SMALL_MODEL).unwrap();
    p
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn synth_is_deterministic_and_writes_expected_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "7", "30");
    synth(&b, "7", "30");
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["clinical.csv", "hrv.csv", "ledger.csv", "manifest.txt", "phys.csv", "sleep.csv"]);
    for f in names.iter().filter(|f| f.ends_with(".csv")) {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let digests = |m: String| -> Vec<String> {
        m.lines()
            .filter(|l| l.starts_with("# output sha256"))
            .map(|l| l.split_whitespace().nth(3).unwrap().to_string())
            .collect()
    };
    let da = digests(read(a.join("manifest.txt")));
    assert_eq!(da.len(), 5);
    assert_eq!(da, digests(read(b.join("manifest.txt"))));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wearmil(&["synth", "--patients", "0", "--out-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert_eq!(wearmil(&["loso", "--task", "facit"]).status.code(), Some(2));
    assert_eq!(wearmil(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn config_errors_exit_2_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "1", "6");
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "# comment\nembed_dim = 8\nlearning_rate = fast\n").unwrap();
    let out = wearmil(&[
        "loso", "--data-dir", s(&data), "--out-dir", s(&tmp.path().join("o")), "--task", "facit", "--config", s(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn missing_inputs_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wearmil(&[
        "loso", "--data-dir", s(&tmp.path().join("nope")), "--out-dir", s(&tmp.path().join("o")), "--task", "facit",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn loso_subset_label_and_manifest_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "3", "8");
    let cfg = small_config(tmp.path());
    let first = tmp.path().join("first");
    ok(&wearmil(&[
        "loso", "--data-dir", s(&data), "--out-dir", s(&first), "--task", "handgrip", "--horizon", "m3", "--modalities",
        "phys,sleep", "--config", s(&cfg), "--seed", "5", "--attention-dump",
    ]));
    let report = read(first.join("report.csv"));
    let mut lines = report.lines();
    assert_eq!(lines.next().unwrap(), "task,horizon,subset,fold_patient,balanced_accuracy,macro_f1");
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.split(',').nth(2) == Some("P+S")), "{report}");
    assert!(first.join("attention.csv").exists());
    let attention = read(first.join("attention.csv"));
    assert!(attention.lines().skip(1).all(|l| !l.contains(",hrv,")));

    // The manifest alone reproduces the run.
    let manifest = first.join("manifest.txt");
    assert!(read(&manifest).contains("seed = 5"));
    let second = tmp.path().join("second");
    ok(&wearmil(&[
        "loso", "--data-dir", s(&data), "--out-dir", s(&second), "--task", "handgrip", "--horizon", "m3", "--modalities",
        "phys,sleep", "--config", s(&manifest),
    ]));
    for f in ["report.csv", "summary.csv", "pooled_summary.csv", "predictions.csv"] {
        assert_eq!(read(first.join(f)), read(second.join(f)), "{f}");
    }
}

#[test]
fn ablate_emits_three_pairs_per_endpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "4", "6");
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("abl");
    ok(&wearmil(&[
        "ablate", "--data-dir", s(&data), "--out-dir", s(&out), "--task", "both", "--horizon", "both", "--config", s(&cfg),
        "--seed", "2",
    ]));
    let summary = read(out.join("summary.csv"));
    let rows: Vec<Vec<&str>> = summary.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12);
    for chunk in rows.chunks(3) {
        let subsets: Vec<&str> = chunk.iter().map(|r| r[2]).collect();
        assert_eq!(subsets, ["P+S", "P+E", "S+E"]);
        assert!(chunk.iter().all(|r| r[0] == chunk[0][0] && r[1] == chunk[0][1]));
    }
    let manifest = read(out.join("manifest.txt"));
    assert!(manifest.contains("# shared seed: 2 (all subsets)"), "{manifest}");
}

fn ecg(seed: u64, bpm: f64) -> Vec<f64> {
    let cfg = EcgSynthConfig {
        mean_bpm: bpm,
        ..EcgSynthConfig::default()
    };
    synthetic_ecg(&cfg, seed).unwrap().samples
}

fn recording(patient: &str, date: NaiveDate, samples: Vec<f64>) -> EcgRecording {
    EcgRecording::new(PatientId::new(patient).unwrap(), date, DEFAULT_FS, samples).unwrap()
}

#[test]
fn extract_hrv_single_recording_gives_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("ecg");
    std::fs::create_dir(&input).unwrap();
    let date = NaiveDate::from_ymd_opt(2024, 5, 2).unwrap();
    write_ecg_file(input.join("p1.csv"), &recording("p1", date, ecg(1, 70.0))).unwrap();
    // Unreadable files are skipped.
    std::fs::write(input.join("junk.csv"), "what,is,this\n1,2,3\n").unwrap();
    let out = tmp.path().join("out");
    ok(&wearmil(&["extract-hrv", "--input-dir", s(&input), "--out-dir", s(&out)]));
    let table = load_modality_table(out.join("hrv.csv"), Modality::Hrv).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].date, date);
    let mean_nn = table.rows[0].features[0].unwrap();
    assert!((mean_nn - 60_000.0 / 70.0).abs() < 20.0, "{mean_nn}");
    assert!(read(out.join("manifest.txt")).contains("# input sha256"));
}

#[test]
fn extract_hrv_same_date_recordings_are_median_aggregated() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("ecg");
    std::fs::create_dir(&input).unwrap();
    let date = NaiveDate::from_ymd_opt(2024, 5, 2).unwrap();
    let (a, b) = (ecg(2, 62.0), ecg(3, 88.0));
    let detector = PeakDetectorConfig::default();
    let fa = segment_features(&a, DEFAULT_FS, &detector).unwrap().to_vec();
    let fb = segment_features(&b, DEFAULT_FS, &detector).unwrap().to_vec();
    write_ecg_file(input.join("morning.csv"), &recording("p9", date, a)).unwrap();
    write_ecg_file(input.join("evening.csv"), &recording("p9", date, b)).unwrap();
    let out = tmp.path().join("out");
    ok(&wearmil(&["extract-hrv", "--input-dir", s(&input), "--out-dir", s(&out)]));
    let table = load_modality_table(out.join("hrv.csv"), Modality::Hrv).unwrap();
    assert_eq!(table.rows.len(), 1);
    for ((got, x), y) in table.rows[0].features.iter().zip(&fa).zip(&fb) {
        let expected = 0.5 * (x.unwrap() + y.unwrap());
        let got = got.unwrap();
        assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{got} vs {expected}");
    }
}

#[test]
fn extract_hrv_fails_without_readable_input() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(wearmil(&["extract-hrv", "--input-dir", s(&empty), "--out-dir", s(&out)]).status.code(), Some(1));
    std::fs::write(empty.join("bad.csv"), "nonsense\n").unwrap();
    assert_eq!(wearmil(&["extract-hrv", "--input-dir", s(&empty), "--out-dir", s(&out)]).status.code(), Some(1));
}

//! The `wearmil` command line.
//!
//! Exit codes: 0 success, 2 usage error (bad flags or config file), 1
//! runtime failure. Every command writes `manifest.txt` into its output
//! directory. The manifest's non-comment lines are the resolved run
//! configuration, so `--config <out>/manifest.txt` re-runs with identical
//! settings.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::cohort::{Horizon, Modality, PatientId, Task};
use crate::config::{apply_config, to_config_string};
use crate::error::{Error, Result};
use crate::eval::{
    run_ablation, run_loso, write_attention_dump, write_pooled_csv, write_predictions_csv, write_report_csv,
    write_summary_csv, EvalConfig, F1Kind, ModalitySubset, RunReport,
};
use crate::hrv::{aggregate_daily, segment_features, EcgRecording, PeakDetectorConfig, HRV_FEATURE_NAMES};
use crate::ingest::{load_ecg_file, write_modality_table, Dataset, ModalityTable, HRV_FILE};
use crate::cohort::InstanceRow;
use crate::synth::{generate_cohort, leading_mask, SynthConfig};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const POOLED_FILE: &str = "pooled_summary.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const ATTENTION_FILE: &str = "attention.csv";

#[derive(Debug, Parser)]
#[command(name = "wearmil", version, about = "Attention-MIL on multimodal wearable data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort with a planted class signal.
    Synth(SynthArgs),
    /// Turn a directory of ECG recordings into a daily HRV table.
    ExtractHrv(ExtractArgs),
    /// Leave-one-subject-out evaluation.
    Loso(LosoArgs),
    /// LOSO for each modality pair (P+S, P+E, S+E).
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Class mean shift in standard units.
    #[arg(long, default_value_t = 2.0)]
    pub signal: f64,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub patients: u64,
    /// Modalities carrying the signal, e.g. `phys` or `phys,sleep`.
    #[arg(long, default_value = "all")]
    pub signal_modalities: String,
    /// Per-cell missing probability for every modality.
    #[arg(long, default_value_t = 0.1)]
    pub missing: f64,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Directory of ECG CSV files.
    #[arg(long)]
    pub input_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Segment length in seconds.
    #[arg(long, default_value_t = 300.0)]
    pub segment_s: f64,
    /// Shortest trailing segment kept, in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub min_segment_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HorizonArg {
    M3,
    M6,
    Both,
}

impl HorizonArg {
    fn horizons(self) -> Vec<Horizon> {
        match self {
            HorizonArg::M3 => vec![Horizon::M3],
            HorizonArg::M6 => vec![Horizon::M6],
            HorizonArg::Both => Horizon::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Facit,
    Handgrip,
    Both,
}

impl TaskArg {
    fn tasks(self) -> Vec<Task> {
        match self {
            TaskArg::Facit => vec![Task::Facit],
            TaskArg::Handgrip => vec![Task::Handgrip],
            TaskArg::Both => Task::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Directory with phys.csv, sleep.csv, hrv.csv and clinical.csv.
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long, value_enum, default_value = "both")]
    pub horizon: HorizonArg,
    /// Flat key = value configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Concurrent folds (0 = all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_parser = parse_f1)]
    pub f1: Option<F1Kind>,
    /// Train with unit class weights.
    #[arg(long)]
    pub no_class_weights: bool,
}

#[derive(Debug, Args)]
pub struct LosoArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Modality subset, e.g. `phys,sleep` or `all`.
    #[arg(long, default_value = "all", value_parser = parse_subset)]
    pub modalities: ModalitySubset,
    /// Also write per-instance attention weights.
    #[arg(long)]
    pub attention_dump: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

fn parse_subset(s: &str) -> std::result::Result<ModalitySubset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_f1(s: &str) -> std::result::Result<F1Kind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure of a command, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other),
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> std::result::Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::ExtractHrv(a) => cmd_extract_hrv(a),
        Command::Loso(a) => cmd_loso(a),
        Command::Ablate(a) => cmd_ablate(a),
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Provenance written next to every output.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    /// `key = value` lines of the resolved configuration.
    pub config: String,
    /// Extra facts about the run, written as comments.
    pub notes: Vec<(String, String)>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix: i64,
    pub finished_unix: i64,
}

fn timestamp(unix: i64) -> String {
    DateTime::from_timestamp(unix, 0)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| unix.to_string())
}

fn now_unix() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

impl RunManifest {
    fn new(command: &str, seed: u64, config: String) -> Self {
        RunManifest {
            command: command.to_string(),
            seed,
            config,
            notes: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix: now_unix(),
            finished_unix: 0,
        }
    }

    pub fn render(&self) -> Result<String> {
        let mut s = String::new();
        let _ = writeln!(s, "# wearmil {} run manifest", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# command: {}", self.command);
        let _ = writeln!(s, "# seed: {}", self.seed);
        let _ = writeln!(s, "# started: {}", timestamp(self.started_unix));
        let _ = writeln!(s, "# finished: {}", timestamp(self.finished_unix));
        for (k, v) in &self.notes {
            let _ = writeln!(s, "# {k}: {v}");
        }
        for p in &self.inputs {
            let _ = writeln!(s, "# input sha256 {} {}", sha256_file(p)?, p.display());
        }
        for p in &self.outputs {
            let _ = writeln!(s, "# output sha256 {} {}", sha256_file(p)?, p.display());
        }
        s.push_str(&self.config);
        Ok(s)
    }

    pub fn write(&mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_unix = now_unix();
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.render()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_synth(a: &SynthArgs) -> std::result::Result<(), CliError> {
    if !(a.signal >= 0.0 && a.signal.is_finite()) {
        return Err(CliError::Usage("--signal must be a non-negative number".into()));
    }
    if !(0.0..=1.0).contains(&a.missing) {
        return Err(CliError::Usage("--missing must lie in [0, 1]".into()));
    }
    let subset: ModalitySubset = a
        .signal_modalities
        .parse()
        .map_err(|e: Error| CliError::Usage(e.to_string()))?;
    let defaults = SynthConfig::default();
    let cfg = SynthConfig {
        patients: a.patients as usize,
        signal: a.signal,
        seed: a.seed,
        missing_prob: [a.missing; 3],
        signal_mask: leading_mask(defaults.feature_counts, 4, &subset.modalities()),
        ..defaults
    };
    ensure_dir(&a.out_dir)?;
    let cohort = generate_cohort(&cfg)?;
    let outputs = cohort.write_dir(&a.out_dir)?;
    let config = format!(
        "patients = {}\nsignal = {}\nsignal_modalities = {}\nmissing = {}\nseed = {}\n",
        cfg.patients, cfg.signal, subset, a.missing, cfg.seed
    );
    let mut manifest = RunManifest::new("synth", cfg.seed, config);
    manifest.outputs = outputs;
    manifest.write(&a.out_dir)?;
    log::info!("wrote synthetic cohort of {} patients to {}", cfg.patients, a.out_dir.display());
    Ok(())
}

/// Daily HRV rows from every readable ECG file in `dir`. Unreadable files
/// and recordings without usable segments are skipped with a warning.
/// Returns the table and the files that were read.
pub fn extract_hrv_dir(
    dir: &Path,
    segment_s: f64,
    min_segment_s: f64,
    detector: &PeakDetectorConfig,
) -> Result<(ModalityTable, Vec<PathBuf>)> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("no ECG .csv files in {}", dir.display())));
    }
    let mut read = Vec::new();
    let mut per_day: BTreeMap<(PatientId, NaiveDate), Vec<_>> = BTreeMap::new();
    for path in &files {
        let recordings: Vec<EcgRecording> = match load_ecg_file(path) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        read.push(path.clone());
        for rec in recordings {
            for (i, seg) in rec.segments(segment_s, min_segment_s).into_iter().enumerate() {
                match segment_features(seg, rec.fs, detector) {
                    Ok(f) => per_day.entry((rec.patient.clone(), rec.date)).or_default().push(f),
                    Err(e) => log::warn!("{} {} segment {i}: {e}", rec.patient, rec.date),
                }
            }
        }
    }
    if read.is_empty() {
        return Err(Error::invalid(format!("none of the ECG files in {} could be read", dir.display())));
    }
    if per_day.is_empty() {
        return Err(Error::Signal("no ECG segment produced HRV features".into()));
    }
    let rows = per_day
        .into_iter()
        .map(|((patient, date), segments)| {
            Ok(InstanceRow {
                patient,
                modality: Modality::Hrv,
                date,
                features: aggregate_daily(&segments)?.to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let names = HRV_FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    Ok((ModalityTable::new(Modality::Hrv, names, rows)?, read))
}

pub fn cmd_extract_hrv(a: &ExtractArgs) -> std::result::Result<(), CliError> {
    if !(a.segment_s > 0.0 && a.min_segment_s > 0.0 && a.min_segment_s <= a.segment_s) {
        return Err(CliError::Usage("segment lengths must be positive with --min-segment-s <= --segment-s".into()));
    }
    let detector = PeakDetectorConfig::default();
    let (table, inputs) = extract_hrv_dir(&a.input_dir, a.segment_s, a.min_segment_s, &detector)?;
    ensure_dir(&a.out_dir)?;
    let out = a.out_dir.join(HRV_FILE);
    write_modality_table(&out, &table)?;
    let config = format!("segment_s = {}\nmin_segment_s = {}\n", a.segment_s, a.min_segment_s);
    let mut manifest = RunManifest::new("extract-hrv", 0, config);
    manifest.inputs = inputs;
    manifest.outputs = vec![out];
    manifest.write(&a.out_dir)?;
    log::info!("wrote {} daily HRV rows", table.rows.len());
    Ok(())
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(run: &RunArgs) -> std::result::Result<EvalConfig, CliError> {
    let mut cfg = EvalConfig::default();
    if let Some(path) = &run.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(Error::io(path, e)))?;
        cfg = apply_config(&cfg, &text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = run.jobs {
        cfg.jobs = jobs;
    }
    if let Some(f1) = run.f1 {
        cfg.f1 = f1;
    }
    if run.no_class_weights {
        cfg.class_weighting = false;
    }
    Ok(cfg)
}

fn write_reports(dir: &Path, reports: &[RunReport], attention: bool) -> Result<Vec<PathBuf>> {
    let mut out = vec![dir.join(REPORT_FILE), dir.join(SUMMARY_FILE), dir.join(POOLED_FILE), dir.join(PREDICTIONS_FILE)];
    write_report_csv(&out[0], reports)?;
    write_summary_csv(&out[1], reports)?;
    write_pooled_csv(&out[2], reports)?;
    write_predictions_csv(&out[3], reports)?;
    if attention {
        let p = dir.join(ATTENTION_FILE);
        write_attention_dump(&p, reports)?;
        out.push(p);
    }
    Ok(out)
}

fn skipped_note(reports: &[RunReport]) -> Option<(String, String)> {
    let skipped: Vec<String> = reports
        .iter()
        .flat_map(|r| r.skipped.iter().map(move |(p, why)| format!("{} {} {}: {why}", r.task, r.horizon, p)))
        .collect();
    (!skipped.is_empty()).then(|| ("skipped folds".to_string(), skipped.join("; ")))
}

fn load_dataset(dir: &Path) -> std::result::Result<Dataset, CliError> {
    Dataset::load_dir(dir).map_err(CliError::Runtime)
}

pub fn cmd_loso(a: &LosoArgs) -> std::result::Result<(), CliError> {
    let cfg = resolve_config(&a.run)?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let dataset = load_dataset(&a.run.data_dir)?;
    let mut reports = Vec::new();
    for task in a.run.task.tasks() {
        for horizon in a.run.horizon.horizons() {
            reports.push(run_loso(&dataset, task, horizon, a.modalities, &cfg)?);
        }
    }
    ensure_dir(&a.run.out_dir)?;
    let outputs = write_reports(&a.run.out_dir, &reports, a.attention_dump)?;
    let mut manifest = RunManifest::new("loso", cfg.seed, to_config_string(&cfg));
    manifest.notes = vec![
        ("data dir".into(), a.run.data_dir.display().to_string()),
        ("task".into(), format!("{:?}", a.run.task).to_lowercase()),
        ("horizon".into(), format!("{:?}", a.run.horizon).to_lowercase()),
        ("modalities".into(), a.modalities.label()),
    ];
    manifest.notes.extend(skipped_note(&reports));
    manifest.inputs = Dataset::input_paths(&a.run.data_dir);
    manifest.outputs = outputs;
    manifest.write(&a.run.out_dir)?;
    for r in &reports {
        let (m, s) = r.balanced_accuracy();
        println!(
            "{} {} {}: balanced accuracy {m:.3} ± {s:.3} over {} folds (pooled {:.3})",
            r.task,
            r.horizon,
            r.subset,
            r.folds.len(),
            r.pooled_balanced_accuracy().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

pub fn cmd_ablate(a: &AblateArgs) -> std::result::Result<(), CliError> {
    let cfg = resolve_config(&a.run)?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let dataset = load_dataset(&a.run.data_dir)?;
    let mut reports = Vec::new();
    for task in a.run.task.tasks() {
        for horizon in a.run.horizon.horizons() {
            reports.extend(run_ablation(&dataset, task, horizon, &cfg)?);
        }
    }
    ensure_dir(&a.run.out_dir)?;
    let outputs = write_reports(&a.run.out_dir, &reports, false)?;
    let mut manifest = RunManifest::new("ablate", cfg.seed, to_config_string(&cfg));
    let subsets: Vec<String> = ModalitySubset::PAIRS.iter().map(|s| s.label()).collect();
    manifest.notes = vec![
        ("data dir".into(), a.run.data_dir.display().to_string()),
        ("task".into(), format!("{:?}", a.run.task).to_lowercase()),
        ("horizon".into(), format!("{:?}", a.run.horizon).to_lowercase()),
        ("subsets".into(), subsets.join(",")),
        ("shared seed".into(), format!("{} (all subsets)", cfg.seed)),
    ];
    manifest.notes.extend(skipped_note(&reports));
    manifest.inputs = Dataset::input_paths(&a.run.data_dir);
    manifest.outputs = outputs;
    manifest.write(&a.run.out_dir)?;
    for r in &reports {
        let (m, s) = r.balanced_accuracy();
        println!("{} {} {}: balanced accuracy {m:.3} ± {s:.3}", r.task, r.horizon, r.subset);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("wearmil").chain(args.iter().copied()))
    }

    #[test]
    fn zero_patients_is_a_usage_error() {
        let e = parse(&["synth", "--out-dir", "x", "--patients", "0"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert_eq!(run_from_args(["wearmil", "synth", "--out-dir", "x", "--patients", "0"]), 2);
    }

    #[test]
    fn loso_flags_parse() {
        let cli = parse(&[
            "loso", "--data-dir", "d", "--out-dir", "o", "--task", "handgrip", "--horizon", "m6", "--seed", "1",
            "--modalities", "phys,sleep",
        ])
        .unwrap();
        let Command::Loso(a) = cli.command else { panic!() };
        assert_eq!(a.modalities.label(), "P+S");
        assert_eq!(a.run.horizon, HorizonArg::M6);
        assert_eq!(a.run.task, TaskArg::Handgrip);
        assert!(parse(&["loso", "--data-dir", "d", "--out-dir", "o", "--task", "grip"]).is_err());
        assert!(parse(&["loso", "--data-dir", "d", "--out-dir", "o", "--task", "facit", "--modalities", "gps"]).is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "seed = 5\njobs = 3\nembed_dim = 16\n").unwrap();
        let cli = parse(&[
            "loso", "--data-dir", "d", "--out-dir", "o", "--task", "facit", "--config", path.to_str().unwrap(), "--seed",
            "9",
        ])
        .unwrap();
        let Command::Loso(a) = cli.command else { panic!() };
        let cfg = resolve_config(&a.run).unwrap();
        assert_eq!((cfg.seed, cfg.jobs, cfg.model.embed_dim), (9, 3, 16));
    }

    #[test]
    fn bad_config_is_a_usage_error_naming_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "seed = 1\nlearning_rate = quick\n").unwrap();
        let cli = parse(&["loso", "--data-dir", "d", "--out-dir", "o", "--task", "facit", "--config", path.to_str().unwrap()])
            .unwrap();
        let Command::Loso(a) = cli.command else { panic!() };
        let e = resolve_config(&a.run).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn missing_data_is_a_runtime_error() {
        let dir = tempfile::tempdir().unwrap();
        let code = run_from_args([
            "wearmil",
            "loso",
            "--data-dir",
            dir.path().join("absent").to_str().unwrap(),
            "--out-dir",
            dir.path().join("out").to_str().unwrap(),
            "--task",
            "facit",
        ]);
        assert_eq!(code, 1);
    }
}

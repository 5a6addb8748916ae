//! Leave-one-subject-out evaluation, metrics, class weighting and modality
//! ablation.
//!
//! One [`RunReport`] covers a single (task, horizon, modality subset). Each
//! fold holds out one patient, splits the remaining pool patient-wise into
//! train and validation, fits preprocessing on the training patients only,
//! trains a fresh model and predicts the held-out patient's bag.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bags::{build_bags, Bag, InstanceMatrix};
use crate::cohort::{
    assign_horizon, days_from_baseline, DeltaClass, EndpointLabel, Horizon, HorizonWindows, Margins, Modality,
    PatientId, Task,
};
use crate::error::{Error, Result};
use crate::ingest::{build_labels, Dataset};
use crate::model::{init_model, train, History, MilModel, ModelConfig};
use crate::preprocess::{fit_stats, transform_all, FoldStats, DEFAULT_EPSILON};
use crate::seed::derive_seed;

/// Which modalities enter bag construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModalitySubset([bool; 3]);

impl ModalitySubset {
    pub const ALL: ModalitySubset = ModalitySubset([true; 3]);
    pub const PAIRS: [ModalitySubset; 3] = [
        ModalitySubset([true, true, false]),
        ModalitySubset([true, false, true]),
        ModalitySubset([false, true, true]),
    ];

    pub fn new(modalities: &[Modality]) -> Result<Self> {
        let mut mask = [false; 3];
        for m in modalities {
            mask[m.index()] = true;
        }
        if !mask.iter().any(|b| *b) {
            return Err(Error::invalid("modality subset must not be empty"));
        }
        Ok(ModalitySubset(mask))
    }

    pub fn contains(self, m: Modality) -> bool {
        self.0[m.index()]
    }

    pub fn modalities(self) -> Vec<Modality> {
        Modality::ALL.into_iter().filter(|m| self.contains(*m)).collect()
    }

    /// `P+S+E`, `P+S`, ... in phys, sleep, hrv order.
    pub fn label(self) -> String {
        self.modalities()
            .iter()
            .map(|m| m.letter().to_string())
            .collect::<Vec<_>>()
            .join("+")
    }
}

impl fmt::Display for ModalitySubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ModalitySubset {
    type Err = Error;

    /// Accepts `phys,sleep`, `P+S`, `all`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(ModalitySubset::ALL);
        }
        let mods = s
            .split([',', '+'])
            .map(|p| p.trim().parse::<Modality>())
            .collect::<Result<Vec<_>>>()?;
        ModalitySubset::new(&mods)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum F1Kind {
    #[default]
    Macro,
    Weighted,
}

impl FromStr for F1Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "macro" => Ok(F1Kind::Macro),
            "weighted" => Ok(F1Kind::Weighted),
            other => Err(Error::invalid(format!("unknown F1 variant '{other}' (macro|weighted)"))),
        }
    }
}

impl fmt::Display for F1Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            F1Kind::Macro => "macro",
            F1Kind::Weighted => "weighted",
        })
    }
}

/// Everything a LOSO run depends on besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub model: ModelConfig,
    pub seed: u64,
    pub margins: Margins,
    pub windows: HorizonWindows,
    /// Fraction of the pool used for training; the rest validates.
    pub train_fraction: f64,
    pub class_weighting: bool,
    pub f1: F1Kind,
    pub epsilon: f64,
    /// Concurrent folds; 0 means all available cores.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            model: ModelConfig::default(),
            seed: 0,
            margins: Margins::default(),
            windows: HorizonWindows::default(),
            train_fraction: 0.8,
            class_weighting: true,
            f1: F1Kind::Macro,
            epsilon: DEFAULT_EPSILON,
            jobs: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.margins.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction must lie strictly between 0 and 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub index: usize,
    pub test: PatientId,
    pub pool: Vec<PatientId>,
}

/// One fold per patient, in sorted patient order.
pub fn loso_folds(patients: &[PatientId]) -> Result<Vec<Fold>> {
    let sorted: BTreeSet<&PatientId> = patients.iter().collect();
    if sorted.len() < 3 {
        return Err(Error::invalid(format!(
            "leave-one-subject-out needs at least 3 patients, got {}",
            sorted.len()
        )));
    }
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(index, test)| Fold {
            index,
            test: (*test).clone(),
            pool: sorted.iter().filter(|p| *p != test).map(|p| (*p).clone()).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InnerSplit {
    pub train: Vec<PatientId>,
    pub val: Vec<PatientId>,
    pub stratified: bool,
}

/// Patient-wise train/validation split of `pool`.
///
/// The validation side gets `max(1, round((1 - train_fraction) · n))`
/// patients. When every class has at least one pool patient the split is
/// stratified, with per-class quotas allocated by largest remainder;
/// otherwise patients are drawn without regard to class.
pub fn inner_split(
    pool: &[(PatientId, DeltaClass)],
    train_fraction: f64,
    seed: u64,
) -> Result<InnerSplit> {
    let n = pool.len();
    if n < 2 {
        return Err(Error::invalid(format!("inner split needs at least 2 patients, got {n}")));
    }
    let n_val = (((1.0 - train_fraction) * n as f64).round() as usize).clamp(1, n - 1);
    let mut sorted: Vec<&(PatientId, DeltaClass)> = pool.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_class: [Vec<&PatientId>; 3] = Default::default();
    for (p, c) in &sorted {
        by_class[c.code()].push(p);
    }
    let stratified = by_class.iter().all(|v| !v.is_empty());

    let mut val: BTreeSet<&PatientId> = BTreeSet::new();
    if stratified {
        let quotas: Vec<f64> = by_class
            .iter()
            .map(|v| n_val as f64 * v.len() as f64 / n as f64)
            .collect();
        let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let mut remaining = n_val - take.iter().sum::<usize>();
        for c in order {
            if remaining == 0 {
                break;
            }
            if take[c] < by_class[c].len() {
                take[c] += 1;
                remaining -= 1;
            }
        }
        for (members, k) in by_class.iter_mut().zip(take) {
            members.shuffle(&mut rng);
            val.extend(members.iter().take(k).copied());
        }
    } else {
        log::warn!("not every class is present in the pool; inner split is unstratified");
        let mut ids: Vec<&PatientId> = sorted.iter().map(|(p, _)| p).collect();
        ids.shuffle(&mut rng);
        val.extend(ids.into_iter().take(n_val));
    }
    Ok(InnerSplit {
        train: sorted
            .iter()
            .map(|(p, _)| p)
            .filter(|p| !val.contains(p))
            .cloned()
            .collect(),
        val: val.into_iter().cloned().collect(),
        stratified,
    })
}

/// Inverse-frequency class weights `N / (3 · n_c)`; absent classes get 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub weights: [f64; 3],
    pub absent: [bool; 3],
}

pub fn class_weights(labels: &[DeltaClass]) -> ClassWeights {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.code()] += 1;
    }
    let n = labels.len() as f64;
    let k = DeltaClass::COUNT as f64;
    let mut out = ClassWeights {
        weights: [0.0; 3],
        absent: [false; 3],
    };
    for c in 0..3 {
        if counts[c] == 0 {
            out.absent[c] = true;
        } else {
            out.weights[c] = n / (k * counts[c] as f64);
        }
    }
    out
}

fn check_pairs(preds: &[DeltaClass], labels: &[DeltaClass]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::invalid("metrics need at least one prediction"));
    }
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Per class: (true positives, predicted count, true count).
fn confusion(preds: &[DeltaClass], labels: &[DeltaClass]) -> [(usize, usize, usize); 3] {
    let mut out = [(0, 0, 0); 3];
    for (p, l) in preds.iter().zip(labels) {
        out[p.code()].1 += 1;
        out[l.code()].2 += 1;
        if p == l {
            out[p.code()].0 += 1;
        }
    }
    out
}

/// Mean recall over the classes present in `labels`.
pub fn balanced_accuracy(preds: &[DeltaClass], labels: &[DeltaClass]) -> Result<f64> {
    check_pairs(preds, labels)?;
    let (mut sum, mut k) = (0.0, 0usize);
    for (tp, _, n_true) in confusion(preds, labels) {
        if n_true > 0 {
            sum += tp as f64 / n_true as f64;
            k += 1;
        }
    }
    Ok(sum / k as f64)
}

fn per_class_f1(tp: usize, n_pred: usize, n_true: usize) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (n_pred + n_true) as f64
    }
}

/// Unweighted mean F1 over the classes present in `labels`.
pub fn macro_f1(preds: &[DeltaClass], labels: &[DeltaClass]) -> Result<f64> {
    check_pairs(preds, labels)?;
    let (mut sum, mut k) = (0.0, 0usize);
    for (tp, n_pred, n_true) in confusion(preds, labels) {
        if n_true > 0 {
            sum += per_class_f1(tp, n_pred, n_true);
            k += 1;
        }
    }
    Ok(sum / k as f64)
}

/// Support-weighted mean F1.
pub fn weighted_f1(preds: &[DeltaClass], labels: &[DeltaClass]) -> Result<f64> {
    check_pairs(preds, labels)?;
    let total = labels.len() as f64;
    Ok(confusion(preds, labels)
        .iter()
        .map(|&(tp, n_pred, n_true)| n_true as f64 / total * per_class_f1(tp, n_pred, n_true))
        .sum())
}

pub fn f1_score(kind: F1Kind, preds: &[DeltaClass], labels: &[DeltaClass]) -> Result<f64> {
    match kind {
        F1Kind::Macro => macro_f1(preds, labels),
        F1Kind::Weighted => weighted_f1(preds, labels),
    }
}

/// Attention weight of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionEntry {
    pub modality: Modality,
    pub date: NaiveDate,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BagPrediction {
    pub patient: PatientId,
    pub label: DeltaClass,
    pub predicted: DeltaClass,
    pub probs: [f64; 3],
    pub attention: Vec<AttentionEntry>,
}

/// Forward pass on each bag of a frozen model.
pub fn predict(model: &MilModel, bags: &[Bag]) -> Result<Vec<BagPrediction>> {
    bags.iter()
        .map(|bag| {
            let trace = model.forward(bag)?;
            let attention = trace
                .instances
                .iter()
                .zip(&trace.attention)
                .map(|(&(m, row), &alpha)| AttentionEntry {
                    modality: m,
                    date: bag.modality(m).dates[row],
                    alpha,
                })
                .collect();
            Ok(BagPrediction {
                patient: bag.patient.clone(),
                label: bag.label,
                predicted: trace.predicted(),
                probs: [trace.probs[0], trace.probs[1], trace.probs[2]],
                attention,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub patient: PatientId,
    pub predictions: Vec<BagPrediction>,
    pub balanced_accuracy: f64,
    pub f1: f64,
    pub train_patients: Vec<PatientId>,
    pub val_patients: Vec<PatientId>,
    pub stratified: bool,
    pub stats: FoldStats,
    pub class_weights: ClassWeights,
    pub history: History,
    /// Hash of the selected model's parameters.
    pub model_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub task: Task,
    pub horizon: Horizon,
    pub subset: ModalitySubset,
    pub f1_kind: F1Kind,
    pub folds: Vec<FoldResult>,
    /// Held-out patients whose fold could not be trained, with the reason.
    pub skipped: Vec<(PatientId, String)>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl RunReport {
    /// Mean and sample standard deviation of per-fold balanced accuracy.
    pub fn balanced_accuracy(&self) -> (f64, f64) {
        mean_std(&self.folds.iter().map(|f| f.balanced_accuracy).collect::<Vec<_>>())
    }

    pub fn f1(&self) -> (f64, f64) {
        mean_std(&self.folds.iter().map(|f| f.f1).collect::<Vec<_>>())
    }

    fn pooled_pairs(&self) -> (Vec<DeltaClass>, Vec<DeltaClass>) {
        self.folds
            .iter()
            .flat_map(|f| &f.predictions)
            .map(|p| (p.predicted, p.label))
            .unzip()
    }

    /// Balanced accuracy over every held-out prediction of the run.
    pub fn pooled_balanced_accuracy(&self) -> Result<f64> {
        let (p, l) = self.pooled_pairs();
        balanced_accuracy(&p, &l)
    }

    pub fn pooled_f1(&self) -> Result<f64> {
        let (p, l) = self.pooled_pairs();
        f1_score(self.f1_kind, &p, &l)
    }

    pub fn n_predictions(&self) -> usize {
        self.folds.iter().map(|f| f.predictions.len()).sum()
    }
}

/// Labels for one (task, horizon), keyed by patient.
fn endpoint_labels(dataset: &Dataset, task: Task, horizon: Horizon, margins: &Margins) -> Result<Vec<EndpointLabel>> {
    Ok(build_labels(&dataset.clinical, margins)?
        .into_iter()
        .filter(|l| l.task == task && l.horizon == horizon)
        .collect())
}

/// Labelled patients with at least one windowed instance in `subset`.
fn eligible_patients(
    dataset: &Dataset,
    labels: &[EndpointLabel],
    horizon: Horizon,
    subset: ModalitySubset,
    windows: &HorizonWindows,
) -> Vec<PatientId> {
    let labelled: BTreeSet<&PatientId> = labels.iter().map(|l| &l.patient).collect();
    let mut out = BTreeSet::new();
    for table in dataset.tables.iter().filter(|t| subset.contains(t.modality)) {
        for row in &table.rows {
            if !labelled.contains(&row.patient) || out.contains(&row.patient) {
                continue;
            }
            let Some(baseline) = dataset.clinical.baseline(&row.patient) else {
                continue;
            };
            if assign_horizon(days_from_baseline(row.date, baseline), windows) == Some(horizon) {
                out.insert(row.patient.clone());
            }
        }
    }
    out.into_iter().collect()
}

fn mask_bag(mut bag: Bag, subset: ModalitySubset) -> Bag {
    for m in Modality::ALL {
        if !subset.contains(m) {
            let width = bag.instances[m.index()].width;
            bag.instances[m.index()] = InstanceMatrix::empty(width);
        }
    }
    bag
}

struct FoldContext<'a> {
    dataset: &'a Dataset,
    labels: &'a [EndpointLabel],
    class_of: &'a BTreeMap<PatientId, DeltaClass>,
    subset: ModalitySubset,
    cfg: &'a EvalConfig,
}

fn run_fold(ctx: &FoldContext<'_>, fold: &Fold) -> Result<std::result::Result<FoldResult, String>> {
    let cfg = ctx.cfg;
    let pool: Vec<(PatientId, DeltaClass)> = fold.pool.iter().map(|p| (p.clone(), ctx.class_of[p])).collect();
    let split = inner_split(
        &pool,
        cfg.train_fraction,
        derive_seed(cfg.seed, "inner-split") ^ fold.index as u64,
    )?;
    let training: BTreeSet<PatientId> = split.train.iter().cloned().collect();
    let stats = fit_stats(&ctx.dataset.tables, &training, cfg.epsilon)?;
    let transformed = transform_all(&ctx.dataset.tables, &stats)?;
    let bags = build_bags(&transformed, ctx.labels, &cfg.windows, &ctx.dataset.clinical)?;

    let val_set: BTreeSet<&PatientId> = split.val.iter().collect();
    let (mut train_bags, mut val_bags, mut test_bags) = (Vec::new(), Vec::new(), Vec::new());
    for bag in bags.bags {
        let bag = mask_bag(bag, ctx.subset);
        if bag.is_empty() {
            continue;
        }
        if bag.patient == fold.test {
            test_bags.push(bag);
        } else if training.contains(&bag.patient) {
            train_bags.push(bag);
        } else if val_set.contains(&bag.patient) {
            val_bags.push(bag);
        }
    }
    if train_bags.is_empty() || val_bags.is_empty() {
        return Ok(Err("no training or validation bags".into()));
    }
    if test_bags.is_empty() {
        return Ok(Err("held-out patient has no bag".into()));
    }

    let weights = if cfg.class_weighting {
        class_weights(&train_bags.iter().map(|b| b.label).collect::<Vec<_>>())
    } else {
        ClassWeights {
            weights: [1.0; 3],
            absent: [false; 3],
        }
    };
    let model_cfg = ModelConfig {
        input_dims: ctx.dataset.tables.widths(),
        ..cfg.model.clone()
    };
    let model = init_model(&model_cfg, derive_seed(cfg.seed, "model-init") ^ fold.index as u64)?;
    let (model, history) = train(model, &train_bags, &val_bags, &weights.weights)?;
    let predictions = predict(&model, &test_bags)?;
    let (preds, labels): (Vec<_>, Vec<_>) = predictions.iter().map(|p| (p.predicted, p.label)).unzip();
    log::info!(
        "fold {} ({}): best epoch {} of {}, val loss {:.4}",
        fold.index,
        fold.test,
        history.best_epoch,
        history.epochs.len(),
        history.best_val_loss
    );
    Ok(Ok(FoldResult {
        patient: fold.test.clone(),
        balanced_accuracy: balanced_accuracy(&preds, &labels)?,
        f1: f1_score(cfg.f1, &preds, &labels)?,
        predictions,
        train_patients: split.train,
        val_patients: split.val,
        stratified: split.stratified,
        stats,
        class_weights: weights,
        history,
        model_fingerprint: model.fingerprint(),
    }))
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

/// Full LOSO run for one (task, horizon, modality subset).
pub fn run_loso(
    dataset: &Dataset,
    task: Task,
    horizon: Horizon,
    subset: ModalitySubset,
    cfg: &EvalConfig,
) -> Result<RunReport> {
    cfg.validate()?;
    let labels = endpoint_labels(dataset, task, horizon, &cfg.margins)?;
    let patients = eligible_patients(dataset, &labels, horizon, subset, &cfg.windows);
    let folds = loso_folds(&patients)?;
    let class_of: BTreeMap<PatientId, DeltaClass> = labels.iter().map(|l| (l.patient.clone(), l.class)).collect();
    let ctx = FoldContext {
        dataset,
        labels: &labels,
        class_of: &class_of,
        subset,
        cfg,
    };
    log::info!(
        "{task} {horizon} {subset}: {} folds",
        folds.len()
    );
    let outcomes: Vec<Result<std::result::Result<FoldResult, String>>> =
        thread_pool(cfg.jobs)?.install(|| folds.par_iter().map(|f| run_fold(&ctx, f)).collect());

    let mut report = RunReport {
        task,
        horizon,
        subset,
        f1_kind: cfg.f1,
        folds: Vec::new(),
        skipped: Vec::new(),
    };
    for (fold, outcome) in folds.iter().zip(outcomes) {
        match outcome? {
            Ok(r) => report.folds.push(r),
            Err(reason) => {
                log::warn!("fold for {} skipped: {reason}", fold.test);
                report.skipped.push((fold.test.clone(), reason));
            }
        }
    }
    Ok(report)
}

/// Same configuration and seeds, one run per modality pair.
pub fn run_ablation(dataset: &Dataset, task: Task, horizon: Horizon, cfg: &EvalConfig) -> Result<Vec<RunReport>> {
    for table in dataset.tables.iter() {
        if table.rows.is_empty() {
            return Err(Error::invalid(format!(
                "ablation needs all three modalities; the {} table is empty",
                table.modality
            )));
        }
    }
    ModalitySubset::PAIRS
        .iter()
        .map(|s| run_loso(dataset, task, horizon, *s, cfg))
        .collect()
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

/// `task,horizon,subset,fold_patient,balanced_accuracy,macro_f1`
pub fn write_report_csv(path: impl AsRef<Path>, reports: &[RunReport]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = create(path)?;
    writeln!(out, "task,horizon,subset,fold_patient,balanced_accuracy,macro_f1").map_err(io)?;
    for r in reports {
        for f in &r.folds {
            writeln!(
                out,
                "{},{},{},{},{:.6},{:.6}",
                r.task, r.horizon, r.subset, f.patient, f.balanced_accuracy, f.f1
            )
            .map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// `task,horizon,subset,balacc_mean,balacc_std,f1_mean,f1_std`
pub fn write_summary_csv(path: impl AsRef<Path>, reports: &[RunReport]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = create(path)?;
    writeln!(out, "task,horizon,subset,balacc_mean,balacc_std,f1_mean,f1_std").map_err(io)?;
    for r in reports {
        let (bm, bs) = r.balanced_accuracy();
        let (fm, fs) = r.f1();
        writeln!(
            out,
            "{},{},{},{bm:.6},{bs:.6},{fm:.6},{fs:.6}",
            r.task, r.horizon, r.subset
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// `task,horizon,subset,n_bags,balanced_accuracy,f1`: metrics over all
/// held-out predictions of a run at once.
pub fn write_pooled_csv(path: impl AsRef<Path>, reports: &[RunReport]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = create(path)?;
    writeln!(out, "task,horizon,subset,n_bags,balanced_accuracy,f1").map_err(io)?;
    for r in reports {
        if r.n_predictions() == 0 {
            continue;
        }
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6}",
            r.task,
            r.horizon,
            r.subset,
            r.n_predictions(),
            r.pooled_balanced_accuracy()?,
            r.pooled_f1()?
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// `task,horizon,subset,patient,label,predicted,p_worsened,p_stable,p_improved`
pub fn write_predictions_csv(path: impl AsRef<Path>, reports: &[RunReport]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = create(path)?;
    writeln!(
        out,
        "task,horizon,subset,patient,label,predicted,p_worsened,p_stable,p_improved"
    )
    .map_err(io)?;
    for r in reports {
        for p in r.folds.iter().flat_map(|f| &f.predictions) {
            writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{:.6},{:.6}",
                r.task,
                r.horizon,
                r.subset,
                p.patient,
                p.label.code(),
                p.predicted.code(),
                p.probs[0],
                p.probs[1],
                p.probs[2]
            )
            .map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// `patient,horizon,modality,date,alpha`
pub fn write_attention_dump(path: impl AsRef<Path>, reports: &[RunReport]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = create(path)?;
    writeln!(out, "patient,horizon,modality,date,alpha").map_err(io)?;
    for r in reports {
        for p in r.folds.iter().flat_map(|f| &f.predictions) {
            for a in &p.attention {
                writeln!(out, "{},{},{},{},{:.8}", p.patient, r.horizon, a.modality, a.date, a.alpha).map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use DeltaClass::{Improved as I, Stable as S, Worsened as W};

    fn ids(n: usize) -> Vec<PatientId> {
        (0..n).map(|i| PatientId::new(format!("p{i:02}")).unwrap()).collect()
    }

    #[test]
    fn five_patients_give_five_folds() {
        let p = ids(5);
        let folds = loso_folds(&p).unwrap();
        assert_eq!(folds.len(), 5);
        let tested: BTreeSet<_> = folds.iter().map(|f| f.test.clone()).collect();
        assert_eq!(tested, p.iter().cloned().collect());
        for f in &folds {
            assert_eq!(f.pool.len(), 4);
            assert!(!f.pool.contains(&f.test));
        }
        assert!(loso_folds(&ids(2)).is_err());
    }

    fn pool(classes: &[DeltaClass]) -> Vec<(PatientId, DeltaClass)> {
        ids(classes.len()).into_iter().zip(classes.iter().copied()).collect()
    }

    #[test]
    fn split_sizes() {
        let ten = pool(&[W, W, W, S, S, S, S, I, I, I]);
        let s = inner_split(&ten, 0.8, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len()), (8, 2));
        assert!(s.stratified);
        let four = pool(&[W, S, I, S]);
        let s = inner_split(&four, 0.8, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len()), (3, 1));
        assert_eq!(inner_split(&four, 0.8, 1).unwrap(), s);
        assert!(inner_split(&pool(&[W]), 0.8, 1).is_err());
    }

    #[test]
    fn split_is_patient_disjoint_and_covers_pool() {
        let p = pool(&[W, S, I, S, S, W, I, I, S, W, S, S, I, W, S]);
        for seed in 0..20 {
            let s = inner_split(&p, 0.8, seed).unwrap();
            let train: BTreeSet<_> = s.train.iter().collect();
            let val: BTreeSet<_> = s.val.iter().collect();
            assert!(train.is_disjoint(&val));
            assert_eq!(train.len() + val.len(), p.len());
            assert_eq!(val.len(), 3);
        }
    }

    #[test]
    fn stratified_split_spreads_classes_by_largest_remainder() {
        // 10 W, 5 S, 5 I with 4 validation slots: quotas 2, 1, 1.
        let mut classes = vec![W; 10];
        classes.extend([S; 5]);
        classes.extend([I; 5]);
        let p = pool(&classes);
        let class_of: BTreeMap<_, _> = p.iter().cloned().collect();
        let s = inner_split(&p, 0.8, 3).unwrap();
        let mut counts = [0; 3];
        for v in &s.val {
            counts[class_of[v].code()] += 1;
        }
        assert_eq!(counts, [2, 1, 1]);
    }

    #[test]
    fn missing_class_falls_back_to_unstratified() {
        let s = inner_split(&pool(&[W, W, S, S, S]), 0.8, 0).unwrap();
        assert!(!s.stratified);
        assert_eq!(s.val.len(), 1);
    }

    fn labels_from_counts(counts: [usize; 3]) -> Vec<DeltaClass> {
        let mut v = Vec::new();
        for (c, n) in counts.iter().enumerate() {
            v.extend(std::iter::repeat_n(DeltaClass::from_code(c).unwrap(), *n));
        }
        v
    }

    #[test]
    fn class_weights_inverse_frequency() {
        let w = class_weights(&labels_from_counts([132, 252, 78]));
        let n = 462.0;
        assert_relative_eq!(w.weights[0], n / (3.0 * 132.0), max_relative = 1e-15);
        assert_relative_eq!(w.weights[1], n / (3.0 * 252.0), max_relative = 1e-15);
        assert_relative_eq!(w.weights[2], n / (3.0 * 78.0), max_relative = 1e-15);
        assert!((w.weights[0] - 1.1667).abs() < 1e-4);
        assert!((w.weights[1] - 0.6111).abs() < 1e-4);
        assert!((w.weights[2] - 1.9744).abs() < 1e-4);

        assert_eq!(class_weights(&labels_from_counts([10, 10, 10])).weights, [1.0; 3]);

        let w = class_weights(&labels_from_counts([5, 5, 0]));
        assert_relative_eq!(w.weights[0], 10.0 / 15.0);
        assert_relative_eq!(w.weights[1], 10.0 / 15.0);
        assert_eq!(w.weights[2], 0.0);
        assert_eq!(w.absent, [false, false, true]);
    }

    #[test]
    fn balanced_accuracy_examples() {
        assert_eq!(balanced_accuracy(&[W, S, I], &[W, S, I]).unwrap(), 1.0);
        assert_relative_eq!(balanced_accuracy(&[S, S, S, S], &[W, S, I, I]).unwrap(), 1.0 / 3.0);
        assert_relative_eq!(balanced_accuracy(&[W, S, S], &[W, W, S]).unwrap(), 0.75);
        assert!(balanced_accuracy(&[], &[]).is_err());
        assert!(balanced_accuracy(&[W], &[W, S]).is_err());
    }

    #[test]
    fn macro_f1_examples() {
        assert_eq!(macro_f1(&[W, S, I], &[W, S, I]).unwrap(), 1.0);
        assert_eq!(macro_f1(&[S, W], &[W, S]).unwrap(), 0.0);
        assert_relative_eq!(macro_f1(&[W, S, S], &[W, W, S]).unwrap(), 2.0 / 3.0);
        assert!(macro_f1(&[], &[]).is_err());
    }

    #[test]
    fn weighted_f1_example() {
        // F1_W = 2/3 with support 2, F1_S = 2/3 with support 1.
        assert_relative_eq!(weighted_f1(&[W, S, S], &[W, W, S]).unwrap(), 2.0 / 3.0);
        // F1_W = 2/3 (support 3), F1_S = 0 (support 1).
        assert_relative_eq!(weighted_f1(&[W, W, S, W], &[W, W, W, S]).unwrap(), 0.75 * (2.0 / 3.0));
    }

    #[test]
    fn subset_labels_and_parsing() {
        assert_eq!(ModalitySubset::ALL.label(), "P+S+E");
        let labels: Vec<String> = ModalitySubset::PAIRS.iter().map(|s| s.label()).collect();
        assert_eq!(labels, ["P+S", "P+E", "S+E"]);
        assert_eq!("phys,sleep".parse::<ModalitySubset>().unwrap().label(), "P+S");
        assert_eq!("S+E".parse::<ModalitySubset>().unwrap().label(), "S+E");
        assert_eq!("all".parse::<ModalitySubset>().unwrap(), ModalitySubset::ALL);
        assert!("".parse::<ModalitySubset>().is_err());
        assert!("phys,gps".parse::<ModalitySubset>().is_err());
    }

    #[test]
    fn mean_std_uses_sample_deviation() {
        let (m, s) = mean_std(&[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(m, 0.5);
        assert_relative_eq!(s, (1.0f64 / 3.0).sqrt());
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }

    fn class_strategy() -> impl Strategy<Value = DeltaClass> {
        (0usize..3).prop_map(|c| DeltaClass::from_code(c).unwrap())
    }

    proptest! {
        #[test]
        fn metrics_stay_in_unit_interval(
            pairs in prop::collection::vec((class_strategy(), class_strategy()), 1..40)
        ) {
            let (p, l): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            for v in [
                balanced_accuracy(&p, &l).unwrap(),
                macro_f1(&p, &l).unwrap(),
                weighted_f1(&p, &l).unwrap(),
            ] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert_eq!(balanced_accuracy(&l, &l).unwrap(), 1.0);
            prop_assert_eq!(macro_f1(&l, &l).unwrap(), 1.0);
        }

        #[test]
        fn split_is_seed_deterministic(seed in any::<u64>(), n in 2usize..25) {
            let classes: Vec<DeltaClass> = (0..n).map(|i| DeltaClass::from_code(i % 3).unwrap()).collect();
            let p = pool(&classes);
            prop_assert_eq!(inner_split(&p, 0.8, seed).unwrap(), inner_split(&p, 0.8, seed).unwrap());
        }
    }
}

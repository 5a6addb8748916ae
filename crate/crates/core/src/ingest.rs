//! CSV ingestion and validation for modality tables, clinical endpoint
//! records and raw ECG files, plus the class/instance count summaries.
//!
//! Missing feature values are empty cells. Feature counts come from the
//! header of each modality file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::cohort::{
    assign_horizon, compute_delta, days_from_baseline, discretize_delta, parse_date, DeltaClass,
    EndpointLabel, Horizon, HorizonWindows, InstanceRow, Margins, Modality, PatientId, Task,
};
use crate::error::{Error, Result};
use crate::hrv::EcgRecording;

pub const PHYS_FILE: &str = "phys.csv";
pub const SLEEP_FILE: &str = "sleep.csv";
pub const HRV_FILE: &str = "hrv.csv";
pub const CLINICAL_FILE: &str = "clinical.csv";

pub fn modality_file(modality: Modality) -> &'static str {
    match modality {
        Modality::Phys => PHYS_FILE,
        Modality::Sleep => SLEEP_FILE,
        Modality::Hrv => HRV_FILE,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityTable {
    pub modality: Modality,
    pub feature_names: Vec<String>,
    pub rows: Vec<InstanceRow>,
}

impl ModalityTable {
    /// Validates modality, feature width and (patient, date) uniqueness.
    pub fn new(modality: Modality, feature_names: Vec<String>, rows: Vec<InstanceRow>) -> Result<Self> {
        let width = feature_names.len();
        let mut seen = BTreeSet::new();
        for (i, row) in rows.iter().enumerate() {
            if row.modality != modality {
                return Err(Error::invalid(format!(
                    "row {i} has modality {} in a {modality} table",
                    row.modality
                )));
            }
            if row.features.len() != width {
                return Err(Error::Shape(format!(
                    "row {i} of {modality} has {} features, expected {width}",
                    row.features.len()
                )));
            }
            if !seen.insert((&row.patient, row.date)) {
                return Err(Error::invalid(format!(
                    "duplicate {modality} row for patient {} on {}",
                    row.patient, row.date
                )));
            }
        }
        Ok(ModalityTable {
            modality,
            feature_names,
            rows,
        })
    }

    pub fn empty(modality: Modality, feature_names: Vec<String>) -> Self {
        ModalityTable {
            modality,
            feature_names,
            rows: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn patients(&self) -> BTreeSet<&PatientId> {
        self.rows.iter().map(|r| &r.patient).collect()
    }

    /// Rows whose patient satisfies `keep`, in the original order.
    pub fn filter_patients(&self, keep: impl Fn(&PatientId) -> bool) -> ModalityTable {
        ModalityTable {
            modality: self.modality,
            feature_names: self.feature_names.clone(),
            rows: self.rows.iter().filter(|r| keep(&r.patient)).cloned().collect(),
        }
    }
}

/// One table per modality, indexed by [`Modality::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityTables {
    tables: [ModalityTable; 3],
}

impl ModalityTables {
    pub fn new(phys: ModalityTable, sleep: ModalityTable, hrv: ModalityTable) -> Result<Self> {
        for (t, m) in [&phys, &sleep, &hrv].iter().zip(Modality::ALL) {
            if t.modality != m {
                return Err(Error::invalid(format!("expected {m} table, got {}", t.modality)));
            }
        }
        Ok(ModalityTables {
            tables: [phys, sleep, hrv],
        })
    }

    pub fn get(&self, modality: Modality) -> &ModalityTable {
        &self.tables[modality.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModalityTable> {
        self.tables.iter()
    }

    pub fn map(&self, mut f: impl FnMut(&ModalityTable) -> Result<ModalityTable>) -> Result<Self> {
        ModalityTables::new(f(&self.tables[0])?, f(&self.tables[1])?, f(&self.tables[2])?)
    }

    pub fn widths(&self) -> [usize; 3] {
        [self.tables[0].width(), self.tables[1].width(), self.tables[2].width()]
    }

    pub fn patients(&self) -> BTreeSet<&PatientId> {
        self.tables.iter().flat_map(|t| t.patients()).collect()
    }
}

fn read_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn record_line(record: &csv::StringRecord, fallback: usize) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(fallback)
}

/// Loads `patient_id,date,<feature...>`. Row numbers in errors are 1-based
/// file lines (the header is line 1).
pub fn load_modality_table(path: impl AsRef<Path>, modality: Modality) -> Result<ModalityTable> {
    let path = path.as_ref();
    let mut reader = read_csv(path)?;
    let header = reader.headers()?.clone();
    if header.len() < 3 || &header[0] != "patient_id" || &header[1] != "date" {
        return Err(Error::Header {
            path: path.to_path_buf(),
            message: "expected `patient_id,date,<feature_1>,...`".into(),
        });
    }
    let feature_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    if let Some(empty) = feature_names.iter().position(|n| n.is_empty()) {
        return Err(Error::Header {
            path: path.to_path_buf(),
            message: format!("feature column {} has an empty name", empty + 3),
        });
    }

    let mut rows = Vec::new();
    let mut first_seen: HashMap<(String, NaiveDate), usize> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record_line(&record, i + 2);
        if record.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, found {}", header.len(), record.len()),
            ));
        }
        let patient = PatientId::new(&record[0]).map_err(|e| parse_err(path, line, e.to_string()))?;
        let date = parse_date(&record[1])
            .ok_or_else(|| parse_err(path, line, format!("malformed date '{}'", &record[1])))?;
        let features = record
            .iter()
            .skip(2)
            .enumerate()
            .map(|(j, cell)| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(Some)
                        .ok_or_else(|| {
                            parse_err(
                                path,
                                line,
                                format!("non-numeric value '{cell}' in column '{}'", feature_names[j]),
                            )
                        })
                }
            })
            .collect::<Result<Vec<_>>>()?;

        if let Some(&first_row) = first_seen.get(&(patient.as_str().to_string(), date)) {
            return Err(Error::DuplicateKey {
                path: path.to_path_buf(),
                patient: patient.to_string(),
                date: date.to_string(),
                first_row,
                second_row: line,
            });
        }
        first_seen.insert((patient.as_str().to_string(), date), line);
        rows.push(InstanceRow {
            patient,
            modality,
            date,
            features,
        });
    }
    ModalityTable::new(modality, feature_names, rows)
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Writes `f64` values in shortest round-trip form so reload is bit-exact.
pub fn write_modality_table(path: impl AsRef<Path>, table: &ModalityTable) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    write!(out, "patient_id,date").map_err(io)?;
    for name in &table.feature_names {
        write!(out, ",{name}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for row in &table.rows {
        write!(out, "{},{}", row.patient, row.date).map_err(io)?;
        for v in &row.features {
            match v {
                Some(x) => write!(out, ",{x}").map_err(io)?,
                None => write!(out, ",").map_err(io)?,
            }
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Timepoint {
    Baseline,
    Followup(Horizon),
}

impl Timepoint {
    pub fn name(self) -> &'static str {
        match self {
            Timepoint::Baseline => "BL",
            Timepoint::Followup(h) => h.name(),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BL" => Some(Timepoint::Baseline),
            "M3" => Some(Timepoint::Followup(Horizon::M3)),
            "M6" => Some(Timepoint::Followup(Horizon::M6)),
            _ => None,
        }
    }
}

/// Baseline dates and endpoint values per (patient, task, timepoint).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClinicalRecords {
    baselines: BTreeMap<PatientId, NaiveDate>,
    values: BTreeMap<(PatientId, Task, Timepoint), f64>,
}

impl ClinicalRecords {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_baseline(&mut self, patient: PatientId, date: NaiveDate) {
        self.baselines.insert(patient, date);
    }

    pub fn set_value(&mut self, patient: PatientId, task: Task, timepoint: Timepoint, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("non-finite clinical value for {patient}")));
        }
        self.values.insert((patient, task, timepoint), value);
        Ok(())
    }

    pub fn baseline(&self, patient: &PatientId) -> Option<NaiveDate> {
        self.baselines.get(patient).copied()
    }

    pub fn baselines(&self) -> &BTreeMap<PatientId, NaiveDate> {
        &self.baselines
    }

    pub fn value(&self, patient: &PatientId, task: Task, timepoint: Timepoint) -> Option<f64> {
        self.values.get(&(patient.clone(), task, timepoint)).copied()
    }

    pub fn patients(&self) -> impl Iterator<Item = &PatientId> {
        self.baselines.keys()
    }

    /// Every patient that appears in any modality table needs a baseline.
    pub fn require_baselines(&self, tables: &ModalityTables) -> Result<()> {
        match tables.patients().into_iter().find(|p| !self.baselines.contains_key(*p)) {
            Some(p) => Err(Error::MissingBaseline(p.clone())),
            None => Ok(()),
        }
    }
}

/// Loads `patient_id,baseline_date,task,timepoint,value`. An empty value
/// cell records the visit as absent.
pub fn load_clinical(path: impl AsRef<Path>) -> Result<ClinicalRecords> {
    let path = path.as_ref();
    let mut reader = read_csv(path)?;
    let header = reader.headers()?.clone();
    let expected = ["patient_id", "baseline_date", "task", "timepoint", "value"];
    if header.len() != expected.len() || header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::Header {
            path: path.to_path_buf(),
            message: format!("expected `{}`", expected.join(",")),
        });
    }
    let mut records = ClinicalRecords::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record_line(&record, i + 2);
        if record.len() != expected.len() {
            return Err(parse_err(path, line, format!("expected 5 columns, found {}", record.len())));
        }
        let patient = PatientId::new(&record[0]).map_err(|e| parse_err(path, line, e.to_string()))?;
        if record[1].is_empty() {
            return Err(Error::MissingBaseline(patient));
        }
        let baseline = parse_date(&record[1])
            .ok_or_else(|| parse_err(path, line, format!("malformed baseline date '{}'", &record[1])))?;
        match records.baselines.get(&patient) {
            Some(b) if *b != baseline => {
                return Err(parse_err(
                    path,
                    line,
                    format!("conflicting baseline date for {patient}: {b} vs {baseline}"),
                ))
            }
            _ => {
                records.baselines.insert(patient.clone(), baseline);
            }
        }
        let task: Task = record[2].parse().map_err(|e: Error| parse_err(path, line, e.to_string()))?;
        let timepoint = Timepoint::parse(&record[3])
            .ok_or_else(|| parse_err(path, line, format!("unknown timepoint '{}'", &record[3])))?;
        if record[4].is_empty() {
            continue;
        }
        let value: f64 = record[4]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(path, line, format!("non-numeric value '{}'", &record[4])))?;
        let key = (patient, task, timepoint);
        if records.values.contains_key(&key) {
            return Err(parse_err(
                path,
                line,
                format!("duplicate {} {} value for {}", task, timepoint.name(), key.0),
            ));
        }
        records.values.insert(key, value);
    }
    Ok(records)
}

pub fn write_clinical(path: impl AsRef<Path>, records: &ClinicalRecords) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "patient_id,baseline_date,task,timepoint,value").map_err(io)?;
    for ((patient, task, tp), value) in &records.values {
        let b = records.baselines[patient];
        writeln!(out, "{patient},{b},{task},{},{value}", tp.name()).map_err(io)?;
    }
    // Patients with a baseline but no endpoint values still need a row.
    let with_values: BTreeSet<&PatientId> = records.values.keys().map(|k| &k.0).collect();
    for (patient, b) in &records.baselines {
        if !with_values.contains(patient) {
            writeln!(out, "{patient},{b},facit,BL,").map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// One label per (patient, task, horizon) where both the baseline and the
/// follow-up value exist. Ordered by patient, task, horizon.
pub fn build_labels(clinical: &ClinicalRecords, margins: &Margins) -> Result<Vec<EndpointLabel>> {
    margins.validate()?;
    let mut labels = Vec::new();
    for patient in clinical.patients() {
        for task in Task::ALL {
            let Some(bl) = clinical.value(patient, task, Timepoint::Baseline) else {
                continue;
            };
            for horizon in Horizon::ALL {
                let Some(y) = clinical.value(patient, task, Timepoint::Followup(horizon)) else {
                    continue;
                };
                let delta = compute_delta(y, bl)?;
                labels.push(EndpointLabel {
                    patient: patient.clone(),
                    task,
                    horizon,
                    delta,
                    class: discretize_delta(delta, margins.for_task(task))?,
                });
            }
        }
    }
    Ok(labels)
}

/// Patient counts per (task, horizon, class) and windowed instance counts
/// per (modality, task, horizon, class).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortSummary {
    pub patient_counts: BTreeMap<(Task, Horizon), [usize; 3]>,
    pub instance_counts: BTreeMap<(Modality, Task, Horizon), [usize; 3]>,
}

impl CohortSummary {
    pub fn zeros() -> Self {
        let mut patient_counts = BTreeMap::new();
        let mut instance_counts = BTreeMap::new();
        for task in Task::ALL {
            for h in Horizon::ALL {
                patient_counts.insert((task, h), [0; 3]);
                for m in Modality::ALL {
                    instance_counts.insert((m, task, h), [0; 3]);
                }
            }
        }
        CohortSummary {
            patient_counts,
            instance_counts,
        }
    }

    pub fn patients(&self, task: Task, horizon: Horizon) -> [usize; 3] {
        self.patient_counts[&(task, horizon)]
    }

    pub fn instances(&self, modality: Modality, task: Task, horizon: Horizon) -> [usize; 3] {
        self.instance_counts[&(modality, task, horizon)]
    }

    /// Table-I layout: `task,horizon,worsened,stable,improved,total`.
    pub fn write_class_counts(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(out, "task,horizon,worsened,stable,improved,total").map_err(io)?;
        for ((task, h), c) in &self.patient_counts {
            writeln!(out, "{task},{h},{},{},{},{}", c[0], c[1], c[2], c.iter().sum::<usize>()).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Table-II layout: `modality,task,horizon,class,instances`.
    pub fn write_instance_counts(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(out, "modality,task,horizon,class,instances").map_err(io)?;
        for ((m, task, h), c) in &self.instance_counts {
            for class in DeltaClass::ALL {
                writeln!(out, "{m},{task},{h},{},{}", class.name(), c[class.code()]).map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }
}

pub fn summarize_cohort(
    tables: &ModalityTables,
    clinical: &ClinicalRecords,
    labels: &[EndpointLabel],
    windows: &HorizonWindows,
) -> CohortSummary {
    let mut summary = CohortSummary::zeros();
    let mut by_key: HashMap<(&PatientId, Horizon), Vec<(Task, DeltaClass)>> = HashMap::new();
    for l in labels {
        summary.patient_counts.get_mut(&(l.task, l.horizon)).unwrap()[l.class.code()] += 1;
        by_key.entry((&l.patient, l.horizon)).or_default().push((l.task, l.class));
    }
    for table in tables.iter() {
        for row in &table.rows {
            let Some(b) = clinical.baseline(&row.patient) else {
                continue;
            };
            let Some(h) = assign_horizon(days_from_baseline(row.date, b), windows) else {
                continue;
            };
            if let Some(entries) = by_key.get(&(&row.patient, h)) {
                for (task, class) in entries {
                    summary.instance_counts.get_mut(&(table.modality, *task, h)).unwrap()[class.code()] += 1;
                }
            }
        }
    }
    summary
}

/// Keeps patients whose observed dates average at least `min_days_per_week`
/// over their own observation span. Not applied unless requested.
pub fn filter_adherence(table: &ModalityTable, min_days_per_week: f64) -> ModalityTable {
    let mut spans: BTreeMap<&PatientId, (NaiveDate, NaiveDate, usize)> = BTreeMap::new();
    for r in &table.rows {
        let e = spans.entry(&r.patient).or_insert((r.date, r.date, 0));
        e.0 = e.0.min(r.date);
        e.1 = e.1.max(r.date);
        e.2 += 1;
    }
    let keep: BTreeSet<PatientId> = spans
        .into_iter()
        .filter(|(_, (lo, hi, n))| {
            let weeks = ((*hi - *lo).num_days() + 1) as f64 / 7.0;
            *n as f64 / weeks.max(1.0) >= min_days_per_week
        })
        .map(|(p, _)| p.clone())
        .collect();
    table.filter_patients(|p| keep.contains(p))
}

/// Modality tables and clinical records for one cohort directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub tables: ModalityTables,
    pub clinical: ClinicalRecords,
}

impl Dataset {
    pub fn new(tables: ModalityTables, clinical: ClinicalRecords) -> Result<Self> {
        clinical.require_baselines(&tables)?;
        Ok(Dataset { tables, clinical })
    }

    /// Reads `phys.csv`, `sleep.csv`, `hrv.csv` and `clinical.csv`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let load = |m: Modality| load_modality_table(dir.join(modality_file(m)), m);
        let tables = ModalityTables::new(load(Modality::Phys)?, load(Modality::Sleep)?, load(Modality::Hrv)?)?;
        let clinical = load_clinical(dir.join(CLINICAL_FILE))?;
        Dataset::new(tables, clinical)
    }

    pub fn input_paths(dir: impl AsRef<Path>) -> Vec<PathBuf> {
        let dir = dir.as_ref();
        Modality::ALL
            .iter()
            .map(|m| dir.join(modality_file(*m)))
            .chain(std::iter::once(dir.join(CLINICAL_FILE)))
            .collect()
    }
}

/// Reads ECG recordings from either a long CSV with header
/// `patient_id,date,fs,sample` (one sample per row, several recordings
/// allowed) or a single-column `sample` CSV with a `<stem>.meta` sidecar of
/// `key=value` lines (`patient_id`, `date`, optional `fs`).
pub fn load_ecg_file(path: impl AsRef<Path>) -> Result<Vec<EcgRecording>> {
    let path = path.as_ref();
    let mut reader = read_csv(path)?;
    let header = reader.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols == ["patient_id", "date", "fs", "sample"] {
        let mut recordings: Vec<EcgRecording> = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let line = record_line(&record, i + 2);
            if record.len() != 4 {
                return Err(parse_err(path, line, "expected 4 columns"));
            }
            let patient = PatientId::new(&record[0]).map_err(|e| parse_err(path, line, e.to_string()))?;
            let date = parse_date(&record[1]).ok_or_else(|| parse_err(path, line, "malformed date"))?;
            let fs: f64 = record[2].parse().map_err(|_| parse_err(path, line, "non-numeric fs"))?;
            let sample: f64 = record[3].parse().map_err(|_| parse_err(path, line, "non-numeric sample"))?;
            match recordings.last_mut() {
                Some(r) if r.patient == patient && r.date == date && r.fs == fs => r.samples.push(sample),
                _ => recordings.push(
                    EcgRecording::new(patient, date, fs, vec![sample])
                        .map_err(|e| parse_err(path, line, e.to_string()))?,
                ),
            }
        }
        if recordings.is_empty() {
            return Err(parse_err(path, 1, "no samples"));
        }
        Ok(recordings)
    } else if cols == ["sample"] {
        let meta_path = path.with_extension("meta");
        let meta = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let mut kv: HashMap<String, String> = HashMap::new();
        for (i, raw) in meta.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(&meta_path, i + 1, "expected key=value"))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| parse_err(&meta_path, 0, format!("missing key '{k}'")));
        let patient = PatientId::new(get("patient_id")?.as_str())?;
        let date = parse_date(get("date")?).ok_or_else(|| parse_err(&meta_path, 0, "malformed date"))?;
        let fs = match kv.get("fs") {
            Some(v) => v.parse().map_err(|_| parse_err(&meta_path, 0, "non-numeric fs"))?,
            None => crate::hrv::DEFAULT_FS,
        };
        let mut samples = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let line = record_line(&record, i + 2);
            samples.push(record[0].parse::<f64>().map_err(|_| parse_err(path, line, "non-numeric sample"))?);
        }
        Ok(vec![EcgRecording::new(patient, date, fs, samples)?])
    } else {
        Err(Error::Header {
            path: path.to_path_buf(),
            message: "expected `patient_id,date,fs,sample` or `sample`".into(),
        })
    }
}

pub fn write_ecg_file(path: impl AsRef<Path>, recording: &EcgRecording) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "patient_id,date,fs,sample").map_err(io)?;
    for s in &recording.samples {
        writeln!(out, "{},{},{},{s}", recording.patient, recording.date, recording.fs).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_well_formed_table_with_missing_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "phys.csv",
            "patient_id,date,steps,kcal\np1,2023-01-01,100,2.5\np1,2023-01-02,,3\np2,2023-01-01,50.5,1\n",
        );
        let t = load_modality_table(&p, Modality::Phys).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.feature_names, vec!["steps", "kcal"]);
        assert_eq!(t.rows[1].features, vec![None, Some(3.0)]);
    }

    #[test]
    fn duplicate_key_cites_both_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "sleep.csv",
            "patient_id,date,dur\np1,2023-01-01,7\np2,2023-01-01,6\np1,2023-01-01,8\n",
        );
        match load_modality_table(&p, Modality::Sleep) {
            Err(Error::DuplicateKey {
                first_row, second_row, ..
            }) => {
                assert_eq!((first_row, second_row), (2, 4));
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_row_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let bad_date = write(dir.path(), "a.csv", "patient_id,date,x\np1,2023-13-01,1\n");
        assert!(matches!(load_modality_table(&bad_date, Modality::Phys), Err(Error::Parse { row: 2, .. })));
        let bad_num = write(dir.path(), "b.csv", "patient_id,date,x\np1,2023-01-01,1\np1,2023-01-02,abc\n");
        assert!(matches!(load_modality_table(&bad_num, Modality::Phys), Err(Error::Parse { row: 3, .. })));
        let bad_cols = write(dir.path(), "c.csv", "patient_id,date,x\np1,2023-01-01,1,2\n");
        assert!(matches!(load_modality_table(&bad_cols, Modality::Phys), Err(Error::Parse { row: 2, .. })));
        let bad_header = write(dir.path(), "d.csv", "pid,date,x\n");
        assert!(matches!(load_modality_table(&bad_header, Modality::Phys), Err(Error::Header { .. })));
    }

    #[test]
    fn clinical_absent_visit_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "clinical.csv",
            "patient_id,baseline_date,task,timepoint,value\np1,2023-01-01,facit,BL,30\np1,2023-01-01,facit,M3,24\n",
        );
        let c = load_clinical(&p).unwrap();
        let p1 = PatientId::new("p1").unwrap();
        assert_eq!(c.value(&p1, Task::Facit, Timepoint::Followup(Horizon::M3)), Some(24.0));
        assert_eq!(c.value(&p1, Task::Facit, Timepoint::Followup(Horizon::M6)), None);

        let bad = write(
            dir.path(),
            "bad.csv",
            "patient_id,baseline_date,task,timepoint,value\np1,2023-01-01,facit,BL,abc\n",
        );
        assert!(matches!(load_clinical(&bad), Err(Error::Parse { row: 2, .. })));
    }

    #[test]
    fn missing_baseline_names_patient() {
        let c = ClinicalRecords::new();
        let row = InstanceRow {
            patient: PatientId::new("ghost").unwrap(),
            modality: Modality::Phys,
            date: parse_date("2023-01-01").unwrap(),
            features: vec![Some(1.0)],
        };
        let tables = ModalityTables::new(
            ModalityTable::new(Modality::Phys, vec!["x".into()], vec![row]).unwrap(),
            ModalityTable::empty(Modality::Sleep, vec!["y".into()]),
            ModalityTable::empty(Modality::Hrv, vec!["z".into()]),
        )
        .unwrap();
        match c.require_baselines(&tables) {
            Err(Error::MissingBaseline(p)) => assert_eq!(p.as_str(), "ghost"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn build_labels_examples() {
        let mut c = ClinicalRecords::new();
        let p1 = PatientId::new("p1").unwrap();
        let p2 = PatientId::new("p2").unwrap();
        let b = parse_date("2023-01-01").unwrap();
        c.set_baseline(p1.clone(), b);
        c.set_baseline(p2.clone(), b);
        c.set_value(p1.clone(), Task::Facit, Timepoint::Baseline, 30.0).unwrap();
        c.set_value(p1.clone(), Task::Facit, Timepoint::Followup(Horizon::M3), 24.0).unwrap();
        c.set_value(p2.clone(), Task::Handgrip, Timepoint::Baseline, 20.0).unwrap();
        c.set_value(p2.clone(), Task::Handgrip, Timepoint::Followup(Horizon::M6), 20.0).unwrap();
        c.set_value(p2.clone(), Task::Facit, Timepoint::Baseline, 40.0).unwrap();
        let labels = build_labels(&c, &Margins::default()).unwrap();
        assert_eq!(labels.len(), 2);
        assert_eq!((labels[0].delta, labels[0].class), (-6.0, DeltaClass::Worsened));
        assert_eq!((labels[1].delta, labels[1].class), (0.0, DeltaClass::Stable));
        assert_eq!(labels[1].task, Task::Handgrip);
    }

    #[test]
    fn summary_of_empty_cohort_is_zero() {
        let tables = ModalityTables::new(
            ModalityTable::empty(Modality::Phys, vec![]),
            ModalityTable::empty(Modality::Sleep, vec![]),
            ModalityTable::empty(Modality::Hrv, vec![]),
        )
        .unwrap();
        let s = summarize_cohort(&tables, &ClinicalRecords::new(), &[], &HorizonWindows::default());
        assert_eq!(s, CohortSummary::zeros());
        assert!(s.patient_counts.values().all(|c| c.iter().sum::<usize>() == 0));
    }

    #[test]
    fn summary_reproduces_class_row_counts() {
        // 132 worsened, 252 stable, 78 improved FACIT M3 labels.
        let mut labels = Vec::new();
        for (class, n) in [(DeltaClass::Worsened, 132), (DeltaClass::Stable, 252), (DeltaClass::Improved, 78)] {
            for i in 0..n {
                labels.push(EndpointLabel {
                    patient: PatientId::new(format!("{}-{i}", class.name())).unwrap(),
                    task: Task::Facit,
                    horizon: Horizon::M3,
                    delta: 0.0,
                    class,
                });
            }
        }
        let tables = ModalityTables::new(
            ModalityTable::empty(Modality::Phys, vec![]),
            ModalityTable::empty(Modality::Sleep, vec![]),
            ModalityTable::empty(Modality::Hrv, vec![]),
        )
        .unwrap();
        let s = summarize_cohort(&tables, &ClinicalRecords::new(), &labels, &HorizonWindows::default());
        let row = s.patients(Task::Facit, Horizon::M3);
        assert_eq!(row, [132, 252, 78]);
        assert_eq!(row.iter().sum::<usize>(), 462);
    }

    #[test]
    fn ecg_sidecar_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "rec.csv", "sample\n0.1\n0.2\n0.3\n");
        write(dir.path(), "rec.meta", "patient_id = p9\ndate=2023-05-01\n# comment\n");
        let recs = load_ecg_file(&p).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].fs, 130.0);
        assert_eq!(recs[0].samples, vec![0.1, 0.2, 0.3]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn table_round_trip_is_bit_exact(
            cells in prop::collection::vec(prop::collection::vec(prop::option::of(any::<f64>().prop_filter("finite", |v| v.is_finite())), 3), 0..20)
        ) {
            let base = parse_date("2022-06-01").unwrap();
            let rows: Vec<InstanceRow> = cells.into_iter().enumerate().map(|(i, f)| InstanceRow {
                patient: PatientId::new(format!("p{}", i % 3)).unwrap(),
                modality: Modality::Hrv,
                date: base + chrono::Days::new(i as u64),
                features: f,
            }).collect();
            let t = ModalityTable::new(Modality::Hrv, vec!["a".into(), "b".into(), "c".into()], rows).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("hrv.csv");
            write_modality_table(&p, &t).unwrap();
            let back = load_modality_table(&p, Modality::Hrv).unwrap();
            prop_assert_eq!(back.rows.len(), t.rows.len());
            for (a, b) in back.rows.iter().zip(&t.rows) {
                prop_assert_eq!(&a.patient, &b.patient);
                prop_assert_eq!(a.date, b.date);
                let bits = |v: &Vec<Option<f64>>| v.iter().map(|x| x.map(f64::to_bits)).collect::<Vec<_>>();
                prop_assert_eq!(bits(&a.features), bits(&b.features));
            }
        }
    }
}

//! Patient–horizon multimodal bags.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::cohort::{
    assign_horizon, days_from_baseline, DeltaClass, EndpointLabel, Horizon, HorizonWindows, Modality,
    PatientId, Task,
};
use crate::error::{Error, Result};
use crate::ingest::{ClinicalRecords, ModalityTables};

/// Row-major `len × width` matrix of one modality's instances, with the
/// observation date of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMatrix {
    pub width: usize,
    pub data: Vec<f64>,
    pub dates: Vec<NaiveDate>,
}

impl InstanceMatrix {
    pub fn empty(width: usize) -> Self {
        InstanceMatrix {
            width,
            data: Vec::new(),
            dates: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn push(&mut self, date: NaiveDate, row: &[f64]) {
        debug_assert_eq!(row.len(), self.width);
        self.data.extend_from_slice(row);
        self.dates.push(date);
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.width.max(1)).take(self.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub patient: PatientId,
    pub task: Task,
    pub horizon: Horizon,
    pub label: DeltaClass,
    /// Indexed by [`Modality::index`].
    pub instances: [InstanceMatrix; 3],
}

impl Bag {
    pub fn modality(&self, m: Modality) -> &InstanceMatrix {
        &self.instances[m.index()]
    }

    pub fn len(&self) -> usize {
        self.instances.iter().map(InstanceMatrix::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.instances[0].len(), self.instances[1].len(), self.instances[2].len()]
    }

    /// (modality, row) for each instance in concatenation order.
    pub fn instance_index(&self) -> impl Iterator<Item = (Modality, usize)> + '_ {
        Modality::ALL
            .into_iter()
            .flat_map(move |m| (0..self.instances[m.index()].len()).map(move |i| (m, i)))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BagSet {
    pub bags: Vec<Bag>,
    /// Labelled pairs without any windowed instance.
    pub dropped: Vec<(PatientId, Task, Horizon)>,
}

/// Builds one bag per labelled (patient, task, horizon) from already
/// transformed tables. Instances outside the label's horizon window are
/// excluded; rows are chronological within each modality. Bags come out in
/// (patient, task, horizon) order.
pub fn build_bags(
    tables: &ModalityTables,
    labels: &[EndpointLabel],
    windows: &HorizonWindows,
    clinical: &ClinicalRecords,
) -> Result<BagSet> {
    let mut windowed: HashMap<(&PatientId, Horizon), [Vec<(NaiveDate, Vec<f64>)>; 3]> = HashMap::new();
    for table in tables.iter() {
        for row in &table.rows {
            let Some(baseline) = clinical.baseline(&row.patient) else {
                return Err(Error::MissingBaseline(row.patient.clone()));
            };
            let Some(h) = assign_horizon(days_from_baseline(row.date, baseline), windows) else {
                continue;
            };
            let values = row
                .features
                .iter()
                .map(|v| {
                    v.ok_or_else(|| {
                        Error::invalid(format!(
                            "missing {} value for {} on {}; transform tables before building bags",
                            table.modality, row.patient, row.date
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            windowed.entry((&row.patient, h)).or_default()[table.modality.index()].push((row.date, values));
        }
    }

    let mut sorted: Vec<&EndpointLabel> = labels.iter().collect();
    sorted.sort_by(|a, b| (&a.patient, a.task, a.horizon).cmp(&(&b.patient, b.task, b.horizon)));

    let widths = tables.widths();
    let mut out = BagSet::default();
    for label in sorted {
        let mut instances = [
            InstanceMatrix::empty(widths[0]),
            InstanceMatrix::empty(widths[1]),
            InstanceMatrix::empty(widths[2]),
        ];
        if let Some(per_modality) = windowed.get(&(&label.patient, label.horizon)) {
            for (slot, rows) in instances.iter_mut().zip(per_modality) {
                let mut rows: Vec<&(NaiveDate, Vec<f64>)> = rows.iter().collect();
                rows.sort_by_key(|r| r.0);
                for (date, values) in rows {
                    slot.push(*date, values);
                }
            }
        }
        let bag = Bag {
            patient: label.patient.clone(),
            task: label.task,
            horizon: label.horizon,
            label: label.class,
            instances,
        };
        if bag.is_empty() {
            out.dropped.push((label.patient.clone(), label.task, label.horizon));
        } else {
            out.bags.push(bag);
        }
    }
    Ok(out)
}

/// Instance counts per (modality, task, horizon) and class.
pub fn bag_statistics(bags: &[Bag]) -> BTreeMap<(Modality, Task, Horizon), [usize; 3]> {
    let mut out = BTreeMap::new();
    for task in Task::ALL {
        for h in Horizon::ALL {
            for m in Modality::ALL {
                out.insert((m, task, h), [0usize; 3]);
            }
        }
    }
    for bag in bags {
        for m in Modality::ALL {
            out.get_mut(&(m, bag.task, bag.horizon)).unwrap()[bag.label.code()] += bag.modality(m).len();
        }
    }
    out
}

/// `patient_id,horizon,task,label,n_phys,n_sleep,n_hrv`
pub fn write_bag_manifest(path: impl AsRef<Path>, bags: &[Bag]) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(out, "patient_id,horizon,task,label,n_phys,n_sleep,n_hrv").map_err(io)?;
    for b in bags {
        let [p, s, h] = b.counts();
        writeln!(out, "{},{},{},{},{p},{s},{h}", b.patient, b.horizon, b.task, b.label.code()).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{parse_date, InstanceRow};
    use crate::ingest::ModalityTable;

    fn pid(s: &str) -> PatientId {
        PatientId::new(s).unwrap()
    }

    fn rows(m: Modality, p: &str, days: &[i64]) -> Vec<InstanceRow> {
        let base = parse_date("2023-01-01").unwrap();
        days.iter()
            .map(|d| InstanceRow {
                patient: pid(p),
                modality: m,
                date: base + chrono::Duration::days(*d),
                features: vec![Some(*d as f64)],
            })
            .collect()
    }

    fn setup(phys: &[i64], sleep: &[i64], hrv: &[i64]) -> (ModalityTables, ClinicalRecords) {
        let t = |m, d: &[i64]| ModalityTable::new(m, vec!["f".into()], rows(m, "p1", d)).unwrap();
        let tables = ModalityTables::new(t(Modality::Phys, phys), t(Modality::Sleep, sleep), t(Modality::Hrv, hrv)).unwrap();
        let mut c = ClinicalRecords::new();
        c.set_baseline(pid("p1"), parse_date("2023-01-01").unwrap());
        (tables, c)
    }

    fn label(h: Horizon) -> EndpointLabel {
        EndpointLabel {
            patient: pid("p1"),
            task: Task::Handgrip,
            horizon: h,
            delta: 3.0,
            class: DeltaClass::Improved,
        }
    }

    #[test]
    fn assembles_bag_with_missing_modality() {
        let (tables, c) = setup(&[100, 60, 90, 70], &[50, 120], &[]);
        let set = build_bags(&tables, &[label(Horizon::M3)], &HorizonWindows::default(), &c).unwrap();
        assert_eq!(set.bags.len(), 1);
        let bag = &set.bags[0];
        assert_eq!(bag.len(), 6);
        assert_eq!(bag.counts(), [4, 2, 0]);
        // chronological within modality
        let phys: Vec<f64> = bag.modality(Modality::Phys).rows().map(|r| r[0]).collect();
        assert_eq!(phys, vec![60.0, 70.0, 90.0, 100.0]);
    }

    #[test]
    fn empty_pair_is_dropped_and_counted() {
        let (tables, c) = setup(&[100], &[], &[]);
        let set = build_bags(&tables, &[label(Horizon::M6)], &HorizonWindows::default(), &c).unwrap();
        assert!(set.bags.is_empty());
        assert_eq!(set.dropped, vec![(pid("p1"), Task::Handgrip, Horizon::M6)]);
    }

    #[test]
    fn out_of_window_instance_excluded() {
        let (tables, c) = setup(&[140, 100], &[], &[]);
        let set = build_bags(&tables, &[label(Horizon::M3)], &HorizonWindows::default(), &c).unwrap();
        assert_eq!(set.bags[0].counts(), [1, 0, 0]);
        assert_eq!(set.bags[0].modality(Modality::Phys).row(0), &[100.0]);
    }

    #[test]
    fn statistics() {
        assert!(bag_statistics(&[]).values().all(|c| *c == [0, 0, 0]));
        let (tables, c) = setup(&[60, 70, 80], &[], &[]);
        let set = build_bags(&tables, &[label(Horizon::M3)], &HorizonWindows::default(), &c).unwrap();
        let stats = bag_statistics(&set.bags);
        assert_eq!(stats[&(Modality::Phys, Task::Handgrip, Horizon::M3)], [0, 0, 3]);
        assert_eq!(stats.values().flatten().sum::<usize>(), 3);
    }

    #[test]
    fn untransformed_missing_cell_rejected() {
        let (mut tables, c) = setup(&[60], &[], &[]);
        let mut phys = tables.get(Modality::Phys).clone();
        phys.rows[0].features[0] = None;
        tables = ModalityTables::new(phys, tables.get(Modality::Sleep).clone(), tables.get(Modality::Hrv).clone()).unwrap();
        assert!(build_bags(&tables, &[label(Horizon::M3)], &HorizonWindows::default(), &c).is_err());
    }
}

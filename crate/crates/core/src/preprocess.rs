//! Fold-scoped mean imputation and z-scoring.
//!
//! Statistics are fitted on training patients only and then applied
//! unchanged to every partition of the fold.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use crate::cohort::{Modality, PatientId};
use crate::error::{Error, Result};
use crate::ingest::{ModalityTable, ModalityTables};

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityStats {
    pub modality: Modality,
    pub feature_names: Vec<String>,
    pub features: Vec<FeatureStats>,
}

/// Per (modality, feature) mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldStats {
    pub modalities: Vec<ModalityStats>,
    pub epsilon: f64,
    /// Patients whose rows were used for fitting.
    pub fitted_on: BTreeSet<PatientId>,
    /// (modality, feature) pairs with no training values.
    pub degenerate: Vec<(Modality, String)>,
}

impl FoldStats {
    pub fn get(&self, modality: Modality) -> Option<&ModalityStats> {
        self.modalities.iter().find(|m| m.modality == modality)
    }

    /// `modality,feature,mean,std`
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        writeln!(out, "modality,feature,mean,std").map_err(io)?;
        for m in &self.modalities {
            for (name, s) in m.feature_names.iter().zip(&m.features) {
                writeln!(out, "{},{name},{},{}", m.modality, s.mean, s.std).map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }
}

/// Fits statistics over the rows of `training` patients.
pub fn fit_stats(tables: &ModalityTables, training: &BTreeSet<PatientId>, epsilon: f64) -> Result<FoldStats> {
    if training.is_empty() {
        return Err(Error::invalid("cannot fit fold statistics on an empty training set"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let mut degenerate = Vec::new();
    let modalities = tables
        .iter()
        .map(|table| {
            let features = (0..table.width())
                .map(|f| {
                    let values = table
                        .rows
                        .iter()
                        .filter(|r| training.contains(&r.patient))
                        .filter_map(|r| r.features[f]);
                    let (mut n, mut sum) = (0usize, 0.0);
                    for v in values.clone() {
                        n += 1;
                        sum += v;
                    }
                    if n == 0 {
                        log::warn!(
                            "{} feature '{}' has no training values; using mean 0, std 0",
                            table.modality,
                            table.feature_names[f]
                        );
                        degenerate.push((table.modality, table.feature_names[f].clone()));
                        return FeatureStats { mean: 0.0, std: 0.0 };
                    }
                    let mean = sum / n as f64;
                    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                    FeatureStats { mean, std: var.sqrt() }
                })
                .collect();
            ModalityStats {
                modality: table.modality,
                feature_names: table.feature_names.clone(),
                features,
            }
        })
        .collect();
    Ok(FoldStats {
        modalities,
        epsilon,
        fitted_on: training.clone(),
        degenerate,
    })
}

/// Imputes missing cells with the fitted mean, then maps every value to
/// `(x - mean) / (std + epsilon)`. The result has no missing cells.
pub fn transform(table: &ModalityTable, stats: &FoldStats) -> Result<ModalityTable> {
    let ms = stats
        .get(table.modality)
        .ok_or_else(|| Error::invalid(format!("no statistics for modality {}", table.modality)))?;
    if ms.feature_names != table.feature_names {
        return Err(Error::Shape(format!(
            "{} feature names do not match the fitted statistics",
            table.modality
        )));
    }
    let eps = stats.epsilon;
    let rows = table
        .rows
        .iter()
        .map(|r| {
            let mut row = r.clone();
            for (cell, s) in row.features.iter_mut().zip(&ms.features) {
                let x = cell.unwrap_or(s.mean);
                *cell = Some((x - s.mean) / (s.std + eps));
            }
            row
        })
        .collect();
    Ok(ModalityTable {
        modality: table.modality,
        feature_names: table.feature_names.clone(),
        rows,
    })
}

pub fn transform_all(tables: &ModalityTables, stats: &FoldStats) -> Result<ModalityTables> {
    tables.map(|t| transform(t, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{parse_date, InstanceRow};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table(values: &[(&str, Option<f64>)]) -> ModalityTables {
        let base = parse_date("2023-01-01").unwrap();
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, (p, v))| InstanceRow {
                patient: PatientId::new(*p).unwrap(),
                modality: Modality::Phys,
                date: base + chrono::Days::new(i as u64),
                features: vec![*v],
            })
            .collect();
        ModalityTables::new(
            ModalityTable::new(Modality::Phys, vec!["x".into()], rows).unwrap(),
            ModalityTable::empty(Modality::Sleep, vec![]),
            ModalityTable::empty(Modality::Hrv, vec![]),
        )
        .unwrap()
    }

    fn ids(v: &[&str]) -> BTreeSet<PatientId> {
        v.iter().map(|s| PatientId::new(*s).unwrap()).collect()
    }

    #[test]
    fn fit_examples() {
        let t = table(&[("a", Some(1.0)), ("a", Some(2.0)), ("a", Some(3.0)), ("b", Some(100.0))]);
        let s = fit_stats(&t, &ids(&["a"]), DEFAULT_EPSILON).unwrap();
        let f = s.get(Modality::Phys).unwrap().features[0];
        assert_relative_eq!(f.mean, 2.0);
        assert_relative_eq!(f.std, (2.0f64 / 3.0).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(f.std, 0.8165, epsilon = 1e-4);

        let t = table(&[("a", None), ("b", Some(4.0))]);
        let s = fit_stats(&t, &ids(&["a"]), DEFAULT_EPSILON).unwrap();
        assert_eq!(s.get(Modality::Phys).unwrap().features[0], FeatureStats { mean: 0.0, std: 0.0 });
        assert_eq!(s.degenerate.len(), 1);

        let t = table(&[("a", Some(5.0))]);
        let s = fit_stats(&t, &ids(&["a"]), DEFAULT_EPSILON).unwrap();
        assert_eq!(s.get(Modality::Phys).unwrap().features[0], FeatureStats { mean: 5.0, std: 0.0 });

        assert!(fit_stats(&t, &BTreeSet::new(), DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn transform_examples() {
        let t = table(&[("a", Some(1.0)), ("a", Some(2.0)), ("a", Some(3.0)), ("b", None)]);
        let s = fit_stats(&t, &ids(&["a"]), DEFAULT_EPSILON).unwrap();
        let out = transform(t.get(Modality::Phys), &s).unwrap();
        assert_eq!(out.rows[1].features[0], Some(0.0));
        assert_eq!(out.rows[3].features[0], Some(0.0));
        assert_relative_eq!(out.rows[2].features[0].unwrap(), 1.2247, epsilon = 1e-4);
        let sd = (2.0f64 / 3.0).sqrt();
        assert_relative_eq!(out.rows[2].features[0].unwrap(), 1.0 / (sd + 1e-8), max_relative = 1e-12);
    }

    #[test]
    fn zero_std_stays_finite() {
        let t = table(&[("a", Some(5.0)), ("a", Some(5.0)), ("b", Some(7.0))]);
        let s = fit_stats(&t, &ids(&["a"]), DEFAULT_EPSILON).unwrap();
        let out = transform(t.get(Modality::Phys), &s).unwrap();
        assert!(out.rows.iter().all(|r| r.features[0].unwrap().is_finite()));
    }

    #[test]
    fn mismatched_features_rejected() {
        let t = table(&[("a", Some(1.0))]);
        let s = fit_stats(&t, &ids(&["a"]), DEFAULT_EPSILON).unwrap();
        let other = ModalityTable::empty(Modality::Phys, vec!["y".into()]);
        assert!(transform(&other, &s).is_err());
    }

    proptest! {
        #[test]
        fn held_out_values_do_not_leak(
            train in prop::collection::vec(-100.0f64..100.0, 1..20),
            test in prop::collection::vec(-100.0f64..100.0, 1..10),
            bump in -1000.0f64..1000.0,
        ) {
            let mut rows: Vec<(&str, Option<f64>)> = train.iter().map(|v| ("tr", Some(*v))).collect();
            rows.extend(test.iter().map(|v| ("te", Some(*v))));
            let s1 = fit_stats(&table(&rows), &ids(&["tr"]), DEFAULT_EPSILON).unwrap();
            for r in rows.iter_mut().filter(|r| r.0 == "te") {
                r.1 = r.1.map(|v| v + bump);
            }
            let s2 = fit_stats(&table(&rows), &ids(&["tr"]), DEFAULT_EPSILON).unwrap();
            prop_assert_eq!(s1, s2);
        }

        #[test]
        fn training_rows_standardize(values in prop::collection::vec(-50.0f64..50.0, 2..40)) {
            let rows: Vec<(&str, Option<f64>)> = values.iter().map(|v| ("a", Some(*v))).collect();
            let t = table(&rows);
            let s = fit_stats(&t, &ids(&["a"]), DEFAULT_EPSILON).unwrap();
            let sd = s.get(Modality::Phys).unwrap().features[0].std;
            let out = transform(t.get(Modality::Phys), &s).unwrap();
            let z: Vec<f64> = out.rows.iter().map(|r| r.features[0].unwrap()).collect();
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-6);
            if sd > 1e-3 {
                prop_assert!((std - 1.0).abs() < 1e-4);
            }
        }

        #[test]
        fn transform_is_affine(x in -100.0f64..100.0, a in -5.0f64..5.0) {
            let t = table(&[("a", Some(1.0)), ("a", Some(4.0)), ("b", Some(a * x))]);
            let s = fit_stats(&t, &ids(&["a"]), DEFAULT_EPSILON).unwrap();
            let f = s.get(Modality::Phys).unwrap().features[0];
            let out = transform(t.get(Modality::Phys), &s).unwrap();
            prop_assert_eq!(out.rows[2].features[0].unwrap(), (a * x - f.mean) / (f.std + DEFAULT_EPSILON));
        }
    }
}

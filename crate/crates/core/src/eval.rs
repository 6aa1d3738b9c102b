//! Confusion matrices and classification metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion_matrix(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::invalid(format!(
                "label pair ({t}, {p}) out of range for {n_classes} classes"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// A zero denominator occurred and the affected metric was reported as 0.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub averaging: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-class and macro-averaged precision, recall and F1.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let k = cm.n_classes();
    let total = cm.total();
    if k == 0 || total == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.counts[c][c];
            let predicted: u64 = (0..k).map(|r| cm.counts[r][c]).sum();
            let actual: u64 = cm.counts[c].iter().sum();
            let (precision, dp) = ratio(tp, predicted);
            let (recall, dr) = ratio(tp, actual);
            ClassMetrics {
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: actual,
                degenerate: dp || dr,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    Ok(MetricsReport {
        averaging: "macro".into(),
        accuracy: cm.trace() as f64 / total as f64,
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        per_class,
    })
}

/// Each row divided by its sum.
pub fn normalize_cm(cm: &ConfusionMatrix) -> Result<Vec<Vec<f64>>> {
    cm.counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let sum: u64 = row.iter().sum();
            if sum == 0 {
                return Err(Error::invalid(format!(
                    "class {i} has no instances; row cannot be normalized"
                )));
            }
            Ok(row.iter().map(|&v| v as f64 / sum as f64).collect())
        })
        .collect()
}

fn write_matrix<T: ToString>(rows: &[Vec<T>], labels: &[String], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(labels.iter().cloned());
    writer.write_record(&header)?;
    for (label, row) in labels.iter().zip(rows) {
        let mut record = vec![label.clone()];
        record.extend(row.iter().map(ToString::to_string));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn write_confusion_csv(cm: &ConfusionMatrix, labels: &[String], path: &Path) -> Result<()> {
    write_matrix(&cm.counts, labels, path)
}

pub fn write_normalized_csv(cm: &ConfusionMatrix, labels: &[String], path: &Path) -> Result<()> {
    write_matrix(&normalize_cm(cm)?, labels, path)
}

pub fn write_metrics_json(report: &MetricsReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix {
            counts: rows.iter().map(|r| r.to_vec()).collect(),
        }
    }

    #[test]
    fn counts_pairs() {
        let m = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(m, cm(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1]]));
        let m = confusion_matrix(&[0, 0], &[1, 1], 2).unwrap();
        assert_eq!(m, cm(&[&[0, 2], &[0, 0]]));
        assert!(matches!(
            confusion_matrix(&[0, 3], &[0, 1], 3),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            confusion_matrix(&[0], &[0, 1], 3),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn binary_example() {
        let r = metrics(&cm(&[&[2, 1], &[0, 3]])).unwrap();
        assert_eq!(r.accuracy, 5.0 / 6.0);
        assert_eq!(r.per_class[0].precision, 1.0);
        assert!((r.per_class[0].recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class[0].f1 - 0.8).abs() < 1e-12);
        assert_eq!(r.averaging, "macro");
    }

    #[test]
    fn zero_predictions_are_flagged() {
        let r = metrics(&cm(&[&[3, 0], &[2, 0]])).unwrap();
        assert_eq!(r.per_class[1].precision, 0.0);
        assert!(r.per_class[1].degenerate);
        assert!(!r.per_class[0].degenerate);
    }

    #[test]
    fn empty_matrix_is_rejected() {
        assert!(metrics(&cm(&[&[0, 0], &[0, 0]])).is_err());
        assert!(metrics(&ConfusionMatrix { counts: vec![] }).is_err());
    }

    #[test]
    fn normalization() {
        let n = normalize_cm(&cm(&[&[2, 2], &[0, 4]])).unwrap();
        assert_eq!(n, vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
        let err = normalize_cm(&cm(&[&[1, 0], &[0, 0]])).unwrap_err();
        assert!(err.to_string().contains("class 1"));
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cm.csv");
        let labels = vec!["a".to_string(), "b".to_string()];
        write_confusion_csv(&cm(&[&[2, 1], &[0, 3]]), &labels, &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "true\\predicted,a,b\na,2,1\nb,0,3\n"
        );
    }

    proptest! {
        #[test]
        fn perfect_predictions_score_one(y in prop::collection::vec(0usize..4, 1..60)) {
            let r = metrics(&confusion_matrix(&y, &y, 4).unwrap()).unwrap();
            prop_assert_eq!(r.accuracy, 1.0);
            for c in &r.per_class {
                if c.support > 0 {
                    prop_assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
                }
            }
        }

        #[test]
        fn accuracy_invariant_under_relabeling(
            pairs in prop::collection::vec((0usize..3, 0usize..3), 1..80),
            perm in Just([0usize, 1, 2]).prop_shuffle(),
        ) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let a = metrics(&confusion_matrix(&t, &p, 3).unwrap()).unwrap().accuracy;
            let t2: Vec<usize> = t.iter().map(|&v| perm[v]).collect();
            let p2: Vec<usize> = p.iter().map(|&v| perm[v]).collect();
            let b = metrics(&confusion_matrix(&t2, &p2, 3).unwrap()).unwrap().accuracy;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn rows_normalize_to_one(rows in prop::collection::vec(prop::collection::vec(0u64..50, 3), 3)) {
            let mut rows = rows;
            for (i, r) in rows.iter_mut().enumerate() {
                r[i] += 1;
            }
            for r in normalize_cm(&ConfusionMatrix { counts: rows }).unwrap() {
                prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

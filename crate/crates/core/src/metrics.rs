//! Classification metrics over confusion matrices.
//!
//! Per-class figures are one-vs-rest. A class with no condition positives
//! has no sensitivity, F1 or balanced accuracy; those are reported as
//! `None` and left blank in CSV output rather than counted as zero.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts indexed `[actual][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|row| row.len() != k) {
            return Err(Error::invalid("confusion matrix must be square"));
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual][predicted]
    }

    pub fn record(&mut self, actual: usize, predicted: usize) -> Result<()> {
        let k = self.classes();
        if actual >= k || predicted >= k {
            return Err(Error::invalid(format!(
                "class pair ({actual}, {predicted}) outside 0..{k}"
            )));
        }
        self.counts[actual][predicted] += 1;
        Ok(())
    }

    /// Element-wise sum, for pooling folds.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes() != self.classes() {
            return Err(Error::shape(
                "ConfusionMatrix::merge",
                self.classes(),
                other.classes(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Writes the matrix with class names as the header row and first column.
    pub fn write_csv<W: Write>(&self, out: W, names: &[String]) -> Result<()> {
        if names.len() != self.classes() {
            return Err(Error::shape(
                "confusion CSV names",
                self.classes(),
                names.len(),
            ));
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["actual\\predicted".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header).map_err(csv_error)?;
        for (name, row) in names.iter().zip(&self.counts) {
            let mut record = vec![name.clone()];
            record.extend(row.iter().map(u64::to_string));
            w.write_record(&record).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

/// Tallies predictions against truth over `classes` labels.
pub fn confusion(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::shape("confusion", truth.len(), predicted.len()));
    }
    let mut cm = ConfusionMatrix::zeros(classes);
    for (&t, &p) in truth.iter().zip(predicted) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

/// One-vs-rest figures for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: u64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    pub balanced_accuracy: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Result<Vec<ClassMetrics>> {
    let total = cm.total();
    if cm.classes() == 0 || total == 0 {
        return Err(Error::invalid(
            "per-class metrics need a nonempty confusion matrix",
        ));
    }
    let k = cm.classes();
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let tp = cm.get(c, c);
        let support: u64 = cm.counts[c].iter().sum();
        let predicted: u64 = (0..k).map(|r| cm.get(r, c)).sum();
        let fn_ = support - tp;
        let fp = predicted - tp;
        let tn = total - support - fp;
        let sensitivity = ratio(tp, support);
        let specificity = ratio(tn, total - support);
        let f1 = if support == 0 {
            None
        } else {
            ratio(2 * tp, 2 * tp + fp + fn_)
        };
        let balanced_accuracy = match (sensitivity, specificity) {
            (Some(s), Some(p)) => Some(0.5 * (s + p)),
            _ => None,
        };
        out.push(ClassMetrics {
            class: c,
            support,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            true_negatives: tn,
            sensitivity,
            specificity,
            f1,
            balanced_accuracy,
        });
    }
    Ok(out)
}

/// Correct predictions over all predictions.
pub fn accuracy(cm: &ConfusionMatrix) -> Option<f64> {
    ratio(cm.trace(), cm.total())
}

/// Mean per-class balanced accuracy over the classes where it is defined.
pub fn mean_balanced_accuracy(metrics: &[ClassMetrics]) -> Option<f64> {
    mean_defined(metrics.iter().map(|m| m.balanced_accuracy))
}

/// Mean per-class sensitivity (macro recall) over defined classes.
pub fn mean_sensitivity(metrics: &[ClassMetrics]) -> Option<f64> {
    mean_defined(metrics.iter().map(|m| m.sensitivity))
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Fraction of equal entries.
pub fn accuracy_of(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(Error::shape("accuracy", truth.len(), predicted.len()));
    }
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Sample standard deviation over √n; `None` for fewer than two values.
pub fn standard_error(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((var / n as f64).sqrt())
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// A labeled set of per-class rows for a report: which task, and optional
/// per-fold standard errors aligned with `metrics`.
pub struct MetricsReport<'a> {
    pub task: &'a str,
    pub names: &'a [String],
    pub metrics: &'a [ClassMetrics],
    pub balanced_accuracy_se: Option<&'a [Option<f64>]>,
}

pub const METRICS_HEADER: [&str; 9] = [
    "task",
    "class",
    "support",
    "sensitivity",
    "specificity",
    "f1",
    "balanced_accuracy",
    "balanced_accuracy_se",
    "predicted",
];

/// One row per (task, class). Undefined values are empty cells.
pub fn write_metrics_csv<W: Write>(out: W, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER).map_err(csv_error)?;
    for report in reports {
        if report.names.len() != report.metrics.len() {
            return Err(Error::shape(
                "metrics CSV names",
                report.metrics.len(),
                report.names.len(),
            ));
        }
        for (i, m) in report.metrics.iter().enumerate() {
            let se = report
                .balanced_accuracy_se
                .and_then(|s| s.get(i).copied().flatten());
            w.write_record([
                report.task.to_string(),
                report.names[i].clone(),
                m.support.to_string(),
                fmt_opt(m.sensitivity),
                fmt_opt(m.specificity),
                fmt_opt(m.f1),
                fmt_opt(m.balanced_accuracy),
                fmt_opt(se),
                (m.true_positives + m.false_positives).to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn two_class(tp: u64, fn_: u64, fp: u64, tn: u64) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(vec![vec![tp, fn_], vec![fp, tn]]).unwrap()
    }

    #[test]
    fn hand_counted_confusion() {
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 1], vec![0, 1]]);
        assert!(confusion(&[0, 2], &[0, 0], 2).is_err());
        assert!(confusion(&[0], &[0, 0], 2).is_err());
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let ids = [0, 1, 2, 2, 1, 0, 0];
        let cm = confusion(&ids, &ids, 3).unwrap();
        assert_eq!(cm.trace(), cm.total());
        for m in per_class_metrics(&cm).unwrap() {
            assert_eq!(m.sensitivity, Some(1.0));
            assert_eq!(m.specificity, Some(1.0));
            assert_eq!(m.f1, Some(1.0));
            assert_eq!(m.balanced_accuracy, Some(1.0));
        }
    }

    #[test]
    fn balanced_accuracy_by_definition() {
        let m = per_class_metrics(&two_class(9, 1, 0, 90)).unwrap()[0];
        assert_eq!(m.sensitivity, Some(0.9));
        assert_eq!(m.specificity, Some(1.0));
        assert!((m.balanced_accuracy.unwrap() - 0.95).abs() < 1e-15);
        assert!((m.f1.unwrap() - 18.0 / 19.0).abs() < 1e-15);
    }

    #[test]
    fn empty_class_is_undefined_not_zero() {
        let cm = ConfusionMatrix::from_counts(vec![vec![3, 1, 0], vec![0, 0, 0], vec![0, 2, 4]])
            .unwrap();
        let m = per_class_metrics(&cm).unwrap();
        assert_eq!(m[1].sensitivity, None);
        assert_eq!(m[1].balanced_accuracy, None);
        assert_eq!(m[1].f1, None);
        assert_eq!(m[1].specificity, Some(7.0 / 10.0));
        let mean = mean_balanced_accuracy(&m).unwrap();
        let expect = 0.5 * (m[0].balanced_accuracy.unwrap() + m[2].balanced_accuracy.unwrap());
        assert!((mean - expect).abs() < 1e-15);
        assert!(per_class_metrics(&ConfusionMatrix::zeros(3)).is_err());
    }

    /// Counts outcomes per class straight from expanded sample lists.
    fn brute_force(cm: &ConfusionMatrix) -> Vec<[Option<f64>; 4]> {
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for a in 0..cm.classes() {
            for p in 0..cm.classes() {
                for _ in 0..cm.get(a, p) {
                    truth.push(a);
                    pred.push(p);
                }
            }
        }
        (0..cm.classes())
            .map(|c| {
                let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
                for (&t, &p) in truth.iter().zip(&pred) {
                    match (t == c, p == c) {
                        (true, true) => tp += 1.0,
                        (false, true) => fp += 1.0,
                        (true, false) => fn_ += 1.0,
                        (false, false) => tn += 1.0,
                    }
                }
                let sens = (tp + fn_ > 0.0).then(|| tp / (tp + fn_));
                let spec = (tn + fp > 0.0).then(|| tn / (tn + fp));
                let f1 = sens.map(|_| 2.0 * tp / (2.0 * tp + fp + fn_));
                let ba = sens.zip(spec).map(|(s, p)| (s + p) / 2.0);
                [sens, spec, f1, ba]
            })
            .collect()
    }

    fn close(a: Option<f64>, b: Option<f64>) -> bool {
        match (a, b) {
            (Some(x), Some(y)) => (x - y).abs() <= 1e-12,
            (None, None) => true,
            _ => false,
        }
    }

    #[test]
    fn random_matrices_match_one_vs_rest_oracle() {
        let mut rng = RngState::new(11);
        for _ in 0..100 {
            let counts: Vec<Vec<u64>> = (0..6)
                .map(|_| {
                    (0..6)
                        .map(|_| rng.below(20) as u64 * u64::from(rng.below(4) > 0))
                        .collect()
                })
                .collect();
            let cm = ConfusionMatrix::from_counts(counts).unwrap();
            if cm.total() == 0 {
                continue;
            }
            let ours = per_class_metrics(&cm).unwrap();
            for (m, o) in ours.iter().zip(brute_force(&cm)) {
                assert!(close(m.sensitivity, o[0]));
                assert!(close(m.specificity, o[1]));
                assert!(close(m.f1, o[2]));
                assert!(close(m.balanced_accuracy, o[3]));
                for v in [m.sensitivity, m.specificity, m.f1, m.balanced_accuracy]
                    .into_iter()
                    .flatten()
                {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn duplicating_samples_keeps_balanced_accuracy() {
        let cm = ConfusionMatrix::from_counts(vec![vec![5, 2, 1], vec![0, 7, 3], vec![2, 0, 9]])
            .unwrap();
        let mut doubled = cm.clone();
        doubled.merge(&cm).unwrap();
        let a = per_class_metrics(&cm).unwrap();
        let b = per_class_metrics(&doubled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(close(x.balanced_accuracy, y.balanced_accuracy));
        }
        assert_eq!(accuracy(&cm), Some(21.0 / 29.0));
    }

    #[test]
    fn standard_error_of_known_values() {
        assert_eq!(standard_error(&[1.0]), None);
        let se = standard_error(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_outputs() {
        let cm = ConfusionMatrix::from_counts(vec![vec![2, 0], vec![1, 0]]).unwrap();
        let names = vec!["Normal".to_string(), "tumor, a".to_string()];
        let mut buf = Vec::new();
        cm.write_csv(&mut buf, &names).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "actual\\predicted,Normal,\"tumor, a\"\nNormal,2,0\n\"tumor, a\",1,0\n"
        );
        let m = per_class_metrics(&cm).unwrap();
        let mut buf = Vec::new();
        write_metrics_csv(
            &mut buf,
            &[MetricsReport {
                task: "disease",
                names: &names,
                metrics: &m,
                balanced_accuracy_se: None,
            }],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], "disease,\"tumor, a\",1,0,1,0,0.5,,0");
    }
}

use std::io::Write;

use super::fit::{evaluate, fit, EpochLog, TaskMetrics};
use crate::data::{complement, kfold, LabeledDataset, SplitPlan};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::metrics::{
    accuracy, confusion, csv_error, per_class_metrics, standard_error, ClassMetrics,
    ConfusionMatrix, MetricsReport,
};
use crate::models::{Model, NetworkSpec};
use crate::par;
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub plan: SplitPlan,
    /// Folds trained concurrently; results do not depend on it.
    pub workers: usize,
}

/// One fold: a model trained on the other folds, evaluated on this one.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub metrics: TaskMetrics,
    pub tissue_pred: Vec<usize>,
    pub disease_pred: Vec<usize>,
    /// Codes of the test samples, row-aligned with `test_indices`.
    pub codes: Matrix,
    pub tissue_confusion: ConfusionMatrix,
    pub disease_confusion: ConfusionMatrix,
    pub logs: Vec<EpochLog>,
    pub model: Model,
}

/// The held-out outcome for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledPrediction {
    pub index: usize,
    pub fold: usize,
    pub tissue_true: usize,
    pub tissue_pred: usize,
    pub disease_true: usize,
    pub disease_pred: usize,
    pub cic: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    /// One entry per sample, in dataset order.
    pub predictions: Vec<PooledPrediction>,
    pub tissue_confusion: ConfusionMatrix,
    pub disease_confusion: ConfusionMatrix,
    pub tissue_metrics: Vec<ClassMetrics>,
    pub disease_metrics: Vec<ClassMetrics>,
    /// Per-class standard error of the per-fold balanced accuracies.
    pub tissue_balanced_se: Vec<Option<f64>>,
    pub disease_balanced_se: Vec<Option<f64>>,
    pub tissue_accuracy: f64,
    pub disease_accuracy: f64,
    pub tissue_accuracy_se: Option<f64>,
    pub disease_accuracy_se: Option<f64>,
    /// Pooled over every held-out sample.
    pub mrna_mse: f64,
    pub mirna_mse: f64,
    pub warnings: Vec<String>,
}

impl CvResult {
    /// Held-out codes stacked in dataset order.
    pub fn codes(&self) -> Result<Matrix> {
        let width = self.predictions.first().map_or(0, |p| p.cic.len());
        let data = self
            .predictions
            .iter()
            .flat_map(|p| p.cic.iter().copied())
            .collect();
        Matrix::new(self.predictions.len(), width, data)
    }

    /// Pooled per-class report rows for both tasks.
    pub fn write_metrics_csv<W: Write>(&self, out: W, dataset: &LabeledDataset) -> Result<()> {
        crate::metrics::write_metrics_csv(
            out,
            &[
                MetricsReport {
                    task: "tissue",
                    names: &dataset.tissues,
                    metrics: &self.tissue_metrics,
                    balanced_accuracy_se: Some(&self.tissue_balanced_se),
                },
                MetricsReport {
                    task: "disease",
                    names: &dataset.diseases,
                    metrics: &self.disease_metrics,
                    balanced_accuracy_se: Some(&self.disease_balanced_se),
                },
            ],
        )
    }
}

fn absent_classes(ids: &[usize], classes: usize) -> Vec<usize> {
    let counts = LabeledDataset::class_counts(ids, classes);
    (0..classes).filter(|&c| counts[c] == 0).collect()
}

fn per_class_se(
    folds: &[FoldResult],
    pick: impl Fn(&FoldResult) -> &ConfusionMatrix,
) -> Result<Vec<Option<f64>>> {
    let per_fold: Vec<Vec<ClassMetrics>> = folds
        .iter()
        .map(|f| per_class_metrics(pick(f)))
        .collect::<Result<_>>()?;
    let classes = per_fold.first().map_or(0, Vec::len);
    Ok((0..classes)
        .map(|c| {
            let values: Vec<f64> = per_fold
                .iter()
                .filter_map(|m| m[c].balanced_accuracy)
                .collect();
            standard_error(&values)
        })
        .collect())
}

/// Trains one model per fold and pools every sample's held-out prediction
/// and code. Fold `f` draws from `rng.derive_indexed("fold", f)`, so the
/// result does not depend on `options.workers`.
pub fn cross_validate(
    spec: &NetworkSpec,
    dataset: &LabeledDataset,
    options: &CvOptions,
    rng: &RngState,
) -> Result<CvResult> {
    spec.validate()?;
    let fold_tests = kfold(dataset, &options.plan)?;
    let mut warnings = Vec::new();
    for (f, test) in fold_tests.iter().enumerate() {
        let train = complement(dataset.len(), test);
        let tissue: Vec<usize> = train.iter().map(|&i| dataset.tissue_ids[i]).collect();
        let disease: Vec<usize> = train.iter().map(|&i| dataset.disease_ids[i]).collect();
        for c in absent_classes(&tissue, dataset.tissue_count()) {
            warnings.push(format!(
                "fold {f}: tissue `{}` absent from training",
                dataset.tissues[c]
            ));
        }
        for c in absent_classes(&disease, dataset.disease_count()) {
            warnings.push(format!(
                "fold {f}: disease `{}` absent from training",
                dataset.diseases[c]
            ));
        }
    }

    let folds = par::try_map_indexed(fold_tests.len(), options.workers, |f| {
        let test_indices = fold_tests[f].clone();
        let train_set = dataset.subset(&complement(dataset.len(), &test_indices));
        let test_set = dataset.subset(&test_indices);
        let (model, logs) = fit(
            spec,
            &train_set,
            Some(&test_set),
            &rng.derive_indexed("fold", f as u64),
        )?;
        let eval = evaluate(&model, &test_set)?;
        Ok(FoldResult {
            fold: f,
            codes: model.encode_batch(&test_set.mrna.values)?,
            tissue_confusion: confusion(
                &test_set.tissue_ids,
                &eval.tissue_pred,
                dataset.tissue_count(),
            )?,
            disease_confusion: confusion(
                &test_set.disease_ids,
                &eval.disease_pred,
                dataset.disease_count(),
            )?,
            metrics: eval.metrics,
            tissue_pred: eval.tissue_pred,
            disease_pred: eval.disease_pred,
            test_indices,
            logs,
            model,
        })
    })?;

    let mut slots: Vec<Option<PooledPrediction>> = vec![None; dataset.len()];
    let mut tissue_confusion = ConfusionMatrix::zeros(dataset.tissue_count());
    let mut disease_confusion = ConfusionMatrix::zeros(dataset.disease_count());
    let (mut mrna_sum, mut mirna_sum) = (0.0, 0.0);
    for fold in &folds {
        for (j, &i) in fold.test_indices.iter().enumerate() {
            slots[i] = Some(PooledPrediction {
                index: i,
                fold: fold.fold,
                tissue_true: dataset.tissue_ids[i],
                tissue_pred: fold.tissue_pred[j],
                disease_true: dataset.disease_ids[i],
                disease_pred: fold.disease_pred[j],
                cic: fold.codes.row(j).to_vec(),
            });
        }
        tissue_confusion.merge(&fold.tissue_confusion)?;
        disease_confusion.merge(&fold.disease_confusion)?;
        let n = fold.test_indices.len() as f64;
        mrna_sum += fold.metrics.mrna_mse * n;
        mirna_sum += fold.metrics.mirna_mse * n;
    }
    let predictions: Vec<PooledPrediction> = slots
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or_else(|| Error::Data(format!("sample {i} was never held out"))))
        .collect::<Result<_>>()?;

    let fold_tissue: Vec<f64> = folds.iter().map(|f| f.metrics.tissue_accuracy).collect();
    let fold_disease: Vec<f64> = folds.iter().map(|f| f.metrics.disease_accuracy).collect();
    let n = dataset.len() as f64;
    Ok(CvResult {
        tissue_metrics: per_class_metrics(&tissue_confusion)?,
        disease_metrics: per_class_metrics(&disease_confusion)?,
        tissue_balanced_se: per_class_se(&folds, |f| &f.tissue_confusion)?,
        disease_balanced_se: per_class_se(&folds, |f| &f.disease_confusion)?,
        tissue_accuracy: accuracy(&tissue_confusion).unwrap_or(0.0),
        disease_accuracy: accuracy(&disease_confusion).unwrap_or(0.0),
        tissue_accuracy_se: standard_error(&fold_tissue),
        disease_accuracy_se: standard_error(&fold_disease),
        mrna_mse: mrna_sum / n,
        mirna_mse: mirna_sum / n,
        tissue_confusion,
        disease_confusion,
        predictions,
        folds,
        warnings,
    })
}

/// `sample_id, true_tissue, pred_tissue, true_disease, pred_disease,
/// cic_1..cic_L`, one row per sample in dataset order.
pub fn write_predictions_csv<W: Write>(
    out: W,
    result: &CvResult,
    dataset: &LabeledDataset,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = result.predictions.first().map_or(0, |p| p.cic.len());
    let mut header: Vec<String> = [
        "sample_id",
        "true_tissue",
        "pred_tissue",
        "true_disease",
        "pred_disease",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=width).map(|i| format!("cic_{i}")));
    w.write_record(&header).map_err(csv_error)?;
    for p in &result.predictions {
        let mut row = vec![
            dataset.sample_ids[p.index].clone(),
            dataset.tissues[p.tissue_true].clone(),
            dataset.tissues[p.tissue_pred].clone(),
            dataset.diseases[p.disease_true].clone(),
            dataset.diseases[p.disease_pred].clone(),
        ];
        row.extend(p.cic.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

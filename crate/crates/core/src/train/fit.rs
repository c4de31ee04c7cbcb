use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses;
use crate::math::Matrix;
use crate::metrics::{accuracy_of, csv_error};
use crate::models::{argmax, Model, NetworkSpec, Targets};
use crate::nn::{AdamConfig, AdamState, Parameterized};
use crate::rng::RngState;

/// Inference-mode quality of a model on one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub mrna_mse: f64,
    pub mrna_mae: f64,
    pub mirna_mse: f64,
    pub mirna_mae: f64,
    pub tissue_loss: f64,
    pub tissue_accuracy: f64,
    pub disease_loss: f64,
    pub disease_accuracy: f64,
    pub regularizer: f64,
    pub total_loss: f64,
}

impl TaskMetrics {
    const FIELDS: [&'static str; 10] = [
        "mrna_mse",
        "mrna_mae",
        "mirna_mse",
        "mirna_mae",
        "tissue_loss",
        "tissue_accuracy",
        "disease_loss",
        "disease_accuracy",
        "regularizer",
        "total_loss",
    ];

    fn values(&self) -> [f64; 10] {
        [
            self.mrna_mse,
            self.mrna_mae,
            self.mirna_mse,
            self.mirna_mae,
            self.tissue_loss,
            self.tissue_accuracy,
            self.disease_loss,
            self.disease_accuracy,
            self.regularizer,
            self.total_loss,
        ]
    }
}

/// Predictions and metrics from one inference pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: TaskMetrics,
    pub tissue_pred: Vec<usize>,
    pub disease_pred: Vec<usize>,
}

/// Metrics after one epoch of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train: TaskMetrics,
    pub test: Option<TaskMetrics>,
}

fn check_widths(model: &Model, data: &LabeledDataset) -> Result<()> {
    let s = model.spec();
    let pairs = [
        ("mRNA genes", s.mrna_width, data.mrna.width()),
        ("miRNA genes", s.mirna_width, data.mirna.width()),
        ("tissue classes", s.tissue_classes, data.tissue_count()),
        ("disease classes", s.disease_classes, data.disease_count()),
    ];
    for (what, expected, got) in pairs {
        if expected != got {
            return Err(Error::Data(format!(
                "{what}: model expects {expected}, dataset has {got}"
            )));
        }
    }
    Ok(())
}

fn argmax_rows(m: &Matrix) -> Vec<usize> {
    m.row_iter().map(argmax).collect()
}

/// Inference-mode metrics of `model` on `data`.
pub fn evaluate(model: &Model, data: &LabeledDataset) -> Result<Evaluation> {
    check_widths(model, data)?;
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let tissue = data.tissue_onehot();
    let disease = data.disease_onehot();
    let targets = Targets {
        mirna: &data.mirna.values,
        tissue_onehot: &tissue,
        disease_onehot: &disease,
    };
    let (loss, out) = model.evaluate(&data.mrna.values, &targets)?;
    let tissue_pred = argmax_rows(&out.tissue);
    let disease_pred = argmax_rows(&out.disease);
    let metrics = TaskMetrics {
        mrna_mse: loss.tasks.mrna,
        mrna_mae: losses::mae(&out.mrna, &data.mrna.values)?,
        mirna_mse: loss.tasks.mirna,
        mirna_mae: losses::mae(&out.mirna, &data.mirna.values)?,
        tissue_loss: loss.tasks.tissue,
        tissue_accuracy: accuracy_of(&data.tissue_ids, &tissue_pred)?,
        disease_loss: loss.tasks.disease,
        disease_accuracy: accuracy_of(&data.disease_ids, &disease_pred)?,
        regularizer: loss.regularizer,
        total_loss: loss.total,
    };
    Ok(Evaluation {
        metrics,
        tissue_pred,
        disease_pred,
    })
}

/// Batches of one epoch: a permutation that depends only on the stream and
/// the epoch, cut into `batch_size` pieces; a trailing singleton is dropped
/// because training-mode batch normalization needs two rows.
fn epoch_batches(n: usize, batch_size: usize, rng: &RngState, epoch: usize) -> Vec<Vec<usize>> {
    let order = rng.derive_indexed("shuffle", epoch as u64).permutation(n);
    order
        .chunks(batch_size)
        .filter(|c| c.len() > 1)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Trains `model` in place for `epochs` epochs with Adam on the total loss,
/// using the spec's batch size and learning rate. The test set is only ever
/// evaluated, never used for gradients. Returns one log per epoch.
pub fn train(
    model: &mut Model,
    train_set: &LabeledDataset,
    test_set: Option<&LabeledDataset>,
    epochs: usize,
    rng: &RngState,
) -> Result<Vec<EpochLog>> {
    check_widths(model, train_set)?;
    if let Some(t) = test_set {
        check_widths(model, t)?;
    }
    if epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    if train_set.len() < 2 {
        return Err(Error::Data("training needs at least two samples".into()));
    }
    let spec = model.spec().clone();
    let lengths: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::new(
        &lengths,
        AdamConfig {
            learning_rate: spec.learning_rate,
            ..AdamConfig::default()
        },
    )?;
    model.set_vocabularies(train_set.vocabularies())?;

    let tissue = train_set.tissue_onehot();
    let disease = train_set.disease_onehot();
    let mut logs = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let epoch_rng = rng.derive_indexed("epoch", epoch as u64);
        for (b, batch) in epoch_batches(train_set.len(), spec.batch_size, rng, epoch)
            .iter()
            .enumerate()
        {
            let x = train_set.mrna.values.select_rows(batch);
            let mirna = train_set.mirna.values.select_rows(batch);
            let t = tissue.select_rows(batch);
            let d = disease.select_rows(batch);
            let targets = Targets {
                mirna: &mirna,
                tissue_onehot: &t,
                disease_onehot: &d,
            };
            let (loss, grads) =
                model.loss_and_grads(&x, &targets, &epoch_rng.derive_indexed("batch", b as u64))?;
            if !loss.total.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite("training loss"));
            }
            adam.step(model.params_mut(), &grads)?;
        }
        let train_metrics = evaluate(model, train_set)?.metrics;
        let test_metrics = test_set
            .map(|t| evaluate(model, t))
            .transpose()?
            .map(|e| e.metrics);
        logs.push(EpochLog {
            epoch,
            train: train_metrics,
            test: test_metrics,
        });
    }
    model.mark_trained();
    Ok(logs)
}

/// Builds a model from `spec` and trains it for `spec.epochs` epochs. The
/// initial weights come from `rng.derive("model")` and the training noise
/// from `rng.derive("train")`.
pub fn fit(
    spec: &NetworkSpec,
    train_set: &LabeledDataset,
    test_set: Option<&LabeledDataset>,
    rng: &RngState,
) -> Result<(Model, Vec<EpochLog>)> {
    let mut model = Model::build(spec, &mut rng.derive("model"))?;
    let logs = train(
        &mut model,
        train_set,
        test_set,
        spec.epochs,
        &rng.derive("train"),
    )?;
    Ok((model, logs))
}

/// Column names of [`write_epochs_csv`].
pub const EPOCH_COLUMNS: &str = "epoch, then train_<metric> and test_<metric> for mrna_mse, \
mrna_mae, mirna_mse, mirna_mae, tissue_loss, tissue_accuracy, disease_loss, disease_accuracy, \
regularizer, total_loss";

/// One row per epoch; test columns are empty when no test set was given.
pub fn write_epochs_csv<W: Write>(out: W, logs: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["epoch".to_string()];
    for split in ["train", "test"] {
        header.extend(TaskMetrics::FIELDS.iter().map(|f| format!("{split}_{f}")));
    }
    w.write_record(&header).map_err(csv_error)?;
    for log in logs {
        let mut row = vec![log.epoch.to_string()];
        row.extend(log.train.values().iter().map(f64::to_string));
        match &log.test {
            Some(t) => row.extend(t.values().iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(
                String::new(),
                TaskMetrics::FIELDS.len(),
            )),
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

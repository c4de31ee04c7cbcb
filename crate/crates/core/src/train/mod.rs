//! Mini-batch multi-task training and the cross-validation driver.

mod cv;
mod fit;

pub use cv::{
    cross_validate, write_predictions_csv, CvOptions, CvResult, FoldResult, PooledPrediction,
};
pub use fit::{
    evaluate, fit, train, write_epochs_csv, EpochLog, Evaluation, TaskMetrics, EPOCH_COLUMNS,
};

//! Expression datasets: ingestion, normalization, splitting and synthetic
//! generation.

mod dataset;
mod split;
mod synthetic;
mod tsv;

pub use dataset::{maxnorm_normalize, ExpressionMatrix, LabeledDataset};
pub use split::{
    complement, holdout_indices, kfold, kfold_indices, split, split_indices, SplitPlan,
    DEFAULT_FOLD_COUNT, DEFAULT_TEST_FRACTION,
};
pub use synthetic::{generate_synthetic, synthetic_prototypes, SyntheticConfig};
pub use tsv::{load, load_dir, save, save_dir, LABELS_FILE, MIRNA_FILE, MRNA_FILE};

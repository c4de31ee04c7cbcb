//! The four multi-task architectures and their checkpoints.

mod checkpoint;
mod latent;
mod network;
mod spec;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use latent::{reparameterize, LOG_VAR_MAX, LOG_VAR_MIN};
pub use network::{
    argmax, one_hot, BatchOutputs, CellIdentityCode, Heads, LossBreakdown, Model, ModelOutputs,
    Targets, VariationalHeads, Vocabularies,
};
pub use spec::{
    ArchitectureKind, HeadLayers, LayerChoice, NetworkSpec, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS,
};

#[cfg(test)]
mod tests;

//! Run configuration: a TOML file whose every key is optional.

use std::path::{Path, PathBuf};

use cic_core::baselines::{DistanceMetric, KnnSearch};
use cic_core::data::{LabeledDataset, SplitPlan, DEFAULT_FOLD_COUNT, DEFAULT_TEST_FRACTION};
use cic_core::hyperopt::{TpeConfig, DEFAULT_OBJECTIVE_EPOCHS};
use cic_core::losses::LossWeights;
use cic_core::models::{
    ArchitectureKind, HeadLayers, LayerChoice, NetworkSpec, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS,
};
use cic_core::nn::Activation;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub arch: ArchitectureKind,
    pub cic: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Encoder widths, widest first.
    pub encoder: Vec<usize>,
    pub encoder_activation: Activation,
    /// Bernoulli rate on encoder layers (dropout kinds only).
    pub encoder_dropout: f64,
    pub cic_activation: Activation,
    pub decoder: Vec<usize>,
    pub decoder_activation: Activation,
    /// Gaussian rate on decoder layers (dropout kinds only).
    pub decoder_dropout: f64,
    /// Extra building layers on the mRNA and miRNA heads.
    pub head_units: Vec<usize>,
    pub input_noise_sd: f64,
    pub input_dropout_rate: f64,
    pub contractive_lambda: f64,
    pub kl_weight: f64,
    /// A full network spec in JSON (as written by `hyperopt`); replaces
    /// every other key of this table except `epochs`.
    pub spec: Option<PathBuf>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let weights = LossWeights::default();
        Self {
            arch: ArchitectureKind::DropoutCae,
            cic: 8,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: 1e-3,
            encoder: vec![128, 64, 32],
            encoder_activation: Activation::Relu,
            encoder_dropout: 0.25,
            cic_activation: Activation::Linear,
            decoder: vec![64],
            decoder_activation: Activation::Relu,
            decoder_dropout: 0.0,
            head_units: vec![128],
            input_noise_sd: 0.0,
            input_dropout_rate: 0.0,
            contractive_lambda: weights.contractive_lambda,
            kl_weight: weights.kl_weight,
            spec: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub folds: usize,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: DEFAULT_TEST_FRACTION,
            folds: DEFAULT_FOLD_COUNT,
            stratified: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperoptConfig {
    pub trials: usize,
    pub objective_epochs: usize,
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
    /// Trials suggested per surrogate update.
    pub batch: usize,
    /// Search-space file; the built-in network space when absent.
    pub space: Option<PathBuf>,
}

impl Default for HyperoptConfig {
    fn default() -> Self {
        let tpe = TpeConfig::default();
        Self {
            trials: 200,
            objective_epochs: DEFAULT_OBJECTIVE_EPOCHS,
            gamma: tpe.gamma,
            n_startup: tpe.n_startup,
            n_candidates: tpe.n_candidates,
            batch: 1,
            space: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub replicates: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { replicates: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub k: Vec<usize>,
    pub metrics: Vec<DistanceMetric>,
    pub trials: usize,
    pub folds: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        let d = KnnSearch::default();
        Self {
            k: d.k_options,
            metrics: d.metrics,
            trials: d.n_trials,
            folds: d.fold_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaConfig {
    pub components: usize,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self { components: 8 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub split: SplitConfig,
    pub hyperopt: HyperoptConfig,
    pub sweep: SweepConfig,
    pub baseline: BaselineConfig,
    pub pca: PcaConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {}", path.display(), e.message())))?;
        // Relative paths inside the config are relative to the config file.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.network.spec, &mut config.hyperopt.space]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn plan(&self, seed: u64) -> Result<SplitPlan, CliError> {
        let plan = SplitPlan {
            test_fraction: self.split.test_fraction,
            fold_count: self.split.folds,
            seed,
            stratified: self.split.stratified,
        };
        plan.validate().map_err(usage)?;
        Ok(plan)
    }

    /// The network for `dataset`: widths and class counts come from the data.
    pub fn network_spec(&self, dataset: &LabeledDataset) -> Result<NetworkSpec, CliError> {
        let n = &self.network;
        let mut spec = match &n.spec {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Usage(format!("cannot read spec {}: {e}", path.display()))
                })?;
                let mut spec: NetworkSpec = serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("spec {}: {e}", path.display())))?;
                spec.mrna_width = dataset.mrna.width();
                spec.mirna_width = dataset.mirna.width();
                spec.tissue_classes = dataset.tissue_count();
                spec.disease_classes = dataset.disease_count();
                spec
            }
            None => {
                let mut spec = NetworkSpec::new(
                    n.arch,
                    dataset.mrna.width(),
                    dataset.mirna.width(),
                    dataset.tissue_count(),
                    dataset.disease_count(),
                    n.cic,
                );
                let dropout = |rate: f64| if n.arch.has_dropout() { rate } else { 0.0 };
                let stack = |units: &[usize], act: Activation, rate: f64| -> Vec<LayerChoice> {
                    units
                        .iter()
                        .map(|&u| LayerChoice::new(u, act).with_dropout(rate))
                        .collect()
                };
                spec.encoder = stack(&n.encoder, n.encoder_activation, dropout(n.encoder_dropout));
                spec.cic_activation = n.cic_activation;
                spec.decoder = stack(&n.decoder, n.decoder_activation, dropout(n.decoder_dropout));
                spec.head_layers =
                    HeadLayers::regression(stack(&n.head_units, Activation::Relu, 0.0));
                spec.batch_size = n.batch_size;
                spec.learning_rate = n.learning_rate;
                spec.input_noise_sd = n.input_noise_sd;
                spec.input_dropout_rate = n.input_dropout_rate;
                spec.loss_weights.contractive_lambda = n.contractive_lambda;
                spec.loss_weights.kl_weight = n.kl_weight;
                spec
            }
        };
        spec.epochs = n.epochs;
        spec.validate().map_err(usage)?;
        Ok(spec)
    }

    pub fn tpe(&self) -> TpeConfig {
        TpeConfig {
            gamma: self.hyperopt.gamma,
            n_startup: self.hyperopt.n_startup,
            n_candidates: self.hyperopt.n_candidates,
        }
    }
}

pub fn usage(e: cic_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

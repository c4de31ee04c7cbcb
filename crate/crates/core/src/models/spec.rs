use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::nn::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureKind {
    Cae,
    DropoutCae,
    Vae,
    DropoutVae,
}

impl ArchitectureKind {
    pub const ALL: [ArchitectureKind; 4] = [
        ArchitectureKind::Cae,
        ArchitectureKind::DropoutCae,
        ArchitectureKind::Vae,
        ArchitectureKind::DropoutVae,
    ];

    pub fn is_variational(self) -> bool {
        matches!(self, ArchitectureKind::Vae | ArchitectureKind::DropoutVae)
    }

    pub fn has_dropout(self) -> bool {
        matches!(
            self,
            ArchitectureKind::DropoutCae | ArchitectureKind::DropoutVae
        )
    }

    /// The same family without hidden dropout layers.
    pub fn plain(self) -> ArchitectureKind {
        if self.is_variational() {
            ArchitectureKind::Vae
        } else {
            ArchitectureKind::Cae
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArchitectureKind::Cae => "cae",
            ArchitectureKind::DropoutCae => "dropout_cae",
            ArchitectureKind::Vae => "vae",
            ArchitectureKind::DropoutVae => "dropout_vae",
        }
    }
}

impl fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchitectureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cae" => Ok(ArchitectureKind::Cae),
            "dropout_cae" => Ok(ArchitectureKind::DropoutCae),
            "vae" => Ok(ArchitectureKind::Vae),
            "dropout_vae" => Ok(ArchitectureKind::DropoutVae),
            other => Err(Error::invalid(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Units, activation and (for dropout kinds) dropout rate of one building
/// layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerChoice {
    pub units: usize,
    pub activation: Activation,
    #[serde(default)]
    pub dropout: f64,
}

impl LayerChoice {
    pub fn new(units: usize, activation: Activation) -> Self {
        Self {
            units,
            activation,
            dropout: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }
}

/// Hidden building layers of each head, in order away from the trunk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadLayers {
    pub mrna: Vec<LayerChoice>,
    pub mirna: Vec<LayerChoice>,
    pub tissue: Vec<LayerChoice>,
    pub disease: Vec<LayerChoice>,
}

impl HeadLayers {
    /// The same stack on both regression heads, none on the classifiers.
    pub fn regression(layers: Vec<LayerChoice>) -> Self {
        Self {
            mrna: layers.clone(),
            mirna: layers,
            ..Self::default()
        }
    }

    fn named(&self) -> [(&'static str, &[LayerChoice]); 4] {
        [
            ("head_layers.mrna", &self.mrna),
            ("head_layers.mirna", &self.mirna),
            ("head_layers.tissue", &self.tissue),
            ("head_layers.disease", &self.disease),
        ]
    }
}

/// A complete hyperparameter assignment for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: ArchitectureKind,
    pub mrna_width: usize,
    pub mirna_width: usize,
    pub tissue_classes: usize,
    pub disease_classes: usize,
    /// Hidden encoder building layers, widest first.
    pub encoder: Vec<LayerChoice>,
    pub cic_size: usize,
    pub cic_activation: Activation,
    /// Shared decoder trunk between the code and the four heads.
    pub decoder: Vec<LayerChoice>,
    /// Task-specific building layers between the trunk and each output layer.
    #[serde(default)]
    pub head_layers: HeadLayers,
    pub input_noise_sd: f64,
    pub input_dropout_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub loss_weights: LossWeights,
}

pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_BATCH_SIZE: usize = 64;

impl NetworkSpec {
    /// Desk-scale defaults: three encoder building layers narrowing towards
    /// the code, one shared decoder layer, and one extra building layer on
    /// each regression head.
    pub fn new(
        kind: ArchitectureKind,
        mrna_width: usize,
        mirna_width: usize,
        tissue_classes: usize,
        disease_classes: usize,
        cic_size: usize,
    ) -> Self {
        Self {
            kind,
            mrna_width,
            mirna_width,
            tissue_classes,
            disease_classes,
            encoder: vec![
                LayerChoice::new(128, Activation::Relu),
                LayerChoice::new(64, Activation::Relu),
                LayerChoice::new(32, Activation::Relu),
            ],
            cic_size,
            cic_activation: Activation::Linear,
            decoder: vec![LayerChoice::new(64, Activation::Relu)],
            head_layers: HeadLayers::regression(vec![LayerChoice::new(128, Activation::Relu)]),
            input_noise_sd: 0.0,
            input_dropout_rate: 0.0,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: DEFAULT_EPOCHS,
            learning_rate: 1e-3,
            loss_weights: LossWeights::default(),
        }
    }

    /// All problems with the spec, one message per field.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        for (name, v) in [
            ("mrna_width", self.mrna_width),
            ("mirna_width", self.mirna_width),
            ("tissue_classes", self.tissue_classes),
            ("disease_classes", self.disease_classes),
            ("cic_size", self.cic_size),
            ("epochs", self.epochs),
        ] {
            if v == 0 {
                p.push(format!("{name} must be >= 1"));
            }
        }
        if self.batch_size < 2 {
            p.push(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        let check_layers = |p: &mut Vec<String>, part: &str, layers: &[LayerChoice]| {
            for (i, l) in layers.iter().enumerate() {
                if l.units == 0 {
                    p.push(format!("{part}[{i}].units must be >= 1"));
                }
                if !l.activation.is_elementwise() {
                    p.push(format!("{part}[{i}].activation cannot be {}", l.activation));
                }
                if !(0.0..1.0).contains(&l.dropout) {
                    p.push(format!(
                        "{part}[{i}].dropout must lie in [0, 1), got {}",
                        l.dropout
                    ));
                } else if l.dropout > 0.0 && !self.kind.has_dropout() {
                    p.push(format!("{part}[{i}].dropout must be 0 for {}", self.kind));
                }
            }
        };
        check_layers(&mut p, "encoder", &self.encoder);
        check_layers(&mut p, "decoder", &self.decoder);
        for (name, layers) in self.head_layers.named() {
            check_layers(&mut p, name, layers);
        }
        if self.encoder.windows(2).any(|w| w[1].units > w[0].units) {
            p.push("encoder units must be non-increasing".into());
        }
        if self.decoder.windows(2).any(|w| w[1].units < w[0].units) {
            p.push("decoder units must be non-decreasing".into());
        }
        if !self.cic_activation.is_elementwise() {
            p.push(format!("cic_activation cannot be {}", self.cic_activation));
        }
        if !(self.input_noise_sd >= 0.0) || !self.input_noise_sd.is_finite() {
            p.push(format!(
                "input_noise_sd must be >= 0, got {}",
                self.input_noise_sd
            ));
        }
        if !(0.0..1.0).contains(&self.input_dropout_rate) {
            p.push(format!(
                "input_dropout_rate must lie in [0, 1), got {}",
                self.input_dropout_rate
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            p.push(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if let Err(e) = self.loss_weights.validate() {
            p.push(e.to_string());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(problems))
        }
    }
}

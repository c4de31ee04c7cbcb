use std::collections::BTreeMap;

use super::space::{Dimension, ParamValue, SearchSpace};
use crate::data::{split, LabeledDataset, SplitPlan};
use crate::error::{Error, Result};
use crate::models::{ArchitectureKind, NetworkSpec};
use crate::nn::Activation;
use crate::rng::RngState;
use crate::train::fit;

pub const DEFAULT_OBJECTIVE_EPOCHS: usize = 30;

fn ints(values: &[i64]) -> Vec<ParamValue> {
    values.iter().map(|&v| ParamValue::Int(v)).collect()
}

fn texts(values: &[&str]) -> Vec<ParamValue> {
    values.iter().map(|&v| ParamValue::from(v)).collect()
}

/// Default search space for a three-layer encoder and one-layer decoder.
/// Encoder unit options never overlap between layers, so every point narrows
/// towards the code; the decoder widens away from it.
pub fn default_network_space(kind: ArchitectureKind) -> SearchSpace {
    let activations = ["relu", "linear", "softplus"];
    let mut dims = vec![
        Dimension::new("encoder_units_1", ints(&[512, 384, 256])),
        Dimension::new("encoder_units_2", ints(&[192, 128, 96])),
        Dimension::new("encoder_units_3", ints(&[64, 48, 40])),
        Dimension::new("encoder_activation", texts(&activations)),
        Dimension::new("cic_size", ints(&[8, 12, 16, 20, 24, 32])),
        Dimension::new("decoder_units_1", ints(&[64, 128, 256])),
        Dimension::new("decoder_activation", texts(&activations)),
        Dimension::new("head_units", ints(&[64, 128, 256])),
        Dimension::new("batch_size", ints(&[32, 64, 128])),
    ];
    if kind.has_dropout() {
        dims.push(Dimension::new(
            "dropout",
            vec![0.0.into(), 0.25.into(), 0.5.into()],
        ));
    }
    SearchSpace::new(dims).expect("default space is valid")
}

fn units(name: &str, v: &ParamValue) -> Result<usize> {
    v.as_usize()
        .filter(|&u| u > 0)
        .ok_or_else(|| Error::invalid(format!("`{name}` needs a positive integer, got {v}")))
}

fn activation(name: &str, v: &ParamValue) -> Result<Activation> {
    v.as_str()
        .ok_or_else(|| Error::invalid(format!("`{name}` needs an activation name, got {v}")))?
        .parse()
}

fn layer_index(name: &str, prefix: &str, len: usize) -> Result<Option<usize>> {
    let Some(rest) = name.strip_prefix(prefix) else {
        return Ok(None);
    };
    match rest.parse::<usize>() {
        Ok(i) if (1..=len).contains(&i) => Ok(Some(i - 1)),
        _ => Err(Error::invalid(format!(
            "`{name}` does not name one of {len} layers"
        ))),
    }
}

/// Applies named values to `base`. Recognized names: `encoder_units_<i>`,
/// `decoder_units_<i>` (1-based), `encoder_activation`, `decoder_activation`,
/// `cic_size`, `cic_activation`, `head_units` (regression heads),
/// `batch_size` and `dropout` (every hidden layer; dropout kinds only).
pub fn apply_assignment(
    base: &NetworkSpec,
    values: &BTreeMap<String, ParamValue>,
) -> Result<NetworkSpec> {
    let mut spec = base.clone();
    for (name, v) in values {
        if let Some(i) = layer_index(name, "encoder_units_", spec.encoder.len())? {
            spec.encoder[i].units = units(name, v)?;
            continue;
        }
        if let Some(i) = layer_index(name, "decoder_units_", spec.decoder.len())? {
            spec.decoder[i].units = units(name, v)?;
            continue;
        }
        match name.as_str() {
            "encoder_activation" => {
                let a = activation(name, v)?;
                spec.encoder.iter_mut().for_each(|l| l.activation = a);
            }
            "decoder_activation" => {
                let a = activation(name, v)?;
                spec.decoder.iter_mut().for_each(|l| l.activation = a);
            }
            "cic_size" => spec.cic_size = units(name, v)?,
            "cic_activation" => spec.cic_activation = activation(name, v)?,
            "batch_size" => spec.batch_size = units(name, v)?,
            "head_units" => {
                let u = units(name, v)?;
                let heads = &mut spec.head_layers;
                for layer in heads.mrna.iter_mut().chain(heads.mirna.iter_mut()) {
                    layer.units = u;
                }
            }
            "dropout" => {
                let rate = v
                    .as_f64()
                    .ok_or_else(|| Error::invalid(format!("`dropout` needs a number, got {v}")))?;
                if !spec.kind.has_dropout() && rate != 0.0 {
                    return Err(Error::invalid(format!(
                        "{} has no dropout layers",
                        spec.kind
                    )));
                }
                let heads = &mut spec.head_layers;
                spec.encoder
                    .iter_mut()
                    .chain(spec.decoder.iter_mut())
                    .chain(heads.mrna.iter_mut())
                    .chain(heads.mirna.iter_mut())
                    .chain(heads.tissue.iter_mut())
                    .chain(heads.disease.iter_mut())
                    .for_each(|l| l.dropout = rate);
            }
            other => return Err(Error::invalid(format!("unknown hyperparameter `{other}`"))),
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// Scores an assignment by training on a fixed 80% of the data and returning
/// the final average total loss on the remaining 20%.
#[derive(Debug, Clone)]
pub struct NetworkObjective {
    pub base: NetworkSpec,
    pub epochs: usize,
    train_set: LabeledDataset,
    test_set: LabeledDataset,
}

impl NetworkObjective {
    pub fn new(
        base: NetworkSpec,
        dataset: &LabeledDataset,
        epochs: usize,
        split_seed: u64,
    ) -> Result<Self> {
        if epochs == 0 {
            return Err(Error::invalid("objective epochs must be at least 1"));
        }
        let plan = SplitPlan {
            test_fraction: 0.2,
            ..SplitPlan::new(split_seed)
        };
        let (train_set, test_set) = split(dataset, &plan)?;
        Ok(Self {
            base,
            epochs,
            train_set,
            test_set,
        })
    }

    pub fn spec_for(&self, values: &BTreeMap<String, ParamValue>) -> Result<NetworkSpec> {
        let mut spec = apply_assignment(&self.base, values)?;
        spec.epochs = self.epochs;
        Ok(spec)
    }

    pub fn score(&self, values: &BTreeMap<String, ParamValue>, rng: &mut RngState) -> Result<f64> {
        let spec = self.spec_for(values)?;
        let (_, logs) = fit(&spec, &self.train_set, Some(&self.test_set), rng)?;
        logs.last()
            .and_then(|l| l.test.as_ref())
            .map(|m| m.total_loss)
            .ok_or_else(|| Error::invalid("training produced no test metrics"))
    }
}

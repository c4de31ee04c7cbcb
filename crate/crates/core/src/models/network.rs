use serde::{Deserialize, Serialize};

use super::latent::{self, LatentSample};
use super::{ArchitectureKind, LayerChoice, NetworkSpec};
use crate::error::{Error, Result};
use crate::losses::{self, TaskLosses};
use crate::math::Matrix;
use crate::nn::{
    gaussian_sd_for_rate, Activation, BatchNorm, Dense, Layer, LayerCache, Mode, NoiseKind,
    NoiseLayer, Parameterized, Sequential,
};
use crate::rng::RngState;

/// The two parallel dense heads producing the posterior of a VAE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalHeads {
    pub mu: Dense,
    pub log_var: Dense,
}

/// Task-specific building layers followed by the output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub hidden: Sequential,
    pub output: Dense,
}

struct HeadCache {
    hidden: Vec<LayerCache>,
    output: crate::nn::DenseCache,
}

impl Head {
    fn forward(
        &mut self,
        x: &Matrix,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<(Matrix, HeadCache)> {
        let (h, hidden) = self.hidden.forward(x, mode, rng)?;
        let (out, output) = self.output.forward(&h)?;
        Ok((out, HeadCache { hidden, output }))
    }

    fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.output.infer(&self.hidden.infer(x)?)
    }

    fn backward(&self, upstream: &Matrix, cache: &HeadCache) -> Result<(Matrix, Vec<Vec<f64>>)> {
        let (dh, out_grads) = self.output.backward(upstream, &cache.output)?;
        let (dx, mut grads) = self.hidden.backward(&dh, &cache.hidden, 0.0)?;
        grads.extend(out_grads);
        Ok((dx, grads))
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.hidden.params();
        p.extend(self.output.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.hidden.params_mut();
        p.extend(self.output.params_mut());
        p
    }
}

/// One head per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heads {
    pub mrna: Head,
    pub mirna: Head,
    pub tissue: Head,
    pub disease: Head,
}

impl Heads {
    fn all(&self) -> [&Head; 4] {
        [&self.mrna, &self.mirna, &self.tissue, &self.disease]
    }

    fn all_mut(&mut self) -> [&mut Head; 4] {
        [
            &mut self.mrna,
            &mut self.mirna,
            &mut self.tissue,
            &mut self.disease,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub tissues: Vec<String>,
    pub diseases: Vec<String>,
}

/// A multi-task autoencoder: mRNA profile → cell identity code → mRNA
/// reconstruction, miRNA profile, tissue and disease probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    spec: NetworkSpec,
    input_corruption: Sequential,
    encoder: Sequential,
    latent: Option<VariationalHeads>,
    trunk: Sequential,
    heads: Heads,
    vocabularies: Option<Vocabularies>,
    trained: bool,
}

/// Batch outputs of the four heads.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutputs {
    pub mrna: Matrix,
    pub mirna: Matrix,
    pub tissue: Matrix,
    pub disease: Matrix,
}

/// Per-sample outputs of the four heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutputs {
    pub mrna_recon: Vec<f64>,
    pub mirna_pred: Vec<f64>,
    pub tissue_probs: Vec<f64>,
    pub disease_probs: Vec<f64>,
}

impl ModelOutputs {
    pub fn tissue_class(&self) -> usize {
        argmax(&self.tissue_probs)
    }

    pub fn disease_class(&self) -> usize {
        argmax(&self.disease_probs)
    }
}

/// The code of one sample. For VAE kinds `values` is the posterior mean and
/// `log_var` its log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct CellIdentityCode {
    pub values: Vec<f64>,
    pub log_var: Option<Vec<f64>>,
}

/// Supervision for one batch.
#[derive(Debug, Clone, Copy)]
pub struct Targets<'a> {
    pub mirna: &'a Matrix,
    pub tissue_onehot: &'a Matrix,
    pub disease_onehot: &'a Matrix,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub tasks: TaskLosses,
    /// Contractive penalty (CAE kinds) or KL term (VAE kinds).
    pub regularizer: f64,
    pub total: f64,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `ids.len() × classes` indicator matrix.
pub fn one_hot(ids: &[usize], classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(ids.len(), classes);
    for (r, &id) in ids.iter().enumerate() {
        if id >= classes {
            return Err(Error::invalid(format!(
                "class id {id} out of range 0..{classes}"
            )));
        }
        m.set(r, id, 1.0);
    }
    Ok(m)
}

struct EncodeState {
    clean: Matrix,
    encoder_caches: Vec<LayerCache>,
    latent: Option<LatentState>,
    code: Matrix,
}

struct LatentState {
    mu: Matrix,
    log_var: Matrix,
    mu_cache: crate::nn::DenseCache,
    log_var_cache: crate::nn::DenseCache,
    sample: Option<LatentSample>,
}

struct DecodeState {
    trunk_caches: Vec<LayerCache>,
    head_caches: Vec<HeadCache>,
    outputs: BatchOutputs,
}

fn building_layer(
    layers: &mut Sequential,
    inputs: usize,
    outputs: usize,
    activation: Activation,
    rng: &mut RngState,
) {
    layers.push(Layer::BatchNorm(BatchNorm::new(inputs)));
    layers.push(Layer::Dense(Dense::new(inputs, outputs, activation, rng)));
}

impl Model {
    /// Assembles the layer stack for `spec` with Glorot-initialized weights.
    pub fn build(spec: &NetworkSpec, rng: &mut RngState) -> Result<Self> {
        spec.validate()?;
        let mut init = rng.derive("init");
        let dropout_kind = spec.kind.has_dropout();

        let mut input_corruption = Sequential::default();
        if spec.input_noise_sd > 0.0 {
            input_corruption.push(Layer::Noise(NoiseLayer::new(
                NoiseKind::AdditiveGaussian {
                    sd: spec.input_noise_sd,
                },
            )?));
        }
        if spec.input_dropout_rate > 0.0 {
            input_corruption.push(Layer::Noise(NoiseLayer::new(
                NoiseKind::BernoulliDropout {
                    rate: spec.input_dropout_rate,
                },
            )?));
        }

        let mut encoder = Sequential::default();
        let mut width = spec.mrna_width;
        for choice in &spec.encoder {
            building_layer(
                &mut encoder,
                width,
                choice.units,
                choice.activation,
                &mut init,
            );
            if dropout_kind {
                encoder.push(Layer::Noise(NoiseLayer::new(
                    NoiseKind::BernoulliDropout {
                        rate: choice.dropout,
                    },
                )?));
            }
            width = choice.units;
        }
        let latent = if spec.kind.is_variational() {
            encoder.push(Layer::BatchNorm(BatchNorm::new(width)));
            Some(VariationalHeads {
                mu: Dense::new(width, spec.cic_size, Activation::Linear, &mut init),
                log_var: Dense::new(width, spec.cic_size, Activation::Linear, &mut init),
            })
        } else {
            building_layer(
                &mut encoder,
                width,
                spec.cic_size,
                spec.cic_activation,
                &mut init,
            );
            None
        };

        let decoder_stack = |init: &mut RngState, mut width: usize, choices: &[LayerChoice]| {
            let mut stack = Sequential::default();
            for choice in choices {
                building_layer(&mut stack, width, choice.units, choice.activation, init);
                if dropout_kind {
                    stack.push(Layer::Noise(NoiseLayer::new(NoiseKind::GaussianDropout {
                        sd: gaussian_sd_for_rate(choice.dropout),
                    })?));
                }
                width = choice.units;
            }
            Ok::<_, Error>((stack, width))
        };
        let (trunk, width) = decoder_stack(&mut init, spec.cic_size, &spec.decoder)?;
        let mut head = |choices: &[LayerChoice], outputs: usize, activation: Activation| {
            let (hidden, w) = decoder_stack(&mut init, width, choices)?;
            let output = Dense::new(w, outputs, activation, &mut init);
            Ok::<_, Error>(Head { hidden, output })
        };
        let h = &spec.head_layers;
        let heads = Heads {
            mrna: head(&h.mrna, spec.mrna_width, Activation::Sigmoid)?,
            mirna: head(&h.mirna, spec.mirna_width, Activation::Sigmoid)?,
            tissue: head(&h.tissue, spec.tissue_classes, Activation::Softmax)?,
            disease: head(&h.disease, spec.disease_classes, Activation::Softmax)?,
        };
        Ok(Self {
            spec: spec.clone(),
            input_corruption,
            encoder,
            latent,
            trunk,
            heads,
            vocabularies: None,
            trained: false,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn kind(&self) -> ArchitectureKind {
        self.spec.kind
    }

    pub fn encoder(&self) -> &Sequential {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut Sequential {
        &mut self.encoder
    }

    pub fn variational_heads(&self) -> Option<&VariationalHeads> {
        self.latent.as_ref()
    }

    pub fn trunk(&self) -> &Sequential {
        &self.trunk
    }

    pub fn heads(&self) -> &Heads {
        &self.heads
    }

    pub fn vocabularies(&self) -> Option<&Vocabularies> {
        self.vocabularies.as_ref()
    }

    pub fn set_vocabularies(&mut self, vocabularies: Vocabularies) -> Result<()> {
        if vocabularies.tissues.len() != self.spec.tissue_classes
            || vocabularies.diseases.len() != self.spec.disease_classes
        {
            return Err(Error::invalid(format!(
                "vocabulary sizes {}/{} do not match head widths {}/{}",
                vocabularies.tissues.len(),
                vocabularies.diseases.len(),
                self.spec.tissue_classes,
                self.spec.disease_classes
            )));
        }
        self.vocabularies = Some(vocabularies);
        Ok(())
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    /// Number of trainable scalars (dense weights and biases, batch-norm γ
    /// and β).
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.spec.mrna_width {
            return Err(Error::shape("model input", self.spec.mrna_width, x.cols()));
        }
        Ok(())
    }

    fn encode_pass(&mut self, x: &Matrix, mode: Mode, rng: &RngState) -> Result<EncodeState> {
        self.check_input(x)?;
        let (corrupted, _) = self
            .input_corruption
            .forward(x, mode, &mut rng.derive("input"))?;
        let (hidden, encoder_caches) =
            self.encoder
                .forward(&corrupted, mode, &mut rng.derive("encoder"))?;
        let (latent, code) = match &self.latent {
            None => (None, hidden.clone()),
            Some(heads) => {
                let (mu, mu_cache) = heads.mu.forward(&hidden)?;
                let (log_var, log_var_cache) = heads.log_var.forward(&hidden)?;
                let (sample, code) = match mode {
                    Mode::Training => {
                        let s = latent::sample(&mu, &log_var, &mut rng.derive("latent"))?;
                        let z = s.z.clone();
                        (Some(s), z)
                    }
                    Mode::Inference => (None, mu.clone()),
                };
                (
                    Some(LatentState {
                        mu,
                        log_var,
                        mu_cache,
                        log_var_cache,
                        sample,
                    }),
                    code,
                )
            }
        };
        Ok(EncodeState {
            clean: x.clone(),
            encoder_caches,
            latent,
            code,
        })
    }

    fn decode_pass(&mut self, code: &Matrix, mode: Mode, rng: &RngState) -> Result<DecodeState> {
        let (t, trunk_caches) = self.trunk.forward(code, mode, &mut rng.derive("decoder"))?;
        let mut outputs = Vec::with_capacity(4);
        let mut head_caches = Vec::with_capacity(4);
        for (i, head) in self.heads.all_mut().into_iter().enumerate() {
            let (out, cache) = head.forward(&t, mode, &mut rng.derive_indexed("head", i as u64))?;
            outputs.push(out);
            head_caches.push(cache);
        }
        let [mrna, mirna, tissue, disease]: [Matrix; 4] = outputs.try_into().expect("four heads");
        Ok(DecodeState {
            trunk_caches,
            head_caches,
            outputs: BatchOutputs {
                mrna,
                mirna,
                tissue,
                disease,
            },
        })
    }

    fn regularizer(&self, enc: &EncodeState) -> Result<f64> {
        match &enc.latent {
            Some(l) => losses::kl_gaussian(&l.mu, &l.log_var),
            None => self.encoder.contractive_penalty(&enc.encoder_caches),
        }
    }

    fn breakdown(
        &self,
        enc: &EncodeState,
        dec: &DecodeState,
        targets: &Targets,
    ) -> Result<LossBreakdown> {
        let o = &dec.outputs;
        let tasks = TaskLosses {
            mrna: losses::mse(&o.mrna, &enc.clean)?,
            mirna: losses::mse(&o.mirna, targets.mirna)?,
            tissue: losses::cosine_loss(&o.tissue, targets.tissue_onehot)?,
            disease: losses::cosine_loss(&o.disease, targets.disease_onehot)?,
        };
        let regularizer = self.regularizer(enc)?;
        let total =
            losses::total_loss(&tasks, regularizer, &self.spec.loss_weights, self.spec.kind);
        Ok(LossBreakdown {
            tasks,
            regularizer,
            total,
        })
    }

    fn check_targets(&self, x: &Matrix, targets: &Targets) -> Result<()> {
        let n = x.rows();
        let expect = [
            (targets.mirna, self.spec.mirna_width, "miRNA targets"),
            (
                targets.tissue_onehot,
                self.spec.tissue_classes,
                "tissue targets",
            ),
            (
                targets.disease_onehot,
                self.spec.disease_classes,
                "disease targets",
            ),
        ];
        for (m, cols, what) in expect {
            if m.shape() != (n, cols) {
                return Err(Error::Shape {
                    op: "model targets",
                    expected: format!("{what} {n}x{cols}"),
                    got: format!("{}x{}", m.rows(), m.cols()),
                });
            }
        }
        Ok(())
    }

    /// Training-mode forward and backward pass on one batch. Returns the
    /// loss terms and parameter gradients in `params()` order. `rng` fixes
    /// every noise draw of the pass.
    pub fn loss_and_grads(
        &mut self,
        x: &Matrix,
        targets: &Targets,
        rng: &RngState,
    ) -> Result<(LossBreakdown, Vec<Vec<f64>>)> {
        self.check_targets(x, targets)?;
        let enc = self.encode_pass(x, Mode::Training, rng)?;
        let dec = self.decode_pass(&enc.code, Mode::Training, rng)?;
        let breakdown = self.breakdown(&enc, &dec, targets)?;

        let w = self.spec.loss_weights;
        let o = &dec.outputs;
        let upstreams = [
            scaled(losses::mse_grad(&o.mrna, &enc.clean)?, w.regression_weight),
            scaled(
                losses::mse_grad(&o.mirna, targets.mirna)?,
                w.regression_weight,
            ),
            scaled(
                losses::cosine_loss_grad(&o.tissue, targets.tissue_onehot)?,
                w.classification_weight,
            ),
            scaled(
                losses::cosine_loss_grad(&o.disease, targets.disease_onehot)?,
                w.classification_weight,
            ),
        ];
        let mut head_grads = Vec::with_capacity(8);
        let mut d_trunk: Option<Matrix> = None;
        for ((head, cache), up) in self
            .heads
            .all()
            .into_iter()
            .zip(&dec.head_caches)
            .zip(&upstreams)
        {
            let (dx, g) = head.backward(up, cache)?;
            head_grads.extend(g);
            match &mut d_trunk {
                Some(acc) => acc.add_assign(&dx)?,
                None => d_trunk = Some(dx),
            }
        }
        let d_trunk = d_trunk.expect("four heads");
        let (d_code, trunk_grads) = self.trunk.backward(&d_trunk, &dec.trunk_caches, 0.0)?;

        let (encoder_grads, latent_grads) = match (&self.latent, &enc.latent) {
            (Some(heads), Some(state)) => {
                let sample = state.sample.as_ref().expect("training sample");
                let (mut dmu, mut dlv) = latent::sample_backward(&d_code, sample, &state.log_var)?;
                let (kl_mu, kl_lv) = losses::kl_gaussian_grads(&state.mu, &state.log_var)?;
                dmu.add_assign(&scaled(kl_mu, w.kl_weight))?;
                dlv.add_assign(&scaled(kl_lv, w.kl_weight))?;
                let (mut dh, mut g) = heads.mu.backward(&dmu, &state.mu_cache)?;
                let (dh2, g2) = heads.log_var.backward(&dlv, &state.log_var_cache)?;
                dh.add_assign(&dh2)?;
                g.extend(g2);
                let (_, eg) = self.encoder.backward(&dh, &enc.encoder_caches, 0.0)?;
                (eg, g)
            }
            _ => {
                let (_, eg) =
                    self.encoder
                        .backward(&d_code, &enc.encoder_caches, w.contractive_lambda)?;
                (eg, vec![])
            }
        };
        let mut grads = encoder_grads;
        grads.extend(latent_grads);
        grads.extend(trunk_grads);
        grads.extend(head_grads);
        Ok((breakdown, grads))
    }

    /// Inference-mode loss terms on a batch (noise off, running statistics).
    pub fn evaluate_losses(&self, x: &Matrix, targets: &Targets) -> Result<LossBreakdown> {
        Ok(self.evaluate(x, targets)?.0)
    }

    /// Inference-mode loss terms together with the head outputs they were
    /// computed from.
    pub fn evaluate(&self, x: &Matrix, targets: &Targets) -> Result<(LossBreakdown, BatchOutputs)> {
        self.check_targets(x, targets)?;
        let mut frozen = self.clone();
        let rng = RngState::new(0);
        let enc = frozen.encode_pass(x, Mode::Inference, &rng)?;
        let dec = frozen.decode_pass(&enc.code, Mode::Inference, &rng)?;
        let breakdown = self.breakdown(&enc, &dec, targets)?;
        Ok((breakdown, dec.outputs))
    }

    /// Training-mode forward of the four heads with fixed noise draws.
    pub fn forward_train(&mut self, x: &Matrix, rng: &RngState) -> Result<BatchOutputs> {
        let enc = self.encode_pass(x, Mode::Training, rng)?;
        Ok(self.decode_pass(&enc.code, Mode::Training, rng)?.outputs)
    }

    /// Deterministic codes (`n × cic_size`); posterior means for VAE kinds.
    pub fn encode_batch(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.encode_distribution(x)?.0)
    }

    /// Codes plus, for VAE kinds, posterior log-variances.
    pub fn encode_distribution(&self, x: &Matrix) -> Result<(Matrix, Option<Matrix>)> {
        self.check_input(x)?;
        let hidden = self.encoder.infer(x)?;
        match &self.latent {
            None => Ok((hidden, None)),
            Some(h) => Ok((h.mu.infer(&hidden)?, Some(h.log_var.infer(&hidden)?))),
        }
    }

    /// Runs the decoder on codes.
    pub fn decode_batch(&self, code: &Matrix) -> Result<BatchOutputs> {
        if code.cols() != self.spec.cic_size {
            return Err(Error::shape("decode", self.spec.cic_size, code.cols()));
        }
        let t = self.trunk.infer(code)?;
        Ok(BatchOutputs {
            mrna: self.heads.mrna.infer(&t)?,
            mirna: self.heads.mirna.infer(&t)?,
            tissue: self.heads.tissue.infer(&t)?,
            disease: self.heads.disease.infer(&t)?,
        })
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<BatchOutputs> {
        self.decode_batch(&self.encode_batch(x)?)
    }

    pub fn encode(&self, profile: &[f64]) -> Result<CellIdentityCode> {
        let (mu, lv) = self.encode_distribution(&Matrix::row_vector(profile)?)?;
        Ok(CellIdentityCode {
            values: mu.into_data(),
            log_var: lv.map(Matrix::into_data),
        })
    }

    pub fn predict(&self, profile: &[f64]) -> Result<ModelOutputs> {
        let o = self.predict_batch(&Matrix::row_vector(profile)?)?;
        Ok(ModelOutputs {
            mrna_recon: o.mrna.into_data(),
            mirna_pred: o.mirna.into_data(),
            tissue_probs: o.tissue.into_data(),
            disease_probs: o.disease.into_data(),
        })
    }
}

fn scaled(mut m: Matrix, factor: f64) -> Matrix {
    m.scale(factor);
    m
}

impl Parameterized for Model {
    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.encoder.params();
        if let Some(h) = &self.latent {
            p.extend(h.mu.params());
            p.extend(h.log_var.params());
        }
        p.extend(self.trunk.params());
        for head in self.heads.all() {
            p.extend(head.params());
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.encoder.params_mut();
        if let Some(h) = &mut self.latent {
            p.extend(h.mu.params_mut());
            p.extend(h.log_var.params_mut());
        }
        p.extend(self.trunk.params_mut());
        for head in self.heads.all_mut() {
            p.extend(head.params_mut());
        }
        p
    }
}

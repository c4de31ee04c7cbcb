use super::*;
use crate::math::Matrix;
use crate::nn::gradcheck::check_parameters;
use crate::nn::{Activation, Layer, Parameterized};
use crate::rng::RngState;

fn tiny_spec(kind: ArchitectureKind) -> NetworkSpec {
    let mut spec = NetworkSpec::new(kind, 6, 3, 3, 2, 2);
    spec.encoder = vec![
        LayerChoice::new(5, Activation::Softplus),
        LayerChoice::new(4, Activation::Sigmoid),
    ];
    spec.cic_activation = Activation::Softplus;
    spec.decoder = vec![LayerChoice::new(4, Activation::Softplus)];
    spec.head_layers = HeadLayers::default();
    spec.head_layers.mirna = vec![LayerChoice::new(3, Activation::Softplus)];
    spec.head_layers.disease = vec![LayerChoice::new(3, Activation::Sigmoid)];
    spec.batch_size = 4;
    spec.loss_weights.contractive_lambda = 0.1;
    spec.loss_weights.kl_weight = 0.1;
    if kind.has_dropout() {
        let h = &mut spec.head_layers;
        for l in spec
            .encoder
            .iter_mut()
            .chain(spec.decoder.iter_mut())
            .chain(h.mirna.iter_mut())
            .chain(h.disease.iter_mut())
        {
            l.dropout = 0.25;
        }
        spec.input_noise_sd = 0.05;
        spec.input_dropout_rate = 0.1;
    }
    spec
}

struct Batch {
    x: Matrix,
    mirna: Matrix,
    tissue: Matrix,
    disease: Matrix,
}

impl Batch {
    fn random(spec: &NetworkSpec, n: usize, rng: &mut RngState) -> Self {
        let x = Matrix::new(
            n,
            spec.mrna_width,
            rng.uniform_vec(n * spec.mrna_width, 0.0, 1.0),
        )
        .unwrap();
        let mirna = Matrix::new(
            n,
            spec.mirna_width,
            rng.uniform_vec(n * spec.mirna_width, 0.0, 1.0),
        )
        .unwrap();
        let t: Vec<usize> = (0..n).map(|_| rng.below(spec.tissue_classes)).collect();
        let d: Vec<usize> = (0..n).map(|_| rng.below(spec.disease_classes)).collect();
        Self {
            x,
            mirna,
            tissue: one_hot(&t, spec.tissue_classes).unwrap(),
            disease: one_hot(&d, spec.disease_classes).unwrap(),
        }
    }

    fn targets(&self) -> Targets<'_> {
        Targets {
            mirna: &self.mirna,
            tissue_onehot: &self.tissue,
            disease_onehot: &self.disease,
        }
    }
}

#[test]
fn full_network_gradients_for_every_kind() {
    for kind in ArchitectureKind::ALL {
        let spec = tiny_spec(kind);
        let mut rng = RngState::new(31);
        let mut model = Model::build(&spec, &mut rng).unwrap();
        let batch = Batch::random(&spec, 4, &mut rng);
        let noise = RngState::new(77);
        let (_, grads) = model
            .loss_and_grads(&batch.x, &batch.targets(), &noise)
            .unwrap();
        let report = check_parameters(&model, &grads, 1e-5, |m| {
            let mut m = m.clone();
            Ok(m.loss_and_grads(&batch.x, &batch.targets(), &noise)?
                .0
                .total)
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-5, "{kind}: {report:?}");
    }
}

fn hand_param_count(spec: &NetworkSpec) -> usize {
    let dense = |i: usize, o: usize| i * o + o;
    let bn = |w: usize| 2 * w;
    let mut total = 0;
    let mut w = spec.mrna_width;
    for l in &spec.encoder {
        total += bn(w) + dense(w, l.units);
        w = l.units;
    }
    if spec.kind.is_variational() {
        total += bn(w) + 2 * dense(w, spec.cic_size);
    } else {
        total += bn(w) + dense(w, spec.cic_size);
    }
    let mut w = spec.cic_size;
    for l in &spec.decoder {
        total += bn(w) + dense(w, l.units);
        w = l.units;
    }
    let h = &spec.head_layers;
    for (layers, outputs) in [
        (&h.mrna, spec.mrna_width),
        (&h.mirna, spec.mirna_width),
        (&h.tissue, spec.tissue_classes),
        (&h.disease, spec.disease_classes),
    ] {
        let mut hw = w;
        for l in layers {
            total += bn(hw) + dense(hw, l.units);
            hw = l.units;
        }
        total += dense(hw, outputs);
    }
    total
}

#[test]
fn parameter_count_matches_layer_shapes() {
    for kind in ArchitectureKind::ALL {
        let mut spec = NetworkSpec::new(kind, 200, 40, 5, 8, 8);
        let model = Model::build(&spec, &mut RngState::new(1)).unwrap();
        assert_eq!(model.param_count(), hand_param_count(&spec), "{kind}");
        spec.head_layers = HeadLayers::regression(vec![LayerChoice::new(96, Activation::Relu)]);
        spec.head_layers.tissue = vec![LayerChoice::new(16, Activation::Linear)];
        let model = Model::build(&spec, &mut RngState::new(1)).unwrap();
        assert_eq!(
            model.param_count(),
            hand_param_count(&spec),
            "{kind} with head layers"
        );
    }
}

#[test]
fn vae_has_two_code_heads() {
    let spec = NetworkSpec::new(ArchitectureKind::Vae, 20, 4, 2, 2, 3);
    let model = Model::build(&spec, &mut RngState::new(1)).unwrap();
    let heads = model.variational_heads().expect("vae heads");
    assert_eq!(heads.mu.outputs(), 3);
    assert_eq!(heads.log_var.outputs(), 3);
    let cae = Model::build(
        &NetworkSpec::new(ArchitectureKind::Cae, 20, 4, 2, 2, 3),
        &mut RngState::new(1),
    )
    .unwrap();
    assert!(cae.variational_heads().is_none());
}

#[test]
fn zero_code_size_rejected() {
    let spec = NetworkSpec::new(ArchitectureKind::DropoutCae, 20, 4, 2, 2, 0);
    let err = Model::build(&spec, &mut RngState::new(1)).unwrap_err();
    assert!(err.to_string().contains("cic_size"), "{err}");
}

#[test]
fn encode_and_predict_contracts() {
    let spec = NetworkSpec::new(ArchitectureKind::DropoutCae, 30, 6, 4, 5, 8);
    let model = Model::build(&spec, &mut RngState::new(4)).unwrap();
    let mut rng = RngState::new(5);
    let profile = rng.uniform_vec(30, 0.0, 1.0);
    let a = model.encode(&profile).unwrap();
    let b = model.encode(&profile).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.values.len(), 8);
    let out = model.predict(&profile).unwrap();
    assert!((out.tissue_probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert!((out.disease_probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert!(out.disease_class() < 5);
    assert!(model.encode(&profile[..29]).is_err());
}

#[test]
fn zero_input_through_linear_encoder_gives_zero_code() {
    let mut spec = NetworkSpec::new(ArchitectureKind::Cae, 10, 3, 2, 2, 4);
    for l in &mut spec.encoder {
        l.activation = Activation::Linear;
    }
    spec.encoder = vec![LayerChoice::new(6, Activation::Linear)];
    let model = Model::build(&spec, &mut RngState::new(4)).unwrap();
    let code = model.encode(&[0.0; 10]).unwrap();
    assert_eq!(code.values, vec![0.0; 4]);
}

#[test]
fn vae_code_is_posterior_mean() {
    let spec = NetworkSpec::new(ArchitectureKind::DropoutVae, 12, 3, 2, 2, 4);
    let model = Model::build(&spec, &mut RngState::new(4)).unwrap();
    let x = Matrix::new(3, 12, RngState::new(2).uniform_vec(36, 0.0, 1.0)).unwrap();
    let (mu, lv) = model.encode_distribution(&x).unwrap();
    assert_eq!(model.encode_batch(&x).unwrap(), mu);
    assert_eq!(lv.unwrap().shape(), (3, 4));
}

#[test]
fn argmax_ties_go_low() {
    assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    assert_eq!(argmax(&[0.5, 0.5]), 0);
}

#[test]
fn one_training_step_touches_every_parameter() {
    for kind in ArchitectureKind::ALL {
        let spec = tiny_spec(kind);
        let mut rng = RngState::new(8);
        let mut model = Model::build(&spec, &mut rng).unwrap();
        let before = model.clone();
        let batch = Batch::random(&spec, 6, &mut rng);
        let (_, grads) = model
            .loss_and_grads(&batch.x, &batch.targets(), &RngState::new(1))
            .unwrap();
        let lengths: Vec<usize> = grads.iter().map(Vec::len).collect();
        let mut adam = crate::nn::AdamState::new(&lengths, Default::default()).unwrap();
        adam.step(model.params_mut(), &grads).unwrap();
        for (t, ((old, new), g)) in before
            .params()
            .iter()
            .zip(model.params())
            .zip(&grads)
            .enumerate()
        {
            let all_zero = g.iter().all(|v| *v == 0.0);
            assert!(all_zero || *old != new, "{kind}: tensor {t} did not move");
        }
    }
}

#[test]
fn zero_dropout_matches_plain_kind() {
    for kind in [ArchitectureKind::DropoutCae, ArchitectureKind::DropoutVae] {
        let mut spec = tiny_spec(kind);
        spec.input_noise_sd = 0.0;
        spec.input_dropout_rate = 0.0;
        let h = &mut spec.head_layers;
        for l in spec
            .encoder
            .iter_mut()
            .chain(spec.decoder.iter_mut())
            .chain(h.mirna.iter_mut())
            .chain(h.disease.iter_mut())
        {
            l.dropout = 0.0;
        }
        let mut plain_spec = spec.clone();
        plain_spec.kind = kind.plain();
        let mut with = Model::build(&spec, &mut RngState::new(3)).unwrap();
        let mut plain = Model::build(&plain_spec, &mut RngState::new(3)).unwrap();
        let x = Matrix::new(5, 6, RngState::new(9).uniform_vec(30, 0.0, 1.0)).unwrap();
        let noise = RngState::new(10);
        assert_eq!(
            with.forward_train(&x, &noise).unwrap(),
            plain.forward_train(&x, &noise).unwrap()
        );
        assert_eq!(
            with.predict_batch(&x).unwrap(),
            plain.predict_batch(&x).unwrap()
        );
    }
}

#[test]
fn heads_depend_on_input_only_through_the_code() {
    let spec = NetworkSpec::new(ArchitectureKind::Cae, 16, 4, 3, 3, 5);
    let model = Model::build(&spec, &mut RngState::new(6)).unwrap();
    let zero_code = Matrix::zeros(2, 5);
    let a = model.decode_batch(&zero_code).unwrap();
    let b = model.decode_batch(&zero_code).unwrap();
    assert_eq!(a, b);
    let x = Matrix::new(2, 16, RngState::new(1).uniform_vec(32, 0.0, 1.0)).unwrap();
    assert_eq!(
        model.predict_batch(&x).unwrap(),
        model
            .decode_batch(&model.encode_batch(&x).unwrap())
            .unwrap()
    );
    // Nothing but the code feeds the decoder: the trunk starts at cic_size.
    match &model.trunk().layers()[0] {
        Layer::BatchNorm(bn) => assert_eq!(bn.width(), 5),
        other => panic!("unexpected first trunk layer {}", other.name()),
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let spec = tiny_spec(ArchitectureKind::DropoutVae);
    let mut rng = RngState::new(12);
    let mut model = Model::build(&spec, &mut rng).unwrap();
    // Move batch-norm statistics away from their initial values.
    let batch = Batch::random(&spec, 8, &mut rng);
    model
        .loss_and_grads(&batch.x, &batch.targets(), &RngState::new(2))
        .unwrap();
    model
        .set_vocabularies(Vocabularies {
            tissues: vec!["a".into(), "b".into(), "c".into()],
            diseases: vec!["Normal".into(), "x".into()],
        })
        .unwrap();
    let text = checkpoint_to_string(&model).unwrap();
    let loaded = checkpoint_from_str(&text).unwrap();
    assert_eq!(loaded, model);
    assert_eq!(
        loaded.predict_batch(&batch.x).unwrap(),
        model.predict_batch(&batch.x).unwrap()
    );
}

#[test]
fn corrupt_checkpoints_rejected() {
    let spec = tiny_spec(ArchitectureKind::Cae);
    let model = Model::build(&spec, &mut RngState::new(1)).unwrap();
    let text = checkpoint_to_string(&model).unwrap();
    assert!(checkpoint_from_str(&text.replace("cic-checkpoint", "other")).is_err());
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["model"]["spec"]["cic_size"] = serde_json::json!(3);
    assert!(checkpoint_from_str(&value.to_string()).is_err());
    assert!(checkpoint_from_str("{").is_err());
}

//! Input-perturbation sweeps on a trained model: random gene dropout and
//! additive Gaussian noise.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses;
use crate::math::Matrix;
use crate::metrics::{accuracy_of, csv_error};
use crate::models::{argmax, Model};
use crate::par;
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// Each input gene is zeroed independently with probability `level`.
    Dropout,
    /// N(0, level²) is added to each input value, then clamped to [0, 1].
    Noise,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::Dropout => "dropout",
            SweepKind::Noise => "noise",
        }
    }

    /// 0 to 0.50 in steps of 0.01 for dropout, 0 to 0.25 for noise.
    pub fn default_grid(self) -> Vec<f64> {
        let steps = match self {
            SweepKind::Dropout => 50,
            SweepKind::Noise => 25,
        };
        (0..=steps).map(|i| i as f64 / 100.0).collect()
    }

    fn check_level(self, level: f64) -> Result<()> {
        let ok = match self {
            SweepKind::Dropout => (0.0..1.0).contains(&level),
            SweepKind::Noise => level.is_finite() && level >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{} level {level} is out of range",
                self.as_str()
            )))
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dropout" => Ok(SweepKind::Dropout),
            "noise" => Ok(SweepKind::Noise),
            _ => Err(Error::invalid(format!(
                "unknown sweep kind `{s}` (dropout or noise)"
            ))),
        }
    }
}

/// Metrics at one perturbation level. Reconstruction errors are measured
/// against the clean profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: f64,
    pub replicate: usize,
    pub mrna_mse: f64,
    pub mirna_mse: f64,
    pub tissue_accuracy: f64,
    pub disease_accuracy: f64,
}

fn perturb(x: &Matrix, kind: SweepKind, level: f64, rng: &mut RngState) -> Result<Matrix> {
    if level == 0.0 {
        return Ok(x.clone());
    }
    let mut out = x.clone();
    match kind {
        SweepKind::Dropout => {
            let keep = rng.sample_bernoulli_mask(out.data().len(), 1.0 - level)?;
            for (v, k) in out.data_mut().iter_mut().zip(keep) {
                *v *= k;
            }
        }
        SweepKind::Noise => {
            let noise = rng.sample_gaussian(out.data().len(), 0.0, level)?;
            for (v, e) in out.data_mut().iter_mut().zip(noise) {
                *v = (*v + e).clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

fn score(
    model: &Model,
    data: &LabeledDataset,
    x: &Matrix,
    level: f64,
    replicate: usize,
) -> Result<SweepRow> {
    let out = model.predict_batch(x)?;
    let tissue: Vec<usize> = out.tissue.row_iter().map(argmax).collect();
    let disease: Vec<usize> = out.disease.row_iter().map(argmax).collect();
    Ok(SweepRow {
        level,
        replicate,
        mrna_mse: losses::mse(&out.mrna, &data.mrna.values)?,
        mirna_mse: losses::mse(&out.mirna, &data.mirna.values)?,
        tissue_accuracy: accuracy_of(&data.tissue_ids, &tissue)?,
        disease_accuracy: accuracy_of(&data.disease_ids, &disease)?,
    })
}

/// Evaluates `model` on `data` perturbed at every level, `replicates` times
/// each. Level `i`, replicate `r` draws from
/// `rng.derive_indexed(kind, i).derive_indexed("replicate", r)`, and every
/// entry of every sample gets its own draw. Rows come level-major.
pub fn sweep(
    model: &Model,
    data: &LabeledDataset,
    kind: SweepKind,
    levels: &[f64],
    replicates: usize,
    rng: &RngState,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if !model.is_trained() {
        return Err(Error::Untrained);
    }
    if data.is_empty() {
        return Err(Error::Data("cannot sweep an empty dataset".into()));
    }
    if replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    if data.mrna.width() != model.spec().mrna_width
        || data.mirna.width() != model.spec().mirna_width
    {
        return Err(Error::shape(
            "sweep",
            format!(
                "{} mRNA and {} miRNA genes",
                model.spec().mrna_width,
                model.spec().mirna_width
            ),
            format!("{} and {}", data.mrna.width(), data.mirna.width()),
        ));
    }
    for &l in levels {
        kind.check_level(l)?;
    }
    par::try_map_indexed(levels.len() * replicates, workers, |cell| {
        let (i, r) = (cell / replicates, cell % replicates);
        let mut stream = rng
            .derive_indexed(kind.as_str(), i as u64)
            .derive_indexed("replicate", r as u64);
        let x = perturb(&data.mrna.values, kind, levels[i], &mut stream)?;
        score(model, data, &x, levels[i], r)
    })
}

/// Dropout sweep with one replicate per level.
pub fn dropout_sweep(
    model: &Model,
    data: &LabeledDataset,
    fractions: &[f64],
    rng: &RngState,
) -> Result<Vec<SweepRow>> {
    sweep(model, data, SweepKind::Dropout, fractions, 1, rng, 1)
}

/// Noise sweep with one replicate per level.
pub fn noise_sweep(
    model: &Model,
    data: &LabeledDataset,
    sds: &[f64],
    rng: &RngState,
) -> Result<Vec<SweepRow>> {
    sweep(model, data, SweepKind::Noise, sds, 1, rng, 1)
}

pub const SWEEP_HEADER: [&str; 7] = [
    "kind",
    "level",
    "replicate",
    "mrna_mse",
    "mirna_mse",
    "tissue_accuracy",
    "disease_accuracy",
];

pub fn write_sweep_csv<W: Write>(out: W, kind: SweepKind, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            kind.as_str().to_string(),
            r.level.to_string(),
            r.replicate.to_string(),
            r.mrna_mse.to_string(),
            r.mirna_mse.to_string(),
            r.tissue_accuracy.to_string(),
            r.disease_accuracy.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("sweep csv", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};
    use crate::models::{ArchitectureKind, NetworkSpec};
    use crate::train::{evaluate, fit};

    fn trained() -> (Model, LabeledDataset) {
        let data = generate_synthetic(&SyntheticConfig {
            tissues: 2,
            diseases: 3,
            samples: 120,
            mrna_genes: 24,
            mirna_genes: 6,
            noise_sd: 0.05,
            seed: 5,
        })
        .unwrap();
        let mut spec = NetworkSpec::new(ArchitectureKind::DropoutCae, 24, 6, 2, 3, 4);
        spec.encoder.truncate(1);
        spec.encoder[0].units = 16;
        spec.decoder[0].units = 16;
        spec.head_layers = Default::default();
        spec.epochs = 15;
        spec.batch_size = 16;
        let (model, _) = fit(&spec, &data, None, &RngState::new(1)).unwrap();
        (model, data)
    }

    #[test]
    fn grids_have_paper_lengths() {
        let d = SweepKind::Dropout.default_grid();
        assert_eq!(d.len(), 51);
        assert_eq!(d[37], 0.37);
        assert_eq!(d[50], 0.5);
        let n = SweepKind::Noise.default_grid();
        assert_eq!(n.len(), 26);
        assert_eq!(n[25], 0.25);
    }

    #[test]
    fn level_zero_matches_unperturbed_evaluation() {
        let (model, data) = trained();
        let eval = evaluate(&model, &data).unwrap().metrics;
        for kind in [SweepKind::Dropout, SweepKind::Noise] {
            let rows = sweep(&model, &data, kind, &[0.0], 1, &RngState::new(3), 1).unwrap();
            assert_eq!(rows[0].tissue_accuracy, eval.tissue_accuracy);
            assert_eq!(rows[0].disease_accuracy, eval.disease_accuracy);
            assert!((rows[0].mrna_mse - eval.mrna_mse).abs() < 1e-12);
            assert!((rows[0].mirna_mse - eval.mirna_mse).abs() < 1e-12);
        }
    }

    #[test]
    fn sweeps_are_reproducible_and_worker_independent() {
        let (model, data) = trained();
        let before = model.clone();
        let levels = [0.0, 0.1, 0.3, 0.5];
        let a = sweep(
            &model,
            &data,
            SweepKind::Dropout,
            &levels,
            2,
            &RngState::new(4),
            1,
        )
        .unwrap();
        let b = sweep(
            &model,
            &data,
            SweepKind::Dropout,
            &levels,
            2,
            &RngState::new(4),
            3,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        assert_ne!(a[2], a[3], "replicates draw different masks");
        assert_eq!(model, before);
        let chance = 1.0 / data.disease_count() as f64;
        assert!(a[6].disease_accuracy >= chance);
    }

    #[test]
    fn perturbations_are_per_entry_and_clamped() {
        let x = Matrix::filled(50, 40, 0.9);
        let d = perturb(&x, SweepKind::Dropout, 0.3, &mut RngState::new(1)).unwrap();
        let zeros = d.data().iter().filter(|&&v| v == 0.0).count();
        assert!((zeros as f64 / 2000.0 - 0.3).abs() < 0.05);
        assert!(d.data().iter().all(|&v| v == 0.0 || v == 0.9));
        assert_ne!(d.row(0), d.row(1));
        let n = perturb(&x, SweepKind::Noise, 0.25, &mut RngState::new(1)).unwrap();
        assert!(n.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(n.data().contains(&1.0));
    }

    #[test]
    fn invalid_inputs_rejected() {
        let (model, data) = trained();
        let rng = RngState::new(0);
        assert!(sweep(&model, &data, SweepKind::Dropout, &[1.0], 1, &rng, 1).is_err());
        assert!(sweep(&model, &data, SweepKind::Noise, &[-0.1], 1, &rng, 1).is_err());
        assert!(sweep(&model, &data, SweepKind::Noise, &[0.1], 0, &rng, 1).is_err());
        let untrained = Model::build(model.spec(), &mut RngState::new(0)).unwrap();
        assert!(matches!(
            dropout_sweep(&untrained, &data, &[0.0], &rng),
            Err(Error::Untrained)
        ));
        let mut out = Vec::new();
        let rows = noise_sweep(&model, &data, &[0.0, 0.01], &rng).unwrap();
        write_sweep_csv(&mut out, SweepKind::Noise, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("kind,level,replicate,mrna_mse"));
        assert!(text.lines().nth(2).unwrap().starts_with("noise,0.01,0,"));
    }
}

use serde::{Deserialize, Serialize};

use super::{maxnorm_normalize, ExpressionMatrix, LabeledDataset};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::rng::RngState;

/// Genes feeding each synthetic miRNA.
const MIRNA_FAN_IN: usize = 5;

/// Shape and noise of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub tissues: usize,
    pub diseases: usize,
    pub samples: usize,
    pub mrna_genes: usize,
    pub mirna_genes: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tissues", self.tissues),
            ("diseases", self.diseases),
            ("samples", self.samples),
            ("mrna_genes", self.mrna_genes),
            ("mirna_genes", self.mirna_genes),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid(format!(
                "noise_sd must be finite and nonnegative, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }

    pub fn class_pairs(&self) -> usize {
        self.tissues * self.diseases
    }
}

/// Class-pair prototypes: row `t * diseases + d` holds the (tissue t,
/// disease d) profile. Each miRNA is a fixed sparse nonnegative mixture of
/// mRNA prototype genes, rescaled per miRNA so that it spans [0, 1] across
/// class pairs.
pub fn synthetic_prototypes(config: &SyntheticConfig) -> Result<(Matrix, Matrix)> {
    config.validate()?;
    let root = RngState::new(config.seed);
    let pairs = config.class_pairs();
    let mut rng = root.derive("prototypes");
    let mrna = Matrix::new(
        pairs,
        config.mrna_genes,
        rng.uniform_vec(pairs * config.mrna_genes, 0.0, 1.0),
    )?;

    let mut rng = root.derive("mirna-map");
    let fan_in = MIRNA_FAN_IN.min(config.mrna_genes);
    let mut map = Matrix::zeros(config.mrna_genes, config.mirna_genes);
    for j in 0..config.mirna_genes {
        let genes = &rng.permutation(config.mrna_genes)[..fan_in];
        let weights = rng.uniform_vec(fan_in, 0.2, 1.0);
        let total: f64 = weights.iter().sum();
        for (&g, w) in genes.iter().zip(&weights) {
            map.set(g, j, w / total);
        }
    }
    let mut mirna = mrna.matmul(&map)?;
    // Mixtures crowd around the mean; stretch each column over [0, 1]
    // across class pairs so miRNA profiles use the full range.
    for j in 0..config.mirna_genes {
        let column: Vec<f64> = (0..pairs).map(|p| mirna.get(p, j)).collect();
        let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            for (p, v) in column.iter().enumerate() {
                mirna.set(p, j, (v - lo) / (hi - lo));
            }
        }
    }
    Ok((mrna, mirna))
}

fn names(prefix: &str, count: usize, min_width: usize) -> Vec<String> {
    let width = min_width.max(count.saturating_sub(1).to_string().len());
    (0..count).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// Balanced draw around class-pair prototypes, Gaussian noise clipped at
/// zero, then max-norm normalized. Disease 0 is `Normal`. Vocabularies are
/// in sorted order, matching what [`super::load`] produces.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<LabeledDataset> {
    let (mrna_protos, mirna_protos) = synthetic_prototypes(config)?;
    let root = RngState::new(config.seed);
    let n = config.samples;
    let pairs = config.class_pairs();

    let mut rng = root.derive("assignment");
    let order = rng.permutation(n);
    let mut pair_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        pair_of[i] = pos % pairs;
    }

    let mut noise = root.derive("noise");
    let mut draw = |protos: &Matrix| -> Result<Matrix> {
        let mut out = protos.select_rows(&pair_of);
        let eps = noise.sample_gaussian(out.data().len(), 0.0, config.noise_sd)?;
        for (v, e) in out.data_mut().iter_mut().zip(eps) {
            *v = (*v + e).max(0.0);
        }
        maxnorm_normalize(&out)
    };
    let mrna = draw(&mrna_protos)?;
    let mirna = draw(&mirna_protos)?;

    let tissues = names("tissue", config.tissues, 2);
    let mut diseases = vec!["Normal".to_string()];
    diseases.extend(names("tumor", config.diseases, 2).into_iter().skip(1));

    LabeledDataset::new(
        names("S", n, 5),
        ExpressionMatrix::new(names("G", config.mrna_genes, 5), mrna)?,
        ExpressionMatrix::new(names("hsa-mir-", config.mirna_genes, 4), mirna)?,
        pair_of.iter().map(|p| p / config.diseases).collect(),
        pair_of.iter().map(|p| p % config.diseases).collect(),
        tissues,
        diseases,
    )
}

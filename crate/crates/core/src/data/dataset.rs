use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::models::{one_hot, Vocabularies};

/// Samples × genes, with gene names.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    pub genes: Vec<String>,
    pub values: Matrix,
}

impl ExpressionMatrix {
    pub fn new(genes: Vec<String>, values: Matrix) -> Result<Self> {
        if genes.len() != values.cols() {
            return Err(Error::shape("ExpressionMatrix", genes.len(), values.cols()));
        }
        Ok(Self { genes, values })
    }

    pub fn width(&self) -> usize {
        self.genes.len()
    }
}

/// Matched mRNA and miRNA profiles with tissue and disease labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub sample_ids: Vec<String>,
    pub mrna: ExpressionMatrix,
    pub mirna: ExpressionMatrix,
    pub tissue_ids: Vec<usize>,
    pub disease_ids: Vec<usize>,
    pub tissues: Vec<String>,
    pub diseases: Vec<String>,
}

/// Divides every row by its maximum entry; all-zero rows stay zero.
pub fn maxnorm_normalize(matrix: &Matrix) -> Result<Matrix> {
    let mut out = matrix.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        if let Some(c) = row.iter().position(|v| *v < 0.0) {
            return Err(Error::Data(format!(
                "max-norm needs nonnegative values; row {r}, column {c} is {}",
                row[c]
            )));
        }
        let max = row.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            for v in row.iter_mut() {
                *v /= max;
            }
        }
    }
    Ok(out)
}

impl LabeledDataset {
    /// Validates alignment, label ranges and disjoint gene sets.
    pub fn new(
        sample_ids: Vec<String>,
        mrna: ExpressionMatrix,
        mirna: ExpressionMatrix,
        tissue_ids: Vec<usize>,
        disease_ids: Vec<usize>,
        tissues: Vec<String>,
        diseases: Vec<String>,
    ) -> Result<Self> {
        let n = sample_ids.len();
        for (what, len) in [
            ("mRNA rows", mrna.values.rows()),
            ("miRNA rows", mirna.values.rows()),
            ("tissue labels", tissue_ids.len()),
            ("disease labels", disease_ids.len()),
        ] {
            if len != n {
                return Err(Error::Data(format!("{what}: expected {n}, found {len}")));
            }
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &sample_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id `{id}`")));
            }
        }
        if let Some(&t) = tissue_ids.iter().find(|&&t| t >= tissues.len()) {
            return Err(Error::Data(format!(
                "tissue id {t} outside vocabulary of {}",
                tissues.len()
            )));
        }
        if let Some(&d) = disease_ids.iter().find(|&&d| d >= diseases.len()) {
            return Err(Error::Data(format!(
                "disease id {d} outside vocabulary of {}",
                diseases.len()
            )));
        }
        let mirna_genes: HashSet<&str> = mirna.genes.iter().map(String::as_str).collect();
        let shared: Vec<&str> = mrna
            .genes
            .iter()
            .map(String::as_str)
            .filter(|g| mirna_genes.contains(g))
            .collect();
        if !shared.is_empty() {
            return Err(Error::Data(format!(
                "miRNA genes must be removed from the mRNA profile; shared columns: {}",
                shared.join(", ")
            )));
        }
        Ok(Self {
            sample_ids,
            mrna,
            mirna,
            tissue_ids,
            disease_ids,
            tissues,
            diseases,
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn tissue_count(&self) -> usize {
        self.tissues.len()
    }

    pub fn disease_count(&self) -> usize {
        self.diseases.len()
    }

    /// Max-norm normalizes both profiles.
    pub fn normalized(&self) -> Result<Self> {
        let mut out = self.clone();
        out.mrna.values = maxnorm_normalize(&self.mrna.values)?;
        out.mirna.values = maxnorm_normalize(&self.mirna.values)?;
        Ok(out)
    }

    /// The listed samples in order, keeping the full label vocabularies.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            sample_ids: indices
                .iter()
                .map(|&i| self.sample_ids[i].clone())
                .collect(),
            mrna: ExpressionMatrix {
                genes: self.mrna.genes.clone(),
                values: self.mrna.values.select_rows(indices),
            },
            mirna: ExpressionMatrix {
                genes: self.mirna.genes.clone(),
                values: self.mirna.values.select_rows(indices),
            },
            tissue_ids: indices.iter().map(|&i| self.tissue_ids[i]).collect(),
            disease_ids: indices.iter().map(|&i| self.disease_ids[i]).collect(),
            tissues: self.tissues.clone(),
            diseases: self.diseases.clone(),
        }
    }

    pub fn vocabularies(&self) -> Vocabularies {
        Vocabularies {
            tissues: self.tissues.clone(),
            diseases: self.diseases.clone(),
        }
    }

    pub fn tissue_onehot(&self) -> Matrix {
        one_hot(&self.tissue_ids, self.tissue_count()).expect("validated tissue ids")
    }

    pub fn disease_onehot(&self) -> Matrix {
        one_hot(&self.disease_ids, self.disease_count()).expect("validated disease ids")
    }

    /// Per-class sample counts.
    pub fn class_counts(ids: &[usize], classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &i in ids {
            counts[i] += 1;
        }
        counts
    }
}

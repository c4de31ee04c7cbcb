//! Principal component analysis and a nearest-centroid separability probe
//! for comparing raw-profile space with code space.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{kfold_indices, LabeledDataset, SplitPlan};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::metrics::csv_error;

/// A fitted PCA basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `n_components × features`, one unit-length axis per row.
    pub components: Matrix,
    /// Sample variance along each component.
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    fn center(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::shape("pca_transform", self.mean.len(), x.cols()));
        }
        let neg: Vec<f64> = self.mean.iter().map(|m| -m).collect();
        let mut c = x.clone();
        c.add_row_vector(&neg)?;
        Ok(c)
    }

    /// Scores of `x` (`rows × n_components`).
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.center(x)?.matmul_nt(&self.components)
    }

    /// Maps scores back to feature space.
    pub fn inverse_transform(&self, scores: &Matrix) -> Result<Matrix> {
        let mut x = scores.matmul(&self.components)?;
        x.add_row_vector(&self.mean)?;
        Ok(x)
    }
}

/// Fits `n_components` principal axes by eigen-decomposition of the sample
/// covariance. Components come in decreasing variance order and each is
/// signed so that its largest-magnitude loading (first on ties) is positive.
pub fn pca_fit(x: &Matrix, n_components: usize) -> Result<PcaModel> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(Error::invalid(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    if n_components == 0 || n_components > n.min(p) {
        return Err(Error::invalid(format!(
            "n_components must lie in 1..={}, got {n_components}",
            n.min(p)
        )));
    }
    let mean = x.column_means();
    let neg: Vec<f64> = mean.iter().map(|m| -m).collect();
    let mut centered = x.clone();
    centered.add_row_vector(&neg)?;
    let mut cov = centered.matmul_tn(&centered)?;
    cov.scale(1.0 / (n - 1) as f64);
    let eigen = SymmetricEigen::new(DMatrix::from_row_slice(p, p, cov.data()));
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let total: f64 = eigen.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut data = Vec::with_capacity(n_components * p);
    let mut variance = Vec::with_capacity(n_components);
    for &j in order.iter().take(n_components) {
        let axis: Vec<f64> = eigen.eigenvectors.column(j).iter().copied().collect();
        let lead =
            axis.iter().enumerate().fold(
                0,
                |best, (i, v)| if v.abs() > axis[best].abs() { i } else { best },
            );
        let sign = if axis[lead] < 0.0 { -1.0 } else { 1.0 };
        data.extend(axis.iter().map(|v| v * sign));
        variance.push(eigen.eigenvalues[j].max(0.0));
    }
    let ratio = variance
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    Ok(PcaModel {
        mean,
        components: Matrix::new(n_components, p, data)?,
        explained_variance: variance,
        explained_variance_ratio: ratio,
    })
}

pub fn pca_transform(model: &PcaModel, x: &Matrix) -> Result<Matrix> {
    model.transform(x)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pooled accuracy of a nearest-centroid classifier under k-fold cross
/// validation with folds drawn from `seed`. Classes absent from a training
/// fold get no centroid; ties go to the lowest class id.
pub fn separability_score(
    scores: &Matrix,
    labels: &[usize],
    fold_count: usize,
    seed: u64,
) -> Result<f64> {
    let n = scores.rows();
    if labels.len() != n {
        return Err(Error::shape("separability_score", n, labels.len()));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::invalid("separability needs at least 2 classes"));
    }
    let plan = SplitPlan {
        fold_count,
        ..SplitPlan::new(seed)
    };
    let folds = kfold_indices(n, None, &plan)?;
    let d = scores.cols();
    let mut in_test = vec![false; n];
    let mut correct = 0usize;
    for fold in &folds {
        fold.iter().for_each(|&i| in_test[i] = true);
        let mut sums = vec![vec![0.0; d]; classes];
        let mut counts = vec![0usize; classes];
        for i in (0..n).filter(|&i| !in_test[i]) {
            counts[labels[i]] += 1;
            sums[labels[i]]
                .iter_mut()
                .zip(scores.row(i))
                .for_each(|(s, v)| *s += v);
        }
        let centroids: Vec<(usize, Vec<f64>)> = (0..classes)
            .filter(|&c| counts[c] > 0)
            .map(|c| (c, sums[c].iter().map(|s| s / counts[c] as f64).collect()))
            .collect();
        for &i in fold {
            let row = scores.row(i);
            let mut best = (f64::INFINITY, usize::MAX);
            for (c, centroid) in &centroids {
                let dist = sq_dist(row, centroid);
                if dist < best.0 {
                    best = (dist, *c);
                }
            }
            correct += usize::from(best.1 == labels[i]);
        }
        fold.iter().for_each(|&i| in_test[i] = false);
    }
    Ok(correct as f64 / n as f64)
}

/// `sample_id, pc1..pcK, tissue, disease` with label names.
pub fn write_scores_csv<W: Write>(
    out: W,
    scores: &Matrix,
    dataset: &LabeledDataset,
    prefix: &str,
) -> Result<()> {
    if scores.rows() != dataset.len() {
        return Err(Error::shape(
            "write_scores_csv",
            dataset.len(),
            scores.rows(),
        ));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sample_id".to_string()];
    header.extend((1..=scores.cols()).map(|k| format!("{prefix}{k}")));
    header.extend(["tissue".to_string(), "disease".to_string()]);
    w.write_record(&header).map_err(csv_error)?;
    for (i, row) in scores.row_iter().enumerate() {
        let mut record = vec![dataset.sample_ids[i].clone()];
        record.extend(row.iter().map(f64::to_string));
        record.push(dataset.tissues[dataset.tissue_ids[i]].clone());
        record.push(dataset.diseases[dataset.disease_ids[i]].clone());
        w.write_record(&record).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("scores csv", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use proptest::prelude::*;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        Matrix::new(
            rows,
            cols,
            RngState::new(seed).uniform_vec(rows * cols, -1.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn collinear_points_have_one_component() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 2.0], [2.0, 4.0], [-3.0, -6.0]]).unwrap();
        let m = pca_fit(&x, 2).unwrap();
        assert!((m.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        assert!(m.explained_variance_ratio[1].abs() < 1e-12);
        let axis = m.components.row(0);
        let s = 5f64.sqrt();
        assert!((axis[0] - 1.0 / s).abs() < 1e-12 && (axis[1] - 2.0 / s).abs() < 1e-12);
    }

    #[test]
    fn mean_maps_to_origin_and_full_rank_reconstructs() {
        let x = random(12, 5, 1);
        let m = pca_fit(&x, 5).unwrap();
        let mean = Matrix::row_vector(&m.mean).unwrap();
        assert!(m
            .transform(&mean)
            .unwrap()
            .data()
            .iter()
            .all(|v| v.abs() < 1e-12));
        let back = m.inverse_transform(&m.transform(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() < 1e-9);
        assert!(pca_fit(&x, 6).is_err());
        assert!(pca_fit(&x, 0).is_err());
        assert!(pca_fit(&random(1, 3, 0), 1).is_err());
    }

    #[test]
    fn sign_convention_makes_largest_loading_positive() {
        let m = pca_fit(&random(30, 6, 2), 4).unwrap();
        for row in m.components.row_iter() {
            let lead = row
                .iter()
                .fold(0.0f64, |a, v| if v.abs() > a.abs() { *v } else { a });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn separated_blobs_score_one_and_shuffled_labels_score_chance() {
        let mut rng = RngState::new(3);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let c = i % 2;
            let off = if c == 0 { -5.0 } else { 5.0 };
            rows.push(vec![
                off + 0.1 * rng.standard_normal(),
                0.1 * rng.standard_normal(),
            ]);
            labels.push(c);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        assert_eq!(separability_score(&x, &labels, 5, 0).unwrap(), 1.0);
        assert!(separability_score(&x, &vec![1; 60], 5, 0).is_err());

        let k = 4;
        let n = 2000;
        let noise = random(n, 3, 4);
        let shuffled: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let acc = separability_score(&noise, &shuffled, 5, 1).unwrap();
        let p = 1.0 / k as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((acc - p).abs() < 4.0 * sd, "{acc}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ratios_sorted_and_translation_invariant(seed in 0u64..1000, shift in -5.0f64..5.0) {
            let x = random(10, 4, seed);
            let m = pca_fit(&x, 4).unwrap();
            let sum: f64 = m.explained_variance_ratio.iter().sum();
            prop_assert!(sum <= 1.0 + 1e-12);
            prop_assert!(m.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
            let moved = x.map(|v| v + shift);
            let a = m.transform(&x).unwrap();
            let b = pca_fit(&moved, 4).unwrap().transform(&moved).unwrap();
            prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-9);
        }
    }
}

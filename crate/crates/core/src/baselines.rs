//! K-nearest-neighbour baseline and the method comparison table.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{kfold_indices, SplitPlan};
use crate::error::{Error, Result};
use crate::hyperopt::{run_search, Dimension, ParamValue, SearchOptions, SearchSpace};
use crate::math::Matrix;
use crate::metrics::{csv_error, fmt_opt};
use crate::par;
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Euclidean,
    /// One minus cosine similarity; a zero vector is at distance 1 from
    /// everything.
    Cosine,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 2] = [DistanceMetric::Euclidean, DistanceMetric::Cosine];

    pub fn as_str(self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Cosine => "cosine",
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            DistanceMetric::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na * nb)
                }
            }
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(DistanceMetric::Euclidean),
            "cosine" => Ok(DistanceMetric::Cosine),
            _ => Err(Error::invalid(format!(
                "unknown metric `{s}` (euclidean or cosine)"
            ))),
        }
    }
}

fn vote(train_y: &[usize], neighbours: &[(f64, usize)]) -> usize {
    let mut tally: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for &(d, i) in neighbours {
        let e = tally.entry(train_y[i]).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += d;
    }
    // BTreeMap iterates classes in increasing order, so strict comparisons
    // keep the lowest class on a full tie.
    let mut best: Option<(usize, usize, f64)> = None;
    for (&c, &(count, dist)) in &tally {
        let better = match best {
            None => true,
            Some((_, bc, bd)) => count > bc || (count == bc && dist < bd),
        };
        if better {
            best = Some((c, count, dist));
        }
    }
    best.map(|b| b.0).unwrap_or(0)
}

/// Majority vote among the `k` nearest training rows. Vote ties go to the
/// class with the smallest summed distance, then the lowest class id.
/// Equidistant candidates for the last neighbour slot are taken in training
/// row order.
pub fn knn_predict(
    train_x: &Matrix,
    train_y: &[usize],
    query_x: &Matrix,
    k: usize,
    metric: DistanceMetric,
    workers: usize,
) -> Result<Vec<usize>> {
    let n = train_x.rows();
    if n == 0 {
        return Err(Error::invalid("KNN needs a nonempty training set"));
    }
    if train_y.len() != n {
        return Err(Error::shape("knn_predict labels", n, train_y.len()));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must lie in 1..={n}, got {k}")));
    }
    if query_x.cols() != train_x.cols() {
        return Err(Error::shape("knn_predict", train_x.cols(), query_x.cols()));
    }
    Ok(par::map_indexed(query_x.rows(), workers, |q| {
        let row = query_x.row(q);
        let mut dists: Vec<(f64, usize)> = (0..n)
            .map(|i| (metric.distance(row, train_x.row(i)), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < n {
            dists.select_nth_unstable_by(k - 1, cmp);
        }
        vote(train_y, &dists[..k])
    }))
}

/// Pooled k-fold accuracy of one KNN setting.
pub fn knn_cv_accuracy(
    x: &Matrix,
    labels: &[usize],
    k: usize,
    metric: DistanceMetric,
    plan: &SplitPlan,
    workers: usize,
) -> Result<f64> {
    if labels.len() != x.rows() {
        return Err(Error::shape("knn_cv_accuracy", x.rows(), labels.len()));
    }
    let folds = kfold_indices(x.rows(), None, plan)?;
    let mut correct = 0usize;
    for fold in &folds {
        let train = crate::data::complement(x.rows(), fold);
        let train_y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let pred = knn_predict(
            &x.select_rows(&train),
            &train_y,
            &x.select_rows(fold),
            k,
            metric,
            workers,
        )?;
        correct += fold
            .iter()
            .zip(&pred)
            .filter(|(&i, &p)| labels[i] == p)
            .count();
    }
    Ok(correct as f64 / x.rows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnSearch {
    pub k_options: Vec<usize>,
    pub metrics: Vec<DistanceMetric>,
    pub n_trials: usize,
    pub fold_count: usize,
    pub workers: usize,
}

impl Default for KnnSearch {
    fn default() -> Self {
        Self {
            k_options: vec![1, 3, 5, 7, 9, 15],
            metrics: DistanceMetric::ALL.to_vec(),
            n_trials: 100,
            fold_count: 5,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnSetting {
    pub k: usize,
    pub metric: DistanceMetric,
    pub cv_accuracy: f64,
}

impl fmt::Display for KnnSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k={} metric={}", self.k, self.metric)
    }
}

/// Picks the KNN setting with the best cross-validated accuracy through the
/// hyperparameter search (exhaustive when the grid fits the trial budget).
/// Folds come from `rng.derive("folds")` and are shared by every trial.
pub fn tune_knn(
    x: &Matrix,
    labels: &[usize],
    search: &KnnSearch,
    rng: &RngState,
) -> Result<KnnSetting> {
    if search.k_options.is_empty() || search.metrics.is_empty() {
        return Err(Error::invalid(
            "KNN search needs at least one k and one metric",
        ));
    }
    let space = SearchSpace::new(vec![
        Dimension::new(
            "k",
            search
                .k_options
                .iter()
                .map(|&k| ParamValue::Int(k as i64))
                .collect(),
        ),
        Dimension::new(
            "metric",
            search
                .metrics
                .iter()
                .map(|m| ParamValue::from(m.as_str()))
                .collect(),
        ),
    ])?;
    let plan = SplitPlan {
        fold_count: search.fold_count,
        ..SplitPlan::new(rng.derive("folds").seed())
    };
    let decode = |v: &BTreeMap<String, ParamValue>| -> Result<(usize, DistanceMetric)> {
        let k = v["k"]
            .as_usize()
            .ok_or_else(|| Error::invalid("k must be a count"))?;
        let metric = v["metric"].as_str().unwrap_or_default().parse()?;
        Ok((k, metric))
    };
    let objective = |v: &BTreeMap<String, ParamValue>, _: &mut RngState| -> Result<f64> {
        let (k, metric) = decode(v)?;
        Ok(-knn_cv_accuracy(
            x,
            labels,
            k,
            metric,
            &plan,
            search.workers,
        )?)
    };
    let options = SearchOptions {
        exhaustive_fallback: true,
        ..SearchOptions::new(search.n_trials)
    };
    let out = run_search(
        &space,
        objective,
        &options,
        &rng.derive("search"),
        Vec::new(),
        |_| Ok(()),
    )?;
    let (k, metric) = decode(&out.best.values)?;
    Ok(KnnSetting {
        k,
        metric,
        cv_accuracy: -out.best.score.unwrap_or(f64::NAN),
    })
}

/// Baselines of the comparison table that are not implemented; they appear
/// as rows with empty accuracy cells.
pub const UNIMPLEMENTED_BASELINES: [&str; 4] =
    ["extra_trees", "random_forest", "linear_sgd", "svm"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub tissue_accuracy: Option<f64>,
    pub disease_accuracy: Option<f64>,
    pub settings: String,
}

impl ComparisonRow {
    pub fn empty(method: &str) -> Self {
        Self {
            method: method.to_string(),
            tissue_accuracy: None,
            disease_accuracy: None,
            settings: String::new(),
        }
    }
}

/// `method,tissue_accuracy,disease_accuracy,settings`, followed by an empty
/// row for each unimplemented baseline.
pub fn write_comparison_csv<W: Write>(out: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "tissue_accuracy", "disease_accuracy", "settings"])
        .map_err(csv_error)?;
    let placeholders: Vec<ComparisonRow> = UNIMPLEMENTED_BASELINES
        .iter()
        .filter(|m| !rows.iter().any(|r| r.method == **m))
        .map(|m| ComparisonRow::empty(m))
        .collect();
    for r in rows.iter().chain(&placeholders) {
        w.write_record([
            r.method.clone(),
            fmt_opt(r.tissue_accuracy),
            fmt_opt(r.disease_accuracy),
            r.settings.clone(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("comparison csv", e))
}

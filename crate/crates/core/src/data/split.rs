use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::RngState;

pub const DEFAULT_TEST_FRACTION: f64 = 0.10;
pub const DEFAULT_FOLD_COUNT: usize = 5;

/// Seeded hold-out and k-fold assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub test_fraction: f64,
    pub fold_count: usize,
    pub seed: u64,
    /// Balance each (tissue, disease) pair across folds instead of
    /// assigning samples purely at random.
    #[serde(default)]
    pub stratified: bool,
}

impl SplitPlan {
    pub fn new(seed: u64) -> Self {
        Self {
            test_fraction: DEFAULT_TEST_FRACTION,
            fold_count: DEFAULT_FOLD_COUNT,
            seed,
            stratified: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.fold_count < 2 {
            return Err(Error::invalid(format!(
                "fold_count must be at least 2, got {}",
                self.fold_count
            )));
        }
        Ok(())
    }
}

/// Order in which samples are dealt out. With strata, members of each
/// stratum are shuffled; `interleave` then orders them so every prefix holds
/// each stratum in proportion, otherwise strata are laid end to end (which
/// round-robin dealing spreads evenly).
fn dealing_order(
    n: usize,
    strata: Option<&[usize]>,
    interleave: bool,
    rng: &mut RngState,
) -> Result<Vec<usize>> {
    let Some(strata) = strata else {
        return Ok(rng.permutation(n));
    };
    if strata.len() != n {
        return Err(Error::shape("strata", n, strata.len()));
    }
    let groups = strata.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups];
    for (i, &s) in strata.iter().enumerate() {
        members[s].push(i);
    }
    for group in &mut members {
        rng.shuffle(group);
    }
    if !interleave {
        return Ok(members.concat());
    }
    let mut keyed = Vec::with_capacity(n);
    for group in &members {
        let len = group.len() as f64;
        for (rank, &i) in group.iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / len, rng.uniform(), i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(keyed.into_iter().map(|(_, _, i)| i).collect())
}

/// Hold-out split of `0..n` into (train, test) index lists, both ascending.
/// The test set holds `round(n * test_fraction)` samples, at least one.
pub fn split_indices(
    n: usize,
    strata: Option<&[usize]>,
    plan: &SplitPlan,
) -> Result<(Vec<usize>, Vec<usize>)> {
    plan.validate()?;
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} samples")));
    }
    let test_len = ((n as f64 * plan.test_fraction).round() as usize).clamp(1, n - 1);
    let mut rng = RngState::new(plan.seed).derive("split");
    let order = dealing_order(n, strata, true, &mut rng)?;
    let mut test = order[..test_len].to_vec();
    let mut train = order[test_len..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Test index lists of `fold_count` folds partitioning `0..n`; each is
/// ascending and fold sizes differ by at most one.
pub fn kfold_indices(
    n: usize,
    strata: Option<&[usize]>,
    plan: &SplitPlan,
) -> Result<Vec<Vec<usize>>> {
    plan.validate()?;
    if n < plan.fold_count {
        return Err(Error::invalid(format!(
            "{n} samples cannot fill {} folds",
            plan.fold_count
        )));
    }
    let mut rng = RngState::new(plan.seed).derive("folds");
    let order = dealing_order(n, strata, false, &mut rng)?;
    let mut folds = vec![Vec::with_capacity(n / plan.fold_count + 1); plan.fold_count];
    for (pos, &i) in order.iter().enumerate() {
        folds[pos % plan.fold_count].push(i);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

fn strata_of(dataset: &LabeledDataset, plan: &SplitPlan) -> Option<Vec<usize>> {
    plan.stratified.then(|| {
        let d = dataset.disease_count();
        dataset
            .tissue_ids
            .iter()
            .zip(&dataset.disease_ids)
            .map(|(t, s)| t * d + s)
            .collect()
    })
}

/// Sorted (train, test) row indices of the hold-out split of a dataset.
pub fn holdout_indices(
    dataset: &LabeledDataset,
    plan: &SplitPlan,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let strata = strata_of(dataset, plan);
    split_indices(dataset.len(), strata.as_deref(), plan)
}

/// Hold-out split into (train, test) datasets.
pub fn split(
    dataset: &LabeledDataset,
    plan: &SplitPlan,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = holdout_indices(dataset, plan)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Test index lists of each fold over the dataset.
pub fn kfold(dataset: &LabeledDataset, plan: &SplitPlan) -> Result<Vec<Vec<usize>>> {
    let strata = strata_of(dataset, plan);
    kfold_indices(dataset.len(), strata.as_deref(), plan)
}

/// Complement of a sorted index list within `0..n`.
pub fn complement(n: usize, sorted: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n.saturating_sub(sorted.len()));
    let mut it = sorted.iter().peekable();
    for i in 0..n {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            out.push(i);
        }
    }
    out
}

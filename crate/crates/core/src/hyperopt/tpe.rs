use serde::{Deserialize, Serialize};

use super::search::TrialRecord;
use super::space::{Assignment, SearchSpace};
use crate::error::{Error, Result};
use crate::rng::RngState;

/// Tree-structured Parzen estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    /// Fraction of completed trials treated as good.
    pub gamma: f64,
    /// Completed trials required before the surrogate takes over.
    pub n_startup: usize,
    /// Samples drawn from the good density per suggestion.
    pub n_candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_startup: 20,
            n_candidates: 24,
        }
    }
}

impl TpeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.n_candidates == 0 {
            return Err(Error::invalid("n_candidates must be at least 1"));
        }
        Ok(())
    }
}

/// Per-dimension categorical densities with add-one smoothing.
fn densities(space: &SearchSpace, members: &[&Assignment]) -> Vec<Vec<f64>> {
    space
        .dimensions()
        .iter()
        .enumerate()
        .map(|(d, dim)| {
            let mut counts = vec![1.0; dim.len()];
            for a in members {
                counts[a[d]] += 1.0;
            }
            let total = (members.len() + dim.len()) as f64;
            counts.iter().map(|c| c / total).collect()
        })
        .collect()
}

fn draw(probs: &[f64], rng: &mut RngState) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Next assignment to evaluate (scores are minimized).
///
/// With fewer than `n_startup` completed trials the suggestion is uniform.
/// Otherwise completed trials are split at the `gamma` quantile of their
/// scores into a good set and a bad set, `n_candidates` assignments are drawn
/// from the good density l, and the one maximizing l(x)/g(x) wins (first on
/// ties). With an empty bad set the first draw from l is returned.
pub fn suggest(
    history: &[TrialRecord],
    space: &SearchSpace,
    config: &TpeConfig,
    rng: &mut RngState,
) -> Result<Assignment> {
    config.validate()?;
    let mut completed: Vec<(&Assignment, f64)> = history
        .iter()
        .filter_map(|r| r.completed_score().map(|s| (&r.assignment, s)))
        .collect();
    if completed.len() < config.n_startup.max(1) {
        return Ok(space.sample_uniform(rng));
    }
    completed.sort_by(|a, b| a.1.total_cmp(&b.1));
    let n = completed.len();
    let n_good = ((config.gamma * n as f64).ceil() as usize).clamp(1, n);
    let good: Vec<&Assignment> = completed[..n_good].iter().map(|c| c.0).collect();
    let bad: Vec<&Assignment> = completed[n_good..].iter().map(|c| c.0).collect();
    let l = densities(space, &good);
    let sample = |rng: &mut RngState| -> Assignment { l.iter().map(|p| draw(p, rng)).collect() };
    if bad.is_empty() {
        return Ok(sample(rng));
    }
    let g = densities(space, &bad);
    let ratio = |a: &Assignment| -> f64 {
        a.iter()
            .enumerate()
            .map(|(d, &v)| l[d][v].ln() - g[d][v].ln())
            .sum()
    };
    let mut best = sample(rng);
    let mut best_score = ratio(&best);
    for _ in 1..config.n_candidates {
        let c = sample(rng);
        let s = ratio(&c);
        if s > best_score {
            best = c;
            best_score = s;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperopt::{Dimension, ParamValue, TrialStatus};

    fn line(k: i64) -> SearchSpace {
        SearchSpace::new(vec![Dimension::new(
            "x",
            (0..k).map(ParamValue::Int).collect(),
        )])
        .unwrap()
    }

    fn record(trial: usize, space: &SearchSpace, a: Assignment, score: f64) -> TrialRecord {
        TrialRecord {
            trial,
            values: space.values(&a),
            assignment: a,
            score: Some(score),
            status: TrialStatus::Completed,
            message: None,
        }
    }

    #[test]
    fn startup_is_uniform_member_and_deterministic() {
        let space = line(7);
        let cfg = TpeConfig::default();
        let a = suggest(&[], &space, &cfg, &mut RngState::new(3)).unwrap();
        let b = suggest(&[], &space, &cfg, &mut RngState::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(space.contains(&a));
    }

    #[test]
    fn good_only_value_is_favoured() {
        // Value 2 only ever scores well, the others only badly.
        let space = line(5);
        let mut history = Vec::new();
        for t in 0..40 {
            let v = if t % 4 == 0 {
                2
            } else {
                [0, 1, 3, 4][t % 4 - 1]
            };
            let score = if v == 2 { 0.0 } else { 1.0 };
            history.push(record(t, &space, vec![v], score));
        }
        let cfg = TpeConfig::default();
        let reps = 400;
        let mut hits = 0;
        for s in 0..reps {
            let a = suggest(&history, &space, &cfg, &mut RngState::new(s)).unwrap();
            hits += usize::from(a[0] == 2);
        }
        let freq = hits as f64 / reps as f64;
        assert!(freq > 0.2 + 0.1, "frequency {freq}");
        let same = suggest(&history, &space, &cfg, &mut RngState::new(9)).unwrap();
        assert_eq!(
            same,
            suggest(&history, &space, &cfg, &mut RngState::new(9)).unwrap()
        );
    }

    #[test]
    fn gamma_one_samples_smoothed_empirical_density() {
        let space = line(3);
        let mut history = Vec::new();
        for t in 0..22 {
            // 20 trials at value 0, one each at 1 and 2.
            let v = if t < 20 { 0 } else { t - 19 };
            history.push(record(t, &space, vec![v], t as f64));
        }
        let cfg = TpeConfig {
            gamma: 1.0,
            ..TpeConfig::default()
        };
        let reps = 5000;
        let mut counts = [0usize; 3];
        let mut rng = RngState::new(11);
        for _ in 0..reps {
            counts[suggest(&history, &space, &cfg, &mut rng).unwrap()[0]] += 1;
        }
        // (20 + 1) / (22 + 3) and (1 + 1) / (22 + 3).
        let expected = [21.0 / 25.0, 2.0 / 25.0, 2.0 / 25.0];
        for (c, e) in counts.iter().zip(expected) {
            let f = *c as f64 / reps as f64;
            let sd = (e * (1.0 - e) / reps as f64).sqrt();
            assert!((f - e).abs() < 4.0 * sd, "{f} vs {e}");
        }
    }

    #[test]
    fn failed_trials_are_ignored_and_config_checked() {
        let space = line(4);
        let mut failed = record(0, &space, vec![1], 0.0);
        failed.score = None;
        failed.status = TrialStatus::Failed;
        let history = vec![failed; 30];
        let a = suggest(
            &history,
            &space,
            &TpeConfig::default(),
            &mut RngState::new(0),
        )
        .unwrap();
        assert!(space.contains(&a));
        let bad = TpeConfig {
            gamma: 0.0,
            ..TpeConfig::default()
        };
        assert!(suggest(&[], &space, &bad, &mut RngState::new(0)).is_err());
    }
}

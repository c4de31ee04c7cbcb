use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::space::{Assignment, ParamValue, SearchSpace};
use super::tpe::{suggest, TpeConfig};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Completed,
    Failed,
}

/// One evaluated assignment. Serialized as one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub assignment: Assignment,
    pub values: BTreeMap<String, ParamValue>,
    pub score: Option<f64>,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl TrialRecord {
    pub fn completed_score(&self) -> Option<f64> {
        match self.status {
            TrialStatus::Completed => self.score.filter(|s| s.is_finite()),
            TrialStatus::Failed => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Total trials, counting any resumed history.
    pub n_trials: usize,
    pub tpe: TpeConfig,
    /// Trials suggested from the same history and evaluated together.
    /// Results depend on this value but not on `workers`.
    pub batch_size: usize,
    pub workers: usize,
    /// Enumerate every point instead when the space has at most `n_trials`.
    pub exhaustive_fallback: bool,
}

impl SearchOptions {
    pub fn new(n_trials: usize) -> Self {
        Self {
            n_trials,
            tpe: TpeConfig::default(),
            batch_size: 1,
            workers: 1,
            exhaustive_fallback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: TrialRecord,
    pub history: Vec<TrialRecord>,
}

/// Runs the suggest, evaluate, record loop until `options.n_trials` records
/// exist, starting from `history` (which must be a prefix of an earlier run
/// with the same space and seed to resume identically).
///
/// Trial `t` is suggested from `rng.derive_indexed("trial", t)` and the
/// objective receives `rng.derive_indexed("objective", t)`. An objective
/// error or non-finite score marks the trial failed. `on_record` sees each
/// new record in trial order. The best trial is the lowest completed score,
/// earliest on ties.
pub fn run_search<F>(
    space: &SearchSpace,
    objective: F,
    options: &SearchOptions,
    rng: &RngState,
    mut history: Vec<TrialRecord>,
    mut on_record: impl FnMut(&TrialRecord) -> Result<()>,
) -> Result<SearchOutcome>
where
    F: Fn(&BTreeMap<String, ParamValue>, &mut RngState) -> Result<f64> + Sync,
{
    if options.n_trials == 0 {
        return Err(Error::invalid("n_trials must be at least 1"));
    }
    if options.batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    options.tpe.validate()?;
    for (i, r) in history.iter().enumerate() {
        if r.trial != i || !space.contains(&r.assignment) {
            return Err(Error::invalid(format!(
                "history record {i} does not match the space"
            )));
        }
    }
    let exhaustive = options.exhaustive_fallback && space.size() <= options.n_trials as u128;
    while history.len() < options.n_trials {
        let start = history.len();
        let count = options.batch_size.min(options.n_trials - start);
        let mut batch = Vec::with_capacity(count);
        for t in start..start + count {
            let a = if exhaustive && (t as u128) < space.size() {
                space.point(t as u128)
            } else {
                suggest(
                    &history,
                    space,
                    &options.tpe,
                    &mut rng.derive_indexed("trial", t as u64),
                )?
            };
            batch.push(a);
        }
        let outcomes = par::map_indexed(count, options.workers, |i| {
            let t = start + i;
            let values = space.values(&batch[i]);
            let result = objective(&values, &mut rng.derive_indexed("objective", t as u64));
            (values, result)
        });
        for (i, (values, result)) in outcomes.into_iter().enumerate() {
            let (score, status, message) = match result {
                Ok(s) if s.is_finite() => (Some(s), TrialStatus::Completed, None),
                Ok(s) => (
                    None,
                    TrialStatus::Failed,
                    Some(format!("non-finite score {s}")),
                ),
                Err(e) => (None, TrialStatus::Failed, Some(e.to_string())),
            };
            let record = TrialRecord {
                trial: start + i,
                assignment: batch[i].clone(),
                values,
                score,
                status,
                message,
            };
            on_record(&record)?;
            history.push(record);
        }
    }
    let best = history
        .iter()
        .filter_map(|r| r.completed_score().map(|s| (r, s)))
        .fold(None::<(&TrialRecord, f64)>, |acc, (r, s)| match acc {
            Some((_, b)) if b <= s => acc,
            _ => Some((r, s)),
        })
        .map(|(r, _)| r.clone())
        .ok_or(Error::AllTrialsFailed(history.len()))?;
    Ok(SearchOutcome { best, history })
}

/// Appends one record as a JSON line.
pub fn write_history_line<W: Write>(mut out: W, record: &TrialRecord) -> Result<()> {
    let line = serde_json::to_string(record).map_err(|e| Error::invalid(e.to_string()))?;
    writeln!(out, "{line}").map_err(|e| Error::io("history", e))
}

/// Reads a JSON-lines history, checking each record against `space`. A
/// truncated final line (an interrupted write) is dropped.
pub fn read_history<R: BufRead>(input: R, space: &SearchSpace) -> Result<Vec<TrialRecord>> {
    let lines: Vec<String> = input
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io("history", e))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TrialRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(_) if Some(i) == last && !line.trim_end().ends_with('}') => break,
            Err(e) => {
                return Err(Error::Parse {
                    path: "history".into(),
                    line: i + 1,
                    column: e.column(),
                    message: e.to_string(),
                })
            }
        };
        let expected = space.indices(&record.values)?;
        if record.assignment != expected || record.trial != out.len() {
            return Err(Error::Parse {
                path: "history".into(),
                line: i + 1,
                column: 1,
                message: format!("record for trial {} is inconsistent", record.trial),
            });
        }
        if record.status == TrialStatus::Completed && record.completed_score().is_none() {
            return Err(Error::Parse {
                path: "history".into(),
                line: i + 1,
                column: 1,
                message: "completed trial without a finite score".into(),
            });
        }
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperopt::Dimension;

    fn line(k: i64) -> SearchSpace {
        SearchSpace::new(vec![Dimension::new(
            "x",
            (0..k).map(ParamValue::Int).collect(),
        )])
        .unwrap()
    }

    fn cube() -> SearchSpace {
        let d = |n: &str| Dimension::new(n, (0..10).map(ParamValue::Int).collect());
        SearchSpace::new(vec![d("a"), d("b"), d("c")]).unwrap()
    }

    fn x(v: &BTreeMap<String, ParamValue>, k: &str) -> f64 {
        v[k].as_f64().unwrap()
    }

    fn bowl(v: &BTreeMap<String, ParamValue>, _: &mut RngState) -> Result<f64> {
        Ok((x(v, "a") - 7.0).powi(2) + (x(v, "b") - 2.0).powi(2) + (x(v, "c") - 5.0).powi(2))
    }

    fn no_history(_: &TrialRecord) -> Result<()> {
        Ok(())
    }

    #[test]
    fn five_values_in_25_trials_finds_optimum() {
        let space = line(5);
        let f = |v: &BTreeMap<String, ParamValue>, _: &mut RngState| Ok((x(v, "x") - 3.0).abs());
        let mut found = 0;
        for seed in 0..20 {
            let out = run_search(
                &space,
                f,
                &SearchOptions::new(25),
                &RngState::new(seed),
                vec![],
                no_history,
            )
            .unwrap();
            found += usize::from(out.best.assignment == vec![3]);
            assert_eq!(out.history.len(), 25);
        }
        assert!(found >= 19, "{found}/20");
    }

    #[test]
    fn single_trial_is_best() {
        let out = run_search(
            &cube(),
            bowl,
            &SearchOptions::new(1),
            &RngState::new(1),
            vec![],
            no_history,
        )
        .unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.best, out.history[0]);
    }

    #[test]
    fn tpe_beats_random_on_median() {
        let median = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            (v[9] + v[10]) / 2.0
        };
        let mut tpe = Vec::new();
        let mut random = Vec::new();
        for seed in 0..20 {
            let rng = RngState::new(seed);
            tpe.push(
                run_search(
                    &cube(),
                    bowl,
                    &SearchOptions::new(50),
                    &rng,
                    vec![],
                    no_history,
                )
                .unwrap()
                .best
                .score
                .unwrap(),
            );
            let mut r = rng.derive("random");
            random.push(
                (0..50)
                    .map(|_| bowl(&cube().values(&cube().sample_uniform(&mut r)), &mut r).unwrap())
                    .fold(f64::INFINITY, f64::min),
            );
        }
        assert!(
            median(tpe.clone()) <= median(random.clone()),
            "{tpe:?} vs {random:?}"
        );
    }

    #[test]
    fn failures_are_recorded_and_all_failed_errors() {
        let space = line(4);
        let f = |v: &BTreeMap<String, ParamValue>, _: &mut RngState| match x(v, "x") as i64 {
            0 => Err(Error::invalid("boom")),
            1 => Ok(f64::NAN),
            k => Ok(k as f64),
        };
        let mut opts = SearchOptions::new(8);
        opts.exhaustive_fallback = true;
        let out = run_search(&space, f, &opts, &RngState::new(2), vec![], no_history).unwrap();
        assert_eq!(out.history[0].status, TrialStatus::Failed);
        assert_eq!(
            out.history[0].message.as_deref(),
            Some("invalid argument: boom")
        );
        assert_eq!(out.history[1].status, TrialStatus::Failed);
        assert_eq!(out.best.assignment, vec![2]);
        let never = |_: &BTreeMap<String, ParamValue>, _: &mut RngState| -> Result<f64> {
            Err(Error::Untrained)
        };
        let err = run_search(
            &space,
            never,
            &SearchOptions::new(3),
            &RngState::new(2),
            vec![],
            no_history,
        );
        assert!(matches!(err, Err(Error::AllTrialsFailed(3))));
        assert!(run_search(
            &space,
            f,
            &SearchOptions::new(0),
            &RngState::new(2),
            vec![],
            no_history
        )
        .is_err());
    }

    #[test]
    fn exhaustive_fallback_enumerates() {
        let space = line(6);
        let mut opts = SearchOptions::new(6);
        opts.exhaustive_fallback = true;
        let f = |v: &BTreeMap<String, ParamValue>, _: &mut RngState| Ok((x(v, "x") - 4.0).powi(2));
        let out = run_search(&space, f, &opts, &RngState::new(0), vec![], no_history).unwrap();
        let seen: Vec<usize> = out.history.iter().map(|r| r.assignment[0]).collect();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
        assert_eq!(out.best.assignment, vec![4]);
    }

    #[test]
    fn resume_from_persisted_history_is_identical() {
        let space = cube();
        let rng = RngState::new(5);
        let mut lines = Vec::new();
        let full = run_search(&space, bowl, &SearchOptions::new(30), &rng, vec![], |r| {
            write_history_line(&mut lines, r)
        })
        .unwrap();
        let text = String::from_utf8(lines).unwrap();
        let prefix: String = text.lines().take(23).map(|l| format!("{l}\n")).collect();
        // A half-written final line is dropped.
        let torn = format!("{prefix}{{\"trial\": 23, \"assig");
        let history = read_history(torn.as_bytes(), &space).unwrap();
        assert_eq!(history.len(), 23);
        let resumed = run_search(
            &space,
            bowl,
            &SearchOptions::new(30),
            &rng,
            history,
            no_history,
        )
        .unwrap();
        assert_eq!(resumed, full);
        let all = read_history(text.as_bytes(), &space).unwrap();
        assert_eq!(all, full.history);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let space = cube();
        let mut opts = SearchOptions::new(30);
        opts.batch_size = 4;
        let a = run_search(&space, bowl, &opts, &RngState::new(8), vec![], no_history).unwrap();
        opts.workers = 3;
        let b = run_search(&space, bowl, &opts, &RngState::new(8), vec![], no_history).unwrap();
        assert_eq!(a, b);
        for r in &a.history {
            assert!(space.contains(&r.assignment));
        }
    }
}

//! Scoring of induced senses against gold keys.
//!
//! SemEval-2013 (graded): fuzzy NMI and fuzzy B-Cubed. SemEval-2010 (hard):
//! paired F-score and V-measure, with the system key hardened first. Both
//! tasks report AVG as the geometric mean of the two metrics, and a Spearman
//! correlation between induced and gold sense counts per target.

mod fuzzy;
mod hard;
mod rank;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fuzzy::{fuzzy_bcubed, fuzzy_bcubed_prf, fuzzy_nmi, FuzzyBCubed};
pub use hard::{paired_fscore, v_measure, HardLabeling, PairedF, VMeasure};
pub use rank::{average_ranks, spearman, spearman_test, SpearmanResult};

use crate::corpus::{GradedLabeling, KeyFile, TargetKey};
use crate::error::{Error, Result};
use crate::senses::harden;

/// Shuffles used for the sense-count correlation p-value.
pub const PERMUTATION_ITERATIONS: usize = 10_000;
pub const PERMUTATION_SEED: u64 = 0x5eed;

pub(crate) fn check_same_instances<'a, 'b>(
    a: impl Iterator<Item = &'a String>,
    b: impl Iterator<Item = &'b String>,
) -> Result<()> {
    let a: BTreeSet<&String> = a.collect();
    let b: BTreeSet<&String> = b.collect();
    if a.is_empty() && b.is_empty() {
        return Err(Error::InstanceMismatch("no instances to compare".into()));
    }
    if a != b {
        let only_a = a.difference(&b).count();
        let only_b = b.difference(&a).count();
        return Err(Error::InstanceMismatch(format!(
            "{only_a} instance(s) only in the first labeling, {only_b} only in the second"
        )));
    }
    Ok(())
}

/// Geometric mean of the two headline metrics.
pub fn avg_score(m1: f64, m2: f64) -> f64 {
    (m1.max(0.0) * m2.max(0.0)).sqrt()
}

/// Distinct senses with positive weight among each target's instances.
pub fn count_senses<S: Ord + Clone>(
    labeling: &GradedLabeling<S>,
    targets: &BTreeMap<String, TargetKey>,
) -> BTreeMap<TargetKey, usize> {
    let mut senses: BTreeMap<TargetKey, BTreeSet<&S>> = BTreeMap::new();
    for (id, weights) in labeling.iter() {
        if let Some(t) = targets.get(id) {
            let set = senses.entry(t.clone()).or_default();
            set.extend(weights.iter().filter(|(_, &w)| w > 0.0).map(|(s, _)| s));
        }
    }
    senses.into_iter().map(|(t, s)| (t, s.len())).collect()
}

/// Collapses a graded labeling to its most probable sense per instance.
pub fn to_hard<S: Ord + Clone>(labeling: &GradedLabeling<S>) -> HardLabeling<S> {
    harden(labeling)
        .iter()
        .filter_map(|(id, w)| w.keys().next().map(|s| (id.clone(), s.clone())))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "2010")]
    SemEval2010,
    #[serde(rename = "2013")]
    SemEval2013,
}

impl Task {
    pub fn metric_names(self) -> (&'static str, &'static str) {
        match self {
            Task::SemEval2010 => ("F-S", "V-M"),
            Task::SemEval2013 => ("FNMI", "FBC"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2010" => Ok(Task::SemEval2010),
            "2013" => Ok(Task::SemEval2013),
            _ => Err(Error::Invalid(format!(
                "unknown task `{s}` (expected 2010 or 2013)"
            ))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::SemEval2010 => "2010",
            Task::SemEval2013 => "2013",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScore {
    pub target: String,
    pub instances: usize,
    pub metric1: f64,
    pub metric2: f64,
    pub avg: f64,
    pub system_senses: usize,
    pub gold_senses: usize,
}

/// Metric values are fractions in `[0, 1]`; text output shows them x100.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub task: Task,
    pub per_target: Vec<TargetScore>,
    /// Mean over targets.
    pub metric1: f64,
    pub metric2: f64,
    pub avg: f64,
    pub sense_count_correlation: Option<SpearmanResult>,
    pub instances_scored: usize,
    pub missing_from_system: usize,
    pub missing_from_gold: usize,
}

fn score_target(
    task: Task,
    gold: &GradedLabeling<String>,
    sys: &GradedLabeling<String>,
) -> Result<(f64, f64)> {
    Ok(match task {
        Task::SemEval2013 => (fuzzy_nmi(gold, sys)?, fuzzy_bcubed(gold, sys)?),
        Task::SemEval2010 => {
            let (g, s) = (to_hard(gold), to_hard(sys));
            (paired_fscore(&g, &s)?.f, v_measure(&g, &s)?.v)
        }
    })
}

/// Scores a system key against a gold key, target by target, over the
/// instances present in both. Targets come from the gold key.
pub fn evaluate(system: &KeyFile, gold: &KeyFile, task: Task) -> Result<ScoreCard> {
    let missing_from_system = gold
        .labeling
        .instance_ids()
        .filter(|id| !system.labeling.contains(id))
        .count();
    let missing_from_gold = system
        .labeling
        .instance_ids()
        .filter(|id| !gold.labeling.contains(id))
        .count();

    let mut per_target = Vec::new();
    let mut instances_scored = 0;
    for (target, ids) in gold.by_target() {
        let shared: Vec<String> = ids
            .into_iter()
            .filter(|id| system.labeling.contains(id))
            .collect();
        if shared.is_empty() {
            continue;
        }
        let g = gold.labeling.restrict(&shared);
        let s = system.labeling.restrict(&shared);
        let (metric1, metric2) = score_target(task, &g, &s)?;
        instances_scored += shared.len();
        per_target.push(TargetScore {
            target: target.to_string(),
            instances: shared.len(),
            metric1,
            metric2,
            avg: avg_score(metric1, metric2),
            system_senses: s.senses().len(),
            gold_senses: g.senses().len(),
        });
    }
    if per_target.is_empty() {
        return Err(Error::InstanceMismatch(
            "system and gold keys share no instances".into(),
        ));
    }
    let n = per_target.len() as f64;
    let metric1 = per_target.iter().map(|t| t.metric1).sum::<f64>() / n;
    let metric2 = per_target.iter().map(|t| t.metric2).sum::<f64>() / n;
    let xs: Vec<f64> = per_target.iter().map(|t| t.system_senses as f64).collect();
    let ys: Vec<f64> = per_target.iter().map(|t| t.gold_senses as f64).collect();
    let sense_count_correlation =
        spearman_test(&xs, &ys, PERMUTATION_SEED, PERMUTATION_ITERATIONS).ok();
    Ok(ScoreCard {
        task,
        per_target,
        metric1,
        metric2,
        avg: avg_score(metric1, metric2),
        sense_count_correlation,
        instances_scored,
        missing_from_system,
        missing_from_gold,
    })
}

impl ScoreCard {
    /// Aligned text table, values x100.
    pub fn render_text(&self) -> String {
        let (m1, m2) = self.task.metric_names();
        let width = self
            .per_target
            .iter()
            .map(|t| t.target.len())
            .max()
            .unwrap_or(0)
            .max("target".len())
            .max("all".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>7}  {:>7}  {:>7}  {:>5}  {:>5}",
            "target", "n", m1, m2, "AVG", "sys", "gold"
        );
        for t in &self.per_target {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6}  {:>7.2}  {:>7.2}  {:>7.2}  {:>5}  {:>5}",
                t.target,
                t.instances,
                t.metric1 * 100.0,
                t.metric2 * 100.0,
                t.avg * 100.0,
                t.system_senses,
                t.gold_senses
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>7.2}  {:>7.2}  {:>7.2}",
            "all",
            self.instances_scored,
            self.metric1 * 100.0,
            self.metric2 * 100.0,
            self.avg * 100.0
        );
        match &self.sense_count_correlation {
            Some(c) => {
                let _ = writeln!(
                    out,
                    "sense-count spearman: {:.3} (p = {:.4}, {} permutations)",
                    c.rho, c.p_value, c.iterations
                );
            }
            None => out.push_str("sense-count spearman: undefined\n"),
        }
        if self.missing_from_system + self.missing_from_gold > 0 {
            let _ = writeln!(
                out,
                "unscored instances: {} missing from system, {} missing from gold",
                self.missing_from_system, self.missing_from_gold
            );
        }
        out
    }

    /// One JSON object per target followed by an aggregate record.
    pub fn render_jsonl(&self) -> String {
        let (m1, m2) = self.task.metric_names();
        let mut out = String::new();
        for t in &self.per_target {
            let rec = serde_json::json!({
                "task": self.task,
                "target": t.target,
                "instances": t.instances,
                m1: t.metric1,
                m2: t.metric2,
                "AVG": t.avg,
                "system_senses": t.system_senses,
                "gold_senses": t.gold_senses,
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        let rec = serde_json::json!({
            "task": self.task,
            "target": "all",
            "instances": self.instances_scored,
            m1: self.metric1,
            m2: self.metric2,
            "AVG": self.avg,
            "sense_count_spearman": self.sense_count_correlation,
            "missing_from_system": self.missing_from_system,
            "missing_from_gold": self.missing_from_gold,
        });
        out.push_str(&rec.to_string());
        out.push('\n');
        out
    }
}

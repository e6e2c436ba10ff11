//! Hard-clustering metrics: V-measure and paired F-score.

use std::collections::BTreeMap;

use super::check_same_instances;
use crate::error::Result;

/// A single label per instance.
pub type HardLabeling<L> = BTreeMap<String, L>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedF {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

struct Contingency {
    n: f64,
    gold: Vec<f64>,
    sys: Vec<f64>,
    joint: Vec<f64>,
    joint_sys: Vec<usize>,
    joint_gold: Vec<usize>,
}

fn contingency<G: Ord, S: Ord>(gold: &HardLabeling<G>, sys: &HardLabeling<S>) -> Contingency {
    let mut gold_ids: BTreeMap<&G, usize> = BTreeMap::new();
    let mut sys_ids: BTreeMap<&S, usize> = BTreeMap::new();
    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (id, g) in gold {
        let s = &sys[id];
        let next = gold_ids.len();
        let gi = *gold_ids.entry(g).or_insert(next);
        let next = sys_ids.len();
        let si = *sys_ids.entry(s).or_insert(next);
        *cells.entry((gi, si)).or_insert(0.0) += 1.0;
    }
    let mut gold_counts = vec![0.0; gold_ids.len()];
    let mut sys_counts = vec![0.0; sys_ids.len()];
    let (mut joint, mut joint_gold, mut joint_sys) = (Vec::new(), Vec::new(), Vec::new());
    for (&(g, s), &c) in &cells {
        gold_counts[g] += c;
        sys_counts[s] += c;
        joint.push(c);
        joint_gold.push(g);
        joint_sys.push(s);
    }
    Contingency {
        n: gold.len() as f64,
        gold: gold_counts,
        sys: sys_counts,
        joint,
        joint_sys,
        joint_gold,
    }
}

fn entropy(counts: &[f64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| -(c / n) * (c / n).ln())
        .sum()
}

/// Homogeneity, completeness and their harmonic mean. `h = 1` when the gold
/// labeling has zero entropy, `c = 1` when the system labeling does.
pub fn v_measure<G: Ord, S: Ord>(
    gold: &HardLabeling<G>,
    sys: &HardLabeling<S>,
) -> Result<VMeasure> {
    check_same_instances(gold.keys(), sys.keys())?;
    let t = contingency(gold, sys);
    let h_gold = entropy(&t.gold, t.n);
    let h_sys = entropy(&t.sys, t.n);
    // H(gold | sys) and H(sys | gold)
    let mut h_gold_given_sys = 0.0;
    let mut h_sys_given_gold = 0.0;
    for ((&c, &g), &s) in t.joint.iter().zip(&t.joint_gold).zip(&t.joint_sys) {
        h_gold_given_sys -= c / t.n * (c / t.sys[s]).ln();
        h_sys_given_gold -= c / t.n * (c / t.gold[g]).ln();
    }
    let homogeneity = if h_gold == 0.0 {
        1.0
    } else {
        (1.0 - h_gold_given_sys / h_gold).clamp(0.0, 1.0)
    };
    let completeness = if h_sys == 0.0 {
        1.0
    } else {
        (1.0 - h_sys_given_gold / h_sys).clamp(0.0, 1.0)
    };
    let v = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    Ok(VMeasure {
        homogeneity,
        completeness,
        v,
    })
}

fn pairs(c: f64) -> f64 {
    c * (c - 1.0) / 2.0
}

/// Pair-counting precision/recall/F over unordered instance pairs. With no
/// pairs on either side F is 1; with pairs on exactly one side F is 0.
pub fn paired_fscore<G: Ord, S: Ord>(
    gold: &HardLabeling<G>,
    sys: &HardLabeling<S>,
) -> Result<PairedF> {
    check_same_instances(gold.keys(), sys.keys())?;
    let t = contingency(gold, sys);
    let sys_pairs: f64 = t.sys.iter().map(|&c| pairs(c)).sum();
    let gold_pairs: f64 = t.gold.iter().map(|&c| pairs(c)).sum();
    let common: f64 = t.joint.iter().map(|&c| pairs(c)).sum();
    let out = match (sys_pairs == 0.0, gold_pairs == 0.0) {
        (true, true) => PairedF {
            precision: 1.0,
            recall: 1.0,
            f: 1.0,
        },
        (true, false) | (false, true) => PairedF {
            precision: if sys_pairs == 0.0 {
                0.0
            } else {
                common / sys_pairs
            },
            recall: if gold_pairs == 0.0 {
                0.0
            } else {
                common / gold_pairs
            },
            f: 0.0,
        },
        (false, false) => {
            let precision = common / sys_pairs;
            let recall = common / gold_pairs;
            let f = if common == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            PairedF {
                precision,
                recall,
                f,
            }
        }
    };
    Ok(out)
}

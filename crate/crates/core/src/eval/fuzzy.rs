//! Graded-labeling metrics: fuzzy B-Cubed and fuzzy NMI.
//!
//! Both follow the graded-sense evaluation of the SemEval-2013 WSI task.
//! B-Cubed is the extended (overlapping) item-pair form, with the number of
//! clusters two items share replaced by the overlap of their membership
//! weights, `sum_s min(w_i(s), w_j(s))`. NMI treats every cluster as a binary
//! random variable (overlapping NMI); graded memberships are coupled by
//! their minimum, and mutual information is normalized by the larger of the
//! two clusterings' entropies.

use std::collections::{BTreeMap, BTreeSet};

use super::check_same_instances;
use crate::corpus::GradedLabeling;
use crate::error::Result;

/// Per-instance membership vectors over a dense cluster index.
struct Memberships {
    /// `weights[c][i]`: membership of instance `i` in cluster `c`.
    weights: Vec<Vec<f64>>,
    /// Sparse rows: `(cluster, weight)` per instance.
    rows: Vec<Vec<(usize, f64)>>,
}

fn memberships<S: Ord + Clone>(labels: &GradedLabeling<S>, ids: &[&String]) -> Memberships {
    let senses: BTreeSet<S> = labels.senses();
    let index: BTreeMap<&S, usize> = senses.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut weights = vec![vec![0.0; ids.len()]; senses.len()];
    let mut rows = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        let w = labels.get(id).expect("instance sets checked");
        let row: Vec<(usize, f64)> = w.iter().map(|(s, &x)| (index[s], x)).collect();
        for &(c, x) in &row {
            weights[c][i] = x;
        }
        rows.push(row);
    }
    Memberships { weights, rows }
}

fn overlap(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1.min(b[j].1);
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FuzzyBCubed {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// Fuzzy B-Cubed precision, recall and F1.
///
/// For instances `i, j` let `sys(i, j)` and `gold(i, j)` be their membership
/// overlaps. The precision of `i` averages `min(sys, gold) / sys` over every
/// `j` (itself included) with `sys(i, j) > 0`; recall does the same against
/// `gold`. Both are then averaged over instances.
pub fn fuzzy_bcubed_prf<G: Ord + Clone, S: Ord + Clone>(
    gold: &GradedLabeling<G>,
    sys: &GradedLabeling<S>,
) -> Result<FuzzyBCubed> {
    check_same_instances(gold.instance_ids(), sys.instance_ids())?;
    let ids: Vec<&String> = gold.instance_ids().collect();
    let g = memberships(gold, &ids);
    let s = memberships(sys, &ids);
    let n = ids.len();
    let (mut precision, mut recall) = (0.0, 0.0);
    for i in 0..n {
        let (mut p_sum, mut p_n, mut r_sum, mut r_n) = (0.0, 0usize, 0.0, 0usize);
        for j in 0..n {
            let so = overlap(&s.rows[i], &s.rows[j]);
            let go = overlap(&g.rows[i], &g.rows[j]);
            let shared = so.min(go);
            if so > 0.0 {
                p_sum += shared / so;
                p_n += 1;
            }
            if go > 0.0 {
                r_sum += shared / go;
                r_n += 1;
            }
        }
        precision += p_sum / p_n as f64;
        recall += r_sum / r_n as f64;
    }
    precision /= n as f64;
    recall /= n as f64;
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(FuzzyBCubed {
        precision,
        recall,
        f,
    })
}

pub fn fuzzy_bcubed<G: Ord + Clone, S: Ord + Clone>(
    gold: &GradedLabeling<G>,
    sys: &GradedLabeling<S>,
) -> Result<f64> {
    Ok(fuzzy_bcubed_prf(gold, sys)?.f)
}

fn h(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.ln()
    }
}

/// Entropy of a binary cluster variable with `P(member) = p`.
fn cluster_entropy(p: f64) -> f64 {
    h(p) + h(1.0 - p)
}

/// `H(X_k | Y)` for each cluster `X_k` of `xs`: the smallest admissible
/// `H(X_k | Y_l)` over clusters of `ys`, or `H(X_k)` when none qualifies.
/// `Y_l` qualifies when the joint puts more information on agreement than on
/// disagreement, `h(P11) + h(P00) >= h(P10) + h(P01)`.
fn conditional_entropies(xs: &[Vec<f64>], ys: &[Vec<f64>], n: f64) -> Vec<f64> {
    let y_marg: Vec<f64> = ys.iter().map(|y| y.iter().sum::<f64>() / n).collect();
    xs.iter()
        .map(|x| {
            let px = x.iter().sum::<f64>() / n;
            let own = cluster_entropy(px);
            let mut best = own;
            for (y, &py) in ys.iter().zip(&y_marg) {
                let both = x.iter().zip(y).map(|(a, b)| a.min(*b)).sum::<f64>() / n;
                let x_only = (px - both).max(0.0);
                let y_only = (py - both).max(0.0);
                let neither = (1.0 - both - x_only - y_only).max(0.0);
                if h(both) + h(neither) >= h(x_only) + h(y_only) {
                    let joint = h(both) + h(x_only) + h(y_only) + h(neither);
                    best = best.min(joint - cluster_entropy(py));
                }
            }
            best.max(0.0)
        })
        .collect()
}

/// Fuzzy normalized mutual information in `[0, 1]`.
///
/// With `H(X) = sum_k H(X_k)` and `H(X|Y) = sum_k H(X_k|Y)`,
/// `I = (H(X) - H(X|Y) + H(Y) - H(Y|X)) / 2` and the score is
/// `I / max(H(X), H(Y))`; two single all-covering clusterings score 1.
pub fn fuzzy_nmi<G: Ord + Clone, S: Ord + Clone>(
    gold: &GradedLabeling<G>,
    sys: &GradedLabeling<S>,
) -> Result<f64> {
    check_same_instances(gold.instance_ids(), sys.instance_ids())?;
    let ids: Vec<&String> = gold.instance_ids().collect();
    let n = ids.len() as f64;
    let x = memberships(sys, &ids).weights;
    let y = memberships(gold, &ids).weights;
    let hx: f64 = x
        .iter()
        .map(|c| cluster_entropy(c.iter().sum::<f64>() / n))
        .sum();
    let hy: f64 = y
        .iter()
        .map(|c| cluster_entropy(c.iter().sum::<f64>() / n))
        .sum();
    let norm = hx.max(hy);
    if norm <= 0.0 {
        return Ok(1.0);
    }
    let hx_given_y: f64 = conditional_entropies(&x, &y, n).iter().sum();
    let hy_given_x: f64 = conditional_entropies(&y, &x, n).iter().sum();
    let mi = 0.5 * ((hx - hx_given_y) + (hy - hy_given_x));
    Ok((mi / norm).clamp(0.0, 1.0))
}

#![allow(dead_code, clippy::needless_range_loop)]

//! Independent reference implementations and random case generators shared
//! by the integration tests.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use senseforge_core::clustering::{DistanceMatrix, HardClustering, RepMatrix, SparseVec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Textbook UPGMA: recomputes every cluster-pair average from scratch at each
/// step. Averages are compared as exact fractions of the quantized distances;
/// ties go to the pair whose (smaller, larger) minimum rows are smallest.
/// Returns labels numbered by ascending minimum row.
pub fn naive_upgma(d: &DistanceMatrix, k: usize) -> Vec<usize> {
    let n = d.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best: Option<(u128, u128, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut sum: u128 = 0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        sum += d.get(i, j) as u128;
                    }
                }
                let pairs = (clusters[a].len() * clusters[b].len()) as u128;
                let better = match best {
                    None => true,
                    Some((bs, bp, ba, bb)) => {
                        let lhs = sum * bp;
                        let rhs = bs * pairs;
                        let key = (
                            clusters[a][0].min(clusters[b][0]),
                            clusters[a][0].max(clusters[b][0]),
                        );
                        let best_key = (
                            clusters[ba][0].min(clusters[bb][0]),
                            clusters[ba][0].max(clusters[bb][0]),
                        );
                        lhs < rhs || (lhs == rhs && key < best_key)
                    }
                };
                if better {
                    best = Some((sum, pairs, a, b));
                }
            }
        }
        let (_, _, a, b) = best.expect("at least two clusters");
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
        clusters.sort_by_key(|c| c[0]);
    }
    let mut labels = vec![0; n];
    for (l, c) in clusters.iter().enumerate() {
        for &i in c {
            labels[i] = l;
        }
    }
    labels
}

pub fn partition(labels: &[usize]) -> BTreeSet<Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Random distance matrix of size `n`. Half the time the distances come
/// from random sparse vectors, otherwise from a coarse grid that produces
/// many exact ties.
pub fn random_distances(r: &mut ChaCha8Rng, n: usize) -> DistanceMatrix {
    if r.random_bool(0.5) {
        let rows: Vec<SparseVec> = (0..n).map(|_| random_row(r, 6)).collect();
        DistanceMatrix::from_rows(&rows).unwrap()
    } else {
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = r.random_range(0..=4) as f64 / 4.0;
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        DistanceMatrix::from_dense(&m)
    }
}

pub fn random_row(r: &mut ChaCha8Rng, dim: usize) -> SparseVec {
    let mut pairs = Vec::new();
    for c in 0..dim {
        if r.random_bool(0.5) {
            pairs.push((c, r.random_range(1..=3) as f64));
        }
    }
    SparseVec::from_pairs(pairs)
}

/// Conditional-entropy V-measure straight from the definitions, with the
/// usual conventions for degenerate labelings.
pub fn brute_v_measure(gold: &[usize], sys: &[usize]) -> (f64, f64, f64) {
    let n = gold.len() as f64;
    let count = |f: &dyn Fn(usize) -> bool| (0..gold.len()).filter(|&i| f(i)).count() as f64;
    let gs: BTreeSet<usize> = gold.iter().copied().collect();
    let ss: BTreeSet<usize> = sys.iter().copied().collect();
    let plogp = |c: f64, m: f64| {
        if c == 0.0 {
            0.0
        } else {
            -(c / n) * (c / m).ln()
        }
    };
    let mut h_g = 0.0;
    for &g in &gs {
        h_g += plogp(count(&|i| gold[i] == g), n);
    }
    let mut h_s = 0.0;
    for &s in &ss {
        h_s += plogp(count(&|i| sys[i] == s), n);
    }
    let (mut h_g_s, mut h_s_g) = (0.0, 0.0);
    for &g in &gs {
        for &s in &ss {
            let c = count(&|i| gold[i] == g && sys[i] == s);
            h_g_s += plogp(c, count(&|i| sys[i] == s));
            h_s_g += plogp(c, count(&|i| gold[i] == g));
        }
    }
    let h = if h_g == 0.0 { 1.0 } else { 1.0 - h_g_s / h_g };
    let c = if h_s == 0.0 { 1.0 } else { 1.0 - h_s_g / h_s };
    let v = if h + c == 0.0 {
        0.0
    } else {
        2.0 * h * c / (h + c)
    };
    (h, c, v)
}

/// Paired F-score by enumerating every unordered pair.
pub fn brute_paired_f(gold: &[usize], sys: &[usize]) -> f64 {
    let (mut both, mut in_sys, mut in_gold) = (0usize, 0usize, 0usize);
    for i in 0..gold.len() {
        for j in i + 1..gold.len() {
            let s = sys[i] == sys[j];
            let g = gold[i] == gold[j];
            in_sys += s as usize;
            in_gold += g as usize;
            both += (s && g) as usize;
        }
    }
    if in_sys == 0 && in_gold == 0 {
        return 1.0;
    }
    if in_sys == 0 || in_gold == 0 || both == 0 {
        return 0.0;
    }
    let p = both as f64 / in_sys as f64;
    let r = both as f64 / in_gold as f64;
    2.0 * p * r / (p + r)
}

pub fn random_labels(r: &mut ChaCha8Rng, n: usize, max_label: usize) -> Vec<usize> {
    (0..n).map(|_| r.random_range(0..max_label)).collect()
}

/// A random sense-stage input: representative rows owned by instances and a
/// dense fixed-k clustering over them.
pub struct RandomSolution {
    pub matrix: RepMatrix,
    pub clustering: HardClustering,
    pub min_dominated: usize,
}

pub fn random_solution(r: &mut ChaCha8Rng) -> RandomSolution {
    let instances = r.random_range(1..=8);
    let dim = r.random_range(2..=6);
    let mut rows = Vec::new();
    let mut row_owner = Vec::new();
    for i in 0..instances {
        for _ in 0..r.random_range(1..=5) {
            rows.push(random_row(r, dim));
            row_owner.push(format!("inst{i}"));
        }
    }
    let k = r.random_range(1..=rows.len().min(6));
    let labels = random_labels(r, rows.len(), k);
    RandomSolution {
        matrix: RepMatrix {
            rows,
            row_owner,
            dim,
        },
        clustering: HardClustering::from_sparse_labels(&labels),
        min_dominated: r.random_range(1..=3),
    }
}

//! From a fixed-k clustering to the final sense solution: dominance counts,
//! weak/strong split, merging weak senses into their nearest strong sense by
//! centroid, and the re-derived soft labeling.

use std::collections::{BTreeMap, BTreeSet};

use crate::clustering::{
    cosine_distance_dense, soft_instance_clustering, HardClustering, RepMatrix,
};
use crate::corpus::GradedLabeling;
use crate::error::{Error, Result};

/// Final per-target sense structure.
#[derive(Clone, Debug, PartialEq)]
pub struct SenseSolution {
    /// Hard labels over representative rows, after merging.
    pub rep_labels: HardClustering,
    pub instance_labels: GradedLabeling<usize>,
    /// Mean TFIDF row of each sense.
    pub centroids: BTreeMap<usize, Vec<f64>>,
    /// Number of instances each sense dominates (zero entries included).
    pub dominance: BTreeMap<usize, usize>,
}

impl SenseSolution {
    pub fn n_senses(&self) -> usize {
        self.rep_labels.k()
    }
}

/// Most probable sense; ties go to the smallest id.
pub fn argmax_sense<S: Ord>(weights: &BTreeMap<S, f64>) -> Option<&S> {
    let mut best: Option<(&S, f64)> = None;
    for (s, &w) in weights {
        if best.is_none_or(|(_, bw)| w > bw) {
            best = Some((s, w));
        }
    }
    best.map(|(s, _)| s)
}

/// How many instances each sense dominates. Senses dominating nothing are
/// absent from the result.
pub fn dominance_counts<S: Ord + Clone>(labels: &GradedLabeling<S>) -> BTreeMap<S, usize> {
    let mut out = BTreeMap::new();
    for (_, weights) in labels.iter() {
        if let Some(s) = argmax_sense(weights) {
            *out.entry(s.clone()).or_insert(0) += 1;
        }
    }
    out
}

/// Dominance counts with an explicit zero for every sense in `0..k`.
pub fn full_dominance(labels: &GradedLabeling<usize>, k: usize) -> BTreeMap<usize, usize> {
    let mut out: BTreeMap<usize, usize> = (0..k).map(|s| (s, 0)).collect();
    out.extend(dominance_counts(labels));
    out
}

/// Splits senses into strong (dominating at least `m` instances) and weak.
/// When nothing is strong, the most dominant sense (smallest id on ties) is
/// promoted. `dominance` must list every sense, zero counts included.
pub fn partition_weak_strong<S: Ord + Clone>(
    dominance: &BTreeMap<S, usize>,
    m: usize,
) -> (BTreeSet<S>, BTreeSet<S>) {
    let (mut strong, mut weak): (BTreeSet<S>, BTreeSet<S>) = (BTreeSet::new(), BTreeSet::new());
    for (s, &count) in dominance {
        if count >= m {
            strong.insert(s.clone());
        } else {
            weak.insert(s.clone());
        }
    }
    if strong.is_empty() {
        let mut best: Option<(&S, usize)> = None;
        for (s, &count) in dominance {
            if best.is_none_or(|(_, bc)| count > bc) {
                best = Some((s, count));
            }
        }
        if let Some((s, _)) = best {
            weak.remove(s);
            strong.insert(s.clone());
        }
    }
    (strong, weak)
}

/// Mean row of each cluster, as dense vectors of length `matrix.dim`.
pub fn centroids(rep_labels: &HardClustering, matrix: &RepMatrix) -> Result<Vec<Vec<f64>>> {
    if rep_labels.len() != matrix.n_rows() {
        return Err(Error::Invalid(format!(
            "{} labels for {} rows",
            rep_labels.len(),
            matrix.n_rows()
        )));
    }
    let mut sums = vec![vec![0.0; matrix.dim]; rep_labels.k()];
    let mut counts = vec![0usize; rep_labels.k()];
    for (row, &l) in matrix.rows.iter().zip(rep_labels.labels()) {
        counts[l] += 1;
        for &(c, v) in row.entries() {
            sums[l][c] += v;
        }
    }
    for (sum, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            sum.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    Ok(sums)
}

/// Moves every representative of each weak sense to the strong sense whose
/// centroid is nearest by cosine distance (ties to the smaller id). Centroids
/// come from the input clustering and are not updated while merging.
/// Surviving senses are renumbered densely in ascending original id.
pub fn merge_weak(
    rep_labels: &HardClustering,
    matrix: &RepMatrix,
    strong: &BTreeSet<usize>,
    weak: &BTreeSet<usize>,
) -> Result<HardClustering> {
    if strong.is_empty() {
        return Err(Error::Invalid("no strong sense to merge into".into()));
    }
    if !strong.is_disjoint(weak) {
        return Err(Error::Invalid("a sense is both strong and weak".into()));
    }
    let all: BTreeSet<usize> = strong.union(weak).copied().collect();
    if all != (0..rep_labels.k()).collect() {
        return Err(Error::Invalid(format!(
            "strong and weak senses must cover exactly 0..{}",
            rep_labels.k()
        )));
    }
    let cents = centroids(rep_labels, matrix)?;
    let target: BTreeMap<usize, usize> = weak
        .iter()
        .map(|&w| {
            let mut best: Option<(usize, f64)> = None;
            for &s in strong {
                let d = cosine_distance_dense(&cents[w], &cents[s]);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((s, d));
                }
            }
            (w, best.expect("strong is non-empty").0)
        })
        .collect();
    let relabeled: Vec<usize> = rep_labels
        .labels()
        .iter()
        .map(|l| target.get(l).copied().unwrap_or(*l))
        .collect();
    Ok(HardClustering::from_sparse_labels(&relabeled))
}

/// Re-derives instance labels, centroids and dominance from representative
/// labels.
pub fn finalize(
    rep_labels: HardClustering,
    row_owner: &[String],
    matrix: &RepMatrix,
) -> Result<SenseSolution> {
    let instance_labels = soft_instance_clustering(&rep_labels, row_owner)?;
    let centroids = centroids(&rep_labels, matrix)?
        .into_iter()
        .enumerate()
        .collect();
    let dominance = full_dominance(&instance_labels, rep_labels.k());
    Ok(SenseSolution {
        rep_labels,
        instance_labels,
        centroids,
        dominance,
    })
}

/// Runs the sense stage on a fixed-k clustering. In dynamic mode weak senses
/// (dominating fewer than `min_dominated` instances) are merged away first.
pub fn resolve_senses(
    clustering: HardClustering,
    matrix: &RepMatrix,
    min_dominated: usize,
    dynamic: bool,
) -> Result<SenseSolution> {
    if !dynamic {
        return finalize(clustering, &matrix.row_owner, matrix);
    }
    let soft = soft_instance_clustering(&clustering, &matrix.row_owner)?;
    let dominance = full_dominance(&soft, clustering.k());
    let (strong, weak) = partition_weak_strong(&dominance, min_dominated);
    let merged = merge_weak(&clustering, matrix, &strong, &weak)?;
    finalize(merged, &matrix.row_owner, matrix)
}

/// One sense per instance (the most probable; ties to the smaller id),
/// weight 1.
pub fn harden<S: Ord + Clone>(labels: &GradedLabeling<S>) -> GradedLabeling<S> {
    let mut out = GradedLabeling::new();
    for (id, weights) in labels.iter() {
        if let Some(s) = argmax_sense(weights) {
            out.insert(id.clone(), BTreeMap::from([(s.clone(), 1.0)]))
                .expect("fresh instance with positive weight");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::SparseVec;

    fn labeling(entries: &[(&str, &[(usize, f64)])]) -> GradedLabeling<usize> {
        let mut out = GradedLabeling::new();
        for (id, ws) in entries {
            out.insert(*id, ws.iter().copied().collect()).unwrap();
        }
        out
    }

    #[test]
    fn dominance_examples() {
        assert_eq!(
            dominance_counts(&labeling(&[("x", &[(0, 1.0)])])),
            BTreeMap::from([(0, 1)])
        );
        assert_eq!(
            dominance_counts(&labeling(&[("x", &[(0, 0.5), (1, 0.5)])])),
            BTreeMap::from([(0, 1)])
        );
        let three = labeling(&[
            ("a", &[(2, 1.0)]),
            ("b", &[(2, 0.7), (0, 0.3)]),
            ("c", &[(2, 0.9), (1, 0.1)]),
        ]);
        assert_eq!(dominance_counts(&three), BTreeMap::from([(2, 3)]));
    }

    #[test]
    fn partition_examples() {
        let (s, w) = partition_weak_strong(&BTreeMap::from([(0, 5), (1, 1)]), 2);
        assert_eq!((s, w), (BTreeSet::from([0]), BTreeSet::from([1])));
        let (s, w) = partition_weak_strong(&BTreeMap::from([(0, 2), (1, 3)]), 2);
        assert_eq!(s.len(), 2);
        assert!(w.is_empty());
        let (s, w) = partition_weak_strong(&BTreeMap::from([(0, 1), (1, 1), (2, 0)]), 2);
        assert_eq!(s, BTreeSet::from([0]));
        assert_eq!(w, BTreeSet::from([1, 2]));
        // zero-dominance senses are weak even at m = 1
        let (s, w) = partition_weak_strong(&BTreeMap::from([(0, 4), (1, 0)]), 1);
        assert_eq!((s, w), (BTreeSet::from([0]), BTreeSet::from([1])));
    }

    fn matrix(rows: &[[f64; 2]], owners: &[&str]) -> RepMatrix {
        RepMatrix {
            rows: rows.iter().map(|r| SparseVec::from_dense(r)).collect(),
            row_owner: owners.iter().map(|s| s.to_string()).collect(),
            dim: 2,
        }
    }

    #[test]
    fn merge_with_no_weak_is_identity() {
        let m = matrix(&[[1.0, 0.0], [0.0, 1.0]], &["a", "b"]);
        let h = HardClustering::new(vec![0, 1], 2).unwrap();
        let out = merge_weak(&h, &m, &BTreeSet::from([0, 1]), &BTreeSet::new()).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn weak_joins_nearest_strong_centroid() {
        // Strong A = cluster 0 at (1, 0); strong B = cluster 2 at (0, 1);
        // weak cluster 1 has centroid (0.9, 0.3): cos to A 0.949, to B 0.316.
        let m = matrix(
            &[[1.0, 0.0], [0.9, 0.3], [0.9, 0.3], [0.0, 1.0]],
            &["a", "b", "c", "d"],
        );
        let h = HardClustering::new(vec![0, 1, 1, 2], 3).unwrap();
        let out = merge_weak(&h, &m, &BTreeSet::from([0, 2]), &BTreeSet::from([1])).unwrap();
        assert_eq!(out.labels(), &[0, 0, 0, 1]);
        assert_eq!(out.k(), 2);
    }

    #[test]
    fn merge_rejects_bad_partitions() {
        let m = matrix(&[[1.0, 0.0], [0.0, 1.0]], &["a", "b"]);
        let h = HardClustering::new(vec![0, 1], 2).unwrap();
        assert!(merge_weak(&h, &m, &BTreeSet::new(), &BTreeSet::from([0, 1])).is_err());
        assert!(merge_weak(&h, &m, &BTreeSet::from([0]), &BTreeSet::new()).is_err());
        assert!(merge_weak(&h, &m, &BTreeSet::from([0, 1]), &BTreeSet::from([1])).is_err());
    }

    #[test]
    fn finalize_single_sense() {
        let m = matrix(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], &["a", "a", "b"]);
        let sol = finalize(
            HardClustering::new(vec![0, 0, 0], 1).unwrap(),
            &m.row_owner,
            &m,
        )
        .unwrap();
        for (_, w) in sol.instance_labels.iter() {
            assert_eq!(w, &BTreeMap::from([(0, 1.0)]));
        }
        assert_eq!(sol.dominance, BTreeMap::from([(0, 2)]));
        assert_eq!(sol.centroids[&0], vec![2.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn merge_shifts_weight_by_moved_reps() {
        // Instance X has 15 reps: 9 in A (0), 3 in weak w (1), 3 in B (2).
        // Other instances make A and B strong and w weak; w sits next to A.
        let mut rows = Vec::new();
        let mut owners = Vec::new();
        let mut labels = Vec::new();
        for (label, row, count) in [(0, [1.0, 0.0], 9), (1, [0.95, 0.05], 3), (2, [0.0, 1.0], 3)] {
            for _ in 0..count {
                rows.push(row);
                owners.push("x");
                labels.push(label);
            }
        }
        for (owner, label, row) in [
            ("p", 0, [1.0, 0.0]),
            ("q", 2, [0.0, 1.0]),
            ("r", 2, [0.0, 1.0]),
        ] {
            rows.push(row);
            owners.push(owner);
            labels.push(label);
        }
        let m = matrix(&rows, &owners);
        let h = HardClustering::new(labels, 3).unwrap();
        let before = soft_instance_clustering(&h, &m.row_owner).unwrap();
        let sol = resolve_senses(h, &m, 2, true).unwrap();
        assert_eq!(sol.n_senses(), 2);
        let x_before = before.get("x").unwrap()[&0];
        let x_after = sol.instance_labels.get("x").unwrap()[&0];
        assert!((x_after - x_before - 3.0 / 15.0).abs() < 1e-12);
        let total: f64 = sol.instance_labels.get("x").unwrap().values().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn harden_examples() {
        let l = labeling(&[("x", &[(0, 0.2), (1, 0.8)]), ("y", &[(3, 0.5), (1, 0.5)])]);
        let h = harden(&l);
        assert_eq!(h.get("x").unwrap(), &BTreeMap::from([(1, 1.0)]));
        assert_eq!(h.get("y").unwrap(), &BTreeMap::from([(1, 1.0)]));
        let scaled = l.map_senses(|s| *s);
        assert_eq!(harden(&scaled), h);
    }

    /// A single merge pass is not a fixpoint in general: re-deriving the soft
    /// clustering can move an instance's dominant sense, leaving a surviving
    /// sense below the threshold.
    #[test]
    fn single_pass_is_not_always_a_fixpoint() {
        // Senses: A = 0, W = 1 (weak, near B), B = 2.
        // Instance x: A 5, W 4, B 3 reps -> dominated by A; after merge B has 7.
        // Instance y: A only -> A dominates 2 before the merge, 1 after.
        // Instances u, v: B only -> B strong.
        let mut rows = Vec::new();
        let mut owners = Vec::new();
        let mut labels = Vec::new();
        let mut push = |owner: &'static str, label: usize, row: [f64; 2], count: usize| {
            for _ in 0..count {
                rows.push(row);
                owners.push(owner);
                labels.push(label);
            }
        };
        push("x", 0, [1.0, 0.0], 5);
        push("x", 1, [0.1, 1.0], 4);
        push("x", 2, [0.0, 1.0], 3);
        push("y", 0, [1.0, 0.0], 12);
        push("u", 2, [0.0, 1.0], 12);
        push("v", 2, [0.0, 1.0], 12);
        let m = matrix(&rows, &owners);
        let sol = resolve_senses(HardClustering::new(labels, 3).unwrap(), &m, 2, true).unwrap();
        assert_eq!(sol.n_senses(), 2);
        assert_eq!(sol.dominance, BTreeMap::from([(0, 1), (1, 3)]));
        let again = resolve_senses(sol.rep_labels.clone(), &m, 2, true).unwrap();
        assert_eq!(again.n_senses(), 1);
    }
}

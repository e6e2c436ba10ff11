//! Representative vectors, TFIDF weighting, cosine distances and
//! average-linkage (UPGMA) agglomerative clustering.

#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::corpus::GradedLabeling;
use crate::error::{Error, Result};
use crate::substitution::Representative;

/// Largest number of rows `agglomerate` accepts.
pub const MAX_ROWS: usize = 20_000;

/// Fixed-point scale applied to pairwise distances before clustering.
pub const DISTANCE_SCALE: f64 = (1u64 << 32) as f64;

/// Sparse vector with strictly increasing column indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVec {
    entries: Vec<(usize, f64)>,
}

impl SparseVec {
    /// Builds from arbitrary (column, value) pairs: sorted, zeros dropped,
    /// repeated columns summed.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut map: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, v) in pairs {
            *map.entry(i).or_insert(0.0) += v;
        }
        SparseVec {
            entries: map.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self::from_pairs(values.iter().copied().enumerate())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, col: usize) -> f64 {
        self.entries
            .binary_search_by_key(&col, |&(i, _)| i)
            .map_or(0.0, |p| self.entries[p].1)
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum()
    }

    pub fn scale(&self, c: f64) -> SparseVec {
        SparseVec::from_pairs(self.entries.iter().map(|&(i, v)| (i, v * c)))
    }
}

/// Cosine distance `1 - a.b / (|a||b|)`, clamped to `[0, 2]`. A zero vector is
/// at distance 1 from everything.
pub fn cosine_distance(a: &SparseVec, b: &SparseVec) -> f64 {
    let (na, nb) = (a.norm_sq(), b.norm_sq());
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - a.dot(b) / (na * nb).sqrt()).clamp(0.0, 2.0)
}

/// Dense cosine distance, same conventions as [`cosine_distance`].
pub fn cosine_distance_dense(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb).sqrt()).clamp(0.0, 2.0)
}

/// Lemma <-> column map. Columns follow lexicographic lemma order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    lemmas: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn from_lemmas<I, S>(lemmas: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = lemmas.into_iter().map(Into::into).collect();
        let lemmas: Vec<String> = set.into_iter().collect();
        let index = lemmas
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { lemmas, index }
    }

    pub fn from_representatives(reps: &[Representative]) -> Self {
        Self::from_lemmas(reps.iter().flat_map(|r| r.lemmas.iter().cloned()))
    }

    pub fn len(&self) -> usize {
        self.lemmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lemmas.is_empty()
    }

    pub fn index_of(&self, lemma: &str) -> Option<usize> {
        self.index.get(lemma).copied()
    }

    pub fn lemma(&self, col: usize) -> &str {
        &self.lemmas[col]
    }
}

/// One non-negative sparse row per representative.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RepMatrix {
    pub rows: Vec<SparseVec>,
    pub row_owner: Vec<String>,
    pub dim: usize,
}

impl RepMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Binary one-hot rows: 1.0 at each of the representative's lemmas.
pub fn vectorize(reps: &[Representative], vocab: &Vocabulary) -> Result<RepMatrix> {
    let mut rows = Vec::with_capacity(reps.len());
    for rep in reps {
        let cols = rep
            .lemmas
            .iter()
            .map(|w| {
                vocab
                    .index_of(w)
                    .ok_or_else(|| Error::UnknownLemma(w.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(SparseVec::from_pairs(cols.into_iter().map(|c| (c, 1.0))));
    }
    Ok(RepMatrix {
        rows,
        row_owner: reps.iter().map(|r| r.owner_instance.clone()).collect(),
        dim: vocab.len(),
    })
}

/// Binary tf times smoothed idf, `ln((1 + N) / (1 + df)) + 1`.
pub fn tfidf(matrix: &RepMatrix) -> RepMatrix {
    let n = matrix.n_rows() as f64;
    let mut df: BTreeMap<usize, usize> = BTreeMap::new();
    for row in &matrix.rows {
        for &(c, _) in row.entries() {
            *df.entry(c).or_insert(0) += 1;
        }
    }
    let idf: BTreeMap<usize, f64> = df
        .into_iter()
        .map(|(c, d)| (c, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
        .collect();
    let rows = matrix
        .rows
        .iter()
        .map(|row| SparseVec {
            entries: row.entries().iter().map(|&(c, _)| (c, idf[&c])).collect(),
        })
        .collect();
    RepMatrix {
        rows,
        row_owner: matrix.row_owner.clone(),
        dim: matrix.dim,
    }
}

/// Condensed matrix of pairwise cosine distances, stored in fixed point
/// (`round(d * DISTANCE_SCALE)`) so that cluster averages compare exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<u64>,
}

fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

pub fn quantize_distance(d: f64) -> u64 {
    (d.clamp(0.0, 2.0) * DISTANCE_SCALE).round() as u64
}

impl DistanceMatrix {
    pub fn from_rows(rows: &[SparseVec]) -> Result<Self> {
        let n = rows.len();
        if n > MAX_ROWS {
            return Err(Error::Invalid(format!(
                "{n} representatives exceed the clustering limit of {MAX_ROWS}"
            )));
        }
        let norms: Vec<f64> = rows.iter().map(SparseVec::norm_sq).collect();
        // Each row's slice is computed independently, so the parallel result
        // is bit-identical to a sequential one.
        let data: Vec<u64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let norms = &norms;
                (i + 1..n).map(move |j| {
                    let d = if norms[i] == 0.0 || norms[j] == 0.0 {
                        1.0
                    } else {
                        (1.0 - rows[i].dot(&rows[j]) / (norms[i] * norms[j]).sqrt()).clamp(0.0, 2.0)
                    };
                    quantize_distance(d)
                })
            })
            .collect();
        Ok(DistanceMatrix { n, data })
    }

    /// Builds from a full symmetric matrix of raw distances.
    pub fn from_dense(d: &[Vec<f64>]) -> Self {
        let n = d.len();
        let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                data.push(quantize_distance(d[i][j]));
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Quantized distance; 0 on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> u64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Less => self.data[condensed_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.data[condensed_index(self.n, j, i)],
        }
    }
}

/// Flat cluster assignment over representative rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HardClustering {
    labels: Vec<usize>,
    k: usize,
}

impl HardClustering {
    /// Every id in `0..k` must be used.
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        let mut used = vec![false; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::Invalid(format!(
                    "cluster label {l} out of range for k = {k}"
                )));
            }
            used[l] = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::Invalid(format!("cluster {empty} has no members")));
        }
        Ok(HardClustering { labels, k })
    }

    /// Relabels arbitrary ids densely by ascending original id.
    pub fn from_sparse_labels(labels: &[usize]) -> Self {
        let ids: BTreeSet<usize> = labels.iter().copied().collect();
        let dense: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        HardClustering {
            labels: labels.iter().map(|l| dense[l]).collect(),
            k: ids.len(),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row indices of each cluster, in ascending order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (row, &l) in self.labels.iter().enumerate() {
            out[l].push(row);
        }
        out
    }

    /// The clustering as a set of row sets, for label-free comparison.
    pub fn partition(&self) -> BTreeSet<Vec<usize>> {
        self.members().into_iter().collect()
    }
}

/// Result of a clustering run with the distance of every merge performed.
#[derive(Clone, Debug, PartialEq)]
pub struct Agglomeration {
    pub clustering: HardClustering,
    pub merge_distances: Vec<f64>,
}

/// Average-linkage clustering of the matrix rows into `k` clusters by cosine
/// distance.
pub fn agglomerate(matrix: &RepMatrix, k: usize) -> Result<HardClustering> {
    Ok(agglomerate_traced(matrix, k)?.clustering)
}

pub fn agglomerate_traced(matrix: &RepMatrix, k: usize) -> Result<Agglomeration> {
    let n = matrix.n_rows();
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("k = {k} outside 1..={n}")));
    }
    upgma(&DistanceMatrix::from_rows(&matrix.rows)?, k)
}

/// Cluster-pair link: summed member distances and the number of pairs.
#[derive(Clone, Copy, Debug)]
struct Link {
    sum: u64,
    pairs: u64,
}

impl Link {
    /// Strictly smaller average distance.
    fn closer_than(self, other: Link) -> bool {
        (self.sum as u128) * (other.pairs as u128) < (other.sum as u128) * (self.pairs as u128)
    }

    fn ties(self, other: Link) -> bool {
        (self.sum as u128) * (other.pairs as u128) == (other.sum as u128) * (self.pairs as u128)
    }

    fn average(self) -> f64 {
        self.sum as f64 / self.pairs as f64 / DISTANCE_SCALE
    }
}

/// UPGMA down to `k` clusters.
///
/// Clusters live in the slot of their smallest row index. Each active slot
/// caches its closest active partner with a larger slot index; ties in the
/// global minimum go to the smallest (slot, partner) pair. Cluster ids are
/// assigned by ascending smallest row.
pub fn upgma(dist: &DistanceMatrix, k: usize) -> Result<Agglomeration> {
    let n = dist.len();
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("k = {k} outside 1..={n}")));
    }
    let mut sums = dist.data.clone();
    let mut size = vec![1u64; n];
    let mut active = vec![true; n];
    let mut nearest: Vec<Option<(usize, Link)>> = vec![None; n];
    let mut absorbed_by: Vec<Option<usize>> = vec![None; n];

    let link = |sums: &[u64], size: &[u64], a: usize, b: usize| {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        Link {
            sum: sums[condensed_index(n, lo, hi)],
            pairs: size[a] * size[b],
        }
    };
    let scan = |sums: &[u64], size: &[u64], active: &[bool], a: usize| {
        let mut best: Option<(usize, Link)> = None;
        for b in a + 1..n {
            if !active[b] {
                continue;
            }
            let l = link(sums, size, a, b);
            if best.is_none_or(|(_, bl)| l.closer_than(bl)) {
                best = Some((b, l));
            }
        }
        best
    };

    for a in 0..n {
        nearest[a] = scan(&sums, &size, &active, a);
    }

    let mut merge_distances = Vec::with_capacity(n - k);
    let mut remaining = n;
    while remaining > k {
        let mut best: Option<(usize, usize, Link)> = None;
        for a in 0..n {
            if !active[a] {
                continue;
            }
            if let Some((b, l)) = nearest[a] {
                if best.is_none_or(|(_, _, bl)| l.closer_than(bl)) {
                    best = Some((a, b, l));
                }
            }
        }
        let (a, b, l) = best.expect("more than one active cluster has a partner");
        merge_distances.push(l.average());

        for c in 0..n {
            if !active[c] || c == a || c == b {
                continue;
            }
            let ac = if a < c {
                condensed_index(n, a, c)
            } else {
                condensed_index(n, c, a)
            };
            let bc = if b < c {
                condensed_index(n, b, c)
            } else {
                condensed_index(n, c, b)
            };
            sums[ac] += sums[bc];
        }
        size[a] += size[b];
        active[b] = false;
        absorbed_by[b] = Some(a);
        nearest[b] = None;
        remaining -= 1;

        nearest[a] = scan(&sums, &size, &active, a);
        for x in 0..n {
            if !active[x] || x == a {
                continue;
            }
            match nearest[x] {
                Some((p, _)) if p == a || p == b => nearest[x] = scan(&sums, &size, &active, x),
                Some((p, pl)) if x < a => {
                    let l = link(&sums, &size, x, a);
                    if l.closer_than(pl) || (l.ties(pl) && a < p) {
                        nearest[x] = Some((a, l));
                    }
                }
                None if x < a => nearest[x] = Some((a, link(&sums, &size, x, a))),
                _ => {}
            }
        }
    }

    // Every row follows `absorbed_by` links to its final slot.
    let labels_by_slot: BTreeMap<usize, usize> = (0..n)
        .filter(|&s| active[s])
        .enumerate()
        .map(|(id, s)| (s, id))
        .collect();
    let labels = (0..n)
        .map(|row| {
            let mut s = row;
            while let Some(next) = absorbed_by[s] {
                s = next;
            }
            labels_by_slot[&s]
        })
        .collect();
    Ok(Agglomeration {
        clustering: HardClustering { labels, k },
        merge_distances,
    })
}

/// Per-instance fraction of representatives in each cluster.
pub fn soft_instance_clustering(
    hard: &HardClustering,
    row_owner: &[String],
) -> Result<GradedLabeling<usize>> {
    if hard.len() != row_owner.len() {
        return Err(Error::Invalid(format!(
            "{} labels but {} row owners",
            hard.len(),
            row_owner.len()
        )));
    }
    let mut counts: BTreeMap<&str, BTreeMap<usize, f64>> = BTreeMap::new();
    for (&label, owner) in hard.labels().iter().zip(row_owner) {
        *counts.entry(owner).or_default().entry(label).or_insert(0.0) += 1.0;
    }
    let mut out = GradedLabeling::new();
    for (owner, weights) in counts {
        out.insert(owner, weights)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(owner: &str, lemmas: &[&str]) -> Representative {
        Representative {
            owner_instance: owner.into(),
            lemmas: lemmas.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn vectorize_one_hot() {
        let vocab = Vocabulary::from_lemmas(["b", "a"]);
        assert_eq!(vocab.index_of("a"), Some(0));
        let m = vectorize(
            &[rep("x", &["a"]), rep("x", &[]), rep("y", &["a", "b"])],
            &vocab,
        )
        .unwrap();
        assert_eq!(m.rows[0], SparseVec::from_dense(&[1.0, 0.0]));
        assert!(m.rows[1].is_zero());
        assert_eq!(m.rows[2].entries().iter().map(|e| e.1).sum::<f64>(), 2.0);
        assert_eq!(m.row_owner, ["x", "x", "y"]);
        assert!(matches!(
            vectorize(&[rep("x", &["c"])], &vocab),
            Err(Error::UnknownLemma(_))
        ));
    }

    #[test]
    fn tfidf_weights() {
        let vocab = Vocabulary::from_lemmas(["all", "one"]);
        let reps = [
            rep("x", &["all", "one"]),
            rep("x", &["all"]),
            rep("x", &["all"]),
            rep("x", &[]),
        ];
        let m = tfidf(&vectorize(&reps, &vocab).unwrap());
        // N = 4: df(all) = 3, df(one) = 1.
        assert!((m.rows[0].get(0) - ((5.0f64 / 4.0).ln() + 1.0)).abs() < 1e-12);
        assert!((m.rows[0].get(1) - ((5.0f64 / 2.0).ln() + 1.0)).abs() < 1e-12);
        assert!(m.rows[3].is_zero());

        let reps = [
            rep("x", &["all", "one"]),
            rep("x", &["all"]),
            rep("x", &["all"]),
        ];
        let m = tfidf(&vectorize(&reps, &vocab).unwrap());
        assert_eq!(m.rows[1].get(0), 1.0);
        assert!((m.rows[0].get(1) - 1.693147).abs() < 1e-6);
    }

    #[test]
    fn cosine_cases() {
        let a = SparseVec::from_dense(&[1.0, 1.0]);
        let b = SparseVec::from_dense(&[1.0, 0.0]);
        let c = SparseVec::from_dense(&[0.0, 0.0, 3.0]);
        assert_eq!(cosine_distance(&a, &a), 0.0);
        assert_eq!(cosine_distance(&b, &c), 1.0);
        assert!((cosine_distance(&a, &b) - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(
            cosine_distance(&SparseVec::default(), &SparseVec::default()),
            1.0
        );
        assert_eq!(cosine_distance(&SparseVec::default(), &a), 1.0);
    }

    fn matrix(rows: &[&[f64]]) -> RepMatrix {
        RepMatrix {
            rows: rows.iter().map(|r| SparseVec::from_dense(r)).collect(),
            row_owner: (0..rows.len()).map(|i| i.to_string()).collect(),
            dim: rows.first().map_or(0, |r| r.len()),
        }
    }

    #[test]
    fn agglomerate_extremes() {
        let m = matrix(&[&[1.0, 0.0], &[0.9, 0.1], &[0.0, 1.0], &[0.1, 1.0]]);
        assert_eq!(agglomerate(&m, 4).unwrap().labels(), &[0, 1, 2, 3]);
        assert_eq!(agglomerate(&m, 1).unwrap().labels(), &[0, 0, 0, 0]);
        assert_eq!(agglomerate(&m, 2).unwrap().labels(), &[0, 0, 1, 1]);
        assert!(agglomerate(&m, 0).is_err());
        assert!(agglomerate(&m, 5).is_err());
    }

    #[test]
    fn ties_prefer_smallest_rows() {
        // Four mutually orthogonal rows: every pair is at distance 1.
        let m = matrix(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
        ]);
        let out = agglomerate_traced(&m, 2).unwrap();
        assert_eq!(out.clustering.labels(), &[0, 0, 0, 1]);
        assert_eq!(out.merge_distances, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_rows_merge_last() {
        let m = matrix(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.1]]);
        assert_eq!(agglomerate(&m, 2).unwrap().labels(), &[0, 1, 1]);
    }

    #[test]
    fn average_linkage_not_single() {
        // Single linkage would chain 0-1-2; average linkage merges {0,1} then
        // prefers 3 joining 2 over 2 joining {0,1}.
        let d = vec![
            vec![0.0, 0.1, 0.5, 0.9],
            vec![0.1, 0.0, 0.2, 0.9],
            vec![0.5, 0.2, 0.0, 0.3],
            vec![0.9, 0.9, 0.3, 0.0],
        ];
        let out = upgma(&DistanceMatrix::from_dense(&d), 2).unwrap();
        assert_eq!(out.clustering.labels(), &[0, 0, 1, 1]);
        assert!((out.merge_distances[0] - 0.1).abs() < 1e-9);
        assert!((out.merge_distances[1] - 0.3).abs() < 1e-9);
    }

    #[test]
    fn soft_clustering_fractions() {
        let mut labels = vec![0; 10];
        labels.extend([1; 5]);
        labels.extend([2; 15]);
        let mut owners = vec!["x".to_string(); 15];
        owners.extend(vec!["y".to_string(); 15]);
        let hard = HardClustering::new(labels, 3).unwrap();
        let soft = soft_instance_clustering(&hard, &owners).unwrap();
        let x = soft.get("x").unwrap();
        assert!((x[&0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((x[&1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(soft.get("y").unwrap(), &BTreeMap::from([(2, 1.0)]));
        assert!(soft_instance_clustering(&hard, &owners[1..]).is_err());
    }

    #[test]
    fn hard_clustering_validation() {
        assert!(HardClustering::new(vec![0, 2], 3).is_err());
        assert!(HardClustering::new(vec![0, 3], 3).is_err());
        let h = HardClustering::from_sparse_labels(&[5, 2, 5, 9]);
        assert_eq!(h.labels(), &[1, 0, 1, 2]);
        assert_eq!(h.k(), 3);
    }
}

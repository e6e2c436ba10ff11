//! Turning per-instance substitute logits into a sampling distribution and
//! drawing representatives from it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Top-K substitute lists for one instance: one from the pattern query, one
/// from the vanilla (target position) query. Both sorted by descending logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstituteRecord {
    pub instance_id: String,
    pub k: usize,
    #[serde(rename = "pattern")]
    pub pattern_list: Vec<(String, f64)>,
    #[serde(rename = "target")]
    pub target_list: Vec<(String, f64)>,
}

impl SubstituteRecord {
    pub fn validate(&self) -> Result<()> {
        for (name, list) in [
            ("pattern", &self.pattern_list),
            ("target", &self.target_list),
        ] {
            if list.len() > self.k {
                return Err(Error::Invalid(format!(
                    "{}: {name} list has {} entries, more than k = {}",
                    self.instance_id,
                    list.len(),
                    self.k
                )));
            }
            let mut seen = BTreeSet::new();
            for (i, (lemma, logit)) in list.iter().enumerate() {
                if !logit.is_finite() {
                    return Err(Error::Invalid(format!(
                        "{}: non-finite logit for `{lemma}` in {name} list",
                        self.instance_id
                    )));
                }
                if !seen.insert(lemma.as_str()) {
                    return Err(Error::Invalid(format!(
                        "{}: lemma `{lemma}` repeated in {name} list",
                        self.instance_id
                    )));
                }
                if i > 0 && list[i - 1].1 < *logit {
                    return Err(Error::Invalid(format!(
                        "{}: {name} list is not sorted by descending logit",
                        self.instance_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Header line of a substitutes file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstituteMeta {
    pub model: String,
    pub k: usize,
    pub ignore_bias: bool,
}

#[derive(Clone, Debug, Default)]
pub struct SubstituteSet {
    pub meta: Option<SubstituteMeta>,
    pub records: BTreeMap<String, SubstituteRecord>,
}

impl SubstituteSet {
    pub fn get(&self, instance_id: &str) -> Option<&SubstituteRecord> {
        self.records.get(instance_id)
    }
}

pub fn load_substitutes(path: impl AsRef<Path>) -> Result<SubstituteSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_substitutes(&text, path)
}

/// Parses substitutes JSONL. Header lines (`{"_meta": ...}`) may repeat when
/// shard outputs are concatenated, but must agree.
pub fn parse_substitutes(text: &str, origin: impl AsRef<Path>) -> Result<SubstituteSet> {
    #[derive(Deserialize)]
    struct Header {
        #[serde(rename = "_meta")]
        meta: SubstituteMeta,
    }

    let origin = origin.as_ref();
    let mut set = SubstituteSet::default();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: String| Error::parse(origin, line_no, m);
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| err(format!("malformed JSON: {e}")))?;
        if value.get("_meta").is_some() {
            let header: Header =
                serde_json::from_value(value).map_err(|e| err(format!("malformed header: {e}")))?;
            match &set.meta {
                Some(prev) if *prev != header.meta => {
                    return Err(err("header disagrees with an earlier header".into()))
                }
                _ => set.meta = Some(header.meta),
            }
            continue;
        }
        let rec: SubstituteRecord = serde_json::from_value(value)
            .map_err(|e| err(format!("malformed substitute record: {e}")))?;
        rec.validate().map_err(|e| err(e.to_string()))?;
        if set.records.contains_key(&rec.instance_id) {
            return Err(err(format!("duplicate instance id `{}`", rec.instance_id)));
        }
        set.records.insert(rec.instance_id.clone(), rec);
    }
    Ok(set)
}

pub fn render_substitutes(meta: Option<&SubstituteMeta>, records: &[SubstituteRecord]) -> String {
    let mut out = String::new();
    if let Some(meta) = meta {
        out.push_str(&serde_json::json!({ "_meta": meta }).to_string());
        out.push('\n');
    }
    for rec in records {
        out.push_str(&serde_json::to_string(rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn by_logit_then_lemma(a: &(String, f64), b: &(String, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Averages the pattern and vanilla logits over the union of their lemmas.
/// A lemma missing from one list takes that list's lowest retained logit.
/// With `use_pattern == false` the vanilla list is returned unchanged.
pub fn combine_logits(record: &SubstituteRecord, use_pattern: bool) -> Result<Vec<(String, f64)>> {
    if !use_pattern {
        return Ok(record.target_list.clone());
    }
    let floor = |list: &[(String, f64)], name: &str| {
        list.iter()
            .map(|(_, l)| *l)
            .reduce(f64::min)
            .ok_or_else(|| Error::Invalid(format!("{}: {name} list is empty", record.instance_id)))
    };
    let pattern_floor = floor(&record.pattern_list, "pattern")?;
    let target_floor = floor(&record.target_list, "target")?;

    let pattern: HashMap<&str, f64> = record
        .pattern_list
        .iter()
        .map(|(w, l)| (w.as_str(), *l))
        .collect();
    let target: HashMap<&str, f64> = record
        .target_list
        .iter()
        .map(|(w, l)| (w.as_str(), *l))
        .collect();
    let lemmas: BTreeSet<&str> = pattern.keys().chain(target.keys()).copied().collect();

    let mut out: Vec<(String, f64)> = lemmas
        .into_iter()
        .map(|w| {
            let p = pattern.get(w).copied().unwrap_or(pattern_floor);
            let t = target.get(w).copied().unwrap_or(target_floor);
            (w.to_string(), (p + t) / 2.0)
        })
        .collect();
    out.sort_by(by_logit_then_lemma);
    Ok(out)
}

/// A categorical distribution over substitute lemmas.
#[derive(Clone, Debug, PartialEq)]
pub struct SubstituteDistribution {
    support: Vec<(String, f64)>,
}

impl SubstituteDistribution {
    pub fn support(&self) -> &[(String, f64)] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn prob(&self, lemma: &str) -> f64 {
        self.support
            .iter()
            .find(|(w, _)| w == lemma)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn entropy(&self) -> f64 {
        -self.support.iter().map(|(_, p)| p * p.ln()).sum::<f64>()
    }
}

/// Keeps the `top_l` highest logits (ties by lemma), divides by the
/// temperature, and applies a softmax over the kept set.
pub fn to_distribution(
    logits: &[(String, f64)],
    temperature: f64,
    top_l: usize,
) -> Result<SubstituteDistribution> {
    if logits.is_empty() {
        return Err(Error::Invalid(
            "cannot build a distribution from no logits".into(),
        ));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if top_l == 0 {
        return Err(Error::Invalid("top_l must be >= 1".into()));
    }
    let mut sorted = logits.to_vec();
    sorted.sort_by(by_logit_then_lemma);
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        let mut names = BTreeSet::new();
        let dup = sorted
            .iter()
            .find(|(w, _)| !names.insert(w))
            .map(|(w, _)| w.clone());
        return Err(Error::Invalid(format!(
            "lemma `{}` repeated",
            dup.unwrap_or_default()
        )));
    }
    sorted.truncate(top_l);

    let max = sorted[0].1 / temperature;
    let weights: Vec<f64> = sorted
        .iter()
        .map(|(_, l)| (l / temperature - max).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    // Entries that underflow to exactly zero are dropped; the first entry
    // always has weight 1 so the support stays non-empty.
    let support = sorted
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w > 0.0)
        .map(|((lemma, _), w)| (lemma, w / total))
        .collect();
    Ok(SubstituteDistribution { support })
}

/// A de-duplicated bag of sampled substitute lemmas standing in for one
/// usage of the target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Representative {
    pub owner_instance: String,
    pub lemmas: BTreeSet<String>,
}

/// Draws `r` representatives of `n` samples each (with replacement).
pub fn sample_representatives<R: Rng + ?Sized>(
    dist: &SubstituteDistribution,
    owner_instance: &str,
    r: usize,
    n: usize,
    rng: &mut R,
) -> Vec<Representative> {
    if dist.is_empty() {
        return (0..r)
            .map(|_| Representative {
                owner_instance: owner_instance.to_string(),
                lemmas: BTreeSet::new(),
            })
            .collect();
    }
    let index = WeightedIndex::new(dist.support.iter().map(|(_, p)| *p))
        .expect("distribution weights are positive and finite");
    (0..r)
        .map(|_| Representative {
            owner_instance: owner_instance.to_string(),
            lemmas: (0..n)
                .map(|_| dist.support[rng.sample(&index)].0.clone())
                .collect(),
        })
        .collect()
}

/// Per-instance generator seeded from (global seed, instance id), so results
/// do not depend on processing order.
pub fn instance_rng(seed: u64, instance_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(instance_id.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(items: &[(&str, f64)]) -> Vec<(String, f64)> {
        items.iter().map(|(w, l)| (w.to_string(), *l)).collect()
    }

    fn record(pattern: &[(&str, f64)], target: &[(&str, f64)]) -> SubstituteRecord {
        SubstituteRecord {
            instance_id: "i".into(),
            k: 500,
            pattern_list: list(pattern),
            target_list: list(target),
        }
    }

    #[test]
    fn combine_symmetric_single() {
        let r = record(&[("black", 2.0)], &[("black", 2.0)]);
        assert_eq!(combine_logits(&r, true).unwrap(), list(&[("black", 2.0)]));
    }

    #[test]
    fn combine_without_pattern_is_identity() {
        let r = record(&[], &[("eyes", 5.0)]);
        assert_eq!(combine_logits(&r, false).unwrap(), list(&[("eyes", 5.0)]));
        assert!(combine_logits(&r, true).is_err());
    }

    #[test]
    fn combine_floor_imputation() {
        let r = record(&[("a", 2.0), ("b", 0.0)], &[("a", 4.0)]);
        assert_eq!(
            combine_logits(&r, true).unwrap(),
            list(&[("a", 3.0), ("b", 2.0)])
        );
    }

    #[test]
    fn combine_ties_lexicographic() {
        let r = record(&[("z", 1.0), ("a", 1.0)], &[("z", 1.0), ("a", 1.0)]);
        let got = combine_logits(&r, true).unwrap();
        assert_eq!(got[0].0, "a");
    }

    #[test]
    fn softmax_cases() {
        let d = to_distribution(&list(&[("a", 7.3)]), 1.25, 200).unwrap();
        assert_eq!(d.support(), &list(&[("a", 1.0)])[..]);

        let d = to_distribution(&list(&[("a", 0.0), ("b", 0.0)]), 3.0, 200).unwrap();
        assert_eq!(d.prob("a"), 0.5);
        assert_eq!(d.prob("b"), 0.5);

        let d = to_distribution(&list(&[("a", 2f64.ln()), ("b", 0.0)]), 1.0, 2).unwrap();
        assert!((d.prob("a") - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.prob("b") - 1.0 / 3.0).abs() < 1e-12);

        assert!(to_distribution(&[], 1.0, 1).is_err());
        assert!(to_distribution(&list(&[("a", 0.0), ("a", 1.0)]), 1.0, 5).is_err());
    }

    #[test]
    fn top_l_truncation_breaks_ties_by_lemma() {
        let d = to_distribution(&list(&[("c", 1.0), ("b", 1.0), ("a", 0.5)]), 1.0, 1).unwrap();
        assert_eq!(d.support(), &list(&[("b", 1.0)])[..]);
    }

    #[test]
    fn degenerate_and_empty_sampling() {
        let d = to_distribution(&list(&[("a", 1.0)]), 1.0, 10).unwrap();
        let mut rng = instance_rng(1, "x");
        let reps = sample_representatives(&d, "x", 15, 20, &mut rng);
        assert_eq!(reps.len(), 15);
        assert!(reps
            .iter()
            .all(|r| r.lemmas == BTreeSet::from(["a".to_string()])));
        assert!(sample_representatives(&d, "x", 0, 20, &mut rng).is_empty());
    }

    #[test]
    fn sampling_frequency_matches_distribution() {
        let d = to_distribution(&list(&[("a", 0.9f64.ln()), ("b", 0.1f64.ln())]), 1.0, 2).unwrap();
        let mut rng = instance_rng(7, "freq");
        // n = 1 keeps every draw visible after de-duplication.
        let reps = sample_representatives(&d, "x", 100_000, 1, &mut rng);
        let b = reps.iter().filter(|r| r.lemmas.contains("b")).count() as f64 / 1e5;
        assert!((b - 0.1).abs() < 0.005, "freq of b = {b}");
    }

    #[test]
    fn flat_distribution_fills_representatives() {
        let logits: Vec<(String, f64)> = (0..1000).map(|i| (format!("w{i:04}"), 0.0)).collect();
        let d = to_distribution(&logits, 1.0, 1000).unwrap();
        let mut rng = instance_rng(3, "flat");
        let reps = sample_representatives(&d, "x", 500, 20, &mut rng);
        let mean = reps.iter().map(|r| r.lemmas.len()).sum::<usize>() as f64 / 500.0;
        assert!(mean > 19.5, "mean representative size {mean}");
        assert!(reps.iter().all(|r| r.lemmas.len() <= 20));
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let d = to_distribution(&list(&[("a", 1.0), ("b", 0.5), ("c", 0.0)]), 1.0, 3).unwrap();
        let a = sample_representatives(&d, "x", 10, 5, &mut instance_rng(42, "x"));
        let b = sample_representatives(&d, "x", 10, 5, &mut instance_rng(42, "x"));
        let c = sample_representatives(&d, "x", 10, 5, &mut instance_rng(42, "y"));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn wire_parsing() {
        let text = concat!(
            r#"{"_meta": {"model": "bert-large-uncased", "k": 3, "ignore_bias": true}}"#,
            "\n",
            r#"{"instance_id": "d1", "k": 3, "pattern": [["cat", 2.5], ["dog", 1.0]], "target": [["eye", 3.0]]}"#,
            "\n",
        );
        let set = parse_substitutes(text, "s").unwrap();
        assert_eq!(set.meta.as_ref().unwrap().k, 3);
        let rec = set.get("d1").unwrap();
        assert_eq!(rec.pattern_list, list(&[("cat", 2.5), ("dog", 1.0)]));
        let back = parse_substitutes(
            &render_substitutes(set.meta.as_ref(), std::slice::from_ref(rec)),
            "s",
        )
        .unwrap();
        assert_eq!(back.get("d1"), Some(rec));
    }

    #[test]
    fn wire_rejects_bad_records() {
        let unsorted =
            r#"{"instance_id": "d", "k": 5, "pattern": [["a", 1.0], ["b", 2.0]], "target": []}"#;
        assert!(matches!(
            parse_substitutes(unsorted, "s"),
            Err(Error::Parse { line: 1, .. })
        ));
        let dup =
            r#"{"instance_id": "d", "k": 5, "pattern": [["a", 2.0], ["a", 1.0]], "target": []}"#;
        assert!(parse_substitutes(dup, "s").is_err());
        let long =
            r#"{"instance_id": "d", "k": 1, "pattern": [["a", 2.0], ["b", 1.0]], "target": []}"#;
        assert!(parse_substitutes(long, "s").is_err());
        let ok = r#"{"instance_id": "d", "k": 1, "pattern": [], "target": [["a", 1.0]]}"#;
        let twice = format!("{ok}\n{ok}\n");
        assert!(matches!(
            parse_substitutes(&twice, "s"),
            Err(Error::Parse { line: 2, .. })
        ));
        let h1 = r#"{"_meta": {"model": "m", "k": 1, "ignore_bias": true}}"#;
        let h2 = r#"{"_meta": {"model": "m", "k": 2, "ignore_bias": true}}"#;
        assert!(parse_substitutes(&format!("{h1}\n{h1}\n"), "s").is_ok());
        assert!(parse_substitutes(&format!("{h1}\n{h2}\n"), "s").is_err());
    }
}

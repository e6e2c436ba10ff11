//! PMI sense signatures and human-readable sense reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::clustering::HardClustering;
use crate::corpus::{GradedLabeling, Instance, TargetKey};
use crate::error::{Error, Result};
use crate::senses::SenseSolution;
use crate::substitution::Representative;

/// Lemmas seen in fewer representatives than this never enter a signature.
pub const MIN_LEMMA_COUNT: usize = 3;

/// Number of example sentences listed per sense in a report.
pub const REPORT_EXAMPLES: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignatureTerm {
    pub lemma: String,
    pub pmi: f64,
    /// Representatives of the sense containing the lemma.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SenseSignature {
    pub sense: usize,
    pub terms: Vec<SignatureTerm>,
}

/// Top-`size` lemmas of every sense by PMI with the sense, counting each
/// representative's lemma set once:
/// `PMI(w, s) = ln(C(w, s) * T / (C(w) * C(s)))`.
/// Ties rank the larger `C(w, s)` first, then the lemma.
pub fn pmi_signatures(
    rep_labels: &HardClustering,
    reps: &[Representative],
    size: usize,
) -> Result<Vec<SenseSignature>> {
    if rep_labels.len() != reps.len() {
        return Err(Error::Invalid(format!(
            "{} labels for {} representatives",
            rep_labels.len(),
            reps.len()
        )));
    }
    let k = rep_labels.k();
    let mut joint: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); k];
    let mut per_lemma: BTreeMap<&str, usize> = BTreeMap::new();
    let mut per_sense = vec![0usize; k];
    for (rep, &s) in reps.iter().zip(rep_labels.labels()) {
        for w in &rep.lemmas {
            *joint[s].entry(w.as_str()).or_insert(0) += 1;
            *per_lemma.entry(w.as_str()).or_insert(0) += 1;
            per_sense[s] += 1;
        }
    }
    let total: usize = per_sense.iter().sum();

    let mut out = Vec::with_capacity(k);
    for (s, counts) in joint.iter().enumerate() {
        let mut terms: Vec<SignatureTerm> = counts
            .iter()
            .filter(|(w, _)| per_lemma[*w] >= MIN_LEMMA_COUNT)
            .map(|(w, &c)| {
                let num = c as f64 * total as f64;
                let den = per_lemma[w] as f64 * per_sense[s] as f64;
                SignatureTerm {
                    lemma: w.to_string(),
                    pmi: (num / den).ln(),
                    count: c,
                }
            })
            .collect();
        terms.sort_by(|a, b| {
            b.pmi
                .total_cmp(&a.pmi)
                .then(b.count.cmp(&a.count))
                .then_with(|| a.lemma.cmp(&b.lemma))
        });
        terms.truncate(size);
        out.push(SenseSignature { sense: s, terms });
    }
    Ok(out)
}

/// Per-sense facts a report is built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SenseSummary {
    pub sense: usize,
    pub dominance: usize,
    pub representatives: usize,
    pub signature: Vec<SignatureTerm>,
}

/// Pairs each sense of a solution with its signature.
pub fn summarize(solution: &SenseSolution, signatures: &[SenseSignature]) -> Vec<SenseSummary> {
    let sizes = solution.rep_labels.members();
    let sigs: BTreeMap<usize, &SenseSignature> = signatures.iter().map(|s| (s.sense, s)).collect();
    (0..solution.n_senses())
        .map(|s| SenseSummary {
            sense: s,
            dominance: solution.dominance.get(&s).copied().unwrap_or(0),
            representatives: sizes[s].len(),
            signature: sigs
                .get(&s)
                .map(|sig| sig.terms.clone())
                .unwrap_or_default(),
        })
        .collect()
}

/// Machine-readable form of one report section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SenseReport {
    pub target: String,
    pub sense: String,
    pub dominance: usize,
    pub representatives: usize,
    pub signature: Vec<(String, f64)>,
    pub examples: Vec<ReportExample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportExample {
    pub instance_id: String,
    pub weight: f64,
    pub text: String,
}

pub fn sense_name(sense: usize) -> String {
    format!("s{sense}")
}

/// Inverse of [`sense_name`].
pub fn parse_sense_name(name: &str) -> Option<usize> {
    name.strip_prefix('s')?.parse().ok()
}

/// One [`SenseReport`] per sense. Examples are the instances with the
/// highest weight on the sense (ties by instance id).
pub fn report_records(
    target: &TargetKey,
    senses: &[SenseSummary],
    instance_labels: &GradedLabeling<usize>,
    instances: &[Instance],
) -> Vec<SenseReport> {
    let by_id: BTreeMap<&str, &Instance> = instances
        .iter()
        .map(|i| (i.instance_id.as_str(), i))
        .collect();
    senses
        .iter()
        .map(|sense| {
            let mut members: Vec<(&String, f64)> = instance_labels
                .iter()
                .filter_map(|(id, w)| w.get(&sense.sense).map(|&x| (id, x)))
                .collect();
            members.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            let examples = members
                .into_iter()
                .take(REPORT_EXAMPLES)
                .map(|(id, weight)| ReportExample {
                    instance_id: id.clone(),
                    weight,
                    text: by_id
                        .get(id.as_str())
                        .map_or_else(String::new, |i| i.bracketed()),
                })
                .collect();
            SenseReport {
                target: target.to_string(),
                sense: sense_name(sense.sense),
                dominance: sense.dominance,
                representatives: sense.representatives,
                signature: sense
                    .signature
                    .iter()
                    .map(|t| (t.lemma.clone(), t.pmi))
                    .collect(),
                examples,
            }
        })
        .collect()
}

/// Plain-text report for one target.
pub fn render_report(
    target: &TargetKey,
    senses: &[SenseSummary],
    instance_labels: &GradedLabeling<usize>,
    instances: &[Instance],
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "target: {target}");
    if instance_labels.is_empty() {
        out.push_str("no instances\n");
        return out;
    }
    let _ = writeln!(
        out,
        "instances: {}  senses: {}",
        instance_labels.len(),
        senses.len()
    );
    for rec in report_records(target, senses, instance_labels, instances) {
        let _ = writeln!(
            out,
            "\n{}  dominates {} instance(s), {} representative(s)",
            rec.sense, rec.dominance, rec.representatives
        );
        let sig: Vec<String> = rec
            .signature
            .iter()
            .map(|(w, pmi)| format!("{w} ({pmi:.3})"))
            .collect();
        let _ = writeln!(
            out,
            "  signature: {}",
            if sig.is_empty() {
                "-".to_string()
            } else {
                sig.join(", ")
            }
        );
        for ex in &rec.examples {
            let _ = writeln!(out, "  {:.3}  {}  {}", ex.weight, ex.instance_id, ex.text);
        }
    }
    out
}

pub fn render_report_jsonl(records: &[SenseReport]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("report serializes") + "\n")
        .collect()
}

/// Lemmas appearing in representatives of each sense.
pub fn sense_vocabulary(
    rep_labels: &HardClustering,
    reps: &[Representative],
) -> Vec<BTreeSet<String>> {
    let mut out = vec![BTreeSet::new(); rep_labels.k()];
    for (rep, &s) in reps.iter().zip(rep_labels.labels()) {
        out[s].extend(rep.lemmas.iter().cloned());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{RepMatrix, SparseVec};
    use crate::senses::finalize;

    fn rep(lemmas: &[&str]) -> Representative {
        Representative {
            owner_instance: "x".into(),
            lemmas: lemmas.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn hand_counts() {
        // C(a, s0) = 4, C(a, s1) = 0, C(b, s0) = 2, C(b, s1) = 2.
        let reps = vec![
            rep(&["a", "b"]),
            rep(&["a", "b"]),
            rep(&["a"]),
            rep(&["a"]),
            rep(&["b"]),
            rep(&["b"]),
        ];
        let h = HardClustering::new(vec![0, 0, 0, 0, 1, 1], 2).unwrap();
        let sigs = pmi_signatures(&h, &reps, 10).unwrap();
        // T = 8, C(s0) = 6, C(s1) = 2, C(a) = 4, C(b) = 4.
        let s0 = &sigs[0].terms;
        assert_eq!(s0[0].lemma, "a");
        assert!((s0[0].pmi - (4.0f64 * 8.0 / (4.0 * 6.0)).ln()).abs() < 1e-12);
        assert_eq!(s0[1].lemma, "b");
        assert!((s0[1].pmi - (2.0f64 * 8.0 / (4.0 * 6.0)).ln()).abs() < 1e-12);
        // exclusive lemma: PMI = ln(T / C(s))
        assert!((s0[0].pmi - (8.0f64 / 6.0).ln()).abs() < 1e-12);
        assert_eq!(sigs[1].terms.len(), 1);
        assert_eq!(sigs[1].terms[0].lemma, "b");
    }

    #[test]
    fn proportional_lemma_has_zero_pmi() {
        // s0 has 3 reps, s1 has 1 rep of {c, d}; "c" appears in all.
        let reps = vec![
            rep(&["c", "d"]),
            rep(&["c", "d"]),
            rep(&["c", "d"]),
            rep(&["c", "d"]),
        ];
        let h = HardClustering::new(vec![0, 0, 0, 1], 2).unwrap();
        let sigs = pmi_signatures(&h, &reps, 10).unwrap();
        for sig in &sigs {
            for t in &sig.terms {
                assert!(t.pmi.abs() < 1e-9, "{t:?}");
            }
        }
    }

    #[test]
    fn rare_lemmas_and_truncation() {
        let reps = vec![
            rep(&["a", "rare"]),
            rep(&["a", "b"]),
            rep(&["a", "b"]),
            rep(&["b"]),
        ];
        let h = HardClustering::new(vec![0, 0, 0, 0], 1).unwrap();
        let sigs = pmi_signatures(&h, &reps, 1).unwrap();
        assert_eq!(sigs[0].terms.len(), 1);
        assert!(sigs[0].terms.iter().all(|t| t.lemma != "rare"));
        // equal PMI (0) -> higher count, then lexicographic
        assert_eq!(sigs[0].terms[0].lemma, "a");
        assert!(pmi_signatures(&h, &reps[1..], 1).is_err());
    }

    fn solution_for(owners: &[&str], k: usize, labels: Vec<usize>) -> SenseSolution {
        let m = RepMatrix {
            rows: owners
                .iter()
                .map(|_| SparseVec::from_dense(&[1.0]))
                .collect(),
            row_owner: owners.iter().map(|s| s.to_string()).collect(),
            dim: 1,
        };
        finalize(HardClustering::new(labels, k).unwrap(), &m.row_owner, &m).unwrap()
    }

    #[test]
    fn reports() {
        let t = TargetKey::new("warm", "ADJ").unwrap();
        let none = render_report(&t, &[], &GradedLabeling::new(), &[]);
        assert_eq!(none, "target: warm.ADJ\nno instances\n");

        let ids = ["i1", "i2", "i3", "i4", "i5", "i6", "i7"];
        let instances: Vec<Instance> = ids
            .iter()
            .map(|id| {
                Instance::new(
                    *id,
                    t.clone(),
                    vec!["a".into(), "warm".into(), "day".into()],
                    1,
                )
                .unwrap()
            })
            .collect();
        let sol = solution_for(&ids, 1, vec![0; 7]);
        let senses = summarize(&sol, &[]);
        let text = render_report(&t, &senses, &sol.instance_labels, &instances);
        assert!(text.contains("s0  dominates 7 instance(s)"));
        assert_eq!(text.matches("a [warm] day").count(), REPORT_EXAMPLES);
        assert_eq!(
            text,
            render_report(&t, &senses, &sol.instance_labels, &instances)
        );

        let recs = report_records(&t, &senses, &sol.instance_labels, &instances);
        let jsonl = render_report_jsonl(&recs);
        let back: Vec<SenseReport> = jsonl
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(back, recs);
        assert_eq!(parse_sense_name(&sense_name(12)), Some(12));
        assert_eq!(parse_sense_name("x1"), None);
    }
}

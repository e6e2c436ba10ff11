//! Planted-sense corpora for testing and benchmarking.
//!
//! Every sense owns a disjoint set of substitute lemmas. Instances of a sense
//! share one sense-level logit profile over that set, perturbed by small
//! per-instance noise, and the pattern and vanilla lists are identical.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{GradedLabeling, Instance, TargetKey};
use crate::substitution::{SubstituteMeta, SubstituteRecord, SubstituteSet};

#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub targets: usize,
    pub senses: usize,
    pub instances_per_sense: usize,
    pub support_size: usize,
    /// Maximum absolute per-instance logit perturbation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            targets: 1,
            senses: 3,
            instances_per_sense: 10,
            support_size: 50,
            noise: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub instances: Vec<Instance>,
    pub substitutes: SubstituteSet,
    /// Planted senses, named `g0, g1, ...` per target.
    pub gold: GradedLabeling<String>,
    pub targets: BTreeMap<String, TargetKey>,
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut corpus = SyntheticCorpus {
        instances: Vec::new(),
        substitutes: SubstituteSet {
            meta: Some(SubstituteMeta {
                model: "synthetic".to_string(),
                k: spec.support_size,
                ignore_bias: true,
            }),
            records: BTreeMap::new(),
        },
        gold: GradedLabeling::new(),
        targets: BTreeMap::new(),
    };
    for t in 0..spec.targets {
        let lemma = format!("synth{t}");
        let target = TargetKey::new(&lemma, "n").expect("valid synthetic target");
        let profiles: Vec<Vec<(String, f64)>> = (0..spec.senses)
            .map(|s| {
                (0..spec.support_size)
                    .map(|j| {
                        (
                            format!("{lemma}s{s}w{j:03}"),
                            8.0 - 0.25 * j as f64 + rng.random_range(-0.5..0.5),
                        )
                    })
                    .collect()
            })
            .collect();
        let n = spec.senses * spec.instances_per_sense;
        for i in 0..n {
            let sense = i % spec.senses;
            let id = format!("{lemma}.{i:04}");
            let tokens = vec!["a".to_string(), lemma.clone(), "here".to_string()];
            corpus.instances.push(
                Instance::new(id.clone(), target.clone(), tokens, 1)
                    .expect("valid synthetic instance"),
            );
            let mut list: Vec<(String, f64)> = profiles[sense]
                .iter()
                .map(|(w, x)| (w.clone(), x + rng.random_range(-spec.noise..=spec.noise)))
                .collect();
            list.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            corpus.substitutes.records.insert(
                id.clone(),
                SubstituteRecord {
                    instance_id: id.clone(),
                    k: spec.support_size,
                    pattern_list: list.clone(),
                    target_list: list,
                },
            );
            corpus
                .gold
                .insert(id.clone(), BTreeMap::from([(format!("g{sense}"), 1.0)]))
                .expect("fresh synthetic instance");
            corpus.targets.insert(id, target.clone());
        }
    }
    corpus
}

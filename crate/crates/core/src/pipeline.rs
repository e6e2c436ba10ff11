//! End-to-end induction over every target of a corpus, plus the on-disk
//! layout of a solution directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{agglomerate_traced, tfidf, vectorize, Vocabulary};
use crate::corpus::{
    group_by_target, load_instances, load_key_file, write_instances, GradedLabeling, Instance,
    KeyFormat, PipelineConfig, TargetKey,
};
use crate::error::{Error, Result};
use crate::interpret::{
    parse_sense_name, pmi_signatures, sense_name, summarize, SenseSummary, SignatureTerm,
};
use crate::senses::{harden, resolve_senses, SenseSolution};
use crate::substitution::{
    combine_logits, instance_rng, sample_representatives, to_distribution, Representative,
    SubstituteSet,
};

pub const KEY_FILE: &str = "senses.key";
pub const HARD_KEY_FILE: &str = "senses.hard.key";
pub const SIGNATURES_FILE: &str = "signatures.jsonl";
pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything induced for one target.
#[derive(Clone, Debug)]
pub struct TargetSolution {
    pub target: TargetKey,
    pub instances: Vec<Instance>,
    pub representatives: Vec<Representative>,
    /// Number of clusters the agglomeration stopped at.
    pub initial_senses: usize,
    pub merge_distances: Vec<f64>,
    pub solution: SenseSolution,
    pub senses: Vec<SenseSummary>,
}

/// Induces senses for the instances of a single target.
///
/// `oracle_k`, when given, fixes the number of clusters and disables the
/// weak-sense merge.
pub fn induce_target(
    target: &TargetKey,
    instances: &[Instance],
    substitutes: &SubstituteSet,
    config: &PipelineConfig,
    oracle_k: Option<usize>,
) -> Result<TargetSolution> {
    if instances.is_empty() {
        return Err(Error::Invalid(format!("target {target} has no instances")));
    }
    let mut reps = Vec::with_capacity(instances.len() * config.reps_per_instance);
    for inst in instances {
        let record =
            substitutes
                .get(&inst.instance_id)
                .ok_or_else(|| Error::MissingSubstitutes {
                    target: target.to_string(),
                    count: 1,
                    ids: inst.instance_id.clone(),
                })?;
        let logits = combine_logits(record, config.use_pattern)?;
        let dist = to_distribution(&logits, config.temperature, config.top_l)?;
        let mut rng = instance_rng(config.seed, &inst.instance_id);
        reps.extend(sample_representatives(
            &dist,
            &inst.instance_id,
            config.reps_per_instance,
            config.samples_per_rep,
            &mut rng,
        ));
    }
    let vocab = Vocabulary::from_representatives(&reps);
    let matrix = tfidf(&vectorize(&reps, &vocab)?);
    let k = oracle_k
        .unwrap_or(config.max_senses)
        .clamp(1, matrix.n_rows());
    let agglomeration = agglomerate_traced(&matrix, k)?;
    let dynamic = config.dynamic_senses && oracle_k.is_none();
    let solution = resolve_senses(
        agglomeration.clustering,
        &matrix,
        config.min_dominated,
        dynamic,
    )?;
    let signatures = pmi_signatures(&solution.rep_labels, &reps, config.signature_size)?;
    let senses = summarize(&solution, &signatures);
    Ok(TargetSolution {
        target: target.clone(),
        instances: instances.to_vec(),
        representatives: reps,
        initial_senses: k,
        merge_distances: agglomeration.merge_distances,
        solution,
        senses,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedTarget {
    pub target: String,
    pub missing: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct InduceOptions {
    pub config: PipelineConfig,
    /// Oracle sense counts per target.
    pub gold_k: BTreeMap<TargetKey, usize>,
    /// Missing substitutes become an error instead of a skipped target.
    pub strict: bool,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
}

#[derive(Clone, Debug)]
pub struct Induction {
    /// Sorted by target.
    pub targets: Vec<TargetSolution>,
    pub skipped: Vec<SkippedTarget>,
}

/// Runs induction on every target. Targets are processed in parallel and
/// collected in sorted target order.
pub fn induce(
    instances: &[Instance],
    substitutes: &SubstituteSet,
    options: &InduceOptions,
) -> Result<Induction> {
    options.config.validate()?;
    let groups = group_by_target(instances);
    let mut runnable = Vec::new();
    let mut skipped = Vec::new();
    for (target, group) in groups {
        let missing: Vec<String> = group
            .iter()
            .filter(|i| substitutes.get(&i.instance_id).is_none())
            .map(|i| i.instance_id.clone())
            .collect();
        if missing.is_empty() {
            runnable.push((target, group));
        } else if options.strict {
            return Err(Error::MissingSubstitutes {
                target: target.to_string(),
                count: missing.len(),
                ids: missing.join(", "),
            });
        } else {
            skipped.push(SkippedTarget {
                target: target.to_string(),
                missing,
            });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let targets = pool.install(|| {
        runnable
            .par_iter()
            .map(|(target, group)| {
                induce_target(
                    target,
                    group,
                    substitutes,
                    &options.config,
                    options.gold_k.get(target).copied(),
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Induction { targets, skipped })
}

impl Induction {
    /// Graded key over all induced targets, senses named `s0, s1, ...`.
    pub fn graded_key(&self) -> (GradedLabeling<String>, BTreeMap<String, TargetKey>) {
        self.key_with(|l| l.clone())
    }

    pub fn hard_key(&self) -> (GradedLabeling<String>, BTreeMap<String, TargetKey>) {
        self.key_with(harden)
    }

    fn key_with(
        &self,
        f: impl Fn(&GradedLabeling<usize>) -> GradedLabeling<usize>,
    ) -> (GradedLabeling<String>, BTreeMap<String, TargetKey>) {
        let mut labeling = GradedLabeling::new();
        let mut targets = BTreeMap::new();
        for t in &self.targets {
            for (id, weights) in f(&t.solution.instance_labels).iter() {
                let named = weights.iter().map(|(s, w)| (sense_name(*s), *w)).collect();
                labeling
                    .insert(id.clone(), named)
                    .expect("instance ids are unique across targets");
                targets.insert(id.clone(), t.target.clone());
            }
        }
        (labeling, targets)
    }

    pub fn signature_records(&self) -> Vec<SignatureRecord> {
        self.targets
            .iter()
            .flat_map(|t| {
                t.senses.iter().map(|s| SignatureRecord {
                    target: t.target.to_string(),
                    sense: sense_name(s.sense),
                    dominance: s.dominance,
                    representatives: s.representatives,
                    signature: s.signature.clone(),
                })
            })
            .collect()
    }

    pub fn sense_counts(&self) -> BTreeMap<String, TargetCounts> {
        self.targets
            .iter()
            .map(|t| {
                (
                    t.target.to_string(),
                    TargetCounts {
                        instances: t.instances.len(),
                        initial_senses: t.initial_senses,
                        senses: t.solution.n_senses(),
                    },
                )
            })
            .collect()
    }
}

/// One line of `signatures.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignatureRecord {
    pub target: String,
    pub sense: String,
    pub dominance: usize,
    pub representatives: usize,
    pub signature: Vec<SignatureTerm>,
}

pub fn render_signatures(records: &[SignatureRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("signature record serializes") + "\n")
        .collect()
}

pub fn parse_signatures(text: &str, origin: impl AsRef<Path>) -> Result<Vec<SignatureRecord>> {
    let origin = origin.as_ref();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse(origin, i + 1, e.to_string()))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetCounts {
    pub instances: usize,
    pub initial_senses: usize,
    pub senses: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_ms: u64,
}

/// Record of one `induce` run. Everything except `timing` is a function of
/// the inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: PipelineConfig,
    pub seed: u64,
    pub hard: bool,
    pub strict: bool,
    /// SHA-256 of every input file, by role.
    pub inputs: BTreeMap<String, String>,
    pub targets: BTreeMap<String, TargetCounts>,
    pub skipped: Vec<SkippedTarget>,
    pub outputs: Vec<String>,
    pub timing: Timing,
}

/// Inputs of a file-based `induce` run.
#[derive(Clone, Debug)]
pub struct InduceRequest {
    pub instances: PathBuf,
    pub substitutes: PathBuf,
    pub gold_k: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub options: InduceOptions,
    pub hard: bool,
}

#[derive(Clone, Debug)]
pub struct InduceReport {
    pub manifest: RunManifest,
    pub warnings: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses a gold sense-count file: one `lemma.pos count` pair per line,
/// `#` comments allowed.
pub fn parse_gold_k(text: &str, origin: impl AsRef<Path>) -> Result<BTreeMap<TargetKey, usize>> {
    let origin = origin.as_ref();
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [target, count] = fields[..] else {
            return Err(Error::parse(origin, idx + 1, "expected `lemma.pos count`"));
        };
        let target: TargetKey = target
            .parse()
            .map_err(|e: Error| Error::parse(origin, idx + 1, e.to_string()))?;
        let count: usize = count.parse().ok().filter(|&c| c > 0).ok_or_else(|| {
            Error::parse(origin, idx + 1, format!("invalid sense count `{count}`"))
        })?;
        if out.insert(target.clone(), count).is_some() {
            return Err(Error::parse(
                origin,
                idx + 1,
                format!("duplicate target {target}"),
            ));
        }
    }
    Ok(out)
}

/// Loads inputs, induces every target and writes the solution directory.
pub fn run_induce(request: &InduceRequest) -> Result<InduceReport> {
    let started = Instant::now();
    let mut inputs = BTreeMap::new();

    let instance_bytes = read(&request.instances)?;
    inputs.insert("instances".to_string(), sha256_hex(&instance_bytes));
    let instances = crate::corpus::parse_instances(
        &String::from_utf8_lossy(&instance_bytes),
        &request.instances,
    )?;

    let sub_bytes = read(&request.substitutes)?;
    inputs.insert("substitutes".to_string(), sha256_hex(&sub_bytes));
    let substitutes = crate::substitution::parse_substitutes(
        &String::from_utf8_lossy(&sub_bytes),
        &request.substitutes,
    )?;

    let mut options = request.options.clone();
    if let Some(path) = &request.gold_k {
        let bytes = read(path)?;
        inputs.insert("gold_k".to_string(), sha256_hex(&bytes));
        options.gold_k = parse_gold_k(&String::from_utf8_lossy(&bytes), path)?;
    }

    let induction = induce(&instances, &substitutes, &options)?;
    let mut warnings: Vec<String> = induction
        .skipped
        .iter()
        .map(|s| {
            format!(
                "skipped {}: missing substitutes for {} instance(s): {}",
                s.target,
                s.missing.len(),
                s.missing.join(", ")
            )
        })
        .collect();
    let induced: Vec<&TargetKey> = induction.targets.iter().map(|t| &t.target).collect();
    for target in options.gold_k.keys() {
        if !induced.contains(&target) {
            warnings.push(format!(
                "gold sense count given for {target}, which was not induced"
            ));
        }
    }

    fs::create_dir_all(&request.out_dir).map_err(|e| Error::io(&request.out_dir, e))?;
    let out = |name: &str| request.out_dir.join(name);
    let mut outputs = vec![KEY_FILE.to_string()];

    let (graded, targets) = induction.graded_key();
    write(
        &out(KEY_FILE),
        &crate::corpus::render_key_file(&graded, &targets)?,
    )?;
    if request.hard {
        let (hard, targets) = induction.hard_key();
        write(
            &out(HARD_KEY_FILE),
            &crate::corpus::render_key_file(&hard, &targets)?,
        )?;
        outputs.push(HARD_KEY_FILE.to_string());
    }
    write(
        &out(SIGNATURES_FILE),
        &render_signatures(&induction.signature_records()),
    )?;
    outputs.push(SIGNATURES_FILE.to_string());
    let kept: Vec<Instance> = induction
        .targets
        .iter()
        .flat_map(|t| t.instances.iter().cloned())
        .collect();
    write_instances(&kept, out(INSTANCES_FILE))?;
    outputs.push(INSTANCES_FILE.to_string());
    outputs.push(MANIFEST_FILE.to_string());

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: options.config.clone(),
        seed: options.config.seed,
        hard: request.hard,
        strict: options.strict,
        inputs,
        targets: induction.sense_counts(),
        skipped: induction.skipped.clone(),
        outputs,
        timing: Timing {
            elapsed_ms: started.elapsed().as_millis() as u64,
        },
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write(&out(MANIFEST_FILE), &json)?;
    Ok(InduceReport { manifest, warnings })
}

/// A solution directory loaded back for inspection.
#[derive(Clone, Debug)]
pub struct StoredSolution {
    pub labels: BTreeMap<TargetKey, GradedLabeling<usize>>,
    pub senses: BTreeMap<TargetKey, Vec<SenseSummary>>,
    pub instances: BTreeMap<TargetKey, Vec<Instance>>,
}

impl StoredSolution {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let key_path = dir.join(KEY_FILE);
        let key = load_key_file(&key_path, KeyFormat::default())?;
        let mut labels: BTreeMap<TargetKey, GradedLabeling<usize>> = BTreeMap::new();
        for (id, weights) in key.labeling.iter() {
            let target = key.targets[id].clone();
            let mut parsed = BTreeMap::new();
            for (name, &w) in weights {
                let s = parse_sense_name(name).ok_or_else(|| {
                    Error::Invalid(format!(
                        "{}: unexpected sense id `{name}`",
                        key_path.display()
                    ))
                })?;
                parsed.insert(s, w);
            }
            labels
                .entry(target)
                .or_default()
                .insert(id.clone(), parsed)?;
        }

        let sig_path = dir.join(SIGNATURES_FILE);
        let text = fs::read_to_string(&sig_path).map_err(|e| Error::io(&sig_path, e))?;
        let mut senses: BTreeMap<TargetKey, Vec<SenseSummary>> = BTreeMap::new();
        for rec in parse_signatures(&text, &sig_path)? {
            let target: TargetKey = rec.target.parse()?;
            let sense = parse_sense_name(&rec.sense).ok_or_else(|| {
                Error::Invalid(format!(
                    "{}: unexpected sense id `{}`",
                    sig_path.display(),
                    rec.sense
                ))
            })?;
            senses.entry(target).or_default().push(SenseSummary {
                sense,
                dominance: rec.dominance,
                representatives: rec.representatives,
                signature: rec.signature,
            });
        }

        let instances = group_by_target(&load_instances(dir.join(INSTANCES_FILE))?);
        Ok(StoredSolution {
            labels,
            senses,
            instances,
        })
    }

    pub fn targets(&self) -> impl Iterator<Item = &TargetKey> {
        self.senses.keys()
    }

    /// Plain-text report for one target, `None` when the target is unknown.
    pub fn report(&self, target: &TargetKey) -> Option<String> {
        let senses = self.senses.get(target)?;
        let empty = GradedLabeling::new();
        let labels = self.labels.get(target).unwrap_or(&empty);
        let instances = self.instances.get(target).map(Vec::as_slice).unwrap_or(&[]);
        Some(crate::interpret::render_report(
            target, senses, labels, instances,
        ))
    }

    pub fn report_jsonl(&self, target: &TargetKey) -> Option<String> {
        let senses = self.senses.get(target)?;
        let empty = GradedLabeling::new();
        let labels = self.labels.get(target).unwrap_or(&empty);
        let instances = self.instances.get(target).map(Vec::as_slice).unwrap_or(&[]);
        let records = crate::interpret::report_records(target, senses, labels, instances);
        Some(crate::interpret::render_report_jsonl(&records))
    }
}

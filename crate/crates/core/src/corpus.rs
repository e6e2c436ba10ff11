//! Data model for targets, instances and graded sense labelings, plus the
//! instance JSONL, key-file and configuration formats.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A lemma + part-of-speech pair, rendered as `lemma.pos`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TargetKey {
    lemma: String,
    pos: String,
}

impl TargetKey {
    /// Lowercases the lemma. POS tags are kept verbatim since datasets use
    /// different tag inventories.
    pub fn new(lemma: &str, pos: &str) -> Result<Self> {
        let lemma = lemma.trim().to_lowercase();
        let pos = pos.trim().to_string();
        if lemma.is_empty() {
            return Err(Error::Invalid("target lemma is empty".into()));
        }
        if pos.is_empty() {
            return Err(Error::Invalid(format!("target `{lemma}` has an empty POS")));
        }
        if lemma.chars().any(char::is_whitespace) || pos.chars().any(char::is_whitespace) {
            return Err(Error::Invalid(format!(
                "target `{lemma}.{pos}` contains whitespace"
            )));
        }
        Ok(TargetKey { lemma, pos })
    }

    pub fn lemma(&self) -> &str {
        &self.lemma
    }

    pub fn pos(&self) -> &str {
        &self.pos
    }
}

impl fmt::Display for TargetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.lemma, self.pos)
    }
}

impl FromStr for TargetKey {
    type Err = Error;

    /// Splits on the last dot, so lemmas may themselves contain dots.
    fn from_str(s: &str) -> Result<Self> {
        let (lemma, pos) = s
            .rsplit_once('.')
            .ok_or_else(|| Error::Invalid(format!("target `{s}` is not of the form lemma.pos")))?;
        TargetKey::new(lemma, pos)
    }
}

/// One tokenized sentence with a marked occurrence of the target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub instance_id: String,
    pub target: TargetKey,
    pub tokens: Vec<String>,
    pub target_index: usize,
}

impl Instance {
    pub fn new(
        instance_id: impl Into<String>,
        target: TargetKey,
        tokens: Vec<String>,
        target_index: usize,
    ) -> Result<Self> {
        let instance_id = instance_id.into();
        if instance_id.is_empty() || instance_id.chars().any(char::is_whitespace) {
            return Err(Error::Invalid(format!(
                "instance id `{instance_id}` is empty or contains whitespace"
            )));
        }
        if tokens.is_empty() {
            return Err(Error::Invalid(format!(
                "instance {instance_id} has no tokens"
            )));
        }
        if target_index >= tokens.len() {
            return Err(Error::Invalid(format!(
                "instance {instance_id}: target_index {target_index} out of range for {} tokens",
                tokens.len()
            )));
        }
        Ok(Instance {
            instance_id,
            target,
            tokens,
            target_index,
        })
    }

    pub fn target_token(&self) -> &str {
        &self.tokens[self.target_index]
    }

    /// Sentence text with the target token in square brackets.
    pub fn bracketed(&self) -> String {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if i == self.target_index {
                    format!("[{t}]")
                } else {
                    t.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Wire shape of one line of an instances file.
#[derive(Debug, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance_id: String,
    pub lemma: String,
    pub pos: String,
    pub tokens: Vec<String>,
    pub target_index: i64,
}

impl From<&Instance> for InstanceRecord {
    fn from(inst: &Instance) -> Self {
        InstanceRecord {
            instance_id: inst.instance_id.clone(),
            lemma: inst.target.lemma().to_string(),
            pos: inst.target.pos().to_string(),
            tokens: inst.tokens.clone(),
            target_index: inst.target_index as i64,
        }
    }
}

pub fn load_instances(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instances(&text, path)
}

/// Parses instances JSONL. `origin` only labels error messages.
pub fn parse_instances(text: &str, origin: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let origin = origin.as_ref();
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord = serde_json::from_str(line).map_err(|e| {
            Error::parse(origin, line_no, format!("malformed instance record: {e}"))
        })?;
        let target = TargetKey::new(&rec.lemma, &rec.pos)
            .map_err(|e| Error::parse(origin, line_no, e.to_string()))?;
        if rec.target_index < 0 {
            return Err(Error::parse(
                origin,
                line_no,
                format!("target_index {} is negative", rec.target_index),
            ));
        }
        let inst = Instance::new(
            rec.instance_id,
            target,
            rec.tokens,
            rec.target_index as usize,
        )
        .map_err(|e| Error::parse(origin, line_no, e.to_string()))?;
        if let Some(first) = seen.insert(inst.instance_id.clone(), line_no) {
            return Err(Error::parse(
                origin,
                line_no,
                format!(
                    "duplicate instance id `{}` (first seen on line {first})",
                    inst.instance_id
                ),
            ));
        }
        out.push(inst);
    }
    Ok(out)
}

pub fn write_instances(instances: &[Instance], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    for inst in instances {
        let line = serde_json::to_string(&InstanceRecord::from(inst))
            .map_err(|e| Error::Invalid(e.to_string()))?;
        buf.push_str(&line);
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Groups instances by target; groups keep input order.
pub fn group_by_target(instances: &[Instance]) -> BTreeMap<TargetKey, Vec<Instance>> {
    let mut groups: BTreeMap<TargetKey, Vec<Instance>> = BTreeMap::new();
    for inst in instances {
        groups
            .entry(inst.target.clone())
            .or_default()
            .push(inst.clone());
    }
    groups
}

/// Per-instance distributions over sense ids.
///
/// The sense-id type is generic: the induction pipeline works with integer
/// cluster ids, key files with arbitrary strings. "Lower sense id" in tie
/// rules means the `Ord` order of `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedLabeling<S: Ord = String> {
    entries: BTreeMap<String, BTreeMap<S, f64>>,
}

impl<S: Ord> Default for GradedLabeling<S> {
    fn default() -> Self {
        GradedLabeling {
            entries: BTreeMap::new(),
        }
    }
}

impl<S: Ord + Clone> GradedLabeling<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts one instance, dropping zero weights and normalizing the rest
    /// to sum 1. Fails on negative/non-finite weights, an all-zero map, or a
    /// repeated instance.
    pub fn insert(
        &mut self,
        instance_id: impl Into<String>,
        weights: BTreeMap<S, f64>,
    ) -> Result<()> {
        let instance_id = instance_id.into();
        if self.entries.contains_key(&instance_id) {
            return Err(Error::Invalid(format!(
                "instance `{instance_id}` labeled twice"
            )));
        }
        let mut total = 0.0;
        for &w in weights.values() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Invalid(format!(
                    "instance `{instance_id}` has invalid weight {w}"
                )));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(Error::Invalid(format!(
                "instance `{instance_id}` has no positive sense weight"
            )));
        }
        let normalized = weights
            .into_iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|(s, w)| (s, w / total))
            .collect();
        self.entries.insert(instance_id, normalized);
        Ok(())
    }

    pub fn get(&self, instance_id: &str) -> Option<&BTreeMap<S, f64>> {
        self.entries.get(instance_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeMap<S, f64>)> {
        self.entries.iter()
    }

    pub fn instance_ids(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn contains(&self, instance_id: &str) -> bool {
        self.entries.contains_key(instance_id)
    }

    /// Distinct sense ids with positive weight on any instance.
    pub fn senses(&self) -> std::collections::BTreeSet<S> {
        self.entries
            .values()
            .flat_map(|m| m.keys().cloned())
            .collect()
    }

    /// Renames sense ids. Colliding renames have their weights summed.
    pub fn map_senses<T: Ord + Clone>(&self, mut f: impl FnMut(&S) -> T) -> GradedLabeling<T> {
        let entries = self
            .entries
            .iter()
            .map(|(id, m)| {
                let mut out: BTreeMap<T, f64> = BTreeMap::new();
                for (s, &w) in m {
                    *out.entry(f(s)).or_insert(0.0) += w;
                }
                (id.clone(), out)
            })
            .collect();
        GradedLabeling { entries }
    }

    /// Keeps only the given instances.
    pub fn restrict<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> GradedLabeling<S> {
        let entries = ids
            .into_iter()
            .filter_map(|id| self.entries.get(id).map(|m| (id.clone(), m.clone())))
            .collect();
        GradedLabeling { entries }
    }
}

/// A parsed key file: the labeling plus the target each instance was listed under.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyFile {
    pub labeling: GradedLabeling<String>,
    pub targets: BTreeMap<String, TargetKey>,
}

impl KeyFile {
    /// Instance ids grouped by target.
    pub fn by_target(&self) -> BTreeMap<TargetKey, Vec<String>> {
        let mut out: BTreeMap<TargetKey, Vec<String>> = BTreeMap::new();
        for (id, t) in &self.targets {
            out.entry(t.clone()).or_default().push(id.clone());
        }
        out
    }
}

/// Key-file reader options.
#[derive(Clone, Copy, Debug)]
pub struct KeyFormat {
    /// Separator between sense id and weight; `/` by default, `:` for files
    /// that use it. The split is on the last occurrence.
    pub separator: char,
}

impl Default for KeyFormat {
    fn default() -> Self {
        KeyFormat { separator: '/' }
    }
}

pub fn load_key_file(path: impl AsRef<Path>, format: KeyFormat) -> Result<KeyFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_key_file(&text, path, format)
}

pub fn parse_key_file(text: &str, origin: impl AsRef<Path>, format: KeyFormat) -> Result<KeyFile> {
    let origin = origin.as_ref();
    let mut key = KeyFile::default();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let (Some(target), Some(instance)) = (fields.next(), fields.next()) else {
            return Err(Error::parse(
                origin,
                line_no,
                "expected `<lemma>.<pos> <instance> <sense>...`",
            ));
        };
        let target: TargetKey = target
            .parse()
            .map_err(|e: Error| Error::parse(origin, line_no, e.to_string()))?;
        let mut weights = BTreeMap::new();
        for token in fields {
            let (sense, weight) = match token.rsplit_once(format.separator) {
                Some((sense, w)) => {
                    let w: f64 = w.parse().map_err(|_| {
                        Error::parse(
                            origin,
                            line_no,
                            format!("malformed sense/weight token `{token}`"),
                        )
                    })?;
                    (sense, w)
                }
                None => (token, 1.0),
            };
            if sense.is_empty() {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("empty sense id in `{token}`"),
                ));
            }
            if !weight.is_finite() || weight < 0.0 {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("invalid weight in `{token}` (must be finite and non-negative)"),
                ));
            }
            if weights.insert(sense.to_string(), weight).is_some() {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("sense `{sense}` listed twice"),
                ));
            }
        }
        if weights.is_empty() {
            return Err(Error::parse(
                origin,
                line_no,
                format!("instance `{instance}` has no senses"),
            ));
        }
        if key.labeling.contains(instance) {
            return Err(Error::parse(
                origin,
                line_no,
                format!("instance `{instance}` listed twice"),
            ));
        }
        key.labeling
            .insert(instance, weights)
            .map_err(|e| Error::parse(origin, line_no, e.to_string()))?;
        key.targets.insert(instance.to_string(), target);
    }
    Ok(key)
}

/// Renders a key file: instances in lexicographic order, senses by
/// descending weight then sense id, weights in shortest round-trip form.
pub fn render_key_file(
    labeling: &GradedLabeling<String>,
    targets: &BTreeMap<String, TargetKey>,
) -> Result<String> {
    let mut out = String::new();
    for (id, weights) in labeling.iter() {
        let target = targets
            .get(id)
            .ok_or_else(|| Error::Invalid(format!("no target key for instance `{id}`")))?;
        let mut senses: Vec<(&String, f64)> = weights.iter().map(|(s, &w)| (s, w)).collect();
        senses.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        out.push_str(&format!("{target} {id}"));
        for (s, w) in senses {
            if s.chars().any(char::is_whitespace) {
                return Err(Error::Invalid(format!(
                    "sense id `{s}` contains whitespace"
                )));
            }
            out.push_str(&format!(" {s}/{w}"));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_key_file(
    labeling: &GradedLabeling<String>,
    targets: &BTreeMap<String, TargetKey>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let text = render_key_file(labeling, targets)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Tunable parameters of the induction pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Number of highest logits kept before the softmax.
    pub top_l: usize,
    pub temperature: f64,
    /// Representatives per instance.
    pub reps_per_instance: usize,
    /// Draws per representative.
    pub samples_per_rep: usize,
    /// Number of clusters induced (upper bound in dynamic mode).
    pub max_senses: usize,
    /// Minimum dominated instances for a sense to count as strong.
    pub min_dominated: usize,
    pub dynamic_senses: bool,
    /// `false` runs the vanilla-query-only ablation.
    pub use_pattern: bool,
    /// Expected substitute list length on the wire.
    pub top_k_wire: usize,
    pub seed: u64,
    pub signature_size: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::dynamic()
    }
}

impl PipelineConfig {
    pub fn dynamic() -> Self {
        PipelineConfig {
            top_l: 200,
            temperature: 1.25,
            reps_per_instance: 15,
            samples_per_rep: 20,
            max_senses: 10,
            min_dominated: 2,
            dynamic_senses: true,
            use_pattern: true,
            top_k_wire: 500,
            seed: 0,
            signature_size: 10,
        }
    }

    pub fn fixed() -> Self {
        PipelineConfig {
            max_senses: 7,
            dynamic_senses: false,
            ..Self::dynamic()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.top_l == 0 || self.top_l > self.top_k_wire {
            return fail("top_l must satisfy 0 < top_l <= top_k_wire");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail("temperature must be a positive finite number");
        }
        if self.reps_per_instance == 0 {
            return fail("reps_per_instance must be >= 1");
        }
        if self.samples_per_rep == 0 {
            return fail("samples_per_rep must be >= 1");
        }
        if self.min_dominated == 0 {
            return fail("min_dominated must be >= 1");
        }
        if self.max_senses == 0 {
            return fail("max_senses must be >= 1");
        }
        Ok(())
    }

    /// Builds a config from `key=value` pairs applied in order (later pairs
    /// win). `dynamic_senses` picks the base defaults, so `max_senses`
    /// defaults to 10 in dynamic mode and 7 in fixed mode unless set.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
        let mut dynamic = true;
        for &(k, v) in &pairs {
            if k == "dynamic_senses" {
                dynamic = parse_value(k, v)?;
            }
        }
        let mut cfg = if dynamic {
            Self::dynamic()
        } else {
            Self::fixed()
        };
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "top_l" => self.top_l = parse_value(key, value)?,
            "temperature" => self.temperature = parse_value(key, value)?,
            "reps_per_instance" => self.reps_per_instance = parse_value(key, value)?,
            "samples_per_rep" => self.samples_per_rep = parse_value(key, value)?,
            "max_senses" => self.max_senses = parse_value(key, value)?,
            "min_dominated" => self.min_dominated = parse_value(key, value)?,
            "dynamic_senses" => self.dynamic_senses = parse_value(key, value)?,
            "use_pattern" => self.use_pattern = parse_value(key, value)?,
            "top_k_wire" => self.top_k_wire = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "signature_size" => self.signature_size = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

/// Parses a flat `key=value` config file. Blank lines and `#` comments are
/// ignored.
pub fn parse_config_pairs(text: &str, origin: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let origin = origin.as_ref();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (k, v) = trimmed
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, idx + 1, "expected key=value"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

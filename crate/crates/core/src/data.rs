//! Multi-domain corpora with labelled, unlabelled and test partitions.
//!
//! On disk a corpus is a JSON-lines file. An optional first line
//! `{"meta": {...}}` carries the dataset name, the target domain and the
//! representation kind; every other line is one [`Record`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    /// Cross-entropy target: 0 for negative, 1 for positive.
    pub fn target(self) -> f64 {
        match self {
            Label::Negative => 0.0,
            Label::Positive => 1.0,
        }
    }

    /// Evidence weight: -1 for negative, +1 for positive.
    pub fn signed(self) -> f64 {
        match self {
            Label::Negative => -1.0,
            Label::Positive => 1.0,
        }
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Label::Negative => "-",
            Label::Positive => "+",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Negative => "negative",
            Label::Positive => "positive",
        }
    }

    pub fn other(self) -> Self {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negative" | "neg" | "-" | "-1" | "0" => Ok(Label::Negative),
            "positive" | "pos" | "+" | "+1" | "1" => Ok(Label::Positive),
            other => Err(Error::Argument(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainId(pub String);

impl DomainId {
    pub fn new(name: impl Into<String>) -> Self {
        DomainId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DomainId {
    fn from(s: &str) -> Self {
        DomainId(s.to_string())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        let v = SparseVector { indices, values };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.indices.len() != self.values.len() {
            return Err(Error::Validation(format!(
                "sparse vector has {} indices but {} values",
                self.indices.len(),
                self.values.len()
            )));
        }
        if self.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "sparse feature indices must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    /// One past the largest index, or 0 when empty.
    pub fn extent(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Labelled,
    Unlabelled,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Labelled => "labelled",
            Partition::Unlabelled => "unlabelled",
            Partition::Test => "test",
        }
    }

    fn carries_label(self) -> bool {
        !matches!(self, Partition::Unlabelled)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: String,
    pub domain: DomainId,
    pub text: Vec<String>,
    pub features: Option<SparseVector>,
    pub label: Option<Label>,
    pub repr: Option<Vec<f64>>,
}

impl Instance {
    /// Instance that only carries a dense representation.
    pub fn dense(
        id: impl Into<String>,
        domain: DomainId,
        repr: Vec<f64>,
        label: Option<Label>,
    ) -> Self {
        Instance {
            id: id.into(),
            domain,
            text: Vec::new(),
            features: None,
            label,
            repr: Some(repr),
        }
    }

    pub fn repr(&self) -> Result<&[f64]> {
        self.repr
            .as_deref()
            .ok_or_else(|| Error::State(format!("instance `{}` has no representation", self.id)))
    }

    pub fn gold(&self) -> Result<Label> {
        self.label
            .ok_or_else(|| Error::State(format!("instance `{}` has no label", self.id)))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DomainSet {
    pub domain: DomainId,
    pub labelled: Vec<Instance>,
    pub unlabelled: Vec<Instance>,
    pub test: Vec<Instance>,
}

impl DomainSet {
    pub fn new(domain: DomainId) -> Self {
        DomainSet {
            domain,
            ..Default::default()
        }
    }

    pub fn partition(&self, p: Partition) -> &[Instance] {
        match p {
            Partition::Labelled => &self.labelled,
            Partition::Unlabelled => &self.unlabelled,
            Partition::Test => &self.test,
        }
    }

    fn partition_mut(&mut self, p: Partition) -> &mut Vec<Instance> {
        match p {
            Partition::Labelled => &mut self.labelled,
            Partition::Unlabelled => &mut self.unlabelled,
            Partition::Test => &mut self.test,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Partition, &Instance)> {
        [Partition::Labelled, Partition::Unlabelled, Partition::Test]
            .into_iter()
            .flat_map(move |p| self.partition(p).iter().map(move |x| (p, x)))
    }

    pub fn len(&self) -> usize {
        self.labelled.len() + self.unlabelled.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn for_each_mut(&mut self, mut f: impl FnMut(&mut Instance)) {
        self.labelled
            .iter_mut()
            .chain(self.unlabelled.iter_mut())
            .chain(self.test.iter_mut())
            .for_each(&mut f);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub dataset: String,
    pub target: Option<DomainId>,
    pub representation: String,
    pub dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub sources: Vec<DomainSet>,
    pub target: DomainSet,
    pub meta: CorpusMeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schema {
    /// Records carry `text` (or pre-split `tokens`).
    RawText,
    /// Records carry sparse `features` or a dense `repr`.
    Featurized,
}

impl std::str::FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw-text" => Ok(Schema::RawText),
            "featurized" => Ok(Schema::Featurized),
            other => Err(Error::Argument(format!(
                "unknown schema `{other}` (expected raw-text or featurized)"
            ))),
        }
    }
}

/// Lowercasing, split-on-non-alphanumeric tokenizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tokenizer {
    pub lowercase: bool,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer { lowercase: true }
    }
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| {
                if self.lowercase {
                    t.to_lowercase()
                } else {
                    t.to_string()
                }
            })
            .collect()
    }
}

/// One line of a corpus file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Record {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Partition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<SparseVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repr: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct MetaLine {
    meta: CorpusMeta,
}

#[derive(Serialize)]
struct MetaLineRef<'a> {
    meta: &'a CorpusMeta,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

impl Record {
    fn into_instance(
        self,
        line: usize,
        schema: Schema,
        tokenizer: &Tokenizer,
    ) -> Result<(Partition, Instance)> {
        let id = self
            .id
            .ok_or_else(|| parse_err(line, "missing field `id`"))?;
        let domain = self
            .domain
            .ok_or_else(|| parse_err(line, "missing field `domain`"))?;
        let partition = self
            .partition
            .ok_or_else(|| parse_err(line, "missing field `partition`"))?;
        let label = self
            .label
            .as_deref()
            .map(|l| {
                l.parse::<Label>()
                    .map_err(|e| parse_err(line, e.to_string()))
            })
            .transpose()?;
        let text = match (self.tokens, self.text) {
            (Some(tokens), _) => tokens,
            (None, Some(text)) => tokenizer.tokenize(&text),
            (None, None) => Vec::new(),
        };
        if let Some(f) = &self.features {
            f.validate().map_err(|e| parse_err(line, e.to_string()))?;
        }
        match schema {
            Schema::RawText if text.is_empty() && self.repr.is_none() => {
                return Err(parse_err(line, "raw-text record has no text"));
            }
            Schema::Featurized if self.features.is_none() && self.repr.is_none() => {
                return Err(parse_err(
                    line,
                    "featurized record has neither features nor repr",
                ));
            }
            _ => {}
        }
        Ok((
            partition,
            Instance {
                id,
                domain,
                text,
                features: self.features,
                label,
                repr: self.repr,
            },
        ))
    }

    fn from_instance(partition: Partition, x: &Instance) -> Self {
        Record {
            id: Some(x.id.clone()),
            domain: Some(x.domain.clone()),
            partition: Some(partition),
            text: None,
            tokens: if x.text.is_empty() {
                None
            } else {
                Some(x.text.clone())
            },
            features: x.features.clone(),
            label: x.label.map(|l| l.as_str().to_string()),
            repr: x.repr.clone(),
        }
    }
}

/// Per-domain pool of instances before a target is chosen.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pool {
    pub domains: Vec<DomainSet>,
    pub meta: CorpusMeta,
}

impl Pool {
    fn push(&mut self, partition: Partition, x: Instance) {
        let idx = match self.domains.iter().position(|d| d.domain == x.domain) {
            Some(i) => i,
            None => {
                self.domains.push(DomainSet::new(x.domain.clone()));
                self.domains.len() - 1
            }
        };
        self.domains[idx].partition_mut(partition).push(x);
    }

    /// Makes `target` the target domain: its labelled partition is dropped
    /// (unsupervised setting) and the sources' test partitions are dropped.
    pub fn into_corpus(self, target: &DomainId) -> Result<Corpus> {
        let mut sources = Vec::new();
        let mut tgt = None;
        for mut d in self.domains {
            if &d.domain == target {
                d.labelled.clear();
                tgt = Some(d);
            } else {
                d.test.clear();
                sources.push(d);
            }
        }
        let target_set = tgt.ok_or_else(|| {
            Error::Validation(format!("target domain `{target}` not present in corpus"))
        })?;
        let mut meta = self.meta;
        meta.target = Some(target.clone());
        let corpus = Corpus {
            sources,
            target: target_set,
            meta,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn domain_ids(&self) -> Vec<DomainId> {
        self.domains.iter().map(|d| d.domain.clone()).collect()
    }
}

/// Reads every record of a corpus file without choosing a target.
pub fn load_pool(path: &Path, schema: Schema, tokenizer: &Tokenizer) -> Result<Pool> {
    let reader = BufReader::new(File::open(path)?);
    let mut pool = Pool::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if line_no == 1 && line.trim_start().starts_with("{\"meta\"") {
            let m: MetaLine =
                serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
            pool.meta = m.meta;
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
        let (partition, x) = record.into_instance(line_no, schema, tokenizer)?;
        pool.push(partition, x);
    }
    Ok(pool)
}

/// Loads and validates a corpus.
///
/// The target comes from the meta line when present; otherwise it is the
/// single domain that has no labelled partition.
pub fn load_corpus(path: &Path, schema: Schema) -> Result<Corpus> {
    load_corpus_with(path, schema, &Tokenizer::default())
}

pub fn load_corpus_with(path: &Path, schema: Schema, tokenizer: &Tokenizer) -> Result<Corpus> {
    load_corpus_for(path, schema, tokenizer, None)
}

/// Like [`load_corpus_with`], with an explicit target taking precedence
/// over the meta line.
pub fn load_corpus_for(
    path: &Path,
    schema: Schema,
    tokenizer: &Tokenizer,
    target: Option<&DomainId>,
) -> Result<Corpus> {
    let pool = load_pool(path, schema, tokenizer)?;
    if pool.domains.iter().all(|d| d.labelled.is_empty()) {
        return Err(Error::Validation("empty labelled source partition".into()));
    }
    let target = match target.cloned().or_else(|| pool.meta.target.clone()) {
        Some(t) => t,
        None => {
            let candidates: Vec<_> = pool
                .domains
                .iter()
                .filter(|d| d.labelled.is_empty())
                .map(|d| d.domain.clone())
                .collect();
            match candidates.as_slice() {
                [t] => t.clone(),
                _ => {
                    return Err(Error::Validation(
                        "cannot infer the target domain: give it in the meta line".into(),
                    ))
                }
            }
        }
    };
    let corpus = pool.into_corpus(&target)?;
    for row in corpus.summary() {
        log::info!(
            "{} ({}): labelled={} unlabelled={} test={}",
            row.domain,
            row.role,
            row.labelled,
            row.unlabelled,
            row.test
        );
    }
    Ok(corpus)
}

/// Writes domains as a corpus file (meta line first).
pub fn save_domains<'a>(
    path: &Path,
    meta: &CorpusMeta,
    domains: impl IntoIterator<Item = &'a DomainSet>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &MetaLineRef { meta })?;
    w.write_all(b"\n")?;
    for d in domains {
        for (p, x) in d.iter() {
            serde_json::to_writer(&mut w, &Record::from_instance(p, x))?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionCounts {
    pub domain: DomainId,
    pub role: &'static str,
    pub labelled: usize,
    pub unlabelled: usize,
    pub test: usize,
}

impl Corpus {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_domains(path, &self.meta, self.sources.iter().chain([&self.target]))
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn target_id(&self) -> &DomainId {
        &self.target.domain
    }

    pub fn domains(&self) -> impl Iterator<Item = &DomainSet> {
        self.sources.iter().chain(std::iter::once(&self.target))
    }

    /// Union of source labelled instances, in source order.
    pub fn source_labelled(&self) -> Vec<&Instance> {
        self.sources
            .iter()
            .flat_map(|d| d.labelled.iter())
            .collect()
    }

    pub fn source_unlabelled(&self) -> Vec<&Instance> {
        self.sources
            .iter()
            .flat_map(|d| d.unlabelled.iter())
            .collect()
    }

    /// Labelled and unlabelled instances of every domain (test excluded).
    pub fn training_instances(&self) -> impl Iterator<Item = &Instance> {
        self.domains()
            .flat_map(|d| d.labelled.iter().chain(d.unlabelled.iter()))
    }

    pub fn all_instances(&self) -> impl Iterator<Item = &Instance> {
        self.domains().flat_map(|d| d.iter().map(|(_, x)| x))
    }

    pub fn find(&self, id: &str) -> Option<&Instance> {
        self.all_instances().find(|x| x.id == id)
    }

    pub fn summary(&self) -> Vec<PartitionCounts> {
        self.domains()
            .enumerate()
            .map(|(i, d)| PartitionCounts {
                domain: d.domain.clone(),
                role: if i < self.sources.len() {
                    "source"
                } else {
                    "target"
                },
                labelled: d.labelled.len(),
                unlabelled: d.unlabelled.len(),
                test: d.test.len(),
            })
            .collect()
    }

    pub fn summary_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:<7} {:>9} {:>11} {:>7}\n",
            "domain", "role", "labelled", "unlabelled", "test"
        );
        for r in self.summary() {
            out.push_str(&format!(
                "{:<12} {:<7} {:>9} {:>11} {:>7}\n",
                r.domain.as_str(),
                r.role,
                r.labelled,
                r.unlabelled,
                r.test
            ));
        }
        out
    }

    /// Applies `f` to every instance (all domains, all partitions).
    pub fn map_instances(&mut self, mut f: impl FnMut(&mut Instance)) {
        for d in self.sources.iter_mut() {
            d.for_each_mut(&mut f);
        }
        self.target.for_each_mut(&mut f);
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::Validation(
                "corpus needs at least one source domain".into(),
            ));
        }
        if !self.target.labelled.is_empty() {
            return Err(Error::Validation(format!(
                "target domain `{}` must not have labelled training instances",
                self.target.domain
            )));
        }
        for s in &self.sources {
            if s.labelled.is_empty() {
                return Err(Error::Validation(format!(
                    "empty labelled source partition (domain `{}`)",
                    s.domain
                )));
            }
            if s.domain == self.target.domain {
                return Err(Error::Validation(format!(
                    "domain `{}` is both source and target",
                    s.domain
                )));
            }
        }
        let mut seen = HashSet::new();
        let mut dim = None;
        for d in self.domains() {
            for (p, x) in d.iter() {
                if x.domain != d.domain {
                    return Err(Error::Validation(format!(
                        "instance `{}` has domain `{}` but sits in `{}`",
                        x.id, x.domain, d.domain
                    )));
                }
                if !seen.insert(x.id.as_str()) {
                    return Err(Error::Validation(format!("duplicate id `{}`", x.id)));
                }
                if p.carries_label() != x.label.is_some() {
                    return Err(Error::Validation(format!(
                        "instance `{}` in {} partition {} a label",
                        x.id,
                        p.as_str(),
                        if x.label.is_some() {
                            "carries"
                        } else {
                            "lacks"
                        }
                    )));
                }
                if let Some(f) = &x.features {
                    f.validate()?;
                }
                if let Some(r) = &x.repr {
                    match dim {
                        None => dim = Some(r.len()),
                        Some(d) if d != r.len() => {
                            return Err(Error::Validation(format!(
                                "instance `{}` repr has dimension {} (expected {d})",
                                x.id,
                                r.len()
                            )))
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reads a directory laid out as `DIR/<domain>/<partition>.jsonl`.
///
/// Each line needs `text` (raw-text) or `features` (featurized), plus a
/// `label` for the labelled and test files. Missing ids become
/// `<domain>/<partition>/<line>`.
pub fn ingest_dir(dir: &Path, schema: Schema, tokenizer: &Tokenizer) -> Result<Pool> {
    let mut entries: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    entries.sort();
    let mut pool = Pool::default();
    for domain_dir in entries {
        let domain = DomainId::new(
            domain_dir
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::Argument(format!("bad directory name {domain_dir:?}")))?,
        );
        for partition in [Partition::Labelled, Partition::Unlabelled, Partition::Test] {
            let file = domain_dir.join(format!("{}.jsonl", partition.as_str()));
            if !file.exists() {
                continue;
            }
            let reader = BufReader::new(File::open(&file)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let mut record: Record = serde_json::from_str(&line)
                    .map_err(|e| parse_err(i + 1, format!("{}: {e}", file.display())))?;
                record
                    .id
                    .get_or_insert_with(|| format!("{}/{}/{}", domain, partition.as_str(), i + 1));
                record.domain = Some(domain.clone());
                record.partition = Some(partition);
                let (p, x) = record.into_instance(i + 1, schema, tokenizer)?;
                if p.carries_label() != x.label.is_some() {
                    return Err(parse_err(
                        i + 1,
                        format!(
                            "{}: label presence does not match partition",
                            file.display()
                        ),
                    ));
                }
                pool.push(p, x);
            }
        }
    }
    let mut seen = HashSet::new();
    for x in pool.domains.iter().flat_map(|d| d.iter().map(|(_, x)| x)) {
        if !seen.insert(x.id.as_str()) {
            return Err(Error::Validation(format!("duplicate id `{}`", x.id)));
        }
    }
    Ok(pool)
}

/// Counts per domain and partition, for printing after ingest.
pub fn pool_summary(pool: &Pool) -> BTreeMap<DomainId, [usize; 3]> {
    pool.domains
        .iter()
        .map(|d| {
            (
                d.domain.clone(),
                [d.labelled.len(), d.unlabelled.len(), d.test.len()],
            )
        })
        .collect()
}

/// Seeded shuffle-and-cut into (train, validation).
///
/// The validation part has `round(fraction * len)` items; both parts must
/// be non-empty.
pub fn holdout_split<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!(
            "holdout fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = items.len();
    let n_val = (fraction * n as f64).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::Argument(format!(
            "cannot hold out {n_val} of {n} instances with both parts non-empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(seed, rng::SPLIT));
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let mut val_idx = val_idx.to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok((
        train_idx.iter().map(|&i| items[i].clone()).collect(),
        val_idx.iter().map(|&i| items[i].clone()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn three_record_fixture() {
        let f = write_lines(&[
            r#"{"id":"a","domain":"S","partition":"labelled","text":"Great product","label":"positive"}"#,
            r#"{"id":"b","domain":"S","partition":"labelled","text":"awful, broke","label":"negative"}"#,
            r#"{"id":"c","domain":"T","partition":"unlabelled","text":"it is fine"}"#,
        ]);
        let c = load_corpus(f.path(), Schema::RawText).unwrap();
        assert_eq!(c.n_sources(), 1);
        assert_eq!(c.sources[0].labelled.len(), 2);
        assert_eq!(c.target.unlabelled.len(), 1);
        assert_eq!(c.target_id().as_str(), "T");
        assert_eq!(c.sources[0].labelled[0].text, vec!["great", "product"]);
    }

    #[test]
    fn empty_file_is_rejected() {
        let f = write_lines(&[]);
        let err = load_corpus(f.path(), Schema::RawText).unwrap_err();
        assert!(
            err.to_string().contains("empty labelled source partition"),
            "{err}"
        );
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_lines(&[
            r#"{"id":"a","domain":"S","partition":"labelled","text":"x","label":"positive"}"#,
            r#"{"id": oops}"#,
        ]);
        match load_corpus(f.path(), Schema::RawText) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_label_is_a_parse_error() {
        let f = write_lines(&[
            r#"{"id":"a","domain":"S","partition":"labelled","text":"x","label":"neutral"}"#,
        ]);
        assert!(matches!(
            load_corpus(f.path(), Schema::RawText),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let f = write_lines(&[
            r#"{"id":"a","domain":"S","partition":"labelled","text":"x","label":"positive"}"#,
            r#"{"id":"a","domain":"T","partition":"unlabelled","text":"y"}"#,
        ]);
        let err = load_corpus(f.path(), Schema::RawText).unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("duplicate")),
            "{err}"
        );
    }

    #[test]
    fn unsorted_feature_indices_are_rejected() {
        let f = write_lines(&[
            r#"{"id":"a","domain":"S","partition":"labelled","features":{"indices":[3,1],"values":[1,1]},"label":"positive"}"#,
        ]);
        assert!(load_corpus(f.path(), Schema::Featurized).is_err());
    }

    #[test]
    fn meta_line_selects_target_and_drops_its_labels() {
        let f = write_lines(&[
            r#"{"meta":{"dataset":"toy","target":"B","representation":"raw","dim":null}}"#,
            r#"{"id":"a","domain":"A","partition":"labelled","text":"x","label":"positive"}"#,
            r#"{"id":"b","domain":"B","partition":"labelled","text":"y","label":"negative"}"#,
            r#"{"id":"c","domain":"B","partition":"test","text":"z","label":"negative"}"#,
            r#"{"id":"d","domain":"A","partition":"test","text":"w","label":"negative"}"#,
        ]);
        let c = load_corpus(f.path(), Schema::RawText).unwrap();
        assert_eq!(c.target_id().as_str(), "B");
        assert!(c.target.labelled.is_empty());
        assert_eq!(c.target.test.len(), 1);
        assert!(c.sources[0].test.is_empty());
    }

    #[test]
    fn save_then_load_round_trips() {
        let f = write_lines(&[
            r#"{"id":"a","domain":"S","partition":"labelled","text":"Good","label":"positive","repr":[0.5,-1.25]}"#,
            r#"{"id":"b","domain":"S","partition":"unlabelled","text":"meh","repr":[0.1,0.2]}"#,
            r#"{"id":"c","domain":"T","partition":"unlabelled","text":"ok","repr":[3,4]}"#,
            r#"{"id":"d","domain":"T","partition":"test","text":"bad","label":"negative","repr":[1e-300,7]}"#,
        ]);
        let c = load_corpus(f.path(), Schema::RawText).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        c.save(out.path()).unwrap();
        let back = load_corpus(out.path(), Schema::RawText).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn holdout_split_examples() {
        let items: Vec<usize> = (0..10).collect();
        let (t, v) = holdout_split(&items, 0.1, 7).unwrap();
        assert_eq!((t.len(), v.len()), (9, 1));
        assert_eq!(holdout_split(&items, 0.1, 7).unwrap(), (t, v));

        let big: Vec<usize> = (0..2000).collect();
        let (t, v) = holdout_split(&big, 0.1, 1).unwrap();
        assert_eq!((t.len(), v.len()), (1800, 200));

        assert!(holdout_split(&[1], 0.5, 0).is_err());
        assert!(holdout_split(&items, 0.0, 0).is_err());
        assert!(holdout_split(&items, 1.0, 0).is_err());
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        let t = Tokenizer::default();
        assert_eq!(
            t.tokenize("It's GREAT!!  5 stars"),
            vec!["it", "s", "great", "5", "stars"]
        );
        assert!(t.tokenize("...").is_empty());
    }

    proptest::proptest! {
        #[test]
        fn holdout_is_disjoint_and_exhaustive(n in 2usize..300, frac in 0.05f64..0.95, seed: u64) {
            let items: Vec<usize> = (0..n).collect();
            if let Ok((t, v)) = holdout_split(&items, frac, seed) {
                proptest::prop_assert_eq!(v.len(), (frac * n as f64).round() as usize);
                let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
                all.sort_unstable();
                proptest::prop_assert_eq!(all, items);
            }
        }
    }
}

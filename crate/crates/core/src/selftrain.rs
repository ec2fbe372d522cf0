//! Source-domain self-training and the semi-supervised baselines.
//!
//! [`run_algorithm1`] is the single-pass multi-source procedure: per source
//! domain, fit on the labelled set, score that domain's unlabelled
//! instances once with the fixed model, append those whose top-class
//! probability exceeds `tau`, refit once. The final per-domain models are
//! combined in a [`MajorityVoter`].
//!
//! Appended instances are always ordered by `(domain, id)` so a model is
//! reproducible from its labelled set plus the audit log.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, DomainId, Instance, Label};
use crate::learner::{self, LearnerOptions, MajorityVoter, ProbClassifier};
use crate::rng;
use crate::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.8;
pub const DEFAULT_MAX_ROUNDS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Per-domain self-training (the multi-source procedure).
    #[serde(alias = "alg1", alias = "self")]
    PerDomainSelf,
    /// One classifier on the union of sources.
    #[serde(alias = "uni", alias = "uni-self")]
    UnionSelf,
    Tri,
    #[serde(alias = "tri-d")]
    TriDisagreement,
    /// No augmentation: the voter over per-domain models fit on labelled data.
    None,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alg1" | "self" | "per-domain-self" => Ok(Variant::PerDomainSelf),
            "uni" | "uni-self" | "union-self" => Ok(Variant::UnionSelf),
            "tri" => Ok(Variant::Tri),
            "tri-d" | "tri-disagreement" => Ok(Variant::TriDisagreement),
            "none" => Ok(Variant::None),
            other => Err(Error::Argument(format!(
                "unknown self-training variant `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfTrainConfig {
    pub tau: f64,
    pub learner: LearnerOptions,
    pub variant: Variant,
    /// Seeds bootstrap resampling (tri-training only).
    pub seed: u64,
    pub max_rounds: usize,
    /// When false, tri-training members all start from the full labelled set.
    pub bootstrap: bool,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            tau: DEFAULT_TAU,
            learner: LearnerOptions::default(),
            variant: Variant::PerDomainSelf,
            seed: 0,
            max_rounds: DEFAULT_MAX_ROUNDS,
            bootstrap: true,
        }
    }
}

impl SelfTrainConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Argument(format!(
                "tau must lie in [0, 1], got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    /// Index of the model that received the instance.
    pub member: usize,
    pub round: usize,
    pub domain: DomainId,
    pub id: String,
    pub label: Label,
    pub confidence: f64,
}

#[derive(Clone, Debug)]
pub struct SelfTrainResult {
    /// Models before any augmentation.
    pub initial: Vec<ProbClassifier>,
    pub classifiers: Vec<ProbClassifier>,
    pub voter: MajorityVoter,
    /// Final number of pseudo-labelled instances per model.
    pub augmented: Vec<usize>,
    pub audit: Vec<AuditEntry>,
}

impl SelfTrainResult {
    /// Audit entries of the final training set of `member`.
    pub fn final_additions(&self, member: usize) -> Vec<&AuditEntry> {
        let last = self
            .audit
            .iter()
            .filter(|e| e.member == member)
            .map(|e| e.round)
            .max();
        self.audit
            .iter()
            .filter(|e| e.member == member && Some(e.round) == last)
            .collect()
    }
}

struct Pseudo<'a> {
    instance: &'a Instance,
    label: Label,
    confidence: f64,
}

fn fit(base: &[&Instance], extra: &[Pseudo<'_>], opts: &LearnerOptions) -> Result<ProbClassifier> {
    let mut xs = Vec::with_capacity(base.len() + extra.len());
    let mut ys = Vec::with_capacity(base.len() + extra.len());
    for x in base {
        xs.push(x.repr()?);
        ys.push(x.gold()?);
    }
    for p in extra {
        xs.push(p.instance.repr()?);
        ys.push(p.label);
    }
    learner::train(&xs, &ys, opts)
}

fn by_domain_then_id(a: &Pseudo<'_>, b: &Pseudo<'_>) -> std::cmp::Ordering {
    (&a.instance.domain, &a.instance.id).cmp(&(&b.instance.domain, &b.instance.id))
}

/// Single-pass self-training of one model: score with the fixed initial
/// model, keep confidence > tau, refit once.
fn self_train_one<'a>(
    labelled: &[&'a Instance],
    unlabelled: &[&'a Instance],
    cfg: &SelfTrainConfig,
) -> Result<(ProbClassifier, ProbClassifier, Vec<Pseudo<'a>>)> {
    let initial = fit(labelled, &[], &cfg.learner)?;
    let mut added = Vec::new();
    for &x in unlabelled {
        let (label, confidence) = initial.predict_instance(x)?;
        if confidence > cfg.tau {
            added.push(Pseudo {
                instance: x,
                label,
                confidence,
            });
        }
    }
    added.sort_by(by_domain_then_id);
    let last = if added.is_empty() {
        initial.clone()
    } else {
        fit(labelled, &added, &cfg.learner)?
    };
    Ok((initial, last, added))
}

fn audit_entries(member: usize, round: usize, added: &[Pseudo<'_>]) -> Vec<AuditEntry> {
    added
        .iter()
        .map(|p| AuditEntry {
            member,
            round,
            domain: p.instance.domain.clone(),
            id: p.instance.id.clone(),
            label: p.label,
            confidence: p.confidence,
        })
        .collect()
}

/// Writes audit entries as JSON lines.
pub fn write_audit(path: &Path, audit: &[AuditEntry]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in audit {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_algorithm1(corpus: &Corpus, cfg: &SelfTrainConfig) -> Result<SelfTrainResult> {
    cfg.validate()?;
    let per_domain = corpus
        .sources
        .par_iter()
        .map(|d| {
            let labelled: Vec<&Instance> = d.labelled.iter().collect();
            let unlabelled: Vec<&Instance> = d.unlabelled.iter().collect();
            self_train_one(&labelled, &unlabelled, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut initial = Vec::new();
    let mut classifiers = Vec::new();
    let mut augmented = Vec::new();
    let mut audit = Vec::new();
    for (i, (f0, f, added)) in per_domain.into_iter().enumerate() {
        augmented.push(added.len());
        audit.extend(audit_entries(i, 0, &added));
        initial.push(f0);
        classifiers.push(f);
    }
    Ok(SelfTrainResult {
        initial,
        voter: MajorityVoter::new(classifiers.clone())?,
        classifiers,
        augmented,
        audit,
    })
}

/// The no-adaptation baseline model: one classifier on all source labels.
pub fn train_union(corpus: &Corpus, opts: &LearnerOptions) -> Result<ProbClassifier> {
    fit(&corpus.source_labelled(), &[], opts)
}

pub fn run_union_self(corpus: &Corpus, cfg: &SelfTrainConfig) -> Result<SelfTrainResult> {
    cfg.validate()?;
    let labelled = corpus.source_labelled();
    let unlabelled = corpus.source_unlabelled();
    let (f0, f, added) = self_train_one(&labelled, &unlabelled, cfg)?;
    Ok(SelfTrainResult {
        initial: vec![f0],
        voter: MajorityVoter::new(vec![f.clone()])?,
        classifiers: vec![f],
        augmented: vec![added.len()],
        audit: audit_entries(0, 0, &added),
    })
}

/// Per-domain models on labelled data only (no augmentation).
pub fn run_none(corpus: &Corpus, cfg: &SelfTrainConfig) -> Result<SelfTrainResult> {
    let classifiers = corpus
        .sources
        .par_iter()
        .map(|d| {
            let labelled: Vec<&Instance> = d.labelled.iter().collect();
            fit(&labelled, &[], &cfg.learner)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SelfTrainResult {
        initial: classifiers.clone(),
        voter: MajorityVoter::new(classifiers.clone())?,
        augmented: vec![0; classifiers.len()],
        classifiers,
        audit: Vec::new(),
    })
}

fn bootstrap_sample<'a>(pool: &[&'a Instance], rng: &mut rng::Rng) -> Result<Vec<&'a Instance>> {
    const MAX_TRIES: usize = 100;
    for _ in 0..MAX_TRIES {
        let sample: Vec<&Instance> = (0..pool.len())
            .map(|_| pool[rng.gen_range(0..pool.len())])
            .collect();
        let has = |l| sample.iter().any(|x| x.label == Some(l));
        if has(Label::Positive) && has(Label::Negative) {
            return Ok(sample);
        }
    }
    Err(Error::Training(format!(
        "no two-class bootstrap sample drawn from {} labelled instances",
        pool.len()
    )))
}

/// Tri-training over the union of sources.
///
/// Each round, every member's pseudo-labelled pool is rebuilt from the
/// unlabelled instances on which the other two members (as they stood at
/// the start of the round) agree; with `disagreement`, the member itself
/// must also disagree with them. Rounds stop when no pool changes or after
/// `max_rounds`.
pub fn run_tri_training(
    corpus: &Corpus,
    cfg: &SelfTrainConfig,
    disagreement: bool,
) -> Result<SelfTrainResult> {
    cfg.validate()?;
    let labelled = corpus.source_labelled();
    let mut unlabelled = corpus.source_unlabelled();
    unlabelled.sort_by(|a, b| (&a.domain, &a.id).cmp(&(&b.domain, &b.id)));
    if labelled.len() < 2 {
        return Err(Error::Training(
            "tri-training needs at least two labelled instances".into(),
        ));
    }
    let mut rng = rng::substream(cfg.seed, rng::BOOTSTRAP);
    let bases: Vec<Vec<&Instance>> = (0..3)
        .map(|_| {
            if cfg.bootstrap {
                bootstrap_sample(&labelled, &mut rng)
            } else {
                Ok(labelled.clone())
            }
        })
        .collect::<Result<_>>()?;
    let initial = bases
        .par_iter()
        .map(|b| fit(b, &[], &cfg.learner))
        .collect::<Result<Vec<_>>>()?;

    let mut models = initial.clone();
    let mut pools: Vec<Vec<String>> = vec![Vec::new(); 3];
    let mut audit = Vec::new();
    let mut augmented = vec![0; 3];
    for round in 1..=cfg.max_rounds {
        // predictions of the round-start models
        let preds: Vec<Vec<(Label, f64)>> = models
            .iter()
            .map(|m| unlabelled.iter().map(|x| m.predict_instance(x)).collect())
            .collect::<Result<_>>()?;
        let mut changed = false;
        let mut next_models = models.clone();
        for c in 0..3 {
            let (a, b) = ((c + 1) % 3, (c + 2) % 3);
            let added: Vec<Pseudo<'_>> = unlabelled
                .iter()
                .enumerate()
                .filter_map(|(j, &x)| {
                    let (la, pa) = preds[a][j];
                    let (lb, pb) = preds[b][j];
                    let agree = la == lb && (!disagreement || preds[c][j].0 != la);
                    agree.then_some(Pseudo {
                        instance: x,
                        label: la,
                        confidence: 0.5 * (pa + pb),
                    })
                })
                .collect();
            let ids: Vec<String> = added.iter().map(|p| p.instance.id.clone()).collect();
            if ids == pools[c] {
                continue;
            }
            changed = true;
            next_models[c] = fit(&bases[c], &added, &cfg.learner)?;
            audit.extend(audit_entries(c, round, &added));
            augmented[c] = added.len();
            pools[c] = ids;
        }
        models = next_models;
        if !changed {
            break;
        }
    }
    Ok(SelfTrainResult {
        initial,
        voter: MajorityVoter::new(models.clone())?,
        classifiers: models,
        augmented,
        audit,
    })
}

/// Dispatches on `cfg.variant`.
pub fn run(corpus: &Corpus, cfg: &SelfTrainConfig) -> Result<SelfTrainResult> {
    match cfg.variant {
        Variant::PerDomainSelf => run_algorithm1(corpus, cfg),
        Variant::UnionSelf => run_union_self(corpus, cfg),
        Variant::Tri => run_tri_training(corpus, cfg, false),
        Variant::TriDisagreement => run_tri_training(corpus, cfg, true),
        Variant::None => run_none(corpus, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DomainSet;

    fn pt(id: &str, d: &str, x: &[f64], label: Option<Label>) -> Instance {
        Instance::dense(id, DomainId::from(d), x.to_vec(), label)
    }

    /// Two sources on a line: positives right of zero, negatives left.
    fn two_domain_fixture() -> Corpus {
        let mut s1 = DomainSet::new("S1".into());
        s1.labelled = vec![
            pt("a1", "S1", &[1.0], Some(Label::Positive)),
            pt("a2", "S1", &[-1.0], Some(Label::Negative)),
            pt("a3", "S1", &[0.5], Some(Label::Positive)),
            pt("a4", "S1", &[-0.5], Some(Label::Negative)),
        ];
        s1.unlabelled = vec![
            pt("u-deep", "S1", &[25.0], None),
            pt("u-near", "S1", &[0.05], None),
        ];
        let mut s2 = DomainSet::new("S2".into());
        s2.labelled = vec![
            pt("b1", "S2", &[2.0], Some(Label::Positive)),
            pt("b2", "S2", &[-2.0], Some(Label::Negative)),
        ];
        s2.unlabelled = vec![pt("v-near", "S2", &[-0.02], None)];
        let mut t = DomainSet::new("T".into());
        t.unlabelled = vec![pt("t1", "T", &[0.3], None)];
        Corpus {
            sources: vec![s1, s2],
            target: t,
            meta: Default::default(),
        }
    }

    #[test]
    fn tau_one_adds_nothing() {
        let c = two_domain_fixture();
        let r = run_algorithm1(
            &c,
            &SelfTrainConfig {
                tau: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.augmented, vec![0, 0]);
        assert_eq!(r.initial, r.classifiers);
    }

    #[test]
    fn tau_zero_adds_everything() {
        let c = two_domain_fixture();
        let r = run_algorithm1(
            &c,
            &SelfTrainConfig {
                tau: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.augmented, vec![2, 1]);
    }

    #[test]
    fn only_the_deep_point_passes_a_high_threshold() {
        let c = two_domain_fixture();
        let cfg = SelfTrainConfig {
            tau: 0.9,
            ..Default::default()
        };
        let r = run_algorithm1(&c, &cfg).unwrap();
        // standalone check with the initial model of S1
        let f0 = &r.initial[0];
        let (l_deep, p_deep) = f0.predict_proba(&[25.0]).unwrap();
        let (_, p_near) = f0.predict_proba(&[0.05]).unwrap();
        assert!(p_deep > 0.9 && p_near <= 0.9);
        assert_eq!(l_deep, Label::Positive);
        assert_eq!(r.audit.len(), 1);
        assert_eq!(r.audit[0].id, "u-deep");
        assert_eq!(r.audit[0].label, Label::Positive);
    }

    #[test]
    fn out_of_range_tau_is_rejected() {
        let c = two_domain_fixture();
        assert!(run_algorithm1(
            &c,
            &SelfTrainConfig {
                tau: 1.5,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn union_self_with_tau_one_is_the_union_baseline() {
        let c = two_domain_fixture();
        let cfg = SelfTrainConfig {
            tau: 1.0,
            ..Default::default()
        };
        let r = run_union_self(&c, &cfg).unwrap();
        assert_eq!(r.classifiers[0], train_union(&c, &cfg.learner).unwrap());
    }

    #[test]
    fn variant_names_parse() {
        assert_eq!("alg1".parse::<Variant>().unwrap(), Variant::PerDomainSelf);
        assert_eq!(
            "tri-d".parse::<Variant>().unwrap(),
            Variant::TriDisagreement
        );
        assert!("co".parse::<Variant>().is_err());
    }
}

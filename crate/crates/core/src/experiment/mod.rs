//! End-to-end runs: the no-adaptation baseline, the four pipeline steps,
//! k-sweeps over selection strategies and significance tests.

mod report;
mod stats;
pub mod synthetic;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{self, TrainConfig, TrainReport};
use crate::data::{load_corpus_for, Corpus, DomainId, Instance, Label, Schema, Tokenizer};
use crate::embed::sif::{fit_sif, DEFAULT_A};
use crate::embed::tfidf::{fit_tfidf_encoder, EncoderConfig};
use crate::embed::vectors::WordVectors;
use crate::embed::{embed_corpus, AnyRepresenter};
use crate::learner::{self, accuracy, LearnerOptions, MajorityVoter, ProbClassifier};
use crate::pseudo::{self, Order, ScoredTarget, SelectionKind, SelectionStrategy};
use crate::selftrain::{self, SelfTrainConfig};
use crate::{Error, Result};

pub use report::{
    collect_evidence, emit_report, read_predictions, recompute_results, summary, write_records,
    EvidenceRecord, ThetaRecord,
};
pub use stats::{binomial_test, significance_stars};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RepresentationConfig {
    /// Instances already carry dense representations.
    #[default]
    Precomputed,
    Sif {
        vectors: PathBuf,
        #[serde(default = "default_sif_a")]
        a: f64,
        #[serde(default)]
        remove_pc: bool,
    },
    Tfidf(EncoderConfig),
}

fn default_sif_a() -> f64 {
    DEFAULT_A
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvidenceConfig {
    /// Number of test instances whose evidence is reported.
    pub instances: usize,
    /// Evidences per instance.
    pub top: usize,
}

impl Default for EvidenceConfig {
    fn default() -> Self {
        EvidenceConfig {
            instances: 5,
            top: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyRef {
    pub kind: SelectionKind,
    #[serde(default = "default_order")]
    pub order: Order,
}

fn default_order() -> Order {
    Order::Dsc
}

impl StrategyRef {
    pub fn with_k(self, k: usize) -> SelectionStrategy {
        SelectionStrategy {
            kind: self.kind,
            order: self.order,
            k,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub ks: Vec<usize>,
    pub strategies: Vec<StrategyRef>,
}

/// Everything one run needs, read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub corpus: PathBuf,
    pub schema: Schema,
    /// Overrides the target named in the corpus file.
    pub target: Option<DomainId>,
    pub output: PathBuf,
    /// Root seed; every randomised component derives its stream from it.
    pub seed: u64,
    pub representation: RepresentationConfig,
    pub learner: LearnerOptions,
    pub selftrain: SelfTrainConfig,
    pub selection: SelectionStrategy,
    pub attention: TrainConfig,
    pub evidence: EvidenceConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            corpus: PathBuf::from("corpus.jsonl"),
            schema: Schema::Featurized,
            target: None,
            output: PathBuf::from("out"),
            seed: 0,
            representation: RepresentationConfig::default(),
            learner: LearnerOptions::default(),
            selftrain: SelfTrainConfig::default(),
            selection: SelectionStrategy::default(),
            attention: TrainConfig::default(),
            evidence: EvidenceConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Reads a spec; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec = Self::from_toml(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut spec.corpus);
        resolve(&mut spec.output);
        if let RepresentationConfig::Sif { vectors, .. } = &mut spec.representation {
            resolve(vectors);
        }
        Ok(spec)
    }

    /// Checks parameter ranges and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        if !self.corpus.is_file() {
            return Err(Error::Validation(format!(
                "corpus file `{}` does not exist",
                self.corpus.display()
            )));
        }
        if let RepresentationConfig::Sif { vectors, a, .. } = &self.representation {
            if !vectors.is_file() {
                return Err(Error::Validation(format!(
                    "word-vector file `{}` does not exist",
                    vectors.display()
                )));
            }
            if !a.is_finite() || *a <= 0.0 {
                return Err(Error::Validation(format!(
                    "SIF `a` must be positive, got {a}"
                )));
            }
        }
        self.validate_parameters()
    }

    fn validate_parameters(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.selftrain.tau) {
            return Err(Error::Validation(format!(
                "tau must lie in [0, 1], got {}",
                self.selftrain.tau
            )));
        }
        if self.selection.k == 0 {
            return Err(Error::Validation("selection k must be positive".into()));
        }
        if !self.attention.learning_rate.is_finite() || self.attention.learning_rate <= 0.0 {
            return Err(Error::Validation(
                "attention learning rate must be positive".into(),
            ));
        }
        check_ascending(&self.sweep.ks)
    }

    /// Self-training settings with the shared learner and root seed.
    pub fn selftrain_config(&self) -> SelfTrainConfig {
        SelfTrainConfig {
            learner: self.learner,
            seed: self.seed,
            ..self.selftrain.clone()
        }
    }

    pub fn attention_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.attention.clone()
        }
    }
}

fn check_ascending(ks: &[usize]) -> Result<()> {
    if ks.contains(&0) {
        return Err(Error::Validation("sweep sizes must be positive".into()));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation(
            "sweep sizes must be strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Loads the corpus and computes representations as configured.
pub fn prepare_corpus(spec: &ExperimentSpec) -> Result<Corpus> {
    let mut corpus = load_corpus_for(
        &spec.corpus,
        spec.schema,
        &Tokenizer::default(),
        spec.target.as_ref(),
    )
    .map_err(Error::in_step("load"))?;
    represent(&mut corpus, &spec.representation, spec.seed).map_err(Error::in_step("embed"))?;
    corpus.validate()?;
    Ok(corpus)
}

/// Fits the configured representer on the corpus and embeds every instance.
pub fn represent(corpus: &mut Corpus, cfg: &RepresentationConfig, seed: u64) -> Result<()> {
    let rep = match cfg {
        RepresentationConfig::Precomputed => {
            if let Some(x) = corpus.all_instances().find(|x| x.repr.is_none()) {
                return Err(Error::Validation(format!(
                    "instance `{}` has no precomputed representation",
                    x.id
                )));
            }
            return Ok(());
        }
        RepresentationConfig::Sif {
            vectors,
            a,
            remove_pc,
        } => {
            let vocab: HashSet<String> = corpus
                .all_instances()
                .flat_map(|x| x.text.iter().cloned())
                .collect();
            let wv = WordVectors::load_text_filtered(vectors, Some(&vocab))?;
            log::info!("loaded {} word vectors of dimension {}", wv.len(), wv.dim());
            AnyRepresenter::Sif(fit_sif(corpus, Arc::new(wv), *a, *remove_pc)?)
        }
        RepresentationConfig::Tfidf(enc) => {
            let enc = EncoderConfig {
                seed,
                ..enc.clone()
            };
            AnyRepresenter::Tfidf(fit_tfidf_encoder(corpus, &enc)?)
        }
    };
    let stats = embed_corpus(&rep, corpus)?;
    if stats.empty_documents > 0 {
        log::warn!(
            "{} documents received the zero vector",
            stats.empty_documents
        );
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Step {
    #[serde(rename = "uni-MS")]
    UniMs,
    #[serde(rename = "Self")]
    SelfTrain,
    #[serde(rename = "PL")]
    PseudoLabel,
    #[serde(rename = "Att")]
    Attention,
}

impl Step {
    pub const ALL: [Step; 4] = [
        Step::UniMs,
        Step::SelfTrain,
        Step::PseudoLabel,
        Step::Attention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Step::UniMs => "uni-MS",
            Step::SelfTrain => "Self",
            Step::PseudoLabel => "PL",
            Step::Attention => "Att",
        }
    }
}

impl std::fmt::Display for Step {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Step {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Step::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown step `{s}`")))
    }
}

/// One target test prediction of one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub step: Step,
    pub id: String,
    pub gold: Label,
    pub predicted: Label,
    /// Model probability of the positive class.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub step: Step,
    pub accuracy: f64,
    /// Exact binomial test against the uni-MS predictions.
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub strategy: SelectionKind,
    pub order: Order,
    pub k: usize,
    /// Number actually selected (less than `k` when the pool is smaller).
    pub selected: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentSpec,
    pub target: DomainId,
    pub steps: Vec<StepResult>,
    pub predictions: Vec<PredictionRecord>,
    pub ksweep: Vec<SweepPoint>,
    pub evidence: Vec<EvidenceRecord>,
    pub theta: Vec<ThetaRecord>,
    /// Mean attention per source over the target test set.
    pub mean_theta: Vec<(DomainId, f64)>,
    /// Pseudo-labelled source instances added per self-training model.
    pub augmented: Vec<usize>,
    pub selected: usize,
    pub attention_training: TrainReport,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn accuracy(&self, step: Step) -> Option<f64> {
        self.steps
            .iter()
            .find(|s| s.step == step)
            .map(|s| s.accuracy)
    }

    pub fn step_predictions(&self, step: Step) -> impl Iterator<Item = &PredictionRecord> {
        self.predictions.iter().filter(move |p| p.step == step)
    }

    pub fn mean_theta_of(&self, domain: &DomainId) -> Option<f64> {
        self.mean_theta
            .iter()
            .find(|(d, _)| d == domain)
            .map(|t| t.1)
    }
}

fn target_test(corpus: &Corpus) -> Result<&[Instance]> {
    let test = &corpus.target.test;
    if test.is_empty() {
        return Err(Error::Validation(format!(
            "target `{}` has no test instances",
            corpus.target_id()
        )));
    }
    for x in test {
        x.gold()?;
    }
    Ok(test)
}

fn predict_with(
    step: Step,
    test: &[Instance],
    f: impl Fn(&[f64]) -> Result<f64> + Sync,
) -> Result<Vec<PredictionRecord>> {
    test.par_iter()
        .map(|x| {
            let score = f(x.repr()?)?;
            Ok(PredictionRecord {
                step,
                id: x.id.clone(),
                gold: x.gold()?,
                predicted: Label::from_positive(score >= 0.5),
                score,
            })
        })
        .collect()
}

fn classifier_predictions(
    step: Step,
    f: &ProbClassifier,
    test: &[Instance],
) -> Result<Vec<PredictionRecord>> {
    predict_with(step, test, |x| f.prob_positive(x))
}

fn voter_predictions(voter: &MajorityVoter, test: &[Instance]) -> Result<Vec<PredictionRecord>> {
    test.par_iter()
        .map(|x| {
            let (label, conf) = voter.vote_instance(x)?;
            Ok(PredictionRecord {
                step: Step::SelfTrain,
                id: x.id.clone(),
                gold: x.gold()?,
                predicted: label,
                score: if label == Label::Positive {
                    conf
                } else {
                    1.0 - conf
                },
            })
        })
        .collect()
}

pub fn prediction_accuracy(preds: &[PredictionRecord]) -> f64 {
    let predicted: Vec<Label> = preds.iter().map(|p| p.predicted).collect();
    let gold: Vec<Label> = preds.iter().map(|p| p.gold).collect();
    accuracy(&predicted, &gold)
}

/// The no-adaptation baseline: one classifier on the union of source
/// labels, evaluated on the target test set. Returns the accuracy and the
/// per-instance predictions.
pub fn run_uni_ms(corpus: &Corpus, opts: &LearnerOptions) -> Result<(f64, Vec<PredictionRecord>)> {
    let test = target_test(corpus)?;
    let f = selftrain::train_union(corpus, opts)?;
    let preds = classifier_predictions(Step::UniMs, &f, test)?;
    Ok((prediction_accuracy(&preds), preds))
}

/// Classifier trained on pseudo-labelled target instances.
///
/// A selection holding a single class cannot train a discriminative
/// model; it yields the constant classifier whose probability is the
/// Laplace-smoothed class frequency.
pub fn train_pseudo_labelled(
    selected: &[ScoredTarget],
    opts: &LearnerOptions,
) -> Result<ProbClassifier> {
    let first = selected
        .first()
        .ok_or_else(|| Error::Argument("no pseudo-labelled instances to train on".into()))?;
    if selected
        .iter()
        .all(|s| s.pseudo_label == first.pseudo_label)
    {
        log::warn!(
            "all {} selected pseudo-labels are {}; using a constant classifier",
            selected.len(),
            first.pseudo_label
        );
        let dim = first.instance.repr()?.len();
        let logit = (selected.len() as f64 + 1.0).ln();
        return Ok(ProbClassifier {
            bias: first.pseudo_label.signed() * logit,
            ..ProbClassifier::null(dim)
        });
    }
    let xs = selected
        .iter()
        .map(|s| s.instance.repr())
        .collect::<Result<Vec<_>>>()?;
    let ys: Vec<Label> = selected.iter().map(|s| s.pseudo_label).collect();
    learner::train(&xs, &ys, opts)
}

fn pl_predictions(
    selected: &[ScoredTarget],
    test: &[Instance],
    opts: &LearnerOptions,
) -> Result<Vec<PredictionRecord>> {
    let f = train_pseudo_labelled(selected, opts)?;
    classifier_predictions(Step::PseudoLabel, &f, test)
}

/// Voter scores for every unlabelled target instance.
pub fn score_target_pool(corpus: &Corpus, voter: &MajorityVoter) -> Result<Vec<ScoredTarget>> {
    let pool = &corpus.target.unlabelled;
    let centroid = pseudo::compute_centroid(pool)?;
    pseudo::score_targets(voter, pool, &centroid)
}

/// PL-step accuracy for every (strategy, k) cell, ordered by strategy
/// then k.
pub fn sweep_scored(
    scored: &[ScoredTarget],
    test: &[Instance],
    ks: &[usize],
    strategies: &[StrategyRef],
    opts: &LearnerOptions,
) -> Result<Vec<SweepPoint>> {
    check_ascending(ks).map_err(|e| Error::Argument(e.to_string()))?;
    let cells: Vec<(StrategyRef, usize)> = strategies
        .iter()
        .flat_map(|s| ks.iter().map(move |&k| (*s, k)))
        .collect();
    cells
        .par_iter()
        .map(|&(s, k)| {
            let selected = pseudo::select(scored, &s.with_k(k))?;
            let preds = pl_predictions(&selected, test, opts)?;
            Ok(SweepPoint {
                strategy: s.kind,
                order: s.order,
                k,
                selected: selected.len(),
                accuracy: prediction_accuracy(&preds),
            })
        })
        .collect()
}

/// Loads the corpus, builds the voter and sweeps `ks` for each strategy.
pub fn sweep_k(
    spec: &ExperimentSpec,
    ks: &[usize],
    strategies: &[StrategyRef],
) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    let corpus = prepare_corpus(spec)?;
    sweep_corpus(spec, &corpus, ks, strategies)
}

/// [`sweep_k`] on an already prepared corpus.
pub fn sweep_corpus(
    spec: &ExperimentSpec,
    corpus: &Corpus,
    ks: &[usize],
    strategies: &[StrategyRef],
) -> Result<Vec<SweepPoint>> {
    let test = target_test(corpus)?;
    let st = selftrain::run(corpus, &spec.selftrain_config()).map_err(Error::in_step("Self"))?;
    let scored = score_target_pool(corpus, &st.voter).map_err(Error::in_step("PL"))?;
    sweep_scored(&scored, test, ks, strategies, &spec.learner)
}

/// Validates the spec, prepares the corpus, runs the four steps and
/// writes artifacts and the report to the output directory.
pub fn run_pipeline(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate()?;
    let corpus = prepare_corpus(spec)?;
    fs::create_dir_all(&spec.output)?;
    let report = run_on_corpus(spec, &corpus, Some(&spec.output))?;
    emit_report(&report, &spec.output)?;
    Ok(report)
}

/// Runs uni-MS, Self, PL and Att on a prepared corpus. Intermediate
/// artifacts go to `artifacts` when given; a failing step is reported by
/// name and earlier artifacts are kept.
pub fn run_on_corpus(
    spec: &ExperimentSpec,
    corpus: &Corpus,
    artifacts: Option<&Path>,
) -> Result<RunReport> {
    let started = Instant::now();
    spec.validate_parameters()?;
    let test = target_test(corpus)?;

    let (_, uni) = run_uni_ms(corpus, &spec.learner).map_err(Error::in_step("uni-MS"))?;

    let st = (|| {
        let st = selftrain::run(corpus, &spec.selftrain_config())?;
        if let Some(dir) = artifacts {
            st.voter.save(&dir.join("voter.bin"))?;
            selftrain::write_audit(&dir.join("selftrain_audit.jsonl"), &st.audit)?;
        }
        Ok(st)
    })()
    .map_err(Error::in_step("Self"))?;
    let self_preds = voter_predictions(&st.voter, test).map_err(Error::in_step("Self"))?;

    let (scored, selected, pl_preds) = (|| {
        let scored = score_target_pool(corpus, &st.voter)?;
        let selected = pseudo::select(&scored, &spec.selection)?;
        if let Some(dir) = artifacts {
            pseudo::write_selected(&dir.join("pseudo_labelled.jsonl"), &selected)?;
        }
        let preds = pl_predictions(&selected, test, &spec.learner)?;
        Ok((scored, selected, preds))
    })()
    .map_err(Error::in_step("PL"))?;

    let (model, training, att_preds) = (|| {
        let (model, training) =
            attention::fit_attention(corpus, &selected, &spec.attention_config())?;
        if let Some(dir) = artifacts {
            model.save(&dir.join("attention.bin"))?;
        }
        let preds = predict_with(Step::Attention, test, |x| model.score(x))?;
        Ok((model, training, preds))
    })()
    .map_err(Error::in_step("Att"))?;

    let ksweep = if spec.sweep.ks.is_empty() || spec.sweep.strategies.is_empty() {
        Vec::new()
    } else {
        sweep_scored(
            &scored,
            test,
            &spec.sweep.ks,
            &spec.sweep.strategies,
            &spec.learner,
        )
        .map_err(Error::in_step("sweep"))?
    };

    let (theta, mean_theta) = report::attention_mass(&model, test)?;
    let evidence = report::collect_evidence(&model, corpus, test, &spec.evidence)?;

    let mut predictions = uni;
    predictions.extend(self_preds);
    predictions.extend(pl_preds);
    predictions.extend(att_preds);
    let steps = report::step_results(&predictions)?;

    Ok(RunReport {
        config: spec.clone(),
        target: corpus.target_id().clone(),
        steps,
        predictions,
        ksweep,
        evidence,
        theta,
        mean_theta,
        augmented: st.augmented,
        selected: selected.len(),
        attention_training: training,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DomainSet;

    fn pt(id: &str, d: &str, x: &[f64], label: Option<Label>) -> Instance {
        Instance::dense(id, DomainId::from(d), x.to_vec(), label)
    }

    /// Two sources and a target on a line, positives to the right.
    fn separable() -> Corpus {
        let mut sources = Vec::new();
        for name in ["A", "B"] {
            let mut d = DomainSet::new(name.into());
            for i in 0..5 {
                let v = 1.0 + i as f64;
                d.labelled.push(pt(
                    &format!("{name}p{i}"),
                    name,
                    &[v, 1.0],
                    Some(Label::Positive),
                ));
                d.labelled.push(pt(
                    &format!("{name}n{i}"),
                    name,
                    &[-v, 1.0],
                    Some(Label::Negative),
                ));
                d.unlabelled
                    .push(pt(&format!("{name}u{i}"), name, &[v - 3.0, 1.0], None));
            }
            sources.push(d);
        }
        let mut target = DomainSet::new("T".into());
        for i in 0..10 {
            let v = 0.5 + i as f64;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            target
                .unlabelled
                .push(pt(&format!("Tu{i}"), "T", &[sign * v, 1.0], None));
            target.test.push(pt(
                &format!("Tt{i}"),
                "T",
                &[sign * v, 1.0],
                Some(Label::from_positive(sign > 0.0)),
            ));
        }
        Corpus {
            sources,
            target,
            meta: Default::default(),
        }
    }

    #[test]
    fn uni_ms_on_separable_union_is_perfect() {
        let (acc, preds) = run_uni_ms(&separable(), &LearnerOptions::default()).unwrap();
        assert_eq!(acc, 100.0);
        assert_eq!(preds.len(), 10);
    }

    #[test]
    fn null_baseline_on_balanced_test_is_fifty() {
        let corpus = separable();
        let null = ProbClassifier::null(2);
        let preds = classifier_predictions(Step::UniMs, &null, &corpus.target.test).unwrap();
        assert_eq!(prediction_accuracy(&preds), 50.0);
    }

    #[test]
    fn degenerate_settings_complete_all_steps() {
        let corpus = separable();
        let mut spec = ExperimentSpec::default();
        spec.selftrain.tau = 1.0;
        spec.selection = SelectionStrategy {
            kind: SelectionKind::SimOnly,
            order: Order::Dsc,
            k: corpus.target.unlabelled.len(),
        };
        let dir = tempfile::tempdir().unwrap();
        let report = run_on_corpus(&spec, &corpus, Some(dir.path())).unwrap();
        assert_eq!(report.steps.len(), 4);
        assert_eq!(report.augmented, vec![0, 0]);
        for f in [
            "voter.bin",
            "pseudo_labelled.jsonl",
            "attention.bin",
            "selftrain_audit.jsonl",
        ] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
    }

    #[test]
    fn single_cell_sweep_matches_pipeline() {
        let corpus = separable();
        let mut spec = ExperimentSpec::default();
        spec.selection.k = 6;
        spec.sweep = SweepConfig {
            ks: vec![6],
            strategies: vec![StrategyRef {
                kind: SelectionKind::SimOnly,
                order: Order::Dsc,
            }],
        };
        let report = run_on_corpus(&spec, &corpus, None).unwrap();
        assert_eq!(report.ksweep.len(), 1);
        assert_eq!(
            report.ksweep[0].accuracy,
            report.accuracy(Step::PseudoLabel).unwrap()
        );
        let direct = sweep_corpus(&spec, &corpus, &[6], &spec.sweep.strategies).unwrap();
        assert_eq!(direct, report.ksweep);
    }

    #[test]
    fn single_class_selection_gives_constant_classifier() {
        let corpus = separable();
        let selected: Vec<ScoredTarget> = corpus.target.unlabelled[..3]
            .iter()
            .map(|x| ScoredTarget {
                instance: x.clone(),
                pseudo_label: Label::Negative,
                prob: 0.9,
                sim: 0.5,
            })
            .collect();
        let f = train_pseudo_labelled(&selected, &LearnerOptions::default()).unwrap();
        assert!(f.weights.iter().all(|&w| w == 0.0));
        // Laplace: (3 + 1) / (3 + 2) negative
        assert!((f.prob_positive(&[4.0, 1.0]).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn unsorted_sweep_is_rejected() {
        let corpus = separable();
        let s = [StrategyRef {
            kind: SelectionKind::SimOnly,
            order: Order::Dsc,
        }];
        let spec = ExperimentSpec::default();
        assert!(sweep_corpus(&spec, &corpus, &[5, 3], &s).is_err());
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let text = r#"
            corpus = "c.jsonl"
            target = "B"
            seed = 7
            [representation]
            kind = "sif"
            vectors = "glove.txt"
            remove_pc = true
            [selftrain]
            variant = "tri-d"
            tau = 0.9
            [selection]
            kind = "prob_only"
            order = "asc"
            k = 500
            [sweep]
            ks = [100, 200]
            strategies = [{ kind = "sim_only" }, { kind = "prob_only", order = "dsc" }]
        "#;
        let spec = ExperimentSpec::from_toml(text).unwrap();
        assert_eq!(spec.target, Some(DomainId::from("B")));
        assert_eq!(spec.selection.k, 500);
        assert_eq!(spec.selftrain.variant, selftrain::Variant::TriDisagreement);
        assert_eq!(
            spec.representation,
            RepresentationConfig::Sif {
                vectors: "glove.txt".into(),
                a: DEFAULT_A,
                remove_pc: true
            }
        );
        assert_eq!(spec.selftrain_config().seed, 7);
        let again = ExperimentSpec::from_toml(&spec.to_toml().unwrap()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn missing_corpus_fails_validation() {
        let spec = ExperimentSpec {
            corpus: "/nonexistent/corpus.jsonl".into(),
            ..Default::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Validation(_))));
    }
}

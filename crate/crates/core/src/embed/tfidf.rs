//! tf-idf bag-of-words features encoded by a feed-forward network.
//!
//! Raw text is vectorised over the `vocab_cap` terms with the highest
//! document frequency (sublinear tf, smoothed idf, L2-normalised rows).
//! Pre-featurised corpora are used as-is. The encoder is trained as the
//! hidden stack of a logistic classifier on the union of source labels,
//! then frozen.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpOptimizer};
use super::Representer;
use crate::data::{Corpus, Instance, SparseVector};
use crate::optim::{Adam, AdamConfig};
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub vocab_cap: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_cap: 5000,
            hidden: vec![500, 500, 500],
            output: 500,
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TfidfVectorizer {
    vocabulary: HashMap<String, u32>,
    idf: Vec<f64>,
}

impl TfidfVectorizer {
    /// Keeps the `cap` terms with the highest document frequency
    /// (ties broken alphabetically).
    pub fn fit<'a>(docs: impl IntoIterator<Item = &'a [String]>, cap: usize) -> Self {
        let mut df: HashMap<&str, usize> = HashMap::new();
        let mut n_docs = 0usize;
        for doc in docs {
            n_docs += 1;
            let mut seen: Vec<&str> = doc.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut terms: Vec<(&str, usize)> = df.into_iter().collect();
        terms.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        terms.truncate(cap);
        // column order is alphabetical so features come out sorted
        terms.sort_by(|a, b| a.0.cmp(b.0));
        let n = n_docs as f64;
        let idf = terms
            .iter()
            .map(|&(_, d)| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        let vocabulary = terms
            .iter()
            .enumerate()
            .map(|(i, &(t, _))| (t.to_string(), i as u32))
            .collect();
        TfidfVectorizer { vocabulary, idf }
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocabulary.get(term).map(|&i| self.idf[i as usize])
    }

    pub fn transform(&self, tokens: &[String]) -> SparseVector {
        let mut tf: HashMap<u32, f64> = HashMap::new();
        for t in tokens {
            if let Some(&i) = self.vocabulary.get(t) {
                *tf.entry(i).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(u32, f64)> = tf
            .into_iter()
            .map(|(i, c)| (i, (1.0 + c.ln()) * self.idf[i as usize]))
            .collect();
        entries.sort_unstable_by_key(|e| e.0);
        let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        SparseVector {
            indices: entries.iter().map(|e| e.0).collect(),
            values: entries
                .iter()
                .map(|e| e.1 / norm.max(f64::MIN_POSITIVE))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InputMode {
    Text(TfidfVectorizer),
    /// Instances already carry tf-idf `features` of this width.
    Features(usize),
}

#[derive(Clone, Debug)]
pub struct TfidfEncoder {
    input: InputMode,
    net: Mlp,
    /// Mean training loss after each epoch.
    pub loss_trace: Vec<f64>,
}

impl TfidfEncoder {
    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn input_mode(&self) -> &InputMode {
        &self.input
    }

    fn features(&self, x: &Instance) -> Result<SparseVector> {
        match &self.input {
            InputMode::Text(v) => Ok(v.transform(&x.text)),
            InputMode::Features(_) => x
                .features
                .clone()
                .ok_or_else(|| Error::State(format!("instance `{}` has no tf-idf features", x.id))),
        }
    }
}

impl Representer for TfidfEncoder {
    fn dim(&self) -> usize {
        self.net.output_dim()
    }

    fn represent(&self, x: &Instance) -> Result<(Vec<f64>, bool)> {
        let f = self.features(x)?;
        if f.indices.is_empty() {
            return Ok((vec![0.0; self.dim()], true));
        }
        Ok((self.net.encode(&f), false))
    }
}

pub fn fit_tfidf_encoder(corpus: &Corpus, cfg: &EncoderConfig) -> Result<TfidfEncoder> {
    if cfg.batch_size == 0 {
        return Err(Error::Argument("batch size must be positive".into()));
    }
    let featurized = corpus.training_instances().all(|x| x.features.is_some());
    let input = if featurized {
        let width = corpus
            .all_instances()
            .filter_map(|x| x.features.as_ref().map(SparseVector::extent))
            .max()
            .unwrap_or(0);
        InputMode::Features(width)
    } else {
        let docs = corpus.training_instances().map(|x| x.text.as_slice());
        InputMode::Text(TfidfVectorizer::fit(docs, cfg.vocab_cap))
    };
    let width = match &input {
        InputMode::Text(v) => v.len(),
        InputMode::Features(w) => *w,
    };
    if width == 0 {
        return Err(Error::Fit("empty tf-idf vocabulary".into()));
    }
    if width < cfg.vocab_cap {
        log::warn!(
            "tf-idf vocabulary has {width} terms, fewer than the cap of {}",
            cfg.vocab_cap
        );
    }

    let mut dims = vec![width];
    dims.extend(&cfg.hidden);
    dims.push(cfg.output);
    let mut net = Mlp::new(&dims, &mut rng::substream(cfg.seed, rng::INIT));
    let mut encoder = TfidfEncoder {
        input,
        net: net.clone(),
        loss_trace: Vec::new(),
    };

    let labelled = corpus.source_labelled();
    let xs: Vec<SparseVector> = labelled
        .iter()
        .map(|x| encoder.features(x))
        .collect::<Result<_>>()?;
    let ys: Vec<f64> = labelled
        .iter()
        .map(|x| x.gold().map(|l| l.target()))
        .collect::<Result<_>>()?;

    let mut opt = MlpOptimizer::new(
        &net,
        Adam::new(AdamConfig {
            learning_rate: cfg.learning_rate,
            ..Default::default()
        }),
    );
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut shuffle = rng::substream(cfg.seed, rng::SHUFFLE);
    let all: Vec<&SparseVector> = xs.iter().collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SparseVector> = chunk.iter().map(|&i| &xs[i]).collect();
            let targets: Vec<f64> = chunk.iter().map(|&i| ys[i]).collect();
            let (_, grads) = net.loss_and_grad(&batch, &targets);
            opt.step(&mut net, &grads);
        }
        let loss = net.loss(&all, &ys);
        if !loss.is_finite() || !net.is_finite() {
            return Err(Error::Training(format!(
                "encoder loss became non-finite at epoch {epoch} (learning rate {})",
                cfg.learning_rate
            )));
        }
        log::debug!("encoder epoch {epoch}: loss {loss:.6}");
        trace.push(loss);
    }
    encoder.net = net;
    encoder.loss_trace = trace;
    Ok(encoder)
}

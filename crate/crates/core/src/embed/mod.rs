//! Document representations.
//!
//! Two paths produce the dense `repr` every later step consumes:
//! SIF-weighted averages of pre-trained word vectors ([`sif`]) and
//! tf-idf vectors pushed through a small feed-forward encoder ([`tfidf`]).

pub mod mlp;
pub mod sif;
pub mod tfidf;
pub mod vectors;

use rayon::prelude::*;

use crate::data::{Corpus, Instance};
use crate::Result;

pub use sif::{fit_sif, SifRepresenter};
pub use tfidf::{fit_tfidf_encoder, EncoderConfig, TfidfEncoder};
pub use vectors::WordVectors;

/// Output of [`embed_documents`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbedStats {
    /// Documents with no known word (they received the zero vector).
    pub empty_documents: usize,
}

pub trait Representer: Sync {
    fn dim(&self) -> usize;

    /// Representation of one instance and whether it fell back to zero.
    fn represent(&self, x: &Instance) -> Result<(Vec<f64>, bool)>;
}

pub enum AnyRepresenter {
    Sif(SifRepresenter),
    Tfidf(TfidfEncoder),
}

impl Representer for AnyRepresenter {
    fn dim(&self) -> usize {
        match self {
            AnyRepresenter::Sif(r) => r.dim(),
            AnyRepresenter::Tfidf(r) => r.dim(),
        }
    }

    fn represent(&self, x: &Instance) -> Result<(Vec<f64>, bool)> {
        match self {
            AnyRepresenter::Sif(r) => r.represent(x),
            AnyRepresenter::Tfidf(r) => r.represent(x),
        }
    }
}

/// Sets `repr` on every instance; per-instance results are independent
/// of evaluation order.
pub fn embed_documents<R: Representer + ?Sized>(
    rep: &R,
    instances: &[Instance],
) -> Result<(Vec<Instance>, EmbedStats)> {
    let reprs: Vec<(Vec<f64>, bool)> = instances
        .par_iter()
        .map(|x| rep.represent(x))
        .collect::<Result<_>>()?;
    let mut stats = EmbedStats::default();
    let out = instances
        .iter()
        .zip(reprs)
        .map(|(x, (r, empty))| {
            if empty {
                stats.empty_documents += 1;
                log::warn!(
                    "instance `{}` has no in-vocabulary token; using the zero vector",
                    x.id
                );
            }
            let mut x = x.clone();
            x.repr = Some(r);
            x
        })
        .collect();
    Ok((out, stats))
}

/// Embeds every partition of every domain in place.
pub fn embed_corpus<R: Representer + ?Sized>(rep: &R, corpus: &mut Corpus) -> Result<EmbedStats> {
    let mut total = EmbedStats::default();
    for d in corpus
        .sources
        .iter_mut()
        .chain(std::iter::once(&mut corpus.target))
    {
        for part in [&mut d.labelled, &mut d.unlabelled, &mut d.test] {
            let (embedded, stats) = embed_documents(rep, part)?;
            *part = embedded;
            total.empty_documents += stats.empty_documents;
        }
    }
    corpus.meta.dim = Some(rep.dim());
    Ok(total)
}

//! Smoothed-inverse-frequency document vectors.
//!
//! A document is the average of `a / (a + p(w)) * v_w` over its tokens
//! that have a word vector; optionally the projection onto the first
//! (uncentred) principal component of the training documents is removed.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};

use super::{Representer, WordVectors};
use crate::data::{Corpus, Instance};
use crate::{Error, Result};

pub const DEFAULT_A: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct SifRepresenter {
    vectors: Arc<WordVectors>,
    word_probs: HashMap<String, f64>,
    a: f64,
    principal_component: Option<Vec<f64>>,
}

impl SifRepresenter {
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn principal_component(&self) -> Option<&[f64]> {
        self.principal_component.as_deref()
    }

    /// Unigram probability estimated at fit time (0 for unseen words).
    pub fn word_prob(&self, word: &str) -> f64 {
        self.word_probs.get(word).copied().unwrap_or(0.0)
    }

    pub fn word_weight(&self, word: &str) -> f64 {
        self.a / (self.a + self.word_prob(word))
    }

    /// Weighted average before principal-component removal.
    fn weighted_average(&self, tokens: &[String]) -> Option<Vec<f64>> {
        let mut acc = vec![0.0; self.vectors.dim()];
        let mut n = 0usize;
        for t in tokens {
            if let Some(v) = self.vectors.get(t) {
                let w = self.word_weight(t);
                for (a, &x) in acc.iter_mut().zip(v.iter()) {
                    *a += w * f64::from(x);
                }
                n += 1;
            }
        }
        if n == 0 {
            return None;
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        Some(acc)
    }

    fn remove_component(&self, v: &mut [f64]) {
        if let Some(u) = &self.principal_component {
            let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (x, ui) in v.iter_mut().zip(u) {
                *x -= proj * ui;
            }
        }
    }
}

impl Representer for SifRepresenter {
    fn dim(&self) -> usize {
        self.vectors.dim()
    }

    fn represent(&self, x: &Instance) -> Result<(Vec<f64>, bool)> {
        match self.weighted_average(&x.text) {
            Some(mut v) => {
                self.remove_component(&mut v);
                Ok((v, false))
            }
            None => Ok((vec![0.0; self.dim()], true)),
        }
    }
}

/// Word frequencies come from every labelled and unlabelled document of
/// every domain; the principal component from the same documents.
pub fn fit_sif(
    corpus: &Corpus,
    vectors: Arc<WordVectors>,
    a: f64,
    remove_pc: bool,
) -> Result<SifRepresenter> {
    if !a.is_finite() || a <= 0.0 {
        return Err(Error::Argument(format!(
            "SIF smoothing `a` must be positive, got {a}"
        )));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut total = 0u64;
    for x in corpus.training_instances() {
        for t in &x.text {
            *counts.entry(t.as_str()).or_default() += 1;
            total += 1;
        }
    }
    if !counts.keys().any(|w| vectors.contains(w)) {
        return Err(Error::Fit(
            "no corpus word has a word vector (zero vocabulary overlap)".into(),
        ));
    }
    let word_probs = counts
        .into_iter()
        .map(|(w, c)| (w.to_string(), c as f64 / total as f64))
        .collect();
    let mut rep = SifRepresenter {
        vectors,
        word_probs,
        a,
        principal_component: None,
    };
    if remove_pc {
        let docs: Vec<Vec<f64>> = corpus
            .training_instances()
            .filter_map(|x| rep.weighted_average(&x.text))
            .collect();
        rep.principal_component = first_principal_component(&docs, rep.dim());
    }
    Ok(rep)
}

/// Leading right singular vector of the (uncentred) row matrix, by power
/// iteration. The sign is fixed so the largest-magnitude entry is positive.
pub fn first_principal_component(rows: &[Vec<f64>], dim: usize) -> Option<Vec<f64>> {
    if rows.is_empty() {
        return None;
    }
    let x = Array2::from_shape_fn((rows.len(), dim), |(i, j)| rows[i][j]);
    let gram = x.t().dot(&x);
    // start from the column sums, nudged off any exact symmetry
    let mut v: Array1<f64> =
        x.sum_axis(Axis(0)) + Array1::from_shape_fn(dim, |j| 1e-3 / (j + 1) as f64);
    let mut prev = Array1::zeros(dim);
    for _ in 0..1000 {
        let n = v.dot(&v).sqrt();
        if n == 0.0 {
            return None;
        }
        v /= n;
        if (&v - &prev).mapv(f64::abs).sum() < 1e-13 {
            break;
        }
        prev = v.clone();
        v = gram.dot(&v);
    }
    let n = v.dot(&v).sqrt();
    v /= n;
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |m, c| if c.abs() > m.abs() { c } else { m });
    if pivot < 0.0 {
        v.mapv_inplace(|c| -c);
    }
    Some(v.to_vec())
}

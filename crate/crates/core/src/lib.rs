//! Multi-source unsupervised domain adaptation.
//!
//! The pipeline has four steps, each exposed as its own module:
//!
//! 1. [`selftrain`] trains one probabilistic classifier per source domain,
//!    augments each with confident pseudo-labelled source instances and
//!    combines them in a majority voter.
//! 2. [`pseudo`] labels the target domain's unlabelled instances with that
//!    voter and keeps the ones closest (by cosine) to the target centroid.
//! 3. [`attention`] learns one embedding per source domain so that a
//!    per-instance softmax over sources, combined with a per-source
//!    relatedness map over labelled source instances, predicts the
//!    pseudo-labels.
//! 4. [`experiment`] wires the steps together, evaluates every step on the
//!    target test set and writes plot-ready tables.
//!
//! Document representations come from [`embed`] (SIF-weighted word vectors
//! or tf-idf fed through a small feed-forward encoder). [`learner`] holds
//! the logistic-regression base learner.

pub mod attention;
pub mod data;
pub mod embed;
mod error;
pub mod experiment;
pub mod learner;
pub mod linalg;
pub mod optim;
pub mod pseudo;
pub mod rng;
pub mod selftrain;

pub use error::{Error, Result};

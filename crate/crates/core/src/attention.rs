//! Per-instance attention over source domains.
//!
//! For a target vector `x`:
//!
//! * the relatedness map `psi_i(x, .)` is a softmax over domain `i`'s
//!   labelled instances of the dot products `x . x'`;
//! * the domain attention `theta(x, i)` is a softmax over domains of
//!   `x . phi_i`, where `phi_i` is a learned domain embedding;
//! * the prediction is `sigmoid(sum_i theta_i * sum_j y_ij * psi_ij)` with
//!   source labels `y` in {-1, +1}.
//!
//! Only the domain embeddings are trained. Since `psi` does not depend on
//! them, the per-domain label averages `s_i = sum_j y_ij psi_ij` are
//! computed once per training instance.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{holdout_split, Corpus, DomainId, Instance, Label};
use crate::linalg::{sigmoid, softmax};
use crate::optim::{Adam, AdamConfig, Moments};
use crate::pseudo::ScoredTarget;
use crate::rng;
use crate::{Error, Result};

const BUNDLE_MAGIC: &[u8; 8] = b"MSDAATT1";
const BUNDLE_VERSION: u32 = 1;
const LOG_EPS: f64 = 1e-12;

/// Labelled instances of one source domain, stacked row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceBank {
    pub domain: DomainId,
    pub ids: Vec<String>,
    pub matrix: Array2<f64>,
    /// +1 for positive, -1 for negative.
    pub labels: Array1<f64>,
}

impl SourceBank {
    pub fn from_instances(domain: DomainId, instances: &[Instance]) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::State(format!(
                "source domain `{domain}` has no labelled instances"
            )));
        }
        let d = instances[0].repr()?.len();
        let mut matrix = Array2::zeros((instances.len(), d));
        let mut labels = Array1::zeros(instances.len());
        for (i, x) in instances.iter().enumerate() {
            let r = x.repr()?;
            if r.len() != d {
                return Err(Error::Argument(format!(
                    "instance `{}` has dimension {} (expected {d})",
                    x.id,
                    r.len()
                )));
            }
            matrix.row_mut(i).assign(&ArrayView1::from(r));
            labels[i] = x.gold()?.signed();
        }
        Ok(SourceBank {
            domain,
            ids: instances.iter().map(|x| x.id.clone()).collect(),
            matrix,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionModel {
    /// One domain embedding per row.
    pub phis: Array2<f64>,
    pub sources: Vec<SourceBank>,
    pub trained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub domain: DomainId,
    pub id: String,
    pub label: Label,
    /// `psi * theta`; non-negative, the sign lives in `label`.
    pub weight: f64,
}

impl Evidence {
    pub fn signed_weight(&self) -> f64 {
        self.label.signed() * self.weight
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub theta: Vec<(DomainId, f64)>,
    pub evidences: Vec<Evidence>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub score: f64,
    pub label: Label,
    pub explanation: Explanation,
}

/// Xavier/Glorot uniform initialisation of an `n x d` matrix.
pub fn xavier_init(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let limit = (6.0 / (n + d) as f64).sqrt();
    let mut rng = rng::substream(seed, rng::INIT);
    Array2::from_shape_fn((n, d), |_| rng.gen_range(-limit..limit))
}

impl AttentionModel {
    pub fn new(sources: Vec<SourceBank>, phis: Array2<f64>) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::State(
                "attention model needs at least one source".into(),
            ));
        }
        let d = phis.ncols();
        if phis.nrows() != sources.len() {
            return Err(Error::Argument(format!(
                "{} domain embeddings for {} sources",
                phis.nrows(),
                sources.len()
            )));
        }
        for s in &sources {
            if s.matrix.ncols() != d {
                return Err(Error::Argument(format!(
                    "source `{}` has dimension {} (embeddings have {d})",
                    s.domain,
                    s.matrix.ncols()
                )));
            }
            if s.matrix.nrows() != s.labels.len() || s.labels.len() != s.ids.len() {
                return Err(Error::Argument(format!(
                    "source `{}` has mismatched rows and labels",
                    s.domain
                )));
            }
        }
        Ok(AttentionModel {
            phis,
            sources,
            trained: false,
        })
    }

    /// Untrained model over the corpus's labelled sources, Xavier-initialised.
    pub fn from_corpus(corpus: &Corpus, seed: u64) -> Result<Self> {
        let sources = corpus
            .sources
            .iter()
            .map(|d| SourceBank::from_instances(d.domain.clone(), &d.labelled))
            .collect::<Result<Vec<_>>>()?;
        let d = sources
            .first()
            .map(|s| s.matrix.ncols())
            .ok_or_else(|| Error::State("corpus has no sources".into()))?;
        let phis = xavier_init(sources.len(), d, seed);
        AttentionModel::new(sources, phis)
    }

    pub fn n_domains(&self) -> usize {
        self.sources.len()
    }

    pub fn dim(&self) -> usize {
        self.phis.ncols()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Argument(format!(
                "input has dimension {} but the model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Softmax over domain `domain`'s labelled instances of `x . x'`.
    pub fn relatedness(&self, x: &[f64], domain: usize) -> Result<Array1<f64>> {
        self.check_dim(x)?;
        let bank = self
            .sources
            .get(domain)
            .ok_or_else(|| Error::Argument(format!("no source domain #{domain}")))?;
        if bank.is_empty() {
            return Err(Error::State(format!(
                "source `{}` has no labelled instances",
                bank.domain
            )));
        }
        let logits = bank.matrix.dot(&ArrayView1::from(x));
        Ok(softmax(logits.view()))
    }

    /// Softmax over domains of `x . phi_i`.
    pub fn domain_attention(&self, x: &[f64]) -> Result<Array1<f64>> {
        self.check_dim(x)?;
        Ok(softmax(self.phis.dot(&ArrayView1::from(x)).view()))
    }

    /// `s_i = sum_j y_ij psi_ij`, one value per domain, each in [-1, 1].
    pub fn domain_scores(&self, x: &[f64]) -> Result<Array1<f64>> {
        (0..self.n_domains())
            .map(|i| Ok(self.relatedness(x, i)?.dot(&self.sources[i].labels)))
            .collect::<Result<Vec<_>>>()
            .map(Array1::from)
    }

    /// Pre-sigmoid score; lies in [-1, 1].
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        let theta = self.domain_attention(x)?;
        Ok(theta.dot(&self.domain_scores(x)?))
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    /// Score, label (positive iff score >= 0.5) and the `top` strongest
    /// evidences.
    pub fn predict(&self, x: &[f64], top: usize) -> Result<Prediction> {
        let theta = self.domain_attention(x)?;
        let mut logit = 0.0;
        let mut evidences = Vec::new();
        for (i, bank) in self.sources.iter().enumerate() {
            let psi = self.relatedness(x, i)?;
            logit += theta[i] * psi.dot(&bank.labels);
            evidences.extend(psi.iter().enumerate().map(|(j, &p)| Evidence {
                domain: bank.domain.clone(),
                id: bank.ids[j].clone(),
                label: Label::from_positive(bank.labels[j] > 0.0),
                weight: p * theta[i],
            }));
        }
        evidences.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.id.cmp(&b.id)));
        evidences.truncate(top);
        let score = sigmoid(logit);
        Ok(Prediction {
            score,
            label: Label::from_positive(score >= 0.5),
            explanation: Explanation {
                theta: self
                    .sources
                    .iter()
                    .zip(theta.iter())
                    .map(|(s, &t)| (s.domain.clone(), t))
                    .collect(),
                evidences,
            },
        })
    }

    pub fn predict_instance(&self, x: &Instance, top: usize) -> Result<Prediction> {
        self.predict(x.repr()?, top)
    }

    /// Rescaled cross-entropy summed over `batch`.
    pub fn loss(&self, batch: &[WeightedTarget]) -> Result<f64> {
        let mut total = 0.0;
        for t in batch {
            let s = self.domain_scores(&t.x)?;
            total += self.point_loss(t, s.view(), None)?;
        }
        Ok(total)
    }

    /// Loss and its gradient with respect to the domain embeddings.
    pub fn loss_and_grad(&self, batch: &[WeightedTarget]) -> Result<(f64, Array2<f64>)> {
        let mut grad = Array2::zeros(self.phis.raw_dim());
        let mut total = 0.0;
        for t in batch {
            let s = self.domain_scores(&t.x)?;
            total += self.point_loss(t, s.view(), Some(&mut grad))?;
        }
        Ok((total, grad))
    }

    /// Loss of one target given its cached domain scores; accumulates
    /// `d loss / d phi` into `grad` when given.
    fn point_loss(
        &self,
        t: &WeightedTarget,
        s: ArrayView1<'_, f64>,
        grad: Option<&mut Array2<f64>>,
    ) -> Result<f64> {
        let x = ArrayView1::from(t.x.as_slice());
        let theta = self.domain_attention(&t.x)?;
        let z = theta.dot(&s);
        let y_hat = sigmoid(z).clamp(LOG_EPS, 1.0 - LOG_EPS);
        let loss = -t.lambda * (t.target * y_hat.ln() + (1.0 - t.target) * (1.0 - y_hat).ln());
        if let Some(grad) = grad {
            // dE/dz = lambda (y_hat - y*); dz/dphi_k = theta_k (s_k - z) x
            let dz = t.lambda * (sigmoid(z) - t.target);
            for k in 0..self.n_domains() {
                let c = dz * theta[k] * (s[k] - z);
                grad.row_mut(k).scaled_add(c, &x);
            }
        }
        Ok(loss)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(BUNDLE_MAGIC)?;
        w.write_u32::<LittleEndian>(BUNDLE_VERSION)?;
        w.write_u64::<LittleEndian>(self.n_domains() as u64)?;
        w.write_u64::<LittleEndian>(self.dim() as u64)?;
        w.write_u8(u8::from(self.trained))?;
        for &v in self.phis.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
        for bank in &self.sources {
            write_str(w, bank.domain.as_str())?;
            w.write_u64::<LittleEndian>(bank.len() as u64)?;
            for (id, &y) in bank.ids.iter().zip(bank.labels.iter()) {
                write_str(w, id)?;
                w.write_i8(if y > 0.0 { 1 } else { -1 })?;
            }
            for &v in bank.matrix.iter() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BUNDLE_MAGIC {
            return Err(Error::Format("not an attention model bundle".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != BUNDLE_VERSION {
            return Err(Error::Format(format!(
                "unsupported bundle version {version}"
            )));
        }
        let n = r.read_u64::<LittleEndian>()? as usize;
        let d = r.read_u64::<LittleEndian>()? as usize;
        let trained = r.read_u8()? != 0;
        let mut phi = vec![0.0; n * d];
        r.read_f64_into::<LittleEndian>(&mut phi)?;
        let phis = Array2::from_shape_vec((n, d), phi).map_err(|e| Error::Format(e.to_string()))?;
        let mut sources = Vec::with_capacity(n);
        for _ in 0..n {
            let domain = DomainId(read_str(r)?);
            let rows = r.read_u64::<LittleEndian>()? as usize;
            let mut ids = Vec::with_capacity(rows);
            let mut labels = Array1::zeros(rows);
            for j in 0..rows {
                ids.push(read_str(r)?);
                labels[j] = f64::from(r.read_i8()?);
            }
            let mut m = vec![0.0; rows * d];
            r.read_f64_into::<LittleEndian>(&mut m)?;
            let matrix =
                Array2::from_shape_vec((rows, d), m).map_err(|e| Error::Format(e.to_string()))?;
            sources.push(SourceBank {
                domain,
                ids,
                matrix,
                labels,
            });
        }
        let mut model = AttentionModel::new(sources, phis)?;
        model.trained = trained;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

/// A pseudo-labelled target with its loss weight.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedTarget {
    pub id: String,
    pub x: Vec<f64>,
    /// Cross-entropy target in {0, 1}.
    pub target: f64,
    pub lambda: f64,
}

/// Similarities normalised to sum to one. Negative similarities count as
/// zero; if nothing is positive the weights are uniform.
pub fn rescaling_factors(sims: &[f64]) -> Result<Vec<f64>> {
    if sims.is_empty() {
        return Err(Error::Argument(
            "no pseudo-labelled instances to weight".into(),
        ));
    }
    if sims.iter().any(|s| !s.is_finite()) {
        return Err(Error::Argument("non-finite similarity".into()));
    }
    let clamped: Vec<f64> = sims.iter().map(|s| s.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total == 0.0 {
        log::warn!("no positive similarity among pseudo-labelled instances; using uniform weights");
        return Ok(vec![1.0 / sims.len() as f64; sims.len()]);
    }
    Ok(clamped.iter().map(|s| s / total).collect())
}

/// Attaches loss weights normalised over the whole pseudo-labelled set.
pub fn weight_targets(selected: &[ScoredTarget]) -> Result<Vec<WeightedTarget>> {
    let sims: Vec<f64> = selected.iter().map(|s| s.sim).collect();
    let lambdas = rescaling_factors(&sims)?;
    selected
        .iter()
        .zip(lambdas)
        .map(|(s, lambda)| {
            Ok(WeightedTarget {
                id: s.instance.id.clone(),
                x: s.instance.repr()?.to_vec(),
                target: s.pseudo_label.target(),
                lambda,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 200,
            patience: 5,
            seed: 0,
            batch_size: 32,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub trace: Vec<EpochLoss>,
    /// Epoch whose embeddings were kept (0 = initialisation).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

struct Cached<'a> {
    target: &'a WeightedTarget,
    scores: Array1<f64>,
}

fn cache<'a>(model: &AttentionModel, set: &'a [WeightedTarget]) -> Result<Vec<Cached<'a>>> {
    use rayon::prelude::*;
    set.par_iter()
        .map(|t| {
            Ok(Cached {
                target: t,
                scores: model.domain_scores(&t.x)?,
            })
        })
        .collect()
}

fn cached_loss(model: &AttentionModel, set: &[Cached<'_>]) -> Result<f64> {
    let mut total = 0.0;
    for c in set {
        total += model.point_loss(c.target, c.scores.view(), None)?;
    }
    Ok(total)
}

/// Mini-batch Adam on the domain embeddings with early stopping on the
/// validation loss; the best embeddings are kept.
pub fn train(
    model: &mut AttentionModel,
    train_set: &[WeightedTarget],
    validation: &[WeightedTarget],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if !cfg.learning_rate.is_finite() || cfg.learning_rate <= 0.0 {
        return Err(Error::Argument(format!(
            "learning rate must be positive, got {}",
            cfg.learning_rate
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Argument("batch size must be positive".into()));
    }
    if train_set.is_empty() {
        return Err(Error::Argument("empty attention training set".into()));
    }
    let train_c = cache(model, train_set)?;
    let val_c = cache(model, validation)?;
    let monitor = |m: &AttentionModel| -> Result<(f64, f64)> {
        let tr = cached_loss(m, &train_c)?;
        let va = if val_c.is_empty() {
            tr
        } else {
            cached_loss(m, &val_c)?
        };
        Ok((tr, va))
    };

    let mut adam = Adam::new(AdamConfig {
        learning_rate: cfg.learning_rate,
        ..Default::default()
    });
    let mut moments = Moments::zeros(model.phis.len());
    let mut order: Vec<usize> = (0..train_c.len()).collect();
    let mut shuffle = rng::substream(cfg.seed, rng::SHUFFLE);
    let (_, mut best_val) = monitor(model)?;
    let mut best_phis = model.phis.clone();
    let mut best_epoch = 0;
    let mut trace = Vec::new();
    let mut stopped_early = false;
    let mut grad = Array2::zeros(model.phis.raw_dim());

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            for &i in chunk {
                let c = &train_c[i];
                model.point_loss(c.target, c.scores.view(), Some(&mut grad))?;
            }
            adam.begin_step();
            adam.update(
                &mut moments,
                model.phis.as_slice_mut().expect("standard layout"),
                grad.as_slice().expect("standard layout"),
            );
        }
        let (tr, va) = monitor(model)?;
        if !tr.is_finite() || !va.is_finite() || model.phis.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite attention loss at epoch {epoch} (learning rate {})",
                cfg.learning_rate
            )));
        }
        trace.push(EpochLoss {
            epoch,
            train: tr,
            validation: va,
        });
        if va < best_val {
            best_val = va;
            best_phis.assign(&model.phis);
            best_epoch = epoch;
        } else if epoch - best_epoch >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    model.phis = best_phis;
    model.trained = true;
    Ok(TrainReport {
        trace,
        best_epoch,
        stopped_early,
    })
}

/// Weights the pseudo-labelled set, holds out a validation part, builds
/// a Xavier-initialised model over the corpus sources and trains it.
pub fn fit_attention(
    corpus: &Corpus,
    selected: &[ScoredTarget],
    cfg: &TrainConfig,
) -> Result<(AttentionModel, TrainReport)> {
    let weighted = weight_targets(selected)?;
    let (train_set, validation) = match holdout_split(&weighted, cfg.validation_fraction, cfg.seed)
    {
        Ok(split) => split,
        Err(e) => {
            log::warn!("no validation split ({e}); early stopping monitors the training loss");
            (weighted, Vec::new())
        }
    };
    let mut model = AttentionModel::from_corpus(corpus, cfg.seed)?;
    let report = train(&mut model, &train_set, &validation, cfg)?;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn bank(domain: &str, rows: Array2<f64>, labels: &[f64]) -> SourceBank {
        SourceBank {
            domain: DomainId::from(domain),
            ids: (0..rows.nrows()).map(|i| format!("{domain}{i}")).collect(),
            matrix: rows,
            labels: Array1::from(labels.to_vec()),
        }
    }

    fn two_domain_model() -> AttentionModel {
        AttentionModel::new(
            vec![
                bank("A", array![[1.0, 0.0], [0.0, 1.0]], &[1.0, -1.0]),
                bank(
                    "B",
                    array![[0.5, 0.5], [-1.0, 0.2], [0.3, -0.4]],
                    &[-1.0, 1.0, 1.0],
                ),
            ],
            array![[0.2, -0.1], [-0.3, 0.4]],
        )
        .unwrap()
    }

    #[test]
    fn relatedness_closed_form() {
        let m = AttentionModel::new(
            vec![bank("A", array![[0.0], [1.0]], &[1.0, -1.0])],
            array![[0.0]],
        )
        .unwrap();
        let psi = m.relatedness(&[3f64.ln()], 0).unwrap();
        assert!((psi[0] - 0.25).abs() < 1e-12 && (psi[1] - 0.75).abs() < 1e-12);
        // equal dot products -> uniform
        let psi = m.relatedness(&[0.0], 0).unwrap();
        assert_eq!(psi.to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn attention_closed_form() {
        let m = AttentionModel::new(
            vec![
                bank("A", array![[1.0]], &[1.0]),
                bank("B", array![[1.0]], &[1.0]),
            ],
            array![[0.0], [9f64.ln()]],
        )
        .unwrap();
        let theta = m.domain_attention(&[1.0]).unwrap();
        assert!((theta[0] - 0.1).abs() < 1e-12 && (theta[1] - 0.9).abs() < 1e-12);
        assert_eq!(m.domain_attention(&[0.0]).unwrap().to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn all_positive_sources_give_sigmoid_one() {
        let m = AttentionModel::new(
            vec![
                bank("A", array![[1.0, 2.0], [0.0, -1.0]], &[1.0, 1.0]),
                bank("B", array![[3.0, 0.1]], &[1.0]),
            ],
            array![[0.7, 0.1], [-0.2, 0.5]],
        )
        .unwrap();
        let p = m.predict(&[0.3, -1.2], 5).unwrap();
        assert!((p.score - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert_eq!(p.label, Label::Positive);
        let total: f64 = p.explanation.evidences.iter().map(|e| e.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evidences_are_ranked_and_truncated() {
        let m = two_domain_model();
        let p = m.predict(&[0.4, -0.9], 3).unwrap();
        assert_eq!(p.explanation.evidences.len(), 3);
        let w: Vec<f64> = p.explanation.evidences.iter().map(|e| e.weight).collect();
        assert!(w.windows(2).all(|p| p[0] >= p[1]));
        let theta: f64 = p.explanation.theta.iter().map(|t| t.1).sum();
        assert!((theta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_argument_error() {
        let m = two_domain_model();
        assert!(matches!(m.predict(&[1.0], 1), Err(Error::Argument(_))));
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(rescaling_factors(&[0.37]).unwrap(), vec![1.0]);
        let l = rescaling_factors(&[0.6, 0.2]).unwrap();
        assert!((l[0] - 0.75).abs() < 1e-15 && (l[1] - 0.25).abs() < 1e-15);
        assert_eq!(rescaling_factors(&[-0.5, 0.5]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn weighted_cross_entropy_by_hand() {
        let m = two_domain_model();
        let xs = [vec![0.4, -0.9], vec![-1.0, 0.3]];
        let batch: Vec<WeightedTarget> = xs
            .iter()
            .zip([(1.0, 0.75), (0.0, 0.25)])
            .enumerate()
            .map(|(i, (x, (target, lambda)))| WeightedTarget {
                id: i.to_string(),
                x: x.clone(),
                target,
                lambda,
            })
            .collect();
        let p0 = m.score(&xs[0]).unwrap();
        let p1 = m.score(&xs[1]).unwrap();
        let want = -0.75 * p0.ln() - 0.25 * (1.0 - p1).ln();
        assert!((m.loss(&batch).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_keep_initialisation() {
        let mut m = two_domain_model();
        m.phis = xavier_init(2, 2, 17);
        let init = m.phis.clone();
        let t = vec![WeightedTarget {
            id: "a".into(),
            x: vec![1.0, 0.0],
            target: 1.0,
            lambda: 1.0,
        }];
        let cfg = TrainConfig {
            max_epochs: 0,
            ..Default::default()
        };
        let r = train(&mut m, &t, &[], &cfg).unwrap();
        assert!(r.trace.is_empty());
        assert_eq!(m.phis, init);
    }

    #[test]
    fn xavier_bounds() {
        let p = xavier_init(3, 300, 1);
        let limit = (6.0f64 / 303.0).sqrt();
        assert!(p.iter().all(|v| v.abs() <= limit));
        assert_eq!(p, xavier_init(3, 300, 1));
    }

    #[test]
    fn bundle_round_trip() {
        let mut m = two_domain_model();
        m.trained = true;
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(AttentionModel::read_from(&mut buf.as_slice()).unwrap(), m);
    }
}

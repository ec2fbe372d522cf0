//! Base learner: L2-regularised logistic regression and a majority voter
//! over several of them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::data::{Instance, Label};
use crate::linalg::{dot, norm, sigmoid};
use crate::{Error, Result};

const CLASSIFIER_MAGIC: &[u8; 8] = b"MSDALR01";
const VOTER_MAGIC: &[u8; 8] = b"MSDAVT01";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerOptions {
    /// L2 strength on the weights (bias is not penalised).
    pub reg: f64,
    pub max_iter: usize,
    /// Stop when the gradient norm of the mean objective falls below this.
    pub tol: f64,
}

impl Default for LearnerOptions {
    fn default() -> Self {
        LearnerOptions {
            reg: 1.0,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub reg: f64,
}

/// How a fit ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitSummary {
    pub iterations: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub converged: bool,
}

impl ProbClassifier {
    pub fn null(dim: usize) -> Self {
        ProbClassifier {
            weights: vec![0.0; dim],
            bias: 0.0,
            reg: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Argument(format!(
                "input has dimension {} but the classifier expects {}",
                x.len(),
                self.weights.len()
            )));
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    pub fn prob_positive(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.decision(x)?))
    }

    /// Most probable label and its probability (ties go to positive).
    pub fn predict_proba(&self, x: &[f64]) -> Result<(Label, f64)> {
        let p = self.prob_positive(x)?;
        Ok(if p >= 0.5 {
            (Label::Positive, p)
        } else {
            (Label::Negative, 1.0 - p)
        })
    }

    pub fn predict_instance(&self, x: &Instance) -> Result<(Label, f64)> {
        self.predict_proba(x.repr()?)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CLASSIFIER_MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u64::<LittleEndian>(self.weights.len() as u64)?;
        for &v in &self.weights {
            w.write_f64::<LittleEndian>(v)?;
        }
        w.write_f64::<LittleEndian>(self.bias)?;
        w.write_f64::<LittleEndian>(self.reg)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CLASSIFIER_MAGIC {
            return Err(Error::Format("not a classifier file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported classifier version {version}"
            )));
        }
        let d = r.read_u64::<LittleEndian>()? as usize;
        let mut weights = vec![0.0; d];
        r.read_f64_into::<LittleEndian>(&mut weights)?;
        let bias = r.read_f64::<LittleEndian>()?;
        let reg = r.read_f64::<LittleEndian>()?;
        Ok(ProbClassifier { weights, bias, reg })
    }
}

/// Mean logistic loss plus `reg / (2n) * |w|^2`, with gradient.
/// Parameters are laid out as `[w..., b]`.
fn objective(xs: &[&[f64]], ys: &[f64], reg: f64, params: &[f64], grad: &mut [f64]) -> f64 {
    let d = params.len() - 1;
    let n = xs.len() as f64;
    let (w, b) = (&params[..d], params[d]);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = dot(w, x) + b;
        // log(1 + e^z) - y z, evaluated stably
        let softplus = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        loss += softplus - y * z;
        let r = sigmoid(z) - y;
        for (g, xi) in grad[..d].iter_mut().zip(x.iter()) {
            *g += r * xi;
        }
        grad[d] += r;
    }
    let sq: f64 = w.iter().map(|v| v * v).sum();
    loss = loss / n + 0.5 * reg / n * sq;
    for (g, wi) in grad[..d].iter_mut().zip(w) {
        *g = *g / n + reg / n * wi;
    }
    grad[d] /= n;
    loss
}

/// Limited-memory BFGS with Armijo backtracking; deterministic from a zero start.
fn lbfgs(
    dim: usize,
    opts: &LearnerOptions,
    mut f: impl FnMut(&[f64], &mut [f64]) -> f64,
) -> (Vec<f64>, FitSummary) {
    const MEMORY: usize = 10;
    let mut x = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut fx = f(&x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut converged = norm(&g) < opts.tol;
    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        // two-loop recursion
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        let gamma = if k > 0 {
            dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1])
        } else {
            1.0 / norm(&g).max(1.0)
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for i in 0..k {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &q);
            for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            // not a descent direction: fall back to steepest descent
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for ((xn, xi), di) in x_new.iter_mut().zip(&x).zip(&dir) {
                *xn = xi + step * di;
            }
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                if dot(&s, &y) > 1e-12 {
                    if s_hist.len() == MEMORY {
                        s_hist.remove(0);
                        y_hist.remove(0);
                    }
                    s_hist.push(s);
                    y_hist.push(y);
                }
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        converged = norm(&g) < opts.tol;
    }
    let grad_norm = norm(&g);
    (
        x,
        FitSummary {
            iterations,
            loss: fx,
            grad_norm,
            converged,
        },
    )
}

/// Fits a classifier on dense inputs.
pub fn train(xs: &[&[f64]], ys: &[Label], opts: &LearnerOptions) -> Result<ProbClassifier> {
    train_with_summary(xs, ys, opts).map(|(m, _)| m)
}

pub fn train_with_summary(
    xs: &[&[f64]],
    ys: &[Label],
    opts: &LearnerOptions,
) -> Result<(ProbClassifier, FitSummary)> {
    if xs.len() != ys.len() {
        return Err(Error::Argument(format!(
            "{} inputs but {} labels",
            xs.len(),
            ys.len()
        )));
    }
    for needed in [Label::Negative, Label::Positive] {
        if !ys.contains(&needed) {
            return Err(Error::Training(format!(
                "training set has no {needed} instances"
            )));
        }
    }
    let d = xs[0].len();
    if let Some(bad) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::Argument(format!(
            "mixed input dimensions {d} and {}",
            bad.len()
        )));
    }
    if xs.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::Training("non-finite input value".into()));
    }
    let targets: Vec<f64> = ys.iter().map(|y| y.target()).collect();
    let (params, summary) = lbfgs(d + 1, opts, |p, g| objective(xs, &targets, opts.reg, p, g));
    if !summary.converged {
        log::debug!(
            "logistic regression stopped after {} iterations (|g| = {:.3e})",
            summary.iterations,
            summary.grad_norm
        );
    }
    let mut weights = params;
    let bias = weights.pop().unwrap_or(0.0);
    Ok((
        ProbClassifier {
            weights,
            bias,
            reg: opts.reg,
        },
        summary,
    ))
}

/// Fits on labelled instances with representations.
pub fn train_instances(instances: &[&Instance], opts: &LearnerOptions) -> Result<ProbClassifier> {
    let xs = instances
        .iter()
        .map(|x| x.repr())
        .collect::<Result<Vec<_>>>()?;
    let ys = instances
        .iter()
        .map(|x| x.gold())
        .collect::<Result<Vec<_>>>()?;
    train(&xs, &ys, opts)
}

/// Fraction (in percent) of instances whose predicted label equals their gold label.
pub fn accuracy(predicted: &[Label], gold: &[Label]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(gold).filter(|(a, b)| a == b).count();
    100.0 * hits as f64 / gold.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct MajorityVoter {
    pub members: Vec<ProbClassifier>,
}

impl MajorityVoter {
    pub fn new(members: Vec<ProbClassifier>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::State(
                "majority voter needs at least one member".into(),
            ));
        }
        let d = members[0].dim();
        if members.iter().any(|m| m.dim() != d) {
            return Err(Error::Argument(
                "voter members disagree on dimension".into(),
            ));
        }
        Ok(MajorityVoter { members })
    }

    /// Mode of member labels; ties go to the class with the higher mean
    /// probability. Confidence is the mean probability of the winner.
    pub fn vote(&self, x: &[f64]) -> Result<(Label, f64)> {
        if self.members.is_empty() {
            return Err(Error::State("majority voter has no members".into()));
        }
        let mut pos_votes = 0usize;
        let mut mean_pos = 0.0;
        for m in &self.members {
            let p = m.prob_positive(x)?;
            if p >= 0.5 {
                pos_votes += 1;
            }
            mean_pos += p;
        }
        let n = self.members.len();
        mean_pos /= n as f64;
        let mean_neg = 1.0 - mean_pos;
        let neg_votes = n - pos_votes;
        let label = match pos_votes.cmp(&neg_votes) {
            std::cmp::Ordering::Greater => Label::Positive,
            std::cmp::Ordering::Less => Label::Negative,
            std::cmp::Ordering::Equal => Label::from_positive(mean_pos >= mean_neg),
        };
        let conf = match label {
            Label::Positive => mean_pos,
            Label::Negative => mean_neg,
        };
        Ok((label, conf))
    }

    pub fn vote_instance(&self, x: &Instance) -> Result<(Label, f64)> {
        self.vote(x.repr()?)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(VOTER_MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u64::<LittleEndian>(self.members.len() as u64)?;
        for m in &self.members {
            m.write_to(w)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != VOTER_MAGIC {
            return Err(Error::Format("not a voter file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported voter version {version}"
            )));
        }
        let n = r.read_u64::<LittleEndian>()? as usize;
        let members = (0..n)
            .map(|_| ProbClassifier::read_from(r))
            .collect::<Result<Vec<_>>>()?;
        MajorityVoter::new(members)
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

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn fixed(w: Vec<f64>, b: f64) -> ProbClassifier {
        ProbClassifier {
            weights: w,
            bias: b,
            reg: 0.0,
        }
    }

    #[test]
    fn separable_pair_is_fit_exactly() {
        let a = [1.0, 0.0];
        let b = [-1.0, 0.0];
        let m = train(
            &[&a, &b],
            &[Label::Positive, Label::Negative],
            &LearnerOptions::default(),
        )
        .unwrap();
        assert_eq!(m.predict_proba(&a).unwrap().0, Label::Positive);
        assert_eq!(m.predict_proba(&b).unwrap().0, Label::Negative);
    }

    #[test]
    fn single_class_input_names_missing_class() {
        let a = [1.0];
        let err = train(&[&a], &[Label::Positive], &LearnerOptions::default()).unwrap_err();
        assert!(err.to_string().contains("negative"), "{err}");
    }

    #[test]
    fn converges_below_gradient_tolerance() {
        let mut rng = crate::rng::substream(3, "test");
        let n = Normal::new(0.0, 1.0).unwrap();
        let pts: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..4).map(|_| n.sample(&mut rng)).collect())
            .collect();
        let ys: Vec<Label> = pts
            .iter()
            .map(|p| Label::from_positive(p[0] + 0.5 * p[1] > 0.1))
            .collect();
        let xs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let (_, s) = train_with_summary(&xs, &ys, &LearnerOptions::default()).unwrap();
        assert!(s.converged && s.grad_norm < 1e-6, "{s:?}");
    }

    #[test]
    fn probabilities_are_complementary() {
        let mut rng = crate::rng::substream(9, "test");
        let m = fixed(vec![0.3, -1.7, 2.2], 0.4);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let p = m.prob_positive(&x).unwrap();
            let (label, conf) = m.predict_proba(&x).unwrap();
            assert!((p + (1.0 - p) - 1.0).abs() <= 1e-9);
            assert!((0.5..=1.0).contains(&conf));
            assert_eq!(label == Label::Positive, p >= 0.5);
        }
    }

    #[test]
    fn boundary_and_null_model() {
        let m = fixed(vec![1.0, -1.0], 0.0);
        assert_eq!(m.predict_proba(&[2.0, 2.0]).unwrap().1, 0.5);
        let null = ProbClassifier::null(3);
        assert_eq!(null.predict_proba(&[4.0, -2.0, 9.0]).unwrap().1, 0.5);
    }

    #[test]
    fn hand_set_weights() {
        let m = fixed(vec![1.0, 0.0], 0.0);
        let (label, p) = m.predict_proba(&[2.0, 5.0]).unwrap();
        assert_eq!(label, Label::Positive);
        assert!((p - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn dimension_mismatch_is_an_argument_error() {
        let m = fixed(vec![1.0, 0.0], 0.0);
        assert!(matches!(m.predict_proba(&[1.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn vote_examples() {
        let pos = fixed(vec![1.0], 0.0);
        let neg = fixed(vec![-1.0], 0.0);
        let x = [1.0];
        let v = MajorityVoter::new(vec![pos.clone(), pos.clone(), pos.clone()]).unwrap();
        assert_eq!(v.vote(&x).unwrap().0, Label::Positive);
        let v = MajorityVoter::new(vec![pos.clone(), pos.clone(), neg.clone()]).unwrap();
        assert_eq!(v.vote(&x).unwrap().0, Label::Positive);
        assert!(MajorityVoter::new(vec![]).is_err());
    }

    #[test]
    fn tie_goes_to_higher_mean_probability() {
        // a votes pos with P(pos) = 0.7, b votes neg with P(neg) = 0.6:
        // mean P(pos) = (0.7 + 0.4) / 2 = 0.55 beats mean P(neg) = 0.45
        let a = fixed(vec![0.0], (0.7f64 / 0.3).ln());
        let b = fixed(vec![0.0], (0.4f64 / 0.6).ln());
        let v = MajorityVoter::new(vec![a, b]).unwrap();
        let (label, conf) = v.vote(&[0.0]).unwrap();
        assert_eq!(label, Label::Positive);
        assert!((conf - 0.55).abs() < 1e-12);
    }

    #[test]
    fn serialization_round_trip() {
        let v = MajorityVoter::new(vec![
            fixed(vec![0.25, -3.0], 1.5),
            fixed(vec![1e-9, 2.0], -0.5),
        ])
        .unwrap();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        assert_eq!(MajorityVoter::read_from(&mut buf.as_slice()).unwrap(), v);
        assert!(ProbClassifier::read_from(&mut buf.as_slice()).is_err());
    }
}

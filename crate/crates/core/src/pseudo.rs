//! Target pseudo-labels and their selection.
//!
//! Every unlabelled target instance is labelled by the voter and scored
//! by its cosine similarity to the target centroid; a
//! [`SelectionStrategy`] then keeps `k` of them.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DomainId, Instance, Label};
use crate::learner::MajorityVoter;
use crate::linalg::{dot, norm};
use crate::{Error, Result};

pub const DEFAULT_K: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct TargetCentroid {
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredTarget {
    pub instance: Instance,
    pub pseudo_label: Label,
    /// Voter confidence in `pseudo_label`.
    pub prob: f64,
    /// Cosine similarity to the target centroid.
    pub sim: f64,
}

/// Arithmetic mean of the representations.
pub fn compute_centroid(targets: &[Instance]) -> Result<TargetCentroid> {
    let first = targets
        .first()
        .ok_or_else(|| Error::Argument("centroid of an empty target set".into()))?;
    let d = first.repr()?.len();
    let mut acc = vec![0.0; d];
    for x in targets {
        let r = x.repr()?;
        if r.len() != d {
            return Err(Error::Argument(format!(
                "instance `{}` has dimension {} (expected {d})",
                x.id,
                r.len()
            )));
        }
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = targets.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    if acc.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("target centroid is not finite".into()));
    }
    Ok(TargetCentroid { vector: acc })
}

/// Cosine similarity; defined as 0 when either vector is zero.
pub fn cosine(x: &[f64], c: &[f64]) -> Result<f64> {
    if x.len() != c.len() {
        return Err(Error::Argument(format!(
            "cosine between dimensions {} and {}",
            x.len(),
            c.len()
        )));
    }
    let (nx, nc) = (norm(x), norm(c));
    if nx == 0.0 || nc == 0.0 {
        log::warn!("cosine similarity with a zero vector; using 0");
        return Ok(0.0);
    }
    Ok((dot(x, c) / (nx * nc)).clamp(-1.0, 1.0))
}

pub fn similarity(x: &Instance, c: &TargetCentroid) -> Result<f64> {
    cosine(x.repr()?, &c.vector)
}

pub fn score_targets(
    voter: &MajorityVoter,
    targets: &[Instance],
    c: &TargetCentroid,
) -> Result<Vec<ScoredTarget>> {
    targets
        .par_iter()
        .map(|x| {
            let (pseudo_label, prob) = voter.vote_instance(x)?;
            Ok(ScoredTarget {
                instance: x.clone(),
                pseudo_label,
                prob,
                sim: similarity(x, c)?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKind {
    ProbOnly,
    SimOnly,
    /// Rank by prob, break ties by sim.
    ProbSim,
    /// Rank by sim, break ties by prob.
    SimProb,
    ProbTimesSim,
    ProbPlusSim,
}

impl SelectionKind {
    pub const ALL: [SelectionKind; 6] = [
        SelectionKind::ProbOnly,
        SelectionKind::SimOnly,
        SelectionKind::ProbSim,
        SelectionKind::SimProb,
        SelectionKind::ProbTimesSim,
        SelectionKind::ProbPlusSim,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionKind::ProbOnly => "prob_only",
            SelectionKind::SimOnly => "sim_only",
            SelectionKind::ProbSim => "prob_sim",
            SelectionKind::SimProb => "sim_prob",
            SelectionKind::ProbTimesSim => "prob_times_sim",
            SelectionKind::ProbPlusSim => "prob_plus_sim",
        }
    }
}

impl std::str::FromStr for SelectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SelectionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown selection strategy `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    Asc,
    Dsc,
}

impl Order {
    pub fn as_str(self) -> &'static str {
        match self {
            Order::Asc => "asc",
            Order::Dsc => "dsc",
        }
    }
}

impl std::str::FromStr for Order {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asc" => Ok(Order::Asc),
            "dsc" | "desc" => Ok(Order::Dsc),
            other => Err(Error::Argument(format!("unknown order `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionStrategy {
    pub kind: SelectionKind,
    /// Applies to the prob component of `prob_only`, `prob_sim`, `sim_prob`.
    pub order: Order,
    pub k: usize,
}

impl Default for SelectionStrategy {
    fn default() -> Self {
        SelectionStrategy {
            kind: SelectionKind::SimOnly,
            order: Order::Dsc,
            k: DEFAULT_K,
        }
    }
}

impl SelectionStrategy {
    /// Ordering of two candidates, best first; ties fall back to id.
    fn compare(&self, a: &ScoredTarget, b: &ScoredTarget) -> Ordering {
        let desc = |x: f64, y: f64| y.total_cmp(&x);
        let by_prob = |x: f64, y: f64| match self.order {
            Order::Dsc => y.total_cmp(&x),
            Order::Asc => x.total_cmp(&y),
        };
        let primary = match self.kind {
            SelectionKind::ProbOnly => by_prob(a.prob, b.prob),
            SelectionKind::SimOnly => desc(a.sim, b.sim),
            SelectionKind::ProbSim => by_prob(a.prob, b.prob).then(desc(a.sim, b.sim)),
            SelectionKind::SimProb => desc(a.sim, b.sim).then(by_prob(a.prob, b.prob)),
            SelectionKind::ProbTimesSim => desc(a.prob * a.sim, b.prob * b.sim),
            SelectionKind::ProbPlusSim => desc(a.prob + a.sim, b.prob + b.sim),
        };
        primary.then_with(|| a.instance.id.cmp(&b.instance.id))
    }
}

/// Top `k` candidates under `strategy`, best first.
pub fn select(scored: &[ScoredTarget], strategy: &SelectionStrategy) -> Result<Vec<ScoredTarget>> {
    if strategy.k == 0 {
        return Err(Error::Argument("selection size k must be positive".into()));
    }
    if scored.is_empty() {
        return Err(Error::Argument("nothing to select from".into()));
    }
    let mut ranked: Vec<&ScoredTarget> = scored.iter().collect();
    ranked.sort_by(|a, b| strategy.compare(a, b));
    Ok(ranked.into_iter().take(strategy.k).cloned().collect())
}

/// Line record of a selected pseudo-labelled instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedRecord {
    pub rank: usize,
    pub id: String,
    pub domain: DomainId,
    pub label: Label,
    pub prob: f64,
    pub sim: f64,
}

pub fn write_selected(path: &Path, selected: &[ScoredTarget]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, s) in selected.iter().enumerate() {
        let rec = SelectedRecord {
            rank: i + 1,
            id: s.instance.id.clone(),
            domain: s.instance.domain.clone(),
            label: s.pseudo_label,
            prob: s.prob,
            sim: s.sim,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_selected(path: &Path) -> Result<Vec<SelectedRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Re-attaches selected records to their instances in `pool`.
pub fn restore_selected(
    records: &[SelectedRecord],
    pool: &[Instance],
) -> Result<Vec<ScoredTarget>> {
    let by_id: HashMap<&str, &Instance> = pool.iter().map(|x| (x.id.as_str(), x)).collect();
    records
        .iter()
        .map(|r| {
            let x = by_id.get(r.id.as_str()).ok_or_else(|| {
                Error::Validation(format!(
                    "selected instance `{}` is not in the target pool",
                    r.id
                ))
            })?;
            Ok(ScoredTarget {
                instance: (*x).clone(),
                pseudo_label: r.label,
                prob: r.prob,
                sim: r.sim,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::ProbClassifier;

    fn inst(id: &str, r: &[f64]) -> Instance {
        Instance::dense(id, DomainId::from("T"), r.to_vec(), None)
    }

    fn scored(id: &str, prob: f64, sim: f64) -> ScoredTarget {
        ScoredTarget {
            instance: inst(id, &[0.0]),
            pseudo_label: Label::Positive,
            prob,
            sim,
        }
    }

    fn ids(v: &[ScoredTarget]) -> Vec<&str> {
        v.iter().map(|s| s.instance.id.as_str()).collect()
    }

    #[test]
    fn centroid_examples() {
        let one = compute_centroid(&[inst("a", &[1.5, -2.0])]).unwrap();
        assert_eq!(one.vector, vec![1.5, -2.0]);
        let two = compute_centroid(&[inst("a", &[1.0, 0.0]), inst("b", &[0.0, 1.0])]).unwrap();
        assert_eq!(two.vector, vec![0.5, 0.5]);
        assert!(compute_centroid(&[]).is_err());
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[3.0, -1.0], &[3.0, -1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn null_voter_scores_half() {
        let voter = MajorityVoter::new(vec![ProbClassifier::null(2); 3]).unwrap();
        let targets = vec![inst("a", &[1.0, 2.0]), inst("b", &[-3.0, 0.5])];
        let c = compute_centroid(&targets).unwrap();
        for s in score_targets(&voter, &targets, &c).unwrap() {
            assert_eq!(s.prob, 0.5);
        }
    }

    #[test]
    fn sim_only_picks_highest_similarities() {
        let s = vec![
            scored("1", 0.9, 0.9),
            scored("2", 0.9, 0.2),
            scored("3", 0.9, 0.5),
        ];
        let strat = SelectionStrategy {
            kind: SelectionKind::SimOnly,
            order: Order::Dsc,
            k: 2,
        };
        assert_eq!(ids(&select(&s, &strat).unwrap()), vec!["1", "3"]);
    }

    #[test]
    fn product_key_example() {
        let s = vec![
            scored("1", 0.6, 0.9),
            scored("2", 0.9, 0.5),
            scored("3", 0.7, 0.8),
        ];
        let strat = SelectionStrategy {
            kind: SelectionKind::ProbTimesSim,
            order: Order::Dsc,
            k: 2,
        };
        assert_eq!(ids(&select(&s, &strat).unwrap()), vec!["3", "1"]);
    }

    #[test]
    fn lexicographic_composition_and_order() {
        let s = vec![
            scored("a", 0.8, 0.1),
            scored("b", 0.8, 0.7),
            scored("c", 0.6, 0.9),
        ];
        let ps = SelectionStrategy {
            kind: SelectionKind::ProbSim,
            order: Order::Dsc,
            k: 3,
        };
        assert_eq!(ids(&select(&s, &ps).unwrap()), vec!["b", "a", "c"]);
        let asc = SelectionStrategy {
            kind: SelectionKind::ProbOnly,
            order: Order::Asc,
            k: 1,
        };
        assert_eq!(ids(&select(&s, &asc).unwrap()), vec!["c"]);
        let sp = SelectionStrategy {
            kind: SelectionKind::SimProb,
            order: Order::Dsc,
            k: 3,
        };
        assert_eq!(ids(&select(&s, &sp).unwrap()), vec!["c", "b", "a"]);
    }

    #[test]
    fn saturation_and_bad_k() {
        let s = vec![scored("x", 0.7, 0.1), scored("y", 0.6, 0.3)];
        let all = SelectionStrategy {
            kind: SelectionKind::SimOnly,
            order: Order::Dsc,
            k: 10,
        };
        assert_eq!(ids(&select(&s, &all).unwrap()), vec!["y", "x"]);
        assert!(select(&s, &SelectionStrategy { k: 0, ..all }).is_err());
    }

    #[test]
    fn selected_records_round_trip() {
        let pool = vec![inst("a", &[1.0, 0.0]), inst("b", &[0.0, 1.0])];
        let sel = vec![
            ScoredTarget {
                instance: pool[1].clone(),
                pseudo_label: Label::Negative,
                prob: 0.8,
                sim: 0.3,
            },
            ScoredTarget {
                instance: pool[0].clone(),
                pseudo_label: Label::Positive,
                prob: 0.6,
                sim: 0.1,
            },
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_selected(f.path(), &sel).unwrap();
        let recs = read_selected(f.path()).unwrap();
        assert_eq!(recs[0].rank, 1);
        assert_eq!(restore_selected(&recs, &pool).unwrap(), sel);
        assert!(restore_selected(&recs, &pool[..1]).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let s = vec![scored("b", 0.7, 0.5), scored("a", 0.7, 0.5)];
        let strat = SelectionStrategy {
            kind: SelectionKind::ProbPlusSim,
            order: Order::Dsc,
            k: 1,
        };
        assert_eq!(ids(&select(&s, &strat).unwrap()), vec!["a"]);
    }
}

//! Seeded multi-source corpus with controlled domain shift.
//!
//! Every domain draws `x = m_d + y * separation_d * w_d + noise * N(0, I)`
//! with `y` in {-1, +1}. The label directions `w_d` live in the plane of
//! the first two axes: the target uses the first axis and each source is
//! rotated away from it. Domain offsets `m_d` are built on the remaining
//! axes so that related sources sit close to the target while the
//! unrelated source is orthogonal to it.
//!
//! A fraction of target instances (`target_outliers`) additionally get a
//! label-independent component of norm `outlier_scale` along the second
//! axis, where the sources' label directions disagree with the target's:
//! source models label them confidently but at chance level, and they
//! point away from the target centroid.

use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, CorpusMeta, DomainId, DomainSet, Instance, Label};
use crate::rng::{self, Rng};
use crate::{Error, Result};

pub const TARGET: &str = "T";
pub const UNRELATED: &str = "U";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub dim: usize,
    pub labelled_per_source: usize,
    pub unlabelled_per_source: usize,
    pub target_unlabelled: usize,
    pub target_test: usize,
    pub noise: f64,
    /// Norm of each domain's mean offset.
    pub offset: f64,
    /// Angle between a related source's offset and the target's.
    pub related_offset_deg: f64,
    pub separation: f64,
    /// Label-direction rotation of each related source.
    pub related_angles_deg: Vec<f64>,
    pub unrelated_angle_deg: f64,
    pub unrelated_separation: f64,
    /// Class-independent shift of the target along its label direction.
    pub target_shift: f64,
    pub target_outliers: f64,
    pub outlier_scale: f64,
    /// Each target instance scales its domain offset by a factor drawn
    /// uniformly from `[1 - spread, 1 + spread]`.
    pub target_offset_spread: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 7,
            dim: 10,
            labelled_per_source: 200,
            unlabelled_per_source: 600,
            target_unlabelled: 2000,
            target_test: 2000,
            noise: 0.5,
            offset: 3.0,
            related_offset_deg: 30.0,
            separation: 1.0,
            related_angles_deg: vec![15.0, -15.0],
            unrelated_angle_deg: 120.0,
            unrelated_separation: 2.0,
            target_shift: 0.3,
            target_outliers: 0.2,
            outlier_scale: 8.0,
            target_offset_spread: 0.9,
        }
    }
}

struct DomainShape {
    name: String,
    /// Domain offset, the part of the mean scaled by the target spread.
    offset: Vec<f64>,
    mean: Vec<f64>,
    direction: Vec<f64>,
    separation: f64,
}

impl DomainShape {
    fn sample(&self, id: String, label: Label, noise: f64, rng: &mut Rng) -> Instance {
        let y = label.signed();
        let repr = self
            .mean
            .iter()
            .zip(&self.direction)
            .map(|(m, w)| {
                let e: f64 = rng.sample(StandardNormal);
                m + y * self.separation * w + noise * e
            })
            .collect();
        Instance::dense(id, DomainId::from(self.name.as_str()), repr, Some(label))
    }

    fn sample_many(
        &self,
        tag: &str,
        n: usize,
        labelled: bool,
        noise: f64,
        rng: &mut Rng,
    ) -> Vec<Instance> {
        (0..n)
            .map(|i| {
                let label = Label::from_positive(i % 2 == 0);
                let mut x = self.sample(format!("{}-{tag}{i:05}", self.name), label, noise, rng);
                if !labelled {
                    x.label = None;
                }
                x
            })
            .collect()
    }
}

fn unit(dim: usize, axis: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[axis] = 1.0;
    v
}

fn in_plane(dim: usize, a: usize, b: usize, deg: f64, scale: f64) -> Vec<f64> {
    let t = deg.to_radians();
    let mut v = vec![0.0; dim];
    v[a] = scale * t.cos();
    v[b] += scale * t.sin();
    v
}

impl SyntheticConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    fn shapes(&self) -> Result<(Vec<DomainShape>, DomainShape)> {
        let n_related = self.related_angles_deg.len();
        // label plane (2) + target offset axis (1) + one axis per source
        let needed = 3 + n_related + 1;
        if self.dim < needed {
            return Err(Error::Argument(format!(
                "synthetic dimension must be at least {needed}, got {}",
                self.dim
            )));
        }
        let d = self.dim;
        let mut sources = Vec::new();
        for (j, &angle) in self.related_angles_deg.iter().enumerate() {
            let mean = in_plane(d, 2, 3 + j, self.related_offset_deg, self.offset);
            sources.push(DomainShape {
                name: format!("R{}", j + 1),
                offset: mean.clone(),
                mean,
                direction: in_plane(d, 0, 1, angle, 1.0),
                separation: self.separation,
            });
        }
        let mut unrelated_mean = unit(d, 3 + n_related);
        unrelated_mean.iter_mut().for_each(|v| *v *= self.offset);
        sources.push(DomainShape {
            name: UNRELATED.into(),
            offset: unrelated_mean.clone(),
            mean: unrelated_mean,
            direction: in_plane(d, 0, 1, self.unrelated_angle_deg, 1.0),
            separation: self.unrelated_separation,
        });
        let mut target_offset = unit(d, 2);
        target_offset.iter_mut().for_each(|v| *v *= self.offset);
        let mut target_mean = target_offset.clone();
        target_mean[0] += self.target_shift;
        let target = DomainShape {
            name: TARGET.into(),
            offset: target_offset,
            mean: target_mean,
            direction: unit(d, 0),
            separation: self.separation,
        };
        Ok((sources, target))
    }
}

fn spread_offsets(part: &mut [Instance], offset: &[f64], spread: f64, rng: &mut Rng) {
    if spread <= 0.0 {
        return;
    }
    for x in part.iter_mut() {
        let extra = rng.gen_range(-spread..spread);
        if let Some(r) = x.repr.as_mut() {
            r.iter_mut().zip(offset).for_each(|(v, m)| *v += extra * m);
        }
    }
}

/// Pushes an evenly spread `fraction` of the instances along the second
/// axis with a random sign.
fn add_outliers(part: &mut [Instance], fraction: f64, scale: f64, rng: &mut Rng) {
    if fraction <= 0.0 {
        return;
    }
    for (i, x) in part.iter_mut().enumerate() {
        let crosses = ((i + 1) as f64 * fraction).floor() > (i as f64 * fraction).floor();
        if crosses {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            if let Some(r) = x.repr.as_mut() {
                r[1] += sign * scale;
            }
        }
    }
}

/// Builds the corpus; identical configurations give identical corpora.
pub fn synthetic_corpus(cfg: &SyntheticConfig) -> Result<Corpus> {
    let (shapes, target_shape) = cfg.shapes()?;
    let mut rng = rng::substream(cfg.seed, "synthetic");
    let mut sources = Vec::new();
    for s in &shapes {
        let mut d = DomainSet::new(DomainId::from(s.name.as_str()));
        d.labelled = s.sample_many("l", cfg.labelled_per_source, true, cfg.noise, &mut rng);
        d.unlabelled = s.sample_many("u", cfg.unlabelled_per_source, false, cfg.noise, &mut rng);
        sources.push(d);
    }
    let mut target = DomainSet::new(DomainId::from(TARGET));
    target.unlabelled =
        target_shape.sample_many("u", cfg.target_unlabelled, false, cfg.noise, &mut rng);
    target.test = target_shape.sample_many("t", cfg.target_test, true, cfg.noise, &mut rng);
    for part in [&mut target.unlabelled, &mut target.test] {
        spread_offsets(
            part,
            &target_shape.offset,
            cfg.target_offset_spread,
            &mut rng,
        );
        add_outliers(part, cfg.target_outliers, cfg.outlier_scale, &mut rng);
    }
    let corpus = Corpus {
        sources,
        target,
        meta: CorpusMeta {
            dataset: "synthetic".into(),
            target: Some(DomainId::from(TARGET)),
            representation: "dense".into(),
            dim: Some(cfg.dim),
        },
    };
    corpus.validate()?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let cfg = SyntheticConfig {
            labelled_per_source: 10,
            unlabelled_per_source: 5,
            target_unlabelled: 8,
            target_test: 6,
            ..Default::default()
        };
        let a = synthetic_corpus(&cfg).unwrap();
        assert_eq!(a, synthetic_corpus(&cfg).unwrap());
        assert_eq!(a.n_sources(), 3);
        assert_eq!(a.target_id().as_str(), TARGET);
        assert_eq!(a.target.test.len(), 6);
        assert!(a.target.labelled.is_empty());
        assert!(a
            .all_instances()
            .all(|x| x.repr().unwrap().len() == cfg.dim));
        let pos = a.sources[0]
            .labelled
            .iter()
            .filter(|x| x.label == Some(Label::Positive))
            .count();
        assert_eq!(pos, 5);
    }

    #[test]
    fn outliers_are_evenly_spread() {
        let base = SyntheticConfig {
            labelled_per_source: 4,
            unlabelled_per_source: 4,
            target_unlabelled: 40,
            target_test: 8,
            target_outliers: 0.0,
            ..Default::default()
        };
        let shifted = SyntheticConfig {
            target_outliers: 0.25,
            outlier_scale: 100.0,
            ..base.clone()
        };
        let a = synthetic_corpus(&base).unwrap();
        let b = synthetic_corpus(&shifted).unwrap();
        let far = b
            .target
            .unlabelled
            .iter()
            .filter(|x| x.repr().unwrap()[1].abs() > 50.0)
            .count();
        assert_eq!(far, 10);
        assert_eq!(a.sources, b.sources);
    }

    #[test]
    fn too_small_dimension() {
        let cfg = SyntheticConfig {
            dim: 4,
            ..Default::default()
        };
        assert!(synthetic_corpus(&cfg).is_err());
    }
}

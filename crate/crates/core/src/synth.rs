//! Seeded synthetic longitudinal populations with planted cluster structure.
//!
//! Each cluster has a baseline prototype of per-region thickness values and a
//! drift vector; the prototype at timepoint `g` is `baseline + g * drift`.
//! Subjects are noisy copies of their cluster's prototype and every network
//! is the morphological network of the subject's thickness vector.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::build_mbn;
use crate::population::{Population, SubjectTrajectory};

pub const MAX_PROTOTYPE_ATTEMPTS: usize = 10_000;
pub const THICKNESS_RANGE: (f64, f64) = (1.0, 5.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub n_rois: usize,
    pub n_clusters: usize,
    pub n_timepoints: usize,
    pub within_cluster_noise: f64,
    pub between_cluster_separation: f64,
    pub drift_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 40,
            n_rois: 35,
            n_clusters: 4,
            n_timepoints: 2,
            within_cluster_noise: 0.05,
            between_cluster_separation: 3.0,
            drift_scale: 0.3,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_clusters == 0 {
            return bad("n_clusters must be >= 1".into());
        }
        if self.n_subjects < self.n_clusters {
            return bad(format!(
                "n_subjects ({}) must be >= n_clusters ({})",
                self.n_subjects, self.n_clusters
            ));
        }
        if self.n_rois < 2 {
            return bad("n_rois must be >= 2".into());
        }
        if self.n_timepoints == 0 {
            return bad("n_timepoints must be >= 1".into());
        }
        if !(self.within_cluster_noise >= 0.0 && self.within_cluster_noise.is_finite()) {
            return bad("within-cluster noise must be >= 0".into());
        }
        if !(self.between_cluster_separation > 0.0 && self.between_cluster_separation.is_finite()) {
            return bad("between-cluster separation must be > 0".into());
        }
        if !(self.drift_scale >= 0.0 && self.drift_scale.is_finite()) {
            return bad("drift scale must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPopulation {
    pub population: Population,
    pub cluster_of: BTreeMap<String, usize>,
    /// `prototypes[c][g]` is cluster `c`'s thickness vector at timepoint `g`.
    pub prototypes: Vec<Vec<Vec<f64>>>,
}

pub fn timepoint_label(g: usize) -> String {
    format!("t{g}")
}

pub fn subject_label(i: usize) -> String {
    format!("sub{i:03}")
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn generate(config: &SynthConfig) -> Result<SynthPopulation> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_rois;
    let (lo, hi) = THICKNESS_RANGE;

    let mut baselines: Vec<Vec<f64>> = Vec::with_capacity(config.n_clusters);
    let mut attempts = 0;
    while baselines.len() < config.n_clusters {
        attempts += 1;
        if attempts > MAX_PROTOTYPE_ATTEMPTS {
            return Err(Error::SeparationInfeasible {
                clusters: config.n_clusters,
                separation: config.between_cluster_separation,
                attempts: MAX_PROTOTYPE_ATTEMPTS,
            });
        }
        let candidate: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
        if baselines
            .iter()
            .all(|p| l2(p, &candidate) >= config.between_cluster_separation)
        {
            baselines.push(candidate);
        }
    }

    let drift_dist = Normal::new(0.0, config.drift_scale).map_err(|e| Error::Config(e.to_string()))?;
    let prototypes: Vec<Vec<Vec<f64>>> = baselines
        .into_iter()
        .map(|base| {
            let drift: Vec<f64> = (0..n).map(|_| drift_dist.sample(&mut rng)).collect();
            (0..config.n_timepoints)
                .map(|g| base.iter().zip(&drift).map(|(b, d)| b + g as f64 * d).collect())
                .collect()
        })
        .collect();

    let noise = Normal::new(0.0, config.within_cluster_noise).map_err(|e| Error::Config(e.to_string()))?;
    let timepoints: Vec<String> = (0..config.n_timepoints).map(timepoint_label).collect();
    let mut subjects = Vec::with_capacity(config.n_subjects);
    let mut cluster_of = BTreeMap::new();
    for i in 0..config.n_subjects {
        let c = i % config.n_clusters;
        let id = subject_label(i);
        let mut subject = SubjectTrajectory::new(id.clone());
        for (g, label) in timepoints.iter().enumerate() {
            let thickness: Vec<f64> = prototypes[c][g]
                .iter()
                .map(|p| p + noise.sample(&mut rng))
                .collect();
            subject.matrices.insert(label.clone(), build_mbn(&thickness)?);
        }
        subjects.push(subject);
        cluster_of.insert(id, c);
    }

    Ok(SynthPopulation {
        population: Population::new(n, timepoints, subjects)?,
        cluster_of,
        prototypes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::mad;

    #[test]
    fn noiseless_single_cluster_is_uniform() {
        let cfg = SynthConfig {
            n_subjects: 5,
            n_rois: 6,
            n_clusters: 1,
            n_timepoints: 3,
            within_cluster_noise: 0.0,
            ..SynthConfig::default()
        };
        let s = generate(&cfg).unwrap();
        let p = &s.population;
        for t in p.timepoints() {
            for j in 1..p.n_subjects() {
                assert_eq!(p.subject(j).at(t).unwrap(), p.subject(0).at(t).unwrap());
            }
        }
    }

    #[test]
    fn same_seed_same_population() {
        let cfg = SynthConfig::default();
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig { seed: 43, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap().population, generate(&other).unwrap().population);
    }

    #[test]
    fn infeasible_separation_is_reported() {
        let cfg = SynthConfig {
            n_rois: 2,
            n_clusters: 3,
            n_subjects: 3,
            between_cluster_separation: 100.0,
            ..SynthConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::SeparationInfeasible { .. })));
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = SynthConfig::default();
        for cfg in [
            SynthConfig { n_clusters: 0, ..base.clone() },
            SynthConfig { n_subjects: 2, n_clusters: 3, ..base.clone() },
            SynthConfig { within_cluster_noise: -1.0, ..base.clone() },
            SynthConfig { between_cluster_separation: 0.0, ..base.clone() },
        ] {
            assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn every_subject_has_one_cluster_and_prototypes_are_separated() {
        let cfg = SynthConfig::default();
        let s = generate(&cfg).unwrap();
        assert_eq!(s.cluster_of.len(), cfg.n_subjects);
        for a in 0..cfg.n_clusters {
            for b in (a + 1)..cfg.n_clusters {
                assert!(l2(&s.prototypes[a][0], &s.prototypes[b][0]) >= cfg.between_cluster_separation);
            }
        }
    }

    /// For each subject, the mean baseline distance to its own cluster must be
    /// below the mean distance to the other clusters.
    #[test]
    fn cluster_separation_holds_for_default_noise() {
        let mut ok = 0;
        let mut total = 0;
        for seed in 0..20 {
            let cfg = SynthConfig { seed, ..SynthConfig::default() };
            let s = generate(&cfg).unwrap();
            let p = &s.population;
            let ids: Vec<&String> = p.subjects().iter().map(|s| &s.subject_id).collect();
            for i in 0..p.n_subjects() {
                let (mut within, mut nw, mut between, mut nb) = (0.0, 0, 0.0, 0);
                for j in 0..p.n_subjects() {
                    if i == j {
                        continue;
                    }
                    let d = mad(p.subject(i).at("t0").unwrap(), p.subject(j).at("t0").unwrap()).unwrap();
                    if s.cluster_of[ids[i]] == s.cluster_of[ids[j]] {
                        within += d;
                        nw += 1;
                    } else {
                        between += d;
                        nb += 1;
                    }
                }
                total += 1;
                if within / (nw as f64) < between / (nb as f64) {
                    ok += 1;
                }
            }
        }
        assert!(ok as f64 >= 0.95 * total as f64, "{ok}/{total}");
    }
}

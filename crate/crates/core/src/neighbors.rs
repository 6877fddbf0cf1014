//! Neighbor selection at baseline and follow-up prediction by averaging.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::matrix::{vectorize_upper, ConnectivityMatrix};
use crate::population::Population;

/// How training subjects are ranked against a test subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Cosine of template-residual embeddings.
    Resnets,
    /// Dot product of embeddings.
    Esnets,
    /// Dot product of raw upper-triangle features.
    Snets,
    /// Uniformly random subset; a floor for benchmarks.
    RandomSelection,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Resnets,
        Method::Esnets,
        Method::Snets,
        Method::RandomSelection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Resnets => "resnets",
            Method::Esnets => "esnets",
            Method::Snets => "snets",
            Method::RandomSelection => "random-selection",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(self, Method::Resnets | Method::Esnets)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s || (s == "random" && *m == Method::RandomSelection))
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Score used by the dot-product baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineSimilarity {
    #[default]
    Dot,
    /// Use cosine for every method (sensitivity analysis).
    Cosine,
}

/// Elementwise absolute deviation of an embedding from the template embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEmbedding {
    pub subject_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityVector {
    pub test_subject_id: String,
    /// Aligned with the training population's subject order.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSelection {
    /// Descending score, ties by ascending index.
    pub indices: Vec<usize>,
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

pub fn residual(template: &Embedding, z: &Embedding) -> Result<ResidualEmbedding> {
    check_len(template.len(), z.len())?;
    Ok(ResidualEmbedding {
        subject_id: z.subject_id.clone(),
        values: template
            .values
            .iter()
            .zip(&z.values)
            .map(|(c, v)| (c - v).abs())
            .collect(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot(a, b) / (na * nb))
}

pub fn cosine_similarity(r_i: &ResidualEmbedding, r_j: &ResidualEmbedding) -> Result<f64> {
    cosine(&r_i.values, &r_j.values)
}

pub fn dot_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(dot(a, b))
}

pub fn snets_similarity(x_i: &crate::matrix::FeatureVector, x_j: &crate::matrix::FeatureVector) -> Result<f64> {
    dot_similarity(x_i.as_slice(), x_j.as_slice())
}

pub fn esnets_similarity(z_i: &Embedding, z_j: &Embedding) -> Result<f64> {
    dot_similarity(&z_i.values, &z_j.values)
}

pub fn select_neighbors(scores: &SimilarityVector, k: usize) -> Result<NeighborSelection> {
    let n = scores.scores.len();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "K must be in 1..={n}, got {k}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores.scores[b]
            .total_cmp(&scores.scores[a])
            .then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(NeighborSelection { indices: order })
}

/// Elementwise mean of the selected subjects' networks at `timepoint`.
pub fn predict_followup(
    population: &Population,
    selection: &NeighborSelection,
    timepoint: &str,
) -> Result<ConnectivityMatrix> {
    if selection.indices.is_empty() {
        return Err(Error::InvalidInput("empty neighbor selection".into()));
    }
    let n = population.n_rois();
    // running mean: identical inputs reproduce themselves bit-exactly
    let mut mean = Array2::<f64>::zeros((n, n));
    for (count, &j) in selection.indices.iter().enumerate() {
        if j >= population.n_subjects() {
            return Err(Error::InvalidInput(format!("neighbor index {j} out of range")));
        }
        let x = population.subject(j).at(timepoint)?.weights();
        let inv = 1.0 / (count + 1) as f64;
        Zip::from(&mut mean).and(x).for_each(|m, &v| *m += (v - *m) * inv);
    }
    ConnectivityMatrix::new(mean)
}

/// Training-side inputs for scoring: the fold's training population plus
/// embeddings aligned with it and the template embedding.
#[derive(Debug, Clone, Copy)]
pub struct Reference<'a> {
    pub population: &'a Population,
    pub embeddings: Option<&'a [Embedding]>,
    pub template_embedding: Option<&'a Embedding>,
}

/// Test-side inputs: the baseline network and its embedding.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub subject_id: &'a str,
    pub baseline: &'a ConnectivityMatrix,
    pub embedding: Option<&'a Embedding>,
}

fn missing(what: &str, method: Method) -> Error {
    Error::InvalidInput(format!("method {method} needs {what}"))
}

/// Scores every training subject against the query with `method`.
///
/// `seed` only affects [`Method::RandomSelection`].
pub fn score_subjects(
    method: Method,
    reference: Reference<'_>,
    query: Query<'_>,
    similarity: BaselineSimilarity,
    seed: u64,
) -> Result<SimilarityVector> {
    let population = reference.population;
    let baseline = population.baseline();
    let score = |a: &[f64], b: &[f64]| match similarity {
        BaselineSimilarity::Dot => dot_similarity(a, b),
        BaselineSimilarity::Cosine => cosine(a, b),
    };
    let scores = match method {
        Method::Snets => {
            let q = vectorize_upper(query.baseline);
            population
                .subjects()
                .iter()
                .map(|s| score(vectorize_upper(s.at(baseline)?).as_slice(), q.as_slice()))
                .collect::<Result<Vec<_>>>()?
        }
        Method::Esnets | Method::Resnets => {
            let embeddings = reference.embeddings.ok_or_else(|| missing("training embeddings", method))?;
            check_len(population.n_subjects(), embeddings.len())?;
            let q = query.embedding.ok_or_else(|| missing("a test embedding", method))?;
            if method == Method::Esnets {
                embeddings
                    .iter()
                    .map(|z| score(&z.values, &q.values))
                    .collect::<Result<Vec<_>>>()?
            } else {
                let template = reference
                    .template_embedding
                    .ok_or_else(|| missing("a template embedding", method))?;
                let r_q = residual(template, q)?;
                embeddings
                    .iter()
                    .map(|z| cosine_similarity(&residual(template, z)?, &r_q))
                    .collect::<Result<Vec<_>>>()?
            }
        }
        Method::RandomSelection => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..population.n_subjects()).map(|_| rng.random::<f64>()).collect()
        }
    };
    Ok(SimilarityVector {
        test_subject_id: query.subject_id.to_string(),
        scores,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub similarity: SimilarityVector,
    pub selection: NeighborSelection,
    /// One network per follow-up timepoint.
    pub followups: IndexMap<String, ConnectivityMatrix>,
}

/// Selects `k` neighbors once at baseline and averages their networks at
/// every follow-up timepoint.
pub fn predict_trajectory(
    method: Method,
    reference: Reference<'_>,
    query: Query<'_>,
    k: usize,
    similarity: BaselineSimilarity,
    seed: u64,
) -> Result<Prediction> {
    let population = reference.population;
    if query.baseline.n_rois() != population.n_rois() {
        return Err(Error::DimensionMismatch {
            expected: population.n_rois(),
            actual: query.baseline.n_rois(),
        });
    }
    let sim = score_subjects(method, reference, query, similarity, seed)?;
    let selection = select_neighbors(&sim, k)?;
    let followups = population
        .followups()
        .iter()
        .map(|t| Ok((t.clone(), predict_followup(population, &selection, t)?)))
        .collect::<Result<_>>()?;
    Ok(Prediction {
        similarity: sim,
        selection,
        followups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{build_mbn, FeatureVector};
    use crate::population::SubjectTrajectory;
    use proptest::prelude::*;

    fn emb(values: &[f64]) -> Embedding {
        Embedding {
            subject_id: "x".into(),
            values: values.to_vec(),
        }
    }

    fn res(values: &[f64]) -> ResidualEmbedding {
        ResidualEmbedding {
            subject_id: "x".into(),
            values: values.to_vec(),
        }
    }

    fn sims(scores: &[f64]) -> SimilarityVector {
        SimilarityVector {
            test_subject_id: "t".into(),
            scores: scores.to_vec(),
        }
    }

    #[test]
    fn residual_examples() {
        let z = emb(&[0.3, -1.0, 2.0]);
        assert_eq!(residual(&z, &z).unwrap().values, vec![0.0; 3]);
        assert_eq!(residual(&emb(&[1.0, -2.0]), &emb(&[3.0, 1.0])).unwrap().values, vec![2.0, 3.0]);
        let (a, b) = (emb(&[1.5, -2.0, 0.1]), emb(&[-0.5, 4.0, 0.1]));
        assert_eq!(residual(&a, &b).unwrap().values, residual(&b, &a).unwrap().values);
        assert!(residual(&emb(&[1.0]), &emb(&[1.0, 2.0])).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)] // hand-computed value, kept literal
    fn cosine_examples() {
        let r = res(&[0.5, 1.5, 2.0]);
        let r2 = res(&[1.0, 3.0, 4.0]);
        assert!((cosine_similarity(&r, &r2).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&res(&[1.0, 0.0]), &res(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_similarity(&res(&[1.0, 1.0]), &res(&[1.0, 0.0])).unwrap();
        assert!((c - 0.707_107).abs() < 1e-6);
        assert!((c - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(cosine_similarity(&res(&[0.0, 0.0]), &res(&[1.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn dot_examples() {
        let f = |v: &[f64]| FeatureVector(v.to_vec());
        assert_eq!(snets_similarity(&f(&[1.0, 2.0]), &f(&[3.0, 4.0])).unwrap(), 11.0);
        assert_eq!(snets_similarity(&f(&[1.0, 2.0]), &f(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(snets_similarity(&f(&[3.0, 4.0]), &f(&[3.0, 4.0])).unwrap(), 25.0);
        assert!(snets_similarity(&f(&[1.0]), &f(&[1.0, 2.0])).is_err());

        assert_eq!(esnets_similarity(&emb(&[1.0, 2.0]), &emb(&[3.0, 4.0])).unwrap(), 11.0);
        assert_eq!(esnets_similarity(&emb(&[-1.0, 2.0]), &emb(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(esnets_similarity(&emb(&[-3.0, 4.0]), &emb(&[-3.0, 4.0])).unwrap(), 25.0);
        assert!(esnets_similarity(&emb(&[1.0]), &emb(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_neighbors(&sims(&[0.9, 0.1, 0.5]), 2).unwrap().indices, vec![0, 2]);
        assert_eq!(select_neighbors(&sims(&[0.3; 4]), 2).unwrap().indices, vec![0, 1]);
        assert_eq!(select_neighbors(&sims(&[0.2, 0.7, 0.2, 0.9]), 4).unwrap().indices, vec![3, 1, 0, 2]);
        assert!(select_neighbors(&sims(&[0.2, 0.7]), 0).is_err());
        assert!(select_neighbors(&sims(&[0.2, 0.7]), 3).is_err());
    }

    fn two_timepoint(networks: &[(f64, f64)]) -> Population {
        let subjects = networks
            .iter()
            .enumerate()
            .map(|(i, &(w0, w1))| {
                SubjectTrajectory::new(format!("s{i}"))
                    .with("t0", build_mbn(&[0.0, w0, 2.0 * w0]).unwrap())
                    .with("t1", build_mbn(&[0.0, w1, 3.0 * w1]).unwrap())
            })
            .collect();
        Population::new(3, vec!["t0".into(), "t1".into()], subjects).unwrap()
    }

    #[test]
    fn followup_examples() {
        let p = two_timepoint(&[(1.0, 2.0), (1.0, 2.0), (1.0, 2.0)]);
        let sel = NeighborSelection { indices: vec![0, 2] };
        assert_eq!(&predict_followup(&p, &sel, "t1").unwrap(), p.subject(0).at("t1").unwrap());

        let p = two_timepoint(&[(1.0, 1.0), (2.0, 3.0), (5.0, 4.0)]);
        let sel = NeighborSelection { indices: vec![1] };
        assert_eq!(&predict_followup(&p, &sel, "t1").unwrap(), p.subject(1).at("t1").unwrap());

        let sel = NeighborSelection { indices: vec![0, 1] };
        let x = predict_followup(&p, &sel, "t1").unwrap();
        // edge (0,1) is 1 and 3 for the two neighbors
        assert_eq!(x.get(0, 1), 2.0);

        let partial = Population::new(
            3,
            vec!["t0".into(), "t1".into()],
            vec![SubjectTrajectory::new("a").with("t0", ConnectivityMatrix::zeros(3))],
        )
        .unwrap();
        assert!(predict_followup(&partial, &NeighborSelection { indices: vec![0] }, "t1").is_err());
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn trajectory_with_full_neighborhood_is_population_mean() {
        let p = two_timepoint(&[(1.0, 1.0), (2.0, 3.0), (5.0, 4.0)]);
        let query = build_mbn(&[0.0, 1.5, 3.0]).unwrap();
        let embeddings: Vec<Embedding> = (0..3).map(|i| emb(&[i as f64, 1.0])).collect();
        let template = emb(&[0.5, 0.0]);
        let q_emb = emb(&[2.0, 2.0]);
        let reference = Reference {
            population: &p,
            embeddings: Some(&embeddings),
            template_embedding: Some(&template),
        };
        let query = Query {
            subject_id: "q",
            baseline: &query,
            embedding: Some(&q_emb),
        };
        let mean = predict_followup(&p, &NeighborSelection { indices: vec![0, 1, 2] }, "t1").unwrap();
        for m in Method::ALL {
            let pred = predict_trajectory(m, reference, query, 3, BaselineSimilarity::Dot, 1).unwrap();
            let x = &pred.followups["t1"];
            for (a, b, w) in x.edges() {
                assert!((w - mean.get(a, b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn embedding_methods_need_embeddings() {
        let p = two_timepoint(&[(1.0, 1.0), (2.0, 3.0)]);
        let x = build_mbn(&[0.0, 1.0, 2.0]).unwrap();
        let reference = Reference {
            population: &p,
            embeddings: None,
            template_embedding: None,
        };
        let query = Query {
            subject_id: "q",
            baseline: &x,
            embedding: None,
        };
        assert!(predict_trajectory(Method::Resnets, reference, query, 1, BaselineSimilarity::Dot, 0).is_err());
        assert!(predict_trajectory(Method::Snets, reference, query, 1, BaselineSimilarity::Dot, 0).is_ok());
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant_and_bounded(
            (a, b) in (1usize..20).prop_flat_map(|n| (
                proptest::collection::vec(0.0f64..3.0, n),
                proptest::collection::vec(0.0f64..3.0, n))),
            s in 0.01f64..100.0, t in 0.01f64..100.0,
        ) {
            let c = cosine(&a, &b).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&c));
            let a2: Vec<f64> = a.iter().map(|v| v * s).collect();
            let b2: Vec<f64> = b.iter().map(|v| v * t).collect();
            prop_assert!((cosine(&a2, &b2).unwrap() - c).abs() < 1e-12);
        }

        #[test]
        fn selection_is_sorted_and_distinct(scores in proptest::collection::vec(-1.0f64..1.0, 1..30), k in 1usize..30) {
            let k = k.min(scores.len());
            let sel = select_neighbors(&sims(&scores), k).unwrap();
            prop_assert_eq!(sel.indices.len(), k);
            let mut seen = sel.indices.clone();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), k);
            for w in sel.indices.windows(2) {
                prop_assert!(scores[w[0]] >= scores[w[1]]);
            }
        }

        #[test]
        fn prediction_is_convex(
            ws in proptest::collection::vec((0.1f64..5.0, 0.1f64..5.0), 2..8),
            pick in proptest::collection::vec(any::<bool>(), 8),
        ) {
            let p = two_timepoint(&ws);
            let mut indices: Vec<usize> = (0..ws.len()).filter(|&i| pick[i]).collect();
            if indices.is_empty() { indices.push(0); }
            let x = predict_followup(&p, &NeighborSelection { indices: indices.clone() }, "t1").unwrap();
            for (a, b, w) in x.edges() {
                let vals: Vec<f64> = indices.iter().map(|&j| p.subject(j).at("t1").unwrap().get(a, b)).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(w >= lo - 1e-12 && w <= hi + 1e-12);
                prop_assert!(w >= 0.0);
            }
        }
    }
}

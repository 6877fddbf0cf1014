//! Leave-one-out evaluation of the neighbor-selection methods.
//!
//! Every fold holds one subject out, re-estimates the template from the
//! remaining subjects' baselines, and predicts the held-out subject's
//! follow-up networks with each method and neighborhood size.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cbt::estimate_cbt;
use crate::embed::{train_embedding, Embedding, TrainConfig};
use crate::error::{Error, Result};
use crate::io::write_json;
use crate::matrix::{mad, mse, ConnectivityMatrix};
use crate::neighbors::{predict_trajectory, BaselineSimilarity, Method, Prediction, Query, Reference};
use crate::population::Population;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    pub k_values: Vec<usize>,
    pub train_config: TrainConfig,
    pub similarity: BaselineSimilarity,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Resnets, Method::Esnets, Method::Snets],
            k_values: vec![2, 3, 4],
            train_config: TrainConfig::default(),
            similarity: BaselineSimilarity::Dot,
            seed: 42,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self, n_subjects: usize) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.k_values.is_empty() {
            return Err(Error::Config("at least one K value is required".into()));
        }
        let fold_size = n_subjects.saturating_sub(1);
        if let Some(k) = self.k_values.iter().find(|&&k| k == 0 || k > fold_size) {
            return Err(Error::Config(format!(
                "K = {k} is outside 1..={fold_size} (training subjects per fold)"
            )));
        }
        self.train_config.validate()
    }

    /// Training config with the experiment seed applied.
    fn seeded_train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train_config.clone()
        }
    }
}

/// One prediction error measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    #[serde(rename = "K")]
    pub k: usize,
    pub timepoint: String,
    pub subject: String,
    pub mad: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    #[serde(rename = "K")]
    pub k: usize,
    pub timepoint: String,
    pub n_subjects: usize,
    pub mad_mean: f64,
    pub mad_std: f64,
    pub mse_mean: f64,
    pub mse_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub eval: EvalConfig,
    pub n_subjects: usize,
    pub n_rois: usize,
    pub timepoints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ReportConfig,
    pub cells: Vec<Cell>,
    pub aggregates: Vec<Aggregate>,
    /// Not serialized, so report files stay byte-identical across runs.
    #[serde(skip)]
    pub wall_clock: Option<Duration>,
}

impl EvalReport {
    pub fn aggregate(&self, method: Method, k: usize, timepoint: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.k == k && a.timepoint == timepoint)
    }
}

/// One leave-one-out fold. The training population is built by exclusion
/// before anything is computed; all fold computations read from it.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub fold: usize,
    pub held_out: usize,
    pub test_subject: String,
    /// Indices into the full population, aligned with `training`.
    pub training_indices: Vec<usize>,
    pub training: Population,
}

impl FoldPlan {
    pub fn new(population: &Population, held_out: usize) -> Self {
        Self {
            fold: held_out,
            held_out,
            test_subject: population.subject(held_out).subject_id.clone(),
            training_indices: (0..population.n_subjects()).filter(|&i| i != held_out).collect(),
            training: population.without(held_out),
        }
    }

    /// Networks the fold's template is estimated from.
    pub fn cbt_inputs(&self) -> Result<Vec<(&str, &ConnectivityMatrix)>> {
        self.baselines()
    }

    /// Networks the fold's training embeddings are trained on, one per subject.
    pub fn embedding_inputs(&self) -> Result<Vec<(&str, &ConnectivityMatrix)>> {
        self.baselines()
    }

    fn baselines(&self) -> Result<Vec<(&str, &ConnectivityMatrix)>> {
        let t0 = self.training.baseline();
        self.training
            .subjects()
            .iter()
            .map(|s| Ok((s.subject_id.as_str(), s.at(t0)?)))
            .collect()
    }
}

pub fn fold_plans(population: &Population) -> Vec<FoldPlan> {
    (0..population.n_subjects())
        .map(|i| FoldPlan::new(population, i))
        .collect()
}

fn template_label(fold: usize) -> String {
    format!("template/fold-{fold}")
}

fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Baseline embedding of every subject, each trained on its own network only.
///
/// Because training is per network and seeded by `(seed, subject id)`, a
/// subject's embedding is the same in every fold it participates in.
pub fn embed_subjects(population: &Population, config: &EvalConfig) -> Result<Vec<Embedding>> {
    let cfg = config.seeded_train_config();
    let t0 = population.baseline();
    map_ordered(population.subjects(), |s| {
        train_embedding(s.at(t0)?, &cfg, &s.subject_id)
    })
    .into_iter()
    .collect()
}

/// Per-fold inputs to neighbor scoring that depend on the training subjects.
#[derive(Debug, Clone)]
pub struct FoldModels {
    /// Training-subject embeddings, aligned with `plan.training`.
    pub train_embeddings: Option<Vec<Embedding>>,
    pub template_embedding: Option<Embedding>,
}

impl FoldModels {
    fn inputs<'a>(
        &'a self,
        population: &'a Population,
        plan: &'a FoldPlan,
        embeddings: &'a [Embedding],
    ) -> Result<(Reference<'a>, Query<'a>)> {
        let test = population.subject(plan.held_out);
        let reference = Reference {
            population: &plan.training,
            embeddings: self.train_embeddings.as_deref(),
            template_embedding: self.template_embedding.as_ref(),
        };
        let query = Query {
            subject_id: &test.subject_id,
            baseline: test.at(population.baseline())?,
            embedding: self.train_embeddings.as_ref().map(|_| &embeddings[plan.held_out]),
        };
        Ok((reference, query))
    }
}

/// Estimates the fold template from the training baselines and embeds it.
/// Skipped entirely when no configured method uses embeddings.
pub fn fold_models(
    population: &Population,
    plan: &FoldPlan,
    embeddings: &[Embedding],
    config: &EvalConfig,
) -> Result<FoldModels> {
    plan.training.require_complete()?;
    if !config.methods.iter().any(|m| m.needs_embeddings()) {
        return Ok(FoldModels {
            train_embeddings: None,
            template_embedding: None,
        });
    }
    if embeddings.len() != population.n_subjects() {
        return Err(Error::DimensionMismatch {
            expected: population.n_subjects(),
            actual: embeddings.len(),
        });
    }
    let cbt = estimate_cbt(&plan.training, plan.training.baseline())?;
    let template = train_embedding(
        &cbt.template,
        &config.seeded_train_config(),
        &template_label(plan.fold),
    )?;
    Ok(FoldModels {
        train_embeddings: Some(plan.training_indices.iter().map(|&i| embeddings[i].clone()).collect()),
        template_embedding: Some(template),
    })
}

fn random_selection_seed(config: &EvalConfig, subject: &str, k: usize) -> u64 {
    derive_seed(config.seed, &["random-selection", subject, &k.to_string()])
}

/// Predicts the follow-up networks of one subject from all the others, as
/// in that subject's leave-one-out fold. Only the first method in `config`
/// is used.
pub fn predict_held_out(population: &Population, held_out: usize, k: usize, config: &EvalConfig) -> Result<Prediction> {
    let n_s = population.n_subjects();
    if held_out >= n_s {
        return Err(Error::InvalidInput(format!("subject index {held_out} out of range")));
    }
    if n_s < 2 {
        return Err(Error::InvalidInput("prediction needs at least one other subject".into()));
    }
    let config = EvalConfig {
        k_values: vec![k],
        ..config.clone()
    };
    config.validate(n_s)?;
    let method = config.methods[0];
    let plan = FoldPlan::new(population, held_out);
    let embeddings = if method.needs_embeddings() {
        embed_subjects(population, &config)?
    } else {
        Vec::new()
    };
    let models = fold_models(population, &plan, &embeddings, &config)?;
    let (reference, query) = models.inputs(population, &plan, &embeddings)?;
    let seed = random_selection_seed(&config, query.subject_id, k);
    predict_trajectory(method, reference, query, k, config.similarity, seed)
}

/// Runs one fold. `embeddings` must be aligned with the full population.
pub fn evaluate_fold(
    population: &Population,
    plan: &FoldPlan,
    embeddings: &[Embedding],
    config: &EvalConfig,
) -> Result<Vec<Cell>> {
    let wrap = |e: Error| Error::Fold {
        fold: plan.fold,
        subject: plan.test_subject.clone(),
        source: Box::new(e),
    };
    let run = || -> Result<Vec<Cell>> {
        let models = fold_models(population, plan, embeddings, config)?;
        let test = population.subject(plan.held_out);
        let (reference, query) = models.inputs(population, plan, embeddings)?;

        let mut cells = Vec::new();
        for &method in &config.methods {
            for &k in &config.k_values {
                let seed = random_selection_seed(config, &test.subject_id, k);
                let prediction = predict_trajectory(method, reference, query, k, config.similarity, seed)?;
                for (t, predicted) in &prediction.followups {
                    let truth = test.at(t)?;
                    cells.push(Cell {
                        method,
                        k,
                        timepoint: t.clone(),
                        subject: test.subject_id.clone(),
                        mad: mad(predicted, truth)?,
                        mse: mse(predicted, truth)?,
                    });
                }
            }
        }
        Ok(cells)
    };
    run().map_err(wrap)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn aggregate(cells: &[Cell], config: &EvalConfig, followups: &[String]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &method in &config.methods {
        for &k in &config.k_values {
            for t in followups {
                let picked: Vec<&Cell> = cells
                    .iter()
                    .filter(|c| c.method == method && c.k == k && &c.timepoint == t)
                    .collect();
                if picked.is_empty() {
                    continue;
                }
                let (mad_mean, mad_std) = mean_std(&picked.iter().map(|c| c.mad).collect::<Vec<_>>());
                let (mse_mean, mse_std) = mean_std(&picked.iter().map(|c| c.mse).collect::<Vec<_>>());
                out.push(Aggregate {
                    method,
                    k,
                    timepoint: t.clone(),
                    n_subjects: picked.len(),
                    mad_mean,
                    mad_std,
                    mse_mean,
                    mse_std,
                });
            }
        }
    }
    out
}

pub fn loocv(population: &Population, config: &EvalConfig) -> Result<EvalReport> {
    // no monotonic clock on wasm32-unknown-unknown
    #[cfg(not(target_arch = "wasm32"))]
    let started = std::time::Instant::now();
    let n_s = population.n_subjects();
    if n_s < 3 {
        return Err(Error::InvalidInput(format!(
            "leave-one-out needs at least 3 subjects, got {n_s}"
        )));
    }
    if population.timepoints().len() < 2 {
        return Err(Error::InvalidInput(
            "leave-one-out needs at least one follow-up timepoint".into(),
        ));
    }
    population.require_complete()?;
    config.validate(n_s)?;

    let needs_embeddings = config.methods.iter().any(|m| m.needs_embeddings());
    let embeddings = if needs_embeddings {
        embed_subjects(population, config)?
    } else {
        Vec::new()
    };
    let plans = fold_plans(population);
    let per_fold = map_ordered(&plans, |plan| evaluate_fold(population, plan, &embeddings, config));
    let mut cells = Vec::new();
    for fold in per_fold {
        cells.extend(fold?);
    }
    let aggregates = aggregate(&cells, config, population.followups());
    Ok(EvalReport {
        config: ReportConfig {
            eval: config.clone(),
            n_subjects: n_s,
            n_rois: population.n_rois(),
            timepoints: population.timepoints().to_vec(),
        },
        cells,
        aggregates,
        #[cfg(not(target_arch = "wasm32"))]
        wall_clock: Some(started.elapsed()),
        #[cfg(target_arch = "wasm32")]
        wall_clock: None,
    })
}

pub fn save_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    write_json(report, path)
}

/// One row of the plot-data CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub method: Method,
    #[serde(rename = "K")]
    pub k: usize,
    pub timepoint: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

pub fn plot_rows(report: &EvalReport) -> Vec<PlotRow> {
    report
        .aggregates
        .iter()
        .flat_map(|a| {
            [("mad", a.mad_mean, a.mad_std), ("mse", a.mse_mean, a.mse_std)].map(|(metric, mean, std)| PlotRow {
                method: a.method,
                k: a.k,
                timepoint: a.timepoint.clone(),
                metric: metric.to_string(),
                mean,
                std,
            })
        })
        .collect()
}

/// Writes `method,K,timepoint,metric,mean,std`, one row per aggregate and metric.
pub fn emit_plot_data(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in plot_rows(report) {
        writer.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_plot_data(path: impl AsRef<Path>) -> Result<Vec<PlotRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        }
    }
}

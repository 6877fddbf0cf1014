use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use netevo::cbt::{estimate_cbt, CbtSidecar};
use netevo::embed::{train_embedding_traced, IterationLosses, TrainConfig};
use netevo::eval::{emit_plot_data, loocv, predict_held_out, save_report, EvalConfig};
use netevo::io::{load_matrix, load_population, save_matrix, save_population, write_json};
use netevo::neighbors::{BaselineSimilarity, Method};
use netevo::synth::{generate, SynthConfig};

use crate::args::{CbtArgs, Cli, Command, EmbedArgs, EvaluateArgs, GenerateArgs, PredictArgs};

#[derive(Debug)]
pub enum CliError {
    /// A result file exists and `--force` was not given.
    Exists(PathBuf),
    Core(netevo::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Exists(p) => write!(f, "{} already exists (use --force to overwrite)", p.display()),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl From<netevo::Error> for CliError {
    fn from(e: netevo::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Output directory guard: every file is claimed before anything is written,
/// so a refused overwrite leaves the directory untouched.
struct Outputs {
    dir: PathBuf,
    force: bool,
}

impl Outputs {
    fn new(dir: &Path, force: bool) -> Self {
        Self { dir: dir.to_path_buf(), force }
    }

    fn claim(&self, rel: &[String]) -> Result<Vec<PathBuf>> {
        let paths: Vec<PathBuf> = rel.iter().map(|r| self.dir.join(r)).collect();
        if !self.force {
            if let Some(p) = paths.iter().find(|p| p.exists()) {
                return Err(CliError::Exists(p.clone()));
            }
        }
        for p in &paths {
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent).map_err(|e| netevo::Error::Io {
                    path: parent.to_path_buf(),
                    source: e,
                })?;
            }
        }
        Ok(paths)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let out = Outputs::new(&cli.global.out, cli.global.force);
    let seed = cli.global.seed;
    match &cli.command {
        Command::Generate(a) => run_generate(a, seed, &out),
        Command::Cbt(a) => run_cbt(a, &out),
        Command::Embed(a) => run_embed(a, seed, &out),
        Command::Predict(a) => run_predict(a, seed, &out),
        Command::Evaluate(a) => run_evaluate(a, seed, &out),
    }
}

#[derive(Serialize)]
struct Labels<'a> {
    seed: u64,
    config: &'a SynthConfig,
    clusters: &'a BTreeMap<String, usize>,
}

fn run_generate(args: &GenerateArgs, seed: u64, out: &Outputs) -> Result<()> {
    let config = args.config(seed);
    let synth = generate(&config)?;
    let pop = &synth.population;
    let mut files = vec!["manifest.json".to_string(), "labels.json".to_string()];
    for s in pop.subjects() {
        files.extend(s.matrices.keys().map(|t| format!("matrices/{}_{}.csv", s.subject_id, t)));
    }
    let paths = out.claim(&files)?;
    let manifest = save_population(pop, &out.dir)?;
    write_json(
        &Labels {
            seed,
            config: &config,
            clusters: &synth.cluster_of,
        },
        &paths[1],
    )?;
    log::info!(
        "generated {} subjects x {} timepoints ({} ROIs, {} clusters): {}",
        pop.n_subjects(),
        pop.timepoints().len(),
        pop.n_rois(),
        config.n_clusters,
        manifest.display()
    );
    Ok(())
}

fn run_cbt(args: &CbtArgs, out: &Outputs) -> Result<()> {
    let pop = load_population(&args.manifest)?;
    let timepoint = args.timepoint.clone().unwrap_or_else(|| pop.baseline().to_string());
    let paths = out.claim(&[format!("cbt_{timepoint}.csv"), format!("cbt_{timepoint}.json")])?;
    let result = estimate_cbt(&pop, &timepoint)?;
    save_matrix(&result.template, &paths[0])?;
    write_json(
        &CbtSidecar {
            timepoint: timepoint.clone(),
            subject_ids: pop.subjects().iter().map(|s| s.subject_id.clone()).collect(),
            chosen_subject: result.chosen_rows(),
        },
        &paths[1],
    )?;
    log::info!(
        "template of {} subjects at {timepoint}: {}",
        pop.n_subjects(),
        paths[0].display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EmbeddingInfo<'a> {
    subject_id: &'a str,
    n_rois: usize,
    length: usize,
    train_config: &'a TrainConfig,
    initial_reconstruction: f64,
    final_reconstruction: f64,
    history: &'a [IterationLosses],
}

fn run_embed(args: &EmbedArgs, seed: u64, out: &Outputs) -> Result<()> {
    let x = load_matrix(&args.matrix)?;
    let id = match &args.subject_id {
        Some(id) => id.clone(),
        None => args
            .matrix
            .file_stem()
            .map_or_else(|| "network".to_string(), |s| s.to_string_lossy().into_owned()),
    };
    let cfg = args.train.config(seed);
    let paths = out.claim(&[format!("{id}.embedding.csv"), format!("{id}.embedding.json")])?;
    let trained = train_embedding_traced(&x, &cfg, &id)?;
    let values = &trained.embedding.values;
    let line: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    fs::write(&paths[0], line.join(",") + "\n").map_err(|e| netevo::Error::Io {
        path: paths[0].clone(),
        source: e,
    })?;
    write_json(
        &EmbeddingInfo {
            subject_id: &id,
            n_rois: x.n_rois(),
            length: values.len(),
            train_config: &cfg,
            initial_reconstruction: trained.initial_reconstruction,
            final_reconstruction: trained.final_reconstruction,
            history: &trained.history,
        },
        &paths[1],
    )?;
    log::info!(
        "embedded {id} ({} values), reconstruction loss {:.6} -> {:.6}",
        values.len(),
        trained.initial_reconstruction,
        trained.final_reconstruction
    );
    Ok(())
}

#[derive(Serialize)]
struct Scored {
    index: usize,
    subject: String,
    score: f64,
}

#[derive(Serialize)]
struct PredictionInfo<'a> {
    subject: &'a str,
    method: Method,
    #[serde(rename = "K")]
    k: usize,
    similarity: BaselineSimilarity,
    seed: u64,
    train_config: &'a TrainConfig,
    /// Indices refer to the reference population (all subjects but the predicted one).
    scores: Vec<Scored>,
    selected: Vec<Scored>,
    predicted: BTreeMap<String, String>,
}

fn run_predict(args: &PredictArgs, seed: u64, out: &Outputs) -> Result<()> {
    let pop = load_population(&args.manifest)?;
    let held_out = pop.index_of(&args.subject)?;
    let config = EvalConfig {
        methods: vec![args.method],
        k_values: vec![args.k],
        train_config: args.train.config(seed),
        similarity: args.similarity.into(),
        seed,
    };
    let files: Vec<String> = pop
        .followups()
        .iter()
        .map(|t| format!("predicted/{}_{t}.csv", args.subject))
        .chain(["prediction.json".to_string()])
        .collect();
    let paths = out.claim(&files)?;
    let prediction = predict_held_out(&pop, held_out, args.k, &config)?;

    let reference = pop.without(held_out);
    let scored = |i: usize| Scored {
        index: i,
        subject: reference.subject(i).subject_id.clone(),
        score: prediction.similarity.scores[i],
    };
    let mut predicted = BTreeMap::new();
    for ((t, x), path) in prediction.followups.iter().zip(&paths) {
        save_matrix(x, path)?;
        predicted.insert(t.clone(), files[predicted.len()].clone());
    }
    write_json(
        &PredictionInfo {
            subject: &args.subject,
            method: args.method,
            k: args.k,
            similarity: config.similarity,
            seed,
            train_config: &config.train_config,
            scores: (0..reference.n_subjects()).map(scored).collect(),
            selected: prediction.selection.indices.iter().map(|&i| scored(i)).collect(),
            predicted,
        },
        paths.last().expect("prediction.json"),
    )?;
    let neighbors: Vec<&str> = prediction
        .selection
        .indices
        .iter()
        .map(|&i| reference.subject(i).subject_id.as_str())
        .collect();
    log::info!(
        "{} with {} (K={}): neighbors {}",
        args.subject,
        args.method,
        args.k,
        neighbors.join(", ")
    );
    Ok(())
}

fn run_evaluate(args: &EvaluateArgs, seed: u64, out: &Outputs) -> Result<()> {
    let pop = load_population(&args.manifest)?;
    let config = EvalConfig {
        methods: args.methods.clone(),
        k_values: args.k.clone(),
        train_config: args.train.config(seed),
        similarity: args.similarity.into(),
        seed,
    };
    let paths = out.claim(&["report.json".to_string(), "plot_data.csv".to_string()])?;
    log::info!(
        "leave-one-out over {} subjects, methods {:?}, K {:?}",
        pop.n_subjects(),
        args.methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
        args.k
    );
    let report = loocv(&pop, &config)?;
    save_report(&report, &paths[0])?;
    emit_plot_data(&report, &paths[1])?;
    for a in &report.aggregates {
        log::info!(
            "{:<16} K={} {}  MAD {:.4} +/- {:.4}  MSE {:.4} +/- {:.4}",
            a.method.name(),
            a.k,
            a.timepoint,
            a.mad_mean,
            a.mad_std,
            a.mse_mean,
            a.mse_std
        );
    }
    if let Some(d) = report.wall_clock {
        log::debug!("evaluation took {:.2}s", d.as_secs_f64());
    }
    log::info!("wrote {} and {}", paths[0].display(), paths[1].display());
    Ok(())
}

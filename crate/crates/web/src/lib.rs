//! Browser bindings. Every entry point takes and returns JSON strings.
//!
//! The functions in [`api`] hold the logic and run natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use wasm_bindgen::prelude::*;

pub mod api {
    use serde::{Deserialize, Serialize};
    use serde_json::json;

    use netevo::cbt::estimate_cbt;
    use netevo::embed::{train_embedding_traced, TrainConfig};
    use netevo::eval::{predict_held_out, EvalConfig};
    use netevo::matrix::{mad, mse, ConnectivityMatrix};
    use netevo::neighbors::Method;
    use netevo::synth::{generate, SynthConfig};

    pub type Result<T> = std::result::Result<T, String>;

    fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
        serde_json::from_str(text).map_err(|e| format!("bad request: {e}"))
    }

    fn rows(x: &ConnectivityMatrix) -> Vec<Vec<f64>> {
        x.weights().rows().into_iter().map(|r| r.to_vec()).collect()
    }

    fn err(e: netevo::Error) -> String {
        e.to_string()
    }

    #[derive(Serialize)]
    struct TemplateView {
        subject_ids: Vec<String>,
        clusters: Vec<usize>,
        timepoints: Vec<String>,
        template: Vec<Vec<f64>>,
        chosen_subject: Vec<Vec<usize>>,
        /// First subject's baseline, for comparison with the template.
        example: Vec<Vec<f64>>,
    }

    /// Generates a population and estimates its baseline template. Missing
    /// request fields take the library defaults.
    pub fn population_template(request: &str) -> Result<String> {
        let req: SynthConfig = parse(request)?;
        let synth = generate(&req).map_err(err)?;
        let pop = &synth.population;
        let cbt = estimate_cbt(pop, pop.baseline()).map_err(err)?;
        let view = TemplateView {
            subject_ids: pop.subjects().iter().map(|s| s.subject_id.clone()).collect(),
            clusters: pop.subjects().iter().map(|s| synth.cluster_of[&s.subject_id]).collect(),
            timepoints: pop.timepoints().to_vec(),
            template: rows(&cbt.template),
            chosen_subject: cbt.chosen_rows(),
            example: rows(pop.subject(0).at(pop.baseline()).map_err(err)?),
        };
        serde_json::to_string(&view).map_err(|e| e.to_string())
    }

    #[derive(Debug, Clone, Deserialize)]
    #[serde(default)]
    pub struct PredictRequest {
        #[serde(flatten)]
        pub synth: SynthConfig,
        pub subject: usize,
        pub method: String,
        pub k: usize,
        pub train: TrainConfig,
    }

    impl Default for PredictRequest {
        fn default() -> Self {
            Self {
                synth: SynthConfig::default(),
                subject: 0,
                method: "resnets".into(),
                k: 3,
                train: TrainConfig::default(),
            }
        }
    }

    /// Predicts one subject's last timepoint from the others.
    pub fn predict_subject(request: &str) -> Result<String> {
        let req: PredictRequest = parse(request)?;
        let method: Method = req.method.parse().map_err(err)?;
        let synth = generate(&req.synth).map_err(err)?;
        let pop = &synth.population;
        if req.subject >= pop.n_subjects() {
            return Err(format!("subject {} out of range 0..{}", req.subject, pop.n_subjects()));
        }
        let config = EvalConfig {
            methods: vec![method],
            k_values: vec![req.k],
            train_config: req.train.clone(),
            seed: req.synth.seed,
            ..EvalConfig::default()
        };
        let prediction = predict_held_out(pop, req.subject, req.k, &config).map_err(err)?;
        let test = pop.subject(req.subject);
        let (t, predicted) = prediction
            .followups
            .last()
            .ok_or("the population has no follow-up timepoint")?;
        let truth = test.at(t).map_err(err)?;
        let reference = pop.without(req.subject);
        let neighbors: Vec<_> = prediction
            .selection
            .indices
            .iter()
            .map(|&j| {
                let id = &reference.subject(j).subject_id;
                json!({
                    "subject": id,
                    "cluster": synth.cluster_of[id],
                    "score": prediction.similarity.scores[j],
                })
            })
            .collect();
        Ok(json!({
            "subject": test.subject_id,
            "cluster": synth.cluster_of[&test.subject_id],
            "timepoint": t,
            "method": method.name(),
            "k": req.k,
            "neighbors": neighbors,
            "predicted": rows(predicted),
            "truth": rows(truth),
            "mad": mad(predicted, truth).map_err(err)?,
            "mse": mse(predicted, truth).map_err(err)?,
        })
        .to_string())
    }

    #[derive(Debug, Clone, Default, Deserialize)]
    #[serde(default)]
    pub struct TrainingRequest {
        #[serde(flatten)]
        pub synth: SynthConfig,
        pub subject: usize,
        pub train: TrainConfig,
    }

    /// Per-iteration losses of one subject's baseline embedding.
    pub fn training_curve(request: &str) -> Result<String> {
        let req: TrainingRequest = parse(request)?;
        let synth = generate(&req.synth).map_err(err)?;
        let pop = &synth.population;
        if req.subject >= pop.n_subjects() {
            return Err(format!("subject {} out of range 0..{}", req.subject, pop.n_subjects()));
        }
        let s = pop.subject(req.subject);
        let run = train_embedding_traced(s.at(pop.baseline()).map_err(err)?, &req.train, &s.subject_id)
            .map_err(err)?;
        Ok(json!({
            "subject": s.subject_id,
            "initial_reconstruction": run.initial_reconstruction,
            "final_reconstruction": run.final_reconstruction,
            "history": run.history,
        })
        .to_string())
    }

}

fn js(result: api::Result<String>) -> Result<String, JsError> {
    result.map_err(|e| JsError::new(&e))
}

/// Synthetic population and its baseline template, as JSON.
#[wasm_bindgen(js_name = populationTemplate)]
pub fn population_template(request: &str) -> Result<String, JsError> {
    js(api::population_template(request))
}

/// Held-out prediction of one subject with a chosen method and K, as JSON.
#[wasm_bindgen(js_name = predictSubject)]
pub fn predict_subject(request: &str) -> Result<String, JsError> {
    js(api::predict_subject(request))
}

/// Embedding training losses per iteration, as JSON.
#[wasm_bindgen(js_name = trainingCurve)]
pub fn training_curve(request: &str) -> Result<String, JsError> {
    js(api::training_curve(request))
}

//! Per-network adversarially regularized graph autoencoder.
//!
//! Each network is embedded by its own encoder/discriminator pair, trained
//! from scratch with full-batch gradient descent. The encoder is
//! `GCN(ReLU) -> Gaussian noise -> GCN(linear)`; the decoder is
//! `sigmoid(Z Zᵀ)`; the discriminator tries to tell encoder rows from prior
//! samples.

pub mod discriminator;
pub mod gcn;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{normalize_minmax, ConnectivityMatrix};
use crate::seed::derive_seed;

pub use discriminator::{
    adversarial_losses, discriminator_forward, discriminator_loss_grad, generator_loss_grad,
    AdversarialLosses, DiscriminatorParams,
};
pub use gcn::{
    decode, encode, normalize_adjacency, reconstruction_loss, EncoderParams, Features,
    NodeEmbedding,
};

/// Distribution the discriminator treats as real.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prior {
    /// Fresh `N(0, I_h)` rows every iteration.
    #[default]
    Gaussian,
    /// Rows of the normalized adjacency restricted to a fixed random set of `h` columns.
    DataRows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate_encoder: f64,
    pub learning_rate_discriminator: f64,
    pub iterations: usize,
    pub noise_sigma: f64,
    pub h: usize,
    pub adversarial_weight: f64,
    pub prior: Prior,
    pub features: Features,
    /// Seeds the weight initialization. Noise and prior streams additionally
    /// mix in the subject id.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate_encoder: 0.005,
            learning_rate_discriminator: 0.005,
            iterations: 30,
            noise_sigma: 0.1,
            h: 16,
            adversarial_weight: 1.0,
            prior: Prior::Gaussian,
            features: Features::Identity,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate_encoder > 0.0 && self.learning_rate_encoder.is_finite()) {
            return bad(format!("encoder learning rate must be > 0, got {}", self.learning_rate_encoder));
        }
        if !(self.learning_rate_discriminator > 0.0 && self.learning_rate_discriminator.is_finite()) {
            return bad(format!(
                "discriminator learning rate must be > 0, got {}",
                self.learning_rate_discriminator
            ));
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.h == 0 {
            return bad("embedding width h must be >= 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.adversarial_weight >= 0.0 && self.adversarial_weight.is_finite()) {
            return bad(format!("adversarial weight must be >= 0, got {}", self.adversarial_weight));
        }
        Ok(())
    }
}

/// Flattened node embedding of one network, length `n_rois * h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub subject_id: String,
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLosses {
    pub reconstruction: f64,
    pub generator: f64,
    pub discriminator: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedEmbedding {
    pub embedding: Embedding,
    pub encoder: EncoderParams,
    pub discriminator: DiscriminatorParams,
    /// Noise-free reconstruction loss before the first update.
    pub initial_reconstruction: f64,
    /// Noise-free reconstruction loss of the returned encoder.
    pub final_reconstruction: f64,
    /// Losses observed during each training iteration (noisy forward pass).
    pub history: Vec<IterationLosses>,
}

/// Everything the per-network optimization needs besides the weights.
pub struct TrainingProblem {
    /// Min-max normalized network used as the reconstruction target.
    pub target: ConnectivityMatrix,
    pub a_hat: Array2<f64>,
    pub features: gcn::Features,
}

impl TrainingProblem {
    pub fn new(x: &ConnectivityMatrix, features: Features) -> Self {
        let target = normalize_minmax(x);
        let a_hat = normalize_adjacency(x);
        Self {
            target,
            a_hat,
            features,
        }
    }

    pub fn n_rois(&self) -> usize {
        self.target.n_rois()
    }

    /// Noise-free reconstruction loss of `params`.
    pub fn reconstruction(&self, params: &EncoderParams) -> f64 {
        let z = encode(params, &self.a_hat, self.features, None);
        reconstruction_loss(&self.target, &decode(&z.0))
    }

    /// `reconstruction + adversarial_weight * generator` and its gradient,
    /// with an optional fixed hidden-layer noise sample.
    pub fn encoder_loss_grad(
        &self,
        params: &EncoderParams,
        disc: &DiscriminatorParams,
        adversarial_weight: f64,
        noise: Option<&Array2<f64>>,
    ) -> (IterationLosses, EncoderParams) {
        let pass = gcn::forward(params, &self.a_hat, self.features, noise);
        let (rec, mut grad_z) = gcn::reconstruction_loss_grad(&self.target, &pass.z);
        let (gen, grad_fake) = generator_loss_grad(disc, &pass.z);
        grad_z.scaled_add(adversarial_weight, &grad_fake);
        let grad = gcn::encoder_backward(params, &self.a_hat, &pass, &grad_z);
        let losses = IterationLosses {
            reconstruction: rec,
            generator: gen,
            discriminator: f64::NAN,
        };
        (losses, grad)
    }
}

fn real_samples(
    prior: Prior,
    a_hat: &Array2<f64>,
    columns: &[usize],
    h: usize,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let n = a_hat.nrows();
    match prior {
        Prior::Gaussian => Array2::from_shape_simple_fn((n, h), || StandardNormal.sample(rng)),
        Prior::DataRows => Array2::from_shape_fn((n, h), |(a, k)| a_hat[[a, columns[k]]]),
    }
}

fn prior_columns(prior: Prior, n: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match prior {
        Prior::Gaussian => Vec::new(),
        Prior::DataRows if h <= n => {
            let mut cols = sample(rng, n, h).into_vec();
            cols.sort_unstable();
            cols
        }
        Prior::DataRows => (0..h).map(|_| rng.random_range(0..n)).collect(),
    }
}

fn ensure_finite(iteration: usize, what: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            iteration,
            message: format!("{what} is {value}"),
        })
    }
}

/// Trains a fresh encoder on `x` and returns the noise-free embedding with
/// the training trace.
///
/// Weights are initialized from `cfg.seed` alone, so every network of an
/// experiment starts from the same encoder and the embeddings share one
/// coordinate system. Noise and prior samples come from a stream keyed by
/// `(cfg.seed, subject_id)`.
pub fn train_embedding_traced(
    x: &ConnectivityMatrix,
    cfg: &TrainConfig,
    subject_id: &str,
) -> Result<TrainedEmbedding> {
    cfg.validate()?;
    let problem = TrainingProblem::new(x, cfg.features);
    let n = problem.n_rois();

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut encoder = EncoderParams::glorot(n, cfg.h, &mut init_rng);
    let mut disc = DiscriminatorParams::glorot(cfg.h, &mut init_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["embed", subject_id]));
    let columns = prior_columns(cfg.prior, n, cfg.h, &mut rng);

    let initial_reconstruction = problem.reconstruction(&encoder);
    ensure_finite(0, "initial reconstruction loss", initial_reconstruction)?;

    let mut history = Vec::with_capacity(cfg.iterations);
    for iteration in 1..=cfg.iterations {
        let noise = (cfg.noise_sigma > 0.0)
            .then(|| gcn::sample_noise(n, cfg.h, cfg.noise_sigma, &mut rng));
        let fake = gcn::forward(&encoder, &problem.a_hat, problem.features, noise.as_ref()).z;
        let real = real_samples(cfg.prior, &problem.a_hat, &columns, cfg.h, &mut rng);

        let (disc_loss, disc_grad) = discriminator_loss_grad(&disc, &real, &fake);
        ensure_finite(iteration, "discriminator loss", disc_loss)?;
        disc.descend(&disc_grad, cfg.learning_rate_discriminator);
        if !disc.is_finite() {
            return Err(Error::Divergence {
                iteration,
                message: "discriminator weights are not finite".into(),
            });
        }

        let (mut losses, enc_grad) =
            problem.encoder_loss_grad(&encoder, &disc, cfg.adversarial_weight, noise.as_ref());
        ensure_finite(iteration, "reconstruction loss", losses.reconstruction)?;
        ensure_finite(iteration, "generator loss", losses.generator)?;
        encoder.descend(&enc_grad, cfg.learning_rate_encoder);
        if !encoder.is_finite() {
            return Err(Error::Divergence {
                iteration,
                message: "encoder weights are not finite".into(),
            });
        }
        losses.discriminator = disc_loss;
        history.push(losses);
    }

    let z = encode(&encoder, &problem.a_hat, problem.features, None);
    let final_reconstruction = reconstruction_loss(&problem.target, &decode(&z.0));
    let values = z.flatten();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration: cfg.iterations,
            message: "embedding is not finite".into(),
        });
    }
    Ok(TrainedEmbedding {
        embedding: Embedding {
            subject_id: subject_id.to_string(),
            values,
        },
        encoder,
        discriminator: disc,
        initial_reconstruction,
        final_reconstruction,
        history,
    })
}

pub fn train_embedding(x: &ConnectivityMatrix, cfg: &TrainConfig, subject_id: &str) -> Result<Embedding> {
    train_embedding_traced(x, cfg, subject_id).map(|t| t.embedding)
}

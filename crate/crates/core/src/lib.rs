//! Follow-up brain network prediction from a single baseline observation.
//!
//! The pipeline estimates a population template network, embeds every
//! network with a per-sample adversarial graph autoencoder, ranks training
//! subjects by the cosine similarity of their template-residual embeddings,
//! and averages the follow-up networks of the top-ranked subjects.

pub mod cbt;
pub mod embed;
pub mod error;
pub mod eval;
pub mod io;
pub mod matrix;
pub mod neighbors;
pub mod population;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::{ConnectivityMatrix, FeatureVector};
pub use population::{Population, SubjectTrajectory};

//! Two-layer graph-convolutional encoder with an inner-product decoder.

use ndarray::{Array2, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::matrix::ConnectivityMatrix;

/// Clamp applied to every probability before taking a logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// Node feature matrix fed to the first convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Features {
    /// `F = I`, one indicator feature per node.
    #[default]
    Identity,
    /// `F` filled with ones.
    Ones,
}

impl Features {
    pub fn matrix(self, n: usize) -> Array2<f64> {
        match self {
            Features::Identity => Array2::eye(n),
            Features::Ones => Array2::ones((n, n)),
        }
    }
}

/// `D^-1/2 (X + I) D^-1/2` with `D` the row sums of `X + I`.
pub fn normalize_adjacency(x: &ConnectivityMatrix) -> Array2<f64> {
    let n = x.n_rois();
    let tilde = x.weights() + &Array2::<f64>::eye(n);
    let inv_sqrt: Vec<f64> = tilde.rows().into_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
    Array2::from_shape_fn((n, n), |(a, b)| inv_sqrt[a] * tilde[[a, b]] * inv_sqrt[b])
}

/// Encoder weights. The same type holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `n_r x h`
    pub w1: Array2<f64>,
    /// `h x h`
    pub w2: Array2<f64>,
}

impl EncoderParams {
    pub fn glorot(n_in: usize, h: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: glorot(n_in, h, rng),
            w2: glorot(h, h, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w1: Array2::zeros(self.w1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
        }
    }

    pub fn tensors(&self) -> [&Array2<f64>; 2] {
        [&self.w1, &self.w2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Array2<f64>; 2] {
        [&mut self.w1, &mut self.w2]
    }

    /// `self -= lr * grad`
    pub fn descend(&mut self, grad: &EncoderParams, lr: f64) {
        self.w1.scaled_add(-lr, &grad.w1);
        self.w2.scaled_add(-lr, &grad.w2);
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit))
}

/// Per-node embedding, one row per ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbedding(pub Array2<f64>);

impl NodeEmbedding {
    /// Row-major flattening.
    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().copied().collect()
    }
}

/// Intermediate activations of one encoder forward pass.
#[derive(Debug, Clone)]
pub struct EncoderPass {
    /// `Â F`
    pub propagated: Array2<f64>,
    /// `Â F W1`
    pub pre_activation: Array2<f64>,
    /// `ReLU(Â F W1) + noise`
    pub hidden: Array2<f64>,
    /// `Â hidden`
    pub aggregated: Array2<f64>,
    pub z: Array2<f64>,
}

/// Gaussian perturbation of the hidden layer, `sigma * N(0, 1)` per entry.
pub fn sample_noise<R: Rng + ?Sized>(n: usize, h: usize, sigma: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, h), || {
        let e: f64 = StandardNormal.sample(rng);
        sigma * e
    })
}

pub fn forward(
    params: &EncoderParams,
    a_hat: &Array2<f64>,
    features: Features,
    noise: Option<&Array2<f64>>,
) -> EncoderPass {
    let propagated = match features {
        Features::Identity => a_hat.clone(),
        Features::Ones => a_hat.dot(&features.matrix(a_hat.nrows())),
    };
    let pre_activation = propagated.dot(&params.w1);
    let mut hidden = pre_activation.mapv(|v| v.max(0.0));
    if let Some(noise) = noise {
        hidden += noise;
    }
    let aggregated = a_hat.dot(&hidden);
    let z = aggregated.dot(&params.w2);
    EncoderPass {
        propagated,
        pre_activation,
        hidden,
        aggregated,
        z,
    }
}

/// Encodes a normalized adjacency. With `noise = None` this is the
/// deterministic inference map.
pub fn encode(
    params: &EncoderParams,
    a_hat: &Array2<f64>,
    features: Features,
    noise: Option<(f64, &mut dyn rand::RngCore)>,
) -> NodeEmbedding {
    let noise = noise.map(|(sigma, rng)| sample_noise(a_hat.nrows(), params.w2.nrows(), sigma, rng));
    NodeEmbedding(forward(params, a_hat, features, noise.as_ref()).z)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid(Z Zᵀ)`
pub fn decode(z: &Array2<f64>) -> Array2<f64> {
    let n = z.nrows();
    let mut out = Array2::zeros((n, n));
    for a in 0..n {
        for b in a..n {
            let p = sigmoid(z.row(a).dot(&z.row(b)));
            out[[a, b]] = p;
            out[[b, a]] = p;
        }
    }
    out
}

fn bce(target: f64, p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Mean binary cross-entropy over off-diagonal entries.
pub fn reconstruction_loss(target: &ConnectivityMatrix, decoded: &Array2<f64>) -> f64 {
    let n = target.n_rois();
    let mut sum = 0.0;
    for a in 0..n {
        for b in 0..n {
            if a != b {
                sum += bce(target.get(a, b), decoded[[a, b]]);
            }
        }
    }
    sum / (n * (n - 1)) as f64
}

/// Reconstruction loss and its gradient with respect to `Z`.
pub(crate) fn reconstruction_loss_grad(
    target: &ConnectivityMatrix,
    z: &Array2<f64>,
) -> (f64, Array2<f64>) {
    let n = target.n_rois();
    let decoded = decode(z);
    let loss = reconstruction_loss(target, &decoded);
    let scale = 1.0 / (n * (n - 1)) as f64;
    // d loss / d logit(a,b); zero where the clamp is active
    let mut g = Array2::zeros((n, n));
    Zip::indexed(&mut g).and(&decoded).for_each(|(a, b), g, &p| {
        if a != b && (PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
            *g = (p - target.get(a, b)) * scale;
        }
    });
    // logits = Z Zᵀ and g is symmetric
    let grad_z = g.dot(z) * 2.0;
    (loss, grad_z)
}

/// Backpropagates a gradient on `Z` to the encoder weights.
pub(crate) fn encoder_backward(
    params: &EncoderParams,
    a_hat: &Array2<f64>,
    pass: &EncoderPass,
    grad_z: &Array2<f64>,
) -> EncoderParams {
    let w2 = pass.aggregated.t().dot(grad_z);
    let grad_hidden = a_hat.t().dot(&grad_z.dot(&params.w2.t()));
    let grad_pre = Zip::from(&grad_hidden)
        .and(&pass.pre_activation)
        .map_collect(|&g, &pre| if pre > 0.0 { g } else { 0.0 });
    let w1 = pass.propagated.t().dot(&grad_pre);
    EncoderParams { w1, w2 }
}

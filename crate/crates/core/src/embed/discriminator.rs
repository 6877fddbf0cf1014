//! MLP discriminator separating prior samples from embedding rows.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::gcn::{glorot, sigmoid, PROB_EPS};

/// Hidden widths after the input layer.
pub const HIDDEN_WIDTHS: [usize; 2] = [64, 16];

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `fan_in x fan_out`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// `input -> 64 (ReLU) -> 16 (ReLU) -> 1 (sigmoid)`. The same type holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    pub layers: Vec<DenseLayer>,
}

impl DiscriminatorParams {
    pub fn glorot(input: usize, rng: &mut impl Rng) -> Self {
        let mut widths = vec![input];
        widths.extend(HIDDEN_WIDTHS);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer {
                weights: glorot(w[0], w[1], rng),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(input: usize) -> Self {
        let mut widths = vec![input];
        widths.extend(HIDDEN_WIDTHS);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    /// `self -= lr * grad`
    pub fn descend(&mut self, grad: &DiscriminatorParams, lr: f64) {
        for (p, g) in self.layers.iter_mut().zip(&grad.layers) {
            p.weights.scaled_add(-lr, &g.weights);
            p.bias.scaled_add(-lr, &g.bias);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite())
        })
    }

    /// Visits every scalar parameter in a fixed order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(&mut f);
            l.bias.iter_mut().for_each(&mut f);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

struct Pass {
    /// Inputs to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    logits: Array1<f64>,
}

fn forward_batch(params: &DiscriminatorParams, batch: &Array2<f64>) -> Pass {
    let mut inputs = vec![batch.clone()];
    let last = params.layers.len() - 1;
    let mut logits = Array1::zeros(batch.nrows());
    for (i, layer) in params.layers.iter().enumerate() {
        let out = inputs[i].dot(&layer.weights) + &layer.bias;
        if i == last {
            logits = out.column(0).to_owned();
        } else {
            inputs.push(out.mapv(|v| v.max(0.0)));
        }
    }
    Pass { inputs, logits }
}

/// Probability that `v` is a prior sample.
pub fn discriminator_forward(params: &DiscriminatorParams, v: &[f64]) -> f64 {
    let batch = Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row vector");
    sigmoid(forward_batch(params, &batch).logits[0])
}

pub fn probabilities(params: &DiscriminatorParams, batch: &Array2<f64>) -> Array1<f64> {
    forward_batch(params, batch).logits.mapv(sigmoid)
}

/// Gradients of a per-row logit loss with respect to the parameters and the batch.
fn backward(
    params: &DiscriminatorParams,
    pass: &Pass,
    grad_logits: &Array1<f64>,
) -> (DiscriminatorParams, Array2<f64>) {
    let mut layers = Vec::with_capacity(params.layers.len());
    let mut grad_out = grad_logits.clone().insert_axis(Axis(1));
    for (i, layer) in params.layers.iter().enumerate().rev() {
        let input = &pass.inputs[i];
        layers.push(DenseLayer {
            weights: input.t().dot(&grad_out),
            bias: grad_out.sum_axis(Axis(0)),
        });
        let mut grad_in = grad_out.dot(&layer.weights.t());
        if i > 0 {
            // inputs[i] = ReLU(previous pre-activation)
            grad_in.zip_mut_with(input, |g, &x| {
                if x <= 0.0 {
                    *g = 0.0;
                }
            });
        }
        grad_out = grad_in;
    }
    layers.reverse();
    (DiscriminatorParams { layers }, grad_out)
}

fn in_clamp_range(p: f64) -> bool {
    (PROB_EPS..=1.0 - PROB_EPS).contains(&p)
}

fn neg_log(p: f64) -> f64 {
    -p.clamp(PROB_EPS, 1.0 - PROB_EPS).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversarialLosses {
    /// `-mean log D(real) - mean log(1 - D(fake))`
    pub discriminator: f64,
    /// `-mean log D(fake)`
    pub generator: f64,
}

pub fn adversarial_losses(
    params: &DiscriminatorParams,
    real: &Array2<f64>,
    fake: &Array2<f64>,
) -> AdversarialLosses {
    let p_real = probabilities(params, real);
    let p_fake = probabilities(params, fake);
    AdversarialLosses {
        discriminator: p_real.mapv(neg_log).mean().unwrap_or(0.0)
            + p_fake.mapv(|p| neg_log(1.0 - p)).mean().unwrap_or(0.0),
        generator: p_fake.mapv(neg_log).mean().unwrap_or(0.0),
    }
}

/// Discriminator loss and its gradient with respect to the discriminator.
pub fn discriminator_loss_grad(
    params: &DiscriminatorParams,
    real: &Array2<f64>,
    fake: &Array2<f64>,
) -> (f64, DiscriminatorParams) {
    let real_pass = forward_batch(params, real);
    let fake_pass = forward_batch(params, fake);
    let p_real = real_pass.logits.mapv(sigmoid);
    let p_fake = fake_pass.logits.mapv(sigmoid);
    let loss = p_real.mapv(neg_log).mean().unwrap_or(0.0)
        + p_fake.mapv(|p| neg_log(1.0 - p)).mean().unwrap_or(0.0);

    let n_real = real.nrows() as f64;
    let n_fake = fake.nrows() as f64;
    // d/dl of -log(sigmoid(l)) is p - 1; of -log(1 - sigmoid(l)) is p
    let g_real = p_real.mapv(|p| if in_clamp_range(p) { (p - 1.0) / n_real } else { 0.0 });
    let g_fake = p_fake.mapv(|p| if in_clamp_range(1.0 - p) { p / n_fake } else { 0.0 });
    let (mut grad, _) = backward(params, &real_pass, &g_real);
    let (grad_fake, _) = backward(params, &fake_pass, &g_fake);
    for (g, f) in grad.layers.iter_mut().zip(&grad_fake.layers) {
        g.weights += &f.weights;
        g.bias += &f.bias;
    }
    (loss, grad)
}

/// Generator loss `-mean log D(fake)` and its gradient with respect to the fake rows.
pub fn generator_loss_grad(params: &DiscriminatorParams, fake: &Array2<f64>) -> (f64, Array2<f64>) {
    let pass = forward_batch(params, fake);
    let p = pass.logits.mapv(sigmoid);
    let loss = p.mapv(neg_log).mean().unwrap_or(0.0);
    let n = fake.nrows() as f64;
    let g = p.mapv(|p| if in_clamp_range(p) { (p - 1.0) / n } else { 0.0 });
    let (_, grad_input) = backward(params, &pass, &g);
    (loss, grad_input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_discriminator_outputs_half() {
        let d = DiscriminatorParams::zeros(4);
        assert_eq!(discriminator_forward(&d, &[1.0, -2.0, 3.0, 0.5]), 0.5);
    }

    #[test]
    fn forward_is_deterministic() {
        let d = DiscriminatorParams::glorot(3, &mut ChaCha8Rng::seed_from_u64(1));
        let v = [0.3, -0.7, 1.1];
        assert_eq!(discriminator_forward(&d, &v), discriminator_forward(&d, &v));
    }

    #[test]
    fn hand_built_logit_one() {
        // only the output bias is set, so the logit is exactly 1
        let mut d = DiscriminatorParams::zeros(2);
        d.layers[2].bias[0] = 1.0;
        let p = discriminator_forward(&d, &[5.0, 5.0]);
        assert!((p - 0.731_059).abs() < 1e-6);

        // route the input through unit weights so that logit = v0
        let mut d = DiscriminatorParams::zeros(2);
        d.layers[0].weights[[0, 0]] = 1.0;
        d.layers[1].weights[[0, 0]] = 1.0;
        d.layers[2].weights[[0, 0]] = 1.0;
        assert!((discriminator_forward(&d, &[1.0, 9.0]) - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn untrained_losses() {
        let d = DiscriminatorParams::zeros(3);
        let real = Array2::from_elem((5, 3), 0.4);
        let fake = Array2::from_elem((4, 3), -1.0);
        let l = adversarial_losses(&d, &real, &fake);
        assert!((l.discriminator - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((l.generator - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_losses() {
        // logit = +40 * v0: real rows (v0 = 1) -> 1, fake rows (v0 = -1) -> ~0
        let mut d = DiscriminatorParams::zeros(1);
        d.layers[0].weights[[0, 0]] = 40.0;
        d.layers[0].weights[[0, 1]] = -40.0;
        d.layers[1].weights[[0, 0]] = 1.0;
        d.layers[1].weights[[1, 1]] = 1.0;
        d.layers[2].weights[[0, 0]] = 1.0;
        d.layers[2].weights[[1, 0]] = -1.0;
        let real = Array2::from_elem((3, 1), 1.0);
        let fake = Array2::from_elem((3, 1), -1.0);
        let l = adversarial_losses(&d, &real, &fake);
        assert!(l.discriminator < 1e-6);

        // the same network fooled: fake rows look real
        let l = adversarial_losses(&d, &real, &real);
        assert!(l.generator < 1e-6);
    }
}

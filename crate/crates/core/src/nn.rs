//! Minimal fully-connected network engine: forward pass, exact reverse-mode
//! gradients and Adam. Just enough to train every architecture used by the
//! inpainting models, with no external tensor library.
//!
//! Weights are `f64` and training with a fixed seed is bit-reproducible
//! within one build: there is no threading and no iteration over unordered
//! containers anywhere in a training step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rand_util::standard_normal;

/// Clamp bound for probabilities before taking logs.
pub const LOG_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    fn forward(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the post-activation value.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

/// Shape of a feed-forward network: input width plus one entry per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub layers: Vec<LayerSpec>,
}

impl MlpSpec {
    pub fn new(input: usize, layers: &[(usize, Activation)]) -> Self {
        MlpSpec {
            input,
            layers: layers
                .iter()
                .map(|&(width, activation)| LayerSpec { width, activation })
                .collect(),
        }
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(self.input, |l| l.width)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("MLP needs at least one layer".into()));
        }
        if self.input == 0 || self.layers.iter().any(|l| l.width == 0) {
            return Err(Error::InvalidConfig("MLP widths must be >= 1".into()));
        }
        Ok(())
    }
}

/// A dense network: per-layer weight matrix (row-major, `out x in`) and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Per-parameter gradient (or moment) buffers shaped like an [`Mlp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            weights: mlp.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for w in &mut self.weights {
            w.fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
    }

    /// Scales every gradient, e.g. by `1 / batch_size` for mini-batch means.
    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.iter_mut().for_each(|v| *v *= factor);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Post-activation values of every layer for one forward pass; `values[0]`
/// is the input and `values[last]` the network output.
#[derive(Debug, Clone)]
pub struct Trace {
    values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace holds at least the input")
    }
}

impl Mlp {
    /// Glorot-uniform initialization: weights in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut weights = Vec::with_capacity(spec.layers.len());
        let mut biases = Vec::with_capacity(spec.layers.len());
        let mut fan_in = spec.input;
        for layer in &spec.layers {
            let fan_out = layer.width;
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-limit..limit))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
            fan_in = fan_out;
        }
        Ok(Mlp {
            spec,
            weights,
            biases,
        })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut fan_in = spec.input;
        for layer in &spec.layers {
            weights.push(vec![0.0; fan_in * layer.width]);
            biases.push(vec![0.0; layer.width]);
            fan_in = layer.width;
        }
        Ok(Mlp {
            spec,
            weights,
            biases,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn weights_mut(&mut self) -> (&mut Vec<Vec<f64>>, &mut Vec<Vec<f64>>) {
        (&mut self.weights, &mut self.biases)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.forward_trace(x)?;
        Ok(trace.values.pop().expect("trace holds at least the input"))
    }

    /// Forward pass keeping per-layer activations for a later backward pass.
    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.spec.input {
            return Err(Error::ShapeMismatch {
                context: "mlp input",
                expected: self.spec.input,
                got: x.len(),
            });
        }
        let mut values = Vec::with_capacity(self.spec.layers.len() + 1);
        values.push(x.to_vec());
        for (li, layer) in self.spec.layers.iter().enumerate() {
            let input = values.last().expect("non-empty");
            let w = &self.weights[li];
            let b = &self.biases[li];
            let in_dim = input.len();
            let mut out = vec![0.0; layer.width];
            for (o, out_v) in out.iter_mut().enumerate() {
                let row = &w[o * in_dim..(o + 1) * in_dim];
                let mut z = b[o];
                for (wv, xv) in row.iter().zip(input.iter()) {
                    z = wv.mul_add(*xv, z);
                }
                let y = layer.activation.forward(z);
                if !y.is_finite() {
                    return Err(Error::NonFinite {
                        context: "mlp forward",
                        layer: li,
                    });
                }
                *out_v = y;
            }
            values.push(out);
        }
        Ok(Trace { values })
    }

    /// Reverse-mode pass. Accumulates parameter gradients into `grads`
    /// (shaped like `self`) and returns the gradient w.r.t. the input.
    pub fn backward(&self, trace: &Trace, d_output: &[f64], grads: &mut MlpGrads) -> Vec<f64> {
        assert_eq!(
            d_output.len(),
            self.spec.output_width(),
            "d_output width mismatch"
        );
        let mut d_out = d_output.to_vec();
        for li in (0..self.spec.layers.len()).rev() {
            let layer = &self.spec.layers[li];
            let input = &trace.values[li];
            let output = &trace.values[li + 1];
            let in_dim = input.len();
            let mut d_in = vec![0.0; in_dim];
            let gw = &mut grads.weights[li];
            let gb = &mut grads.biases[li];
            for o in 0..layer.width {
                let dz = d_out[o] * layer.activation.grad_from_output(output[o]);
                gb[o] += dz;
                let row = o * in_dim;
                let wrow = &self.weights[li][row..row + in_dim];
                let grow = &mut gw[row..row + in_dim];
                for i in 0..in_dim {
                    grow[i] = dz.mul_add(input[i], grow[i]);
                    d_in[i] = wrow[i].mul_add(dz, d_in[i]);
                }
            }
            d_out = d_in;
        }
        d_out
    }
}

trait PopLast {
    type Item;
    fn pop_last(self) -> Self::Item;
}

impl PopLast for Vec<Vec<f64>> {
    type Item = Vec<f64>;
    fn pop_last(mut self) -> Vec<f64> {
        self.pop().expect("non-empty")
    }
}

/// Gradient of a scalar loss w.r.t. every parameter of `mlp`.
///
/// `loss` maps the network output to `(loss_value, d_loss/d_output)`; the
/// parameter gradients are exact given an exact output gradient.
pub fn mlp_gradients<F>(mlp: &Mlp, x: &[f64], loss: F) -> Result<(f64, MlpGrads)>
where
    F: FnOnce(&[f64]) -> (f64, Vec<f64>),
{
    let trace = mlp.forward_trace(x)?;
    let (value, d_out) = loss(trace.output());
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "loss",
            layer: mlp.spec.layers.len(),
        });
    }
    let mut grads = MlpGrads::zeros_like(mlp);
    mlp.backward(&trace, &d_out, &mut grads);
    Ok((value, grads))
}

/// Adam state: first/second moment accumulators plus the step counter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: MlpGrads,
    v: MlpGrads,
}

impl Adam {
    pub fn new(mlp: &Mlp, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: MlpGrads::zeros_like(mlp),
            v: MlpGrads::zeros_like(mlp),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut Mlp, grads: &MlpGrads) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        };
        for li in 0..params.weights.len() {
            update(
                &mut params.weights[li],
                &grads.weights[li],
                &mut self.m.weights[li],
                &mut self.v.weights[li],
            );
            update(
                &mut params.biases[li],
                &grads.biases[li],
                &mut self.m.biases[li],
                &mut self.v.biases[li],
            );
        }
    }
}

/// Closed-form KL divergence of `N(mu, exp(logvar))` from the standard
/// normal: `0.5 * sum(mu^2 + sigma^2 - 1 - logvar)`.
pub fn kl_gauss(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(Error::ShapeMismatch {
            context: "kl_gauss",
            expected: mu.len(),
            got: logvar.len(),
        });
    }
    let mut acc = 0.0;
    for (&m, &lv) in mu.iter().zip(logvar) {
        if !m.is_finite() || !lv.is_finite() {
            return Err(Error::NonFinite {
                context: "kl_gauss input",
                layer: 0,
            });
        }
        acc += m * m + lv.exp() - 1.0 - lv;
    }
    Ok(0.5 * acc)
}

/// Gradients of [`kl_gauss`] w.r.t. `mu` and `logvar`.
pub fn kl_gauss_grad(mu: &[f64], logvar: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d_mu = mu.to_vec();
    let d_logvar = logvar.iter().map(|&lv| 0.5 * (lv.exp() - 1.0)).collect();
    (d_mu, d_logvar)
}

/// Reparameterization: `z = mu + exp(logvar / 2) * eps`, `eps ~ N(0, 1)`.
/// Returns both `z` and the noise so the caller can backpropagate.
pub fn reparameterize<R: Rng + ?Sized>(
    mu: &[f64],
    logvar: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if mu.len() != logvar.len() {
        return Err(Error::ShapeMismatch {
            context: "reparameterize",
            expected: mu.len(),
            got: logvar.len(),
        });
    }
    let eps: Vec<f64> = (0..mu.len()).map(|_| rng.sample(StandardNormal)).collect();
    let z = mu
        .iter()
        .zip(logvar)
        .zip(&eps)
        .map(|((&m, &lv), &e)| m + (lv / 2.0).exp() * e)
        .collect();
    Ok((z, eps))
}

/// `log` of a probability clamped to `[LOG_EPS, 1 - LOG_EPS]`, keeping the
/// adversarial loss terms finite at saturated scores.
pub fn log_clamped(x: f64) -> f64 {
    x.clamp(LOG_EPS, 1.0 - LOG_EPS).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn relu_spec() -> MlpSpec {
        MlpSpec::new(
            2,
            &[(2, Activation::Linear)],
        )
    }

    #[test]
    fn forward_zero_weights_returns_bias() {
        let mut mlp = Mlp::zeros(relu_spec()).unwrap();
        {
            let (_, biases) = mlp.weights_mut();
            biases[0] = vec![0.25, -1.5];
        }
        let y = mlp.forward(&[3.0, -4.0]).unwrap();
        assert_eq!(y, vec![0.25, -1.5]);
    }

    #[test]
    fn forward_identity_weight_returns_input() {
        let mut mlp = Mlp::zeros(relu_spec()).unwrap();
        {
            let (weights, _) = mlp.weights_mut();
            weights[0] = vec![1.0, 0.0, 0.0, 1.0];
        }
        let y = mlp.forward(&[0.7, -0.2]).unwrap();
        assert_eq!(y, vec![0.7, -0.2]);
    }

    #[test]
    fn forward_matches_hand_computed_value() {
        // 2 -> 2 (tanh) -> 1 (linear), hand-chosen weights.
        let spec = MlpSpec::new(2, &[(2, Activation::Tanh), (1, Activation::Linear)]);
        let mut mlp = Mlp::zeros(spec).unwrap();
        {
            let (weights, biases) = mlp.weights_mut();
            weights[0] = vec![0.5, -1.0, 0.25, 0.75]; // rows: [0.5, -1.0], [0.25, 0.75]
            biases[0] = vec![0.1, -0.2];
            weights[1] = vec![2.0, -3.0];
            biases[1] = vec![0.05];
        }
        let x = [0.4, -0.6];
        let h1 = (0.5f64 * 0.4 + (-1.0) * (-0.6) + 0.1).tanh();
        let h2 = (0.25f64 * 0.4 + 0.75 * (-0.6) - 0.2).tanh();
        let expected = 2.0 * h1 - 3.0 * h2 + 0.05;
        let y = mlp.forward(&x).unwrap();
        assert!((y[0] - expected).abs() < 1e-12, "{} vs {expected}", y[0]);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let mlp = Mlp::zeros(relu_spec()).unwrap();
        assert!(matches!(
            mlp.forward(&[1.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = MlpSpec::new(3, &[(4, Activation::Relu), (2, Activation::Sigmoid)]);
        let mlp = Mlp::init(spec, &mut rng).unwrap();
        let (_, grads) = mlp_gradients(&mlp, &[0.1, 0.2, 0.3], |y| (7.0, vec![0.0; y.len()]))
            .unwrap();
        for w in &grads.weights {
            assert!(w.iter().all(|&v| v == 0.0));
        }
        for b in &grads.biases {
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_unit_gradient_equals_input() {
        // loss = w . x for a single linear unit => dL/dw = x.
        let spec = MlpSpec::new(3, &[(1, Activation::Linear)]);
        let mut mlp = Mlp::zeros(spec).unwrap();
        {
            let (weights, _) = mlp.weights_mut();
            weights[0] = vec![0.3, -0.6, 0.9];
        }
        let x = [1.5, -2.5, 0.5];
        let (_, grads) = mlp_gradients(&mlp, &x, |y| (y[0], vec![1.0])).unwrap();
        assert_eq!(grads.weights[0], x.to_vec());
        assert_eq!(grads.biases[0], vec![1.0]);
    }

    /// Central finite differences around the current parameters.
    fn fd_gradient(mlp: &mut Mlp, x: &[f64], target: &[f64], h: f64) -> MlpGrads {
        let loss_of = |m: &Mlp| -> f64 {
            let y = m.forward(x).unwrap();
            y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        let mut fd = MlpGrads::zeros_like(mlp);
        for li in 0..mlp.weights.len() {
            for i in 0..mlp.weights[li].len() {
                let orig = mlp.weights[li][i];
                mlp.weights[li][i] = orig + h;
                let up = loss_of(mlp);
                mlp.weights[li][i] = orig - h;
                let down = loss_of(mlp);
                mlp.weights[li][i] = orig;
                fd.weights[li][i] = (up - down) / (2.0 * h);
            }
            for i in 0..mlp.biases[li].len() {
                let orig = mlp.biases[li][i];
                mlp.biases[li][i] = orig + h;
                let up = loss_of(mlp);
                mlp.biases[li][i] = orig - h;
                let down = loss_of(mlp);
                mlp.biases[li][i] = orig;
                fd.biases[li][i] = (up - down) / (2.0 * h);
            }
        }
        fd
    }

    fn assert_rel_close(analytic: f64, numeric: f64, rel_tol: f64) {
        let scale = analytic.abs().max(numeric.abs()).max(1e-6);
        assert!(
            (analytic - numeric).abs() / scale < rel_tol,
            "analytic {analytic} vs numeric {numeric}"
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let activations = [
            Activation::Relu,
            Activation::Tanh,
            Activation::Sigmoid,
            Activation::Linear,
        ];
        for trial in 0..20 {
            let depth = 1 + trial % 4;
            let input = 1 + (trial * 3) % 16;
            let mut layers = Vec::new();
            for d in 0..depth {
                layers.push((
                    1 + (trial + d * 5) % 16,
                    activations[(trial + d) % activations.len()],
                ));
            }
            let spec = MlpSpec::new(input, &layers);
            let mut mlp = Mlp::init(spec.clone(), &mut rng).unwrap();
            let x: Vec<f64> = (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let target: Vec<f64> = (0..spec.output_width())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();

            let (_, analytic) = mlp_gradients(&mlp, &x, |y| {
                let loss: f64 = y.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum();
                let d: Vec<f64> = y.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
                (loss, d)
            })
            .unwrap();
            let fd = fd_gradient(&mut mlp, &x, &target, 1e-5);

            for li in 0..analytic.weights.len() {
                for (a, n) in analytic.weights[li].iter().zip(&fd.weights[li]) {
                    assert_rel_close(*a, *n, 1e-4);
                }
                for (a, n) in analytic.biases[li].iter().zip(&fd.biases[li]) {
                    assert_rel_close(*a, *n, 1e-4);
                }
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp_orig = Mlp::init(relu_spec(), &mut rng).unwrap();
        let mut mlp = mlp_orig.clone();
        let grads = MlpGrads::zeros_like(&mlp);
        let mut adam = Adam::new(&mlp, 0.1);
        adam.step(&mut mlp, &grads);
        assert_eq!(mlp, mlp_orig);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        // With constant gradient g and zero moments, bias correction cancels
        // and the first step is -lr * sign(g) up to eps.
        let spec = MlpSpec::new(1, &[(1, Activation::Linear)]);
        let mut mlp = Mlp::zeros(spec).unwrap();
        let mut grads = MlpGrads::zeros_like(&mlp);
        grads.weights[0][0] = 3.7;
        grads.biases[0][0] = -0.2;
        let mut adam = Adam::new(&mlp, 0.05);
        adam.step(&mut mlp, &grads);
        assert!((mlp.weights[0][0] + 0.05).abs() < 1e-6);
        assert!((mlp.biases[0][0] - 0.05).abs() < 1e-6);
    }

    #[test]
    fn adam_three_steps_match_hand_trace() {
        // f(w) = w^2 from w0 = 1, lr = 0.1; trace the update equations
        // independently of the implementation.
        let spec = MlpSpec::new(1, &[(1, Activation::Linear)]);
        let mut mlp = Mlp::zeros(spec.clone()).unwrap();
        mlp.weights_mut().0[0][0] = 1.0;
        let mut adam = Adam::new(&mlp, 0.1);

        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        for t in 1..=3 {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            w -= 0.1 * m_hat / (v_hat.sqrt() + eps);

            let current = mlp.weights[0][0];
            let mut grads = MlpGrads::zeros_like(&mlp);
            grads.weights[0][0] = 2.0 * current;
            adam.step(&mut mlp, &grads);
            assert!(
                (mlp.weights[0][0] - w).abs() < 1e-9,
                "step {t}: {} vs {w}",
                mlp.weights[0][0]
            );
        }
    }

    #[test]
    fn kl_gauss_closed_form() {
        assert_eq!(kl_gauss(&[0.0], &[0.0]).unwrap(), 0.0);
        assert!((kl_gauss(&[1.0], &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        // kl(mu, 0) = 0.5 * ||mu||^2
        let mu = [0.3, -1.2, 2.0];
        let expected = 0.5 * mu.iter().map(|m| m * m).sum::<f64>();
        assert!((kl_gauss(&mu, &[0.0; 3]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn kl_gauss_non_negative_and_zero_only_at_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let n = rng.gen_range(1..6);
            let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let lv: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let kl = kl_gauss(&mu, &lv).unwrap();
            assert!(kl >= 0.0);
            if mu.iter().any(|&m| m.abs() > 1e-3) || lv.iter().any(|&l| l.abs() > 1e-3) {
                assert!(kl > 0.0);
            }
        }
    }

    #[test]
    fn kl_gauss_matches_its_gradient() {
        let mu = [0.4, -0.7];
        let lv = [0.2, -0.5];
        let (d_mu, d_lv) = kl_gauss_grad(&mu, &lv);
        let h = 1e-6;
        for i in 0..2 {
            let mut up = mu;
            up[i] += h;
            let mut down = mu;
            down[i] -= h;
            let fd = (kl_gauss(&up, &lv).unwrap() - kl_gauss(&down, &lv).unwrap()) / (2.0 * h);
            assert!((fd - d_mu[i]).abs() < 1e-6);

            let mut up = lv;
            up[i] += h;
            let mut down = lv;
            down[i] -= h;
            let fd = (kl_gauss(&mu, &up).unwrap() - kl_gauss(&mu, &down).unwrap()) / (2.0 * h);
            assert!((fd - d_lv[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn reparameterize_mean_when_noise_is_zero() {
        // Zero variance drives the noise term to zero regardless of eps.
        let mu = [0.5, -1.0];
        let logvar = [-700.0, -700.0]; // sigma ~ 0
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (z, _) = reparameterize(&mu, &logvar, &mut rng).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-12 && (z[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn reparameterize_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        for _ in 0..3 {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..n {
                let (z, _) = reparameterize(&[0.0], &[0.0], &mut rng).unwrap();
                sum += z[0];
                sum_sq += z[0] * z[0];
            }
            let mean = sum / n as f64;
            let var = sum_sq / n as f64 - mean * mean;
            assert!((0.94..=1.06).contains(&var), "sample variance {var}");
        }
    }

    #[test]
    fn reparameterize_fixed_seed_reproduces() {
        let mu = [0.1, 0.2, 0.3];
        let lv = [0.0, -1.0, 1.0];
        let mut a = ChaCha8Rng::seed_from_u64(99);
        let mut b = ChaCha8Rng::seed_from_u64(99);
        assert_eq!(
            reparameterize(&mu, &lv, &mut a).unwrap(),
            reparameterize(&mu, &lv, &mut b).unwrap()
        );
    }

    #[test]
    fn log_clamped_is_finite_at_the_edges() {
        assert!((log_clamped(0.5) - 0.5f64.ln()).abs() < 1e-15);
        assert!((log_clamped(0.0) - 1e-7f64.ln()).abs() < 1e-15);
        assert!((log_clamped(1.0) - (1.0f64 - 1e-7).ln()).abs() < 1e-15);
        assert!(log_clamped(0.0).is_finite());
        assert!(log_clamped(1.0).is_finite());
    }
}

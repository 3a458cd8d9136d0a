//! Fully connected network with a logistic output, trained by minibatch Adam
//! on binary cross-entropy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_two_classes, labels_of, FeatureVector, NormalizationSpec};
use crate::dta::{fit_threshold_with, SweepDomain};
use crate::error::{Error, Result};
use crate::field::ObjectClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    #[default]
    Tanh,
    Logistic,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Logistic => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation and activation.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Logistic => a * (1.0 - a),
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit, stable for large |z|.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Stop after this many epochs without a loss improvement.
    pub patience: Option<usize>,
    /// Fit the output decision threshold by F1 on training outputs instead of 0.5.
    pub fit_output_threshold: bool,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![100, 100],
            activation: Activation::Tanh,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 16,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            patience: None,
            fit_output_threshold: false,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.hidden.iter().any(|&h| h == 0) {
            problems.push("hidden layer sizes must be positive".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".to_string());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            problems.push("Adam betas must lie in [0, 1)".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }
}

/// One affine layer; `weights` is row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn glorot(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Self {
            in_dim,
            out_dim,
            weights: (0..in_dim * out_dim).map(|_| rng.random_range(-limit..limit)).collect(),
            biases: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.in_dim).zip(&self.biases).map(|(row, b)| {
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b
        }));
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub classes: Vec<ObjectClass>,
    pub layers: Vec<Dense>,
    pub activation: Activation,
    pub normalization: Option<NormalizationSpec>,
    pub decision_threshold: f64,
    pub config: MlpConfig,
    /// Training loss after the last epoch; absent before training.
    pub final_loss: Option<f64>,
    pub loss_history: Vec<f64>,
}

struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Untrained network with seeded Glorot-uniform weights and zero biases.
    pub fn init(classes: Vec<ObjectClass>, config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        if classes.is_empty() {
            return Err(Error::invalid("MLP needs at least one input"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut sizes = vec![classes.len()];
        sizes.extend(&config.hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], &mut rng))
            .collect();
        Ok(Self {
            classes,
            layers,
            activation: config.activation,
            normalization: None,
            decision_threshold: 0.5,
            config: config.clone(),
            final_loss: None,
            loss_history: Vec::new(),
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].in_dim];
        s.extend(self.layers.iter().map(|l| l.out_dim));
        s
    }

    /// Network input for a candidate, normalized when configured.
    pub fn prepare(&self, v: &FeatureVector) -> Result<Vec<f64>> {
        v.check_classes(&self.classes)?;
        match &self.normalization {
            Some(spec) => spec.apply(&v.classes, &v.values),
            None => Ok(v.values.clone()),
        }
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        post.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(&post[i], &mut z);
            let last = i + 1 == self.layers.len();
            let a = if last {
                z.iter().map(|&v| sigmoid(v)).collect()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            post.push(a);
        }
        Trace { pre, post }
    }

    /// Output logit for an already prepared input.
    pub fn logit(&self, x: &[f64]) -> f64 {
        self.trace(x).pre.last().unwrap()[0]
    }

    /// Probability for an already prepared input.
    pub fn forward_raw(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn predict(&self, v: &FeatureVector) -> Result<f64> {
        Ok(self.forward_raw(&self.prepare(v)?))
    }

    pub fn decide(&self, v: &FeatureVector) -> Result<bool> {
        Ok(self.predict(v)? >= self.decision_threshold)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Flat parameters: per layer, weights then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            p.extend(&l.weights);
            p.extend(&l.biases);
        }
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                got: p.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Mean cross-entropy over prepared inputs.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        let total: f64 = xs.iter().zip(ys).map(|(x, &y)| bce_from_logit(self.logit(x), y)).sum();
        total / xs.len() as f64
    }

    /// Mean cross-entropy and its gradient in [`Self::parameters`] order.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[f64]) -> (f64, Vec<f64>) {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
            .collect();
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let t = self.trace(x);
            let z_out = t.pre.last().unwrap()[0];
            loss += bce_from_logit(z_out, y);
            let mut delta = vec![sigmoid(z_out) - y];
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &t.post[li];
                let (gw, gb) = &mut grads[li];
                for (o, &d) in delta.iter().enumerate() {
                    gb[o] += d;
                    let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (g, &a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                if li == 0 {
                    break;
                }
                let mut next = vec![0.0; layer.in_dim];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (n, &w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                let (z, a) = (&t.pre[li - 1], &t.post[li]);
                for (j, n) in next.iter_mut().enumerate() {
                    *n *= self.activation.derivative(z[j], a[j]);
                }
                delta = next;
            }
        }
        let scale = 1.0 / xs.len() as f64;
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads {
            flat.extend(gw.into_iter().map(|g| g * scale));
            flat.extend(gb.into_iter().map(|g| g * scale));
        }
        (loss * scale, flat)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], c: &MlpConfig) {
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
        }
    }
}

/// Train on labeled vectors; inputs are rescaled first when `normalization` is given.
pub fn train_mlp(
    train: &[FeatureVector],
    config: &MlpConfig,
    normalization: Option<NormalizationSpec>,
) -> Result<MlpModel> {
    let first = train
        .first()
        .ok_or_else(|| Error::invalid("empty training set"))?;
    let labels = labels_of(train)?;
    check_two_classes(&labels)?;
    let mut model = MlpModel::init(first.classes.clone(), config)?;
    model.normalization = normalization;
    let xs = train.iter().map(|v| model.prepare(v)).collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut params = model.parameters();
    let mut adam = Adam {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut history = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let bx: Vec<Vec<f64>> = batch.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<f64> = batch.iter().map(|&i| ys[i]).collect();
            let (_, grad) = model.loss_and_grad(&bx, &by);
            adam.step(&mut params, &grad, config);
            model.set_parameters(&params)?;
        }
        let loss = model.loss(&xs, &ys);
        if !loss.is_finite() {
            return Err(Error::DegenerateData("MLP training diverged".into()));
        }
        history.push(loss);
        if loss < best - 1e-12 {
            best = loss;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if config.patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }
    model.final_loss = Some(history.last().copied().unwrap_or_else(|| model.loss(&xs, &ys)));
    model.loss_history = history;
    if config.fit_output_threshold {
        let outputs: Vec<f64> = xs.iter().map(|x| model.forward_raw(x)).collect();
        model.decision_threshold = fit_threshold_with(&outputs, &labels, SweepDomain::Observed)?.threshold;
    }
    Ok(model)
}

//! First-order Takagi-Sugeno-Kang fuzzy inference with frozen premises.
//!
//! Each input has one sigmoidal membership centred on its class threshold
//! `t` with steepness `4 / t`, read as "the component exceeds its threshold".
//! A rule fires with the product of its antecedent memberships (or their
//! complements) and proposes a linear consequent. Only the consequents are
//! trained, by full-batch gradient descent on mean squared error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::sigmoid;
use super::{check_two_classes, labels_of, scale_to_unit, FeatureVector};
use crate::dta::{fit_threshold_with, DtaThreshold, SweepDomain};
use crate::error::{Error, Result};
use crate::field::ObjectClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// The input exceeds its threshold.
    High,
    /// The input stays below its threshold.
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Antecedent {
    pub input: usize,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub antecedents: Vec<Antecedent>,
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

impl Rule {
    fn consequent(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnfisConfig {
    pub epochs: usize,
    pub seed: u64,
    /// Consequents start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Feed consequents the threshold-rescaled inputs instead of raw values.
    pub normalize_consequents: bool,
}

impl Default for AnfisConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            seed: 0,
            init_scale: 0.1,
            normalize_consequents: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnfisModel {
    pub classes: Vec<ObjectClass>,
    pub centers: Vec<f64>,
    pub steepness: Vec<f64>,
    pub rules: Vec<Rule>,
    pub normalize_consequents: bool,
    pub output_threshold: f64,
    pub final_loss: Option<f64>,
    pub loss_history: Vec<f64>,
}

impl AnfisModel {
    /// Model with explicit rules; memberships come from `centers`.
    pub fn new(
        classes: Vec<ObjectClass>,
        centers: Vec<f64>,
        rules: Vec<Rule>,
        normalize_consequents: bool,
    ) -> Result<Self> {
        let d = classes.len();
        if centers.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: centers.len(),
            });
        }
        if let Some((c, t)) = classes.iter().zip(&centers).find(|(_, t)| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidSpec(format!(
                "membership centre for {c} must be positive, got {t}"
            )));
        }
        if rules.is_empty() {
            return Err(Error::InvalidSpec("ANFIS needs at least one rule".into()));
        }
        for r in &rules {
            if r.coefficients.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.coefficients.len(),
                });
            }
            if r.antecedents.iter().any(|a| a.input >= d) {
                return Err(Error::InvalidSpec("rule refers to a missing input".into()));
            }
        }
        Ok(Self {
            steepness: centers.iter().map(|t| 4.0 / t).collect(),
            classes,
            centers,
            rules,
            normalize_consequents,
            output_threshold: 0.5,
            final_loss: None,
            loss_history: Vec::new(),
        })
    }

    /// One "component i is strong" rule per input, plus an "all weak" rule
    /// while that keeps the rule count at five or fewer.
    pub fn expert(classes: Vec<ObjectClass>, centers: Vec<f64>) -> Result<Self> {
        let d = classes.len();
        let rule = |antecedents| Rule {
            antecedents,
            coefficients: vec![0.0; d],
            bias: 0.0,
        };
        let mut rules: Vec<Rule> = (0..d)
            .map(|i| {
                rule(vec![Antecedent {
                    input: i,
                    polarity: Polarity::High,
                }])
            })
            .collect();
        if d < 5 {
            rules.push(rule(
                (0..d)
                    .map(|i| Antecedent {
                        input: i,
                        polarity: Polarity::Low,
                    })
                    .collect(),
            ));
        }
        Self::new(classes, centers, rules, true)
    }

    pub fn membership(&self, input: usize, v: f64) -> f64 {
        sigmoid(self.steepness[input] * (v - self.centers[input]))
    }

    /// Firing strength of every rule.
    pub fn firing_strengths(&self, values: &[f64]) -> Vec<f64> {
        let mu: Vec<f64> = values.iter().enumerate().map(|(i, &v)| self.membership(i, v)).collect();
        self.rules
            .iter()
            .map(|r| {
                r.antecedents
                    .iter()
                    .map(|a| match a.polarity {
                        Polarity::High => mu[a.input],
                        Polarity::Low => 1.0 - mu[a.input],
                    })
                    .product()
            })
            .collect()
    }

    /// Firing strengths divided by their sum; all zero when nothing fires.
    pub fn normalized_strengths(&self, values: &[f64]) -> Vec<f64> {
        let w = self.firing_strengths(values);
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.into_iter().map(|x| x / total).collect()
        } else {
            vec![0.0; w.len()]
        }
    }

    fn consequent_input(&self, values: &[f64]) -> Vec<f64> {
        if self.normalize_consequents {
            values.iter().zip(&self.centers).map(|(&v, &t)| scale_to_unit(v, t)).collect()
        } else {
            values.to_vec()
        }
    }

    fn check_dim(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.classes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.classes.len(),
                got: values.len(),
            });
        }
        Ok(())
    }

    /// Output for raw feature values.
    pub fn output(&self, values: &[f64]) -> Result<f64> {
        self.check_dim(values)?;
        let wn = self.normalized_strengths(values);
        let x = self.consequent_input(values);
        Ok(self.rules.iter().zip(&wn).map(|(r, w)| w * r.consequent(&x)).sum())
    }

    pub fn forward(&self, v: &FeatureVector) -> Result<f64> {
        v.check_classes(&self.classes)?;
        self.output(&v.values)
    }

    pub fn decide(&self, v: &FeatureVector) -> Result<bool> {
        Ok(self.forward(v)? >= self.output_threshold)
    }

    /// Consequents flattened per rule: coefficients then bias.
    pub fn consequents(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.rules.len() * (self.classes.len() + 1));
        for r in &self.rules {
            p.extend(&r.coefficients);
            p.push(r.bias);
        }
        p
    }

    pub fn set_consequents(&mut self, p: &[f64]) -> Result<()> {
        let width = self.classes.len() + 1;
        if p.len() != self.rules.len() * width {
            return Err(Error::DimensionMismatch {
                expected: self.rules.len() * width,
                got: p.len(),
            });
        }
        for (r, chunk) in self.rules.iter_mut().zip(p.chunks_exact(width)) {
            r.coefficients.copy_from_slice(&chunk[..width - 1]);
            r.bias = chunk[width - 1];
        }
        Ok(())
    }

    /// Regressor row: the output is linear in the consequents with these weights.
    fn design_row(&self, values: &[f64]) -> Vec<f64> {
        let wn = self.normalized_strengths(values);
        let x = self.consequent_input(values);
        let mut row = Vec::with_capacity(self.rules.len() * (x.len() + 1));
        for w in wn {
            row.extend(x.iter().map(|v| w * v));
            row.push(w);
        }
        row
    }

    /// Mean squared error against `targets`.
    pub fn loss(&self, inputs: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (v, &y) in inputs.iter().zip(targets) {
            let e = self.output(v)? - y;
            total += e * e;
        }
        Ok(total / inputs.len() as f64)
    }

    /// Mean squared error and its gradient with respect to the consequents.
    pub fn consequent_gradient(&self, inputs: &[Vec<f64>], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.consequents().len()];
        let mut loss = 0.0;
        let scale = 1.0 / inputs.len() as f64;
        for (v, &y) in inputs.iter().zip(targets) {
            self.check_dim(v)?;
            let e = self.output(v)? - y;
            loss += e * e;
            for (g, r) in grad.iter_mut().zip(self.design_row(v)) {
                *g += 2.0 * e * r * scale;
            }
        }
        Ok((loss * scale, grad))
    }

    /// Fit consequents to real-valued targets by gradient descent with step
    /// `1 / L`, where `L` bounds the curvature, so the loss never increases.
    pub fn fit_consequents(&mut self, inputs: &[Vec<f64>], targets: &[f64], epochs: usize) -> Result<()> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        if inputs.is_empty() {
            return Err(Error::invalid("empty training set"));
        }
        for v in inputs {
            self.check_dim(v)?;
        }
        let rows: Vec<Vec<f64>> = inputs.iter().map(|v| self.design_row(v)).collect();
        let n = inputs.len() as f64;
        let frob: f64 = rows.iter().flatten().map(|r| r * r).sum();
        let lipschitz = 2.0 * frob / n;
        let mut theta = self.consequents();
        let mut history = Vec::with_capacity(epochs + 1);
        let residuals = |theta: &[f64]| -> Vec<f64> {
            rows.iter()
                .zip(targets)
                .map(|(row, y)| row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() - y)
                .collect()
        };
        let mut res = residuals(&theta);
        history.push(res.iter().map(|e| e * e).sum::<f64>() / n);
        if lipschitz > 0.0 {
            for _ in 0..epochs {
                let mut grad = vec![0.0; theta.len()];
                for (row, e) in rows.iter().zip(&res) {
                    for (g, r) in grad.iter_mut().zip(row) {
                        *g += 2.0 * e * r / n;
                    }
                }
                for (t, g) in theta.iter_mut().zip(&grad) {
                    *t -= g / lipschitz;
                }
                res = residuals(&theta);
                history.push(res.iter().map(|e| e * e).sum::<f64>() / n);
            }
        }
        self.set_consequents(&theta)?;
        self.final_loss = history.last().copied();
        self.loss_history = history;
        Ok(())
    }
}

/// Train the expert rule base on labeled vectors; memberships are centred on
/// the per-class thresholds, the output threshold is fitted by F1.
pub fn train_anfis(train: &[FeatureVector], thresholds: &[DtaThreshold], config: &AnfisConfig) -> Result<AnfisModel> {
    let first = train
        .first()
        .ok_or_else(|| Error::invalid("empty training set"))?;
    let labels = labels_of(train)?;
    check_two_classes(&labels)?;
    let classes = first.classes.clone();
    let threshold_classes: Vec<ObjectClass> = thresholds.iter().map(|t| t.class).collect();
    if threshold_classes != classes {
        return Err(Error::InvalidSpec(format!(
            "thresholds cover {threshold_classes:?}, training vectors carry {classes:?}"
        )));
    }
    let mut model = AnfisModel::expert(classes.clone(), thresholds.iter().map(|t| t.threshold).collect())?;
    model.normalize_consequents = config.normalize_consequents;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init: Vec<f64> = (0..model.consequents().len())
        .map(|_| {
            if config.init_scale > 0.0 {
                rng.random_range(-config.init_scale..config.init_scale)
            } else {
                0.0
            }
        })
        .collect();
    model.set_consequents(&init)?;
    let mut inputs = Vec::with_capacity(train.len());
    for v in train {
        v.check_classes(&classes)?;
        inputs.push(v.values.clone());
    }
    let targets: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    model.fit_consequents(&inputs, &targets, config.epochs)?;
    let outputs = inputs.iter().map(|v| model.output(v)).collect::<Result<Vec<_>>>()?;
    model.output_threshold = fit_threshold_with(&outputs, &labels, SweepDomain::Observed)?.threshold;
    Ok(model)
}

//! Decision-level fusion of per-component features.
//!
//! Three fusers turn one feature type across a set of component classes into
//! a keep/reject decision per candidate:
//!
//! * [`OrGateModel`]: per-class F1-optimal thresholds combined by logical OR,
//! * [`MlpModel`]: a feed-forward network trained with binary cross-entropy,
//! * [`AnfisModel`]: a first-order Takagi-Sugeno-Kang fuzzy system whose
//!   rule antecedents encode the OR-gate thresholds and whose linear
//!   consequents are learned.

mod anfis;
mod mlp;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use anfis::{train_anfis, Antecedent, AnfisConfig, AnfisModel, Polarity, Rule};
pub use mlp::{train_mlp, Activation, Dense, MlpConfig, MlpModel};

use crate::dta::DtaThreshold;
use crate::error::{Error, Result};
use crate::features::{CandidateFeatures, FeatureType};
use crate::field::ObjectClass;

/// Component classes fused together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Combo {
    /// Empty launch pads plus missiles, TELs and TEL groups.
    #[serde(rename = "empty+3")]
    EmptyPlus3,
    /// Combined launch pads plus missiles, TELs and TEL groups.
    #[serde(rename = "combo+3")]
    ComboPlus3,
    /// Both launch-pad detectors plus the other three.
    #[serde(rename = "all5")]
    All5,
}

impl Combo {
    pub fn classes(&self) -> Vec<ObjectClass> {
        use ObjectClass::*;
        match self {
            Combo::EmptyPlus3 => vec![EmptyLp, Missile, Tel, TelGroup],
            Combo::ComboPlus3 => vec![ComboLp, Missile, Tel, TelGroup],
            Combo::All5 => vec![EmptyLp, ComboLp, Missile, Tel, TelGroup],
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Combo::EmptyPlus3 => "empty+3",
            Combo::ComboPlus3 => "combo+3",
            Combo::All5 => "all5",
        }
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Combo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empty+3" => Ok(Combo::EmptyPlus3),
            "combo+3" => Ok(Combo::ComboPlus3),
            "all5" => Ok(Combo::All5),
            other => Err(Error::invalid(format!("unknown combo '{other}'"))),
        }
    }
}

/// One feature type across an ordered list of classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub candidate_id: u64,
    pub classes: Vec<ObjectClass>,
    pub values: Vec<f64>,
    pub label: Option<bool>,
}

impl FeatureVector {
    pub fn from_features(
        features: &CandidateFeatures,
        classes: &[ObjectClass],
        feature_type: FeatureType,
    ) -> Result<Self> {
        let values = classes
            .iter()
            .map(|&c| features.value(c, feature_type))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            candidate_id: features.candidate_id,
            classes: classes.to_vec(),
            values,
            label: features.label,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub(crate) fn check_classes(&self, expected: &[ObjectClass]) -> Result<()> {
        if self.values.len() != expected.len() {
            return Err(Error::DimensionMismatch {
                expected: expected.len(),
                got: self.values.len(),
            });
        }
        if self.classes != expected {
            return Err(Error::invalid(format!(
                "candidate {} has classes {:?}, model expects {:?}",
                self.candidate_id, self.classes, expected
            )));
        }
        Ok(())
    }
}

/// Per-class thresholds used to rescale inputs into [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub classes: Vec<ObjectClass>,
    pub thresholds: Vec<f64>,
}

impl NormalizationSpec {
    pub fn new(classes: Vec<ObjectClass>, thresholds: Vec<f64>) -> Result<Self> {
        if classes.len() != thresholds.len() {
            return Err(Error::DimensionMismatch {
                expected: classes.len(),
                got: thresholds.len(),
            });
        }
        if let Some((c, t)) = classes
            .iter()
            .zip(&thresholds)
            .find(|(_, t)| !(t.is_finite() && **t > 0.0))
        {
            return Err(Error::InvalidSpec(format!(
                "normalization threshold for {c} must be positive, got {t}"
            )));
        }
        Ok(Self {
            classes,
            thresholds,
        })
    }

    pub fn from_thresholds(thresholds: &[DtaThreshold]) -> Result<Self> {
        Self::new(
            thresholds.iter().map(|t| t.class).collect(),
            thresholds.iter().map(|t| t.threshold).collect(),
        )
    }

    fn threshold_for(&self, class: ObjectClass) -> Result<f64> {
        self.classes
            .iter()
            .position(|&c| c == class)
            .map(|i| self.thresholds[i])
            .ok_or_else(|| Error::InvalidSpec(format!("no normalization threshold for {class}")))
    }

    pub(crate) fn apply(&self, classes: &[ObjectClass], values: &[f64]) -> Result<Vec<f64>> {
        classes
            .iter()
            .zip(values)
            .map(|(&c, &v)| Ok(scale_to_unit(v, self.threshold_for(c)?)))
            .collect()
    }
}

/// `clamp((v - t) / t, -1, 1)`.
#[inline]
pub fn scale_to_unit(v: f64, t: f64) -> f64 {
    ((v - t) / t).clamp(-1.0, 1.0)
}

/// Rescale every value by its class threshold.
pub fn normalize_inputs(v: &FeatureVector, spec: &NormalizationSpec) -> Result<FeatureVector> {
    if let Some((c, _)) = spec.classes.iter().zip(&spec.thresholds).find(|(_, &t)| t == 0.0) {
        return Err(Error::InvalidSpec(format!("zero threshold for {c}")));
    }
    Ok(FeatureVector {
        values: spec.apply(&v.classes, &v.values)?,
        ..v.clone()
    })
}

/// True iff any input is true.
pub fn or_gate(decisions: &[bool]) -> Result<bool> {
    if decisions.is_empty() {
        return Err(Error::invalid("OR gate needs at least one input"));
    }
    Ok(decisions.iter().any(|&d| d))
}

/// Per-class threshold decisions combined by OR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrGateModel {
    pub thresholds: Vec<DtaThreshold>,
}

impl OrGateModel {
    /// Fit one threshold per class on labeled training vectors.
    pub fn fit(train: &[FeatureVector], feature_type: FeatureType) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::invalid("empty training set"))?;
        let classes = first.classes.clone();
        let labels = labels_of(train)?;
        let mut thresholds = Vec::with_capacity(classes.len());
        for (i, &class) in classes.iter().enumerate() {
            let mut values = Vec::with_capacity(train.len());
            for fv in train {
                fv.check_classes(&classes)?;
                values.push(fv.values[i]);
            }
            thresholds.push(DtaThreshold::fit(class, feature_type, &values, &labels)?);
        }
        Ok(Self { thresholds })
    }

    pub fn classes(&self) -> Vec<ObjectClass> {
        self.thresholds.iter().map(|t| t.class).collect()
    }

    /// Decision and the fraction of components over threshold.
    pub fn decide(&self, v: &FeatureVector) -> Result<(bool, f64)> {
        v.check_classes(&self.classes())?;
        let votes: Vec<bool> = self
            .thresholds
            .iter()
            .zip(&v.values)
            .map(|(t, &x)| t.decide(x))
            .collect();
        let positive = votes.iter().filter(|&&b| b).count();
        Ok((or_gate(&votes)?, positive as f64 / votes.len() as f64))
    }
}

pub(crate) fn labels_of(train: &[FeatureVector]) -> Result<Vec<bool>> {
    train
        .iter()
        .map(|fv| {
            fv.label.ok_or_else(|| {
                Error::invalid(format!("training candidate {} is unlabeled", fv.candidate_id))
            })
        })
        .collect()
}

pub(crate) fn check_two_classes(labels: &[bool]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateData(
            "training set must contain both positive and negative labels".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FusionModel {
    Or(OrGateModel),
    Mlp(MlpModel),
    Anfis(AnfisModel),
}

impl FusionModel {
    pub fn name(&self) -> &'static str {
        match self {
            FusionModel::Or(_) => "or",
            FusionModel::Mlp(_) => "mlp",
            FusionModel::Anfis(_) => "anfis",
        }
    }

    pub fn classes(&self) -> Vec<ObjectClass> {
        match self {
            FusionModel::Or(m) => m.classes(),
            FusionModel::Mlp(m) => m.classes.clone(),
            FusionModel::Anfis(m) => m.classes.clone(),
        }
    }

    /// Keep/reject decision and the model's continuous score.
    pub fn decide(&self, v: &FeatureVector) -> Result<(bool, f64)> {
        match self {
            FusionModel::Or(m) => m.decide(v),
            FusionModel::Mlp(m) => {
                let p = m.predict(v)?;
                Ok((p >= m.decision_threshold, p))
            }
            FusionModel::Anfis(m) => {
                let y = m.forward(v)?;
                Ok((y >= m.output_threshold, y))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub candidate_id: u64,
    pub decision: bool,
    pub score: f64,
}

/// Fused decision for every candidate, in input order.
pub fn fuse_candidates(candidates: &[FeatureVector], model: &FusionModel) -> Result<Vec<Decision>> {
    let classes = model.classes();
    candidates
        .par_iter()
        .map(|v| {
            v.check_classes(&classes)?;
            let (decision, score) = model.decide(v)?;
            Ok(Decision {
                candidate_id: v.candidate_id,
                decision,
                score,
            })
        })
        .collect()
}

/// Ids of candidates with a positive decision.
pub fn kept(decisions: &[Decision]) -> Vec<u64> {
    decisions
        .iter()
        .filter(|d| d.decision)
        .map(|d| d.candidate_id)
        .collect()
}

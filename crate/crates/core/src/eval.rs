//! Confusion metrics, error densities and experiment reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version stamped into every JSON artifact.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: Option<u64>,
    pub tpr: f64,
    pub ppv: f64,
    pub f1: f64,
    /// Errors per square kilometre.
    pub error_density: Option<f64>,
    pub relative_error_reduction: Option<f64>,
    pub avg_tp_rank: Option<f64>,
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: Option<u64>) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Self {
            tp,
            fp,
            fn_,
            tn,
            tpr: ratio(tp, tp + fn_),
            ppv: ratio(tp, tp + fp),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            error_density: None,
            relative_error_reduction: None,
            avg_tp_rank: None,
        }
    }

    pub fn errors(&self) -> u64 {
        self.fp + self.fn_
    }

    /// Fill in the error density for an area in square kilometres.
    pub fn with_area(mut self, area_km2: f64) -> Result<Self> {
        self.error_density = Some(error_density(&self, area_km2)?);
        Ok(self)
    }

    pub fn with_baseline(mut self, baseline: &Metrics) -> Result<Self> {
        self.relative_error_reduction = Some(relative_error_reduction(&self, baseline)?);
        Ok(self)
    }
}

/// Counts of `decisions` against `truth`; both must cover the same ids.
pub fn confusion(decisions: &BTreeMap<u64, bool>, truth: &BTreeMap<u64, bool>) -> Result<Metrics> {
    if decisions.len() != truth.len() || decisions.keys().zip(truth.keys()).any(|(a, b)| a != b) {
        let missing: Vec<u64> = truth.keys().filter(|k| !decisions.contains_key(k)).copied().collect();
        let extra: Vec<u64> = decisions.keys().filter(|k| !truth.contains_key(k)).copied().collect();
        return Err(Error::IdMismatch(format!(
            "decisions lack ids {missing:?} and carry unknown ids {extra:?}"
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (id, &d) in decisions {
        match (d, truth[id]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_, Some(tn)))
}

/// `(FP + FN) / area`.
pub fn error_density(m: &Metrics, area_km2: f64) -> Result<f64> {
    if !(area_km2.is_finite() && area_km2 > 0.0) {
        return Err(Error::invalid(format!("area must be positive, got {area_km2}")));
    }
    Ok(m.errors() as f64 / area_km2)
}

/// `1 - errors / baseline errors`.
pub fn relative_error_reduction(m: &Metrics, baseline: &Metrics) -> Result<f64> {
    if baseline.errors() == 0 {
        return Err(Error::Undefined("baseline has no errors".into()));
    }
    Ok(1.0 - m.errors() as f64 / baseline.errors() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub metrics: Metrics,
}

/// One experiment: the configuration that produced it and a metrics row per
/// method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format_version: u32,
    pub name: String,
    pub config: serde_json::Value,
    pub area_km2: Option<f64>,
    pub rows: Vec<ReportRow>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(name: impl Into<String>, config: serde_json::Value, area_km2: Option<f64>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            name: name.into(),
            config,
            area_km2,
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, metrics: Metrics) {
        self.rows.push(ReportRow {
            name: name.into(),
            metrics,
        });
    }

    pub fn row(&self, name: &str) -> Option<&Metrics> {
        self.rows.iter().find(|r| r.name == name).map(|r| &r.metrics)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

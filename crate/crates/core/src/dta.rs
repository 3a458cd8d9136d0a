//! Decision thresholds chosen to maximize F1 on labeled training values.
//!
//! The decision rule is always `value >= threshold`. Integer-valued features
//! are swept over every integer between the observed minimum and maximum;
//! continuous features over the distinct observed values. Among thresholds
//! with equal F1 the largest wins, which predicts the fewest positives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureType;
use crate::field::ObjectClass;

/// Integer spans wider than this fall back to observed values.
const MAX_INTEGER_SPAN: f64 = 100_000.0;

/// Confusion counts and derived rates of the rule `value >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tpr: f64,
    pub ppv: f64,
    pub f1: f64,
}

impl SweepRow {
    fn from_counts(threshold: f64, tp: u64, fp: u64, fn_: u64) -> Self {
        let f1 = if tp == 0 {
            0.0
        } else {
            (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
        };
        let tpr = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let ppv = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        Self {
            threshold,
            tp,
            fp,
            fn_,
            tpr,
            ppv,
            f1,
        }
    }
}

/// Which thresholds a sweep visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDomain {
    /// Every integer from the minimum to the maximum value.
    Integer,
    /// The distinct observed values.
    Observed,
}

impl SweepDomain {
    pub fn detect(values: &[f64]) -> Self {
        let integral = values.iter().all(|v| v.fract() == 0.0);
        let (lo, hi) = min_max(values);
        if integral && hi - lo <= MAX_INTEGER_SPAN {
            SweepDomain::Integer
        } else {
            SweepDomain::Observed
        }
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn check(values: &[f64], labels: &[bool]) -> Result<()> {
    if values.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            got: labels.len(),
        });
    }
    if values.is_empty() {
        return Err(Error::invalid("no training values"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite feature value {v}")));
    }
    if !labels.iter().any(|&l| l) {
        return Err(Error::Undefined("F1 needs at least one positive label".into()));
    }
    Ok(())
}

fn thresholds(values: &[f64], domain: SweepDomain) -> Vec<f64> {
    match domain {
        SweepDomain::Integer => {
            let (lo, hi) = min_max(values);
            (lo as i64..=hi as i64).map(|t| t as f64).collect()
        }
        SweepDomain::Observed => {
            let mut t = values.to_vec();
            t.sort_by(f64::total_cmp);
            t.dedup();
            t
        }
    }
}

/// One row per candidate threshold, ascending.
pub fn sweep_curve_with(values: &[f64], labels: &[bool], domain: SweepDomain) -> Result<Vec<SweepRow>> {
    check(values, labels)?;
    let mut pos: Vec<f64> = values.iter().zip(labels).filter(|(_, &l)| l).map(|(&v, _)| v).collect();
    let mut neg: Vec<f64> = values.iter().zip(labels).filter(|(_, &l)| !l).map(|(&v, _)| v).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let at_least = |sorted: &[f64], t: f64| (sorted.len() - sorted.partition_point(|&v| v < t)) as u64;
    let n_pos = pos.len() as u64;
    Ok(thresholds(values, domain)
        .into_iter()
        .map(|t| {
            let tp = at_least(&pos, t);
            SweepRow::from_counts(t, tp, at_least(&neg, t), n_pos - tp)
        })
        .collect())
}

/// Sweep with the domain chosen by [`SweepDomain::detect`].
pub fn sweep_curve(values: &[f64], labels: &[bool]) -> Result<Vec<SweepRow>> {
    sweep_curve_with(values, labels, SweepDomain::detect(values))
}

/// F1-maximizing threshold (largest among ties).
pub fn fit_threshold(values: &[f64], labels: &[bool]) -> Result<SweepRow> {
    fit_threshold_with(values, labels, SweepDomain::detect(values))
}

pub fn fit_threshold_with(values: &[f64], labels: &[bool], domain: SweepDomain) -> Result<SweepRow> {
    let curve = sweep_curve_with(values, labels, domain)?;
    let mut best = curve[0];
    for row in &curve[1..] {
        if row.f1 >= best.f1 {
            best = *row;
        }
    }
    Ok(best)
}

/// A fitted threshold for one class and feature type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtaThreshold {
    pub class: ObjectClass,
    pub feature_type: FeatureType,
    pub threshold: f64,
    pub f1: f64,
    pub tpr: f64,
    pub ppv: f64,
}

impl DtaThreshold {
    pub fn fit(
        class: ObjectClass,
        feature_type: FeatureType,
        values: &[f64],
        labels: &[bool],
    ) -> Result<Self> {
        let domain = if feature_type.is_integer() {
            SweepDomain::Integer
        } else {
            SweepDomain::Observed
        };
        let row = fit_threshold_with(values, labels, domain)?;
        Ok(Self {
            class,
            feature_type,
            threshold: row.threshold,
            f1: row.f1,
            tpr: row.tpr,
            ppv: row.ppv,
        })
    }

    pub fn decide(&self, value: f64) -> bool {
        value >= self.threshold
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(bits: &[u8]) -> Vec<bool> {
        bits.iter().map(|&b| b == 1).collect()
    }

    #[test]
    fn separable_example() {
        let fit = fit_threshold(&[1.0, 1.0, 2.0, 3.0, 5.0], &labels(&[0, 0, 0, 1, 1])).unwrap();
        assert_eq!(fit.threshold, 3.0);
        assert_eq!(fit.f1, 1.0);
    }

    #[test]
    fn all_positive_picks_minimum() {
        let fit = fit_threshold(&[0.3, 0.7, 0.5], &[true, true, true]).unwrap();
        assert_eq!(fit.threshold, 0.3);
        assert_eq!(fit.f1, 1.0);
    }

    #[test]
    fn no_positives_is_undefined() {
        let err = fit_threshold(&[1.0, 2.0], &[false, false]).unwrap_err();
        assert!(matches!(err, Error::Undefined(_)));
        assert!(fit_threshold(&[1.0], &[true, false]).is_err());
        assert!(fit_threshold(&[], &[]).is_err());
        assert!(fit_threshold(&[f64::NAN], &[true]).is_err());
    }

    #[test]
    fn single_positive_curve() {
        let values = [0.2, 0.5, 0.9];
        let curve = sweep_curve(&values, &[false, true, false]).unwrap();
        let at = |t: f64| curve.iter().find(|r| r.threshold == t).unwrap();
        assert_eq!(at(0.5).tpr, 1.0);
        assert_eq!(at(0.9).tpr, 0.0);
    }

    #[test]
    fn constant_values_single_row() {
        let curve = sweep_curve(&[2.0, 2.0, 2.0], &[true, false, true]).unwrap();
        assert_eq!(curve.len(), 1);
        let curve = sweep_curve(&[0.25, 0.25], &[true, false]).unwrap();
        assert_eq!(curve.len(), 1);
    }

    #[test]
    fn integer_domain_visits_gaps() {
        let curve = sweep_curve(&[0.0, 4.0], &[false, true]).unwrap();
        let t: Vec<f64> = curve.iter().map(|r| r.threshold).collect();
        assert_eq!(t, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        // ties over 1..=4 resolve to the largest threshold
        assert_eq!(fit_threshold(&[0.0, 4.0], &[false, true]).unwrap().threshold, 4.0);
    }

    #[test]
    fn tie_goes_to_largest_threshold() {
        // t=1: tp 2, fp 2 -> 4/6; t=2: tp 1, fp 0, fn 1 -> 2/3
        let fit = fit_threshold(&[1.0, 1.0, 1.0, 2.0], &labels(&[0, 1, 0, 1])).unwrap();
        assert_eq!(fit.threshold, 2.0);
    }

    #[test]
    fn decision_rule_is_inclusive() {
        let t = DtaThreshold::fit(ObjectClass::Tel, FeatureType::ClusterCount, &[0.0, 3.0], &[false, true]).unwrap();
        assert!(t.decide(3.0));
        assert!(!t.decide(2.999));
    }

    proptest! {
        #[test]
        fn tpr_non_increasing(values in prop::collection::vec(0u8..12, 1..60), bits in prop::collection::vec(any::<bool>(), 60)) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let mut labels = bits[..values.len()].to_vec();
            labels[0] = true;
            let curve = sweep_curve(&values, &labels).unwrap();
            for w in curve.windows(2) {
                prop_assert!(w[1].tpr <= w[0].tpr);
                prop_assert!(w[1].threshold > w[0].threshold);
            }
            let best = fit_threshold(&values, &labels).unwrap();
            let max = curve.iter().map(|r| r.f1).fold(0.0, f64::max);
            prop_assert_eq!(best.f1, max);
        }

        #[test]
        fn achieved_f1_matches_recount(values in prop::collection::vec(-5.0f64..5.0, 1..50), bits in prop::collection::vec(any::<bool>(), 50)) {
            let mut labels = bits[..values.len()].to_vec();
            labels[0] = true;
            let fit = fit_threshold(&values, &labels).unwrap();
            let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
            for (&v, &l) in values.iter().zip(&labels) {
                match (v >= fit.threshold, l) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fn_ += 1.0,
                    _ => {}
                }
            }
            let precision = tp / (tp + fp);
            let recall = tp / (tp + fn_);
            prop_assert!((fit.f1 - 2.0 * precision * recall / (precision + recall)).abs() < 1e-12);
        }

        #[test]
        fn invariant_under_increasing_transform(values in prop::collection::vec(-3.0f64..3.0, 1..50), bits in prop::collection::vec(any::<bool>(), 50)) {
            let mut labels = bits[..values.len()].to_vec();
            labels[0] = true;
            let g = |v: f64| v.exp() * 10.0 + 1.5;
            let mapped: Vec<f64> = values.iter().map(|&v| g(v)).collect();
            let a = fit_threshold_with(&values, &labels, SweepDomain::Observed).unwrap();
            let b = fit_threshold_with(&mapped, &labels, SweepDomain::Observed).unwrap();
            prop_assert_eq!(a.f1, b.f1);
            prop_assert_eq!(g(a.threshold), b.threshold);
        }
    }
}

//! Raw detection fields, alpha-cuts, and the amplified detection field.
//!
//! The amplified value of a detection is the distance-decay-weighted sum of
//! the scores in its closed neighborhood:
//!
//! ```text
//! delta_n = sum over p with d(p, n) < R of score(p) * exp(-d(p, n) / R)
//! ```
//!
//! The detection itself contributes with weight `exp(0) = 1`, so an isolated
//! detection has `delta = score`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{DistanceModel, Point, SpatialIndex};

/// Object class produced by one binary detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    /// The large complex feature (whole site).
    Site,
    EmptyLp,
    /// Launch pads with or without co-located vehicles.
    ComboLp,
    Missile,
    Tel,
    TelGroup,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 6] = [
        ObjectClass::Site,
        ObjectClass::EmptyLp,
        ObjectClass::ComboLp,
        ObjectClass::Missile,
        ObjectClass::Tel,
        ObjectClass::TelGroup,
    ];

    pub const COMPONENTS: [ObjectClass; 5] = [
        ObjectClass::EmptyLp,
        ObjectClass::ComboLp,
        ObjectClass::Missile,
        ObjectClass::Tel,
        ObjectClass::TelGroup,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectClass::Site => "site",
            ObjectClass::EmptyLp => "empty_lp",
            ObjectClass::ComboLp => "combo_lp",
            ObjectClass::Missile => "missile",
            ObjectClass::Tel => "tel",
            ObjectClass::TelGroup => "tel_group",
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObjectClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown class tag '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDetection {
    pub id: u64,
    pub location: Point,
    /// Detector confidence in [0, 1].
    pub score: f64,
    pub class: ObjectClass,
    pub tile: Option<u64>,
}

/// All detections of one class, with the scan geometry that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionField {
    class: ObjectClass,
    model: DistanceModel,
    stride: f64,
    detections: Vec<RawDetection>,
}

impl DetectionField {
    pub fn new(
        class: ObjectClass,
        model: DistanceModel,
        stride: f64,
        detections: Vec<RawDetection>,
    ) -> Result<Self> {
        model.validate()?;
        if !(stride.is_finite() && stride > 0.0) {
            return Err(Error::invalid(format!("stride must be positive, got {stride}")));
        }
        let mut seen = HashSet::with_capacity(detections.len());
        for d in &detections {
            if d.class != class {
                return Err(Error::invalid(format!(
                    "detection {} has class {} in a {} field",
                    d.id, d.class, class
                )));
            }
            if !(0.0..=1.0).contains(&d.score) {
                return Err(Error::invalid(format!(
                    "detection {} score {} outside [0, 1]",
                    d.id, d.score
                )));
            }
            model.check_point(d.location)?;
            if !seen.insert(d.id) {
                return Err(Error::invalid(format!("duplicate detection id {}", d.id)));
            }
        }
        Ok(Self {
            class,
            model,
            stride,
            detections,
        })
    }

    pub fn class(&self) -> ObjectClass {
        self.class
    }

    pub fn model(&self) -> DistanceModel {
        self.model
    }

    pub fn stride(&self) -> f64 {
        self.stride
    }

    pub fn detections(&self) -> &[RawDetection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// Keep detections with `score >= alpha`.
    pub fn alpha_cut(&self, alpha: f64) -> Result<DetectionField> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(DetectionField {
            class: self.class,
            model: self.model,
            stride: self.stride,
            detections: self
                .detections
                .iter()
                .filter(|d| d.score >= alpha)
                .cloned()
                .collect(),
        })
    }

    /// Same field restricted to detections accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&RawDetection) -> bool) -> DetectionField {
        DetectionField {
            class: self.class,
            model: self.model,
            stride: self.stride,
            detections: self.detections.iter().filter(|d| keep(d)).cloned().collect(),
        }
    }

    /// Index over detection positions; payload is the position in
    /// [`DetectionField::detections`].
    pub fn position_index(&self, cell_size: f64) -> Result<SpatialIndex> {
        SpatialIndex::build(
            self.model,
            cell_size,
            self.detections
                .iter()
                .enumerate()
                .map(|(i, d)| (i as u64, d.location)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplifiedDetection {
    pub id: u64,
    pub delta: f64,
}

/// Amplified detection field of `fa` with aperture radius `radius` (meters).
///
/// Output order follows `fa.detections()`. Each sum runs over neighbors in
/// (distance, id) order, so results do not depend on input ordering.
pub fn amplify(fa: &DetectionField, radius: f64) -> Result<Vec<AmplifiedDetection>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::invalid(format!(
            "aperture radius must be positive, got {radius}"
        )));
    }
    let dets = fa.detections();
    let index = SpatialIndex::build(
        fa.model(),
        radius,
        dets.iter().map(|d| (d.id, d.location)),
    )?;
    let by_id: std::collections::HashMap<u64, f64> =
        dets.iter().map(|d| (d.id, d.score)).collect();
    dets.par_iter()
        .map(|d| {
            let delta = index
                .radius_query(d.location, radius)?
                .iter()
                .map(|n| by_id[&n.id] * (-n.distance / radius).exp())
                .sum();
            Ok(AmplifiedDetection { id: d.id, delta })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(id: u64, x: f64, y: f64, score: f64) -> RawDetection {
        RawDetection {
            id,
            location: Point::new(x, y),
            score,
            class: ObjectClass::Tel,
            tile: None,
        }
    }

    fn field(dets: Vec<RawDetection>) -> DetectionField {
        DetectionField::new(ObjectClass::Tel, DistanceModel::Planar, 8.0, dets).unwrap()
    }

    #[test]
    fn class_tags_roundtrip() {
        for c in ObjectClass::ALL {
            assert_eq!(c.as_str().parse::<ObjectClass>().unwrap(), c);
        }
        assert!("tank".parse::<ObjectClass>().is_err());
    }

    #[test]
    fn alpha_cut_filters_inclusive() {
        let f = field(vec![det(1, 0.0, 0.0, 0.95), det(2, 1.0, 0.0, 0.89), det(3, 2.0, 0.0, 0.91)]);
        let cut = f.alpha_cut(0.9).unwrap();
        let ids: Vec<u64> = cut.detections().iter().map(|d| d.id).collect();
        assert_eq!(ids, vec![1, 3]);
        assert_eq!(cut.stride(), 8.0);
        assert_eq!(cut.class(), ObjectClass::Tel);

        assert_eq!(f.alpha_cut(0.0).unwrap(), f);
        assert!(f.alpha_cut(1.5).is_err());
        assert!(f.alpha_cut(-0.1).is_err());

        let g = field(vec![det(1, 0.0, 0.0, 0.995), det(2, 1.0, 0.0, 0.99), det(3, 2.0, 0.0, 0.989)]);
        assert_eq!(g.alpha_cut(0.99).unwrap().len(), 2);
        let perfect = field(vec![det(1, 0.0, 0.0, 1.0), det(2, 1.0, 0.0, 0.999)]);
        assert_eq!(perfect.alpha_cut(1.0).unwrap().len(), 1);
    }

    #[test]
    fn field_validation() {
        let bad_score = DetectionField::new(
            ObjectClass::Tel,
            DistanceModel::Planar,
            8.0,
            vec![det(1, 0.0, 0.0, 1.2)],
        );
        assert!(bad_score.is_err());
        let dup = DetectionField::new(
            ObjectClass::Tel,
            DistanceModel::Planar,
            8.0,
            vec![det(1, 0.0, 0.0, 0.5), det(1, 1.0, 0.0, 0.5)],
        );
        assert!(dup.is_err());
        let wrong_class = DetectionField::new(
            ObjectClass::Missile,
            DistanceModel::Planar,
            8.0,
            vec![det(1, 0.0, 0.0, 0.5)],
        );
        assert!(wrong_class.is_err());
        assert!(DetectionField::new(ObjectClass::Tel, DistanceModel::Planar, 0.0, vec![]).is_err());
    }

    #[test]
    fn isolated_detection_keeps_its_score() {
        let a = amplify(&field(vec![det(1, 0.0, 0.0, 1.0)]), 32.0).unwrap();
        assert_eq!(a, vec![AmplifiedDetection { id: 1, delta: 1.0 }]);
    }

    #[test]
    fn pair_at_half_radius() {
        let a = amplify(&field(vec![det(1, 0.0, 0.0, 1.0), det(2, 16.0, 0.0, 1.0)]), 32.0).unwrap();
        let expected = 1.0 + (-0.5f64).exp();
        for d in &a {
            assert!((d.delta - expected).abs() < 1e-15);
        }
        assert!((expected - 1.6065).abs() < 1e-4);
    }

    #[test]
    fn pair_at_exact_radius_does_not_interact() {
        let a = amplify(&field(vec![det(1, 0.0, 0.0, 0.7), det(2, 32.0, 0.0, 0.9)]), 32.0).unwrap();
        assert_eq!(a[0].delta, 0.7);
        assert_eq!(a[1].delta, 0.9);
    }

    #[test]
    fn rejects_bad_radius() {
        let f = field(vec![det(1, 0.0, 0.0, 1.0)]);
        assert!(amplify(&f, 0.0).is_err());
        assert!(amplify(&f, -3.0).is_err());
    }

    fn arb_dets() -> impl Strategy<Value = Vec<RawDetection>> {
        prop::collection::vec((0.0f64..200.0, 0.0f64..200.0, 0.0f64..=1.0), 1..60).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (x, y, s))| det(i as u64, x, y, s))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn permutation_invariant(dets in arb_dets(), seed in any::<u64>()) {
            let base = amplify(&field(dets.clone()), 32.0).unwrap();
            let mut shuffled = dets.clone();
            // deterministic Fisher-Yates driven by the seed
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let other = amplify(&field(shuffled), 32.0).unwrap();
            for a in &base {
                let b = other.iter().find(|b| b.id == a.id).unwrap();
                prop_assert_eq!(a.delta, b.delta);
            }
        }

        #[test]
        fn delta_at_least_own_score(dets in arb_dets()) {
            let f = field(dets);
            for (a, d) in amplify(&f, 32.0).unwrap().iter().zip(f.detections()) {
                prop_assert!(a.delta >= d.score);
            }
        }

        #[test]
        fn adding_a_neighbor_never_decreases(dets in arb_dets(), dx in -31.0f64..31.0, s in 0.0f64..=1.0) {
            let f = field(dets.clone());
            let before = amplify(&f, 32.0).unwrap();
            let target = &dets[0];
            let mut more = dets.clone();
            more.push(det(10_000, target.location.x + dx, target.location.y, s));
            let after = amplify(&field(more), 32.0).unwrap();
            prop_assert!(after[0].delta >= before[0].delta);
        }

        #[test]
        fn scale_invariant(dets in arb_dets(), k in 0.1f64..20.0) {
            let f = field(dets.clone());
            let scaled: Vec<RawDetection> = dets
                .iter()
                .map(|d| det(d.id, d.location.x * k, d.location.y * k, d.score))
                .collect();
            let g = DetectionField::new(ObjectClass::Tel, DistanceModel::Planar, 8.0 * k, scaled).unwrap();
            let a = amplify(&f, 32.0).unwrap();
            let b = amplify(&g, 32.0 * k).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.delta - y.delta).abs() < 1e-9);
            }
        }
    }
}

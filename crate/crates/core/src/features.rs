//! Per-candidate component features.
//!
//! Around each candidate location, and for each component class, four
//! values are read within the fusion radius (strict `<`):
//!
//! * `raw_max`: highest raw score in the unthresholded field,
//! * `raw_count`: number of detections surviving the class alpha-cut,
//! * `cluster_count`: number of cluster centers,
//! * `cluster_score_sum`: sum of those clusters' normalized scores.
//!
//! Clusters come from clustering the component fields restricted to a square
//! tile centered on the candidate ([`TileScanner`]).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, ClusterParams};
use crate::error::{Error, Result};
use crate::field::{DetectionField, ObjectClass};
use crate::geo::{Point, SpatialIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateSource {
    /// Produced by scanning and clustering the site field.
    Scan,
    /// Built from a known site center or a cardinal offset of one.
    PseudoTrain,
}

impl CandidateSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            CandidateSource::Scan => "scan",
            CandidateSource::PseudoTrain => "pseudo-train",
        }
    }
}

impl FromStr for CandidateSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scan" => Ok(CandidateSource::Scan),
            "pseudo-train" => Ok(CandidateSource::PseudoTrain),
            other => Err(Error::invalid(format!("unknown candidate source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub location: Point,
    /// Normalized score of the site cluster this candidate came from.
    pub site_score: f64,
    pub label: Option<bool>,
    pub source: CandidateSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureType {
    RawMax,
    RawCount,
    ClusterCount,
    ClusterScoreSum,
}

impl FeatureType {
    pub const ALL: [FeatureType; 4] = [
        FeatureType::RawMax,
        FeatureType::RawCount,
        FeatureType::ClusterCount,
        FeatureType::ClusterScoreSum,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureType::RawMax => "raw-max",
            FeatureType::RawCount => "raw-count",
            FeatureType::ClusterCount => "cluster-count",
            FeatureType::ClusterScoreSum => "cluster-score-sum",
        }
    }

    /// Counts take integer values.
    pub fn is_integer(&self) -> bool {
        matches!(self, FeatureType::RawCount | FeatureType::ClusterCount)
    }
}

impl fmt::Display for FeatureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureType::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown feature type '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassFeatures {
    pub raw_max: f64,
    pub raw_count: u64,
    pub cluster_count: u64,
    pub cluster_score_sum: f64,
}

impl ClassFeatures {
    pub fn get(&self, ft: FeatureType) -> f64 {
        match ft {
            FeatureType::RawMax => self.raw_max,
            FeatureType::RawCount => self.raw_count as f64,
            FeatureType::ClusterCount => self.cluster_count as f64,
            FeatureType::ClusterScoreSum => self.cluster_score_sum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFeatures {
    pub candidate_id: u64,
    pub label: Option<bool>,
    pub per_class: BTreeMap<ObjectClass, ClassFeatures>,
}

impl CandidateFeatures {
    pub fn value(&self, class: ObjectClass, ft: FeatureType) -> Result<f64> {
        self.per_class
            .get(&class)
            .map(|f| f.get(ft))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "candidate {} has no {} features",
                    self.candidate_id, class
                ))
            })
    }
}

/// What one component detector saw around a candidate.
#[derive(Debug, Clone)]
pub struct ClassEvidence {
    /// Unthresholded field.
    pub raw: DetectionField,
    pub alpha: f64,
    pub clusters: Vec<Cluster>,
}

/// Features of candidate `c` for `classes`, read within `radius` meters.
pub fn extract_features(
    c: &Candidate,
    evidence: &BTreeMap<ObjectClass, ClassEvidence>,
    classes: &[ObjectClass],
    radius: f64,
) -> Result<CandidateFeatures> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::invalid(format!("fusion radius must be positive, got {radius}")));
    }
    let mut per_class = BTreeMap::new();
    for &class in classes {
        let ev = evidence
            .get(&class)
            .ok_or_else(|| Error::invalid(format!("no evidence for class {class}")))?;
        let model = ev.raw.model();
        model.check_point(c.location)?;
        let mut f = ClassFeatures::default();
        for d in ev.raw.detections() {
            if model.distance(c.location, d.location) < radius {
                f.raw_max = f.raw_max.max(d.score);
                if d.score >= ev.alpha {
                    f.raw_count += 1;
                }
            }
        }
        for cl in &ev.clusters {
            if model.distance(c.location, cl.location) < radius {
                f.cluster_count += 1;
                f.cluster_score_sum += cl.score;
            }
        }
        per_class.insert(class, f);
    }
    Ok(CandidateFeatures {
        candidate_id: c.id,
        label: c.label,
        per_class,
    })
}

/// Re-scans component fields on a square tile around each candidate.
#[derive(Debug)]
pub struct TileScanner {
    fields: BTreeMap<ObjectClass, (DetectionField, SpatialIndex, ClusterParams)>,
    tile_size: f64,
}

impl TileScanner {
    /// `tile_size` is the side of the square tile in meters.
    pub fn new(
        fields: impl IntoIterator<Item = (DetectionField, ClusterParams)>,
        tile_size: f64,
    ) -> Result<Self> {
        if !(tile_size.is_finite() && tile_size > 0.0) {
            return Err(Error::invalid(format!("tile size must be positive, got {tile_size}")));
        }
        let mut map = BTreeMap::new();
        for (field, params) in fields {
            params.validate()?;
            let index = field.position_index(tile_size / 2.0)?;
            let class = field.class();
            if map.insert(class, (field, index, params)).is_some() {
                return Err(Error::invalid(format!("duplicate field for class {class}")));
            }
        }
        Ok(Self {
            fields: map,
            tile_size,
        })
    }

    pub fn classes(&self) -> Vec<ObjectClass> {
        self.fields.keys().copied().collect()
    }

    pub fn tile_size(&self) -> f64 {
        self.tile_size
    }

    /// Crop every field to the tile around `center` and cluster it.
    pub fn evidence(&self, center: Point) -> Result<BTreeMap<ObjectClass, ClassEvidence>> {
        let half = self.tile_size / 2.0;
        let mut out = BTreeMap::new();
        for (&class, (field, index, params)) in &self.fields {
            let model = field.model();
            let mut keep: Vec<usize> = index
                .radius_query(center, half * std::f64::consts::SQRT_2 * (1.0 + 1e-9))?
                .into_iter()
                .map(|n| n.id as usize)
                .filter(|&i| {
                    let (e, n) = model.local_offset(center, field.detections()[i].location);
                    e.abs() <= half && n.abs() <= half
                })
                .collect();
            keep.sort_unstable();
            let tile = DetectionField::new(
                class,
                model,
                field.stride(),
                keep.iter().map(|&i| field.detections()[i].clone()).collect(),
            )?;
            let clusters = params.run(&tile)?;
            out.insert(
                class,
                ClassEvidence {
                    raw: tile,
                    alpha: params.alpha,
                    clusters,
                },
            );
        }
        Ok(out)
    }

    /// Tile evidence and features for many candidates, in input order.
    pub fn features_for(
        &self,
        candidates: &[Candidate],
        radius: f64,
    ) -> Result<Vec<(CandidateFeatures, BTreeMap<ObjectClass, ClassEvidence>)>> {
        let classes = self.classes();
        candidates
            .par_iter()
            .map(|c| {
                let ev = self.evidence(c.location)?;
                let f = extract_features(c, &ev, &classes, radius)?;
                Ok((f, ev))
            })
            .collect()
    }
}

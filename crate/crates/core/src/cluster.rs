//! Greedy mode clustering of an amplified detection field with normalized
//! cluster scores.
//!
//! Detections are visited in order of decreasing amplified value (ties by
//! id). Each unassigned detection seeds a cluster that absorbs every
//! unassigned detection within the membership radius. Members inside the
//! aperture radius `R` weigh 1; members in the annulus `[R, membership)`
//! weigh 0, -1 or `-exp(-(2R - d) / R)` depending on [`PenaltyMode`]. The
//! cluster score is the weighted sum of member amplified values divided by
//! the normalizing factor `C_norm = pi^2 R'^4 (2 - 4/e)` with
//! `R' = R / stride`, which puts a fully saturated aperture near 1
//! independently of scan stride.

use std::collections::HashMap;
use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{amplify, AmplifiedDetection, DetectionField, ObjectClass};
use crate::geo::{Point, SpatialIndex};

/// Weighting of cluster members beyond the aperture radius.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PenaltyMode {
    #[default]
    #[serde(rename = "truncate")]
    Truncate,
    #[serde(rename = "flat")]
    Flat,
    #[serde(rename = "exp", alias = "exp-decay")]
    ExpDecay,
}

impl PenaltyMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PenaltyMode::Truncate => "truncate",
            PenaltyMode::Flat => "flat",
            PenaltyMode::ExpDecay => "exp",
        }
    }
}

impl fmt::Display for PenaltyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PenaltyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truncate" => Ok(PenaltyMode::Truncate),
            "flat" => Ok(PenaltyMode::Flat),
            "exp" | "exp-decay" => Ok(PenaltyMode::ExpDecay),
            other => Err(Error::invalid(format!("unknown penalty mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterParams {
    /// Aperture radius `R` in meters.
    pub aperture_radius: f64,
    pub alpha: f64,
    /// Scan stride of the producing detector, meters.
    pub stride: f64,
    #[serde(default)]
    pub penalty: PenaltyMode,
    /// Outer search radius; defaults to `R` for truncate and `2R` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub membership_radius: Option<f64>,
}

impl ClusterParams {
    pub fn new(aperture_radius: f64, alpha: f64, stride: f64, penalty: PenaltyMode) -> Self {
        Self {
            aperture_radius,
            alpha,
            stride,
            penalty,
            membership_radius: None,
        }
    }

    pub fn membership_radius(&self) -> f64 {
        self.membership_radius.unwrap_or(match self.penalty {
            PenaltyMode::Truncate => self.aperture_radius,
            PenaltyMode::Flat | PenaltyMode::ExpDecay => 2.0 * self.aperture_radius,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.aperture_radius;
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid(format!("aperture radius must be positive, got {r}")));
        }
        if !(self.stride.is_finite() && self.stride > 0.0) {
            return Err(Error::invalid(format!("stride must be positive, got {}", self.stride)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        let m = self.membership_radius();
        if !(m.is_finite() && m >= r) {
            return Err(Error::invalid(format!(
                "membership radius {m} must be finite and >= aperture radius {r}"
            )));
        }
        Ok(())
    }

    pub fn norm_constants(&self) -> Result<NormConstants> {
        NormConstants::new(self.aperture_radius, self.stride)
    }

    /// Alpha-cut, amplify and cluster a raw field.
    pub fn run(&self, raw: &DetectionField) -> Result<Vec<Cluster>> {
        self.validate()?;
        let cut = raw.alpha_cut(self.alpha)?;
        let deltas = amplify(&cut, self.aperture_radius)?;
        cluster_field(&cut, &deltas, self)
    }
}

/// Normalization constants for a given aperture radius and stride.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConstants {
    /// `R / stride`.
    pub r_prime: f64,
    /// Approximate maximum amplified value of one detection.
    pub n_volume: f64,
    /// Approximate maximum number of detections inside the aperture.
    pub n_max_p: f64,
    pub c_norm: f64,
}

impl NormConstants {
    pub fn new(aperture_radius: f64, stride: f64) -> Result<Self> {
        if !(aperture_radius.is_finite() && aperture_radius > 0.0) {
            return Err(Error::invalid(format!(
                "aperture radius must be positive, got {aperture_radius}"
            )));
        }
        if !(stride.is_finite() && stride > 0.0) {
            return Err(Error::invalid(format!("stride must be positive, got {stride}")));
        }
        let r_prime = aperture_radius / stride;
        let n_max_p = PI * r_prime * r_prime;
        let n_volume = n_max_p * (2.0 - 4.0 / E);
        Ok(Self {
            r_prime,
            n_volume,
            n_max_p,
            c_norm: n_volume * n_max_p,
        })
    }
}

/// Member weight at distance `d` from the cluster seed.
///
/// The exponential penalty is `-1` at `2R` and is held there beyond it.
pub fn penalty_weight(d: f64, aperture_radius: f64, mode: PenaltyMode) -> f64 {
    if d < aperture_radius {
        return 1.0;
    }
    match mode {
        PenaltyMode::Truncate => 0.0,
        PenaltyMode::Flat => -1.0,
        PenaltyMode::ExpDecay => {
            -(-(2.0 * aperture_radius - d) / aperture_radius).exp().min(1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub id: u64,
    pub weight: f64,
    /// Distance to the seed detection, meters.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Creation order (0 = first seed).
    pub id: usize,
    pub class: ObjectClass,
    pub seed_id: u64,
    pub location: Point,
    /// Members in (distance, id) order; the seed comes first.
    pub members: Vec<Member>,
    /// Weighted sum of member amplified values before normalization.
    pub raw_weighted_sum: f64,
    pub score: f64,
    /// 1-based rank by descending score.
    pub rank: usize,
}

fn cluster_order(a: &Cluster, b: &Cluster) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.seed_id.cmp(&b.seed_id))
}

/// Cluster an alpha-cut field given its amplified values.
///
/// `deltas` must be aligned with `fa.detections()` (as returned by
/// [`amplify`]) and computed with the same aperture radius.
pub fn cluster_field(
    fa: &DetectionField,
    deltas: &[AmplifiedDetection],
    params: &ClusterParams,
) -> Result<Vec<Cluster>> {
    params.validate()?;
    let dets = fa.detections();
    if deltas.len() != dets.len() {
        return Err(Error::invalid(format!(
            "{} amplified values for {} detections",
            deltas.len(),
            dets.len()
        )));
    }
    if let Some((d, a)) = dets.iter().zip(deltas).find(|(d, a)| d.id != a.id) {
        return Err(Error::invalid(format!(
            "amplified value for id {} aligned with detection {}",
            a.id, d.id
        )));
    }
    if (fa.stride() - params.stride).abs() > 1e-9 * params.stride {
        return Err(Error::invalid(format!(
            "field stride {} differs from cluster stride {}",
            fa.stride(),
            params.stride
        )));
    }
    if dets.is_empty() {
        return Ok(Vec::new());
    }

    let model = fa.model();
    let r = params.aperture_radius;
    let reach = params.membership_radius();
    let norm = params.norm_constants()?;
    let index = SpatialIndex::build(model, reach, dets.iter().map(|d| (d.id, d.location)))?;
    let pos: HashMap<u64, usize> = dets.iter().enumerate().map(|(i, d)| (d.id, i)).collect();

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        deltas[b]
            .delta
            .total_cmp(&deltas[a].delta)
            .then(dets[a].id.cmp(&dets[b].id))
    });

    let mut assigned = vec![false; dets.len()];
    let mut clusters = Vec::new();
    for &seed in &order {
        if assigned[seed] {
            continue;
        }
        let origin = dets[seed].location;
        let mut members = Vec::new();
        let mut raw = 0.0;
        let (mut wsum, mut east, mut north) = (0.0, 0.0, 0.0);
        for n in index.radius_query(origin, reach)? {
            let i = pos[&n.id];
            if assigned[i] {
                continue;
            }
            assigned[i] = true;
            let weight = penalty_weight(n.distance, r, params.penalty);
            let delta = deltas[i].delta;
            raw += weight * delta;
            if n.distance < r {
                let (e, no) = model.local_offset(origin, dets[i].location);
                wsum += delta;
                east += delta * e;
                north += delta * no;
            }
            members.push(Member {
                id: n.id,
                weight,
                distance: n.distance,
            });
        }
        let inner = members.iter().filter(|m| m.distance < r).count();
        let location = if inner > 1 && wsum > 0.0 {
            model.offset_point(origin, east / wsum, north / wsum)
        } else {
            origin
        };
        clusters.push(Cluster {
            id: clusters.len(),
            class: fa.class(),
            seed_id: dets[seed].id,
            location,
            members,
            raw_weighted_sum: raw,
            score: raw / norm.c_norm,
            rank: 0,
        });
    }
    clusters.sort_by(cluster_order);
    for (i, c) in clusters.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    Ok(clusters)
}

/// The `k` best clusters by score (ties by seed id).
pub fn top_k(clusters: &[Cluster], k: usize) -> Vec<Cluster> {
    let mut sorted = clusters.to_vec();
    sorted.sort_by(cluster_order);
    sorted.truncate(k);
    sorted
}

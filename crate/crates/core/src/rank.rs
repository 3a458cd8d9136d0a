//! Re-ranking candidates by a weighted sum of their own site score and the
//! component cluster scores found nearby.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::Cluster;
use crate::error::{Error, Result};
use crate::features::Candidate;
use crate::field::ObjectClass;
use crate::geo::{DistanceModel, Point, SpatialIndex};

/// Default fusion radius, meters.
pub const DEFAULT_FUSION_RADIUS: f64 = 150.0;

/// Non-negative weight per object class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightProfile {
    pub site: f64,
    pub empty_lp: f64,
    pub combo_lp: f64,
    pub missile: f64,
    pub tel: f64,
    pub tel_group: f64,
}

impl WeightProfile {
    pub fn uniform() -> Self {
        Self {
            site: 1.0,
            empty_lp: 1.0,
            combo_lp: 1.0,
            missile: 1.0,
            tel: 1.0,
            tel_group: 1.0,
        }
    }

    /// Launch pads 4, TEL groups 2, everything else 1.
    pub fn expert() -> Self {
        Self {
            site: 1.0,
            empty_lp: 4.0,
            combo_lp: 4.0,
            missile: 1.0,
            tel: 1.0,
            tel_group: 2.0,
        }
    }

    /// Site weight only; reproduces the site-score ranking.
    pub fn site_only() -> Self {
        Self {
            site: 1.0,
            empty_lp: 0.0,
            combo_lp: 0.0,
            missile: 0.0,
            tel: 0.0,
            tel_group: 0.0,
        }
    }

    pub fn get(&self, class: ObjectClass) -> f64 {
        match class {
            ObjectClass::Site => self.site,
            ObjectClass::EmptyLp => self.empty_lp,
            ObjectClass::ComboLp => self.combo_lp,
            ObjectClass::Missile => self.missile,
            ObjectClass::Tel => self.tel,
            ObjectClass::TelGroup => self.tel_group,
        }
    }

    pub fn set(&mut self, class: ObjectClass, w: f64) {
        let slot = match class {
            ObjectClass::Site => &mut self.site,
            ObjectClass::EmptyLp => &mut self.empty_lp,
            ObjectClass::ComboLp => &mut self.combo_lp,
            ObjectClass::Missile => &mut self.missile,
            ObjectClass::Tel => &mut self.tel,
            ObjectClass::TelGroup => &mut self.tel_group,
        };
        *slot = w;
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut out = *self;
        for c in ObjectClass::ALL {
            out.set(c, self.get(c) * k);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for c in ObjectClass::ALL {
            let w = self.get(c);
            if !(w.is_finite() && w >= 0.0) {
                problems.push(format!("weight for {c} must be finite and non-negative, got {w}"));
            }
        }
        if ObjectClass::ALL.iter().all(|&c| self.get(c) == 0.0) {
            problems.push("at least one weight must be nonzero".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }
}

impl FromStr for WeightProfile {
    type Err = Error;

    /// Built-in profile names; files are handled by the caller.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::uniform()),
            "expert" => Ok(Self::expert()),
            "site-only" => Ok(Self::site_only()),
            other => Err(Error::invalid(format!("unknown weight profile '{other}'"))),
        }
    }
}

/// Component cluster scores indexed per class for radius sums.
pub struct ComponentScores {
    model: DistanceModel,
    by_class: BTreeMap<ObjectClass, (SpatialIndex, Vec<f64>)>,
}

impl ComponentScores {
    /// Site clusters are ignored; the site term comes from the candidate.
    pub fn new(clusters_by_class: &BTreeMap<ObjectClass, Vec<Cluster>>, model: DistanceModel, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        let mut by_class = BTreeMap::new();
        for (&class, clusters) in clusters_by_class {
            if class == ObjectClass::Site {
                continue;
            }
            if let Some(c) = clusters.iter().find(|c| c.class != class) {
                return Err(Error::invalid(format!(
                    "cluster of class {} listed under {class}",
                    c.class
                )));
            }
            let index = SpatialIndex::build(
                model,
                radius,
                clusters.iter().enumerate().map(|(i, c)| (i as u64, c.location)),
            )?;
            by_class.insert(class, (index, clusters.iter().map(|c| c.score).collect()));
        }
        Ok(Self { model, by_class })
    }

    pub fn model(&self) -> DistanceModel {
        self.model
    }

    /// Sum of `class` cluster scores strictly within `radius` of `center`.
    pub fn sum(&self, class: ObjectClass, center: Point, radius: f64) -> Result<f64> {
        let Some((index, scores)) = self.by_class.get(&class) else {
            return Ok(0.0);
        };
        Ok(index
            .radius_query(center, radius)?
            .iter()
            .map(|n| scores[n.id as usize])
            .sum())
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::invalid(format!("fusion radius must be positive, got {radius}")));
    }
    Ok(())
}

/// `w_site * site_score + sum over components of w_class * nearby score sum`.
pub fn fused_score(c: &Candidate, components: &ComponentScores, w: &WeightProfile, radius: f64) -> Result<f64> {
    check_radius(radius)?;
    let mut total = w.site * c.site_score;
    for class in ObjectClass::COMPONENTS {
        let wc = w.get(class);
        if wc != 0.0 {
            total += wc * components.sum(class, c.location, radius)?;
        }
    }
    Ok(total)
}

/// Fused score of every candidate, in input order.
pub fn fused_scores(
    candidates: &[Candidate],
    components: &ComponentScores,
    w: &WeightProfile,
    radius: f64,
) -> Result<Vec<f64>> {
    w.validate()?;
    candidates
        .par_iter()
        .map(|c| fused_score(c, components, w, radius))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    /// 1-based.
    pub rank: usize,
    pub candidate_id: u64,
    pub fused_score: f64,
    pub is_tp: Option<bool>,
}

/// Sort by descending score, ties by id; `labels` fills `is_tp` when given.
pub fn rerank(scored: &[(u64, f64)], labels: Option<&BTreeMap<u64, bool>>) -> Vec<RankedCandidate> {
    let mut order: Vec<(u64, f64)> = scored.to_vec();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order
        .into_iter()
        .enumerate()
        .map(|(i, (id, s))| RankedCandidate {
            rank: i + 1,
            candidate_id: id,
            fused_score: s,
            is_tp: labels.and_then(|l| l.get(&id).copied()),
        })
        .collect()
}

/// Mean 1-based rank of the true positives.
pub fn avg_tp_rank(ranked: &[RankedCandidate], tp_ids: &BTreeSet<u64>) -> Result<f64> {
    let ranks: Vec<f64> = ranked
        .iter()
        .filter(|r| tp_ids.contains(&r.candidate_id))
        .map(|r| r.rank as f64)
        .collect();
    if ranks.is_empty() {
        return Err(Error::Undefined("no true positives in the ranking".into()));
    }
    Ok(ranks.iter().sum::<f64>() / ranks.len() as f64)
}

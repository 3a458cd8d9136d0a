//! End-to-end workflows: candidate detection, labeling, feature extraction,
//! fusion training, re-ranking and evaluation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cluster::Cluster;
use crate::config::{Config, FusionStage, ModelKind};
use crate::dta::DtaThreshold;
use crate::error::{Error, Result};
use crate::eval::{confusion, ExperimentReport, Metrics, FORMAT_VERSION};
use crate::features::{Candidate, CandidateFeatures, CandidateSource, FeatureType, TileScanner};
use crate::field::{DetectionField, ObjectClass, RawDetection};
use crate::fusion::{
    fuse_candidates, train_anfis, train_mlp, Combo, Decision, FeatureVector, FusionModel, NormalizationSpec,
    OrGateModel,
};
use crate::geo::DistanceModel;
use crate::rank::{avg_tp_rank, fused_scores, rerank, ComponentScores, RankedCandidate, WeightProfile};
use crate::synth::{generate, make_training_set, Scenario, SiteTruth, SyntheticWorld};

/// Wrap detections into fields with the configured scan strides.
pub fn build_fields(
    detections: &BTreeMap<ObjectClass, Vec<RawDetection>>,
    cfg: &Config,
) -> Result<BTreeMap<ObjectClass, DetectionField>> {
    detections
        .iter()
        .map(|(&class, dets)| {
            let stride = if class == ObjectClass::Site {
                cfg.site.stride
            } else {
                cfg.components.params(class)?.stride
            };
            Ok((class, DetectionField::new(class, cfg.distance, stride, dets.clone())?))
        })
        .collect()
}

/// Group a mixed detection list by class.
pub fn split_by_class(detections: Vec<RawDetection>) -> BTreeMap<ObjectClass, Vec<RawDetection>> {
    let mut out: BTreeMap<ObjectClass, Vec<RawDetection>> = BTreeMap::new();
    for d in detections {
        out.entry(d.class).or_default().push(d);
    }
    out
}

/// One scan candidate per site cluster, numbered by cluster rank from 0.
pub fn candidates_from_clusters(site_clusters: &[Cluster]) -> Vec<Candidate> {
    site_clusters
        .iter()
        .map(|c| Candidate {
            id: (c.rank - 1) as u64,
            location: c.location,
            site_score: c.score,
            label: None,
            source: CandidateSource::Scan,
        })
        .collect()
}

/// Label candidates by one-to-one matching to truth sites strictly within
/// `radius`, closest pairs first. Returns the number of unmatched sites.
pub fn label_candidates(candidates: &mut [Candidate], truth: &[SiteTruth], radius: f64, model: &DistanceModel) -> usize {
    let mut pairs = Vec::new();
    for (ci, c) in candidates.iter().enumerate() {
        for (si, s) in truth.iter().enumerate().filter(|(_, s)| s.label) {
            let d = model.distance(c.location, s.center);
            if d < radius {
                pairs.push((d, c.id, s.id, ci, si));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_c = vec![false; candidates.len()];
    let mut used_s = vec![false; truth.len()];
    for &(_, _, _, ci, si) in &pairs {
        if !used_c[ci] && !used_s[si] {
            used_c[ci] = true;
            used_s[si] = true;
        }
    }
    for (c, used) in candidates.iter_mut().zip(&used_c) {
        c.label = Some(*used);
    }
    truth
        .iter()
        .zip(&used_s)
        .filter(|(s, used)| s.label && !**used)
        .count()
}

/// Tile re-scanner over every component field present.
pub fn component_scanner(fields: &BTreeMap<ObjectClass, DetectionField>, cfg: &Config) -> Result<TileScanner> {
    let mut inputs = Vec::new();
    for class in ObjectClass::COMPONENTS {
        if let Some(f) = fields.get(&class) {
            inputs.push((f.clone(), cfg.components.params(class)?));
        }
    }
    TileScanner::new(inputs, cfg.features.tile_size)
}

pub fn extract_all(scanner: &TileScanner, candidates: &[Candidate], radius: f64) -> Result<Vec<CandidateFeatures>> {
    Ok(scanner
        .features_for(candidates, radius)?
        .into_iter()
        .map(|(f, _)| f)
        .collect())
}

pub fn feature_vectors(features: &[CandidateFeatures], combo: Combo, ft: FeatureType) -> Result<Vec<FeatureVector>> {
    let classes = combo.classes();
    features
        .iter()
        .map(|f| FeatureVector::from_features(f, &classes, ft))
        .collect()
}

/// Full-field clusters of every component class.
pub fn component_clusters(
    fields: &BTreeMap<ObjectClass, DetectionField>,
    cfg: &Config,
) -> Result<BTreeMap<ObjectClass, Vec<Cluster>>> {
    let mut out = BTreeMap::new();
    for class in ObjectClass::COMPONENTS {
        if let Some(f) = fields.get(&class) {
            out.insert(class, cfg.components.params(class)?.run(f)?);
        }
    }
    Ok(out)
}

/// Train the configured fuser on labeled vectors.
pub fn train_fusion(train: &[FeatureVector], kind: ModelKind, ft: FeatureType, stage: &FusionStage) -> Result<FusionModel> {
    let thresholds = OrGateModel::fit(train, ft)?.thresholds;
    train_fusion_with(train, kind, thresholds, stage)
}

/// Train with per-class thresholds fitted elsewhere, one per input class in order.
pub fn train_fusion_with(
    train: &[FeatureVector],
    kind: ModelKind,
    thresholds: Vec<DtaThreshold>,
    stage: &FusionStage,
) -> Result<FusionModel> {
    let first = train.first().ok_or_else(|| Error::InvalidInput("empty training set".into()))?;
    let classes: Vec<ObjectClass> = thresholds.iter().map(|t| t.class).collect();
    if classes != first.classes {
        return Err(Error::InvalidInput(format!(
            "thresholds cover {classes:?}, training vectors carry {:?}",
            first.classes
        )));
    }
    let or = OrGateModel { thresholds };
    Ok(match kind {
        ModelKind::Or => FusionModel::Or(or),
        ModelKind::Mlp => {
            let spec = if stage.normalize {
                Some(NormalizationSpec::from_thresholds(&or.thresholds)?)
            } else {
                None
            };
            FusionModel::Mlp(train_mlp(train, &stage.mlp, spec)?)
        }
        ModelKind::Anfis => FusionModel::Anfis(train_anfis(train, &or.thresholds, &stage.anfis)?),
    })
}

/// A persisted fusion model with the inputs it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub combo: Combo,
    pub feature_type: FeatureType,
    pub thresholds: Vec<DtaThreshold>,
    pub fusion: FusionModel,
}

impl ModelFile {
    pub fn new(combo: Combo, feature_type: FeatureType, train: &[FeatureVector], kind: ModelKind, stage: &FusionStage) -> Result<Self> {
        let thresholds = OrGateModel::fit(train, feature_type)?.thresholds;
        Self::with_thresholds(combo, feature_type, train, thresholds, kind, stage)
    }

    /// Train on `train` using previously fitted per-class thresholds.
    pub fn with_thresholds(
        combo: Combo,
        feature_type: FeatureType,
        train: &[FeatureVector],
        thresholds: Vec<DtaThreshold>,
        kind: ModelKind,
        stage: &FusionStage,
    ) -> Result<Self> {
        if let Some(t) = thresholds.iter().find(|t| t.feature_type != feature_type) {
            return Err(Error::InvalidInput(format!(
                "threshold for {} was fitted on {}, model uses {}",
                t.class,
                t.feature_type.as_str(),
                feature_type.as_str()
            )));
        }
        Ok(Self {
            format_version: FORMAT_VERSION,
            combo,
            feature_type,
            fusion: train_fusion_with(train, kind, thresholds.clone(), stage)?,
            thresholds,
        })
    }

    pub fn apply(&self, features: &[CandidateFeatures]) -> Result<Vec<Decision>> {
        let vectors = feature_vectors(features, self.combo, self.feature_type)?;
        fuse_candidates(&vectors, &self.fusion)
    }
}

/// Everything derived from one synthetic world.
pub struct ScenarioRun {
    pub world: SyntheticWorld,
    pub fields: BTreeMap<ObjectClass, DetectionField>,
    pub site_clusters: Vec<Cluster>,
    /// Labeled scan candidates in site-cluster rank order.
    pub candidates: Vec<Candidate>,
    /// Truth sites no candidate matched.
    pub missed_sites: usize,
    pub scanner: TileScanner,
    pub features: Vec<CandidateFeatures>,
}

pub fn run_world(world: SyntheticWorld, cfg: &Config) -> Result<ScenarioRun> {
    let fields = build_fields(&world.detections, cfg)?;
    let site_field = fields
        .get(&ObjectClass::Site)
        .ok_or_else(|| Error::invalid("no site detections"))?;
    let site_clusters = cfg.site.params().run(site_field)?;
    let mut candidates = candidates_from_clusters(&site_clusters);
    let missed_sites = label_candidates(&mut candidates, &world.sites, cfg.features.match_radius, &cfg.distance);
    let scanner = component_scanner(&fields, cfg)?;
    let features = extract_all(&scanner, &candidates, cfg.features.radius)?;
    Ok(ScenarioRun {
        world,
        fields,
        site_clusters,
        candidates,
        missed_sites,
        scanner,
        features,
    })
}

pub fn run_scenario(scenario: &Scenario, cfg: &Config) -> Result<ScenarioRun> {
    run_world(generate(scenario)?, cfg)
}

/// Training features from a separately seeded world: its labeled scan
/// candidates plus site-centre and offset pseudo-candidates.
pub fn training_features(cfg: &Config) -> Result<Vec<CandidateFeatures>> {
    let scenario = Scenario {
        seed: cfg.synth.seed.wrapping_add(cfg.training_seed_offset),
        ..cfg.synth.clone()
    };
    let run = run_scenario(&scenario, cfg)?;
    let offset = run.candidates.len() as u64;
    let pseudo: Vec<Candidate> = make_training_set(&run.world)
        .into_iter()
        .map(|c| Candidate { id: c.id + offset, ..c })
        .collect();
    let mut out = run.features;
    out.extend(extract_all(&run.scanner, &pseudo, cfg.features.radius)?);
    Ok(out)
}

fn decisions_metrics(decisions: &[Decision], candidates: &[Candidate], missed: usize) -> Result<Metrics> {
    let d: BTreeMap<u64, bool> = decisions.iter().map(|d| (d.candidate_id, d.decision)).collect();
    let t: BTreeMap<u64, bool> = candidates.iter().map(|c| (c.id, c.label.unwrap_or(false))).collect();
    let m = confusion(&d, &t)?;
    Ok(Metrics::from_counts(m.tp, m.fp, m.fn_ + missed as u64, m.tn))
}

/// Rank candidates with `weights` and return the ranking and mean TP rank.
pub fn rank_candidates(
    candidates: &[Candidate],
    components: &ComponentScores,
    weights: &WeightProfile,
    radius: f64,
) -> Result<(Vec<RankedCandidate>, Option<f64>)> {
    let scores = fused_scores(candidates, components, weights, radius)?;
    let scored: Vec<(u64, f64)> = candidates.iter().map(|c| c.id).zip(scores).collect();
    let labels: BTreeMap<u64, bool> = candidates
        .iter()
        .filter_map(|c| c.label.map(|l| (c.id, l)))
        .collect();
    let ranked = rerank(&scored, Some(&labels));
    let tps: BTreeSet<u64> = labels.iter().filter(|(_, &l)| l).map(|(&id, _)| id).collect();
    let avg = if tps.is_empty() { None } else { Some(avg_tp_rank(&ranked, &tps)?) };
    Ok((ranked, avg))
}

/// Both workflows on the configured scenario: decision fusion against the
/// site-only baseline, and site-only versus weighted re-ranking.
pub fn run_experiment(cfg: &Config) -> Result<ExperimentReport> {
    cfg.validate()?;
    let test = run_scenario(&cfg.synth, cfg)?;
    let train = training_features(cfg)?;
    let area = cfg.area_km2();
    let mut report = ExperimentReport::new("synthetic", serde_json::to_value(cfg)?, Some(area));

    let keep_all: Vec<Decision> = test
        .candidates
        .iter()
        .map(|c| Decision {
            candidate_id: c.id,
            decision: true,
            score: c.site_score,
        })
        .collect();
    let baseline = decisions_metrics(&keep_all, &test.candidates, test.missed_sites)?.with_area(area)?;
    report.push("baseline", baseline);

    let fusion = &cfg.fusion;
    let combo = fusion.combo;
    let ft = fusion.feature_type;
    let train_vectors = feature_vectors(&train, combo, ft)?;
    let test_vectors = feature_vectors(&test.features, combo, ft)?;
    for kind in [ModelKind::Or, ModelKind::Mlp, ModelKind::Anfis] {
        let name = format!("{}:{}:{}", kind.as_str(), combo, ft.as_str());
        match train_fusion(&train_vectors, kind, ft, fusion) {
            Ok(model) => {
                let decisions = fuse_candidates(&test_vectors, &model)?;
                let m = decisions_metrics(&decisions, &test.candidates, test.missed_sites)?.with_area(area)?;
                let m = if baseline.errors() > 0 { m.with_baseline(&baseline)? } else { m };
                report.push(name, m);
            }
            Err(e) => report.notes.push(format!("{name} not trained: {e}")),
        }
    }

    let clusters = component_clusters(&test.fields, cfg)?;
    let components = ComponentScores::new(&clusters, cfg.distance, cfg.rank.radius)?;
    let profiles = [
        ("rank:site-only", WeightProfile::site_only()),
        ("rank:uniform", WeightProfile::uniform()),
        ("rank:configured", cfg.rank.weights.resolve()?),
    ];
    for (name, w) in profiles {
        let (_, avg) = rank_candidates(&test.candidates, &components, &w, cfg.rank.radius)?;
        report.push(name, Metrics { avg_tp_rank: avg, ..baseline });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Point;
    use crate::synth::{Pad, Occupancy};

    fn site(id: u64, x: f64, y: f64) -> SiteTruth {
        SiteTruth {
            id,
            center: Point::new(x, y),
            pads: vec![Pad {
                location: Point::new(x, y),
                occupancy: Occupancy::Empty,
            }],
            label: true,
        }
    }

    fn cand(id: u64, x: f64, y: f64) -> Candidate {
        Candidate {
            id,
            location: Point::new(x, y),
            site_score: 0.0,
            label: None,
            source: CandidateSource::Scan,
        }
    }

    #[test]
    fn matching_is_one_to_one() {
        let truth = vec![site(0, 0.0, 0.0), site(1, 10_000.0, 0.0)];
        let mut c = vec![cand(0, 50.0, 0.0), cand(1, 10.0, 0.0), cand(2, 5_000.0, 0.0)];
        let missed = label_candidates(&mut c, &truth, 300.0, &DistanceModel::Planar);
        assert_eq!(missed, 1);
        let labels: Vec<Option<bool>> = c.iter().map(|c| c.label).collect();
        assert_eq!(labels, vec![Some(false), Some(true), Some(false)]);
    }

    #[test]
    fn match_radius_is_strict() {
        let truth = vec![site(0, 0.0, 0.0)];
        let mut c = vec![cand(0, 300.0, 0.0)];
        assert_eq!(label_candidates(&mut c, &truth, 300.0, &DistanceModel::Planar), 1);
        assert_eq!(c[0].label, Some(false));
    }

    fn vectors() -> Vec<FeatureVector> {
        (0..8)
            .map(|i| FeatureVector {
                candidate_id: i,
                classes: vec![ObjectClass::Tel, ObjectClass::Missile],
                values: vec![(i % 4) as f64, (i % 3) as f64],
                label: Some(i % 4 >= 2),
            })
            .collect()
    }

    #[test]
    fn injected_thresholds_must_match_inputs() {
        let train = vectors();
        let stage = FusionStage::default();
        let fitted = OrGateModel::fit(&train, FeatureType::ClusterCount).unwrap().thresholds;
        let a = ModelFile::new(Combo::All5, FeatureType::ClusterCount, &train, ModelKind::Or, &stage).unwrap();
        let b = ModelFile::with_thresholds(Combo::All5, FeatureType::ClusterCount, &train, fitted.clone(), ModelKind::Or, &stage)
            .unwrap();
        assert_eq!(a, b);

        let reversed: Vec<DtaThreshold> = fitted.iter().rev().copied().collect();
        assert!(train_fusion_with(&train, ModelKind::Or, reversed, &stage).is_err());
        assert!(ModelFile::with_thresholds(Combo::All5, FeatureType::RawCount, &train, fitted, ModelKind::Or, &stage).is_err());
    }
}

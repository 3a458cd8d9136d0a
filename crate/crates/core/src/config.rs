//! Experiment configuration: one JSON document with a section per stage.
//!
//! Every section has defaults, so `{}` is a complete configuration. Unknown
//! keys anywhere in the document are reported together, with their paths.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cluster::{ClusterParams, PenaltyMode};
use crate::error::{Error, Result};
use crate::eval::FORMAT_VERSION;
use crate::features::FeatureType;
use crate::field::ObjectClass;
use crate::fusion::{AnfisConfig, Combo, MlpConfig};
use crate::geo::DistanceModel;
use crate::rank::{WeightProfile, DEFAULT_FUSION_RADIUS};
use crate::synth::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiteStage {
    pub alpha: f64,
    pub aperture_radius: f64,
    pub stride: f64,
    pub penalty: PenaltyMode,
}

impl Default for SiteStage {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            aperture_radius: 300.0,
            stride: 75.0,
            penalty: PenaltyMode::Truncate,
        }
    }
}

impl SiteStage {
    pub fn params(&self) -> ClusterParams {
        ClusterParams::new(self.aperture_radius, self.alpha, self.stride, self.penalty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComponentStage {
    pub alpha: f64,
    pub aperture_radius: f64,
    pub penalty: PenaltyMode,
    /// Scan stride per component class, meters.
    pub strides: BTreeMap<ObjectClass, f64>,
}

impl Default for ComponentStage {
    fn default() -> Self {
        Self {
            alpha: 0.99,
            aperture_radius: 32.0,
            penalty: PenaltyMode::Truncate,
            strides: BTreeMap::from([
                (ObjectClass::EmptyLp, 16.0),
                (ObjectClass::ComboLp, 16.0),
                (ObjectClass::Missile, 8.0),
                (ObjectClass::Tel, 8.0),
                (ObjectClass::TelGroup, 16.0),
            ]),
        }
    }
}

impl ComponentStage {
    pub fn params(&self, class: ObjectClass) -> Result<ClusterParams> {
        let stride = *self
            .strides
            .get(&class)
            .ok_or_else(|| Error::invalid(format!("no stride configured for {class}")))?;
        Ok(ClusterParams::new(self.aperture_radius, self.alpha, stride, self.penalty))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureStage {
    /// Features count evidence strictly within this distance, meters.
    pub radius: f64,
    /// Side of the square re-scan tile around each candidate, meters.
    pub tile_size: f64,
    /// Truth sites match candidates within this distance, meters.
    pub match_radius: f64,
}

impl Default for FeatureStage {
    fn default() -> Self {
        Self {
            radius: 150.0,
            tile_size: 640.0,
            match_radius: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Or,
    Mlp,
    Anfis,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Or => "or",
            ModelKind::Mlp => "mlp",
            ModelKind::Anfis => "anfis",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "or" => Ok(ModelKind::Or),
            "mlp" => Ok(ModelKind::Mlp),
            "anfis" => Ok(ModelKind::Anfis),
            other => Err(Error::invalid(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionStage {
    pub model: ModelKind,
    pub combo: Combo,
    pub feature_type: FeatureType,
    /// Rescale MLP inputs by the per-class thresholds.
    pub normalize: bool,
    pub mlp: MlpConfig,
    pub anfis: AnfisConfig,
}

impl Default for FusionStage {
    fn default() -> Self {
        Self {
            model: ModelKind::Mlp,
            combo: Combo::All5,
            feature_type: FeatureType::ClusterCount,
            normalize: false,
            mlp: MlpConfig::default(),
            anfis: AnfisConfig::default(),
        }
    }
}

/// A named built-in profile or explicit weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    Named(String),
    Custom(WeightProfile),
}

impl WeightsSpec {
    pub fn resolve(&self) -> Result<WeightProfile> {
        let w = match self {
            WeightsSpec::Named(name) => name.parse()?,
            WeightsSpec::Custom(w) => *w,
        };
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankStage {
    pub radius: f64,
    pub weights: WeightsSpec,
}

impl Default for RankStage {
    fn default() -> Self {
        Self {
            radius: DEFAULT_FUSION_RADIUS,
            weights: WeightsSpec::Named("expert".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalStage {
    /// Area for error densities; the scenario AOI when absent.
    pub area_km2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub format_version: u32,
    pub distance: DistanceModel,
    pub synth: Scenario,
    /// Seed of the separate training scenario is `synth.seed + training_seed_offset`.
    pub training_seed_offset: u64,
    pub site: SiteStage,
    pub components: ComponentStage,
    pub features: FeatureStage,
    pub fusion: FusionStage,
    pub rank: RankStage,
    pub eval: EvalStage,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            distance: DistanceModel::Planar,
            synth: Scenario::default(),
            training_seed_offset: 1,
            site: SiteStage::default(),
            components: ComponentStage::default(),
            features: FeatureStage::default(),
            fusion: FusionStage::default(),
            rank: RankStage::default(),
            eval: EvalStage::default(),
        }
    }
}

/// Paths whose contents vary by variant and are left to the typed parser.
const OPAQUE: &[&str] = &["distance", "rank.weights"];

fn unknown_keys(given: &Value, known: &Value, path: &str, out: &mut Vec<String>) {
    if OPAQUE.contains(&path) {
        return;
    }
    let (Value::Object(g), Value::Object(k)) = (given, known) else {
        return;
    };
    for (key, value) in g {
        let sub = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
        match k.get(key) {
            Some(kv) => unknown_keys(value, kv, &sub, out),
            None => out.push(format!("unknown key '{sub}'")),
        }
    }
}

impl Config {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let given: Value = serde_json::from_str(text)?;
        let known = serde_json::to_value(Config::default())?;
        let mut problems = Vec::new();
        unknown_keys(&given, &known, "", &mut problems);
        if !problems.is_empty() {
            return Err(Error::Config { problems });
        }
        let cfg: Config = serde_json::from_value(given).map_err(|e| Error::Config {
            problems: vec![e.to_string()],
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            context: format!("reading config {}", path.display()),
            source: e,
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.format_version != FORMAT_VERSION {
            problems.push(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        let mut collect = |section: &str, r: Result<()>| match r {
            Ok(()) => {}
            Err(Error::Config { problems: p }) => problems.extend(p.into_iter().map(|m| format!("{section}: {m}"))),
            Err(e) => problems.push(format!("{section}: {e}")),
        };
        collect("distance", self.distance.validate());
        collect("synth", self.synth.validate());
        collect("site", self.site.params().validate());
        for class in ObjectClass::COMPONENTS {
            collect("components", self.components.params(class).and_then(|p| p.validate()));
        }
        for (name, v) in [
            ("features.radius", self.features.radius),
            ("features.tile_size", self.features.tile_size),
            ("features.match_radius", self.features.match_radius),
            ("rank.radius", self.rank.radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                problems.push(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(a) = self.eval.area_km2 {
            if !(a.is_finite() && a > 0.0) {
                problems.push(format!("eval.area_km2 must be positive, got {a}"));
            }
        }
        let mut collect = |section: &str, r: Result<()>| match r {
            Ok(()) => {}
            Err(Error::Config { problems: p }) => problems.extend(p.into_iter().map(|m| format!("{section}: {m}"))),
            Err(e) => problems.push(format!("{section}: {e}")),
        };
        collect("fusion.mlp", self.fusion.mlp.validate());
        collect("rank.weights", self.rank.weights.resolve().map(|_| ()));
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }

    /// Area used for error densities.
    pub fn area_km2(&self) -> f64 {
        self.eval.area_km2.unwrap_or_else(|| self.synth.aoi.area_km2())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_defaults() {
        let c = Config::from_json_str("{}").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.site.alpha, 0.9);
        assert_eq!(c.site.aperture_radius, 300.0);
        assert_eq!(c.components.alpha, 0.99);
        assert_eq!(c.components.aperture_radius, 32.0);
        assert_eq!(c.features.radius, 150.0);
        assert_eq!(c.rank.weights.resolve().unwrap(), WeightProfile::expert());
    }

    #[test]
    fn every_unknown_key_is_listed() {
        let err = Config::from_json_str(r#"{"site": {"alpah": 0.5, "stride": 75}, "bogus": 1, "fusion": {"mlp": {"lr": 1}}}"#)
            .unwrap_err();
        match err {
            Error::Config { problems } => {
                assert_eq!(problems.len(), 3, "{problems:?}");
                let all = problems.join("\n");
                assert!(all.contains("site.alpah"));
                assert!(all.contains("bogus"));
                assert!(all.contains("fusion.mlp.lr"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn variant_sections_accepted() {
        let c = Config::from_json_str(
            r#"{"distance": {"kind": "haversine", "sphere_radius": 6371008.8},
                "rank": {"weights": {"site": 1, "empty_lp": 0, "combo_lp": 2, "missile": 0, "tel": 0, "tel_group": 0}},
                "site": {"penalty": "exp"}}"#,
        )
        .unwrap();
        assert_eq!(c.rank.weights.resolve().unwrap().combo_lp, 2.0);
        assert_eq!(c.site.penalty, PenaltyMode::ExpDecay);
    }

    #[test]
    fn invalid_values_reported_together() {
        let err = Config::from_json_str(r#"{"site": {"alpha": 1.5}, "features": {"radius": -1}, "rank": {"weights": "fancy"}}"#)
            .unwrap_err();
        match err {
            Error::Config { problems } => assert_eq!(problems.len(), 3, "{problems:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let c = Config::default();
        assert_eq!(Config::from_json_str(&c.to_json().unwrap()).unwrap(), c);
    }
}

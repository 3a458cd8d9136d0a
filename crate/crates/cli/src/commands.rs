//! Subcommand implementations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use sitefusion::cluster::{Cluster, ClusterParams};
use sitefusion::config::{Config, WeightsSpec};
use sitefusion::dta::{sweep_curve_with, DtaThreshold, SweepDomain, SweepRow};
use sitefusion::eval::{confusion, ExperimentReport, Metrics, FORMAT_VERSION};
use sitefusion::features::{Candidate, CandidateFeatures, FeatureType};
use sitefusion::field::{ObjectClass, RawDetection};
use sitefusion::io::{
    feature_rows, features_from_rows, metrics_rows, read_csv, read_json, write_csv, write_json, CandidateRow,
    ClusterRow, DecisionRow, DetectionRow, FeatureRow, TruthRow,
};
use sitefusion::pipeline::{
    build_fields, candidates_from_clusters, component_clusters, component_scanner, extract_all, feature_vectors,
    label_candidates, rank_candidates, run_experiment, run_world, split_by_class, training_features, ModelFile,
};
use sitefusion::rank::{ComponentScores, WeightProfile};
use sitefusion::synth::{generate, make_training_set, Scenario, SiteTruth};
use sitefusion::{Error, Result};

use crate::plot::sweep_svg;
use crate::{
    Cli, ClusterArgs, Command, DtaArgs, EvalArgs, FeaturesArgs, FuseArgs, PipelineArgs, RankArgs, SweepPlotArgs,
    SynthArgs,
};

/// Per-class thresholds as written by `dta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ThresholdFile {
    format_version: u32,
    feature_type: FeatureType,
    thresholds: Vec<DtaThreshold>,
}

/// JSON report of one command: the effective configuration plus results.
#[derive(Serialize)]
struct CommandReport<'a, T: Serialize> {
    format_version: u32,
    command: &'static str,
    config: &'a Config,
    #[serde(flatten)]
    body: T,
}

fn write_report<T: Serialize>(dir: &Path, command: &'static str, cfg: &Config, body: T) -> Result<()> {
    let report = CommandReport {
        format_version: FORMAT_VERSION,
        command,
        config: cfg,
        body,
    };
    write_json(&dir.join(format!("{command}_report.json")), &report)
}

fn output_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        context: format!("creating {}", path.display()),
        source,
    })?;
    Ok(path.to_path_buf())
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.synth.seed = seed;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Synth(a) => synth(&mut cfg, cli.seed, a),
        Command::Cluster(a) => cluster(&mut cfg, a),
        Command::Features(a) => features(&cfg, a),
        Command::Dta(a) => dta(&mut cfg, a),
        Command::Fuse(a) => fuse(&mut cfg, a),
        Command::Rank(a) => rank(&mut cfg, a),
        Command::Eval(a) => eval(&mut cfg, a),
        Command::SweepPlot(a) => sweep_plot(&mut cfg, a),
        Command::Pipeline(a) => pipeline(&mut cfg, a),
    }
}

fn read_detections(path: &Path) -> Result<Vec<RawDetection>> {
    Ok(read_csv::<DetectionRow>(path)?.into_iter().map(RawDetection::from).collect())
}

fn read_candidates(path: &Path) -> Result<Vec<Candidate>> {
    Ok(read_csv::<CandidateRow>(path)?.into_iter().map(Candidate::from).collect())
}

fn read_features(path: &Path) -> Result<Vec<CandidateFeatures>> {
    features_from_rows(read_csv::<FeatureRow>(path)?)
}

fn candidate_rows(candidates: &[Candidate]) -> Vec<CandidateRow> {
    candidates.iter().map(CandidateRow::from).collect()
}

fn cluster_rows<'a>(clusters: impl IntoIterator<Item = &'a Cluster>) -> Vec<ClusterRow> {
    clusters.into_iter().map(ClusterRow::from).collect()
}

fn sweep_domain(ft: FeatureType) -> SweepDomain {
    if ft.is_integer() {
        SweepDomain::Integer
    } else {
        SweepDomain::Observed
    }
}

/// Values of one class and the candidate labels, which must all be present.
fn class_column(features: &[CandidateFeatures], class: ObjectClass, ft: FeatureType) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut values = Vec::with_capacity(features.len());
    let mut labels = Vec::with_capacity(features.len());
    for f in features {
        values.push(f.value(class, ft)?);
        labels.push(f.label.ok_or_else(|| {
            Error::InvalidInput(format!("candidate {} is unlabeled", f.candidate_id))
        })?);
    }
    Ok((values, labels))
}

fn resolve_weights(arg: &str) -> Result<WeightsSpec> {
    if arg.parse::<WeightProfile>().is_ok() {
        return Ok(WeightsSpec::Named(arg.to_string()));
    }
    let path = Path::new(arg);
    if !path.is_file() {
        return Err(Error::InvalidInput(format!(
            "weights '{arg}' is neither uniform, expert, site-only nor a readable file"
        )));
    }
    let w: WeightProfile = read_json(path)?;
    w.validate()?;
    Ok(WeightsSpec::Custom(w))
}

// ---------------------------------------------------------------- synth

fn synth(cfg: &mut Config, seed: Option<u64>, a: &SynthArgs) -> Result<()> {
    if let Some(path) = &a.scenario {
        cfg.synth = read_json::<Scenario>(path)?;
        if let Some(seed) = seed {
            cfg.synth.seed = seed;
        }
    }
    cfg.validate()?;
    let dir = output_dir(&a.output)?;
    let world = generate(&cfg.synth)?;
    let detections: Vec<DetectionRow> = world.detections.values().flatten().map(DetectionRow::from).collect();
    let truth: Vec<TruthRow> = world.sites.iter().map(TruthRow::from).collect();
    let pseudo = make_training_set(&world);
    write_csv(&dir.join("detections.csv"), &detections)?;
    write_csv(&dir.join("truth.csv"), &truth)?;
    write_csv(&dir.join("pseudo_candidates.csv"), &candidate_rows(&pseudo))?;
    let counts: BTreeMap<ObjectClass, usize> = world.detections.iter().map(|(c, d)| (*c, d.len())).collect();
    write_report(
        &dir,
        "synth",
        cfg,
        json!({
            "detections": counts,
            "sites": world.sites.len(),
            "positive_sites": world.sites.iter().filter(|s| s.label).count(),
            "pseudo_candidates": pseudo.len(),
            "hotspot_centers": world.hotspot_centers,
        }),
    )
}

// ---------------------------------------------------------------- cluster

fn cluster(cfg: &mut Config, a: &ClusterArgs) -> Result<()> {
    if let Some(p) = a.penalty {
        cfg.site.penalty = p;
        cfg.components.penalty = p;
    }
    cfg.validate()?;
    let dir = output_dir(&a.output)?;
    let mut by_class = split_by_class(read_detections(&a.input)?);
    if let Some(class) = a.class {
        by_class.retain(|c, _| *c == class);
    }
    let fields = build_fields(&by_class, cfg)?;

    let mut params: BTreeMap<ObjectClass, ClusterParams> = BTreeMap::new();
    let mut clusters: BTreeMap<ObjectClass, Vec<Cluster>> = BTreeMap::new();
    for (&class, f) in &fields {
        let p = if class == ObjectClass::Site {
            cfg.site.params()
        } else {
            cfg.components.params(class)?
        };
        clusters.insert(class, p.run(f)?);
        params.insert(class, p);
    }
    write_csv(&dir.join("clusters.csv"), &cluster_rows(clusters.values().flatten()))?;

    let mut candidate_count = None;
    let mut missed = None;
    if let Some(site) = clusters.get(&ObjectClass::Site) {
        let mut candidates = candidates_from_clusters(site);
        if let Some(path) = &a.truth {
            let truth: Vec<SiteTruth> = read_csv::<TruthRow>(path)?.iter().map(SiteTruth::from).collect();
            missed = Some(label_candidates(&mut candidates, &truth, cfg.features.match_radius, &cfg.distance));
        }
        write_csv(&dir.join("candidates.csv"), &candidate_rows(&candidates))?;
        candidate_count = Some(candidates.len());
    } else if a.truth.is_some() {
        return Err(Error::InvalidInput("--truth needs site detections to label".into()));
    }

    let counts: BTreeMap<ObjectClass, usize> = clusters.iter().map(|(c, v)| (*c, v.len())).collect();
    write_report(
        &dir,
        "cluster",
        cfg,
        json!({
            "parameters": {
                "site": cfg.site.params(),
                "components": {
                    "alpha": cfg.components.alpha,
                    "aperture_radius": cfg.components.aperture_radius,
                    "penalty": cfg.components.penalty,
                    "strides": cfg.components.strides,
                },
                "feature_radius": cfg.features.radius,
                "used": params,
            },
            "clusters": counts,
            "candidates": candidate_count,
            "missed_sites": missed,
        }),
    )
}

// ---------------------------------------------------------------- features

fn features(cfg: &Config, a: &FeaturesArgs) -> Result<()> {
    cfg.validate()?;
    let dir = output_dir(&a.output)?;
    let fields = build_fields(&split_by_class(read_detections(&a.input)?), cfg)?;
    let scanner = component_scanner(&fields, cfg)?;
    let mut candidates = Vec::new();
    let mut sources = Vec::new();
    for path in &a.candidates {
        let offset = candidates.len() as u64;
        let batch = read_candidates(path)?;
        sources.push(json!({ "file": path.display().to_string(), "count": batch.len(), "id_offset": offset }));
        candidates.extend(batch.into_iter().map(|c| Candidate { id: c.id + offset, ..c }));
    }
    let mut seen = BTreeSet::new();
    if let Some(c) = candidates.iter().find(|c| !seen.insert(c.id)) {
        return Err(Error::IdMismatch(format!("candidate id {} appears twice", c.id)));
    }
    let features = extract_all(&scanner, &candidates, cfg.features.radius)?;
    write_csv(&dir.join("features.csv"), &feature_rows(&features))?;
    write_report(
        &dir,
        "features",
        cfg,
        json!({ "candidates": sources, "classes": scanner.classes() }),
    )
}

// ---------------------------------------------------------------- dta

fn dta(cfg: &mut Config, a: &DtaArgs) -> Result<()> {
    if let Some(c) = a.combo {
        cfg.fusion.combo = c;
    }
    if let Some(ft) = a.feature_type {
        cfg.fusion.feature_type = ft;
    }
    cfg.validate()?;
    let dir = output_dir(&a.output)?;
    let features = read_features(&a.input)?;
    let ft = cfg.fusion.feature_type;
    let classes = match a.class {
        Some(c) => vec![c],
        None => cfg.fusion.combo.classes(),
    };
    let mut thresholds = Vec::new();
    for class in classes {
        let (values, labels) = class_column(&features, class, ft)?;
        let t = DtaThreshold::fit(class, ft, &values, &labels)?;
        let curve = sweep_curve_with(&values, &labels, sweep_domain(ft))?;
        write_csv(&dir.join(format!("sweep_{class}.csv")), &curve)?;
        thresholds.push(t);
    }
    let file = ThresholdFile {
        format_version: FORMAT_VERSION,
        feature_type: ft,
        thresholds,
    };
    write_json(&dir.join("thresholds.json"), &file)?;
    write_report(&dir, "dta", cfg, json!({ "thresholds": file.thresholds }))
}

// ---------------------------------------------------------------- sweep-plot

fn sweep_plot(cfg: &mut Config, a: &SweepPlotArgs) -> Result<()> {
    if let Some(ft) = a.feature_type {
        cfg.fusion.feature_type = ft;
    }
    cfg.validate()?;
    let dir = output_dir(&a.output)?;
    let features = read_features(&a.input)?;
    let ft = cfg.fusion.feature_type;
    let (values, labels) = class_column(&features, a.class, ft)?;
    let curve: Vec<SweepRow> = sweep_curve_with(&values, &labels, sweep_domain(ft))?;
    let fitted = DtaThreshold::fit(a.class, ft, &values, &labels)?;
    write_csv(&dir.join("sweep.csv"), &curve)?;
    let title = format!("{} {}", a.class, ft);
    fs::write(dir.join("sweep.svg"), sweep_svg(&title, &curve, fitted.threshold)).map_err(|source| Error::Io {
        context: format!("writing {}", dir.join("sweep.svg").display()),
        source,
    })?;
    write_report(&dir, "sweep_plot", cfg, json!({ "fitted": fitted }))
}

// ---------------------------------------------------------------- fuse

fn load_thresholds(path: &Path, classes: &[ObjectClass], ft: FeatureType) -> Result<Vec<DtaThreshold>> {
    let file: ThresholdFile = read_json(path)?;
    if file.feature_type != ft {
        return Err(Error::InvalidInput(format!(
            "{} holds {} thresholds, model uses {}",
            path.display(),
            file.feature_type,
            ft
        )));
    }
    classes
        .iter()
        .map(|&class| {
            file.thresholds
                .iter()
                .find(|t| t.class == class)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("{} has no threshold for {class}", path.display())))
        })
        .collect()
}

fn fuse(cfg: &mut Config, a: &FuseArgs) -> Result<()> {
    if let Some(m) = a.model {
        cfg.fusion.model = m;
    }
    if let Some(c) = a.combo {
        cfg.fusion.combo = c;
    }
    if let Some(ft) = a.feature_type {
        cfg.fusion.feature_type = ft;
    }
    cfg.validate()?;
    let dir = output_dir(&a.output)?;
    let (model, trained_on) = match (&a.model_file, &a.train) {
        (Some(path), _) => {
            let m: ModelFile = read_json(path)?;
            if m.format_version != FORMAT_VERSION {
                return Err(Error::InvalidInput(format!(
                    "{} has format_version {}, expected {FORMAT_VERSION}",
                    path.display(),
                    m.format_version
                )));
            }
            (m, None)
        }
        (None, Some(train)) => {
            let f = &cfg.fusion;
            let vectors = feature_vectors(&read_features(train)?, f.combo, f.feature_type)?;
            let m = match &a.thresholds {
                Some(path) => {
                    let t = load_thresholds(path, &f.combo.classes(), f.feature_type)?;
                    ModelFile::with_thresholds(f.combo, f.feature_type, &vectors, t, f.model, f)?
                }
                None => ModelFile::new(f.combo, f.feature_type, &vectors, f.model, f)?,
            };
            (m, Some(vectors.len()))
        }
        (None, None) => return Err(Error::InvalidInput("fuse needs --train or --model-file".into())),
    };
    let decisions = model.apply(&read_features(&a.input)?)?;
    let name = format!("{}:{}:{}", model.fusion.name(), model.combo, model.feature_type);
    let rows: Vec<DecisionRow> = decisions
        .iter()
        .map(|d| DecisionRow::new(d, &name, model.combo, model.feature_type))
        .collect();
    write_json(&dir.join("model.json"), &model)?;
    write_csv(&dir.join("decisions.csv"), &rows)?;
    write_report(
        &dir,
        "fuse",
        cfg,
        json!({
            "model": name,
            "training_candidates": trained_on,
            "decided": rows.len(),
            "kept": rows.iter().filter(|r| r.decision).count(),
        }),
    )
}

// ---------------------------------------------------------------- rank

fn rank(cfg: &mut Config, a: &RankArgs) -> Result<()> {
    if let Some(w) = &a.weights {
        cfg.rank.weights = resolve_weights(w)?;
    }
    cfg.validate()?;
    let dir = output_dir(&a.output)?;
    let candidates = read_candidates(&a.input)?;
    let mut clusters: BTreeMap<ObjectClass, Vec<Cluster>> = BTreeMap::new();
    for row in read_csv::<ClusterRow>(&a.clusters)? {
        clusters.entry(row.class).or_default().push(row.to_cluster());
    }
    let components = ComponentScores::new(&clusters, cfg.distance, cfg.rank.radius)?;
    let weights = cfg.rank.weights.resolve()?;
    let (ranked, avg) = rank_candidates(&candidates, &components, &weights, cfg.rank.radius)?;
    let (_, site_only) = rank_candidates(&candidates, &components, &WeightProfile::site_only(), cfg.rank.radius)?;
    write_csv(&dir.join("ranked.csv"), &ranked)?;
    write_report(
        &dir,
        "rank",
        cfg,
        json!({
            "weights": weights,
            "candidates": ranked.len(),
            "avg_tp_rank": avg,
            "site_only_avg_tp_rank": site_only,
        }),
    )
}

// ---------------------------------------------------------------- eval

fn eval(cfg: &mut Config, a: &EvalArgs) -> Result<()> {
    if let Some(area) = a.area {
        cfg.eval.area_km2 = Some(area);
    }
    cfg.validate()?;
    let dir = output_dir(&a.output)?;
    let candidates = read_candidates(&a.input)?;
    let truth: BTreeMap<u64, bool> = candidates
        .iter()
        .map(|c| {
            c.label
                .map(|l| (c.id, l))
                .ok_or_else(|| Error::InvalidInput(format!("candidate {} is unlabeled", c.id)))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<DecisionRow> = read_csv(&a.decisions)?;
    let names: BTreeSet<&str> = rows.iter().map(|r| r.model.as_str()).collect();
    if names.len() > 1 {
        return Err(Error::InvalidInput(format!("decisions mix models {names:?}")));
    }
    let name = names.into_iter().next().unwrap_or("decisions").to_string();
    let decisions: BTreeMap<u64, bool> = if rows.is_empty() {
        truth.keys().map(|&id| (id, false)).collect()
    } else {
        rows.iter().map(|r| (r.candidate_id, r.decision)).collect()
    };

    let missed = match &a.truth {
        Some(path) => {
            let sites = read_csv::<TruthRow>(path)?.iter().filter(|s| s.label).count();
            let matched = truth.values().filter(|&&l| l).count();
            sites.saturating_sub(matched) as u64
        }
        None => 0,
    };
    let with_missed = |m: Metrics| Metrics::from_counts(m.tp, m.fp, m.fn_ + missed, m.tn);
    let area = cfg.area_km2();
    let keep_all: BTreeMap<u64, bool> = truth.keys().map(|&id| (id, true)).collect();
    let baseline = with_missed(confusion(&keep_all, &truth)?).with_area(area)?;
    let mut m = with_missed(confusion(&decisions, &truth)?).with_area(area)?;
    if baseline.errors() > 0 {
        m = m.with_baseline(&baseline)?;
    }
    let mut report = ExperimentReport::new("eval", serde_json::to_value(&*cfg)?, Some(area));
    report.push("baseline", baseline);
    report.push(name, m);
    if missed > 0 {
        report.notes.push(format!("{missed} positive sites have no candidate and count as misses"));
    }
    write_json(&dir.join("report.json"), &report)?;
    write_csv(&dir.join("report.csv"), &metrics_rows(&report))
}

// ---------------------------------------------------------------- pipeline

fn pipeline(cfg: &mut Config, a: &PipelineArgs) -> Result<()> {
    if let Some(p) = a.penalty {
        cfg.site.penalty = p;
        cfg.components.penalty = p;
    }
    if let Some(m) = a.model {
        cfg.fusion.model = m;
    }
    if let Some(c) = a.combo {
        cfg.fusion.combo = c;
    }
    if let Some(ft) = a.feature_type {
        cfg.fusion.feature_type = ft;
    }
    if let Some(w) = &a.weights {
        cfg.rank.weights = resolve_weights(w)?;
    }
    cfg.validate()?;
    let dir = output_dir(&a.output)?;

    let world = generate(&cfg.synth)?;
    let detections: Vec<DetectionRow> = world.detections.values().flatten().map(DetectionRow::from).collect();
    let truth: Vec<TruthRow> = world.sites.iter().map(TruthRow::from).collect();
    write_csv(&dir.join("detections.csv"), &detections)?;
    write_csv(&dir.join("truth.csv"), &truth)?;

    let run = run_world(world, cfg)?;
    let components = component_clusters(&run.fields, cfg)?;
    write_csv(
        &dir.join("clusters.csv"),
        &cluster_rows(run.site_clusters.iter().chain(components.values().flatten())),
    )?;
    write_csv(&dir.join("candidates.csv"), &candidate_rows(&run.candidates))?;
    write_csv(&dir.join("features.csv"), &feature_rows(&run.features))?;

    let train = training_features(cfg)?;
    write_csv(&dir.join("train_features.csv"), &feature_rows(&train))?;
    let f = &cfg.fusion;
    let vectors = feature_vectors(&train, f.combo, f.feature_type)?;
    let model = ModelFile::new(f.combo, f.feature_type, &vectors, f.model, f)?;
    let name = format!("{}:{}:{}", model.fusion.name(), model.combo, model.feature_type);
    let decisions: Vec<DecisionRow> = model
        .apply(&run.features)?
        .iter()
        .map(|d| DecisionRow::new(d, &name, model.combo, model.feature_type))
        .collect();
    write_json(&dir.join("model.json"), &model)?;
    write_csv(&dir.join("decisions.csv"), &decisions)?;

    let scores = ComponentScores::new(&components, cfg.distance, cfg.rank.radius)?;
    let weights = cfg.rank.weights.resolve()?;
    let (ranked, _) = rank_candidates(&run.candidates, &scores, &weights, cfg.rank.radius)?;
    write_csv(&dir.join("ranked.csv"), &ranked)?;

    let report = run_experiment(cfg)?;
    write_json(&dir.join("report.json"), &report)?;
    write_csv(&dir.join("report.csv"), &metrics_rows(&report))
}

//! CSV and JSON artifacts.
//!
//! Every CSV file starts with a `# format_version: N` comment line, then a
//! header row. Readers skip comment lines and report malformed rows with the
//! file name and 1-based line number.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cluster::Cluster;
use crate::dta::SweepRow;
use crate::error::{Error, Result};
use crate::eval::{ExperimentReport, FORMAT_VERSION};
use crate::features::{Candidate, CandidateFeatures, CandidateSource, ClassFeatures, FeatureType};
use crate::field::{ObjectClass, RawDetection};
use crate::fusion::{Combo, Decision};
use crate::geo::Point;
use crate::rank::RankedCandidate;
use crate::synth::SiteTruth;

fn io_err(context: String) -> impl FnOnce(std::io::Error) -> Error {
    move |source| Error::Io { context, source }
}

/// Serialize `rows` as versioned CSV.
pub fn write_csv_to<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "# format_version: {FORMAT_VERSION}").map_err(io_err("writing CSV".into()))?;
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::invalid(format!("CSV serialization failed: {e}")))?;
    }
    w.flush().map_err(io_err("writing CSV".into()))?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let f = File::create(path).map_err(io_err(format!("creating {}", path.display())))?;
    write_csv_to(f, rows)
}

/// CSV text, for tests and stdout.
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv_to(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

/// Parse versioned CSV; `name` labels errors.
pub fn read_csv_from<R: Read, T: DeserializeOwned>(input: R, name: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let parse = |line: u64, message: String| Error::Parse {
        file: name.to_path_buf(),
        line,
        message,
    };
    let mut rows = Vec::new();
    let headers = r.headers().map_err(|e| parse(line_of(&e), e.to_string()))?.clone();
    let mut record = csv::StringRecord::new();
    loop {
        match r.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                let row = record
                    .deserialize(Some(&headers))
                    .map_err(|e| parse(line, deserialize_message(&e)))?;
                rows.push(row);
            }
            Err(e) => return Err(parse(line_of(&e), e.to_string())),
        }
    }
    Ok(rows)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(io_err(format!("opening {}", path.display())))?;
    read_csv_from(f, path)
}

fn line_of(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}

fn deserialize_message(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(f) => format!("field {}: {}", f + 1, err.kind()),
            None => err.kind().to_string(),
        },
        _ => e.to_string(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(format!("writing {}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

/// `id,class,x,y,score,tile`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub id: u64,
    pub class: ObjectClass,
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub tile: Option<u64>,
}

impl From<&RawDetection> for DetectionRow {
    fn from(d: &RawDetection) -> Self {
        Self {
            id: d.id,
            class: d.class,
            x: d.location.x,
            y: d.location.y,
            score: d.score,
            tile: d.tile,
        }
    }
}

impl From<DetectionRow> for RawDetection {
    fn from(r: DetectionRow) -> Self {
        Self {
            id: r.id,
            location: Point::new(r.x, r.y),
            score: r.score,
            class: r.class,
            tile: r.tile,
        }
    }
}

/// `rank,class,score,x,y,seed_id,member_count`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub rank: usize,
    pub class: ObjectClass,
    pub score: f64,
    pub x: f64,
    pub y: f64,
    pub seed_id: u64,
    pub member_count: usize,
}

impl From<&Cluster> for ClusterRow {
    fn from(c: &Cluster) -> Self {
        Self {
            rank: c.rank,
            class: c.class,
            score: c.score,
            x: c.location.x,
            y: c.location.y,
            seed_id: c.seed_id,
            member_count: c.members.len(),
        }
    }
}

impl ClusterRow {
    /// A cluster carrying only what the CSV records.
    pub fn to_cluster(&self) -> Cluster {
        Cluster {
            id: self.rank.saturating_sub(1),
            class: self.class,
            seed_id: self.seed_id,
            location: Point::new(self.x, self.y),
            members: Vec::new(),
            raw_weighted_sum: f64::NAN,
            score: self.score,
            rank: self.rank,
        }
    }
}

/// `candidate_id,x,y,site_score,label,source`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub candidate_id: u64,
    pub x: f64,
    pub y: f64,
    pub site_score: f64,
    pub label: Option<bool>,
    pub source: CandidateSource,
}

impl From<&Candidate> for CandidateRow {
    fn from(c: &Candidate) -> Self {
        Self {
            candidate_id: c.id,
            x: c.location.x,
            y: c.location.y,
            site_score: c.site_score,
            label: c.label,
            source: c.source,
        }
    }
}

impl From<CandidateRow> for Candidate {
    fn from(r: CandidateRow) -> Self {
        Self {
            id: r.candidate_id,
            location: Point::new(r.x, r.y),
            site_score: r.site_score,
            label: r.label,
            source: r.source,
        }
    }
}

/// `candidate_id,label,class,raw_max,raw_count,cluster_count,cluster_score_sum`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub candidate_id: u64,
    pub label: Option<bool>,
    pub class: ObjectClass,
    pub raw_max: f64,
    pub raw_count: u64,
    pub cluster_count: u64,
    pub cluster_score_sum: f64,
}

/// One row per (candidate, class), candidates in input order.
pub fn feature_rows(features: &[CandidateFeatures]) -> Vec<FeatureRow> {
    features
        .iter()
        .flat_map(|f| {
            f.per_class.iter().map(move |(&class, v)| FeatureRow {
                candidate_id: f.candidate_id,
                label: f.label,
                class,
                raw_max: v.raw_max,
                raw_count: v.raw_count,
                cluster_count: v.cluster_count,
                cluster_score_sum: v.cluster_score_sum,
            })
        })
        .collect()
}

/// Regroup long-format rows, keeping first-appearance order of candidates.
pub fn features_from_rows(rows: Vec<FeatureRow>) -> Result<Vec<CandidateFeatures>> {
    let mut out: Vec<CandidateFeatures> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for r in rows {
        let i = *index.entry(r.candidate_id).or_insert_with(|| {
            out.push(CandidateFeatures {
                candidate_id: r.candidate_id,
                label: r.label,
                per_class: Default::default(),
            });
            out.len() - 1
        });
        let f = &mut out[i];
        if f.label != r.label {
            return Err(Error::invalid(format!("candidate {} has conflicting labels", r.candidate_id)));
        }
        let v = ClassFeatures {
            raw_max: r.raw_max,
            raw_count: r.raw_count,
            cluster_count: r.cluster_count,
            cluster_score_sum: r.cluster_score_sum,
        };
        if f.per_class.insert(r.class, v).is_some() {
            return Err(Error::invalid(format!(
                "candidate {} lists class {} twice",
                r.candidate_id, r.class
            )));
        }
    }
    Ok(out)
}

/// `candidate_id,decision,score,model,combo,feature_type`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub candidate_id: u64,
    pub decision: bool,
    pub score: f64,
    pub model: String,
    pub combo: Combo,
    pub feature_type: FeatureType,
}

impl DecisionRow {
    pub fn new(d: &Decision, model: &str, combo: Combo, feature_type: FeatureType) -> Self {
        Self {
            candidate_id: d.candidate_id,
            decision: d.decision,
            score: d.score,
            model: model.to_string(),
            combo,
            feature_type,
        }
    }
}

/// `rank,candidate_id,fused_score,is_tp`
pub type RankedRow = RankedCandidate;

/// `site_id,x,y,label,pad_count`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub site_id: u64,
    pub x: f64,
    pub y: f64,
    pub label: bool,
    pub pad_count: usize,
}

impl From<&SiteTruth> for TruthRow {
    fn from(s: &SiteTruth) -> Self {
        Self {
            site_id: s.id,
            x: s.center.x,
            y: s.center.y,
            label: s.label,
            pad_count: s.pads.len(),
        }
    }
}

impl From<&TruthRow> for SiteTruth {
    /// Pad geometry is not recorded in the CSV and comes back empty.
    fn from(r: &TruthRow) -> Self {
        Self {
            id: r.site_id,
            center: Point::new(r.x, r.y),
            pads: Vec::new(),
            label: r.label,
        }
    }
}

/// `threshold,tp,fp,fn,tpr,ppv,f1`
pub type SweepCsvRow = SweepRow;

/// One line of a comparison table:
/// `name,tp,fp,fn,tn,tpr,ppv,f1,error_density,relative_error_reduction,avg_tp_rank`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub name: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: Option<u64>,
    pub tpr: f64,
    pub ppv: f64,
    pub f1: f64,
    pub error_density: Option<f64>,
    pub relative_error_reduction: Option<f64>,
    pub avg_tp_rank: Option<f64>,
}

pub fn metrics_rows(report: &ExperimentReport) -> Vec<MetricsRow> {
    report
        .rows
        .iter()
        .map(|r| {
            let m = &r.metrics;
            MetricsRow {
                name: r.name.clone(),
                tp: m.tp,
                fp: m.fp,
                fn_: m.fn_,
                tn: m.tn,
                tpr: m.tpr,
                ppv: m.ppv,
                f1: m.f1,
                error_density: m.error_density,
                relative_error_reduction: m.relative_error_reduction,
                avg_tp_rank: m.avg_tp_rank,
            }
        })
        .collect()
}

//! `sitefusion`: batch driver for detection clustering, decision fusion and
//! candidate re-ranking.
//!
//! Every subcommand reads and writes the versioned CSV/JSON artifacts of the
//! `sitefusion` crate. Failures print one JSON error record on stderr and exit
//! with status 1.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sitefusion::cluster::PenaltyMode;
use sitefusion::config::ModelKind;
use sitefusion::eval::FORMAT_VERSION;
use sitefusion::features::FeatureType;
use sitefusion::field::ObjectClass;
use sitefusion::fusion::Combo;
use sitefusion::Error;

#[derive(Debug, Parser)]
#[command(name = "sitefusion", version, about = "Detection clustering, decision fusion and candidate re-ranking")]
struct Cli {
    /// Experiment configuration (JSON). Built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Scenario seed; overrides `synth.seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scenario: detections, truth sites, pseudo-candidates.
    Synth(SynthArgs),
    /// Cluster detection fields; site clusters become candidates.
    Cluster(ClusterArgs),
    /// Extract component features around candidates.
    Features(FeaturesArgs),
    /// Fit F1-optimal per-class thresholds and export their sweep curves.
    Dta(DtaArgs),
    /// Train (or load) a fusion model and decide every candidate.
    Fuse(FuseArgs),
    /// Re-rank candidates by weighted component evidence.
    Rank(RankArgs),
    /// Score decisions against candidate labels.
    Eval(EvalArgs),
    /// Threshold sweep of one class as CSV and SVG.
    SweepPlot(SweepPlotArgs),
    /// Run both workflows end to end and write every artifact.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scenario JSON; the configuration's `synth` section when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Detection CSV (`id,class,x,y,score,tile`).
    #[arg(long, short)]
    input: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
    /// Cluster only this class (site, empty_lp, combo_lp, missile, tel, tel_group).
    #[arg(long)]
    class: Option<ObjectClass>,
    /// Over-detection penalty for every class (truncate, flat, exp).
    #[arg(long)]
    penalty: Option<PenaltyMode>,
    /// Truth CSV used to label site candidates.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    /// Detection CSV holding the component classes.
    #[arg(long, short)]
    input: PathBuf,
    /// Candidate CSV; repeat to append further files, whose ids are shifted
    /// by the number of candidates before them.
    #[arg(long, required = true)]
    candidates: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct DtaArgs {
    /// Labeled feature CSV.
    #[arg(long, short)]
    input: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
    /// Fit only this class.
    #[arg(long)]
    class: Option<ObjectClass>,
    /// Classes to fit when `--class` is absent (empty+3, combo+3, all5).
    #[arg(long)]
    combo: Option<Combo>,
    /// raw-max, raw-count, cluster-count or cluster-score-sum.
    #[arg(long)]
    feature_type: Option<FeatureType>,
}

#[derive(Debug, Args)]
struct FuseArgs {
    /// Feature CSV to decide.
    #[arg(long, short)]
    input: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
    /// Labeled training feature CSV.
    #[arg(long, required_unless_present = "model_file")]
    train: Option<PathBuf>,
    /// Previously written model JSON; skips training.
    #[arg(long, conflicts_with_all = ["train", "thresholds", "model", "combo", "feature_type"])]
    model_file: Option<PathBuf>,
    /// Threshold JSON from `dta`; fitted on the training table when omitted.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// or, mlp or anfis.
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    combo: Option<Combo>,
    #[arg(long)]
    feature_type: Option<FeatureType>,
}

#[derive(Debug, Args)]
struct RankArgs {
    /// Candidate CSV.
    #[arg(long, short)]
    input: PathBuf,
    /// Cluster CSV holding the component clusters.
    #[arg(long)]
    clusters: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
    /// uniform, expert, site-only, or a JSON file of weights.
    #[arg(long)]
    weights: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Decision CSV; an empty file rejects every candidate.
    #[arg(long)]
    decisions: PathBuf,
    /// Labeled candidate CSV.
    #[arg(long, short)]
    input: PathBuf,
    /// Truth CSV; positive sites without a candidate count as misses.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Area in km² for error densities; configuration or scenario AOI otherwise.
    #[arg(long)]
    area: Option<f64>,
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SweepPlotArgs {
    /// Labeled feature CSV.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long)]
    class: ObjectClass,
    #[arg(long)]
    feature_type: Option<FeatureType>,
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long)]
    penalty: Option<PenaltyMode>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    combo: Option<Combo>,
    #[arg(long)]
    feature_type: Option<FeatureType>,
    #[arg(long)]
    weights: Option<String>,
}

fn error_record(e: &Error) -> serde_json::Value {
    let mut detail = json!({
        "kind": e.kind(),
        "message": e.to_string(),
    });
    match e {
        Error::Parse { file, line, .. } => {
            detail["file"] = json!(file.display().to_string());
            detail["line"] = json!(line);
        }
        Error::Config { problems } => detail["problems"] = json!(problems),
        _ => {}
    }
    json!({ "format_version": FORMAT_VERSION, "error": detail })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::FAILURE
        }
    }
}

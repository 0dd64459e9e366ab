//! The three commands behind the CLI: estimate, evaluate, and synth. Each
//! returns a process exit code: 0 on success, 2 on input errors, and 3 when
//! estimation finished without converging (outputs are still written).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use lee_core::estimator::{estimate, EstimateError};
use lee_core::eval::{compute_metrics, synth_generate, EvalError, MetricsReport, SynthSpec};
use lee_core::model::{ModelError, ObservationSet, Vocabulary};
use lee_core::solver::Diagnostics;

use crate::config::RunConfig;
use crate::formats::{self, FormatError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

#[derive(Error, Debug)]
pub enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(CliError::io(path))
}

#[derive(Debug)]
pub struct EstimateArgs {
    pub predictions: PathBuf,
    pub constraints: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: PathBuf,
    pub config: RunConfig,
}

#[derive(Serialize)]
struct DiagnosticsFile<'a> {
    config: &'a RunConfig,
    objective: f64,
    #[serde(flatten)]
    diagnostics: &'a Diagnostics,
}

pub fn cmd_estimate(args: &EstimateArgs) -> i32 {
    match run_estimate(args) {
        Ok(converged) => {
            if converged {
                EXIT_OK
            } else {
                eprintln!("warning: solver did not converge; outputs hold the best iterate");
                EXIT_NONCONVERGENCE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn run_estimate(args: &EstimateArgs) -> Result<bool, CliError> {
    let mut vocab = Vocabulary::new();
    let constraint_spec = match &args.constraints {
        Some(path) => formats::parse_constraints(
            formats::open(path)?,
            &path.display().to_string(),
            &mut vocab,
        )?,
        None => Default::default(),
    };
    let mut obs = formats::parse_predictions(
        formats::open(&args.predictions)?,
        &args.predictions.display().to_string(),
        &mut vocab,
    )?;
    if let Some(path) = &args.labels {
        let labels =
            formats::parse_labels(formats::open(path)?, &path.display().to_string(), &mut vocab)?;
        for ((domain, instance), label) in labels.iter() {
            obs.insert_target(domain, instance, if label { 1.0 } else { 0.0 });
        }
    }
    let ontology = constraint_spec.build(vocab.domains.len() as u32)?;
    for warning in ontology.warnings() {
        eprintln!("warning: {warning}");
    }

    let estimator_config = args.config.estimator_config().map_err(CliError::Invalid)?;
    let estimates = estimate(&obs, &ontology, &estimator_config)?;

    fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;
    let rates_path = args.out.join("error_rates.tsv");
    let mut w = create(&rates_path)?;
    formats::write_error_rates(&mut w, &estimates.error_rates, &vocab)
        .map_err(CliError::io(&rates_path))?;

    let targets_path = args.out.join("targets.tsv");
    let mut w = create(&targets_path)?;
    formats::write_targets(&mut w, &estimates.target_soft, &estimates.target_hard, &vocab)
        .map_err(CliError::io(&targets_path))?;

    let diag_path = args.out.join("diagnostics.json");
    let file = DiagnosticsFile {
        config: &args.config,
        objective: estimates.objective,
        diagnostics: &estimates.diagnostics,
    };
    let mut w = create(&diag_path)?;
    serde_json::to_writer_pretty(&mut w, &file)
        .map_err(|e| CliError::Invalid(format!("serializing diagnostics: {e}")))?;
    w.write_all(b"\n").map_err(CliError::io(&diag_path))?;

    println!(
        "{}",
        serde_json::to_string_pretty(&args.config)
            .map_err(|e| CliError::Invalid(format!("serializing config: {e}")))?
    );
    Ok(estimates.diagnostics.converged)
}

#[derive(Debug)]
pub struct EvaluateArgs {
    pub estimates: PathBuf,
    pub predictions: PathBuf,
    pub truth: PathBuf,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct NamedDomainMetrics<'a> {
    domain: &'a str,
    #[serde(flatten)]
    metrics: lee_core::eval::DomainMetrics,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    coverage: f64,
    mean_mad_error_rank: Option<f64>,
    mean_mad_error: Option<f64>,
    mean_auc_target: Option<f64>,
    per_domain: Vec<NamedDomainMetrics<'a>>,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> i32 {
    match run_evaluate(args) {
        Ok(report) => {
            if report.coverage == 0.0 {
                eprintln!("error: estimates and truth share no (domain, instance) keys");
                EXIT_INPUT
            } else {
                if report.coverage < 1.0 {
                    eprintln!(
                        "warning: only {:.1}% of keys could be evaluated",
                        report.coverage * 100.0
                    );
                }
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn run_evaluate(args: &EvaluateArgs) -> Result<MetricsReport, CliError> {
    let mut vocab = Vocabulary::new();
    let obs = formats::parse_predictions(
        formats::open(&args.predictions)?,
        &args.predictions.display().to_string(),
        &mut vocab,
    )?;
    let truth = formats::parse_labels(
        formats::open(&args.truth)?,
        &args.truth.display().to_string(),
        &mut vocab,
    )?;
    let rates_path = args.estimates.join("error_rates.tsv");
    let rates = formats::parse_error_rates(
        formats::open(&rates_path)?,
        &rates_path.display().to_string(),
        &mut vocab,
    )?;
    let targets_path = args.estimates.join("targets.tsv");
    let targets = formats::parse_targets(
        formats::open(&targets_path)?,
        &targets_path.display().to_string(),
        &mut vocab,
    )?;

    let report = compute_metrics(&rates, &targets, &obs, &truth);
    let per_domain: Vec<NamedDomainMetrics> = report
        .per_domain
        .iter()
        .map(|(&id, metrics)| NamedDomainMetrics {
            domain: vocab.domains.name(id),
            metrics: metrics.clone(),
        })
        .collect();
    let file = ReportFile {
        coverage: report.coverage,
        mean_mad_error_rank: report.mean_mad_error_rank,
        mean_mad_error: report.mean_mad_error,
        mean_auc_target: report.mean_auc_target,
        per_domain,
    };
    let mut w = create(&args.out)?;
    serde_json::to_writer_pretty(&mut w, &file)
        .map_err(|e| CliError::Invalid(format!("serializing report: {e}")))?;
    w.write_all(b"\n").map_err(CliError::io(&args.out))?;
    Ok(report)
}

#[derive(Debug)]
pub struct SynthArgs {
    pub domains: u32,
    pub classifiers: u32,
    pub instances: u32,
    pub error_min: f64,
    pub error_max: f64,
    pub constraints: Option<PathBuf>,
    pub density: f64,
    pub soft: bool,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn cmd_synth(args: &SynthArgs) -> i32 {
    match run_synth(args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn run_synth(args: &SynthArgs) -> Result<(), CliError> {
    if args.error_min > args.error_max {
        return Err(CliError::Invalid(format!(
            "error-rate range is empty: {} > {}",
            args.error_min, args.error_max
        )));
    }
    let mut vocab = Vocabulary::new();
    let constraint_spec = match &args.constraints {
        Some(path) => formats::parse_constraints(
            formats::open(path)?,
            &path.display().to_string(),
            &mut vocab,
        )?,
        None => Default::default(),
    };
    if vocab.domains.len() > args.domains as usize {
        return Err(CliError::Invalid(format!(
            "constraints name {} domains but --domains is {}",
            vocab.domains.len(),
            args.domains
        )));
    }
    for i in vocab.domains.len()..args.domains as usize {
        vocab.domain(&format!("d{i}"));
    }
    for j in 0..args.classifiers {
        vocab.classifier(&format!("c{j}"));
    }
    for i in 0..args.instances {
        vocab.instance(&format!("x{i}"));
    }
    let ontology = constraint_spec.build(args.domains)?;

    let mut spec = SynthSpec::uniform_rates(
        args.domains,
        args.classifiers,
        args.instances,
        (args.error_min, args.error_max),
        args.seed,
    );
    spec.soft = args.soft;
    spec.density = args.density;
    let (obs, truth) = synth_generate(&spec, &ontology)?;
    if args.density == 0.0 {
        eprintln!("warning: observation density 0 generates an empty predictions file");
    }

    fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;
    let predictions_path = args.out.join("predictions.tsv");
    let mut w = create(&predictions_path)?;
    formats::write_predictions(&mut w, &obs, &vocab).map_err(CliError::io(&predictions_path))?;
    let labels_path = args.out.join("labels.tsv");
    let mut w = create(&labels_path)?;
    formats::write_labels(&mut w, &truth, &vocab).map_err(CliError::io(&labels_path))?;
    Ok(())
}

/// Weighted-majority fusion of parsed predictions given estimated rates;
/// exposed for tests and downstream tooling.
pub fn weighted_majority_from_files(
    obs: &ObservationSet,
    rates: &BTreeMap<(lee_core::DomainId, lee_core::ClassifierId), f64>,
) -> BTreeMap<(lee_core::DomainId, lee_core::InstanceId), f64> {
    lee_core::estimator::combine_weighted_majority(obs, rates)
}

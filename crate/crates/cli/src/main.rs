use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lee_cli::commands::{self, EstimateArgs, EvaluateArgs, SynthArgs};
use lee_cli::config::RunConfig;

/// Estimates classifier error rates and fuses their predictions using
/// unlabeled data, guided by ensemble agreement and ontology constraints.
#[derive(Parser)]
#[command(name = "lee", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Infer error rates and fused labels from prediction files.
    Estimate(EstimateCli),
    /// Score previous estimates against ground-truth labels.
    Evaluate(EvaluateCli),
    /// Generate a synthetic benchmark with known error rates.
    Synth(SynthCli),
}

#[derive(Args)]
struct EstimateCli {
    /// Predictions file: instance<TAB>domain<TAB>classifier<TAB>value.
    #[arg(long)]
    predictions: PathBuf,
    /// Constraints file with ME/SUB directives.
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Known labels to clamp (semi-supervised): instance<TAB>domain<TAB>0|1.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output directory for error_rates.tsv, targets.tsv, diagnostics.json.
    #[arg(long)]
    out: PathBuf,
    /// Weight of the prior-belief rules.
    #[arg(long, default_value_t = 0.1)]
    prior_weight: f64,
    /// ADMM penalty parameter.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 1e-5)]
    eps_abs: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps_rel: f64,
    #[arg(long, default_value_t = 25_000)]
    max_iters: usize,
    /// Sample this many subproblems per iteration instead of all of them.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    stochastic: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hard-label threshold on soft targets.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Square the hinge potentials instead of keeping them linear.
    #[arg(long)]
    squared: bool,
}

impl EstimateCli {
    fn into_args(self) -> EstimateArgs {
        EstimateArgs {
            predictions: self.predictions,
            constraints: self.constraints,
            labels: self.labels,
            out: self.out,
            config: RunConfig {
                prior_weight: self.prior_weight,
                exponent: if self.squared { 2 } else { 1 },
                rho: self.rho,
                eps_abs: self.eps_abs,
                eps_rel: self.eps_rel,
                max_iterations: self.max_iters,
                stochastic: self.stochastic.map(|k| k as usize),
                seed: self.seed,
                threshold: self.threshold,
                ..RunConfig::default()
            },
        }
    }
}

#[derive(Args)]
struct EvaluateCli {
    /// Directory written by the estimate command.
    #[arg(long)]
    estimates: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    /// Ground-truth labels: instance<TAB>domain<TAB>0|1.
    #[arg(long)]
    truth: PathBuf,
    /// Output path for the metrics report (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthCli {
    #[arg(long)]
    domains: u32,
    #[arg(long)]
    classifiers: u32,
    #[arg(long)]
    instances: u32,
    #[arg(long, default_value_t = 0.05)]
    error_min: f64,
    #[arg(long, default_value_t = 0.4)]
    error_max: f64,
    /// Constraints the sampled truth labels must satisfy.
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Probability of keeping each classifier output.
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Emit soft outputs in [0, 1] instead of binary ones.
    #[arg(long)]
    soft: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for predictions.tsv and labels.tsv.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Estimate(args) => commands::cmd_estimate(&args.into_args()),
        Command::Evaluate(args) => commands::cmd_evaluate(&EvaluateArgs {
            estimates: args.estimates,
            predictions: args.predictions,
            truth: args.truth,
            out: args.out,
        }),
        Command::Synth(args) => commands::cmd_synth(&SynthArgs {
            domains: args.domains,
            classifiers: args.classifiers,
            instances: args.instances,
            error_min: args.error_min,
            error_max: args.error_max,
            constraints: args.constraints,
            density: args.density,
            soft: args.soft,
            seed: args.seed,
            out: args.out,
        }),
    };
    ExitCode::from(code as u8)
}

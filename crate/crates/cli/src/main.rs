//! Command-line front end. Exit codes: 0 success, 2 parse failures (flags or
//! input files), 3 violated preconditions or configuration, 4 internal
//! invariant breaches and failed verification suites.

mod handlers;
mod manifest;
mod params;

use clap::{ArgAction, Args, Parser, Subcommand};
use manifest::{default_manifest_path, RunManifest};
use mnnlab_core::Error;
use params::*;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "mnnlab",
    version,
    about = "Spectral filters and small networks on point-cloud graphs, with perturbation-stability experiments",
    args_override_self = true
)]
struct Cli {
    /// key=value file supplying flag defaults (flags on the command line win).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for internal parallelism (default: all cores). Results
    /// do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Manifest path (default: <out>.manifest.json next to the output).
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a point cloud from an analytic surface.
    Sample(SampleArgs),
    /// Deform a point cloud.
    Deform(DeformArgs),
    /// Build the Gaussian-kernel graph operator over a cloud.
    Graph(GraphArgs),
    /// Eigendecompose an operator and optionally partition its spectrum.
    Spectrum(SpectrumArgs),
    /// Filter design, analysis, and application.
    #[command(subcommand)]
    Filter(FilterCommand),
    /// Train a network on the synthetic sphere-vs-torus task.
    Train(TrainArgs),
    /// Run a perturbation stability experiment and write the report.
    Stability(StabilityArgs),
    /// Self-convergence of filter outputs under finer sampling.
    Converge(ConvergeArgs),
    /// Run the numeric checker suites; exits nonzero on any violation.
    Verify(VerifyArgs),
    /// Re-execute a previous run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Subcommand)]
enum FilterCommand {
    /// Least-squares design toward per-group targets.
    Design(FilterDesignArgs),
    /// Continuity constants and optional flatness check.
    Analyze(FilterAnalyzeArgs),
    /// Apply a filter to a signal through an operator.
    Apply(FilterApplyArgs),
}

#[derive(Args)]
struct SampleArgs {
    /// sphere2 | torus2 | plane_patch
    #[arg(long)]
    manifold: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// csv | json (default: by output extension, csv otherwise)
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct DeformArgs {
    #[arg(long)]
    input: PathBuf,
    /// gaussian-coordinate | smooth-field
    #[arg(long)]
    kind: String,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 2)]
    bandlimit: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    alpha_kernel: f64,
    /// Kernel bandwidth override (default n^(-1/(d+2+alpha_kernel))).
    #[arg(long)]
    t_n: Option<f64>,
    /// Kernel normalization exponent override (default d/2).
    #[arg(long)]
    exponent: Option<f64>,
    /// Intrinsic dimension override for clouds loaded from bare CSV.
    #[arg(long)]
    intrinsic_dim: Option<usize>,
    /// laplacian | adjacency
    #[arg(long, default_value = "laplacian")]
    emit: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write the operator as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    operator: PathBuf,
    /// difference | ratio
    #[arg(long)]
    partition: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, action = ArgAction::SetTrue)]
    exclude_zero: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct FilterDesignArgs {
    /// Partitioned spectrum JSON produced by `spectrum --partition`.
    #[arg(long)]
    spectrum: PathBuf,
    /// Per-group response targets in [-1, 1], comma separated.
    #[arg(long, value_delimiter = ',')]
    targets: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    taps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterAnalyzeArgs {
    #[arg(long)]
    filter: PathBuf,
    #[arg(long)]
    spectrum: Option<PathBuf>,
    /// Flatness tolerance checked against the spectrum's partition.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda_hi: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    grid: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterApplyArgs {
    #[arg(long)]
    filter: PathBuf,
    #[arg(long)]
    operator: PathBuf,
    #[arg(long)]
    signal: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 200)]
    train_clouds: usize,
    #[arg(long, default_value_t = 60)]
    test_clouds: usize,
    #[arg(long, default_value_t = 300)]
    points: usize,
    /// Feature widths F_0,...,F_L.
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 64, 32])]
    features: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    taps: usize,
    /// relu | abs | tanh
    #[arg(long, default_value = "relu")]
    nonlinearity: String,
    #[arg(long, default_value_t = 0.005)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 10)]
    batch: usize,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    /// Continuity-penalty weight; 0 disables regularization.
    #[arg(long, default_value_t = 0.0)]
    regularizer: f64,
    #[arg(long, default_value_t = 1.0)]
    lipschitz_target: f64,
    #[arg(long, default_value_t = 0.3)]
    integral_target: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha_kernel: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch CSV log (epoch, loss, train_error).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityArgs {
    /// absolute | relative | mnn-absolute | deformation
    #[arg(long)]
    kind: String,
    /// Perturbation sizes, comma separated. Defaults per kind.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Nodes per cloud.
    #[arg(long, default_value_t = 60)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    cloud_seed: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    alpha_kernel: f64,
    /// Difference threshold for absolute/mnn-absolute kinds.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Ratio threshold for the relative kind.
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    /// Per-group design targets for the filter presets.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.8, 0.3])]
    targets: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    taps: usize,
    /// Hidden width of the (1, F, 1) preset network.
    #[arg(long, default_value_t = 4)]
    width: usize,
    #[arg(long, default_value_t = 3)]
    model_seed: u64,
    /// Trained model for deformation experiments.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Test clouds for deformation experiments.
    #[arg(long, default_value_t = 60)]
    clouds: usize,
    /// Output stem; writes <out>.json and <out>.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long, default_value = "sphere2")]
    manifold: String,
    #[arg(long, value_delimiter = ',', default_values_t = [250usize, 500, 1000, 2000])]
    n_list: Vec<usize>,
    /// Filter taps, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0])]
    taps: Vec<f64>,
    /// first-harmonic | coordinates
    #[arg(long, default_value = "first-harmonic")]
    signal: String,
    #[arg(long, default_value_t = 1.0)]
    alpha_kernel: f64,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// lemmas | paths | gradients | all
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RerunArgs {
    /// Manifest written by a previous run.
    #[arg(long)]
    manifest: PathBuf,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::Io { .. } => 2,
        Error::Config(_)
        | Error::Precondition(_)
        | Error::Contract(_)
        | Error::Domain(_)
        | Error::Data(_) => 3,
        Error::Invariant(_) => 4,
    }
}

/// Inject key=value pairs from a config file as long flags right after the
/// subcommand words; explicit command-line flags override them because they
/// come later and flags override themselves.
fn merge_config_args(mut argv: Vec<String>) -> Result<Vec<String>, Error> {
    let config_path = argv
        .iter()
        .position(|a| a == "--config")
        .and_then(|i| argv.get(i + 1).cloned())
        .or_else(|| {
            argv.iter()
                .find(|a| a.starts_with("--config="))
                .map(|a| a["--config=".len()..].to_string())
        });
    let Some(path) = config_path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(path.clone(), e))?;
    let mut injected = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(path.clone(), idx + 1, "expected key=value"));
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::parse(path.clone(), idx + 1, "empty key"));
        }
        match value {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            _ => {
                injected.push(format!("--{key}"));
                injected.push(value.to_string());
            }
        }
    }
    // Splice the config-derived flags right after the subcommand words so
    // explicit flags anywhere on the line override them.
    const COMMANDS: [&str; 10] = [
        "sample", "deform", "graph", "spectrum", "filter", "train", "stability", "converge",
        "verify", "rerun",
    ];
    let Some(mut insert_at) = argv.iter().position(|a| COMMANDS.contains(&a.as_str())) else {
        return Ok(argv);
    };
    if argv[insert_at] == "filter"
        && argv
            .get(insert_at + 1)
            .is_some_and(|a| ["design", "analyze", "apply"].contains(&a.as_str()))
    {
        insert_at += 1;
    }
    argv.splice(insert_at + 1..insert_at + 1, injected);
    Ok(argv)
}

fn to_params(cli: &Cli) -> Option<CommandParams> {
    Some(match &cli.command {
        Command::Sample(a) => CommandParams::Sample(SampleParams {
            manifold: a.manifold.clone(),
            n: a.n,
            seed: a.seed,
            out: a.out.clone(),
            format: a.format.clone(),
        }),
        Command::Deform(a) => CommandParams::Deform(DeformParams {
            input: a.input.clone(),
            kind: a.kind.clone(),
            epsilon: a.epsilon,
            bandlimit: a.bandlimit,
            seed: a.seed,
            out: a.out.clone(),
            format: a.format.clone(),
        }),
        Command::Graph(a) => CommandParams::Graph(GraphParams {
            input: a.input.clone(),
            alpha_kernel: a.alpha_kernel,
            t_n: a.t_n,
            exponent: a.exponent,
            intrinsic_dim: a.intrinsic_dim,
            emit: a.emit.clone(),
            out: a.out.clone(),
            csv: a.csv.clone(),
        }),
        Command::Spectrum(a) => CommandParams::Spectrum(SpectrumParams {
            operator: a.operator.clone(),
            partition: a.partition.clone(),
            threshold: a.threshold,
            exclude_zero: a.exclude_zero,
            out: a.out.clone(),
            csv: a.csv.clone(),
        }),
        Command::Filter(FilterCommand::Design(a)) => {
            CommandParams::FilterDesign(FilterDesignParams {
                spectrum: a.spectrum.clone(),
                targets: a.targets.clone(),
                taps: a.taps,
                out: a.out.clone(),
            })
        }
        Command::Filter(FilterCommand::Analyze(a)) => {
            CommandParams::FilterAnalyze(FilterAnalyzeParams {
                filter: a.filter.clone(),
                spectrum: a.spectrum.clone(),
                delta: a.delta,
                lambda_hi: a.lambda_hi,
                grid: a.grid,
                out: a.out.clone(),
            })
        }
        Command::Filter(FilterCommand::Apply(a)) => CommandParams::FilterApply(FilterApplyParams {
            filter: a.filter.clone(),
            operator: a.operator.clone(),
            signal: a.signal.clone(),
            out: a.out.clone(),
        }),
        Command::Train(a) => CommandParams::Train(TrainParams {
            train_clouds: a.train_clouds,
            test_clouds: a.test_clouds,
            points: a.points,
            features: a.features.clone(),
            taps: a.taps,
            nonlinearity: a.nonlinearity.clone(),
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            batch: a.batch,
            epochs: a.epochs,
            regularizer: a.regularizer,
            lipschitz_target: a.lipschitz_target,
            integral_target: a.integral_target,
            alpha_kernel: a.alpha_kernel,
            seed: a.seed,
            out: a.out.clone(),
            log: a.log.clone(),
        }),
        Command::Stability(a) => {
            let eps = a.eps.clone().unwrap_or_else(|| match a.kind.as_str() {
                "relative" => vec![a.gamma / 100.0, a.gamma / 20.0, a.gamma / 10.0],
                "deformation" => vec![0.2, 0.4, 0.6, 0.8],
                _ => vec![a.alpha / 100.0, a.alpha / 20.0, a.alpha / 10.0],
            });
            CommandParams::Stability(StabilityParams {
                kind: a.kind.clone(),
                eps,
                trials: a.trials,
                n: a.n,
                cloud_seed: a.cloud_seed,
                seed: a.seed,
                alpha_kernel: a.alpha_kernel,
                alpha: a.alpha,
                gamma: a.gamma,
                targets: a.targets.clone(),
                taps: a.taps,
                width: a.width,
                model_seed: a.model_seed,
                model: a.model.clone(),
                clouds: a.clouds,
                out: a.out.clone(),
            })
        }
        Command::Converge(a) => CommandParams::Converge(ConvergeParams {
            manifold: a.manifold.clone(),
            n_list: a.n_list.clone(),
            taps: a.taps.clone(),
            signal: a.signal.clone(),
            alpha_kernel: a.alpha_kernel,
            seeds: a.seeds,
            seed: a.seed,
            out: a.out.clone(),
        }),
        Command::Verify(a) => CommandParams::Verify(VerifyParams {
            suite: a.suite.clone(),
            trials: a.trials,
            n: a.n,
            seed: a.seed,
            out: a.out.clone(),
        }),
        Command::Rerun(_) => return None,
    })
}

fn primary_output(params: &CommandParams) -> Option<PathBuf> {
    Some(match params {
        CommandParams::Sample(p) => p.out.clone(),
        CommandParams::Deform(p) => p.out.clone(),
        CommandParams::Graph(p) => p.out.clone(),
        CommandParams::Spectrum(p) => p.out.clone(),
        CommandParams::FilterDesign(p) => p.out.clone(),
        CommandParams::FilterAnalyze(p) => p.out.clone(),
        CommandParams::FilterApply(p) => p.out.clone(),
        CommandParams::Train(p) => p.out.clone(),
        CommandParams::Stability(p) => p.out.with_extension("json"),
        CommandParams::Converge(p) => p.out.clone(),
        CommandParams::Verify(p) => p.out.clone()?,
    })
}

fn run() -> Result<u8, Error> {
    let argv: Vec<String> = std::env::args().collect();
    let argv = merge_config_args(argv)?;
    let cli = Cli::parse_from(argv);
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }

    if let Command::Rerun(r) = &cli.command {
        let manifest = RunManifest::read(&r.manifest)?;
        eprintln!("re-running `{}` from {}", manifest.command.name(), r.manifest.display());
        let (_touched, ok) = handlers::dispatch(&manifest.command)?;
        return Ok(if ok { 0 } else { 4 });
    }

    let params = to_params(&cli).expect("rerun handled above");
    let started = Instant::now();
    let (touched, ok) = handlers::dispatch(&params)?;
    let duration_ms = started.elapsed().as_millis() as u64;
    let manifest_path = cli
        .manifest
        .clone()
        .or_else(|| primary_output(&params).map(|out| default_manifest_path(&out)));
    if let Some(path) = manifest_path {
        crate::manifest::ensure_parent(&path)?;
        RunManifest::new(params, touched.inputs, touched.outputs, duration_ms).write(&path)?;
    }
    Ok(if ok { 0 } else { 4 })
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

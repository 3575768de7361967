use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nls_gibbs::config::{ConfigFile, Experiment, RunConfig};
use nls_gibbs::dynamics::Scheme;
use nls_gibbs::experiments::{self, ExperimentReport};

/// Gibbs measures and truncated Hermite–Galerkin flows for the harmonic-oscillator NLS.
#[derive(Parser, Debug)]
#[command(name = "nls-gibbs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Kernel, product and covariance identities.
    Kernels(RunArgs),
    /// Draw a weighted Gibbs ensemble and write it as JSON lines.
    Sample(RunArgs),
    /// Evolve one sample and write the trajectory diagnostics.
    Evolve(RunArgs),
    /// Invariance of the Gibbs measure under the truncated flow.
    Invariance(RunArgs),
    /// Energy and measure monotonicity along the lens-transformed flow.
    Monotonicity(RunArgs),
    /// Scattering remainders as the lens time approaches pi/4.
    Scatter(RunArgs),
    /// Tail estimates of norms of the Gaussian field.
    Tails(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON configuration file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    workers: Option<usize>,
    /// Spectral cutoff N.
    #[arg(long = "N", alias = "cutoff")]
    cutoff: Option<usize>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    kappa0: Option<i32>,
    /// lawson_rk4 or implicit_midpoint.
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long = "zeta-R", alias = "zeta_R")]
    zeta_r: Option<f64>,
    /// Comma-separated evaluation times.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    times: Option<Vec<f64>>,
    /// Comma-separated observable names.
    #[arg(long, value_delimiter = ',')]
    observables: Option<Vec<String>>,
    #[arg(long)]
    oversample: Option<usize>,
    /// Add the unweighted negative control (invariance only).
    #[arg(long)]
    negative_control: bool,
    #[arg(long)]
    ess_floor: Option<f64>,
    /// Ball radius for the measure comparison (monotonicity only).
    #[arg(long)]
    radius: Option<f64>,
}

impl RunArgs {
    fn resolve(self, experiment: Experiment) -> nls_gibbs::Result<RunConfig> {
        let base = match &self.config {
            Some(path) => ConfigFile::from_path(path)?,
            None => ConfigFile::default(),
        };
        let overrides = ConfigFile {
            experiment: Some(experiment),
            cutoff: self.cutoff,
            k: self.k,
            kappa0: self.kappa0,
            scheme: self.scheme,
            dt: self.dt,
            samples: self.samples,
            seed: self.seed,
            zeta_r: self.zeta_r,
            times: self.times,
            observables: self.observables,
            oversample: self.oversample,
            output_dir: self.out,
            workers: self.workers,
            negative_control: self.negative_control.then_some(true),
            ess_floor: self.ess_floor,
            radius: self.radius,
        };
        if let Some(found) = base.experiment {
            if found != experiment {
                log::warn!(
                    "config file names experiment `{}`; running `{}`",
                    found.name(),
                    experiment.name()
                );
            }
        }
        base.merge(overrides).resolve()
    }
}

fn execute(cfg: &RunConfig) -> nls_gibbs::Result<ExperimentReport> {
    if cfg.experiment == Experiment::Sample {
        let (report, ensemble) = experiments::run_sample(cfg)?;
        std::fs::create_dir_all(&cfg.output_dir)?;
        let file = std::fs::File::create(cfg.output_dir.join("ensemble.jsonl"))?;
        let mut out = std::io::BufWriter::new(file);
        ensemble.write_jsonl(&mut out)?;
        std::io::Write::flush(&mut out)?;
        Ok(report)
    } else {
        experiments::run(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Kernels(a) => (Experiment::Kernels, a),
        Command::Sample(a) => (Experiment::Sample, a),
        Command::Evolve(a) => (Experiment::Evolve, a),
        Command::Invariance(a) => (Experiment::Invariance, a),
        Command::Monotonicity(a) => (Experiment::Monotonicity, a),
        Command::Scatter(a) => (Experiment::Scatter, a),
        Command::Tails(a) => (Experiment::Tails, a),
    };
    let cfg = match args.resolve(experiment) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cfg.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let report = match execute(&cfg).and_then(|r| r.write_to(&cfg.output_dir).map(|()| r)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    print!("{}", report.to_text());
    match report.first_failure() {
        None => ExitCode::SUCCESS,
        Some(row) => {
            eprintln!(
                "failed: {} at {} (value {:e}, verdict {})",
                row.observable,
                row.parameter,
                row.value,
                row.verdict.label()
            );
            ExitCode::FAILURE
        }
    }
}

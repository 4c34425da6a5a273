use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rvl::fbm::{FbmSampler, SamplerKind};
use rvl::harness::{run_experiment, ExperimentConfig, ExperimentId, Outcome, OutputFormat};
use rvl::{Error, HurstParam, Runner, SeedSpec, UniformGrid};

#[derive(Parser)]
#[command(name = "rvl", version, about = "Rough fBm variation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed; falls back to RVL_DEFAULT_SEED, then 0.
    #[arg(long, env = "RVL_DEFAULT_SEED", global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per logical core).
    #[arg(long, default_value_t = 0, global = true)]
    workers: usize,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampler {
    Circulant,
    Cholesky,
}

impl From<Sampler> for SamplerKind {
    fn from(s: Sampler) -> Self {
        match s {
            Sampler::Circulant => SamplerKind::Circulant,
            Sampler::Cholesky => SamplerKind::Cholesky,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BesselExperiment {
    Variation,
    Moments,
    Selfsim,
}

#[derive(Args)]
struct Lattice {
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, value_delimiter = ',', default_value = "64,256,1024,4096")]
    grids: Vec<usize>,
    /// Monte Carlo replications (experiment default when absent).
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, value_enum)]
    sampler: Option<Sampler>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one fBm path and write it as CSV.
    Fbm {
        #[arg(long)]
        hurst: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, value_enum, default_value = "circulant")]
        sampler: Sampler,
        #[arg(long, default_value_t = 0)]
        replication: u64,
        #[command(flatten)]
        common: Common,
    },
    /// 1/H-variation of fBm against e_H T.
    Variation {
        #[arg(long)]
        hurst: f64,
        #[command(flatten)]
        lattice: Lattice,
        #[command(flatten)]
        common: Common,
    },
    /// 1/H-variation of a divergence integral, or the L^p exponent check.
    ItoCheck {
        #[arg(long)]
        hurst: f64,
        /// Registered integrand: identity, half-square, cubic, constant.
        #[arg(long, default_value = "half-square")]
        spec: String,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Run the L^p increment-scaling check instead of the variation.
        #[arg(long)]
        scaling: bool,
        #[command(flatten)]
        lattice: Lattice,
        #[command(flatten)]
        common: Common,
    },
    /// Fractional Bessel process experiments.
    Bessel {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long)]
        hurst: f64,
        #[arg(long, value_enum)]
        experiment: BesselExperiment,
        /// Negative-moment order.
        #[arg(long)]
        q: Option<f64>,
        /// Moment times, or the single base time of the self-similarity test.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<f64>>,
        #[command(flatten)]
        lattice: Lattice,
        #[command(flatten)]
        common: Common,
    },
    /// Kernel reproduction of the covariance on a lattice of times.
    KernelCheck {
        #[arg(long)]
        hurst: f64,
        /// Relative quadrature tolerance.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn format_for(common: &Common) -> OutputFormat {
    match (common.format, &common.out) {
        (Some(f), _) => f.into(),
        (None, Some(path)) => OutputFormat::for_path(path),
        (None, None) => OutputFormat::Csv,
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn config(
    id: ExperimentId,
    hurst: f64,
    lattice: Option<&Lattice>,
    common: &Common,
) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(id, hurst, common.seed.unwrap_or(0));
    if let Some(l) = lattice {
        cfg.horizon = l.horizon;
        cfg.grid_sizes = l.grids.clone();
        cfg.replications = l.paths;
        cfg.sampler = l.sampler.map(Into::into);
    }
    cfg
}

fn emit(outcome: &Outcome, common: &Common) -> Result<bool, Error> {
    let mut out = sink(&common.out)?;
    outcome.write(format_for(common), &mut out)?;
    out.flush()?;
    for c in &outcome.checks {
        eprintln!(
            "{} {}: {} (threshold {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    Ok(outcome.passed())
}

fn sample_path(
    hurst: f64,
    horizon: f64,
    n: usize,
    dim: usize,
    sampler: Sampler,
    replication: u64,
    common: &Common,
) -> Result<(), Error> {
    let grid = UniformGrid::new(horizon, n)?;
    let sampler = FbmSampler::new(sampler.into(), HurstParam::new(hurst)?, grid)?;
    let path = sampler.sample_multi(dim, SeedSpec::new(common.seed.unwrap_or(0), replication))?;
    let mut out = sink(&common.out)?;
    match format_for(common) {
        OutputFormat::Csv if dim == 1 => path.column(0).write_csv(&mut out)?,
        OutputFormat::Csv => path.write_csv(&mut out)?,
        OutputFormat::Json => {
            let t: Vec<f64> = grid.nodes().collect();
            let rows: Vec<&[f64]> = path.rows().collect();
            serde_json::to_writer(&mut out, &serde_json::json!({ "t": t, "values": rows }))?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn execute(cli: Cli) -> Result<bool, Error> {
    let (cfg, common) = match cli.command {
        Command::Fbm {
            hurst,
            horizon,
            n,
            dim,
            sampler,
            replication,
            common,
        } => {
            sample_path(hurst, horizon, n, dim, sampler, replication, &common)?;
            return Ok(true);
        }
        Command::Variation {
            hurst,
            lattice,
            common,
        } => (
            config(ExperimentId::FbmVariation, hurst, Some(&lattice), &common),
            common,
        ),
        Command::ItoCheck {
            hurst,
            spec,
            dim,
            scaling,
            lattice,
            common,
        } => {
            let id = if scaling {
                ExperimentId::LpScaling
            } else {
                ExperimentId::ItoVariation
            };
            let mut cfg = config(id, hurst, Some(&lattice), &common);
            cfg.spec = Some(spec);
            cfg.dimension = Some(dim);
            (cfg, common)
        }
        Command::Bessel {
            dim,
            hurst,
            experiment,
            q,
            times,
            scales,
            lattice,
            common,
        } => {
            let id = match experiment {
                BesselExperiment::Variation => ExperimentId::BesselVariation,
                BesselExperiment::Moments => ExperimentId::BesselMoments,
                BesselExperiment::Selfsim => ExperimentId::BesselSelfsim,
            };
            let mut cfg = config(id, hurst, Some(&lattice), &common);
            cfg.dimension = Some(dim);
            cfg.moment_order = q;
            cfg.times = times;
            cfg.scales = scales;
            (cfg, common)
        }
        Command::KernelCheck {
            hurst,
            tol,
            times,
            common,
        } => {
            let mut cfg = config(ExperimentId::KernelCheck, hurst, None, &common);
            cfg.quad_tol = Some(tol);
            cfg.times = times;
            (cfg, common)
        }
        Command::Run { config, mut common } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(seed) = common.seed {
                cfg.master_seed = seed;
            }
            if common.out.is_none() {
                common.out = cfg.output_path.clone();
            }
            if common.format.is_none() {
                common.format = cfg.format.map(|f| match f {
                    OutputFormat::Csv => Format::Csv,
                    OutputFormat::Json => Format::Json,
                });
            }
            (cfg, common)
        }
    };
    // Validate every gate before the worker pool is even started.
    cfg.plan()?;
    let mut cfg = cfg;
    cfg.output_path = None;
    let runner = Runner::new(common.workers)?;
    let outcome = run_experiment(&cfg, &runner)?;
    emit(&outcome, &common)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Argument parsing and option merging: flags override `--config` values,
//! which override built-in defaults.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use calred_core::denoise::{EXTERNAL_DEFAULT_TIMEOUT_MS, TV_DEFAULT_ITERATIONS};
use calred_core::operator::default_num_detectors;
use calred_core::sim::ExperimentSpec;
use calred_core::{AngleDerivative, DenoiserSpec, Method, ProjectorConfig, SolverConfig, SupportMask};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::{self, EvalJob, ReconstructJob, SimulateJob};
use crate::error::{exit, CliError};
use crate::manifest::{ConfigFile, ProjectorOverrides, SolverOverrides};
use crate::npy;

/// Built-in defaults for `reconstruct`, tuned for unit-intensity phantoms
/// around n=128 with 90 angles.
pub mod defaults {
    use calred_core::Method;

    pub const METHOD: Method = Method::CalRed;
    pub const ITERATIONS: usize = 100;
    pub const TAU_X: f64 = 200.0;
    pub const TV_WEIGHT: f64 = 5.0;
    pub const SIGMA: f64 = 10.0;
    pub const NUM_ANGLES: usize = 90;
}

#[derive(Debug, Parser)]
#[command(name = "calred", version, about = "Tomographic reconstruction with projection-angle self-calibration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a modified Shepp-Logan phantom.
    Phantom(PhantomArgs),
    /// Perturb angles and synthesize a noisy sinogram from an image.
    Simulate(SimulateArgs),
    /// Reconstruct an image (and angles, for cal_* methods) from a sinogram.
    Reconstruct(ReconstructArgs),
    /// Print SNR and optional angle RMSE against references.
    Eval(EvalArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SupportArg {
    Disk,
    Square,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DerivativeArg {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Args)]
pub struct ProjectorArgs {
    /// Image side length. Defaults to the input image size when known.
    #[arg(long)]
    pub n: Option<usize>,
    /// Detector bins per projection (odd). Default: smallest odd >= n·√2.
    #[arg(long)]
    pub detectors: Option<usize>,
    #[arg(long, value_enum)]
    pub support: Option<SupportArg>,
    #[arg(long, value_enum)]
    pub angle_derivative: Option<DerivativeArg>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub num_angles: Option<usize>,
    /// Standard deviation of the angle perturbation in degrees.
    #[arg(long)]
    pub angle_sd: Option<f64>,
    /// Input SNR in dB; omit for noiseless data.
    #[arg(long)]
    pub snr_db: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub projector: ProjectorArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DenoiserKind {
    Identity,
    Gaussian,
    Tv,
    External,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub sino: PathBuf,
    /// Nominal angles CSV.
    #[arg(long)]
    pub angles: PathBuf,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gt_image: Option<PathBuf>,
    #[arg(long)]
    pub gt_angles: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub gamma_x: Option<f64>,
    #[arg(long)]
    pub gamma_theta: Option<f64>,
    #[arg(long)]
    pub tau_x: Option<f64>,
    #[arg(long)]
    pub tau_theta: Option<f64>,
    #[arg(long)]
    pub tv_weight: Option<f64>,
    #[arg(long)]
    pub tv_iterations: Option<usize>,
    #[arg(long, value_enum)]
    pub denoiser: Option<DenoiserKind>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// External denoiser command, split on whitespace. Use a config file for
    /// arguments containing spaces.
    #[arg(long)]
    pub denoiser_cmd: Option<String>,
    #[arg(long)]
    pub denoiser_timeout_ms: Option<u64>,
    /// Disable Nesterov momentum.
    #[arg(long)]
    pub no_accelerate: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub projector: ProjectorArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub gt_image: PathBuf,
    #[arg(long, requires = "angles_true")]
    pub angles_est: Option<PathBuf>,
    #[arg(long, requires = "angles_est")]
    pub angles_true: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Output prefix; defaults to the one recorded in the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn resolve_projector(flags: &ProjectorArgs, cfg: &ProjectorOverrides, fallback_n: Option<usize>) -> Result<ProjectorConfig, CliError> {
    let n = flags
        .n
        .or(cfg.n)
        .or(fallback_n)
        .ok_or_else(|| CliError::usage("image size unknown: pass --n or a config with projector.n"))?;
    let mut p = ProjectorConfig::new(n);
    p.num_detectors = flags.detectors.or(cfg.num_detectors).unwrap_or_else(|| default_num_detectors(n));
    p.support_mask = match flags.support {
        Some(SupportArg::Disk) => SupportMask::InscribedDisk,
        Some(SupportArg::Square) => SupportMask::FullSquare,
        None => cfg.support_mask.unwrap_or_default(),
    };
    p.angle_derivative = match flags.angle_derivative {
        Some(DerivativeArg::Analytic) => AngleDerivative::Analytic,
        Some(DerivativeArg::FiniteDifference) => AngleDerivative::FiniteDifference,
        None => cfg.angle_derivative.unwrap_or_default(),
    };
    p.validate()?;
    Ok(p)
}

pub fn simulate_job(args: &SimulateArgs) -> Result<SimulateJob, CliError> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    let m = npy::read_matrix(&args.image)?;
    let projector = resolve_projector(&args.projector, &cfg.projector, Some(m.rows))?;
    let e = &cfg.experiment;
    let mut experiment = ExperimentSpec::new(projector.n);
    experiment.num_angles = args.num_angles.or(e.num_angles).unwrap_or(defaults::NUM_ANGLES);
    experiment.angle_noise_sd_deg = args.angle_sd.or(e.angle_noise_sd_deg).unwrap_or(0.0);
    experiment.input_snr_db = args.snr_db.or(e.input_snr_db).filter(|s| *s != f64::INFINITY);
    experiment.seed = args.seed.or(e.seed).unwrap_or(0);
    experiment.validate()?;
    Ok(SimulateJob {
        image: args.image.clone(),
        out: args.out.clone(),
        projector,
        experiment,
    })
}

fn resolve_denoiser(args: &ReconstructArgs, cfg: &SolverOverrides) -> Result<DenoiserSpec, CliError> {
    let command = args
        .denoiser_cmd
        .as_deref()
        .map(|c| c.split_whitespace().map(str::to_string).collect::<Vec<_>>());
    let base = cfg.denoiser.clone();
    let sigma = args.sigma.or(base.as_ref().map(DenoiserSpec::sigma)).unwrap_or(defaults::SIGMA);
    let kind = args.denoiser.or(match base {
        Some(DenoiserSpec::Identity) => Some(DenoiserKind::Identity),
        Some(DenoiserSpec::Gaussian { .. }) => Some(DenoiserKind::Gaussian),
        Some(DenoiserSpec::Tv { .. }) => Some(DenoiserKind::Tv),
        Some(DenoiserSpec::External { .. }) => Some(DenoiserKind::External),
        None => None,
    });
    let spec = match (kind.unwrap_or(DenoiserKind::Tv), base) {
        (DenoiserKind::Identity, _) => DenoiserSpec::Identity,
        (DenoiserKind::Gaussian, _) => DenoiserSpec::Gaussian { sigma },
        (DenoiserKind::Tv, Some(DenoiserSpec::Tv { weight, iterations, .. })) => DenoiserSpec::Tv {
            sigma,
            weight: if args.sigma.is_some() { None } else { weight },
            iterations,
        },
        (DenoiserKind::Tv, _) => DenoiserSpec::Tv {
            sigma,
            weight: None,
            iterations: TV_DEFAULT_ITERATIONS,
        },
        (DenoiserKind::External, base) => {
            let (base_cmd, base_timeout) = match base {
                Some(DenoiserSpec::External { command, timeout_ms, .. }) => (Some(command), Some(timeout_ms)),
                _ => (None, None),
            };
            let command = command
                .or(base_cmd)
                .filter(|c| !c.is_empty())
                .ok_or_else(|| CliError::usage("--denoiser external needs --denoiser-cmd"))?;
            DenoiserSpec::External {
                sigma,
                command,
                timeout_ms: args
                    .denoiser_timeout_ms
                    .or(base_timeout)
                    .unwrap_or(EXTERNAL_DEFAULT_TIMEOUT_MS),
            }
        }
    };
    spec.validate()?;
    Ok(spec)
}

pub fn reconstruct_job(args: &ReconstructArgs) -> Result<ReconstructJob, CliError> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    let gt_n = match &args.gt_image {
        Some(p) => Some(npy::read_matrix(p)?.rows),
        None => None,
    };
    let projector = resolve_projector(&args.projector, &cfg.projector, gt_n)?;
    let s = &cfg.solver;
    let mut solver = SolverConfig::new(args.method.or(s.method).unwrap_or(defaults::METHOD));
    solver.iterations = args.iterations.or(s.iterations).unwrap_or(defaults::ITERATIONS);
    solver.gamma_x = args.gamma_x.or(s.gamma_x);
    solver.gamma_theta = args.gamma_theta.or(s.gamma_theta);
    solver.tau_x = args.tau_x.or(s.tau_x).unwrap_or(defaults::TAU_X);
    solver.tau_theta = args.tau_theta.or(s.tau_theta).unwrap_or(0.0);
    solver.tv_weight = args.tv_weight.or(s.tv_weight).unwrap_or(defaults::TV_WEIGHT);
    solver.tv_iterations = args.tv_iterations.or(s.tv_iterations).unwrap_or(TV_DEFAULT_ITERATIONS);
    solver.denoiser = resolve_denoiser(args, s)?;
    solver.accelerate = if args.no_accelerate { false } else { s.accelerate.unwrap_or(true) };
    solver.seed = args.seed.or(s.seed).unwrap_or(0);
    solver.validate()?;
    Ok(ReconstructJob {
        sinogram: args.sino.clone(),
        nominal_angles: args.angles.clone(),
        gt_image: args.gt_image.clone(),
        gt_angles: args.gt_angles.clone(),
        out: args.out.clone(),
        projector,
        solver,
    })
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CALRED_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::usage(format!("CALRED_THREADS must be a positive integer, got `{raw}`")))?;
    // A pool may already exist when called twice in one process; that is fine.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn execute<W: Write>(command: &Command, stdout: W) -> Result<(), CliError> {
    configure_threads()?;
    match command {
        Command::Phantom(a) => commands::phantom(a.n, &a.out),
        Command::Simulate(a) => commands::simulate(&simulate_job(a)?).map(drop),
        Command::Reconstruct(a) => commands::reconstruct(&reconstruct_job(a)?).map(drop),
        Command::Eval(a) => commands::eval(
            &EvalJob {
                image: &a.image,
                gt_image: &a.gt_image,
                angles: a.angles_est.as_deref().zip(a.angles_true.as_deref()),
            },
            stdout,
        ),
        Command::Replay(a) => commands::replay(&a.manifest, a.out.as_deref().map(Path::new)).map(drop),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors go to stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let stdout = std::io::stdout();
    match execute(&cli.command, stdout.lock()) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("calred: {e}");
            e.exit_code()
        }
    }
}

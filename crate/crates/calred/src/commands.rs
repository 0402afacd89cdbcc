//! Command implementations. Each takes a fully resolved job, so the same
//! code path serves flag-driven runs and manifest replays.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use calred_core::sim::{rmse_deg, shepp_logan, snr_db, ExperimentSpec};
use calred_core::{
    Clock, Denoiser, DenoiserSpec, GroundTruth, NativeDenoiser, Projector, ProjectorConfig, Solver, SolverConfig,
};

use crate::error::CliError;
use crate::external::ExternalDenoiser;
use crate::fsutil::with_suffix;
use crate::manifest::{FileRecord, Manifest, ResolvedSteps, RunConfig};
use crate::{npy, tables};

struct WallClock(Instant);

impl Clock for WallClock {
    fn elapsed_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

pub fn phantom(n: usize, out: &Path) -> Result<(), CliError> {
    let image = shepp_logan(n)?;
    npy::write_image(out, &image)
}

#[derive(Clone, Debug)]
pub struct SimulateJob {
    pub image: PathBuf,
    pub out: PathBuf,
    pub projector: ProjectorConfig,
    pub experiment: ExperimentSpec,
}

pub fn simulate(job: &SimulateJob) -> Result<Manifest, CliError> {
    let image = npy::read_image(&job.image)?;
    if image.n() != job.projector.n || image.n() != job.experiment.n {
        return Err(CliError::usage(format!(
            "image is {0}x{0} but the configuration is for n={1}",
            image.n(),
            job.projector.n
        )));
    }
    let mut manifest = Manifest::new(
        "simulate",
        job.experiment.seed,
        &job.out,
        RunConfig {
            projector: job.projector.clone(),
            experiment: Some(job.experiment.clone()),
            solver: None,
        },
    );
    manifest.inputs.insert("image".into(), FileRecord::of(&job.image)?);

    let projector = Projector::new(job.projector.clone())?;
    let sim = job.experiment.simulate(&projector, &image)?;

    let outputs = [
        ("sinogram", with_suffix(&job.out, "sino.npy")),
        ("angles_true", with_suffix(&job.out, "angles_true.csv")),
        ("angles_nominal", with_suffix(&job.out, "angles_nominal.csv")),
    ];
    npy::write_sinogram(&outputs[0].1, &sim.sinogram)?;
    tables::write_angles(&outputs[1].1, &sim.true_angles)?;
    tables::write_angles(&outputs[2].1, &sim.nominal)?;
    for (role, path) in &outputs {
        manifest.outputs.insert((*role).into(), FileRecord::of(path)?);
    }
    manifest.write(&with_suffix(&job.out, "manifest.json"))?;
    Ok(manifest)
}

#[derive(Clone, Debug)]
pub struct ReconstructJob {
    pub sinogram: PathBuf,
    pub nominal_angles: PathBuf,
    pub gt_image: Option<PathBuf>,
    pub gt_angles: Option<PathBuf>,
    pub out: PathBuf,
    pub projector: ProjectorConfig,
    pub solver: SolverConfig,
}

fn make_denoiser(cfg: &SolverConfig) -> Result<Box<dyn Denoiser>, CliError> {
    if !cfg.method.uses_denoiser() {
        return Ok(Box::new(NativeDenoiser::Identity));
    }
    Ok(match cfg.denoiser {
        DenoiserSpec::External { .. } => Box::new(ExternalDenoiser::from_spec(&cfg.denoiser)?),
        ref spec => Box::new(NativeDenoiser::from_spec(spec)?),
    })
}

pub fn reconstruct(job: &ReconstructJob) -> Result<Manifest, CliError> {
    let y = npy::read_sinogram(&job.sinogram)?;
    let nominal = tables::read_angles(&job.nominal_angles)?;
    if y.num_angles() != nominal.len() {
        return Err(CliError::usage(format!(
            "sinogram has {} rows but {} nominal angles were given",
            y.num_angles(),
            nominal.len()
        )));
    }
    let gt_image = job.gt_image.as_deref().map(npy::read_image).transpose()?;
    let gt_angles = job.gt_angles.as_deref().map(tables::read_angles).transpose()?;
    if let Some(img) = &gt_image {
        if img.n() != job.projector.n {
            return Err(CliError::usage(format!(
                "ground-truth image is {0}x{0} but n={1}",
                img.n(),
                job.projector.n
            )));
        }
    }
    if let Some(a) = &gt_angles {
        if a.len() != nominal.len() {
            return Err(CliError::usage("ground-truth angle count differs from the nominal count"));
        }
    }

    let mut manifest = Manifest::new(
        "reconstruct",
        job.solver.seed,
        &job.out,
        RunConfig {
            projector: job.projector.clone(),
            experiment: None,
            solver: Some(job.solver.clone()),
        },
    );
    manifest.inputs.insert("sinogram".into(), FileRecord::of(&job.sinogram)?);
    manifest.inputs.insert("nominal_angles".into(), FileRecord::of(&job.nominal_angles)?);
    if let Some(p) = &job.gt_image {
        manifest.inputs.insert("gt_image".into(), FileRecord::of(p)?);
    }
    if let Some(p) = &job.gt_angles {
        manifest.inputs.insert("gt_angles".into(), FileRecord::of(p)?);
    }

    let projector = Projector::new(job.projector.clone())?;
    if projector.num_detectors() != y.num_detectors() {
        return Err(CliError::usage(format!(
            "sinogram has {} detector bins but the projector uses {}",
            y.num_detectors(),
            projector.num_detectors()
        )));
    }
    let denoiser = make_denoiser(&job.solver)?;
    let clock = WallClock(Instant::now());
    let solver = Solver::new(&projector, &y, &nominal, job.solver.clone(), denoiser)?;
    let truth = GroundTruth {
        image: gt_image.as_ref(),
        angles: gt_angles.as_ref(),
    };
    let result = solver.run(truth, &clock)?;
    manifest.resolved = Some(ResolvedSteps {
        gamma_x: result.gamma_x,
        gamma_theta: result.gamma_theta,
    });

    let mut outputs = vec![
        ("image", with_suffix(&job.out, "image.npy")),
        ("trace", with_suffix(&job.out, "trace.csv")),
    ];
    npy::write_image(&outputs[0].1, &result.image)?;
    tables::write_trace(&outputs[1].1, &result.trace)?;
    if job.solver.method.calibrates() {
        let p = with_suffix(&job.out, "angles_est.csv");
        tables::write_angles(&p, &result.angles)?;
        outputs.push(("angles_est", p));
    }
    for (role, path) in &outputs {
        manifest.outputs.insert((*role).into(), FileRecord::of(path)?);
    }
    manifest.write(&with_suffix(&job.out, "manifest.json"))?;
    Ok(manifest)
}

pub struct EvalJob<'a> {
    pub image: &'a Path,
    pub gt_image: &'a Path,
    pub angles: Option<(&'a Path, &'a Path)>,
}

pub fn eval<W: Write>(job: &EvalJob<'_>, out: W) -> Result<(), CliError> {
    let image = npy::read_image(job.image)?;
    let gt = npy::read_image(job.gt_image)?;
    if image.n() != gt.n() {
        return Err(CliError::usage(format!(
            "image is {0}x{0} but the reference is {1}x{1}",
            image.n(),
            gt.n()
        )));
    }
    let mut entries = vec![("snr_db", snr_db(&image, &gt)?)];
    if let Some((est, truth)) = job.angles {
        let est = tables::read_angles(est)?;
        let truth = tables::read_angles(truth)?;
        if est.len() != truth.len() {
            return Err(CliError::usage(format!(
                "{} estimated angles but {} true angles",
                est.len(),
                truth.len()
            )));
        }
        entries.push(("angle_rmse_deg", rmse_deg(&est, &truth)?));
    }
    tables::write_report(out, &entries).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

/// Re-runs the command recorded in a manifest, writing under `out` (or the
/// original prefix). Inputs must be unchanged.
pub fn replay(manifest_path: &Path, out: Option<&Path>) -> Result<Manifest, CliError> {
    let m = Manifest::read(manifest_path)?;
    m.verify_inputs()?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| m.out_prefix.clone());
    let input = |role: &str| {
        m.inputs
            .get(role)
            .map(|r| r.path.clone())
            .ok_or_else(|| CliError::format(manifest_path, format!("manifest lacks the `{role}` input")))
    };
    let missing = |what: &str| CliError::format(manifest_path, format!("manifest lacks the {what} configuration"));
    match m.command.as_str() {
        "simulate" => simulate(&SimulateJob {
            image: input("image")?,
            out,
            projector: m.config.projector.clone(),
            experiment: m.config.experiment.clone().ok_or_else(|| missing("experiment"))?,
        }),
        "reconstruct" => reconstruct(&ReconstructJob {
            sinogram: input("sinogram")?,
            nominal_angles: input("nominal_angles")?,
            gt_image: m.inputs.get("gt_image").map(|r| r.path.clone()),
            gt_angles: m.inputs.get("gt_angles").map(|r| r.path.clone()),
            out,
            projector: m.config.projector.clone(),
            solver: m.config.solver.clone().ok_or_else(|| missing("solver"))?,
        }),
        other => Err(CliError::format(manifest_path, format!("unknown command `{other}`"))),
    }
}

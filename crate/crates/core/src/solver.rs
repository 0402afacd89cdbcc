//! Accelerated reconstruction engine with optional angle calibration.
//!
//! Every iterative method shares the same loop. Iteration `k`:
//!
//! 1. `q_k` from the Nesterov recurrence (or `q_k = 1` without
//!    acceleration), momentum `β_k = (q_{k-1} - 1) / q_k`, with `q_0 = q_1 = 1`.
//! 2. Calibrating methods take an angle step evaluated at the accelerated
//!    pair `(s, u)`:
//!    `θᵏ = u - γθ·(∂g(s, u)/∂u + τθ·(u - θ̂))`, `u = θᵏ + β_k·(θᵏ - θᵏ⁻¹)`.
//! 3. An image step at `s` using the fresh `θᵏ`:
//!    - LSM: `xᵏ = s - γx·∇g(s)`
//!    - RED: `xᵏ = s - γx·(∇g(s) + τx·(s - D_σ(s)))`
//!    - FISTA: `xᵏ = prox_{γx·τ_tv·TV}(s - γx·∇g(s))`
//!
//!    followed by `s = xᵏ + β_k·(xᵏ - xᵏ⁻¹)`.
//!
//! The image starts from the FBP at the nominal angles and the angles start
//! at their nominal values. Runs stop after a fixed number of iterations.

use core::fmt;
use core::str::FromStr;

use crate::denoise::{red_penalty_from, tv_prox, DenoiseError, Denoiser, DenoiserSpec, TV_DEFAULT_ITERATIONS};
use crate::error::{Error, Result};
use crate::grid::{AngleSet, ImageGrid, Sinogram};
use crate::operator::Projector;
use crate::prelude::*;
use crate::sim::{rmse_deg, snr_db};

/// Step-size safety factor applied to `1/L`.
pub const STEP_SAFETY: f64 = 0.9;
/// Power iterations used to estimate `‖HᵀH‖` for the default image step.
pub const POWER_ITERATIONS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    Fbp,
    Lsm,
    Fista,
    Red,
    CalLsm,
    CalFista,
    CalRed,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Fbp,
        Method::Lsm,
        Method::Fista,
        Method::Red,
        Method::CalLsm,
        Method::CalFista,
        Method::CalRed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fbp => "fbp",
            Method::Lsm => "lsm",
            Method::Fista => "fista",
            Method::Red => "red",
            Method::CalLsm => "cal_lsm",
            Method::CalFista => "cal_fista",
            Method::CalRed => "cal_red",
        }
    }

    /// Whether the method updates the projection angles.
    pub fn calibrates(self) -> bool {
        matches!(self, Method::CalLsm | Method::CalFista | Method::CalRed)
    }

    pub fn is_iterative(self) -> bool {
        self != Method::Fbp
    }

    /// The image update shared by a method and its calibrating variant.
    pub fn without_calibration(self) -> Method {
        match self {
            Method::CalLsm => Method::Lsm,
            Method::CalFista => Method::Fista,
            Method::CalRed => Method::Red,
            m => m,
        }
    }

    pub fn uses_denoiser(self) -> bool {
        self.without_calibration() == Method::Red
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid("method", alloc::format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    pub method: Method,
    /// Image step. `None` selects `0.9 / (L̂ + τx)` (RED) or `0.9 / L̂`,
    /// with `L̂` a power-iteration estimate of `‖HᵀH‖` at the nominal angles.
    pub gamma_x: Option<f64>,
    /// Angle step in deg² per unit objective. `None` selects
    /// [`default_gamma_theta`]. Zero freezes the angles.
    pub gamma_theta: Option<f64>,
    /// RED weight.
    pub tau_x: f64,
    /// Tikhonov pull of the angles toward nominal.
    pub tau_theta: f64,
    /// TV weight of the FISTA objective.
    pub tv_weight: f64,
    /// Dual iterations of the FISTA prox.
    pub tv_iterations: usize,
    /// `D_σ` for the RED methods.
    pub denoiser: DenoiserSpec,
    pub iterations: usize,
    pub accelerate: bool,
    /// Recorded for provenance; the iteration itself draws no random numbers.
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            gamma_x: None,
            gamma_theta: None,
            tau_x: 0.0,
            tau_theta: 0.0,
            tv_weight: 0.0,
            tv_iterations: TV_DEFAULT_ITERATIONS,
            denoiser: DenoiserSpec::Identity,
            iterations: 100,
            accelerate: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn nonneg(name: &'static str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, "must be finite and nonnegative"))
            }
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "must be at least 1"));
        }
        if let Some(g) = self.gamma_x {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::invalid("gamma_x", "must be finite and positive"));
            }
        }
        if let Some(g) = self.gamma_theta {
            nonneg("gamma_theta", g)?;
        }
        nonneg("tau_x", self.tau_x)?;
        nonneg("tau_theta", self.tau_theta)?;
        nonneg("tv_weight", self.tv_weight)?;
        if self.tv_iterations == 0 {
            return Err(Error::invalid("tv_iterations", "must be at least 1"));
        }
        if self.method.uses_denoiser() {
            self.denoiser.validate()?;
        }
        Ok(())
    }
}

/// `q_k` of the Nesterov sequence: `q_1 = 1`, `q_k = (1 + √(1 + 4q²_{k-1}))/2`.
pub fn nesterov_q(k: usize) -> f64 {
    assert!(k >= 1, "the sequence starts at k = 1");
    (1..k).fold(1.0, |q, _| next_q(q))
}

#[inline]
fn next_q(q: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * q * q).sqrt())
}

/// Iterates of one run. `s` and `u` are the extrapolated image and angles.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub x: ImageGrid,
    pub s: ImageGrid,
    pub theta: AngleSet,
    pub u: AngleSet,
    pub q_prev: f64,
    pub q: f64,
    /// Completed iterations.
    pub k: usize,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GroundTruth<'a> {
    pub image: Option<&'a ImageGrid>,
    pub angles: Option<&'a AngleSet>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// `½‖y - H_θ x‖²` at the iterate.
    pub objective: f64,
    /// `½⟨s, s - D_σ(s)⟩` at the point the denoiser was evaluated (RED only).
    pub red_penalty: Option<f64>,
    pub snr_db: Option<f64>,
    pub angle_rmse_deg: Option<f64>,
    pub elapsed_ms: f64,
}

impl TraceRecord {
    /// Equality of everything except the wall-clock column.
    pub fn same_numerics(&self, other: &TraceRecord) -> bool {
        fn bits(v: Option<f64>) -> Option<u64> {
            v.map(f64::to_bits)
        }
        self.k == other.k
            && self.objective.to_bits() == other.objective.to_bits()
            && bits(self.red_penalty) == bits(other.red_penalty)
            && bits(self.snr_db) == bits(other.snr_db)
            && bits(self.angle_rmse_deg) == bits(other.angle_rmse_deg)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn same_numerics(&self, other: &RunTrace) -> bool {
        self.len() == other.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.same_numerics(b))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub image: ImageGrid,
    pub angles: AngleSet,
    pub trace: RunTrace,
    pub gamma_x: f64,
    pub gamma_theta: f64,
}

/// Milliseconds since the start of a run.
pub trait Clock {
    fn elapsed_ms(&self) -> f64;
}

/// Reports zero elapsed time.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error(transparent)]
    Operator(#[from] Error),
    #[error(transparent)]
    Denoiser(#[from] DenoiseError),
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("invalid solver input: {0}")]
    Invalid(#[from] Error),
    #[error("solver aborted at iteration {iteration}: {source}")]
    Aborted {
        iteration: usize,
        #[source]
        source: StepError,
    },
}

/// Angle step from a Gauss-Newton curvature estimate at `(x, θ)`:
/// `0.5 / (max_i ‖∂(H_θ x)_i/∂θ_i‖² + τθ)`.
///
/// The data term is separable over angles and `‖∂(Hx)_i/∂θ_i‖²` is the
/// Gauss-Newton approximation of its second derivative in `θ_i`, so the
/// step scales automatically with image size, intensity and detector count.
pub fn default_gamma_theta(
    projector: &Projector,
    x: &ImageGrid,
    angles: &AngleSet,
    tau_theta: f64,
) -> Result<f64> {
    let mut curvature = 0.0f64;
    for &a in angles.degrees() {
        let d = projector.projection_angle_derivative(x, a)?;
        curvature = curvature.max(d.iter().map(|v| v * v).sum());
    }
    let curvature = curvature + tau_theta;
    if curvature > 0.0 {
        Ok(0.5 / curvature)
    } else {
        Ok(0.0)
    }
}

/// One reconstruction run in progress.
pub struct Solver<'a, D: Denoiser> {
    projector: &'a Projector,
    y: &'a Sinogram,
    nominal: AngleSet,
    cfg: SolverConfig,
    denoiser: D,
    gamma_x: f64,
    gamma_theta: f64,
    state: SolverState,
    red_penalty: Option<f64>,
}

impl<'a, D: Denoiser> Solver<'a, D> {
    /// Validates the inputs, initializes `x` with the FBP at the nominal
    /// angles and `θ` with the nominal angles, and resolves default steps.
    pub fn new(
        projector: &'a Projector,
        y: &'a Sinogram,
        nominal: &AngleSet,
        cfg: SolverConfig,
        denoiser: D,
    ) -> Result<Self> {
        cfg.validate()?;
        Error::check_dim("sinogram angle count", nominal.len(), y.num_angles())?;
        Error::check_dim(
            "sinogram detector count",
            projector.num_detectors(),
            y.num_detectors(),
        )?;
        let x0 = projector.fbp(y, nominal)?;

        let mut gamma_x = 0.0;
        let mut gamma_theta = 0.0;
        if cfg.method.is_iterative() {
            gamma_x = match cfg.gamma_x {
                Some(g) => g,
                None => {
                    let lipschitz = projector.operator_norm_sq(nominal, POWER_ITERATIONS)?;
                    let tau = if cfg.method.uses_denoiser() { cfg.tau_x } else { 0.0 };
                    STEP_SAFETY / (lipschitz + tau)
                }
            };
            if cfg.method.calibrates() {
                gamma_theta = match cfg.gamma_theta {
                    Some(g) => g,
                    None => default_gamma_theta(projector, &x0, nominal, cfg.tau_theta)?,
                };
            }
        }

        Ok(Self {
            projector,
            y,
            nominal: nominal.clone(),
            state: SolverState {
                s: x0.clone(),
                x: x0,
                theta: nominal.clone(),
                u: nominal.clone(),
                q_prev: 1.0,
                q: 1.0,
                k: 0,
            },
            cfg,
            denoiser,
            gamma_x,
            gamma_theta,
            red_penalty: None,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SolverState {
        &mut self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn gamma_x(&self) -> f64 {
        self.gamma_x
    }

    pub fn gamma_theta(&self) -> f64 {
        self.gamma_theta
    }

    /// `(q_k, β_k)` for the next iteration.
    pub fn next_momentum(&self) -> (f64, f64) {
        let k = self.state.k + 1;
        let q = if self.cfg.accelerate && k >= 2 {
            next_q(self.state.q)
        } else {
            1.0
        };
        (q, (self.state.q - 1.0) / q)
    }

    /// Angle update at the accelerated pair `(s, u)`.
    pub fn theta_step(&mut self, beta: f64) -> Result<(), StepError> {
        let st = &mut self.state;
        let grad = self.projector.grad_theta(&st.s, self.y, &st.u)?;
        let mut theta = st.u.clone();
        for (((t, u), g), nominal) in theta
            .degrees_mut()
            .iter_mut()
            .zip(st.u.degrees())
            .zip(&grad)
            .zip(self.nominal.degrees())
        {
            let full = g + self.cfg.tau_theta * (u - nominal);
            *t = u - self.gamma_theta * full;
        }
        for ((u, t), prev) in st
            .u
            .degrees_mut()
            .iter_mut()
            .zip(theta.degrees())
            .zip(st.theta.degrees())
        {
            *u = t + beta * (t - prev);
        }
        st.theta = theta;
        Ok(())
    }

    fn finish_x_step(&mut self, x_new: ImageGrid, beta: f64) {
        let st = &mut self.state;
        let mut s = x_new.clone();
        for ((s, xn), xo) in s
            .values_mut()
            .iter_mut()
            .zip(x_new.values())
            .zip(st.x.values())
        {
            *s = xn + beta * (xn - xo);
        }
        st.x = x_new;
        st.s = s;
    }

    /// Plain gradient step on the data term at `s`, using the current `θ`.
    pub fn lsm_x_step(&mut self, beta: f64) -> Result<(), StepError> {
        let st = &self.state;
        let grad = self.projector.grad_x(&st.s, self.y, &st.theta)?;
        let mut x_new = st.s.clone();
        for (x, g) in x_new.values_mut().iter_mut().zip(grad.values()) {
            *x -= self.gamma_x * g;
        }
        self.finish_x_step(x_new, beta);
        Ok(())
    }

    /// RED step: data gradient plus `τx·(s - D_σ(s))`.
    pub fn red_x_step(&mut self, beta: f64) -> Result<(), StepError> {
        let st = &self.state;
        let grad = self.projector.grad_x(&st.s, self.y, &st.theta)?;
        let denoised = self.denoiser.denoise(&st.s)?;
        Error::check_dim("denoised image side", st.s.n(), denoised.n())?;
        if !denoised.is_finite() {
            return Err(Error::NonFinite("denoiser output").into());
        }
        let mut x_new = st.s.clone();
        for ((x, g), d) in x_new
            .values_mut()
            .iter_mut()
            .zip(grad.values())
            .zip(denoised.values())
        {
            let full = g + self.cfg.tau_x * (*x - d);
            *x -= self.gamma_x * full;
        }
        self.red_penalty = Some(red_penalty_from(&st.s, &denoised));
        self.finish_x_step(x_new, beta);
        Ok(())
    }

    /// Proximal gradient step with the anisotropic TV prox.
    pub fn fista_x_step(&mut self, beta: f64) -> Result<(), StepError> {
        let st = &self.state;
        let grad = self.projector.grad_x(&st.s, self.y, &st.theta)?;
        let mut z = st.s.clone();
        for (x, g) in z.values_mut().iter_mut().zip(grad.values()) {
            *x -= self.gamma_x * g;
        }
        let x_new = tv_prox(&z, self.gamma_x * self.cfg.tv_weight, self.cfg.tv_iterations)?;
        self.finish_x_step(x_new, beta);
        Ok(())
    }

    /// One full iteration: angle step (calibrating methods), image step,
    /// momentum bookkeeping.
    pub fn step(&mut self) -> Result<(), SolveError> {
        let iteration = self.state.k + 1;
        let (q, beta) = self.next_momentum();
        let abort = |source| SolveError::Aborted { iteration, source };
        if self.cfg.method.calibrates() {
            self.theta_step(beta).map_err(abort)?;
        }
        match self.cfg.method.without_calibration() {
            Method::Lsm => self.lsm_x_step(beta),
            Method::Fista => self.fista_x_step(beta),
            Method::Red => self.red_x_step(beta),
            _ => Ok(()),
        }
        .map_err(abort)?;
        self.state.q_prev = self.state.q;
        self.state.q = q;
        self.state.k = iteration;
        Ok(())
    }

    /// Trace row for the current iterate.
    pub fn record(&self, truth: GroundTruth<'_>, clock: &dyn Clock) -> Result<TraceRecord> {
        let st = &self.state;
        Ok(TraceRecord {
            k: st.k.max(1),
            objective: self.projector.data_fidelity(&st.x, self.y, &st.theta)?,
            red_penalty: self.red_penalty,
            snr_db: truth.image.map(|t| snr_db(&st.x, t)).transpose()?,
            angle_rmse_deg: truth.angles.map(|t| rmse_deg(&st.theta, t)).transpose()?,
            elapsed_ms: clock.elapsed_ms(),
        })
    }

    /// Runs the configured number of iterations (a single FBP for
    /// [`Method::Fbp`]) and records one trace row per iteration.
    pub fn run(mut self, truth: GroundTruth<'_>, clock: &dyn Clock) -> Result<RunResult, SolveError> {
        let mut trace = RunTrace::default();
        if !self.cfg.method.is_iterative() {
            trace.records.push(self.record(truth, clock)?);
        } else {
            for _ in 0..self.cfg.iterations {
                self.step()?;
                let rec = self.record(truth, clock).map_err(|e| SolveError::Aborted {
                    iteration: self.state.k,
                    source: e.into(),
                })?;
                trace.records.push(rec);
            }
        }
        Ok(RunResult {
            image: self.state.x,
            angles: self.state.theta,
            trace,
            gamma_x: self.gamma_x,
            gamma_theta: self.gamma_theta,
        })
    }
}

/// Runs `cfg.method` on `y` from the nominal angles.
pub fn run<D: Denoiser>(
    projector: &Projector,
    y: &Sinogram,
    nominal: &AngleSet,
    cfg: &SolverConfig,
    denoiser: D,
    truth: GroundTruth<'_>,
    clock: &dyn Clock,
) -> Result<RunResult, SolveError> {
    Solver::new(projector, y, nominal, cfg.clone(), denoiser)?.run(truth, clock)
}

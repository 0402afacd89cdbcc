//! Denoisers used as image priors.
//!
//! `σ` follows the 0–255 intensity convention of pretrained CNN denoisers.
//! Native denoisers map it linearly onto their own parameters:
//!
//! - Gaussian: kernel standard deviation `σ/10` pixels.
//! - TV: prox weight `0.5·σ/255`.
//!
//! The mapping only has to be monotone; callers tune `σ` empirically.

use alloc::boxed::Box;
use alloc::string::String;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::prelude::*;

/// Default number of dual iterations for the TV prox.
pub const TV_DEFAULT_ITERATIONS: usize = 50;
/// Dual step of the TV prox iterations, in units of `1/weight²`.
pub const TV_DUAL_STEP: f64 = 0.25;
/// Default subprocess timeout for external denoisers.
pub const EXTERNAL_DEFAULT_TIMEOUT_MS: u64 = 60_000;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum DenoiserSpec {
    Identity,
    Gaussian {
        sigma: f64,
    },
    Tv {
        sigma: f64,
        /// Overrides the weight derived from `sigma`.
        #[cfg_attr(feature = "serde", serde(default))]
        weight: Option<f64>,
        #[cfg_attr(feature = "serde", serde(default = "default_tv_iterations"))]
        iterations: usize,
    },
    /// A subprocess speaking the file protocol; executed by the `calred` crate.
    External {
        sigma: f64,
        command: Vec<String>,
        #[cfg_attr(feature = "serde", serde(default = "default_timeout"))]
        timeout_ms: u64,
    },
}

#[cfg(feature = "serde")]
fn default_tv_iterations() -> usize {
    TV_DEFAULT_ITERATIONS
}

#[cfg(feature = "serde")]
fn default_timeout() -> u64 {
    EXTERNAL_DEFAULT_TIMEOUT_MS
}

impl DenoiserSpec {
    pub fn tv(sigma: f64) -> Self {
        DenoiserSpec::Tv {
            sigma,
            weight: None,
            iterations: TV_DEFAULT_ITERATIONS,
        }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            DenoiserSpec::Identity => 0.0,
            DenoiserSpec::Gaussian { sigma }
            | DenoiserSpec::Tv { sigma, .. }
            | DenoiserSpec::External { sigma, .. } => sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigma = self.sigma();
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", "must be finite and nonnegative"));
        }
        match self {
            DenoiserSpec::Tv {
                weight, iterations, ..
            } => {
                if *iterations == 0 {
                    return Err(Error::invalid("tv iterations", "must be at least 1"));
                }
                if let Some(w) = weight {
                    if !(*w >= 0.0 && w.is_finite()) {
                        return Err(Error::invalid("tv weight", "must be finite and nonnegative"));
                    }
                }
            }
            DenoiserSpec::External { command, .. } if command.is_empty() => {
                return Err(Error::invalid("external command", "must not be empty"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Gaussian kernel standard deviation (pixels) for a given `σ`.
pub fn gaussian_std_for_sigma(sigma: f64) -> f64 {
    sigma / 10.0
}

/// TV prox weight for a given `σ`.
pub fn tv_weight_for_sigma(sigma: f64) -> f64 {
    0.5 * sigma / 255.0
}

#[derive(Debug, thiserror::Error)]
pub enum DenoiseError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("external denoiser failed: {0}")]
    External(Box<dyn core::error::Error + Send + Sync>),
}

/// `D_σ`. Implementations must return an image of the input's shape.
pub trait Denoiser {
    fn denoise(&mut self, x: &ImageGrid) -> Result<ImageGrid, DenoiseError>;
}

impl<D: Denoiser + ?Sized> Denoiser for &mut D {
    fn denoise(&mut self, x: &ImageGrid) -> Result<ImageGrid, DenoiseError> {
        (**self).denoise(x)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn denoise(&mut self, x: &ImageGrid) -> Result<ImageGrid, DenoiseError> {
        (**self).denoise(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiseResult {
    pub image: ImageGrid,
    /// `‖input - output‖₂`.
    pub residual_norm: f64,
}

/// Identity, Gaussian and TV denoisers.
#[derive(Clone, Debug, PartialEq)]
pub enum NativeDenoiser {
    Identity,
    Gaussian { std: f64 },
    Tv { weight: f64, iterations: usize },
}

impl NativeDenoiser {
    /// Fails for [`DenoiserSpec::External`], which needs a process runner.
    pub fn from_spec(spec: &DenoiserSpec) -> Result<Self> {
        spec.validate()?;
        Ok(match *spec {
            DenoiserSpec::Identity => NativeDenoiser::Identity,
            DenoiserSpec::Gaussian { sigma } => NativeDenoiser::Gaussian {
                std: gaussian_std_for_sigma(sigma),
            },
            DenoiserSpec::Tv {
                sigma,
                weight,
                iterations,
            } => NativeDenoiser::Tv {
                weight: weight.unwrap_or_else(|| tv_weight_for_sigma(sigma)),
                iterations,
            },
            DenoiserSpec::External { .. } => {
                return Err(Error::invalid(
                    "denoiser",
                    "external denoisers are not available in the numerical core",
                ))
            }
        })
    }

    pub fn apply(&self, x: &ImageGrid) -> Result<ImageGrid> {
        x.check_finite("denoiser input")?;
        match *self {
            NativeDenoiser::Identity => Ok(x.clone()),
            NativeDenoiser::Gaussian { std } => Ok(gaussian_smooth(x, std)),
            NativeDenoiser::Tv { weight, iterations } => tv_prox(x, weight, iterations),
        }
    }
}

impl Denoiser for NativeDenoiser {
    fn denoise(&mut self, x: &ImageGrid) -> Result<ImageGrid, DenoiseError> {
        Ok(self.apply(x)?)
    }
}

/// Runs `denoiser` on `x` and reports the residual norm.
pub fn denoise_with(denoiser: &mut dyn Denoiser, x: &ImageGrid) -> Result<DenoiseResult, DenoiseError> {
    let image = denoiser.denoise(x)?;
    Error::check_dim("denoised image side", x.n(), image.n())?;
    let residual_norm = x
        .values()
        .iter()
        .zip(image.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(DenoiseResult {
        image,
        residual_norm,
    })
}

/// Evaluates a native denoiser spec on `x`.
pub fn denoise(spec: &DenoiserSpec, x: &ImageGrid) -> Result<DenoiseResult, DenoiseError> {
    let mut d = NativeDenoiser::from_spec(spec)?;
    denoise_with(&mut d, x)
}

/// `½⟨x, x - D_σ(x)⟩`: the regularizer whose gradient is `x - D_σ(x)` for
/// locally homogeneous denoisers with symmetric Jacobian. Diagnostic only.
pub fn red_penalty(denoiser: &mut dyn Denoiser, x: &ImageGrid) -> Result<f64, DenoiseError> {
    let d = denoiser.denoise(x)?;
    Error::check_dim("denoised image side", x.n(), d.n())?;
    Ok(red_penalty_from(x, &d))
}

pub(crate) fn red_penalty_from(x: &ImageGrid, denoised: &ImageGrid) -> f64 {
    0.5 * x
        .values()
        .iter()
        .zip(denoised.values())
        .map(|(a, b)| a * (a - b))
        .sum::<f64>()
}

/// Separable Gaussian blur with half-sample symmetric boundaries.
///
/// With that boundary the blur is a symmetric matrix that preserves
/// constants. `std <= 0` returns the input unchanged.
pub fn gaussian_smooth(x: &ImageGrid, std: f64) -> ImageGrid {
    if std <= 0.0 {
        return x.clone();
    }
    let radius = (3.0 * std).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * std * std)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let n = x.n();
    let reflect = |i: isize| -> usize {
        let period = 2 * n as isize;
        let m = i.rem_euclid(period);
        if m < n as isize {
            m as usize
        } else {
            (period - 1 - m) as usize
        }
    };

    let src = x.values();
    let mut tmp = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            tmp[r * n + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * src[r * n + reflect(c as isize + k as isize - radius)])
                .sum();
        }
    }
    let mut out = ImageGrid::zeros(n);
    let dst = out.values_mut();
    for r in 0..n {
        for c in 0..n {
            dst[r * n + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[reflect(r as isize + k as isize - radius) * n + c])
                .sum();
        }
    }
    out
}

/// Anisotropic total variation `Σ |∂ₓu| + |∂ᵧu|` with forward differences.
pub fn total_variation(x: &ImageGrid) -> f64 {
    let n = x.n();
    let v = x.values();
    let mut tv = 0.0;
    for r in 0..n {
        for c in 0..n {
            let u = v[r * n + c];
            if c + 1 < n {
                tv += (v[r * n + c + 1] - u).abs();
            }
            if r + 1 < n {
                tv += (v[(r + 1) * n + c] - u).abs();
            }
        }
    }
    tv
}

/// Dual projected-gradient solver for `min_u ½‖u - x‖² + weight·TV(u)`
/// (anisotropic TV, Neumann boundary).
///
/// The dual variable `p = (p_h, p_v)` lives in the unit box and
/// `u = x - weight·Dᵀp`. Each iteration is one projected gradient step on
/// `½‖x - weight·Dᵀp‖²` with step `TV_DUAL_STEP/weight²`, which is below
/// `2/L` because `‖D‖² < 8`; the dual value therefore never decreases.
#[derive(Clone, Debug)]
pub struct TvProx {
    n: usize,
    weight: f64,
    input: Vec<f64>,
    u: Vec<f64>,
    ph: Vec<f64>,
    pv: Vec<f64>,
}

impl TvProx {
    pub fn new(x: &ImageGrid, weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::invalid("tv weight", "must be finite and nonnegative"));
        }
        x.check_finite("tv input")?;
        let n = x.n();
        Ok(Self {
            n,
            weight,
            input: x.values().to_vec(),
            u: x.values().to_vec(),
            ph: vec![0.0; n * n],
            pv: vec![0.0; n * n],
        })
    }

    pub fn step(&mut self) {
        if self.weight == 0.0 {
            return;
        }
        let n = self.n;
        let gain = TV_DUAL_STEP / self.weight;
        for r in 0..n {
            for c in 0..n {
                let i = r * n + c;
                if c + 1 < n {
                    let g = self.u[i + 1] - self.u[i];
                    self.ph[i] = (self.ph[i] + gain * g).clamp(-1.0, 1.0);
                }
                if r + 1 < n {
                    let g = self.u[i + n] - self.u[i];
                    self.pv[i] = (self.pv[i] + gain * g).clamp(-1.0, 1.0);
                }
            }
        }
        self.update_primal();
    }

    fn update_primal(&mut self) {
        let n = self.n;
        for r in 0..n {
            for c in 0..n {
                let i = r * n + c;
                // (Dᵀp)_i
                let mut dtp = 0.0;
                if c > 0 {
                    dtp += self.ph[i - 1];
                }
                if c + 1 < n {
                    dtp -= self.ph[i];
                }
                if r > 0 {
                    dtp += self.pv[i - n];
                }
                if r + 1 < n {
                    dtp -= self.pv[i];
                }
                self.u[i] = self.input[i] - self.weight * dtp;
            }
        }
    }

    /// Current primal estimate `u = x - weight·Dᵀp`.
    pub fn image(&self) -> ImageGrid {
        ImageGrid::from_fn(self.n, |r, c| self.u[r * self.n + c])
    }

    /// `½‖u - x‖² + weight·TV(u)` at the current estimate.
    pub fn primal_value(&self) -> f64 {
        let fit: f64 = self
            .u
            .iter()
            .zip(&self.input)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        0.5 * fit + self.weight * total_variation(&self.image())
    }

    /// Dual objective `½‖x‖² - ½‖u‖²`; a lower bound on the optimal primal value.
    pub fn dual_value(&self) -> f64 {
        let xx: f64 = self.input.iter().map(|v| v * v).sum();
        let uu: f64 = self.u.iter().map(|v| v * v).sum();
        0.5 * (xx - uu)
    }
}

/// Approximate TV proximal operator with `iterations` dual steps.
/// `weight == 0` returns `x` exactly.
pub fn tv_prox(x: &ImageGrid, weight: f64, iterations: usize) -> Result<ImageGrid> {
    if iterations == 0 {
        return Err(Error::invalid("tv iterations", "must be at least 1"));
    }
    let mut prox = TvProx::new(x, weight)?;
    if weight == 0.0 {
        return Ok(x.clone());
    }
    for _ in 0..iterations {
        prox.step();
    }
    Ok(prox.image())
}

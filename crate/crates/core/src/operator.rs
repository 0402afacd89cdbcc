//! Pixel-driven parallel-beam Radon transform.
//!
//! Geometry: pixel `(r, c)` of an `n×n` image sits at `x = c - (n-1)/2`,
//! `y = (n-1)/2 - r`. A projection at angle `θ` integrates along rays
//! perpendicular to `(cos θ, sin θ)`, so pixel mass lands at detector
//! coordinate `t = x cos θ + y sin θ`. Detector bins have unit pitch and bin
//! `(D-1)/2` is centered on the rotation axis. Each pixel's value is split
//! between the two nearest bins by linear interpolation; the back-projection
//! gathers with the very same weights, so it is the exact transpose.

use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::Radix2;
use crate::grid::{AngleSet, ImageGrid, Sinogram};
use crate::par::for_each_row;
use crate::prelude::*;

/// Central-difference step of the finite-difference angle derivative, degrees.
pub const FD_STEP_DEG: f64 = 1e-3;

const RAD_PER_DEG: f64 = PI / 180.0;

/// Which pixels of the square grid take part in the projection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SupportMask {
    FullSquare,
    /// Pixels whose centers lie within `n/2` of the rotation axis. Everything
    /// outside is treated as zero, which makes projections rotation-consistent.
    #[default]
    InscribedDisk,
}

/// How `d/dθ` of a projection row is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AngleDerivative {
    /// Exact derivative of the discrete projector: the interpolation weights
    /// are differentiated with respect to the angle.
    #[default]
    Analytic,
    /// Central difference of [`Projector::project_row`] with step
    /// [`FD_STEP_DEG`].
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProjectorConfig {
    pub n: usize,
    pub num_detectors: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub support_mask: SupportMask,
    #[cfg_attr(feature = "serde", serde(default))]
    pub angle_derivative: AngleDerivative,
}

impl ProjectorConfig {
    /// Defaults for an `n×n` image: [`default_num_detectors`], inscribed-disk
    /// support, analytic angle derivative.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            num_detectors: default_num_detectors(n),
            support_mask: SupportMask::default(),
            angle_derivative: AngleDerivative::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("image side", "must be at least 2"));
        }
        if self.num_detectors % 2 == 0 {
            return Err(Error::invalid(
                "num_detectors",
                "must be odd so that one bin is centered on the rotation axis",
            ));
        }
        Ok(())
    }
}

/// Smallest odd integer `>= n·√2`: covers the image diagonal and has a
/// center bin.
pub fn default_num_detectors(n: usize) -> usize {
    let d = (n as f64 * core::f64::consts::SQRT_2).ceil() as usize;
    if d % 2 == 0 {
        d + 1
    } else {
        d
    }
}

#[derive(Clone, Copy, Debug)]
struct Pixel {
    index: usize,
    x: f64,
    y: f64,
}

#[derive(Clone, Copy, Debug)]
struct Trig {
    cos: f64,
    sin: f64,
}

impl Trig {
    #[inline]
    fn from_degrees(deg: f64) -> Self {
        let (sin, cos) = (deg * RAD_PER_DEG).sin_cos();
        Trig { cos, sin }
    }
}

/// Ram-Lak filter sampled on a zero-padded power-of-two grid.
#[derive(Clone, Debug)]
struct RampFilter {
    fft: Radix2,
    response: Vec<f64>,
}

impl RampFilter {
    fn new(num_detectors: usize) -> Self {
        let len = (2 * num_detectors).next_power_of_two();
        let fft = Radix2::new(len);
        // Band-limited ramp sampled in space (h[0] = 1/4, h[odd k] = -1/(πk)²),
        // then transformed. Sampling in space avoids the DC offset of a
        // ramp defined directly on the frequency grid.
        let mut re = vec![0.0; len];
        let mut im = vec![0.0; len];
        re[0] = 0.25;
        for (k, v) in re.iter_mut().enumerate().skip(1) {
            let m = if k < len / 2 { k as i64 } else { k as i64 - len as i64 };
            if m % 2 != 0 {
                *v = -1.0 / (PI * m as f64).powi(2);
            }
        }
        fft.process(&mut re, &mut im, false);
        // 2|f| convention, paired with the π/(2·angles) back-projection scale.
        let response = re.iter().map(|v| 2.0 * v).collect();
        RampFilter { fft, response }
    }

    fn apply(&self, row: &[f64], out: &mut [f64]) {
        let len = self.fft.len();
        let mut re = vec![0.0; len];
        let mut im = vec![0.0; len];
        re[..row.len()].copy_from_slice(row);
        self.fft.process(&mut re, &mut im, false);
        for ((r, i), h) in re.iter_mut().zip(im.iter_mut()).zip(&self.response) {
            *r *= h;
            *i *= h;
        }
        self.fft.process(&mut re, &mut im, true);
        let scale = 1.0 / len as f64;
        for (o, r) in out.iter_mut().zip(&re) {
            *o = r * scale;
        }
    }
}

/// The measurement operator `H_θ` for one image size and detector layout.
///
/// Immutable after construction; share it freely across threads.
#[derive(Clone, Debug)]
pub struct Projector {
    cfg: ProjectorConfig,
    center: f64,
    half: f64,
    pixels: Vec<Pixel>,
    support: Vec<bool>,
    ramp: RampFilter,
}

impl Projector {
    pub fn new(cfg: ProjectorConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n;
        let half = (n as f64 - 1.0) / 2.0;
        let radius_sq = (n as f64 / 2.0).powi(2);
        let mut support = vec![false; n * n];
        let mut pixels = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let x = c as f64 - half;
                let y = half - r as f64;
                let inside = match cfg.support_mask {
                    SupportMask::FullSquare => true,
                    SupportMask::InscribedDisk => x * x + y * y <= radius_sq,
                };
                if inside {
                    support[r * n + c] = true;
                    pixels.push(Pixel {
                        index: r * n + c,
                        x,
                        y,
                    });
                }
            }
        }
        Ok(Self {
            center: (cfg.num_detectors as f64 - 1.0) / 2.0,
            half,
            pixels,
            support,
            ramp: RampFilter::new(cfg.num_detectors),
            cfg,
        })
    }

    pub fn config(&self) -> &ProjectorConfig {
        &self.cfg
    }

    pub fn n(&self) -> usize {
        self.cfg.n
    }

    pub fn num_detectors(&self) -> usize {
        self.cfg.num_detectors
    }

    /// Row-major support mask; `false` pixels are ignored by the projector.
    pub fn support(&self) -> &[bool] {
        &self.support
    }

    /// Zeroes every pixel outside the support.
    pub fn apply_support(&self, x: &ImageGrid) -> ImageGrid {
        let mut out = x.clone();
        for (v, &keep) in out.values_mut().iter_mut().zip(&self.support) {
            if !keep {
                *v = 0.0;
            }
        }
        out
    }

    #[inline]
    fn position(&self, px: &Pixel, t: Trig) -> f64 {
        px.x * t.cos + px.y * t.sin + self.center
    }

    /// Splits a detector position into the lower bin and the upper weight.
    #[inline]
    fn bins(p: f64) -> (isize, f64) {
        let lo = p.floor();
        (lo as isize, p - lo)
    }

    #[inline]
    fn deposit(&self, row: &mut [f64], bin: isize, v: f64) {
        if bin >= 0 && (bin as usize) < row.len() {
            row[bin as usize] += v;
        }
    }

    #[inline]
    fn sample(&self, row: &[f64], bin: isize) -> f64 {
        if bin >= 0 && (bin as usize) < row.len() {
            row[bin as usize]
        } else {
            0.0
        }
    }

    /// One projection row of raw image values (`n*n`, row-major) at `angle_deg`.
    pub fn project_row(&self, x: &[f64], angle_deg: f64, row: &mut [f64]) {
        self.project_row_trig(x, Trig::from_degrees(angle_deg), row);
    }

    fn project_row_trig(&self, x: &[f64], t: Trig, row: &mut [f64]) {
        row.fill(0.0);
        for px in &self.pixels {
            let v = x[px.index];
            let (j, w) = Self::bins(self.position(px, t));
            self.deposit(row, j, (1.0 - w) * v);
            self.deposit(row, j + 1, w * v);
        }
    }

    fn derivative_row_trig(&self, x: &[f64], t: Trig, row: &mut [f64]) {
        row.fill(0.0);
        for px in &self.pixels {
            let v = x[px.index];
            let (j, _) = Self::bins(self.position(px, t));
            // dt/dθ for θ in degrees
            let dv = v * (px.y * t.cos - px.x * t.sin) * RAD_PER_DEG;
            self.deposit(row, j, -dv);
            self.deposit(row, j + 1, dv);
        }
    }

    fn check_image(&self, x: &ImageGrid) -> Result<()> {
        Error::check_dim("image side", self.cfg.n, x.n())?;
        x.check_finite("image")
    }

    fn check_sinogram(&self, y: &Sinogram, angles: &AngleSet) -> Result<()> {
        Error::check_dim("sinogram angle count", angles.len(), y.num_angles())?;
        Error::check_dim(
            "sinogram detector count",
            self.cfg.num_detectors,
            y.num_detectors(),
        )
    }

    /// `H_θ x`: row `i` holds the line integrals of `x` at angle `i`.
    pub fn forward_project(&self, x: &ImageGrid, angles: &AngleSet) -> Result<Sinogram> {
        self.check_image(x)?;
        let mut out = Sinogram::zeros(angles.len(), self.cfg.num_detectors);
        let deg = angles.degrees();
        let values = x.values();
        for_each_row(out.values_mut(), self.cfg.num_detectors, |i, row| {
            self.project_row_trig(values, Trig::from_degrees(deg[i]), row)
        });
        Ok(out)
    }

    /// `H_θᵀ y`, the exact adjoint of [`Projector::forward_project`].
    pub fn back_project(&self, y: &Sinogram, angles: &AngleSet) -> Result<ImageGrid> {
        self.check_sinogram(y, angles)?;
        let n = self.cfg.n;
        let d = self.cfg.num_detectors;
        let trig: Vec<Trig> = angles.degrees().iter().map(|&a| Trig::from_degrees(a)).collect();
        let data = y.values();
        let mut out = ImageGrid::zeros(n);
        for_each_row(out.values_mut(), n, |r, img_row| {
            for (c, v) in img_row.iter_mut().enumerate() {
                if !self.support[r * n + c] {
                    continue;
                }
                let px = Pixel {
                    index: r * n + c,
                    x: c as f64 - self.half,
                    y: self.half - r as f64,
                };
                let mut acc = 0.0;
                for (i, &t) in trig.iter().enumerate() {
                    let row = &data[i * d..(i + 1) * d];
                    let (j, w) = Self::bins(self.position(&px, t));
                    acc += (1.0 - w) * self.sample(row, j) + w * self.sample(row, j + 1);
                }
                *v = acc;
            }
        });
        Ok(out)
    }

    /// Filtered back-projection: Ram-Lak filtering of every row (zero-padded
    /// to the next power of two `>= 2·num_detectors`), back-projection, and
    /// scaling by `π / (2·num_angles)`.
    pub fn fbp(&self, y: &Sinogram, angles: &AngleSet) -> Result<ImageGrid> {
        self.check_sinogram(y, angles)?;
        let d = self.cfg.num_detectors;
        let mut filtered = Sinogram::zeros(y.num_angles(), d);
        for_each_row(filtered.values_mut(), d, |i, row| {
            self.ramp.apply(y.row(i), row)
        });
        let bp = self.back_project(&filtered, angles)?;
        let scale = PI / (2.0 * angles.len() as f64);
        Ok(bp.scaled(scale))
    }

    /// `H_θ x - y`.
    pub fn residual(&self, x: &ImageGrid, y: &Sinogram, angles: &AngleSet) -> Result<Sinogram> {
        self.check_sinogram(y, angles)?;
        let mut r = self.forward_project(x, angles)?;
        for (a, b) in r.values_mut().iter_mut().zip(y.values()) {
            *a -= b;
        }
        Ok(r)
    }

    /// `½‖y - H_θ x‖²`.
    pub fn data_fidelity(&self, x: &ImageGrid, y: &Sinogram, angles: &AngleSet) -> Result<f64> {
        Ok(0.5 * self.residual(x, y, angles)?.norm_sq())
    }

    /// `H_θᵀ (H_θ x - y)`.
    pub fn grad_x(&self, x: &ImageGrid, y: &Sinogram, angles: &AngleSet) -> Result<ImageGrid> {
        let r = self.residual(x, y, angles)?;
        self.back_project(&r, angles)
    }

    /// `d/dθ` of the projection row at `angle_deg`, per degree.
    pub fn projection_angle_derivative(&self, x: &ImageGrid, angle_deg: f64) -> Result<Vec<f64>> {
        self.check_image(x)?;
        if !angle_deg.is_finite() {
            return Err(Error::NonFinite("angle"));
        }
        let mut row = vec![0.0; self.cfg.num_detectors];
        self.angle_derivative_into(x.values(), angle_deg, &mut row);
        Ok(row)
    }

    fn angle_derivative_into(&self, x: &[f64], angle_deg: f64, row: &mut [f64]) {
        match self.cfg.angle_derivative {
            AngleDerivative::Analytic => {
                self.derivative_row_trig(x, Trig::from_degrees(angle_deg), row)
            }
            AngleDerivative::FiniteDifference => {
                let mut lo = vec![0.0; row.len()];
                self.project_row(x, angle_deg + FD_STEP_DEG, row);
                self.project_row(x, angle_deg - FD_STEP_DEG, &mut lo);
                for (h, l) in row.iter_mut().zip(&lo) {
                    *h = (*h - l) / (2.0 * FD_STEP_DEG);
                }
            }
        }
    }

    /// `∂g/∂θ_i = -⟨y_i - (H_θ x)_i, d(H_θ x)_i/dθ_i⟩` for every angle.
    /// Component `i` depends on `θ_i` only.
    pub fn grad_theta(&self, x: &ImageGrid, y: &Sinogram, angles: &AngleSet) -> Result<Vec<f64>> {
        self.check_image(x)?;
        self.check_sinogram(y, angles)?;
        let d = self.cfg.num_detectors;
        let deg = angles.degrees();
        let values = x.values();
        let mut out = vec![0.0; angles.len()];
        for_each_row(&mut out, 1, |i, slot| {
            let mut proj = vec![0.0; d];
            let mut deriv = vec![0.0; d];
            self.project_row(values, deg[i], &mut proj);
            self.angle_derivative_into(values, deg[i], &mut deriv);
            let measured = y.row(i);
            slot[0] = -proj
                .iter()
                .zip(measured)
                .zip(&deriv)
                .map(|((p, m), dv)| (m - p) * dv)
                .sum::<f64>();
        });
        Ok(out)
    }

    /// Power-iteration estimate of `‖H_θᵀ H_θ‖` (the Lipschitz constant of
    /// the data-fidelity gradient). Starts from the support indicator.
    pub fn operator_norm_sq(&self, angles: &AngleSet, iterations: usize) -> Result<f64> {
        let n = self.cfg.n;
        let mut v = ImageGrid::from_fn(n, |r, c| if self.support[r * n + c] { 1.0 } else { 0.0 });
        let mut estimate = 0.0;
        for _ in 0..iterations.max(1) {
            let norm = v.norm();
            if norm == 0.0 {
                return Ok(0.0);
            }
            v = v.scaled(1.0 / norm);
            let hv = self.forward_project(&v, angles)?;
            estimate = hv.norm_sq();
            v = self.back_project(&hv, angles)?;
        }
        Ok(estimate)
    }
}

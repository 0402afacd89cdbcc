//! Dense containers for images, sinograms and projection angles.

use crate::error::{Error, Result};
use crate::prelude::*;

/// Square image, row-major, pixel `(0, 0)` at the top-left corner.
///
/// The physical center sits at pixel-center `((n-1)/2, (n-1)/2)` and the
/// pixel pitch is one unit.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    n: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    /// Wraps `values` (length `n*n`, row-major). Rejects `n < 2` and
    /// non-finite entries.
    pub fn from_vec(n: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("image side", "must be at least 2"));
        }
        Error::check_dim("image values", n * n, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image"));
        }
        Ok(Self { n, values })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                values.push(f(r, c));
            }
        }
        Self { n, values }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n + col]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &ImageGrid) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.values, &self.values)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scaled(&self, a: f64) -> ImageGrid {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid {
            n: self.n,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }
}

/// Projection data: one row per angle, one column per detector bin.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    num_angles: usize,
    num_detectors: usize,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(num_angles: usize, num_detectors: usize) -> Self {
        Self {
            num_angles,
            num_detectors,
            values: vec![0.0; num_angles * num_detectors],
        }
    }

    pub fn from_vec(num_angles: usize, num_detectors: usize, values: Vec<f64>) -> Result<Self> {
        if num_angles == 0 || num_detectors == 0 {
            return Err(Error::invalid("sinogram shape", "dimensions must be positive"));
        }
        Error::check_dim("sinogram values", num_angles * num_detectors, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sinogram"));
        }
        Ok(Self {
            num_angles,
            num_detectors,
            values,
        })
    }

    #[inline]
    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    #[inline]
    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_detectors..(i + 1) * self.num_detectors]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.num_detectors..(i + 1) * self.num_detectors]
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.values, &self.values)
    }

    pub fn dot(&self, other: &Sinogram) -> f64 {
        dot(&self.values, &other.values)
    }
}

/// Ordered projection angles in degrees, counter-clockwise from `+x`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct AngleSet {
    angles_deg: Vec<f64>,
}

impl AngleSet {
    pub fn new(angles_deg: Vec<f64>) -> Result<Self> {
        if angles_deg.is_empty() {
            return Err(Error::invalid("angle set", "must contain at least one angle"));
        }
        if angles_deg.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("angle set"));
        }
        Ok(Self { angles_deg })
    }

    /// `count` angles evenly spaced on the half circle `[0°, 180°)`.
    pub fn half_circle(count: usize) -> Result<Self> {
        let step = 180.0 / count as f64;
        Self::new((0..count).map(|i| i as f64 * step).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    #[inline]
    pub fn degrees(&self) -> &[f64] {
        &self.angles_deg
    }

    #[inline]
    pub fn degrees_mut(&mut self) -> &mut [f64] {
        &mut self.angles_deg
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.angles_deg
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

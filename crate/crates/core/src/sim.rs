//! Simulation harness: phantoms, angle perturbation, noisy sinograms and the
//! two quality metrics (image SNR, angular RMSE).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{AngleSet, ImageGrid, Sinogram};
use crate::operator::Projector;
use crate::prelude::*;
use crate::rng::{stream_rng, Stream};

/// Acquisition protocol of one simulated experiment.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentSpec {
    pub n: usize,
    /// Evenly spaced on `[0°, 180°)`.
    pub num_angles: usize,
    pub angle_noise_sd_deg: f64,
    /// `None` disables measurement noise.
    pub input_snr_db: Option<f64>,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            num_angles: 90,
            angle_noise_sd_deg: 0.0,
            input_snr_db: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_angles == 0 {
            return Err(Error::invalid("num_angles", "must be at least 1"));
        }
        if !(self.angle_noise_sd_deg >= 0.0 && self.angle_noise_sd_deg.is_finite()) {
            return Err(Error::invalid("angle noise sd", "must be finite and nonnegative"));
        }
        if let Some(snr) = self.input_snr_db {
            if snr.is_nan() {
                return Err(Error::invalid("input snr", "must not be NaN"));
            }
        }
        Ok(())
    }

    pub fn nominal_angles(&self) -> Result<AngleSet> {
        AngleSet::half_circle(self.num_angles)
    }

    /// Nominal angles, the perturbed true angles, and the sinogram measured
    /// at the true angles. Angles and noise use independent streams of `seed`.
    pub fn simulate(&self, projector: &Projector, image: &ImageGrid) -> Result<Simulation> {
        self.validate()?;
        let nominal = self.nominal_angles()?;
        let true_angles = perturb_angles(&nominal, self.angle_noise_sd_deg, self.seed)?;
        let snr = self.input_snr_db.unwrap_or(f64::INFINITY);
        let sinogram = synth_sinogram(projector, image, &true_angles, snr, self.seed)?;
        Ok(Simulation {
            nominal,
            true_angles,
            sinogram,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub nominal: AngleSet,
    pub true_angles: AngleSet,
    pub sinogram: Sinogram,
}

/// Modified Shepp-Logan table (Toft): intensity, semi-axes `(a, b)`,
/// center `(x0, y0)` on `[-1, 1]²`, rotation in degrees.
const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Modified Shepp-Logan phantom, sampled at pixel centers. Values lie in
/// `[0, 1]`. Requires `n >= 16`.
pub fn shepp_logan(n: usize) -> Result<ImageGrid> {
    if n < 16 {
        return Err(Error::invalid("phantom size", "must be at least 16"));
    }
    let half = (n as f64 - 1.0) / 2.0;
    let scale = n as f64 / 2.0;
    let ellipses: Vec<_> = SHEPP_LOGAN
        .iter()
        .map(|&[a, ax, bx, x0, y0, phi]| {
            let (s, c) = phi.to_radians().sin_cos();
            (a, ax, bx, x0, y0, c, s)
        })
        .collect();
    Ok(ImageGrid::from_fn(n, |r, col| {
        let x = (col as f64 - half) / scale;
        let y = (half - r as f64) / scale;
        let mut v = 0.0;
        for &(a, ax, bx, x0, y0, c, s) in &ellipses {
            let dx = x - x0;
            let dy = y - y0;
            let u = dx * c + dy * s;
            let w = -dx * s + dy * c;
            if (u / ax).powi(2) + (w / bx).powi(2) <= 1.0 {
                v += a;
            }
        }
        v.clamp(0.0, 1.0)
    }))
}

/// Centered disk of unit intensity and the given radius in pixels.
pub fn disk_phantom(n: usize, radius: f64) -> ImageGrid {
    let half = (n as f64 - 1.0) / 2.0;
    ImageGrid::from_fn(n, |r, c| {
        let x = c as f64 - half;
        let y = half - r as f64;
        if x * x + y * y <= radius * radius {
            1.0
        } else {
            0.0
        }
    })
}

/// Adds i.i.d. `N(0, sd_deg²)` offsets to every angle. `sd_deg == 0` returns
/// the input unchanged.
pub fn perturb_angles(nominal: &AngleSet, sd_deg: f64, seed: u64) -> Result<AngleSet> {
    if !(sd_deg >= 0.0 && sd_deg.is_finite()) {
        return Err(Error::invalid("angle noise sd", "must be finite and nonnegative"));
    }
    if sd_deg == 0.0 {
        return Ok(nominal.clone());
    }
    let mut rng = stream_rng(seed, Stream::AnglePerturbation);
    AngleSet::new(
        nominal
            .degrees()
            .iter()
            .map(|a| {
                let z: f64 = rng.sample(StandardNormal);
                a + sd_deg * z
            })
            .collect(),
    )
}

/// `H_θ x + e` with Gaussian `e` rescaled so that
/// `10·log10(‖H_θ x‖² / ‖e‖²)` equals `input_snr_db`. An infinite target
/// returns the clean projection.
pub fn synth_sinogram(
    projector: &Projector,
    x: &ImageGrid,
    true_angles: &AngleSet,
    input_snr_db: f64,
    seed: u64,
) -> Result<Sinogram> {
    if input_snr_db.is_nan() || input_snr_db == f64::NEG_INFINITY {
        return Err(Error::invalid("input snr", "must be a number or +inf"));
    }
    let mut y = projector.forward_project(x, true_angles)?;
    if input_snr_db == f64::INFINITY {
        return Ok(y);
    }
    let signal = y.norm_sq().sqrt();
    if signal == 0.0 {
        return Err(Error::invalid(
            "image",
            "projection is identically zero, so the input SNR is undefined",
        ));
    }
    let mut rng = stream_rng(seed, Stream::SinogramNoise);
    let noise: Vec<f64> = (0..y.values().len()).map(|_| rng.sample(StandardNormal)).collect();
    let noise_norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = signal / (noise_norm * 10f64.powf(input_snr_db / 20.0));
    for (v, e) in y.values_mut().iter_mut().zip(&noise) {
        *v += scale * e;
    }
    Ok(y)
}

/// `10·log10(‖x‖² / ‖x - x̂‖²)` in dB; `+∞` when the estimate is exact.
pub fn snr_db(estimate: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    Error::check_dim("image side", reference.n(), estimate.n())?;
    let signal = reference.norm_sq();
    if signal == 0.0 {
        return Err(Error::invalid("reference image", "must not be all zeros"));
    }
    let err: f64 = reference
        .values()
        .iter()
        .zip(estimate.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / err).log10())
}

/// Root-mean-square angle difference in degrees.
pub fn rmse_deg(estimate: &AngleSet, truth: &AngleSet) -> Result<f64> {
    Error::check_dim("angle count", truth.len(), estimate.len())?;
    let sum: f64 = estimate
        .degrees()
        .iter()
        .zip(truth.degrees())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum / truth.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::ProjectorConfig;

    #[test]
    fn phantom_basics() {
        assert!(shepp_logan(8).is_err());
        let p = shepp_logan(64).unwrap();
        let center = p.get(32, 32);
        assert!(center > 0.0 && center <= 1.0);
        assert!(p.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(p, shepp_logan(64).unwrap());
        // corners are outside every ellipse
        assert_eq!(p.get(0, 0), 0.0);
    }

    #[test]
    fn perturbation_contract() {
        let a = AngleSet::half_circle(90).unwrap();
        assert_eq!(perturb_angles(&a, 0.0, 4).unwrap(), a);
        let b = perturb_angles(&a, 5.0, 4).unwrap();
        assert_ne!(b, perturb_angles(&a, 5.0, 5).unwrap());
        assert_eq!(b, perturb_angles(&a, 5.0, 4).unwrap());
        assert!(perturb_angles(&a, -1.0, 4).is_err());
    }

    #[test]
    fn metric_examples() {
        let x = shepp_logan(32).unwrap();
        assert!((snr_db(&x.scaled(0.9), &x).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(snr_db(&x, &x).unwrap(), f64::INFINITY);
        assert!(snr_db(&x, &ImageGrid::zeros(32)).is_err());
        assert!(snr_db(&ImageGrid::zeros(16), &x).is_err());

        let a = AngleSet::new(vec![10.0, 20.0]).unwrap();
        assert_eq!(rmse_deg(&a, &a).unwrap(), 0.0);
        let shifted = AngleSet::new(vec![12.0, 22.0]).unwrap();
        assert!((rmse_deg(&shifted, &a).unwrap() - 2.0).abs() < 1e-12);
        let pm = AngleSet::new(vec![11.0, 19.0]).unwrap();
        assert!((rmse_deg(&pm, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(rmse_deg(&AngleSet::new(vec![1.0]).unwrap(), &a).is_err());
    }

    #[test]
    fn synth_noiseless_and_zero_image() {
        let p = Projector::new(ProjectorConfig::new(16)).unwrap();
        let x = shepp_logan(16).unwrap();
        let a = AngleSet::half_circle(8).unwrap();
        let y = synth_sinogram(&p, &x, &a, f64::INFINITY, 1).unwrap();
        assert_eq!(y, p.forward_project(&x, &a).unwrap());
        assert!(synth_sinogram(&p, &ImageGrid::zeros(16), &a, 30.0, 1).is_err());
        assert!(synth_sinogram(&p, &x, &a, f64::NAN, 1).is_err());
    }
}

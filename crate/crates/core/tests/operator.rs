use calred_core::denoise::gaussian_smooth;
use calred_core::operator::FD_STEP_DEG;
use calred_core::sim::{disk_phantom, shepp_logan, snr_db};
use calred_core::{AngleDerivative, AngleSet, ImageGrid, Projector, ProjectorConfig, Sinogram};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(n: usize, rng: &mut ChaCha8Rng) -> ImageGrid {
    ImageGrid::from_fn(n, |_, _| rng.random::<f64>())
}

fn smoothed_random(n: usize, seed: u64) -> ImageGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gaussian_smooth(&random_image(n, &mut rng), 2.0)
}

fn random_sinogram(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Sinogram {
    Sinogram::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random::<f64>() - 0.5).collect())
        .unwrap()
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    err / norm
}

/// Angles away from interpolation kinks for the default n=32 geometry.
fn smooth_angles() -> AngleSet {
    AngleSet::new((0..10).map(|k| 37.3 + 18.0 * k as f64).collect()).unwrap()
}

#[test]
fn adjoint_gap_over_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for n in [16usize, 32, 64] {
        let p = Projector::new(ProjectorConfig::new(n)).unwrap();
        for _ in 0..100 {
            let a = AngleSet::new((0..10).map(|_| rng.random_range(-90.0..270.0)).collect()).unwrap();
            let x = random_image(n, &mut rng);
            let y = random_sinogram(10, p.num_detectors(), &mut rng);
            let hx = p.forward_project(&x, &a).unwrap();
            let hty = p.back_project(&y, &a).unwrap();
            let gap = (hx.dot(&y) - x.dot(&hty)).abs() / (hx.norm_sq().sqrt() * y.norm_sq().sqrt());
            assert!(gap < 1e-5, "n={n}: gap {gap}");
        }
    }
}

#[test]
fn full_square_support_is_also_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cfg = ProjectorConfig::new(24);
    cfg.support_mask = calred_core::SupportMask::FullSquare;
    let p = Projector::new(cfg).unwrap();
    let a = AngleSet::half_circle(7).unwrap();
    let x = random_image(24, &mut rng);
    let y = random_sinogram(7, p.num_detectors(), &mut rng);
    let lhs = p.forward_project(&x, &a).unwrap().dot(&y);
    let rhs = x.dot(&p.back_project(&y, &a).unwrap());
    assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    // a corner pixel projects to the detector
    let corner = ImageGrid::from_fn(24, |r, c| if r == 0 && c == 0 { 1.0 } else { 0.0 });
    let s = p.forward_project(&corner, &AngleSet::new(vec![45.0]).unwrap()).unwrap();
    assert!((s.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_projection_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 16;
        let p = Projector::new(ProjectorConfig::new(n)).unwrap();
        let angles = AngleSet::new((0..6).map(|_| rng.random_range(0.0..180.0)).collect()).unwrap();
        let x1 = random_image(n, &mut rng);
        let x2 = random_image(n, &mut rng);
        let combo = ImageGrid::from_fn(n, |r, c| a * x1.get(r, c) + b * x2.get(r, c));
        let lhs = p.forward_project(&combo, &angles).unwrap();
        let h1 = p.forward_project(&x1, &angles).unwrap();
        let h2 = p.forward_project(&x2, &angles).unwrap();
        let rhs: Vec<f64> = h1.values().iter().zip(h2.values()).map(|(u, v)| a * u + b * v).collect();
        let scale = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let err = lhs.values().iter().zip(&rhs).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-10 * scale);
    }

    #[test]
    fn rows_depend_on_their_own_angle_only(seed in any::<u64>(), j in 0usize..5, shift in 0.1f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Projector::new(ProjectorConfig::new(16)).unwrap();
        let x = random_image(16, &mut rng);
        let a = AngleSet::new((0..5).map(|_| rng.random_range(0.0..180.0)).collect()).unwrap();
        let mut b = a.clone();
        b.degrees_mut()[j] += shift;
        let sa = p.forward_project(&x, &a).unwrap();
        let sb = p.forward_project(&x, &b).unwrap();
        for i in (0..5).filter(|&i| i != j) {
            prop_assert_eq!(sa.row(i), sb.row(i));
        }
    }
}

#[test]
fn fbp_of_zero_is_zero() {
    let p = Projector::new(ProjectorConfig::new(32)).unwrap();
    let a = AngleSet::half_circle(20).unwrap();
    let img = p.fbp(&Sinogram::zeros(20, p.num_detectors()), &a).unwrap();
    assert!(img.values().iter().all(|&v| v == 0.0));
}

#[test]
fn fbp_recovers_uniform_disk() {
    let n = 128;
    let p = Projector::new(ProjectorConfig::new(n)).unwrap();
    let disk = disk_phantom(n, n as f64 / 4.0);
    let a = AngleSet::half_circle(180).unwrap();
    let y = p.forward_project(&disk, &a).unwrap();
    let rec = p.fbp(&y, &a).unwrap();
    let snr = snr_db(&rec, &disk).unwrap();
    assert!(snr >= 20.0, "FBP SNR {snr:.2} dB");
}

#[test]
fn fbp_improves_with_more_angles() {
    let n = 128;
    let p = Projector::new(ProjectorConfig::new(n)).unwrap();
    let phantom = shepp_logan(n).unwrap();
    let snr_for = |count: usize| {
        let a = AngleSet::half_circle(count).unwrap();
        let y = p.forward_project(&phantom, &a).unwrap();
        snr_db(&p.fbp(&y, &a).unwrap(), &phantom).unwrap()
    };
    let (s90, s45) = (snr_for(90), snr_for(45));
    assert!(s90 > s45, "90 angles {s90:.2} dB vs 45 angles {s45:.2} dB");
}

#[test]
fn fbp_is_deterministic() {
    let p = Projector::new(ProjectorConfig::new(48)).unwrap();
    let a = AngleSet::half_circle(30).unwrap();
    let y = p.forward_project(&shepp_logan(48).unwrap(), &a).unwrap();
    let r1 = p.fbp(&y, &a).unwrap();
    let r2 = p.fbp(&y, &a).unwrap();
    assert!(r1.values().iter().zip(r2.values()).all(|(u, v)| u.to_bits() == v.to_bits()));
}

#[test]
fn data_fidelity_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 16;
    let p = Projector::new(ProjectorConfig::new(n)).unwrap();
    let a = AngleSet::half_circle(12).unwrap();
    let x = random_image(n, &mut rng);
    let hx = p.forward_project(&x, &a).unwrap();
    assert_eq!(p.data_fidelity(&x, &hx, &a).unwrap(), 0.0);

    let y = random_sinogram(12, p.num_detectors(), &mut rng);
    let at_zero = p.data_fidelity(&ImageGrid::zeros(n), &y, &a).unwrap();
    assert!((at_zero - 0.5 * y.norm_sq()).abs() <= 1e-12 * at_zero);

    // naive summation oracle
    let g = p.data_fidelity(&x, &y, &a).unwrap();
    let mut naive = 0.0;
    for i in 0..12 {
        for j in 0..p.num_detectors() {
            let r = y.row(i)[j] - hx.row(i)[j];
            naive += r * r;
        }
    }
    naive *= 0.5;
    assert!((g - naive).abs() < 1e-10 * naive);
    assert!(g >= 0.0);
}

#[test]
fn grad_x_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 16;
    let p = Projector::new(ProjectorConfig::new(n)).unwrap();
    let a = AngleSet::half_circle(9).unwrap();
    let x = random_image(n, &mut rng);
    let hx = p.forward_project(&x, &a).unwrap();
    let g0 = p.grad_x(&x, &hx, &a).unwrap();
    assert!(g0.values().iter().all(|&v| v == 0.0));

    let y = random_sinogram(9, p.num_detectors(), &mut rng);
    let at_zero = p.grad_x(&ImageGrid::zeros(n), &y, &a).unwrap();
    let bp = p.back_project(&y, &a).unwrap();
    for (u, v) in at_zero.values().iter().zip(bp.values()) {
        assert!((u + v).abs() < 1e-12);
    }

    let grad = p.grad_x(&x, &y, &a).unwrap();
    let eps = 1e-3;
    for _ in 0..20 {
        let d = random_image(n, &mut rng).map(|v| v - 0.5);
        let d = d.scaled(1.0 / d.norm());
        let plus = ImageGrid::from_fn(n, |r, c| x.get(r, c) + eps * d.get(r, c));
        let minus = ImageGrid::from_fn(n, |r, c| x.get(r, c) - eps * d.get(r, c));
        let fd = (p.data_fidelity(&plus, &y, &a).unwrap() - p.data_fidelity(&minus, &y, &a).unwrap())
            / (2.0 * eps);
        let analytic = grad.dot(&d);
        assert!((analytic - fd).abs() / analytic.abs().max(1.0) < 1e-4);
    }
}

#[test]
fn angle_derivative_matches_finite_difference_of_projection() {
    let n = 32;
    let p = Projector::new(ProjectorConfig::new(n)).unwrap();
    for seed in 0..5 {
        let x = smoothed_random(n, seed);
        let analytic = p.projection_angle_derivative(&x, 37.3).unwrap();
        let mut hi = vec![0.0; p.num_detectors()];
        let mut lo = vec![0.0; p.num_detectors()];
        p.project_row(x.values(), 37.3 + FD_STEP_DEG, &mut hi);
        p.project_row(x.values(), 37.3 - FD_STEP_DEG, &mut lo);
        let fd: Vec<f64> = hi.iter().zip(&lo).map(|(h, l)| (h - l) / (2.0 * FD_STEP_DEG)).collect();
        let err = rel_l2(&analytic, &fd);
        assert!(err < 1e-3, "seed {seed}: relative error {err}");
    }
}

#[test]
fn rotation_invariant_blob_has_small_angle_derivative() {
    let n = 64;
    let p = Projector::new(ProjectorConfig::new(n)).unwrap();
    let half = (n as f64 - 1.0) / 2.0;
    let blob = ImageGrid::from_fn(n, |r, c| {
        let (x, y) = (c as f64 - half, half - r as f64);
        (-(x * x + y * y) / (2.0 * 25.0)).exp()
    });
    for angle in [0.0, 37.3, 45.0, 90.0] {
        let d = p.projection_angle_derivative(&blob, angle).unwrap();
        let mut row = vec![0.0; p.num_detectors()];
        p.project_row(blob.values(), angle, &mut row);
        let dn: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rn: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(dn < 1e-3 * rn, "angle {angle}: {dn} vs {rn}");
    }
}

#[test]
fn grad_theta_matches_finite_difference_of_data_fidelity() {
    let n = 32;
    let p = Projector::new(ProjectorConfig::new(n)).unwrap();
    let angles = smooth_angles();
    for seed in 0..4 {
        let x = smoothed_random(n, seed);
        let other = smoothed_random(n, seed + 100);
        let y = p.forward_project(&other, &angles).unwrap();
        let grad = p.grad_theta(&x, &y, &angles).unwrap();
        let fd: Vec<f64> = (0..angles.len())
            .map(|i| {
                let mut plus = angles.clone();
                plus.degrees_mut()[i] += FD_STEP_DEG;
                let mut minus = angles.clone();
                minus.degrees_mut()[i] -= FD_STEP_DEG;
                (p.data_fidelity(&x, &y, &plus).unwrap() - p.data_fidelity(&x, &y, &minus).unwrap())
                    / (2.0 * FD_STEP_DEG)
            })
            .collect();
        let err = rel_l2(&grad, &fd);
        assert!(err < 1e-3, "seed {seed}: relative error {err}");
    }
}

#[test]
fn grad_theta_zero_residual_and_locality() {
    let n = 24;
    let p = Projector::new(ProjectorConfig::new(n)).unwrap();
    let x = smoothed_random(n, 3);
    let a = AngleSet::new(vec![3.0, 41.0, 77.7, 120.5, 160.0]).unwrap();
    let y = p.forward_project(&x, &a).unwrap();
    assert!(p.grad_theta(&x, &y, &a).unwrap().iter().all(|&g| g == 0.0));

    let y = p.forward_project(&smoothed_random(n, 4), &a).unwrap();
    let base = p.grad_theta(&x, &y, &a).unwrap();
    let mut moved = a.clone();
    moved.degrees_mut()[2] += 0.7;
    let after = p.grad_theta(&x, &y, &moved).unwrap();
    for i in [0usize, 1, 3, 4] {
        assert_eq!(base[i].to_bits(), after[i].to_bits());
    }
    assert_ne!(base[2], after[2]);
}

#[test]
fn finite_difference_mode_drives_grad_theta() {
    let n = 32;
    let mut cfg = ProjectorConfig::new(n);
    cfg.angle_derivative = AngleDerivative::FiniteDifference;
    let fd = Projector::new(cfg).unwrap();
    let exact = Projector::new(ProjectorConfig::new(n)).unwrap();
    let angles = smooth_angles();
    let x = smoothed_random(n, 8);
    let y = exact.forward_project(&smoothed_random(n, 9), &angles).unwrap();
    let a = exact.grad_theta(&x, &y, &angles).unwrap();
    let b = fd.grad_theta(&x, &y, &angles).unwrap();
    assert!(rel_l2(&b, &a) < 1e-3);
}

#[test]
fn operator_norm_estimate_bounds_rayleigh_quotients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 24;
    let p = Projector::new(ProjectorConfig::new(n)).unwrap();
    let a = AngleSet::half_circle(16).unwrap();
    let l = p.operator_norm_sq(&a, 30).unwrap();
    for _ in 0..10 {
        let v = p.apply_support(&random_image(n, &mut rng).map(|v| v - 0.5));
        let hv = p.forward_project(&v, &a).unwrap();
        assert!(hv.norm_sq() / v.norm_sq() <= l * (1.0 + 1e-9));
    }
}

//! Simulates a scan with perturbed projection angles and compares FISTA with
//! and without angle calibration.
//!
//! cargo run --release -p calred-core --example calibration -- [iterations] [angle_sd_deg]

use calred_core::sim::{rmse_deg, shepp_logan, ExperimentSpec};
use calred_core::solver::run;
use calred_core::{GroundTruth, Method, NativeDenoiser, NoClock, Projector, ProjectorConfig, SolverConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().map_or(200, |s| s.parse().expect("iterations"));
    let sd: f64 = args.next().map_or(5.0, |s| s.parse().expect("angle sd"));

    let n = 128;
    let projector = Projector::new(ProjectorConfig::new(n)).unwrap();
    let phantom = shepp_logan(n).unwrap();
    let mut spec = ExperimentSpec::new(n);
    spec.angle_noise_sd_deg = sd;
    spec.input_snr_db = Some(40.0);
    spec.seed = 1;
    let sim = spec.simulate(&projector, &phantom).unwrap();
    println!(
        "{} angles, nominal angle RMSE {:.3} deg",
        sim.nominal.len(),
        rmse_deg(&sim.nominal, &sim.true_angles).unwrap()
    );

    let truth = GroundTruth {
        image: Some(&phantom),
        angles: Some(&sim.true_angles),
    };
    for method in [Method::Fbp, Method::Fista, Method::CalFista] {
        let mut cfg = SolverConfig::new(method);
        cfg.tv_weight = 5.0;
        cfg.iterations = iterations;
        let out = run(&projector, &sim.sinogram, &sim.nominal, &cfg, NativeDenoiser::Identity, truth, &NoClock).unwrap();
        let last = out.trace.last().unwrap();
        println!(
            "{:>9}: SNR {:6.2} dB, angle RMSE {:.3} deg",
            method.name(),
            last.snr_db.unwrap(),
            last.angle_rmse_deg.unwrap()
        );
    }
}

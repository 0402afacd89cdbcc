use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use calred::{npy, tables};
use calred_core::sim::{rmse_deg, shepp_logan};
use calred_core::{AngleSet, ImageGrid, Projector, ProjectorConfig};
use tempfile::TempDir;

fn calred(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calred"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = calred(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Phantom plus a noisy, perturbed simulation under prefix `s`.
fn simulated(n: usize, sd: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["phantom", "--n", &n.to_string(), "--out", "p.npy"]);
    ok(
        dir.path(),
        &["simulate", "--image", "p.npy", "--out", "s", "--num-angles", "40", "--angle-sd", sd, "--snr-db", "40", "--seed", "3"],
    );
    dir
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn phantom_writes_f32_npy_matching_memory() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["phantom", "--n", "128", "--out", "p.npy"]);
    let bytes = read(dir.path(), "p.npy");
    assert_eq!(&bytes[..8], b"\x93NUMPY\x01\x00");
    let header = String::from_utf8_lossy(&bytes[10..128]);
    assert!(header.contains("'descr': '<f4'"));
    assert!(header.contains("'shape': (128, 128"));
    let back = npy::read_image(&dir.path().join("p.npy")).unwrap();
    let want = shepp_logan(128).unwrap();
    for (a, b) in back.values().iter().zip(want.values()) {
        assert_eq!(*a as f32, *b as f32);
    }
}

#[test]
fn phantom_rejects_small_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = calred(dir.path(), &["phantom", "--n", "8", "--out", "p.npy"]);
    assert_eq!(code(&out), 1);
    assert!(!dir.path().join("p.npy").exists());
}

#[test]
fn noiseless_unperturbed_simulation_is_a_forward_projection() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["phantom", "--n", "32", "--out", "p.npy"]);
    ok(dir.path(), &["simulate", "--image", "p.npy", "--out", "s", "--num-angles", "12"]);
    let nominal = tables::read_angles(&dir.path().join("s.angles_nominal.csv")).unwrap();
    let truth = tables::read_angles(&dir.path().join("s.angles_true.csv")).unwrap();
    assert_eq!(nominal, truth);
    assert_eq!(nominal, AngleSet::half_circle(12).unwrap());

    let image = npy::read_image(&dir.path().join("p.npy")).unwrap();
    let p = Projector::new(ProjectorConfig::new(32)).unwrap();
    let expected = p.forward_project(&image, &nominal).unwrap();
    let sino = npy::read_sinogram(&dir.path().join("s.sino.npy")).unwrap();
    assert_eq!(sino.num_angles(), 12);
    for (a, b) in sino.values().iter().zip(expected.values()) {
        assert_eq!(*a as f32, *b as f32);
    }
}

#[test]
fn simulation_is_byte_reproducible() {
    let a = simulated(32, "2");
    let b = simulated(32, "2");
    for name in ["s.sino.npy", "s.angles_true.csv", "s.angles_nominal.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn perturbed_angles_have_requested_spread() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["phantom", "--n", "16", "--out", "p.npy"]);
    ok(dir.path(), &["simulate", "--image", "p.npy", "--out", "s", "--angle-sd", "5", "--seed", "8"]);
    let text = std::fs::read_to_string(dir.path().join("s.angles_true.csv")).unwrap();
    assert_eq!(text.lines().count(), 91);
    let truth = tables::read_angles(&dir.path().join("s.angles_true.csv")).unwrap();
    let nominal = tables::read_angles(&dir.path().join("s.angles_nominal.csv")).unwrap();
    let rmse = rmse_deg(&truth, &nominal).unwrap();
    assert!((3.5..=6.5).contains(&rmse), "{rmse}");
}

#[test]
fn fbp_trace_has_one_row() {
    let dir = simulated(32, "0");
    ok(
        dir.path(),
        &["reconstruct", "--method", "fbp", "--sino", "s.sino.npy", "--angles", "s.angles_nominal.csv", "--out", "r", "--n", "32"],
    );
    let trace = std::fs::read_to_string(dir.path().join("r.trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    assert!(!dir.path().join("r.angles_est.csv").exists());
}

#[test]
fn calibrated_trace_is_fully_populated() {
    let dir = simulated(32, "2");
    ok(
        dir.path(),
        &[
            "reconstruct", "--method", "cal_red", "--sino", "s.sino.npy", "--angles", "s.angles_nominal.csv", "--out", "r",
            "--gt-image", "p.npy", "--gt-angles", "s.angles_true.csv", "--iterations", "4",
        ],
    );
    let trace = std::fs::read_to_string(dir.path().join("r.trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), "k,objective,red_penalty,snr_db,angle_rmse_deg,elapsed_ms");
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 4);
    for (i, row) in rows.iter().enumerate() {
        let fields: Vec<_> = row.split(',').collect();
        assert_eq!(fields[0], (i + 1).to_string());
        for f in &fields[1..] {
            assert!(!f.is_empty() && f.parse::<f64>().is_ok(), "{row}");
            assert_eq!(f.split('.').nth(1).map(str::len), Some(6), "{row}");
        }
    }
    let est = tables::read_angles(&dir.path().join("r.angles_est.csv")).unwrap();
    assert_eq!(est.len(), 40);
}

#[test]
fn frozen_angles_reproduce_uncalibrated_image() {
    let dir = simulated(32, "2");
    let common = ["--sino", "s.sino.npy", "--angles", "s.angles_nominal.csv", "--n", "32", "--iterations", "6"];
    let mut red = vec!["reconstruct", "--method", "red", "--out", "a"];
    red.extend(common);
    let mut cal = vec!["reconstruct", "--method", "cal_red", "--gamma-theta", "0", "--out", "b"];
    cal.extend(common);
    ok(dir.path(), &red);
    ok(dir.path(), &cal);
    assert_eq!(read(dir.path(), "a.image.npy"), read(dir.path(), "b.image.npy"));
}

#[test]
fn replay_reproduces_data_files() {
    let dir = simulated(32, "2");
    ok(
        dir.path(),
        &[
            "reconstruct", "--method", "cal_fista", "--sino", "s.sino.npy", "--angles", "s.angles_nominal.csv", "--out", "r",
            "--config", "s.manifest.json", "--tv-weight", "1", "--iterations", "5",
        ],
    );
    ok(dir.path(), &["replay", "s.manifest.json", "--out", "s2"]);
    ok(dir.path(), &["replay", "r.manifest.json", "--out", "r2"]);
    for (a, b) in [
        ("s.sino.npy", "s2.sino.npy"),
        ("s.angles_true.csv", "s2.angles_true.csv"),
        ("s.angles_nominal.csv", "s2.angles_nominal.csv"),
        ("r.image.npy", "r2.image.npy"),
        ("r.angles_est.csv", "r2.angles_est.csv"),
    ] {
        assert_eq!(read(dir.path(), a), read(dir.path(), b), "{a}");
    }

    std::fs::write(dir.path().join("s.angles_nominal.csv"), "index,angle_deg\n0,1.0\n").unwrap();
    let out = calred(dir.path(), &["replay", "r.manifest.json", "--out", "r3"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = simulated(32, "0");
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"projector": {"n": 32}, "solver": {"method": "lsm", "iterations": 3}}"#,
    )
    .unwrap();
    let base = ["reconstruct", "--sino", "s.sino.npy", "--angles", "s.angles_nominal.csv", "--config", "cfg.json"];
    let rows = |prefix: &str| {
        std::fs::read_to_string(dir.path().join(format!("{prefix}.trace.csv"))).unwrap().lines().count() - 1
    };

    let mut from_config = base.to_vec();
    from_config.extend(["--out", "c"]);
    ok(dir.path(), &from_config);
    assert_eq!(rows("c"), 3);
    assert!(!dir.path().join("c.angles_est.csv").exists(), "method from config is lsm");

    let mut flagged = base.to_vec();
    flagged.extend(["--out", "f", "--iterations", "2"]);
    ok(dir.path(), &flagged);
    assert_eq!(rows("f"), 2);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("f.manifest.json")).unwrap()).unwrap();
    let solver = &manifest["config"]["solver"];
    assert_eq!(solver["iterations"], 2);
    assert_eq!(solver["method"], "lsm");
    assert_eq!(solver["tau_x"], calred::cli::defaults::TAU_X);
}

/// Double-precision fixture, so the expected metrics are exact.
fn write_f64(path: &Path, image: &ImageGrid) {
    use npyz::WriterBuilder;
    let file = std::fs::File::create(path).unwrap();
    let mut w = npyz::WriteOptions::<f64>::new()
        .default_dtype()
        .shape(&[image.n() as u64, image.n() as u64])
        .writer(file)
        .begin_nd()
        .unwrap();
    w.extend(image.values().iter().copied()).unwrap();
    w.finish().unwrap();
}

#[test]
fn eval_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let x = shepp_logan(32).unwrap();
    write_f64(&d.join("x.npy"), &x);
    write_f64(&d.join("y.npy"), &x.scaled(0.9));
    tables::write_angles(&d.join("a.csv"), &AngleSet::new(vec![10.0, 50.0, 90.0]).unwrap()).unwrap();
    tables::write_angles(&d.join("b.csv"), &AngleSet::new(vec![12.0, 52.0, 92.0]).unwrap()).unwrap();

    assert_eq!(ok(d, &["eval", "--image", "x.npy", "--gt-image", "x.npy"]), "snr_db=inf\n");
    let report = ok(d, &["eval", "--image", "y.npy", "--gt-image", "x.npy", "--angles-est", "b.csv", "--angles-true", "a.csv"]);
    assert_eq!(report, "snr_db=20.000000\nangle_rmse_deg=2.000000\n");

    npy::write_image(&d.join("small.npy"), &ImageGrid::zeros(16)).unwrap();
    assert_eq!(code(&calred(d, &["eval", "--image", "small.npy", "--gt-image", "x.npy"])), 1);
    tables::write_angles(&d.join("c.csv"), &AngleSet::new(vec![1.0]).unwrap()).unwrap();
    let mismatch = calred(d, &["eval", "--image", "x.npy", "--gt-image", "x.npy", "--angles-est", "c.csv", "--angles-true", "a.csv"]);
    assert_eq!(code(&mismatch), 1);
    assert_eq!(code(&calred(d, &["eval", "--image", "x.npy", "--gt-image", "x.npy", "--angles-est", "c.csv"])), 1);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = simulated(16, "0");
    let d = dir.path();
    assert_eq!(code(&calred(d, &["frobnicate"])), 1);
    assert_eq!(code(&calred(d, &["--help"])), 0);
    let missing = calred(d, &["reconstruct", "--sino", "nope.npy", "--angles", "s.angles_nominal.csv", "--out", "r", "--n", "16"]);
    assert_eq!(code(&missing), 2);
    std::fs::write(d.join("few.csv"), "index,angle_deg\n0,0.0\n").unwrap();
    let short = calred(d, &["reconstruct", "--sino", "s.sino.npy", "--angles", "few.csv", "--out", "r", "--n", "16"]);
    assert_eq!(code(&short), 1);
    let no_n = calred(d, &["reconstruct", "--sino", "s.sino.npy", "--angles", "s.angles_nominal.csv", "--out", "r"]);
    assert_eq!(code(&no_n), 1);
    let threads = Command::new(env!("CARGO_BIN_EXE_calred"))
        .current_dir(d)
        .env("CALRED_THREADS", "zero")
        .args(["phantom", "--n", "16", "--out", "t.npy"])
        .output()
        .unwrap();
    assert_eq!(code(&threads), 1);
}

#[test]
fn external_failure_aborts_with_iteration_index() {
    let dir = simulated(16, "0");
    let d = dir.path();
    let out = calred(
        d,
        &[
            "reconstruct", "--method", "red", "--sino", "s.sino.npy", "--angles", "s.angles_nominal.csv", "--out", "r",
            "--n", "16", "--iterations", "3", "--denoiser", "external", "--denoiser-cmd", "false",
        ],
    );
    assert_eq!(code(&out), 4);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("iteration 1"), "{stderr}");
    assert!(stderr.contains("exited with code 1"), "{stderr}");
    assert!(!d.join("r.image.npy").exists());
}

#[test]
fn external_copy_denoiser_runs_end_to_end() {
    let dir = simulated(16, "0");
    let d = dir.path();
    std::fs::write(
        d.join("ext.json"),
        r#"{"solver": {"denoiser": {"kind": "external", "sigma": 5, "command": ["sh", "-c", "cp \"$0\" \"$1\""]}}}"#,
    )
    .unwrap();
    ok(
        d,
        &[
            "reconstruct", "--method", "red", "--sino", "s.sino.npy", "--angles", "s.angles_nominal.csv", "--out", "r",
            "--n", "16", "--iterations", "2", "--config", "ext.json",
        ],
    );
    let image = npy::read_image(&d.join("r.image.npy")).unwrap();
    assert!(image.is_finite());
}

#[test]
fn writes_leave_no_temporary_files() {
    let dir = simulated(16, "1");
    ok(
        dir.path(),
        &["reconstruct", "--method", "cal_lsm", "--sino", "s.sino.npy", "--angles", "s.angles_nominal.csv", "--out", "r", "--n", "16", "--iterations", "2"],
    );
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let names: Vec<_> = names.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(
        names,
        [
            "p.npy", "r.angles_est.csv", "r.image.npy", "r.manifest.json", "r.trace.csv", "s.angles_nominal.csv",
            "s.angles_true.csv", "s.manifest.json", "s.sino.npy",
        ]
    );
}

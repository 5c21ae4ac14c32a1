use qdsr::dataset::{load_archive, save_archive, DatasetManifest, PairMeta, SamplePair};
use qdsr::net::{init_params, save_weights, NetConfig, Params};
use qdsr::optics::{Emitter, EmitterSet, PsfKind, PsfSpec, SceneConfig};
use qdsr::qsrt::{read_grid, write_grid};
use qdsr::{Grid2D, RngState};
use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn qdsr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdsr")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "command failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

const TINY: &str = r#"{"net": {"depth": 3, "filters": 4, "upsample_after": [1, 2]},
 "train": {"iterations": 3, "epochs_per_iteration": 2, "samples_per_iteration": 16, "batch_size": 4}}"#;

fn tiny_weights(dir: &Path) -> std::path::PathBuf {
    let cfg = NetConfig { depth: 3, filters: 4, upsample_after: vec![1, 2], ..Default::default() };
    let p: Params<f32> = init_params(&RngState::new(8), &cfg).unwrap();
    let path = dir.join("tiny.qsrw");
    save_weights(&path, &p).unwrap();
    path
}

#[test]
fn simulate_zero_pairs_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    let out = qdsr(d.path(), &["--seed", "1", "simulate", "--n", "0", "--out", "a.qsra"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nothing to generate"));
    assert!(!d.path().join("a.qsra").exists());
}

#[test]
fn simulate_requires_a_seed() {
    let d = tempfile::tempdir().unwrap();
    let out = qdsr(d.path(), &["--preset", "toy", "simulate", "--n", "2", "--out", "a.qsra"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn simulate_is_reproducible_and_counts_match() {
    let d = tempfile::tempdir().unwrap();
    for sub in ["r1", "r2"] {
        std::fs::create_dir(d.path().join(sub)).unwrap();
        ok(&qdsr(&d.path().join(sub), &["--preset", "toy", "--seed", "7", "simulate", "--n", "10", "--out", "s.qsra"]));
    }
    let a = std::fs::read(d.path().join("r1/s.qsra")).unwrap();
    let b = std::fs::read(d.path().join("r2/s.qsra")).unwrap();
    assert_eq!(a, b);
    let (manifest, pairs) = load_archive(d.path().join("r1/s.qsra")).unwrap();
    assert_eq!(manifest.count, 10);
    assert_eq!(pairs.len(), 10);
    let side = json(&d.path().join("r1/s.qsra.manifest.json"));
    assert_eq!(side["dataset"]["count"], 10);
    assert!(side["dataset"]["created_unix"].as_u64().is_some());
    assert_eq!(side["config"]["scene"]["lo_size"], 16);
}

#[test]
fn unknown_config_keys_rejected() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.json"), r#"{"seed": 1, "train": {"learning_rte": 0.1}}"#).unwrap();
    let out = qdsr(d.path(), &["--config", "c.json", "simulate", "--n", "1", "--out", "a.qsra"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rte"));
}

#[test]
fn infer_shape_law_and_unit_mass() {
    let d = tempfile::tempdir().unwrap();
    let w = tiny_weights(d.path());
    for (rows, cols) in [(50, 50), (30, 40)] {
        let mut rng = RngState::new(rows as u64);
        let frame = Grid2D::from_fn(rows, cols, |_, _| 10.0 + 100.0 * rng.uniform01());
        write_grid(d.path().join("in.qsrt"), &frame).unwrap();
        ok(&qdsr(d.path(), &["infer", "--weights", w.to_str().unwrap(), "--input", "in.qsrt", "--out", "out.qsrt"]));
        let recon = read_grid(d.path().join("out.qsrt")).unwrap();
        assert_eq!(recon.shape(), (4 * rows, 4 * cols));
        assert!((recon.sum() - 1.0).abs() < 1e-6);
        assert!(d.path().join("out.pgm").exists());
    }
}

#[test]
fn infer_rejects_frames_smaller_than_the_kernel() {
    let d = tempfile::tempdir().unwrap();
    let w = tiny_weights(d.path());
    write_grid(d.path().join("in.qsrt"), &Grid2D::filled(3, 8, 1.0)).unwrap();
    let out = qdsr(d.path(), &["infer", "--weights", w.to_str().unwrap(), "--input", "in.qsrt", "--out", "o.qsrt"]);
    assert!(!out.status.success());
    assert!(!d.path().join("o.qsrt").exists());
}

/// Archive with one pair whose emitters sit exactly on pixel centers.
fn impulse_archive(dir: &Path) -> Grid2D {
    let pts = [(10.0, 12.0), (40.0, 20.0), (25.0, 50.0)];
    let mut target = Grid2D::zeros(64, 64);
    for &(x, y) in &pts {
        target.set(y as usize, x as usize, 1.0 / 3.0);
    }
    let emitters = EmitterSet::new(pts.iter().map(|&(x, y)| Emitter { x, y, mean_photons: 500.0 }).collect(), 64);
    let pair = SamplePair {
        input: Grid2D::filled(16, 16, 1.0),
        target: target.clone(),
        meta: PairMeta { psf: PsfSpec::symmetric(PsfKind::Airy, 10.0), background_mean: 1.0, seed: 0, emitters },
    };
    let scene = SceneConfig { hi_size: 64, lo_size: 16, ..Default::default() };
    let manifest = DatasetManifest { archives: vec![], count: 1, global_seed: 0, scene, created_unix: None };
    save_archive(dir.join("truth.qsra"), &[pair], &manifest).unwrap();
    target
}

#[test]
fn evaluate_perfect_impulses_in_pixels() {
    let d = tempfile::tempdir().unwrap();
    let target = impulse_archive(d.path());
    write_grid(d.path().join("recon.qsrt"), &target).unwrap();
    ok(&qdsr(d.path(), &["evaluate", "--recon", "recon.qsrt", "--truth", "truth.qsra", "--out", "report.json"]));
    let r = json(&d.path().join("report.json"));
    assert_eq!(r["unit"], "px");
    assert!(r["mean_distance"].as_f64().unwrap() < 1e-12);
    let scene = &r["reports"][0];
    assert_eq!(scene["matched"], 3);
    assert!(scene["max_distance"].as_f64().unwrap() < 1e-12);
    assert!(scene["rayleigh_ratio"].is_number());
    let csv = std::fs::read_to_string(d.path().join("report.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with("distance_px"));
    assert_eq!(csv.lines().count(), 4);
    assert!(d.path().join("report.overlay.pgm").exists());
}

#[test]
fn evaluate_with_calibration_reports_nm() {
    let d = tempfile::tempdir().unwrap();
    let mut target = impulse_archive(d.path());
    // shift one impulse by one pixel
    target.set(12, 10, 0.0);
    target.set(12, 11, 1.0 / 3.0);
    write_grid(d.path().join("recon.qsrt"), &target).unwrap();
    ok(&qdsr(
        d.path(),
        &["evaluate", "--recon", "recon.qsrt", "--truth", "truth.qsra", "--nm-per-px", "25", "--out", "report.json"],
    ));
    let r = json(&d.path().join("report.json"));
    assert_eq!(r["unit"], "nm");
    assert!((r["reports"][0]["max_distance"].as_f64().unwrap() - 25.0).abs() < 1e-9);
}

#[test]
fn evaluate_with_weights_covers_every_pair() {
    let d = tempfile::tempdir().unwrap();
    let w = tiny_weights(d.path());
    ok(&qdsr(d.path(), &["--preset", "toy", "--seed", "2", "simulate", "--n", "4", "--out", "t.qsra"]));
    ok(&qdsr(d.path(), &["evaluate", "--weights", w.to_str().unwrap(), "--truth", "t.qsra", "--out", "e.json"]));
    let r = json(&d.path().join("e.json"));
    assert_eq!(r["scenes"], 4);
    assert_eq!(r["reports"].as_array().unwrap().len(), 4);
    assert!(r.get("mean_rayleigh_ratio").is_some());
}

#[test]
fn gradcheck_passes_and_negative_control_fails() {
    let d = tempfile::tempdir().unwrap();
    let good = ok(&qdsr(d.path(), &["gradcheck"]));
    // one row per convolution
    assert!(good.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count() == 4, "{good}");
    assert!(good.contains("PASS"));
    let bad = qdsr(d.path(), &["gradcheck", "--corrupt"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}

#[test]
fn psf_preview_geometry() {
    let d = tempfile::tempdir().unwrap();
    ok(&qdsr(d.path(), &["psf-preview", "--kind", "gaussian", "--fwhm", "12", "--out", "g"]));
    let g = json(&d.path().join("g.json"));
    assert!((g["measured_fwhm"].as_f64().unwrap() - 12.0).abs() < 0.2);
    assert!((g["sum"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(d.path().join("g.qsrt").exists() && d.path().join("g.pgm").exists());

    ok(&qdsr(
        d.path(),
        &["psf-preview", "--kind", "airy", "--fwhm", "12", "--squeeze", "0.7", "--angle-deg", "30", "--out", "a"],
    ));
    let a = json(&d.path().join("a.json"));
    assert!((a["anisotropy_ratio"].as_f64().unwrap() - 0.7).abs() < 0.03);
    assert!((a["sum"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let kernel = read_grid(d.path().join("a.qsrt")).unwrap();
    assert_eq!(kernel.rows() % 2, 1);
}

fn loss_columns(csv: &str) -> Vec<String> {
    csv.lines().skip(1).map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn train_log_rows_and_resume_match_uninterrupted() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("tiny.json"), TINY).unwrap();
    let base = ["--preset", "toy", "--config", "tiny.json", "--seed", "4", "train"];
    let run = |extra: &[&str]| ok(&qdsr(d.path(), &[&base[..], extra].concat()));

    run(&["--out", "full"]);
    let full = std::fs::read_to_string(d.path().join("full/train_log.csv")).unwrap();
    assert_eq!(full.lines().count(), 1 + 3 * 2);
    for it in 0..3 {
        assert!(d.path().join(format!("full/weights_iter{it}.qsrw")).exists());
    }

    run(&["--out", "split", "--stop-after", "1"]);
    assert_eq!(std::fs::read_to_string(d.path().join("split/train_log.csv")).unwrap().lines().count(), 1 + 2);
    let again = qdsr(d.path(), &[&base[..], &["--out", "split"]].concat());
    assert!(!again.status.success(), "a second fresh start must not clobber the checkpoint");
    run(&["--out", "split", "--resume"]);
    let split = std::fs::read_to_string(d.path().join("split/train_log.csv")).unwrap();
    assert_eq!(loss_columns(&full), loss_columns(&split));
    assert_eq!(
        std::fs::read(d.path().join("full/best.qsrw")).unwrap(),
        std::fs::read(d.path().join("split/best.qsrw")).unwrap()
    );
    let run_cfg = json(&d.path().join("full/run.json"));
    assert_eq!(run_cfg["seed"], 4);
}

#[test]
fn workers_flag_does_not_change_results() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("tiny.json"), TINY).unwrap();
    for (w, out) in [("1", "w1"), ("3", "w3")] {
        ok(&qdsr(
            d.path(),
            &[
                "--preset",
                "toy",
                "--config",
                "tiny.json",
                "--seed",
                "5",
                "--workers",
                w,
                "train",
                "--out",
                out,
                "--stop-after",
                "1",
            ],
        ));
    }
    assert_eq!(
        std::fs::read(d.path().join("w1/weights_iter0.qsrw")).unwrap(),
        std::fs::read(d.path().join("w3/weights_iter0.qsrw")).unwrap()
    );
}

use crate::config::{Precision, RunConfig};
use crate::image::read_frame;
use anyhow::{bail, ensure, Context, Result};
use clap::{Args, ValueEnum};
use qdsr::dataset::{generate_pairs, load_archive, save_archive, DatasetManifest, SamplePair};
use qdsr::eval::{evaluate_reconstruction, EvalReport};
use qdsr::localize::{DistanceUnit, PixelCalibration};
use qdsr::net::{load_weights, reconstruct, save_weights, Params, Real};
use qdsr::optics::{measure_first_minimum, measure_fwhm, render_psf, PsfKind, PsfSpec};
use qdsr::pgm::{draw_markers, write_pgm16};
use qdsr::qsrt::{read_grid, write_grid};
use qdsr::train::{gradcheck_net, GradcheckOptions, GradcheckReport, TrainData, Trainer};
use qdsr::{Grid2D, RngState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// `path` with `suffix` appended to its file name.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Number of pairs
    #[arg(long)]
    pub n: usize,
    /// Archive path (.qsra)
    #[arg(long)]
    pub out: PathBuf,
}

/// Sidecar written next to an archive as `<archive>.manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationManifest {
    pub dataset: DatasetManifest,
    pub config: RunConfig,
}

pub fn simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<DatasetManifest> {
    if args.n == 0 {
        bail!("nothing to generate: --n must be at least 1");
    }
    let seed = cfg.require_seed()?;
    let pairs = generate_pairs(&RngState::new(seed), &cfg.scene, args.n)?;
    let name = args.out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let manifest = DatasetManifest {
        archives: vec![name],
        count: args.n as u64,
        global_seed: seed,
        scene: cfg.scene.clone(),
        created_unix: None,
    };
    save_archive(&args.out, &pairs, &manifest).with_context(|| format!("writing {}", args.out.display()))?;
    let created = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).ok();
    let sidecar = SimulationManifest {
        dataset: DatasetManifest { created_unix: created, ..manifest.clone() },
        config: cfg.clone(),
    };
    write_json(&with_suffix(&args.out, ".manifest.json"), &sidecar)?;
    eprintln!("wrote {} pairs to {}", args.n, args.out.display());
    Ok(manifest)
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Run directory
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from the checkpoint in the run directory
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many iterations in this invocation
    #[arg(long, value_name = "K")]
    pub stop_after: Option<usize>,
    /// Train on a fixed archive instead of fresh simulations
    #[arg(long, value_name = "ARCHIVE")]
    pub data: Option<PathBuf>,
    /// Do not print per-epoch losses
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub completed_iterations: usize,
    pub finished: bool,
    pub best_val: Option<f64>,
}

pub fn train(cfg: &RunConfig, args: &TrainArgs) -> Result<TrainSummary> {
    match cfg.io.precision {
        Precision::F32 => train_typed::<f32>(cfg, args),
        Precision::F64 => train_typed::<f64>(cfg, args),
    }
}

fn train_typed<T: Real>(cfg: &RunConfig, args: &TrainArgs) -> Result<TrainSummary> {
    let ckpt = args.out.join("checkpoint");
    let fixed = match &args.data {
        Some(p) => Some(load_archive(p).with_context(|| format!("reading {}", p.display()))?.1),
        None => None,
    };
    let mut trainer = if args.resume {
        Trainer::<T>::resume(&ckpt, fixed).with_context(|| format!("resuming from {}", ckpt.display()))?
    } else {
        ensure!(
            !ckpt.join("state.json").exists(),
            "{} already holds a checkpoint; pass --resume or choose another directory",
            args.out.display()
        );
        let seed = cfg.require_seed()?;
        std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
        write_json(&args.out.join("run.json"), cfg)?;
        let data = match fixed {
            Some(p) => TrainData::Fixed(p),
            None => TrainData::Simulate(cfg.scene.clone()),
        };
        Trainer::<T>::new(&cfg.net, cfg.train.clone(), cfg.loss.clone(), data, seed)?
    };
    let mut done = 0;
    while !trainer.is_finished() && args.stop_after.is_none_or(|k| done < k) {
        let it = trainer.next_iteration();
        trainer.run_iteration(&mut |r| {
            if args.quiet {
                return;
            }
            eprintln!(
                "iteration {} epoch {}: train {:.6e} val {:.6e} ({:.1} s)",
                r.iteration, r.epoch, r.train_loss, r.val_loss, r.seconds
            )
        })?;
        save_weights(args.out.join(format!("weights_iter{it}.qsrw")), trainer.params())?;
        save_weights(args.out.join("best.qsrw"), trainer.best())?;
        trainer.log().save_csv(args.out.join("train_log.csv"))?;
        trainer.save_checkpoint(&ckpt)?;
        done += 1;
    }
    Ok(TrainSummary {
        completed_iterations: trainer.next_iteration(),
        finished: trainer.is_finished(),
        best_val: trainer.best_val(),
    })
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    /// Weight file (.qsrw)
    #[arg(long)]
    pub weights: PathBuf,
    /// Camera frame (.qsrt or .pgm)
    #[arg(long, conflicts_with = "archive", required_unless_present = "archive")]
    pub input: Option<PathBuf>,
    /// Take the frame from an archive instead
    #[arg(long)]
    pub archive: Option<PathBuf>,
    /// Pair index inside --archive
    #[arg(long, default_value_t = 0, requires = "archive")]
    pub index: usize,
    /// Output reconstruction (.qsrt); a PGM preview is written alongside
    #[arg(long)]
    pub out: PathBuf,
}

fn archive_pair(path: &Path, index: usize) -> Result<SamplePair> {
    let (_, mut pairs) = load_archive(path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(index < pairs.len(), "index {index} out of range: archive holds {} pairs", pairs.len());
    Ok(pairs.swap_remove(index))
}

/// Weights in the configured precision.
enum Net {
    F32(Params<f32>),
    F64(Params<f64>),
}

impl Net {
    fn load(path: &Path, precision: Precision) -> Result<Self> {
        let ctx = || format!("loading weights {}", path.display());
        Ok(match precision {
            Precision::F32 => Net::F32(load_weights(path, None).with_context(ctx)?),
            Precision::F64 => Net::F64(load_weights(path, None).with_context(ctx)?),
        })
    }

    fn reconstruct(&self, frame: &Grid2D) -> Result<Grid2D> {
        let k = match self {
            Net::F32(p) => p.config().kernel,
            Net::F64(p) => p.config().kernel,
        };
        ensure!(
            frame.rows() >= k && frame.cols() >= k,
            "frame is {}×{}, smaller than the {k}×{k} kernel",
            frame.rows(),
            frame.cols()
        );
        ensure!(frame.all_finite(), "frame contains non-finite values");
        Ok(match self {
            Net::F32(p) => reconstruct(p, frame)?,
            Net::F64(p) => reconstruct(p, frame)?,
        })
    }
}

pub fn infer(cfg: &RunConfig, args: &InferArgs) -> Result<Grid2D> {
    let net = Net::load(&args.weights, cfg.io.precision)?;
    let frame = match (&args.input, &args.archive) {
        (Some(p), _) => read_frame(p)?,
        (None, Some(a)) => archive_pair(a, args.index)?.input,
        (None, None) => bail!("pass --input or --archive"),
    };
    let recon = net.reconstruct(&frame)?;
    write_grid(&args.out, &recon).with_context(|| format!("writing {}", args.out.display()))?;
    if cfg.io.pgm_preview {
        write_pgm16(args.out.with_extension("pgm"), &recon)?;
    }
    eprintln!(
        "{}×{} frame → {}×{} reconstruction, mass {:.9}",
        frame.rows(),
        frame.cols(),
        recon.rows(),
        recon.cols(),
        recon.sum()
    );
    Ok(recon)
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Reconstruct every archive frame with these weights
    #[arg(long, conflicts_with = "recon", required_unless_present = "recon")]
    pub weights: Option<PathBuf>,
    /// Score a single reconstruction (.qsrt) against pair --index
    #[arg(long)]
    pub recon: Option<PathBuf>,
    /// Archive with the ground truth
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Evaluate at most this many pairs
    #[arg(long)]
    pub limit: Option<usize>,
    /// nm per high-resolution pixel; distances are in pixels without it
    #[arg(long, value_name = "NM")]
    pub nm_per_px: Option<f64>,
    /// Report path (.json); a per-pair CSV is written alongside
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub index: usize,
    #[serde(flatten)]
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub unit: DistanceUnit,
    pub scenes: usize,
    pub failures: usize,
    /// Mean over scenes with at least one match.
    pub mean_distance: Option<f64>,
    pub mean_rayleigh_ratio: Option<f64>,
    pub reports: Vec<SceneReport>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<EvaluationSummary> {
    let cal = args.nm_per_px.or(cfg.io.nm_per_hires_pixel).map(PixelCalibration::new).transpose()?;
    let (_, pairs) = load_archive(&args.truth).with_context(|| format!("reading {}", args.truth.display()))?;
    let score = |index: usize, recon: &Grid2D| -> Result<SceneReport> {
        let meta = &pairs[index].meta;
        let report = evaluate_reconstruction(recon, &meta.emitters, Some(&meta.psf), cal.as_ref(), &cfg.eval)
            .with_context(|| format!("scoring pair {index}"))?;
        Ok(SceneReport { index, report })
    };
    let reports: Vec<SceneReport> = match (&args.weights, &args.recon) {
        (Some(w), _) => {
            let net = Net::load(w, cfg.io.precision)?;
            let n = args.limit.map_or(pairs.len(), |l| l.min(pairs.len()));
            (0..n).into_par_iter().map(|i| score(i, &net.reconstruct(&pairs[i].input)?)).collect::<Result<_>>()?
        }
        (None, Some(r)) => {
            ensure!(args.index < pairs.len(), "index {} out of range: archive holds {} pairs", args.index, pairs.len());
            let recon = read_grid(r).with_context(|| format!("reading {}", r.display()))?;
            let rep = score(args.index, &recon)?;
            if cfg.io.pgm_preview {
                let pts: Vec<(f64, f64)> = rep.report.estimates.iter().map(|e| (e.x, e.y)).collect();
                write_pgm16(args.out.with_extension("overlay.pgm"), &draw_markers(&recon, &pts, 2))?;
            }
            vec![rep]
        }
        (None, None) => bail!("pass --weights or --recon"),
    };
    let ok = || reports.iter().filter(|r| !r.report.failure);
    let summary = EvaluationSummary {
        unit: qdsr::localize::scale_for(cal.as_ref()).1,
        scenes: reports.len(),
        failures: reports.iter().filter(|r| r.report.failure).count(),
        mean_distance: mean(ok().filter_map(|r| r.report.mean_distance)),
        mean_rayleigh_ratio: mean(ok().filter_map(|r| r.report.rayleigh_ratio)),
        reports,
    };
    write_json(&args.out, &summary)?;
    let csv_path = args.out.with_extension("csv");
    let mut csv = Vec::new();
    for (k, r) in summary.reports.iter().enumerate() {
        let mut rows = Vec::new();
        r.report.write_csv(&pairs[r.index].meta.emitters, &mut rows)?;
        let text = String::from_utf8(rows)?;
        for (j, line) in text.lines().enumerate() {
            match (k, j) {
                (0, 0) => writeln!(csv, "scene,{line}")?,
                (_, 0) => {}
                _ => writeln!(csv, "{},{line}", r.index)?,
            }
        }
    }
    std::fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;
    let unit = summary.unit.as_str();
    match (summary.mean_distance, summary.mean_rayleigh_ratio) {
        (Some(d), Some(r)) => eprintln!(
            "{} scenes, {} failures, mean distance {d:.3} {unit} ({r:.4} × Rayleigh)",
            summary.scenes, summary.failures
        ),
        _ => eprintln!("{} scenes, {} failures, no matches", summary.scenes, summary.failures),
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradcheckNet {
    /// 3 layers × 2 filters
    Tiny,
    /// The `net` section of the run configuration
    Config,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = GradcheckNet::Tiny)]
    pub net: GradcheckNet,
    /// Side of the square test input
    #[arg(long, default_value_t = 8)]
    pub input_size: usize,
    /// Flip the sign of the analytic gradient (the check must then fail)
    #[arg(long)]
    pub corrupt: bool,
}

pub fn gradcheck(cfg: &RunConfig, args: &GradcheckArgs) -> Result<GradcheckReport> {
    let net = match args.net {
        GradcheckNet::Tiny => gradcheck_net(),
        GradcheckNet::Config => cfg.net.clone(),
    };
    let opts = GradcheckOptions { input_size: args.input_size, corrupt: args.corrupt, ..GradcheckOptions::default() };
    let report = qdsr::train::gradcheck(&net, &cfg.loss, cfg.seed.unwrap_or(0), &opts)?;
    println!("{:>6} {:>8} {:>8} {:>14}", "layer", "params", "skipped", "max rel error");
    for l in &report.layers {
        println!("{:>6} {:>8} {:>8} {:>14.3e}", l.layer, l.params, l.skipped, l.max_rel_error);
    }
    println!("{:>6} {:>8} {:>8} {:>14.3e}", "input", args.input_size * args.input_size, "", report.input_max_rel_error);
    println!(
        "{}: max relative error {:.3e} (tolerance {:.0e})",
        if report.passed { "PASS" } else { "FAIL" },
        report.max_rel_error,
        report.tolerance
    );
    if !report.passed {
        bail!("gradient check failed: max relative error {:.3e} ≥ {:.0e}", report.max_rel_error, report.tolerance);
    }
    Ok(report)
}

#[derive(Debug, Clone, Args)]
pub struct PsfPreviewArgs {
    /// gaussian or airy
    #[arg(long)]
    pub kind: PsfKind,
    /// FWHM in high-resolution pixels
    #[arg(long)]
    pub fwhm: f64,
    /// Width scale along the squeeze axis, in (0, 1]
    #[arg(long, default_value_t = 1.0)]
    pub squeeze: f64,
    /// Squeeze axis in degrees from the +column direction towards +row
    #[arg(long, default_value_t = 0.0)]
    pub angle_deg: f64,
    /// Kernel side (odd); the minimum admissible support by default
    #[arg(long)]
    pub support: Option<usize>,
    /// Output prefix: writes PREFIX.qsrt, PREFIX.pgm and PREFIX.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsfReport {
    pub spec: PsfSpec,
    pub support: usize,
    pub sum: f64,
    /// Width across the squeeze axis, i.e. the unsqueezed FWHM.
    pub measured_fwhm: f64,
    pub measured_fwhm_along_axis: f64,
    /// Along-axis width over across-axis width; recovers `squeeze`.
    pub anisotropy_ratio: f64,
    /// Radius of the first dark ring across the squeeze axis (Airy only).
    pub first_minimum_radius: Option<f64>,
}

pub fn psf_preview(args: &PsfPreviewArgs) -> Result<PsfReport> {
    let spec =
        PsfSpec { kind: args.kind, fwhm_px: args.fwhm, squeeze: args.squeeze, axis_angle: args.angle_deg.to_radians() };
    spec.validate()?;
    let support = args.support.unwrap_or_else(|| spec.min_support());
    let kernel = render_psf(&spec, support)?;
    let across = spec.axis_angle + std::f64::consts::FRAC_PI_2;
    let measured_fwhm = measure_fwhm(&kernel, across);
    let along = measure_fwhm(&kernel, spec.axis_angle);
    let report = PsfReport {
        spec,
        support,
        sum: kernel.grid().sum(),
        measured_fwhm,
        measured_fwhm_along_axis: along,
        anisotropy_ratio: along / measured_fwhm,
        first_minimum_radius: (spec.kind == PsfKind::Airy).then(|| measure_first_minimum(&kernel, across)),
    };
    write_grid(with_suffix(&args.out, ".qsrt"), kernel.grid())?;
    write_pgm16(with_suffix(&args.out, ".pgm"), kernel.grid())?;
    write_json(&with_suffix(&args.out, ".json"), &report)?;
    eprintln!(
        "{:?} kernel {support}×{support}: FWHM {:.3} px, anisotropy {:.4}, sum {:.12}",
        spec.kind, report.measured_fwhm, report.anisotropy_ratio, report.sum
    );
    Ok(report)
}

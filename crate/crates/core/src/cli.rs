//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::warn;
use rayon::prelude::*;

use crate::assets_io::{
    generate_fixtures, generate_synthetic_basis, load_fmb, load_landmarks, load_obj, read_labels, save_obj,
    write_fixture_set, write_json, FixtureKind, FixtureOptions,
};
use crate::config::RunConfig;
use crate::elam::ProbeSpec;
use crate::error::{Error, Result};
use crate::evaluation::{
    cumulative_curve, curve_to_csv, curve_to_svg, mesh_error, score_eye_states, Alignment, EyeOutcome, MeshEyeState,
    MeshErrorStats, CURVE_SAMPLES,
};
use crate::fitter::{run_pipeline, FitInputs, FitReport};
use crate::losses::EmbeddingProvider;
use crate::image_formation::{render, ImageRgb, Intrinsics};
use crate::morphable_model::{CoefficientDims, FaceParams, Mesh, MorphableBasis};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "facefit", version, about = "Landmark-driven 3D morphable face fitting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic model and a fixture set
    Synth(SynthArgs),
    /// Fit one image, or every image in a directory
    Fit(FitArgs),
    /// Vertex-to-nearest-vertex error between predicted and ground-truth meshes
    EvalNow(EvalNowArgs),
    /// Eye-state accuracy, precision, recall and F1 from fit reports
    EvalEyes(EvalEyesArgs),
    /// Render a parameter file to PNG
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the model, images, landmarks and labels (created if missing)
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub vertices: usize,
    /// Shape, expression and texture coefficient counts
    #[arg(long, default_value = "80,64,80")]
    pub dims: String,
    /// Number of fixtures
    #[arg(long, default_value_t = 10)]
    pub images: usize,
    /// Fixture kinds, cycled in order
    #[arg(long, default_value = "open,closed,semi")]
    pub kinds: String,
    #[arg(long, default_value_t = 128)]
    pub width: u32,
    #[arg(long, default_value_t = 128)]
    pub height: u32,
    /// Do not inject open-eye landmarks into closed fixtures
    #[arg(long)]
    pub no_eye_error: bool,
    /// Gaussian landmark noise (px)
    #[arg(long, default_value_t = 0.0)]
    pub landmark_noise: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Morphable model (.fmb)
    #[arg(long)]
    pub model: PathBuf,
    /// PNG file, or a directory of PNG files
    #[arg(long)]
    pub image: PathBuf,
    /// Landmark JSON file, or a directory holding <stem>.json per image
    #[arg(long)]
    pub landmarks: PathBuf,
    /// key = value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Closure probe: ear, label, a command, or an http(s) URL [default: ear]
    #[arg(long)]
    pub probe: Option<String>,
    /// Skip the eye landmark adjustment
    #[arg(long)]
    pub no_elam: bool,
    /// Drop the eyelid and lip distance terms
    #[arg(long)]
    pub no_ldl: bool,
    /// Output directory for <stem>.json and <stem>.obj
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for directory input
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Include wall-clock time in reports (breaks byte reproducibility)
    #[arg(long)]
    pub timings: bool,
    /// Override a configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalNowArgs {
    /// Fitted meshes (<stem>.obj)
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Ground-truth meshes with matching stems
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// rigid (rotation + translation) or none
    #[arg(long, default_value = "rigid")]
    pub align: String,
    /// CSV path for the cumulative error curve; an SVG is written next to it
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalEyesArgs {
    /// Fit reports (<stem>.json)
    #[arg(long)]
    pub reports_dir: PathBuf,
    /// labels.csv as written by `synth`
    #[arg(long)]
    pub labels: PathBuf,
    /// key = value configuration file (eye thresholds)
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Morphable model (.fmb)
    #[arg(long)]
    pub model: PathBuf,
    /// FaceParams JSON, or a fit report
    #[arg(long)]
    pub params: PathBuf,
    /// Output PNG
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 224)]
    pub width: u32,
    #[arg(long, default_value_t = 224)]
    pub height: u32,
    /// Focal length in pixels [default: width * 1015 / 224]
    #[arg(long)]
    pub focal: Option<f64>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Diverged { .. } | Error::NonFinite { .. } | Error::FaceBehindCamera => EXIT_DIVERGED,
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Format { .. }
        | Error::Image(_)
        | Error::Json(_)
        | Error::Probe { .. }
        | Error::Embedding { .. } => EXIT_IO,
        Error::Config(_) | Error::InvalidInput(_) | Error::DimensionMismatch { .. } => EXIT_USAGE,
    }
}

/// Parse `args` (including the program name) and run. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Synth(a) => synth(&a).map(|_| EXIT_OK),
        Command::Fit(a) => fit_cmd(&a),
        Command::EvalNow(a) => eval_now(&a).map(|_| EXIT_OK),
        Command::EvalEyes(a) => eval_eyes(&a).map(|_| EXIT_OK),
        Command::Render(a) => render_cmd(&a).map(|_| EXIT_OK),
    }
}

fn parse_dims(s: &str) -> Result<CoefficientDims> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("--dims: expected three integers, got `{s}`")))?;
    match v[..] {
        [a, b, c] => Ok(CoefficientDims::new(a, b, c)),
        _ => Err(Error::Config(format!("--dims: expected three integers, got `{s}`"))),
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let dims = parse_dims(&a.dims)?;
    let kinds: Vec<FixtureKind> = a.kinds.split(',').map(|k| k.trim().parse()).collect::<Result<_>>()?;
    if !(a.landmark_noise >= 0.0 && a.landmark_noise.is_finite()) {
        return Err(Error::Config("--landmark-noise must be finite and >= 0".into()));
    }
    let basis = generate_synthetic_basis(a.seed, a.vertices, dims)?;
    let opts = FixtureOptions {
        width: a.width,
        height: a.height,
        inject_open_eye_error: !a.no_eye_error,
        landmark_noise_px: a.landmark_noise,
        ..FixtureOptions::default()
    };
    let fixtures = generate_fixtures(&basis, &kinds, a.images, a.seed, &opts)?;
    write_fixture_set(&a.out_dir, &basis, &fixtures)
}

fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == ext) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn fit_config(a: &FitArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(p) = &a.probe {
        cfg.probe = ProbeSpec::parse(p)?;
    }
    if a.no_elam {
        cfg.fit.elam = false;
    }
    if a.no_ldl {
        cfg.fit.ldl_eyes = false;
        cfg.fit.ldl_mouth = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Fit one image; the report is returned even on divergence.
pub fn fit_one(basis: &MorphableBasis, cfg: &RunConfig, image: &Path, landmarks: &Path) -> Result<(FitReport, bool)> {
    let img = ImageRgb::load_png(image)?;
    let lm = load_landmarks(landmarks)?;
    let mut probe = cfg.make_probe(lm.eye_state)?;
    let mut embedding = cfg.fit.perceptual.then(|| cfg.make_embedding());
    let mut inputs = FitInputs::with_image(basis, &img, &cfg.fit);
    inputs.provider = embedding.as_mut().map(|p| &mut **p as &mut dyn EmbeddingProvider);
    let (mut report, diverged) = match run_pipeline(inputs, &lm.landmarks, probe.as_mut()) {
        Ok(r) => (r, false),
        Err(Error::Diverged { report, .. }) => (*report, true),
        Err(e) => return Err(e),
    };
    report.config = cfg.to_lines();
    Ok((report, diverged))
}

fn fit_cmd(a: &FitArgs) -> Result<i32> {
    let cfg = fit_config(a)?;
    if a.jobs == 0 {
        return Err(Error::Config("--jobs must be >= 1".into()));
    }
    let basis = load_fmb(&a.model)?;
    let jobs: Vec<(String, PathBuf, PathBuf)> = if a.image.is_dir() {
        let lm_dir = &a.landmarks;
        if !lm_dir.is_dir() {
            return Err(Error::Config("--image is a directory, so --landmarks must be one too".into()));
        }
        list_files(&a.image, "png")?
            .into_iter()
            .map(|p| {
                let s = stem(&p);
                let l = lm_dir.join(format!("{s}.json"));
                (s, p, l)
            })
            .collect()
    } else {
        vec![(stem(&a.image), a.image.clone(), a.landmarks.clone())]
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    let run = |(name, img, lm): &(String, PathBuf, PathBuf)| -> Result<bool> {
        let (mut report, diverged) = fit_one(&basis, &cfg, img, lm)?;
        if !a.timings {
            report.wall_ms = None;
        }
        write_json(&a.out.join(format!("{name}.json")), &report)?;
        let mesh = Mesh::from_params(&basis, &report.params)?;
        save_obj(&mesh, &a.out.join(format!("{name}.obj")))?;
        if diverged {
            warn!("{name}: optimization diverged; best iterate written");
        }
        Ok(diverged)
    };
    let results: Vec<Result<bool>> = if a.jobs == 1 || jobs.len() <= 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(a.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    };
    let mut any_diverged = false;
    for r in results {
        any_diverged |= r?;
    }
    Ok(if any_diverged { EXIT_DIVERGED } else { EXIT_OK })
}

fn eval_now(a: &EvalNowArgs) -> Result<()> {
    let alignment: Alignment = a.align.parse()?;
    let preds = list_files(&a.pred_dir, "obj")?;
    if preds.is_empty() {
        return Err(Error::Config(format!("no .obj files in {}", a.pred_dir.display())));
    }
    let mut table = String::from("mesh\tmedian\tmean\tstd\n");
    let mut pooled = Vec::new();
    for p in &preds {
        let name = stem(p);
        let pred = load_obj(p)?;
        let gt = load_obj(&a.gt_dir.join(format!("{name}.obj")))?;
        let stats = mesh_error(&pred, &gt, alignment)?;
        let _ = writeln!(table, "{name}\t{:.6}\t{:.6}\t{:.6}", stats.median, stats.mean, stats.std);
        pooled.extend_from_slice(&stats.distances);
    }
    let all = MeshErrorStats::from_distances(pooled);
    let _ = writeln!(table, "all\t{:.6}\t{:.6}\t{:.6}", all.median, all.mean, all.std);
    print!("{table}");
    if let Some(path) = &a.curve_out {
        let curve = cumulative_curve(&all.distances, CURVE_SAMPLES);
        std::fs::write(path, curve_to_csv(&curve)).map_err(|e| Error::io(path, e))?;
        let svg = path.with_extension("svg");
        std::fs::write(&svg, curve_to_svg(&curve, "cumulative vertex error")).map_err(|e| Error::io(&svg, e))?;
    }
    Ok(())
}

fn eval_eyes(a: &EvalEyesArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut outcomes = Vec::new();
    for row in read_labels(&a.labels)? {
        let Some(truth) = row.eye_state else {
            continue;
        };
        let report: FitReport = crate::assets_io::read_json(&a.reports_dir.join(format!("{}.json", row.name)))?;
        let predicted = report.mesh_eye_ratios.and_then(|[r, l]| {
            let (r, l) = (
                MeshEyeState::classify(r, &cfg.thresholds),
                MeshEyeState::classify(l, &cfg.thresholds),
            );
            if r == l {
                r.binary()
            } else {
                None
            }
        });
        outcomes.push(EyeOutcome { predicted, truth });
    }
    let s = score_eye_states(&outcomes)?;
    let mut out = String::from("metric\tvalue\n");
    for (k, v) in [
        ("total", s.total as f64),
        ("tp", s.tp as f64),
        ("fp", s.fp as f64),
        ("fn", s.fn_ as f64),
        ("tn", s.tn as f64),
    ] {
        let _ = writeln!(out, "{k}\t{v}");
    }
    for (k, v) in [
        ("accuracy", s.accuracy),
        ("precision", s.precision),
        ("recall", s.recall),
        ("f1", s.f1),
    ] {
        let _ = writeln!(out, "{k}\t{v:.6}");
    }
    print!("{out}");
    Ok(())
}

fn load_params(path: &Path) -> Result<FaceParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |e: serde_json::Error| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        detail: e.to_string(),
    };
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(parse_err)?;
    if let Some(inner) = value.get_mut("params") {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(parse_err)
}

fn render_cmd(a: &RenderArgs) -> Result<()> {
    let basis = load_fmb(&a.model)?;
    let params = load_params(&a.params)?;
    params.check_dims(basis.dims())?;
    let intrinsics = Intrinsics::for_image(a.width, a.height, a.focal)?;
    let rendered = render(&basis, &params, intrinsics)?;
    rendered.output.color.save_png(&a.out)
}

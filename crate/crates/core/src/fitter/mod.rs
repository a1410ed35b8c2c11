//! Per-image analysis-by-synthesis.

pub mod adam;
pub mod init;
pub mod objective;

use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

pub use objective::{Evaluation, GradientMode, Objective, Regularization};

use crate::elam::{adjust_landmarks, EyeStateProbe, EyelidPairing, PairingMode, ProbeInput};
use crate::error::{Error, Result};
use crate::image_formation::{ImageRgb, Intrinsics};
use crate::landmarks::{Eye, LandmarkSet, Vec2};
use crate::losses::{EmbeddingProvider, LossBreakdown, LossWeights, PairSet};
use crate::evaluation::gap_ratio;
use crate::morphable_model::{FaceParams, Mesh, MorphableBasis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub iterations: usize,
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Step at the last iteration as a fraction of `step`.
    pub step_decay_final: f64,
    /// Step multiplier for the x/y translation (model units).
    pub translation_step_scale: f64,
    /// Step multiplier for the camera-axis translation.
    pub depth_step_scale: f64,
    pub reg: Regularization,
    pub weights: LossWeights,
    pub ldl_eyes: bool,
    pub ldl_mouth: bool,
    pub photometric: bool,
    pub perceptual: bool,
    pub gradient_mode: GradientMode,
    pub fd_step: f64,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub divergence_threshold: f64,
    pub seed: u64,
    pub elam: bool,
    pub pairing: PairingMode,
    /// Focal length in pixels; `None` uses the default for the image width.
    pub focal: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            step: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_decay_final: 0.01,
            translation_step_scale: 10.0,
            depth_step_scale: 100.0,
            reg: Regularization::default(),
            weights: LossWeights::default(),
            ldl_eyes: true,
            ldl_mouth: true,
            photometric: false,
            perceptual: false,
            gradient_mode: GradientMode::Analytic,
            fd_step: 1e-4,
            convergence_window: 20,
            convergence_tol: 1e-6,
            divergence_threshold: 1e6,
            seed: 0,
            elam: true,
            pairing: PairingMode::default(),
            focal: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations < 1 {
            return bad("iterations must be >= 1".into());
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad(format!("step {} must be > 0", self.step));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam decay parameters must lie in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) || !(self.fd_step > 0.0) {
            return bad("epsilon and fd_step must be > 0".into());
        }
        if !(self.step_decay_final > 0.0 && self.step_decay_final <= 1.0) {
            return bad(format!("step_decay_final {} must be in (0, 1]", self.step_decay_final));
        }
        for (k, v) in [
            ("reg_alpha", self.reg.alpha),
            ("reg_beta", self.reg.beta),
            ("reg_delta", self.reg.delta),
            ("w_dyn", self.weights.w_dyn),
            ("w_img", self.weights.w_img),
            ("w_per", self.weights.w_per),
            ("translation_step_scale", self.translation_step_scale),
            ("depth_step_scale", self.depth_step_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{k} = {v} must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn pair_set(&self) -> PairSet {
        PairSet::standard(&EyelidPairing::from_mode(self.pairing), self.ldl_eyes, self.ldl_mouth)
    }
}

/// Loss values recorded at one iterate, before its update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub ldl: f64,
    pub photo: f64,
    pub landmark: f64,
    pub perceptual: f64,
    pub total: f64,
    pub objective: f64,
}

impl TrajectoryEntry {
    fn of(e: &Evaluation) -> Self {
        let b = &e.breakdown;
        Self {
            ldl: b.ldl,
            photo: b.photo,
            landmark: b.landmark,
            perceptual: b.perceptual,
            total: b.total,
            objective: e.objective,
        }
    }
}

/// Per-eye closure probability as used by the landmark adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeProbability {
    pub eye: Eye,
    pub probability: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Best iterate by objective (earliest on ties).
    pub params: FaceParams,
    pub best_iteration: usize,
    /// Loss terms at `params`.
    pub loss: LossBreakdown,
    pub regularizer: f64,
    pub objective: f64,
    /// Mean Euclidean distance between projected and target landmarks (px).
    pub mean_reprojection_px: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub trajectory: Vec<TrajectoryEntry>,
    pub warnings: Vec<String>,
    pub raw_landmarks: Vec<[f64; 2]>,
    pub adjusted_landmarks: Vec<[f64; 2]>,
    pub eye_probabilities: Vec<EyeProbability>,
    /// Eyelid gap ratios (right, left) of the fitted mesh.
    pub mesh_eye_ratios: Option<[f64; 2]>,
    pub intrinsics: Intrinsics,
    /// Wall-clock time of the fit; left out of serialized reports unless requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
    /// Effective configuration as key=value lines, when run from a config.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub config: Vec<String>,
}

fn as_pairs(points: &[Vec2]) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p.x, p.y]).collect()
}

/// Inputs shared by [`fit`] and [`run_pipeline`].
pub struct FitInputs<'a> {
    pub basis: &'a MorphableBasis,
    /// Needed for photometric/perceptual terms and for probe crops.
    pub image: Option<&'a ImageRgb>,
    /// Image size when no image is given.
    pub image_size: (u32, u32),
    pub config: &'a FitConfig,
    pub provider: Option<&'a mut dyn EmbeddingProvider>,
}

impl<'a> FitInputs<'a> {
    pub fn new(basis: &'a MorphableBasis, image_size: (u32, u32), config: &'a FitConfig) -> Self {
        Self {
            basis,
            image: None,
            image_size,
            config,
            provider: None,
        }
    }

    pub fn with_image(basis: &'a MorphableBasis, image: &'a ImageRgb, config: &'a FitConfig) -> Self {
        Self {
            basis,
            image: Some(image),
            image_size: (image.width, image.height),
            config,
            provider: None,
        }
    }

    fn intrinsics(&self) -> Result<Intrinsics> {
        let (w, h) = self.image.map_or(self.image_size, |i| (i.width, i.height));
        Intrinsics::for_image(w, h, self.config.focal)
    }
}

/// Fit `FaceParams` to landmarks that have already been through ELAM.
pub fn fit(inputs: FitInputs<'_>, landmarks: &LandmarkSet) -> Result<FitReport> {
    let start = Instant::now();
    let cfg = inputs.config;
    cfg.validate()?;
    let intrinsics = inputs.intrinsics()?;
    let basis = inputs.basis;
    let mut warnings = Vec::new();

    let mut params = FaceParams::zeros(basis.dims());
    params.pose = init::initial_pose(basis, landmarks, &intrinsics)?;

    let mut objective = Objective::new(basis, landmarks, intrinsics, cfg.pair_set(), cfg.weights, cfg.reg);
    objective.mode = cfg.gradient_mode;
    objective.fd_step = cfg.fd_step;
    if cfg.photometric || cfg.perceptual {
        match inputs.image {
            Some(img) => {
                objective.image = Some(img);
                objective.use_photo = cfg.photometric;
                if cfg.perceptual {
                    objective.provider = inputs.provider.map(|p| p as &mut dyn EmbeddingProvider);
                    if objective.provider.is_none() {
                        return Err(Error::Config("perceptual term enabled without an embedding provider".into()));
                    }
                }
            }
            None => {
                let msg = "image terms requested but no image given; fitting landmarks only".to_string();
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let layout = objective.layout();
    let mut scale = vec![1.0; layout.len()];
    let rt = layout.translation();
    scale[rt.start] = cfg.translation_step_scale;
    scale[rt.start + 1] = cfg.translation_step_scale;
    scale[rt.start + 2] = cfg.depth_step_scale;

    let mut theta = params.to_vector();
    let mut adam = adam::Adam::new(theta.len(), cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut trajectory = Vec::with_capacity(cfg.iterations);
    let mut best: Option<(usize, Vec<f64>, Evaluation)> = None;
    let mut converged = false;
    let mut reported_ldl_degenerate = false;

    for t in 0..cfg.iterations {
        let step = objective.gradient(&theta);
        let (eval, grad) = match step {
            Ok(v) => v,
            Err(e @ (Error::NonFinite { .. } | Error::FaceBehindCamera)) if t > 0 => {
                let report = build_report(
                    basis,
                    best.clone().expect("an evaluated iterate exists after iteration 0"),
                    trajectory,
                    t,
                    false,
                    warnings,
                    landmarks,
                    intrinsics,
                    start,
                );
                warn!("fit aborted at iteration {t}: {e}");
                return Err(Error::Diverged {
                    iteration: t,
                    loss: f64::NAN,
                    report: Box::new(report),
                });
            }
            Err(e) => return Err(e),
        };
        if eval.degenerate_ldl_pairs > 0 && !reported_ldl_degenerate {
            let msg = format!("{} LDL pairs skipped: observed region width < 1e-6 px", eval.degenerate_ldl_pairs);
            warn!("{msg}");
            warnings.push(msg);
            reported_ldl_degenerate = true;
        }
        trajectory.push(TrajectoryEntry::of(&eval));
        if eval.objective > cfg.divergence_threshold {
            let loss = eval.objective;
            let current = best.clone().unwrap_or((t, theta.clone(), eval));
            let report = build_report(basis, current, trajectory, t + 1, false, warnings, landmarks, intrinsics, start);
            return Err(Error::Diverged {
                iteration: t,
                loss,
                report: Box::new(report),
            });
        }
        if best.as_ref().is_none_or(|b| eval.objective < b.2.objective) {
            best = Some((t, theta.clone(), eval));
        }
        let w = cfg.convergence_window;
        if w > 0 && trajectory.len() > w {
            let now = trajectory[trajectory.len() - 1].objective;
            let then = trajectory[trajectory.len() - 1 - w].objective;
            if (now - then).abs() <= cfg.convergence_tol * then.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        let lr = adam::decayed_step(cfg.step, cfg.step_decay_final, t, cfg.iterations);
        adam.step(&mut theta, &grad, lr, &scale);
    }

    let iterations_run = trajectory.len();
    Ok(build_report(
        basis,
        best.expect("at least one iteration"),
        trajectory,
        iterations_run,
        converged,
        warnings,
        landmarks,
        intrinsics,
        start,
    ))
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    basis: &MorphableBasis,
    best: (usize, Vec<f64>, Evaluation),
    trajectory: Vec<TrajectoryEntry>,
    iterations_run: usize,
    converged: bool,
    warnings: Vec<String>,
    landmarks: &LandmarkSet,
    intrinsics: Intrinsics,
    start: Instant,
) -> FitReport {
    let (best_iteration, theta, eval) = best;
    let params = FaceParams::from_vector(basis.dims(), &theta).expect("layout matches");
    let mesh_eye_ratios = Mesh::from_params(basis, &params)
        .and_then(|m| Ok([gap_ratio(&m, Eye::Right)?, gap_ratio(&m, Eye::Left)?]))
        .ok()
        .filter(|r| r.iter().all(|v| v.is_finite()));
    let valid: Vec<usize> = (0..landmarks.points.len()).filter(|&i| landmarks.valid[i]).collect();
    let mean_reprojection_px = if valid.is_empty() {
        0.0
    } else {
        valid
            .iter()
            .map(|&i| (eval.projected[i] - landmarks.points[i]).norm())
            .sum::<f64>()
            / valid.len() as f64
    };
    FitReport {
        params,
        best_iteration,
        loss: eval.breakdown,
        regularizer: eval.regularizer,
        objective: eval.objective,
        mean_reprojection_px,
        iterations_run,
        converged,
        trajectory,
        warnings,
        raw_landmarks: as_pairs(&landmarks.points),
        adjusted_landmarks: as_pairs(&landmarks.points),
        eye_probabilities: Vec::new(),
        mesh_eye_ratios,
        intrinsics,
        wall_ms: Some(start.elapsed().as_secs_f64() * 1e3),
        config: Vec::new(),
    }
}

/// Square crop around one eye: side 1.5 x the larger landmark extent, clipped to the image.
pub fn eye_crop(image: &ImageRgb, landmarks: &LandmarkSet, eye: Eye) -> ImageRgb {
    let (lo, hi) = landmarks.extent(&eye.indices());
    let center = (lo + hi) * 0.5;
    let side = 1.5 * (hi - lo).max().max(1.0);
    let x0 = (center.x - side / 2.0).floor() as i64;
    let y0 = (center.y - side / 2.0).floor() as i64;
    let s = side.ceil() as i64;
    image.crop(x0, y0, s, s)
}

/// Probe each eye, adjust the upper-lid landmarks, then fit.
///
/// With `config.elam == false` the probe is not consulted and the raw landmarks are
/// fitted directly.
pub fn run_pipeline(
    inputs: FitInputs<'_>,
    raw: &LandmarkSet,
    probe: &mut dyn EyeStateProbe,
) -> Result<FitReport> {
    let cfg = inputs.config;
    let mut warnings = Vec::new();
    let mut probabilities = Vec::new();
    let adjusted = if cfg.elam {
        let mut p = [0.0; 2];
        for (k, eye) in Eye::BOTH.into_iter().enumerate() {
            let input = ProbeInput {
                eye,
                landmarks: raw.eye(eye),
                crop: inputs.image.map(|img| eye_crop(img, raw, eye)),
            };
            let out = probe.probe(&input)?;
            warnings.extend(out.warnings.iter().cloned());
            p[k] = out.probability;
            probabilities.push(EyeProbability {
                eye,
                probability: out.probability,
                source: out.source,
            });
        }
        adjust_landmarks(raw, &EyelidPairing::from_mode(cfg.pairing), p[0], p[1])
    } else {
        raw.clone()
    };
    let attach = |r: &mut FitReport, warnings: &[String], probabilities: &[EyeProbability]| {
        r.raw_landmarks = as_pairs(&raw.points);
        r.eye_probabilities = probabilities.to_vec();
        let mut w = warnings.to_vec();
        w.append(&mut r.warnings);
        r.warnings = w;
    };
    match fit(inputs, &adjusted) {
        Ok(mut r) => {
            attach(&mut r, &warnings, &probabilities);
            Ok(r)
        }
        Err(Error::Diverged {
            iteration,
            loss,
            mut report,
        }) => {
            attach(&mut report, &warnings, &probabilities);
            Err(Error::Diverged {
                iteration,
                loss,
                report,
            })
        }
        Err(e) => {
            warnings.clear();
            Err(e)
        }
    }
}

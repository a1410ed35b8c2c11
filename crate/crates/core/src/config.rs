//! `key = value` run configuration.

use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use crate::elam::{EarProbe, EyeState, EyeStateProbe, ExternalProbe, ExternalTarget, FixedProbe, PairingMode, ProbeSpec};
use crate::error::{Error, Result};
use crate::evaluation::EyeThresholds;
use crate::fitter::{FitConfig, GradientMode};
use crate::losses::{EmbeddingProvider, ExternalEmbedding, PatchStats};

/// Perceptual embedding selection.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum EmbeddingSpec {
    #[default]
    PatchStats,
    External(ExternalTarget),
}

impl EmbeddingSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "patch-stats" => Ok(EmbeddingSpec::PatchStats),
            other => Ok(EmbeddingSpec::External(ExternalTarget::parse(other)?)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            EmbeddingSpec::PatchStats => "patch-stats".into(),
            EmbeddingSpec::External(t) => t.describe(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub fit: FitConfig,
    pub probe: ProbeSpec,
    pub probe_timeout_ms: u64,
    pub ear_open: f64,
    pub thresholds: EyeThresholds,
    pub embedding: EmbeddingSpec,
    pub embedding_dimension: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            probe: ProbeSpec::Ear,
            probe_timeout_ms: 5000,
            ear_open: crate::elam::DEFAULT_EAR_OPEN,
            thresholds: EyeThresholds::default(),
            embedding: EmbeddingSpec::PatchStats,
            embedding_dimension: 512,
        }
    }
}

/// All recognised keys, in echo order.
pub const KEYS: &[&str] = &[
    "iterations",
    "step",
    "beta1",
    "beta2",
    "epsilon",
    "step_decay_final",
    "translation_step_scale",
    "depth_step_scale",
    "reg_alpha",
    "reg_beta",
    "reg_delta",
    "w_dyn",
    "w_img",
    "w_per",
    "ldl_eyes",
    "ldl_mouth",
    "photometric",
    "perceptual",
    "gradient_mode",
    "fd_step",
    "convergence_window",
    "convergence_tol",
    "divergence_threshold",
    "seed",
    "elam",
    "pairing",
    "focal",
    "probe",
    "probe_timeout_ms",
    "ear_open",
    "eye_closed_below",
    "eye_open_above",
    "embedding",
    "embedding_dimension",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got `{value}`"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let f = &mut self.fit;
        match key {
            "iterations" => f.iterations = num(key, v)?,
            "step" => f.step = num(key, v)?,
            "beta1" => f.beta1 = num(key, v)?,
            "beta2" => f.beta2 = num(key, v)?,
            "epsilon" => f.epsilon = num(key, v)?,
            "step_decay_final" => f.step_decay_final = num(key, v)?,
            "translation_step_scale" => f.translation_step_scale = num(key, v)?,
            "depth_step_scale" => f.depth_step_scale = num(key, v)?,
            "reg_alpha" => f.reg.alpha = num(key, v)?,
            "reg_beta" => f.reg.beta = num(key, v)?,
            "reg_delta" => f.reg.delta = num(key, v)?,
            "w_dyn" => f.weights.w_dyn = num(key, v)?,
            "w_img" => f.weights.w_img = num(key, v)?,
            "w_per" => f.weights.w_per = num(key, v)?,
            "ldl_eyes" => f.ldl_eyes = flag(key, v)?,
            "ldl_mouth" => f.ldl_mouth = flag(key, v)?,
            "photometric" => f.photometric = flag(key, v)?,
            "perceptual" => f.perceptual = flag(key, v)?,
            "gradient_mode" => {
                f.gradient_mode = match v {
                    "analytic" => GradientMode::Analytic,
                    "finite-difference" => GradientMode::FiniteDifference,
                    _ => return Err(Error::Config(format!("gradient_mode: unknown mode `{v}`"))),
                }
            }
            "fd_step" => f.fd_step = num(key, v)?,
            "convergence_window" => f.convergence_window = num(key, v)?,
            "convergence_tol" => f.convergence_tol = num(key, v)?,
            "divergence_threshold" => f.divergence_threshold = num(key, v)?,
            "seed" => f.seed = num(key, v)?,
            "elam" => f.elam = flag(key, v)?,
            "pairing" => f.pairing = PairingMode::from_str(v)?,
            "focal" => f.focal = if v == "auto" { None } else { Some(num(key, v)?) },
            "probe" => self.probe = ProbeSpec::parse(v)?,
            "probe_timeout_ms" => self.probe_timeout_ms = num(key, v)?,
            "ear_open" => self.ear_open = num(key, v)?,
            "eye_closed_below" => self.thresholds.closed_below = num(key, v)?,
            "eye_open_above" => self.thresholds.open_above = num(key, v)?,
            "embedding" => self.embedding = EmbeddingSpec::parse(v)?,
            "embedding_dimension" => self.embedding_dimension = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let f = &self.fit;
        Some(match key {
            "iterations" => f.iterations.to_string(),
            "step" => f.step.to_string(),
            "beta1" => f.beta1.to_string(),
            "beta2" => f.beta2.to_string(),
            "epsilon" => f.epsilon.to_string(),
            "step_decay_final" => f.step_decay_final.to_string(),
            "translation_step_scale" => f.translation_step_scale.to_string(),
            "depth_step_scale" => f.depth_step_scale.to_string(),
            "reg_alpha" => f.reg.alpha.to_string(),
            "reg_beta" => f.reg.beta.to_string(),
            "reg_delta" => f.reg.delta.to_string(),
            "w_dyn" => f.weights.w_dyn.to_string(),
            "w_img" => f.weights.w_img.to_string(),
            "w_per" => f.weights.w_per.to_string(),
            "ldl_eyes" => f.ldl_eyes.to_string(),
            "ldl_mouth" => f.ldl_mouth.to_string(),
            "photometric" => f.photometric.to_string(),
            "perceptual" => f.perceptual.to_string(),
            "gradient_mode" => match f.gradient_mode {
                GradientMode::Analytic => "analytic".into(),
                GradientMode::FiniteDifference => "finite-difference".into(),
            },
            "fd_step" => f.fd_step.to_string(),
            "convergence_window" => f.convergence_window.to_string(),
            "convergence_tol" => f.convergence_tol.to_string(),
            "divergence_threshold" => f.divergence_threshold.to_string(),
            "seed" => f.seed.to_string(),
            "elam" => f.elam.to_string(),
            "pairing" => f.pairing.as_str().into(),
            "focal" => f.focal.map_or("auto".into(), |v| v.to_string()),
            "probe" => self.probe.describe(),
            "probe_timeout_ms" => self.probe_timeout_ms.to_string(),
            "ear_open" => self.ear_open.to_string(),
            "eye_closed_below" => self.thresholds.closed_below.to_string(),
            "eye_open_above" => self.thresholds.open_above.to_string(),
            "embedding" => self.embedding.describe(),
            "embedding_dimension" => self.embedding_dimension.to_string(),
            _ => return None,
        })
    }

    /// Apply `key = value` lines. `#` starts a comment; blank lines are skipped.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |detail: String| Error::Parse {
                path: source.to_string(),
                line: n + 1,
                detail,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got `{line}`")))?;
            self.set(k.trim(), v).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text, source)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        if !(self.ear_open > 0.0 && self.ear_open.is_finite()) {
            return Err(Error::Config(format!("ear_open {} must be > 0", self.ear_open)));
        }
        let t = self.thresholds;
        if !(t.closed_below >= 0.0 && t.closed_below <= t.open_above && t.open_above.is_finite()) {
            return Err(Error::Config(format!(
                "eye thresholds need 0 <= eye_closed_below <= eye_open_above (got {}, {})",
                t.closed_below, t.open_above
            )));
        }
        if self.embedding_dimension == 0 {
            return Err(Error::Config("embedding_dimension must be > 0".into()));
        }
        Ok(())
    }

    /// Effective configuration, one `key = value` per line.
    pub fn to_lines(&self) -> Vec<String> {
        KEYS.iter()
            .map(|k| format!("{k} = {}", self.get(k).expect("every listed key has a value")))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = self.to_lines().join("\n");
        s.push('\n');
        s
    }

    /// Probe for one image. `label` is the landmark file's `eye_state`, used by the label probe
    /// (which falls back to EAR when it is absent).
    pub fn make_probe(&self, label: Option<EyeState>) -> Result<Box<dyn EyeStateProbe>> {
        let ear = EarProbe::new(self.ear_open)?;
        Ok(match &self.probe {
            ProbeSpec::Ear => Box::new(ear),
            ProbeSpec::Label => match label {
                Some(state) => Box::new(FixedProbe::both(state.oracle_probability())),
                None => {
                    log::warn!("landmark file has no eye_state; label probe falls back to ear");
                    Box::new(ear)
                }
            },
            ProbeSpec::External(t) => Box::new(ExternalProbe::new(
                t.clone(),
                Duration::from_millis(self.probe_timeout_ms),
                ear,
            )),
        })
    }

    pub fn make_embedding(&self) -> Box<dyn EmbeddingProvider> {
        match &self.embedding {
            EmbeddingSpec::PatchStats => Box::new(PatchStats),
            EmbeddingSpec::External(t) => Box::new(ExternalEmbedding {
                target: t.clone(),
                timeout: Duration::from_millis(self.probe_timeout_ms),
                dimension: self.embedding_dimension,
            }),
        }
    }
}

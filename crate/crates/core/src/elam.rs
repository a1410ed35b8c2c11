//! Eye landmark adjustment.
//!
//! A probe estimates `P`, the probability that an eye is **closed**. Each upper-lid
//! landmark `i` paired with a lower-lid landmark `j` then moves vertically:
//!
//! ```text
//! y_i <- y_i + P * (y_j - y_i)
//! ```
//!
//! At `P = 0.5` the upper lid lands midway between its detected position and the
//! lower lid; at `P = 1` it sits on the lower lid. This signed form moves the lid
//! toward its partner in any image convention. The unsigned rule
//! `y_i - P |y_i - y_j|` only agrees with it when y points up; with raster
//! coordinates (y down, used throughout this crate) it would open the eye instead.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_formation::ImageRgb;
use crate::landmarks::{ibug, Eye, LandmarkSet, Vec2};

/// Decision threshold on `P` for the binary eye state.
pub const CLOSED_THRESHOLD: f64 = 0.5;
/// Eye aspect ratio of a fully open eye for the geometric probe.
pub const DEFAULT_EAR_OPEN: f64 = 0.3;
/// Eye-to-eye distance below which an eye is treated as degenerate (px).
const DEGENERATE_EYE_PX: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EyeState {
    Open,
    Closed,
}

impl EyeState {
    /// `Closed` iff `p >= 0.5`.
    pub fn from_probability(p: f64) -> Self {
        if p >= CLOSED_THRESHOLD {
            EyeState::Closed
        } else {
            EyeState::Open
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EyeState::Open => "open",
            EyeState::Closed => "closed",
        }
    }

    /// Closure probability an oracle would report for this state.
    pub fn oracle_probability(self) -> f64 {
        match self {
            EyeState::Open => 0.0,
            EyeState::Closed => 1.0,
        }
    }
}

impl FromStr for EyeState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(EyeState::Open),
            "closed" => Ok(EyeState::Closed),
            other => Err(Error::InvalidInput(format!("unknown eye state `{other}`"))),
        }
    }
}

/// Which landmark numbers form upper/lower eyelid pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PairingMode {
    /// (37,41), (38,40), (43,47), (44,46) taken literally as 1-based iBUG numbers.
    #[serde(rename = "paper")]
    Paper,
    /// Vertically opposed lid points: (38,42), (39,41), (44,48), (45,47).
    #[default]
    #[serde(rename = "ibug-vertical")]
    IbugVertical,
}

impl PairingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PairingMode::Paper => "paper",
            PairingMode::IbugVertical => "ibug-vertical",
        }
    }
}

impl FromStr for PairingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(PairingMode::Paper),
            "ibug-vertical" => Ok(PairingMode::IbugVertical),
            other => Err(Error::Config(format!(
                "unknown pairing `{other}` (expected paper or ibug-vertical)"
            ))),
        }
    }
}

/// Ordered (upper, lower) eyelid landmark pairs per eye, 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EyelidPairing {
    right: Vec<(usize, usize)>,
    left: Vec<(usize, usize)>,
}

impl EyelidPairing {
    pub fn new(right: Vec<(usize, usize)>, left: Vec<(usize, usize)>) -> Result<Self> {
        let all: Vec<_> = right.iter().chain(&left).copied().collect();
        let uppers: Vec<usize> = all.iter().map(|p| p.0).collect();
        let lowers: Vec<usize> = all.iter().map(|p| p.1).collect();
        let distinct = |v: &[usize]| {
            let mut s = v.to_vec();
            s.sort_unstable();
            s.dedup();
            s.len() == v.len()
        };
        if !distinct(&uppers) || !distinct(&lowers) {
            return Err(Error::InvalidInput("eyelid pairing is not a bijection".into()));
        }
        if uppers.iter().any(|u| lowers.contains(u)) {
            return Err(Error::InvalidInput("upper and lower eyelid sets overlap".into()));
        }
        if all.iter().any(|&(a, b)| a >= 68 || b >= 68) {
            return Err(Error::InvalidInput("eyelid pairing index out of range".into()));
        }
        Ok(Self { right, left })
    }

    pub fn from_mode(mode: PairingMode) -> Self {
        let p = |a: usize, b: usize| (ibug(a), ibug(b));
        match mode {
            PairingMode::Paper => Self {
                right: vec![p(37, 41), p(38, 40)],
                left: vec![p(43, 47), p(44, 46)],
            },
            PairingMode::IbugVertical => Self {
                right: vec![p(38, 42), p(39, 41)],
                left: vec![p(44, 48), p(45, 47)],
            },
        }
    }

    pub fn pairs(&self, eye: Eye) -> &[(usize, usize)] {
        match eye {
            Eye::Right => &self.right,
            Eye::Left => &self.left,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = (Eye, (usize, usize))> + '_ {
        Eye::BOTH
            .into_iter()
            .flat_map(move |e| self.pairs(e).iter().map(move |&p| (e, p)))
    }

    pub fn upper_indices(&self) -> Vec<usize> {
        self.all().map(|(_, (u, _))| u).collect()
    }
}

/// Move each upper-lid landmark toward its lower partner by the eye's closure
/// probability. Only y of the upper-lid points changes; the input is untouched.
pub fn adjust_landmarks(lm: &LandmarkSet, pairing: &EyelidPairing, p_right: f64, p_left: f64) -> LandmarkSet {
    let mut out = lm.clone();
    for (eye, (i, j)) in pairing.all() {
        let p = match eye {
            Eye::Right => p_right,
            Eye::Left => p_left,
        };
        debug_assert!((0.0..=1.0).contains(&p), "closure probability {p} outside [0, 1]");
        let p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        let yi = lm.points[i].y;
        let yj = lm.points[j].y;
        out.points[i].y = yi + p * (yj - yi);
    }
    out
}

/// What a probe sees for one eye.
#[derive(Debug, Clone)]
pub struct ProbeInput {
    pub eye: Eye,
    /// The six landmarks of this eye in iBUG order.
    pub landmarks: [Vec2; 6],
    /// Image crop around the eye, when an image is available.
    pub crop: Option<ImageRgb>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    /// Probability the eye is closed, in `[0, 1]`.
    pub probability: f64,
    /// Name of the probe that actually produced `probability`.
    pub source: String,
    pub warnings: Vec<String>,
}

impl ProbeOutcome {
    pub fn state(&self) -> EyeState {
        EyeState::from_probability(self.probability)
    }
}

/// Source of eye-closure probabilities. One instance per worker.
pub trait EyeStateProbe: Send {
    fn name(&self) -> String;
    fn probe(&mut self, input: &ProbeInput) -> Result<ProbeOutcome>;
}

/// Eye aspect ratio of six iBUG-ordered eye points and whether the eye is degenerate.
pub fn eye_aspect_ratio(eye: &[Vec2; 6]) -> Option<f64> {
    let width = (eye[0] - eye[3]).norm();
    if !(width >= DEGENERATE_EYE_PX) {
        return None;
    }
    Some(((eye[1] - eye[5]).norm() + (eye[2] - eye[4]).norm()) / (2.0 * width))
}

/// Geometric probe: `P = clamp(1 - EAR / ear_open, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarProbe {
    pub ear_open: f64,
}

impl Default for EarProbe {
    fn default() -> Self {
        Self {
            ear_open: DEFAULT_EAR_OPEN,
        }
    }
}

impl EarProbe {
    pub fn new(ear_open: f64) -> Result<Self> {
        if !(ear_open > 0.0 && ear_open.is_finite()) {
            return Err(Error::Config(format!("ear_open {ear_open} must be > 0")));
        }
        Ok(Self { ear_open })
    }

    pub fn probability(&self, eye: &[Vec2; 6]) -> ProbeOutcome {
        match eye_aspect_ratio(eye) {
            Some(ear) => ProbeOutcome {
                probability: (1.0 - ear / self.ear_open).clamp(0.0, 1.0),
                source: "ear".into(),
                warnings: vec![],
            },
            None => {
                let msg = "degenerate eye (corner distance < 1e-6 px); reporting closed".to_string();
                warn!("{msg}");
                ProbeOutcome {
                    probability: 1.0,
                    source: "ear".into(),
                    warnings: vec![msg],
                }
            }
        }
    }
}

impl EyeStateProbe for EarProbe {
    fn name(&self) -> String {
        "ear".into()
    }

    fn probe(&mut self, input: &ProbeInput) -> Result<ProbeOutcome> {
        Ok(self.probability(&input.landmarks))
    }
}

/// Returns preset probabilities, e.g. from ground-truth labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedProbe {
    pub right: f64,
    pub left: f64,
}

impl FixedProbe {
    pub fn both(p: f64) -> Self {
        Self { right: p, left: p }
    }
}

impl EyeStateProbe for FixedProbe {
    fn name(&self) -> String {
        "fixed".into()
    }

    fn probe(&mut self, input: &ProbeInput) -> Result<ProbeOutcome> {
        let p = match input.eye {
            Eye::Right => self.right,
            Eye::Left => self.left,
        };
        Ok(ProbeOutcome {
            probability: p.clamp(0.0, 1.0),
            source: "fixed".into(),
            warnings: vec![],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExternalTarget {
    /// Program plus leading arguments; the crop path is appended as the last argument.
    Command(Vec<String>),
    Http(String),
}

impl ExternalTarget {
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec.starts_with("http://") || spec.starts_with("https://") {
            return Ok(ExternalTarget::Http(spec.to_string()));
        }
        let parts: Vec<String> = spec.split_whitespace().map(str::to_string).collect();
        if parts.is_empty() {
            return Err(Error::Config("empty probe command".into()));
        }
        Ok(ExternalTarget::Command(parts))
    }

    pub fn describe(&self) -> String {
        match self {
            ExternalTarget::Command(parts) => parts.join(" "),
            ExternalTarget::Http(url) => url.clone(),
        }
    }
}

/// Why an external call produced no usable answer.
#[derive(Debug)]
pub(crate) enum ExternalFailure {
    /// Timeout, spawn failure or connection failure: caller may fall back.
    Unavailable(String),
    /// The service answered but not with what we expect.
    Malformed(String),
}

/// Run an external command or HTTP endpoint on a PNG payload and return its stdout/body.
pub(crate) fn call_external(
    target: &ExternalTarget,
    png: &[u8],
    timeout: Duration,
) -> std::result::Result<String, ExternalFailure> {
    match target {
        ExternalTarget::Command(parts) => run_command(parts, png, timeout),
        ExternalTarget::Http(url) => post_http(url, png, timeout),
    }
}

fn run_command(parts: &[String], png: &[u8], timeout: Duration) -> std::result::Result<String, ExternalFailure> {
    let mut file = tempfile::Builder::new()
        .prefix("facefit-crop-")
        .suffix(".png")
        .tempfile()
        .map_err(|e| ExternalFailure::Unavailable(format!("cannot create temp file: {e}")))?;
    std::io::Write::write_all(&mut file, png)
        .map_err(|e| ExternalFailure::Unavailable(format!("cannot write temp file: {e}")))?;
    let path: PathBuf = file.path().to_path_buf();

    let mut child = Command::new(&parts[0])
        .args(&parts[1..])
        .arg(&path)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| ExternalFailure::Unavailable(format!("cannot start `{}`: {e}", parts[0])))?;

    let mut stdout = child.stdout.take().expect("stdout is piped");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });

    let deadline = Instant::now() + timeout;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(ExternalFailure::Unavailable(format!(
                    "timed out after {} ms",
                    timeout.as_millis()
                )));
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(2)),
            Err(e) => return Err(ExternalFailure::Unavailable(format!("wait failed: {e}"))),
        }
    };
    let out = reader.join().unwrap_or_default();
    if !status.success() {
        return Err(ExternalFailure::Malformed(format!("exited with {status}")));
    }
    Ok(out)
}

fn post_http(url: &str, png: &[u8], timeout: Duration) -> std::result::Result<String, ExternalFailure> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let response = agent
        .post(url)
        .header("Content-Type", "image/png")
        .send(png)
        .map_err(|e| ExternalFailure::Unavailable(e.to_string()))?;
    let status = response.status();
    if !status.is_success() {
        return Err(ExternalFailure::Malformed(format!("HTTP status {status}")));
    }
    response
        .into_body()
        .read_to_string()
        .map_err(|e| ExternalFailure::Malformed(format!("unreadable body: {e}")))
}

/// Parse a single closure probability, clamping out-of-range values with a warning.
pub fn parse_probability(text: &str) -> std::result::Result<(f64, Option<String>), String> {
    let t = text.trim();
    let p: f64 = t.parse().map_err(|_| format!("expected a single decimal number, got `{t}`"))?;
    if !p.is_finite() {
        return Err(format!("non-finite probability `{t}`"));
    }
    if (0.0..=1.0).contains(&p) {
        Ok((p, None))
    } else {
        let c = p.clamp(0.0, 1.0);
        Ok((c, Some(format!("probability {p} outside [0, 1], clamped to {c}"))))
    }
}

/// Client for an out-of-process eye-state classifier.
///
/// The eye crop is written as PNG; a command gets its path as the last argument
/// and prints `P` on stdout, an HTTP endpoint receives the bytes by POST and
/// answers with `P` as text. Timeouts and unreachable services fall back to the
/// geometric probe with a warning; malformed answers are errors.
#[derive(Debug, Clone)]
pub struct ExternalProbe {
    pub target: ExternalTarget,
    pub timeout: Duration,
    pub fallback: EarProbe,
}

impl ExternalProbe {
    pub fn new(target: ExternalTarget, timeout: Duration, fallback: EarProbe) -> Self {
        Self {
            target,
            timeout,
            fallback,
        }
    }
}

impl EyeStateProbe for ExternalProbe {
    fn name(&self) -> String {
        self.target.describe()
    }

    fn probe(&mut self, input: &ProbeInput) -> Result<ProbeOutcome> {
        let fallback = |reason: String| {
            let msg = format!("probe `{}` unavailable ({reason}); using EAR fallback", self.name());
            warn!("{msg}");
            let mut out = self.fallback.probability(&input.landmarks);
            out.warnings.insert(0, msg);
            out
        };
        let Some(crop) = &input.crop else {
            return Ok(fallback("no image crop available".into()));
        };
        let png = crop.encode_png()?;
        match call_external(&self.target, &png, self.timeout) {
            Ok(text) => {
                let (p, warning) = parse_probability(&text).map_err(|detail| Error::Probe {
                    probe: self.name(),
                    detail,
                })?;
                let warnings: Vec<String> = warning.into_iter().collect();
                for w in &warnings {
                    warn!("probe `{}`: {w}", self.name());
                }
                Ok(ProbeOutcome {
                    probability: p,
                    source: self.name(),
                    warnings,
                })
            }
            Err(ExternalFailure::Unavailable(reason)) => Ok(fallback(reason)),
            Err(ExternalFailure::Malformed(detail)) => Err(Error::Probe {
                probe: self.name(),
                detail,
            }),
        }
    }
}

/// Probe selection as written in configs and on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProbeSpec {
    /// Geometric eye-aspect-ratio probe.
    Ear,
    /// Ground-truth `eye_state` from the landmark file (0 or 1).
    Label,
    External(ExternalTarget),
}

impl ProbeSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "ear" => Ok(ProbeSpec::Ear),
            "label" => Ok(ProbeSpec::Label),
            other => Ok(ProbeSpec::External(ExternalTarget::parse(other)?)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ProbeSpec::Ear => "ear".into(),
            ProbeSpec::Label => "label".into(),
            ProbeSpec::External(t) => t.describe(),
        }
    }
}

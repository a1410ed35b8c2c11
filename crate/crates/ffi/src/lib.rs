//! C ABI over `facefit`.
//!
//! Every fallible function returns an [`FfStatus`]. On failure a message is available from
//! [`ff_last_error`] on the same thread. Handles are opaque and must be released with the
//! matching `*_free` function. Landmark arrays are 68 `(x, y)` pairs laid out as 136 doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use facefit::assets_io::{generate_synthetic_basis, load_fmb, to_json_string};
use facefit::config::RunConfig;
use facefit::elam::{adjust_landmarks, EarProbe, EyeState, EyelidPairing, PairingMode};
use facefit::fitter::{run_pipeline, FitInputs, FitReport};
use facefit::landmarks::{LandmarkSet, Vec2, LANDMARK_COUNT};
use facefit::losses::{ldl, PairSet};
use facefit::morphable_model::{CoefficientDims, MorphableBasis};
use facefit::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    /// Divergence, a non-finite loss, or a face behind the camera.
    Diverged = 5,
    Internal = 6,
}

/// A loaded morphable model.
pub struct FfModel(MorphableBasis);

/// Result of a fit.
pub struct FfReport(FitReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> FfStatus {
    match e {
        Error::Diverged { .. } | Error::NonFinite { .. } | Error::FaceBehindCamera => FfStatus::Diverged,
        Error::Io { .. } | Error::Probe { .. } | Error::Embedding { .. } => FfStatus::Io,
        Error::Parse { .. } | Error::Format { .. } | Error::Image(_) | Error::Json(_) => FfStatus::Format,
        Error::Config(_) | Error::InvalidInput(_) | Error::DimensionMismatch { .. } => FfStatus::InvalidArgument,
    }
}

struct Fail(FfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FfStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(FfStatus::InvalidArgument, msg.into())
}

/// Runs `f`, records any error or panic, and converts to a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            FfStatus::Internal
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn read_points(p: *const f64, what: &str) -> Result<Vec<Vec2>, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = std::slice::from_raw_parts(p, 2 * LANDMARK_COUNT);
    Ok(s.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect())
}

unsafe fn write_out<T>(out: *mut T, value: T) {
    if !out.is_null() {
        *out = value;
    }
}

/// Load a model from an `.fmb` file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_model_load(path: *const c_char, out: *mut *mut FfModel) -> FfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = read_str(path, "path")?;
        let basis = load_fmb(Path::new(path))?;
        *out = Box::into_raw(Box::new(FfModel(basis)));
        Ok(())
    })
}

/// Generate the deterministic synthetic model.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_model_synthetic(
    seed: u64,
    vertices: usize,
    shape_dim: usize,
    expression_dim: usize,
    texture_dim: usize,
    out: *mut *mut FfModel,
) -> FfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let dims = CoefficientDims::new(shape_dim, expression_dim, texture_dim);
        let basis = generate_synthetic_basis(seed, vertices, dims)?;
        *out = Box::into_raw(Box::new(FfModel(basis)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `ff_model_load` or `ff_model_synthetic`, or be null.
#[no_mangle]
pub unsafe extern "C" fn ff_model_free(model: *mut FfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vertex count and coefficient dimensions. Any output pointer may be null.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_model_dims(
    model: *const FfModel,
    vertices: *mut usize,
    shape_dim: *mut usize,
    expression_dim: *mut usize,
    texture_dim: *mut usize,
) -> FfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let d = m.0.dims();
        write_out(vertices, m.0.vertex_count());
        write_out(shape_dim, d.shape);
        write_out(expression_dim, d.expression);
        write_out(texture_dim, d.texture);
        Ok(())
    })
}

/// Move upper-lid landmarks towards their lower partners by the closure probabilities.
/// `input` and `output` hold 136 doubles and may alias.
///
/// # Safety
/// Both arrays must hold 136 doubles.
#[no_mangle]
pub unsafe extern "C" fn ff_landmarks_adjust(input: *const f64, p_right: f64, p_left: f64, output: *mut f64) -> FfStatus {
    guard(|| {
        let points = read_points(input, "input")?;
        if output.is_null() {
            return Err(null("output"));
        }
        if !(0.0..=1.0).contains(&p_right) || !(0.0..=1.0).contains(&p_left) {
            return Err(invalid(format!("probabilities must lie in [0, 1], got {p_right} and {p_left}")));
        }
        let lm = LandmarkSet::new(points)?;
        let adjusted = adjust_landmarks(&lm, &EyelidPairing::from_mode(PairingMode::default()), p_right, p_left);
        let out = std::slice::from_raw_parts_mut(output, 2 * LANDMARK_COUNT);
        for (k, p) in adjusted.points.iter().enumerate() {
            out[2 * k] = p.x;
            out[2 * k + 1] = p.y;
        }
        Ok(())
    })
}

/// Closure probability of one eye from its six landmarks (12 doubles) by eye aspect ratio.
///
/// # Safety
/// `eye` must hold 12 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_ear_probe(eye: *const f64, out: *mut f64) -> FfStatus {
    guard(|| {
        if eye.is_null() {
            return Err(null("eye"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let s = std::slice::from_raw_parts(eye, 12);
        let pts: [Vec2; 6] = std::array::from_fn(|k| Vec2::new(s[2 * k], s[2 * k + 1]));
        *out = EarProbe::default().probability(&pts).probability;
        Ok(())
    })
}

/// Landmark distance loss between predicted and observed landmarks (136 doubles each).
///
/// # Safety
/// Both arrays must hold 136 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_ldl(
    predicted: *const f64,
    observed: *const f64,
    eyes: bool,
    mouth: bool,
    out: *mut f64,
) -> FfStatus {
    guard(|| {
        let pred = read_points(predicted, "predicted")?;
        let obs = LandmarkSet::new(read_points(observed, "observed")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let pairs = PairSet::standard(&EyelidPairing::from_mode(PairingMode::default()), eyes, mouth);
        *out = ldl(&pred, &obs, &pairs).loss;
        Ok(())
    })
}

/// Fit `model` to 68 landmarks in a `width` x `height` image.
///
/// `config` holds `key = value` lines as accepted by the command line tool, or is null for
/// defaults. `eye_state` is the known state for the label probe: -1 unknown, 0 open, 1 closed.
/// On `FF_STATUS_DIVERGED` from an optimizer blow-up, `*out` still receives the partial report.
///
/// # Safety
/// `model` must be live, `landmarks` must hold 136 doubles, `config` must be null or
/// NUL-terminated, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_fit_landmarks(
    model: *const FfModel,
    landmarks: *const f64,
    width: u32,
    height: u32,
    config: *const c_char,
    eye_state: i32,
    out: *mut *mut FfReport,
) -> FfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let lm = LandmarkSet::new(read_points(landmarks, "landmarks")?)?;
        let cfg = if config.is_null() {
            RunConfig::default()
        } else {
            RunConfig::parse(read_str(config, "config")?, "<config>")?
        };
        let label = match eye_state {
            -1 => None,
            0 => Some(EyeState::Open),
            1 => Some(EyeState::Closed),
            v => return Err(invalid(format!("eye_state must be -1, 0 or 1, got {v}"))),
        };
        let mut probe = cfg.make_probe(label)?;
        match run_pipeline(FitInputs::new(&m.0, (width, height), &cfg.fit), &lm, probe.as_mut()) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(FfReport(report)));
                Ok(())
            }
            Err(Error::Diverged { iteration, loss, report }) => {
                *out = Box::into_raw(Box::new(FfReport(*report)));
                Err(Fail(
                    FfStatus::Diverged,
                    format!("optimization diverged at iteration {iteration} (total loss {loss})"),
                ))
            }
            Err(e) => Err(e.into()),
        }
    })
}

/// # Safety
/// `report` must come from `ff_fit_landmarks`, or be null.
#[no_mangle]
pub unsafe extern "C" fn ff_report_free(report: *mut FfReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Weighted total loss at the best iterate.
///
/// # Safety
/// `report` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_report_total_loss(report: *const FfReport, out: *mut f64) -> FfStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = r.0.loss.total;
        Ok(())
    })
}

/// Copy the fitted parameter vector (shape, expression, texture, lighting, rotation,
/// translation) into `buffer`. `*len` is always set to the full length; pass a null
/// `buffer` to query it. A non-null buffer shorter than that is an invalid argument.
///
/// # Safety
/// `buffer` must be null or hold `capacity` doubles; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_report_params(
    report: *const FfReport,
    buffer: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> FfStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if len.is_null() {
            return Err(null("len"));
        }
        let v = r.0.params.to_vector();
        *len = v.len();
        if buffer.is_null() {
            return Ok(());
        }
        if capacity < v.len() {
            return Err(invalid(format!("buffer holds {capacity} values, {} needed", v.len())));
        }
        std::slice::from_raw_parts_mut(buffer, v.len()).copy_from_slice(&v);
        Ok(())
    })
}

/// The report as JSON. Release the string with `ff_string_free`.
///
/// # Safety
/// `report` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_report_to_json(report: *const FfReport, out: *mut *mut c_char) -> FfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let json = CString::new(to_json_string(&r.0)).map_err(|_| Fail(FfStatus::Internal, "NUL in JSON".into()))?;
        *out = json.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn ff_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn ff_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

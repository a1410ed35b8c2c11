//! Landmark JSON: `{"points": [[x, y] x 68], "weights": [w x 68]?, "eye_state": "open" | "closed" | null, "valid": [bool x 68]?}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::elam::EyeState;
use crate::error::{Error, Result};
use crate::landmarks::{default_weights, LandmarkSet, Vec2, LANDMARK_COUNT};

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFile {
    pub landmarks: LandmarkSet,
    /// Ground-truth eye state, when the file carries a label.
    pub eye_state: Option<EyeState>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    points: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default)]
    eye_state: Option<EyeState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    valid: Option<Vec<bool>>,
}

pub fn parse_landmarks(text: &str) -> Result<LandmarkFile> {
    let raw: Raw = serde_json::from_str(text)?;
    if raw.points.len() != LANDMARK_COUNT {
        return Err(Error::format(
            "landmark",
            format!("expected {LANDMARK_COUNT} points, got {}", raw.points.len()),
        ));
    }
    let points: Vec<Vec2> = raw.points.iter().map(|p| Vec2::new(p[0], p[1])).collect();
    let weights = raw.weights.unwrap_or_else(default_weights);
    if weights.len() != LANDMARK_COUNT {
        return Err(Error::format(
            "landmark",
            format!("expected {LANDMARK_COUNT} weights, got {}", weights.len()),
        ));
    }
    let mut landmarks =
        LandmarkSet::with_weights(points, weights).map_err(|e| Error::format("landmark", e.to_string()))?;
    if let Some(valid) = raw.valid {
        if valid.len() != LANDMARK_COUNT {
            return Err(Error::format(
                "landmark",
                format!("expected {LANDMARK_COUNT} validity flags, got {}", valid.len()),
            ));
        }
        landmarks.valid = valid;
    }
    Ok(LandmarkFile {
        landmarks,
        eye_state: raw.eye_state,
    })
}

pub fn landmarks_to_json(file: &LandmarkFile) -> String {
    let lm = &file.landmarks;
    let raw = Raw {
        points: lm.points.iter().map(|p| [p.x, p.y]).collect(),
        weights: Some(lm.weights.clone()),
        eye_state: file.eye_state,
        valid: if lm.valid.iter().all(|&v| v) {
            None
        } else {
            Some(lm.valid.clone())
        },
    };
    let mut s = serde_json::to_string_pretty(&raw).expect("landmark JSON serialization");
    s.push('\n');
    s
}

pub fn load_landmarks(path: &Path) -> Result<LandmarkFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_landmarks(&text).map_err(|e| match e {
        Error::Json(j) => Error::Parse {
            path: path.display().to_string(),
            line: j.line(),
            detail: j.to_string(),
        },
        other => other,
    })
}

pub fn save_landmarks(file: &LandmarkFile, path: &Path) -> Result<()> {
    std::fs::write(path, landmarks_to_json(file)).map_err(|e| Error::io(path, e))
}

//! File formats, the synthetic basis generator and ground-truth fixtures.

pub mod fixtures;
pub mod fmb;
pub mod landmarks_json;
pub mod obj;
pub mod synthetic;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use fixtures::{generate_fixture, generate_fixtures, read_labels, write_fixture_set, LabelRow, Fixture, FixtureKind, FixtureOptions};
pub use fmb::{decode_fmb, encode_fmb, load_fmb, save_fmb};
pub use landmarks_json::{load_landmarks, parse_landmarks, save_landmarks, LandmarkFile};
pub use obj::{export_obj, load_obj, parse_obj, save_obj};
pub use synthetic::generate_synthetic_basis;

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory JSON serialization");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        detail: e.to_string(),
    })
}

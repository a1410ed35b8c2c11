//! Landmark-driven 3D morphable face fitting with eyelid-aware landmark adjustment.

pub mod assets_io;
pub mod cli;
pub mod config;
pub mod elam;
pub mod error;
pub mod evaluation;
pub mod fitter;
pub mod geometry;
pub mod image_formation;
pub mod landmarks;
pub mod losses;
pub mod morphable_model;

pub use error::{Error, Result};

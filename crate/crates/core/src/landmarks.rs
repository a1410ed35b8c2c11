//! 68-point iBUG landmark sets.
//!
//! Indices in this crate are 0-based in code; the iBUG numbering used in docs and
//! config files is 1-based (`ibug(37)` is the right-eye outer corner). Image
//! coordinates are pixels with y pointing down.

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

pub const LANDMARK_COUNT: usize = 68;

/// Weight for eye and mouth landmarks in the absolute landmark loss.
pub const EYE_MOUTH_WEIGHT: f64 = 1.5;
pub const DEFAULT_WEIGHT: f64 = 1.0;

/// 0-based index of a 1-based iBUG landmark number.
pub const fn ibug(n: usize) -> usize {
    n - 1
}

/// Right eye (image left), iBUG 37-42, in iBUG order.
pub const RIGHT_EYE: [usize; 6] = [36, 37, 38, 39, 40, 41];
/// Left eye (image right), iBUG 43-48.
pub const LEFT_EYE: [usize; 6] = [42, 43, 44, 45, 46, 47];

/// Mouth corners, iBUG 49 and 55.
pub const MOUTH_CORNERS: (usize, usize) = (48, 54);

/// Which eye a quantity refers to. "Right" is the subject's right eye (iBUG 37-42).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eye {
    Right,
    Left,
}

impl Eye {
    pub const BOTH: [Eye; 2] = [Eye::Right, Eye::Left];

    pub fn indices(self) -> [usize; 6] {
        match self {
            Eye::Right => RIGHT_EYE,
            Eye::Left => LEFT_EYE,
        }
    }

    /// Eye corners (iBUG p1 and p4 of the eye).
    pub fn corners(self) -> (usize, usize) {
        let i = self.indices();
        (i[0], i[3])
    }
}

/// Default per-point weight: 1.5 on eyes (37-48) and mouth (49-68), 1.0 elsewhere.
pub fn default_weight(index: usize) -> f64 {
    if (ibug(37)..LANDMARK_COUNT).contains(&index) {
        EYE_MOUTH_WEIGHT
    } else {
        DEFAULT_WEIGHT
    }
}

pub fn default_weights() -> Vec<f64> {
    (0..LANDMARK_COUNT).map(default_weight).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub valid: Vec<bool>,
}

impl LandmarkSet {
    /// 68 points with default weights, all valid.
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        Self::with_weights(points, default_weights())
    }

    pub fn with_weights(points: Vec<Vec2>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::DimensionMismatch {
                what: "landmark points",
                expected: LANDMARK_COUNT,
                actual: points.len(),
            });
        }
        if weights.len() != LANDMARK_COUNT {
            return Err(Error::DimensionMismatch {
                what: "landmark weights",
                expected: LANDMARK_COUNT,
                actual: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidInput(format!("landmark weight {w} is not a finite non-negative number")));
        }
        Ok(Self {
            points,
            weights,
            valid: vec![true; LANDMARK_COUNT],
        })
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v) && self.points.iter().all(|p| p.x.is_finite() && p.y.is_finite())
    }

    pub fn eye(&self, eye: Eye) -> [Vec2; 6] {
        eye.indices().map(|i| self.points[i])
    }

    /// Distance between the eye corners.
    pub fn eye_width(&self, eye: Eye) -> f64 {
        let (a, b) = eye.corners();
        (self.points[a] - self.points[b]).norm()
    }

    pub fn mouth_width(&self) -> f64 {
        let (a, b) = MOUTH_CORNERS;
        (self.points[a] - self.points[b]).norm()
    }

    /// Axis-aligned extent `(min, max)` of the given points.
    pub fn extent(&self, indices: &[usize]) -> (Vec2, Vec2) {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for &i in indices {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        (lo, hi)
    }
}

//! Closed-form pose initialization from the mean face.

use crate::error::{Error, Result};
use crate::geometry::{axis_angle, weak_perspective_alignment};
use crate::image_formation::Intrinsics;
use crate::landmarks::{LandmarkSet, Vec2};
use crate::morphable_model::{MorphableBasis, Pose, Vec3};

/// Pose aligning the mean-face landmark vertices to the observed landmarks.
///
/// A scaled-orthographic fit gives `(s, R, offset)`; depth follows from `Z = f / s`
/// and the translation from matching the centroid under perspective.
pub fn initial_pose(basis: &MorphableBasis, observed: &LandmarkSet, intrinsics: &Intrinsics) -> Result<Pose> {
    let zeros_a = vec![0.0; basis.dims().shape];
    let zeros_b = vec![0.0; basis.dims().expression];
    let mut model: Vec<Vec3> = Vec::new();
    let mut image: Vec<Vec2> = Vec::new();
    for (n, &id) in basis.landmark_vertex_ids().iter().enumerate() {
        if observed.valid[n] && observed.points[n].iter().all(|c| c.is_finite()) {
            model.push(basis.vertex_position(id as usize, &zeros_a, &zeros_b));
            image.push(observed.points[n]);
        }
    }
    let (s, r, offset) = weak_perspective_alignment(&model, &image)
        .ok_or_else(|| Error::InvalidInput("landmarks too degenerate for pose initialization".into()))?;
    let f = intrinsics.focal;
    let z = f / s;
    let mean = model.iter().sum::<Vec3>() / model.len() as f64;
    let rm = r * mean;
    // offset = s * (R m)_xy + ... was taken about the centroid; recover T so that
    // the centroid projects where the weak-perspective fit puts it.
    let centroid_img = offset + rm.xy() * s;
    let tz = z - rm.z;
    let tx = (centroid_img.x - intrinsics.principal[0]) * z / f - rm.x;
    let ty = (centroid_img.y - intrinsics.principal[1]) * z / f - rm.y;
    Ok(Pose {
        rotation: axis_angle(&r),
        translation: [tx, ty, tz],
    })
}

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{canonicalize_axis_angle, rotation_matrix};
use crate::landmarks::Vec2;
use crate::morphable_model::{Pose, Vec3};

/// Vertices with camera-space depth at or below this are clipped.
pub const NEAR_PLANE: f64 = 1e-4;

/// Focal length (px) per pixel of image width used when none is configured.
pub const DEFAULT_FOCAL_PER_WIDTH: f64 = 1015.0 / 224.0;

/// Pinhole intrinsics. Image y points down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub principal: [f64; 2],
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(focal: f64, principal: [f64; 2], width: u32, height: u32) -> Result<Self> {
        if !(focal > 0.0 && focal.is_finite()) {
            return Err(Error::InvalidInput(format!("focal length {focal} must be > 0")));
        }
        if width < 1 || height < 1 {
            return Err(Error::InvalidInput(format!("image size {width}x{height} must be at least 1x1")));
        }
        Ok(Self {
            focal,
            principal,
            width,
            height,
        })
    }

    /// Centered principal point; `focal = None` uses `DEFAULT_FOCAL_PER_WIDTH * width`.
    pub fn for_image(width: u32, height: u32, focal: Option<f64>) -> Result<Self> {
        let focal = focal.unwrap_or(DEFAULT_FOCAL_PER_WIDTH * width as f64);
        Self::new(focal, [width as f64 / 2.0, height as f64 / 2.0], width, height)
    }
}

/// Perspective camera: intrinsics plus the model-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    rotation: [f64; 3],
    rotation_matrix: Matrix3<f64>,
    pub translation: Vec3,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, pose: &Pose) -> Self {
        let rotation = canonicalize_axis_angle(pose.rotation);
        Self {
            intrinsics,
            rotation,
            rotation_matrix: rotation_matrix(&rotation),
            translation: Vec3::from(pose.translation),
        }
    }

    pub fn rotation(&self) -> [f64; 3] {
        self.rotation
    }

    pub fn rotation_matrix(&self) -> &Matrix3<f64> {
        &self.rotation_matrix
    }

    pub fn to_camera(&self, v: &Vec3) -> Vec3 {
        self.rotation_matrix * v + self.translation
    }

    /// Pixel coordinates of a camera-space point (no clipping check).
    pub fn project_camera_point(&self, c: &Vec3) -> Vec2 {
        let k = &self.intrinsics;
        Vec2::new(
            k.focal * c.x / c.z + k.principal[0],
            k.focal * c.y / c.z + k.principal[1],
        )
    }
}

/// Projected vertices. Clipped entries hold NaN coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub points: Vec<Vec2>,
    pub depth: Vec<f64>,
    pub clipped: Vec<bool>,
}

/// `x = f Xc/Zc + cx`, `y = f Yc/Zc + cy` with `[Xc, Yc, Zc] = R v + T`.
pub fn project(camera: &Camera, vertices: &[Vec3]) -> Result<Projection> {
    let mut points = Vec::with_capacity(vertices.len());
    let mut depth = Vec::with_capacity(vertices.len());
    let mut clipped = Vec::with_capacity(vertices.len());
    for v in vertices {
        if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite vertex {v:?}")));
        }
        let c = camera.to_camera(v);
        depth.push(c.z);
        if c.z <= NEAR_PLANE {
            points.push(Vec2::repeat(f64::NAN));
            clipped.push(true);
        } else {
            points.push(camera.project_camera_point(&c));
            clipped.push(false);
        }
    }
    if !clipped.is_empty() && clipped.iter().all(|&c| c) {
        return Err(Error::FaceBehindCamera);
    }
    Ok(Projection {
        points,
        depth,
        clipped,
    })
}

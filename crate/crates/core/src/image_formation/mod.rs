//! Perspective projection, SH shading and rasterization.

pub mod camera;
pub mod image;
pub mod raster;
pub mod sh;

pub use camera::{project, Camera, Intrinsics, Projection, DEFAULT_FOCAL_PER_WIDTH, NEAR_PLANE};
pub use image::ImageRgb;
pub use raster::{rasterize, RenderOutput};
pub use sh::{sh_basis, sh_shade, SH_C0};

use crate::error::Result;
use crate::morphable_model::{FaceParams, Mesh, MorphableBasis, Vec3};

/// Everything produced by rendering one parameter vector.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub mesh: Mesh,
    pub projection: Projection,
    pub output: RenderOutput,
}

/// Synthesize, shade (normals rotated into the camera frame) and rasterize.
pub fn render(basis: &MorphableBasis, params: &FaceParams, intrinsics: Intrinsics) -> Result<Rendered> {
    let mesh = Mesh::from_params(basis, params)?;
    render_mesh(mesh, basis.skin(), params, intrinsics)
}

/// Like [`render`] but for an already synthesized mesh (possibly edited).
pub fn render_mesh(mut mesh: Mesh, skin: &[bool], params: &FaceParams, intrinsics: Intrinsics) -> Result<Rendered> {
    params.check_dims(params.dims())?;
    if mesh.normals.len() != mesh.vertices.len() {
        mesh.normals = crate::morphable_model::compute_normals(&mesh)?.normals;
    }
    let camera = Camera::new(intrinsics, &params.pose);
    let projection = project(&camera, &mesh.vertices)?;
    let r = camera.rotation_matrix();
    let normals: Vec<Vec3> = mesh.normals.iter().map(|n| r * n).collect();
    let colors = sh_shade(&normals, &mesh.albedo, &params.gamma)?;
    let attention: Vec<f64> = skin.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    let output = rasterize(
        &mesh.triangles,
        &projection,
        &colors,
        &attention,
        intrinsics.width,
        intrinsics.height,
    );
    Ok(Rendered {
        mesh,
        projection,
        output,
    })
}

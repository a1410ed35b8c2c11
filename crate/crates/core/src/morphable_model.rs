//! Linear statistical face model.
//!
//! Shape is `mean_shape + B_S·alpha + B_E·beta`, albedo is `mean_texture + B_T·delta`.
//! Bases are stored row-major as flat `3V × k` arrays, rows ordered `x0 y0 z0 x1 ...`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::LANDMARK_COUNT;

pub type Vec3 = Vector3<f64>;

/// Number of spherical-harmonics coefficients per color channel (bands 0..=2).
pub const SH_PER_CHANNEL: usize = 9;
/// Total illumination coefficients (RGB).
pub const SH_COEFFS: usize = 3 * SH_PER_CHANNEL;
/// Rotation (axis-angle) plus translation.
pub const POSE_PARAMS: usize = 6;

/// Coefficient dimensions `|alpha|`, `|beta|`, `|delta|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoefficientDims {
    pub shape: usize,
    pub expression: usize,
    pub texture: usize,
}

impl Default for CoefficientDims {
    fn default() -> Self {
        Self {
            shape: 80,
            expression: 64,
            texture: 80,
        }
    }
}

impl CoefficientDims {
    pub fn new(shape: usize, expression: usize, texture: usize) -> Self {
        Self {
            shape,
            expression,
            texture,
        }
    }

    /// Length of the flattened [`FaceParams`] vector.
    pub fn parameter_count(&self) -> usize {
        self.shape + self.expression + self.texture + SH_COEFFS + POSE_PARAMS
    }
}

/// Raw pieces of a basis, validated by [`MorphableBasis::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct BasisParts {
    pub mean_shape: Vec<f64>,
    pub mean_texture: Vec<f64>,
    pub shape_basis: Vec<f64>,
    pub expression_basis: Vec<f64>,
    pub texture_basis: Vec<f64>,
    pub dims: CoefficientDims,
    pub triangles: Vec<[u32; 3]>,
    pub landmark_vertex_ids: Vec<u32>,
    pub skin: Vec<bool>,
    /// Model units per millimetre; 0 means unitless.
    pub unit_scale: f32,
}

/// Immutable morphable model. Cheap to share across threads behind an `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableBasis {
    parts: BasisParts,
    vertex_count: usize,
}

impl MorphableBasis {
    pub fn from_parts(parts: BasisParts) -> Result<Self> {
        let v3 = parts.mean_shape.len();
        if v3 == 0 || v3 % 3 != 0 {
            return Err(Error::InvalidInput(format!(
                "mean shape length {v3} is not a positive multiple of 3"
            )));
        }
        let vertex_count = v3 / 3;
        let check = |what: &'static str, len: usize, expected: usize| {
            if len == expected {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    what,
                    expected,
                    actual: len,
                })
            }
        };
        check("mean_texture", parts.mean_texture.len(), v3)?;
        check("shape_basis", parts.shape_basis.len(), v3 * parts.dims.shape)?;
        check(
            "expression_basis",
            parts.expression_basis.len(),
            v3 * parts.dims.expression,
        )?;
        check("texture_basis", parts.texture_basis.len(), v3 * parts.dims.texture)?;
        check("landmark_vertex_ids", parts.landmark_vertex_ids.len(), LANDMARK_COUNT)?;
        check("skin", parts.skin.len(), vertex_count)?;

        if let Some(t) = parts
            .triangles
            .iter()
            .find(|t| t.iter().any(|&i| i as usize >= vertex_count))
        {
            return Err(Error::InvalidInput(format!(
                "triangle {t:?} references a vertex >= {vertex_count}"
            )));
        }
        if let Some(&id) = parts
            .landmark_vertex_ids
            .iter()
            .find(|&&i| i as usize >= vertex_count)
        {
            return Err(Error::InvalidInput(format!(
                "landmark vertex id {id} >= vertex count {vertex_count}"
            )));
        }
        if let Some(t) = parts.mean_texture.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidInput(format!(
                "mean texture value {t} outside [0, 1]"
            )));
        }
        let all_finite = [
            &parts.mean_shape,
            &parts.shape_basis,
            &parts.expression_basis,
            &parts.texture_basis,
        ]
        .iter()
        .all(|a| a.iter().all(|x| x.is_finite()));
        if !all_finite {
            return Err(Error::InvalidInput("basis contains non-finite values".into()));
        }
        if !(parts.unit_scale.is_finite() && parts.unit_scale >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "unit scale {} must be finite and >= 0",
                parts.unit_scale
            )));
        }
        Ok(Self {
            parts,
            vertex_count,
        })
    }

    pub fn parts(&self) -> &BasisParts {
        &self.parts
    }

    pub fn into_parts(self) -> BasisParts {
        self.parts
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn dims(&self) -> CoefficientDims {
        self.parts.dims
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.parts.triangles
    }

    pub fn landmark_vertex_ids(&self) -> &[u32] {
        &self.parts.landmark_vertex_ids
    }

    pub fn skin(&self) -> &[bool] {
        &self.parts.skin
    }

    pub fn unit_scale(&self) -> f32 {
        self.parts.unit_scale
    }

    pub fn mean_shape(&self) -> &[f64] {
        &self.parts.mean_shape
    }

    pub fn mean_texture(&self) -> &[f64] {
        &self.parts.mean_texture
    }

    /// Row `r` of the shape basis (length `|alpha|`).
    pub fn shape_row(&self, r: usize) -> &[f64] {
        let k = self.parts.dims.shape;
        &self.parts.shape_basis[r * k..(r + 1) * k]
    }

    pub fn expression_row(&self, r: usize) -> &[f64] {
        let k = self.parts.dims.expression;
        &self.parts.expression_basis[r * k..(r + 1) * k]
    }

    pub fn texture_row(&self, r: usize) -> &[f64] {
        let k = self.parts.dims.texture;
        &self.parts.texture_basis[r * k..(r + 1) * k]
    }

    /// Column `c` of the shape basis as a `3V` vector.
    pub fn shape_column(&self, c: usize) -> Vec<f64> {
        column(&self.parts.shape_basis, self.parts.dims.shape, c)
    }

    pub fn expression_column(&self, c: usize) -> Vec<f64> {
        column(&self.parts.expression_basis, self.parts.dims.expression, c)
    }

    pub fn texture_column(&self, c: usize) -> Vec<f64> {
        column(&self.parts.texture_basis, self.parts.dims.texture, c)
    }

    /// Position of a single vertex under `alpha`, `beta`. Lengths are not checked.
    pub fn vertex_position(&self, vertex: usize, alpha: &[f64], beta: &[f64]) -> Vec3 {
        let mut out = [0.0; 3];
        for (axis, o) in out.iter_mut().enumerate() {
            let r = 3 * vertex + axis;
            *o = self.parts.mean_shape[r]
                + dot(self.shape_row(r), alpha)
                + dot(self.expression_row(r), beta);
        }
        Vec3::from(out)
    }
}

fn column(data: &[f64], k: usize, c: usize) -> Vec<f64> {
    data.chunks_exact(k).map(|row| row[c]).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rigid pose: axis-angle rotation (radians) and translation (model units).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

/// Full parameter vector `(alpha, beta, delta, gamma, pose)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    /// Channel-major SH coefficients: `gamma[c * 9 + k]`.
    pub gamma: Vec<f64>,
    pub pose: Pose,
}

impl FaceParams {
    /// All coefficients zero; DC illumination that reproduces albedo exactly.
    pub fn zeros(dims: CoefficientDims) -> Self {
        let mut gamma = vec![0.0; SH_COEFFS];
        for c in 0..3 {
            gamma[c * SH_PER_CHANNEL] = 1.0 / crate::image_formation::SH_C0;
        }
        Self {
            alpha: vec![0.0; dims.shape],
            beta: vec![0.0; dims.expression],
            delta: vec![0.0; dims.texture],
            gamma,
            pose: Pose::default(),
        }
    }

    pub fn dims(&self) -> CoefficientDims {
        CoefficientDims::new(self.alpha.len(), self.beta.len(), self.delta.len())
    }

    /// `|alpha| + |beta| + |delta| + 27 + 6`.
    pub fn dimension(&self) -> usize {
        self.dims().parameter_count()
    }

    pub fn check_dims(&self, dims: CoefficientDims) -> Result<()> {
        let pairs = [
            ("alpha", self.alpha.len(), dims.shape),
            ("beta", self.beta.len(), dims.expression),
            ("delta", self.delta.len(), dims.texture),
            ("gamma", self.gamma.len(), SH_COEFFS),
        ];
        for (what, actual, expected) in pairs {
            if actual != expected {
                return Err(Error::DimensionMismatch {
                    what,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }

    /// Flatten in the order alpha, beta, delta, gamma, rotation, translation.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dimension());
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.delta);
        v.extend_from_slice(&self.gamma);
        v.extend_from_slice(&self.pose.rotation);
        v.extend_from_slice(&self.pose.translation);
        v
    }

    pub fn from_vector(dims: CoefficientDims, v: &[f64]) -> Result<Self> {
        if v.len() != dims.parameter_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: dims.parameter_count(),
                actual: v.len(),
            });
        }
        let mut rest = v;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let alpha = take(dims.shape);
        let beta = take(dims.expression);
        let delta = take(dims.texture);
        let gamma = take(SH_COEFFS);
        let rotation = take(3);
        let translation = take(3);
        Ok(Self {
            alpha,
            beta,
            delta,
            gamma,
            pose: Pose {
                rotation: [rotation[0], rotation[1], rotation[2]],
                translation: [translation[0], translation[1], translation[2]],
            },
        })
    }
}

/// Offsets of each parameter group inside the flattened vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub dims: CoefficientDims,
}

impl ParamLayout {
    pub fn new(dims: CoefficientDims) -> Self {
        Self { dims }
    }
    pub fn alpha(&self) -> std::ops::Range<usize> {
        0..self.dims.shape
    }
    pub fn beta(&self) -> std::ops::Range<usize> {
        let s = self.dims.shape;
        s..s + self.dims.expression
    }
    pub fn delta(&self) -> std::ops::Range<usize> {
        let s = self.dims.shape + self.dims.expression;
        s..s + self.dims.texture
    }
    pub fn gamma(&self) -> std::ops::Range<usize> {
        let s = self.delta().end;
        s..s + SH_COEFFS
    }
    pub fn rotation(&self) -> std::ops::Range<usize> {
        let s = self.gamma().end;
        s..s + 3
    }
    pub fn translation(&self) -> std::ops::Range<usize> {
        let s = self.rotation().end;
        s..s + 3
    }
    pub fn len(&self) -> usize {
        self.dims.parameter_count()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Name of the parameter group containing flat index `i`.
    pub fn term_of(&self, i: usize) -> &'static str {
        [
            ("alpha", self.alpha()),
            ("beta", self.beta()),
            ("delta", self.delta()),
            ("gamma", self.gamma()),
            ("rotation", self.rotation()),
            ("translation", self.translation()),
        ]
        .into_iter()
        .find(|(_, r)| r.contains(&i))
        .map_or("parameter", |(n, _)| n)
    }
}

/// Triangle mesh in model units with per-vertex albedo.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub albedo: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Vec<Vec3>,
    /// 68 landmark vertex ids when known (needed for landmark-based alignment).
    pub landmark_ids: Option<Vec<u32>>,
}

impl Mesh {
    /// Shape and albedo from `params`, normals recomputed.
    pub fn from_params(basis: &MorphableBasis, params: &FaceParams) -> Result<Self> {
        let vertices = synthesize_shape(basis, &params.alpha, &params.beta)?;
        let albedo = synthesize_texture(basis, &params.delta)?;
        let mut mesh = Mesh {
            vertices,
            albedo,
            triangles: basis.triangles().to_vec(),
            normals: Vec::new(),
            landmark_ids: Some(basis.landmark_vertex_ids().to_vec()),
        };
        if !mesh.triangles.is_empty() {
            mesh.normals = compute_normals(&mesh)?.normals;
        }
        Ok(mesh)
    }

    pub fn landmark_positions(&self) -> Option<Vec<Vec3>> {
        self.landmark_ids
            .as_ref()
            .map(|ids| ids.iter().map(|&i| self.vertices[i as usize]).collect())
    }

    /// Axis-aligned bounding box diagonal length.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        if self.vertices.is_empty() {
            0.0
        } else {
            (hi - lo).norm()
        }
    }
}

/// `mean_shape + B_S·alpha + B_E·beta`, reshaped to `V` points.
pub fn synthesize_shape(basis: &MorphableBasis, alpha: &[f64], beta: &[f64]) -> Result<Vec<Vec3>> {
    let dims = basis.dims();
    if alpha.len() != dims.shape {
        return Err(Error::DimensionMismatch {
            what: "alpha",
            expected: dims.shape,
            actual: alpha.len(),
        });
    }
    if beta.len() != dims.expression {
        return Err(Error::DimensionMismatch {
            what: "beta",
            expected: dims.expression,
            actual: beta.len(),
        });
    }
    Ok((0..basis.vertex_count())
        .map(|v| basis.vertex_position(v, alpha, beta))
        .collect())
}

/// `mean_texture + B_T·delta`. Not clamped; clamping happens at rasterization.
pub fn synthesize_texture(basis: &MorphableBasis, delta: &[f64]) -> Result<Vec<Vec3>> {
    let dims = basis.dims();
    if delta.len() != dims.texture {
        return Err(Error::DimensionMismatch {
            what: "delta",
            expected: dims.texture,
            actual: delta.len(),
        });
    }
    let mean = basis.mean_texture();
    Ok((0..basis.vertex_count())
        .map(|v| {
            Vec3::from_fn(|axis, _| {
                let r = 3 * v + axis;
                mean[r] + dot(basis.texture_row(r), delta)
            })
        })
        .collect())
}

/// Per-vertex normals plus the vertices that had no usable incident face.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalsResult {
    pub normals: Vec<Vec3>,
    /// Vertices whose normal fell back to `+z`.
    pub diagnostics: Vec<u32>,
}

/// Area-weighted vertex normals. Zero-area faces contribute nothing; vertices left
/// without a direction get `+z` and are listed in `diagnostics`.
pub fn compute_normals(mesh: &Mesh) -> Result<NormalsResult> {
    if mesh.triangles.is_empty() {
        return Err(Error::InvalidInput("mesh has no triangles".into()));
    }
    let mut acc = vec![Vec3::zeros(); mesh.vertices.len()];
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| mesh.vertices[i as usize]);
        // |cross| is twice the triangle area
        let n = (b - a).cross(&(c - a));
        for &i in t {
            acc[i as usize] += n;
        }
    }
    let mut diagnostics = Vec::new();
    let normals = acc
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                n / len
            } else {
                diagnostics.push(i as u32);
                Vec3::z()
            }
        })
        .collect();
    Ok(NormalsResult {
        normals,
        diagnostics,
    })
}

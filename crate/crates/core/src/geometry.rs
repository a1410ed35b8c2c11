//! Rotation parameterization and closed-form alignments.

use std::f64::consts::PI;

use nalgebra::{Matrix2x3, Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::landmarks::Vec2;
use crate::morphable_model::Vec3;

fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula.
pub fn rotation_matrix(w: &[f64; 3]) -> Matrix3<f64> {
    let w = Vec3::from(*w);
    let theta = w.norm();
    if theta < 1e-12 {
        return Matrix3::identity() + skew(&w);
    }
    let k = skew(&(w / theta));
    Matrix3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos())
}

/// `dR/dw_i` for `i = 0..3`, using the closed form
/// `(w_i [w]x + [w x (I - R) e_i]x) R / |w|^2`.
pub fn rotation_jacobians(w: &[f64; 3]) -> [Matrix3<f64>; 3] {
    let wv = Vec3::from(*w);
    let theta2 = wv.norm_squared();
    if theta2 < 1e-24 {
        return [skew(&Vec3::x()), skew(&Vec3::y()), skew(&Vec3::z())];
    }
    let r = rotation_matrix(w);
    let i_minus_r = Matrix3::identity() - r;
    let wx = skew(&wv);
    std::array::from_fn(|i| {
        let e = Vec3::ith(i, 1.0);
        let v = wv.cross(&(i_minus_r * e));
        (wx * wv[i] + skew(&v)) * r / theta2
    })
}

/// Axis-angle vector of a rotation, magnitude in `[0, pi]`. Robust near `pi`.
pub fn axis_angle(r: &Matrix3<f64>) -> [f64; 3] {
    let rot = Rotation3::from_matrix(r);
    let q = UnitQuaternion::from_rotation_matrix(&rot);
    let v = q.scaled_axis();
    [v.x, v.y, v.z]
}

/// Reduce the rotation magnitude below `2 pi` along the same axis.
pub fn canonicalize_axis_angle(w: [f64; 3]) -> [f64; 3] {
    let v = Vec3::from(w);
    let theta = v.norm();
    if theta < 2.0 * PI || !theta.is_finite() {
        return w;
    }
    let reduced = theta.rem_euclid(2.0 * PI);
    let out = v * (reduced / theta);
    [out.x, out.y, out.z]
}

/// Similarity transform `x -> scale * R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity3 {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Similarity3 {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }
}

/// Least-squares similarity mapping `src` onto `dst` (Umeyama). `None` if degenerate.
pub fn umeyama(src: &[Vec3], dst: &[Vec3]) -> Option<Similarity3> {
    let n = src.len();
    if n < 3 || dst.len() != n {
        return None;
    }
    let nf = n as f64;
    let mu_s = src.iter().sum::<Vec3>() / nf;
    let mu_d = dst.iter().sum::<Vec3>() / nf;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let ds = s - mu_s;
        cov += (d - mu_d) * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov /= nf;
    var_s /= nf;
    if var_s <= 0.0 {
        return None;
    }
    let svd = cov.svd(true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let mut signs = Vector3::new(1.0, 1.0, 1.0);
    if u.determinant() * vt.determinant() < 0.0 {
        signs[2] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&signs) * vt;
    let scale = svd.singular_values.component_mul(&signs).sum() / var_s;
    let translation = mu_d - rotation * mu_s * scale;
    Some(Similarity3 {
        scale,
        rotation,
        translation,
    })
}

/// Scaled-orthographic alignment of 3D model points to 2D image points:
/// `image ≈ scale * (R model)_xy + offset`. Returns `(scale, R, offset)`.
///
/// Solves the unconstrained 2x3 affine map by least squares, then replaces it with
/// the nearest matrix with orthonormal rows (SVD) and completes `R` with the cross
/// product so that `det R = 1`.
pub fn weak_perspective_alignment(model: &[Vec3], image: &[Vec2]) -> Option<(f64, Matrix3<f64>, Vec2)> {
    let n = model.len();
    if n < 4 || image.len() != n {
        return None;
    }
    let nf = n as f64;
    let mu_m = model.iter().sum::<Vec3>() / nf;
    let mu_i = image.iter().sum::<Vec2>() / nf;
    let mut xtx = Matrix3::zeros();
    let mut ytx = Matrix2x3::zeros();
    for (m, q) in model.iter().zip(image) {
        let dm = m - mu_m;
        let dq = q - mu_i;
        xtx += dm * dm.transpose();
        ytx += dq * dm.transpose();
    }
    let affine = ytx * xtx.try_inverse()?;
    let svd = affine.svd(true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let scale = 0.5 * (svd.singular_values[0] + svd.singular_values[1]);
    if !(scale > 0.0) {
        return None;
    }
    let rows = u * vt;
    let r1 = Vec3::new(rows[(0, 0)], rows[(0, 1)], rows[(0, 2)]);
    let r2 = Vec3::new(rows[(1, 0)], rows[(1, 1)], rows[(1, 2)]);
    let r3 = r1.cross(&r2);
    let rotation = Matrix3::from_rows(&[r1.transpose(), r2.transpose(), r3.transpose()]);
    let projected = (rotation * mu_m).xy() * scale;
    Some((scale, rotation, mu_i - projected))
}

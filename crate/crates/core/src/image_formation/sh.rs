//! Second-order real spherical harmonics shading of Lambertian albedo.

use crate::error::{Error, Result};
use crate::morphable_model::{Vec3, SH_COEFFS, SH_PER_CHANNEL};

pub const SH_C0: f64 = 0.2820948;
pub const SH_C1: f64 = 0.4886025;
pub const SH_C2: f64 = 1.0925484;
pub const SH_C3: f64 = 0.3153916;
pub const SH_C4: f64 = 0.5462742;

/// The nine basis functions evaluated at unit normal `n`.
pub fn sh_basis(n: &Vec3) -> [f64; SH_PER_CHANNEL] {
    let (x, y, z) = (n.x, n.y, n.z);
    [
        SH_C0,
        SH_C1 * y,
        SH_C1 * z,
        SH_C1 * x,
        SH_C2 * x * y,
        SH_C2 * y * z,
        SH_C3 * (3.0 * z * z - 1.0),
        SH_C2 * x * z,
        SH_C4 * (x * x - y * y),
    ]
}

/// `color_c = albedo_c * sum_k gamma[c*9+k] H_k(n)`. Not clamped.
pub fn sh_shade(normals: &[Vec3], albedo: &[Vec3], gamma: &[f64]) -> Result<Vec<Vec3>> {
    if gamma.len() != SH_COEFFS {
        return Err(Error::DimensionMismatch {
            what: "gamma",
            expected: SH_COEFFS,
            actual: gamma.len(),
        });
    }
    if normals.len() != albedo.len() {
        return Err(Error::DimensionMismatch {
            what: "albedo",
            expected: normals.len(),
            actual: albedo.len(),
        });
    }
    Ok(normals
        .iter()
        .zip(albedo)
        .map(|(n, a)| {
            let h = sh_basis(n);
            Vec3::from_fn(|c, _| {
                let g = &gamma[c * SH_PER_CHANNEL..(c + 1) * SH_PER_CHANNEL];
                a[c] * g.iter().zip(&h).map(|(g, h)| g * h).sum::<f64>()
            })
        })
        .collect())
}

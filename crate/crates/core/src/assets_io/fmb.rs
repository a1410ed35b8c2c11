//! `FMB1` binary morphable-model container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "FMB1"
//! u32 V, u32 |alpha|, u32 |beta|, u32 |delta|, u32 F (triangle count)
//! f32 unit_scale            model units per mm, 0 = unitless
//! u32 x 68                  landmark vertex ids
//! u8  x V                   skin flags (0 or 1)
//! f32 x 3V                  mean shape
//! f32 x 3V                  mean texture
//! f32 x 3V*|alpha|          shape basis, row-major
//! f32 x 3V*|beta|           expression basis, row-major
//! f32 x 3V*|delta|          texture basis, row-major
//! u32 x 3F                  triangles
//! ```
//!
//! Values are stored as f32; a basis whose entries are already f32-representable
//! round-trips exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::landmarks::LANDMARK_COUNT;
use crate::morphable_model::{BasisParts, CoefficientDims, MorphableBasis};

pub const MAGIC: &[u8; 4] = b"FMB1";
/// Upper bound on any declared count, to fail fast on corrupt headers.
const MAX_COUNT: u64 = 1 << 28;

pub fn encode_fmb(basis: &MorphableBasis) -> Vec<u8> {
    let p = basis.parts();
    let v = basis.vertex_count();
    let mut out = Vec::with_capacity(
        32 + 4 * LANDMARK_COUNT + v + 4 * (p.mean_shape.len() * 2 + p.shape_basis.len() + p.expression_basis.len() + p.texture_basis.len()) + 12 * p.triangles.len(),
    );
    out.extend_from_slice(MAGIC);
    for n in [v, p.dims.shape, p.dims.expression, p.dims.texture, p.triangles.len()] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(&p.unit_scale.to_le_bytes());
    for id in &p.landmark_vertex_ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out.extend(p.skin.iter().map(|&s| s as u8));
    for arr in [
        &p.mean_shape,
        &p.mean_texture,
        &p.shape_basis,
        &p.expression_basis,
        &p.texture_basis,
    ] {
        for x in arr.iter() {
            out.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    for t in &p.triangles {
        for i in t {
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(
                "FMB",
                format!(
                    "truncated while reading {what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            )
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32_array(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format("FMB", "size overflow"))?, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

pub fn decode_fmb(bytes: &[u8]) -> Result<MorphableBasis> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format("FMB", "bad magic (expected FMB1)"));
    }
    let mut count = |what: &str| -> Result<usize> {
        let n = r.u32(what)? as u64;
        if n > MAX_COUNT {
            return Err(Error::format("FMB", format!("{what} {n} is implausibly large")));
        }
        Ok(n as usize)
    };
    let v = count("vertex count")?;
    let dims = CoefficientDims::new(count("|alpha|")?, count("|beta|")?, count("|delta|")?);
    let f = count("triangle count")?;
    if v == 0 {
        return Err(Error::format("FMB", "vertex count is 0"));
    }
    let unit_scale = f32::from_le_bytes(r.take(4, "unit scale")?.try_into().unwrap());
    if !(unit_scale.is_finite() && unit_scale >= 0.0) {
        return Err(Error::format("FMB", format!("unit scale {unit_scale} must be finite and >= 0")));
    }
    let landmark_vertex_ids: Vec<u32> = (0..LANDMARK_COUNT)
        .map(|_| r.u32("landmark ids"))
        .collect::<Result<_>>()?;
    let skin_bytes = r.take(v, "skin flags")?;
    let skin = skin_bytes
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::format("FMB", format!("skin flag byte {other} is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let v3 = 3 * v;
    let mean_shape = r.f32_array(v3, "mean shape")?;
    let mean_texture = r.f32_array(v3, "mean texture")?;
    let shape_basis = r.f32_array(v3 * dims.shape, "shape basis")?;
    let expression_basis = r.f32_array(v3 * dims.expression, "expression basis")?;
    let texture_basis = r.f32_array(v3 * dims.texture, "texture basis")?;
    let mut triangles = Vec::with_capacity(f);
    for _ in 0..f {
        triangles.push([r.u32("triangles")?, r.u32("triangles")?, r.u32("triangles")?]);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            "FMB",
            format!("{} trailing bytes after payload", bytes.len() - r.pos),
        ));
    }
    MorphableBasis::from_parts(BasisParts {
        mean_shape,
        mean_texture,
        shape_basis,
        expression_basis,
        texture_basis,
        dims,
        triangles,
        landmark_vertex_ids,
        skin,
        unit_scale,
    })
    .map_err(|e| Error::format("FMB", e.to_string()))
}

pub fn save_fmb(basis: &MorphableBasis, path: &Path) -> Result<()> {
    std::fs::write(path, encode_fmb(basis)).map_err(|e| Error::io(path, e))
}

pub fn load_fmb(path: &Path) -> Result<MorphableBasis> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fmb(&bytes)
}

//! Wavefront OBJ with per-vertex colors (`v x y z r g b`).
//!
//! Coordinates are written as f32. A `#lm` comment line carries the 68 landmark
//! vertex ids (0-based) so meshes can be aligned by landmarks after a round trip.
//! A leading `#counts V F` line, when present, must match the body; it lets a
//! truncated file be told apart from a smaller mesh.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::landmarks::LANDMARK_COUNT;
use crate::morphable_model::{compute_normals, Mesh, Vec3};

pub fn export_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "#counts {} {}", mesh.vertices.len(), mesh.triangles.len());
    if let Some(ids) = &mesh.landmark_ids {
        s.push_str("#lm");
        for id in ids {
            let _ = write!(s, " {id}");
        }
        s.push('\n');
    }
    for (i, v) in mesh.vertices.iter().enumerate() {
        let _ = write!(s, "v {} {} {}", v.x as f32, v.y as f32, v.z as f32);
        if let Some(c) = mesh.albedo.get(i) {
            let _ = write!(s, " {} {} {}", c.x as f32, c.y as f32, c.z as f32);
        }
        s.push('\n');
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

/// Parse OBJ text. `source` names the input in error messages.
pub fn parse_obj(text: &str, source: &str) -> Result<Mesh> {
    let err = |line: usize, detail: String| Error::Parse {
        path: source.to_string(),
        line,
        detail,
    };
    let mut vertices = Vec::new();
    let mut albedo = Vec::new();
    let mut faces: Vec<(usize, [i64; 3])> = Vec::new();
    let mut landmark_ids = None;
    let mut counts: Option<(usize, [usize; 2])> = None;

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix("#lm") {
            let ids = rest
                .split_whitespace()
                .map(|t| t.parse::<u32>().map_err(|_| err(line_no, format!("bad landmark id `{t}`"))))
                .collect::<Result<Vec<_>>>()?;
            if ids.len() != LANDMARK_COUNT {
                return Err(err(line_no, format!("expected {LANDMARK_COUNT} landmark ids, got {}", ids.len())));
            }
            landmark_ids = Some(ids);
            continue;
        }
        if let Some(rest) = line.strip_prefix("#counts") {
            let c = rest
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| err(line_no, format!("bad count `{t}`"))))
                .collect::<Result<Vec<_>>>()?;
            if c.len() != 2 {
                return Err(err(line_no, format!("#counts needs 2 numbers, got {}", c.len())));
            }
            counts = Some((line_no, [c[0], c[1]]));
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tok = line.split_whitespace();
        let kind = tok.next().unwrap_or_default();
        let rest: Vec<&str> = tok.collect();
        match kind {
            "v" => {
                if rest.len() != 3 && rest.len() != 6 {
                    return Err(err(line_no, format!("vertex needs 3 or 6 numbers, got {}", rest.len())));
                }
                let nums = rest
                    .iter()
                    .map(|t| match t.parse::<f32>() {
                        Ok(x) if x.is_finite() => Ok(x as f64),
                        _ => Err(err(line_no, format!("bad number `{t}`"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                vertices.push(Vec3::new(nums[0], nums[1], nums[2]));
                if nums.len() == 6 {
                    albedo.push(Vec3::new(nums[3], nums[4], nums[5]));
                }
            }
            "f" => {
                if rest.len() != 3 {
                    return Err(err(line_no, format!("only triangles are supported, got {} indices", rest.len())));
                }
                let mut idx = [0i64; 3];
                for (k, t) in rest.iter().enumerate() {
                    // `f 1/2/3` style: keep the position index
                    let head = t.split('/').next().unwrap_or_default();
                    idx[k] = head
                        .parse::<i64>()
                        .map_err(|_| err(line_no, format!("bad face index `{t}`")))?;
                    if idx[k] == 0 {
                        return Err(err(line_no, "face index 0 (OBJ indices are 1-based)".into()));
                    }
                }
                faces.push((line_no, idx));
            }
            "vn" | "vt" | "o" | "g" | "s" | "usemtl" | "mtllib" => {}
            other => return Err(err(line_no, format!("unsupported statement `{other}`"))),
        }
    }
    if let Some((line_no, [nv, nf])) = counts {
        if nv != vertices.len() || nf != faces.len() {
            return Err(err(
                line_no,
                format!(
                    "header declares {nv} vertices and {nf} faces, body has {} and {} (truncated?)",
                    vertices.len(),
                    faces.len()
                ),
            ));
        }
    }
    if !albedo.is_empty() && albedo.len() != vertices.len() {
        return Err(err(0, "either all or no vertices must carry colors".into()));
    }
    let v = vertices.len() as i64;
    let mut triangles = Vec::with_capacity(faces.len());
    for (line_no, idx) in faces {
        let mut t = [0u32; 3];
        for k in 0..3 {
            let i = if idx[k] < 0 { v + idx[k] } else { idx[k] - 1 };
            if i < 0 || i >= v {
                return Err(err(line_no, format!("face index {} out of range (1..={v})", idx[k])));
            }
            t[k] = i as u32;
        }
        triangles.push(t);
    }
    if let Some(ids) = &landmark_ids {
        if let Some(bad) = ids.iter().find(|&&i| i as i64 >= v) {
            return Err(err(0, format!("landmark id {bad} out of range")));
        }
    }
    if vertices.is_empty() {
        return Err(err(0, "no vertices".into()));
    }
    let mut mesh = Mesh {
        vertices,
        albedo,
        triangles,
        normals: Vec::new(),
        landmark_ids,
    };
    if !mesh.triangles.is_empty() {
        mesh.normals = compute_normals(&mesh)?.normals;
    }
    Ok(mesh)
}

pub fn save_obj(mesh: &Mesh, path: &Path) -> Result<()> {
    std::fs::write(path, export_obj(mesh)).map_err(|e| Error::io(path, e))
}

pub fn load_obj(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, &path.display().to_string())
}

//! Checks shared by the per-module test files and the acceptance run.
//!
//! Every check returns `Err(description)` instead of panicking so the acceptance
//! target can report PASS/FAIL per criterion.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use facefit::assets_io::{
    self, decode_fmb, encode_fmb, export_obj, generate_fixture, generate_synthetic_basis, parse_landmarks, parse_obj,
    FixtureKind, FixtureOptions, LandmarkFile,
};
use facefit::config::RunConfig;
use facefit::elam::{
    adjust_landmarks, EarProbe, EyeStateProbe, EyelidPairing, ExternalProbe, ExternalTarget, FixedProbe, PairingMode,
    ProbeInput,
};
use facefit::evaluation::{
    eye_state_of_mesh, mesh_error, nearest_distances, score_eye_states, Alignment, EyeOutcome, EyeThresholds,
    MeshEyeState,
};
use facefit::fitter::{fit, run_pipeline, FitConfig, FitInputs, Objective, Regularization};
use facefit::image_formation::{project, rasterize, sh_shade, Camera, ImageRgb, Intrinsics, Projection, RenderOutput};
use facefit::landmarks::{Eye, LandmarkSet, Vec2, LANDMARK_COUNT};
use facefit::losses::{
    landmark_loss, ldl, perceptual_loss, photo_loss, EmbeddingProvider, LossBreakdown, LossWeights, Pair, PairSet,
    PatchStats, Region,
};
use facefit::morphable_model::{
    compute_normals, synthesize_shape, synthesize_texture, BasisParts, CoefficientDims, FaceParams, Mesh,
    MorphableBasis, Pose, Vec3,
};
use facefit::elam::EyeState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn close(a: f64, b: f64, tol: f64, what: &str) -> Check {
    ensure!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
    Ok(())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn canonical_rotation() -> [f64; 3] {
    [std::f64::consts::PI, 0.0, 0.0]
}

/// Random dense basis with `v` vertices; landmark ids wrap around.
pub fn random_basis(v: usize, dims: CoefficientDims, r: &mut ChaCha8Rng) -> MorphableBasis {
    let mut u = |n: usize, lo: f64, hi: f64| (0..n).map(|_| r.random_range(lo..hi)).collect::<Vec<f64>>();
    let mean_shape = u(3 * v, -1.0, 1.0);
    let mean_texture = u(3 * v, 0.0, 1.0);
    let shape_basis = u(3 * v * dims.shape, -1.0, 1.0);
    let expression_basis = u(3 * v * dims.expression, -1.0, 1.0);
    let texture_basis = u(3 * v * dims.texture, -1.0, 1.0);
    let triangles = if v >= 3 { vec![[0, 1, 2]] } else { vec![] };
    MorphableBasis::from_parts(BasisParts {
        mean_shape,
        mean_texture,
        shape_basis,
        expression_basis,
        texture_basis,
        dims,
        triangles,
        landmark_vertex_ids: (0..LANDMARK_COUNT as u32).map(|i| i % v as u32).collect(),
        skin: vec![true; v],
        unit_scale: 0.0,
    })
    .expect("random basis is valid")
}

fn random_vec(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-2.0..2.0)).collect()
}

/// `mean + B_S alpha + B_E beta` by explicit loops over the flat row-major arrays.
pub fn naive_shape(b: &MorphableBasis, alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    let p = b.parts();
    let (ka, kb) = (p.dims.shape, p.dims.expression);
    (0..p.mean_shape.len())
        .map(|r| {
            let mut s = p.mean_shape[r];
            for j in 0..ka {
                s += p.shape_basis[r * ka + j] * alpha[j];
            }
            for j in 0..kb {
                s += p.expression_basis[r * kb + j] * beta[j];
            }
            s
        })
        .collect()
}

pub fn naive_texture(b: &MorphableBasis, delta: &[f64]) -> Vec<f64> {
    let p = b.parts();
    let kd = p.dims.texture;
    (0..p.mean_texture.len())
        .map(|r| {
            let mut s = p.mean_texture[r];
            for j in 0..kd {
                s += p.texture_basis[r * kd + j] * delta[j];
            }
            s
        })
        .collect()
}

fn flat(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- morphable model

pub fn examples_morphable_model() -> Check {
    let mut r = rng(11);
    let dims = CoefficientDims::new(3, 2, 4);
    let b = random_basis(6, dims, &mut r);
    let zero_a = vec![0.0; dims.shape];
    let zero_b = vec![0.0; dims.expression];

    let s = flat(&synthesize_shape(&b, &zero_a, &zero_b).map_err(|e| e.to_string())?);
    ensure!(s == b.mean_shape(), "zero coefficients do not give the mean shape");

    let mut e1 = zero_a.clone();
    e1[0] = 1.0;
    let s = flat(&synthesize_shape(&b, &e1, &zero_b).map_err(|e| e.to_string())?);
    let col = b.shape_column(0);
    let want: Vec<f64> = b.mean_shape().iter().zip(&col).map(|(m, c)| m + c).collect();
    ensure!(s == want, "alpha = e1 is not mean + first shape column");

    for _ in 0..20 {
        let a = random_vec(dims.shape, &mut r);
        let be = random_vec(dims.expression, &mut r);
        let s = flat(&synthesize_shape(&b, &a, &be).map_err(|e| e.to_string())?);
        let d = max_abs_diff(&s, &naive_shape(&b, &a, &be));
        ensure!(d <= 1e-12, "shape oracle mismatch {d}");
    }
    match synthesize_shape(&b, &[0.0; 2], &zero_b) {
        Err(e) => ensure!(e.to_string().contains("alpha"), "error does not name alpha: {e}"),
        Ok(_) => return Err("short alpha accepted".into()),
    }
    match synthesize_shape(&b, &zero_a, &[0.0; 5]) {
        Err(e) => ensure!(e.to_string().contains("beta"), "error does not name beta: {e}"),
        Ok(_) => return Err("long beta accepted".into()),
    }

    let zero_d = vec![0.0; dims.texture];
    let t = flat(&synthesize_texture(&b, &zero_d).map_err(|e| e.to_string())?);
    ensure!(t == b.mean_texture(), "delta = 0 is not the mean texture");
    let mut e2 = zero_d.clone();
    e2[1] = 1.0;
    let t = flat(&synthesize_texture(&b, &e2).map_err(|e| e.to_string())?);
    let col = b.texture_column(1);
    let want: Vec<f64> = b.mean_texture().iter().zip(&col).map(|(m, c)| m + c).collect();
    ensure!(t == want, "delta = e2 is not mean + second texture column");
    for _ in 0..20 {
        let d = random_vec(dims.texture, &mut r);
        let t = flat(&synthesize_texture(&b, &d).map_err(|e| e.to_string())?);
        let diff = max_abs_diff(&t, &naive_texture(&b, &d));
        ensure!(diff <= 1e-12, "texture oracle mismatch {diff}");
    }
    ensure!(synthesize_texture(&b, &[0.0; 3]).is_err(), "short delta accepted");

    // normals
    let tri = Mesh {
        vertices: vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0)],
        albedo: vec![],
        triangles: vec![[0, 1, 2]],
        normals: vec![],
        landmark_ids: None,
    };
    let n = compute_normals(&tri).map_err(|e| e.to_string())?;
    ensure!(n.normals.iter().all(|v| *v == Vec3::z()), "planar normals {:?}", n.normals);
    ensure!(n.diagnostics.is_empty(), "planar triangle flagged");

    // cube corner at the origin, outward faces -x, -y, -z, equal areas
    let corner = Mesh {
        vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
        albedo: vec![],
        triangles: vec![[0, 2, 1], [0, 3, 2], [0, 1, 3]],
        normals: vec![],
        landmark_ids: None,
    };
    let n = compute_normals(&corner).map_err(|e| e.to_string())?;
    let hand = -Vec3::new(1.0, 1.0, 1.0) / 3f64.sqrt();
    ensure!((n.normals[0] - hand).norm() < 1e-12, "corner normal {:?}", n.normals[0]);
    for v in &n.normals {
        close(v.norm(), 1.0, 1e-6, "normal length")?;
    }

    let flat_tri = Mesh {
        vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0],
        albedo: vec![],
        triangles: vec![[0, 1, 2]],
        normals: vec![],
        landmark_ids: None,
    };
    let n = compute_normals(&flat_tri).map_err(|e| e.to_string())?;
    ensure!(n.diagnostics == vec![0, 1, 2], "degenerate diagnostics {:?}", n.diagnostics);
    ensure!(n.normals.iter().all(|v| *v == Vec3::z()), "degenerate fallback is not +z");
    Ok(())
}

// ---------------------------------------------------------------- image formation

/// Rodrigues rotation as a 4x4 homogeneous matrix with translation.
fn homogeneous(w: [f64; 3], t: [f64; 3]) -> [[f64; 4]; 4] {
    let th = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    let mut m = [[0.0; 4]; 4];
    let (k, s, c) = if th > 0.0 {
        ([w[0] / th, w[1] / th, w[2] / th], th.sin(), th.cos())
    } else {
        ([0.0, 0.0, 1.0], 0.0, 1.0)
    };
    let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
    for i in 0..3 {
        for j in 0..3 {
            let mut kk = 0.0;
            for l in 0..3 {
                kk += kx[i][l] * kx[l][j];
            }
            m[i][j] = if i == j { 1.0 } else { 0.0 } + s * kx[i][j] + (1.0 - c) * kk;
        }
        m[i][3] = t[i];
    }
    m[3][3] = 1.0;
    m
}

fn homogeneous_project(f: f64, c: [f64; 2], m: &[[f64; 4]; 4], v: &Vec3) -> (f64, f64, f64) {
    let h = [v.x, v.y, v.z, 1.0];
    let mut o = [0.0; 4];
    for i in 0..4 {
        for j in 0..4 {
            o[i] += m[i][j] * h[j];
        }
    }
    (f * o[0] / o[2] + c[0], f * o[1] / o[2] + c[1], o[2])
}

const SH_CONST: [f64; 5] = [0.2820948, 0.4886025, 1.0925484, 0.3153916, 0.5462742];

fn sh_oracle(n: &Vec3, a: &Vec3, g: &[f64]) -> Vec3 {
    let (x, y, z) = (n.x, n.y, n.z);
    let h = [
        SH_CONST[0],
        SH_CONST[1] * y,
        SH_CONST[1] * z,
        SH_CONST[1] * x,
        SH_CONST[2] * x * y,
        SH_CONST[2] * y * z,
        SH_CONST[3] * (3.0 * z * z - 1.0),
        SH_CONST[2] * x * z,
        SH_CONST[4] * (x * x - y * y),
    ];
    let mut out = Vec3::zeros();
    for c in 0..3 {
        let mut s = 0.0;
        for k in 0..9 {
            s += g[c * 9 + k] * h[k];
        }
        out[c] = a[c] * s;
    }
    out
}

fn unit(r: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v.normalize();
        }
    }
}

pub fn screen_projection(points: &[(f64, f64, f64)]) -> Projection {
    Projection {
        points: points.iter().map(|&(x, y, _)| Vec2::new(x, y)).collect(),
        depth: points.iter().map(|&(_, _, z)| z).collect(),
        clipped: vec![false; points.len()],
    }
}

pub fn examples_image_formation() -> Check {
    let intr = Intrinsics::new(100.0, [50.0, 50.0], 100, 100).map_err(|e| e.to_string())?;
    let pose = Pose {
        rotation: [0.0; 3],
        translation: [0.0, 0.0, 2.0],
    };
    let cam = Camera::new(intr, &pose);
    let p = project(&cam, &[Vec3::zeros(), Vec3::x()]).map_err(|e| e.to_string())?;
    ensure!(p.points[0] == Vec2::new(50.0, 50.0) && p.depth[0] == 2.0, "on-axis point {:?}", p.points[0]);
    ensure!(p.points[1] == Vec2::new(100.0, 50.0), "x = 1 point {:?}", p.points[1]);

    let mut r = rng(12);
    for _ in 0..100 {
        let w = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let t = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(5.0..9.0)];
        let f = r.random_range(50.0..500.0);
        let c = [r.random_range(0.0..100.0), r.random_range(0.0..100.0)];
        let intr = Intrinsics::new(f, c, 100, 100).map_err(|e| e.to_string())?;
        let cam = Camera::new(intr, &Pose { rotation: w, translation: t });
        let m = homogeneous(w, t);
        let verts: Vec<Vec3> = (0..5).map(|_| Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
        let p = project(&cam, &verts).map_err(|e| e.to_string())?;
        for (i, v) in verts.iter().enumerate() {
            let (x, y, z) = homogeneous_project(f, c, &m, v);
            close(p.points[i].x, x, 1e-9, "projected x")?;
            close(p.points[i].y, y, 1e-9, "projected y")?;
            close(p.depth[i], z, 1e-9, "projected depth")?;
        }
    }
    let behind = Camera::new(intr, &Pose { rotation: [0.0; 3], translation: [0.0, 0.0, -5.0] });
    ensure!(project(&behind, &[Vec3::zeros()]).is_err(), "face behind camera accepted");

    // SH
    let mut dc = vec![0.0; 27];
    for c in 0..3 {
        dc[c * 9] = 1.0 / 0.2820948;
    }
    let normals: Vec<Vec3> = (0..20).map(|_| unit(&mut r)).collect();
    let albedo: Vec<Vec3> = (0..20).map(|_| Vec3::new(r.random(), r.random(), r.random())).collect();
    let shaded = sh_shade(&normals, &albedo, &dc).map_err(|e| e.to_string())?;
    ensure!(shaded == albedo, "DC-only lighting does not reproduce albedo exactly");
    let g: Vec<f64> = random_vec(27, &mut r);
    let black = vec![Vec3::zeros(); 20];
    let shaded = sh_shade(&normals, &black, &g).map_err(|e| e.to_string())?;
    ensure!(shaded.iter().all(|c| *c == Vec3::zeros()), "black albedo is not black");
    for _ in 0..50 {
        let g = random_vec(27, &mut r);
        let shaded = sh_shade(&normals, &albedo, &g).map_err(|e| e.to_string())?;
        for i in 0..20 {
            let o = sh_oracle(&normals[i], &albedo[i], &g);
            ensure!((shaded[i] - o).amax() <= 1e-12, "SH oracle mismatch at {i}");
        }
    }
    ensure!(sh_shade(&normals, &albedo, &g[..26]).is_err(), "26 gamma values accepted");

    // full-coverage triangle
    let color = Vec3::new(0.2, 0.4, 0.6);
    let proj = screen_projection(&[(-100.0, -100.0, 1.0), (400.0, -100.0, 1.0), (-100.0, 400.0, 1.0)]);
    let out = rasterize(&[[0, 1, 2]], &proj, &[color; 3], &[1.0; 3], 16, 16);
    ensure!(out.mask.iter().all(|&m| m), "full-coverage mask has holes");
    ensure!(out.color.pixels.iter().all(|c| (c - color).amax() < 1e-12), "full-coverage color differs");

    // two overlapping triangles
    let front = Vec3::new(1.0, 0.0, 0.0);
    let back = Vec3::new(0.0, 0.0, 1.0);
    let tri = [(2.0, 2.0), (30.0, 4.0), (6.0, 29.0)];
    let mut pts: Vec<(f64, f64, f64)> = tri.iter().map(|&(x, y)| (x, y, 5.0)).collect();
    pts.extend(tri.iter().map(|&(x, y)| (x + 1.0, y + 1.0, 2.0)));
    let proj = screen_projection(&pts);
    let cols = [back, back, back, front, front, front];
    let out = rasterize(&[[0, 1, 2], [3, 4, 5]], &proj, &cols, &[1.0; 6], 32, 32);
    let both = overlap_pixels(&proj, [0, 1, 2], [3, 4, 5], 32, 32);
    ensure!(!both.is_empty(), "triangles do not overlap");
    for pi in both {
        ensure!((out.color.pixels[pi] - front).amax() < 1e-12, "back triangle visible at pixel {pi}");
    }
    raster_invariants(&out)?;
    Ok(())
}

/// Mask, depth and triangle-id consistency of any render.
pub fn raster_invariants(out: &RenderOutput) -> Check {
    for i in 0..out.mask.len() {
        if out.mask[i] {
            ensure!(out.depth[i].is_finite(), "covered pixel {i} has infinite depth");
            ensure!(out.triangle_id[i].is_some(), "covered pixel {i} has no triangle");
        } else {
            ensure!(!out.depth[i].is_finite(), "background pixel {i} has finite depth");
            ensure!(out.color.pixels[i] == Vec3::zeros(), "background pixel {i} is not black");
            ensure!(out.attention[i] == 0.0, "attention outside the mask at {i}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- rasterizer oracle

/// Closed point-in-triangle test by same-sign cross products.
pub fn inside(a: (f64, f64), b: (f64, f64), c: (f64, f64), p: (f64, f64)) -> bool {
    let cross = |o: (f64, f64), u: (f64, f64), q: (f64, f64)| (u.0 - o.0) * (q.1 - o.1) - (u.1 - o.1) * (q.0 - o.0);
    let d0 = cross(a, b, p);
    let d1 = cross(b, c, p);
    let d2 = cross(c, a, p);
    let neg = d0 < 0.0 || d1 < 0.0 || d2 < 0.0;
    let pos = d0 > 0.0 || d1 > 0.0 || d2 > 0.0;
    !(neg && pos)
}

fn brute_coverage(proj: &Projection, t: [usize; 3], w: u32, h: u32) -> Vec<bool> {
    let q = |i: usize| (proj.points[t[i]].x, proj.points[t[i]].y);
    let (a, b, c) = (q(0), q(1), q(2));
    let area = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let mut cov = vec![false; (w * h) as usize];
    if area == 0.0 {
        return cov;
    }
    for y in 0..h {
        for x in 0..w {
            cov[(y * w + x) as usize] = inside(a, b, c, (x as f64 + 0.5, y as f64 + 0.5));
        }
    }
    cov
}

fn overlap_pixels(proj: &Projection, t0: [usize; 3], t1: [usize; 3], w: u32, h: u32) -> Vec<usize> {
    let a = brute_coverage(proj, t0, w, h);
    let b = brute_coverage(proj, t1, w, h);
    (0..a.len()).filter(|&i| a[i] && b[i]).collect()
}

fn random_triangle(r: &mut ChaCha8Rng, quantize: bool) -> [(f64, f64); 3] {
    let center = (r.random_range(-4.0..36.0), r.random_range(-4.0..36.0));
    let size = r.random_range(0.5..14.0);
    let mut pt = || {
        let mut x: f64 = center.0 + r.random_range(-size..size);
        let mut y: f64 = center.1 + r.random_range(-size..size);
        if quantize {
            x = (x * 4.0).round() / 4.0;
            y = (y * 4.0).round() / 4.0;
        }
        (x, y)
    };
    [pt(), pt(), pt()]
}

/// Coverage of `count` random triangles on 32x32 against the brute-force oracle.
/// Half of the triangles use quarter-pixel vertices so pixel centres land exactly on edges.
pub fn raster_oracle(count: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut covered_total = 0;
    for k in 0..count {
        let tri = random_triangle(&mut r, k % 2 == 1);
        let pts: Vec<(f64, f64, f64)> = tri.iter().map(|&(x, y)| (x, y, r.random_range(1.0..10.0))).collect();
        let proj = screen_projection(&pts);
        let out = rasterize(&[[0, 1, 2]], &proj, &[Vec3::repeat(0.5); 3], &[1.0; 3], 32, 32);
        let oracle = brute_coverage(&proj, [0, 1, 2], 32, 32);
        if let Some(i) = (0..oracle.len()).find(|&i| oracle[i] != out.mask[i]) {
            return Err(format!("triangle {k} {tri:?}: pixel {i} rasterizer {} oracle {}", out.mask[i], oracle[i]));
        }
        covered_total += oracle.iter().filter(|&&c| c).count();
        raster_invariants(&out)?;
    }
    ensure!(covered_total > 0, "no triangle covered any pixel");
    Ok(())
}

/// Two overlapping constant-depth triangles drawn in both orders: the nearer one
/// wins on every shared pixel.
pub fn zbuffer_oracle(count: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut done = 0;
    let mut attempts = 0;
    while done < count {
        attempts += 1;
        ensure!(attempts < 100 * count, "could not generate overlapping triangles");
        let t0 = random_triangle(&mut r, false);
        let shift = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
        let t1 = t0.map(|(x, y)| (x + shift.0 + r.random_range(-2.0..2.0), y + shift.1 + r.random_range(-2.0..2.0)));
        let (z_near, z_far) = (r.random_range(1.0..4.0), r.random_range(5.0..9.0));
        let mut pts: Vec<(f64, f64, f64)> = t0.iter().map(|&(x, y)| (x, y, z_near)).collect();
        pts.extend(t1.iter().map(|&(x, y)| (x, y, z_far)));
        let proj = screen_projection(&pts);
        let shared = overlap_pixels(&proj, [0, 1, 2], [3, 4, 5], 32, 32);
        if shared.is_empty() {
            continue;
        }
        let near_c = Vec3::new(1.0, 0.0, 0.0);
        let far_c = Vec3::new(0.0, 1.0, 0.0);
        let cols = [near_c, near_c, near_c, far_c, far_c, far_c];
        for order in [[[0, 1, 2], [3, 4, 5]], [[3, 4, 5], [0, 1, 2]]] {
            let out = rasterize(&order, &proj, &cols, &[1.0; 6], 32, 32);
            for &pi in &shared {
                ensure!(
                    (out.color.pixels[pi] - near_c).amax() < 1e-12 && (out.depth[pi] - z_near).abs() < 1e-9,
                    "case {done}: far triangle wins at pixel {pi} (order {order:?})"
                );
            }
        }
        done += 1;
    }
    Ok(())
}

// ---------------------------------------------------------------- elam

fn eye_points(cx: f64, width: f64, gap: f64) -> [Vec2; 6] {
    let h = width / 2.0;
    [
        Vec2::new(cx - h, 0.0),
        Vec2::new(cx - h / 3.0, -gap / 2.0),
        Vec2::new(cx + h / 3.0, -gap / 2.0),
        Vec2::new(cx + h, 0.0),
        Vec2::new(cx + h / 3.0, gap / 2.0),
        Vec2::new(cx - h / 3.0, gap / 2.0),
    ]
}

pub fn face_landmarks() -> LandmarkSet {
    let mut pts: Vec<Vec2> = (0..LANDMARK_COUNT).map(|i| Vec2::new(i as f64 * 1.7, 40.0 + (i % 5) as f64)).collect();
    for (eye, cx) in [(Eye::Right, 30.0), (Eye::Left, 70.0)] {
        for (k, p) in eye.indices().iter().zip(eye_points(cx, 20.0, 6.0)) {
            pts[*k] = p + Vec2::new(0.0, 30.0);
        }
    }
    LandmarkSet::new(pts).expect("68 points")
}

fn probe_input(eye: [Vec2; 6], crop: Option<ImageRgb>) -> ProbeInput {
    ProbeInput {
        eye: Eye::Right,
        landmarks: eye,
        crop,
    }
}

pub fn examples_elam() -> Check {
    let ear = EarProbe::default();
    // EAR = gap / width for this layout
    let p = ear.probability(&eye_points(0.0, 10.0, 3.0)).probability;
    close(p, 0.0, 1e-12, "EAR 0.3")?;
    let p = ear.probability(&eye_points(0.0, 10.0, 0.0)).probability;
    ensure!(p == 1.0, "collapsed lids give P = {p}");
    let p = ear.probability(&eye_points(0.0, 10.0, 1.5)).probability;
    close(p, 0.5, 1e-12, "EAR 0.15")?;
    let degenerate = ear.probability(&eye_points(0.0, 0.0, 0.0));
    ensure!(degenerate.probability == 1.0 && !degenerate.warnings.is_empty(), "degenerate eye not flagged");

    let crop = Some(ImageRgb::filled(8, 8, Vec3::repeat(0.5)));
    let eye = eye_points(0.0, 10.0, 3.0);
    let stub = |script: &str| {
        ExternalProbe::new(
            ExternalTarget::Command(vec!["sh".into(), "-c".into(), script.into()]),
            std::time::Duration::from_secs(10),
            EarProbe::default(),
        )
    };
    let out = stub("echo 0.5").probe(&probe_input(eye, crop.clone())).map_err(|e| e.to_string())?;
    ensure!(out.probability == 0.5, "echo stub gave {}", out.probability);
    let out = stub("echo 1.2").probe(&probe_input(eye, crop.clone())).map_err(|e| e.to_string())?;
    ensure!(out.probability == 1.0 && !out.warnings.is_empty(), "1.2 not clamped with a warning: {out:?}");
    let mut unreachable = ExternalProbe::new(
        ExternalTarget::Http("http://127.0.0.1:9/probe".into()),
        std::time::Duration::from_secs(2),
        EarProbe::default(),
    );
    let half_open = eye_points(0.0, 10.0, 1.5);
    let out = unreachable.probe(&probe_input(half_open, crop.clone())).map_err(|e| e.to_string())?;
    let want = ear.probability(&half_open).probability;
    ensure!(out.probability == want && !out.warnings.is_empty(), "unreachable endpoint: {out:?}");
    ensure!(stub("echo banana").probe(&probe_input(eye, crop)).is_err(), "malformed response accepted");

    // midpoint on a single pair
    let pairing = EyelidPairing::from_mode(PairingMode::Paper);
    let (i, j) = pairing.pairs(Eye::Right)[0];
    let mut lm = face_landmarks();
    lm.points[i].y = 10.0;
    lm.points[j].y = 4.0;
    let adj = adjust_landmarks(&lm, &pairing, 0.5, 0.0);
    ensure!(adj.points[i].y == 7.0, "midpoint gives {}", adj.points[i].y);
    ensure!(adj.points[i].x == lm.points[i].x, "x moved");
    ensure!(lm.points[i].y == 10.0, "input modified");

    for mode in [PairingMode::Paper, PairingMode::IbugVertical] {
        let pairing = EyelidPairing::from_mode(mode);
        let lm = face_landmarks();
        ensure!(adjust_landmarks(&lm, &pairing, 0.0, 0.0) == lm, "P = 0 changed landmarks");
        let adj = adjust_landmarks(&lm, &pairing, 1.0, 1.0);
        for (_, (u, l)) in pairing.all() {
            ensure!(adj.points[u].y == adj.points[l].y, "P = 1 leaves a gap at ({u}, {l})");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- losses

struct StubEmbedding;

impl EmbeddingProvider for StubEmbedding {
    fn name(&self) -> String {
        "stub".into()
    }
    fn dimension(&self) -> usize {
        2
    }
    /// Reads the embedding off the first pixel: `(r - g, b)`.
    fn embed(&mut self, image: &ImageRgb, _region: Option<&[bool]>) -> facefit::Result<Vec<f64>> {
        let p = image.pixels[0];
        Ok(vec![p.x - p.y, p.z])
    }
}

pub fn ldl_pairs(pairs: &[(usize, usize, Region)], weight: f64) -> PairSet {
    PairSet::new(
        pairs
            .iter()
            .map(|&(upper, lower, region)| Pair { upper, lower, region, weight })
            .collect(),
    )
    .expect("valid pairs")
}

fn photo_oracle(img: &ImageRgb, r: &RenderOutput) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for y in 0..r.height {
        for x in 0..r.width {
            let i = (y * r.width + x) as usize;
            if !r.mask[i] {
                continue;
            }
            let a = img.get(x, y);
            let b = r.color.get(x, y);
            let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt();
            num += r.attention[i] * d;
            den += r.attention[i];
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn landmark_oracle(pred: &[Vec2], obs: &LandmarkSet) -> f64 {
    let mut s = 0.0;
    for n in 0..LANDMARK_COUNT {
        s += obs.weights[n] * ((pred[n].x - obs.points[n].x).abs() + (pred[n].y - obs.points[n].y).abs());
    }
    s / 68.0
}

pub fn examples_losses() -> Check {
    let obs = face_landmarks();
    let pairs = PairSet::standard(&EyelidPairing::from_mode(PairingMode::default()), true, true);
    ensure!(ldl(&obs.points, &obs, &pairs).loss == 0.0, "LDL of identical sets");
    let mut r = rng(13);
    let noisy: Vec<Vec2> = obs.points.iter().map(|p| p + Vec2::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0))).collect();
    let off = PairSet::standard(&EyelidPairing::from_mode(PairingMode::default()), false, false);
    ensure!(ldl(&noisy, &obs, &off).loss == 0.0, "LDL with all weights 0");

    // unit eye width: corners 36 and 39 one pixel apart
    let mut o = face_landmarks();
    o.points[36] = Vec2::new(0.0, 0.0);
    o.points[39] = Vec2::new(1.0, 0.0);
    let mut p = o.points.clone();
    o.points[37].y = 0.0;
    o.points[41].y = 0.2;
    o.points[38].y = 0.0;
    o.points[40].y = 0.3;
    p[37].y = 0.0;
    p[41].y = 0.1;
    p[38].y = 0.0;
    p[40].y = 0.1;
    let two = ldl_pairs(&[(37, 41, Region::RightEye), (38, 40, Region::RightEye)], 1.0);
    close(ldl(&p, &o, &two).loss, 0.3, 1e-12, "hand-summed LDL")?;

    // photo loss
    let (w, h) = (8u32, 8u32);
    let mut render = RenderOutput::empty(w, h);
    for i in 0..(w * h) as usize {
        render.mask[i] = true;
        render.attention[i] = 1.0;
        render.color.pixels[i] = Vec3::repeat(1.0);
    }
    let same = render.color.clone();
    let v = photo_loss(&same, &render).map_err(|e| e.to_string())?;
    ensure!(v.loss == 0.0, "photo loss of identical images {}", v.loss);
    let black = ImageRgb::new(w, h);
    let v = photo_loss(&black, &render).map_err(|e| e.to_string())?;
    close(v.loss, 3f64.sqrt(), 1e-12, "black vs white photo loss")?;
    for _ in 0..20 {
        let mut rr = RenderOutput::empty(w, h);
        let mut img = ImageRgb::new(w, h);
        for i in 0..(w * h) as usize {
            rr.mask[i] = r.random_bool(0.7);
            if rr.mask[i] {
                rr.attention[i] = r.random();
                rr.color.pixels[i] = Vec3::new(r.random(), r.random(), r.random());
            }
            img.pixels[i] = Vec3::new(r.random(), r.random(), r.random());
        }
        let v = photo_loss(&img, &rr).map_err(|e| e.to_string())?;
        close(v.loss, photo_oracle(&img, &rr), 1e-10, "photo loss oracle")?;
    }
    ensure!(photo_loss(&ImageRgb::new(4, 4), &render).is_err(), "photo loss size mismatch accepted");

    // landmark loss
    ensure!(landmark_loss(&obs.points, &obs) == 0.0, "landmark loss of identical sets");
    let mut q = obs.points.clone();
    q[40].x += 1.0;
    close(landmark_loss(&q, &obs), 1.5 / 68.0, 1e-15, "single eye point")?;
    for _ in 0..20 {
        let pred: Vec<Vec2> = obs.points.iter().map(|p| p + Vec2::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0))).collect();
        close(landmark_loss(&pred, &obs), landmark_oracle(&pred, &obs), 1e-10, "landmark loop oracle")?;
    }

    // perceptual
    let img = ImageRgb::filled(8, 8, Vec3::new(0.3, 0.5, 0.7));
    let mut ps = PatchStats;
    let d = perceptual_loss(&img, &img, None, &mut ps).map_err(|e| e.to_string())?;
    close(d, 0.0, 1e-12, "perceptual of identical images")?;
    let e10 = ImageRgb::filled(2, 2, Vec3::new(1.0, 0.0, 0.0));
    let e01 = ImageRgb::filled(2, 2, Vec3::new(0.0, 0.0, 1.0));
    let m10 = ImageRgb::filled(2, 2, Vec3::new(0.0, 1.0, 0.0));
    let d = perceptual_loss(&e10, &e01, None, &mut StubEmbedding).map_err(|e| e.to_string())?;
    close(d, 1.0, 1e-15, "orthogonal embeddings")?;
    let d = perceptual_loss(&e10, &m10, None, &mut StubEmbedding).map_err(|e| e.to_string())?;
    close(d, 2.0, 1e-15, "antipodal embeddings")?;
    match perceptual_loss(&e10, &ImageRgb::new(2, 2), None, &mut StubEmbedding) {
        Err(e) => ensure!(e.to_string().contains("stub"), "zero-norm error does not name the provider: {e}"),
        Ok(_) => return Err("zero-norm embedding accepted".into()),
    }

    // total
    let wts = LossWeights::default();
    ensure!(wts.w_dyn == 0.5 && wts.w_img == 1.8 && wts.w_per == 0.17, "default weights {wts:?}");
    let t = |l, ph, lm, pe| LossBreakdown::combine(l, ph, lm, pe, wts).map(|b| b.total).map_err(|e| e.to_string());
    ensure!(t(0.0, 0.0, 0.0, 0.0)? == 0.0, "all-zero total");
    ensure!(t(1.0, 0.0, 0.0, 0.0)? == 0.5, "ldl = 1 total");
    close(t(0.0, 0.25, 0.75, 0.0)?, 1.8, 1e-15, "photo + landmark = 1 total")?;
    close(t(0.0, 0.0, 0.0, 1.0)?, 0.17, 1e-15, "perceptual = 1 total")?;
    Ok(())
}

// ---------------------------------------------------------------- evaluation

pub fn brute_nearest(q: &[Vec3], r: &[Vec3]) -> Vec<f64> {
    q.iter()
        .map(|p| {
            let mut best = f64::INFINITY;
            for s in r {
                let d = (p - s).norm();
                if d < best {
                    best = d;
                }
            }
            best
        })
        .collect()
}

fn point_mesh(points: Vec<Vec3>) -> Mesh {
    Mesh {
        vertices: points,
        albedo: vec![],
        triangles: vec![],
        normals: vec![],
        landmark_ids: None,
    }
}

pub fn small_basis() -> MorphableBasis {
    generate_synthetic_basis(0, 500, CoefficientDims::new(8, 6, 4)).expect("synthetic basis")
}

pub fn examples_evaluation() -> Check {
    let b = small_basis();
    let mean = Mesh::from_params(&b, &FaceParams::zeros(b.dims())).map_err(|e| e.to_string())?;
    let s = mesh_error(&mean, &mean, Alignment::None).map_err(|e| e.to_string())?;
    ensure!(s.distances.iter().all(|&d| d == 0.0), "identical meshes give nonzero distances");
    ensure!(s.median == 0.0 && s.mean == 0.0 && s.std == 0.0, "identical-mesh stats {:?}", (s.median, s.mean, s.std));

    let mut moved = mean.clone();
    for v in moved.vertices.iter_mut() {
        *v += Vec3::x();
    }
    let s = mesh_error(&mean, &moved, Alignment::None).map_err(|e| e.to_string())?;
    let oracle = brute_nearest(&mean.vertices, &moved.vertices);
    ensure!(s.distances == oracle, "translated pair differs from the double loop");
    ensure!(s.distances.iter().all(|&d| d <= 1.0), "a distance exceeds the translation");
    let s = mesh_error(&mean, &moved, Alignment::Rigid).map_err(|e| e.to_string())?;
    ensure!(s.max() < 1e-9, "rigid alignment leaves {}", s.max());
    let mut bare = moved.clone();
    bare.landmark_ids = None;
    ensure!(mesh_error(&mean, &bare, Alignment::Rigid).is_err(), "rigid alignment without landmark ids accepted");

    let t = EyeThresholds::default();
    let st = eye_state_of_mesh(&mean, &t).map_err(|e| e.to_string())?;
    close(st.right_ratio, 0.25, 1e-6, "mean-face right ratio")?;
    ensure!(st.face_state() == Some(EyeState::Open), "mean face is not open: {st:?}");

    let mut shut = mean.clone();
    let ids = shut.landmark_ids.clone().unwrap();
    for (_, (u, l)) in EyelidPairing::from_mode(PairingMode::IbugVertical).all() {
        shut.vertices[ids[u] as usize] = shut.vertices[ids[l] as usize];
    }
    let st = eye_state_of_mesh(&shut, &t).map_err(|e| e.to_string())?;
    ensure!(st.right_ratio == 0.0 && st.left_ratio == 0.0, "coincident lids ratio {st:?}");
    ensure!(st.face_state() == Some(EyeState::Closed), "coincident lids not closed");

    let semi = MeshEyeState::classify(0.12, &t);
    ensure!(semi == MeshEyeState::Semi, "0.12 classified {semi:?}");
    for truth in [EyeState::Open, EyeState::Closed] {
        let sc = score_eye_states(&[EyeOutcome { predicted: semi.binary(), truth }]).map_err(|e| e.to_string())?;
        ensure!(sc.accuracy == 0.0, "semi counted correct against {truth:?}");
    }

    let o = |p: EyeState, t: EyeState| EyeOutcome { predicted: Some(p), truth: t };
    use EyeState::{Closed, Open};
    let sc = score_eye_states(&[o(Open, Open), o(Closed, Closed)]).map_err(|e| e.to_string())?;
    ensure!(sc.accuracy == 1.0 && sc.f1 == 1.0, "all-correct scores {sc:?}");
    let sc = score_eye_states(&[o(Open, Open), o(Open, Closed), o(Closed, Open), o(Closed, Closed)]).map_err(|e| e.to_string())?;
    ensure!(sc.accuracy == 0.5 && sc.f1 == 0.5, "balanced confusion {sc:?}");
    let sc = score_eye_states(&[o(Closed, Closed), o(Closed, Closed), o(Open, Closed)]).map_err(|e| e.to_string())?;
    ensure!(sc.f1 == 0.0, "no positives F1 {}", sc.f1);
    close(sc.accuracy, 2.0 / 3.0, 1e-15, "no positives accuracy")?;
    ensure!(score_eye_states(&[]).is_err(), "empty outcomes accepted");
    Ok(())
}

/// Grid nearest neighbour against the double loop on random clouds, bit for bit.
pub fn metric_oracle(pairs: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for k in 0..pairs {
        let nq = r.random_range(1..=200);
        let nr = r.random_range(1..=200);
        let spread = [0.01, 1.0, 100.0][k % 3];
        let mut cloud = |n: usize| -> Vec<Vec3> {
            (0..n)
                .map(|_| {
                    let v = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)) * spread;
                    // some clouds are flat or clustered
                    match k % 4 {
                        0 => Vec3::new(v.x, v.y, 0.0),
                        1 => v.map(|c| (c * 4.0).round() / 4.0),
                        _ => v,
                    }
                })
                .collect()
        };
        let q = cloud(nq);
        let g = cloud(nr);
        let fast = nearest_distances(&q, &g);
        let slow = brute_nearest(&q, &g);
        if let Some(i) = (0..nq).find(|&i| fast[i].to_bits() != slow[i].to_bits()) {
            return Err(format!("pair {k}: vertex {i} grid {} brute {}", fast[i], slow[i]));
        }
        let s = mesh_error(&point_mesh(q.clone()), &point_mesh(g), Alignment::None).map_err(|e| e.to_string())?;
        ensure!(s.distances == slow, "pair {k}: mesh_error distances differ");
        ensure!(s.curve.last().map(|c| c.1) == Some(1.0), "pair {k}: curve does not end at 1");
    }
    Ok(())
}

/// Identical-mesh stats and F1 conventions.
pub fn metric_conventions() -> Check {
    let mut r = rng(99);
    let pts: Vec<Vec3> = (0..150).map(|_| Vec3::new(r.random(), r.random(), r.random())).collect();
    let m = point_mesh(pts);
    let s = mesh_error(&m, &m, Alignment::None).map_err(|e| e.to_string())?;
    ensure!(s.median == 0.0 && s.mean == 0.0 && s.std == 0.0, "identical mesh stats");
    ensure!(s.curve.iter().all(|c| c.1 == 1.0), "identical mesh curve");
    use EyeState::{Closed, Open};
    let o = |p: Option<EyeState>, t: EyeState| EyeOutcome { predicted: p, truth: t };
    let sc = score_eye_states(&[o(Some(Closed), Closed)]).map_err(|e| e.to_string())?;
    ensure!(sc.f1 == 0.0 && sc.precision == 0.0 && sc.recall == 0.0 && sc.accuracy == 1.0, "all-negative {sc:?}");
    let sc = score_eye_states(&[o(Some(Closed), Open), o(None, Open)]).map_err(|e| e.to_string())?;
    ensure!(sc.f1 == 0.0 && sc.accuracy == 0.0 && sc.fn_ == 2, "no predicted positives {sc:?}");
    let sc = score_eye_states(&[o(None, Closed)]).map_err(|e| e.to_string())?;
    ensure!(sc.fp == 1 && sc.f1 == 0.0, "semi against closed {sc:?}");
    Ok(())
}

// ---------------------------------------------------------------- assets

pub fn examples_assets_io() -> Check {
    let b = small_basis();
    let bytes = encode_fmb(&b);
    let back = decode_fmb(&bytes).map_err(|e| e.to_string())?;
    ensure!(encode_fmb(&back) == bytes, "FMB round trip is not byte-identical");
    ensure!(back == b, "decoded basis differs");
    let again = generate_synthetic_basis(0, 500, CoefficientDims::new(8, 6, 4)).map_err(|e| e.to_string())?;
    ensure!(encode_fmb(&again) == bytes, "generator is not deterministic");
    ensure!(generate_synthetic_basis(0, 67, CoefficientDims::new(8, 6, 4)).is_err(), "67 vertices accepted");

    let t = EyeThresholds::default();
    let mut p = FaceParams::zeros(b.dims());
    let m = Mesh::from_params(&b, &p).map_err(|e| e.to_string())?;
    ensure!(eye_state_of_mesh(&m, &t).map_err(|e| e.to_string())?.face_state() == Some(EyeState::Open), "neutral face not open");
    p.beta[assets_io::synthetic::RIGHT_EYE_CLOSE] = 1.0;
    p.beta[assets_io::synthetic::LEFT_EYE_CLOSE] = 1.0;
    let m = Mesh::from_params(&b, &p).map_err(|e| e.to_string())?;
    let st = eye_state_of_mesh(&m, &t).map_err(|e| e.to_string())?;
    ensure!(st.face_state() == Some(EyeState::Closed), "eyelid-closing directions at 1 give {st:?}");

    let one = Mesh {
        vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
        albedo: vec![Vec3::repeat(0.5); 3],
        triangles: vec![[0, 1, 2]],
        normals: vec![],
        landmark_ids: None,
    };
    let text = export_obj(&one);
    ensure!(text.lines().filter(|l| l.starts_with("v ")).count() == 3, "v line count");
    ensure!(text.lines().filter(|l| l.starts_with("f ")).count() == 1, "f line count");
    let mean = Mesh::from_params(&b, &FaceParams::zeros(b.dims())).map_err(|e| e.to_string())?;
    let back = parse_obj(&export_obj(&mean), "mean.obj").map_err(|e| e.to_string())?;
    let d = mean.vertices.iter().zip(&back.vertices).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    ensure!(d == 0.0, "mean face OBJ round trip delta {d}");
    ensure!(back.triangles == mean.triangles && back.landmark_ids == mean.landmark_ids, "OBJ topology lost");
    match parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", "zero.obj") {
        Err(e) => ensure!(e.to_string().contains(":4"), "no line number in `{e}`"),
        Ok(_) => return Err("face index 0 accepted".into()),
    }

    let pts: Vec<String> = (0..68).map(|i| format!("[{i}, {}]", i * 2)).collect();
    let lf = parse_landmarks(&format!("{{\"points\": [{}]}}", pts.join(","))).map_err(|e| e.to_string())?;
    for (i, w) in lf.landmarks.weights.iter().enumerate() {
        let want = if (36..68).contains(&i) { 1.5 } else { 1.0 };
        ensure!(*w == want, "default weight {i} = {w}");
    }
    match parse_landmarks(&format!("{{\"points\": [{}]}}", pts[..67].join(","))) {
        Err(e) => ensure!(e.to_string().contains("67"), "count missing from `{e}`"),
        Ok(_) => return Err("67 points accepted".into()),
    }
    let file = LandmarkFile {
        landmarks: face_landmarks(),
        eye_state: Some(EyeState::Closed),
    };
    let back = parse_landmarks(&assets_io::landmarks_json::landmarks_to_json(&file)).map_err(|e| e.to_string())?;
    ensure!(back == file, "landmark JSON round trip");
    Ok(())
}

// ---------------------------------------------------------------- fitter

pub fn fit_basis() -> MorphableBasis {
    generate_synthetic_basis(3, 600, CoefficientDims::new(20, 16, 10)).expect("synthetic basis")
}

/// Landmark-only objective, `w_img = 1`.
pub fn landmark_objective<'a>(b: &'a MorphableBasis, obs: &'a LandmarkSet, intr: Intrinsics, reg: Regularization) -> Objective<'a> {
    Objective::new(
        b,
        obs,
        intr,
        PairSet::standard(&EyelidPairing::from_mode(PairingMode::default()), false, false),
        LossWeights { w_dyn: 0.0, w_img: 1.0, w_per: 0.0 },
        reg,
    )
}

pub fn no_reg() -> Regularization {
    Regularization { alpha: 0.0, beta: 0.0, delta: 0.0 }
}

pub fn fast_config() -> FitConfig {
    FitConfig {
        iterations: 200,
        ..FitConfig::default()
    }
}

pub fn examples_fitter() -> Check {
    let b = fit_basis();
    let opts = FixtureOptions::default();
    let f = generate_fixture(&b, FixtureKind::Open, "gt", 5, &opts).map_err(|e| e.to_string())?;
    let obs = LandmarkSet::new(f.true_landmarks.clone()).map_err(|e| e.to_string())?;

    // stationarity at ground truth
    let obj = landmark_objective(&b, &obs, f.intrinsics, no_reg());
    let g = obj.analytic_gradient(&f.params).map_err(|e| e.to_string())?;
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    ensure!(norm < 1e-8, "gradient norm at ground truth {norm}");

    // regularizer only
    let reg = Regularization { alpha: 0.3, beta: 0.2, delta: 0.1 };
    let obj = Objective::new(
        &b,
        &obs,
        f.intrinsics,
        PairSet::standard(&EyelidPairing::from_mode(PairingMode::default()), true, true),
        LossWeights { w_dyn: 0.0, w_img: 0.0, w_per: 0.0 },
        reg,
    );
    let g = obj.analytic_gradient(&f.params).map_err(|e| e.to_string())?;
    let layout = obj.layout();
    let theta = f.params.to_vector();
    for i in 0..theta.len() {
        let w = if layout.alpha().contains(&i) {
            reg.alpha
        } else if layout.beta().contains(&i) {
            reg.beta
        } else if layout.delta().contains(&i) {
            reg.delta
        } else {
            0.0
        };
        close(g[i], 2.0 * w * theta[i], 1e-15, &format!("regularizer gradient {i}"))?;
    }

    // zero iterations
    let cfg0 = FitConfig { iterations: 0, ..fast_config() };
    ensure!(fit(FitInputs::new(&b, (128, 128), &cfg0), &obs).is_err(), "iterations = 0 accepted");

    // landmark-only round trip and determinism
    let cfg = FitConfig { elam: false, ..FitConfig::default() };
    let r1 = fit(FitInputs::new(&b, (128, 128), &cfg), &obs).map_err(|e| e.to_string())?;
    ensure!(r1.mean_reprojection_px < 0.5, "reprojection {} px", r1.mean_reprojection_px);
    let r2 = fit(FitInputs::new(&b, (128, 128), &cfg), &obs).map_err(|e| e.to_string())?;
    ensure!(
        assets_io::to_json_string(&strip_time(r1.clone())) == assets_io::to_json_string(&strip_time(r2)),
        "two identical fits differ"
    );
    ensure!(r1.trajectory.len() <= cfg.iterations, "trajectory longer than the iteration budget");

    // P = 0 pass-through
    let raw = f.observed.landmarks.clone();
    let piped = run_pipeline(FitInputs::new(&b, (128, 128), &fast_config()), &raw, &mut FixedProbe::both(0.0))
        .map_err(|e| e.to_string())?;
    let plain = fit(FitInputs::new(&b, (128, 128), &fast_config()), &raw).map_err(|e| e.to_string())?;
    let raw_xy: Vec<[f64; 2]> = raw.points.iter().map(|p| [p.x, p.y]).collect();
    ensure!(piped.adjusted_landmarks == raw_xy && piped.raw_landmarks == raw_xy, "P = 0 moved landmarks");
    ensure!(piped.params == plain.params, "P = 0 pipeline differs from a plain fit");

    // closed eye with the oracle probe
    let c = generate_fixture(&b, FixtureKind::Closed, "closed", 6, &opts).map_err(|e| e.to_string())?;
    let rep = run_pipeline(FitInputs::new(&b, (128, 128), &FitConfig::default()), &c.observed.landmarks, &mut FixedProbe::both(1.0))
        .map_err(|e| e.to_string())?;
    let mesh = Mesh::from_params(&b, &rep.params).map_err(|e| e.to_string())?;
    for eye in Eye::BOTH {
        let ratio = facefit::evaluation::gap_ratio(&mesh, eye).map_err(|e| e.to_string())?;
        ensure!(ratio < 0.05, "closed-eye fit leaves gap ratio {ratio} on {eye:?}");
    }
    ensure!(rep.eye_probabilities.iter().all(|e| e.probability == 1.0), "P values not recorded");

    // probe unavailable
    let mut probe = ExternalProbe::new(
        ExternalTarget::Http("http://127.0.0.1:9/probe".into()),
        std::time::Duration::from_secs(2),
        EarProbe::default(),
    );
    let rep = run_pipeline(FitInputs::with_image(&b, &f.image, &fast_config()), &raw, &mut probe).map_err(|e| e.to_string())?;
    ensure!(rep.warnings.iter().any(|w| w.contains("EAR fallback")), "no fallback warning: {:?}", rep.warnings);
    ensure!(rep.eye_probabilities.iter().all(|e| e.source == "ear"), "fallback source not recorded");
    Ok(())
}

pub fn strip_time(mut r: facefit::fitter::FitReport) -> facefit::fitter::FitReport {
    r.wall_ms = None;
    r
}

// ---------------------------------------------------------------- gradients

/// Which analytic term is isolated by the objective weights.
#[derive(Debug, Clone, Copy)]
pub enum Term {
    Landmark,
    Ldl,
    Regularizer,
}

/// Smallest |argument| of any L1 kink at `theta`, or `None` if a kink changes
/// side inside the stencil.
fn kink_margin(obj: &mut Objective<'_>, term: Term, theta: &[f64], h: &[f64]) -> facefit::Result<f64> {
    let args = |obj: &mut Objective<'_>, t: &[f64]| -> facefit::Result<Vec<f64>> {
        let e = obj.evaluate(t)?;
        let p = &e.projected;
        let o = obj.observed;
        Ok(match term {
            Term::Landmark => (0..LANDMARK_COUNT).flat_map(|n| [p[n].x - o.points[n].x, p[n].y - o.points[n].y]).collect(),
            Term::Ldl => obj
                .pairs
                .pairs()
                .iter()
                .filter(|k| k.weight != 0.0)
                .flat_map(|k| {
                    let s = k.region.scale(o);
                    let dp = (p[k.upper].y - p[k.lower].y) / s;
                    let dobs = (o.points[k.upper].y - o.points[k.lower].y) / s;
                    [dp, dp.abs() - dobs.abs()]
                })
                .collect(),
            Term::Regularizer => vec![],
        })
    };
    let base = args(obj, theta)?;
    let mut margin = base.iter().map(|a| a.abs()).fold(f64::INFINITY, f64::min);
    let mut t = theta.to_vec();
    for i in 0..theta.len() {
        for s in [-1.0, 1.0] {
            t[i] = theta[i] + s * h[i];
            let a = args(obj, &t)?;
            if a.iter().zip(&base).any(|(x, y)| x.signum() != y.signum()) {
                margin = 0.0;
            }
        }
        t[i] = theta[i];
    }
    Ok(margin)
}

fn perturbed_params(base: &FaceParams, r: &mut ChaCha8Rng) -> FaceParams {
    let mut p = base.clone();
    for a in p.alpha.iter_mut() {
        *a += r.random_range(-0.5..0.5);
    }
    for x in p.beta.iter_mut() {
        *x += r.random_range(-0.3..0.3);
    }
    for x in p.delta.iter_mut() {
        *x += r.random_range(-0.5..0.5);
    }
    for k in 0..3 {
        p.pose.rotation[k] += r.random_range(-0.1..0.1);
        p.pose.translation[k] += r.random_range(-5.0..5.0);
    }
    p
}

/// Analytic vs central differences of one term at `points` random parameter
/// points; points within 1e-6 of an L1 kink are skipped. Returns the worst
/// relative error.
pub fn gradient_check(term: Term, points: usize, seed: u64) -> Result<f64, String> {
    let b = fit_basis();
    let f = generate_fixture(&b, FixtureKind::Semi, "g", seed, &FixtureOptions::default()).map_err(|e| e.to_string())?;
    let obs = f.observed.landmarks.clone();
    let (weights, reg, pairs) = match term {
        Term::Landmark => (
            LossWeights { w_dyn: 0.0, w_img: 1.0, w_per: 0.0 },
            no_reg(),
            PairSet::standard(&EyelidPairing::from_mode(PairingMode::default()), false, false),
        ),
        Term::Ldl => (
            LossWeights { w_dyn: 1.0, w_img: 0.0, w_per: 0.0 },
            no_reg(),
            PairSet::standard(&EyelidPairing::from_mode(PairingMode::default()), true, true),
        ),
        Term::Regularizer => (
            LossWeights { w_dyn: 0.0, w_img: 0.0, w_per: 0.0 },
            Regularization { alpha: 0.3, beta: 0.2, delta: 0.1 },
            PairSet::standard(&EyelidPairing::from_mode(PairingMode::default()), false, false),
        ),
    };
    let mut obj = Objective::new(&b, &obs, f.intrinsics, pairs, weights, reg);
    let mut r = rng(seed ^ 0x5eed);
    let mut worst = 0.0f64;
    let (mut valid, mut tried) = (0, 0);
    while valid < points {
        tried += 1;
        ensure!(tried < 50 * points, "only {valid} of {points} points cleared the kink margin");
        let p = perturbed_params(&f.params, &mut r);
        let theta = p.to_vector();
        let h: Vec<f64> = theta.iter().map(|x| 1e-7 * x.abs().max(1.0)).collect();
        if kink_margin(&mut obj, term, &theta, &h).map_err(|e| e.to_string())? < 1e-6 {
            continue;
        }
        let ga = obj.analytic_gradient(&p).map_err(|e| e.to_string())?;
        let mut gfd = vec![0.0; theta.len()];
        let mut t = theta.clone();
        for i in 0..theta.len() {
            t[i] = theta[i] + h[i];
            let fp = obj.evaluate(&t).map_err(|e| e.to_string())?.objective;
            t[i] = theta[i] - h[i];
            let fm = obj.evaluate(&t).map_err(|e| e.to_string())?.objective;
            t[i] = theta[i];
            gfd[i] = (fp - fm) / (2.0 * h[i]);
        }
        let num = ga.iter().zip(&gfd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den = gfd.iter().map(|x| x * x).sum::<f64>().sqrt();
        ensure!(den > 0.0, "finite-difference gradient vanished");
        let rel = num / den;
        ensure!(rel < 1e-4, "{term:?} point {valid}: relative error {rel:e}");
        worst = worst.max(rel);
        valid += 1;
    }
    Ok(worst)
}

// ---------------------------------------------------------------- formats

pub struct Sample {
    pub name: &'static str,
    pub bytes: Vec<u8>,
    /// Structured formats must reject every truncation; line formats may accept
    /// a cut that lands on a record boundary.
    pub strict: bool,
    pub load: fn(&[u8]) -> facefit::Result<()>,
}

fn utf8(bytes: &[u8]) -> facefit::Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| facefit::Error::InvalidInput(e.to_string()))
}

fn load_labels_bytes(bytes: &[u8]) -> facefit::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| facefit::Error::InvalidInput(e.to_string()))?;
    let p = dir.path().join("labels.csv");
    std::fs::write(&p, bytes).map_err(|e| facefit::Error::InvalidInput(e.to_string()))?;
    assets_io::read_labels(&p).map(|_| ())
}

pub fn samples() -> Vec<Sample> {
    let b = small_basis();
    let p = FaceParams::zeros(b.dims());
    let mesh = Mesh::from_params(&b, &p).expect("mesh");
    let lm = LandmarkFile {
        landmarks: face_landmarks(),
        eye_state: Some(EyeState::Open),
    };
    let labels = "name,kind,eye_state,right_ratio,left_ratio\nface_0000,open,open,0.25,0.25\nface_0001,closed,closed,0.01,0.02\nface_0002,semi,semi,0.12,0.11\n";
    let config = RunConfig::default().to_text();
    vec![
        Sample { name: "fmb", bytes: encode_fmb(&b), strict: true, load: |x| decode_fmb(x).map(|_| ()) },
        Sample { name: "obj", bytes: export_obj(&mesh).into_bytes(), strict: true, load: |x| parse_obj(utf8(x)?, "t.obj").map(|_| ()) },
        Sample {
            name: "landmarks",
            bytes: assets_io::landmarks_json::landmarks_to_json(&lm).into_bytes(),
            strict: true,
            load: |x| parse_landmarks(utf8(x)?).map(|_| ()),
        },
        Sample {
            name: "params",
            bytes: assets_io::to_json_string(&p).into_bytes(),
            strict: true,
            load: |x| {
                let v: FaceParams = serde_json::from_slice(x)?;
                v.check_dims(v.dims())
            },
        },
        Sample { name: "png", bytes: ImageRgb::filled(16, 16, Vec3::repeat(0.3)).encode_png().expect("png"), strict: true, load: |x| ImageRgb::decode_png(x).map(|_| ()) },
        Sample { name: "labels", bytes: labels.as_bytes().to_vec(), strict: false, load: load_labels_bytes },
        Sample { name: "config", bytes: config.into_bytes(), strict: false, load: |x| RunConfig::parse(utf8(x)?, "t.cfg").map(|_| ()) },
    ]
}

/// Truncate every sample at k/8 of its length, k = 0..7, and load it. Panics are
/// caught and reported; structured formats must return an error.
pub fn fuzz_truncation() -> Check {
    for s in samples() {
        ensure!((s.load)(&s.bytes).is_ok(), "{}: the untruncated sample does not load", s.name);
        for k in 0..8 {
            let cut = s.bytes.len() * k / 8;
            let part = s.bytes[..cut].to_vec();
            let load = s.load;
            let res = std::panic::catch_unwind(move || load(&part));
            match res {
                Err(_) => return Err(format!("{}: panic on truncation at {k}/8 ({cut} bytes)", s.name)),
                Ok(Ok(())) if s.strict => return Err(format!("{}: truncation at {k}/8 ({cut} bytes) accepted", s.name)),
                Ok(Err(e)) => ensure!(!e.to_string().is_empty(), "{}: empty error message", s.name),
                Ok(Ok(())) => {}
            }
        }
    }
    Ok(())
}

fn expect_err(name: &str, r: facefit::Result<()>) -> Check {
    match r {
        Ok(()) => Err(format!("{name}: malformed input accepted")),
        Err(e) => {
            ensure!(!e.to_string().is_empty(), "{name}: empty message");
            Ok(())
        }
    }
}

/// One rejected example per malformed-field class of every format.
pub fn reject_classes() -> Check {
    let b = small_basis();
    let good = encode_fmb(&b);
    let fmb = |f: &dyn Fn(&mut Vec<u8>)| {
        let mut x = good.clone();
        f(&mut x);
        decode_fmb(&x).map(|_| ())
    };
    let put = |x: &mut Vec<u8>, at: usize, v: u32| x[at..at + 4].copy_from_slice(&v.to_le_bytes());
    let v = b.vertex_count();
    let skin_at = 4 + 20 + 4 + 4 * 68;
    let tri_at = good.len() - 12 * b.triangles().len();
    expect_err("fmb magic", fmb(&|x| x[0] = b'X'))?;
    expect_err("fmb vertex count", fmb(&|x| put(x, 4, (v + 1) as u32)))?;
    expect_err("fmb zero vertices", fmb(&|x| put(x, 4, 0)))?;
    expect_err("fmb huge count", fmb(&|x| put(x, 8, u32::MAX)))?;
    expect_err("fmb dims", fmb(&|x| put(x, 12, 7)))?;
    expect_err("fmb triangle count", fmb(&|x| put(x, 20, 1)))?;
    expect_err("fmb unit scale", fmb(&|x| x[24..28].copy_from_slice(&f32::NAN.to_le_bytes())))?;
    expect_err("fmb negative unit scale", fmb(&|x| x[24..28].copy_from_slice(&(-1f32).to_le_bytes())))?;
    expect_err("fmb landmark id", fmb(&|x| put(x, 28, v as u32)))?;
    expect_err("fmb skin flag", fmb(&|x| x[skin_at] = 7))?;
    expect_err("fmb texture range", fmb(&|x| {
        let at = skin_at + v + 12 * v;
        x[at..at + 4].copy_from_slice(&2f32.to_le_bytes())
    }))?;
    expect_err("fmb non-finite shape", fmb(&|x| {
        let at = skin_at + v;
        x[at..at + 4].copy_from_slice(&f32::INFINITY.to_le_bytes())
    }))?;
    expect_err("fmb triangle index", fmb(&|x| put(x, tri_at, v as u32)))?;
    expect_err("fmb trailing bytes", fmb(&|x| x.push(0)))?;

    let obj = |t: &str| parse_obj(t, "t.obj").map(|_| ());
    expect_err("obj vertex arity", obj("v 0 0\n"))?;
    expect_err("obj vertex number", obj("v 0 x 0\n"))?;
    expect_err("obj vertex nan", obj("v 0 nan 0\n"))?;
    expect_err("obj face arity", obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n"))?;
    expect_err("obj face zero", obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n"))?;
    expect_err("obj face range", obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n"))?;
    expect_err("obj face number", obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 b 3\n"))?;
    expect_err("obj mixed colors", obj("v 0 0 0 1 1 1\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))?;
    expect_err("obj landmark count", obj("#lm 0 1 2\nv 0 0 0\n"))?;
    expect_err("obj landmark range", obj(&format!("#lm {}\nv 0 0 0\n", vec!["5"; 68].join(" "))))?;
    expect_err("obj counts", obj("#counts 4 0\nv 0 0 0\n"))?;
    expect_err("obj counts syntax", obj("#counts 1\nv 0 0 0\n"))?;
    expect_err("obj statement", obj("v 0 0 0\nl 1 2\n"))?;
    expect_err("obj empty", obj(""))?;

    let pts = |n: usize| (0..n).map(|i| format!("[{i},1]")).collect::<Vec<_>>().join(",");
    let lm = |t: String| parse_landmarks(&t).map(|_| ());
    expect_err("landmarks count", lm(format!("{{\"points\":[{}]}}", pts(67))))?;
    expect_err("landmarks point arity", lm(format!("{{\"points\":[{},[1]]}}", pts(67))))?;
    expect_err("landmarks weights count", lm(format!("{{\"points\":[{}],\"weights\":[1,1]}}", pts(68))))?;
    expect_err("landmarks negative weight", lm(format!("{{\"points\":[{}],\"weights\":[{}]}}", pts(68), vec!["-1"; 68].join(","))))?;
    expect_err("landmarks eye state", lm(format!("{{\"points\":[{}],\"eye_state\":\"squint\"}}", pts(68))))?;
    expect_err("landmarks valid count", lm(format!("{{\"points\":[{}],\"valid\":[true]}}", pts(68))))?;
    expect_err("landmarks unknown field", lm(format!("{{\"points\":[{}],\"extra\":1}}", pts(68))))?;
    expect_err("landmarks not json", lm("points".into()))?;

    let header = "name,kind,eye_state\n";
    let labels = |row: &str| load_labels_bytes(format!("{header}{row}\n").as_bytes());
    expect_err("labels columns", labels("a,open"))?;
    expect_err("labels kind", labels("a,wide,open"))?;
    expect_err("labels state", labels("a,open,blink"))?;

    let cfg = |t: &str| RunConfig::parse(t, "t.cfg").map(|_| ());
    expect_err("config unknown key", cfg("iterationz = 5"))?;
    expect_err("config missing =", cfg("iterations 5"))?;
    expect_err("config number", cfg("step = fast"))?;
    expect_err("config zero iterations", cfg("iterations = 0"))?;
    expect_err("config negative step", cfg("step = -1"))?;
    expect_err("config bool", cfg("elam = maybe"))?;
    expect_err("config pairing", cfg("pairing = diagonal"))?;
    expect_err("config gradient mode", cfg("gradient_mode = magic"))?;
    expect_err("config thresholds", cfg("eye_closed_below = 0.3\neye_open_above = 0.2"))?;

    let params = |t: &str| {
        let v: FaceParams = serde_json::from_str(t)?;
        v.check_dims(v.dims())
    };
    let good_p = assets_io::to_json_string(&FaceParams::zeros(CoefficientDims::new(2, 2, 2)));
    expect_err("params gamma length", params(&good_p.replacen("\"gamma\": [", "\"gamma\": [1.0, ", 1)))?;
    expect_err("params missing pose", params("{\"alpha\":[],\"beta\":[],\"delta\":[],\"gamma\":[]}"))?;
    expect_err("params wrong type", params(&good_p.replacen("\"alpha\": [", "\"alpha\": [\"x\", ", 1)))?;

    expect_err("png garbage", ImageRgb::decode_png(b"\x89PNG\r\n\x1a\nnot really").map(|_| ()))?;
    expect_err("png empty", ImageRgb::decode_png(b"").map(|_| ()))?;
    Ok(())
}

// ---------------------------------------------------------------- cli helpers

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_facefit"))
}

pub fn run_cli(args: &[&str]) -> std::process::Output {
    std::process::Command::new(bin())
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn facefit")
}

pub fn run_ok(args: &[&str]) -> Result<std::process::Output, String> {
    let out = run_cli(args);
    ensure!(
        out.status.success(),
        "`facefit {}` exited {:?}: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(out)
}

/// All files under `dir` with their bytes, sorted by relative path.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("read dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).expect("read file")));
            }
        }
    }
    out.sort();
    out
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Run synth, fit, eval-eyes, eval-now and render into `dir`; stdout of the eval commands
/// is saved next to the outputs.
pub fn cli_pipeline(dir: &Path) -> Check {
    let data = dir.join("data");
    let fits = dir.join("fits");
    run_ok(&["synth", "--seed", "7", "--out-dir", s(&data), "--vertices", "400", "--dims", "10,8,6", "--images", "4", "--width", "64", "--height", "64"])?;
    run_ok(&[
        "fit", "--model", s(&data.join("model.fmb")), "--image", s(&data.join("images")), "--landmarks", s(&data.join("landmarks")),
        "--out", s(&fits), "--probe", "label", "--jobs", "2", "--set", "iterations=60",
    ])?;
    let eyes = run_ok(&["eval-eyes", "--reports-dir", s(&fits), "--labels", s(&data.join("labels.csv"))])?;
    std::fs::write(dir.join("eval_eyes.tsv"), &eyes.stdout).map_err(|e| e.to_string())?;
    let now = run_ok(&["eval-now", "--pred-dir", s(&fits), "--gt-dir", s(&data.join("gt")), "--curve-out", s(&dir.join("curve.csv"))])?;
    std::fs::write(dir.join("eval_now.tsv"), &now.stdout).map_err(|e| e.to_string())?;
    run_ok(&["render", "--model", s(&data.join("model.fmb")), "--params", s(&data.join("params/face_0000.json")), "--out", s(&dir.join("render.png")), "--width", "48", "--height", "48"])?;
    Ok(())
}

/// The `fit` examples on a closed fixture with injected open-eye landmarks and a semi fixture.
pub fn examples_cli(dir: &Path) -> Check {
    let data = dir.join("data");
    run_ok(&["synth", "--seed", "3", "--out-dir", s(&data), "--images", "2", "--kinds", "closed,semi", "--width", "64", "--height", "64"])?;
    let model = data.join("model.fmb");
    let img = |n: &str| data.join("images").join(format!("{n}.png"));
    let lmk = |n: &str| data.join("landmarks").join(format!("{n}.json"));
    let state = |out: &Path, n: &str| -> Result<serde_json::Value, String> {
        let text = std::fs::read_to_string(out.join(format!("{n}.json"))).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    let ratios = |v: &serde_json::Value| -> Vec<f64> {
        v["mesh_eye_ratios"].as_array().map(|a| a.iter().filter_map(|x| x.as_f64()).collect()).unwrap_or_default()
    };
    let t = EyeThresholds::default();

    let no_elam = dir.join("no_elam");
    run_ok(&["fit", "--model", s(&model), "--image", s(&img("face_0000")), "--landmarks", s(&lmk("face_0000")), "--no-elam", "--out", s(&no_elam)])?;
    let r = ratios(&state(&no_elam, "face_0000")?);
    ensure!(r.len() == 2 && r.iter().all(|&x| x > t.open_above), "--no-elam on a closed fixture gave ratios {r:?}, expected open");

    let elam = dir.join("elam");
    run_ok(&["fit", "--model", s(&model), "--image", s(&img("face_0000")), "--landmarks", s(&lmk("face_0000")), "--probe", "label", "--out", s(&elam)])?;
    let r = ratios(&state(&elam, "face_0000")?);
    ensure!(r.len() == 2 && r.iter().all(|&x| x < t.closed_below), "ELAM with the oracle probe gave ratios {r:?}, expected closed");

    let gt = assets_io::load_obj(&data.join("gt/face_0001.obj")).map_err(|e| e.to_string())?;
    let gt_r = [Eye::Right, Eye::Left].map(|e| facefit::evaluation::gap_ratio(&gt, e).unwrap());
    let (img1, lmk1) = (img("face_0001"), lmk("face_0001"));
    let mut errs = vec![];
    for (name, extra) in [("ldl", None), ("no_ldl", Some("--no-ldl"))] {
        let out = dir.join(name);
        let mut args = vec!["fit", "--model", s(&model), "--image", s(&img1), "--landmarks", s(&lmk1), "--no-elam", "--out", s(&out)];
        args.extend(extra);
        run_ok(&args)?;
        let r = ratios(&state(&out, "face_0001")?);
        ensure!(r.len() == 2, "missing ratios");
        errs.push((r[0] - gt_r[0]).abs() + (r[1] - gt_r[1]).abs());
    }
    ensure!(errs[0] < errs[1], "LDL gap error {} is not below --no-ldl {}", errs[0], errs[1]);
    Ok(())
}

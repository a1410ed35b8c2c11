//! Procedural face basis with iBUG-68 landmark topology.
//!
//! The surface is a frontal cap `z = 60 sqrt(1 - (x/75)^2 - (y/95)^2)` plus a nose
//! bump, in millimetres with y up and the face looking along +z. The 68 landmark
//! vertices are placed by hand; the remaining vertices follow a jittered Vogel
//! spiral and everything is Delaunay-triangulated in the xy plane.
//!
//! Expression components 0 and 1 close the right and left eye (upper lid slides
//! onto the lower lid at coefficient 1), component 2 opens the mouth, and the rest
//! are smooth random fields that vanish around the eyes. The mean face has open
//! eyes with a lid-gap to eye-width ratio of exactly 0.25.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::landmarks::{ibug, LANDMARK_COUNT};
use crate::morphable_model::{BasisParts, CoefficientDims, MorphableBasis, Vec3};

pub const FACE_A: f64 = 75.0;
pub const FACE_B: f64 = 95.0;
const DEPTH: f64 = 60.0;
/// Eye centre height and half width.
const EYE_Y: f64 = 22.0;
const EYE_HALF_WIDTH: f64 = 15.0;
/// Open-eye lid gap / eye width.
pub const OPEN_GAP_RATIO: f64 = 0.25;
const RIGHT_EYE_CX: f64 = -30.0;
const LEFT_EYE_CX: f64 = 30.0;
/// Lid landmarks sit at `u = +-1/3` of the eye half width.
const LID_U: f64 = 1.0 / 3.0;
const MIN_SEPARATION: f64 = 1.5;

/// Surface height of the cap at `(x, y)`.
pub fn surface_z(x: f64, y: f64) -> f64 {
    let e = 1.0 - (x / FACE_A).powi(2) - (y / FACE_B).powi(2);
    let nose = 20.0 * (-(x * x) / (2.0 * 9.0 * 9.0) - (y - 2.0).powi(2) / (2.0 * 16.0 * 16.0)).exp();
    DEPTH * e.max(0.0).sqrt() + nose
}

/// Half the open lid gap. The ratio is taken against the 3D corner distance, which
/// includes the depth difference of the corners on the curved cap.
fn half_gap() -> f64 {
    let (a, b) = (RIGHT_EYE_CX - EYE_HALF_WIDTH, RIGHT_EYE_CX + EYE_HALF_WIDTH);
    let dz = surface_z(b, EYE_Y) - surface_z(a, EYE_Y);
    let width = ((b - a).powi(2) + dz * dz).sqrt();
    OPEN_GAP_RATIO * width / 2.0
}

/// Lid half-opening at normalized eye coordinate `u` (0 outside the eye).
fn lid_height(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    half_gap() * (1.0 - u * u) / (1.0 - LID_U * LID_U)
}

/// Hand-placed 2D landmark layout, indexed 0..68.
pub fn landmark_layout() -> Vec<[f64; 2]> {
    let mut p = vec![[0.0; 2]; LANDMARK_COUNT];
    for k in 0..17 {
        let t = std::f64::consts::PI * (1.0 + k as f64 / 16.0);
        p[k] = [68.0 * t.cos(), 15.0 + 100.0 * t.sin()];
    }
    for k in 0..5 {
        let s = k as f64 / 4.0;
        let y = 40.0 + 5.0 * (std::f64::consts::PI * s).sin();
        p[ibug(18) + k] = [-55.0 + 40.0 * s, y];
        p[ibug(27) - k] = [55.0 - 40.0 * s, y];
    }
    for (k, y) in [26.0, 18.0, 10.0, 2.0].into_iter().enumerate() {
        p[ibug(28) + k] = [0.0, y];
    }
    for (k, (x, y)) in [(-12.0, -8.0), (-6.0, -10.0), (0.0, -11.0), (6.0, -10.0), (12.0, -8.0)]
        .into_iter()
        .enumerate()
    {
        p[ibug(32) + k] = [x, y];
    }
    let h = half_gap();
    let eye = |cx: f64| -> [[f64; 2]; 6] {
        let w = EYE_HALF_WIDTH;
        let lx = w * LID_U;
        // iBUG order: corner, upper, upper, corner, lower, lower
        let (c0, c1, u0, u1) = (cx - w, cx + w, cx - lx, cx + lx);
        [
            [c0, EYE_Y],
            [u0, EYE_Y + h],
            [u1, EYE_Y + h],
            [c1, EYE_Y],
            [u1, EYE_Y - h],
            [u0, EYE_Y - h],
        ]
    };
    for (k, q) in eye(RIGHT_EYE_CX).into_iter().enumerate() {
        p[ibug(37) + k] = q;
    }
    for (k, q) in eye(LEFT_EYE_CX).into_iter().enumerate() {
        p[ibug(43) + k] = q;
    }
    let mouth = [
        (-25.0, -40.0),
        (-15.0, -35.0),
        (-6.0, -33.0),
        (0.0, -34.0),
        (6.0, -33.0),
        (15.0, -35.0),
        (25.0, -40.0),
        (15.0, -47.0),
        (6.0, -50.0),
        (0.0, -51.0),
        (-6.0, -50.0),
        (-15.0, -47.0),
        (-20.0, -40.0),
        (-6.0, -38.0),
        (0.0, -38.5),
        (6.0, -38.0),
        (20.0, -40.0),
        (6.0, -42.0),
        (0.0, -42.5),
        (-6.0, -42.0),
    ];
    for (k, (x, y)) in mouth.into_iter().enumerate() {
        p[ibug(49) + k] = [x, y];
    }
    p
}

/// Displacement closing the eye centred at `cx`, at full coefficient.
fn eye_closing(cx: f64, x: f64, y: f64) -> Vec3 {
    let u = (x - cx) / EYE_HALF_WIDTH;
    let h = lid_height(u);
    if h == 0.0 {
        return Vec3::zeros();
    }
    let (lo, up) = (EYE_Y - h, EYE_Y + h);
    let dy = if y < lo {
        0.0
    } else if y <= up {
        lo - y
    } else {
        -2.0 * h * (-((y - up) / 6.0).powi(2)).exp()
    };
    if dy == 0.0 {
        return Vec3::zeros();
    }
    Vec3::new(0.0, dy, surface_z(x, y + dy) - surface_z(x, y))
}

fn mouth_opening(x: f64, y: f64) -> Vec3 {
    let below = ((-38.5 - y) / 3.5).clamp(0.0, 1.0);
    let chin = (-(-55.0 - y).max(0.0).powi(2) / (2.0 * 15.0 * 15.0)).exp();
    let dy = -8.0 * (-(x * x) / (2.0 * 25.0 * 25.0)).exp() * below * chin;
    Vec3::new(0.0, dy, surface_z(x, y + dy) - surface_z(x, y))
}

/// 1 far from both eyes, 0 inside them.
fn eye_mask(x: f64, y: f64) -> f64 {
    [RIGHT_EYE_CX, LEFT_EYE_CX]
        .iter()
        .map(|cx| {
            let d2 = ((x - cx) / 22.0).powi(2) + ((y - EYE_Y) / 14.0).powi(2);
            1.0 - (-d2 * d2).exp()
        })
        .product()
}

fn in_eye_opening(x: f64, y: f64) -> bool {
    [RIGHT_EYE_CX, LEFT_EYE_CX].iter().any(|cx| {
        let h = lid_height((x - cx) / EYE_HALF_WIDTH);
        h > 0.0 && (y - EYE_Y).abs() < h
    })
}

fn in_brow(x: f64, y: f64) -> bool {
    (15.0..=55.0).contains(&x.abs()) && (37.0..=47.0).contains(&y)
}

fn in_lips(x: f64, y: f64) -> bool {
    ((x / 26.0).powi(2) + ((y + 42.0) / 10.0).powi(2)) <= 1.0
}

struct RbfField {
    centers: Vec<[f64; 2]>,
    vectors: Vec<Vec3>,
    width: f64,
}

impl RbfField {
    fn random(rng: &mut ChaCha8Rng, n: usize, width: f64, amplitude: f64) -> Self {
        let mut centers = Vec::with_capacity(n);
        let mut vectors = Vec::with_capacity(n);
        for _ in 0..n {
            centers.push([rng.random_range(-FACE_A..FACE_A), rng.random_range(-FACE_B..FACE_B)]);
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            vectors.push(v * amplitude);
        }
        Self {
            centers,
            vectors,
            width,
        }
    }

    fn at(&self, x: f64, y: f64) -> Vec3 {
        let mut out = Vec3::zeros();
        for (c, v) in self.centers.iter().zip(&self.vectors) {
            let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
            out += v * (-d2 / (2.0 * self.width * self.width)).exp();
        }
        out
    }
}

fn mean_color(x: f64, y: f64) -> Vec3 {
    if in_eye_opening(x, y) {
        Vec3::new(0.25, 0.2, 0.18)
    } else if in_brow(x, y) {
        Vec3::new(0.3, 0.22, 0.15)
    } else if in_lips(x, y) {
        Vec3::new(0.7, 0.35, 0.35)
    } else {
        let shade = 0.04 * (y / FACE_B);
        Vec3::new(0.82 + shade, 0.62 + shade, 0.52 + shade)
    }
}

fn f32_round(x: f64) -> f64 {
    x as f32 as f64
}

/// Vertex positions in the xy plane: the 68 landmarks, then spiral fill.
fn vertex_layout(rng: &mut ChaCha8Rng, vertices: usize) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = landmark_layout().into_iter().map(|p| p.map(f32_round)).collect();
    let n_fill = vertices - LANDMARK_COUNT;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let spacing = (std::f64::consts::PI * FACE_A * FACE_B / n_fill.max(1) as f64).sqrt();
    for i in 0..n_fill {
        let r = ((i as f64 + 0.5) / n_fill as f64).sqrt() * 0.97;
        let t = i as f64 * golden;
        let mut q = [
            FACE_A * r * t.cos() + rng.random_range(-0.15..0.15) * spacing,
            FACE_B * r * t.sin() + rng.random_range(-0.15..0.15) * spacing,
        ];
        for _ in 0..16 {
            let nearest = pts
                .iter()
                .map(|p| (p, (p[0] - q[0]).hypot(p[1] - q[1])))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("landmarks present");
            if nearest.1 >= MIN_SEPARATION {
                break;
            }
            let (dx, dy) = if nearest.1 > 1e-9 {
                ((q[0] - nearest.0[0]) / nearest.1, (q[1] - nearest.0[1]) / nearest.1)
            } else {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                (a.cos(), a.sin())
            };
            q = [nearest.0[0] + dx * MIN_SEPARATION * 1.01, nearest.0[1] + dy * MIN_SEPARATION * 1.01];
        }
        // keep inside the cap
        let e = (q[0] / FACE_A).powi(2) + (q[1] / FACE_B).powi(2);
        if e > 0.98 {
            let s = (0.98 / e).sqrt();
            q = [q[0] * s, q[1] * s];
        }
        pts.push([f32_round(q[0]), f32_round(q[1])]);
    }
    pts
}

fn triangulate(points: &[[f64; 2]]) -> Result<Vec<[u32; 3]>> {
    let mut tri: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let mut handle_to_index = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let h = tri
            .insert(Point2::new(p[0], p[1]))
            .map_err(|e| Error::InvalidInput(format!("cannot triangulate vertex {i}: {e:?}")))?;
        if h.index() != handle_to_index.len() {
            return Err(Error::InvalidInput(format!("duplicate vertex position at {i}")));
        }
        handle_to_index.push(i as u32);
    }
    let mut faces: Vec<[u32; 3]> = tri
        .inner_faces()
        .map(|f| f.vertices().map(|v| handle_to_index[v.fix().index()]))
        .collect();
    faces.sort_unstable();
    Ok(faces)
}

/// Deterministic synthetic basis for `seed`.
pub fn generate_synthetic_basis(seed: u64, vertices: usize, dims: CoefficientDims) -> Result<MorphableBasis> {
    if vertices < LANDMARK_COUNT {
        return Err(Error::InvalidInput(format!(
            "{vertices} vertices cannot hold the {LANDMARK_COUNT} landmarks"
        )));
    }
    if dims.shape == 0 || dims.expression == 0 || dims.texture == 0 {
        return Err(Error::InvalidInput(format!(
            "coefficient dimensions must be >= 1, got ({}, {}, {})",
            dims.shape, dims.expression, dims.texture
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xy = vertex_layout(&mut rng, vertices);
    let triangles = triangulate(&xy)?;

    let mut mean_shape = Vec::with_capacity(3 * vertices);
    let mut mean_texture = Vec::with_capacity(3 * vertices);
    let mut skin = Vec::with_capacity(vertices);
    for p in &xy {
        mean_shape.extend_from_slice(&[p[0], p[1], f32_round(surface_z(p[0], p[1]))]);
        let c = mean_color(p[0], p[1]);
        mean_texture.extend(c.iter().map(|&v| f32_round(v)));
        skin.push(!(in_eye_opening(p[0], p[1]) || in_brow(p[0], p[1]) || in_lips(p[0], p[1])));
    }

    let fill_basis = |k: usize, col: &mut dyn FnMut(usize, f64, f64) -> Vec3| -> Vec<f64> {
        let mut b = vec![0.0; 3 * vertices * k];
        for j in 0..k {
            for (v, p) in xy.iter().enumerate() {
                let d = col(j, p[0], p[1]);
                for a in 0..3 {
                    b[(3 * v + a) * k + j] = f32_round(d[a]);
                }
            }
        }
        b
    };

    let shape_fields: Vec<RbfField> = (0..dims.shape)
        .map(|j| RbfField::random(&mut rng, 3, 60.0, 5.0 * 0.9f64.powi(j as i32)))
        .collect();
    let shape_basis = fill_basis(dims.shape, &mut |j, x, y| shape_fields[j].at(x, y));

    let expr_fields: Vec<RbfField> = (0..dims.expression)
        .map(|j| RbfField::random(&mut rng, 2, 25.0, 2.0 * 0.95f64.powi(j as i32)))
        .collect();
    let expression_basis = fill_basis(dims.expression, &mut |j, x, y| match j {
        0 => eye_closing(RIGHT_EYE_CX, x, y),
        1 => eye_closing(LEFT_EYE_CX, x, y),
        2 => mouth_opening(x, y),
        _ => expr_fields[j].at(x, y) * eye_mask(x, y),
    });

    let tex_fields: Vec<RbfField> = (0..dims.texture)
        .map(|j| RbfField::random(&mut rng, 3, 40.0, 0.05 * 0.9f64.powi(j as i32)))
        .collect();
    let texture_basis = fill_basis(dims.texture, &mut |j, x, y| tex_fields[j].at(x, y));

    MorphableBasis::from_parts(BasisParts {
        mean_shape,
        mean_texture,
        shape_basis,
        expression_basis,
        texture_basis,
        dims,
        triangles,
        landmark_vertex_ids: (0..LANDMARK_COUNT as u32).collect(),
        skin,
        unit_scale: 1.0,
    })
}

/// Expression index of the closing direction for each eye, if present.
pub const RIGHT_EYE_CLOSE: usize = 0;
pub const LEFT_EYE_CLOSE: usize = 1;
pub const MOUTH_OPEN: usize = 2;

//! Ground-truth fixtures rendered from a basis with known parameters.
//!
//! Kinds:
//! * `open`: eyes open, landmarks are exact projections.
//! * `closed`: eyes closed, but the 12 eye landmarks are taken from the same face
//!   with open eyes, as a detector that misses the closure would report them.
//! * `semi`: eyes half closed; each eye's six landmarks are shifted vertically as a
//!   block by 1.5 to 3 mm (random sign), a detector bias the model cannot absorb
//!   into the lid gap.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::assets_io::landmarks_json::{save_landmarks, LandmarkFile};
use crate::assets_io::obj::save_obj;
use crate::assets_io::synthetic::{LEFT_EYE_CLOSE, MOUTH_OPEN, RIGHT_EYE_CLOSE};
use crate::assets_io::{fmb::save_fmb, write_json};
use crate::elam::EyeState;
use crate::error::{Error, Result};
use crate::evaluation::{eye_state_of_mesh, EyeThresholds, MeshEyes};
use crate::geometry::{axis_angle, rotation_matrix};
use crate::image_formation::{render, Camera, ImageRgb, Intrinsics, SH_C0};
use crate::landmarks::{Eye, LandmarkSet, Vec2};
use crate::morphable_model::{FaceParams, Mesh, MorphableBasis, Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureKind {
    Open,
    Closed,
    Semi,
}

impl FixtureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FixtureKind::Open => "open",
            FixtureKind::Closed => "closed",
            FixtureKind::Semi => "semi",
        }
    }

    pub fn label(self) -> Option<EyeState> {
        match self {
            FixtureKind::Open => Some(EyeState::Open),
            FixtureKind::Closed => Some(EyeState::Closed),
            FixtureKind::Semi => None,
        }
    }
}

impl std::str::FromStr for FixtureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(FixtureKind::Open),
            "closed" => Ok(FixtureKind::Closed),
            "semi" => Ok(FixtureKind::Semi),
            other => Err(Error::Config(format!("unknown fixture kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureOptions {
    pub width: u32,
    pub height: u32,
    /// Inject open-eye landmarks into closed fixtures.
    pub inject_open_eye_error: bool,
    /// Range of the per-eye vertical landmark block shift for semi fixtures (mm).
    pub eye_block_shift_mm: (f64, f64),
    /// Standard deviation of Gaussian landmark noise (px).
    pub landmark_noise_px: f64,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            inject_open_eye_error: true,
            eye_block_shift_mm: (1.5, 3.0),
            landmark_noise_px: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub kind: FixtureKind,
    pub params: FaceParams,
    pub intrinsics: Intrinsics,
    pub image: ImageRgb,
    /// What a landmark detector reports, including injected errors.
    pub observed: LandmarkFile,
    /// Exact projections of the ground-truth landmark vertices.
    pub true_landmarks: Vec<Vec2>,
    pub mesh: Mesh,
    pub eyes: MeshEyes,
}

/// Camera distance keeping a ~190 mm face at ~78% of the image height.
fn nominal_depth(intrinsics: &Intrinsics) -> f64 {
    intrinsics.focal * 190.0 / (0.78 * intrinsics.height as f64)
}

fn sample_params(basis: &MorphableBasis, kind: FixtureKind, intrinsics: &Intrinsics, rng: &mut ChaCha8Rng) -> FaceParams {
    let dims = basis.dims();
    let mut p = FaceParams::zeros(dims);
    let n = |s: f64| Normal::new(0.0, s).expect("valid sigma");
    let (na, nb, nd) = (n(0.3), n(0.3), n(1.0));
    for a in p.alpha.iter_mut() {
        *a = na.sample(rng);
    }
    for b in p.beta.iter_mut() {
        *b = nb.sample(rng);
    }
    for d in p.delta.iter_mut() {
        *d = nd.sample(rng);
    }
    let eye_range = match kind {
        FixtureKind::Open => 0.0..0.1,
        FixtureKind::Closed => 0.9..1.0,
        FixtureKind::Semi => 0.35..0.65,
    };
    for idx in [RIGHT_EYE_CLOSE, LEFT_EYE_CLOSE] {
        if idx < dims.expression {
            p.beta[idx] = rng.random_range(eye_range.clone());
        }
    }
    if MOUTH_OPEN < dims.expression {
        p.beta[MOUTH_OPEN] = rng.random_range(0.0..0.5);
    }
    for c in 0..3 {
        p.gamma[c * 9] = rng.random_range(0.75..1.0) / SH_C0;
        for k in 1..4 {
            p.gamma[c * 9 + k] = rng.random_range(-0.3..0.3);
        }
        for k in 4..9 {
            p.gamma[c * 9 + k] = rng.random_range(-0.1..0.1);
        }
    }
    let small = [
        rng.random_range(-0.15..0.15),
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.1..0.1),
    ];
    let r = rotation_matrix(&small) * rotation_matrix(&[std::f64::consts::PI, 0.0, 0.0]);
    let z = nominal_depth(intrinsics) * rng.random_range(0.95..1.05);
    p.pose = Pose {
        rotation: axis_angle(&r),
        translation: [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), z],
    };
    p
}

/// Project the 68 landmark vertices of `mesh` under `params.pose`.
pub fn project_landmarks(mesh: &Mesh, params: &FaceParams, intrinsics: &Intrinsics) -> Result<Vec<Vec2>> {
    let camera = Camera::new(*intrinsics, &params.pose);
    let points = mesh
        .landmark_positions()
        .ok_or_else(|| Error::InvalidInput("mesh has no landmark ids".into()))?;
    points
        .iter()
        .map(|v| {
            let c = camera.to_camera(v);
            if c.z <= crate::image_formation::NEAR_PLANE {
                Err(Error::FaceBehindCamera)
            } else {
                Ok(camera.project_camera_point(&c))
            }
        })
        .collect()
}

/// Generate one fixture. `seed` fully determines the result.
pub fn generate_fixture(
    basis: &MorphableBasis,
    kind: FixtureKind,
    name: &str,
    seed: u64,
    opts: &FixtureOptions,
) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intrinsics = Intrinsics::for_image(opts.width, opts.height, None)?;
    let params = sample_params(basis, kind, &intrinsics, &mut rng);
    let rendered = render(basis, &params, intrinsics)?;
    let mesh = rendered.mesh;
    let true_landmarks = project_landmarks(&mesh, &params, &intrinsics)?;
    let mut observed = true_landmarks.clone();

    match kind {
        FixtureKind::Closed if opts.inject_open_eye_error => {
            let mut open = params.clone();
            for idx in [RIGHT_EYE_CLOSE, LEFT_EYE_CLOSE] {
                if idx < open.beta.len() {
                    open.beta[idx] = 0.0;
                }
            }
            let open_mesh = Mesh::from_params(basis, &open)?;
            let open_lm = project_landmarks(&open_mesh, &open, &intrinsics)?;
            for eye in Eye::BOTH {
                for i in eye.indices() {
                    observed[i] = open_lm[i];
                }
            }
        }
        FixtureKind::Semi => {
            let (lo, hi) = opts.eye_block_shift_mm;
            let mut shifted = mesh.clone();
            let ids = shifted.landmark_ids.clone().expect("basis meshes carry landmark ids");
            for eye in Eye::BOTH {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let shift = if hi > lo { rng.random_range(lo..hi) } else { lo };
                for i in eye.indices() {
                    shifted.vertices[ids[i] as usize] += Vec3::new(0.0, sign * shift, 0.0);
                }
            }
            let lm = project_landmarks(&shifted, &params, &intrinsics)?;
            for eye in Eye::BOTH {
                for i in eye.indices() {
                    observed[i] = lm[i];
                }
            }
        }
        _ => {}
    }
    if opts.landmark_noise_px > 0.0 {
        let nd = Normal::new(0.0, opts.landmark_noise_px).map_err(|e| Error::InvalidInput(e.to_string()))?;
        for p in observed.iter_mut() {
            p.x += nd.sample(&mut rng);
            p.y += nd.sample(&mut rng);
        }
    }

    let eyes = eye_state_of_mesh(&mesh, &EyeThresholds::default())?;
    Ok(Fixture {
        name: name.to_string(),
        kind,
        params,
        intrinsics,
        image: rendered.output.color,
        observed: LandmarkFile {
            landmarks: LandmarkSet::new(observed)?,
            eye_state: kind.label(),
        },
        true_landmarks,
        mesh,
        eyes,
    })
}

/// Seed of the `index`-th fixture of a set generated from `seed`.
pub fn fixture_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}

/// `count` fixtures cycling through `kinds`.
pub fn generate_fixtures(
    basis: &MorphableBasis,
    kinds: &[FixtureKind],
    count: usize,
    seed: u64,
    opts: &FixtureOptions,
) -> Result<Vec<Fixture>> {
    if kinds.is_empty() {
        return Err(Error::InvalidInput("no fixture kinds given".into()));
    }
    (0..count)
        .map(|i| {
            let kind = kinds[i % kinds.len()];
            let name = format!("face_{i:04}");
            generate_fixture(basis, kind, &name, fixture_seed(seed, i), opts)
        })
        .collect()
}

/// Fixture set on disk:
///
/// ```text
/// model.fmb
/// images/<name>.png
/// landmarks/<name>.json
/// params/<name>.json
/// gt/<name>.obj
/// labels.csv            name,kind,eye_state,right_ratio,left_ratio
/// ```
pub fn write_fixture_set(dir: &Path, basis: &MorphableBasis, fixtures: &[Fixture]) -> Result<()> {
    for sub in ["images", "landmarks", "params", "gt"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    save_fmb(basis, &dir.join("model.fmb"))?;
    let mut labels = String::from("name,kind,eye_state,right_ratio,left_ratio\n");
    for f in fixtures {
        f.image.save_png(&dir.join("images").join(format!("{}.png", f.name)))?;
        save_landmarks(&f.observed, &dir.join("landmarks").join(format!("{}.json", f.name)))?;
        write_json(&dir.join("params").join(format!("{}.json", f.name)), &f.params)?;
        save_obj(&f.mesh, &dir.join("gt").join(format!("{}.obj", f.name)))?;
        let _ = writeln!(
            labels,
            "{},{},{},{},{}",
            f.name,
            f.kind.as_str(),
            f.kind.label().map_or("semi", EyeState::as_str),
            f.eyes.right_ratio,
            f.eyes.left_ratio
        );
    }
    let p = dir.join("labels.csv");
    std::fs::write(&p, labels).map_err(|e| Error::io(&p, e))
}

/// One row of `labels.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub name: String,
    pub kind: FixtureKind,
    pub eye_state: Option<EyeState>,
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, detail: String| Error::Parse {
        path: path.display().to_string(),
        line,
        detail,
    };
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 3 {
            return Err(err(n + 1, format!("expected at least 3 columns, got {}", cols.len())));
        }
        let kind = cols[1].parse().map_err(|e: Error| err(n + 1, e.to_string()))?;
        let eye_state = match cols[2] {
            "semi" | "" => None,
            s => Some(s.parse().map_err(|e: Error| err(n + 1, e.to_string()))?),
        };
        rows.push(LabelRow {
            name: cols[0].to_string(),
            kind,
            eye_state,
        });
    }
    Ok(rows)
}

//! Reconstruction metrics: vertex-to-nearest-vertex error statistics and
//! eye-state accuracy / F1 with "open" as the positive class.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::elam::{EyeState, EyelidPairing, PairingMode};
use crate::error::{Error, Result};
use crate::geometry::umeyama;
use crate::landmarks::Eye;
use crate::morphable_model::{Mesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    None,
    /// Least-squares similarity transform over the 68 landmark vertices.
    #[default]
    Rigid,
}

impl std::str::FromStr for Alignment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Alignment::None),
            "rigid" => Ok(Alignment::Rigid),
            other => Err(Error::Config(format!("unknown alignment `{other}` (expected rigid or none)"))),
        }
    }
}

/// Number of samples on the cumulative-error curve.
pub const CURVE_SAMPLES: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshErrorStats {
    pub distances: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// `(threshold, fraction of distances <= threshold)`, thresholds from 0 to the maximum.
    pub curve: Vec<(f64, f64)>,
}

impl MeshErrorStats {
    pub fn from_distances(distances: Vec<f64>) -> Self {
        let (median, mean, std) = summary(&distances);
        let curve = cumulative_curve(&distances, CURVE_SAMPLES);
        Self {
            distances,
            median,
            mean,
            std,
            curve,
        }
    }

    pub fn max(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }
}

/// `(median, mean, population std)`; zeros for an empty slice.
pub fn summary(values: &[f64]) -> (f64, f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[m]
    } else {
        0.5 * (sorted[m - 1] + sorted[m])
    };
    (median, mean, var.sqrt())
}

/// Fraction of values `<= t` at `samples` evenly spaced thresholds in `[0, max]`.
pub fn cumulative_curve(values: &[f64], samples: usize) -> Vec<(f64, f64)> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max = *sorted.last().unwrap();
    let n = sorted.len() as f64;
    let samples = samples.max(2);
    (0..samples)
        .map(|i| {
            let t = if i + 1 == samples {
                max
            } else {
                max * i as f64 / (samples - 1) as f64
            };
            let count = sorted.partition_point(|&d| d <= t);
            (t, count as f64 / n)
        })
        .collect()
}

pub fn curve_to_csv(curve: &[(f64, f64)]) -> String {
    let mut s = String::from("threshold,fraction\n");
    for (t, f) in curve {
        let _ = writeln!(s, "{t},{f}");
    }
    s
}

pub fn curve_to_svg(curve: &[(f64, f64)], title: &str) -> String {
    let (w, h, m) = (480.0, 320.0, 40.0);
    let max_t = curve.last().map_or(1.0, |c| c.0).max(f64::MIN_POSITIVE);
    let mut pts = String::new();
    for (t, f) in curve {
        let x = m + (w - 2.0 * m) * t / max_t;
        let y = h - m - (h - 2.0 * m) * f;
        let _ = write!(pts, "{x:.2},{y:.2} ");
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{m}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n\
         <line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{r}\" y=\"{lb}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{max_t:.3}</text>\n\
         <polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{pts}\"/>\n\
         </svg>\n",
        b = h - m,
        r = w - m,
        lb = h - m + 16.0,
        pts = pts.trim_end(),
    )
}

/// Distance from each query point to its nearest reference point, by exhaustive search.
pub fn nearest_distances_brute(query: &[Vec3], reference: &[Vec3]) -> Vec<f64> {
    query
        .iter()
        .map(|p| {
            let mut best = f64::INFINITY;
            for q in reference {
                let d = (p - q).norm();
                if d < best {
                    best = d;
                }
            }
            best
        })
        .collect()
}

/// Uniform grid over the reference points for exact nearest-neighbour queries.
pub struct VertexGrid<'a> {
    points: &'a [Vec3],
    origin: Vec3,
    cell: f64,
    dims: [i64; 3],
    /// Point indices sorted by cell; `starts[c]..starts[c + 1]` belong to cell `c`.
    order: Vec<u32>,
    starts: Vec<u32>,
}

impl<'a> VertexGrid<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if points.is_empty() {
            lo = Vec3::zeros();
            hi = Vec3::zeros();
        }
        let extent = hi - lo;
        let per_axis = (points.len() as f64).cbrt().ceil().max(1.0);
        let mut cell = extent.max() / per_axis;
        if !(cell > 0.0) {
            cell = 1.0;
        }
        let dims = [0, 1, 2].map(|a| ((extent[a] / cell).floor() as i64 + 1).max(1));
        let mut grid = Self {
            points,
            origin: lo,
            cell,
            dims,
            order: Vec::new(),
            starts: Vec::new(),
        };
        let n_cells = (dims[0] * dims[1] * dims[2]) as usize;
        let cell_of: Vec<usize> = points
            .iter()
            .map(|p| {
                let c = grid.cell_coords(p);
                grid.linear(c.map(|v| v.clamp(0, i64::MAX)))
            })
            .collect();
        let mut counts = vec![0u32; n_cells + 1];
        for &c in &cell_of {
            counts[c + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0u32; points.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            order[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid.order = order;
        grid.starts = counts;
        grid
    }

    fn cell_coords(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|a| {
            let c = ((p[a] - self.origin[a]) / self.cell).floor();
            let c = if c.is_finite() { c as i64 } else { 0 };
            c.min(self.dims[a] - 1).max(i64::MIN / 4)
        })
    }

    fn linear(&self, c: [i64; 3]) -> usize {
        ((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]) as usize
    }

    fn scan_cell(&self, c: [i64; 3], p: &Vec3, best: &mut f64) {
        if (0..3).any(|a| c[a] < 0 || c[a] >= self.dims[a]) {
            return;
        }
        let l = self.linear(c);
        for &i in &self.order[self.starts[l] as usize..self.starts[l + 1] as usize] {
            let d = (p - self.points[i as usize]).norm();
            if d < *best {
                *best = d;
            }
        }
    }

    /// Exact nearest distance; equal bit-for-bit to the exhaustive search.
    pub fn nearest_distance(&self, p: &Vec3) -> f64 {
        if self.points.is_empty() {
            return f64::INFINITY;
        }
        // Unclamped cell of p so that ring distances give valid lower bounds.
        let pc: [i64; 3] = [0, 1, 2].map(|a| ((p[a] - self.origin[a]) / self.cell).floor() as i64);
        let gap = |a: usize| {
            if pc[a] < 0 {
                -pc[a]
            } else if pc[a] >= self.dims[a] {
                pc[a] - self.dims[a] + 1
            } else {
                0
            }
        };
        let k0 = (0..3).map(gap).max().unwrap_or(0);
        let k_max = (0..3)
            .map(|a| (pc[a]).abs().max((pc[a] - self.dims[a] + 1).abs()))
            .max()
            .unwrap_or(0);
        let mut best = f64::INFINITY;
        let mut k = k0;
        loop {
            self.scan_ring(pc, k, p, &mut best);
            // Every cell at Chebyshev distance > k lies at least k cells away from p.
            if best < k as f64 * self.cell || k >= k_max {
                break;
            }
            k += 1;
        }
        best
    }

    fn scan_ring(&self, pc: [i64; 3], k: i64, p: &Vec3, best: &mut f64) {
        let lo = |a: usize| (pc[a] - k).max(0);
        let hi = |a: usize| (pc[a] + k).min(self.dims[a] - 1);
        for z in lo(2)..=hi(2) {
            for y in lo(1)..=hi(1) {
                let on_shell_yz = (z - pc[2]).abs() == k || (y - pc[1]).abs() == k;
                if on_shell_yz {
                    for x in lo(0)..=hi(0) {
                        self.scan_cell([x, y, z], p, best);
                    }
                } else {
                    for x in [pc[0] - k, pc[0] + k] {
                        self.scan_cell([x, y, z], p, best);
                        if k == 0 {
                            break;
                        }
                    }
                }
            }
        }
    }
}

pub fn nearest_distances(query: &[Vec3], reference: &[Vec3]) -> Vec<f64> {
    let grid = VertexGrid::new(reference);
    query.iter().map(|p| grid.nearest_distance(p)).collect()
}

/// NoW-style error: each predicted vertex to its nearest ground-truth vertex.
pub fn mesh_error(predicted: &Mesh, ground_truth: &Mesh, alignment: Alignment) -> Result<MeshErrorStats> {
    if predicted.vertices.is_empty() || ground_truth.vertices.is_empty() {
        return Err(Error::InvalidInput("mesh_error needs non-empty meshes".into()));
    }
    let query: Vec<Vec3> = match alignment {
        Alignment::None => predicted.vertices.clone(),
        Alignment::Rigid => {
            let (Some(src), Some(dst)) = (predicted.landmark_positions(), ground_truth.landmark_positions()) else {
                return Err(Error::InvalidInput(
                    "rigid alignment requested but a mesh has no landmark ids".into(),
                ));
            };
            let t = umeyama(&src, &dst)
                .ok_or_else(|| Error::InvalidInput("degenerate landmark configuration for alignment".into()))?;
            predicted.vertices.iter().map(|v| t.apply(v)).collect()
        }
    };
    Ok(MeshErrorStats::from_distances(nearest_distances(&query, &ground_truth.vertices)))
}

/// Gap-ratio bands for classifying a mesh's eyes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeThresholds {
    /// Ratio below this is closed.
    pub closed_below: f64,
    /// Ratio above this is open.
    pub open_above: f64,
}

impl Default for EyeThresholds {
    fn default() -> Self {
        Self {
            closed_below: 0.08,
            open_above: 0.18,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshEyeState {
    Open,
    Semi,
    Closed,
}

impl MeshEyeState {
    pub fn classify(ratio: f64, t: &EyeThresholds) -> Self {
        if ratio < t.closed_below {
            MeshEyeState::Closed
        } else if ratio > t.open_above {
            MeshEyeState::Open
        } else {
            MeshEyeState::Semi
        }
    }

    pub fn binary(self) -> Option<EyeState> {
        match self {
            MeshEyeState::Open => Some(EyeState::Open),
            MeshEyeState::Closed => Some(EyeState::Closed),
            MeshEyeState::Semi => None,
        }
    }
}

/// Mean vertical lid gap over the vertical eyelid pairs divided by the 3D corner distance,
/// in the mesh's own frame.
pub fn gap_ratio(mesh: &Mesh, eye: Eye) -> Result<f64> {
    let ids = mesh
        .landmark_ids
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("mesh has no landmark ids".into()))?;
    let v = |i: usize| mesh.vertices[ids[i] as usize];
    let pairing = EyelidPairing::from_mode(PairingMode::IbugVertical);
    let pairs = pairing.pairs(eye);
    let gap = pairs.iter().map(|&(u, l)| (v(u).y - v(l).y).abs()).sum::<f64>() / pairs.len() as f64;
    let (a, b) = eye.corners();
    let width = (v(a) - v(b)).norm();
    if !(width > 0.0) {
        return Err(Error::InvalidInput("eye corners coincide".into()));
    }
    Ok(gap / width)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshEyes {
    pub right_ratio: f64,
    pub left_ratio: f64,
    pub right: MeshEyeState,
    pub left: MeshEyeState,
}

impl MeshEyes {
    /// Face-level binary state: both eyes must agree and neither may be semi.
    pub fn face_state(&self) -> Option<EyeState> {
        match (self.right.binary(), self.left.binary()) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ => None,
        }
    }
}

pub fn eye_state_of_mesh(mesh: &Mesh, thresholds: &EyeThresholds) -> Result<MeshEyes> {
    let right_ratio = gap_ratio(mesh, Eye::Right)?;
    let left_ratio = gap_ratio(mesh, Eye::Left)?;
    Ok(MeshEyes {
        right_ratio,
        left_ratio,
        right: MeshEyeState::classify(right_ratio, thresholds),
        left: MeshEyeState::classify(left_ratio, thresholds),
    })
}

/// One prediction against its label. `predicted = None` is an indeterminate (semi) state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeOutcome {
    pub predicted: Option<EyeState>,
    pub truth: EyeState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeStateScores {
    pub total: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio0(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Accuracy, precision, recall and F1 with open as positive. An indeterminate
/// prediction is wrong: it counts as a false negative against an open label and
/// as a false positive against a closed one.
pub fn score_eye_states(outcomes: &[EyeOutcome]) -> Result<EyeStateScores> {
    if outcomes.is_empty() {
        return Err(Error::InvalidInput("no eye-state outcomes to score".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for o in outcomes {
        match (o.truth, o.predicted) {
            (EyeState::Open, Some(EyeState::Open)) => tp += 1,
            (EyeState::Open, _) => fn_ += 1,
            (EyeState::Closed, Some(EyeState::Closed)) => tn += 1,
            (EyeState::Closed, _) => fp += 1,
        }
    }
    let precision = ratio0(tp, tp + fp);
    let recall = ratio0(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EyeStateScores {
        total: outcomes.len(),
        tp,
        fp,
        fn_,
        tn,
        accuracy: (tp + tn) as f64 / outcomes.len() as f64,
        precision,
        recall,
        f1,
    })
}

//! Fitting objectives: local dynamic loss, photometric and landmark terms,
//! perceptual cosine distance and their weighted total.
//!
//! Landmark coordinates are pixels. LDL works on gaps normalized by the observed
//! region width and is therefore unitless.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::elam::{call_external, EyelidPairing, ExternalFailure, ExternalTarget};
use crate::error::{Error, Result};
use crate::image_formation::{ImageRgb, RenderOutput};
use crate::landmarks::{ibug, Eye, LandmarkSet, Vec2, LANDMARK_COUNT};

/// Region widths below this (px) make a pair's contribution 0.
pub const MIN_REGION_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    RightEye,
    LeftEye,
    Mouth,
}

impl Region {
    /// Observed width used to normalize gaps in this region.
    pub fn scale(self, observed: &LandmarkSet) -> f64 {
        match self {
            Region::RightEye => observed.eye_width(Eye::Right),
            Region::LeftEye => observed.eye_width(Eye::Left),
            Region::Mouth => observed.mouth_width(),
        }
    }

    pub fn is_eye(self) -> bool {
        !matches!(self, Region::Mouth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub upper: usize,
    pub lower: usize,
    pub region: Region,
    /// 0 or 1.
    pub weight: f64,
}

/// Lip pairs: outer (51,59), (52,58), (53,57) and inner (62,68), (63,67), (64,66).
pub const LIP_PAIRS: [(usize, usize); 6] = [
    (ibug(51), ibug(59)),
    (ibug(52), ibug(58)),
    (ibug(53), ibug(57)),
    (ibug(62), ibug(68)),
    (ibug(63), ibug(67)),
    (ibug(64), ibug(66)),
];

/// Keypoint pairs `k` with their 0/1 weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pairs: Vec<Pair>,
}

impl PairSet {
    pub fn new(pairs: Vec<Pair>) -> Result<Self> {
        for p in &pairs {
            if p.upper >= LANDMARK_COUNT || p.lower >= LANDMARK_COUNT || p.upper == p.lower {
                return Err(Error::InvalidInput(format!(
                    "invalid landmark pair ({}, {})",
                    p.upper, p.lower
                )));
            }
            if p.weight != 0.0 && p.weight != 1.0 {
                return Err(Error::InvalidInput(format!("pair weight {} is not 0 or 1", p.weight)));
            }
        }
        Ok(Self { pairs })
    }

    /// Eyelid pairs from `pairing` followed by the lip pairs; weights select regions.
    pub fn standard(pairing: &EyelidPairing, eyes: bool, mouth: bool) -> Self {
        let w = |on: bool| if on { 1.0 } else { 0.0 };
        let mut pairs: Vec<Pair> = pairing
            .all()
            .map(|(eye, (u, l))| Pair {
                upper: u,
                lower: l,
                region: match eye {
                    Eye::Right => Region::RightEye,
                    Eye::Left => Region::LeftEye,
                },
                weight: w(eyes),
            })
            .collect();
        pairs.extend(LIP_PAIRS.iter().map(|&(u, l)| Pair {
            upper: u,
            lower: l,
            region: Region::Mouth,
            weight: w(mouth),
        }));
        Self { pairs }
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn is_inactive(&self) -> bool {
        self.pairs.iter().all(|p| p.weight == 0.0)
    }
}

/// LDL value with the indices of pairs skipped for a degenerate region.
#[derive(Debug, Clone, PartialEq)]
pub struct LdlValue {
    pub loss: f64,
    pub degenerate_pairs: Vec<usize>,
}

/// `D = |y_upper - y_lower| / region_scale`.
pub fn relative_gap(points: &[Vec2], pair: &Pair, scale: f64) -> f64 {
    (points[pair.upper].y - points[pair.lower].y).abs() / scale
}

/// `sum_k w_k |D(l_k) - D(L_k)|` with region scales taken from the observed set.
pub fn ldl(predicted: &[Vec2], observed: &LandmarkSet, pairs: &PairSet) -> LdlValue {
    let mut loss = 0.0;
    let mut degenerate_pairs = Vec::new();
    for (k, pair) in pairs.pairs.iter().enumerate() {
        if pair.weight == 0.0 {
            continue;
        }
        let scale = pair.region.scale(observed);
        if !(scale >= MIN_REGION_SCALE) {
            degenerate_pairs.push(k);
            continue;
        }
        let d_pred = relative_gap(predicted, pair, scale);
        let d_obs = relative_gap(&observed.points, pair, scale);
        loss += pair.weight * (d_pred - d_obs).abs();
    }
    LdlValue {
        loss,
        degenerate_pairs,
    }
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of [`ldl`] with respect to the predicted points (subgradient 0 at kinks).
pub fn ldl_gradient(predicted: &[Vec2], observed: &LandmarkSet, pairs: &PairSet) -> Vec<Vec2> {
    let mut grad = vec![Vec2::zeros(); predicted.len()];
    for pair in &pairs.pairs {
        if pair.weight == 0.0 {
            continue;
        }
        let scale = pair.region.scale(observed);
        if !(scale >= MIN_REGION_SCALE) {
            continue;
        }
        let dy = predicted[pair.upper].y - predicted[pair.lower].y;
        let diff = dy.abs() / scale - relative_gap(&observed.points, pair, scale);
        let g = pair.weight * sign0(diff) * sign0(dy) / scale;
        grad[pair.upper].y += g;
        grad[pair.lower].y -= g;
    }
    grad
}

/// `sum_n w_n (|dx_n| + |dy_n|) / 68`, skipping observed points marked invalid.
pub fn landmark_loss(predicted: &[Vec2], observed: &LandmarkSet) -> f64 {
    let mut sum = 0.0;
    for n in 0..LANDMARK_COUNT {
        if !observed.valid[n] {
            continue;
        }
        let d = predicted[n] - observed.points[n];
        sum += observed.weights[n] * (d.x.abs() + d.y.abs());
    }
    sum / LANDMARK_COUNT as f64
}

pub fn landmark_gradient(predicted: &[Vec2], observed: &LandmarkSet) -> Vec<Vec2> {
    (0..LANDMARK_COUNT)
        .map(|n| {
            if !observed.valid[n] {
                return Vec2::zeros();
            }
            let d = predicted[n] - observed.points[n];
            Vec2::new(sign0(d.x), sign0(d.y)) * (observed.weights[n] / LANDMARK_COUNT as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotoValue {
    pub loss: f64,
    /// The attention mass over the face region was zero.
    pub empty_mask: bool,
}

/// `sum_{i in M} A_i |I_i - I'_i|_2 / sum_{i in M} A_i`.
pub fn photo_loss(image: &ImageRgb, render: &RenderOutput) -> Result<PhotoValue> {
    if !image.same_size(&render.color) {
        return Err(Error::DimensionMismatch {
            what: "image pixels",
            expected: render.color.pixels.len(),
            actual: image.pixels.len(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..image.pixels.len() {
        if !render.mask[i] {
            continue;
        }
        let a = render.attention[i];
        num += a * (image.pixels[i] - render.color.pixels[i]).norm();
        den += a;
    }
    if den <= 0.0 {
        return Ok(PhotoValue {
            loss: 0.0,
            empty_mask: true,
        });
    }
    Ok(PhotoValue {
        loss: num / den,
        empty_mask: false,
    })
}

/// Maps an image to a feature vector of fixed dimension. One instance per worker.
pub trait EmbeddingProvider: Send {
    fn name(&self) -> String;
    fn dimension(&self) -> usize;
    /// `region` restricts the statistics to a pixel mask when the provider supports it.
    fn embed(&mut self, image: &ImageRgb, region: Option<&[bool]>) -> Result<Vec<f64>>;
}

/// Grayscale mean and standard deviation over a 4x4 grid spanning the bounding
/// box of the region (or the whole image).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PatchStats;

const GRID: usize = 4;

impl EmbeddingProvider for PatchStats {
    fn name(&self) -> String {
        "patch-stats".into()
    }

    fn dimension(&self) -> usize {
        2 * GRID * GRID
    }

    fn embed(&mut self, image: &ImageRgb, region: Option<&[bool]>) -> Result<Vec<f64>> {
        let (w, h) = (image.width as usize, image.height as usize);
        if let Some(r) = region {
            if r.len() != w * h {
                return Err(Error::DimensionMismatch {
                    what: "embedding region",
                    expected: w * h,
                    actual: r.len(),
                });
            }
        }
        let inside = |i: usize| region.is_none_or(|r| r[i]);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..h {
            for x in 0..w {
                if inside(y * w + x) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        let mut out = vec![0.0; self.dimension()];
        if x0 == usize::MAX {
            return Ok(out);
        }
        let lum = image.luminance();
        let (bw, bh) = ((x1 - x0) as f64, (y1 - y0) as f64);
        let mut n = [0.0f64; GRID * GRID];
        let mut s = [0.0f64; GRID * GRID];
        let mut s2 = [0.0f64; GRID * GRID];
        for y in y0..y1 {
            for x in x0..x1 {
                let i = y * w + x;
                if !inside(i) {
                    continue;
                }
                let cx = (((x - x0) as f64 / bw) * GRID as f64) as usize;
                let cy = (((y - y0) as f64 / bh) * GRID as f64) as usize;
                let c = cy.min(GRID - 1) * GRID + cx.min(GRID - 1);
                n[c] += 1.0;
                s[c] += lum[i];
                s2[c] += lum[i] * lum[i];
            }
        }
        for c in 0..GRID * GRID {
            if n[c] > 0.0 {
                let mean = s[c] / n[c];
                out[2 * c] = mean;
                out[2 * c + 1] = (s2[c] / n[c] - mean * mean).max(0.0).sqrt();
            }
        }
        Ok(out)
    }
}

/// Out-of-process embedding: PNG in, whitespace-separated floats out.
#[derive(Debug, Clone)]
pub struct ExternalEmbedding {
    pub target: ExternalTarget,
    pub timeout: Duration,
    pub dimension: usize,
}

impl EmbeddingProvider for ExternalEmbedding {
    fn name(&self) -> String {
        self.target.describe()
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&mut self, image: &ImageRgb, _region: Option<&[bool]>) -> Result<Vec<f64>> {
        let err = |detail: String| Error::Embedding {
            provider: self.name(),
            detail,
        };
        let png = image.encode_png()?;
        let text = call_external(&self.target, &png, self.timeout).map_err(|f| match f {
            ExternalFailure::Unavailable(d) | ExternalFailure::Malformed(d) => err(d),
        })?;
        let v: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("not a number: `{t}`"))))
            .collect::<Result<_>>()?;
        if v.len() != self.dimension {
            return Err(err(format!("expected {} values, got {}", self.dimension, v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        Ok(v)
    }
}

/// `1 - <a, b> / (|a| |b|)`.
pub fn cosine_distance(a: &[f64], b: &[f64], provider: &str) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Embedding {
            provider: provider.into(),
            detail: format!("embedding lengths differ ({} vs {})", a.len(), b.len()),
        });
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Embedding {
            provider: provider.into(),
            detail: "zero-norm embedding".into(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

/// Perceptual distance between the input and the rendered image.
pub fn perceptual_loss(
    image: &ImageRgb,
    rendered: &ImageRgb,
    region: Option<&[bool]>,
    provider: &mut dyn EmbeddingProvider,
) -> Result<f64> {
    let a = provider.embed(image, region)?;
    let b = provider.embed(rendered, region)?;
    cosine_distance(&a, &b, &provider.name())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_dyn: f64,
    pub w_img: f64,
    pub w_per: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_dyn: 0.5,
            w_img: 1.8,
            w_per: 0.17,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ldl: f64,
    pub photo: f64,
    pub landmark: f64,
    pub perceptual: f64,
    pub total: f64,
    pub weights: LossWeights,
}

impl LossBreakdown {
    /// `total = w_dyn ldl + w_img (photo + landmark) + w_per perceptual`.
    pub fn combine(ldl: f64, photo: f64, landmark: f64, perceptual: f64, weights: LossWeights) -> Result<Self> {
        for (term, v) in [
            ("ldl", ldl),
            ("photo", photo),
            ("landmark", landmark),
            ("perceptual", perceptual),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite { term });
            }
        }
        Ok(Self {
            ldl,
            photo,
            landmark,
            perceptual,
            total: weights.w_dyn * ldl + weights.w_img * (photo + landmark) + weights.w_per * perceptual,
            weights,
        })
    }
}

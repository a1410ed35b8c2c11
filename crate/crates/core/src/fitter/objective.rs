//! The fitting objective over the flat parameter vector and its gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::rotation_jacobians;
use crate::image_formation::{render, Camera, ImageRgb, Intrinsics, NEAR_PLANE};
use crate::landmarks::{LandmarkSet, Vec2, LANDMARK_COUNT};
use crate::losses::{
    landmark_gradient, landmark_loss, ldl, ldl_gradient, perceptual_loss, photo_loss, EmbeddingProvider,
    LossBreakdown, LossWeights, PairSet,
};
use crate::morphable_model::{FaceParams, MorphableBasis, ParamLayout, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Chain rule for landmark, LDL and regularizer terms; central differences for image terms.
    #[default]
    Analytic,
    /// Central differences of the whole objective.
    FiniteDifference,
}

/// L2 weights on alpha, beta, delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            beta: 1e-4,
            delta: 1e-4,
        }
    }
}

/// Loss value at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub breakdown: LossBreakdown,
    pub regularizer: f64,
    /// `breakdown.total + regularizer`, the quantity being minimized.
    pub objective: f64,
    /// Projected landmark positions (px).
    pub projected: Vec<Vec2>,
    pub degenerate_ldl_pairs: usize,
}

pub struct Objective<'a> {
    pub basis: &'a MorphableBasis,
    pub observed: &'a LandmarkSet,
    pub intrinsics: Intrinsics,
    pub pairs: PairSet,
    pub weights: LossWeights,
    pub reg: Regularization,
    pub image: Option<&'a ImageRgb>,
    pub use_photo: bool,
    pub provider: Option<&'a mut dyn EmbeddingProvider>,
    pub mode: GradientMode,
    pub fd_step: f64,
    layout: ParamLayout,
}

/// Landmark vertices in model space plus their camera-space images.
struct LandmarkGeometry {
    model: Vec<Vec3>,
    camera: Vec<Vec3>,
    projected: Vec<Vec2>,
}

impl<'a> Objective<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        basis: &'a MorphableBasis,
        observed: &'a LandmarkSet,
        intrinsics: Intrinsics,
        pairs: PairSet,
        weights: LossWeights,
        reg: Regularization,
    ) -> Self {
        Self {
            basis,
            observed,
            intrinsics,
            pairs,
            weights,
            reg,
            image: None,
            use_photo: false,
            provider: None,
            mode: GradientMode::Analytic,
            fd_step: 1e-4,
            layout: ParamLayout::new(basis.dims()),
        }
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    fn uses_image_terms(&self) -> bool {
        self.image.is_some() && (self.use_photo || self.provider.is_some())
    }

    fn geometry(&self, params: &FaceParams) -> Result<LandmarkGeometry> {
        let camera = Camera::new(self.intrinsics, &params.pose);
        let mut model = Vec::with_capacity(LANDMARK_COUNT);
        let mut cam = Vec::with_capacity(LANDMARK_COUNT);
        let mut projected = Vec::with_capacity(LANDMARK_COUNT);
        for &id in self.basis.landmark_vertex_ids() {
            let v = self.basis.vertex_position(id as usize, &params.alpha, &params.beta);
            let c = camera.to_camera(&v);
            if c.z <= NEAR_PLANE {
                return Err(Error::FaceBehindCamera);
            }
            projected.push(camera.project_camera_point(&c));
            model.push(v);
            cam.push(c);
        }
        Ok(LandmarkGeometry {
            model,
            camera: cam,
            projected,
        })
    }

    fn regularizer(&self, p: &FaceParams) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        self.reg.alpha * sq(&p.alpha) + self.reg.beta * sq(&p.beta) + self.reg.delta * sq(&p.delta)
    }

    /// Photometric and perceptual values at `params`.
    fn image_terms(&mut self, params: &FaceParams) -> Result<(f64, f64)> {
        let Some(image) = self.image else {
            return Ok((0.0, 0.0));
        };
        if !self.use_photo && self.provider.is_none() {
            return Ok((0.0, 0.0));
        }
        let rendered = render(self.basis, params, self.intrinsics)?;
        let photo = if self.use_photo {
            photo_loss(image, &rendered.output)?.loss
        } else {
            0.0
        };
        let perceptual = match self.provider.as_deref_mut() {
            Some(p) => perceptual_loss(image, &rendered.output.color, Some(&rendered.output.mask), p)?,
            None => 0.0,
        };
        Ok((photo, perceptual))
    }

    pub fn evaluate(&mut self, theta: &[f64]) -> Result<Evaluation> {
        let params = FaceParams::from_vector(self.basis.dims(), theta)?;
        self.evaluate_params(&params)
    }

    pub fn evaluate_params(&mut self, params: &FaceParams) -> Result<Evaluation> {
        let geo = self.geometry(params)?;
        let lm = landmark_loss(&geo.projected, self.observed);
        let d = ldl(&geo.projected, self.observed, &self.pairs);
        let (photo, perceptual) = self.image_terms(params)?;
        let breakdown = LossBreakdown::combine(d.loss, photo, lm, perceptual, self.weights)?;
        let regularizer = self.regularizer(params);
        if !regularizer.is_finite() {
            return Err(Error::NonFinite { term: "regularizer" });
        }
        Ok(Evaluation {
            objective: breakdown.total + regularizer,
            breakdown,
            regularizer,
            projected: geo.projected,
            degenerate_ldl_pairs: d.degenerate_pairs.len(),
        })
    }

    /// Objective value and gradient at `theta`.
    pub fn gradient(&mut self, theta: &[f64]) -> Result<(Evaluation, Vec<f64>)> {
        let eval = self.evaluate(theta)?;
        let grad = match self.mode {
            GradientMode::FiniteDifference => {
                let h = self.fd_step;
                self.central_difference(theta, h, |obj, t| Ok(obj.evaluate(t)?.objective))?
            }
            GradientMode::Analytic => {
                let params = FaceParams::from_vector(self.basis.dims(), theta)?;
                let mut g = self.analytic_gradient(&params)?;
                if self.uses_image_terms() {
                    let (w_img, w_per) = (self.weights.w_img, self.weights.w_per);
                    let h = self.fd_step;
                    let dims = self.basis.dims();
                    let fd = self.central_difference(theta, h, |obj, t| {
                        let p = FaceParams::from_vector(dims, t)?;
                        let (photo, per) = obj.image_terms(&p)?;
                        Ok(w_img * photo + w_per * per)
                    })?;
                    for (a, b) in g.iter_mut().zip(fd) {
                        *a += b;
                    }
                }
                g
            }
        };
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            let term = self.layout.term_of(i);
            return Err(Error::NonFinite { term });
        }
        Ok((eval, grad))
    }

    fn central_difference(
        &mut self,
        theta: &[f64],
        h: f64,
        mut f: impl FnMut(&mut Self, &[f64]) -> Result<f64>,
    ) -> Result<Vec<f64>> {
        let mut t = theta.to_vec();
        let mut g = vec![0.0; theta.len()];
        for i in 0..theta.len() {
            let x = t[i];
            t[i] = x + h;
            let fp = f(self, &t)?;
            t[i] = x - h;
            let fm = f(self, &t)?;
            t[i] = x;
            g[i] = (fp - fm) / (2.0 * h);
        }
        Ok(g)
    }

    /// Gradient of `w_img * landmark + w_dyn * ldl + regularizer`.
    pub fn analytic_gradient(&self, params: &FaceParams) -> Result<Vec<f64>> {
        let geo = self.geometry(params)?;
        let layout = self.layout;
        let mut g = vec![0.0; layout.len()];

        let g_lm = landmark_gradient(&geo.projected, self.observed);
        let g_ldl = ldl_gradient(&geo.projected, self.observed, &self.pairs);
        let f = self.intrinsics.focal;
        let r = crate::geometry::rotation_matrix(&params.pose.rotation);
        let dr = rotation_jacobians(&params.pose.rotation);
        let (ra, rb, rr, rt) = (layout.alpha(), layout.beta(), layout.rotation(), layout.translation());

        for n in 0..LANDMARK_COUNT {
            let gp = g_lm[n] * self.weights.w_img + g_ldl[n] * self.weights.w_dyn;
            if gp.x == 0.0 && gp.y == 0.0 {
                continue;
            }
            let c = geo.camera[n];
            let inv_z = 1.0 / c.z;
            // d(loss)/d(camera point)
            let dc = Vec3::new(
                gp.x * f * inv_z,
                gp.y * f * inv_z,
                -(gp.x * c.x + gp.y * c.y) * f * inv_z * inv_z,
            );
            for i in 0..3 {
                g[rt.start + i] += dc[i];
                g[rr.start + i] += dc.dot(&(dr[i] * geo.model[n]));
            }
            let dv = r.transpose() * dc;
            let id = self.basis.landmark_vertex_ids()[n] as usize;
            for axis in 0..3 {
                if dv[axis] == 0.0 {
                    continue;
                }
                let row = 3 * id + axis;
                for (k, b) in self.basis.shape_row(row).iter().enumerate() {
                    g[ra.start + k] += dv[axis] * b;
                }
                for (k, b) in self.basis.expression_row(row).iter().enumerate() {
                    g[rb.start + k] += dv[axis] * b;
                }
            }
        }
        for (k, a) in params.alpha.iter().enumerate() {
            g[ra.start + k] += 2.0 * self.reg.alpha * a;
        }
        for (k, b) in params.beta.iter().enumerate() {
            g[rb.start + k] += 2.0 * self.reg.beta * b;
        }
        let rd = layout.delta();
        for (k, d) in params.delta.iter().enumerate() {
            g[rd.start + k] += 2.0 * self.reg.delta * d;
        }
        Ok(g)
    }
}

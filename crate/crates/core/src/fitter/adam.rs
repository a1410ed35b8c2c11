//! Adam with per-parameter step multipliers and exponential step decay.

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One update of `theta` with base step `lr`, scaled per coordinate by `scale`.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64, scale: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= lr * scale[i] * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Step size at iteration `t` of `n`, decaying geometrically from `lr` to `lr * final_fraction`.
pub fn decayed_step(lr: f64, final_fraction: f64, t: usize, n: usize) -> f64 {
    if n <= 1 {
        return lr;
    }
    lr * final_fraction.powf(t as f64 / (n - 1) as f64)
}

use serde::{Deserialize, Serialize};

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Panics if the lengths differ from the optimizer state.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter length");
        assert_eq!(grads.len(), self.m.len(), "gradient length");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::new(2, 0.1, 0.9, 0.999, 1e-8);
        let mut p = [1.0, -2.0];
        adam.step(&mut p, &[0.5, 0.5]);
        let before = p;
        let m_before = adam.moments().0.to_vec();
        adam.step(&mut p, &[0.0, 0.0]);
        // m decays, so the parameters still move a little; with zero moments
        // they would not move at all.
        assert!(adam.moments().0[0].abs() < m_before[0].abs());
        let mut fresh = Adam::new(2, 0.1, 0.9, 0.999, 1e-8);
        let mut q = before;
        fresh.step(&mut q, &[0.0, 0.0]);
        assert_eq!(q, before);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let mut adam = Adam::new(1, 0.01, 0.9, 0.999, 1e-8);
        let mut p = [0.0];
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = p[0];
            adam.step(&mut p, &[3.0]);
            last = before - p[0];
        }
        assert!((last - 0.01).abs() < 1e-8);
    }

    #[test]
    fn quadratic_bowl() {
        let mut adam = Adam::new(2, 0.01, 0.9, 0.999, 1e-8);
        let mut p = [3.0, -2.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0), 4.0 * (p[1] + 0.5)];
            adam.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-4 && (p[1] + 0.5).abs() < 1e-4, "{p:?}");
    }
}

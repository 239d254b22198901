use serde::{Deserialize, Serialize};

/// Adam with bias correction over one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without a new best validation loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub patience: usize,
    pub factor: f64,
    pub best: f64,
    pub wait: usize,
}

impl Default for Plateau {
    fn default() -> Self {
        Self::new(20, 0.8)
    }
}

impl Plateau {
    pub fn new(patience: usize, factor: f64) -> Self {
        Self {
            patience,
            factor,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    /// Records one epoch; returns the (possibly reduced) learning rate.
    pub fn observe(&mut self, val_loss: f64, lr: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.wait = 0;
            return lr;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            self.wait = 0;
            lr * self.factor
        } else {
            lr
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut a = Adam::new(3, 1e-3);
        a.m = vec![1.0, -1.0, 0.5];
        a.v = vec![1.0, 1.0, 1.0];
        let mut p = vec![0.1, 0.2, 0.3];
        let before = p.clone();
        let m0 = a.m.clone();
        a.t = 10;
        // Zero gradients still apply the momentum term; with zero moments
        // nothing moves at all.
        let mut fresh = Adam::new(3, 1e-3);
        fresh.step(&mut p, &[0.0; 3]);
        assert_eq!(p, before);
        a.step(&mut p, &[0.0; 3]);
        for (m, m0) in a.m.iter().zip(&m0) {
            assert_eq!(*m, 0.9 * m0);
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut a = Adam::new(2, 0.01);
        let mut p = vec![1.0, 1.0];
        a.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] - 1.01).abs() < 1e-9);
    }

    #[test]
    fn quadratic_descends() {
        // L = (x − a)², gradient 2(x − a).
        let a = 1.5;
        let mut opt = Adam::new(1, 0.05);
        let mut x = vec![-2.0];
        for _ in 0..2000 {
            let g = 2.0 * (x[0] - a);
            opt.step(&mut x, &[g]);
        }
        assert!((x[0] - a).abs() < 1e-3);
    }

    #[test]
    fn plateau_schedule() {
        let mut p = Plateau::default();
        let mut lr = 1e-4;
        lr = p.observe(1.0, lr);
        for _ in 0..19 {
            lr = p.observe(1.0, lr);
        }
        assert_eq!(lr, 1e-4);
        lr = p.observe(1.0, lr);
        assert!((lr - 8e-5).abs() < 1e-18);

        let mut p = Plateau::default();
        let mut lr = 1e-4;
        for i in 0..100 {
            lr = p.observe(1.0 / (i + 1) as f64, lr);
        }
        assert_eq!(lr, 1e-4);
    }
}

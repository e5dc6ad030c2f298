//! Adaptive-moment optimizer over the policy parameters.

use crate::policy::net::PolicyNet;
use crate::policy::real::Real;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    m: PolicyNet<T>,
    v: PolicyNet<T>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> Adam<T> {
    pub fn new(net: &PolicyNet<T>) -> Self {
        Self {
            m: net.zeros_like(),
            v: net.zeros_like(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update with mean-batch gradients.
    pub fn update(&mut self, net: &mut PolicyNet<T>, grads: &PolicyNet<T>, lr: f64) {
        self.step += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::ONE;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let scale = T::from_f64(lr * bc2.sqrt() / bc1);
        let eps = T::from_f64(self.eps * bc2.sqrt());
        let mut params = net.tensors_mut();
        let mut ms = self.m.tensors_mut();
        let mut vs = self.v.tensors_mut();
        let gs = grads.tensors();
        for i in 0..params.len() {
            let p = &mut params[i].1;
            let m = &mut ms[i].1;
            let v = &mut vs[i].1;
            let g = gs[i].1;
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                p[j] -= scale * m[j] / (v[j].sqrt() + eps);
            }
        }
    }
}

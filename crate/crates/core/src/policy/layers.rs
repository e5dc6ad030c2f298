//! Hand-rolled layers with explicit backward passes.
//!
//! Activations are stored feature-major: a block of `n` vectors of dimension
//! `d` lives in a flat slice of length `d * n`, row `i` holding feature `i`
//! of every vector. Inner loops then run over contiguous memory.

use rand::Rng;

use crate::policy::real::Real;

/// Leaky rectifier slope used throughout the network.
pub const LRELU_SLOPE: f64 = 0.2;

pub fn lrelu<T: Real>(x: T) -> T {
    if x > T::ZERO {
        x
    } else {
        x * T::from_f64(LRELU_SLOPE)
    }
}

pub fn lrelu_grad<T: Real>(x: T) -> T {
    if x > T::ZERO {
        T::ONE
    } else {
        T::from_f64(LRELU_SLOPE)
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    T::ONE / (T::ONE + (-x).exp())
}

/// Dot product with eight independent accumulators so the reduction
/// vectorizes without reassociation flags.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::ZERO; 8];
    let chunks = a.len() / 8;
    let (a8, a_tail) = a.split_at(chunks * 8);
    let (b8, b_tail) = b.split_at(chunks * 8);
    for (ca, cb) in a8.chunks_exact(8).zip(b8.chunks_exact(8)) {
        for k in 0..8 {
            acc[k] += ca[k] * cb[k];
        }
    }
    let mut tail = T::ZERO;
    for (x, y) in a_tail.iter().zip(b_tail) {
        tail += *x * *y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Dense layer, weights row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub w: Vec<T>,
    pub b: Vec<T>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<T: Real> Linear<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { w: vec![T::ZERO; in_dim * out_dim], b: vec![T::ZERO; out_dim], in_dim, out_dim }
    }

    /// Fan-in scaled uniform initialization.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (in_dim as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim);
        for w in layer.w.iter_mut() {
            *w = T::from_f64(rng.gen_range(-scale..scale));
        }
        for b in layer.b.iter_mut() {
            *b = T::from_f64(rng.gen_range(-scale..scale));
        }
        layer
    }

    /// `out[o][j] = b[o] + sum_i w[o][i] * x[i][j]` over a block of `n`
    /// vectors.
    pub fn forward_block(&self, x: &[T], n: usize, out: &mut [T]) {
        debug_assert_eq!(x.len(), self.in_dim * n);
        debug_assert_eq!(out.len(), self.out_dim * n);
        if n == 1 {
            for (o, ov) in out.iter_mut().enumerate() {
                let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                *ov = self.b[o] + dot(wrow, x);
            }
            return;
        }
        for o in 0..self.out_dim {
            let orow = &mut out[o * n..(o + 1) * n];
            orow.fill(self.b[o]);
            let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            for (i, &w) in wrow.iter().enumerate() {
                let xrow = &x[i * n..(i + 1) * n];
                for (ov, &xv) in orow.iter_mut().zip(xrow) {
                    *ov += w * xv;
                }
            }
        }
    }

    /// Backward over a block: accumulates parameter gradients and writes the
    /// input gradient.
    pub fn backward_block(
        &self,
        x: &[T],
        grad_out: &[T],
        n: usize,
        grad_w: &mut [T],
        grad_b: &mut [T],
        grad_x: &mut [T],
    ) {
        grad_x.fill(T::ZERO);
        if n == 1 {
            for o in 0..self.out_dim {
                let g = grad_out[o];
                grad_b[o] += g;
                let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                let gwrow = &mut grad_w[o * self.in_dim..(o + 1) * self.in_dim];
                for ((gw, gx), (&w, &xv)) in gwrow
                    .iter_mut()
                    .zip(grad_x.iter_mut())
                    .zip(wrow.iter().zip(x.iter()))
                {
                    *gw += g * xv;
                    *gx += w * g;
                }
            }
            return;
        }
        for o in 0..self.out_dim {
            let grow = &grad_out[o * n..(o + 1) * n];
            let mut gb = T::ZERO;
            for &g in grow {
                gb += g;
            }
            grad_b[o] += gb;
            let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let gwrow = &mut grad_w[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                let xrow = &x[i * n..(i + 1) * n];
                gwrow[i] += dot(grow, xrow);
                let w = wrow[i];
                let gxrow = &mut grad_x[i * n..(i + 1) * n];
                for (gx, &g) in gxrow.iter_mut().zip(grow) {
                    *gx += w * g;
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Causal temporal convolution, kernel 2, stride 1, left zero padding.
///
/// Activations are time-major: `x[t * in_dim + i]`. The weight vector holds
/// the `t-1` tap matrix followed by the `t` tap matrix, each row-major
/// `[out][in]`, so both forward and backward reduce to contiguous dot/axpy
/// passes over the channel axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalConv<T> {
    pub w: Vec<T>,
    pub b: Vec<T>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<T: Real> CausalConv<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { w: vec![T::ZERO; in_dim * out_dim * 2], b: vec![T::ZERO; out_dim], in_dim, out_dim }
    }

    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let scale = 1.0 / ((2 * in_dim) as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim);
        for w in layer.w.iter_mut() {
            *w = T::from_f64(rng.gen_range(-scale..scale));
        }
        for b in layer.b.iter_mut() {
            *b = T::from_f64(rng.gen_range(-scale..scale));
        }
        layer
    }

    fn tap0(&self) -> &[T] {
        &self.w[..self.in_dim * self.out_dim]
    }

    fn tap1(&self) -> &[T] {
        &self.w[self.in_dim * self.out_dim..]
    }

    /// `x` and `out` are time-major over `steps` timesteps.
    pub fn forward(&self, x: &[T], steps: usize, out: &mut [T]) {
        debug_assert_eq!(x.len(), self.in_dim * steps);
        debug_assert_eq!(out.len(), self.out_dim * steps);
        let (w0, w1) = (self.tap0(), self.tap1());
        for t in 0..steps {
            let x_cur = &x[t * self.in_dim..(t + 1) * self.in_dim];
            let orow = &mut out[t * self.out_dim..(t + 1) * self.out_dim];
            if t == 0 {
                // The t-1 tap sees the zero pad.
                for (o, ov) in orow.iter_mut().enumerate() {
                    let w1row = &w1[o * self.in_dim..(o + 1) * self.in_dim];
                    *ov = self.b[o] + dot(w1row, x_cur);
                }
            } else {
                let x_prev = &x[(t - 1) * self.in_dim..t * self.in_dim];
                for (o, ov) in orow.iter_mut().enumerate() {
                    let w0row = &w0[o * self.in_dim..(o + 1) * self.in_dim];
                    let w1row = &w1[o * self.in_dim..(o + 1) * self.in_dim];
                    *ov = self.b[o] + dot(w0row, x_prev) + dot(w1row, x_cur);
                }
            }
        }
    }

    pub fn backward(
        &self,
        x: &[T],
        grad_out: &[T],
        steps: usize,
        grad_w: &mut [T],
        grad_b: &mut [T],
        grad_x: &mut [T],
    ) {
        grad_x.fill(T::ZERO);
        let (w0, w1) = (self.tap0(), self.tap1());
        let (gw0, gw1) = grad_w.split_at_mut(self.in_dim * self.out_dim);
        for t in 0..steps {
            let grow = &grad_out[t * self.out_dim..(t + 1) * self.out_dim];
            let x_cur = &x[t * self.in_dim..(t + 1) * self.in_dim];
            for (o, &g) in grow.iter().enumerate() {
                grad_b[o] += g;
                let gw1row = &mut gw1[o * self.in_dim..(o + 1) * self.in_dim];
                for (gw, &xv) in gw1row.iter_mut().zip(x_cur) {
                    *gw += g * xv;
                }
                let w1row = &w1[o * self.in_dim..(o + 1) * self.in_dim];
                let gxrow = &mut grad_x[t * self.in_dim..(t + 1) * self.in_dim];
                for (gx, &wv) in gxrow.iter_mut().zip(w1row) {
                    *gx += g * wv;
                }
                if t > 0 {
                    let x_prev = &x[(t - 1) * self.in_dim..t * self.in_dim];
                    let gw0row = &mut gw0[o * self.in_dim..(o + 1) * self.in_dim];
                    for (gw, &xv) in gw0row.iter_mut().zip(x_prev) {
                        *gw += g * xv;
                    }
                    let w0row = &w0[o * self.in_dim..(o + 1) * self.in_dim];
                    let gxprev = &mut grad_x[(t - 1) * self.in_dim..t * self.in_dim];
                    for (gx, &wv) in gxprev.iter_mut().zip(w0row) {
                        *gx += g * wv;
                    }
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd_check_linear(n: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let layer: Linear<f64> = Linear::init(3, 2, &mut rng);
        let x: Vec<f64> = (0..3 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Loss = weighted sum of outputs.
        let r: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |layer: &Linear<f64>, x: &[f64]| {
            let mut out = vec![0.0; 2 * n];
            layer.forward_block(x, n, &mut out);
            out.iter().zip(&r).map(|(o, ri)| o * ri).sum::<f64>()
        };
        let mut gw = vec![0.0; 6];
        let mut gb = vec![0.0; 2];
        let mut gx = vec![0.0; 3 * n];
        layer.backward_block(&x, &r, n, &mut gw, &mut gb, &mut gx);

        let eps = 1e-6;
        for i in 0..6 {
            let mut lp = layer.clone();
            lp.w[i] += eps;
            let mut lm = layer.clone();
            lm.w[i] -= eps;
            let fd = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * eps);
            assert!((fd - gw[i]).abs() < 1e-8, "w[{i}]: {fd} vs {}", gw[i]);
        }
        for i in 0..3 * n {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            let fd = (loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * eps);
            assert!((fd - gx[i]).abs() < 1e-8, "x[{i}]: {fd} vs {}", gx[i]);
        }
    }

    #[test]
    fn linear_gradients_match_fd() {
        fd_check_linear(1);
        fd_check_linear(5);
    }

    #[test]
    fn conv_gradients_match_fd() {
        let steps = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer: CausalConv<f64> = CausalConv::init(3, 2, &mut rng);
        let x: Vec<f64> = (0..3 * steps).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..2 * steps).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |layer: &CausalConv<f64>, x: &[f64]| {
            let mut out = vec![0.0; 2 * steps];
            layer.forward(x, steps, &mut out);
            out.iter().zip(&r).map(|(o, ri)| o * ri).sum::<f64>()
        };
        let mut gw = vec![0.0; layer.w.len()];
        let mut gb = vec![0.0; 2];
        let mut gx = vec![0.0; 3 * steps];
        layer.backward(&x, &r, steps, &mut gw, &mut gb, &mut gx);
        let eps = 1e-6;
        for i in 0..layer.w.len() {
            let mut lp = layer.clone();
            lp.w[i] += eps;
            let mut lm = layer.clone();
            lm.w[i] -= eps;
            let fd = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * eps);
            assert!((fd - gw[i]).abs() < 1e-8);
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            let fd = (loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * eps);
            assert!((fd - gx[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn conv_is_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer: CausalConv<f64> = CausalConv::init(2, 2, &mut rng);
        let steps = 8;
        let mut x: Vec<f64> = vec![0.0; 2 * steps];
        let mut out_a = vec![0.0; 2 * steps];
        layer.forward(&x, steps, &mut out_a);
        // Changing the last timestep must not affect earlier outputs.
        x[(steps - 1) * 2] = 1.0;
        x[(steps - 1) * 2 + 1] = -1.0;
        let mut out_b = vec![0.0; 2 * steps];
        layer.forward(&x, steps, &mut out_b);
        assert_eq!(out_a[..(steps - 1) * 2], out_b[..(steps - 1) * 2]);
        assert_ne!(out_a[(steps - 1) * 2..], out_b[(steps - 1) * 2..]);
    }
}

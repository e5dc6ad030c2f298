//! The three-branch sensorimotor network.
//!
//! Feature tracks go through a shared per-point network pooled over the 40
//! points; the pooled history, the inertial history, and the reference
//! history each run through a temporal-convolution branch; a head MLP maps
//! the concatenated branch outputs to thrust and body rates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::policy::layers::{lrelu, lrelu_grad, sigmoid, CausalConv, Linear};
use crate::policy::real::Real;

pub const TRACK_FEATURES: usize = 5;
pub const TRACKS: usize = crate::sensing::TRACKS_PER_FRAME;
/// History length of every branch ring.
pub const HIST: usize = 8;
pub const BRANCH_DIM: usize = 128;
pub const INERTIAL_DIM: usize = 10;
pub const REFERENCE_DIM: usize = 10;
pub const ACTION_DIM: usize = 4;
const PN_WIDTHS: [usize; 4] = [32, 64, 128, 128];
const TCN_WIDTHS: [usize; 4] = [128, 64, 64, 64];
const HEAD_WIDTHS: [usize; 3] = [128, 64, 32];

/// One frame of normalized track features.
pub type TrackFrame<T> = [[T; TRACK_FEATURES]; TRACKS];

/// Temporal branch: four causal convolutions plus a fully-connected read-out.
#[derive(Debug, Clone, PartialEq)]
pub struct Tcn<T> {
    pub convs: Vec<CausalConv<T>>,
    pub fc: Linear<T>,
}

impl<T: Real> Tcn<T> {
    fn init(in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut convs = Vec::with_capacity(4);
        let mut d = in_dim;
        for w in TCN_WIDTHS {
            convs.push(CausalConv::init(d, w, rng));
            d = w;
        }
        let fc = Linear::init(d * HIST, BRANCH_DIM, rng);
        Self { convs, fc }
    }

    fn zeros(in_dim: usize) -> Self {
        let mut convs = Vec::with_capacity(4);
        let mut d = in_dim;
        for w in TCN_WIDTHS {
            convs.push(CausalConv::zeros(d, w));
            d = w;
        }
        Self { convs, fc: Linear::zeros(d * HIST, BRANCH_DIM) }
    }
}

/// All learnable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<T> {
    pub pointnet: Vec<Linear<T>>,
    pub visual: Tcn<T>,
    pub inertial: Tcn<T>,
    pub reference: Tcn<T>,
    pub head: Vec<Linear<T>>,
}

impl<T: Real> PolicyNet<T> {
    /// Seed-deterministic fan-in initialization.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pointnet = Vec::with_capacity(4);
        let mut d = TRACK_FEATURES;
        for w in PN_WIDTHS {
            pointnet.push(Linear::init(d, w, &mut rng));
            d = w;
        }
        let visual = Tcn::init(BRANCH_DIM, &mut rng);
        let inertial = Tcn::init(INERTIAL_DIM, &mut rng);
        let reference = Tcn::init(REFERENCE_DIM, &mut rng);
        let mut head = Vec::with_capacity(4);
        let mut d = 3 * BRANCH_DIM;
        for w in HEAD_WIDTHS {
            head.push(Linear::init(d, w, &mut rng));
            d = w;
        }
        head.push(Linear::init(d, ACTION_DIM, &mut rng));
        Self { pointnet, visual, inertial, reference, head }
    }

    /// Same shapes, all zeros; the gradient container.
    pub fn zeros_like(&self) -> Self {
        let mut pointnet = Vec::with_capacity(4);
        let mut d = TRACK_FEATURES;
        for w in PN_WIDTHS {
            pointnet.push(Linear::zeros(d, w));
            d = w;
        }
        let visual = Tcn::zeros(BRANCH_DIM);
        let inertial = Tcn::zeros(INERTIAL_DIM);
        let reference = Tcn::zeros(REFERENCE_DIM);
        let mut head = Vec::with_capacity(4);
        let mut d = 3 * BRANCH_DIM;
        for w in HEAD_WIDTHS {
            head.push(Linear::zeros(d, w));
            d = w;
        }
        head.push(Linear::zeros(d, ACTION_DIM));
        Self { pointnet, visual, inertial, reference, head }
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[T])> {
        let mut out: Vec<(String, &[T])> = Vec::new();
        for (i, l) in self.pointnet.iter().enumerate() {
            out.push((format!("pointnet.{i}.w"), &l.w));
            out.push((format!("pointnet.{i}.b"), &l.b));
        }
        for (name, tcn) in [
            ("visual", &self.visual),
            ("inertial", &self.inertial),
            ("reference", &self.reference),
        ] {
            for (i, c) in tcn.convs.iter().enumerate() {
                out.push((format!("{name}.conv{i}.w"), &c.w));
                out.push((format!("{name}.conv{i}.b"), &c.b));
            }
            out.push((format!("{name}.fc.w"), &tcn.fc.w));
            out.push((format!("{name}.fc.b"), &tcn.fc.b));
        }
        for (i, l) in self.head.iter().enumerate() {
            out.push((format!("head.{i}.w"), &l.w));
            out.push((format!("head.{i}.b"), &l.b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out: Vec<(String, &mut [T])> = Vec::new();
        for (i, l) in self.pointnet.iter_mut().enumerate() {
            out.push((format!("pointnet.{i}.w"), l.w.as_mut_slice()));
            out.push((format!("pointnet.{i}.b"), l.b.as_mut_slice()));
        }
        for (name, tcn) in [
            ("visual", &mut self.visual),
            ("inertial", &mut self.inertial),
            ("reference", &mut self.reference),
        ] {
            for (i, c) in tcn.convs.iter_mut().enumerate() {
                out.push((format!("{name}.conv{i}.w"), c.w.as_mut_slice()));
                out.push((format!("{name}.conv{i}.b"), c.b.as_mut_slice()));
            }
            out.push((format!("{name}.fc.w"), tcn.fc.w.as_mut_slice()));
            out.push((format!("{name}.fc.b"), tcn.fc.b.as_mut_slice()));
        }
        for (i, l) in self.head.iter_mut().enumerate() {
            out.push((format!("head.{i}.w"), l.w.as_mut_slice()));
            out.push((format!("head.{i}.b"), l.b.as_mut_slice()));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        let mut mine = self.tensors_mut();
        let theirs = other.tensors();
        for ((_, a), (_, b)) in mine.iter_mut().zip(theirs.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += *y * scale;
            }
        }
    }

    pub fn cast<U: Real>(&self) -> PolicyNet<U> {
        let mut out: PolicyNet<U> = PolicyNet::init(0).zeros_like();
        let mut dst = out.tensors_mut();
        let src = self.tensors();
        for ((_, d), (_, s)) in dst.iter_mut().zip(src.iter()) {
            for (x, y) in d.iter_mut().zip(s.iter()) {
                *x = U::from_f64(y.to_f64());
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}

// ---------------------------------------------------------------------------
// Caches
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PointNetCache<T> {
    x0: Vec<T>,
    z: [Vec<T>; 4],
    a: [Vec<T>; 4],
    pub out: Vec<T>,
}

impl<T: Real> PointNetCache<T> {
    pub fn new() -> Self {
        Self {
            x0: vec![T::ZERO; TRACK_FEATURES * TRACKS],
            z: PN_WIDTHS.map(|w| vec![T::ZERO; w * TRACKS]),
            a: PN_WIDTHS.map(|w| vec![T::ZERO; w * TRACKS]),
            out: vec![T::ZERO; BRANCH_DIM],
        }
    }
}

impl<T: Real> Default for PointNetCache<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Fused per-point cache: all history frames as one block of
/// `HIST * TRACKS` points (the per-point layers share weights across
/// frames, and wide blocks vectorize much better).
#[derive(Debug, Clone)]
pub struct PointNetWideCache<T> {
    x0: Vec<T>,
    z: [Vec<T>; 4],
    a: [Vec<T>; 4],
    /// Pooled outputs, time-major `[HIST][BRANCH_DIM]`.
    pub pooled: Vec<T>,
}

const PN_BLOCK: usize = HIST * TRACKS;

impl<T: Real> PointNetWideCache<T> {
    pub fn new() -> Self {
        Self {
            x0: vec![T::ZERO; TRACK_FEATURES * PN_BLOCK],
            z: PN_WIDTHS.map(|w| vec![T::ZERO; w * PN_BLOCK]),
            a: PN_WIDTHS.map(|w| vec![T::ZERO; w * PN_BLOCK]),
            pooled: vec![T::ZERO; HIST * BRANCH_DIM],
        }
    }
}

impl<T: Real> Default for PointNetWideCache<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone)]
pub struct TcnCache<T> {
    x0: Vec<T>,
    z: [Vec<T>; 4],
    a: [Vec<T>; 4],
    fc_z: Vec<T>,
    pub out: Vec<T>,
}

impl<T: Real> TcnCache<T> {
    pub fn new(in_dim: usize) -> Self {
        Self {
            x0: vec![T::ZERO; in_dim * HIST],
            z: TCN_WIDTHS.map(|w| vec![T::ZERO; w * HIST]),
            a: TCN_WIDTHS.map(|w| vec![T::ZERO; w * HIST]),
            fc_z: vec![T::ZERO; BRANCH_DIM],
            out: vec![T::ZERO; BRANCH_DIM],
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    x0: Vec<T>,
    z: [Vec<T>; 3],
    a: [Vec<T>; 3],
    pub y: [T; ACTION_DIM],
}

impl<T: Real> HeadCache<T> {
    pub fn new() -> Self {
        Self {
            x0: vec![T::ZERO; 3 * BRANCH_DIM],
            z: HEAD_WIDTHS.map(|w| vec![T::ZERO; w]),
            a: HEAD_WIDTHS.map(|w| vec![T::ZERO; w]),
            y: [T::ZERO; ACTION_DIM],
        }
    }
}

/// Scratch for one full forward/backward.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    pub pn: PointNetWideCache<T>,
    pub visual: TcnCache<T>,
    pub inertial: TcnCache<T>,
    pub reference: TcnCache<T>,
    pub head: HeadCache<T>,
}

impl<T: Real> Workspace<T> {
    pub fn new() -> Self {
        Self {
            pn: PointNetWideCache::new(),
            visual: TcnCache::new(BRANCH_DIM),
            inertial: TcnCache::new(INERTIAL_DIM),
            reference: TcnCache::new(REFERENCE_DIM),
            head: HeadCache::new(),
        }
    }
}

impl<T: Real> Default for Workspace<T> {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

impl<T: Real> PolicyNet<T> {
    /// Shared per-point network + mean pooling over the 40 tracks.
    pub fn pointnet_forward(&self, frame: &TrackFrame<T>, cache: &mut PointNetCache<T>) {
        // Transpose to feature-major.
        for f in 0..TRACK_FEATURES {
            for p in 0..TRACKS {
                cache.x0[f * TRACKS + p] = frame[p][f];
            }
        }
        for (i, layer) in self.pointnet.iter().enumerate() {
            let (done, rest) = cache.a.split_at_mut(i);
            let input: &[T] = if i == 0 { &cache.x0 } else { &done[i - 1] };
            let z = &mut cache.z[i];
            layer.forward_block(input, TRACKS, z);
            for (av, zv) in rest[0].iter_mut().zip(z.iter()) {
                *av = lrelu(*zv);
            }
        }
        // Mean pool, accumulated in f64 so the result is permutation
        // invariant in practice as well as in exact arithmetic.
        let last = &cache.a[3];
        for d in 0..BRANCH_DIM {
            let mut acc = 0.0f64;
            for p in 0..TRACKS {
                acc += last[d * TRACKS + p].to_f64();
            }
            cache.out[d] = T::from_f64(acc / TRACKS as f64);
        }
    }

    fn tcn_forward(&self, tcn: &Tcn<T>, hist: &[T], cache: &mut TcnCache<T>) {
        cache.x0.copy_from_slice(hist);
        for (i, conv) in tcn.convs.iter().enumerate() {
            let (done, rest) = cache.a.split_at_mut(i);
            let input: &[T] = if i == 0 { &cache.x0 } else { &done[i - 1] };
            let z = &mut cache.z[i];
            conv.forward(input, HIST, z);
            for (av, zv) in rest[0].iter_mut().zip(z.iter()) {
                *av = lrelu(*zv);
            }
        }
        tcn.fc.forward_block(&cache.a[3], 1, &mut cache.fc_z);
        for (o, z) in cache.out.iter_mut().zip(cache.fc_z.iter()) {
            *o = lrelu(*z);
        }
    }

    /// Temporal branch over a history laid out time-major `[HIST][dim]`.
    pub fn branch_forward(
        &self,
        which: Branch,
        hist: &[T],
        dim: usize,
        cache: &mut TcnCache<T>,
    ) {
        debug_assert_eq!(hist.len(), dim * HIST);
        let tcn = self.tcn(which);
        self.tcn_forward(tcn, hist, cache);
    }

    fn tcn(&self, which: Branch) -> &Tcn<T> {
        match which {
            Branch::Visual => &self.visual,
            Branch::Inertial => &self.inertial,
            Branch::Reference => &self.reference,
        }
    }

    /// Head MLP on the three branch outputs; returns raw (pre-squash) y.
    pub fn head_forward(
        &self,
        v_vis: &[T],
        v_imu: &[T],
        v_ref: &[T],
        cache: &mut HeadCache<T>,
    ) -> [T; ACTION_DIM] {
        cache.x0[..BRANCH_DIM].copy_from_slice(v_vis);
        cache.x0[BRANCH_DIM..2 * BRANCH_DIM].copy_from_slice(v_imu);
        cache.x0[2 * BRANCH_DIM..].copy_from_slice(v_ref);
        for i in 0..3 {
            let layer = &self.head[i];
            let (done, rest) = cache.a.split_at_mut(i);
            let input: &[T] = if i == 0 { &cache.x0 } else { &done[i - 1] };
            let z = &mut cache.z[i];
            layer.forward_block(input, 1, z);
            for (av, zv) in rest[0].iter_mut().zip(z.iter()) {
                *av = lrelu(*zv);
            }
        }
        let mut y = [T::ZERO; ACTION_DIM];
        self.head[3].forward_block(&cache.a[2], 1, &mut y);
        cache.y = y;
        y
    }

    /// Full forward over one training example.
    pub fn forward_full(
        &self,
        vis_frames: &[&TrackFrame<T>],
        imu_hist: &[[T; INERTIAL_DIM]],
        ref_hist: &[[T; REFERENCE_DIM]],
        ws: &mut Workspace<T>,
    ) -> [T; ACTION_DIM] {
        debug_assert_eq!(vis_frames.len(), HIST);
        // All frames through the shared per-point layers as one wide block;
        // per-column arithmetic is identical to the per-frame path.
        let cache = &mut ws.pn;
        for (f, frame) in vis_frames.iter().enumerate() {
            for feat in 0..TRACK_FEATURES {
                for p in 0..TRACKS {
                    cache.x0[feat * PN_BLOCK + f * TRACKS + p] = frame[p][feat];
                }
            }
        }
        for (i, layer) in self.pointnet.iter().enumerate() {
            let (done, rest) = cache.a.split_at_mut(i);
            let input: &[T] = if i == 0 { &cache.x0 } else { &done[i - 1] };
            let z = &mut cache.z[i];
            layer.forward_block(input, PN_BLOCK, z);
            for (av, zv) in rest[0].iter_mut().zip(z.iter()) {
                *av = lrelu(*zv);
            }
        }
        let last = &cache.a[3];
        for f in 0..HIST {
            for d in 0..BRANCH_DIM {
                let mut acc = 0.0f64;
                for p in 0..TRACKS {
                    acc += last[d * PN_BLOCK + f * TRACKS + p].to_f64();
                }
                cache.pooled[f * BRANCH_DIM + d] = T::from_f64(acc / TRACKS as f64);
            }
        }
        let vis_hist = cache.pooled.clone();
        self.branch_forward(Branch::Visual, &vis_hist, BRANCH_DIM, &mut ws.visual);
        let imu_flat: Vec<T> = imu_hist.iter().flatten().copied().collect();
        self.branch_forward(Branch::Inertial, &imu_flat, INERTIAL_DIM, &mut ws.inertial);
        let ref_flat: Vec<T> = ref_hist.iter().flatten().copied().collect();
        self.branch_forward(Branch::Reference, &ref_flat, REFERENCE_DIM, &mut ws.reference);
        let (v, i, r) = (
            ws.visual.out.clone(),
            ws.inertial.out.clone(),
            ws.reference.out.clone(),
        );
        self.head_forward(&v, &i, &r, &mut ws.head)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Visual,
    Inertial,
    Reference,
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

impl<T: Real> PolicyNet<T> {
    /// Backward through a temporal branch; returns the gradient w.r.t. the
    /// feature-major input history.
    fn tcn_backward(
        &self,
        which: Branch,
        cache: &TcnCache<T>,
        grad_out: &[T],
        grads: &mut PolicyNet<T>,
    ) -> Vec<T> {
        let tcn = self.tcn(which);
        let gt = match which {
            Branch::Visual => &mut grads.visual,
            Branch::Inertial => &mut grads.inertial,
            Branch::Reference => &mut grads.reference,
        };
        let mut g_fc = vec![T::ZERO; BRANCH_DIM];
        for ((g, &go), &z) in g_fc.iter_mut().zip(grad_out).zip(cache.fc_z.iter()) {
            *g = go * lrelu_grad(z);
        }
        let mut g = vec![T::ZERO; tcn.fc.in_dim];
        tcn.fc
            .backward_block(&cache.a[3], &g_fc, 1, &mut gt.fc.w, &mut gt.fc.b, &mut g);
        for i in (0..4).rev() {
            for (gv, zv) in g.iter_mut().zip(cache.z[i].iter()) {
                *gv *= lrelu_grad(*zv);
            }
            let input: &[T] = if i == 0 { &cache.x0 } else { &cache.a[i - 1] };
            let conv = &tcn.convs[i];
            let gc = &mut gt.convs[i];
            let mut gx = vec![T::ZERO; conv.in_dim * HIST];
            conv.backward(input, &g, HIST, &mut gc.w, &mut gc.b, &mut gx);
            g = gx;
        }
        g
    }

    fn head_backward(
        &self,
        cache: &HeadCache<T>,
        grad_y: &[T; ACTION_DIM],
        grads: &mut PolicyNet<T>,
    ) -> Vec<T> {
        let mut g: Vec<T> = grad_y.to_vec();
        for i in (0..4).rev() {
            if i < 3 {
                for (gv, zv) in g.iter_mut().zip(cache.z[i].iter()) {
                    *gv *= lrelu_grad(*zv);
                }
            }
            let input: &[T] = if i == 0 { &cache.x0 } else { &cache.a[i - 1] };
            let layer = &self.head[i];
            let gl = &mut grads.head[i];
            let mut gx = vec![T::ZERO; layer.in_dim];
            layer.backward_block(input, &g, 1, &mut gl.w, &mut gl.b, &mut gx);
            g = gx;
        }
        g
    }

    /// Full backward for one example; accumulates into `grads`.
    pub fn backward_full(
        &self,
        ws: &Workspace<T>,
        grad_y: &[T; ACTION_DIM],
        grads: &mut PolicyNet<T>,
    ) {
        let gx0 = self.head_backward(&ws.head, grad_y, grads);
        let g_vis_fm = self.tcn_backward(Branch::Visual, &ws.visual, &gx0[..BRANCH_DIM], grads);
        let g_imu =
            self.tcn_backward(Branch::Inertial, &ws.inertial, &gx0[BRANCH_DIM..2 * BRANCH_DIM], grads);
        let g_ref =
            self.tcn_backward(Branch::Reference, &ws.reference, &gx0[2 * BRANCH_DIM..], grads);
        let _ = (g_imu, g_ref); // sensor inputs carry no parameters upstream
        // Visual branch input gradient flows through the pooling into every
        // point of the corresponding frame.
        let cache = &ws.pn;
        let inv = T::from_f64(1.0 / TRACKS as f64);
        let mut g = vec![T::ZERO; BRANCH_DIM * PN_BLOCK];
        for d in 0..BRANCH_DIM {
            for f in 0..HIST {
                // Branch input gradient arrives time-major.
                let gd = g_vis_fm[f * BRANCH_DIM + d] * inv;
                let row = &mut g[d * PN_BLOCK + f * TRACKS..d * PN_BLOCK + (f + 1) * TRACKS];
                row.fill(gd);
            }
        }
        for i in (0..4).rev() {
            for (gv, zv) in g.iter_mut().zip(cache.z[i].iter()) {
                *gv *= lrelu_grad(*zv);
            }
            let input: &[T] = if i == 0 { &cache.x0 } else { &cache.a[i - 1] };
            let layer = &self.pointnet[i];
            let gl = &mut grads.pointnet[i];
            let mut gx = vec![T::ZERO; layer.in_dim * PN_BLOCK];
            layer.backward_block(input, &g, PN_BLOCK, &mut gl.w, &mut gl.b, &mut gx);
            g = gx;
        }
    }
}

// ---------------------------------------------------------------------------
// Output squashing and loss
// ---------------------------------------------------------------------------

/// Maps raw head outputs into the actuator box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputSquash {
    pub c_max: f64,
    pub omega_max: f64,
    pub g: f64,
}

impl Default for OutputSquash {
    fn default() -> Self {
        Self { c_max: 4.0 * 9.81, omega_max: 12.0, g: 9.81 }
    }
}

impl OutputSquash {
    /// (c, wx, wy, wz) inside the actuator box.
    pub fn apply<T: Real>(&self, y: &[T; ACTION_DIM]) -> [T; ACTION_DIM] {
        let c = T::from_f64(self.c_max) * sigmoid(y[0]);
        let m = T::from_f64(self.omega_max);
        [c, m * y[1].tanh(), m * y[2].tanh(), m * y[3].tanh()]
    }

    /// Squared-error loss against an expert action, thrust normalized by g;
    /// returns the loss and its gradient w.r.t. the raw head outputs.
    pub fn loss_and_grad<T: Real>(
        &self,
        y: &[T; ACTION_DIM],
        label: &[T; ACTION_DIM],
    ) -> (T, [T; ACTION_DIM]) {
        let a = self.apply(y);
        let g = T::from_f64(self.g);
        let m = T::from_f64(self.omega_max);
        let c_max = T::from_f64(self.c_max);
        let two = T::from_f64(2.0);

        let dc = (a[0] - label[0]) / g;
        let mut loss = dc * dc;
        let s = sigmoid(y[0]);
        let mut grad = [T::ZERO; ACTION_DIM];
        grad[0] = two * dc / g * c_max * s * (T::ONE - s);
        for i in 1..ACTION_DIM {
            let dw = a[i] - label[i];
            loss += dw * dw;
            let th = y[i].tanh();
            grad[i] = two * dw * m * (T::ONE - th * th);
        }
        (loss, grad)
    }
}

//! Asynchronous branch execution.
//!
//! Each sensor event refreshes only its own branch; the head runs at the
//! control rate on the latest branch outputs. In simulation the events
//! arrive through a single-threaded queue in stamp order, which trivially
//! satisfies the single-writer-per-branch / atomic-snapshot contract a
//! threaded deployment would need.

use crate::dynamics::Action;
use crate::error::{Error, Result};
use crate::policy::net::{
    Branch, HeadCache, OutputSquash, PointNetCache, PolicyNet, TcnCache, TrackFrame, BRANCH_DIM,
    HIST, INERTIAL_DIM, REFERENCE_DIM,
};
use nalgebra::Vector3;

/// One input to the asynchronous policy.
#[derive(Debug, Clone)]
pub enum PolicyEvent {
    /// Preprocessed inertial signal, 100 Hz.
    Imu { stamp: f64, input: [f32; INERTIAL_DIM] },
    /// Normalized feature tracks, 30 Hz. `frame_idx` keys the frame in the
    /// rollout's frame store (-1 for none).
    Camera { stamp: f64, frame: Box<TrackFrame<f32>>, frame_idx: i64 },
    /// Reference sample, 50 Hz.
    Reference { stamp: f64, input: [f32; REFERENCE_DIM] },
    /// Head tick, 100 Hz; the only event that emits an action.
    HeadTick { stamp: f64 },
}

impl PolicyEvent {
    pub fn stamp(&self) -> f64 {
        match self {
            PolicyEvent::Imu { stamp, .. }
            | PolicyEvent::Camera { stamp, .. }
            | PolicyEvent::Reference { stamp, .. }
            | PolicyEvent::HeadTick { stamp } => *stamp,
        }
    }
}

/// Input-history snapshot at a head tick, for dataset records.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSnapshot {
    /// Frame-store indices of the visual ring, oldest first; -1 = zero frame.
    pub visual_frames: [i64; HIST],
    pub inertial: [[f32; INERTIAL_DIM]; HIST],
    pub reference: [[f32; REFERENCE_DIM]; HIST],
}

/// Per-episode branch state: history rings, branch outputs, and caches.
pub struct BranchBuffers {
    last_stamp: f64,
    visual_repr: [[f32; BRANCH_DIM]; HIST],
    visual_frames: [i64; HIST],
    inertial: [[f32; INERTIAL_DIM]; HIST],
    reference: [[f32; REFERENCE_DIM]; HIST],
    v_visual: Vec<f32>,
    v_inertial: Vec<f32>,
    v_reference: Vec<f32>,
    pn_cache: PointNetCache<f32>,
    vis_cache: TcnCache<f32>,
    imu_cache: TcnCache<f32>,
    ref_cache: TcnCache<f32>,
    head_cache: HeadCache<f32>,
}

impl BranchBuffers {
    /// Zero-initialized rings; branch outputs computed from the zero
    /// histories so the head is well-defined before the first sensor event.
    pub fn new(net: &PolicyNet<f32>) -> Self {
        let mut b = Self {
            last_stamp: f64::NEG_INFINITY,
            visual_repr: [[0.0; BRANCH_DIM]; HIST],
            visual_frames: [-1; HIST],
            inertial: [[0.0; INERTIAL_DIM]; HIST],
            reference: [[0.0; REFERENCE_DIM]; HIST],
            v_visual: vec![0.0; BRANCH_DIM],
            v_inertial: vec![0.0; BRANCH_DIM],
            v_reference: vec![0.0; BRANCH_DIM],
            pn_cache: PointNetCache::new(),
            vis_cache: TcnCache::new(BRANCH_DIM),
            imu_cache: TcnCache::new(INERTIAL_DIM),
            ref_cache: TcnCache::new(REFERENCE_DIM),
            head_cache: HeadCache::new(),
        };
        b.refresh_visual(net);
        b.refresh_inertial(net);
        b.refresh_reference(net);
        b
    }

    fn refresh_visual(&mut self, net: &PolicyNet<f32>) {
        let flat: Vec<f32> = self.visual_repr.iter().flatten().copied().collect();
        net.branch_forward(Branch::Visual, &flat, BRANCH_DIM, &mut self.vis_cache);
        self.v_visual.copy_from_slice(&self.vis_cache.out);
    }

    fn refresh_inertial(&mut self, net: &PolicyNet<f32>) {
        let flat: Vec<f32> = self.inertial.iter().flatten().copied().collect();
        net.branch_forward(Branch::Inertial, &flat, INERTIAL_DIM, &mut self.imu_cache);
        self.v_inertial.copy_from_slice(&self.imu_cache.out);
    }

    fn refresh_reference(&mut self, net: &PolicyNet<f32>) {
        let flat: Vec<f32> = self.reference.iter().flatten().copied().collect();
        net.branch_forward(Branch::Reference, &flat, REFERENCE_DIM, &mut self.ref_cache);
        self.v_reference.copy_from_slice(&self.ref_cache.out);
    }

    /// Process one event in stamp order; only head ticks emit actions.
    pub fn handle(
        &mut self,
        net: &PolicyNet<f32>,
        squash: &OutputSquash,
        event: &PolicyEvent,
    ) -> Result<Option<Action>> {
        let stamp = event.stamp();
        if stamp < self.last_stamp {
            return Err(Error::OutOfOrderEvent { stamp, last: self.last_stamp });
        }
        self.last_stamp = stamp;
        match event {
            PolicyEvent::Imu { input, .. } => {
                self.inertial.rotate_left(1);
                self.inertial[HIST - 1] = *input;
                self.refresh_inertial(net);
                Ok(None)
            }
            PolicyEvent::Camera { frame, frame_idx, .. } => {
                net.pointnet_forward(frame, &mut self.pn_cache);
                self.visual_repr.rotate_left(1);
                let mut repr = [0.0f32; BRANCH_DIM];
                repr.copy_from_slice(&self.pn_cache.out);
                self.visual_repr[HIST - 1] = repr;
                self.visual_frames.rotate_left(1);
                self.visual_frames[HIST - 1] = *frame_idx;
                self.refresh_visual(net);
                Ok(None)
            }
            PolicyEvent::Reference { input, .. } => {
                self.reference.rotate_left(1);
                self.reference[HIST - 1] = *input;
                self.refresh_reference(net);
                Ok(None)
            }
            PolicyEvent::HeadTick { .. } => {
                let y = net.head_forward(
                    &self.v_visual,
                    &self.v_inertial,
                    &self.v_reference,
                    &mut self.head_cache,
                );
                let a = squash.apply(&y);
                Ok(Some(Action::new(
                    a[0] as f64,
                    Vector3::new(a[1] as f64, a[2] as f64, a[3] as f64),
                )))
            }
        }
    }

    pub fn snapshot(&self) -> InputSnapshot {
        InputSnapshot {
            visual_frames: self.visual_frames,
            inertial: self.inertial,
            reference: self.reference,
        }
    }
}

/// Free-function form of the event step.
pub fn policy_event(
    net: &PolicyNet<f32>,
    squash: &OutputSquash,
    buffers: &mut BranchBuffers,
    event: &PolicyEvent,
) -> Result<Option<Action>> {
    buffers.handle(net, squash, event)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> PolicyNet<f32> {
        PolicyNet::init(21)
    }

    fn cam_event(stamp: f64, seed: f32) -> PolicyEvent {
        let mut frame = [[0.0f32; 5]; crate::sensing::TRACKS_PER_FRAME];
        for (i, row) in frame.iter_mut().enumerate() {
            row[0] = seed + i as f32 * 0.01;
            row[4] = 0.2;
        }
        PolicyEvent::Camera { stamp, frame: Box::new(frame), frame_idx: 0 }
    }

    #[test]
    fn consecutive_head_ticks_identical() {
        let net = net();
        let squash = OutputSquash::default();
        let mut b = BranchBuffers::new(&net);
        b.handle(&net, &squash, &PolicyEvent::Imu { stamp: 0.0, input: [0.3; 10] }).unwrap();
        let a1 = b.handle(&net, &squash, &PolicyEvent::HeadTick { stamp: 0.01 }).unwrap().unwrap();
        let a2 = b.handle(&net, &squash, &PolicyEvent::HeadTick { stamp: 0.02 }).unwrap().unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn camera_does_not_touch_other_branches() {
        let net = net();
        let squash = OutputSquash::default();
        let mut b = BranchBuffers::new(&net);
        let imu_before = b.v_inertial.clone();
        let ref_before = b.v_reference.clone();
        b.handle(&net, &squash, &cam_event(0.0, 0.5)).unwrap();
        assert_eq!(b.v_inertial, imu_before);
        assert_eq!(b.v_reference, ref_before);
        assert_ne!(b.v_visual, vec![0.0; BRANCH_DIM]);
    }

    #[test]
    fn sensor_events_change_their_branch_action() {
        let net = net();
        let squash = OutputSquash::default();
        let mut b = BranchBuffers::new(&net);
        let a0 = b.handle(&net, &squash, &PolicyEvent::HeadTick { stamp: 0.0 }).unwrap().unwrap();
        b.handle(&net, &squash, &PolicyEvent::Imu { stamp: 0.01, input: [0.7; 10] }).unwrap();
        let a1 = b.handle(&net, &squash, &PolicyEvent::HeadTick { stamp: 0.01 }).unwrap().unwrap();
        assert_ne!(a0, a1);
    }

    #[test]
    fn out_of_order_rejected() {
        let net = net();
        let squash = OutputSquash::default();
        let mut b = BranchBuffers::new(&net);
        b.handle(&net, &squash, &PolicyEvent::HeadTick { stamp: 1.0 }).unwrap();
        let err = b.handle(&net, &squash, &PolicyEvent::HeadTick { stamp: 0.5 });
        assert!(matches!(err, Err(Error::OutOfOrderEvent { .. })));
    }

    #[test]
    fn snapshot_tracks_rings() {
        let net = net();
        let squash = OutputSquash::default();
        let mut b = BranchBuffers::new(&net);
        for k in 0..3 {
            let mut e = cam_event(k as f64 / 30.0, 0.1 * k as f32);
            if let PolicyEvent::Camera { frame_idx, .. } = &mut e {
                *frame_idx = k;
            }
            b.handle(&net, &squash, &e).unwrap();
        }
        let snap = b.snapshot();
        assert_eq!(&snap.visual_frames[..5], &[-1, -1, -1, -1, -1]);
        assert_eq!(&snap.visual_frames[5..], &[0, 1, 2]);
    }
}

//! Feature tracks: ground-truth association with geometric verification.
//!
//! Landmarks are matched by id between keyframes (simulation stands in for
//! the detector/matcher), verified against the epipolar constraint of the
//! true relative pose, and aged. Track loss is modeled by FOV exit plus a
//! per-frame survival probability.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::QuadState;
use crate::sensing::camera::CameraModel;

/// One tracked keypoint: rectified position, displacement since the previous
/// keyframe, and the number of keyframes it has been tracked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureTrack {
    pub id: usize,
    pub u: f64,
    pub v: f64,
    pub du: f64,
    pub dv: f64,
    pub age: u32,
}

/// Tracker tunables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Epipolar rejection threshold, pixels of the reference sensor.
    pub epipolar_px: f64,
    /// Per-frame track survival probability.
    pub survival_prob: f64,
    /// Optional keypoint noise, pixels.
    pub noise_px: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { epipolar_px: 2.0, survival_prob: 0.98, noise_px: 0.0 }
    }
}

/// Keyframe: camera pose and observed keypoints (id -> rectified position).
#[derive(Debug, Clone)]
pub struct Keyframe {
    pub state: QuadState,
    pub keypoints: BTreeMap<usize, (f64, f64)>,
}

impl Keyframe {
    pub fn new(state: QuadState, keypoints: Vec<(usize, (f64, f64))>) -> Self {
        Self { state, keypoints: keypoints.into_iter().collect() }
    }
}

/// Fewer surviving tracks than this flags the observation as degenerate.
pub const MIN_TRACKS: usize = 4;

/// Tracks of the current keyframe plus the degenerate flag.
#[derive(Debug, Clone)]
pub struct TrackedFrame {
    pub tracks: Vec<FeatureTrack>,
    pub degenerate: bool,
}

/// Body-to-camera axis permutation (optical axis = body x).
fn body_to_cam() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0)
}

/// Essential matrix of the prev -> cur camera pair.
fn essential(prev: &QuadState, cur: &QuadState) -> Matrix3<f64> {
    let m = body_to_cam();
    let r_prev = m * prev.q.inverse().to_rotation_matrix().matrix().to_owned();
    let r_cur = m * cur.q.inverse().to_rotation_matrix().matrix().to_owned();
    let r_rel = r_cur * r_prev.transpose();
    let t_rel = r_cur * (prev.p - cur.p);
    let tx = Matrix3::new(
        0.0, -t_rel.z, t_rel.y, t_rel.z, 0.0, -t_rel.x, -t_rel.y, t_rel.x, 0.0,
    );
    tx * r_rel
}

/// Distance of the current observation from the epipolar line of its
/// previous observation. Zero-normal lines (pure rotation) satisfy the
/// constraint exactly.
pub fn epipolar_residual(
    prev_state: &QuadState,
    cur_state: &QuadState,
    prev_uv: (f64, f64),
    cur_uv: (f64, f64),
) -> f64 {
    let e = essential(prev_state, cur_state);
    let xp = Vector3::new(prev_uv.0, prev_uv.1, 1.0);
    let xc = Vector3::new(cur_uv.0, cur_uv.1, 1.0);
    let line = e * xp;
    let n = (line.x * line.x + line.y * line.y).sqrt();
    if n < 1e-12 {
        return 0.0;
    }
    (xc.dot(&line)).abs() / n
}

/// Match keyframes by landmark id, age persisting tracks, and reject
/// correspondences off the epipolar line of the true relative pose.
pub fn track_features<R: Rng>(
    prev: &Keyframe,
    cur: &Keyframe,
    ages: &BTreeMap<usize, u32>,
    cfg: &TrackerConfig,
    cam: &CameraModel,
    rng: &mut R,
) -> TrackedFrame {
    let threshold = cfg.epipolar_px * cam.rect_per_px();
    let mut tracks = Vec::with_capacity(cur.keypoints.len());
    for (&id, &(u, v)) in &cur.keypoints {
        match prev.keypoints.get(&id) {
            Some(&(pu, pv)) => {
                // Simulated tracker loss.
                if cfg.survival_prob < 1.0 && rng.gen::<f64>() >= cfg.survival_prob {
                    continue;
                }
                let residual = epipolar_residual(&prev.state, &cur.state, (pu, pv), (u, v));
                if residual > threshold {
                    continue;
                }
                let age = ages.get(&id).copied().unwrap_or(1) + 1;
                tracks.push(FeatureTrack { id, u, v, du: u - pu, dv: v - pv, age });
            }
            None => tracks.push(FeatureTrack { id, u, v, du: 0.0, dv: 0.0, age: 1 }),
        }
    }
    let degenerate = tracks.len() < MIN_TRACKS;
    TrackedFrame { tracks, degenerate }
}

/// Stateful wrapper holding the previous keyframe and track ages.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    cam: CameraModel,
    prev: Option<Keyframe>,
    ages: BTreeMap<usize, u32>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig, cam: CameraModel) -> Self {
        Self { cfg, cam, prev: None, ages: BTreeMap::new() }
    }

    /// Process a rendered keyframe: applies keypoint noise, matches against
    /// the previous frame, and updates ages.
    pub fn process<R: Rng>(
        &mut self,
        state: QuadState,
        rendered: Vec<(usize, (f64, f64))>,
        rng: &mut R,
    ) -> TrackedFrame {
        let observed: Vec<(usize, (f64, f64))> = if self.cfg.noise_px > 0.0 {
            let n = Normal::new(0.0, self.cfg.noise_px * self.cam.rect_per_px()).unwrap();
            rendered
                .into_iter()
                .map(|(id, (u, v))| (id, (u + n.sample(rng), v + n.sample(rng))))
                .collect()
        } else {
            rendered
        };
        let kf = Keyframe::new(state, observed);
        let frame = match &self.prev {
            Some(prev) => track_features(prev, &kf, &self.ages, &self.cfg, &self.cam, rng),
            None => {
                let tracks: Vec<FeatureTrack> = kf
                    .keypoints
                    .iter()
                    .map(|(&id, &(u, v))| FeatureTrack { id, u, v, du: 0.0, dv: 0.0, age: 1 })
                    .collect();
                let degenerate = tracks.len() < MIN_TRACKS;
                TrackedFrame { tracks, degenerate }
            }
        };
        self.ages = frame.tracks.iter().map(|t| (t.id, t.age)).collect();
        self.prev = Some(kf);
        frame
    }
}

/// Fixed-size policy input: 40 rows of (u, v, du, dv, age).
pub const TRACKS_PER_FRAME: usize = 40;
pub type TrackArray = [[f32; 5]; TRACKS_PER_FRAME];

/// Uniformly sample up to 40 tracks without replacement; shortfall is
/// zero-padded (age 0 marks padding). Degenerate frames yield all zeros.
pub fn sample_tracks<R: Rng>(frame: &TrackedFrame, rng: &mut R) -> TrackArray {
    let mut out = [[0.0f32; 5]; TRACKS_PER_FRAME];
    if frame.degenerate {
        return out;
    }
    let tracks = &frame.tracks;
    let fill = |slot: &mut [f32; 5], t: &FeatureTrack| {
        *slot = [t.u as f32, t.v as f32, t.du as f32, t.dv as f32, t.age as f32];
    };
    if tracks.len() <= TRACKS_PER_FRAME {
        for (slot, t) in out.iter_mut().zip(tracks) {
            fill(slot, t);
        }
    } else {
        let picks = rand::seq::index::sample(rng, tracks.len(), TRACKS_PER_FRAME);
        for (slot, idx) in out.iter_mut().zip(picks.iter()) {
            fill(slot, &tracks[idx]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cam() -> CameraModel {
        CameraModel::default()
    }

    fn no_loss() -> TrackerConfig {
        TrackerConfig { survival_prob: 1.0, noise_px: 0.0, ..Default::default() }
    }

    fn grid_landmarks() -> Vec<Vector3<f64>> {
        let mut pts = Vec::new();
        for y in -3..=3 {
            for z in 0..=4 {
                pts.push(Vector3::new(15.0, y as f64 * 2.0, z as f64 * 2.0));
            }
        }
        pts
    }

    #[test]
    fn identical_states_zero_displacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tracker = Tracker::new(no_loss(), cam());
        let s = QuadState::hover(Vector3::new(0.0, 0.0, 2.0));
        let lms = grid_landmarks();
        let kp = cam().render_keypoints(&s, &lms);
        let n_vis = kp.len();
        tracker.process(s, kp.clone(), &mut rng);
        let frame = tracker.process(s, kp, &mut rng);
        assert_eq!(frame.tracks.len(), n_vis);
        for t in &frame.tracks {
            assert_relative_eq!(t.du, 0.0);
            assert_relative_eq!(t.dv, 0.0);
            assert_eq!(t.age, 2);
        }
    }

    #[test]
    fn pure_rotation_all_retained() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tracker = Tracker::new(no_loss(), cam());
        let lms = grid_landmarks();
        let s0 = QuadState::hover(Vector3::new(0.0, 0.0, 2.0));
        let q1 = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.15);
        let s1 = QuadState { q: q1, ..s0 };
        let kp0 = cam().render_keypoints(&s0, &lms);
        let kp1 = cam().render_keypoints(&s1, &lms);
        let shared: Vec<usize> = kp1
            .iter()
            .filter(|(id, _)| kp0.iter().any(|(i, _)| i == id))
            .map(|(id, _)| *id)
            .collect();
        tracker.process(s0, kp0, &mut rng);
        let frame = tracker.process(s1, kp1, &mut rng);
        // Every co-visible landmark satisfies the constraint exactly.
        assert_eq!(frame.tracks.iter().filter(|t| t.age == 2).count(), shared.len());
    }

    #[test]
    fn off_epipolar_correspondence_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = cam();
        let lms = grid_landmarks();
        let s0 = QuadState::hover(Vector3::new(0.0, 0.0, 2.0));
        let s1 = QuadState::hover(Vector3::new(0.0, 0.5, 2.0));
        let kp0 = c.render_keypoints(&s0, &lms);
        let mut kp1 = c.render_keypoints(&s1, &lms);
        // Push one keypoint 5 px-equivalent off its epipolar line.
        let victim = kp1[0].0;
        kp1[0].1 .1 += 5.0 * c.rect_per_px();
        let mut tracker = Tracker::new(no_loss(), c);
        tracker.process(s0, kp0, &mut rng);
        let frame = tracker.process(s1, kp1, &mut rng);
        assert!(!frame.tracks.iter().any(|t| t.id == victim && t.age > 1));
        // True correspondences all survive.
        assert!(frame.tracks.iter().filter(|t| t.age == 2).count() > 10);
    }

    #[test]
    fn epipolar_residuals_bounded_for_true_matches() {
        let c = cam();
        let s0 = QuadState::hover(Vector3::new(0.0, 0.0, 2.0));
        let s1 = QuadState {
            q: UnitQuaternion::from_euler_angles(0.05, -0.1, 0.2),
            ..QuadState::hover(Vector3::new(0.3, 0.2, 2.2))
        };
        for lm in grid_landmarks() {
            let (Some(uv0), Some(uv1)) = (c.project(&s0, &lm), c.project(&s1, &lm)) else {
                continue;
            };
            assert!(epipolar_residual(&s0, &s1, uv0, uv1) < 1e-9);
        }
    }

    #[test]
    fn sampling_caps_and_pads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let many: Vec<FeatureTrack> = (0..100)
            .map(|i| FeatureTrack { id: i, u: i as f64, v: 0.0, du: 0.0, dv: 0.0, age: 1 })
            .collect();
        let frame = TrackedFrame { tracks: many.clone(), degenerate: false };
        let arr = sample_tracks(&frame, &mut rng);
        assert!(arr.iter().all(|row| row[4] >= 1.0));
        for row in &arr {
            assert!(many.iter().any(|t| t.u as f32 == row[0]));
        }

        let few = TrackedFrame { tracks: many[..10].to_vec(), degenerate: false };
        let arr = sample_tracks(&few, &mut rng);
        assert_eq!(arr.iter().filter(|row| row[4] >= 1.0).count(), 10);
        assert_eq!(arr.iter().filter(|row| row[4] == 0.0).count(), 30);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let many: Vec<FeatureTrack> = (0..90)
            .map(|i| FeatureTrack { id: i, u: i as f64, v: -1.0, du: 0.1, dv: 0.0, age: 3 })
            .collect();
        let frame = TrackedFrame { tracks: many, degenerate: false };
        let a = sample_tracks(&frame, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_tracks(&frame, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_frame_zero_padded() {
        let frame = TrackedFrame {
            tracks: vec![FeatureTrack { id: 0, u: 1.0, v: 1.0, du: 0.0, dv: 0.0, age: 1 }],
            degenerate: true,
        };
        let arr = sample_tracks(&frame, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(arr.iter().all(|row| row.iter().all(|x| *x == 0.0)));
    }
}

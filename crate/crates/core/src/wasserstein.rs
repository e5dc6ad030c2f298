//! Sliced 1-Wasserstein estimates between observation sets, plus the
//! collection helpers for the abstraction probe.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sensing::{sample_tracks, CameraModel, SceneConfig, Tracker, TrackerConfig};
use crate::trajectory::ReferenceTrajectory;

/// Exact 1-D W1 between two empirical distributions (any sizes): the
/// integral of |F_a - F_b| over the merged support.
pub fn w1_1d(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let mut merged: Vec<f64> = xs.iter().chain(ys.iter()).copied().collect();
    merged.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut total = 0.0;
    for pair in merged.windows(2) {
        let (x0, x1) = (pair[0], pair[1]);
        while ia < xs.len() && xs[ia] <= x0 {
            ia += 1;
        }
        while ib < ys.len() && ys[ib] <= x0 {
            ib += 1;
        }
        let fa = ia as f64 / xs.len() as f64;
        let fb = ib as f64 / ys.len() as f64;
        total += (fa - fb).abs() * (x1 - x0);
    }
    total
}

/// Sliced W1: average of the closed-form 1-D distance over random unit
/// projections.
pub fn empirical_wasserstein(
    obs_a: &[Vec<f64>],
    obs_b: &[Vec<f64>],
    projections: usize,
    seed: u64,
) -> Result<f64> {
    let (Some(first_a), Some(first_b)) = (obs_a.first(), obs_b.first()) else {
        return Err(Error::Config { reason: "empty observation set".into() });
    };
    let dim = first_a.len();
    if first_b.len() != dim {
        return Err(Error::DimensionMismatch { a: dim, b: first_b.len() });
    }
    if obs_a.iter().any(|v| v.len() != dim) || obs_b.iter().any(|v| v.len() != dim) {
        return Err(Error::Config { reason: "ragged observation set".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..projections.max(1) {
        // Random direction on the unit sphere.
        let mut dir = vec![0.0f64; dim];
        loop {
            let mut norm_sq = 0.0;
            for d in dir.iter_mut() {
                *d = StandardNormal.sample(&mut rng);
                norm_sq += *d * *d;
            }
            if norm_sq > 1e-12 {
                let inv = 1.0 / norm_sq.sqrt();
                dir.iter_mut().for_each(|d| *d *= inv);
                break;
            }
        }
        let pa: Vec<f64> = obs_a.iter().map(|v| v.iter().zip(&dir).map(|(x, d)| x * d).sum()).collect();
        let pb: Vec<f64> = obs_b.iter().map(|v| v.iter().zip(&dir).map(|(x, d)| x * d).sum()).collect();
        total += w1_1d(&pa, &pb);
    }
    Ok(total / projections.max(1) as f64)
}

/// Feature-track observations gathered along the reference states of `traj`
/// in the given scene: one flattened 40x5 vector per camera keyframe.
pub fn collect_track_observations(
    traj: &ReferenceTrajectory,
    scene: &SceneConfig,
    camera: &CameraModel,
    tracker_cfg: &TrackerConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let landmarks = scene.generate()?;
    let mut tracker = Tracker::new(*tracker_cfg, *camera);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 / camera.rate_hz;
        if t >= traj.duration() {
            break;
        }
        let (state, _) = traj.sample_at(t);
        let rendered = camera.render_keypoints(&state, &landmarks);
        let frame = tracker.process(state, rendered, &mut rng);
        let arr = sample_tracks(&frame, &mut rng);
        out.push(arr.iter().flatten().map(|v| *v as f64).collect());
        k += 1;
    }
    Ok(out)
}

/// The full landmark cloud as a point set (3-vectors).
pub fn landmark_cloud(scene: &SceneConfig) -> Result<Vec<Vec<f64>>> {
    Ok(scene
        .generate()?
        .iter()
        .map(|p: &Vector3<f64>| vec![p.x, p.y, p.z])
        .collect())
}

/// The pre-abstraction signal along a trajectory: per camera keyframe, the
/// world coordinates of up to 40 visible landmarks (flattened, zero-padded).
/// This is exactly the information the feature-track abstraction consumes;
/// unlike the tracks it is scene-specific.
pub fn collect_landmark_observations(
    traj: &ReferenceTrajectory,
    scene: &SceneConfig,
    camera: &CameraModel,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let landmarks = scene.generate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 / camera.rate_hz;
        if t >= traj.duration() {
            break;
        }
        let (state, _) = traj.sample_at(t);
        let visible = camera.render_keypoints(&state, &landmarks);
        let mut obs = vec![0.0f64; crate::sensing::TRACKS_PER_FRAME * 3];
        let n = visible.len();
        let picks: Vec<usize> = if n <= crate::sensing::TRACKS_PER_FRAME {
            (0..n).collect()
        } else {
            rand::seq::index::sample(&mut rng, n, crate::sensing::TRACKS_PER_FRAME).into_vec()
        };
        for (slot, &idx) in picks.iter().enumerate() {
            let p = &landmarks[visible[idx].0];
            obs[slot * 3] = p.x;
            obs[slot * 3 + 1] = p.y;
            obs[slot * 3 + 2] = p.z;
        }
        out.push(obs);
        k += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn identical_sets_zero() {
        let a: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, -(i as f64)]).collect();
        let d = empirical_wasserstein(&a, &a, 64, 1).unwrap();
        assert_relative_eq!(d, 0.0);
    }

    #[test]
    fn one_d_shift_recovers_delta() {
        let delta = 0.75;
        let a: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 200.0]).collect();
        let b: Vec<Vec<f64>> = a.iter().map(|v| vec![v[0] + delta]).collect();
        // In one dimension the random projections are +-1, so the sliced
        // estimate is exact.
        let d = empirical_wasserstein(&a, &b, 32, 2).unwrap();
        assert_relative_eq!(d, delta, epsilon = 1e-12);
    }

    #[test]
    fn w1_handles_unequal_sizes() {
        // W1 between {0} and {0,1} = 0.5 (move half the mass by 1).
        assert_relative_eq!(w1_1d(&[0.0], &[0.0, 1.0]), 0.5);
        assert_relative_eq!(w1_1d(&[0.0, 0.0], &[1.0, 1.0, 1.0, 1.0]), 1.0);
    }

    #[test]
    fn symmetric_and_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut set = |offset: f64| -> Vec<Vec<f64>> {
            (0..60)
                .map(|_| {
                    (0..3)
                        .map(|_| rng.gen_range(-1.0..1.0) + offset)
                        .collect::<Vec<f64>>()
                })
                .collect()
        };
        let a = set(0.0);
        let b = set(0.8);
        let c = set(-0.5);
        let dab = empirical_wasserstein(&a, &b, 128, 9).unwrap();
        let dba = empirical_wasserstein(&b, &a, 128, 9).unwrap();
        assert_relative_eq!(dab, dba, epsilon = 1e-12);
        let dac = empirical_wasserstein(&a, &c, 128, 9).unwrap();
        let dcb = empirical_wasserstein(&c, &b, 128, 9).unwrap();
        assert!(dab <= dac + dcb + 1e-9, "triangle violated: {dab} > {dac} + {dcb}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = vec![vec![0.0, 1.0]];
        let b = vec![vec![0.0]];
        assert!(matches!(
            empirical_wasserstein(&a, &b, 8, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}

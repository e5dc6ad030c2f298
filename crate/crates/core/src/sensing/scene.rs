//! Randomized landmark clouds standing in for scene geometry.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::FLYING_SPACE_SIDE;
use crate::error::{Error, Result};

/// Landmark cloud parameters. Landmarks fill the flying-space cube outside a
/// clearance box around the flight volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub landmark_count: usize,
    pub seed: u64,
    /// Keep-clear box around the flight volume; landmarks are sampled
    /// outside it. The box floats above the floor so downward-facing camera
    /// poses (loop sides) still see texture below.
    pub clear_half_x: f64,
    pub clear_half_y: f64,
    pub clear_z_bottom: f64,
    pub clear_z_top: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            landmark_count: 4000,
            seed: 7,
            clear_half_x: 14.0,
            clear_half_y: 5.0,
            clear_z_bottom: 0.5,
            clear_z_top: 8.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.landmark_count < 500 {
            return Err(Error::Config {
                reason: format!("landmark count {} < 500", self.landmark_count),
            });
        }
        Ok(())
    }

    /// Deterministic landmark positions; the landmark id is the index.
    ///
    /// The cloud mimics a textured room: most points sit on the floor,
    /// walls, and ceiling of the flying space, with some volumetric clutter.
    /// A pure uniform-volume draw leaves downward-facing camera poses (loop
    /// sides) with an almost empty frustum at this density.
    pub fn generate(&self) -> Result<Vec<Vector3<f64>>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let h = FLYING_SPACE_SIDE / 2.0;
        let side = FLYING_SPACE_SIDE;
        let mut points = Vec::with_capacity(self.landmark_count);
        while points.len() < self.landmark_count {
            let u: f64 = rng.gen();
            let p = if u < 0.4 {
                // Floor.
                Vector3::new(rng.gen_range(-h..h), rng.gen_range(-h..h), rng.gen_range(0.0..0.3))
            } else if u < 0.7 {
                // One of the four walls.
                let wall = rng.gen_range(0..4u8);
                let a = rng.gen_range(-h..h);
                let z = rng.gen_range(0.0..side);
                match wall {
                    0 => Vector3::new(h - rng.gen_range(0.0..0.3), a, z),
                    1 => Vector3::new(-h + rng.gen_range(0.0..0.3), a, z),
                    2 => Vector3::new(a, h - rng.gen_range(0.0..0.3), z),
                    _ => Vector3::new(a, -h + rng.gen_range(0.0..0.3), z),
                }
            } else if u < 0.8 {
                // Ceiling.
                Vector3::new(rng.gen_range(-h..h), rng.gen_range(-h..h), side - rng.gen_range(0.0..0.3))
            } else {
                // Volumetric clutter.
                Vector3::new(rng.gen_range(-h..h), rng.gen_range(-h..h), rng.gen_range(0.0..side))
            };
            let in_clear_box = p.x.abs() < self.clear_half_x
                && p.y.abs() < self.clear_half_y
                && p.z > self.clear_z_bottom
                && p.z < self.clear_z_top;
            if !in_clear_box {
                points.push(p);
            }
        }
        Ok(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_from_seed() {
        let cfg = SceneConfig::default();
        assert_eq!(cfg.generate().unwrap(), cfg.generate().unwrap());
        let other = SceneConfig { seed: 8, ..cfg };
        assert_ne!(cfg.generate().unwrap(), other.generate().unwrap());
    }

    #[test]
    fn respects_bounds_and_clearance() {
        let cfg = SceneConfig::default();
        for p in cfg.generate().unwrap() {
            assert!(crate::dynamics::in_flying_space(&p));
            let inside = p.x.abs() < cfg.clear_half_x
                && p.y.abs() < cfg.clear_half_y
                && p.z > cfg.clear_z_bottom
                && p.z < cfg.clear_z_top;
            assert!(!inside, "landmark {p:?} inside clearance");
        }
    }

    #[test]
    fn too_few_landmarks_rejected() {
        let cfg = SceneConfig { landmark_count: 100, ..Default::default() };
        assert!(cfg.generate().is_err());
    }
}

//! Desk-scale quadrotor acrobatics stack: feasible reference trajectories,
//! a privileged receding-horizon expert, synthetic visual/inertial sensing,
//! an imitation-trained sensorimotor policy, and the benchmark harness
//! around them.

pub mod config;
pub mod dagger;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod exec;
pub mod harness;
pub mod mpc;
pub mod pilots;
pub mod policy;
pub mod sensing;
pub mod sim;
pub mod trajectory;
pub mod wasserstein;

pub use config::AppConfig;
pub use error::{Error, Result};

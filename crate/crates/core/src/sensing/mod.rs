//! Synthetic onboard sensing and the input abstractions the policy consumes.

pub mod camera;
pub mod imu;
pub mod scene;
pub mod tracks;

pub use camera::CameraModel;
pub use imu::{
    preprocess_imu, simulate_imu, ImuBiases, ImuParams, ImuSample, InertialFilter, InertialSignal,
};
pub use scene::SceneConfig;
pub use tracks::{
    epipolar_residual, sample_tracks, track_features, FeatureTrack, Keyframe, TrackArray,
    TrackedFrame, Tracker, TrackerConfig, MIN_TRACKS, TRACKS_PER_FRAME,
};

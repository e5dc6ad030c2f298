//! Dynamically feasible acrobatic references in flat-output space.

pub mod circle;
pub mod flat;
pub mod maneuver;
pub mod polynomial;

pub use circle::{circular_flat_outputs, CircularPrimitive, YawMode, SPEED_MARGIN};
pub use flat::{flatness_transform, flatness_transform_in, AttitudeFrame, FlatOutput};
pub use maneuver::{
    build_endurance_roll, build_maneuver, Maneuver, ManeuverParams, ReferenceTrajectory,
    SAMPLE_DT,
};
pub use polynomial::{
    minimize_segment_time, solve_polynomial_segment, PolynomialSegment, SegmentLimits,
};

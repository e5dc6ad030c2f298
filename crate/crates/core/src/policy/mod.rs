//! The sensorimotor student: three asynchronous input branches fused by a
//! synchronous head, with hand-written backprop and an adaptive-moment
//! optimizer.

pub mod adam;
pub mod checkpoint;
pub mod events;
pub mod input;
pub mod layers;
pub mod net;
pub mod real;
pub mod train;

pub use adam::Adam;
pub use checkpoint::CheckpointMeta;
pub use events::{policy_event, BranchBuffers, InputSnapshot, PolicyEvent};
pub use input::InputNorm;
pub use net::{
    Branch, OutputSquash, PolicyNet, TrackFrame, Workspace, ACTION_DIM, BRANCH_DIM, HIST,
    INERTIAL_DIM, REFERENCE_DIM,
};
pub use real::Real;
pub use train::{batch_loss_and_grads, train_step, ExampleRef};

//! Kinematic simulator and goal-conditioned learning suite for a da Vinci
//! patient-side manipulator.

pub mod codec;
pub mod envs;
pub mod error;
pub mod kinematics;
pub mod learner;
pub mod neural;
pub mod rollout;
pub mod sim;

pub use error::{Error, Result};

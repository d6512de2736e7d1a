//! Tool kinematics of the PSM EndoWrists: DH forward kinematics, the closed-form
//! suction-tool inverse, and a damped-least-squares numeric inverse.

mod dh;
mod ik;
mod tool;

pub use dh::{dh_transform, ToolPose};
pub use ik::{
    ik_numeric, ik_suction, suction_singular_direction, DlsOptions, IkError, IkSolution,
    AXIS_SINGULAR_TOL, WRIST_SINGULAR_TOL,
};
pub use tool::{DhRow, JointBinding, JointKind, JointLimit, ToolKinematics};

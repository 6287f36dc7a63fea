//! Desk-scale software stack for a quadruped litter-collecting robot: a
//! weighted-task differential IK over an arm plus base height/pitch, mask
//! and depth based bottle pose estimation, locomotion observation and reward
//! math, the primitive-sequencing mission state machine, and a kinematic
//! simulator with a ray-cast depth camera.

pub mod geometry;
pub mod ik;
pub mod kinematics;
pub mod locomotion;
pub mod mission;
pub mod par;
pub mod perception;
pub mod qp;
pub mod sim;

pub use geometry::{Intrinsics, Pose, Vec3};
pub use kinematics::{ChainModel, Frame, JointVector};
pub use par::Exec;

//! Grasp adjudication.

use serde::{Deserialize, Serialize};

use super::scene::Bottle;
use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspTolerance {
    /// Max tool-to-center distance (m).
    pub position: f64,
    /// Max tilt of the closing axis out of the plane normal to the bottle
    /// axis (deg).
    pub alignment_deg: f64,
}

impl Default for GraspTolerance {
    fn default() -> Self {
        Self {
            position: 0.02,
            alignment_deg: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspCheck {
    pub success: bool,
    pub position_error: f64,
    pub alignment_error_deg: f64,
}

/// Closing the gripper at `tool` (tool y = closing axis) holds `bottle` iff
/// the tool origin is near the center and the closing axis is close to
/// perpendicular to the bottle axis.
pub fn check_grasp(tool: &Pose, bottle: &Bottle, tol: &GraspTolerance) -> GraspCheck {
    let position_error = (tool.translation - bottle.center).norm();
    let closing = tool.axis(1);
    let s = closing.dot(&bottle.axis.normalize()).abs().min(1.0);
    let alignment_error_deg = s.asin().to_degrees();
    GraspCheck {
        success: position_error <= tol.position && alignment_error_deg <= tol.alignment_deg,
        position_error,
        alignment_error_deg,
    }
}

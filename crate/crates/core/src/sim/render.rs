//! Ray-cast depth and per-bottle masks.
//!
//! Depth is the camera-frame z of the nearest hit. Rays are cast through
//! pixel centers with the direction `K⁻¹ (u, v, 1)`, so the ray parameter of
//! a hit equals its depth.

use super::scene::{Bottle, SceneConfig};
use super::{RobotState, SimError};
use crate::geometry::{Intrinsics, Pose, Vec3};
use crate::kinematics::{ChainModel, Frame};
use crate::par::{for_each_chunk_mut, Exec};
use crate::perception::{DepthMap, Mask};

const T_MIN: f64 = 1e-9;
const GROUND: i32 = -1;
const MISS: i32 = -2;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub depth: DepthMap,
    /// One mask per input bottle slot; absent bottles get an empty mask.
    pub masks: Vec<Mask>,
}

/// Nearest positive hit of `o + t·d` with a capped cylinder.
pub fn ray_cylinder(o: &Vec3, d: &Vec3, b: &Bottle) -> Option<f64> {
    let a = b.axis;
    let w = o - b.center;
    let wa = w.dot(&a);
    let da = d.dot(&a);
    let w_perp = w - a * wa;
    let d_perp = d - a * da;
    let mut best: Option<f64> = None;
    let mut take = |t: f64| {
        if t > T_MIN && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };

    let qa = d_perp.dot(&d_perp);
    if qa > 1e-18 {
        let qb = 2.0 * w_perp.dot(&d_perp);
        let qc = w_perp.dot(&w_perp) - b.radius * b.radius;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let s = disc.sqrt();
            // Stable root pair.
            let q = -0.5 * (qb + qb.signum() * s);
            let roots = if q != 0.0 { [q / qa, qc / q] } else { [0.0, 0.0] };
            for t in roots {
                if (wa + t * da).abs() <= b.half_length {
                    take(t);
                }
            }
        }
    }
    if da.abs() > 1e-18 {
        for cap in [-b.half_length, b.half_length] {
            let t = (cap - wa) / da;
            if (w_perp + d_perp * t).norm_squared() <= b.radius * b.radius {
                take(t);
            }
        }
    }
    best
}

/// Nearest positive hit with the horizontal plane `z = ground_z`.
pub fn ray_ground(o: &Vec3, d: &Vec3, ground_z: f64) -> Option<f64> {
    if d.z >= 0.0 {
        return None;
    }
    let t = (ground_z - o.z) / d.z;
    (t > T_MIN).then_some(t)
}

/// Renders from an explicit camera pose (camera-to-world, +z forward, +x
/// right, +y down). `None` bottle slots are skipped.
pub fn render_view(
    camera_in_world: &Pose,
    k: &Intrinsics,
    bottles: &[Option<Bottle>],
    ground_z: Option<f64>,
    max_range: f64,
    exec: Exec,
) -> RenderOutput {
    let (w, h) = (k.width as usize, k.height as usize);
    let mut hits = vec![(0f32, MISS); w * h];
    let o = camera_in_world.translation;
    for_each_chunk_mut(exec, &mut hits, w.max(1), |row, px| {
        for (col, out) in px.iter_mut().enumerate() {
            let d = camera_in_world.rotation * k.ray(col as f64, row as f64);
            let mut best = (f64::INFINITY, MISS);
            for (i, b) in bottles.iter().enumerate() {
                if let Some(t) = b.as_ref().and_then(|b| ray_cylinder(&o, &d, b)) {
                    if t < best.0 {
                        best = (t, i as i32);
                    }
                }
            }
            if let Some(t) = ground_z.and_then(|g| ray_ground(&o, &d, g)) {
                if t < best.0 {
                    best = (t, GROUND);
                }
            }
            if best.0.is_finite() && best.0 <= max_range {
                *out = (best.0 as f32, best.1);
            }
        }
    });
    let depth = DepthMap {
        width: k.width,
        height: k.height,
        data: hits.iter().map(|(z, _)| *z).collect(),
    };
    let masks = (0..bottles.len())
        .map(|i| Mask {
            width: k.width,
            height: k.height,
            data: hits.iter().map(|(_, id)| *id == i as i32).collect(),
        })
        .collect();
    RenderOutput { depth, masks }
}

/// Renders the scene's static bottles from the robot's camera.
pub fn render_depth(
    scene: &SceneConfig,
    state: &RobotState,
    model: &ChainModel,
    exec: Exec,
) -> Result<RenderOutput, SimError> {
    let model = scene.camera_model(model)?;
    let cam = state.frame_in_world(&model, Frame::Camera, scene.ground_z)?;
    let bottles: Vec<Option<Bottle>> = scene.bottles.iter().copied().map(Some).collect();
    Ok(render_view(
        &cam,
        &scene.camera.intrinsics,
        &bottles,
        Some(scene.ground_z),
        scene.camera.max_range,
        exec,
    ))
}

//! Bottle center and principal-axis estimation from a binary mask, an
//! aligned depth map and pinhole intrinsics.

pub mod io;
pub mod mask;

use nalgebra::{Matrix3, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Intrinsics, Pose, Vec3};
pub use mask::{mask_centroid, mask_covariance, principal_axis_2d, refine_mask, Mask};

/// Pixel radius searched when snapping a representative point.
pub const SNAP_RADIUS: f64 = 5.0;
/// Representative points sit at `±SPREAD·σ` along the 2D axis.
pub const SPREAD: f64 = 1.0;
/// Mask points farther than this many radii from the surface line are
/// ignored when measuring the axial extent.
pub const CLOUD_REACH: f64 = 2.5;
/// Endpoints closer than this (meters) give an invalid estimate.
pub const MIN_AXIS_LENGTH: f64 = 1e-3;
pub const DEFAULT_BETA: f64 = 0.4;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("mask has {0} foreground pixels, need at least 2")]
    DegenerateMask(usize),
    #[error("size mismatch: {what} is {actual:?}, expected {expected:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("estimate is in the {actual:?} frame, expected {expected:?}")]
    FrameMismatch { expected: EstimateFrame, actual: EstimateFrame },
    #[error("bottle axis is within 1 degree of the approach direction")]
    DegenerateApproach,
    #[error("estimate is not valid")]
    InvalidEstimate,
    #[error("smoothing factor {0} outside (0, 1]")]
    InvalidBeta(f64),
    #[error("malformed {kind} file: {detail}")]
    Format { kind: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Row-major depth raster in meters; 0 marks an invalid sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> f32) -> Self {
        let mut d = Self::new(width, height);
        for v in 0..height {
            for u in 0..width {
                d.data[(v * width + u) as usize] = sanitize(f(u, v));
            }
        }
        d
    }

    /// Depth at `(u, v)` if valid.
    #[inline]
    pub fn get(&self, u: u32, v: u32) -> Option<f64> {
        let z = self.data[(v * self.width + u) as usize];
        (z > 0.0 && z.is_finite()).then_some(z as f64)
    }
}

fn sanitize(z: f32) -> f32 {
    if z > 0.0 && z.is_finite() {
        z
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateFrame {
    Camera,
    Base,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BottleEstimate {
    pub center: Vec3,
    /// Unit principal axis when `valid`.
    pub axis: Vec3,
    pub frame: EstimateFrame,
    pub valid: bool,
}

impl BottleEstimate {
    pub fn invalid(frame: EstimateFrame) -> Self {
        Self {
            center: Vec3::zeros(),
            axis: Vec3::zeros(),
            frame,
            valid: false,
        }
    }
}

/// Nearest foreground pixel with valid depth to `p`, within the snap radius.
/// Ties go to the first candidate in raster order.
fn snap(mask: &Mask, depth: &DepthMap, p: Vector2<f64>) -> Option<(u32, u32)> {
    let r = SNAP_RADIUS;
    let u0 = (p.x - r).ceil().max(0.0) as i64;
    let v0 = (p.y - r).ceil().max(0.0) as i64;
    let u1 = (p.x + r).floor().min(mask.width as f64 - 1.0) as i64;
    let v1 = (p.y + r).floor().min(mask.height as f64 - 1.0) as i64;
    let mut best: Option<((u32, u32), f64)> = None;
    for v in v0..=v1 {
        for u in u0..=u1 {
            let (u, v) = (u as u32, v as u32);
            if !mask.get(u, v) || depth.get(u, v).is_none() {
                continue;
            }
            let d2 = (u as f64 - p.x).powi(2) + (v as f64 - p.y).powi(2);
            if d2 <= r * r && best.map_or(true, |(_, b)| d2 < b) {
                best = Some(((u, v), d2));
            }
        }
    }
    best.map(|(px, _)| px)
}

/// Median of the valid foreground depths in the 3×3 window around `(u, v)`.
fn window_median(mask: &Mask, depth: &DepthMap, u: u32, v: u32) -> Option<f64> {
    let mut zs = Vec::with_capacity(9);
    for y in v.saturating_sub(1)..=(v + 1).min(mask.height - 1) {
        for x in u.saturating_sub(1)..=(u + 1).min(mask.width - 1) {
            if mask.get(x, y) {
                if let Some(z) = depth.get(x, y) {
                    zs.push(z);
                }
            }
        }
    }
    if zs.is_empty() {
        return None;
    }
    zs.sort_by(f64::total_cmp);
    let n = zs.len();
    Some(if n % 2 == 1 {
        zs[n / 2]
    } else {
        0.5 * (zs[n / 2 - 1] + zs[n / 2])
    })
}

fn check_dims(what: &'static str, expected: (u32, u32), actual: (u32, u32)) -> Result<(), PerceptionError> {
    if expected != actual {
        return Err(PerceptionError::DimensionMismatch { what, expected, actual });
    }
    Ok(())
}

/// Camera-frame center and axis from an (already refined) mask.
pub fn estimate_axis_3d(mask: &Mask, depth: &DepthMap, k: &Intrinsics) -> Result<BottleEstimate, PerceptionError> {
    let dims = (mask.width, mask.height);
    check_dims("depth map", dims, (depth.width, depth.height))?;
    check_dims("intrinsics", dims, (k.width, k.height))?;
    let centroid = mask_centroid(mask)?;
    let invalid = BottleEstimate::invalid(EstimateFrame::Camera);
    let cov = match mask_covariance(mask) {
        Ok(c) => c,
        Err(PerceptionError::DegenerateMask(_)) => return Ok(invalid),
        Err(e) => return Err(e),
    };
    let (lambda, axis2d) = principal_axis_2d(&cov);
    let s = SPREAD * lambda.max(0.0).sqrt();

    let mut ends = [Vec3::zeros(); 2];
    for (end, sign) in ends.iter_mut().zip([-1.0, 1.0]) {
        let Some((u, v)) = snap(mask, depth, centroid + axis2d * (sign * s)) else {
            return Ok(invalid);
        };
        let Some(z) = window_median(mask, depth, u, v) else {
            return Ok(invalid);
        };
        *end = k.back_project(u as f64, v as f64, z)?;
    }
    let [p1, p2] = ends;
    let length = (p2 - p1).norm();
    if length < MIN_AXIS_LENGTH {
        return Ok(invalid);
    }
    let axis = (p2 - p1) / length;
    let mid = 0.5 * (p1 + p2);
    // Radius from the mask width: a strip of width 2r has variance r²/3.
    let lambda_min = (cov.trace() - lambda).max(0.0);
    let radius = (3.0 * lambda_min).sqrt() * mid.z / (0.5 * (k.fx + k.fy));
    Ok(BottleEstimate {
        center: axial_center(mask, depth, k, mid, axis, radius)?,
        axis,
        frame: EstimateFrame::Camera,
        valid: true,
    })
}

/// Center on the bottle axis. `mid` lies on the visible surface line through
/// the representative points; the axial position comes from the extent of
/// the back-projected mask points near that line, and the result is pushed
/// one radius away from the camera, perpendicular to the axis.
fn axial_center(mask: &Mask, depth: &DepthMap, k: &Intrinsics, mid: Vec3, axis: Vec3, radius: f64) -> Result<Vec3, PerceptionError> {
    let reach = CLOUD_REACH * radius;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (u, v) in mask.pixels() {
        let Some(z) = depth.get(u, v) else { continue };
        let d = k.back_project(u as f64, v as f64, z)? - mid;
        let t = d.dot(&axis);
        if (d - axis * t).norm() <= reach {
            lo = lo.min(t);
            hi = hi.max(t);
        }
    }
    let on_line = if lo <= hi { mid + axis * (0.5 * (lo + hi)) } else { mid };
    let ray = on_line.normalize();
    let away = (ray - axis * ray.dot(&axis)).try_normalize(1e-9).unwrap_or_else(Vec3::zeros);
    Ok(on_line + away * radius)
}

/// Sign-consistent exponential smoothing of successive estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stabilizer {
    pub beta: f64,
    pub prev: Option<BottleEstimate>,
}

impl Default for Stabilizer {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            prev: None,
        }
    }
}

impl Stabilizer {
    pub fn new(beta: f64) -> Result<Self, PerceptionError> {
        let s = Self { beta, prev: None };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(PerceptionError::InvalidBeta(self.beta));
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.prev = None;
    }

    /// Folds `new` into the state. Invalid input leaves the state alone and
    /// returns the previous estimate (or `new` itself if there is none).
    pub fn update(&mut self, new: BottleEstimate) -> BottleEstimate {
        if !new.valid {
            return self.prev.unwrap_or(new);
        }
        let out = match self.prev {
            Some(prev) if prev.frame == new.frame => {
                let a_new = if new.axis.dot(&prev.axis) < 0.0 { -new.axis } else { new.axis };
                let b = self.beta;
                let blended = a_new * b + prev.axis * (1.0 - b);
                BottleEstimate {
                    center: new.center * b + prev.center * (1.0 - b),
                    // Antiparallel inputs were flipped above, so the blend
                    // only vanishes if both axes are zero.
                    axis: blended.try_normalize(f64::EPSILON).unwrap_or(a_new),
                    frame: new.frame,
                    valid: true,
                }
            }
            Some(prev) => {
                log::warn!("stabilizer frame changed from {:?} to {:?}; restarting", prev.frame, new.frame);
                new
            }
            None => new,
        };
        self.prev = Some(out);
        out
    }
}

pub fn to_base_frame(e: &BottleEstimate, camera_in_base: &Pose) -> Result<BottleEstimate, PerceptionError> {
    if e.frame != EstimateFrame::Camera {
        return Err(PerceptionError::FrameMismatch {
            expected: EstimateFrame::Camera,
            actual: e.frame,
        });
    }
    Ok(BottleEstimate {
        center: camera_in_base.transform_point(&e.center),
        axis: camera_in_base.transform_vector(&e.axis),
        frame: EstimateFrame::Base,
        valid: e.valid,
    })
}

/// Tool pose for grasping a base-frame estimate. The tool z axis (approach)
/// points from the base origin toward the center, projected perpendicular to
/// the bottle axis; tool y (closing) is `approach × axis`; tool x completes the
/// frame and lies along the bottle axis. `approach_offset > 0` backs the
/// position off along −z.
pub fn grasp_pose_from_estimate(e: &BottleEstimate, approach_offset: f64) -> Result<Pose, PerceptionError> {
    if !e.valid {
        return Err(PerceptionError::InvalidEstimate);
    }
    if e.frame != EstimateFrame::Base {
        return Err(PerceptionError::FrameMismatch {
            expected: EstimateFrame::Base,
            actual: e.frame,
        });
    }
    let a = e.axis.normalize();
    let dir = e.center.try_normalize(1e-12).ok_or(PerceptionError::DegenerateApproach)?;
    if a.dot(&dir).abs() >= 1f64.to_radians().cos() {
        return Err(PerceptionError::DegenerateApproach);
    }
    let approach = (dir - a * a.dot(&dir)).normalize();
    let closing = approach.cross(&a).normalize();
    let x = closing.cross(&approach);
    let rotation = Matrix3::from_columns(&[x, closing, approach]);
    Ok(Pose::new(rotation, e.center - approach * approach_offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn estimate(center: Vec3, axis: Vec3, frame: EstimateFrame) -> BottleEstimate {
        BottleEstimate {
            center,
            axis,
            frame,
            valid: true,
        }
    }

    #[test]
    fn horizontal_line_at_constant_depth() {
        let (w, h) = (101, 61);
        let k = Intrinsics::new(100.0, 100.0, 50.0, 30.0, w, h).unwrap();
        let mask = Mask::from_fn(w, h, |u, v| v == 30 && (30..=70).contains(&u));
        let depth = DepthMap::from_fn(w, h, |_, _| 2.0);
        let e = estimate_axis_3d(&mask, &depth, &k).unwrap();
        assert!(e.valid);
        assert_relative_eq!(e.axis, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(e.center, Vec3::new(0.0, 0.0, 2.0), epsilon = 1e-12);

        // Oracle: σ² = Σk²/(N−1) over k = −20..20, s = 1.5σ, snap = round.
        let var: f64 = (-20..=20).map(|k: i32| (k * k) as f64).sum::<f64>() / 40.0;
        let s = 1.5 * var.sqrt();
        let du = s.round();
        let p2 = k.back_project(50.0 + du, 30.0, 2.0).unwrap();
        let p1 = k.back_project(50.0 - du, 30.0, 2.0).unwrap();
        assert_relative_eq!(e.center, 0.5 * (p1 + p2), epsilon = 1e-12);
    }

    #[test]
    fn collapsed_endpoints_are_invalid() {
        let k = Intrinsics::new(100.0, 100.0, 10.0, 10.0, 20, 20).unwrap();
        let depth = DepthMap::from_fn(20, 20, |_, _| 1.0);
        let mut one = Mask::new(20, 20);
        one.set(4, 4, true);
        assert!(!estimate_axis_3d(&one, &depth, &k).unwrap().valid);
        // Only one pixel of the pair has depth, so both ends snap onto it.
        let two = Mask::from_fn(20, 20, |u, v| v == 4 && (u == 4 || u == 5));
        let holes = DepthMap::from_fn(20, 20, |u, _| if u == 5 { 0.0 } else { 1.0 });
        assert!(!estimate_axis_3d(&two, &holes, &k).unwrap().valid);
        assert!(estimate_axis_3d(&two, &depth, &k).unwrap().valid);
        assert!(matches!(
            estimate_axis_3d(&Mask::new(20, 20), &depth, &k),
            Err(PerceptionError::EmptyMask)
        ));
    }

    #[test]
    fn missing_depth_is_invalid() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 30.0, 101, 61).unwrap();
        let mask = Mask::from_fn(101, 61, |u, v| v == 30 && (30..=70).contains(&u));
        let depth = DepthMap::from_fn(101, 61, |u, _| if u > 50 { 0.0 } else { 2.0 });
        assert!(!estimate_axis_3d(&mask, &depth, &k).unwrap().valid);
    }

    #[test]
    fn median_ignores_invalid_and_background() {
        let mask = Mask::from_fn(5, 5, |u, _| u >= 1);
        let depth = DepthMap::from_fn(5, 5, |u, v| match (u, v) {
            (0, _) => 100.0,
            (1, 1) => 0.0,
            _ => (u + v) as f32,
        });
        // Window around (1, 2), foreground columns 1..=2 minus the hole:
        // (1,1)=invalid, (2,1)=3, (1,2)=3, (2,2)=4, (1,3)=4, (2,3)=5 → median 4.
        assert_eq!(window_median(&mask, &depth, 1, 2), Some(4.0));
    }

    #[test]
    fn dimension_checks() {
        let k = Intrinsics::new(100.0, 100.0, 5.0, 5.0, 10, 10).unwrap();
        let r = estimate_axis_3d(&Mask::new(10, 10), &DepthMap::new(10, 9), &k);
        assert!(matches!(r, Err(PerceptionError::DimensionMismatch { .. })));
    }

    #[test]
    fn stabilize_examples() {
        let ax = Vec3::x();
        let mut s = Stabilizer::new(1.0).unwrap();
        s.update(estimate(Vec3::new(0.0, 0.0, 2.0), ax, EstimateFrame::Camera));
        let out = s.update(estimate(Vec3::new(1.0, 0.0, 2.0), -ax, EstimateFrame::Camera));
        assert_eq!(out.axis, ax);
        assert_eq!(out.center, Vec3::new(1.0, 0.0, 2.0));

        let mut s = Stabilizer::new(0.3).unwrap();
        s.update(estimate(Vec3::zeros(), ax, EstimateFrame::Camera));
        assert_relative_eq!(s.update(estimate(Vec3::zeros(), -ax, EstimateFrame::Camera)).axis, ax);

        let mut s = Stabilizer::new(0.5).unwrap();
        s.update(estimate(Vec3::new(0.0, 0.0, 2.0), ax, EstimateFrame::Camera));
        let out = s.update(estimate(Vec3::new(0.0, 0.0, 3.0), ax, EstimateFrame::Camera));
        assert_relative_eq!(out.center, Vec3::new(0.0, 0.0, 2.5), epsilon = 1e-15);

        let before = s.prev;
        let out = s.update(BottleEstimate::invalid(EstimateFrame::Camera));
        assert_eq!(Some(out), before);
        assert_eq!(s.prev, before);

        assert!(matches!(Stabilizer::new(0.0), Err(PerceptionError::InvalidBeta(_))));
        assert!(matches!(Stabilizer::new(1.5), Err(PerceptionError::InvalidBeta(_))));
    }

    #[test]
    fn base_frame_examples() {
        let e = estimate(Vec3::new(0.1, 0.2, 1.0), Vec3::x(), EstimateFrame::Camera);
        let b = to_base_frame(&e, &Pose::identity()).unwrap();
        assert_eq!((b.center, b.axis, b.frame), (e.center, e.axis, EstimateFrame::Base));
        let b = to_base_frame(&e, &Pose::from_translation(Vec3::z())).unwrap();
        assert_eq!(b.center, e.center + Vec3::z());
        assert_eq!(b.axis, e.axis);
        let b = to_base_frame(&e, &Pose::from_axis_angle(Vec3::z(), FRAC_PI_2)).unwrap();
        assert_relative_eq!(b.axis, Vec3::y(), epsilon = 1e-15);
        assert!(matches!(to_base_frame(&b, &Pose::identity()), Err(PerceptionError::FrameMismatch { .. })));
    }

    #[test]
    fn grasp_pose_examples() {
        let e = estimate(Vec3::new(0.5, 0.0, 0.1), Vec3::x(), EstimateFrame::Base);
        let p = grasp_pose_from_estimate(&e, 0.0).unwrap();
        assert_eq!(p.translation, e.center);
        let (x, y, z) = (p.axis(0), p.axis(1), p.axis(2));
        assert!(y.dot(&Vec3::x()).abs() < 1e-12);
        // Hand construction: d = (0.5, 0, 0.1), perpendicular part (0, 0, 0.1).
        assert_relative_eq!(z, Vec3::z(), epsilon = 1e-12);
        assert_relative_eq!(y, Vec3::y(), epsilon = 1e-12);
        assert_relative_eq!(x, Vec3::x(), epsilon = 1e-12);
        assert_relative_eq!(p.rotation.determinant(), 1.0, epsilon = 1e-12);

        let q = grasp_pose_from_estimate(&e, 0.1).unwrap();
        assert_relative_eq!(q.translation, e.center - 0.1 * z, epsilon = 1e-12);
        assert_eq!(q.rotation, p.rotation);

        let along = estimate(Vec3::new(0.5, 0.0, 0.0), Vec3::x(), EstimateFrame::Base);
        assert!(matches!(grasp_pose_from_estimate(&along, 0.0), Err(PerceptionError::DegenerateApproach)));
        let mut bad = e;
        bad.valid = false;
        assert!(matches!(grasp_pose_from_estimate(&bad, 0.0), Err(PerceptionError::InvalidEstimate)));
        let cam = estimate(e.center, e.axis, EstimateFrame::Camera);
        assert!(matches!(grasp_pose_from_estimate(&cam, 0.0), Err(PerceptionError::FrameMismatch { .. })));
    }

    fn unit() -> impl Strategy<Value = Vec3> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter_map("nonzero", |(x, y, z)| Vec3::new(x, y, z).try_normalize(1e-3))
    }

    fn point() -> impl Strategy<Value = Vec3> {
        (-3.0f64..3.0, -3.0f64..3.0, 0.1f64..5.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn stabilize_stays_unit_and_convex(
            beta in 0.01f64..=1.0, c0 in point(), c1 in point(), a0 in unit(), a1 in unit()
        ) {
            let mut s = Stabilizer::new(beta).unwrap();
            s.update(estimate(c0, a0, EstimateFrame::Camera));
            let out = s.update(estimate(c1, a1, EstimateFrame::Camera));
            prop_assert!((out.axis.norm() - 1.0).abs() < 1e-9);
            // On the segment: collinear with and between the endpoints.
            let seg = c1 - c0;
            let t = if seg.norm() > 0.0 { (out.center - c0).dot(&seg) / seg.norm_squared() } else { 0.0 };
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&t));
            prop_assert!((c0 + seg * t - out.center).norm() < 1e-9);
        }

        #[test]
        fn grasp_frame_is_orthonormal(c in point(), a in unit()) {
            let e = estimate(c, a, EstimateFrame::Base);
            if let Ok(p) = grasp_pose_from_estimate(&e, 0.05) {
                let r = p.rotation;
                prop_assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-9);
                prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
                prop_assert!(p.axis(1).dot(&a).abs() < 1e-9);
                prop_assert!(p.axis(2).dot(&a).abs() < 1e-9);
            }
        }
    }
}

//! Rigid transforms and the pinhole camera model.
//!
//! Camera frame convention, used everywhere in this crate: +Z along the
//! optical axis, +X to the right of the image, +Y down the image. Pixel
//! `(u, v)` with integer coordinates is the *center* of column `u`, row `v`.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("depth must be positive, got {0}")]
    InvalidDepth(f64),
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    OutOfImage { u: f64, v: f64, width: u32, height: u32 },
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Rigid transform: `p_parent = rotation * p_child + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self::new(*rot.matrix(), Vec3::zeros())
    }

    /// Builds a pose from a (w, x, y, z) quaternion, normalizing it first.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64, translation: Vec3) -> Self {
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z));
        Self::new(*q.to_rotation_matrix().matrix(), translation)
    }

    /// Quaternion as (w, x, y, z) with w >= 0.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            self.rotation,
        ));
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    pub fn with_translation(mut self, translation: Vec3) -> Self {
        self.translation = translation;
        self
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Column `i` of the rotation: the child frame's i-th axis in the parent.
    pub fn axis(&self, i: usize) -> Vec3 {
        self.rotation.column(i).into_owned()
    }
}

/// Rotation vector (log map) of a rotation matrix.
pub fn rotation_log(r: &Matrix3<f64>) -> Vec3 {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r)).scaled_axis()
}

/// Re-orthonormalizes a nearly orthonormal matrix.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    *UnitQuaternion::from_matrix(r).to_rotation_matrix().matrix()
}

/// Rotation whose columns are the given frame axes.
///
/// `x` and `z` are orthogonalized (z kept), y completes a right-handed frame.
pub fn frame_from_xz(x: &Vec3, z: &Vec3) -> Matrix3<f64> {
    let z = z.normalize();
    let x = (x - z * x.dot(&z)).normalize();
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

// Serialized form: quaternion (w, x, y, z) plus translation.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    #[serde(default = "identity_quat")]
    rotation: [f64; 4],
    #[serde(default)]
    translation: [f64; 3],
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseRepr {
            rotation: self.quaternion(),
            translation: self.translation.into(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = PoseRepr::deserialize(d)?;
        let [w, x, y, z] = r.rotation;
        if !(w * w + x * x + y * y + z * z).is_normal() {
            return Err(serde::de::Error::custom("zero quaternion"));
        }
        Ok(Pose::from_quaternion(w, x, y, z, r.translation.into()))
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64) {
            return bad("cx outside image");
        }
        if !(0.0 <= self.cy && self.cy < self.height as f64) {
            return bad("cy outside image");
        }
        Ok(())
    }

    /// Scales focal lengths and principal point for a resized image.
    pub fn scaled(&self, width: u32, height: u32) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
        }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Lifts pixel `(u, v)` with depth `z` to a camera-frame point.
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> Result<Vec3, GeometryError> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(GeometryError::InvalidDepth(z));
        }
        if !self.contains(u, v) {
            return Err(GeometryError::OutOfImage {
                u,
                v,
                width: self.width,
                height: self.height,
            });
        }
        Ok(Vec3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z))
    }

    /// Projects a camera-frame point to `(u, v, z)`. No bounds check on `(u, v)`.
    pub fn project(&self, p: &Vec3) -> Result<(f64, f64, f64), GeometryError> {
        if !(p.z > 0.0) {
            return Err(GeometryError::BehindCamera(p.z));
        }
        Ok((
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
            p.z,
        ))
    }

    /// Unnormalized camera-frame ray through pixel `(u, v)` with unit z.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

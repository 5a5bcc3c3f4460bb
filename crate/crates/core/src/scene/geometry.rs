//! Pinhole devices, rigid poses and rays.
//!
//! Device frames follow the usual computer-vision convention: x to the right,
//! y down, z along the optical axis. A [`Pose`] maps device coordinates into
//! world coordinates.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Focal lengths and principal point, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy }
    }

    /// Square pixels with the principal point at the raster centre.
    pub fn centered(focal: f64, width: usize, height: usize) -> Self {
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0)
    }
}

/// Rigid transform from a device frame into the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// World-from-device rotation; its columns are the device axes in world coordinates.
    pub rotation: Matrix3<f64>,
    /// Optical centre in world coordinates.
    pub position: Vec3,
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
            position: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, position: Vec3) -> Result<Self> {
        let pose = Self { rotation, position };
        pose.validate()?;
        Ok(pose)
    }

    pub fn from_position(position: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            position,
        }
    }

    /// Pose at `position` whose optical axis points at `target`; `down` fixes the roll
    /// (the device y axis ends up as close to `down` as possible).
    pub fn look_at(position: Vec3, target: Vec3, down: Vec3) -> Result<Self> {
        let z = (target - position)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidScene("look_at target equals position".into()))?;
        let x = down
            .cross(&z)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidScene("look_at down vector parallel to axis".into()))?;
        let y = z.cross(&x);
        Self::new(Matrix3::from_columns(&[x, y, z]), position)
    }

    pub fn validate(&self) -> Result<()> {
        let err = (self.rotation * self.rotation.transpose() - Matrix3::identity()).amax();
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidScene(format!(
                "rotation is not orthonormal (|R·Rᵀ - I| = {err:e})"
            )));
        }
        if self.rotation.determinant() <= 0.0 {
            return Err(Error::InvalidScene("rotation has negative determinant".into()));
        }
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidScene("pose position is not finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.position
    }

    #[inline]
    pub fn to_device(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.position)
    }

    #[inline]
    pub fn dir_to_world(&self, d: &Vec3) -> Vec3 {
        self.rotation * d
    }

    #[inline]
    pub fn dir_to_device(&self, d: &Vec3) -> Vec3 {
        self.rotation.transpose() * d
    }

    /// `other ∘ self`: applies `self` first, then `other`.
    pub fn then(&self, other: &Pose) -> Pose {
        Pose {
            rotation: other.rotation * self.rotation,
            position: other.to_world(&self.position),
        }
    }
}

/// A half-line with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Self {
            origin,
            dir: dir.normalize(),
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

/// An ideal pinhole device: a projector or the calibration camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Pinhole {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    pub pose: Pose,
}

impl Pinhole {
    pub fn new(width: usize, height: usize, intrinsics: Intrinsics, pose: Pose) -> Result<Self> {
        let p = Self {
            width,
            height,
            intrinsics,
            pose,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidScene("resolution must be positive".into()));
        }
        if self.width > u16::MAX as usize || self.height > u16::MAX as usize {
            return Err(Error::InvalidScene("resolution exceeds 65535".into()));
        }
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) || !k.cx.is_finite() || !k.cy.is_finite() {
            return Err(Error::InvalidScene("focal lengths must be positive".into()));
        }
        self.pose.validate()
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn center(&self) -> Vec3 {
        self.pose.position
    }

    /// Ray through continuous image coordinates `(u, v)`; pixel `(x, y)` covers
    /// `[x, x+1) × [y, y+1)`.
    pub fn ray_through(&self, u: f64, v: f64) -> Ray {
        let k = &self.intrinsics;
        let d = Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        Ray::new(self.pose.position, self.pose.dir_to_world(&d))
    }

    /// Ray through the centre of pixel `(x, y)`.
    #[inline]
    pub fn pixel_ray(&self, x: usize, y: usize) -> Ray {
        self.ray_through(x as f64 + 0.5, y as f64 + 0.5)
    }

    /// Continuous image coordinates of a world point in front of the device.
    #[inline]
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        let d = self.pose.to_device(p);
        if !(d.z > 1e-12) {
            return None;
        }
        let k = &self.intrinsics;
        Some((k.fx * d.x / d.z + k.cx, k.fy * d.y / d.z + k.cy))
    }

    /// Like [`Self::project`] but `None` outside the raster.
    #[inline]
    pub fn project_in_raster(&self, p: &Vec3) -> Option<(f64, f64)> {
        let (u, v) = self.project(p)?;
        (u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64).then_some((u, v))
    }

    /// Pixel containing the projection of `p`, if inside the raster.
    #[inline]
    pub fn pixel_of(&self, p: &Vec3) -> Option<(usize, usize)> {
        let (u, v) = self.project_in_raster(p)?;
        Some((u as usize, v as usize))
    }
}

//! Projectors, target surfaces and the calibration camera, plus the ray casting
//! that links their pixels.

mod file;
mod geometry;
mod heightfield;

pub use file::{load_depth_png, load_depth_text, save_depth_text};
pub use geometry::{Intrinsics, Pinhole, Pose, Ray, Vec3};
pub use heightfield::HeightField;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::calib::GammaModel;
use crate::error::{Error, Result};
use crate::procedural::Procedural;
use crate::solver::SolverBounds;
use crate::system::Convention;

/// One projector: its pinhole geometry and photometric response.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorModel {
    pub id: usize,
    pub pinhole: Pinhole,
    /// Response per colour channel; a single entry applies to every channel.
    pub gamma: Vec<GammaModel>,
}

impl ProjectorModel {
    pub fn gamma_for(&self, channel: usize) -> &GammaModel {
        &self.gamma[channel.min(self.gamma.len() - 1)]
    }
}

/// The calibration camera shares the pinhole model with projectors.
pub type VirtualCamera = Pinhole;

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceGeometry {
    /// Infinite plane; `normal` is oriented towards the side that receives light.
    Plane {
        point: Vec3,
        normal: Vec3,
    },
    DepthMap(HeightField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceModel {
    pub id: usize,
    /// Surfaces sharing a layer are present together and occlude each other;
    /// distinct layers are alternative placements of the screen.
    pub layer: usize,
    pub albedo: f64,
    pub geometry: SurfaceGeometry,
}

impl SurfaceModel {
    pub fn plane(id: usize, layer: usize, point: Vec3, normal: Vec3) -> Self {
        Self {
            id,
            layer,
            albedo: 1.0,
            geometry: SurfaceGeometry::Plane { point, normal },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.albedo > 0.0 && self.albedo <= 1.0) {
            return Err(Error::InvalidScene(format!(
                "surface {}: albedo {} outside (0,1]",
                self.id, self.albedo
            )));
        }
        if let SurfaceGeometry::Plane { point, normal } = &self.geometry {
            if (normal.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidScene(format!(
                    "surface {}: plane normal is not unit length",
                    self.id
                )));
            }
            if !point.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidScene(format!("surface {}: bad plane point", self.id)));
            }
        }
        Ok(())
    }

    /// Distance along `ray` and the light-facing normal at the hit, ignoring culling.
    fn raw_intersect(&self, ray: &Ray) -> Option<(f64, Vec3)> {
        match &self.geometry {
            SurfaceGeometry::Plane { point, normal } => {
                let denom = ray.dir.dot(normal);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = (point - ray.origin).dot(normal) / denom;
                (t > 1e-12).then_some((t, *normal))
            }
            SurfaceGeometry::DepthMap(field) => field.intersect(ray).map(|h| (h.t, h.normal)),
        }
    }
}

/// Where the desired image for a surface comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSource {
    File { path: PathBuf },
    Procedural { procedural: Procedural },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetBinding {
    pub surface: usize,
    pub source: TargetSource,
}

/// The full experiment input.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDescription {
    pub projectors: Vec<ProjectorModel>,
    pub surfaces: Vec<SurfaceModel>,
    pub camera: VirtualCamera,
    pub targets: Vec<TargetBinding>,
    pub bounds: SolverBounds,
    /// Distance at which a fronto-parallel surface has unit attenuation weight.
    pub reference_distance: f64,
    pub convention: Convention,
}

/// Nearest intersection of a ray with the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub surface: usize,
    pub point: Vec3,
    /// Unit normal on the side facing the ray origin.
    pub normal: Vec3,
    pub distance: f64,
    /// Unit vector from the hit back towards the ray origin.
    pub incident: Vec3,
}

impl SurfaceHit {
    /// Lambertian cosine `L·N`.
    #[inline]
    pub fn cosine(&self) -> f64 {
        self.incident.dot(&self.normal)
    }
}

/// Geometry of a projector lighting a surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Illumination {
    /// Row-major projector pixel index.
    pub pixel: usize,
    pub distance: f64,
    pub cosine: f64,
}

impl SceneDescription {
    pub fn validate(&self) -> Result<()> {
        for (j, p) in self.projectors.iter().enumerate() {
            if p.id != j {
                return Err(Error::InvalidScene(format!(
                    "projector ids must be 0..J in order (found {} at {j})",
                    p.id
                )));
            }
            p.pinhole.validate()?;
            if p.gamma.is_empty() {
                return Err(Error::InvalidScene(format!("projector {j} has no gamma model")));
            }
            for g in &p.gamma {
                g.validate()?;
            }
        }
        for (k, s) in self.surfaces.iter().enumerate() {
            if s.id != k {
                return Err(Error::InvalidScene(format!(
                    "surface ids must be 0..K in order (found {} at {k})",
                    s.id
                )));
            }
            s.validate()?;
        }
        self.camera.validate()?;
        let mut bound = vec![false; self.surfaces.len()];
        for t in &self.targets {
            let slot = bound
                .get_mut(t.surface)
                .ok_or_else(|| Error::InvalidScene(format!("target references unknown surface {}", t.surface)))?;
            if *slot {
                return Err(Error::InvalidScene(format!(
                    "surface {} has more than one target",
                    t.surface
                )));
            }
            *slot = true;
        }
        if let Some(k) = bound.iter().position(|b| !b) {
            return Err(Error::InvalidScene(format!("surface {k} has no target")));
        }
        self.bounds.validate()?;
        if !(self.reference_distance > 0.0 && self.reference_distance.is_finite()) {
            return Err(Error::InvalidScene("reference distance must be positive".into()));
        }
        Ok(())
    }

    /// Sorted distinct layer indices.
    pub fn layers(&self) -> Vec<usize> {
        let mut l: Vec<usize> = self.surfaces.iter().map(|s| s.layer).collect();
        l.sort_unstable();
        l.dedup();
        l
    }

    pub fn projector(&self, j: usize) -> Result<&ProjectorModel> {
        self.projectors
            .get(j)
            .ok_or_else(|| Error::InvalidScene(format!("no projector {j}")))
    }

    /// Nearest front-facing hit among surfaces (optionally restricted to one layer).
    /// Equal distances resolve to the lower surface id.
    pub fn intersect(&self, ray: &Ray, layer: Option<usize>) -> Option<SurfaceHit> {
        let mut best: Option<SurfaceHit> = None;
        for s in &self.surfaces {
            if layer.is_some_and(|l| l != s.layer) {
                continue;
            }
            let Some((t, normal)) = s.raw_intersect(ray) else {
                continue;
            };
            let incident = -ray.dir;
            if incident.dot(&normal) <= 0.0 {
                continue;
            }
            if best.as_ref().is_none_or(|b| t < b.distance) {
                best = Some(SurfaceHit {
                    surface: s.id,
                    point: ray.at(t),
                    normal,
                    distance: t,
                    incident,
                });
            }
        }
        best
    }

    /// Camera pixel ray cast into one layer.
    #[inline]
    pub fn camera_hit(&self, layer: usize, x: usize, y: usize) -> Option<SurfaceHit> {
        self.intersect(&self.camera.pixel_ray(x, y), Some(layer))
    }

    /// Which pixel of projector `j` lights `hit`, if the point is inside the
    /// projector raster and not occluded within its layer.
    pub fn illumination(&self, layer: usize, j: usize, hit: &SurfaceHit) -> Option<Illumination> {
        let pin = &self.projectors[j].pinhole;
        let (u, v) = pin.project_in_raster(&hit.point)?;
        let to_point = hit.point - pin.center();
        let dist = to_point.norm();
        let seen = self.intersect(&Ray::new(pin.center(), to_point), Some(layer))?;
        if seen.surface != hit.surface || (seen.distance - dist).abs() > 1e-6 * dist + 1e-9 {
            return None;
        }
        let cosine = (-to_point / dist).dot(&hit.normal);
        if cosine <= 0.0 {
            return None;
        }
        Some(Illumination {
            pixel: v as usize * pin.width + u as usize,
            distance: dist,
            cosine,
        })
    }
}

/// Nearest surface lit by `pixel` of `projector`, across all surfaces.
pub fn cast_projector_ray(scene: &SceneDescription, projector: usize, pixel: (usize, usize)) -> Option<SurfaceHit> {
    let pin = &scene.projectors[projector].pinhole;
    debug_assert!(pixel.0 < pin.width && pixel.1 < pin.height);
    scene.intersect(&pin.pixel_ray(pixel.0, pixel.1), None)
}

/// As [`cast_projector_ray`], restricted to the surfaces of one layer.
pub fn cast_projector_ray_in_layer(
    scene: &SceneDescription,
    layer: usize,
    projector: usize,
    pixel: (usize, usize),
) -> Option<SurfaceHit> {
    let pin = &scene.projectors[projector].pinhole;
    scene.intersect(&pin.pixel_ray(pixel.0, pixel.1), Some(layer))
}

/// Continuous camera-raster coordinates of a world point.
pub fn project_to_camera(scene: &SceneDescription, point: &Vec3) -> Option<(f64, f64)> {
    if !point.iter().all(|v| v.is_finite()) {
        return None;
    }
    scene.camera.project_in_raster(point)
}

/// Per-sample unit normals. Planes yield their single normal; depth maps yield one
/// normal per grid sample in the map's frame, oriented as `(−∂z/∂x, −∂z/∂y, 1)`.
pub fn compute_normals(surface: &SurfaceModel) -> Vec<Vec3> {
    match &surface.geometry {
        SurfaceGeometry::Plane { normal, .. } => vec![*normal],
        SurfaceGeometry::DepthMap(field) => field.normals().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::simple_scene;
    use nalgebra::Rotation3;

    fn single_plane(normal: Vec3) -> SceneDescription {
        let mut s = simple_scene(1, &[1.0]);
        s.surfaces[0].geometry = SurfaceGeometry::Plane {
            point: Vec3::new(0.0, 0.0, 1.0),
            normal,
        };
        s
    }

    fn centre(scene: &SceneDescription) -> (usize, usize) {
        let p = &scene.projectors[0].pinhole;
        (p.width / 2, p.height / 2)
    }

    #[test]
    fn fronto_parallel_centre_hit() {
        let mut s = single_plane(-Vec3::z());
        // Odd resolution so the centre pixel ray is the optical axis.
        s.projectors[0].pinhole.width = 33;
        s.projectors[0].pinhole.height = 25;
        s.projectors[0].pinhole.intrinsics = Intrinsics::centered(40.0, 33, 25);
        s.projectors[0].pinhole.pose = Pose::identity();
        let hit = cast_projector_ray(&s, 0, (16, 12)).unwrap();
        assert!((hit.distance - 1.0).abs() < 1e-12);
        assert!((hit.cosine() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tilted_plane_sixty_degrees() {
        let n = Rotation3::from_axis_angle(&Vec3::y_axis(), 60f64.to_radians()) * -Vec3::z();
        let mut s = single_plane(n);
        s.projectors[0].pinhole = Pinhole::new(33, 25, Intrinsics::centered(40.0, 33, 25), Pose::identity()).unwrap();
        let hit = cast_projector_ray(&s, 0, (16, 12)).unwrap();
        assert!((hit.cosine() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn nearer_of_two_stacked_planes() {
        let mut s = simple_scene(1, &[1.3, 0.9]);
        for surf in &mut s.surfaces {
            surf.layer = 0;
        }
        let px = centre(&s);
        let hit = cast_projector_ray(&s, 0, px).unwrap();
        // Analytic distances along the same ray.
        let ray = s.projectors[0].pinhole.pixel_ray(px.0, px.1);
        let t = |z: f64| (z - ray.origin.z) / ray.dir.z;
        assert_eq!(hit.surface, 1);
        assert!((hit.distance - t(0.9)).abs() < 1e-12);
        assert!(t(0.9) < t(1.3));
        // Within one layer only.
        assert_eq!(
            cast_projector_ray_in_layer(&simple_scene(1, &[1.3, 0.9]), 0, 0, px)
                .unwrap()
                .surface,
            0
        );
    }

    #[test]
    fn equal_distance_tie_prefers_lower_id() {
        let mut s = simple_scene(1, &[1.0, 1.0]);
        s.surfaces[1].layer = 0;
        let hit = cast_projector_ray(&s, 0, centre(&s)).unwrap();
        assert_eq!(hit.surface, 0);
    }

    #[test]
    fn back_faces_are_misses() {
        let s = single_plane(Vec3::z());
        assert!(cast_projector_ray(&s, 0, centre(&s)).is_none());
    }

    #[test]
    fn camera_projection_cases() {
        let s = simple_scene(1, &[1.0]);
        let cam = &s.camera;
        let on_axis = cam.pose.to_world(&Vec3::new(0.0, 0.0, 1.0));
        let (u, v) = project_to_camera(&s, &on_axis).unwrap();
        assert!((u - cam.intrinsics.cx).abs() < 1e-12 && (v - cam.intrinsics.cy).abs() < 1e-12);
        let behind = cam.pose.to_world(&Vec3::new(0.0, 0.0, -1.0));
        assert!(project_to_camera(&s, &behind).is_none());
        // Hand-computed pinhole: (0.1, -0.05, 2) in the camera frame.
        let p = cam.pose.to_world(&Vec3::new(0.1, -0.05, 2.0));
        let (u, v) = project_to_camera(&s, &p).unwrap();
        let k = cam.intrinsics;
        assert!((u - (k.cx + k.fx * 0.05)).abs() < 1e-9);
        assert!((v - (k.cy - k.fy * 0.025)).abs() < 1e-9);
    }

    #[test]
    fn plane_normals_constant() {
        let s = simple_scene(1, &[1.0]);
        assert_eq!(compute_normals(&s.surfaces[0]), vec![-Vec3::z()]);
    }

    #[test]
    fn camera_reprojection_of_projector_hits() {
        let s = simple_scene(2, &[0.8, 1.0]);
        for layer in s.layers() {
            for &(x, y) in &[(3, 4), (20, 11), (31, 20)] {
                let Some(hit) = cast_projector_ray_in_layer(&s, layer, 1, (x, y)) else {
                    continue;
                };
                let Some((u, v)) = project_to_camera(&s, &hit.point) else {
                    continue;
                };
                let back = s.intersect(&s.camera.ray_through(u, v), Some(layer)).unwrap();
                assert!((back.point - hit.point).norm() < 1e-4);
            }
        }
    }

    #[test]
    fn validation_catches_bad_bindings() {
        let mut s = simple_scene(1, &[1.0, 2.0]);
        s.targets.pop();
        assert!(s.validate().is_err());
        let mut s = simple_scene(1, &[1.0]);
        s.targets[0].surface = 4;
        assert!(s.validate().is_err());
        let mut s = simple_scene(1, &[1.0]);
        s.surfaces[0].albedo = 0.0;
        assert!(s.validate().is_err());
    }
}

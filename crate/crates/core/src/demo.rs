//! Ready-to-run synthetic scenes: planes at the paper's screen distances and a
//! bumpy height field standing in for a mannequin head.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calib::GammaModel;
use crate::error::{Error, Result};
use crate::procedural::Procedural;
use crate::scene::{
    HeightField, Intrinsics, Pinhole, Pose, ProjectorModel, SceneDescription, SurfaceGeometry, SurfaceModel,
    TargetBinding, TargetSource, Vec3,
};
use crate::solver::SolverBounds;
use crate::system::Convention;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemoKind {
    TwoPlanes,
    ThreePlanes,
    HeadAndBox,
}

impl DemoKind {
    pub const ALL: [DemoKind; 3] = [DemoKind::TwoPlanes, DemoKind::ThreePlanes, DemoKind::HeadAndBox];

    pub fn name(self) -> &'static str {
        match self {
            DemoKind::TwoPlanes => "two-planes",
            DemoKind::ThreePlanes => "three-planes",
            DemoKind::HeadAndBox => "head-and-box",
        }
    }
}

impl fmt::Display for DemoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DemoKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DemoKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown demo scene {s:?}")))
    }
}

/// Knobs for [`make_demo_scene`].
///
/// Projectors are stacked vertically `baseline` apart with focal length
/// `1.25 × width`, so at the default 0.1 m baseline the plane disparities are
/// whole pixels whenever the width is a multiple of 64 (10 and 8 px at 64 px).
/// The camera sits beside them with twice the projector focal length, sampling
/// each projector pixel about twice along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoParams {
    pub projector_resolution: (usize, usize),
    pub camera_resolution: (usize, usize),
    pub projectors: usize,
    /// Vertical spacing between neighbouring projectors (m).
    pub baseline: f64,
    /// Seed for the procedural targets and head bumps.
    pub seed: u64,
    pub convention: Convention,
    pub bounds: SolverBounds,
}

impl DemoParams {
    /// 64×48 projectors and a 96×72 camera: fast enough for unit tests.
    pub fn small() -> Self {
        Self {
            projector_resolution: (64, 48),
            camera_resolution: (96, 72),
            projectors: 2,
            baseline: 0.1,
            seed: 1,
            convention: Convention::Paper,
            bounds: SolverBounds::default(),
        }
    }

    /// The paper's rig: 1024×768 projectors and a 1600×1200 camera.
    pub fn paper() -> Self {
        Self {
            projector_resolution: (1024, 768),
            camera_resolution: (1600, 1200),
            ..Self::small()
        }
    }

    /// Moderate size used by the acceptance scenes.
    pub fn medium() -> Self {
        Self {
            projector_resolution: (128, 96),
            camera_resolution: (192, 144),
            ..Self::small()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (pw, ph) = self.projector_resolution;
        let (cw, ch) = self.camera_resolution;
        if pw < 8 || ph < 8 || cw < 8 || ch < 8 || pw.max(ph).max(cw).max(ch) > 8192 {
            return Err(Error::Config("demo resolutions must lie in [8, 8192]".into()));
        }
        if !(1..=8).contains(&self.projectors) {
            return Err(Error::Config("demo projector count must lie in [1, 8]".into()));
        }
        if !(self.baseline > 0.0 && self.baseline <= 0.5) {
            return Err(Error::Config("demo baseline must lie in (0, 0.5] m".into()));
        }
        self.bounds.validate()
    }
}

/// True projector responses used by the demos (per projector, one channel).
pub fn demo_gamma(j: usize) -> GammaModel {
    match j % 3 {
        0 => GammaModel::with_peak(2.2, 240.0, 3.0),
        1 => GammaModel::with_peak(1.8, 230.0, 5.0),
        _ => GammaModel::with_peak(2.0, 235.0, 4.0),
    }
}

fn plane(id: usize, z: f64) -> SurfaceModel {
    SurfaceModel::plane(id, id, Vec3::new(0.0, 0.0, z), -Vec3::z())
}

fn procedural(surface: usize, p: Procedural) -> TargetBinding {
    TargetBinding {
        surface,
        source: TargetSource::Procedural { procedural: p },
    }
}

/// Plane depths of the three-screen demo: disparities in the ratio 10:9:8.
pub const THREE_PLANE_DEPTHS: [f64; 3] = [0.8, 0.8 * 10.0 / 9.0, 1.0];

pub fn make_demo_scene(kind: DemoKind, params: &DemoParams) -> Result<SceneDescription> {
    params.validate()?;
    let (pw, ph) = params.projector_resolution;
    let (cw, ch) = params.camera_resolution;
    let focal = 1.25 * pw as f64;
    let j_count = params.projectors;
    let projectors = (0..j_count)
        .map(|j| {
            let y = (j as f64 - (j_count as f64 - 1.0) / 2.0) * params.baseline;
            Ok(ProjectorModel {
                id: j,
                pinhole: Pinhole::new(
                    pw,
                    ph,
                    Intrinsics::centered(focal, pw, ph),
                    Pose::from_position(Vec3::new(0.0, y, 0.0)),
                )?,
                gamma: vec![demo_gamma(j)],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let camera = Pinhole::new(
        cw,
        ch,
        Intrinsics::centered(2.0 * focal * cw as f64 / (1.5 * pw as f64), cw, ch),
        Pose::look_at(Vec3::new(0.15, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.9), Vec3::y())?,
    )?;

    let seed = params.seed;
    // Texture sizes follow the camera resolution so every scale looks alike.
    let feature = cw as f64 / 4.0;
    let (surfaces, targets) = match kind {
        DemoKind::TwoPlanes => (
            vec![plane(0, 0.8), plane(1, 1.0)],
            vec![
                procedural(
                    0,
                    Procedural::Noise {
                        seed,
                        scale: feature,
                        octaves: 5,
                    },
                ),
                procedural(
                    1,
                    Procedural::Noise {
                        seed: seed.wrapping_add(101),
                        scale: feature / 2.0,
                        octaves: 6,
                    },
                ),
            ],
        ),
        DemoKind::ThreePlanes => (
            THREE_PLANE_DEPTHS
                .iter()
                .enumerate()
                .map(|(k, &z)| plane(k, z))
                .collect(),
            vec![
                procedural(
                    0,
                    Procedural::Disc {
                        radius: 0.3,
                        low: 0.0,
                        high: 255.0,
                    },
                ),
                procedural(
                    1,
                    Procedural::Stripes {
                        period: (cw / 4).max(2),
                        horizontal: false,
                        low: 0.0,
                        high: 255.0,
                    },
                ),
                procedural(
                    2,
                    Procedural::Checker {
                        cells: 4,
                        low: 0.0,
                        high: 255.0,
                    },
                ),
            ],
        ),
        DemoKind::HeadAndBox => {
            let head = head_field(&camera, seed)?;
            (
                vec![
                    SurfaceModel {
                        id: 0,
                        layer: 0,
                        albedo: 0.9,
                        geometry: SurfaceGeometry::DepthMap(head),
                    },
                    SurfaceModel::plane(1, 1, Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.25, 0.0, -1.0).normalize()),
                ],
                vec![
                    procedural(0, Procedural::Rings { period: feature * 0.75 }),
                    procedural(
                        1,
                        Procedural::Checker {
                            cells: 6,
                            low: 30.0,
                            high: 225.0,
                        },
                    ),
                ],
            )
        }
    };
    let scene = SceneDescription {
        projectors,
        surfaces,
        camera,
        targets,
        bounds: params.bounds,
        reference_distance: 1.0,
        convention: params.convention,
    };
    scene.validate()?;
    Ok(scene)
}

/// Ellipsoidal bump with a nose and small ripples, in the camera frame, about
/// 0.85 m away and up to 12 cm deep.
fn head_field(camera: &Pinhole, seed: u64) -> Result<HeightField> {
    let (cols, rows) = (61, 47);
    let (x0, y0) = (-0.33, -0.25);
    let (dx, dy) = (0.66 / (cols - 1) as f64, 0.5 / (rows - 1) as f64);
    let phase = (seed % 628) as f64 / 100.0;
    let depths = (0..rows)
        .flat_map(|j| (0..cols).map(move |i| (i, j)))
        .map(|(i, j)| {
            let x = x0 + i as f64 * dx;
            let y = y0 + j as f64 * dy;
            let head = 0.10 * (-(x * x / 0.02 + y * y / 0.035)).exp();
            let nose = 0.02 * (-((x * x + (y - 0.01) * (y - 0.01)) / 0.0008)).exp();
            let ripple = 0.004 * (25.0 * x + phase).sin() * (19.0 * y).cos();
            0.88 - head - nose + ripple
        })
        .collect();
    HeightField::new(camera.pose, [x0, y0], [dx, dy], cols, rows, depths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::compute_normals;
    use crate::test_support::geometric_system;

    #[test]
    fn two_planes_at_paper_depths() {
        let s = make_demo_scene(DemoKind::TwoPlanes, &DemoParams::small()).unwrap();
        let depths: Vec<f64> = s
            .surfaces
            .iter()
            .map(|p| match p.geometry {
                SurfaceGeometry::Plane { point, .. } => point.z,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(depths, vec![0.8, 1.0]);
        assert_eq!(s.layers(), vec![0, 1]);
    }

    #[test]
    fn three_planes_rows_bounded_by_projector_count() {
        let s = make_demo_scene(DemoKind::ThreePlanes, &DemoParams::small()).unwrap();
        assert_eq!(s.surfaces.len(), 3);
        let sys = geometric_system(&s);
        assert!((0..sys.num_rows()).all(|r| sys.row(r).0.len() <= s.projectors.len()));
        for k in 0..3 {
            assert!(sys.row_meta().iter().any(|m| m.surface == k));
        }
    }

    #[test]
    fn integer_disparities() {
        let s = make_demo_scene(DemoKind::TwoPlanes, &DemoParams::small()).unwrap();
        let (p0, p1) = (&s.projectors[0].pinhole, &s.projectors[1].pinhole);
        for (z, expect) in [(0.8, 10.0), (1.0, 8.0)] {
            let p = Vec3::new(0.03, 0.01, z);
            let (u0, v0) = p0.project(&p).unwrap();
            let (u1, v1) = p1.project(&p).unwrap();
            assert!((u0 - u1).abs() < 1e-12);
            assert!((v0 - v1 - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn head_has_varying_normals() {
        let s = make_demo_scene(DemoKind::HeadAndBox, &DemoParams::small()).unwrap();
        let n = compute_normals(&s.surfaces[0]);
        let mean = n.iter().sum::<Vec3>() / n.len() as f64;
        let var = n.iter().map(|v| (v - mean).norm_squared()).sum::<f64>() / n.len() as f64;
        assert!(var > 1e-3, "normal variance {var}");
        let sys = geometric_system(&s);
        assert!(sys.row_meta().iter().any(|m| m.surface == 0));
        assert!(sys.row_meta().iter().any(|m| m.surface == 1));
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in DemoKind::ALL {
            assert_eq!(k.name().parse::<DemoKind>().unwrap(), k);
        }
        assert!("four-planes".parse::<DemoKind>().is_err());
    }

    #[test]
    fn rejects_out_of_range_params() {
        let mut p = DemoParams::small();
        p.projectors = 0;
        assert!(make_demo_scene(DemoKind::TwoPlanes, &p).is_err());
    }
}

//! Small scenes shared by unit tests.

use crate::calib::{geometric_correspondences, GammaModel};
use crate::procedural::Procedural;
use crate::scene::{
    Intrinsics, Pinhole, Pose, ProjectorModel, SceneDescription, SurfaceModel, TargetBinding, TargetSource, Vec3,
};
use crate::solver::SolverBounds;
use crate::system::{assemble, build_inverse_projection, load_targets, Convention, SparseSystem};

/// `projectors` 32×24 projectors stacked vertically 0.1 m apart, a 48×36 camera
/// offset sideways, and one fronto-parallel plane per depth, each in its own layer.
pub fn simple_scene(projectors: usize, depths: &[f64]) -> SceneDescription {
    let projectors = (0..projectors)
        .map(|j| ProjectorModel {
            id: j,
            pinhole: Pinhole::new(
                32,
                24,
                Intrinsics::centered(40.0, 32, 24),
                Pose::from_position(Vec3::new(0.0, (j as f64 - (projectors as f64 - 1.0) / 2.0) * 0.1, 0.0)),
            )
            .unwrap(),
            gamma: vec![GammaModel::identity()],
        })
        .collect();
    let surfaces = depths
        .iter()
        .enumerate()
        .map(|(k, &z)| SurfaceModel::plane(k, k, Vec3::new(0.0, 0.0, z), -Vec3::z()))
        .collect();
    let targets = (0..depths.len())
        .map(|k| TargetBinding {
            surface: k,
            source: TargetSource::Procedural {
                procedural: Procedural::Noise {
                    seed: k as u64 + 1,
                    scale: 12.0,
                    octaves: 4,
                },
            },
        })
        .collect();
    let scene = SceneDescription {
        projectors,
        surfaces,
        camera: Pinhole::new(
            48,
            36,
            Intrinsics::centered(60.0, 48, 36),
            Pose::from_position(Vec3::new(0.1, 0.0, 0.0)),
        )
        .unwrap(),
        targets,
        bounds: SolverBounds::default(),
        reference_distance: 1.0,
        convention: Convention::Paper,
    };
    scene.validate().unwrap();
    scene
}

/// System assembled from exact geometric correspondences.
pub fn geometric_system(scene: &SceneDescription) -> SparseSystem {
    let mut maps = Vec::new();
    for layer in scene.layers() {
        for j in 0..scene.projectors.len() {
            maps.push(geometric_correspondences(scene, layer, j).unwrap());
        }
    }
    let q = build_inverse_projection(scene, &maps).unwrap();
    assemble(scene, &q, &load_targets(scene).unwrap()).unwrap()
}

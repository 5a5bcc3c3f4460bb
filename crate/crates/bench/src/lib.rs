//! Fixtures shared by the benchmarks.

use depthcast_core::pipeline::{build_problem, calibrate, CalibrationOptions, CorrespondenceSource, Problem};
use depthcast_core::{make_demo_scene, DemoKind, DemoParams, SceneDescription};

/// A demo scene and its assembled system, with correspondences read off the geometry.
pub fn demo_problem(kind: DemoKind, params: &DemoParams) -> (SceneDescription, Problem) {
    let scene = make_demo_scene(kind, params).expect("demo scene");
    let options = CalibrationOptions {
        source: CorrespondenceSource::Geometric,
        ..CalibrationOptions::default()
    };
    let calibration = calibrate(&scene, 1, &options).expect("calibration");
    let problem = build_problem(&scene, &calibration).expect("problem");
    (scene, problem)
}

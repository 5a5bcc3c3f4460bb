//! TOML scene files and depth-map loaders.
//!
//! Relative paths inside a scene file resolve against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{
    HeightField, Intrinsics, Pinhole, Pose, ProjectorModel, SceneDescription, SurfaceGeometry, SurfaceModel,
    TargetBinding, TargetSource, Vec3,
};
use crate::calib::GammaModel;
use crate::error::{Error, Result};
use crate::raster::{load_png16, Raster};
use crate::solver::SolverBounds;
use crate::system::Convention;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    #[serde(default = "one")]
    reference_distance: f64,
    #[serde(default)]
    convention: Convention,
    #[serde(default)]
    bounds: SolverBounds,
    camera: DeviceFile,
    projectors: Vec<ProjectorFile>,
    surfaces: Vec<SurfaceFile>,
    targets: Vec<TargetFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DeviceFile {
    resolution: [usize; 2],
    focal: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    principal: Option<[f64; 2]>,
    position: [f64; 3],
    /// Rows of the world-from-device rotation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation: Option<[[f64; 3]; 3]>,
    /// Alternative to `rotation`: aim the optical axis at a point (y axis kept downward).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    look_at: Option<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProjectorFile {
    id: usize,
    #[serde(flatten)]
    device: DeviceFile,
    #[serde(default = "default_gamma")]
    gamma: Vec<GammaModel>,
}

fn default_gamma() -> Vec<GammaModel> {
    vec![GammaModel::identity()]
}

#[derive(Debug, Serialize, Deserialize)]
struct SurfaceFile {
    id: usize,
    /// Defaults to the surface id: every surface is its own placement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layer: Option<usize>,
    #[serde(default = "one")]
    albedo: f64,
    #[serde(flatten)]
    geometry: GeometryFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum GeometryFile {
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
    },
    /// Height field in the camera frame: sample (i, j) sits at
    /// `origin + (i·spacing[0], j·spacing[1])` with the given depth.
    DepthMap {
        origin: [f64; 2],
        spacing: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        image: Option<PathBuf>,
        /// Multiplier for 16-bit image values.
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct TargetFile {
    surface: usize,
    #[serde(flatten)]
    source: TargetSource,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl DeviceFile {
    fn to_pinhole(&self) -> Result<Pinhole> {
        let [w, h] = self.resolution;
        let [cx, cy] = self.principal.unwrap_or([w as f64 / 2.0, h as f64 / 2.0]);
        let position = v3(self.position);
        let pose = match (&self.rotation, &self.look_at) {
            (Some(_), Some(_)) => return Err(Error::Config("give either rotation or look_at, not both".into())),
            (Some(r), None) => Pose::new(
                Matrix3::new(
                    r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
                ),
                position,
            )?,
            (None, Some(t)) => Pose::look_at(position, v3(*t), Vec3::y())?,
            (None, None) => Pose::from_position(position),
        };
        Pinhole::new(w, h, Intrinsics::new(self.focal[0], self.focal[1], cx, cy), pose)
    }

    fn from_pinhole(p: &Pinhole) -> Self {
        let r = &p.pose.rotation;
        Self {
            resolution: [p.width, p.height],
            focal: [p.intrinsics.fx, p.intrinsics.fy],
            principal: Some([p.intrinsics.cx, p.intrinsics.cy]),
            position: [p.pose.position.x, p.pose.position.y, p.pose.position.z],
            rotation: Some([
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ]),
            look_at: None,
        }
    }
}

impl SceneDescription {
    /// Parses a TOML scene description; `base` resolves relative paths.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let file: SceneFile = toml::from_str(text).map_err(|e| Error::Config(format!("scene file: {e}")))?;
        let camera = file.camera.to_pinhole()?;
        let projectors = file
            .projectors
            .iter()
            .map(|p| {
                Ok(ProjectorModel {
                    id: p.id,
                    pinhole: p.device.to_pinhole()?,
                    gamma: p.gamma.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let surfaces = file
            .surfaces
            .iter()
            .map(|s| {
                let geometry = match &s.geometry {
                    GeometryFile::Plane { point, normal } => SurfaceGeometry::Plane {
                        point: v3(*point),
                        normal: v3(*normal),
                    },
                    GeometryFile::DepthMap {
                        origin,
                        spacing,
                        text,
                        image,
                        scale,
                        offset,
                    } => {
                        let grid = match (text, image) {
                            (Some(t), None) => load_depth_text(&resolve(base, t))?,
                            (None, Some(i)) => load_depth_png(&resolve(base, i), *scale, *offset)?,
                            _ => {
                                return Err(Error::Config(format!(
                                    "surface {}: depth map needs exactly one of text/image",
                                    s.id
                                )))
                            }
                        };
                        let (cols, rows) = grid.dims();
                        SurfaceGeometry::DepthMap(HeightField::new(
                            camera.pose,
                            *origin,
                            *spacing,
                            cols,
                            rows,
                            grid.into_vec(),
                        )?)
                    }
                };
                Ok(SurfaceModel {
                    id: s.id,
                    layer: s.layer.unwrap_or(s.id),
                    albedo: s.albedo,
                    geometry,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let targets = file
            .targets
            .into_iter()
            .map(|t| TargetBinding {
                surface: t.surface,
                source: match t.source {
                    TargetSource::File { path } => TargetSource::File {
                        path: resolve(base, &path),
                    },
                    other => other,
                },
            })
            .collect();
        let scene = SceneDescription {
            projectors,
            surfaces,
            camera,
            targets,
            bounds: file.bounds,
            reference_distance: file.reference_distance,
            convention: file.convention,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// Writes the scene as TOML; depth maps go to `surface<k>_depth.txt` beside it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut surfaces = Vec::with_capacity(self.surfaces.len());
        for s in &self.surfaces {
            let geometry = match &s.geometry {
                SurfaceGeometry::Plane { point, normal } => GeometryFile::Plane {
                    point: [point.x, point.y, point.z],
                    normal: [normal.x, normal.y, normal.z],
                },
                SurfaceGeometry::DepthMap(field) => {
                    if (field.frame().rotation - self.camera.pose.rotation).amax() > 1e-12
                        || (field.frame().position - self.camera.pose.position).amax() > 1e-12
                    {
                        return Err(Error::Config(format!(
                            "surface {}: depth map frame differs from the camera pose",
                            s.id
                        )));
                    }
                    let name = format!("surface{}_depth.txt", s.id);
                    let grid = Raster::from_vec(field.cols(), field.rows(), field.depths().to_vec())?;
                    save_depth_text(&grid, &dir.join(&name))?;
                    GeometryFile::DepthMap {
                        origin: field.origin(),
                        spacing: field.spacing(),
                        text: Some(PathBuf::from(name)),
                        image: None,
                        scale: 1.0,
                        offset: 0.0,
                    }
                }
            };
            surfaces.push(SurfaceFile {
                id: s.id,
                layer: Some(s.layer),
                albedo: s.albedo,
                geometry,
            });
        }
        let file = SceneFile {
            reference_distance: self.reference_distance,
            convention: self.convention,
            bounds: self.bounds,
            camera: DeviceFile::from_pinhole(&self.camera),
            projectors: self
                .projectors
                .iter()
                .map(|p| ProjectorFile {
                    id: p.id,
                    device: DeviceFile::from_pinhole(&p.pinhole),
                    gamma: p.gamma.clone(),
                })
                .collect(),
            surfaces,
            targets: self
                .targets
                .iter()
                .map(|t| TargetFile {
                    surface: t.surface,
                    source: t.source.clone(),
                })
                .collect(),
        };
        let text = toml::to_string_pretty(&file).map_err(|e| Error::Config(format!("serialising scene: {e}")))?;
        fs::write(path, text)?;
        Ok(())
    }
}

/// Plain-text float grid: one row per line, whitespace separated, `#` comments.
pub fn load_depth_text(path: &Path) -> Result<Raster<f64>> {
    let text = fs::read_to_string(path)?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(bad("rows are empty or ragged".into()));
    }
    let h = rows.len();
    Raster::from_vec(cols, h, rows.concat())
}

pub fn save_depth_text(grid: &Raster<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for y in 0..grid.height() {
        let row: Vec<String> = (0..grid.width()).map(|x| format!("{:e}", grid.get(x, y))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// 16-bit grayscale depth image: `depth = value·scale + offset`.
pub fn load_depth_png(path: &Path, scale: f64, offset: f64) -> Result<Raster<f64>> {
    Ok(load_png16(path)?.map(|&v| v as f64 * scale + offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::{make_demo_scene, DemoKind, DemoParams};

    #[test]
    fn scene_roundtrips_through_toml() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [DemoKind::TwoPlanes, DemoKind::HeadAndBox] {
            let scene = make_demo_scene(kind, &DemoParams::small()).unwrap();
            let path = dir.path().join("scene.toml");
            scene.save(&path).unwrap();
            let back = SceneDescription::load(&path).unwrap();
            assert_eq!(back, scene);
        }
    }

    #[test]
    fn minimal_file_with_defaults() {
        let text = r#"
            [camera]
            resolution = [8, 6]
            focal = [10.0, 10.0]
            position = [0.0, 0.0, 0.0]

            [[projectors]]
            id = 0
            resolution = [8, 6]
            focal = [10.0, 10.0]
            position = [0.0, -0.05, 0.0]
            look_at = [0.0, 0.0, 1.0]

            [[surfaces]]
            id = 0
            kind = "plane"
            point = [0.0, 0.0, 1.0]
            normal = [0.0, 0.0, -1.0]

            [[targets]]
            surface = 0
            path = "img.png"
        "#;
        let s = SceneDescription::from_toml_str(text, Path::new("/data")).unwrap();
        assert_eq!(s.bounds, SolverBounds::default());
        assert_eq!(s.surfaces[0].layer, 0);
        assert_eq!(
            s.targets[0].source,
            TargetSource::File {
                path: PathBuf::from("/data/img.png")
            }
        );
        assert_eq!(s.projectors[0].gamma, vec![GammaModel::identity()]);
    }

    #[test]
    fn depth_text_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.txt");
        fs::write(&p, "# header\n1 2 3\n4 5 6 # trailing\n\n").unwrap();
        let g = load_depth_text(&p).unwrap();
        assert_eq!(g.dims(), (3, 2));
        assert_eq!(g.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        fs::write(&p, "1 2\n3\n").unwrap();
        assert!(load_depth_text(&p).is_err());
    }

    #[test]
    fn depth_png16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_fn(3, 2, |x, y| {
            image::Luma([(1000 + 10 * x + 100 * y) as u16])
        });
        img.save(&p).unwrap();
        let g = load_depth_png(&p, 1e-3, 0.5).unwrap();
        assert!((g.get(2, 1) - (1.12 + 0.5)).abs() < 1e-12);
    }
}

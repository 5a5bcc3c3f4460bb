use rayon::prelude::*;

use crate::calib::CorrespondenceMap;
use crate::error::{Error, Result};
use crate::scene::{SceneDescription, Vec3};

/// A target-image pixel: a camera pixel together with the surface point it sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePixel {
    pub surface: usize,
    /// Row-major camera pixel index.
    pub pixel: u32,
    pub point: Vec3,
    pub normal: Vec3,
}

/// `q(k, n, j)`: the pattern pixel of projector `j` lighting image pixel `(k, n)`,
/// or `None` where the paper's convention would use the imaginary pixel 0.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseProjectionMap {
    num_projectors: usize,
    /// Sorted by `(surface, pixel)`.
    pixels: Vec<ImagePixel>,
    q: Vec<Option<u32>>,
}

impl InverseProjectionMap {
    pub fn num_projectors(&self) -> usize {
        self.num_projectors
    }

    pub fn pixels(&self) -> &[ImagePixel] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Pattern pixels of every projector for entry `index` (in `pixels()` order).
    #[inline]
    pub fn entry(&self, index: usize) -> &[Option<u32>] {
        &self.q[index * self.num_projectors..(index + 1) * self.num_projectors]
    }

    /// Lookup by surface id and row-major camera pixel.
    pub fn q(&self, surface: usize, pixel: usize, projector: usize) -> Option<u32> {
        let i = self
            .pixels
            .binary_search_by(|p| (p.surface, p.pixel as usize).cmp(&(surface, pixel)))
            .ok()?;
        self.entry(i)[projector]
    }
}

/// For every camera pixel that sees a surface (per layer), records which pixel of
/// each projector lights it according to the correspondence maps. Projectors
/// without a map for a layer light nothing there.
pub fn build_inverse_projection(scene: &SceneDescription, maps: &[CorrespondenceMap]) -> Result<InverseProjectionMap> {
    let cam = &scene.camera;
    let j_count = scene.projectors.len();
    for m in maps {
        if m.camera_size() != (cam.width, cam.height) {
            return Err(Error::Config(format!(
                "correspondence map for projector {} is {:?}, camera is {}x{}",
                m.projector,
                m.camera_size(),
                cam.width,
                cam.height
            )));
        }
        if m.projector >= j_count {
            return Err(Error::Config(format!(
                "map references unknown projector {}",
                m.projector
            )));
        }
    }

    let mut entries: Vec<(ImagePixel, Vec<Option<u32>>)> = Vec::new();
    for layer in scene.layers() {
        let layer_maps: Vec<Option<&CorrespondenceMap>> = (0..j_count)
            .map(|j| maps.iter().find(|m| m.projector == j && m.layer == layer))
            .collect();
        let rows: Vec<Vec<(ImagePixel, Vec<Option<u32>>)>> = (0..cam.height)
            .into_par_iter()
            .map(|y| {
                (0..cam.width)
                    .filter_map(|x| {
                        let hit = scene.camera_hit(layer, x, y)?;
                        let n = y * cam.width + x;
                        let q = layer_maps
                            .iter()
                            .map(|m| m.and_then(|m| m.projector_pixel(n)).map(|v| v as u32))
                            .collect();
                        Some((
                            ImagePixel {
                                surface: hit.surface,
                                pixel: n as u32,
                                point: hit.point,
                                normal: hit.normal,
                            },
                            q,
                        ))
                    })
                    .collect()
            })
            .collect();
        entries.extend(rows.into_iter().flatten());
    }
    entries.sort_by_key(|(p, _)| (p.surface, p.pixel));
    let mut pixels = Vec::with_capacity(entries.len());
    let mut q = Vec::with_capacity(entries.len() * j_count);
    for (p, row) in entries {
        pixels.push(p);
        q.extend(row);
    }
    Ok(InverseProjectionMap {
        num_projectors: j_count,
        pixels,
        q,
    })
}

//! Simulated structured-light capture and Gray-code decoding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::correspondence::{CorrespondenceMap, PixelCoord};
use super::gray::{gray_decode, Axis, GrayCodeSequence};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scene::SceneDescription;

/// For every camera pixel of one layer: the projector pixel lighting the visible
/// point and the radiance the (linear) camera records per unit drive.
#[derive(Debug, Clone)]
pub struct CaptureGeometry {
    pub projector: usize,
    pub layer: usize,
    projector_size: (usize, usize),
    camera_size: (usize, usize),
    /// `(projector pixel index, albedo·(L·N)/(d/d_ref)²)`
    links: Vec<Option<(u32, f64)>>,
}

impl CaptureGeometry {
    pub fn new(scene: &SceneDescription, layer: usize, projector: usize) -> Result<Self> {
        let pin = &scene.projector(projector)?.pinhole;
        let cam = &scene.camera;
        let dref = scene.reference_distance;
        let links: Vec<Option<(u32, f64)>> = (0..cam.height)
            .into_par_iter()
            .flat_map_iter(|y| {
                (0..cam.width).map(move |x| {
                    let hit = scene.camera_hit(layer, x, y)?;
                    let lit = scene.illumination(layer, projector, &hit)?;
                    let albedo = scene.surfaces[hit.surface].albedo;
                    let r = lit.distance / dref;
                    Some((lit.pixel as u32, albedo * lit.cosine / (r * r)))
                })
            })
            .collect();
        Ok(Self {
            projector,
            layer,
            projector_size: (pin.width, pin.height),
            camera_size: (cam.width, cam.height),
            links,
        })
    }

    /// Camera image of `pattern` projected by this projector alone.
    pub fn capture<T: Copy + Into<f64>>(&self, pattern: &Raster<T>) -> Raster<f64> {
        assert_eq!(
            pattern.dims(),
            self.projector_size,
            "pattern must match projector resolution"
        );
        let p = pattern.as_slice();
        let data = self
            .links
            .iter()
            .map(|l| l.map_or(0.0, |(m, s)| p[m as usize].into() * s))
            .collect();
        Raster::from_vec(self.camera_size.0, self.camera_size.1, data).unwrap()
    }

    /// The map read directly off the geometry (the decoding oracle).
    pub fn geometric_map(&self) -> CorrespondenceMap {
        let pw = self.projector_size.0;
        let fwd = self
            .links
            .iter()
            .map(|l| l.map(|(m, _)| ((m as usize % pw) as u16, (m as usize / pw) as u16)))
            .collect();
        let forward = Raster::from_vec(self.camera_size.0, self.camera_size.1, fwd).unwrap();
        CorrespondenceMap::from_forward(self.projector, self.layer, self.projector_size, forward)
            .expect("geometric links lie inside the projector raster")
    }
}

/// Camera raster recorded while `projector` shows `pattern` onto the surfaces of `layer`.
pub fn simulate_capture<T: Copy + Into<f64>>(
    scene: &SceneDescription,
    layer: usize,
    projector: usize,
    pattern: &Raster<T>,
) -> Result<Raster<f64>> {
    let pin = &scene.projector(projector)?.pinhole;
    if pattern.dims() != (pin.width, pin.height) {
        return Err(Error::Config(format!(
            "pattern is {:?}, projector {projector} is {}x{}",
            pattern.dims(),
            pin.width,
            pin.height
        )));
    }
    Ok(CaptureGeometry::new(scene, layer, projector)?.capture(pattern))
}

/// Correspondences computed from geometry instead of decoding.
pub fn geometric_correspondences(
    scene: &SceneDescription,
    layer: usize,
    projector: usize,
) -> Result<CorrespondenceMap> {
    Ok(CaptureGeometry::new(scene, layer, projector)?.geometric_map())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    /// Pixels whose white/black contrast is below this fraction of the brightest
    /// white-reference value are left undefined.
    pub contrast_floor: f64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self { contrast_floor: 0.02 }
    }
}

/// Projects white/black references and both Gray-code axes, thresholds every bit
/// at the per-pixel white/black midpoint and decodes projector coordinates.
pub fn decode_correspondences(
    scene: &SceneDescription,
    layer: usize,
    projector: usize,
    options: &DecodeOptions,
) -> Result<CorrespondenceMap> {
    let geometry = CaptureGeometry::new(scene, layer, projector)?;
    let (pw, ph) = geometry.projector_size;
    let white = geometry.capture(&Raster::filled(pw, ph, 255u8));
    let black = geometry.capture(&Raster::filled(pw, ph, 0u8));
    let level = white.as_slice().iter().copied().fold(0.0, f64::max);
    let floor = options.contrast_floor * level;

    let decode_axis = |axis: Axis| -> Vec<u32> {
        let seq = GrayCodeSequence::new(axis, pw, ph);
        let mut codes = vec![0u32; white.len()];
        for (b, frame) in seq.frames.iter().enumerate() {
            let img = geometry.capture(frame);
            codes
                .par_iter_mut()
                .zip(img.as_slice().par_iter())
                .zip(white.as_slice().par_iter().zip(black.as_slice().par_iter()))
                .for_each(|((code, &v), (&w, &k))| {
                    if v > 0.5 * (w + k) {
                        *code |= 1 << b;
                    }
                });
        }
        codes.into_iter().map(gray_decode).collect()
    };
    let xs = decode_axis(Axis::X);
    let ys = decode_axis(Axis::Y);

    let forward: Vec<Option<PixelCoord>> = (0..white.len())
        .map(|i| {
            let contrast = white.as_slice()[i] - black.as_slice()[i];
            let (x, y) = (xs[i] as usize, ys[i] as usize);
            (level > 0.0 && contrast >= floor && contrast > 0.0 && x < pw && y < ph).then_some((x as u16, y as u16))
        })
        .collect();
    if forward.iter().all(Option::is_none) {
        return Err(Error::DegenerateScene(format!(
            "projector {projector} lights no visible surface in layer {layer}"
        )));
    }
    let (cw, ch) = geometry.camera_size;
    CorrespondenceMap::from_forward(projector, layer, (pw, ph), Raster::from_vec(cw, ch, forward)?)
}

//! Forward simulation of the projected patterns and image-quality metrics.

mod metrics;

pub use metrics::{evaluate, psnr, ssim, QualityReport};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scene::SceneDescription;
use crate::system::PatternImage;

/// What the camera sees on one surface when all projectors are on.
#[derive(Debug, Clone, PartialEq)]
pub struct RecombinedImage {
    pub surface: usize,
    pub channels: Vec<Raster<f64>>,
    /// Camera pixels on the surface that at least one projector reaches.
    pub mask: Raster<bool>,
}

/// Sums every projector's contribution on every surface, using the same
/// attenuation convention as system assembly. Negative drive values emit no light.
pub fn render_patterns(scene: &SceneDescription, patterns: &[PatternImage]) -> Result<Vec<RecombinedImage>> {
    let nproj = scene.projectors.len();
    if patterns.len() != nproj {
        return Err(Error::Config(format!(
            "{} patterns for {nproj} projectors",
            patterns.len()
        )));
    }
    let channels = patterns.first().map_or(1, |p| p.channels.len());
    for (j, p) in patterns.iter().enumerate() {
        let pin = &scene.projectors[j].pinhole;
        if p.projector != j
            || p.channels.len() != channels
            || p.channels.iter().any(|c| c.dims() != (pin.width, pin.height))
        {
            return Err(Error::Config(format!("pattern {j} does not match projector {j}")));
        }
    }
    let cam = &scene.camera;
    let (w, h) = (cam.width, cam.height);
    let mut out: Vec<RecombinedImage> = scene
        .surfaces
        .iter()
        .map(|s| RecombinedImage {
            surface: s.id,
            channels: vec![Raster::filled(w, h, 0.0); channels],
            mask: Raster::filled(w, h, false),
        })
        .collect();

    for layer in scene.layers() {
        let rows: Vec<Vec<(usize, usize, Vec<f64>)>> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut row = Vec::new();
                for x in 0..w {
                    let Some(hit) = scene.camera_hit(layer, x, y) else {
                        continue;
                    };
                    let albedo = scene.surfaces[hit.surface].albedo;
                    let mut value = vec![0.0; channels];
                    let mut lit = false;
                    for (j, pattern) in patterns.iter().enumerate() {
                        let Some(ill) = scene.illumination(layer, j, &hit) else {
                            continue;
                        };
                        let Ok(wgt) = scene
                            .convention
                            .weight(ill.distance, ill.cosine, scene.reference_distance)
                        else {
                            continue;
                        };
                        lit = true;
                        for (v, c) in value.iter_mut().zip(&pattern.channels) {
                            *v += albedo * wgt * c.as_slice()[ill.pixel].max(0.0);
                        }
                    }
                    if lit {
                        row.push((x, hit.surface, value));
                    }
                }
                row
            })
            .collect();
        for (y, row) in rows.into_iter().enumerate() {
            for (x, k, value) in row {
                let img = &mut out[k];
                *img.mask.get_mut(x, y) = true;
                for (c, v) in img.channels.iter_mut().zip(value) {
                    *c.get_mut(x, y) = v;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{SurfaceGeometry, Vec3};
    use crate::system::Convention;
    use crate::test_support::{geometric_system, simple_scene};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn patterns_from(values: &[f64], scene: &SceneDescription) -> Vec<PatternImage> {
        let mut off = 0;
        scene
            .projectors
            .iter()
            .map(|p| {
                let n = p.pinhole.pixel_count();
                let r = Raster::from_vec(p.pinhole.width, p.pinhole.height, values[off..off + n].to_vec()).unwrap();
                off += n;
                PatternImage {
                    projector: p.id,
                    channels: vec![r],
                }
            })
            .collect()
    }

    #[test]
    fn dark_patterns_render_dark() {
        let s = simple_scene(2, &[0.8, 1.0]);
        let pats: Vec<PatternImage> = s
            .projectors
            .iter()
            .map(|p| PatternImage::zeros(p.id, p.pinhole.width, p.pinhole.height, 1))
            .collect();
        let imgs = render_patterns(&s, &pats).unwrap();
        assert_eq!(imgs.len(), 2);
        assert!(imgs.iter().all(|i| i.channels[0].as_slice().iter().all(|&v| v == 0.0)));
        assert!(imgs.iter().all(|i| i.mask.as_slice().iter().any(|&m| m)));
    }

    #[test]
    fn matches_matrix_vector_product() {
        for convention in [Convention::Paper, Convention::Physical] {
            let mut s = simple_scene(2, &[0.8, 1.0]);
            s.convention = convention;
            s.surfaces[1].albedo = 0.7;
            let sys = geometric_system(&s);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let p: Vec<f64> = (0..sys.num_cols()).map(|_| rng.random_range(0.0..255.0)).collect();
            let ap = sys.matvec(&p);
            let imgs = render_patterns(&s, &patterns_from(&p, &s)).unwrap();
            let w = s.camera.width;
            for (r, meta) in sys.row_meta().iter().enumerate() {
                let px = meta.pixel as usize;
                let v = imgs[meta.surface].channels[0].get(px % w, px / w);
                assert!((v - ap[r]).abs() <= 1e-6 * ap[r].abs().max(1.0), "{v} vs {}", ap[r]);
                assert!(*imgs[meta.surface].mask.get(px % w, px / w));
            }
        }
    }

    #[test]
    fn physical_falloff_on_tilted_plane() {
        let mut s = simple_scene(1, &[1.0]);
        s.convention = Convention::Physical;
        let n = Vec3::new(0.4, 0.0, -1.0).normalize();
        s.surfaces[0].geometry = SurfaceGeometry::Plane {
            point: Vec3::new(0.0, 0.0, 1.0),
            normal: n,
        };
        let pin = &s.projectors[0].pinhole;
        let pats = vec![PatternImage {
            projector: 0,
            channels: vec![Raster::filled(pin.width, pin.height, 200.0)],
        }];
        let img = &render_patterns(&s, &pats).unwrap()[0];
        let mut checked = 0;
        for y in 0..s.camera.height {
            for x in 0..s.camera.width {
                if !*img.mask.get(x, y) {
                    continue;
                }
                let hit = s.camera_hit(0, x, y).unwrap();
                let to = pin.center() - hit.point;
                let d = to.norm();
                let expect = 200.0 * (to / d).dot(&n) / (d * d);
                assert!((img.channels[0].get(x, y) - expect).abs() < 1e-9);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn negative_drive_is_clamped() {
        let s = simple_scene(1, &[1.0]);
        let pin = &s.projectors[0].pinhole;
        let pats = vec![PatternImage {
            projector: 0,
            channels: vec![Raster::filled(pin.width, pin.height, -50.0)],
        }];
        let img = &render_patterns(&s, &pats).unwrap()[0];
        assert!(img.channels[0].as_slice().iter().all(|&v| v == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn brightening_a_pixel_never_darkens(seed in 0u64..1000, bump in 0.1f64..100.0) {
            let s = simple_scene(2, &[0.8, 1.0]);
            let n: usize = s.projectors.iter().map(|p| p.pinhole.pixel_count()).sum();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..255.0)).collect();
            let before = render_patterns(&s, &patterns_from(&p, &s)).unwrap();
            let k = rng.random_range(0..n);
            p[k] += bump;
            let after = render_patterns(&s, &patterns_from(&p, &s)).unwrap();
            for (a, b) in before.iter().zip(&after) {
                for (x, y) in a.channels[0].as_slice().iter().zip(b.channels[0].as_slice()) {
                    prop_assert!(y >= x);
                }
            }
        }
    }
}

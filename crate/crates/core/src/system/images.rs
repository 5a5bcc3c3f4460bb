use crate::error::{Error, Result};
use crate::raster::{load_png, Raster};
use crate::scene::{SceneDescription, TargetSource};

/// Desired intensities for one surface, on the camera raster (identity `g_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetImage {
    pub surface: usize,
    pub channels: Vec<Raster<f64>>,
}

impl TargetImage {
    pub fn new(surface: usize, channels: Vec<Raster<f64>>) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::Config("target image has no channels".into()));
        };
        if channels.iter().any(|c| c.dims() != first.dims()) {
            return Err(Error::Config("target channels differ in size".into()));
        }
        if channels
            .iter()
            .flat_map(|c| c.as_slice())
            .any(|v| !(0.0..=255.0).contains(v))
        {
            return Err(Error::Config(format!("target {surface} has values outside [0,255]")));
        }
        Ok(Self { surface, channels })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }
}

/// Drive values `p_j` for one projector, one raster per colour channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternImage {
    pub projector: usize,
    pub channels: Vec<Raster<f64>>,
}

impl PatternImage {
    pub fn zeros(projector: usize, width: usize, height: usize, channels: usize) -> Self {
        Self {
            projector,
            channels: vec![Raster::filled(width, height, 0.0); channels],
        }
    }

    pub fn value_range(&self) -> (f64, f64) {
        self.channels
            .iter()
            .flat_map(|c| c.as_slice().iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

/// Loads (or generates) every bound target at the camera resolution. Grayscale
/// targets are replicated to three channels when any target is in colour.
pub fn load_targets(scene: &SceneDescription) -> Result<Vec<TargetImage>> {
    let (w, h) = (scene.camera.width, scene.camera.height);
    let mut targets = scene
        .targets
        .iter()
        .map(|b| {
            let channels = match &b.source {
                TargetSource::File { path } => load_png(path, Some((w, h)))?,
                TargetSource::Procedural { procedural } => vec![procedural.generate(w, h)],
            };
            TargetImage::new(b.surface, channels)
        })
        .collect::<Result<Vec<_>>>()?;
    if targets.iter().any(|t| t.channels.len() == 3) {
        for t in &mut targets {
            if t.channels.len() == 1 {
                t.channels = vec![t.channels[0].clone(); 3];
            }
        }
    }
    targets.sort_by_key(|t| t.surface);
    Ok(targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_targets() {
        let r = Raster::from_vec(2, 1, vec![0.0, 256.0]).unwrap();
        assert!(TargetImage::new(0, vec![r]).is_err());
    }

    #[test]
    fn mixed_targets_promote_to_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let mut scene = crate::test_support::simple_scene(1, &[0.8, 1.0]);
        let (w, h) = (scene.camera.width, scene.camera.height);
        let path = dir.path().join("c.png");
        let rgb = vec![
            Raster::filled(w / 2, h / 2, 10.0),
            Raster::filled(w / 2, h / 2, 20.0),
            Raster::filled(w / 2, h / 2, 30.0),
        ];
        crate::raster::save_png(&rgb, &path).unwrap();
        scene.targets[1].source = TargetSource::File { path };
        let t = load_targets(&scene).unwrap();
        assert_eq!(t[0].channels.len(), 3);
        assert_eq!(t[1].dims(), (w, h));
        assert_eq!(*t[1].channels[2].get(3, 3), 30.0);
    }
}

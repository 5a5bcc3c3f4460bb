//! Camera↔projector pixel maps, hole filling and their on-disk formats.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

/// A pixel coordinate in a projector or camera raster.
pub type PixelCoord = (u16, u16);

const MAGIC: &[u8; 4] = b"DCM1";
const UNDEFINED: u16 = 0xFFFF;

/// Map `f_j` from camera pixels to projector pixels, plus the scattered inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    pub projector: usize,
    pub layer: usize,
    projector_size: (usize, usize),
    forward: Raster<Option<PixelCoord>>,
    inverse: Raster<Option<PixelCoord>>,
}

impl CorrespondenceMap {
    /// Builds the map from its forward half; the inverse keeps the first camera
    /// pixel in scan order for every projector pixel.
    pub fn from_forward(
        projector: usize,
        layer: usize,
        projector_size: (usize, usize),
        forward: Raster<Option<PixelCoord>>,
    ) -> Result<Self> {
        let (pw, ph) = projector_size;
        let mut inverse = Raster::filled(pw, ph, None);
        for cy in 0..forward.height() {
            for cx in 0..forward.width() {
                if let Some((px, py)) = *forward.get(cx, cy) {
                    if px as usize >= pw || py as usize >= ph {
                        return Err(Error::Config(format!(
                            "forward entry ({px},{py}) outside {pw}x{ph} projector raster"
                        )));
                    }
                    let slot = inverse.get_mut(px as usize, py as usize);
                    if slot.is_none() {
                        *slot = Some((cx as u16, cy as u16));
                    }
                }
            }
        }
        Ok(Self {
            projector,
            layer,
            projector_size,
            forward,
            inverse,
        })
    }

    pub fn camera_size(&self) -> (usize, usize) {
        self.forward.dims()
    }

    pub fn projector_size(&self) -> (usize, usize) {
        self.projector_size
    }

    pub fn forward(&self) -> &Raster<Option<PixelCoord>> {
        &self.forward
    }

    pub fn inverse(&self) -> &Raster<Option<PixelCoord>> {
        &self.inverse
    }

    /// Row-major projector pixel index for a row-major camera pixel index.
    #[inline]
    pub fn projector_pixel(&self, camera_index: usize) -> Option<usize> {
        self.forward.as_slice()[camera_index].map(|(x, y)| y as usize * self.projector_size.0 + x as usize)
    }

    pub fn defined_count(&self) -> usize {
        self.forward.as_slice().iter().filter(|e| e.is_some()).count()
    }

    /// Binary raster file: magic `DCM1`, six little-endian u32 (camera w, h,
    /// projector w, h, projector id, layer), then per camera pixel two u16
    /// projector coordinates with 0xFFFF marking undefined.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        out.write_all(MAGIC)?;
        let (cw, ch) = self.camera_size();
        for v in [
            cw,
            ch,
            self.projector_size.0,
            self.projector_size.1,
            self.projector,
            self.layer,
        ] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        for e in self.forward.as_slice() {
            let (x, y) = e.unwrap_or((UNDEFINED, UNDEFINED));
            out.write_all(&x.to_le_bytes())?;
            out.write_all(&y.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |reason: &str| Error::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 28 || &bytes[..4] != MAGIC {
            return Err(bad("missing DCM1 header"));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
        let (cw, ch, pw, ph, projector, layer) = (word(0), word(1), word(2), word(3), word(4), word(5));
        let body = &bytes[28..];
        if body.len() != cw * ch * 4 {
            return Err(bad("payload size does not match dimensions"));
        }
        let forward: Vec<Option<PixelCoord>> = body
            .chunks_exact(4)
            .map(|c| {
                let x = u16::from_le_bytes([c[0], c[1]]);
                let y = u16::from_le_bytes([c[2], c[3]]);
                (x != UNDEFINED && y != UNDEFINED).then_some((x, y))
            })
            .collect();
        Self::from_forward(projector, layer, (pw, ph), Raster::from_vec(cw, ch, forward)?)
            .map_err(|_| bad("entry outside projector raster"))
    }

    /// Human-readable dump: a header, then `cam_x cam_y proj_x proj_y` per defined pixel.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        let (cw, ch) = self.camera_size();
        writeln!(
            out,
            "# projector {} layer {} camera {cw}x{ch} projector {}x{} defined {}",
            self.projector,
            self.layer,
            self.projector_size.0,
            self.projector_size.1,
            self.defined_count()
        )?;
        for cy in 0..ch {
            for cx in 0..cw {
                if let Some((px, py)) = self.forward.get(cx, cy) {
                    writeln!(out, "{cx} {cy} {px} {py}")?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleFillOptions {
    /// Defined 8-neighbours required before a hole is filled.
    pub quorum: usize,
    pub max_iterations: usize,
}

impl Default for HoleFillOptions {
    fn default() -> Self {
        Self {
            quorum: 5,
            max_iterations: 10,
        }
    }
}

/// Fills undefined forward entries that have at least `quorum` defined 8-neighbours
/// with the component-wise (lower) median of those neighbours. Passes are applied
/// synchronously until nothing changes or the iteration cap is reached.
pub fn fill_holes(map: &CorrespondenceMap, options: &HoleFillOptions) -> CorrespondenceMap {
    let mut current = map.forward.clone();
    let (w, h) = current.dims();
    for _ in 0..options.max_iterations {
        let mut next = current.clone();
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                if current.get(x, y).is_some() {
                    continue;
                }
                let mut xs = Vec::with_capacity(8);
                let mut ys = Vec::with_capacity(8);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        if let Some((px, py)) = current.get(nx as usize, ny as usize) {
                            xs.push(*px);
                            ys.push(*py);
                        }
                    }
                }
                if xs.len() >= options.quorum && !xs.is_empty() {
                    xs.sort_unstable();
                    ys.sort_unstable();
                    let mid = (xs.len() - 1) / 2;
                    *next.get_mut(x, y) = Some((xs[mid], ys[mid]));
                    changed = true;
                }
            }
        }
        current = next;
        if !changed {
            break;
        }
    }
    CorrespondenceMap::from_forward(map.projector, map.layer, map.projector_size, current)
        .expect("medians of in-range entries stay in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth_map(w: usize, h: usize) -> CorrespondenceMap {
        let fwd = Raster::from_fn(w, h, |x, y| Some(((2 * x) as u16, (y + 3) as u16)));
        CorrespondenceMap::from_forward(0, 0, (2 * w, h + 3), fwd).unwrap()
    }

    #[test]
    fn inverse_keeps_first_in_scan_order() {
        let fwd = Raster::from_vec(
            3,
            2,
            vec![Some((1, 0)), Some((1, 0)), None, Some((0, 0)), Some((1, 0)), None],
        )
        .unwrap();
        let m = CorrespondenceMap::from_forward(2, 1, (2, 1), fwd).unwrap();
        assert_eq!(*m.inverse().get(1, 0), Some((0, 0)));
        assert_eq!(*m.inverse().get(0, 0), Some((0, 1)));
        // forward(inverse(p)) == p
        for (i, e) in m.inverse().as_slice().iter().enumerate() {
            if let Some((cx, cy)) = e {
                let p = m.forward().get(*cx as usize, *cy as usize).unwrap();
                assert_eq!(p.1 as usize * 2 + p.0 as usize, i);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_entries() {
        let fwd = Raster::from_vec(1, 1, vec![Some((5, 0))]).unwrap();
        assert!(CorrespondenceMap::from_forward(0, 0, (5, 1), fwd).is_err());
    }

    #[test]
    fn single_hole_gets_neighbour_median() {
        let full = smooth_map(7, 5);
        let mut fwd = full.forward().clone();
        *fwd.get_mut(3, 2) = None;
        let holed = CorrespondenceMap::from_forward(0, 0, full.projector_size(), fwd).unwrap();
        let filled = fill_holes(&holed, &HoleFillOptions::default());
        assert_eq!(filled.forward().get(3, 2), &Some((6, 5)));
        assert_eq!(filled, full);
    }

    #[test]
    fn large_region_stays_undefined() {
        let full = smooth_map(40, 40);
        let mut fwd = full.forward().clone();
        for y in 5..35 {
            for x in 5..35 {
                *fwd.get_mut(x, y) = None;
            }
        }
        let holed = CorrespondenceMap::from_forward(0, 0, full.projector_size(), fwd).unwrap();
        let filled = fill_holes(&holed, &HoleFillOptions::default());
        assert!(filled.forward().get(20, 20).is_none());
        // Defined entries never change.
        for (a, b) in holed.forward().as_slice().iter().zip(filled.forward().as_slice()) {
            if a.is_some() {
                assert_eq!(a, b);
            }
        }
        // Converged maps are fixed points.
        let mut converged = filled.clone();
        for _ in 0..10 {
            converged = fill_holes(&converged, &HoleFillOptions::default());
        }
        assert_eq!(fill_holes(&converged, &HoleFillOptions::default()), converged);
    }

    #[test]
    fn hole_free_map_unchanged() {
        let m = smooth_map(6, 4);
        assert_eq!(fill_holes(&m, &HoleFillOptions::default()), m);
    }

    #[test]
    fn binary_roundtrip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut fwd = smooth_map(5, 4).forward().clone();
        *fwd.get_mut(1, 1) = None;
        let m = CorrespondenceMap::from_forward(1, 3, (10, 7), fwd).unwrap();
        let p = dir.path().join("m.cmap");
        m.write_binary(&p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"DCM1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 5);
        assert_eq!(bytes.len(), 28 + 5 * 4 * 4);
        let undefined_at = 28 + (5 + 1) * 4;
        assert_eq!(&bytes[undefined_at..undefined_at + 4], &[0xFF; 4]);
        assert_eq!(CorrespondenceMap::read_binary(&p).unwrap(), m);

        fs::write(&p, b"nope").unwrap();
        assert!(CorrespondenceMap::read_binary(&p).is_err());

        let d = dir.path().join("m.txt");
        m.write_dump(&d).unwrap();
        let text = fs::read_to_string(&d).unwrap();
        assert_eq!(text.lines().count(), 1 + 19);
        assert!(text.lines().nth(1).unwrap() == "0 0 0 3");
    }
}

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use super::{InverseProjectionMap, TargetImage};
use crate::error::{Error, Result};
use crate::scene::SceneDescription;

/// Which image pixel a system row stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowMeta {
    pub surface: usize,
    /// Row-major camera pixel index.
    pub pixel: u32,
}

/// `i = A·p` in compressed-row form. Columns are the stacked pattern pixels of
/// all projectors; rows are the lit target pixels, grouped by surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    projector_sizes: Vec<(usize, usize)>,
    col_offsets: Vec<usize>,
    camera_size: (usize, usize),
    rows: Vec<RowMeta>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
    rhs: Vec<Vec<f64>>,
    infeasible: Vec<RowMeta>,
    culled: usize,
}

impl SparseSystem {
    /// Builds a system directly from rows of `(column, weight)` entries.
    pub fn from_rows(
        projector_sizes: Vec<(usize, usize)>,
        camera_size: (usize, usize),
        rows: Vec<(RowMeta, Vec<(u32, f64)>)>,
        rhs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut col_offsets = vec![0];
        for (w, h) in &projector_sizes {
            col_offsets.push(col_offsets.last().unwrap() + w * h);
        }
        let ncols = *col_offsets.last().unwrap();
        let mut meta = Vec::with_capacity(rows.len());
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        for (m, entries) in rows {
            for (c, w) in entries {
                if c as usize >= ncols || !(w.is_finite() && w > 0.0) {
                    return Err(Error::Config(format!("bad entry (col {c}, weight {w})")));
                }
                cols.push(c);
                weights.push(w);
            }
            meta.push(m);
            row_ptr.push(cols.len());
        }
        if rhs.iter().any(|r| r.len() != meta.len()) {
            return Err(Error::Config("right-hand side length differs from row count".into()));
        }
        Ok(Self {
            projector_sizes,
            col_offsets,
            camera_size,
            rows: meta,
            row_ptr,
            cols,
            weights,
            rhs,
            infeasible: Vec::new(),
            culled: 0,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        *self.col_offsets.last().unwrap()
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn num_projectors(&self) -> usize {
        self.projector_sizes.len()
    }

    pub fn projector_sizes(&self) -> &[(usize, usize)] {
        &self.projector_sizes
    }

    pub fn camera_size(&self) -> (usize, usize) {
        self.camera_size
    }

    pub fn channels(&self) -> usize {
        self.rhs.len()
    }

    pub fn row_meta(&self) -> &[RowMeta] {
        &self.rows
    }

    /// Target pixels no projector reaches; excluded from the objective.
    pub fn infeasible_rows(&self) -> &[RowMeta] {
        &self.infeasible
    }

    /// Correspondences dropped because the mapped projector faced the surface's back.
    pub fn culled_entries(&self) -> usize {
        self.culled
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.cols[span.clone()], &self.weights[span])
    }

    pub fn rhs(&self, channel: usize) -> &[f64] {
        &self.rhs[channel]
    }

    /// Replaces the right-hand side (one vector per channel).
    pub fn with_rhs(mut self, rhs: Vec<Vec<f64>>) -> Result<Self> {
        if rhs.is_empty() || rhs.iter().any(|r| r.len() != self.num_rows()) {
            return Err(Error::Config("right-hand side length differs from row count".into()));
        }
        self.rhs = rhs;
        Ok(self)
    }

    /// `(projector, pixel index)` of a column.
    pub fn column_var(&self, col: usize) -> (usize, usize) {
        let j = self.col_offsets.partition_point(|&o| o <= col) - 1;
        (j, col - self.col_offsets[j])
    }

    pub fn column_of(&self, projector: usize, pixel: usize) -> usize {
        self.col_offsets[projector] + pixel
    }

    pub fn col_offsets(&self) -> &[usize] {
        &self.col_offsets
    }

    /// `A·p`.
    pub fn matvec(&self, p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), self.num_cols());
        (0..self.num_rows())
            .into_par_iter()
            .with_min_len(4096)
            .map(|r| {
                let (c, w) = self.row(r);
                c.iter().zip(w).map(|(&c, &w)| w * p[c as usize]).sum()
            })
            .collect()
    }

    /// `Aᵀ·r`, accumulated serially so results are bit-reproducible.
    pub fn matvec_t(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.num_rows());
        let mut out = vec![0.0; self.num_cols()];
        for (row, &rv) in r.iter().enumerate() {
            let (c, w) = self.row(row);
            for (&c, &w) in c.iter().zip(w) {
                out[c as usize] += w * rv;
            }
        }
        out
    }

    /// Columns that appear in at least one row.
    pub fn used_columns(&self) -> Vec<bool> {
        let mut used = vec![false; self.num_cols()];
        for &c in &self.cols {
            used[c as usize] = true;
        }
        used
    }

    /// Coordinate-list dump in Matrix Market format (1-based indices).
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(
            out,
            "% rows: (surface, camera pixel) pairs; columns: stacked projector pixels"
        )?;
        writeln!(out, "{} {} {}", self.num_rows(), self.num_cols(), self.nnz())?;
        for r in 0..self.num_rows() {
            let (c, w) = self.row(r);
            for (&c, &w) in c.iter().zip(w) {
                writeln!(out, "{} {} {:e}", r + 1, c + 1, w)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// One row per image pixel lit by at least one projector, with coefficients from
/// the scene's attenuation convention and the geometry cached in `q`.
pub fn assemble(scene: &SceneDescription, q: &InverseProjectionMap, targets: &[TargetImage]) -> Result<SparseSystem> {
    let cam = (scene.camera.width, scene.camera.height);
    let channels = targets.first().map_or(1, |t| t.channels.len());
    let mut by_surface: Vec<Option<&TargetImage>> = vec![None; scene.surfaces.len()];
    for t in targets {
        if t.dims() != cam {
            return Err(Error::Config(format!(
                "target {} is {:?}, camera is {cam:?}",
                t.surface,
                t.dims()
            )));
        }
        if t.channels.len() != channels {
            return Err(Error::Config("targets differ in channel count".into()));
        }
        *by_surface
            .get_mut(t.surface)
            .ok_or_else(|| Error::Config(format!("target for unknown surface {}", t.surface)))? = Some(t);
    }
    if q.num_projectors() != scene.projectors.len() {
        return Err(Error::Config("inverse projection built for another scene".into()));
    }

    let sizes: Vec<(usize, usize)> = scene
        .projectors
        .iter()
        .map(|p| (p.pinhole.width, p.pinhole.height))
        .collect();
    let mut offsets = vec![0usize];
    for (w, h) in &sizes {
        offsets.push(offsets.last().unwrap() + w * h);
    }

    let dref = scene.reference_distance;
    let convention = scene.convention;
    let per_row: Vec<(Vec<(u32, f64)>, usize)> = (0..q.len())
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| {
            let px = &q.pixels()[i];
            let albedo = scene.surfaces[px.surface].albedo;
            let mut entries = Vec::with_capacity(sizes.len());
            let mut culled = 0;
            for (j, m) in q.entry(i).iter().enumerate() {
                let Some(m) = m else { continue };
                let centre = scene.projectors[j].pinhole.center();
                let to_proj = centre - px.point;
                let d = to_proj.norm();
                let cosine = (to_proj / d).dot(&px.normal);
                match convention.weight(d, cosine, dref) {
                    Ok(w) => entries.push(((offsets[j] + *m as usize) as u32, albedo * w)),
                    Err(_) => culled += 1,
                }
            }
            (entries, culled)
        })
        .collect();

    let mut rows = Vec::with_capacity(q.len());
    let mut rhs: Vec<Vec<f64>> = vec![Vec::with_capacity(q.len()); channels];
    let mut infeasible = Vec::new();
    let mut culled = 0;
    for (i, (entries, c)) in per_row.into_iter().enumerate() {
        culled += c;
        let px = &q.pixels()[i];
        let meta = RowMeta {
            surface: px.surface,
            pixel: px.pixel,
        };
        if entries.is_empty() {
            infeasible.push(meta);
            continue;
        }
        let target =
            by_surface[px.surface].ok_or_else(|| Error::Config(format!("no target for surface {}", px.surface)))?;
        for (ch, out) in rhs.iter_mut().enumerate() {
            out.push(target.channels[ch].as_slice()[px.pixel as usize]);
        }
        rows.push((meta, entries));
    }
    if rows.is_empty() {
        return Err(Error::Infeasible(format!(
            "none of {} visible target pixels is lit by any projector",
            infeasible.len()
        )));
    }
    let mut system = SparseSystem::from_rows(sizes, cam, rows, rhs)?;
    system.infeasible = infeasible;
    system.culled = culled;
    Ok(system)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::geometric_correspondences;
    use crate::system::build_inverse_projection;
    use crate::test_support::{geometric_system, simple_scene};

    #[test]
    fn two_projectors_two_planes_have_two_entries_where_doubly_lit() {
        let s = simple_scene(2, &[0.8, 1.0]);
        let sys = geometric_system(&s);
        let mut counts = [0usize; 3];
        for r in 0..sys.num_rows() {
            counts[sys.row(r).0.len()] += 1;
        }
        assert_eq!(counts[0], 0);
        assert!(counts[2] > counts[1]);
        assert!((0..sys.num_rows()).all(|r| sys.row(r).0.len() <= 2));
        // Deterministic.
        assert_eq!(geometric_system(&s), sys);
    }

    #[test]
    fn single_projector_is_diagonal_like() {
        let s = simple_scene(1, &[1.0]);
        let sys = geometric_system(&s);
        assert!((0..sys.num_rows()).all(|r| sys.row(r).0.len() == 1));
        // Weights near 1 for a fronto-parallel plane at the reference distance.
        let (_, w) = sys.row(sys.num_rows() / 2);
        assert!((w[0] - 1.0).abs() < 0.2, "{w:?}");
    }

    #[test]
    fn unreachable_pixels_are_flagged() {
        let s = simple_scene(2, &[1.0]);
        // Only projector 0 mapped, and only its top half: the rest is infeasible.
        let mut m = geometric_correspondences(&s, 0, 0).unwrap();
        let (pw, ph) = m.projector_size();
        let fwd = m.forward().map(|e| e.filter(|(_, y)| (*y as usize) < ph / 2));
        m = crate::calib::CorrespondenceMap::from_forward(0, 0, (pw, ph), fwd).unwrap();
        let q = build_inverse_projection(&s, &[m]).unwrap();
        let targets = crate::system::load_targets(&s).unwrap();
        let sys = assemble(&s, &q, &targets).unwrap();
        assert!(!sys.infeasible_rows().is_empty());
        assert_eq!(sys.num_rows() + sys.infeasible_rows().len(), q.len());

        let q = build_inverse_projection(&s, &[]).unwrap();
        assert!(matches!(assemble(&s, &q, &targets), Err(Error::Infeasible(_))));
    }

    #[test]
    fn albedo_scales_weights() {
        let mut s = simple_scene(1, &[1.0]);
        let a = geometric_system(&s);
        s.surfaces[0].albedo = 0.5;
        let b = geometric_system(&s);
        for r in 0..a.num_rows() {
            assert!((a.row(r).1[0] * 0.5 - b.row(r).1[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn transpose_matches_dense_definition() {
        let s = simple_scene(2, &[0.8, 1.0]);
        let sys = geometric_system(&s);
        let r: Vec<f64> = (0..sys.num_rows()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let p: Vec<f64> = (0..sys.num_cols()).map(|i| ((i * 104729) % 17) as f64).collect();
        let lhs: f64 = sys.matvec(&p).iter().zip(&r).map(|(a, b)| a * b).sum();
        let rhs: f64 = sys.matvec_t(&r).iter().zip(&p).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn matrix_market_dump() {
        let dir = tempfile::tempdir().unwrap();
        let sys = geometric_system(&simple_scene(1, &[1.0]));
        let p = dir.path().join("a.mtx");
        sys.write_matrix_market(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let mut lines = text.lines().filter(|l| !l.starts_with('%'));
        assert_eq!(
            lines.next().unwrap(),
            format!("{} {} {}", sys.num_rows(), sys.num_cols(), sys.nnz())
        );
        assert_eq!(lines.count(), sys.nnz());
    }

    #[test]
    fn column_mapping() {
        let sys = geometric_system(&simple_scene(2, &[1.0]));
        let (w, h) = sys.projector_sizes()[0];
        assert_eq!(sys.column_var(0), (0, 0));
        assert_eq!(sys.column_var(w * h), (1, 0));
        assert_eq!(sys.column_of(1, 5), w * h + 5);
    }
}

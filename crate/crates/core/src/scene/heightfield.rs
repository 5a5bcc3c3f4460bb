//! Height-field surfaces: a regular grid of depths in a reference (camera) frame,
//! triangulated two triangles per cell and traversed with a 2-D DDA.

use std::sync::Arc;

use super::geometry::{Pose, Ray, Vec3};
use crate::error::{Error, Result};

/// Grid of depths sampled at `(origin + i·spacing)` in the x/y plane of `frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    frame: Pose,
    origin: [f64; 2],
    spacing: [f64; 2],
    cols: usize,
    rows: usize,
    depths: Arc<Vec<f64>>,
    /// Per-sample normals in the frame, oriented along +z (away from the viewer).
    normals: Arc<Vec<Vec3>>,
    depth_range: (f64, f64),
}

/// Intersection with a height field, in world coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FieldHit {
    pub t: f64,
    /// Interpolated normal facing the frame origin side (towards −z of the frame).
    pub normal: Vec3,
}

impl HeightField {
    pub fn new(
        frame: Pose,
        origin: [f64; 2],
        spacing: [f64; 2],
        cols: usize,
        rows: usize,
        depths: Vec<f64>,
    ) -> Result<Self> {
        if cols < 2 || rows < 2 {
            return Err(Error::InvalidScene("height field needs at least 2x2 samples".into()));
        }
        if depths.len() != cols * rows {
            return Err(Error::InvalidScene(format!(
                "height field has {} depths, expected {}",
                depths.len(),
                cols * rows
            )));
        }
        if !(spacing[0] > 0.0 && spacing[1] > 0.0) || !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidScene("height field spacing must be positive".into()));
        }
        if let Some(bad) = depths.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::InvalidScene(format!(
                "height field depth {bad} is not finite and positive"
            )));
        }
        frame.validate()?;
        let lo = depths.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = depths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut field = Self {
            frame,
            origin,
            spacing,
            cols,
            rows,
            depths: Arc::new(depths),
            normals: Arc::new(Vec::new()),
            depth_range: (lo, hi),
        };
        field.normals = Arc::new(field.finite_difference_normals());
        Ok(field)
    }

    pub fn frame(&self) -> &Pose {
        &self.frame
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    /// Normals per sample, in the field's frame, oriented along +z.
    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    /// Sample position in the field's frame.
    #[inline]
    pub fn vertex(&self, i: usize, j: usize) -> Vec3 {
        Vec3::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.depths[j * self.cols + i],
        )
    }

    fn finite_difference_normals(&self) -> Vec<Vec3> {
        let (cols, rows) = (self.cols, self.rows);
        let mut out: Vec<Option<Vec3>> = Vec::with_capacity(cols * rows);
        for j in 0..rows {
            for i in 0..cols {
                let (i0, i1) = (i.saturating_sub(1), (i + 1).min(cols - 1));
                let (j0, j1) = (j.saturating_sub(1), (j + 1).min(rows - 1));
                let tx = self.vertex(i1, j) - self.vertex(i0, j);
                let ty = self.vertex(i, j1) - self.vertex(i, j0);
                out.push(tx.cross(&ty).try_normalize(1e-300));
            }
        }
        fill_invalid_normals(&out, cols, rows)
    }

    /// Nearest front-facing intersection of a world ray with the triangulated field.
    pub(crate) fn intersect(&self, ray: &Ray) -> Option<FieldHit> {
        let o = self.frame.to_device(&ray.origin);
        let d = self.frame.dir_to_device(&ray.dir);

        let x_max = self.origin[0] + (self.cols - 1) as f64 * self.spacing[0];
        let y_max = self.origin[1] + (self.rows - 1) as f64 * self.spacing[1];
        let pad = 1e-9 * (1.0 + self.depth_range.1);
        let lo = [self.origin[0] - pad, self.origin[1] - pad, self.depth_range.0 - pad];
        let hi = [x_max + pad, y_max + pad, self.depth_range.1 + pad];
        let (mut t_enter, mut t_exit) = (0.0f64, f64::INFINITY);
        for a in 0..3 {
            if d[a].abs() < 1e-300 {
                if o[a] < lo[a] || o[a] > hi[a] {
                    return None;
                }
                continue;
            }
            let (mut t0, mut t1) = ((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
        }
        if t_enter > t_exit {
            return None;
        }

        let last_i = (self.cols - 2) as i64;
        let last_j = (self.rows - 2) as i64;
        let p = o + d * t_enter;
        let gx = (p.x - self.origin[0]) / self.spacing[0];
        let gy = (p.y - self.origin[1]) / self.spacing[1];
        let mut i = (gx.floor() as i64).clamp(0, last_i);
        let mut j = (gy.floor() as i64).clamp(0, last_j);

        let axis = |g: i64, o: f64, d: f64, org: f64, h: f64| -> (i64, f64, f64) {
            if d > 0.0 {
                (1, (org + (g + 1) as f64 * h - o) / d, h / d)
            } else if d < 0.0 {
                (-1, (org + g as f64 * h - o) / d, -h / d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (step_x, mut next_x, delta_x) = axis(i, o.x, d.x, self.origin[0], self.spacing[0]);
        let (step_y, mut next_y, delta_y) = axis(j, o.y, d.y, self.origin[1], self.spacing[1]);

        loop {
            if let Some(hit) = self.intersect_cell(&o, &d, i as usize, j as usize) {
                return Some(FieldHit {
                    t: hit.0,
                    normal: -self.frame.dir_to_world(&hit.1),
                });
            }
            if next_x.min(next_y) > t_exit {
                return None;
            }
            if next_x < next_y {
                i += step_x;
                next_x += delta_x;
            } else {
                j += step_y;
                next_y += delta_y;
            }
            if i < 0 || j < 0 || i > last_i || j > last_j {
                return None;
            }
        }
    }

    /// Returns `(t, frame-space normal along +z)` for the nearer of the cell's two triangles.
    fn intersect_cell(&self, o: &Vec3, d: &Vec3, i: usize, j: usize) -> Option<(f64, Vec3)> {
        let idx = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
        let v: Vec<Vec3> = idx.iter().map(|&(a, b)| self.vertex(a, b)).collect();
        let n: Vec<Vec3> = idx.iter().map(|&(a, b)| self.normals[b * self.cols + a]).collect();
        let mut best: Option<(f64, Vec3)> = None;
        for tri in [[0usize, 1, 2], [0, 2, 3]] {
            if let Some((t, u, w)) = moller_trumbore(o, d, &v[tri[0]], &v[tri[1]], &v[tri[2]]) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    let normal = n[tri[0]] * (1.0 - u - w) + n[tri[1]] * u + n[tri[2]] * w;
                    best = Some((t, normal.normalize()));
                }
            }
        }
        best
    }
}

/// Ray/triangle intersection; returns `(t, u, v)` with barycentrics for `v1`, `v2`.
fn moller_trumbore(o: &Vec3, d: &Vec3, v0: &Vec3, v1: &Vec3, v2: &Vec3) -> Option<(f64, f64, f64)> {
    const EPS: f64 = 1e-12;
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - v0;
    let u = s.dot(&p) * inv;
    if !(-EPS..=1.0 + EPS).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < -EPS || u + v > 1.0 + EPS {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > EPS).then_some((t, u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)))
}

/// Replaces undefined normals with the nearest defined one (breadth-first over the grid).
/// If nothing is defined every sample gets +z.
pub(crate) fn fill_invalid_normals(normals: &[Option<Vec3>], cols: usize, rows: usize) -> Vec<Vec3> {
    let mut out: Vec<Option<Vec3>> = normals.to_vec();
    let mut frontier: std::collections::VecDeque<usize> = (0..out.len()).filter(|&k| out[k].is_some()).collect();
    if frontier.is_empty() {
        return vec![Vec3::z(); normals.len()];
    }
    while let Some(k) = frontier.pop_front() {
        let (i, j) = ((k % cols) as i64, (k / cols) as i64);
        for (di, dj) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let (ni, nj) = (i + di, j + dj);
            if ni < 0 || nj < 0 || ni >= cols as i64 || nj >= rows as i64 {
                continue;
            }
            let nk = nj as usize * cols + ni as usize;
            if out[nk].is_none() {
                out[nk] = out[k];
                frontier.push_back(nk);
            }
        }
    }
    out.into_iter().map(|n| n.unwrap_or_else(Vec3::z)).collect()
}

use rayon::prelude::*;

use super::boxlsq::dot;
use super::eo::scatter_patterns;
use crate::error::{Error, Result};
use crate::system::{PatternImage, SparseSystem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfOptions {
    /// Stop when `‖Aᵀr‖ ≤ tolerance·‖Aᵀb‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LfOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgnrOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final `‖Aᵀ(b − Ax)‖ / ‖Aᵀb‖`, recomputed from the iterate.
    pub relative_gradient: f64,
}

/// `AᵀA` in compressed-row form, diagonal included.
struct NormalMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl NormalMatrix {
    fn new(system: &SparseSystem) -> Self {
        let n = system.num_cols();
        // Transpose of A: the rows touching each column.
        let mut col_ptr = vec![0usize; n + 1];
        for r in 0..system.num_rows() {
            for &c in system.row(r).0 {
                col_ptr[c as usize + 1] += 1;
            }
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        let mut fill = col_ptr.clone();
        let mut touch = vec![(0u32, 0.0f64); col_ptr[n]];
        for r in 0..system.num_rows() {
            let (cs, ws) = system.row(r);
            for (&c, &w) in cs.iter().zip(ws) {
                touch[fill[c as usize]] = (r as u32, w);
                fill[c as usize] += 1;
            }
        }
        let rows: Vec<Vec<(u32, f64)>> = (0..n)
            .into_par_iter()
            .with_min_len(1024)
            .map(|c| {
                let mut pairs = Vec::new();
                for &(r, w) in &touch[col_ptr[c]..col_ptr[c + 1]] {
                    let (cs, ws) = system.row(r as usize);
                    pairs.extend(cs.iter().zip(ws).map(|(&c2, &w2)| (c2, w * w2)));
                }
                pairs.sort_by_key(|p| p.0);
                let mut merged: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
                for (c2, v) in pairs {
                    match merged.last_mut() {
                        Some(last) if last.0 == c2 => last.1 += v,
                        _ => merged.push((c2, v)),
                    }
                }
                merged
            })
            .collect();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols, vals }
    }

    fn mul_into(&self, p: &[f64], out: &mut [f64]) {
        out.par_iter_mut().with_min_len(4096).enumerate().for_each(|(i, o)| {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            *o = self.cols[span.clone()]
                .iter()
                .zip(&self.vals[span])
                .map(|(&c, &v)| v * p[c as usize])
                .sum();
        });
    }
}

/// Conjugate gradients on the normal equations `AᵀA·x = Aᵀb`, started from zero.
pub fn cgnr(system: &SparseSystem, rhs: &[f64], options: &LfOptions) -> Result<CgnrOutcome> {
    let n = system.num_cols();
    let mut x = vec![0.0; n];
    let g0 = system.matvec_t(rhs);
    let norm0 = dot(&g0, &g0).sqrt();
    if norm0 == 0.0 {
        return Ok(CgnrOutcome {
            x,
            iterations: 0,
            converged: true,
            relative_gradient: 0.0,
        });
    }
    let normal = NormalMatrix::new(system);
    let mut r = g0;
    let mut p = r.clone();
    let mut q = vec![0.0; n];
    let mut gamma = norm0 * norm0;
    let mut iterations = 0;
    while iterations < options.max_iterations && gamma.sqrt() > options.tolerance * norm0 {
        normal.mul_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = gamma / pq;
        for ((xi, ri), (pi, qi)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&q)) {
            *xi += alpha * pi;
            *ri -= alpha * qi;
        }
        let gamma_new = dot(&r, &r);
        if !gamma_new.is_finite() || !alpha.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite iterate after {iterations} iterations"
            )));
        }
        let beta = gamma_new / gamma;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        gamma = gamma_new;
        iterations += 1;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("non-finite solution".into()));
    }
    let residual: Vec<f64> = system.matvec(&x).iter().zip(rhs).map(|(a, b)| b - a).collect();
    let g = system.matvec_t(&residual);
    let rel = dot(&g, &g).sqrt() / norm0;
    Ok(CgnrOutcome {
        x,
        iterations,
        // Stopping follows the recurrence; the reported gradient is recomputed.
        converged: gamma.sqrt() <= options.tolerance * norm0,
        relative_gradient: rel,
    })
}

/// Global least squares followed by one affine map of the stacked solution onto
/// `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LfSolution {
    pub patterns: Vec<PatternImage>,
    /// Normalized stacked solution per channel.
    pub values: Vec<Vec<f64>>,
    /// Unconstrained solution per channel, before normalization.
    pub raw: Vec<Vec<f64>>,
    /// `(min, max)` of the raw solution over variables that appear in a row.
    pub raw_range: Vec<(f64, f64)>,
    pub iterations: Vec<usize>,
    pub warnings: Vec<String>,
}

pub fn solve_lf(system: &SparseSystem, options: &LfOptions) -> Result<LfSolution> {
    let used = system.used_columns();
    let mut out = LfSolution {
        patterns: Vec::new(),
        values: Vec::new(),
        raw: Vec::new(),
        raw_range: Vec::new(),
        iterations: Vec::new(),
        warnings: Vec::new(),
    };
    for ch in 0..system.channels() {
        let sol = cgnr(system, system.rhs(ch), options)?;
        if !sol.converged {
            let msg = format!(
                "LF channel {ch}: {} iterations, relative gradient {:.3e}",
                sol.iterations, sol.relative_gradient
            );
            log::warn!("{msg}");
            out.warnings.push(msg);
        }
        let (lo, hi) = sol
            .x
            .iter()
            .zip(&used)
            .filter(|(_, &u)| u)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (&v, _)| {
                (a.min(v), b.max(v))
            });
        let span = hi - lo;
        let normalized = sol
            .x
            .iter()
            .zip(&used)
            .map(|(&v, &u)| match (u, span > 0.0) {
                (false, _) => 0.0,
                (true, true) => 255.0 * (v - lo) / span,
                (true, false) => v.clamp(0.0, 255.0),
            })
            .collect();
        out.values.push(normalized);
        out.raw.push(sol.x);
        out.raw_range.push((lo, hi));
        out.iterations.push(sol.iterations);
    }
    out.patterns = scatter_patterns(system, &out.values);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_eo, SolveOptions, SolverBounds};
    use crate::system::RowMeta;
    use crate::test_support::{geometric_system, simple_scene};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_like_system_is_recovered_up_to_affine() {
        // One unknown per row with positive weights, as with a single projector.
        let n = 40;
        let rows = (0..n)
            .map(|i| {
                (
                    RowMeta {
                        surface: 0,
                        pixel: i as u32,
                    },
                    vec![(i as u32, 0.6 + 0.01 * i as f64)],
                )
            })
            .collect();
        let target: Vec<f64> = (0..n).map(|i| (i * 53 % 256) as f64).collect();
        let sys = SparseSystem::from_rows(vec![(n, 1)], (n, 1), rows, vec![target.clone()]).unwrap();
        let lf = solve_lf(&sys, &LfOptions::default()).unwrap();
        let exact: Vec<f64> = (0..n).map(|i| target[i] / (0.6 + 0.01 * i as f64)).collect();
        let (lo, hi) = lf.raw_range[0];
        let elo = exact.iter().copied().fold(f64::INFINITY, f64::min);
        let ehi = exact.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // CG stops at a relative gradient of 1e-8, which leaves errors near 1e-5.
        assert!((lo - elo).abs() < 1e-4 && (hi - ehi).abs() < 1e-4);
        for (i, &e) in exact.iter().enumerate() {
            assert!((lf.raw[0][i] - e).abs() < 1e-4);
            let expect = 255.0 * (e - elo) / (ehi - elo);
            assert!((lf.values[0][i] - expect).abs() < 1e-4);
        }
        assert!(lf.warnings.is_empty());
    }

    #[test]
    fn normal_matrix_matches_two_products() {
        let sys = geometric_system(&simple_scene(2, &[0.8, 1.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p: Vec<f64> = (0..sys.num_cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let want = sys.matvec_t(&sys.matvec(&p));
        let mut got = vec![0.0; p.len()];
        NormalMatrix::new(&sys).mul_into(&p, &mut got);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn negative_optimum_forces_compression() {
        // p0 + p1 = 0 and p0 = 100: unconstrained optimum has p1 = -100.
        let rows = vec![
            (RowMeta { surface: 0, pixel: 0 }, vec![(0, 1.0), (1, 1.0)]),
            (RowMeta { surface: 0, pixel: 1 }, vec![(0, 1.0)]),
        ];
        let sys = SparseSystem::from_rows(vec![(2, 1)], (2, 1), rows, vec![vec![0.0, 100.0]]).unwrap();
        let lf = solve_lf(&sys, &LfOptions::default()).unwrap();
        assert!(lf.raw_range[0].0 < 0.0);
        assert!((lf.raw[0][1] + 100.0).abs() < 1e-6);
        assert_eq!(lf.values[0], vec![255.0, 0.0]);
        let eo = solve_eo(&sys, &SolverBounds::default(), &SolveOptions::default()).unwrap();
        assert!(eo.values[0].iter().all(|v| (0.0..=255.0).contains(v)));
    }

    #[test]
    fn agrees_with_eo_when_optimum_is_interior() {
        let sys = geometric_system(&simple_scene(2, &[0.8, 1.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let used = sys.used_columns();
        let p0: Vec<f64> = (0..sys.num_cols()).map(|_| rng.random_range(40.0..200.0)).collect();
        let rhs = sys.matvec(&p0);
        let sys = sys.with_rhs(vec![rhs]).unwrap();
        let lf = solve_lf(&sys, &LfOptions::default()).unwrap();
        let eo = solve_eo(&sys, &SolverBounds::default(), &SolveOptions::default()).unwrap();
        let (lo, hi) = lf.raw_range[0];
        let undone: Vec<f64> = (0..sys.num_cols())
            .map(|c| {
                if used[c] {
                    lo + lf.values[0][c] * (hi - lo) / 255.0
                } else {
                    0.0
                }
            })
            .collect();
        // The minimizer is not unique on nearly singular chains; the image it
        // produces is, up to what the 1e-8 gradient tolerance of CG leaves.
        let a = sys.matvec(&undone);
        let b = sys.matvec(&eo.values[0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-2, "{x} vs {y}");
        }
    }
}

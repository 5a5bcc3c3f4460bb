use super::SolverBounds;
use crate::error::{Error, Result};

/// Stopping rules for [`BoxLeastSquares::solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Projected-gradient tolerance relative to `max(1, ‖Aᵀb‖∞)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Record the objective after every iteration.
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 10_000,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSolution {
    pub x: Vec<f64>,
    /// Sum of squared residuals at `x`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective before the first and after each iteration, when requested.
    pub trace: Vec<f64>,
}

/// `min ‖A·x − b‖²` subject to `lower ≤ x ≤ upper`, with `A` stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxLeastSquares {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
    rhs: Vec<f64>,
}

impl BoxLeastSquares {
    /// `rows[r]` lists the `(variable, weight)` entries of row `r`.
    pub fn new(n: usize, rows: &[Vec<(usize, f64)>], rhs: Vec<f64>) -> Result<Self> {
        if rows.len() != rhs.len() {
            return Err(Error::Config("row and right-hand side counts differ".into()));
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        for row in rows {
            for &(c, w) in row {
                if c >= n || !w.is_finite() {
                    return Err(Error::Config(format!("bad entry ({c}, {w})")));
                }
                cols.push(c as u32);
                weights.push(w);
            }
            row_ptr.push(cols.len());
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite right-hand side".into()));
        }
        Ok(Self::from_csr(n, row_ptr, cols, weights, rhs))
    }

    pub(crate) fn from_csr(n: usize, row_ptr: Vec<usize>, cols: Vec<u32>, weights: Vec<f64>, rhs: Vec<f64>) -> Self {
        debug_assert_eq!(row_ptr.len(), rhs.len() + 1);
        Self {
            n,
            row_ptr,
            cols,
            weights,
            rhs,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Stacks independent problems into one block-diagonal problem.
    pub fn concat(parts: &[BoxLeastSquares]) -> Self {
        let mut out = Self::from_csr(0, vec![0], Vec::new(), Vec::new(), Vec::new());
        for p in parts {
            let base = out.n as u32;
            for r in 0..p.num_rows() {
                let span = p.row_ptr[r]..p.row_ptr[r + 1];
                out.cols.extend(p.cols[span.clone()].iter().map(|c| c + base));
                out.weights.extend_from_slice(&p.weights[span]);
                out.row_ptr.push(out.cols.len());
            }
            out.rhs.extend_from_slice(&p.rhs);
            out.n += p.n;
        }
        out
    }

    /// `A·x − b`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.num_rows()];
        self.residual_into(x, &mut r);
        r
    }

    fn residual_into(&self, x: &[f64], r: &mut [f64]) {
        for (i, ri) in r.iter_mut().enumerate() {
            let mut s = -self.rhs[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.weights[k] * x[self.cols[k] as usize];
            }
            *ri = s;
        }
    }

    fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.weights[k] * x[self.cols[k] as usize];
            }
            *o = s;
        }
    }

    fn mul_t_into(&self, r: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &ri) in r.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.cols[k] as usize] += self.weights[k] * ri;
            }
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.residual(x).iter().map(|v| v * v).sum()
    }

    /// Gradient projection alternated with conjugate gradients on the face of the
    /// box holding the current iterate. Starting from the projection of zero keeps
    /// underdetermined problems at their minimum-norm solution when the box is
    /// inactive.
    pub fn solve(&self, bounds: &SolverBounds, options: &SolveOptions) -> BoxSolution {
        let n = self.n;
        let m = self.num_rows();
        let (lo, hi) = (bounds.lower, bounds.upper);
        let mut x = vec![bounds.clamp(0.0); n];
        let mut r = vec![0.0; m];
        let mut g = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut ad = vec![0.0; m];
        let mut trial = vec![0.0; n];
        let mut trial_r = vec![0.0; m];

        self.mul_t_into(&self.rhs, &mut g);
        let scale = g.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let tol = options.tolerance * scale;

        self.residual_into(&x, &mut r);
        let mut f = dot(&r, &r);
        let mut trace = Vec::new();
        if options.trace {
            trace.push(f);
        }
        let mut iterations = 0;
        let mut converged = false;
        while iterations < options.max_iterations {
            self.mul_t_into(&r, &mut g);
            let pg = x
                .iter()
                .zip(&g)
                .fold(0.0f64, |a, (&xi, &gi)| a.max((xi - (xi - gi).clamp(lo, hi)).abs()));
            if pg <= tol {
                converged = true;
                break;
            }
            iterations += 1;

            // Projected-gradient step, line search along the projected path.
            for i in 0..n {
                let blocked = (x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0);
                d[i] = if blocked { 0.0 } else { -g[i] };
            }
            self.mul_into(&d, &mut ad);
            let dd = dot(&d, &d);
            let add = dot(&ad, &ad);
            if add > 0.0 {
                let mut alpha = dd / add;
                loop {
                    for i in 0..n {
                        trial[i] = (x[i] + alpha * d[i]).clamp(lo, hi);
                    }
                    self.residual_into(&trial, &mut trial_r);
                    let ft = dot(&trial_r, &trial_r);
                    if ft <= f {
                        std::mem::swap(&mut x, &mut trial);
                        std::mem::swap(&mut r, &mut trial_r);
                        break;
                    }
                    alpha *= 0.5;
                    if alpha * dd.sqrt() < 1e-300 {
                        break;
                    }
                }
            }

            // Conjugate gradients on the free variables, stopped at the first bound.
            // The inner tolerance is far below the outer one: nearly singular
            // chains leave sizeable residuals behind tiny gradients.
            self.cg_on_face(&mut x, &mut r, lo, hi, tol * 1e-4, &mut g, &mut d, &mut ad);
            self.residual_into(&x, &mut r);
            f = dot(&r, &r);
            if options.trace {
                trace.push(f);
            }
        }
        for v in &mut x {
            *v = v.clamp(lo, hi);
        }
        let objective = self.objective(&x);
        BoxSolution {
            x,
            objective,
            iterations,
            converged,
            trace,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn cg_on_face(
        &self,
        x: &mut [f64],
        r: &mut [f64],
        lo: f64,
        hi: f64,
        tol: f64,
        s: &mut [f64],
        p: &mut [f64],
        q: &mut [f64],
    ) {
        let n = self.n;
        let free: Vec<bool> = x.iter().map(|&v| v > lo && v < hi).collect();
        let nfree = free.iter().filter(|&&f| f).count();
        if nfree == 0 {
            return;
        }
        let restrict = |s: &mut [f64]| {
            for i in 0..n {
                s[i] = if free[i] { -s[i] } else { 0.0 };
            }
        };
        self.mul_t_into(r, s);
        restrict(s);
        p.copy_from_slice(s);
        let mut gamma = dot(s, s);
        for _ in 0..nfree.max(1) * 2 {
            if gamma.sqrt() <= tol {
                break;
            }
            self.mul_into(p, q);
            let qq = dot(q, q);
            if qq <= 0.0 {
                break;
            }
            let alpha = gamma / qq;
            let mut amax = f64::INFINITY;
            let mut hit = usize::MAX;
            for i in 0..n {
                if p[i] > 0.0 {
                    let a = (hi - x[i]) / p[i];
                    if a < amax {
                        amax = a;
                        hit = i;
                    }
                } else if p[i] < 0.0 {
                    let a = (lo - x[i]) / p[i];
                    if a < amax {
                        amax = a;
                        hit = i;
                    }
                }
            }
            if alpha >= amax {
                for i in 0..n {
                    x[i] = (x[i] + amax * p[i]).clamp(lo, hi);
                }
                x[hit] = if p[hit] > 0.0 { hi } else { lo };
                return;
            }
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            for (ri, qi) in r.iter_mut().zip(q.iter()) {
                *ri += alpha * qi;
            }
            self.mul_t_into(r, s);
            restrict(s);
            let gamma_new = dot(s, s);
            let beta = gamma_new / gamma;
            for i in 0..n {
                p[i] = s[i] + beta * p[i];
            }
            gamma = gamma_new;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full() -> SolverBounds {
        SolverBounds::default()
    }

    #[test]
    fn minimum_norm_split() {
        let p = BoxLeastSquares::new(2, &[vec![(0, 1.0), (1, 1.0)]], vec![10.0]).unwrap();
        let s = p.solve(&full(), &SolveOptions::default());
        assert!(s.converged);
        assert!((s.x[0] - 5.0).abs() < 1e-9 && (s.x[1] - 5.0).abs() < 1e-9, "{:?}", s.x);
    }

    #[test]
    fn clamped_at_upper_bound() {
        let p = BoxLeastSquares::new(1, &[vec![(0, 1.0)]], vec![300.0]).unwrap();
        let s = p.solve(&full(), &SolveOptions::default());
        assert_eq!(s.x, vec![255.0]);
        assert!((p.residual(&s.x)[0] + 45.0).abs() < 1e-12);
        assert!((s.objective - 45.0 * 45.0).abs() < 1e-9);
    }

    #[test]
    fn unconstrained_interior_matches_normal_equations() {
        // Overdetermined 2×3 toy with a known interior optimum.
        let rows = vec![vec![(0, 1.0), (1, 0.5)], vec![(1, 1.0)], vec![(0, 0.3), (1, 1.0)]];
        let p = BoxLeastSquares::new(2, &rows, vec![60.0, 40.0, 70.0]).unwrap();
        let s = p.solve(&full(), &SolveOptions::default());
        let a = nalgebra::DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.0, 1.0, 0.3, 1.0]);
        let b = nalgebra::DVector::from_vec(vec![60.0, 40.0, 70.0]);
        let exact = (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap();
        assert!((s.x[0] - exact[0]).abs() < 1e-6 && (s.x[1] - exact[1]).abs() < 1e-6);
    }

    #[test]
    fn empty_problem() {
        let p = BoxLeastSquares::new(3, &[], vec![]).unwrap();
        let s = p.solve(&SolverBounds::new(-100.0, 255.0).unwrap(), &SolveOptions::default());
        assert_eq!(s.x, vec![0.0; 3]);
        let p = BoxLeastSquares::new(2, &[], vec![]).unwrap();
        let s = p.solve(&SolverBounds::new(10.0, 20.0).unwrap(), &SolveOptions::default());
        assert_eq!(s.x, vec![10.0; 2]);
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, m: usize) -> BoxLeastSquares {
        let rows: Vec<Vec<(usize, f64)>> = (0..m)
            .map(|_| {
                let mut row = Vec::new();
                for c in 0..n {
                    if rng.random_bool(0.5) {
                        row.push((c, rng.random_range(0.3..1.5)));
                    }
                }
                if row.is_empty() {
                    row.push((rng.random_range(0..n), 1.0));
                }
                row
            })
            .collect();
        let rhs = (0..m).map(|_| rng.random_range(-50.0..400.0)).collect();
        BoxLeastSquares::new(n, &rows, rhs).unwrap()
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = random_problem(&mut rng, 20, 25);
            let opts = SolveOptions {
                trace: true,
                ..Default::default()
            };
            let s = p.solve(&full(), &opts);
            for w in s.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{} -> {}", w[0], w[1]);
            }
            assert!(s.converged);
        }
    }

    #[test]
    fn kkt_conditions_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = random_problem(&mut rng, 15, 12);
            let b = SolverBounds::new(-100.0, 255.0).unwrap();
            let s = p.solve(&b, &SolveOptions::default());
            let r = p.residual(&s.x);
            let mut g = vec![0.0; p.num_vars()];
            p.mul_t_into(&r, &mut g);
            for (x, g) in s.x.iter().zip(&g) {
                if *x > b.lower && *x < b.upper {
                    assert!(g.abs() < 1e-5, "free gradient {g}");
                } else if *x == b.lower {
                    assert!(*g > -1e-5);
                } else {
                    assert!(*g < 1e-5);
                }
            }
        }
    }

    #[test]
    fn iteration_cap_keeps_best_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_problem(&mut rng, 30, 30);
        let opts = SolveOptions {
            max_iterations: 1,
            ..Default::default()
        };
        let s = p.solve(&full(), &opts);
        assert_eq!(s.iterations, 1);
        assert!(s.objective <= p.objective(&vec![0.0; 30]));
    }

    proptest! {
        #[test]
        fn output_is_inside_box(seed in 0u64..1000, lo in -120.0f64..0.0, width in 1.0f64..300.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_problem(&mut rng, 6, 5);
            let b = SolverBounds::new(lo, lo + width).unwrap();
            let s = p.solve(&b, &SolveOptions::default());
            prop_assert!(s.x.iter().all(|v| *v >= b.lower && *v <= b.upper));
        }

        #[test]
        fn concatenation_is_block_diagonal(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_problem(&mut rng, 3, 2);
            let b = random_problem(&mut rng, 4, 5);
            let joint = BoxLeastSquares::concat(&[a.clone(), b.clone()]);
            prop_assert_eq!(joint.num_vars(), 7);
            let x: Vec<f64> = (0..7).map(|i| i as f64 * 3.0).collect();
            let lhs = joint.objective(&x);
            let rhs = a.objective(&x[..3]) + b.objective(&x[3..]);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1.0));
        }
    }
}

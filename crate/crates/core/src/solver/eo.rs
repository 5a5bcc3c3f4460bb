use rayon::prelude::*;

use super::boxlsq::{BoxLeastSquares, BoxSolution, SolveOptions};
use super::chains::{extract_chains, EpipolarChain};
use super::SolverBounds;
use crate::error::Result;
use crate::raster::Raster;
use crate::system::{PatternImage, SparseSystem};

/// Per-chain solve summary (aggregated over colour channels).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub id: usize,
    pub variables: usize,
    pub rows: usize,
    /// Largest iteration count over channels.
    pub iterations: usize,
    /// Sum of squared residuals over channels.
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EoSolution {
    pub bounds: SolverBounds,
    pub patterns: Vec<PatternImage>,
    /// Stacked solution per channel, indexed by system column.
    pub values: Vec<Vec<f64>>,
    pub chains: Vec<ChainStats>,
    pub warnings: Vec<String>,
}

impl EoSolution {
    pub fn objective(&self) -> f64 {
        self.chains.iter().map(|c| c.objective).sum()
    }
}

/// The reduced problem of one chain for one channel, with variables in the
/// chain's (ascending) order.
pub fn chain_problem(system: &SparseSystem, chain: &EpipolarChain, channel: usize) -> BoxLeastSquares {
    let mut row_ptr = Vec::with_capacity(chain.rows.len() + 1);
    row_ptr.push(0);
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    let mut rhs = Vec::with_capacity(chain.rows.len());
    let b = system.rhs(channel);
    for &r in &chain.rows {
        let (c, w) = system.row(r as usize);
        for (&c, &w) in c.iter().zip(w) {
            let local = chain
                .variables
                .binary_search(&c)
                .expect("chain is closed under its rows");
            cols.push(local as u32);
            weights.push(w);
        }
        row_ptr.push(cols.len());
        rhs.push(b[r as usize]);
    }
    BoxLeastSquares::from_csr(chain.variables.len(), row_ptr, cols, weights, rhs)
}

/// Box-constrained least squares over one chain.
pub fn solve_chain(
    system: &SparseSystem,
    chain: &EpipolarChain,
    channel: usize,
    bounds: &SolverBounds,
    options: &SolveOptions,
) -> BoxSolution {
    chain_problem(system, chain, channel).solve(bounds, options)
}

/// Solves every chain independently (in parallel) and scatters the results into
/// pattern rasters. Pattern pixels that light no target pixel stay at 0.
pub fn solve_eo(system: &SparseSystem, bounds: &SolverBounds, options: &SolveOptions) -> Result<EoSolution> {
    bounds.validate()?;
    let chains = extract_chains(system);
    let channels = system.channels();
    let solved: Vec<(ChainStats, Vec<Vec<f64>>)> = chains
        .par_iter()
        .map(|chain| {
            let mut stats = ChainStats {
                id: chain.id,
                variables: chain.variables.len(),
                rows: chain.rows.len(),
                iterations: 0,
                objective: 0.0,
                converged: true,
            };
            let xs = (0..channels)
                .map(|ch| {
                    let s = solve_chain(system, chain, ch, bounds, options);
                    stats.iterations = stats.iterations.max(s.iterations);
                    stats.objective += s.objective;
                    stats.converged &= s.converged;
                    s.x
                })
                .collect();
            (stats, xs)
        })
        .collect();

    let mut values = vec![vec![0.0; system.num_cols()]; channels];
    let mut stats = Vec::with_capacity(chains.len());
    let mut warnings = Vec::new();
    for (chain, (st, xs)) in chains.iter().zip(solved) {
        for (ch, x) in xs.iter().enumerate() {
            for (&c, &v) in chain.variables.iter().zip(x) {
                values[ch][c as usize] = v;
            }
        }
        if !st.converged {
            let msg = format!(
                "chain {} ({} variables) hit the iteration cap; keeping best iterate",
                st.id, st.variables
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        stats.push(st);
    }
    Ok(EoSolution {
        bounds: *bounds,
        patterns: scatter_patterns(system, &values),
        values,
        chains: stats,
        warnings,
    })
}

/// One constrained solve over the whole system, ignoring the chain structure.
pub fn solve_joint(
    system: &SparseSystem,
    channel: usize,
    bounds: &SolverBounds,
    options: &SolveOptions,
) -> BoxSolution {
    let mut row_ptr = vec![0];
    let mut cols = Vec::with_capacity(system.nnz());
    let mut weights = Vec::with_capacity(system.nnz());
    for r in 0..system.num_rows() {
        let (c, w) = system.row(r);
        cols.extend_from_slice(c);
        weights.extend_from_slice(w);
        row_ptr.push(cols.len());
    }
    BoxLeastSquares::from_csr(system.num_cols(), row_ptr, cols, weights, system.rhs(channel).to_vec())
        .solve(bounds, options)
}

/// Splits stacked per-channel column vectors into per-projector rasters.
pub(crate) fn scatter_patterns(system: &SparseSystem, values: &[Vec<f64>]) -> Vec<PatternImage> {
    system
        .projector_sizes()
        .iter()
        .enumerate()
        .map(|(j, &(w, h))| {
            let off = system.col_offsets()[j];
            PatternImage {
                projector: j,
                channels: values
                    .iter()
                    .map(|v| Raster::from_vec(w, h, v[off..off + w * h].to_vec()).expect("sizes match"))
                    .collect(),
            }
        })
        .collect()
}

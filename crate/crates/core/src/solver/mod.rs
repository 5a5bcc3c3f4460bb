//! Pattern solvers: the epipolar-chain decomposition with box constraints (EO)
//! and the global least-squares baseline with range normalization (LF).

mod boxlsq;
mod chains;
mod eo;
mod lf;

pub use boxlsq::{BoxLeastSquares, BoxSolution, SolveOptions};
pub use chains::{extract_chains, EpipolarChain, UnionFind};
pub use eo::{solve_chain, solve_eo, solve_joint, ChainStats, EoSolution};
pub use lf::{cgnr, solve_lf, CgnrOutcome, LfOptions, LfSolution};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed drive range `[lower, upper]` during pattern generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBounds {
    #[serde(alias = "a")]
    pub lower: f64,
    #[serde(alias = "b")]
    pub upper: f64,
}

impl Default for SolverBounds {
    fn default() -> Self {
        Self {
            lower: 0.0,
            upper: 255.0,
        }
    }
}

impl SolverBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::Config(format!(
                "solver bounds need a < b, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }

    /// Method label in the `EO_a^b` style.
    pub fn label(&self) -> String {
        format!("EO_{}^{}", self.lower, self.upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_validation_and_labels() {
        assert!(SolverBounds::new(0.0, 255.0).is_ok());
        assert!(SolverBounds::new(5.0, 5.0).is_err());
        assert!(SolverBounds::new(f64::NAN, 5.0).is_err());
        assert_eq!(SolverBounds::default().label(), "EO_0^255");
        assert_eq!(SolverBounds::new(-100.0, 255.0).unwrap().label(), "EO_-100^255");
        let b: SolverBounds = toml::from_str("a = -100.0\nb = 255.0").unwrap();
        assert_eq!(b.lower, -100.0);
    }
}

//! The inverse projection mapping `q` and the sparse linear system `i = A·p`
//! linking pattern pixels to target-image pixels.

mod assemble;
mod images;
mod inverse;

pub use assemble::{assemble, RowMeta, SparseSystem};
pub use images::{load_targets, PatternImage, TargetImage};
pub use inverse::{build_inverse_projection, ImagePixel, InverseProjectionMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a pattern value turns into received intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Coefficient `d²/(L·N)` multiplies the pattern value.
    #[default]
    #[serde(alias = "paper_verbatim")]
    Paper,
    /// Physical irradiance falloff `(L·N)/d²`.
    Physical,
}

impl Convention {
    /// Coefficient for a point at `distance` with Lambertian cosine `cosine`,
    /// with distances measured in units of `reference_distance`.
    pub fn weight(self, distance: f64, cosine: f64, reference_distance: f64) -> Result<f64> {
        let r = distance / reference_distance;
        match self {
            Convention::Paper => attenuation_weight(r, cosine),
            Convention::Physical => {
                if !(cosine > 0.0) {
                    return Err(Error::BackFacing(cosine));
                }
                Ok(cosine / (r * r))
            }
        }
    }
}

/// `d²/(L·N)`. A zero distance (an unlit pixel) contributes nothing.
pub fn attenuation_weight(distance: f64, cosine: f64) -> Result<f64> {
    if !(cosine > 0.0) {
        return Err(Error::BackFacing(cosine));
    }
    Ok(distance * distance / cosine)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_examples() {
        assert_eq!(attenuation_weight(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(attenuation_weight(2.0, 0.5).unwrap(), 8.0);
        // q = 0 convention: d = 0 and L = N = (1,0,0).
        assert_eq!(attenuation_weight(0.0, 1.0).unwrap() * 200.0, 0.0);
        assert!(matches!(attenuation_weight(1.0, 0.0), Err(Error::BackFacing(_))));
        assert!(attenuation_weight(1.0, -0.3).is_err());
    }

    #[test]
    fn conventions_are_reciprocal() {
        let p = Convention::Paper.weight(1.6, 0.8, 0.8).unwrap();
        let q = Convention::Physical.weight(1.6, 0.8, 0.8).unwrap();
        assert!((p - 5.0).abs() < 1e-12);
        assert!((p * q - 1.0).abs() < 1e-12);
        assert_eq!(Convention::Paper.weight(0.8, 1.0, 0.8).unwrap(), 1.0);
    }

    #[test]
    fn serde_names() {
        #[derive(Deserialize)]
        struct W {
            c: Convention,
        }
        assert_eq!(toml::from_str::<W>("c = \"physical\"").unwrap().c, Convention::Physical);
        assert_eq!(toml::from_str::<W>("c = \"paper\"").unwrap().c, Convention::Paper);
    }
}

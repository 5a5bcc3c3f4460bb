//! Procedural target images, so experiments run without bundled photographs.

use serde::{Deserialize, Serialize};

use crate::raster::Raster;

fn low_default() -> f64 {
    0.0
}

fn high_default() -> f64 {
    255.0
}

fn octaves_default() -> u32 {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Procedural {
    /// Two-level checkerboard with `cells` squares across the width.
    Checker {
        cells: usize,
        #[serde(default = "low_default")]
        low: f64,
        #[serde(default = "high_default")]
        high: f64,
    },
    /// Two-level bars `period` pixels wide.
    Stripes {
        period: usize,
        #[serde(default)]
        horizontal: bool,
        #[serde(default = "low_default")]
        low: f64,
        #[serde(default = "high_default")]
        high: f64,
    },
    /// Two-level filled disc, radius as a fraction of the shorter side.
    Disc {
        radius: f64,
        #[serde(default = "low_default")]
        low: f64,
        #[serde(default = "high_default")]
        high: f64,
    },
    /// Linear ramp 0..255.
    Gradient {
        #[serde(default)]
        vertical: bool,
    },
    /// Concentric sinusoidal rings.
    Rings { period: f64 },
    /// Fractal value noise stretched to the full range; a stand-in for natural images.
    Noise {
        seed: u64,
        /// Feature size of the coarsest octave, in pixels.
        scale: f64,
        #[serde(default = "octaves_default")]
        octaves: u32,
    },
}

impl Procedural {
    pub fn generate(&self, width: usize, height: usize) -> Raster<f64> {
        let short = width.min(height) as f64;
        match *self {
            Procedural::Checker { cells, low, high } => {
                let cell = (width as f64 / cells.max(1) as f64).max(1.0);
                Raster::from_fn(width, height, |x, y| {
                    let on = ((x as f64 / cell) as usize + (y as f64 / cell) as usize).is_multiple_of(2);
                    if on {
                        high
                    } else {
                        low
                    }
                })
            }
            Procedural::Stripes {
                period,
                horizontal,
                low,
                high,
            } => {
                let period = period.max(1);
                Raster::from_fn(width, height, |x, y| {
                    let c = if horizontal { y } else { x };
                    if (c / period) % 2 == 0 {
                        high
                    } else {
                        low
                    }
                })
            }
            Procedural::Disc { radius, low, high } => {
                let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
                let r = radius * short;
                Raster::from_fn(width, height, |x, y| {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if dx * dx + dy * dy <= r * r {
                        high
                    } else {
                        low
                    }
                })
            }
            Procedural::Gradient { vertical } => Raster::from_fn(width, height, |x, y| {
                let (c, n) = if vertical { (y, height) } else { (x, width) };
                255.0 * c as f64 / (n.max(2) - 1) as f64
            }),
            Procedural::Rings { period } => {
                let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
                Raster::from_fn(width, height, |x, y| {
                    let r = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
                    127.5 * (1.0 + (std::f64::consts::TAU * r / period).cos())
                })
            }
            Procedural::Noise { seed, scale, octaves } => fractal_noise(width, height, seed, scale, octaves),
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, octave: u32, ix: i64, iy: i64) -> f64 {
    let h = splitmix(seed ^ splitmix((octave as u64) << 40 ^ splitmix(ix as u64 ^ splitmix(iy as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn fractal_noise(width: usize, height: usize, seed: u64, scale: f64, octaves: u32) -> Raster<f64> {
    let scale = scale.max(1.0);
    let raw = Raster::from_fn(width, height, |x, y| {
        let (mut sum, mut amp, mut freq) = (0.0, 1.0, 1.0 / scale);
        for o in 0..octaves.max(1) {
            let (fx, fy) = (x as f64 * freq, y as f64 * freq);
            let (ix, iy) = (fx.floor() as i64, fy.floor() as i64);
            let (tx, ty) = (smooth(fx - ix as f64), smooth(fy - iy as f64));
            let v00 = lattice(seed, o, ix, iy);
            let v10 = lattice(seed, o, ix + 1, iy);
            let v01 = lattice(seed, o, ix, iy + 1);
            let v11 = lattice(seed, o, ix + 1, iy + 1);
            let top = v00 + (v10 - v00) * tx;
            let bottom = v01 + (v11 - v01) * tx;
            sum += amp * (top + (bottom - top) * ty);
            amp *= 0.5;
            freq *= 2.0;
        }
        sum
    });
    let lo = raw.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    raw.map(|v| (255.0 * (v - lo) / span).clamp(0.0, 255.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_deterministic_and_full_range() {
        let p = Procedural::Noise {
            seed: 7,
            scale: 16.0,
            octaves: 4,
        };
        let a = p.generate(40, 30);
        assert_eq!(a, p.generate(40, 30));
        let lo = a.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.as_slice().iter().copied().fold(0.0, f64::max);
        assert!(lo.abs() < 1e-9 && (hi - 255.0).abs() < 1e-9);
        let b = Procedural::Noise {
            seed: 8,
            scale: 16.0,
            octaves: 4,
        }
        .generate(40, 30);
        assert_ne!(a, b);
    }

    #[test]
    fn binary_patterns_have_two_levels() {
        for p in [
            Procedural::Checker {
                cells: 4,
                low: 0.0,
                high: 255.0,
            },
            Procedural::Stripes {
                period: 3,
                horizontal: true,
                low: 0.0,
                high: 255.0,
            },
            Procedural::Disc {
                radius: 0.3,
                low: 0.0,
                high: 255.0,
            },
        ] {
            let r = p.generate(32, 24);
            assert!(r.as_slice().iter().all(|&v| v == 0.0 || v == 255.0));
            assert!(r.as_slice().contains(&0.0) && r.as_slice().contains(&255.0));
        }
    }

    #[test]
    fn serde_tagging() {
        let p: Procedural = toml::from_str("kind = \"checker\"\ncells = 6\n").unwrap();
        assert_eq!(
            p,
            Procedural::Checker {
                cells: 6,
                low: 0.0,
                high: 255.0
            }
        );
    }
}

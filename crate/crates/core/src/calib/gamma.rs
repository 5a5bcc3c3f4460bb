//! Photometric response `f(x) = a·x^b + c` of a projector channel: fitting,
//! inversion and pattern compensation.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DRIVE_MAX: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl GammaModel {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let m = Self { a, b, c };
        m.validate()?;
        Ok(m)
    }

    pub fn identity() -> Self {
        Self { a: 1.0, b: 1.0, c: 0.0 }
    }

    /// A response with exponent `b` that maps drive 255 to `c + peak`.
    pub fn with_peak(b: f64, peak: f64, c: f64) -> Self {
        Self {
            a: peak / DRIVE_MAX.powf(b),
            b,
            c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite() && self.c.is_finite()) {
            return Err(Error::GammaFit(format!(
                "model requires a > 0, b > 0 (got a={}, b={}, c={})",
                self.a, self.b, self.c
            )));
        }
        Ok(())
    }

    /// Measured intensity for drive value `x`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.a * x.max(0.0).powf(self.b) + self.c
    }

    /// Drive value linearised to [0,255]: 0 ↦ 0, 255 ↦ 255.
    pub fn linearize(&self, drive: f64) -> f64 {
        let span = self.eval(DRIVE_MAX) - self.c;
        DRIVE_MAX * (self.eval(drive.clamp(0.0, DRIVE_MAX)) - self.c) / span
    }

    /// Drive value that reproduces linear intensity `linear` ∈ [0,255].
    pub fn compensate(&self, linear: f64) -> f64 {
        let span = self.eval(DRIVE_MAX) - self.c;
        invert_gamma(self, self.c + span * linear / DRIVE_MAX)
    }
}

/// `x = ((desired − c)/a)^(1/b)`, clamped to [0,255].
pub fn invert_gamma(model: &GammaModel, desired: f64) -> f64 {
    let t = (desired - model.c) / model.a;
    if !(t > 0.0) {
        return 0.0;
    }
    t.powf(1.0 / model.b).clamp(0.0, DRIVE_MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFitOptions {
    /// A sample may fall below the running maximum by at most this fraction of
    /// the measured range before the set is rejected as non-monotone.
    pub monotone_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GammaFitOptions {
    fn default() -> Self {
        Self {
            monotone_tolerance: 0.1,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFit {
    pub model: GammaModel,
    pub rms: f64,
    pub iterations: usize,
}

/// Least-squares fit of `a·x^b + c` to `(nominal, measured)` samples: log-domain
/// initialisation followed by damped Gauss–Newton (Levenberg–Marquardt).
pub fn fit_gamma(samples: &[(f64, f64)], options: &GammaFitOptions) -> Result<GammaFit> {
    if samples.len() < 8 {
        return Err(Error::GammaFit(format!(
            "need at least 8 samples, got {}",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|(x, f)| !x.is_finite() || !f.is_finite() || *x < 0.0)
    {
        return Err(Error::GammaFit(
            "samples must be finite with non-negative nominal".into(),
        ));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|p, q| p.0.total_cmp(&q.0));
    let (x_lo, x_hi) = (sorted[0].0, sorted[sorted.len() - 1].0);
    if x_hi - x_lo < 0.5 * DRIVE_MAX {
        return Err(Error::GammaFit("samples must span at least half of [0,255]".into()));
    }
    let f_lo = sorted.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let f_hi = sorted.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let range = f_hi - f_lo;
    if !(range > 0.0) {
        return Err(Error::GammaFit("measurements are constant".into()));
    }
    let mut running = f64::NEG_INFINITY;
    for &(x, f) in &sorted {
        if f < running - options.monotone_tolerance * range {
            return Err(Error::GammaFit(format!(
                "non-monotone response at nominal {x}: {f} after {running}"
            )));
        }
        running = running.max(f);
    }

    // Work on s = x/255 so the Jacobian stays well scaled; a = a_s / 255^b.
    let pts: Vec<(f64, f64)> = sorted.iter().map(|&(x, f)| (x / DRIVE_MAX, f)).collect();

    let c0 = f_lo;
    let logs: Vec<(f64, f64)> = pts
        .iter()
        .filter(|(s, f)| *s > 0.0 && f - c0 > 1e-9 * range)
        .map(|(s, f)| (s.ln(), (f - c0).ln()))
        .collect();
    if logs.len() < 2 {
        return Err(Error::GammaFit("too few samples above the dark level".into()));
    }
    let n = logs.len() as f64;
    let (mx, my) = (
        logs.iter().map(|p| p.0).sum::<f64>() / n,
        logs.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b0 = if sxx > 0.0 { (sxy / sxx).max(1e-3) } else { 1.0 };
    let a0 = (my - b0 * mx).exp();

    let sse = |p: &Vector3<f64>| -> f64 { pts.iter().map(|(s, f)| (p[0] * s.powf(p[1]) + p[2] - f).powi(2)).sum() };
    let mut theta = Vector3::new(a0, b0, c0);
    let mut cost = sse(&theta);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for it in 0..options.max_iterations {
        iterations = it + 1;
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (s, f) in &pts {
            let sb = if *s > 0.0 { s.powf(theta[1]) } else { 0.0 };
            let dsb = if *s > 0.0 { theta[0] * sb * s.ln() } else { 0.0 };
            let j = Vector3::new(sb, dsb, 1.0);
            let r = theta[0] * sb + theta[2] - f;
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let cand = theta + step;
            if cand[0] > 0.0 && cand[1] > 0.0 {
                let c = sse(&cand);
                if c <= cost {
                    let rel = step.norm() / (theta.norm() + 1e-30);
                    theta = cand;
                    cost = c;
                    lambda = (lambda / 3.0).max(1e-15);
                    improved = rel > 1e-14;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    let model = GammaModel::new(theta[0] / DRIVE_MAX.powf(theta[1]), theta[1], theta[2])?;
    Ok(GammaFit {
        model,
        rms: (cost / pts.len() as f64).sqrt(),
        iterations,
    })
}

/// Measurements of a gray ramp (`count` evenly spaced drive levels over [0,255])
/// through `model`, with multiplicative Gaussian noise of relative size `noise`.
pub fn simulate_ramp_measurements(model: &GammaModel, count: usize, noise: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..count)
        .map(|i| {
            let x = DRIVE_MAX * i as f64 / (count.max(2) - 1) as f64;
            let f = model.eval(x);
            (x, f * (1.0 + noise * normal.sample(&mut rng)))
        })
        .collect()
}

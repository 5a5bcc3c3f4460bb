use super::RecombinedImage;
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::system::TargetImage;

const PEAK: f64 = 255.0;
const WINDOW: usize = 8;

fn check_shapes(a: &[Raster<f64>], b: &[Raster<f64>], mask: &Raster<bool>) -> Result<usize> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Metric("channel counts differ".into()));
    }
    if a.iter().chain(b).any(|r| r.dims() != mask.dims()) {
        return Err(Error::Metric("image and mask sizes differ".into()));
    }
    let n = mask.as_slice().iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::Metric("empty mask".into()));
    }
    Ok(n)
}

/// `10·log10(255²/MSE)` over the mask, pooled across channels. Identical images
/// give `+∞`.
pub fn psnr(reference: &[Raster<f64>], test: &[Raster<f64>], mask: &Raster<bool>) -> Result<f64> {
    let n = check_shapes(reference, test, mask)?;
    let mut sum = 0.0;
    for (a, b) in reference.iter().zip(test) {
        for ((x, y), &m) in a.as_slice().iter().zip(b.as_slice()).zip(mask.as_slice()) {
            if m {
                sum += (x - y) * (x - y);
            }
        }
    }
    let mse = sum / (n * reference.len()) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

/// Mean SSIM over all 8×8 windows lying entirely inside the mask, averaged across
/// channels. Falls back to one window over the whole mask when none fits.
pub fn ssim(reference: &[Raster<f64>], test: &[Raster<f64>], mask: &Raster<bool>) -> Result<f64> {
    check_shapes(reference, test, mask)?;
    let total: f64 = reference.iter().zip(test).map(|(a, b)| ssim_channel(a, b, mask)).sum();
    Ok(total / reference.len() as f64)
}

fn ssim_index(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    let c1 = (0.01 * PEAK).powi(2);
    let c2 = (0.03 * PEAK).powi(2);
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Summed-area table with a zero first row and column.
fn integral(w: usize, h: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut s = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += f(y * w + x);
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

fn ssim_channel(a: &Raster<f64>, b: &Raster<f64>, mask: &Raster<bool>) -> f64 {
    let (w, h) = mask.dims();
    let (xa, xb, m) = (a.as_slice(), b.as_slice(), mask.as_slice());
    let on = |i: usize| if m[i] { 1.0 } else { 0.0 };
    let count = integral(w, h, on);
    let sx = integral(w, h, |i| on(i) * xa[i]);
    let sy = integral(w, h, |i| on(i) * xb[i]);
    let sxx = integral(w, h, |i| on(i) * xa[i] * xa[i]);
    let syy = integral(w, h, |i| on(i) * xb[i] * xb[i]);
    let sxy = integral(w, h, |i| on(i) * xa[i] * xb[i]);
    let boxsum = |s: &[f64], x: usize, y: usize| {
        let (x1, y1) = (x + WINDOW, y + WINDOW);
        s[y1 * (w + 1) + x1] - s[y * (w + 1) + x1] - s[y1 * (w + 1) + x] + s[y * (w + 1) + x]
    };
    let full = (WINDOW * WINDOW) as f64;
    let mut acc = 0.0;
    let mut windows = 0usize;
    if w >= WINDOW && h >= WINDOW {
        for y in 0..=h - WINDOW {
            for x in 0..=w - WINDOW {
                if boxsum(&count, x, y) < full {
                    continue;
                }
                let mx = boxsum(&sx, x, y) / full;
                let my = boxsum(&sy, x, y) / full;
                let vx = boxsum(&sxx, x, y) / full - mx * mx;
                let vy = boxsum(&syy, x, y) / full - my * my;
                let cxy = boxsum(&sxy, x, y) / full - mx * my;
                acc += ssim_index(mx, my, vx, vy, cxy);
                windows += 1;
            }
        }
    }
    if windows > 0 {
        return acc / windows as f64;
    }
    let n = count[count.len() - 1];
    let last = |s: &[f64]| s[s.len() - 1];
    let mx = last(&sx) / n;
    let my = last(&sy) / n;
    let vx = last(&sxx) / n - mx * mx;
    let vy = last(&syy) / n - my * my;
    ssim_index(mx, my, vx, vy, last(&sxy) / n - mx * my)
}

/// Quality of one surface's recombined image against its target.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub surface: usize,
    /// `+∞` when the images agree exactly.
    pub psnr: f64,
    pub ssim: f64,
    /// Min and max of the solved drive values.
    pub value_range: (f64, f64),
    pub masked_pixels: usize,
}

/// Scores each recombined image (clamped to the display range) against its
/// target over the image's mask.
pub fn evaluate(
    targets: &[TargetImage],
    images: &[RecombinedImage],
    value_range: (f64, f64),
) -> Result<Vec<QualityReport>> {
    images
        .iter()
        .map(|img| {
            let target = targets
                .iter()
                .find(|t| t.surface == img.surface)
                .ok_or_else(|| Error::Metric(format!("no target for surface {}", img.surface)))?;
            let shown: Vec<Raster<f64>> = img.channels.iter().map(|c| c.map(|v| v.clamp(0.0, PEAK))).collect();
            Ok(QualityReport {
                surface: img.surface,
                psnr: psnr(&target.channels, &shown, &img.mask)?,
                ssim: ssim(&target.channels, &shown, &img.mask)?,
                value_range,
                masked_pixels: img.mask.as_slice().iter().filter(|&&m| m).count(),
            })
        })
        .collect()
}

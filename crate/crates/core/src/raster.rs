//! Row-major 2-D rasters and 8-bit image IO.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};

/// A dense row-major raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Config(format!(
                "raster data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Writes one (grayscale) or three (RGB) planes as an 8-bit PNG, clamping to [0,255].
pub fn save_png(planes: &[Raster<f64>], path: &Path) -> Result<()> {
    let first = planes
        .first()
        .ok_or_else(|| Error::Config("no planes to save".into()))?;
    let (w, h) = first.dims();
    if planes.iter().any(|p| p.dims() != (w, h)) {
        return Err(Error::Config("plane size mismatch".into()));
    }
    match planes.len() {
        1 => {
            let img: GrayImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
                Luma([to_u8(*first.get(x as usize, y as usize))])
            });
            img.save(path)?;
        }
        3 => {
            let img: RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
                let (x, y) = (x as usize, y as usize);
                Rgb([
                    to_u8(*planes[0].get(x, y)),
                    to_u8(*planes[1].get(x, y)),
                    to_u8(*planes[2].get(x, y)),
                ])
            });
            img.save(path)?;
        }
        n => return Err(Error::Config(format!("cannot save {n} channels as PNG"))),
    }
    Ok(())
}

/// Saves a boolean mask as a black/white PNG.
pub fn save_mask_png(mask: &Raster<bool>, path: &Path) -> Result<()> {
    let plane = mask.map(|&m| if m { 255.0 } else { 0.0 });
    save_png(&[plane], path)
}

/// Loads an 8-bit image as one plane (grayscale) or three planes (anything with colour).
/// When `size` is given and differs, the image is resampled with a triangle filter.
pub fn load_png(path: &Path, size: Option<(usize, usize)>) -> Result<Vec<Raster<f64>>> {
    let mut img = image::open(path)?;
    if let Some((w, h)) = size {
        if (img.width() as usize, img.height() as usize) != (w, h) {
            img = img.resize_exact(w as u32, h as u32, image::imageops::FilterType::Triangle);
        }
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        Ok((0..3)
            .map(|c| Raster::from_fn(w, h, |x, y| rgb.get_pixel(x as u32, y as u32)[c] as f64))
            .collect())
    } else {
        let gray = img.to_luma8();
        Ok(vec![Raster::from_fn(w, h, |x, y| {
            gray.get_pixel(x as u32, y as u32)[0] as f64
        })])
    }
}

/// Loads a 16-bit grayscale image as raw values.
pub fn load_png16(path: &Path) -> Result<Raster<u16>> {
    let img = image::open(path)?.to_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Raster::from_fn(w, h, |x, y| img.get_pixel(x as u32, y as u32)[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_gray_and_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let gray = Raster::from_fn(5, 3, |x, y| (x * 40 + y) as f64);
        let p = dir.path().join("g.png");
        save_png(std::slice::from_ref(&gray), &p).unwrap();
        let back = load_png(&p, None).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], gray);

        let rgb = vec![gray.clone(), gray.map(|v| 255.0 - v), gray.map(|_| 7.0)];
        let p = dir.path().join("c.png");
        save_png(&rgb, &p).unwrap();
        assert_eq!(load_png(&p, None).unwrap(), rgb);
    }

    #[test]
    fn save_clamps_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::from_vec(2, 1, vec![-40.0, 900.0]).unwrap();
        let p = dir.path().join("c.png");
        save_png(&[r], &p).unwrap();
        assert_eq!(load_png(&p, None).unwrap()[0].as_slice(), &[0.0, 255.0]);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Raster::from_vec(2, 2, vec![0u8; 3]).is_err());
    }
}

//! Binary-reflected Gray code and its bit-plane patterns.

use crate::raster::Raster;

#[inline]
pub fn gray_encode(value: u32) -> u32 {
    value ^ (value >> 1)
}

#[inline]
pub fn gray_decode(code: u32) -> u32 {
    let mut value = code;
    let mut shift = code >> 1;
    while shift != 0 {
        value ^= shift;
        shift >>= 1;
    }
    value
}

/// Number of bit planes needed to address `resolution` positions.
pub fn bit_count(resolution: usize) -> u32 {
    if resolution <= 1 {
        0
    } else {
        usize::BITS - (resolution - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Bit-plane patterns for one projector axis; `frames[b]` is white where bit `b`
/// of the Gray code of the pixel coordinate is set.
#[derive(Debug, Clone)]
pub struct GrayCodeSequence {
    pub axis: Axis,
    pub bits: u32,
    pub frames: Vec<Raster<u8>>,
}

impl GrayCodeSequence {
    pub fn new(axis: Axis, width: usize, height: usize) -> Self {
        let bits = bit_count(match axis {
            Axis::X => width,
            Axis::Y => height,
        });
        let frames = (0..bits)
            .map(|b| {
                Raster::from_fn(width, height, |x, y| {
                    let c = match axis {
                        Axis::X => x,
                        Axis::Y => y,
                    } as u32;
                    if gray_encode(c) >> b & 1 == 1 {
                        255
                    } else {
                        0
                    }
                })
            })
            .collect();
        Self { axis, bits, frames }
    }
}

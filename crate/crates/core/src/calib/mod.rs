//! Geometric (Gray-code) and photometric calibration.

mod capture;
mod correspondence;
mod gamma;
mod gray;

pub use capture::{
    decode_correspondences, geometric_correspondences, simulate_capture, CaptureGeometry, DecodeOptions,
};
pub use correspondence::{fill_holes, CorrespondenceMap, HoleFillOptions, PixelCoord};
pub use gamma::{fit_gamma, invert_gamma, simulate_ramp_measurements, GammaFit, GammaFitOptions, GammaModel};
pub use gray::{bit_count, gray_decode, gray_encode, Axis, GrayCodeSequence};

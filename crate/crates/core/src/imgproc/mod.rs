//! Deterministic, seeded image transformations: training augmentation,
//! calibration augmentation, test-set perturbation, and robustness-sweep
//! transforms. Every transform is a pure function of `(pixels,
//! parameters, rng state)`; replaying a seed reproduces byte-identical
//! outputs for the pinned codec versions.

mod augment;
mod codec;
mod filter;
mod geometry;
mod policy;
mod sweep;

pub use augment::{
    calibration_augment, calibration_augment_traced, pretrain_augment, pretrain_augment_traced,
    test_perturb, test_perturb_traced, AppliedOp, AugTrace,
};
pub use codec::{jpeg_encode, jpeg_roundtrip, webp_encode, webp_roundtrip};
pub use filter::{blur_sigma_for_kernel, gaussian_blur, gaussian_noise};
pub use geometry::{
    center_crop, center_crop_box, crop, flip_horizontal, flip_vertical, reflect_pad_to,
    resize_bilinear, rotate90_cw,
};
pub use policy::{
    AugmentationPolicy, CalibrationParams, CorruptionParams, PretrainParams, Stage, StageParams,
    TestPerturbParams,
};
pub use sweep::{sweep_jpeg, sweep_resize};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImgError {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("image too small: min dimension {min_dim}, transform requires {required}")]
    ImageTooSmall { min_dim: u32, required: u32 },
    #[error("quality {quality} outside [1, 100]")]
    InvalidQuality { quality: i64 },
    #[error("crop side {side} exceeds min image dimension {min_dim}")]
    CropExceedsImage { side: u32, min_dim: u32 },
    #[error("expected a {expected_w}x{expected_h} image, got {got_w}x{got_h}")]
    WrongDimensions { expected_w: u32, expected_h: u32, got_w: u32, got_h: u32 },
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),
    #[error("codec failure: {0}")]
    Codec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense 8-bit RGB image, row-major interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImgError> {
        if width == 0 || height == 0 {
            return Err(ImgError::InvalidImage(format!(
                "dimensions {width}x{height} must be at least 1x1"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImgError::InvalidImage(format!(
                "buffer length {} does not match {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&rgb);
        }
        Image { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn min_dim(&self) -> u32 {
        self.width.min(self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_rgb_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("image buffer consistent by construction")
    }

    pub fn from_rgb_image(img: &image::RgbImage) -> Self {
        Image {
            width: img.width(),
            height: img.height(),
            data: img.as_raw().clone(),
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ImgError> {
        let img = image::open(path.as_ref())
            .map_err(|e| ImgError::Codec(format!("{}: {e}", path.as_ref().display())))?;
        Ok(Self::from_rgb_image(&img.to_rgb8()))
    }

    pub fn save_png(&self, path: impl AsRef<std::path::Path>) -> Result<(), ImgError> {
        self.to_rgb_image()
            .save_with_format(path.as_ref(), image::ImageFormat::Png)
            .map_err(|e| ImgError::Codec(e.to_string()))
    }
}

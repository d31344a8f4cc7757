//! Single-parameter robustness-sweep transforms over standardized
//! 256x256 inputs.

use super::codec::jpeg_roundtrip;
use super::geometry::{center_crop, resize_bilinear};
use super::{ImgError, Image};

/// JPEG round-trip at exactly the given quality; no other change.
pub fn sweep_jpeg(img: &Image, quality: u8) -> Result<Image, ImgError> {
    if !(1..=100).contains(&quality) {
        return Err(ImgError::InvalidQuality { quality: quality as i64 });
    }
    if img.width() != 256 || img.height() != 256 {
        return Err(ImgError::WrongDimensions {
            expected_w: 256,
            expected_h: 256,
            got_w: img.width(),
            got_h: img.height(),
        });
    }
    jpeg_roundtrip(img, quality)
}

/// Center crop of side `round(256 * r)`, then resize back to 256x256.
pub fn sweep_resize(img: &Image, r: f64) -> Result<Image, ImgError> {
    if !(r > 0.0) {
        return Err(ImgError::InvalidPolicy(format!("resize fraction {r} must be positive")));
    }
    if img.min_dim() < 256 {
        return Err(ImgError::ImageTooSmall {
            min_dim: img.min_dim(),
            required: 256,
        });
    }
    let side = (256.0 * r).round() as u32;
    if side == 0 || side > img.min_dim() {
        return Err(ImgError::CropExceedsImage {
            side,
            min_dim: img.min_dim(),
        });
    }
    let cropped = center_crop(img, side)?;
    Ok(resize_bilinear(&cropped, 256, 256))
}

//! Pixel-space corruptions: Gaussian blur and additive Gaussian noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::geometry::reflect_pad_to;
use super::{ImgError, Image};

/// Standard deviation tied to the kernel size:
/// `0.3 * ((k - 1) * 0.5 - 1) + 0.8`.
pub fn blur_sigma_for_kernel(kernel: u32) -> f64 {
    0.3 * ((kernel as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Separable Gaussian blur with an odd kernel size in `[3, 7]` and the
/// kernel-derived standard deviation. Borders are handled by reflection.
pub fn gaussian_blur(img: &Image, kernel: u32) -> Result<Image, ImgError> {
    if kernel % 2 == 0 || !(3..=7).contains(&kernel) {
        return Err(ImgError::InvalidPolicy(format!(
            "blur kernel {kernel} must be odd and within [3, 7]"
        )));
    }
    let sigma = blur_sigma_for_kernel(kernel);
    let radius = (kernel / 2) as i64;
    let mut weights = Vec::with_capacity(kernel as usize);
    for i in -radius..=radius {
        weights.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }

    // Reflect-pad once, convolve horizontally then vertically, crop back.
    let padded = pad_for_radius(img, radius as u32);
    let (pw, ph) = (padded.width() as usize, padded.height() as usize);
    let mut horiz = vec![0f64; pw * ph * 3];
    let src = padded.data();
    for y in 0..ph {
        for x in 0..pw {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    let sx = (x as i64 + k as i64 - radius).clamp(0, pw as i64 - 1) as usize;
                    acc += w * src[(y * pw + sx) * 3 + c] as f64;
                }
                horiz[(y * pw + x) * 3 + c] = acc;
            }
        }
    }
    let off = radius as usize;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, wt) in weights.iter().enumerate() {
                    let sy = y + k; // padded coordinates: y + off + (k - radius)
                    acc += wt * horiz[((sy) * pw + x + off) * 3 + c];
                }
                data[(y * w + x) * 3 + c] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Image::new(img.width(), img.height(), data)
}

fn pad_for_radius(img: &Image, radius: u32) -> Image {
    // reflect_pad_to centers the padding; adding 2*radius to both axes
    // gives exactly `radius` on each side.
    reflect_pad_to(img, img.width() + 2 * radius, img.height() + 2 * radius)
}

/// Additive Gaussian noise on the 0-255 intensity scale with the given
/// variance, drawn independently per pixel and channel, clamped.
pub fn gaussian_noise<R: Rng>(img: &Image, variance: f64, rng: &mut R) -> Result<Image, ImgError> {
    if !(variance > 0.0) {
        return Err(ImgError::InvalidPolicy(format!(
            "noise variance {variance} must be positive"
        )));
    }
    let normal = Normal::new(0.0, variance.sqrt())
        .map_err(|e| ImgError::InvalidPolicy(e.to_string()))?;
    let mut out = img.clone();
    for v in out.data_mut() {
        let noisy = *v as f64 + normal.sample(rng);
        *v = noisy.round().clamp(0.0, 255.0) as u8;
    }
    Ok(out)
}

//! Lossy codec round-trips. Encoders are pinned by crate version (see
//! [`crate::codecs`]); both encode paths are deterministic for a given
//! input and quality.

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::ImageReader;

use super::{ImgError, Image};

/// Encode to JPEG bytes at an exact quality factor.
pub fn jpeg_encode(img: &Image, quality: u8) -> Result<Vec<u8>, ImgError> {
    if !(1..=100).contains(&quality) {
        return Err(ImgError::InvalidQuality { quality: quality as i64 });
    }
    let mut bytes = Vec::new();
    let encoder = JpegEncoder::new_with_quality(Cursor::new(&mut bytes), quality);
    img.to_rgb_image()
        .write_with_encoder(encoder)
        .map_err(|e| ImgError::Codec(format!("jpeg encode: {e}")))?;
    Ok(bytes)
}

fn decode_any(bytes: &[u8]) -> Result<Image, ImgError> {
    let img = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| ImgError::Codec(format!("decode: {e}")))?
        .decode()
        .map_err(|e| ImgError::Codec(format!("decode: {e}")))?;
    Ok(Image::from_rgb_image(&img.to_rgb8()))
}

/// JPEG encode/decode round-trip at the given quality; dimensions are
/// preserved, pixel values pick up codec loss.
pub fn jpeg_roundtrip(img: &Image, quality: u8) -> Result<Image, ImgError> {
    decode_any(&jpeg_encode(img, quality)?)
}

/// Encode to lossy WebP (VP8) bytes at the given quality factor.
pub fn webp_encode(img: &Image, quality: u8) -> Result<Vec<u8>, ImgError> {
    if !(1..=100).contains(&quality) {
        return Err(ImgError::InvalidQuality { quality: quality as i64 });
    }
    let encoder = webp::Encoder::from_rgb(img.data(), img.width(), img.height());
    let mem = encoder.encode(quality as f32);
    Ok(mem.to_vec())
}

/// Lossy WebP encode/decode round-trip at the given quality.
pub fn webp_roundtrip(img: &Image, quality: u8) -> Result<Image, ImgError> {
    let bytes = webp_encode(img, quality)?;
    let decoded = webp::Decoder::new(&bytes)
        .decode()
        .ok_or_else(|| ImgError::Codec("webp decode failed".into()))?;
    Ok(Image::from_rgb_image(&decoded.to_image().to_rgb8()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn textured(w: u32, h: u32) -> Image {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut img = Image::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                let base = (((x as f64 * 0.21).sin() + (y as f64 * 0.13).cos()) * 60.0 + 128.0) as i32;
                let mut px = |o: i32| (base + o + rng.random_range(-16..16)).clamp(0, 255) as u8;
                let rgb = [px(0), px(10), px(-10)];
                img.set_pixel(x, y, rgb);
            }
        }
        img
    }

    #[test]
    fn jpeg_roundtrip_preserves_dimensions() {
        let img = textured(97, 64);
        for q in [40u8, 75, 100] {
            let out = jpeg_roundtrip(&img, q).unwrap();
            assert_eq!((out.width(), out.height()), (97, 64));
        }
    }

    #[test]
    fn jpeg_quality_100_is_near_identity() {
        let img = textured(64, 64);
        let out = jpeg_roundtrip(&img, 100).unwrap();
        let max_dev = img
            .data()
            .iter()
            .zip(out.data())
            .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs())
            .max()
            .unwrap();
        assert!(max_dev <= 24, "max deviation {max_dev} too large for Q100");
    }

    #[test]
    fn jpeg_size_monotone_in_quality() {
        // Encode-and-measure oracle over a fixed textured image.
        let img = textured(256, 256);
        let sizes: Vec<usize> = [95u8, 75, 55, 40]
            .iter()
            .map(|&q| jpeg_encode(&img, q).unwrap().len())
            .collect();
        for pair in sizes.windows(2) {
            assert!(pair[0] >= pair[1], "sizes not monotone: {sizes:?}");
        }
    }

    #[test]
    fn webp_roundtrip_preserves_dimensions_and_loses_detail() {
        let img = textured(96, 96);
        let out = webp_roundtrip(&img, 60).unwrap();
        assert_eq!((out.width(), out.height()), (96, 96));
        assert_ne!(out, img, "lossy webp should not be bit-identical on noise");
    }

    #[test]
    fn quality_bounds_rejected() {
        let img = textured(8, 8);
        assert!(matches!(jpeg_encode(&img, 0), Err(ImgError::InvalidQuality { .. })));
        assert!(matches!(webp_encode(&img, 101), Err(ImgError::InvalidQuality { .. })));
    }

    #[test]
    fn encodes_are_deterministic() {
        let img = textured(64, 48);
        assert_eq!(jpeg_encode(&img, 80).unwrap(), jpeg_encode(&img, 80).unwrap());
        assert_eq!(webp_encode(&img, 80).unwrap(), webp_encode(&img, 80).unwrap());
    }
}

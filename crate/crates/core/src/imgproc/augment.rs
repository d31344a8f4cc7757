//! The three seeded augmentation pipelines. Each has a `_traced` variant
//! returning the exact list of applied operations, used by the branch
//! statistics and one-of-selection tests.

use rand::Rng;

use super::codec::{jpeg_roundtrip, webp_roundtrip};
use super::filter::{gaussian_blur, gaussian_noise};
use super::geometry::{
    crop, flip_horizontal, flip_vertical, reflect_pad_to, resize_bilinear, rotate90_cw,
};
use super::policy::{CalibrationParams, CorruptionParams, PretrainParams, TestPerturbParams};
use super::{ImgError, Image};

#[derive(Debug, Clone, PartialEq)]
pub enum AppliedOp {
    ReflectPad { w: u32, h: u32 },
    Crop { x: u32, y: u32, w: u32, h: u32 },
    ResizedCrop { x: u32, y: u32, w: u32, h: u32 },
    Resize { w: u32, h: u32 },
    Jpeg { quality: u8 },
    Webp { quality: u8 },
    Blur { kernel: u32 },
    Noise { variance: f64 },
    Rotate90,
    FlipH,
    FlipV,
}

impl AppliedOp {
    pub fn is_corruption(&self) -> bool {
        matches!(
            self,
            AppliedOp::Jpeg { .. } | AppliedOp::Webp { .. } | AppliedOp::Blur { .. } | AppliedOp::Noise { .. }
        )
    }

    pub fn is_compression(&self) -> bool {
        matches!(self, AppliedOp::Jpeg { .. } | AppliedOp::Webp { .. })
    }
}

/// Record of every operation one pipeline invocation applied, in order.
#[derive(Debug, Clone, Default)]
pub struct AugTrace {
    pub ops: Vec<AppliedOp>,
}

impl AugTrace {
    fn push(&mut self, op: AppliedOp) {
        self.ops.push(op);
    }

    pub fn corruption_count(&self) -> usize {
        self.ops.iter().filter(|o| o.is_corruption()).count()
    }

    pub fn compressed(&self) -> bool {
        self.ops.iter().any(|o| o.is_compression())
    }

    pub fn resized_crop(&self) -> bool {
        self.ops.iter().any(|o| matches!(o, AppliedOp::ResizedCrop { .. }))
    }
}

fn random_crop<R: Rng>(img: &Image, side: u32, rng: &mut R, trace: &mut AugTrace) -> Image {
    let x = rng.random_range(0..=img.width() - side);
    let y = rng.random_range(0..=img.height() - side);
    trace.push(AppliedOp::Crop { x, y, w: side, h: side });
    crop(img, x, y, side, side)
}

/// Uniformly select one of the four corruptions and apply it.
fn one_of_four<R: Rng>(
    img: &Image,
    params: &CorruptionParams,
    rng: &mut R,
    trace: &mut AugTrace,
) -> Result<Image, ImgError> {
    match rng.random_range(0..4u8) {
        0 => {
            let q = rng.random_range(params.quality.0..=params.quality.1);
            trace.push(AppliedOp::Jpeg { quality: q });
            jpeg_roundtrip(img, q)
        }
        1 => {
            let q = rng.random_range(params.quality.0..=params.quality.1);
            trace.push(AppliedOp::Webp { quality: q });
            webp_roundtrip(img, q)
        }
        2 => {
            let k = params.kernel_sizes[rng.random_range(0..params.kernel_sizes.len())];
            trace.push(AppliedOp::Blur { kernel: k });
            gaussian_blur(img, k)
        }
        _ => {
            let v = rng.random_range(params.noise_variance.0..=params.noise_variance.1);
            trace.push(AppliedOp::Noise { variance: v });
            gaussian_noise(img, v, rng)
        }
    }
}

fn one_of_two_compression<R: Rng>(
    img: &Image,
    params: &CorruptionParams,
    rng: &mut R,
    trace: &mut AugTrace,
) -> Result<Image, ImgError> {
    let q = rng.random_range(params.quality.0..=params.quality.1);
    if rng.random_bool(0.5) {
        trace.push(AppliedOp::Jpeg { quality: q });
        jpeg_roundtrip(img, q)
    } else {
        trace.push(AppliedOp::Webp { quality: q });
        webp_roundtrip(img, q)
    }
}

fn maybe_rotate_flip<R: Rng>(
    mut img: Image,
    rotate_prob: f64,
    flip_prob: f64,
    rng: &mut R,
    trace: &mut AugTrace,
) -> Image {
    if rng.random_bool(rotate_prob) {
        trace.push(AppliedOp::Rotate90);
        img = rotate90_cw(&img);
    }
    if rng.random_bool(flip_prob) {
        if rng.random_bool(0.5) {
            trace.push(AppliedOp::FlipH);
            img = flip_horizontal(&img);
        } else {
            trace.push(AppliedOp::FlipV);
            img = flip_vertical(&img);
        }
    }
    img
}

/// Stage-1 augmentation, in exactly this order: reflect-pad to the crop
/// size, random square crop, an optional single corruption, optional
/// 90-degree rotation, optional horizontal-or-vertical flip. No resizing
/// ever happens in this stage.
pub fn pretrain_augment_traced<R: Rng>(
    img: &Image,
    params: &PretrainParams,
    rng: &mut R,
) -> Result<(Image, AugTrace), ImgError> {
    params.validate()?;
    let mut trace = AugTrace::default();
    let side = params.crop_size;

    let padded = reflect_pad_to(img, side, side);
    if padded.width() != img.width() || padded.height() != img.height() {
        trace.push(AppliedOp::ReflectPad { w: padded.width(), h: padded.height() });
    }
    let mut out = random_crop(&padded, side, rng, &mut trace);
    if rng.random_bool(params.corrupt_prob) {
        out = one_of_four(&out, &params.corruption, rng, &mut trace)?;
    }
    out = maybe_rotate_flip(out, params.rotate_prob, params.flip_prob, rng, &mut trace);
    Ok((out, trace))
}

pub fn pretrain_augment<R: Rng>(
    img: &Image,
    params: &PretrainParams,
    rng: &mut R,
) -> Result<Image, ImgError> {
    pretrain_augment_traced(img, params, rng).map(|(img, _)| img)
}

/// Standard random-resized-crop: sample an area scale and log-uniform
/// aspect ratio, retry up to ten times, fall back to a centered crop
/// with the ratio clamped into range.
fn random_resized_crop<R: Rng>(
    img: &Image,
    out_size: u32,
    scale: (f64, f64),
    ratio: (f64, f64),
    rng: &mut R,
    trace: &mut AugTrace,
) -> Image {
    let (iw, ih) = (img.width(), img.height());
    let area = iw as f64 * ih as f64;
    for _ in 0..10 {
        let target_area = area * rng.random_range(scale.0..=scale.1);
        let aspect = (rng.random_range(ratio.0.ln()..=ratio.1.ln())).exp();
        let w = (target_area * aspect).sqrt().round() as u32;
        let h = (target_area / aspect).sqrt().round() as u32;
        if w >= 1 && w <= iw && h >= 1 && h <= ih {
            let x = rng.random_range(0..=iw - w);
            let y = rng.random_range(0..=ih - h);
            trace.push(AppliedOp::ResizedCrop { x, y, w, h });
            let c = crop(img, x, y, w, h);
            trace.push(AppliedOp::Resize { w: out_size, h: out_size });
            return resize_bilinear(&c, out_size, out_size);
        }
    }
    let in_ratio = iw as f64 / ih as f64;
    let (w, h) = if in_ratio < ratio.0 {
        (iw, ((iw as f64 / ratio.0).round() as u32).min(ih).max(1))
    } else if in_ratio > ratio.1 {
        (((ih as f64 * ratio.1).round() as u32).min(iw).max(1), ih)
    } else {
        (iw, ih)
    };
    let x = (iw - w) / 2;
    let y = (ih - h) / 2;
    trace.push(AppliedOp::ResizedCrop { x, y, w, h });
    let c = crop(img, x, y, w, h);
    trace.push(AppliedOp::Resize { w: out_size, h: out_size });
    resize_bilinear(&c, out_size, out_size)
}

/// Stage-2 calibration augmentation with the nested perturbation policy:
/// half the records are perturbed — of those, 70% take one corruption
/// and 30% take the pad / random-resized-crop / optional-compression
/// composite — then every record is padded to 256, randomly cropped,
/// and optionally rotated and flipped.
pub fn calibration_augment_traced<R: Rng>(
    img: &Image,
    params: &CalibrationParams,
    rng: &mut R,
) -> Result<(Image, AugTrace), ImgError> {
    params.validate()?;
    let mut trace = AugTrace::default();
    let side = params.crop_size;
    let mut out = img.clone();

    if rng.random_bool(params.perturb_prob) {
        if rng.random_bool(params.corrupt_branch_prob) {
            out = one_of_four(&out, &params.corruption, rng, &mut trace)?;
        } else {
            let padded = reflect_pad_to(&out, side, side);
            if padded.width() != out.width() || padded.height() != out.height() {
                trace.push(AppliedOp::ReflectPad { w: padded.width(), h: padded.height() });
            }
            out = random_resized_crop(&padded, side, params.scale, params.ratio, rng, &mut trace);
            if rng.random_bool(params.composite_compress_prob) {
                out = one_of_two_compression(&out, &params.corruption, rng, &mut trace)?;
            }
        }
    }

    let padded = reflect_pad_to(&out, side, side);
    if padded.width() != out.width() || padded.height() != out.height() {
        trace.push(AppliedOp::ReflectPad { w: padded.width(), h: padded.height() });
    }
    out = random_crop(&padded, side, rng, &mut trace);
    out = maybe_rotate_flip(out, params.rotate_prob, params.flip_prob, rng, &mut trace);
    Ok((out, trace))
}

pub fn calibration_augment<R: Rng>(
    img: &Image,
    params: &CalibrationParams,
    rng: &mut R,
) -> Result<Image, ImgError> {
    calibration_augment_traced(img, params, rng).map(|(img, _)| img)
}

/// Test-set perturbation: a random square crop with side uniform in
/// `[out_size, min(h, w)]`, resized to `out_size`, then compressed with
/// JPEG or WebP (equal odds) for `compress_prob` of the records.
pub fn test_perturb_traced<R: Rng>(
    img: &Image,
    params: &TestPerturbParams,
    rng: &mut R,
) -> Result<(Image, AugTrace), ImgError> {
    params.validate()?;
    if img.min_dim() < params.out_size {
        return Err(ImgError::ImageTooSmall {
            min_dim: img.min_dim(),
            required: params.out_size,
        });
    }
    let mut trace = AugTrace::default();
    let side = rng.random_range(params.out_size..=img.min_dim());
    let x = rng.random_range(0..=img.width() - side);
    let y = rng.random_range(0..=img.height() - side);
    trace.push(AppliedOp::Crop { x, y, w: side, h: side });
    let mut out = crop(img, x, y, side, side);
    trace.push(AppliedOp::Resize { w: params.out_size, h: params.out_size });
    out = resize_bilinear(&out, params.out_size, params.out_size);
    if rng.random_bool(params.compress_prob) {
        let corruption = CorruptionParams {
            quality: params.quality,
            ..Default::default()
        };
        out = one_of_two_compression(&out, &corruption, rng, &mut trace)?;
    }
    Ok((out, trace))
}

pub fn test_perturb<R: Rng>(
    img: &Image,
    params: &TestPerturbParams,
    rng: &mut R,
) -> Result<Image, ImgError> {
    test_perturb_traced(img, params, rng).map(|(img, _)| img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn textured(w: u32, h: u32, seed: u64) -> Image {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut img = Image::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                let v = rng.random_range(0..=255u8);
                img.set_pixel(x, y, [v, v ^ 0x2a, v.wrapping_add(31)]);
            }
        }
        img
    }

    #[test]
    fn pretrain_pads_small_inputs_to_crop_size() {
        let img = textured(64, 64, 1);
        let mut rng = stream_rng(0, "t");
        let (out, trace) =
            pretrain_augment_traced(&img, &PretrainParams::default(), &mut rng).unwrap();
        assert_eq!((out.width(), out.height()), (96, 96));
        assert!(matches!(trace.ops[0], AppliedOp::ReflectPad { w: 96, h: 96 }));
    }

    #[test]
    fn pretrain_identity_config_returns_input() {
        let img = textured(96, 96, 2);
        let mut rng = stream_rng(3, "t");
        let out = pretrain_augment(&img, &PretrainParams::identity(), &mut rng).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn pretrain_output_shape_holds_for_any_input() {
        let mut rng = stream_rng(5, "shapes");
        for _ in 0..50 {
            let w = rng.random_range(1..300);
            let h = rng.random_range(1..300);
            let img = textured(w, h, 7);
            let (out, _) =
                pretrain_augment_traced(&img, &PretrainParams::default(), &mut rng).unwrap();
            assert_eq!((out.width(), out.height()), (96, 96), "input {w}x{h}");
        }
    }

    #[test]
    fn pretrain_applies_exactly_one_corruption_when_branch_fires() {
        let img = textured(120, 120, 3);
        let mut rng = stream_rng(11, "one-of");
        let mut fired = 0;
        for _ in 0..200 {
            let (_, trace) =
                pretrain_augment_traced(&img, &PretrainParams::default(), &mut rng).unwrap();
            let n = trace.corruption_count();
            assert!(n <= 1, "more than one corruption applied: {:?}", trace.ops);
            fired += n;
        }
        assert!(fired > 50, "corruption branch never fires");
    }

    #[test]
    fn calibration_identity_config_returns_input() {
        let img = textured(256, 256, 4);
        let mut rng = stream_rng(9, "t");
        let out = calibration_augment(&img, &CalibrationParams::identity(), &mut rng).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn calibration_output_is_always_256() {
        let mut rng = stream_rng(13, "cal-shapes");
        for _ in 0..30 {
            let w = rng.random_range(50..400);
            let h = rng.random_range(50..400);
            let img = textured(w, h, 8);
            let (out, _) =
                calibration_augment_traced(&img, &CalibrationParams::default(), &mut rng).unwrap();
            assert_eq!((out.width(), out.height()), (256, 256), "input {w}x{h}");
        }
    }

    #[test]
    fn test_perturb_rejects_small_images() {
        let img = textured(200, 300, 5);
        let mut rng = stream_rng(1, "t");
        let err = test_perturb(&img, &TestPerturbParams::default(), &mut rng).unwrap_err();
        assert!(matches!(err, ImgError::ImageTooSmall { min_dim: 200, required: 256 }));
    }

    #[test]
    fn test_perturb_degenerate_input_without_compression_is_identity() {
        let img = textured(256, 256, 6);
        let mut rng = stream_rng(2, "t");
        let params = TestPerturbParams {
            compress_prob: 0.0,
            ..Default::default()
        };
        // Crop side is forced to 256 and the resize is then exact.
        let out = test_perturb(&img, &params, &mut rng).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn test_perturb_crop_side_respects_min_dimension() {
        let img = textured(448, 256, 7);
        let mut rng = stream_rng(21, "bounds");
        for _ in 0..200 {
            let (out, trace) =
                test_perturb_traced(&img, &TestPerturbParams::default(), &mut rng).unwrap();
            let AppliedOp::Crop { w, h, x, y } = trace.ops[0] else {
                panic!("first op must be the crop")
            };
            assert_eq!(w, h);
            assert!((256..=256 + 192).contains(&w));
            assert!(x + w <= 448 && y + h <= 256);
            assert_eq!((out.width(), out.height()), (256, 256));
        }
    }

    #[test]
    fn pipelines_are_deterministic_per_seed() {
        let img = textured(300, 200, 9);
        let run = |seed: u64| {
            let mut rng = stream_rng(seed, "det");
            pretrain_augment(&img, &PretrainParams::default(), &mut rng).unwrap()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }
}

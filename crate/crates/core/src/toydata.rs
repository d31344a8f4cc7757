//! Procedurally generated toy datasets: parameterized textures standing
//! in for real images, plus a content-type-dependent periodic artifact
//! standing in for a generator fingerprint. The smoke and ablation
//! suites run entirely on these, so no downloads are ever needed.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::imgproc::{Image, ImgError};
use crate::manifest::{reference_structure, ContentType, ListingKey, Source, SourceListings};
use crate::rng::stream_rng;

/// Texture/artifact parameters for the generated corpus.
#[derive(Debug, Clone)]
pub struct ToyParams {
    pub side: u32,
    /// Peak-to-trough amplitude of the synthetic artifact in intensity
    /// levels. Larger is easier to detect.
    pub artifact_amplitude: f64,
    /// Constant chroma offset added to synthetic images (red up, blue
    /// down), a compression-proof stand-in for a global generator tint.
    /// Zero for datasets where detection must rest on texture alone.
    pub color_shift: f64,
}

impl Default for ToyParams {
    fn default() -> Self {
        ToyParams { side: 272, artifact_amplitude: 24.0, color_shift: 4.0 }
    }
}

/// Smooth value-noise base texture. Each content type lives in its own
/// frequency band and tint so types are visually distinct.
fn base_texture(content: ContentType, params: &ToyParams, rng: &mut ChaCha12Rng) -> Image {
    let side = params.side;
    let (fx_lo, fx_hi, tint): (f64, f64, [f64; 3]) = match content {
        ContentType::Photo => (0.02, 0.08, [1.0, 0.96, 0.9]),
        ContentType::Painting => (0.01, 0.04, [0.95, 0.9, 1.0]),
        ContentType::Face => (0.03, 0.12, [1.0, 0.9, 0.85]),
        ContentType::Uncategorized => (0.015, 0.1, [0.9, 1.0, 0.95]),
    };
    // Sum of a few random-phase plane waves plus pixel noise.
    let n_waves = 6;
    let waves: Vec<(f64, f64, f64, f64)> = (0..n_waves)
        .map(|_| {
            let f = rng.random_range(fx_lo..fx_hi);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp = rng.random_range(12.0..30.0);
            (f * theta.cos(), f * theta.sin(), phase, amp)
        })
        .collect();
    let base_level = rng.random_range(100.0..156.0);

    let mut img = Image::filled(side, side, [0, 0, 0]);
    for y in 0..side {
        for x in 0..side {
            let mut v = base_level;
            for &(fx, fy, phase, amp) in &waves {
                v += amp * (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) + phase).sin();
            }
            let noise: f64 = rng.random_range(-9.0..9.0);
            let rgb = [
                ((v + noise) * tint[0]).round().clamp(0.0, 255.0) as u8,
                ((v + noise) * tint[1]).round().clamp(0.0, 255.0) as u8,
                ((v + noise) * tint[2]).round().clamp(0.0, 255.0) as u8,
            ];
            img.set_pixel(x, y, rgb);
        }
    }
    img
}

/// Add the per-content-type synthetic artifact: a low-frequency periodic
/// pattern that survives resizing and moderate compression. Photos get a
/// checkerboard; paintings horizontal bands; faces diagonal bands;
/// uncategorized vertical bands.
fn add_artifact(img: &mut Image, content: ContentType, params: &ToyParams, rng: &mut ChaCha12Rng) {
    let amp = params.artifact_amplitude;
    let shift = params.color_shift;
    let period = rng.random_range(16.0..24.0);
    let phase = rng.random_range(0.0..period);
    // Square waves: crisp band edges carry local gradient energy at the
    // type's orientation, which survives resizing and compression.
    let square = |v: f64| if v.rem_euclid(2.0) < 1.0 { 1.0 } else { -1.0 };
    for y in 0..img.height() {
        for x in 0..img.width() {
            let t = match content {
                ContentType::Photo => {
                    let cx = ((x as f64 + phase) / period).floor() as i64;
                    let cy = ((y as f64 + phase) / period).floor() as i64;
                    if (cx + cy) % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                ContentType::Painting => square((y as f64 + phase) * 2.0 / period),
                ContentType::Face => square((x as f64 + y as f64 + phase) * 2.0 / (period * 1.4)),
                ContentType::Uncategorized => square((x as f64 + phase) * 2.0 / period),
            };
            let mut rgb = img.pixel(x, y);
            for (c, chroma) in rgb.iter_mut().zip([shift, 0.0, -shift]) {
                *c = (*c as f64 + amp * t + chroma).round().clamp(0.0, 255.0) as u8;
            }
            img.set_pixel(x, y, rgb);
        }
    }
}

/// One toy image, seeded independently of any other.
pub fn toy_image(content: ContentType, synthetic: bool, params: &ToyParams, seed: u64) -> Image {
    let mut rng = stream_rng(seed, &format!("toy/{}/{synthetic}", content.slug()));
    let mut img = base_texture(content, params, &mut rng);
    if synthetic {
        add_artifact(&mut img, content, params, &mut rng);
    }
    img
}

/// Write a source tree laid out for `manifest build`:
/// `<root>/<content>/<real|synthetic>/<provider>/imgNNNN.png`, with
/// `per_cell` files in every provider cell of the given content types.
pub fn generate_source_tree(
    root: &Path,
    contents: &[ContentType],
    per_cell: usize,
    params: &ToyParams,
    seed: u64,
) -> Result<SourceListings, ImgError> {
    let mut listings = SourceListings::new();
    for cell in reference_structure() {
        if !contents.contains(&cell.content) {
            continue;
        }
        let dir = root
            .join(cell.content.slug())
            .join(match cell.source {
                Source::Real => "real",
                Source::Synthetic => "synthetic",
            })
            .join(cell.provider);
        fs::create_dir_all(&dir)?;
        let mut files = Vec::with_capacity(per_cell);
        let items: Vec<usize> = (0..per_cell).collect();
        let rendered = crate::parallel::map(&items, |&i| {
            let path = dir.join(format!("img{i:05}.png"));
            let file_seed = crate::rng::stream_seed(seed, &format!("{}/{i}", cell.slug()));
            let img = toy_image(cell.content, cell.source == Source::Synthetic, params, file_seed);
            img.save_png(&path).map(|_| path.to_string_lossy().into_owned())
        });
        for r in rendered {
            files.push(r?);
        }
        listings.insert(ListingKey::new(cell.content, cell.source, cell.provider), files);
    }
    Ok(listings)
}

//! Pure geometric transforms: padding, cropping, resizing, flips,
//! rotation. No randomness here; seeded choices live in the augmentation
//! pipelines.

use super::{ImgError, Image};

/// Reflect-101 index fold: mirrors around the border without repeating
/// the edge sample. Degenerates to clamping for single-pixel axes.
#[inline]
fn reflect_index(i: i64, n: u32) -> u32 {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as u32
}

/// Pad with reflected borders until the image is at least
/// `min_w x min_h`, splitting the padding evenly around the content.
/// Images already large enough are returned unchanged.
pub fn reflect_pad_to(img: &Image, min_w: u32, min_h: u32) -> Image {
    if img.width() >= min_w && img.height() >= min_h {
        return img.clone();
    }
    let out_w = img.width().max(min_w);
    let out_h = img.height().max(min_h);
    let left = (out_w - img.width()) / 2;
    let top = (out_h - img.height()) / 2;

    let mut out = Image::filled(out_w, out_h, [0, 0, 0]);
    for y in 0..out_h {
        let sy = reflect_index(y as i64 - top as i64, img.height());
        for x in 0..out_w {
            let sx = reflect_index(x as i64 - left as i64, img.width());
            out.set_pixel(x, y, img.pixel(sx, sy));
        }
    }
    out
}

/// Copy out the `w x h` region with top-left corner `(x, y)`.
pub fn crop(img: &Image, x: u32, y: u32, w: u32, h: u32) -> Image {
    assert!(x + w <= img.width() && y + h <= img.height(), "crop out of range");
    let mut data = Vec::with_capacity(w as usize * h as usize * 3);
    for row in y..y + h {
        let start = (row as usize * img.width() as usize + x as usize) * 3;
        data.extend_from_slice(&img.data()[start..start + w as usize * 3]);
    }
    Image::new(w, h, data).expect("crop dimensions validated")
}

/// Top-left and bottom-right (exclusive) corners of the centered square
/// crop of the given side.
pub fn center_crop_box(width: u32, height: u32, side: u32) -> (u32, u32, u32, u32) {
    let x0 = (width - side) / 2;
    let y0 = (height - side) / 2;
    (x0, y0, x0 + side, y0 + side)
}

pub fn center_crop(img: &Image, side: u32) -> Result<Image, ImgError> {
    if side == 0 || side > img.min_dim() {
        return Err(ImgError::CropExceedsImage {
            side,
            min_dim: img.min_dim(),
        });
    }
    let (x0, y0, _, _) = center_crop_box(img.width(), img.height(), side);
    Ok(crop(img, x0, y0, side, side))
}

/// Bilinear resize with half-pixel center alignment. Identical
/// dimensions return an exact copy.
pub fn resize_bilinear(img: &Image, out_w: u32, out_h: u32) -> Image {
    if out_w == img.width() && out_h == img.height() {
        return img.clone();
    }
    let sx_scale = img.width() as f64 / out_w as f64;
    let sy_scale = img.height() as f64 / out_h as f64;
    let src = img.data();
    let sw = img.width() as usize;

    let mut data = vec![0u8; out_w as usize * out_h as usize * 3];
    for oy in 0..out_h as usize {
        let fy = ((oy as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, (img.height() - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height() as usize - 1);
        let wy = fy - y0 as f64;
        for ox in 0..out_w as usize {
            let fx = ((ox as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, (img.width() - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width() as usize - 1);
            let wx = fx - x0 as f64;
            let o = (oy * out_w as usize + ox) * 3;
            for c in 0..3 {
                let p00 = src[(y0 * sw + x0) * 3 + c] as f64;
                let p01 = src[(y0 * sw + x1) * 3 + c] as f64;
                let p10 = src[(y1 * sw + x0) * 3 + c] as f64;
                let p11 = src[(y1 * sw + x1) * 3 + c] as f64;
                let top = p00 + (p01 - p00) * wx;
                let bottom = p10 + (p11 - p10) * wx;
                let v = top + (bottom - top) * wy;
                data[o + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Image::new(out_w, out_h, data).expect("resize buffer consistent")
}

/// Single 90-degree clockwise rotation.
pub fn rotate90_cw(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = Image::filled(h, w, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            out.set_pixel(h - 1 - y, x, img.pixel(x, y));
        }
    }
    out
}

pub fn flip_horizontal(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            out.set_pixel(w - 1 - x, y, img.pixel(x, y));
        }
    }
    out
}

pub fn flip_vertical(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            out.set_pixel(x, h - 1 - y, img.pixel(x, y));
        }
    }
    out
}

//! Minimal PNG chart rendering for sweep curves and 2D scatter plots.
//! The raw data files are the contract; these renderings are a viewing
//! convenience, so the plots are deliberately spartan (axes, ticks,
//! digit labels).

use image::{Rgb, RgbImage};

use crate::imgproc::ImgError;

const WIDTH: u32 = 900;
const HEIGHT: u32 = 600;
const MARGIN: u32 = 60;
const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([30, 30, 30]);

const PALETTE: [Rgb<u8>; 8] = [
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([44, 160, 44]),
    Rgb([214, 39, 40]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
    Rgb([227, 119, 194]),
    Rgb([127, 127, 127]),
];

// 3x5 bitmaps for '0'-'9', '.', '-'.
const GLYPHS: [(char, [u8; 5]); 12] = [
    ('0', [0b111, 0b101, 0b101, 0b101, 0b111]),
    ('1', [0b010, 0b110, 0b010, 0b010, 0b111]),
    ('2', [0b111, 0b001, 0b111, 0b100, 0b111]),
    ('3', [0b111, 0b001, 0b111, 0b001, 0b111]),
    ('4', [0b101, 0b101, 0b111, 0b001, 0b001]),
    ('5', [0b111, 0b100, 0b111, 0b001, 0b111]),
    ('6', [0b111, 0b100, 0b111, 0b101, 0b111]),
    ('7', [0b111, 0b001, 0b010, 0b010, 0b010]),
    ('8', [0b111, 0b101, 0b111, 0b101, 0b111]),
    ('9', [0b111, 0b101, 0b111, 0b001, 0b111]),
    ('.', [0b000, 0b000, 0b000, 0b000, 0b010]),
    ('-', [0b000, 0b000, 0b111, 0b000, 0b000]),
];

fn draw_text(img: &mut RgbImage, x: u32, y: u32, text: &str) {
    let mut cx = x;
    for ch in text.chars() {
        if let Some((_, rows)) = GLYPHS.iter().find(|(g, _)| *g == ch) {
            for (ry, bits) in rows.iter().enumerate() {
                for rx in 0..3 {
                    if bits >> (2 - rx) & 1 == 1 {
                        let (px, py) = (cx + rx, y + ry as u32);
                        if px < img.width() && py < img.height() {
                            img.put_pixel(px, py, AXIS);
                        }
                    }
                }
            }
        }
        cx += 4;
    }
}

fn draw_line(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as u32).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = (x0 + (x1 - x0) * t).round() as i64;
        let y = (y0 + (y1 - y0) * t).round() as i64;
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

fn draw_disc(img: &mut RgbImage, cx: f64, cy: f64, r: i64, color: Rgb<u8>) {
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                let x = cx.round() as i64 + dx;
                let y = cy.round() as i64 + dy;
                if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
                    img.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_ranges(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Frame {
        let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in xs {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
        }
        let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in ys {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        if x_max - x_min < 1e-12 {
            x_max = x_min + 1.0;
        }
        if y_max - y_min < 1e-12 {
            y_max = y_min + 1.0;
        }
        Frame { x_min, x_max, y_min, y_max }
    }

    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let w = (WIDTH - 2 * MARGIN) as f64;
        let h = (HEIGHT - 2 * MARGIN) as f64;
        (
            MARGIN as f64 + (x - self.x_min) / (self.x_max - self.x_min) * w,
            HEIGHT as f64 - MARGIN as f64 - (y - self.y_min) / (self.y_max - self.y_min) * h,
        )
    }
}

fn draw_axes(img: &mut RgbImage, frame: &Frame) {
    let m = MARGIN as f64;
    draw_line(img, m, HEIGHT as f64 - m, WIDTH as f64 - m, HEIGHT as f64 - m, AXIS);
    draw_line(img, m, m, m, HEIGHT as f64 - m, AXIS);
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let x_val = frame.x_min + t * (frame.x_max - frame.x_min);
        let y_val = frame.y_min + t * (frame.y_max - frame.y_min);
        let (px, _) = frame.to_px(x_val, frame.y_min);
        let (_, py) = frame.to_px(frame.x_min, y_val);
        draw_line(img, px, HEIGHT as f64 - m, px, HEIGHT as f64 - m + 5.0, AXIS);
        draw_line(img, m - 5.0, py, m, py, AXIS);
        draw_text(img, (px as u32).saturating_sub(10), HEIGHT - MARGIN + 10, &format!("{x_val:.2}"));
        draw_text(img, 8, py as u32, &format!("{y_val:.2}"));
    }
}

/// A single polyline with point markers.
pub fn render_line_chart(points: &[(f64, f64)], path: &std::path::Path) -> Result<(), ImgError> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BG);
    let frame = Frame::from_ranges(points.iter().map(|p| p.0), points.iter().map(|p| p.1));
    draw_axes(&mut img, &frame);
    for pair in points.windows(2) {
        let (x0, y0) = frame.to_px(pair[0].0, pair[0].1);
        let (x1, y1) = frame.to_px(pair[1].0, pair[1].1);
        draw_line(&mut img, x0, y0, x1, y1, PALETTE[0]);
    }
    for &(x, y) in points {
        let (px, py) = frame.to_px(x, y);
        draw_disc(&mut img, px, py, 3, PALETTE[3]);
    }
    img.save(path).map_err(|e| ImgError::Codec(e.to_string()))
}

/// 2D scatter with one palette color per label index.
pub fn render_scatter(
    points: &[(f64, f64, usize)],
    path: &std::path::Path,
) -> Result<(), ImgError> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BG);
    let frame = Frame::from_ranges(points.iter().map(|p| p.0), points.iter().map(|p| p.1));
    draw_axes(&mut img, &frame);
    for &(x, y, label) in points {
        let (px, py) = frame.to_px(x, y);
        draw_disc(&mut img, px, py, 2, PALETTE[label % PALETTE.len()]);
    }
    img.save(path).map_err(|e| ImgError::Codec(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_render_to_valid_png() {
        let dir = tempfile::tempdir().unwrap();
        let line = dir.path().join("line.png");
        render_line_chart(&[(40.0, 0.9), (55.0, 0.92), (75.0, 0.95), (95.0, 0.99)], &line)
            .unwrap();
        let scatter = dir.path().join("scatter.png");
        render_scatter(&[(0.0, 0.0, 0), (1.0, 1.0, 1), (-1.0, 0.5, 2)], &scatter).unwrap();
        for p in [line, scatter] {
            let img = image::open(&p).unwrap();
            assert_eq!((img.width(), img.height()), (WIDTH, HEIGHT));
        }
    }
}

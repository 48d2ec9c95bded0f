//! Minimal PNG rendering for analysis outputs: heatmaps and line plots.
//! No text; the accompanying tables carry the numbers.

use std::path::Path;

use image::{Rgb, RgbImage};

/// Viridis-like ramp sampled at five stops.
const RAMP: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn colour(v: f64) -> Rgb<u8> {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let pos = v * (RAMP.len() - 1) as f64;
    let i = (pos.floor() as usize).min(RAMP.len() - 2);
    let w = pos - i as f64;
    let c = |k: usize| (RAMP[i][k] * (1.0 - w) + RAMP[i + 1][k] * w).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// Renders a row-major `t × f` grid with time left to right and frequency
/// bottom to top. Values are expected in `[0, 1]`.
pub fn heatmap(values: &[f64], t: usize, f: usize, scale: u32, path: &Path) -> image::ImageResult<()> {
    assert_eq!(values.len(), t * f, "heatmap grid size");
    let mut img = RgbImage::new(t as u32 * scale, f as u32 * scale);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let (i, j) = ((x / scale) as usize, f - 1 - (y / scale) as usize);
        *px = colour(values[i * f + j]);
    }
    img.save(path)
}

/// Log-compresses nonnegative values into `[0, 1]` relative to their maximum,
/// over a `dynamic_db` range.
pub fn log_normalize(values: &[f64], dynamic_db: f64) -> Vec<f64> {
    let max = values.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| if *v <= 0.0 { 0.0 } else { (1.0 + 20.0 * (v / max).log10() / dynamic_db).max(0.0) }).collect()
}

const WIDTH: u32 = 640;
const HEIGHT: u32 = 400;
const MARGIN: u32 = 40;
const SERIES: [Rgb<u8>; 4] = [Rgb([31, 119, 180]), Rgb([214, 39, 40]), Rgb([44, 160, 44]), Rgb([148, 103, 189])];

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, c);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Draws each series as a polyline with square markers on shared axes.
/// Non-finite points are skipped.
pub fn line_plot(series: &[Vec<(f64, f64)>], path: &Path) -> image::ImageResult<()> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let pts: Vec<(f64, f64)> = series.iter().flatten().filter(|(x, y)| x.is_finite() && y.is_finite()).cloned().collect();
    let (x_lo, x_hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y_lo, mut y_hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if y_hi - y_lo < 1e-12 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let (w, h) = ((WIDTH - 2 * MARGIN) as f64, (HEIGHT - 2 * MARGIN) as f64);
    let to_px = |(x, y): (f64, f64)| {
        let fx = if x_hi > x_lo { (x - x_lo) / (x_hi - x_lo) } else { 0.5 };
        let fy = (y - y_lo) / (y_hi - y_lo);
        ((MARGIN as f64 + fx * w).round() as i64, (HEIGHT as f64 - MARGIN as f64 - fy * h).round() as i64)
    };
    let black = Rgb([0, 0, 0]);
    let (m, bottom, right) = (MARGIN as i64, (HEIGHT - MARGIN) as i64, (WIDTH - MARGIN) as i64);
    line(&mut img, (m, bottom), (right, bottom), black);
    line(&mut img, (m, bottom), (m, m), black);
    for (k, s) in series.iter().enumerate() {
        let c = SERIES[k % SERIES.len()];
        let px: Vec<(i64, i64)> = s.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).map(|&p| to_px(p)).collect();
        for pair in px.windows(2) {
            line(&mut img, pair[0], pair[1], c);
        }
        for &(x, y) in &px {
            line(&mut img, (x, bottom), (x, bottom + 4), black);
            for d in -2..=2 {
                line(&mut img, (x - 2, y + d), (x + 2, y + d), c);
            }
        }
    }
    img.save(path)
}

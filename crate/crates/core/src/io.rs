//! Image ingestion, debug dumps and path/overlay export.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GenericImageView, ImageFormat, Rgb, RgbImage};

use crate::error::{invalid, Result};
use crate::geodesic::GeodesicPath;
use crate::grid::{Point2, ScalarImage};
use crate::raster;

/// Decodes PNG or PGM bytes into intensities in `[0, 1]`; colour images
/// keep their green channel.
pub fn decode_image(bytes: &[u8]) -> Result<ScalarImage> {
    let img = image::load_from_memory(bytes)?;
    from_dynamic(&img)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ScalarImage> {
    decode_image(&std::fs::read(path)?)
}

fn from_dynamic(img: &DynamicImage) -> Result<ScalarImage> {
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    let values: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(b) => b.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb16(b) => b.pixels().map(|p| p.0[1] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgba16(b) => b.pixels().map(|p| p.0[1] as f64 / 65535.0).collect(),
        other => other.to_rgb8().pixels().map(|p| p.0[1] as f64 / 255.0).collect(),
    };
    ScalarImage::new(w, h, values)
}

/// 8-bit grayscale PNG of values clamped to `[0, 1]`.
pub fn encode_gray_png(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    let buf: Vec<u8> = values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let img = image::GrayImage::from_raw(width as u32, height as u32, buf).ok_or_else(|| invalid("buffer size mismatch"))?;
    encode(DynamicImage::ImageLuma8(img))
}

pub fn encode_mask_png(width: usize, height: usize, mask: &[bool]) -> Result<Vec<u8>> {
    let values: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    encode_gray_png(width, height, &values)
}

/// Reads a binary mask: any nonzero intensity is inside.
pub fn load_mask(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<bool>)> {
    let img = load_image(path)?;
    Ok((img.width(), img.height(), img.values().iter().map(|&v| v > 0.0).collect()))
}

fn encode(img: DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Row-major little-endian `f32` dump.
pub fn encode_f32_raw(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

pub fn decode_f32_raw(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(invalid(format!("raw dump length {} is not a multiple of 4", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn colormap(t: f64) -> [u8; 3] {
    // blue - cyan - yellow - red
    let t = t.clamp(0.0, 1.0);
    let stops = [[0.0, 0.0, 0.5], [0.0, 0.8, 1.0], [1.0, 0.9, 0.0], [0.8, 0.0, 0.0]];
    let s = t * 3.0;
    let i = (s.floor() as usize).min(2);
    let f = s - i as f64;
    std::array::from_fn(|c| ((stops[i][c] * (1.0 - f) + stops[i + 1][c] * f) * 255.0).round() as u8)
}

/// Colour-mapped PNG scaled to the finite range; non-finite values are black.
pub fn encode_heat_map(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(invalid("heat map size mismatch"));
    }
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let img = RgbImage::from_fn(width as u32, height as u32, |x, y| {
        let v = values[y as usize * width + x as usize];
        Rgb(if v.is_finite() { colormap((v - lo) / span) } else { [0, 0, 0] })
    });
    encode(DynamicImage::ImageRgb8(img))
}

/// Grayscale image with coloured paths and point markers drawn on top.
pub fn encode_overlay(image: &ScalarImage, paths: &[(&GeodesicPath, [u8; 3])], markers: &[(Point2, [u8; 3])]) -> Result<Vec<u8>> {
    let (w, h) = (image.width(), image.height());
    let mut img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let g = (image.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([g, g, g])
    });
    for (path, colour) in paths {
        for i in raster::rasterize_polyline(&path.points, w, h) {
            img.put_pixel((i % w) as u32, (i / w) as u32, Rgb(*colour));
        }
    }
    for (p, colour) in markers {
        let (cx, cy) = ((p[0] + 0.5).floor() as i64, (p[1] + 0.5).floor() as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                    img.put_pixel(x as u32, y as u32, Rgb(*colour));
                }
            }
        }
    }
    encode(DynamicImage::ImageRgb8(img))
}

pub fn write_path_json(path: impl AsRef<Path>, geodesic: &GeodesicPath) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(&geodesic.to_json()).expect("json values serialize"))?;
    Ok(())
}

/// Reads a path from JSON (`[[x, y], ...]`) or CSV with an `x,y[,r]` header.
pub fn read_path(path: impl AsRef<Path>) -> Result<GeodesicPath> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return parse_path_csv(&text);
    }
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| invalid(format!("bad path JSON: {e}")))?;
    GeodesicPath::from_json(&value)
}

pub fn parse_path_csv(text: &str) -> Result<GeodesicPath> {
    let mut points = Vec::new();
    let mut radii = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with('x')) {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| invalid(format!("line {}: {e}", n + 1)))?;
        match v.len() {
            2 => points.push([v[0], v[1]]),
            3 => {
                points.push([v[0], v[1]]);
                radii.push(v[2]);
            }
            k => return Err(invalid(format!("line {}: expected 2 or 3 columns, got {k}", n + 1))),
        }
    }
    if !radii.is_empty() && radii.len() != points.len() {
        return Err(invalid("path mixes 2D and radius-lifted rows"));
    }
    Ok(GeodesicPath { points, radii: (!radii.is_empty()).then_some(radii), fallback_steps: 0 })
}

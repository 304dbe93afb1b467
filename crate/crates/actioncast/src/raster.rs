//! Low-level pixel helpers shared by the ingest, vision and synth stages:
//! grayscale conversion, bilinear resizing and PNG export.

use std::path::Path;

use crate::error::{Error, Result};

/// Rec. 601 luma from interleaved RGB, one f64 per pixel in [0, 255].
pub fn rgb_to_luma(pixels: &[u8]) -> Vec<f64> {
    pixels
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect()
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Source coordinate for a destination pixel under the half-pixel-center
/// convention, split into floor index and fractional weight.
fn src_coord(dst: usize, dst_len: usize, src_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let x = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let i0 = x.floor() as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, x - i0 as f64)
}

/// Bilinear resize of an interleaved RGB buffer.
pub fn resize_rgb(src: &[u8], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<u8> {
    assert_eq!(src.len(), sw * sh * 3, "rgb buffer size");
    if sw == dw && sh == dh {
        return src.to_vec();
    }
    let mut out = vec![0u8; dw * dh * 3];
    for dy in 0..dh {
        let (y0, y1, ty) = src_coord(dy, dh, sh);
        for dx in 0..dw {
            let (x0, x1, tx) = src_coord(dx, dw, sw);
            for c in 0..3 {
                let p00 = src[(y0 * sw + x0) * 3 + c] as f64;
                let p01 = src[(y0 * sw + x1) * 3 + c] as f64;
                let p10 = src[(y1 * sw + x0) * 3 + c] as f64;
                let p11 = src[(y1 * sw + x1) * 3 + c] as f64;
                let v = lerp(lerp(p00, p01, tx), lerp(p10, p11, tx), ty);
                out[(dy * dw + dx) * 3 + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// Bilinear resize of a single-channel f32 buffer.
pub fn resize_gray(src: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    assert_eq!(src.len(), sw * sh, "gray buffer size");
    if sw == dw && sh == dh {
        return src.to_vec();
    }
    let mut out = vec![0f32; dw * dh];
    for dy in 0..dh {
        let (y0, y1, ty) = src_coord(dy, dh, sh);
        for dx in 0..dw {
            let (x0, x1, tx) = src_coord(dx, dw, sw);
            let p00 = src[y0 * sw + x0] as f64;
            let p01 = src[y0 * sw + x1] as f64;
            let p10 = src[y1 * sw + x0] as f64;
            let p11 = src[y1 * sw + x1] as f64;
            out[dy * dw + dx] = lerp(lerp(p00, p01, tx), lerp(p10, p11, tx), ty) as f32;
        }
    }
    out
}

/// Writes an interleaved RGB buffer as PNG.
pub fn write_rgb_png(path: &Path, pixels: &[u8], w: u32, h: u32) -> Result<()> {
    let img = image::RgbImage::from_raw(w, h, pixels.to_vec())
        .ok_or_else(|| Error::ShapeMismatch(format!("rgb buffer does not fit {w}x{h}")))?;
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a [0,1] dissimilarity buffer as 8-bit grayscale PNG (255 = 1.0).
pub fn write_gray_png(path: &Path, values: &[f32], w: u32, h: u32) -> Result<()> {
    let bytes: Vec<u8> = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(w, h, bytes)
        .ok_or_else(|| Error::ShapeMismatch(format!("gray buffer does not fit {w}x{h}")))?;
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

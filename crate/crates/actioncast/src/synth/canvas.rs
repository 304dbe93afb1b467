//! Integer-only RGB rasterizer for the synthetic screens. All drawing is
//! clipped, deterministic and float-free so rendered pixels are identical
//! across platforms.

use crate::vision::BBox;

pub type Color = [u8; 3];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Canvas {
    pub w: u32,
    pub h: u32,
    pub pixels: Vec<u8>,
}

impl Canvas {
    pub fn new(w: u32, h: u32, fill: Color) -> Self {
        let mut pixels = Vec::with_capacity((w * h * 3) as usize);
        for _ in 0..w * h {
            pixels.extend_from_slice(&fill);
        }
        Canvas { w, h, pixels }
    }

    pub fn put(&mut self, x: i32, y: i32, color: Color) {
        if x < 0 || y < 0 || x >= self.w as i32 || y >= self.h as i32 {
            return;
        }
        let i = ((y as u32 * self.w + x as u32) * 3) as usize;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }

    pub fn get(&self, x: u32, y: u32) -> Color {
        let i = ((y * self.w + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn fill_rect(&mut self, x: i32, y: i32, w: i32, h: i32, color: Color) {
        for yy in y.max(0)..(y + h).min(self.h as i32) {
            for xx in x.max(0)..(x + w).min(self.w as i32) {
                self.put(xx, yy, color);
            }
        }
    }

    pub fn fill_bbox(&mut self, b: &BBox, color: Color) {
        self.fill_rect(b.x as i32, b.y as i32, b.w as i32, b.h as i32, color);
    }

    /// 1px rectangle outline just inside the given bounds.
    pub fn outline_rect(&mut self, x: i32, y: i32, w: i32, h: i32, color: Color) {
        if w <= 0 || h <= 0 {
            return;
        }
        self.fill_rect(x, y, w, 1, color);
        self.fill_rect(x, y + h - 1, w, 1, color);
        self.fill_rect(x, y, 1, h, color);
        self.fill_rect(x + w - 1, y, 1, h, color);
    }

    pub fn outline_bbox(&mut self, b: &BBox, color: Color) {
        self.outline_rect(b.x as i32, b.y as i32, b.w as i32, b.h as i32, color);
    }

    /// Filled integer disc.
    pub fn fill_disc(&mut self, cx: i32, cy: i32, r: i32, color: Color) {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    self.put(cx + dx, cy + dy, color);
                }
            }
        }
    }

    /// Copies out a rectangular region (clipped coordinates must be valid).
    pub fn snapshot(&self, b: &BBox) -> Vec<u8> {
        let mut out = Vec::with_capacity((b.w * b.h * 3) as usize);
        for y in b.y..b.y + b.h {
            let row = ((y * self.w + b.x) * 3) as usize;
            out.extend_from_slice(&self.pixels[row..row + (b.w * 3) as usize]);
        }
        out
    }

    pub fn restore(&mut self, b: &BBox, saved: &[u8]) {
        assert_eq!(saved.len(), (b.w * b.h * 3) as usize);
        for (i, y) in (b.y..b.y + b.h).enumerate() {
            let dst = ((y * self.w + b.x) * 3) as usize;
            let src = i * (b.w * 3) as usize;
            self.pixels[dst..dst + (b.w * 3) as usize]
                .copy_from_slice(&saved[src..src + (b.w * 3) as usize]);
        }
    }

    pub fn to_frame(&self, index: usize, timestamp_ms: u64) -> crate::ingest::Frame {
        crate::ingest::Frame::new(self.w, self.h, self.pixels.clone(), index, timestamp_ms)
    }
}

/// Integer shade step toward black (positive) or white (negative).
pub fn shade(color: Color, delta: i32) -> Color {
    let adj = |c: u8| (c as i32 - delta).clamp(0, 255) as u8;
    [adj(color[0]), adj(color[1]), adj(color[2])]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drawing_is_clipped() {
        let mut c = Canvas::new(8, 8, [0, 0, 0]);
        c.fill_rect(-2, -2, 4, 4, [255, 0, 0]);
        c.fill_disc(7, 7, 3, [0, 255, 0]);
        assert_eq!(c.get(0, 0), [255, 0, 0]);
        assert_eq!(c.get(7, 7), [0, 255, 0]);
    }

    #[test]
    fn snapshot_restore_round_trips() {
        let mut c = Canvas::new(10, 10, [10, 20, 30]);
        let b = BBox { x: 2, y: 3, w: 4, h: 5 };
        let before = c.snapshot(&b);
        c.fill_bbox(&b, [200, 0, 0]);
        assert_ne!(c.snapshot(&b), before);
        c.restore(&b, &before);
        assert_eq!(c.snapshot(&b), before);
    }

    #[test]
    fn shade_saturates() {
        assert_eq!(shade([5, 5, 5], 20), [0, 0, 0]);
        assert_eq!(shade([250, 250, 250], -20), [255, 255, 255]);
        assert_eq!(shade([100, 110, 120], 10), [90, 100, 110]);
    }
}

//! Per-pair dissimilarity maps, change-region detection and the three
//! model input streams (resized originals, change-region crops,
//! similarity maps).

use crate::error::{Error, Result};
use crate::ingest::{Frame, FrameSequence};
use crate::raster;

/// Per-pixel dissimilarity between two frames. 0 = identical, larger =
/// more changed ("brighter" when exported as a grayscale image).
#[derive(Clone, Debug)]
pub struct SimilarityMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
    /// (earlier frame index, later frame index)
    pub pair: (usize, usize),
}

impl SimilarityMap {
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }

    pub fn write_png(&self, path: &std::path::Path) -> Result<()> {
        raster::write_gray_png(path, &self.values, self.width, self.height)
    }
}

/// Axis-aligned pixel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        if x1 <= x0 || y1 <= y0 {
            0
        } else {
            (x1 - x0) as u64 * (y1 - y0) as u64
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn contains_point(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

/// Structural-similarity parameters. `c1`/`c2` default to the standard
/// (0.01 * 255)^2 and (0.03 * 255)^2 stabilizers.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SsimConfig {
    /// Odd window edge length.
    pub window: usize,
    pub c1: f64,
    pub c2: f64,
    /// Dissimilarity cutoff for change-region detection.
    pub region_threshold: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 7,
            c1: (0.01 * 255.0) * (0.01 * 255.0),
            c2: (0.03 * 255.0) * (0.03 * 255.0),
            region_threshold: 0.05,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::InvalidConfig("ssim window must be odd and >= 3".into()));
        }
        if !(0.0..=1.0).contains(&self.region_threshold) {
            return Err(Error::InvalidConfig("region_threshold must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// The three resized input streams for one fixed-length fragment.
/// Pair-indexed streams (crops, maps) are padded to `s` entries by
/// repeating their last element so all three streams align.
#[derive(Clone, Debug)]
pub struct StreamBundle {
    /// `s` RGB images, side*side*3 bytes each.
    pub originals: Vec<Vec<u8>>,
    /// `s` RGB crops of the largest change region, from the later frame
    /// of each pair (full frame when no region was found).
    pub change_crops: Vec<Vec<u8>>,
    /// `s` grayscale dissimilarity maps in [0,1], side*side each.
    pub sim_maps: Vec<Vec<f32>>,
    pub side: usize,
}

fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Summed-area table with one row/column of leading zeros.
fn integral(v: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += v[y * w + x];
            out[(y + 1) * (w + 1) + (x + 1)] = out[y * (w + 1) + (x + 1)] + row;
        }
    }
    out
}

fn rect_sum(int: &[f64], stride: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    // Half-open [x0, x1) x [y0, y1) over the original buffer.
    int[y1 * stride + x1] - int[y0 * stride + x1] - int[y1 * stride + x0] + int[y0 * stride + x0]
}

/// Per-pixel windowed structural dissimilarity of two frames.
///
/// SSIM is computed on grayscale over a `window x window` mirror-padded
/// neighborhood; the map value is `clamp((1 - ssim) / 2, 0, 1)` so that
/// brighter means more changed.
pub fn ssim_map(a: &Frame, b: &Frame, cfg: &SsimConfig) -> Result<SimilarityMap> {
    cfg.validate()?;
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::ShapeMismatch(format!(
            "frame pair {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (w, h) = (a.width as usize, a.height as usize);
    let la = raster::rgb_to_luma(&a.pixels);
    let lb = raster::rgb_to_luma(&b.pixels);
    let r = cfg.window / 2;

    // Mirror-pad both luma planes, then every window sum is O(1) via
    // summed-area tables of x, y, x^2, y^2 and x*y.
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    let mut pa = vec![0.0; pw * ph];
    let mut pb = vec![0.0; pw * ph];
    for y in 0..ph {
        let sy = mirror(y as isize - r as isize, h);
        for x in 0..pw {
            let sx = mirror(x as isize - r as isize, w);
            pa[y * pw + x] = la[sy * w + sx];
            pb[y * pw + x] = lb[sy * w + sx];
        }
    }
    let sq_a: Vec<f64> = pa.iter().map(|v| v * v).collect();
    let sq_b: Vec<f64> = pb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
    let ia = integral(&pa, pw, ph);
    let ib = integral(&pb, pw, ph);
    let iaa = integral(&sq_a, pw, ph);
    let ibb = integral(&sq_b, pw, ph);
    let iab = integral(&ab, pw, ph);

    let n = (cfg.window * cfg.window) as f64;
    let stride = pw + 1;
    let mut values = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let (x1, y1) = (x + cfg.window, y + cfg.window);
            let mu_a = rect_sum(&ia, stride, x, y, x1, y1) / n;
            let mu_b = rect_sum(&ib, stride, x, y, x1, y1) / n;
            let var_a = rect_sum(&iaa, stride, x, y, x1, y1) / n - mu_a * mu_a;
            let var_b = rect_sum(&ibb, stride, x, y, x1, y1) / n - mu_b * mu_b;
            let cov = rect_sum(&iab, stride, x, y, x1, y1) / n - mu_a * mu_b;
            let ssim = ((2.0 * mu_a * mu_b + cfg.c1) * (2.0 * cov + cfg.c2))
                / ((mu_a * mu_a + mu_b * mu_b + cfg.c1) * (var_a + var_b + cfg.c2));
            values[y * w + x] = (((1.0 - ssim) / 2.0).clamp(0.0, 1.0)) as f32;
        }
    }
    Ok(SimilarityMap {
        width: a.width,
        height: a.height,
        values,
        pair: (a.index, b.index),
    })
}

/// Tight bounding boxes of the 8-connected components of pixels whose
/// dissimilarity exceeds `threshold`, in scan order of their topmost-
/// leftmost pixel.
pub fn detect_change_regions(map: &SimilarityMap, threshold: f64) -> Vec<BBox> {
    let (w, h) = (map.width as usize, map.height as usize);
    let hot = |x: usize, y: usize| map.values[y * w + x] as f64 > threshold;
    let mut seen = vec![false; w * h];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if seen[y * w + x] || !hot(x, y) {
                continue;
            }
            let (mut x0, mut y0, mut x1, mut y1) = (x, y, x, y);
            seen[y * w + x] = true;
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                x0 = x0.min(cx);
                y0 = y0.min(cy);
                x1 = x1.max(cx);
                y1 = y1.max(cy);
                for dy in -1i32..=1 {
                    for dx in -1i32..=1 {
                        let nx = cx as i32 + dx;
                        let ny = cy as i32 + dy;
                        if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if !seen[ny * w + nx] && hot(nx, ny) {
                            seen[ny * w + nx] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            boxes.push(BBox {
                x: x0 as u32,
                y: y0 as u32,
                w: (x1 - x0 + 1) as u32,
                h: (y1 - y0 + 1) as u32,
            });
        }
    }
    boxes
}

/// The region of maximal bounding-box area; ties go to the smaller
/// (y, then x) corner. `None` on an empty list.
pub fn largest_region(regions: &[BBox]) -> Option<BBox> {
    regions
        .iter()
        .copied()
        .max_by(|a, b| {
            a.area()
                .cmp(&b.area())
                // Reversed so that max_by picks the smaller corner on ties.
                .then(b.y.cmp(&a.y))
                .then(b.x.cmp(&a.x))
        })
}

fn crop_rgb(frame: &Frame, bbox: &BBox) -> (Vec<u8>, usize, usize) {
    let fw = frame.width as usize;
    let (bw, bh) = (bbox.w as usize, bbox.h as usize);
    let mut out = Vec::with_capacity(bw * bh * 3);
    for y in 0..bh {
        let row = ((bbox.y as usize + y) * fw + bbox.x as usize) * 3;
        out.extend_from_slice(&frame.pixels[row..row + bw * 3]);
    }
    (out, bw, bh)
}

/// Builds the three input streams for a fixed-length fragment.
///
/// For each adjacent pair the dissimilarity map is computed at source
/// resolution; the largest change region is cropped from the later frame
/// (the whole later frame when nothing exceeds the threshold). Everything
/// is resized to `side x side` and pair streams are padded to `s`.
pub fn build_streams(seq: &FrameSequence, cfg: &SsimConfig, side: usize) -> Result<StreamBundle> {
    if seq.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: seq.len(),
        });
    }
    let (w, h) = (seq.width() as usize, seq.height() as usize);
    let originals: Vec<Vec<u8>> = seq
        .frames
        .iter()
        .map(|f| raster::resize_rgb(&f.pixels, w, h, side, side))
        .collect();
    let mut change_crops = Vec::with_capacity(seq.len());
    let mut sim_maps = Vec::with_capacity(seq.len());
    for pair in seq.frames.windows(2) {
        let map = ssim_map(&pair[0], &pair[1], cfg)?;
        let region = largest_region(&detect_change_regions(&map, cfg.region_threshold));
        let crop = match region {
            Some(bbox) => {
                let (buf, cw, ch) = crop_rgb(&pair[1], &bbox);
                raster::resize_rgb(&buf, cw, ch, side, side)
            }
            None => raster::resize_rgb(&pair[1].pixels, w, h, side, side),
        };
        change_crops.push(crop);
        sim_maps.push(raster::resize_gray(&map.values, w, h, side, side));
    }
    // Pad the S-1 pair streams to S by repeating the last element.
    change_crops.push(change_crops.last().unwrap().clone());
    sim_maps.push(sim_maps.last().unwrap().clone());
    Ok(StreamBundle {
        originals,
        change_crops,
        sim_maps,
        side,
    })
}

impl StreamBundle {
    /// Dumps all stream images as PNGs under `dir` for inspection.
    pub fn export(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let side = self.side as u32;
        for (i, img) in self.originals.iter().enumerate() {
            raster::write_rgb_png(&dir.join(format!("orig_{i:03}.png")), img, side, side)?;
        }
        for (i, img) in self.change_crops.iter().enumerate() {
            raster::write_rgb_png(&dir.join(format!("crop_{i:03}.png")), img, side, side)?;
        }
        for (i, map) in self.sim_maps.iter().enumerate() {
            raster::write_gray_png(&dir.join(format!("simmap_{i:03}.png")), map, side, side)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub fn frame_from_luma(vals: &[u8], w: u32, h: u32, index: usize) -> Frame {
        let pixels = vals.iter().flat_map(|&v| [v, v, v]).collect();
        Frame::new(w, h, pixels, index, 0)
    }

    fn solid(w: u32, h: u32, v: u8) -> Frame {
        frame_from_luma(&vec![v; (w * h) as usize], w, h, 0)
    }

    /// Brute-force windowed SSIM oracle: direct per-pixel loops with
    /// mirror indexing, independent of the integral-image path.
    pub fn ssim_oracle(a: &Frame, b: &Frame, cfg: &SsimConfig) -> Vec<f64> {
        let (w, h) = (a.width as usize, a.height as usize);
        let la = crate::raster::rgb_to_luma(&a.pixels);
        let lb = crate::raster::rgb_to_luma(&b.pixels);
        let r = cfg.window as isize / 2;
        let mut out = vec![0.0; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut sa = 0.0;
                let mut sb = 0.0;
                let mut saa = 0.0;
                let mut sbb = 0.0;
                let mut sab = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let sy = mirror(y + dy, h);
                        let sx = mirror(x + dx, w);
                        let va = la[sy * w + sx];
                        let vb = lb[sy * w + sx];
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                let n = (cfg.window * cfg.window) as f64;
                let (mu_a, mu_b) = (sa / n, sb / n);
                let var_a = saa / n - mu_a * mu_a;
                let var_b = sbb / n - mu_b * mu_b;
                let cov = sab / n - mu_a * mu_b;
                let ssim = ((2.0 * mu_a * mu_b + cfg.c1) * (2.0 * cov + cfg.c2))
                    / ((mu_a * mu_a + mu_b * mu_b + cfg.c1)
                        * (var_a + var_b + cfg.c2));
                out[y as usize * w + x as usize] = ((1.0 - ssim) / 2.0).clamp(0.0, 1.0);
            }
        }
        out
    }

    /// Scalar SSIM of two constant images, from the closed form.
    fn constant_ssim(va: f64, vb: f64, cfg: &SsimConfig) -> f64 {
        (2.0 * va * vb + cfg.c1) * cfg.c2 / ((va * va + vb * vb + cfg.c1) * cfg.c2)
    }

    #[test]
    fn identical_frames_give_zero_map() {
        let a = solid(16, 12, 77);
        let map = ssim_map(&a, &a.clone(), &SsimConfig::default()).unwrap();
        assert!(map.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn black_vs_white_matches_closed_form() {
        let cfg = SsimConfig::default();
        let a = solid(16, 16, 0);
        let b = solid(16, 16, 255);
        let map = ssim_map(&a, &b, &cfg).unwrap();
        let expect = ((1.0 - constant_ssim(0.0, 255.0, &cfg)) / 2.0).clamp(0.0, 1.0);
        // Closed form: ssim = c1 / (255^2 + c1), so the map sits at ~0.49995,
        // the ceiling of the (1 - ssim) / 2 mapping for non-negative signals.
        assert!((expect - 0.49995).abs() < 1e-4);
        for &v in &map.values {
            assert!((v as f64 - expect).abs() < 1e-6, "{v} vs {expect}");
        }
    }

    #[test]
    fn block_change_is_localized_to_dilated_block() {
        let cfg = SsimConfig::default();
        let w = 32usize;
        let a = solid(32, 32, 60);
        let mut vals = vec![60u8; w * w];
        for y in 10..20 {
            for x in 10..20 {
                vals[y * w + x] = 200;
            }
        }
        let b = frame_from_luma(&vals, 32, 32, 1);
        let map = ssim_map(&a, &b, &cfg).unwrap();
        let r = cfg.window / 2;
        for y in 0..w {
            for x in 0..w {
                let inside_dilated =
                    (10 - r..20 + r).contains(&x) && (10 - r..20 + r).contains(&y);
                let v = map.values[y * w + x];
                if !inside_dilated {
                    assert!(v.abs() < 1e-9, "unexpected response at ({x},{y}): {v}");
                }
            }
        }
        assert!(map.values[15 * w + 15] > 0.05);
    }

    #[test]
    fn ssim_matches_bruteforce_oracle_on_random_pairs() {
        let mut rng = 0x1234_5678_u64;
        let mut next = move || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 33) as u8
        };
        let cfg = SsimConfig::default();
        for _ in 0..4 {
            let a_vals: Vec<u8> = (0..32 * 32).map(|_| next()).collect();
            let b_vals: Vec<u8> = (0..32 * 32).map(|_| next()).collect();
            let a = frame_from_luma(&a_vals, 32, 32, 0);
            let b = frame_from_luma(&b_vals, 32, 32, 1);
            let map = ssim_map(&a, &b, &cfg).unwrap();
            let oracle = ssim_oracle(&a, &b, &cfg);
            for (i, (&got, &want)) in map.values.iter().zip(&oracle).enumerate() {
                assert!((got as f64 - want).abs() < 1e-6, "pixel {i}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let a = solid(8, 8, 0);
        let b = solid(9, 8, 0);
        assert!(ssim_map(&a, &b, &SsimConfig::default()).is_err());
    }

    fn map_from(vals: &[f32], w: u32, h: u32) -> SimilarityMap {
        SimilarityMap {
            width: w,
            height: h,
            values: vals.to_vec(),
            pair: (0, 1),
        }
    }

    /// Label-propagation connected-components oracle, 8-connectivity.
    pub fn regions_oracle(binary: &[bool], w: usize, h: usize) -> Vec<BBox> {
        let mut labels = vec![0usize; w * h];
        let mut next = 1usize;
        for start in 0..w * h {
            if !binary[start] || labels[start] != 0 {
                continue;
            }
            let label = next;
            next += 1;
            let mut queue = std::collections::VecDeque::new();
            labels[start] = label;
            queue.push_back(start);
            while let Some(p) = queue.pop_front() {
                let (px, py) = (p % w, p / w);
                for ny in py.saturating_sub(1)..=(py + 1).min(h - 1) {
                    for nx in px.saturating_sub(1)..=(px + 1).min(w - 1) {
                        let q = ny * w + nx;
                        if binary[q] && labels[q] == 0 {
                            labels[q] = label;
                            queue.push_back(q);
                        }
                    }
                }
            }
        }
        let mut boxes: Vec<Option<(usize, usize, usize, usize)>> = vec![None; next];
        for p in 0..w * h {
            if labels[p] != 0 {
                let (px, py) = (p % w, p / w);
                let e = boxes[labels[p]].get_or_insert((px, py, px, py));
                e.0 = e.0.min(px);
                e.1 = e.1.min(py);
                e.2 = e.2.max(px);
                e.3 = e.3.max(py);
            }
        }
        let mut out: Vec<BBox> = boxes
            .into_iter()
            .flatten()
            .map(|(x0, y0, x1, y1)| BBox {
                x: x0 as u32,
                y: y0 as u32,
                w: (x1 - x0 + 1) as u32,
                h: (y1 - y0 + 1) as u32,
            })
            .collect();
        out.sort_by_key(|b| (b.y, b.x, b.w, b.h));
        out
    }

    #[test]
    fn zero_map_has_no_regions() {
        let map = map_from(&vec![0.0; 64], 8, 8);
        assert!(detect_change_regions(&map, 0.05).is_empty());
    }

    #[test]
    fn two_disjoint_blobs_give_two_tight_boxes() {
        let mut vals = vec![0.0f32; 16 * 16];
        for y in 1..4 {
            for x in 1..5 {
                vals[y * 16 + x] = 0.8;
            }
        }
        for y in 9..12 {
            for x in 10..13 {
                vals[y * 16 + x] = 0.8;
            }
        }
        let map = map_from(&vals, 16, 16);
        let boxes = detect_change_regions(&map, 0.05);
        assert_eq!(boxes.len(), 2);
        assert_eq!(boxes[0], BBox { x: 1, y: 1, w: 4, h: 3 });
        assert_eq!(boxes[1], BBox { x: 10, y: 9, w: 3, h: 3 });
    }

    #[test]
    fn border_blob_stays_in_bounds() {
        let mut vals = vec![0.0f32; 8 * 8];
        vals[0] = 1.0;
        vals[1] = 1.0;
        vals[8] = 1.0;
        let map = map_from(&vals, 8, 8);
        let boxes = detect_change_regions(&map, 0.5);
        assert_eq!(boxes, vec![BBox { x: 0, y: 0, w: 2, h: 2 }]);
    }

    #[test]
    fn largest_region_prefers_area_then_corner() {
        assert_eq!(largest_region(&[]), None);
        let big = BBox { x: 0, y: 0, w: 10, h: 10 };
        let small = BBox { x: 50, y: 50, w: 5, h: 5 };
        assert_eq!(largest_region(&[small, big]), Some(big));
        let lower = BBox { x: 0, y: 20, w: 10, h: 10 };
        let upper = BBox { x: 0, y: 10, w: 10, h: 10 };
        assert_eq!(largest_region(&[lower, upper]), Some(upper));
    }

    #[test]
    fn build_streams_shapes_and_degenerate_pairs() {
        let s = 8;
        let frames: Vec<Frame> = (0..s).map(|i| {
            let mut f = solid(20, 20, 50);
            f.index = i;
            f
        }).collect();
        let seq = FrameSequence { frames, source_id: "x".into() };
        let bundle = build_streams(&seq, &SsimConfig::default(), 16).unwrap();
        assert_eq!(bundle.originals.len(), s);
        assert_eq!(bundle.change_crops.len(), s);
        assert_eq!(bundle.sim_maps.len(), s);
        assert!(bundle.originals.iter().all(|b| b.len() == 16 * 16 * 3));
        assert!(bundle.sim_maps.iter().all(|m| m.len() == 16 * 16));
        // Identical frames: all-zero maps, crops fall back to the full frame.
        assert!(bundle.sim_maps.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(bundle.change_crops[0], bundle.originals[1]);
    }

    #[test]
    fn pair_crop_frames_the_changed_block() {
        let cfg = SsimConfig::default();
        let w = 64usize;
        let a = solid(64, 64, 40);
        let mut vals = vec![40u8; w * w];
        for y in 24..36 {
            for x in 20..44 {
                vals[y * w + x] = 220;
            }
        }
        let b = frame_from_luma(&vals, 64, 64, 1);
        // Pixel-diff oracle bounding box of the change.
        let (ox0, oy0, ox1, oy1) = (20, 24, 43, 35);
        let map = ssim_map(&a, &b, &cfg).unwrap();
        let region = largest_region(&detect_change_regions(&map, cfg.region_threshold)).unwrap();
        let r = (cfg.window / 2) as i64;
        assert!((region.x as i64 - ox0 as i64).abs() <= r);
        assert!((region.y as i64 - oy0 as i64).abs() <= r);
        assert!(((region.x + region.w - 1) as i64 - ox1 as i64).abs() <= r);
        assert!(((region.y + region.h - 1) as i64 - oy1 as i64).abs() <= r);
    }

    proptest! {
        #[test]
        fn ssim_is_symmetric(seed in 0u64..200) {
            let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
            let mut next = move || {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                (s >> 24) as u8
            };
            let av: Vec<u8> = (0..12 * 12).map(|_| next()).collect();
            let bv: Vec<u8> = (0..12 * 12).map(|_| next()).collect();
            let a = frame_from_luma(&av, 12, 12, 0);
            let b = frame_from_luma(&bv, 12, 12, 1);
            let cfg = SsimConfig::default();
            let ab = ssim_map(&a, &b, &cfg).unwrap();
            let ba = ssim_map(&b, &a, &cfg).unwrap();
            prop_assert_eq!(ab.values, ba.values);
        }

        #[test]
        fn region_boxes_always_satisfy_invariants(
            vals in proptest::collection::vec(0.0f32..1.0, 1..256),
            w in 1u32..16,
        ) {
            let h = (vals.len() as u32).div_ceil(w).max(1);
            let mut padded = vals.clone();
            padded.resize((w * h) as usize, 0.0);
            let map = map_from(&padded, w, h);
            for b in detect_change_regions(&map, 0.5) {
                prop_assert!(b.w >= 1 && b.h >= 1);
                prop_assert!(b.x + b.w <= w);
                prop_assert!(b.y + b.h <= h);
            }
        }

        #[test]
        fn regions_match_floodfill_oracle(seed in 0u64..100) {
            let mut s = seed.wrapping_mul(0x2545F4914F6CDD1D).wrapping_add(7);
            let mut next = move || {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                s
            };
            let w = 4 + (next() % 29) as usize;
            let h = 4 + (next() % 29) as usize;
            let binary: Vec<bool> = (0..w * h).map(|_| next() % 100 < 35).collect();
            let vals: Vec<f32> = binary.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let map = map_from(&vals, w as u32, h as u32);
            let mut got = detect_change_regions(&map, 0.5);
            got.sort_by_key(|b| (b.y, b.x, b.w, b.h));
            let want = regions_oracle(&binary, w, h);
            prop_assert_eq!(got, want);
        }
    }
}

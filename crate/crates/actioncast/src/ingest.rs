//! Frame ingestion: decode a screencast source into a deduplicated,
//! fixed-length frame sequence.
//!
//! A source is either a directory of numbered PNG/PPM images (zero-padded
//! filenames, sorted lexicographically) or a single uncompressed planar-RGB
//! container file (see [`container`]). Video codecs are out of scope; decode
//! with external tools first.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One RGB frame. `index` is the ordinal position in the source,
/// `timestamp_ms` is derived from the sampling rate.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    /// Row-major interleaved RGB, 8 bits per channel.
    pub pixels: Vec<u8>,
    pub index: usize,
    pub timestamp_ms: u64,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, index: usize, timestamp_ms: u64) -> Self {
        assert!(width >= 1 && height >= 1, "empty frame");
        assert_eq!(
            pixels.len(),
            width as usize * height as usize * 3,
            "pixel buffer length"
        );
        Frame {
            width,
            height,
            pixels,
            index,
            timestamp_ms,
        }
    }
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("index", &self.index)
            .field("timestamp_ms", &self.timestamp_ms)
            .finish()
    }
}

/// An ordered frame sequence from one source. All frames share dimensions
/// and carry strictly increasing source indices.
#[derive(Clone, Debug)]
pub struct FrameSequence {
    pub frames: Vec<Frame>,
    pub source_id: String,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.frames.first().map(|f| f.width).unwrap_or(0)
    }

    pub fn height(&self) -> u32 {
        self.frames.first().map(|f| f.height).unwrap_or(0)
    }
}

/// Sampling parameters for ingestion and length normalization.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SamplingConfig {
    /// Frames per second the source was sampled at.
    pub fps: f64,
    /// Fixed sequence length the model consumes.
    pub target_length: usize,
    /// Seed for the normalization RNG.
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            fps: 5.0,
            target_length: 8,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fps <= 0.0 {
            return Err(Error::InvalidConfig("fps must be > 0".into()));
        }
        if self.target_length < 2 {
            return Err(Error::InvalidConfig("target_length must be >= 2".into()));
        }
        Ok(())
    }
}

/// Loads a frame sequence from a directory of images or a container file.
///
/// Frames are ordered by filename (directories) or container order;
/// timestamps are `index * 1000 / fps`.
pub fn load_frames(source: &Path, cfg: &SamplingConfig) -> Result<FrameSequence> {
    cfg.validate()?;
    if !source.exists() {
        return Err(Error::NotFound(source.to_path_buf()));
    }
    let source_id = source
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| source.to_string_lossy().into_owned());
    let raw = if source.is_dir() {
        load_image_dir(source)?
    } else {
        let bytes = std::fs::read(source).map_err(|e| Error::io(source, e))?;
        container::decode(&bytes).map_err(|e| Error::Format(format!("{}: {e}", source.display())))?
    };
    if raw.is_empty() {
        return Err(Error::NotFound(source.to_path_buf()));
    }
    let frames = raw
        .into_iter()
        .enumerate()
        .map(|(i, (w, h, pixels))| Frame::new(w, h, pixels, i, timestamp_ms(i, cfg.fps)))
        .collect();
    Ok(FrameSequence { frames, source_id })
}

fn timestamp_ms(index: usize, fps: f64) -> u64 {
    (index as f64 * 1000.0 / fps).round() as u64
}

fn load_image_dir(dir: &Path) -> Result<Vec<(u32, u32, Vec<u8>)>> {
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("png") | Some("ppm") | Some("pnm")
            )
        })
        .collect();
    names.sort();
    let mut out = Vec::with_capacity(names.len());
    let mut dims: Option<(u32, u32)> = None;
    for path in &names {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?
            .into_rgb8();
        let (w, h) = img.dimensions();
        match dims {
            None => dims = Some((w, h)),
            Some((ew, eh)) if (ew, eh) != (w, h) => {
                return Err(Error::DimensionMismatch {
                    file: path.clone(),
                    expected_w: ew,
                    expected_h: eh,
                    got_w: w,
                    got_h: h,
                });
            }
            _ => {}
        }
        out.push((w, h, img.into_raw()));
    }
    Ok(out)
}

/// Removes adjacently-identical frames, keeping the first of each run.
/// Identity is exact byte equality of the pixel buffers. Source indices
/// and timestamps are preserved.
pub fn dedup_adjacent(seq: &FrameSequence) -> FrameSequence {
    let mut frames: Vec<Frame> = Vec::with_capacity(seq.frames.len());
    for f in &seq.frames {
        if frames.last().map(|l: &Frame| l.pixels == f.pixels) != Some(true) {
            frames.push(f.clone());
        }
    }
    FrameSequence {
        frames,
        source_id: seq.source_id.clone(),
    }
}

/// Normalizes a sequence to exactly `target` frames.
///
/// The first and last frames are always kept. When the input is longer,
/// `target - 2` interior frames are drawn uniformly without replacement;
/// when shorter, `target - len` duplicates are drawn uniformly with
/// replacement and merged in source order. Deterministic per seed.
pub fn normalize_length(seq: &FrameSequence, target: usize, seed: u64) -> Result<FrameSequence> {
    let m = seq.frames.len();
    if m < 2 {
        return Err(Error::TooShort { need: 2, got: m });
    }
    assert!(target >= 2, "target length must be >= 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Positions into seq.frames of the output, non-decreasing.
    let positions: Vec<usize> = if target == m {
        (0..m).collect()
    } else if target < m {
        let mut interior = sample_without_replacement(&mut rng, 1..m - 1, target - 2);
        interior.sort_unstable();
        let mut pos = Vec::with_capacity(target);
        pos.push(0);
        pos.extend(interior);
        pos.push(m - 1);
        pos
    } else {
        let mut dup: Vec<usize> = (0..target - m).map(|_| rng.gen_range(0..m)).collect();
        dup.sort_unstable();
        let mut pos: Vec<usize> = (0..m).collect();
        pos.extend(dup);
        pos.sort_unstable();
        pos
    };
    let frames = positions.iter().map(|&p| seq.frames[p].clone()).collect();
    Ok(FrameSequence {
        frames,
        source_id: seq.source_id.clone(),
    })
}

fn sample_without_replacement(
    rng: &mut ChaCha8Rng,
    range: std::ops::Range<usize>,
    k: usize,
) -> Vec<usize> {
    let mut pool: Vec<usize> = range.collect();
    assert!(k <= pool.len(), "sample larger than pool");
    // Partial Fisher-Yates: the first k slots end up being the sample.
    for i in 0..k {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Uncompressed planar-RGB frame container.
///
/// Layout (all integers little-endian):
/// magic `b"RGBF"`, u32 version (1), u32 width, u32 height, u32 frame
/// count, then per frame the full R plane, G plane and B plane.
pub mod container {
    pub const MAGIC: &[u8; 4] = b"RGBF";
    pub const VERSION: u32 = 1;

    /// Hard cap so corrupt headers cannot ask for absurd allocations.
    const MAX_PIXELS: u64 = 1 << 26;
    const MAX_FRAMES: u64 = 1 << 16;

    pub fn encode(frames: &[(u32, u32, Vec<u8>)]) -> Vec<u8> {
        let (w, h) = frames.first().map(|f| (f.0, f.1)).unwrap_or((0, 0));
        let plane = w as usize * h as usize;
        let mut out = Vec::with_capacity(20 + frames.len() * plane * 3);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&w.to_le_bytes());
        out.extend_from_slice(&h.to_le_bytes());
        out.extend_from_slice(&(frames.len() as u32).to_le_bytes());
        for (fw, fh, pixels) in frames {
            assert_eq!((*fw, *fh), (w, h), "mixed dimensions in container");
            assert_eq!(pixels.len(), plane * 3);
            for c in 0..3 {
                out.extend(pixels.chunks_exact(3).map(|p| p[c]));
            }
        }
        out
    }

    /// Decodes a container buffer to interleaved-RGB frames.
    pub fn decode(bytes: &[u8]) -> Result<Vec<(u32, u32, Vec<u8>)>, String> {
        let take = |off: usize| -> Result<u32, String> {
            bytes
                .get(off..off + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| "truncated header".to_string())
        };
        if bytes.get(..4) != Some(MAGIC.as_slice()) {
            return Err("bad magic".into());
        }
        let version = take(4)?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let w = take(8)?;
        let h = take(12)?;
        let n = take(16)?;
        if w == 0 || h == 0 {
            return Err("zero dimensions".into());
        }
        if w as u64 * h as u64 > MAX_PIXELS || n as u64 > MAX_FRAMES {
            return Err("header exceeds size limits".into());
        }
        let plane = w as usize * h as usize;
        let expect = 20usize + n as usize * plane * 3;
        if bytes.len() != expect {
            return Err(format!("payload length {} != expected {expect}", bytes.len()));
        }
        let mut frames = Vec::with_capacity(n as usize);
        for i in 0..n as usize {
            let base = 20 + i * plane * 3;
            let mut pixels = vec![0u8; plane * 3];
            for c in 0..3 {
                let src = &bytes[base + c * plane..base + (c + 1) * plane];
                for (p, &v) in src.iter().enumerate() {
                    pixels[p * 3 + c] = v;
                }
            }
            frames.push((w, h, pixels));
        }
        Ok(frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn solid(w: u32, h: u32, v: u8, index: usize) -> Frame {
        Frame::new(w, h, vec![v; (w * h * 3) as usize], index, index as u64 * 200)
    }

    fn seq_of(values: &[u8]) -> FrameSequence {
        FrameSequence {
            frames: values
                .iter()
                .enumerate()
                .map(|(i, &v)| solid(4, 4, v, i))
                .collect(),
            source_id: "test".into(),
        }
    }

    #[test]
    fn load_directory_assigns_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3 {
            let img = image::RgbImage::from_pixel(64, 64, image::Rgb([i as u8 * 10, 0, 0]));
            img.save(dir.path().join(format!("{i:04}.png"))).unwrap();
        }
        let seq = load_frames(dir.path(), &SamplingConfig::default()).unwrap();
        assert_eq!(seq.len(), 3);
        let ts: Vec<u64> = seq.frames.iter().map(|f| f.timestamp_ms).collect();
        assert_eq!(ts, vec![0, 200, 400]);
        assert_eq!(seq.frames[1].pixels[0], 10);
    }

    #[test]
    fn load_single_frame_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        image::RgbImage::new(8, 8)
            .save(dir.path().join("0000.png"))
            .unwrap();
        let seq = load_frames(dir.path(), &SamplingConfig::default()).unwrap();
        assert_eq!(seq.len(), 1);
    }

    #[test]
    fn load_mixed_dimensions_is_error() {
        let dir = tempfile::tempdir().unwrap();
        image::RgbImage::new(64, 64)
            .save(dir.path().join("0000.png"))
            .unwrap();
        image::RgbImage::new(32, 32)
            .save(dir.path().join("0001.png"))
            .unwrap();
        let err = load_frames(dir.path(), &SamplingConfig::default()).unwrap_err();
        match err {
            Error::DimensionMismatch { file, got_w, .. } => {
                assert!(file.ends_with("0001.png"));
                assert_eq!(got_w, 32);
            }
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn load_missing_source_is_not_found() {
        let err = load_frames(Path::new("/nonexistent/xyz"), &SamplingConfig::default());
        assert!(matches!(err, Err(Error::NotFound(_))));
    }

    #[test]
    fn dedup_collapses_runs() {
        let out = dedup_adjacent(&seq_of(&[1, 1, 2, 2, 2, 3]));
        let vals: Vec<u8> = out.frames.iter().map(|f| f.pixels[0]).collect();
        assert_eq!(vals, vec![1, 2, 3]);
        // First occurrence of each run is kept.
        let idx: Vec<usize> = out.frames.iter().map(|f| f.index).collect();
        assert_eq!(idx, vec![0, 2, 5]);
    }

    #[test]
    fn dedup_keeps_non_adjacent_repeats() {
        let out = dedup_adjacent(&seq_of(&[1, 2, 1]));
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn normalize_identity_when_lengths_match() {
        let seq = seq_of(&[0, 1, 2, 3, 4, 5, 6, 7]);
        let out = normalize_length(&seq, 8, 42).unwrap();
        let idx: Vec<usize> = out.frames.iter().map(|f| f.index).collect();
        assert_eq!(idx, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn normalize_downsample_keeps_endpoints_strictly_increasing() {
        let seq = seq_of(&(0..20).map(|i| i as u8).collect::<Vec<_>>());
        let out = normalize_length(&seq, 8, 7).unwrap();
        assert_eq!(out.len(), 8);
        let idx: Vec<usize> = out.frames.iter().map(|f| f.index).collect();
        assert_eq!(idx[0], 0);
        assert_eq!(idx[7], 19);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn normalize_upsample_two_frames_forms_two_blocks() {
        let seq = seq_of(&[10, 20]);
        let out = normalize_length(&seq, 8, 3).unwrap();
        assert_eq!(out.len(), 8);
        let vals: Vec<u8> = out.frames.iter().map(|f| f.pixels[0]).collect();
        assert!(vals.iter().all(|&v| v == 10 || v == 20));
        let first_20 = vals.iter().position(|&v| v == 20).unwrap();
        assert!(vals[first_20..].iter().all(|&v| v == 20), "blocks are contiguous");
        assert_eq!(vals[0], 10);
        assert_eq!(vals[7], 20);
    }

    #[test]
    fn normalize_too_short_is_error() {
        let seq = seq_of(&[1]);
        assert!(matches!(
            normalize_length(&seq, 8, 0),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn container_round_trips() {
        let frames: Vec<(u32, u32, Vec<u8>)> = (0..3)
            .map(|i| (5, 4, (0..60).map(|p| (p + i * 7) as u8).collect()))
            .collect();
        let bytes = container::encode(&frames);
        assert_eq!(container::decode(&bytes).unwrap(), frames);
    }

    #[test]
    fn container_rejects_garbage() {
        assert!(container::decode(b"nope").is_err());
        let mut bytes = container::encode(&[(2, 2, vec![0; 12])]);
        bytes.truncate(bytes.len() - 1);
        assert!(container::decode(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn dedup_is_idempotent(values in proptest::collection::vec(0u8..4, 1..40)) {
            let once = dedup_adjacent(&seq_of(&values));
            let twice = dedup_adjacent(&once);
            let a: Vec<usize> = once.frames.iter().map(|f| f.index).collect();
            let b: Vec<usize> = twice.frames.iter().map(|f| f.index).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn normalize_is_deterministic_and_ordered(
            m in 2usize..30, s in 2usize..20, seed in 0u64..1000
        ) {
            let seq = seq_of(&(0..m).map(|i| i as u8).collect::<Vec<_>>());
            let a = normalize_length(&seq, s, seed).unwrap();
            let b = normalize_length(&seq, s, seed).unwrap();
            let ai: Vec<usize> = a.frames.iter().map(|f| f.index).collect();
            let bi: Vec<usize> = b.frames.iter().map(|f| f.index).collect();
            prop_assert_eq!(&ai, &bi);
            prop_assert_eq!(ai.len(), s);
            prop_assert_eq!(ai[0], 0);
            prop_assert_eq!(*ai.last().unwrap(), m - 1);
            prop_assert!(ai.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

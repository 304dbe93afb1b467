//! Heuristic temporal segmentation: split a recording into per-action
//! fragments wherever the mean frame-pair dissimilarity rises above a
//! threshold and stays quiet again afterwards.

use crate::error::{Error, Result};
use crate::ingest::FrameSequence;
use crate::vision::{ssim_map, SsimConfig};

/// One contiguous frame span covering a single user action.
/// Indices are positions into the sequence handed to [`segment`].
#[derive(Clone, Debug)]
pub struct ActionFragment {
    pub start_index: usize,
    pub end_index: usize,
    pub frames: FrameSequence,
    /// Per-pair mean dissimilarity inside the fragment.
    pub mean_dissim_trace: Vec<f64>,
}

impl ActionFragment {
    pub fn len(&self) -> usize {
        self.end_index - self.start_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SegmenterConfig {
    /// Mean dissimilarity above which a pair counts as active.
    pub activity_threshold: f64,
    /// Consecutive quiet pairs that end a fragment.
    pub quiet_pairs: usize,
    /// Minimum fragment length in frames.
    pub min_frames: usize,
    /// Fragments are split once they reach this many frames.
    pub max_frames: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            activity_threshold: 0.01,
            quiet_pairs: 2,
            min_frames: 2,
            max_frames: 50,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.activity_threshold) {
            return Err(Error::InvalidConfig("activity_threshold must be in [0,1]".into()));
        }
        if self.min_frames < 2 {
            return Err(Error::InvalidConfig("min_frames must be >= 2".into()));
        }
        if self.quiet_pairs == 0 {
            return Err(Error::InvalidConfig("quiet_pairs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean dissimilarity of every adjacent frame pair; length is `len - 1`.
pub fn dissim_series(seq: &FrameSequence, cfg: &SsimConfig) -> Result<Vec<f64>> {
    if seq.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: seq.len(),
        });
    }
    seq.frames
        .windows(2)
        .map(|pair| ssim_map(&pair[0], &pair[1], cfg).map(|m| m.mean()))
        .collect()
}

/// Splits a sequence into action fragments.
///
/// A fragment opens at the first pair whose dissimilarity exceeds the
/// activity threshold and closes after `quiet_pairs` consecutive quiet
/// pairs; the end frame is the first stable frame (the second frame of
/// the first quiet pair), so fragments end on a settled screen state.
/// Fragments longer than `max_frames` are split.
pub fn segment(
    seq: &FrameSequence,
    scfg: &SegmenterConfig,
    vcfg: &SsimConfig,
) -> Result<Vec<ActionFragment>> {
    scfg.validate()?;
    let series = dissim_series(seq, vcfg)?;
    Ok(segment_series(&series, scfg)
        .into_iter()
        .map(|(start, end)| make_fragment(seq, &series, start, end))
        .collect())
}

/// The boundary state machine on a precomputed dissimilarity series.
/// Exposed separately so synthetic benchmarks can drive it directly.
pub fn segment_series(series: &[f64], cfg: &SegmenterConfig) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    let mut quiet_run = 0usize;
    for (i, &v) in series.iter().enumerate() {
        let active = v > cfg.activity_threshold;
        match open {
            None => {
                if active {
                    open = Some(i);
                    quiet_run = 0;
                }
            }
            Some(start) => {
                if active {
                    quiet_run = 0;
                    // Pair i spans frames i..=i+1; cap the fragment length.
                    if i + 1 - start + 1 > cfg.max_frames {
                        out.push((start, i));
                        open = Some(i + 1);
                    }
                } else {
                    quiet_run += 1;
                    if quiet_run == cfg.quiet_pairs {
                        let first_quiet = i + 1 - cfg.quiet_pairs;
                        out.push((start, first_quiet + 1));
                        open = None;
                        quiet_run = 0;
                    }
                }
            }
        }
    }
    if let Some(start) = open {
        let end = if quiet_run > 0 {
            series.len() - quiet_run + 1
        } else {
            series.len()
        };
        if end > start {
            out.push((start, end));
        }
    }
    out.retain(|(s, e)| e - s + 1 >= cfg.min_frames);
    out
}

fn make_fragment(
    seq: &FrameSequence,
    series: &[f64],
    start: usize,
    end: usize,
) -> ActionFragment {
    ActionFragment {
        start_index: start,
        end_index: end,
        frames: FrameSequence {
            frames: seq.frames[start..=end].to_vec(),
            source_id: format!("{}[{start}..{end}]", seq.source_id),
        },
        mean_dissim_trace: series[start..end].to_vec(),
    }
}

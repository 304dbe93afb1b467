//! Classification and unigram captioning metrics, dataset splitting and
//! report formatting.
//!
//! Captioning scores are case-insensitive and unigram-only (the location
//! phrases this pipeline produces are two or three words long). METEOR is
//! restricted to exact matches; there is no stemming or synonym table.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub total: usize,
}

/// Per-class precision/recall/F1 plus accuracy. Macro averages are
/// unweighted over the classes present in the labels.
pub fn classification_report(
    predictions: &[usize],
    labels: &[usize],
    k: usize,
) -> Result<ClassificationReport> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "predictions {} vs labels {}",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    let mut support = vec![0usize; k];
    let mut correct = 0usize;
    for (&p, &l) in predictions.iter().zip(labels) {
        if l >= k {
            return Err(Error::LabelOutOfRange(format!("label {l} >= {k}")));
        }
        support[l] += 1;
        if p == l {
            tp[l] += 1;
            correct += 1;
        } else {
            if p < k {
                fp[p] += 1;
            }
            fn_[l] += 1;
        }
    }
    let mut per_class = Vec::with_capacity(k);
    let (mut sp, mut sr, mut sf, mut present) = (0.0, 0.0, 0.0, 0usize);
    for c in 0..k {
        let precision = if tp[c] + fp[c] == 0 {
            0.0
        } else {
            tp[c] as f64 / (tp[c] + fp[c]) as f64
        };
        let recall = if tp[c] + fn_[c] == 0 {
            0.0
        } else {
            tp[c] as f64 / (tp[c] + fn_[c]) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if support[c] > 0 {
            sp += precision;
            sr += recall;
            sf += f1;
            present += 1;
        }
        per_class.push(ClassMetrics {
            class: c,
            precision,
            recall,
            f1,
            support: support[c],
        });
    }
    let denom = present.max(1) as f64;
    Ok(ClassificationReport {
        per_class,
        macro_precision: sp / denom,
        macro_recall: sr / denom,
        macro_f1: sf / denom,
        accuracy: correct as f64 / predictions.len() as f64,
        total: predictions.len(),
    })
}

impl ClassificationReport {
    /// Aligned-column table with per-class rows and an average row.
    pub fn table(&self, class_names: &[&str]) -> String {
        let mut out = String::new();
        let width = class_names
            .iter()
            .map(|n| n.len())
            .max()
            .unwrap_or(5)
            .max("average".len());
        out.push_str(&format!(
            "{:width$}  {:>9}  {:>9}  {:>9}  {:>7}\n",
            "class", "precision", "recall", "f1", "support"
        ));
        for m in &self.per_class {
            let name = class_names.get(m.class).copied().unwrap_or("?");
            out.push_str(&format!(
                "{name:width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}\n",
                m.precision, m.recall, m.f1, m.support
            ));
        }
        out.push_str(&format!(
            "{:width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}\n",
            "average", self.macro_precision, self.macro_recall, self.macro_f1, self.total
        ));
        out.push_str(&format!("accuracy {:.4}\n", self.accuracy));
        out
    }
}

#[derive(Clone, Copy, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct CaptionScores {
    pub bleu1: f64,
    pub rouge1: f64,
    pub meteor: f64,
    pub cider: f64,
}

fn lower(tokens: &[&str]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

fn clipped_overlap(cand: &[String], reference: &[String]) -> usize {
    let rc = counts(reference);
    let cc = counts(cand);
    cc.iter()
        .map(|(tok, &n)| n.min(rc.get(tok).copied().unwrap_or(0)))
        .sum()
}

/// Unigram BLEU: clipped precision times the brevity penalty
/// `min(1, exp(1 - |ref| / |cand|))`.
pub fn bleu1(candidate: &[&str], reference: &[&str]) -> f64 {
    let cand = lower(candidate);
    let reference = lower(reference);
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let precision = clipped_overlap(&cand, &reference) as f64 / cand.len() as f64;
    let bp = (1.0 - reference.len() as f64 / cand.len() as f64).exp().min(1.0);
    precision * bp
}

/// Unigram ROUGE: clipped recall.
pub fn rouge1(candidate: &[&str], reference: &[&str]) -> f64 {
    let cand = lower(candidate);
    let reference = lower(reference);
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    clipped_overlap(&cand, &reference) as f64 / reference.len() as f64
}

/// Exact-match unigram METEOR:
/// `F = 10PR / (R + 9P)`, penalty `0.5 * (chunks / matches)^3`,
/// score `F * (1 - penalty)`. The alignment maximizes matches and, among
/// those, minimizes chunks.
pub fn meteor1(candidate: &[&str], reference: &[&str]) -> f64 {
    let cand = lower(candidate);
    let reference = lower(reference);
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let (m, chunks) = best_alignment(&cand, &reference);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    f * (1.0 - penalty)
}

/// One-to-one alignment search: maximum matches first, fewest chunks
/// second. Phrases here are tiny, so plain recursion over candidate
/// positions is fine.
fn best_alignment(cand: &[String], reference: &[String]) -> (usize, usize) {
    fn go(
        pos: usize,
        cand: &[String],
        reference: &[String],
        used: &mut Vec<bool>,
        prev_ref: Option<usize>,
        matches: usize,
        chunks: usize,
        best: &mut (usize, usize),
    ) {
        if pos == cand.len() {
            if matches > best.0 || (matches == best.0 && chunks < best.1) {
                *best = (matches, chunks);
            }
            return;
        }
        // Option 1: leave cand[pos] unmatched (breaks any open chunk).
        go(pos + 1, cand, reference, used, None, matches, chunks, best);
        // Option 2: match cand[pos] to each free identical reference token.
        for r in 0..reference.len() {
            if !used[r] && reference[r] == cand[pos] {
                let contiguous = r > 0 && prev_ref == Some(r - 1);
                used[r] = true;
                go(
                    pos + 1,
                    cand,
                    reference,
                    used,
                    Some(r),
                    matches + 1,
                    chunks + usize::from(!contiguous),
                    best,
                );
                used[r] = false;
            }
        }
    }
    let mut best = (0, usize::MAX);
    let mut used = vec![false; reference.len()];
    go(0, cand, reference, &mut used, None, 0, 0, &mut best);
    if best.0 == 0 {
        (0, 0)
    } else {
        best
    }
}

/// Unigram CIDEr: mean over pairs of `10 * cosine(tfidf(cand), tfidf(ref))`
/// with `tf = count / len` and `idf = ln(N / (1 + df))` over the corpus of
/// references.
pub fn cider1(candidates: &[Vec<&str>], references: &[Vec<&str>], corpus: &[Vec<&str>]) -> f64 {
    assert_eq!(candidates.len(), references.len(), "cider pair count");
    if candidates.is_empty() || corpus.is_empty() {
        return 0.0;
    }
    let n = corpus.len() as f64;
    let mut df: HashMap<String, usize> = HashMap::new();
    for doc in corpus {
        let doc = lower(doc);
        let mut seen: Vec<&str> = doc.iter().map(|s| s.as_str()).collect();
        seen.sort_unstable();
        seen.dedup();
        for tok in seen {
            *df.entry(tok.to_string()).or_insert(0) += 1;
        }
    }
    let idf = |tok: &str| -> f64 {
        let d = df.get(tok).copied().unwrap_or(0) as f64;
        (n / (1.0 + d)).ln()
    };
    let tfidf = |tokens: &[String]| -> HashMap<String, f64> {
        let len = tokens.len() as f64;
        let mut v = HashMap::new();
        for (tok, count) in counts(tokens) {
            v.insert(tok.to_string(), count as f64 / len * idf(tok));
        }
        v
    };
    let mut total = 0.0;
    for (cand, reference) in candidates.iter().zip(references) {
        let cand = lower(cand);
        let reference = lower(reference);
        if cand.is_empty() || reference.is_empty() {
            continue;
        }
        let vc = tfidf(&cand);
        let vr = tfidf(&reference);
        let dot: f64 = vc
            .iter()
            .filter_map(|(t, a)| vr.get(t).map(|b| a * b))
            .sum();
        let nc: f64 = vc.values().map(|v| v * v).sum::<f64>().sqrt();
        let nr: f64 = vr.values().map(|v| v * v).sum::<f64>().sqrt();
        if nc > 0.0 && nr > 0.0 {
            total += 10.0 * dot / (nc * nr);
        }
    }
    total / candidates.len() as f64
}

/// `k` disjoint index folds covering `0..n`, sizes differing by at most
/// one, shuffled deterministically by seed.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("fold count {k} for {n} samples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    Ok(folds)
}

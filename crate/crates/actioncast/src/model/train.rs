//! Dataset loading, training orchestration (all three modes), and
//! evaluation over classification and captioning metrics.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{classification_report, kfold_split, CaptionScores, ClassificationReport};
use crate::ingest::{dedup_adjacent, normalize_length, SamplingConfig};
use crate::model::net::{sample_backward, ActionModel, Prediction, Sample, StreamTensors};
use crate::model::vocab::Vocabulary;
use crate::model::{ModelMeta, StreamKind, StructuredAction, TrainMode};
use crate::nn::{Adam, ParamStore};
use crate::vision::{build_streams, SsimConfig};

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub streams: Vec<StreamKind>,
    pub epochs: usize,
    pub folds: usize,
    /// Train fraction for the single holdout split.
    pub split: f64,
    pub max_len: usize,
    pub side: usize,
    /// Normalized fragment length fed to the encoders.
    pub s: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Worker threads for per-sample gradient computation. Gradients are
    /// merged in sample order, so results are identical for any value.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Multitask,
            streams: StreamKind::ALL.to_vec(),
            epochs: 10,
            folds: 5,
            split: 0.8,
            max_len: 6,
            side: 64,
            s: 8,
            batch_size: 8,
            lr: 1e-3,
            seed: 0,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.streams.is_empty() {
            return Err(Error::EmptyStreams);
        }
        if !(0.0..1.0).contains(&self.split) || self.split == 0.0 {
            return Err(Error::InvalidConfig("split must be in (0,1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One loaded fragment: label plus precomputed stream tensors.
#[derive(Clone, Debug)]
pub struct DatasetSample {
    pub id: String,
    pub action: StructuredAction,
    pub streams: StreamTensors<f32>,
}

/// Loads every manifest fragment: decode frames, drop duplicate adjacent
/// frames, normalize to `s` frames, build the three streams at `side`.
pub fn load_dataset(manifest: &Path, cfg: &TrainConfig) -> Result<Vec<DatasetSample>> {
    let entries = crate::synth::read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let vcfg = SsimConfig::default();
    entries
        .par_iter()
        .enumerate()
        .map(|(i, entry)| {
            let action = entry.action()?;
            let dir = base.join(&entry.frame_dir);
            let seq = crate::ingest::load_frames(
                &dir,
                &SamplingConfig {
                    fps: 5.0,
                    target_length: cfg.s,
                    seed: cfg.seed,
                },
            )?;
            let seq = dedup_adjacent(&seq);
            let seq = normalize_length(&seq, cfg.s, cfg.seed ^ (i as u64).wrapping_mul(0x9E37))?;
            let bundle = build_streams(&seq, &vcfg, cfg.side)?;
            Ok(DatasetSample {
                id: entry.id.clone(),
                action,
                streams: StreamTensors::from_bundle(&bundle),
            })
        })
        .collect()
}

/// Sentence form for the unstructured captioning baseline:
/// command words + widget word + location words.
fn sentence_words(action: &StructuredAction) -> Vec<String> {
    let mut words = action.command.words();
    words.push(action.widget.word());
    words.extend(action.location.iter().cloned());
    words
}

fn build_vocab(dataset: &[DatasetSample], idx: &[usize], mode: TrainMode) -> Vocabulary {
    let mut phrases: Vec<Vec<String>> = idx
        .iter()
        .map(|&i| dataset[i].action.location.clone())
        .collect();
    if mode == TrainMode::UnsentGen {
        for c in crate::model::CommandClass::ALL {
            phrases.push(c.words());
        }
        for w in crate::model::WidgetClass::ALL {
            phrases.push(vec![w.word()]);
        }
    }
    Vocabulary::build(phrases.iter().map(|p| p.as_slice()))
}

fn make_sample(meta: &ModelMeta, ds: &DatasetSample) -> Sample<f32> {
    Sample {
        streams: ds.streams.clone(),
        command: ds.action.command.id(),
        widget: ds.action.widget.id(),
        location_ids: meta.vocab.encode_target(&ds.action.location, meta.max_len),
        sentence_ids: meta
            .vocab
            .encode_target(&sentence_words(&ds.action), meta.max_len + 3),
    }
}

/// Per-sample gradients computed on store clones and merged in sample
/// order, so the result is bitwise independent of worker count.
fn batch_step(
    meta: &ModelMeta,
    store: &mut ParamStore<f32>,
    batch: &[Sample<f32>],
    pool: Option<&rayon::ThreadPool>,
) -> f64 {
    store.zero_grads();
    let scale = 1.0 / batch.len() as f32;
    let run = |sample: &Sample<f32>, base: &ParamStore<f32>| {
        let mut clone = base.clone();
        let loss = sample_backward(meta, &mut clone, sample, scale);
        (loss, clone)
    };
    let results: Vec<(f32, ParamStore<f32>)> = match pool {
        Some(p) if batch.len() > 1 => {
            let base = &*store;
            p.install(|| batch.par_iter().map(|s| run(s, base)).collect())
        }
        _ => batch.iter().map(|s| run(s, store)).collect(),
    };
    let mut total = 0.0f64;
    for (loss, clone) in &results {
        store.merge_grads(clone);
        total += *loss as f64;
    }
    total * scale as f64
}

pub struct TrainOutcome {
    pub model: ActionModel<f32>,
    pub epoch_losses: Vec<f64>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Trains on the given indices; the vocabulary is built from those
/// (training) samples only.
pub fn train_on(
    dataset: &[DatasetSample],
    train_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<(ActionModel<f32>, Vec<f64>)> {
    cfg.validate()?;
    if train_idx.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let vocab = build_vocab(dataset, train_idx, cfg.mode);
    let mut meta = ModelMeta::new(cfg.mode, &cfg.streams, cfg.side, cfg.s, vocab, cfg.seed)?;
    meta.max_len = cfg.max_len;
    let mut model = ActionModel::<f32>::new(meta);
    let samples: Vec<Sample<f32>> = train_idx
        .iter()
        .map(|&i| make_sample(&model.meta, &dataset[i]))
        .collect();

    let pool = (cfg.jobs > 1)
        .then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.jobs)
                .build()
                .expect("worker pool")
        });

    // Independent mode steps each task's disjoint parameters with its own
    // optimizer state; the other modes use a single optimizer.
    let mut optimizers: Vec<(Adam<f32>, Box<dyn Fn(&str) -> bool>)> = match cfg.mode {
        TrainMode::Independent => vec![
            (Adam::new(cfg.lr), Box::new(|n: &str| n.starts_with("cmd."))),
            (Adam::new(cfg.lr), Box::new(|n: &str| n.starts_with("wid."))),
            (Adam::new(cfg.lr), Box::new(|n: &str| n.starts_with("loc."))),
        ],
        _ => vec![(Adam::new(cfg.lr), Box::new(|_: &str| true))],
    };

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7EA1);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Sample<f32>> = chunk.iter().map(|&i| samples[i].clone()).collect();
            epoch_loss += batch_step(&model.meta, &mut model.params, &batch, pool.as_ref());
            for (opt, keep) in optimizers.iter_mut() {
                opt.step_filtered(&mut model.params, keep.as_ref());
            }
            batches += 1;
        }
        epoch_losses.push(epoch_loss / batches.max(1) as f64);
    }
    Ok((model, epoch_losses))
}

/// Shuffled holdout split + training run.
pub fn train(dataset: &[DatasetSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5917);
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let cut = ((dataset.len() as f64) * cfg.split).round() as usize;
    let cut = cut.clamp(1, dataset.len());
    let (train_idx, test_idx) = idx.split_at(cut);
    let (model, epoch_losses) = train_on(dataset, train_idx, cfg)?;
    Ok(TrainOutcome {
        model,
        epoch_losses,
        train_idx: train_idx.to_vec(),
        test_idx: test_idx.to_vec(),
    })
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct EvalOutcome {
    pub command: ClassificationReport,
    pub widget: ClassificationReport,
    pub caption: CaptionScores,
    /// Position-wise greedy-decode token accuracy on location phrases.
    pub location_token_accuracy: f64,
    /// Fraction of generated sentences the structure parser rejects
    /// (unstructured captioning mode only).
    pub malformed_rate: Option<f64>,
    pub n: usize,
}

/// Runs the model over the indexed samples and scores all three tasks.
pub fn evaluate(
    model: &ActionModel<f32>,
    dataset: &[DatasetSample],
    idx: &[usize],
) -> Result<EvalOutcome> {
    if idx.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let predictions: Vec<Prediction> = idx
        .par_iter()
        .map(|&i| model.predict(&dataset[i].streams))
        .collect();
    let mut cmd_preds = Vec::with_capacity(idx.len());
    let mut wid_preds = Vec::with_capacity(idx.len());
    let mut cmd_labels = Vec::with_capacity(idx.len());
    let mut wid_labels = Vec::with_capacity(idx.len());
    let mut locations: Vec<Vec<String>> = Vec::with_capacity(idx.len());
    let mut malformed = 0usize;
    let is_unsent = model.meta.mode == TrainMode::UnsentGen;
    for (&i, pred) in idx.iter().zip(&predictions) {
        let label = &dataset[i].action;
        cmd_labels.push(label.command.id());
        wid_labels.push(label.widget.id());
        match pred.action() {
            Some(a) => {
                cmd_preds.push(a.command.id());
                wid_preds.push(a.widget.id());
                locations.push(a.location);
            }
            None => {
                // Unparseable sentence: counted wrong for both classifiers.
                malformed += 1;
                cmd_preds.push(crate::model::CommandClass::COUNT);
                wid_preds.push(crate::model::WidgetClass::COUNT);
                locations.push(Vec::new());
            }
        }
    }
    let command = classification_report(&cmd_preds, &cmd_labels, 11)?;
    let widget = classification_report(&wid_preds, &wid_labels, 11)?;

    let refs: Vec<Vec<&str>> = idx
        .iter()
        .map(|&i| dataset[i].action.location.iter().map(|s| s.as_str()).collect())
        .collect();
    let cands: Vec<Vec<&str>> = locations
        .iter()
        .map(|l| l.iter().map(|s| s.as_str()).collect())
        .collect();
    let mut bleu = 0.0;
    let mut rouge = 0.0;
    let mut meteor = 0.0;
    let mut token_acc = 0.0;
    for (c, r) in cands.iter().zip(&refs) {
        bleu += crate::eval::bleu1(c, r);
        rouge += crate::eval::rouge1(c, r);
        meteor += crate::eval::meteor1(c, r);
        let len = c.len().max(r.len());
        token_acc += if len == 0 {
            1.0
        } else {
            let hits = c.iter().zip(r.iter()).filter(|(a, b)| a == b).count();
            hits as f64 / len as f64
        };
    }
    let n = idx.len() as f64;
    let caption = CaptionScores {
        bleu1: bleu / n,
        rouge1: rouge / n,
        meteor: meteor / n,
        cider: crate::eval::cider1(&cands, &refs, &refs),
    };
    Ok(EvalOutcome {
        command,
        widget,
        caption,
        location_token_accuracy: token_acc / n,
        malformed_rate: is_unsent.then(|| malformed as f64 / n),
        n: idx.len(),
    })
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub eval: EvalOutcome,
}

/// K-fold cross validation: trains one model per fold and reports each
/// fold plus the unweighted mean of the headline metrics.
pub fn kfold_evaluate(
    dataset: &[DatasetSample],
    cfg: &TrainConfig,
) -> Result<(Vec<FoldReport>, EvalSummary)> {
    let folds = kfold_split(dataset.len(), cfg.folds, cfg.seed)?;
    let mut reports = Vec::with_capacity(folds.len());
    for (k, test_idx) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = (0..dataset.len())
            .filter(|i| !test_idx.contains(i))
            .collect();
        let (model, _) = train_on(dataset, &train_idx, cfg)?;
        let eval = evaluate(&model, dataset, test_idx)?;
        reports.push(FoldReport { fold: k, eval });
    }
    let summary = EvalSummary::mean(reports.iter().map(|r| &r.eval));
    Ok((reports, summary))
}

#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct EvalSummary {
    pub command_accuracy: f64,
    pub command_f1: f64,
    pub widget_accuracy: f64,
    pub widget_f1: f64,
    pub bleu1: f64,
    pub rouge1: f64,
    pub meteor: f64,
    pub cider: f64,
}

impl EvalSummary {
    pub fn mean<'a>(items: impl Iterator<Item = &'a EvalOutcome>) -> Self {
        let mut out = EvalSummary::default();
        let mut n = 0usize;
        for e in items {
            out.command_accuracy += e.command.accuracy;
            out.command_f1 += e.command.macro_f1;
            out.widget_accuracy += e.widget.accuracy;
            out.widget_f1 += e.widget.macro_f1;
            out.bleu1 += e.caption.bleu1;
            out.rouge1 += e.caption.rouge1;
            out.meteor += e.caption.meteor;
            out.cider += e.caption.cider;
            n += 1;
        }
        let n = n.max(1) as f64;
        EvalSummary {
            command_accuracy: out.command_accuracy / n,
            command_f1: out.command_f1 / n,
            widget_accuracy: out.widget_accuracy / n,
            widget_f1: out.widget_f1 / n,
            bleu1: out.bleu1 / n,
            rouge1: out.rouge1 / n,
            meteor: out.meteor / n,
            cider: out.cider / n,
        }
    }
}

//! Network assembly: stream encoders, classifier heads, phrase decoder,
//! and the combined loss with hand-chained backward passes.

use crate::error::{Error, Result};
use crate::model::vocab::{END, PAD, START};
use crate::model::{parse_unsent_sentence, ModelMeta, StreamKind, StructuredAction, TrainMode};
use crate::nn::{
    conv3d, conv3d_backward, dense, dense_backward, embedding, embedding_backward, lstm_step,
    lstm_step_backward, maxpool3d, maxpool3d_backward, relu, relu_backward, softmax,
    softmax_xent, Init, LstmState, ParamStore, Scalar, Tensor,
};
use crate::vision::StreamBundle;

/// Per-stream input tensors for one fragment, shaped `[C, S, side, side]`.
#[derive(Clone, Debug)]
pub struct StreamTensors<T> {
    pub crop: Tensor<T>,
    pub origin: Tensor<T>,
    pub simmap: Tensor<T>,
}

impl<T: Scalar> StreamTensors<T> {
    pub fn from_bundle(bundle: &StreamBundle) -> Self {
        let s = bundle.originals.len();
        let side = bundle.side;
        StreamTensors {
            crop: rgb_tensor(&bundle.change_crops, s, side),
            origin: rgb_tensor(&bundle.originals, s, side),
            simmap: gray_tensor(&bundle.sim_maps, s, side),
        }
    }

    pub fn get(&self, kind: StreamKind) -> &Tensor<T> {
        match kind {
            StreamKind::CropCR => &self.crop,
            StreamKind::Origin => &self.origin,
            StreamKind::SimMap => &self.simmap,
        }
    }
}

fn rgb_tensor<T: Scalar>(frames: &[Vec<u8>], s: usize, side: usize) -> Tensor<T> {
    let hw = side * side;
    let mut data = vec![T::zero(); 3 * s * hw];
    for (d, frame) in frames.iter().enumerate() {
        for p in 0..hw {
            for c in 0..3 {
                data[(c * s + d) * hw + p] = T::of_f64(frame[p * 3 + c] as f64 / 255.0);
            }
        }
    }
    Tensor::from_vec(&[3, s, side, side], data)
}

fn gray_tensor<T: Scalar>(maps: &[Vec<f32>], s: usize, side: usize) -> Tensor<T> {
    let hw = side * side;
    let mut data = vec![T::zero(); s * hw];
    for (d, map) in maps.iter().enumerate() {
        for p in 0..hw {
            data[d * hw + p] = T::of_f64(map[p] as f64);
        }
    }
    Tensor::from_vec(&[1, s, side, side], data)
}

/// One labeled training sample with precomputed stream tensors.
#[derive(Clone, Debug)]
pub struct Sample<T> {
    pub streams: StreamTensors<T>,
    pub command: usize,
    pub widget: usize,
    /// Location decoder target, exactly `max_len` ids (END then PAD-filled).
    pub location_ids: Vec<u32>,
    /// Whole-sentence target for unstructured captioning, `max_len + 3` ids.
    pub sentence_ids: Vec<u32>,
}

/// Which prediction task a tower serves (independent-learning mode keeps
/// one tower per task).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Command,
    Widget,
    Location,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Command, Task::Widget, Task::Location];

    pub fn prefix(self) -> &'static str {
        match self {
            Task::Command => "cmd.",
            Task::Widget => "wid.",
            Task::Location => "loc.",
        }
    }
}

/// Shape bookkeeping for one 3D-CNN encoder.
#[derive(Clone, Debug)]
pub struct EncoderSpec {
    pub c_in: usize,
    pub s: usize,
    pub side: usize,
    pub widths: [usize; 4],
    pub feat_dim: usize,
}

impl EncoderSpec {
    pub fn new(kind: StreamKind, meta: &ModelMeta) -> Self {
        EncoderSpec {
            c_in: kind.channels(),
            s: meta.s,
            side: meta.side,
            widths: [8, 16, 32, 64],
            feat_dim: meta.feat_dim,
        }
    }

    /// (C, D, H, W) entering each conv block, plus the final pooled shape.
    fn block_dims(&self) -> Vec<[usize; 4]> {
        let mut dims = vec![[self.c_in, self.s, self.side, self.side]];
        for (i, &width) in self.widths.iter().enumerate() {
            let prev = dims[i];
            dims.push([
                width,
                prev[1].div_ceil(2),
                prev[2].div_ceil(2),
                prev[3].div_ceil(2),
            ]);
        }
        dims
    }

    pub fn flatten_len(&self) -> usize {
        let last = *self.block_dims().last().unwrap();
        last.iter().product()
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, prefix: &str) {
        let dims = self.block_dims();
        for (i, &width) in self.widths.iter().enumerate() {
            let c_in = dims[i][0];
            store.create(
                &format!("{prefix}conv{i}.w"),
                &[width, c_in, 3, 3, 3],
                Init::HeUniform { fan_in: c_in * 27 },
            );
            store.create(&format!("{prefix}conv{i}.b"), &[width], Init::Zero);
        }
        let flat = self.flatten_len();
        store.create(
            &format!("{prefix}fc.w"),
            &[self.feat_dim, flat],
            Init::HeUniform { fan_in: flat },
        );
        store.create(&format!("{prefix}fc.b"), &[self.feat_dim], Init::Zero);
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        prefix: &str,
        input: &Tensor<T>,
    ) -> (Vec<T>, EncoderCache<T>) {
        let mut x = input.clone();
        let mut cache = EncoderCache {
            conv_inputs: Vec::with_capacity(4),
            pre_relu: Vec::with_capacity(4),
            argmax: Vec::with_capacity(4),
            flat: Vec::new(),
        };
        for i in 0..self.widths.len() {
            let w = store.get(&format!("{prefix}conv{i}.w"));
            let b = store.get(&format!("{prefix}conv{i}.b"));
            let pre = conv3d(&x, w, b.data()).expect("encoder conv shape");
            let act = Tensor::from_vec(pre.shape(), relu(pre.data()));
            let (pooled, argmax) = maxpool3d(&act);
            cache.conv_inputs.push(x);
            cache.pre_relu.push(pre);
            cache.argmax.push(argmax);
            x = pooled;
        }
        cache.flat = x.data().to_vec();
        let feat = dense(
            &cache.flat,
            store.get(&format!("{prefix}fc.w")),
            store.get(&format!("{prefix}fc.b")).data(),
        );
        (feat, cache)
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        prefix: &str,
        cache: &EncoderCache<T>,
        grad_feat: &[T],
    ) {
        let (gflat, gw, gb) = dense_backward(
            &cache.flat,
            store.get(&format!("{prefix}fc.w")),
            grad_feat,
        );
        store.add_grad(&format!("{prefix}fc.w"), &gw);
        store.add_grad_slice(&format!("{prefix}fc.b"), &gb);
        let dims = self.block_dims();
        let mut g = Tensor::from_vec(&dims[self.widths.len()], gflat);
        for i in (0..self.widths.len()).rev() {
            let pre = &cache.pre_relu[i];
            let g_act = maxpool3d_backward(pre.shape(), &cache.argmax[i], &g);
            let g_pre = Tensor::from_vec(pre.shape(), relu_backward(pre.data(), g_act.data()));
            let w = store.get(&format!("{prefix}conv{i}.w")).clone();
            let (gin, gk, gbias) = conv3d_backward(&cache.conv_inputs[i], &w, &g_pre);
            store.add_grad(&format!("{prefix}conv{i}.w"), &gk);
            store.add_grad_slice(&format!("{prefix}conv{i}.b"), &gbias);
            g = gin;
        }
    }
}

#[derive(Clone, Debug)]
pub struct EncoderCache<T> {
    conv_inputs: Vec<Tensor<T>>,
    pre_relu: Vec<Tensor<T>>,
    argmax: Vec<Vec<usize>>,
    flat: Vec<T>,
}

fn head_register<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    in_len: usize,
    hidden: usize,
    classes: usize,
) {
    store.create(
        &format!("{prefix}fc1.w"),
        &[hidden, in_len],
        Init::HeUniform { fan_in: in_len },
    );
    store.create(&format!("{prefix}fc1.b"), &[hidden], Init::Zero);
    store.create(
        &format!("{prefix}fc2.w"),
        &[classes, hidden],
        Init::HeUniform { fan_in: hidden },
    );
    store.create(&format!("{prefix}fc2.b"), &[classes], Init::Zero);
}

struct HeadCache<T> {
    pre1: Vec<T>,
    act1: Vec<T>,
}

fn head_forward<T: Scalar>(
    store: &ParamStore<T>,
    prefix: &str,
    input: &[T],
) -> (Vec<T>, HeadCache<T>) {
    let pre1 = dense(
        input,
        store.get(&format!("{prefix}fc1.w")),
        store.get(&format!("{prefix}fc1.b")).data(),
    );
    let act1 = relu(&pre1);
    let logits = dense(
        &act1,
        store.get(&format!("{prefix}fc2.w")),
        store.get(&format!("{prefix}fc2.b")).data(),
    );
    (logits, HeadCache { pre1, act1 })
}

fn head_backward<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    input: &[T],
    cache: &HeadCache<T>,
    grad_logits: &[T],
) -> Vec<T> {
    let (g_act1, gw2, gb2) = dense_backward(
        &cache.act1,
        store.get(&format!("{prefix}fc2.w")),
        grad_logits,
    );
    store.add_grad(&format!("{prefix}fc2.w"), &gw2);
    store.add_grad_slice(&format!("{prefix}fc2.b"), &gb2);
    let g_pre1 = relu_backward(&cache.pre1, &g_act1);
    let (g_in, gw1, gb1) = dense_backward(
        input,
        store.get(&format!("{prefix}fc1.w")),
        &g_pre1,
    );
    store.add_grad(&format!("{prefix}fc1.w"), &gw1);
    store.add_grad_slice(&format!("{prefix}fc1.b"), &gb1);
    g_in
}

fn decoder_register<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    meta: &ModelMeta,
    fused_len: usize,
) {
    let h = meta.lstm_hidden;
    let v = meta.vocab.len();
    let e = meta.embed_dim;
    store.create(
        &format!("{prefix}h0.w"),
        &[h, fused_len],
        Init::HeUniform { fan_in: fused_len },
    );
    store.create(&format!("{prefix}h0.b"), &[h], Init::Zero);
    store.create(
        &format!("{prefix}c0.w"),
        &[h, fused_len],
        Init::HeUniform { fan_in: fused_len },
    );
    store.create(&format!("{prefix}c0.b"), &[h], Init::Zero);
    store.create(
        &format!("{prefix}embed"),
        &[v, e],
        Init::Uniform { lo: -0.1, hi: 0.1 },
    );
    store.create(
        &format!("{prefix}lstm.w"),
        &[4 * h, e + h],
        Init::HeUniform { fan_in: e + h },
    );
    store.create(&format!("{prefix}lstm.b"), &[4 * h], Init::Zero);
    store.create(
        &format!("{prefix}out.w"),
        &[v, h],
        Init::HeUniform { fan_in: h },
    );
    store.create(&format!("{prefix}out.b"), &[v], Init::Zero);
}

struct DecoderCache<T> {
    states: Vec<LstmState<T>>,
    lstm_caches: Vec<crate::nn::LstmCache<T>>,
    step_inputs: Vec<(u32, Vec<T>)>,
    probs: Vec<Option<Vec<T>>>,
}

/// Teacher-forced decoder loss: sum of per-position cross-entropies, PAD
/// positions masked out.
fn decoder_forward<T: Scalar>(
    store: &ParamStore<T>,
    prefix: &str,
    fused: &[T],
    targets: &[u32],
) -> (T, DecoderCache<T>) {
    let w = store.get(&format!("{prefix}lstm.w"));
    let b = store.get(&format!("{prefix}lstm.b"));
    let embed_table = store.get(&format!("{prefix}embed"));
    let out_w = store.get(&format!("{prefix}out.w"));
    let out_b = store.get(&format!("{prefix}out.b"));
    let h0 = dense(
        fused,
        store.get(&format!("{prefix}h0.w")),
        store.get(&format!("{prefix}h0.b")).data(),
    );
    let c0 = dense(
        fused,
        store.get(&format!("{prefix}c0.w")),
        store.get(&format!("{prefix}c0.b")).data(),
    );
    let mut state = LstmState { h: h0, c: c0 };
    let mut cache = DecoderCache {
        states: vec![state.clone()],
        lstm_caches: Vec::new(),
        step_inputs: Vec::new(),
        probs: Vec::new(),
    };
    let mut loss = T::zero();
    for (i, &target) in targets.iter().enumerate() {
        let tok_in = if i == 0 { START } else { targets[i - 1] };
        let x = embedding(embed_table, tok_in as usize);
        let (next, lc) = lstm_step(&x, &state, w, b.data());
        cache.step_inputs.push((tok_in, x));
        cache.lstm_caches.push(lc);
        state = next;
        cache.states.push(state.clone());
        if target != PAD {
            let logits = dense(&state.h, out_w, out_b.data());
            let (l, grad) = softmax_xent(&logits, target as usize);
            loss = loss + l;
            // Cache probs - onehot, which is exactly the logits gradient.
            cache.probs.push(Some(grad));
        } else {
            cache.probs.push(None);
        }
    }
    (loss, cache)
}

/// Backward through the decoder, accumulating parameter gradients scaled
/// by `scale` and returning the gradient wrt the fused embedding.
fn decoder_backward<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    fused: &[T],
    targets: &[u32],
    cache: &DecoderCache<T>,
    scale: T,
) -> Vec<T> {
    let hidden = cache.states[0].h.len();
    let w = store.get(&format!("{prefix}lstm.w")).clone();
    let out_w_name = format!("{prefix}out.w");
    let mut grad_state = LstmState::zeros(hidden);
    let mut g_lstm_w = Tensor::zeros(w.shape());
    let mut g_lstm_b = vec![T::zero(); 4 * hidden];
    let mut g_embed = Tensor::zeros(store.get(&format!("{prefix}embed")).shape());
    let mut g_out_w = Tensor::zeros(store.get(&out_w_name).shape());
    let mut g_out_b = vec![T::zero(); store.get(&format!("{prefix}out.b")).len()];
    for i in (0..targets.len()).rev() {
        if let Some(probs_grad) = &cache.probs[i] {
            let g_logits: Vec<T> = probs_grad.iter().map(|&g| g * scale).collect();
            let h_i = &cache.states[i + 1].h;
            let (g_h, gw, gb) = dense_backward(h_i, store.get(&out_w_name), &g_logits);
            g_out_w.add_assign(&gw);
            for (a, b) in g_out_b.iter_mut().zip(gb) {
                *a = *a + b;
            }
            for (a, b) in grad_state.h.iter_mut().zip(g_h) {
                *a = *a + b;
            }
        }
        let (g_x, prev, gw, gb) =
            lstm_step_backward(&cache.lstm_caches[i], &w, &grad_state.h, &grad_state.c);
        g_lstm_w.add_assign(&gw);
        for (a, b) in g_lstm_b.iter_mut().zip(gb) {
            *a = *a + b;
        }
        embedding_backward(&mut g_embed, cache.step_inputs[i].0 as usize, &g_x);
        grad_state = prev;
    }
    store.add_grad(&format!("{prefix}lstm.w"), &g_lstm_w);
    store.add_grad_slice(&format!("{prefix}lstm.b"), &g_lstm_b);
    store.add_grad(&format!("{prefix}embed"), &g_embed);
    store.add_grad(&out_w_name, &g_out_w);
    store.add_grad_slice(&format!("{prefix}out.b"), &g_out_b);

    // Through the initial-state projections into the fused embedding.
    let (g_fused_h, gw_h0, gb_h0) = dense_backward(
        fused,
        store.get(&format!("{prefix}h0.w")),
        &grad_state.h,
    );
    store.add_grad(&format!("{prefix}h0.w"), &gw_h0);
    store.add_grad_slice(&format!("{prefix}h0.b"), &gb_h0);
    let (g_fused_c, gw_c0, gb_c0) = dense_backward(
        fused,
        store.get(&format!("{prefix}c0.w")),
        &grad_state.c,
    );
    store.add_grad(&format!("{prefix}c0.w"), &gw_c0);
    store.add_grad_slice(&format!("{prefix}c0.b"), &gb_c0);
    g_fused_h
        .into_iter()
        .zip(g_fused_c)
        .map(|(a, b)| a + b)
        .collect()
}

/// Greedy argmax decoding. `<pad>` and `<start>` are masked out; stops at
/// `<end>` or after `steps` tokens.
fn decode_greedy<T: Scalar>(
    store: &ParamStore<T>,
    prefix: &str,
    fused: &[T],
    steps: usize,
) -> Vec<u32> {
    let w = store.get(&format!("{prefix}lstm.w"));
    let b = store.get(&format!("{prefix}lstm.b"));
    let embed_table = store.get(&format!("{prefix}embed"));
    let out_w = store.get(&format!("{prefix}out.w"));
    let out_b = store.get(&format!("{prefix}out.b"));
    let h0 = dense(
        fused,
        store.get(&format!("{prefix}h0.w")),
        store.get(&format!("{prefix}h0.b")).data(),
    );
    let c0 = dense(
        fused,
        store.get(&format!("{prefix}c0.w")),
        store.get(&format!("{prefix}c0.b")).data(),
    );
    let mut state = LstmState { h: h0, c: c0 };
    let mut token = START;
    let mut out = Vec::new();
    for _ in 0..steps {
        let x = embedding(embed_table, token as usize);
        state = lstm_step(&x, &state, w, b.data()).0;
        let mut logits = dense(&state.h, out_w, out_b.data());
        logits[PAD as usize] = T::neg_infinity();
        logits[START as usize] = T::neg_infinity();
        let next = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i as u32)
            .unwrap();
        if next == END {
            break;
        }
        out.push(next);
        token = next;
    }
    out
}

/// Prefixes of the parameter groups a mode instantiates, in registration
/// order: (encoder-set prefix, owner prefix) pairs.
fn tower_prefixes(meta: &ModelMeta) -> Vec<String> {
    match meta.mode {
        TrainMode::Multitask | TrainMode::UnsentGen => vec![String::new()],
        TrainMode::Independent => Task::ALL.iter().map(|t| t.prefix().to_string()).collect(),
    }
}

fn register_all<T: Scalar>(meta: &ModelMeta, store: &mut ParamStore<T>) {
    for tower in tower_prefixes(meta) {
        for &kind in &meta.streams {
            let spec = EncoderSpec::new(kind, meta);
            spec.register(store, &format!("{tower}enc.{}.", kind.key()));
        }
        match meta.mode {
            TrainMode::Multitask => {
                if tower.is_empty() {
                    head_register(store, "head.cmd.", meta.fused_len(), meta.head_hidden, 11);
                    head_register(store, "head.wid.", meta.fused_len(), meta.head_hidden, 11);
                    decoder_register(store, "dec.", meta, meta.fused_len());
                }
            }
            TrainMode::UnsentGen => {
                decoder_register(store, "dec.", meta, meta.fused_len());
            }
            TrainMode::Independent => match tower.as_str() {
                "cmd." => head_register(store, "cmd.head.", meta.fused_len(), meta.head_hidden, 11),
                "wid." => head_register(store, "wid.head.", meta.fused_len(), meta.head_hidden, 11),
                _ => decoder_register(store, "loc.dec.", meta, meta.fused_len()),
            },
        }
    }
}

/// Runs the encoder set of one tower and concatenates features in the
/// fixed fusion order.
fn encode_tower<T: Scalar>(
    meta: &ModelMeta,
    store: &ParamStore<T>,
    tower: &str,
    streams: &StreamTensors<T>,
) -> (Vec<T>, Vec<EncoderCache<T>>) {
    let mut fused = Vec::with_capacity(meta.fused_len());
    let mut caches = Vec::with_capacity(meta.streams.len());
    for &kind in &meta.streams {
        let spec = EncoderSpec::new(kind, meta);
        let (feat, cache) =
            spec.forward(store, &format!("{tower}enc.{}.", kind.key()), streams.get(kind));
        fused.extend(feat);
        caches.push(cache);
    }
    (fused, caches)
}

fn backward_tower<T: Scalar>(
    meta: &ModelMeta,
    store: &mut ParamStore<T>,
    tower: &str,
    streams: &StreamTensors<T>,
    caches: &[EncoderCache<T>],
    grad_fused: &[T],
) {
    let _ = streams;
    for (i, &kind) in meta.streams.iter().enumerate() {
        let spec = EncoderSpec::new(kind, meta);
        let seg = &grad_fused[i * meta.feat_dim..(i + 1) * meta.feat_dim];
        spec.backward(store, &format!("{tower}enc.{}.", kind.key()), &caches[i], seg);
    }
}

/// Loss of one batch, forward only (used by the finite-difference check).
/// Multitask: mean over samples of `L_act + L_obj + L_loc`; independent:
/// same sum but across the three separate towers; unsent_gen: `L_loc`
/// over the whole-sentence decoder.
pub fn forward_loss<T: Scalar>(meta: &ModelMeta, store: &ParamStore<T>, batch: &[Sample<T>]) -> T {
    let mut total = T::zero();
    for sample in batch {
        total = total + sample_loss_forward(meta, store, sample);
    }
    total / T::of_f64(batch.len() as f64)
}

fn sample_loss_forward<T: Scalar>(
    meta: &ModelMeta,
    store: &ParamStore<T>,
    sample: &Sample<T>,
) -> T {
    match meta.mode {
        TrainMode::Multitask => {
            let (fused, _) = encode_tower(meta, store, "", &sample.streams);
            let (cmd_logits, _) = head_forward(store, "head.cmd.", &fused);
            let (wid_logits, _) = head_forward(store, "head.wid.", &fused);
            let l_act = softmax_xent(&cmd_logits, sample.command).0;
            let l_obj = softmax_xent(&wid_logits, sample.widget).0;
            let (l_loc, _) = decoder_forward(store, "dec.", &fused, &sample.location_ids);
            l_act + l_obj + l_loc
        }
        TrainMode::UnsentGen => {
            let (fused, _) = encode_tower(meta, store, "", &sample.streams);
            decoder_forward(store, "dec.", &fused, &sample.sentence_ids).0
        }
        TrainMode::Independent => {
            let mut total = T::zero();
            for task in Task::ALL {
                let tower = task.prefix();
                let (fused, _) = encode_tower(meta, store, tower, &sample.streams);
                total = total
                    + match task {
                        Task::Command => {
                            softmax_xent(&head_forward(store, "cmd.head.", &fused).0, sample.command)
                                .0
                        }
                        Task::Widget => {
                            softmax_xent(&head_forward(store, "wid.head.", &fused).0, sample.widget)
                                .0
                        }
                        Task::Location => {
                            decoder_forward(store, "loc.dec.", &fused, &sample.location_ids).0
                        }
                    };
            }
            total
        }
    }
}

/// Forward + backward over a batch: accumulates gradients of the mean
/// batch loss into the store and returns that loss.
pub fn backward_loss<T: Scalar>(
    meta: &ModelMeta,
    store: &mut ParamStore<T>,
    batch: &[Sample<T>],
) -> T {
    let scale = T::of_f64(1.0 / batch.len() as f64);
    let mut total = T::zero();
    for sample in batch {
        total = total + sample_backward(meta, store, sample, scale);
    }
    total * scale
}

/// Forward + backward for one sample with gradient scale `scale`.
pub fn sample_backward<T: Scalar>(
    meta: &ModelMeta,
    store: &mut ParamStore<T>,
    sample: &Sample<T>,
    scale: T,
) -> T {
    match meta.mode {
        TrainMode::Multitask => {
            let (fused, enc_caches) = encode_tower(meta, store, "", &sample.streams);
            let (cmd_logits, cmd_cache) = head_forward(store, "head.cmd.", &fused);
            let (wid_logits, wid_cache) = head_forward(store, "head.wid.", &fused);
            let (l_act, mut g_cmd) = softmax_xent(&cmd_logits, sample.command);
            let (l_obj, mut g_wid) = softmax_xent(&wid_logits, sample.widget);
            let (l_loc, dec_cache) = decoder_forward(store, "dec.", &fused, &sample.location_ids);
            for g in g_cmd.iter_mut() {
                *g = *g * scale;
            }
            for g in g_wid.iter_mut() {
                *g = *g * scale;
            }
            let mut grad_fused =
                head_backward(store, "head.cmd.", &fused, &cmd_cache, &g_cmd);
            let g2 = head_backward(store, "head.wid.", &fused, &wid_cache, &g_wid);
            let g3 = decoder_backward(
                store,
                "dec.",
                &fused,
                &sample.location_ids,
                &dec_cache,
                scale,
            );
            for (a, (b, c)) in grad_fused.iter_mut().zip(g2.into_iter().zip(g3)) {
                *a = *a + b + c;
            }
            backward_tower(meta, store, "", &sample.streams, &enc_caches, &grad_fused);
            l_act + l_obj + l_loc
        }
        TrainMode::UnsentGen => {
            let (fused, enc_caches) = encode_tower(meta, store, "", &sample.streams);
            let (l_loc, dec_cache) = decoder_forward(store, "dec.", &fused, &sample.sentence_ids);
            let grad_fused = decoder_backward(
                store,
                "dec.",
                &fused,
                &sample.sentence_ids,
                &dec_cache,
                scale,
            );
            backward_tower(meta, store, "", &sample.streams, &enc_caches, &grad_fused);
            l_loc
        }
        TrainMode::Independent => {
            let mut total = T::zero();
            for task in Task::ALL {
                let tower = task.prefix();
                let (fused, enc_caches) = encode_tower(meta, store, tower, &sample.streams);
                let grad_fused = match task {
                    Task::Command => {
                        let (logits, cache) = head_forward(store, "cmd.head.", &fused);
                        let (l, mut g) = softmax_xent(&logits, sample.command);
                        total = total + l;
                        for gi in g.iter_mut() {
                            *gi = *gi * scale;
                        }
                        head_backward(store, "cmd.head.", &fused, &cache, &g)
                    }
                    Task::Widget => {
                        let (logits, cache) = head_forward(store, "wid.head.", &fused);
                        let (l, mut g) = softmax_xent(&logits, sample.widget);
                        total = total + l;
                        for gi in g.iter_mut() {
                            *gi = *gi * scale;
                        }
                        head_backward(store, "wid.head.", &fused, &cache, &g)
                    }
                    Task::Location => {
                        let (l, cache) =
                            decoder_forward(store, "loc.dec.", &fused, &sample.location_ids);
                        total = total + l;
                        decoder_backward(
                            store,
                            "loc.dec.",
                            &fused,
                            &sample.location_ids,
                            &cache,
                            scale,
                        )
                    }
                };
                backward_tower(meta, store, tower, &sample.streams, &enc_caches, &grad_fused);
            }
            total
        }
    }
}

/// Model output for one fragment.
#[derive(Clone, Debug)]
pub enum Prediction {
    Structured {
        command_probs: Vec<f64>,
        widget_probs: Vec<f64>,
        location: Vec<String>,
    },
    Sentence {
        tokens: Vec<String>,
        parsed: Option<StructuredAction>,
    },
}

impl Prediction {
    pub fn action(&self) -> Option<StructuredAction> {
        match self {
            Prediction::Structured {
                command_probs,
                widget_probs,
                location,
            } => {
                let cmd = argmax(command_probs);
                let wid = argmax(widget_probs);
                Some(StructuredAction {
                    command: super::CommandClass::from_id(cmd)?,
                    widget: super::WidgetClass::from_id(wid)?,
                    location: location.clone(),
                })
            }
            Prediction::Sentence { parsed, .. } => parsed.clone(),
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// The recognizer: metadata plus parameters.
#[derive(Clone, Debug)]
pub struct ActionModel<T: Scalar> {
    pub meta: ModelMeta,
    pub params: ParamStore<T>,
}

impl<T: Scalar> ActionModel<T> {
    /// Fresh model with seeded initialization from the metadata.
    pub fn new(meta: ModelMeta) -> Self {
        let mut params = ParamStore::new(meta.seed);
        register_all(&meta, &mut params);
        ActionModel { meta, params }
    }

    /// Fused embedding for the (shared or command) tower; length is
    /// `512 * active streams`.
    pub fn encode(&self, streams: &StreamTensors<T>) -> Vec<T> {
        let tower = match self.meta.mode {
            TrainMode::Independent => "cmd.",
            _ => "",
        };
        encode_tower(&self.meta, &self.params, tower, streams).0
    }

    pub fn predict(&self, streams: &StreamTensors<T>) -> Prediction {
        match self.meta.mode {
            TrainMode::Multitask => {
                let (fused, _) = encode_tower(&self.meta, &self.params, "", streams);
                let (cmd_logits, _) = head_forward(&self.params, "head.cmd.", &fused);
                let (wid_logits, _) = head_forward(&self.params, "head.wid.", &fused);
                let ids = decode_greedy(&self.params, "dec.", &fused, self.meta.decoder_steps());
                Prediction::Structured {
                    command_probs: softmax(&cmd_logits).iter().map(|v| v.as_f64()).collect(),
                    widget_probs: softmax(&wid_logits).iter().map(|v| v.as_f64()).collect(),
                    location: self.meta.vocab.decode(&ids),
                }
            }
            TrainMode::Independent => {
                let (f_cmd, _) = encode_tower(&self.meta, &self.params, "cmd.", streams);
                let (f_wid, _) = encode_tower(&self.meta, &self.params, "wid.", streams);
                let (f_loc, _) = encode_tower(&self.meta, &self.params, "loc.", streams);
                let (cmd_logits, _) = head_forward(&self.params, "cmd.head.", &f_cmd);
                let (wid_logits, _) = head_forward(&self.params, "wid.head.", &f_wid);
                let ids =
                    decode_greedy(&self.params, "loc.dec.", &f_loc, self.meta.decoder_steps());
                Prediction::Structured {
                    command_probs: softmax(&cmd_logits).iter().map(|v| v.as_f64()).collect(),
                    widget_probs: softmax(&wid_logits).iter().map(|v| v.as_f64()).collect(),
                    location: self.meta.vocab.decode(&ids),
                }
            }
            TrainMode::UnsentGen => {
                let (fused, _) = encode_tower(&self.meta, &self.params, "", streams);
                let ids = decode_greedy(&self.params, "dec.", &fused, self.meta.decoder_steps());
                let tokens = self.meta.vocab.decode(&ids);
                let parsed = parse_unsent_sentence(&tokens);
                Prediction::Sentence { tokens, parsed }
            }
        }
    }

    pub fn loss_batch(&mut self, batch: &[Sample<T>]) -> T {
        backward_loss(&self.meta, &mut self.params, batch)
    }

    pub fn forward_loss(&self, batch: &[Sample<T>]) -> T {
        forward_loss(&self.meta, &self.params, batch)
    }

    /// Saves parameters and the JSON sidecar (`<stem>.json`).
    pub fn save(&self, params_path: &std::path::Path) -> Result<()> {
        self.params.save(params_path)?;
        self.meta.save(&params_path.with_extension("json"))
    }

    pub fn load(params_path: &std::path::Path) -> Result<Self> {
        let meta = ModelMeta::load(&params_path.with_extension("json"))?;
        let params = ParamStore::load(params_path)?;
        let fresh = {
            let mut s = ParamStore::<T>::new(meta.seed);
            register_all(&meta, &mut s);
            s
        };
        if fresh.names() != params.names() {
            return Err(Error::Format(
                "parameter file does not match model metadata".into(),
            ));
        }
        for name in fresh.names() {
            if fresh.get(name).shape() != params.get(name).shape() {
                return Err(Error::Format(format!("parameter {name} has wrong shape")));
            }
        }
        Ok(ActionModel { meta, params })
    }
}

//! The trainable grid-labeling network.
//!
//! A sentence is embedded and encoded once by a small transformer. The
//! contextual embeddings are then passed through a shared iterative
//! transformer stack, once per grid level: at each level a label head
//! produces per-token label distributions, the hard labels feed back as
//! label embeddings added to the representations, and the result is the
//! input of the next level. The encoder is never re-invoked between
//! levels — an invocation counter enforces that claim.
//!
//! Everything is f64 with hand-composed reverse-mode gradients; the
//! contract is the finite-difference check in [`gradient_check`], not
//! the mechanism.

pub mod checkpoint;
mod gradcheck;
mod optim;
mod tape;

pub use gradcheck::{gradient_check, GradCheckReport, KinkThresholds};
pub use optim::{
    train, train_step, AdamState, EpochStats, TrainConfig, TrainExample, TrainLog,
};

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::constraints::PenaltyWeights;
use crate::lingo::TokenMasks;
use crate::pipeline::GridLabeler;
use crate::types::{LabelAlphabet, LabelGrid, Sentence, APPENDED_TOKENS};
use crate::{Error, Result};
use tape::{Tape, Var};

/// Which grid task a model is trained for; fixes the label alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridTask {
    Tuple,
    Coordination,
}

impl GridTask {
    pub fn alphabet_size(self) -> usize {
        match self {
            GridTask::Tuple => 4,
            GridTask::Coordination => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GridTask::Tuple => "tuple",
            GridTask::Coordination => "coordination",
        }
    }

    pub fn parse(s: &str) -> Option<GridTask> {
        match s {
            "tuple" => Some(GridTask::Tuple),
            "coordination" => Some(GridTask::Coordination),
            _ => None,
        }
    }

    /// Default grid depth: 5 extraction rows, 3 coordination levels.
    pub fn default_levels(self) -> usize {
        match self {
            GridTask::Tuple => 5,
            GridTask::Coordination => 3,
        }
    }
}

/// Token vocabulary: case-folded surfaces plus the unknown marker and
/// the three appended tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

pub const UNK_TOKEN: &str = "<unk>";

impl Vocab {
    /// Build from a training corpus: specials first, then the distinct
    /// lowercased surfaces in sorted order.
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> Vocab {
        let mut seen = std::collections::BTreeSet::new();
        for s in sentences {
            for t in s.tokens() {
                if !t.is_appended {
                    seen.insert(t.surface.to_lowercase());
                }
            }
        }
        let mut words = vec![UNK_TOKEN.to_string()];
        words.extend(APPENDED_TOKENS.iter().map(|s| s.to_string()));
        for w in seen {
            if !words.contains(&w) {
                words.push(w);
            }
        }
        Vocab::from_words(words).expect("built vocabulary is valid")
    }

    pub fn from_words(words: Vec<String>) -> Result<Vocab> {
        if words.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(Error::validation(format!(
                "vocabulary must start with {UNK_TOKEN}"
            )));
        }
        let mut index = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::validation(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Vocab { words, index })
    }

    pub fn id(&self, surface: &str) -> usize {
        self.index
            .get(&surface.to_lowercase())
            .copied()
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Architecture and initialization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub task: GridTask,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub encoder_layers: usize,
    /// Transformer layers applied per grid level, weights shared across
    /// levels.
    pub iterative_layers: usize,
    /// Grid depth M.
    pub max_levels: usize,
    pub ffn_hidden: usize,
    pub max_positions: usize,
    pub init_std: f64,
    pub seed: u64,
    pub vocab: Vocab,
}

impl EncoderConfig {
    pub fn new(task: GridTask, vocab: Vocab) -> Self {
        EncoderConfig {
            task,
            embed_dim: 64,
            num_heads: 4,
            encoder_layers: 2,
            iterative_layers: 2,
            max_levels: task.default_levels(),
            ffn_hidden: 128,
            max_positions: 64,
            init_std: 0.02,
            seed: 0,
            vocab,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.embed_dim % self.num_heads != 0 {
            return Err(Error::validation(format!(
                "embed_dim {} must be a positive multiple of num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if self.max_levels == 0 {
            return Err(Error::validation("max_levels must be at least 1"));
        }
        if self.encoder_layers == 0 || self.iterative_layers == 0 {
            return Err(Error::validation(
                "encoder_layers and iterative_layers must be at least 1",
            ));
        }
        if self.ffn_hidden == 0 || self.max_positions == 0 {
            return Err(Error::validation(
                "ffn_hidden and max_positions must be positive",
            ));
        }
        if self.vocab.is_empty() {
            return Err(Error::validation("vocabulary is empty"));
        }
        Ok(())
    }
}

/// One transformer layer's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ln1_gain: Array2<f64>,
    pub ln1_bias: Array2<f64>,
    pub ffn_w1: Array2<f64>,
    pub ffn_b1: Array2<f64>,
    pub ffn_w2: Array2<f64>,
    pub ffn_b2: Array2<f64>,
    pub ln2_gain: Array2<f64>,
    pub ln2_bias: Array2<f64>,
}

const LAYER_TENSOR_NAMES: [&str; 12] = [
    "wq", "wk", "wv", "wo", "ln1_gain", "ln1_bias", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2",
    "ln2_gain", "ln2_bias",
];

impl LayerParams {
    fn init(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> LayerParams {
        let d = cfg.embed_dim;
        let h = cfg.ffn_hidden;
        let normal = Normal::new(0.0, cfg.init_std).unwrap();
        let mut rand_mat =
            |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| normal.sample(rng));
        LayerParams {
            wq: rand_mat(d, d),
            wk: rand_mat(d, d),
            wv: rand_mat(d, d),
            wo: rand_mat(d, d),
            ln1_gain: Array2::ones((1, d)),
            ln1_bias: Array2::zeros((1, d)),
            ffn_w1: rand_mat(d, h),
            ffn_b1: Array2::zeros((1, h)),
            ffn_w2: rand_mat(h, d),
            ffn_b2: Array2::zeros((1, d)),
            ln2_gain: Array2::ones((1, d)),
            ln2_bias: Array2::zeros((1, d)),
        }
    }

    fn tensors(&self) -> [&Array2<f64>; 12] {
        [
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.ln1_gain,
            &self.ln1_bias,
            &self.ffn_w1,
            &self.ffn_b1,
            &self.ffn_w2,
            &self.ffn_b2,
            &self.ln2_gain,
            &self.ln2_bias,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Array2<f64>; 12] {
        [
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.ffn_w1,
            &mut self.ffn_b1,
            &mut self.ffn_w2,
            &mut self.ffn_b2,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ]
    }
}

/// All trainable weights, plus the contention-safe encoder-invocation
/// counter used to verify the single-encoding property.
#[derive(Debug)]
pub struct ModelParameters {
    pub config: EncoderConfig,
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub encoder: Vec<LayerParams>,
    pub iterative: Vec<LayerParams>,
    pub label_head_w: Array2<f64>,
    pub label_head_b: Array2<f64>,
    pub label_embedding: Array2<f64>,
    encoder_invocations: AtomicU64,
}

impl Clone for ModelParameters {
    fn clone(&self) -> Self {
        ModelParameters {
            config: self.config.clone(),
            token_embedding: self.token_embedding.clone(),
            position_embedding: self.position_embedding.clone(),
            encoder: self.encoder.clone(),
            iterative: self.iterative.clone(),
            label_head_w: self.label_head_w.clone(),
            label_head_b: self.label_head_b.clone(),
            label_embedding: self.label_embedding.clone(),
            encoder_invocations: AtomicU64::new(self.encoder_invocations.load(Ordering::Relaxed)),
        }
    }
}

impl ModelParameters {
    /// Deterministic initialization from the config seed.
    pub fn init(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, config.init_std).unwrap();
        let d = config.embed_dim;
        let k = config.task.alphabet_size();
        let mut rand_mat =
            |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| normal.sample(&mut rng));
        let token_embedding = rand_mat(config.vocab.len(), d);
        let position_embedding = rand_mat(config.max_positions, d);
        let encoder = (0..config.encoder_layers)
            .map(|_| LayerParams::init(&config, &mut rng))
            .collect();
        let iterative = (0..config.iterative_layers)
            .map(|_| LayerParams::init(&config, &mut rng))
            .collect();
        let label_head_w = rand_mat(d, k);
        let label_embedding = rand_mat(k, d);
        Ok(ModelParameters {
            label_head_b: Array2::zeros((1, k)),
            token_embedding,
            position_embedding,
            encoder,
            iterative,
            label_head_w,
            label_embedding,
            config,
            encoder_invocations: AtomicU64::new(0),
        })
    }

    /// Tensors in canonical traversal order with their names. This order
    /// defines the checkpoint layout and the optimizer state layout.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![
            ("token_embedding".to_string(), &self.token_embedding),
            ("position_embedding".to_string(), &self.position_embedding),
        ];
        for (group, layers) in [("encoder", &self.encoder), ("iterative", &self.iterative)] {
            for (i, layer) in layers.iter().enumerate() {
                for (name, t) in LAYER_TENSOR_NAMES.iter().zip(layer.tensors()) {
                    out.push((format!("{group}.{i}.{name}"), t));
                }
            }
        }
        out.push(("label_head_w".to_string(), &self.label_head_w));
        out.push(("label_head_b".to_string(), &self.label_head_b));
        out.push(("label_embedding".to_string(), &self.label_embedding));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out: Vec<(String, &mut Array2<f64>)> = vec![
            ("token_embedding".to_string(), &mut self.token_embedding),
            (
                "position_embedding".to_string(),
                &mut self.position_embedding,
            ),
        ];
        for (group, layers) in [
            ("encoder", &mut self.encoder),
            ("iterative", &mut self.iterative),
        ] {
            for (i, layer) in layers.iter_mut().enumerate() {
                for (name, t) in LAYER_TENSOR_NAMES.iter().zip(layer.tensors_mut()) {
                    out.push((format!("{group}.{i}.{name}"), t));
                }
            }
        }
        out.push(("label_head_w".to_string(), &mut self.label_head_w));
        out.push(("label_head_b".to_string(), &mut self.label_head_b));
        out.push(("label_embedding".to_string(), &mut self.label_embedding));
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn encoder_invocations(&self) -> u64 {
        self.encoder_invocations.load(Ordering::Relaxed)
    }

    /// Map a sentence to vocabulary ids (unknown words to the UNK id).
    pub fn token_ids(&self, s: &Sentence) -> Vec<usize> {
        s.tokens()
            .iter()
            .map(|t| self.config.vocab.id(&t.surface))
            .collect()
    }

    fn check_finite(&self) -> Result<()> {
        for (name, t) in self.tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter tensor {name}")));
            }
        }
        Ok(())
    }
}

struct BoundLayer {
    wq: Var,
    wk: Var,
    wv: Var,
    wo: Var,
    ln1_gain: Var,
    ln1_bias: Var,
    ffn_w1: Var,
    ffn_b1: Var,
    ffn_w2: Var,
    ffn_b2: Var,
    ln2_gain: Var,
    ln2_bias: Var,
}

struct BoundModel {
    token: Var,
    position: Var,
    encoder: Vec<BoundLayer>,
    iterative: Vec<BoundLayer>,
    head_w: Var,
    head_b: Var,
    label_embedding: Var,
    /// All parameter vars in canonical tensor order.
    flat: Vec<Var>,
}

fn bind(tape: &mut Tape, params: &ModelParameters) -> BoundModel {
    let flat: Vec<Var> = params
        .tensors()
        .into_iter()
        .map(|(_, t)| tape.leaf(t.clone()))
        .collect();
    let mut cursor = flat.iter().copied();
    let mut next = || cursor.next().expect("tensor layout mismatch");
    let token = next();
    let position = next();
    let mut take_layers = |count: usize| {
        (0..count)
            .map(|_| BoundLayer {
                wq: next(),
                wk: next(),
                wv: next(),
                wo: next(),
                ln1_gain: next(),
                ln1_bias: next(),
                ffn_w1: next(),
                ffn_b1: next(),
                ffn_w2: next(),
                ffn_b2: next(),
                ln2_gain: next(),
                ln2_bias: next(),
            })
            .collect::<Vec<_>>()
    };
    let encoder = take_layers(params.encoder.len());
    let iterative = take_layers(params.iterative.len());
    let head_w = next();
    let head_b = next();
    let label_embedding = next();
    BoundModel {
        token,
        position,
        encoder,
        iterative,
        head_w,
        head_b,
        label_embedding,
        flat,
    }
}

fn transformer_layer(tape: &mut Tape, x: Var, layer: &BoundLayer, heads: usize) -> Var {
    let d = tape.value(x).ncols();
    let dh = d / heads;
    let normed = tape.layer_norm(x, layer.ln1_gain, layer.ln1_bias);
    let q = tape.matmul(normed, layer.wq);
    let k = tape.matmul(normed, layer.wk);
    let v = tape.matmul(normed, layer.wv);
    let mut contexts = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
        let kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
        let vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
        let scores = tape.matmul_trans_b(qh, kh);
        let scaled = tape.scale(scores, 1.0 / (dh as f64).sqrt());
        let attn = tape.softmax_rows_op(scaled);
        contexts.push(tape.matmul(attn, vh));
    }
    let ctx = tape.concat_cols(contexts);
    let projected = tape.matmul(ctx, layer.wo);
    let x = tape.add(x, projected);
    let normed2 = tape.layer_norm(x, layer.ln2_gain, layer.ln2_bias);
    let h1 = tape.matmul(normed2, layer.ffn_w1);
    let h1 = tape.add_row(h1, layer.ffn_b1);
    let h1 = tape.gelu_op(h1);
    let ffn = tape.matmul(h1, layer.ffn_w2);
    let ffn = tape.add_row(ffn, layer.ffn_b2);
    tape.add(x, ffn)
}

/// One forward pass recorded on a tape, ready for loss construction.
pub(crate) struct TapeForward {
    pub tape: Tape,
    pub bound_flat: Vec<Var>,
    pub level_logits: Vec<Var>,
    pub level_probs: Vec<Var>,
    pub probs_values: Vec<Array2<f64>>,
    pub hard: Vec<Vec<usize>>,
    pub width: usize,
}

pub(crate) fn forward_tape(
    params: &ModelParameters,
    token_ids: &[usize],
    forced_feedback: Option<&[Vec<usize>]>,
) -> Result<TapeForward> {
    let cfg = &params.config;
    let n = token_ids.len();
    if n == 0 {
        return Err(Error::validation("cannot run the network on zero tokens"));
    }
    if n > cfg.max_positions {
        return Err(Error::validation(format!(
            "sentence of {n} tokens exceeds max_positions {}",
            cfg.max_positions
        )));
    }
    if let Some(&bad) = token_ids.iter().find(|&&id| id >= cfg.vocab.len()) {
        return Err(Error::validation(format!(
            "token id {bad} outside vocabulary of {}",
            cfg.vocab.len()
        )));
    }
    let mut tape = Tape::new();
    let bound = bind(&mut tape, params);
    let tok = tape.gather_rows(bound.token, token_ids.to_vec());
    let pos = tape.gather_rows(bound.position, (0..n).collect());
    let mut x = tape.add(tok, pos);
    for layer in &bound.encoder {
        x = transformer_layer(&mut tape, x, layer, cfg.num_heads);
    }
    params.encoder_invocations.fetch_add(1, Ordering::Relaxed);

    let mut level_logits = Vec::with_capacity(cfg.max_levels);
    let mut level_probs = Vec::with_capacity(cfg.max_levels);
    let mut probs_values = Vec::with_capacity(cfg.max_levels);
    let mut hard = Vec::with_capacity(cfg.max_levels);
    for level in 0..cfg.max_levels {
        for layer in &bound.iterative {
            x = transformer_layer(&mut tape, x, layer, cfg.num_heads);
        }
        let logits = tape.matmul(x, bound.head_w);
        let logits = tape.add_row(logits, bound.head_b);
        let probs = tape.softmax_rows_op(logits);
        let pv = tape.value(probs).clone();
        let labels: Vec<usize> = match forced_feedback {
            Some(f) => f[level].clone(),
            None => pv
                .rows()
                .into_iter()
                .map(|row| {
                    let mut best = 0;
                    for (k, &p) in row.iter().enumerate() {
                        if p > row[best] {
                            best = k;
                        }
                    }
                    best
                })
                .collect(),
        };
        let feedback = tape.gather_rows(bound.label_embedding, labels.clone());
        x = tape.add(x, feedback);
        level_logits.push(logits);
        level_probs.push(probs);
        probs_values.push(pv);
        hard.push(labels);
    }
    Ok(TapeForward {
        tape,
        bound_flat: bound.flat,
        level_logits,
        level_probs,
        probs_values,
        hard,
        width: n,
    })
}

/// Build the cross-entropy loss node over all levels and positions.
pub(crate) fn ce_loss_var(tf: &mut TapeForward, gold: &[Vec<usize>]) -> Result<Var> {
    if gold.len() != tf.level_logits.len() {
        return Err(Error::shape(format!(
            "gold grid has {} levels, model expects {}",
            gold.len(),
            tf.level_logits.len()
        )));
    }
    let mut total: Option<Var> = None;
    for (level, targets) in gold.iter().enumerate() {
        if targets.len() != tf.width {
            return Err(Error::shape(format!(
                "gold row {level} covers {} tokens, sentence has {}",
                targets.len(),
                tf.width
            )));
        }
        let ce = tf.tape.cross_entropy(tf.level_logits[level], targets.clone());
        total = Some(match total {
            Some(t) => tf.tape.add(t, ce),
            None => ce,
        });
    }
    Ok(total.expect("max_levels >= 1"))
}

const LABEL_NONE_EXCLUSIVE: usize = 3; // S, R, O occupy indices 0..3
const LABEL_RELATION: usize = 1;

/// Build the four penalty nodes `[posc, hvc, hve, ec]` on the tape.
/// Only meaningful for the tuple alphabet.
pub(crate) fn penalty_vars(tf: &mut TapeForward, masks: &TokenMasks) -> Result<[Var; 4]> {
    if masks.len() != tf.width {
        return Err(Error::shape(format!(
            "masks cover {} tokens, sentence has {}",
            masks.len(),
            tf.width
        )));
    }
    let n = tf.width;
    let imp = Array2::from_shape_fn((n, 1), |(i, _)| f64::from(masks.important[i]));
    let hv = Array2::from_shape_fn((n, 1), |(i, _)| f64::from(masks.head_verb[i]));
    let head_verbs = masks.head_verb_count() as f64;
    let tape = &mut tf.tape;

    // POSC: per token, best non-N probability across levels
    let mut best: Option<Var> = None;
    for &p in &tf.level_probs {
        let non_none = tape.slice_cols(p, 0, LABEL_NONE_EXCLUSIVE);
        let level_best = tape.row_max(non_none);
        best = Some(match best {
            Some(b) => tape.elem_max(b, level_best),
            None => level_best,
        });
    }
    let uncovered = tape.affine(best.unwrap(), -1.0, 1.0);
    let masked = tape.mul_const(uncovered, imp.clone());
    let posc = tape.sum_all(masked);

    // HVC: |1 - sum_m Y[m][n][R]| per head verb
    let mut relation_sum: Option<Var> = None;
    for &p in &tf.level_probs {
        let r = tape.slice_cols(p, LABEL_RELATION, LABEL_RELATION + 1);
        relation_sum = Some(match relation_sum {
            Some(s) => tape.add(s, r),
            None => r,
        });
    }
    let deviation = tape.affine(relation_sum.unwrap(), -1.0, 1.0);
    let deviation = tape.abs(deviation);
    let masked = tape.mul_const(deviation, hv.clone());
    let hvc = tape.sum_all(masked);

    // HVE: hinge over per-level head-verb relation mass
    let mut hve: Option<Var> = None;
    for &p in &tf.level_probs {
        let r = tape.slice_cols(p, LABEL_RELATION, LABEL_RELATION + 1);
        let masked = tape.mul_const(r, hv.clone());
        let mass = tape.sum_all(masked);
        let over = tape.affine(mass, 1.0, -1.0);
        let hinge = tape.relu(over);
        hve = Some(match hve {
            Some(h) => tape.add(h, hinge),
            None => hinge,
        });
    }

    // EC: shortfall of summed per-level best head-verb relation scores
    let mut covered: Option<Var> = None;
    for &p in &tf.level_probs {
        let r = tape.slice_cols(p, LABEL_RELATION, LABEL_RELATION + 1);
        let masked = tape.mul_const(r, hv.clone());
        let best = tape.max_all(masked);
        covered = Some(match covered {
            Some(c) => tape.add(c, best),
            None => best,
        });
    }
    let shortfall = tape.affine(covered.unwrap(), -1.0, head_verbs);
    let ec = tape.relu(shortfall);

    Ok([posc, hvc, hve.unwrap(), ec])
}

/// Combine CE and weighted penalties into the training loss node.
pub(crate) fn loss_var(
    tf: &mut TapeForward,
    gold: &[Vec<usize>],
    masks: Option<&TokenMasks>,
    weights: &PenaltyWeights,
    apply_penalties: bool,
) -> Result<Var> {
    weights.validate()?;
    let mut loss = ce_loss_var(tf, gold)?;
    let active = apply_penalties
        && (weights.posc > 0.0 || weights.hvc > 0.0 || weights.hve > 0.0 || weights.ec > 0.0);
    if active {
        let masks = masks.ok_or_else(|| {
            Error::validation("penalty training needs token masks".to_string())
        })?;
        let [posc, hvc, hve, ec] = penalty_vars(tf, masks)?;
        for (var, lambda) in [
            (posc, weights.posc),
            (hvc, weights.hvc),
            (hve, weights.hve),
            (ec, weights.ec),
        ] {
            if lambda > 0.0 {
                let scaled = tf.tape.scale(var, lambda);
                loss = tf.tape.add(loss, scaled);
            }
        }
    }
    Ok(loss)
}

/// The outcome of one full grid forward: per-cell label distributions,
/// hard labels, and the encoder-invocation count at completion.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub levels: usize,
    pub width: usize,
    pub alphabet_size: usize,
    probs: Vec<f64>,
    hard: Vec<usize>,
    pub encoder_invocations: u64,
}

impl ForwardTrace {
    pub fn prob(&self, level: usize, col: usize, k: usize) -> f64 {
        self.probs[(level * self.width + col) * self.alphabet_size + k]
    }

    pub fn hard_index(&self, level: usize, col: usize) -> usize {
        self.hard[level * self.width + col]
    }

    /// View the trace as a typed probability grid.
    pub fn grid<A: LabelAlphabet>(&self) -> Result<LabelGrid<A>> {
        if A::SIZE != self.alphabet_size {
            return Err(Error::shape(format!(
                "trace carries {}-label cells, alphabet {} has {}",
                self.alphabet_size,
                A::NAME,
                A::SIZE
            )));
        }
        LabelGrid::from_probs(self.levels, self.width, self.probs.clone())
    }

    /// Summed cross-entropy of the trace against a hard gold grid.
    pub fn ce_loss<A: LabelAlphabet>(&self, gold: &LabelGrid<A>) -> Result<f64> {
        if A::SIZE != self.alphabet_size {
            return Err(Error::shape("alphabet mismatch".to_string()));
        }
        if gold.levels() != self.levels || gold.width() != self.width {
            return Err(Error::shape(format!(
                "gold grid {}x{} against trace {}x{}",
                gold.levels(),
                gold.width(),
                self.levels,
                self.width
            )));
        }
        let mut total = 0.0;
        for m in 0..self.levels {
            for n in 0..self.width {
                let target = gold.hard(m, n).index();
                total -= self.prob(m, n, target).max(f64::MIN_POSITIVE).ln();
            }
        }
        Ok(total)
    }
}

fn trace_from(tf: &TapeForward, params: &ModelParameters) -> ForwardTrace {
    let k = params.config.task.alphabet_size();
    let mut probs = Vec::with_capacity(tf.level_probs.len() * tf.width * k);
    for pv in &tf.probs_values {
        probs.extend(pv.iter().copied());
    }
    ForwardTrace {
        levels: tf.probs_values.len(),
        width: tf.width,
        alphabet_size: k,
        probs,
        hard: tf.hard.iter().flatten().copied().collect(),
        encoder_invocations: params.encoder_invocations(),
    }
}

/// Contextual embeddings for a sentence (one row per token, appended
/// tokens included). Counts as one encoder invocation.
pub fn encode(params: &ModelParameters, sentence: &Sentence) -> Result<Array2<f64>> {
    let ids = params.token_ids(sentence);
    let cfg = &params.config;
    let n = ids.len();
    if n > cfg.max_positions {
        return Err(Error::validation(format!(
            "sentence of {n} tokens exceeds max_positions {}",
            cfg.max_positions
        )));
    }
    let mut tape = Tape::new();
    let bound = bind(&mut tape, params);
    let tok = tape.gather_rows(bound.token, ids);
    let pos = tape.gather_rows(bound.position, (0..n).collect());
    let mut x = tape.add(tok, pos);
    for layer in &bound.encoder {
        x = transformer_layer(&mut tape, x, layer, cfg.num_heads);
    }
    params.encoder_invocations.fetch_add(1, Ordering::Relaxed);
    Ok(tape.value(x).clone())
}

/// Run the full grid forward: encode once, then fill all levels.
pub fn grid_forward(params: &ModelParameters, sentence: &Sentence) -> Result<ForwardTrace> {
    let ids = params.token_ids(sentence);
    let tf = forward_tape(params, &ids, None)?;
    Ok(trace_from(&tf, params))
}

/// A parameter set typed by its label alphabet, usable as a
/// [`GridLabeler`] in the pipeline.
pub struct TaskModel<A: LabelAlphabet> {
    pub params: ModelParameters,
    _alphabet: std::marker::PhantomData<A>,
}

impl<A: LabelAlphabet> TaskModel<A> {
    pub fn new(params: ModelParameters) -> Result<Self> {
        if params.config.task.name() != A::NAME {
            return Err(Error::validation(format!(
                "checkpoint is a {} model, expected {}",
                params.config.task.name(),
                A::NAME
            )));
        }
        Ok(TaskModel {
            params,
            _alphabet: std::marker::PhantomData,
        })
    }

    pub fn forward(&self, sentence: &Sentence) -> Result<ForwardTrace> {
        grid_forward(&self.params, sentence)
    }

    pub fn encoder_invocations(&self) -> u64 {
        self.params.encoder_invocations()
    }
}

impl<A: LabelAlphabet> GridLabeler<A> for TaskModel<A> {
    fn label_grid(&self, sentence: &Sentence) -> Result<LabelGrid<A>> {
        self.forward(sentence)?.grid::<A>()
    }
}

/// Convenience: tokenize, append specials, and run a tuple-task forward.
pub fn forward_raw(params: &ModelParameters, raw: &str) -> Result<(Arc<Sentence>, ForwardTrace)> {
    let sentence = Arc::new(crate::lingo::tokenize(raw)?.with_appended()?);
    let trace = grid_forward(params, &sentence)?;
    Ok((sentence, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lingo::tokenize;
    use crate::types::TupleLabel;

    fn tiny_config(seed: u64) -> EncoderConfig {
        let s1 = tokenize("rome is the capital of italy").unwrap();
        let s2 = tokenize("talks resumed between usa and china").unwrap();
        let vocab = Vocab::build([&s1, &s2]);
        let mut cfg = EncoderConfig::new(GridTask::Tuple, vocab);
        cfg.embed_dim = 16;
        cfg.num_heads = 2;
        cfg.encoder_layers = 1;
        cfg.iterative_layers = 1;
        cfg.max_levels = 3;
        cfg.ffn_hidden = 16;
        cfg.seed = seed;
        cfg
    }

    fn sentence() -> Sentence {
        tokenize("rome is the capital of italy")
            .unwrap()
            .with_appended()
            .unwrap()
    }

    #[test]
    fn forward_shapes_and_normalization() {
        let params = ModelParameters::init(tiny_config(1)).unwrap();
        let trace = grid_forward(&params, &sentence()).unwrap();
        assert_eq!(trace.levels, 3);
        assert_eq!(trace.width, 9);
        assert_eq!(trace.alphabet_size, 4);
        for m in 0..trace.levels {
            for n in 0..trace.width {
                let sum: f64 = (0..4).map(|k| trace.prob(m, n, k)).sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
        // typed grid view round-trips
        let grid = trace.grid::<TupleLabel>().unwrap();
        assert_eq!(grid.levels(), 3);
    }

    #[test]
    fn encoder_runs_once_per_forward_independent_of_depth() {
        for levels in [1, 5] {
            let mut cfg = tiny_config(2);
            cfg.max_levels = levels;
            let params = ModelParameters::init(cfg).unwrap();
            assert_eq!(params.encoder_invocations(), 0);
            grid_forward(&params, &sentence()).unwrap();
            assert_eq!(params.encoder_invocations(), 1);
            grid_forward(&params, &sentence()).unwrap();
            assert_eq!(params.encoder_invocations(), 2);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let params = ModelParameters::init(tiny_config(3)).unwrap();
        let a = grid_forward(&params, &sentence()).unwrap();
        let b = grid_forward(&params, &sentence()).unwrap();
        assert_eq!(a.probs, b.probs);
        let again = ModelParameters::init(tiny_config(3)).unwrap();
        let c = grid_forward(&again, &sentence()).unwrap();
        assert_eq!(a.probs, c.probs);
    }

    #[test]
    fn positional_embeddings_distinguish_orderings() {
        let params = ModelParameters::init(tiny_config(4)).unwrap();
        let a = tokenize("rome is the capital").unwrap();
        let b = tokenize("the rome is capital").unwrap();
        let ea = encode(&params, &a).unwrap();
        let eb = encode(&params, &b).unwrap();
        assert_ne!(ea, eb);
    }

    #[test]
    fn parameter_count_independent_of_levels() {
        let mut c1 = tiny_config(5);
        c1.max_levels = 1;
        let mut c5 = tiny_config(5);
        c5.max_levels = 5;
        let p1 = ModelParameters::init(c1).unwrap();
        let p5 = ModelParameters::init(c5).unwrap();
        assert_eq!(p1.param_count(), p5.param_count());
    }

    #[test]
    fn zeroed_label_embedding_makes_levels_feedback_free() {
        let mut params = ModelParameters::init(tiny_config(6)).unwrap();
        let ids = params.token_ids(&sentence());
        // distinct fake feedback paths
        let all_none: Vec<Vec<usize>> = vec![vec![3; ids.len()]; 3];
        let all_subject: Vec<Vec<usize>> = vec![vec![0; ids.len()]; 3];
        // with the label table zeroed, the fed-back labels cannot matter
        params.label_embedding.fill(0.0);
        let a = forward_tape(&params, &ids, Some(&all_none)).unwrap();
        let b = forward_tape(&params, &ids, Some(&all_subject)).unwrap();
        assert_eq!(a.probs_values, b.probs_values);
        // with a random table they do matter
        let params2 = ModelParameters::init(tiny_config(6)).unwrap();
        let c = forward_tape(&params2, &ids, Some(&all_none)).unwrap();
        let d = forward_tape(&params2, &ids, Some(&all_subject)).unwrap();
        assert_ne!(c.probs_values, d.probs_values);
    }

    #[test]
    fn ce_loss_matches_analytic_values() {
        let params = ModelParameters::init(tiny_config(7)).unwrap();
        let trace = grid_forward(&params, &sentence()).unwrap();
        // uniform cell contributes ln 4
        let uniform = ForwardTrace {
            levels: 1,
            width: 1,
            alphabet_size: 4,
            probs: vec![0.25; 4],
            hard: vec![0],
            encoder_invocations: 0,
        };
        let gold = LabelGrid::from_hard(vec![vec![TupleLabel::Subject]]).unwrap();
        let v = uniform.ce_loss(&gold).unwrap();
        assert!((v - 4.0f64.ln()).abs() < 1e-12);
        // a one-hot trace on its own argmax labels scores ~0 only if the
        // probabilities are exactly 1; the random trace is just finite
        let rows: Vec<Vec<TupleLabel>> = (0..trace.levels)
            .map(|m| {
                (0..trace.width)
                    .map(|n| TupleLabel::from_index(trace.hard_index(m, n)))
                    .collect()
            })
            .collect();
        let gold = LabelGrid::from_hard(rows).unwrap();
        assert!(trace.ce_loss(&gold).unwrap().is_finite());
        // independent scalar recomputation over a small random grid
        let manual: f64 = (0..trace.levels)
            .flat_map(|m| (0..trace.width).map(move |n| (m, n)))
            .map(|(m, n)| -trace.prob(m, n, gold_index(&gold, m, n)).ln())
            .sum();
        assert!((trace.ce_loss(&gold).unwrap() - manual).abs() < 1e-9);
    }

    fn gold_index(g: &LabelGrid<TupleLabel>, m: usize, n: usize) -> usize {
        g.hard(m, n).index()
    }

    #[test]
    fn tape_penalties_match_scalar_penalties() {
        use crate::constraints;
        let params = ModelParameters::init(tiny_config(8)).unwrap();
        let s = sentence();
        let ids = params.token_ids(&s);
        let mut tf = forward_tape(&params, &ids, None).unwrap();
        let masks = TokenMasks {
            important: vec![true, false, false, true, false, true, false, false, false],
            head_verb: vec![false, false, false, true, false, false, false, false, false],
        };
        let [posc, hvc, hve, ec] = penalty_vars(&mut tf, &masks).unwrap();
        let tape_vals = [
            tf.tape.scalar(posc),
            tf.tape.scalar(hvc),
            tf.tape.scalar(hve),
            tf.tape.scalar(ec),
        ];
        let trace = trace_from(&tf, &params);
        let grid = trace.grid::<TupleLabel>().unwrap();
        let scalar_vals = constraints::all_penalties(&grid, &masks).unwrap();
        for (t, s) in tape_vals.iter().zip(scalar_vals.iter()) {
            assert!((t - s).abs() < 1e-9, "tape {t} vs scalar {s}");
        }
    }

    #[test]
    fn task_model_validates_alphabet() {
        let params = ModelParameters::init(tiny_config(9)).unwrap();
        assert!(TaskModel::<TupleLabel>::new(params.clone()).is_ok());
        assert!(TaskModel::<crate::types::CoordLabel>::new(params).is_err());
    }

    #[test]
    fn oversized_sentence_is_rejected() {
        let mut cfg = tiny_config(10);
        cfg.max_positions = 4;
        let params = ModelParameters::init(cfg).unwrap();
        assert!(grid_forward(&params, &sentence()).is_err());
    }
}

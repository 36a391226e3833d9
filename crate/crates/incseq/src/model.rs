//! Minimal differentiable tagger.
//!
//! Per-token features come from a window encoder: the embeddings of the
//! tokens in a context window of radius `w` are concatenated, passed through
//! one affine layer, and squashed with `tanh`. A linear classifier over those
//! features produces one logit per currently-visible class. The classifier
//! grows as tasks add classes; rows for previously learned classes are
//! preserved verbatim at expansion time.
//!
//! Everything is differentiated by hand, so gradients are exact and can be
//! validated against central finite differences.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::TokenSequence;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self * x` for a column vector `x`.
    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect()
    }

    /// `self^T * y` for a column vector `y`.
    fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += yr * a;
            }
        }
        out
    }

    /// Accumulates the outer product `y * x^T`.
    fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, &xv) in self.row_mut(r).iter_mut().zip(x) {
                *o += yr * xv;
            }
        }
    }

    fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.cols);
        self.data.extend(row);
        self.rows += 1;
    }
}

/// Token-to-index map with a shared out-of-vocabulary bucket.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from tokens in first-seen order.
    pub fn from_corpus<'a>(sequences: impl IntoIterator<Item = &'a TokenSequence>) -> Self {
        let mut vocab = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for seq in sequences {
            for token in &seq.tokens {
                if !vocab.index.contains_key(token) {
                    vocab.index.insert(token.clone(), vocab.tokens.len());
                    vocab.tokens.push(token.clone());
                }
            }
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index for `token`, falling back to the OOV bucket.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.tokens.len())
    }

    /// Index of the OOV bucket (one past the known tokens).
    pub fn oov_index(&self) -> usize {
        self.tokens.len()
    }
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

/// Encoder and classifier dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Context window radius; each token sees `2 * window + 1` embeddings.
    pub window: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            hidden_dim: 64,
            window: 2,
        }
    }
}

/// The tagger: embedding table, window encoder, expanding linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerModel {
    vocab: Vocab,
    config: ModelConfig,
    /// `(len(vocab) + 1) x embed_dim`; the extra row is the OOV bucket.
    embedding: Mat,
    /// `hidden_dim x (embed_dim * (2 * window + 1))`.
    w1: Mat,
    b1: Vec<f64>,
    /// Classifier weights, one row per visible class.
    w2: Mat,
    b2: Vec<f64>,
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

/// Cached activations from one forward pass, enough to run backprop.
pub struct ForwardPass {
    /// One length-C logit vector per token.
    pub logits: Vec<Vec<f64>>,
    /// One length-d feature vector per token (encoder output).
    pub features: Vec<Vec<f64>>,
    /// Per token: the embedding row used in each window slot, `None` where
    /// the window runs past the sequence boundary (zero padding).
    context_ids: Vec<Vec<Option<usize>>>,
}

/// Parameter gradients, shaped exactly like [`TaggerModel`]'s parameters.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub embedding: Mat,
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros_like(model: &TaggerModel) -> Self {
        Self {
            embedding: Mat::zeros(model.embedding.rows, model.embedding.cols),
            w1: Mat::zeros(model.w1.rows, model.w1.cols),
            b1: vec![0.0; model.b1.len()],
            w2: Mat::zeros(model.w2.rows, model.w2.cols),
            b2: vec![0.0; model.b2.len()],
        }
    }

    /// Gradient slices for the backbone group (embedding, encoder).
    pub fn backbone_slices(&self) -> [&[f64]; 3] {
        [self.embedding.as_slice(), self.w1.as_slice(), &self.b1]
    }

    /// Gradient slices for the classifier group.
    pub fn classifier_slices(&self) -> [&[f64]; 2] {
        [self.w2.as_slice(), &self.b2]
    }

    pub fn is_finite(&self) -> bool {
        self.backbone_slices()
            .into_iter()
            .chain(self.classifier_slices())
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

fn init_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

impl TaggerModel {
    /// Creates a model with a single class (the non-entity class). Entity
    /// classes are added by [`TaggerModel::expand_classifier`] as tasks
    /// arrive.
    pub fn new(vocab: Vocab, config: ModelConfig, seed: u64) -> Result<Self> {
        if config.embed_dim == 0 || config.hidden_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let span = config.embed_dim * (2 * config.window + 1);
        let embedding = Mat::uniform(
            vocab.len() + 1,
            config.embed_dim,
            init_bound(config.embed_dim),
            &mut rng,
        );
        let w1 = Mat::uniform(config.hidden_dim, span, init_bound(span), &mut rng);
        let w2 = Mat::uniform(1, config.hidden_dim, init_bound(config.hidden_dim), &mut rng);
        Ok(Self {
            vocab,
            config,
            embedding,
            w1,
            b1: vec![0.0; config.hidden_dim],
            w2,
            b2: vec![0.0],
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Number of currently visible classes (O included).
    pub fn num_classes(&self) -> usize {
        self.w2.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.config.hidden_dim
    }

    fn concat_window(&self, ids: &[Option<usize>]) -> Vec<f64> {
        let e = self.config.embed_dim;
        let mut x = vec![0.0; e * ids.len()];
        for (slot, id) in ids.iter().enumerate() {
            if let Some(id) = *id {
                x[slot * e..(slot + 1) * e].copy_from_slice(self.embedding.row(id));
            }
        }
        x
    }

    /// Runs the encoder and classifier over every token of a sequence.
    pub fn forward(&self, tokens: &[String]) -> ForwardPass {
        let w = self.config.window as isize;
        let n = tokens.len() as isize;
        let ids: Vec<usize> = tokens.iter().map(|t| self.vocab.lookup(t)).collect();
        let mut pass = ForwardPass {
            logits: Vec::with_capacity(tokens.len()),
            features: Vec::with_capacity(tokens.len()),
            context_ids: Vec::with_capacity(tokens.len()),
        };
        for j in 0..n {
            let context: Vec<Option<usize>> = (j - w..=j + w)
                .map(|k| {
                    if k < 0 || k >= n {
                        None
                    } else {
                        Some(ids[k as usize])
                    }
                })
                .collect();
            let x = self.concat_window(&context);
            let mut h = self.w1.matvec(&x);
            for (hv, &b) in h.iter_mut().zip(&self.b1) {
                *hv = (*hv + b).tanh();
            }
            let mut logits = self.w2.matvec(&h);
            for (l, &b) in logits.iter_mut().zip(&self.b2) {
                *l += b;
            }
            pass.logits.push(logits);
            pass.features.push(h);
            pass.context_ids.push(context);
        }
        pass
    }

    /// Backpropagates per-token logit gradients into `grads`.
    ///
    /// `dlogits[j]` is dL/d(logit vector of token j); tokens whose entry is
    /// all zero cost nothing.
    pub fn backward(&self, pass: &ForwardPass, dlogits: &[Vec<f64>], grads: &mut ParamGrads) {
        debug_assert_eq!(dlogits.len(), pass.logits.len());
        let e = self.config.embed_dim;
        for (j, dlogit) in dlogits.iter().enumerate() {
            if dlogit.iter().all(|&g| g == 0.0) {
                continue;
            }
            let h = &pass.features[j];
            grads.w2.add_outer(dlogit, h);
            for (g, &d) in grads.b2.iter_mut().zip(dlogit) {
                *g += d;
            }
            let dh = self.w2.matvec_t(dlogit);
            let dpre: Vec<f64> = dh
                .iter()
                .zip(h)
                .map(|(&dhv, &hv)| dhv * (1.0 - hv * hv))
                .collect();
            let x = self.concat_window(&pass.context_ids[j]);
            grads.w1.add_outer(&dpre, &x);
            for (g, &d) in grads.b1.iter_mut().zip(&dpre) {
                *g += d;
            }
            let dx = self.w1.matvec_t(&dpre);
            for (slot, id) in pass.context_ids[j].iter().enumerate() {
                if let Some(id) = *id {
                    let row = grads.embedding.row_mut(id);
                    for (g, &d) in row.iter_mut().zip(&dx[slot * e..(slot + 1) * e]) {
                        *g += d;
                    }
                }
            }
        }
    }

    /// Grows the classifier by `new_classes` rows. Existing rows and bias
    /// entries are untouched; new rows draw from `uniform(-1/sqrt(d),
    /// 1/sqrt(d))` under the given seed, new bias entries are zero.
    pub fn expand_classifier(&mut self, new_classes: usize, seed: u64) -> Result<()> {
        if new_classes == 0 {
            return Err(Error::Config("classifier expansion must add at least one class".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = init_bound(self.config.hidden_dim);
        for _ in 0..new_classes {
            let row = (0..self.config.hidden_dim)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            self.w2.push_row(row);
            self.b2.push(0.0);
        }
        Ok(())
    }

    /// Parameter slices in a fixed order: embedding, w1, b1, w2, b2.
    pub fn param_slices(&self) -> [&[f64]; 5] {
        [
            self.embedding.as_slice(),
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
        ]
    }

    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.embedding.as_mut_slice(),
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    /// Mutable backbone parameter slices (embedding, encoder), matching
    /// [`ParamGrads::backbone_slices`] order.
    pub fn backbone_slices_mut(&mut self) -> [&mut [f64]; 3] {
        [
            self.embedding.as_mut_slice(),
            self.w1.as_mut_slice(),
            &mut self.b1,
        ]
    }

    /// Mutable classifier parameter slices, matching
    /// [`ParamGrads::classifier_slices`] order.
    pub fn classifier_slices_mut(&mut self) -> [&mut [f64]; 2] {
        [self.w2.as_mut_slice(), &mut self.b2]
    }

    /// Classifier weight matrix (one row per class).
    pub fn classifier_weights(&self) -> &Mat {
        &self.w2
    }

    pub fn classifier_bias(&self) -> &[f64] {
        &self.b2
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Takes a frozen deep copy for distillation targets.
    pub fn snapshot(&self, task_id: usize) -> ModelSnapshot {
        ModelSnapshot {
            model: self.clone(),
            taken_at_task: task_id,
        }
    }

    fn validate(&self) -> Result<()> {
        let span = self.config.embed_dim * (2 * self.config.window + 1);
        let ok = self.embedding.rows == self.vocab.len() + 1
            && self.embedding.cols == self.config.embed_dim
            && self.w1.rows == self.config.hidden_dim
            && self.w1.cols == span
            && self.b1.len() == self.config.hidden_dim
            && self.w2.cols == self.config.hidden_dim
            && self.b2.len() == self.w2.rows
            && self.w2.rows >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("model parameter shapes are inconsistent".into()))
        }
    }

    /// Writes a versioned JSON checkpoint of the model alone.
    pub fn save(&self, path: &Path) -> Result<()> {
        let envelope = ModelEnvelope {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        std::fs::write(path, serde_json::to_string(&envelope)?)?;
        Ok(())
    }

    /// Loads a checkpoint written by [`TaggerModel::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let envelope: ModelEnvelope = serde_json::from_str(&text)?;
        if envelope.format != MODEL_FORMAT || envelope.version != MODEL_VERSION {
            return Err(Error::Data(format!(
                "unsupported model container {}/{}",
                envelope.format, envelope.version
            )));
        }
        envelope.model.validate()?;
        Ok(envelope.model)
    }
}

const MODEL_FORMAT: &str = "incseq-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelEnvelope {
    format: String,
    version: u32,
    model: TaggerModel,
}

/// Frozen copy of a model, taken before a task starts training.
///
/// It only hands out immutable access, so its outputs for a given input never
/// change.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSnapshot {
    model: TaggerModel,
    taken_at_task: usize,
}

impl ModelSnapshot {
    pub fn forward(&self, tokens: &[String]) -> ForwardPass {
        self.model.forward(tokens)
    }

    pub fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    pub fn taken_at_task(&self) -> usize {
        self.taken_at_task
    }

    /// A snapshot of a snapshot is just a copy.
    pub fn resnapshot(&self) -> ModelSnapshot {
        self.clone()
    }
}

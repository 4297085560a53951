//! Skip-gram with negative sampling.
//!
//! Covers background training, continued few-shot training on an episode
//! (plain, selective, Nonce2Vec-scheduled) and the FastText-style variant
//! where a word's input representation is its own row plus the rows of its
//! hashed character n-grams.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    count_frequencies, subsample_weight, Corpus, Episode, NegativeDistribution, SubsampleMode, PLACEHOLDER,
};
use crate::embedstore::{read_vectors, write_vectors, EmbeddingSpace};
use crate::error::{Error, Result};

pub const NGRAM_MIN: usize = 3;
pub const NGRAM_MAX: usize = 5;
pub const DEFAULT_BUCKETS: usize = 100_000;

/// Boundary-marked character n-grams of `word`, lengths `min_n..=max_n`.
pub fn char_ngrams(word: &str, min_n: usize, max_n: usize) -> Vec<String> {
    let chars: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    for n in min_n..=max_n {
        if n > chars.len() {
            break;
        }
        for w in chars.windows(n) {
            out.push(w.iter().collect());
        }
    }
    out
}

/// FNV-1a over the UTF-8 bytes, as used for fastText bucket hashing.
pub fn ngram_bucket(ngram: &str, buckets: usize) -> usize {
    let mut h: u32 = 2_166_136_261;
    for &b in ngram.as_bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(16_777_619);
    }
    h as usize % buckets
}

fn uniform_init(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Array2<f64> {
    let half = 0.5 / dim as f64;
    Array2::from_shape_simple_fn((rows, dim), || rng.random_range(-half..half))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    #[default]
    Standard,
    Selective,
    Nonce2vec,
    Fasttext,
    FasttextSelective,
}

impl TrainMode {
    pub fn is_selective(self) -> bool {
        matches!(self, TrainMode::Selective | TrainMode::FasttextSelective)
    }

    pub fn uses_subwords(self) -> bool {
        matches!(self, TrainMode::Fasttext | TrainMode::FasttextSelective)
    }
}

/// High initial learning rate with exponential per-token decay.
///
/// Defaults are imported from the original Nonce2Vec release and can all be
/// overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonceSchedule {
    pub initial_rate: f64,
    pub decay: f64,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
}

impl Default for NonceSchedule {
    fn default() -> Self {
        NonceSchedule {
            initial_rate: 1.0,
            decay: (-1.0f64 / 70.0).exp(),
            window: 15,
            negatives: 3,
            epochs: 1,
        }
    }
}

impl NonceSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidArgument("nonce decay must lie in (0, 1]".into()));
        }
        if !(self.initial_rate > 0.0) {
            return Err(Error::InvalidArgument("nonce learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Discard threshold; `None` disables subsampling.
    pub subsample: Option<f64>,
    pub min_count: u64,
    pub dim: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub trainable_words: BTreeSet<String>,
    pub excluded_negatives: BTreeSet<String>,
    /// Hash buckets for n-gram rows (subword modes).
    pub buckets: usize,
    pub nonce: NonceSchedule,
    /// Worker threads for background training; 1 is deterministic.
    pub threads: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 0.025,
            window: 5,
            negatives: 5,
            epochs: 5,
            subsample: Some(1e-5),
            min_count: 50,
            dim: 300,
            seed: 1,
            mode: TrainMode::Standard,
            trainable_words: BTreeSet::new(),
            excluded_negatives: BTreeSet::new(),
            buckets: DEFAULT_BUCKETS,
            nonce: NonceSchedule::default(),
            threads: 1,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument("learning rate must be non-negative".into()));
        }
        if self.window == 0 || self.dim == 0 {
            return Err(Error::InvalidArgument("window and dim must be positive".into()));
        }
        if let Some(t) = self.subsample {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument("subsample threshold must be positive".into()));
            }
        }
        if self.mode.uses_subwords() && self.buckets == 0 {
            return Err(Error::InvalidArgument("subword modes need at least one bucket".into()));
        }
        if self.mode == TrainMode::Nonce2vec {
            self.nonce.validate()?;
        }
        Ok(())
    }
}

/// Hashed character n-gram rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramTable {
    pub vectors: Array2<f64>,
    pub min_n: usize,
    pub max_n: usize,
}

impl NgramTable {
    pub fn buckets(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn bucket_ids(&self, word: &str) -> Vec<usize> {
        char_ngrams(word, self.min_n, self.max_n)
            .iter()
            .map(|g| ngram_bucket(g, self.buckets()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsModel {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
    pub input: Array2<f64>,
    pub output: Array2<f64>,
    pub ngrams: Option<NgramTable>,
}

impl SgnsModel {
    pub fn new(
        vocab: Vec<String>,
        counts: Vec<u64>,
        input: Array2<f64>,
        output: Array2<f64>,
        ngrams: Option<NgramTable>,
    ) -> Result<Self> {
        let n = vocab.len();
        if counts.len() != n || input.nrows() != n || output.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: input.nrows(),
            });
        }
        if input.ncols() != output.ncols() {
            return Err(Error::DimensionMismatch {
                expected: input.ncols(),
                actual: output.ncols(),
            });
        }
        if let Some(t) = &ngrams {
            if t.vectors.ncols() != input.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: input.ncols(),
                    actual: t.vectors.ncols(),
                });
            }
        }
        let mut index = HashMap::with_capacity(n);
        for (i, w) in vocab.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::DuplicateWord(w.clone()));
            }
        }
        Ok(SgnsModel {
            vocab,
            index,
            counts,
            input,
            output,
            ngrams,
        })
    }

    pub fn dim(&self) -> usize {
        self.input.ncols()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Add a zero-count word; its input row is uniform in ±0.5/d from `seed`.
    pub fn register_word(&mut self, word: &str, seed: u64) -> usize {
        if let Some(i) = self.index_of(word) {
            return i;
        }
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let row = uniform_init(&mut rng, 1, d);
        let i = self.vocab.len();
        self.input.push_row(row.row(0)).expect("dim matches");
        self.output.push_row(Array1::zeros(d).view()).expect("dim matches");
        self.vocab.push(word.to_string());
        self.counts.push(0);
        self.index.insert(word.to_string(), i);
        i
    }

    /// Row that few-shot training on `surface` should use.
    ///
    /// A zero-count row of that name is reused. A background word (count > 0)
    /// is never trained in place; a fresh `<TRG>`-prefixed row stands in for it.
    pub fn target_row(&mut self, surface: &str, seed: u64) -> usize {
        let mut key = surface.to_string();
        while self.index_of(&key).is_some_and(|i| self.counts[i] > 0) {
            key.insert_str(0, PLACEHOLDER);
        }
        self.register_word(&key, seed)
    }

    /// Input representation of a vocabulary row (composed with n-grams when present).
    pub fn input_vector(&self, idx: usize) -> Array1<f64> {
        let mut v = self.input.row(idx).to_owned();
        if let Some(t) = &self.ngrams {
            for b in t.bucket_ids(&self.vocab[idx]) {
                v += &t.vectors.row(b);
            }
        }
        v
    }

    /// Background space built from the input vectors.
    pub fn to_space(&self, composed: bool) -> Result<EmbeddingSpace> {
        let vectors = if composed && self.ngrams.is_some() {
            let mut m = Array2::zeros(self.input.raw_dim());
            for i in 0..self.vocab.len() {
                m.row_mut(i).assign(&self.input_vector(i));
            }
            m
        } else {
            self.input.clone()
        };
        EmbeddingSpace::new(self.vocab.clone(), vectors, self.counts.clone())
    }

    fn word_ngrams(&self) -> Vec<Vec<usize>> {
        match &self.ngrams {
            Some(t) => self.vocab.iter().map(|w| t.bucket_ids(w)).collect(),
            None => Vec::new(),
        }
    }

    pub fn output_path(vectors_path: &Path) -> PathBuf {
        sidecar(vectors_path, "out")
    }

    pub fn ngrams_path(vectors_path: &Path) -> PathBuf {
        sidecar(vectors_path, "ngrams")
    }

    pub fn rows_path(vectors_path: &Path) -> PathBuf {
        sidecar(vectors_path, "rows")
    }

    /// Write the background space (composed vectors when n-grams exist) plus
    /// sidecars: `.out` output rows, and for subword models `.ngrams` bucket
    /// rows and `.rows` raw word rows.
    pub fn save(&self, vectors_path: impl AsRef<Path>, counts_path: impl AsRef<Path>) -> Result<()> {
        let vp = vectors_path.as_ref();
        crate::embedstore::save_space(&self.to_space(true)?, vp, counts_path)?;
        let op = Self::output_path(vp);
        write_file(&op, |w| write_vectors(w, &self.vocab, &self.output))?;
        let np = Self::ngrams_path(vp);
        let rp = Self::rows_path(vp);
        match &self.ngrams {
            Some(t) => {
                let ids: Vec<String> = (0..t.buckets()).map(|i| i.to_string()).collect();
                write_file(&np, |w| write_vectors(w, &ids, &t.vectors))?;
                write_file(&rp, |w| write_vectors(w, &self.vocab, &self.input))?;
            }
            None => {
                for p in [&np, &rp] {
                    if p.exists() {
                        std::fs::remove_file(p).map_err(|e| Error::io(p, e))?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether the sidecars needed by [`Self::load`] exist next to `vectors_path`.
    pub fn has_sidecars(vectors_path: &Path) -> bool {
        Self::output_path(vectors_path).exists()
    }

    pub fn load(vectors_path: impl AsRef<Path>, counts_path: impl AsRef<Path>) -> Result<Self> {
        let vp = vectors_path.as_ref();
        let space = crate::embedstore::load_space(vp, counts_path)?;
        let read_aligned = |p: &Path| -> Result<Array2<f64>> {
            let f = File::open(p).map_err(|e| Error::io(p, e))?;
            let (words, m) = read_vectors(BufReader::new(f), p)?;
            if words != space.words() {
                return Err(Error::format(p, 1, "vocabulary differs from the vectors file"));
            }
            Ok(m)
        };
        let output = read_aligned(&Self::output_path(vp))?;
        let np = Self::ngrams_path(vp);
        let (input, ngrams) = if np.exists() {
            let f = File::open(&np).map_err(|e| Error::io(&np, e))?;
            let (_, vectors) = read_vectors(BufReader::new(f), &np)?;
            let table = NgramTable {
                vectors,
                min_n: NGRAM_MIN,
                max_n: NGRAM_MAX,
            };
            (read_aligned(&Self::rows_path(vp))?, Some(table))
        } else {
            (space.vectors().clone(), None)
        };
        SgnsModel::new(space.words().to_vec(), space.counts().to_vec(), input, output, ngrams)
    }
}

fn sidecar(p: &Path, ext: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// FastText composition: n-gram bucket sum, plus the word row for known words.
pub fn compose_subword(word: &str, model: &SgnsModel) -> Result<Array1<f64>> {
    let table = model
        .ngrams
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("model has no n-gram table".into()))?;
    if word.is_empty() {
        return Err(Error::InvalidArgument("cannot compose an empty word".into()));
    }
    let mut v = match model.index_of(word) {
        Some(i) => model.input.row(i).to_owned(),
        None => Array1::zeros(model.dim()),
    };
    for b in table.bucket_ids(word) {
        v += &table.vectors.row(b);
    }
    Ok(v)
}

/// Alias-method sampler over a negative distribution with some words removed.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    support: Vec<usize>,
    alias: WeightedAliasIndex<f64>,
}

impl NegativeSampler {
    /// Renormalizes over the indices for which `excluded` is false.
    pub fn new(dist: &NegativeDistribution, excluded: impl Fn(usize) -> bool) -> Result<Self> {
        let (support, weights): (Vec<usize>, Vec<f64>) = dist
            .probs()
            .iter()
            .enumerate()
            .filter(|&(i, &p)| p > 0.0 && !excluded(i))
            .map(|(i, &p)| (i, p))
            .unzip();
        if support.is_empty() {
            return Err(Error::Empty("every negative candidate is excluded".into()));
        }
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::InvalidArgument(format!("negative distribution: {e}")))?;
        Ok(NegativeSampler { support, alias })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.support[self.alias.sample(rng)]
    }
}

/// Draw one negative index; `exclude` holds vocabulary indices.
pub fn negative_sample<R: Rng + ?Sized>(
    dist: &NegativeDistribution,
    rng: &mut R,
    exclude: &HashSet<usize>,
) -> Result<usize> {
    Ok(NegativeSampler::new(dist, |i| exclude.contains(&i))?.sample(rng))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Parameter access used by the update rule.
trait Store {
    fn load_input(&self, w: usize, out: &mut [f64]);
    fn load_output(&self, w: usize, out: &mut [f64]);
    fn add_input(&mut self, w: usize, delta: &[f64]);
    fn add_output(&mut self, w: usize, delta: &[f64]);
}

struct LocalStore<'a> {
    input: &'a mut Array2<f64>,
    output: &'a mut Array2<f64>,
    ngrams: Option<&'a mut Array2<f64>>,
    word_ngrams: &'a [Vec<usize>],
    /// Rows allowed to change; `None` means all.
    trainable: Option<&'a [bool]>,
    update_ngrams: bool,
}

impl LocalStore<'_> {
    fn may_update(&self, w: usize) -> bool {
        self.trainable.is_none_or(|m| m[w])
    }
}

fn axpy(mut row: ndarray::ArrayViewMut1<'_, f64>, delta: &[f64]) {
    for (x, d) in row.iter_mut().zip(delta) {
        *x += d;
    }
}

impl Store for LocalStore<'_> {
    fn load_input(&self, w: usize, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(self.input.row(w)) {
            *o = *x;
        }
        if let Some(ng) = &self.ngrams {
            for &b in &self.word_ngrams[w] {
                for (o, x) in out.iter_mut().zip(ng.row(b)) {
                    *o += x;
                }
            }
        }
    }

    fn load_output(&self, w: usize, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(self.output.row(w)) {
            *o = *x;
        }
    }

    fn add_input(&mut self, w: usize, delta: &[f64]) {
        if !self.may_update(w) {
            return;
        }
        axpy(self.input.row_mut(w), delta);
        if self.update_ngrams {
            if let Some(ng) = self.ngrams.as_mut() {
                for &b in &self.word_ngrams[w] {
                    axpy(ng.row_mut(b), delta);
                }
            }
        }
    }

    fn add_output(&mut self, w: usize, delta: &[f64]) {
        if self.may_update(w) {
            axpy(self.output.row_mut(w), delta);
        }
    }
}

/// Lock-free shared parameters for parallel background training.
///
/// Rows are read and written with relaxed atomics and no synchronization;
/// concurrent updates to the same row may overwrite each other.
struct AtomicStore {
    dim: usize,
    input: Vec<AtomicU64>,
    output: Vec<AtomicU64>,
    ngrams: Vec<AtomicU64>,
    word_ngrams: Vec<Vec<usize>>,
}

impl AtomicStore {
    fn from_matrix(m: &Array2<f64>) -> Vec<AtomicU64> {
        m.iter().map(|v| AtomicU64::new(v.to_bits())).collect()
    }

    fn to_matrix(v: &[AtomicU64], dim: usize) -> Array2<f64> {
        let data = v.iter().map(|a| f64::from_bits(a.load(Ordering::Relaxed))).collect();
        Array2::from_shape_vec((v.len() / dim, dim), data).expect("row-major")
    }

    fn load(slab: &[AtomicU64], row: usize, dim: usize, out: &mut [f64], accumulate: bool) {
        let s = &slab[row * dim..(row + 1) * dim];
        for (o, a) in out.iter_mut().zip(s) {
            let x = f64::from_bits(a.load(Ordering::Relaxed));
            if accumulate {
                *o += x;
            } else {
                *o = x;
            }
        }
    }

    fn add(slab: &[AtomicU64], row: usize, dim: usize, delta: &[f64]) {
        let s = &slab[row * dim..(row + 1) * dim];
        for (a, d) in s.iter().zip(delta) {
            let x = f64::from_bits(a.load(Ordering::Relaxed));
            a.store((x + d).to_bits(), Ordering::Relaxed);
        }
    }
}

struct SharedHandle<'a>(&'a AtomicStore);

impl Store for SharedHandle<'_> {
    fn load_input(&self, w: usize, out: &mut [f64]) {
        let s = self.0;
        AtomicStore::load(&s.input, w, s.dim, out, false);
        if !s.ngrams.is_empty() {
            for &b in &s.word_ngrams[w] {
                AtomicStore::load(&s.ngrams, b, s.dim, out, true);
            }
        }
    }

    fn load_output(&self, w: usize, out: &mut [f64]) {
        AtomicStore::load(&self.0.output, w, self.0.dim, out, false);
    }

    fn add_input(&mut self, w: usize, delta: &[f64]) {
        let s = self.0;
        AtomicStore::add(&s.input, w, s.dim, delta);
        if !s.ngrams.is_empty() {
            for &b in &s.word_ngrams[w] {
                AtomicStore::add(&s.ngrams, b, s.dim, delta);
            }
        }
    }

    fn add_output(&mut self, w: usize, delta: &[f64]) {
        AtomicStore::add(&self.0.output, w, self.0.dim, delta);
    }
}

struct Buffers {
    u: Vec<f64>,
    v: Vec<f64>,
    grad_u: Vec<f64>,
    delta: Vec<f64>,
    negs: Vec<usize>,
}

impl Buffers {
    fn new(dim: usize) -> Self {
        Buffers {
            u: vec![0.0; dim],
            v: vec![0.0; dim],
            grad_u: vec![0.0; dim],
            delta: vec![0.0; dim],
            negs: Vec::new(),
        }
    }
}

/// One SGD step on `-log σ(u·v_ctx) - Σ log σ(-u·v_neg)` for input `center`.
///
/// All gradients are evaluated at the pre-step parameters.
fn apply_pair<S: Store>(store: &mut S, center: usize, context: usize, negatives: &[usize], lr: f64, buf: &mut Buffers) {
    store.load_input(center, &mut buf.u);
    buf.grad_u.iter_mut().for_each(|g| *g = 0.0);
    let targets = std::iter::once((context, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (target, label) in targets {
        store.load_output(target, &mut buf.v);
        let score: f64 = buf.u.iter().zip(&buf.v).map(|(a, b)| a * b).sum();
        let g = lr * (label - sigmoid(score));
        for ((gu, v), (d, u)) in buf.grad_u.iter_mut().zip(&buf.v).zip(buf.delta.iter_mut().zip(&buf.u)) {
            *gu += g * v;
            *d = g * u;
        }
        store.add_output(target, &buf.delta);
    }
    store.add_input(center, &buf.grad_u);
}

/// Learning-rate schedule over processed tokens.
#[derive(Debug, Clone, Copy)]
enum Schedule {
    Linear { start: f64, total: u64 },
    Exponential { start: f64, decay: f64 },
}

const MIN_RATE_FRACTION: f64 = 1e-4;

impl Schedule {
    fn rate(&self, processed: u64) -> f64 {
        match *self {
            Schedule::Linear { start, total } => {
                let frac = 1.0 - processed as f64 / (total as f64 + 1.0);
                start * frac.max(MIN_RATE_FRACTION)
            }
            Schedule::Exponential { start, decay } => {
                (start * decay.powf(processed as f64)).max(start * MIN_RATE_FRACTION)
            }
        }
    }
}

impl NonceSchedule {
    /// The learning rates applied to the first `n` tokens.
    pub fn rates(&self, n: usize) -> Vec<f64> {
        let s = Schedule::Exponential {
            start: self.initial_rate,
            decay: self.decay,
        };
        (0..n as u64).map(|t| s.rate(t)).collect()
    }
}

struct SentenceTrainer<'a> {
    window: usize,
    negatives: usize,
    sampler: Option<&'a NegativeSampler>,
    /// Keep probability per vocabulary row; `None` keeps everything.
    keep: Option<&'a [f64]>,
}

impl SentenceTrainer<'_> {
    /// Train on one sentence of vocabulary indices; returns tokens processed.
    fn run<S: Store>(
        &self,
        store: &mut S,
        sentence: &[usize],
        rng: &mut ChaCha8Rng,
        schedule: Schedule,
        processed: &mut u64,
        buf: &mut Buffers,
    ) {
        let kept: Vec<usize> = match self.keep {
            Some(keep) => sentence
                .iter()
                .copied()
                .filter(|&w| keep[w] >= 1.0 || rng.random::<f64>() < keep[w])
                .collect(),
            None => sentence.to_vec(),
        };
        for (i, &center) in kept.iter().enumerate() {
            let lr = schedule.rate(*processed);
            *processed += 1;
            let b = rng.random_range(1..=self.window);
            let lo = i.saturating_sub(b);
            let hi = (i + b).min(kept.len() - 1);
            for (j, &context) in kept.iter().enumerate().take(hi + 1).skip(lo) {
                if j == i {
                    continue;
                }
                buf.negs.clear();
                if let Some(sampler) = self.sampler {
                    while buf.negs.len() < self.negatives {
                        let n = sampler.sample(rng);
                        if n != context {
                            buf.negs.push(n);
                        }
                    }
                }
                let negs = std::mem::take(&mut buf.negs);
                apply_pair(store, center, context, &negs, lr, buf);
                buf.negs = negs;
            }
        }
    }
}

fn keep_probabilities(counts: &[u64], t: f64) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .map(|&c| {
            if c == 0 || total == 0 {
                1.0
            } else {
                subsample_weight(c as f64 / total as f64, t, SubsampleMode::Standard)
                    .expect("positive frequency and threshold")
            }
        })
        .collect()
}

fn index_sentences(corpus: &Corpus, index: &HashMap<String, usize>) -> Vec<Vec<usize>> {
    corpus
        .sentences
        .iter()
        .map(|s| s.iter().filter_map(|t| index.get(t).copied()).collect::<Vec<_>>())
        .filter(|s: &Vec<usize>| s.len() > 1)
        .collect()
}

/// Train background vectors on a corpus.
pub fn train_background(corpus: &Corpus, params: &TrainParams) -> Result<SgnsModel> {
    let mut p = params.clone();
    p.trainable_words.clear();
    if p.mode.is_selective() {
        p.mode = if p.mode.uses_subwords() {
            TrainMode::Fasttext
        } else {
            TrainMode::Standard
        };
    }
    p.validate()?;

    let freqs = count_frequencies(corpus);
    let (vocab, counts): (Vec<String>, Vec<u64>) = freqs.at_least(p.min_count).cloned().unzip();
    if vocab.is_empty() {
        return Err(Error::Empty(format!("no word reaches min_count {}", p.min_count)));
    }
    let d = p.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let input = uniform_init(&mut rng, vocab.len(), d);
    let output = Array2::zeros((vocab.len(), d));
    let ngrams = p.mode.uses_subwords().then(|| NgramTable {
        vectors: uniform_init(&mut rng, p.buckets, d),
        min_n: NGRAM_MIN,
        max_n: NGRAM_MAX,
    });
    let mut model = SgnsModel::new(vocab, counts, input, output, ngrams)?;

    let sentences = index_sentences(corpus, &model.index);
    let tokens: u64 = sentences.iter().map(|s| s.len() as u64).sum();
    let schedule = Schedule::Linear {
        start: p.learning_rate,
        total: tokens * p.epochs as u64,
    };
    let dist = NegativeDistribution::from_counts(&model.counts)?;
    let sampler = NegativeSampler::new(&dist, |i| p.excluded_negatives.contains(&model.vocab[i]))?;
    let keep = p.subsample.map(|t| keep_probabilities(&model.counts, t));
    let trainer = SentenceTrainer {
        window: p.window,
        negatives: p.negatives,
        sampler: Some(&sampler),
        keep: keep.as_deref(),
    };
    let word_ngrams = model.word_ngrams();

    if p.threads <= 1 {
        let mut store = LocalStore {
            input: &mut model.input,
            output: &mut model.output,
            ngrams: model.ngrams.as_mut().map(|t| &mut t.vectors),
            word_ngrams: &word_ngrams,
            trainable: None,
            update_ngrams: true,
        };
        let mut buf = Buffers::new(d);
        let mut processed = 0;
        for _ in 0..p.epochs {
            for s in &sentences {
                trainer.run(&mut store, s, &mut rng, schedule, &mut processed, &mut buf);
            }
        }
    } else {
        train_parallel(&mut model, &sentences, &trainer, schedule, &p, word_ngrams)?;
    }
    log::info!("trained {} words x {} dims on {} tokens", model.vocab.len(), d, tokens);
    Ok(model)
}

fn train_parallel(
    model: &mut SgnsModel,
    sentences: &[Vec<usize>],
    trainer: &SentenceTrainer<'_>,
    schedule: Schedule,
    p: &TrainParams,
    word_ngrams: Vec<Vec<usize>>,
) -> Result<()> {
    let d = model.dim();
    let store = AtomicStore {
        dim: d,
        input: AtomicStore::from_matrix(&model.input),
        output: AtomicStore::from_matrix(&model.output),
        ngrams: model
            .ngrams
            .as_ref()
            .map(|t| AtomicStore::from_matrix(&t.vectors))
            .unwrap_or_default(),
        word_ngrams,
    };
    let processed = AtomicU64::new(0);
    let chunk = sentences.len().div_ceil(p.threads).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(p.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.scope(|scope| {
        for (worker, shard) in sentences.chunks(chunk).enumerate() {
            let store = &store;
            let processed = &processed;
            scope.spawn(move |_| {
                let mut rng = ChaCha8Rng::seed_from_u64(p.seed.wrapping_add(worker as u64 + 1));
                let mut handle = SharedHandle(store);
                let mut buf = Buffers::new(d);
                for _ in 0..p.epochs {
                    for s in shard {
                        let mut local = processed.load(Ordering::Relaxed);
                        let before = local;
                        trainer.run(&mut handle, s, &mut rng, schedule, &mut local, &mut buf);
                        processed.fetch_add(local - before, Ordering::Relaxed);
                    }
                }
            });
        }
    });
    model.input = AtomicStore::to_matrix(&store.input, d);
    model.output = AtomicStore::to_matrix(&store.output, d);
    if let Some(t) = model.ngrams.as_mut() {
        t.vectors = AtomicStore::to_matrix(&store.ngrams, d);
    }
    Ok(())
}

/// Continue training on one episode and return the target's vector.
///
/// The target gets its row from [`SgnsModel::target_row`]; its n-grams come
/// from the surface form. In selective modes only the target row and rows of
/// `trainable_words` change, and n-gram rows stay frozen.
pub fn fewshot_update(model: &mut SgnsModel, episode: &Episode, params: &TrainParams) -> Result<Array1<f64>> {
    params.validate()?;
    if episode.is_empty() {
        return Err(Error::Empty("episode has no sentences".into()));
    }
    if params.mode.uses_subwords() && model.ngrams.is_none() {
        return Err(Error::InvalidArgument(
            "subword modes need a model with an n-gram table".into(),
        ));
    }
    let target = model.target_row(&episode.target, params.seed);
    let d = model.dim();

    let sentences: Vec<Vec<usize>> = episode
        .sentences
        .iter()
        .map(|s| {
            s.iter()
                .filter_map(|t| {
                    if t == PLACEHOLDER {
                        Some(target)
                    } else {
                        model.index_of(t)
                    }
                })
                .collect()
        })
        .collect();

    let (window, negatives, epochs, schedule) = if params.mode == TrainMode::Nonce2vec {
        let n = &params.nonce;
        let s = Schedule::Exponential {
            start: n.initial_rate,
            decay: n.decay,
        };
        (n.window, n.negatives, n.epochs, s)
    } else {
        let tokens: u64 = sentences.iter().map(|s| s.len() as u64).sum();
        let s = Schedule::Linear {
            start: params.learning_rate,
            total: tokens * params.epochs as u64,
        };
        (params.window, params.negatives, params.epochs, s)
    };

    let dist = NegativeDistribution::from_counts(&model.counts)?;
    let excluded: Vec<bool> = model
        .vocab
        .iter()
        .enumerate()
        .map(|(i, w)| i == target || params.excluded_negatives.contains(w))
        .collect();
    let sampler = NegativeSampler::new(&dist, |i| excluded[i]).ok();
    let keep = params.subsample.map(|t| keep_probabilities(&model.counts, t));
    let trainer = SentenceTrainer {
        window,
        negatives,
        sampler: sampler.as_ref(),
        keep: keep.as_deref(),
    };

    let mask: Option<Vec<bool>> = params.mode.is_selective().then(|| {
        model
            .vocab
            .iter()
            .enumerate()
            .map(|(i, w)| i == target || params.trainable_words.contains(w))
            .collect()
    });
    let mut word_ngrams = model.word_ngrams();
    if let Some(t) = &model.ngrams {
        word_ngrams[target] = t.bucket_ids(&episode.target);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    {
        let mut store = LocalStore {
            input: &mut model.input,
            output: &mut model.output,
            ngrams: model.ngrams.as_mut().map(|t| &mut t.vectors),
            word_ngrams: &word_ngrams,
            trainable: mask.as_deref(),
            update_ngrams: !params.mode.is_selective(),
        };
        let mut buf = Buffers::new(d);
        let mut processed = 0;
        for _ in 0..epochs {
            for s in &sentences {
                if s.len() > 1 {
                    trainer.run(&mut store, s, &mut rng, schedule, &mut processed, &mut buf);
                }
            }
        }
    }
    let mut v = model.input.row(target).to_owned();
    if params.mode.uses_subwords() {
        let t = model.ngrams.as_ref().expect("checked above");
        for &b in &word_ngrams[target] {
            v += &t.vectors.row(b);
        }
    }
    Ok(v)
}

/// One explicit SGD step (used for gradient verification).
pub fn sgd_step(model: &mut SgnsModel, center: usize, context: usize, negatives: &[usize], lr: f64) {
    let word_ngrams = model.word_ngrams();
    let d = model.dim();
    let mut store = LocalStore {
        input: &mut model.input,
        output: &mut model.output,
        ngrams: model.ngrams.as_mut().map(|t| &mut t.vectors),
        word_ngrams: &word_ngrams,
        trainable: None,
        update_ngrams: true,
    };
    apply_pair(&mut store, center, context, negatives, lr, &mut Buffers::new(d));
}

/// Negative-sampling log loss of one `(center, context, negatives)` example.
pub fn sgns_loss(model: &SgnsModel, center: usize, context: usize, negatives: &[usize]) -> f64 {
    let u = model.input_vector(center);
    let score = |w: usize, sign: f64| -> f64 {
        let s: f64 = u.dot(&model.output.row(w));
        -(sigmoid(sign * s)).ln()
    };
    score(context, 1.0) + negatives.iter().map(|&n| score(n, -1.0)).sum::<f64>()
}

/// Mean pairwise cosine between two word groups.
pub fn mean_cosine(space: &EmbeddingSpace, a: &[&str], b: &[&str]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for x in a {
        for y in b {
            if x == y {
                continue;
            }
            let vx: ArrayView1<'_, f64> = space.vector(x).ok_or_else(|| Error::UnknownWord(x.to_string()))?;
            let vy = space.vector(y).ok_or_else(|| Error::UnknownWord(y.to_string()))?;
            total += crate::embedstore::cosine(vx, vy)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("no word pairs".into()));
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model(n: usize, d: usize, seed: u64) -> SgnsModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let input = Array2::from_shape_simple_fn((n, d), || rng.random_range(-0.5..0.5));
        let output = Array2::from_shape_simple_fn((n, d), || rng.random_range(-0.5..0.5));
        SgnsModel::new(vocab, vec![10; n], input, output, None).unwrap()
    }

    #[test]
    fn cat_ngrams() {
        let mut got = char_ngrams("cat", 3, 5);
        got.sort();
        let mut want: Vec<String> = ["<ca", "cat", "at>", "<cat", "cat>", "<cat>"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn ngram_enumeration_matches_brute_force() {
        for word in ["a", "ab", "walking", "naïve"] {
            let marked: Vec<char> = format!("<{word}>").chars().collect();
            let mut want = Vec::new();
            for start in 0..marked.len() {
                for end in start + 1..=marked.len() {
                    if (3..=5).contains(&(end - start)) {
                        want.push(marked[start..end].iter().collect::<String>());
                    }
                }
            }
            let mut got = char_ngrams(word, 3, 5);
            got.sort();
            want.sort();
            assert_eq!(got, want, "{word}");
        }
    }

    fn subword_model(buckets: usize, d: usize) -> SgnsModel {
        SgnsModel::new(
            vec!["dog".into()],
            vec![5],
            Array2::from_elem((1, d), 1.0),
            Array2::zeros((1, d)),
            Some(NgramTable {
                vectors: Array2::zeros((buckets, d)),
                min_n: 3,
                max_n: 5,
            }),
        )
        .unwrap()
    }

    #[test]
    fn compose_zero_buckets_is_zero() {
        let m = subword_model(50, 3);
        assert_eq!(compose_subword("cat", &m).unwrap(), Array1::<f64>::zeros(3));
        assert!(compose_subword("", &m).is_err());
    }

    #[test]
    fn compose_single_bucket() {
        let mut m = subword_model(1_000_003, 3);
        let b = ngram_bucket("<ca", 1_000_003);
        let others: HashSet<usize> = char_ngrams("cat", 3, 5)
            .iter()
            .filter(|g| *g != "<ca")
            .map(|g| ngram_bucket(g, 1_000_003))
            .collect();
        assert!(!others.contains(&b));
        m.ngrams
            .as_mut()
            .unwrap()
            .vectors
            .row_mut(b)
            .assign(&ndarray::array![1.0, 2.0, 3.0]);
        assert_eq!(compose_subword("cat", &m).unwrap(), ndarray::array![1.0, 2.0, 3.0]);
        // known words add their own row
        assert_eq!(compose_subword("dog", &m).unwrap(), Array1::from_elem(3, 1.0));
    }

    #[test]
    fn negative_sample_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one = NegativeDistribution::from_probs(vec![1.0]).unwrap();
        for _ in 0..100 {
            assert_eq!(negative_sample(&one, &mut rng, &HashSet::new()).unwrap(), 0);
        }
        let half = NegativeDistribution::from_probs(vec![0.5, 0.5]).unwrap();
        let ex: HashSet<usize> = [0].into();
        for _ in 0..100 {
            assert_eq!(negative_sample(&half, &mut rng, &ex).unwrap(), 1);
        }
        let all: HashSet<usize> = [0, 1].into();
        assert!(negative_sample(&half, &mut rng, &all).is_err());
    }

    #[test]
    fn negative_sampling_converges() {
        let dist = NegativeDistribution::from_counts(&[16, 1]).unwrap();
        let sampler = NegativeSampler::new(&dist, |_| false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| sampler.sample(&mut rng) == 0).count();
        assert!((hits as f64 / n as f64 - 8.0 / 9.0).abs() < 0.01);
    }

    #[test]
    fn sgd_step_matches_finite_differences() {
        let lr = 1e-3;
        for seed in 0..10 {
            let base = toy_model(6, 5, seed);
            let (center, context, negs) = (0usize, 1usize, [2usize, 3, 4]);
            let mut stepped = base.clone();
            sgd_step(&mut stepped, center, context, &negs, lr);
            let h = 1e-6;
            let check = |analytic: f64, perturb: &dyn Fn(&mut SgnsModel, f64)| {
                let mut plus = base.clone();
                perturb(&mut plus, h);
                let mut minus = base.clone();
                perturb(&mut minus, -h);
                let numeric =
                    (sgns_loss(&plus, center, context, &negs) - sgns_loss(&minus, center, context, &negs)) / (2.0 * h);
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-4,
                    "numeric {numeric} vs analytic {analytic}"
                );
            };
            for k in 0..5 {
                let g = -(stepped.input[[center, k]] - base.input[[center, k]]) / lr;
                check(g, &|m, e| m.input[[center, k]] += e);
                for &w in [context].iter().chain(&negs) {
                    let g = -(stepped.output[[w, k]] - base.output[[w, k]]) / lr;
                    check(g, &|m, e| m.output[[w, k]] += e);
                }
            }
        }
    }

    fn episode(words: &[&str]) -> Episode {
        Episode::new("novel", vec![words.iter().map(|s| s.to_string()).collect()]).unwrap()
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut m = toy_model(8, 4, 1);
        m.register_word("novel", 9);
        let before = m.clone();
        let p = TrainParams {
            learning_rate: 0.0,
            subsample: None,
            epochs: 3,
            ..Default::default()
        };
        let v = fewshot_update(&mut m, &episode(&["w1", "<TRG>", "w2", "w3"]), &p).unwrap();
        assert_eq!(v, before.input.row(8));
        assert_eq!(m, before);
    }

    #[test]
    fn new_word_initialization() {
        let mut m = toy_model(3, 10, 1);
        let i = m.register_word("novel", 3);
        assert_eq!(i, 3);
        assert!(m.input.row(i).iter().all(|x| x.abs() <= 0.05));
        assert_eq!(m.output.row(i), Array1::<f64>::zeros(10));
        let mut again = toy_model(3, 10, 1);
        again.register_word("novel", 3);
        assert_eq!(again, m);
    }

    #[test]
    fn selective_mode_touches_only_trainable_rows() {
        let mut m = toy_model(10, 6, 2);
        let before = m.clone();
        let p = TrainParams {
            mode: TrainMode::Selective,
            excluded_negatives: ["novel".to_string()].into(),
            subsample: None,
            learning_rate: 0.5,
            ..Default::default()
        };
        fewshot_update(&mut m, &episode(&["w1", "w2", "<TRG>", "w3", "w4"]), &p).unwrap();
        for i in 0..10 {
            assert_eq!(m.input.row(i), before.input.row(i));
            assert_eq!(m.output.row(i), before.output.row(i));
        }
        let t = m.index_of("novel").unwrap();
        assert_ne!(m.input.row(t), Array1::<f64>::zeros(6));
    }

    #[test]
    fn background_words_get_a_fresh_row() {
        let mut m = toy_model(4, 3, 0);
        let before = m.clone();
        let p = TrainParams {
            mode: TrainMode::Selective,
            subsample: None,
            ..Default::default()
        };
        let ep = Episode::new("w1", vec![vec!["w2".into(), "<TRG>".into(), "w3".into()]]).unwrap();
        fewshot_update(&mut m, &ep, &p).unwrap();
        assert_eq!(m.input.row(1), before.input.row(1));
        assert_eq!(m.index_of("<TRG>w1"), Some(4));
    }

    #[test]
    fn nonce_rates_are_positive_and_non_increasing() {
        let r = NonceSchedule::default().rates(5000);
        assert_eq!(r[0], 1.0);
        assert!(r.iter().all(|&x| x > 0.0));
        assert!(r.windows(2).all(|w| w[1] <= w[0]));
        let bad = NonceSchedule {
            decay: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn epochs_zero_keeps_initialization() {
        let corpus = Corpus::new(vec![vec!["a".into(), "b".into(), "a".into()]; 3]);
        let p = TrainParams {
            epochs: 0,
            min_count: 1,
            dim: 4,
            ..Default::default()
        };
        let m = train_background(&corpus, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        assert_eq!(m.input, uniform_init(&mut rng, 2, 4));
        assert_eq!(m.output, Array2::<f64>::zeros((2, 4)));
    }

    #[test]
    fn empty_vocabulary_after_min_count() {
        let corpus = Corpus::new(vec![vec!["a".into(), "b".into()]]);
        assert!(matches!(
            train_background(&corpus, &TrainParams::default()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = toy_model(5, 3, 8);
        m.ngrams = Some(NgramTable {
            vectors: Array2::from_elem((7, 3), 0.25),
            min_n: 3,
            max_n: 5,
        });
        let v = dir.path().join("m.vec");
        let c = dir.path().join("m.counts");
        m.save(&v, &c).unwrap();
        assert_eq!(SgnsModel::load(&v, &c).unwrap(), m);
    }
}

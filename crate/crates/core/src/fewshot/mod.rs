//! Vector inference for words seen only in a handful of contexts.
//!
//! The additive family sums background vectors of context words, optionally
//! weighted by distance and frequency and shifted away from the expected
//! negative sample. A La Carte applies a learned map to that sum. The form
//! model and the form-context hybrid live in [`form`] and [`fcm`].

pub mod fcm;
pub mod form;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    subsample_weight, Corpus, Episode, NegativeDistribution, StemIndex, Stopwords, SubsampleMode, PLACEHOLDER,
};
use crate::embedstore::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::nn::{self, Mlp, TrainConfig};
use crate::textmat::{SectionReader, SectionWriter};

pub use fcm::{combine, fcm_infer, fit_fcm, fit_gate, gate_mse, FcmFitConfig, FcmModel, Gate, GateMode};
pub use form::{fit_form_model, form_infer, FormFitConfig, FormModel};

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_SUBSAMPLE_T: f64 = 1e-5;
pub const DEFAULT_NEGATIVE_RATE: f64 = 2.0;
pub const DEFAULT_MIN_COUNT: u64 = 50;

/// `max((n - m + 1) / n, 0)`: chance that a word `m` tokens away falls in a
/// uniformly shrunk window of size `n`.
pub fn window_weight(n: usize, m: usize) -> f64 {
    if n == 0 || m == 0 || m > n {
        return 0.0;
    }
    (n - m + 1) as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdditiveOptions {
    pub drop_stopwords: bool,
    pub window: Option<usize>,
    pub subsample_t: Option<f64>,
    pub subsample_mode: SubsampleMode,
    pub negative_rate: Option<f64>,
    #[serde(skip)]
    pub stopwords: Stopwords,
}

impl Default for AdditiveOptions {
    fn default() -> Self {
        AdditiveOptions {
            drop_stopwords: true,
            window: None,
            subsample_t: None,
            subsample_mode: SubsampleMode::default(),
            negative_rate: None,
            stopwords: Stopwords::english(),
        }
    }
}

impl AdditiveOptions {
    pub fn plain() -> Self {
        Self::default()
    }

    pub fn windowed() -> Self {
        AdditiveOptions {
            window: Some(DEFAULT_WINDOW),
            ..Self::default()
        }
    }

    /// Window, subsampling and negative correction all switched on.
    pub fn weighted() -> Self {
        AdditiveOptions {
            window: Some(DEFAULT_WINDOW),
            subsample_t: Some(DEFAULT_SUBSAMPLE_T),
            negative_rate: Some(DEFAULT_NEGATIVE_RATE),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == Some(0) {
            return Err(Error::InvalidArgument("window size must be positive".into()));
        }
        if let Some(t) = self.subsample_t {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument("subsample threshold must be positive".into()));
            }
        }
        if let Some(k) = self.negative_rate {
            if !(k >= 0.0) || !k.is_finite() {
                return Err(Error::InvalidArgument("negative rate must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// `Σ P(w) v_w` over the space vocabulary.
pub fn expected_negative_vector(space: &EmbeddingSpace, dist: &NegativeDistribution) -> Result<Array1<f64>> {
    if dist.len() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            actual: dist.len(),
        });
    }
    let p = ArrayView1::from(dist.probs());
    Ok(space.vectors().t().dot(&p))
}

/// Additive context encoder bound to one space and option set.
#[derive(Debug, Clone)]
pub struct ContextEncoder<'a> {
    space: &'a EmbeddingSpace,
    opts: AdditiveOptions,
    /// `k · v̂_neg`, absent when the correction is off or `k = 0`.
    shift: Option<Array1<f64>>,
    total: f64,
}

impl<'a> ContextEncoder<'a> {
    pub fn new(space: &'a EmbeddingSpace, opts: &AdditiveOptions, dist: Option<&NegativeDistribution>) -> Result<Self> {
        opts.validate()?;
        let shift = match opts.negative_rate {
            Some(k) if k > 0.0 => {
                let dist = dist.ok_or_else(|| {
                    Error::InvalidArgument("negative correction needs a negative distribution".into())
                })?;
                Some(expected_negative_vector(space, dist)? * k)
            }
            _ => None,
        };
        Ok(ContextEncoder {
            space,
            opts: opts.clone(),
            shift,
            total: space.total_count() as f64,
        })
    }

    pub fn space(&self) -> &EmbeddingSpace {
        self.space
    }

    pub fn options(&self) -> &AdditiveOptions {
        &self.opts
    }

    fn frequency_weight(&self, row: usize) -> f64 {
        let Some(t) = self.opts.subsample_t else {
            return 1.0;
        };
        let c = self.space.counts()[row] as f64;
        if c == 0.0 || self.total == 0.0 {
            // limit as f -> 0
            return match self.opts.subsample_mode {
                SubsampleMode::PaperEq3 => 0.0,
                SubsampleMode::Standard => 1.0,
            };
        }
        subsample_weight(c / self.total, t, self.opts.subsample_mode).expect("positive frequency and threshold")
    }

    /// Row and weight of the token at `j` as a context of position `i`, if it contributes.
    fn term(&self, sentence: &[String], i: usize, j: usize, skip: Option<&str>) -> Option<(usize, f64)> {
        let tok = sentence[j].as_str();
        if j == i || tok == PLACEHOLDER || Some(tok) == skip {
            return None;
        }
        if self.opts.drop_stopwords && self.opts.stopwords.contains(tok) {
            return None;
        }
        let row = self.space.index_of(tok)?;
        let mut w = 1.0;
        if let Some(n) = self.opts.window {
            w *= window_weight(n, i.abs_diff(j));
        }
        w *= self.frequency_weight(row);
        (w != 0.0).then_some((row, w))
    }

    fn accumulate(&self, acc: &mut Array1<f64>, row: usize, w: f64) {
        let v = self.space.row(row);
        match &self.shift {
            None if w == 1.0 => *acc += &v,
            None => acc.scaled_add(w, &v),
            Some(s) => acc.scaled_add(w, &(&v - s)),
        }
    }

    /// Add the contexts of position `i` into `acc`; returns the number of terms.
    fn add_contexts(&self, acc: &mut Array1<f64>, sentence: &[String], i: usize, skip: Option<&str>) -> usize {
        let range = match self.opts.window {
            Some(n) => i.saturating_sub(n)..(i + n + 1).min(sentence.len()),
            None => 0..sentence.len(),
        };
        let mut terms = 0;
        for j in range {
            if let Some((row, w)) = self.term(sentence, i, j, skip) {
                self.accumulate(acc, row, w);
                terms += 1;
            }
        }
        terms
    }

    /// Weighted sum over every context token of the episode.
    pub fn infer(&self, episode: &Episode) -> Result<Array1<f64>> {
        if episode.is_empty() {
            return Err(Error::Empty("episode has no sentences".into()));
        }
        let mut acc = Array1::zeros(self.space.dim());
        let mut terms = 0;
        for (sentence, pos) in episode.contexts() {
            terms += self.add_contexts(&mut acc, sentence, pos, None);
        }
        if terms == 0 {
            return Err(Error::Degenerate(format!(
                "no context word of `{}` contributes",
                episode.target
            )));
        }
        if acc.iter().all(|&v| v == 0.0) {
            return Err(Error::Degenerate(format!(
                "context sum for `{}` is zero",
                episode.target
            )));
        }
        Ok(acc)
    }

    /// [`Self::infer`] divided by the number of sentences.
    pub fn infer_mean(&self, episode: &Episode) -> Result<Array1<f64>> {
        Ok(self.infer(episode)? / episode.len() as f64)
    }
}

pub fn additive_infer(
    episode: &Episode,
    space: &EmbeddingSpace,
    opts: &AdditiveOptions,
    dist: Option<&NegativeDistribution>,
) -> Result<Array1<f64>> {
    ContextEncoder::new(space, opts, dist)?.infer(episode)
}

/// Context vectors paired with gold vectors for regression.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPairSet {
    pub words: Vec<String>,
    /// Mean per-occurrence context sum, one row per word.
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl TrainingPairSet {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        TrainingPairSet {
            words: rows.iter().map(|&r| self.words[r].clone()).collect(),
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
        }
    }
}

/// For every space word with count ≥ `min_count`, average its context sum
/// over all corpus occurrences. Other occurrences of the same word in a
/// sentence are skipped like the target itself.
pub fn build_training_pairs(
    corpus: &Corpus,
    space: &EmbeddingSpace,
    opts: &AdditiveOptions,
    dist: Option<&NegativeDistribution>,
    min_count: u64,
) -> Result<TrainingPairSet> {
    let enc = ContextEncoder::new(space, opts, dist)?;
    let d = space.dim();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut words: Vec<&str> = Vec::new();
    for (w, &c) in space.words().iter().zip(space.counts()) {
        if c >= min_count {
            slot.insert(w.as_str(), words.len());
            words.push(w.as_str());
        }
    }
    let mut sums = Array2::<f64>::zeros((words.len(), d));
    let mut occurrences = vec![0usize; words.len()];
    let mut terms = vec![0usize; words.len()];
    for sentence in &corpus.sentences {
        for (i, tok) in sentence.iter().enumerate() {
            let Some(&s) = slot.get(tok.as_str()) else {
                continue;
            };
            occurrences[s] += 1;
            let mut acc = sums.row_mut(s).to_owned();
            terms[s] += enc.add_contexts(&mut acc, sentence, i, Some(tok));
            sums.row_mut(s).assign(&acc);
        }
    }
    let keep: Vec<usize> = (0..words.len()).filter(|&s| terms[s] > 0).collect();
    if keep.is_empty() {
        return Err(Error::Empty(format!(
            "no vocabulary word with count >= {min_count} has usable contexts"
        )));
    }
    let mut x = sums.select(Axis(0), &keep);
    for (mut row, &s) in x.rows_mut().into_iter().zip(&keep) {
        row /= occurrences[s] as f64;
    }
    let rows: Vec<usize> = keep
        .iter()
        .map(|&s| space.index_of(words[s]).expect("space word"))
        .collect();
    Ok(TrainingPairSet {
        words: keep.iter().map(|&s| words[s].to_string()).collect(),
        x,
        y: space.vectors().select(Axis(0), &rows),
    })
}

/// `x ↦ A x (+ b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub a: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl LinearMap {
    pub fn identity(d: usize) -> Self {
        LinearMap {
            a: Array2::eye(d),
            bias: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn apply(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut y = self.a.dot(&x);
        if let Some(b) = &self.bias {
            y += b;
        }
        Ok(y)
    }
}

/// Ridge regression `argmin Σ‖A x − y‖² + λ‖A‖²_F` via the normal equations.
///
/// With `bias` an unpenalized intercept is fitted as well.
pub fn fit_alc_linear(pairs: &TrainingPairSet, lambda: f64, bias: bool) -> Result<LinearMap> {
    if pairs.is_empty() {
        return Err(Error::Empty("no training pairs".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument("ridge penalty must be non-negative".into()));
    }
    let (n, d_in) = pairs.x.dim();
    let d_out = pairs.y.ncols();
    let p = d_in + usize::from(bias);
    let x = DMatrix::from_fn(n, p, |i, j| if j < d_in { pairs.x[[i, j]] } else { 1.0 });
    let y = DMatrix::from_fn(n, d_out, |i, j| pairs.y[[i, j]]);
    let mut gram = x.transpose() * &x;
    for j in 0..d_in {
        gram[(j, j)] += lambda;
    }
    let rhs = x.transpose() * y;
    let scale = (0..p).map(|j| gram[(j, j)].abs()).fold(0.0, f64::max);
    let chol = gram.cholesky().ok_or(Error::Singular)?;
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(scale > 0.0) || min_pivot * min_pivot <= scale * 1e-14 {
        return Err(Error::Singular);
    }
    let w = chol.solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let a = Array2::from_shape_fn((d_out, d_in), |(i, j)| w[(j, i)]);
    let bias = bias.then(|| Array1::from_shape_fn(d_out, |i| w[(d_in, i)]));
    Ok(LinearMap { a, bias })
}

/// Neural variant: one-hidden-layer MLP regression on the same pairs.
pub fn fit_alc_neural(pairs: &TrainingPairSet, hidden: usize, cfg: &TrainConfig) -> Result<Mlp> {
    let init = Mlp::new(pairs.dim(), hidden, pairs.y.ncols(), cfg.seed);
    Ok(nn::train(&init, pairs.x.view(), pairs.y.view(), cfg)?.0)
}

/// Transformation applied to additive context vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum ContextMap {
    Linear(LinearMap),
    Neural(Mlp),
}

impl ContextMap {
    pub fn input_dim(&self) -> usize {
        match self {
            ContextMap::Linear(m) => m.input_dim(),
            ContextMap::Neural(m) => m.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            ContextMap::Linear(m) => m.output_dim(),
            ContextMap::Neural(m) => m.output_dim(),
        }
    }

    pub fn apply(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        match self {
            ContextMap::Linear(m) => m.apply(x),
            ContextMap::Neural(m) => m.forward(x),
        }
    }

    pub(crate) fn write_sections<W: Write>(&self, w: W) -> std::io::Result<W> {
        let empty = Array2::zeros((0, 0));
        match self {
            ContextMap::Linear(m) => {
                let mut s = SectionWriter::new(w);
                s.matrix("linear", &empty)?;
                s.matrix("a", &m.a)?;
                let b = match &m.bias {
                    Some(b) => b.clone().insert_axis(Axis(0)),
                    None => Array2::zeros((0, m.output_dim())),
                };
                s.matrix("b", &b)?;
                Ok(s.into_inner())
            }
            ContextMap::Neural(m) => {
                let mut s = SectionWriter::new(w);
                s.matrix("mlp", &empty)?;
                m.write(s.into_inner())
            }
        }
    }

    pub(crate) fn read_sections<R: BufRead>(r: &mut SectionReader<R>) -> Result<Self> {
        let tag = r
            .section(false)?
            .ok_or_else(|| Error::Empty("missing context map".into()))?;
        match tag.name.as_str() {
            "linear" => {
                let a = r.expect("a", false)?.data;
                let b = r.expect("b", false)?.data;
                let bias = (b.nrows() > 0).then(|| b.row(0).to_owned());
                if let Some(b) = &bias {
                    if b.len() != a.nrows() {
                        return Err(Error::DimensionMismatch {
                            expected: a.nrows(),
                            actual: b.len(),
                        });
                    }
                }
                Ok(ContextMap::Linear(LinearMap { a, bias }))
            }
            "mlp" => Ok(ContextMap::Neural(Mlp::read(r)?)),
            other => Err(Error::Config(format!("unknown context map kind `{other}`"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = self.write_sections(BufWriter::new(f)).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_sections(&mut SectionReader::new(BufReader::new(f), path))
    }
}

impl From<LinearMap> for ContextMap {
    fn from(m: LinearMap) -> Self {
        ContextMap::Linear(m)
    }
}

impl From<Mlp> for ContextMap {
    fn from(m: Mlp) -> Self {
        ContextMap::Neural(m)
    }
}

/// Map applied to the per-sentence mean of the additive sum, matching the
/// per-occurrence scale of the training pairs.
pub fn alc_infer(
    episode: &Episode,
    space: &EmbeddingSpace,
    opts: &AdditiveOptions,
    transform: &ContextMap,
    dist: Option<&NegativeDistribution>,
) -> Result<Array1<f64>> {
    let enc = ContextEncoder::new(space, opts, dist)?;
    transform.apply(enc.infer_mean(episode)?.view())
}

/// Mean vector of the non-excluded space words sharing `word`'s stem.
pub fn stem_infer(
    word: &str,
    space: &EmbeddingSpace,
    stems: &StemIndex,
    excluded: &HashSet<String>,
) -> Result<Array1<f64>> {
    let group = stems
        .same_stem(word)
        .ok_or_else(|| Error::NoStemMatch(word.to_string()))?;
    let mut acc = Array1::zeros(space.dim());
    let mut n = 0usize;
    for w in group.iter().filter(|w| !excluded.contains(*w)) {
        if let Some(v) = space.vector(w) {
            acc += &v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoStemMatch(word.to_string()));
    }
    Ok(acc / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_stem_index;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(str::to_string).collect()
    }

    fn red_dog() -> (EmbeddingSpace, Episode) {
        let space = EmbeddingSpace::new(
            vec!["red".into(), "dog".into()],
            array![[1.0, 0.0], [0.0, 1.0]],
            vec![1, 1],
        )
        .unwrap();
        let ep = Episode::new("x", vec![toks("<TRG> the red dog")]).unwrap();
        (space, ep)
    }

    #[test]
    fn window_weight_examples() {
        assert_eq!(window_weight(10, 1), 1.0);
        assert_eq!(window_weight(5, 3), 0.6);
        assert_eq!(window_weight(5, 7), 0.0);
        for n in 1..20 {
            for m in 1..25 {
                assert!(window_weight(n, m + 1) <= window_weight(n, m));
            }
        }
    }

    #[test]
    fn plain_sum() {
        let (space, ep) = red_dog();
        let v = additive_infer(&ep, &space, &AdditiveOptions::plain(), None).unwrap();
        assert_eq!(v, array![1.0, 1.0]);
    }

    #[test]
    fn window_weights_applied() {
        let (space, ep) = red_dog();
        let v = additive_infer(&ep, &space, &AdditiveOptions::windowed(), None).unwrap();
        assert_eq!(v, array![0.9, 0.8]);
    }

    #[test]
    fn negative_correction_example() {
        let space = EmbeddingSpace::new(
            vec!["red".into(), "dog".into(), "n1".into(), "n2".into()],
            array![[1.0, 0.0], [0.0, 1.0], [0.2, 0.0], [0.0, 0.2]],
            vec![1, 1, 1, 1],
        )
        .unwrap();
        let dist = NegativeDistribution::from_probs(vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        let vneg = expected_negative_vector(&space, &dist).unwrap();
        assert_abs_diff_eq!(vneg[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(vneg[1], 0.1, epsilon = 1e-12);
        let ep = Episode::new("x", vec![toks("<TRG> the red dog")]).unwrap();
        let opts = AdditiveOptions {
            negative_rate: Some(2.0),
            ..AdditiveOptions::plain()
        };
        let v = additive_infer(&ep, &space, &opts, Some(&dist)).unwrap();
        // (1 - 0.2, -0.2) + (-0.2, 1 - 0.2)
        assert_abs_diff_eq!(v[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 0.6, epsilon = 1e-12);
    }

    #[test]
    fn zero_rate_is_bit_exact_noop() {
        let (space, ep) = red_dog();
        let dist = NegativeDistribution::from_probs(vec![0.5, 0.5]).unwrap();
        let opts = AdditiveOptions {
            negative_rate: Some(0.0),
            ..AdditiveOptions::windowed()
        };
        let a = additive_infer(&ep, &space, &opts, Some(&dist)).unwrap();
        let b = additive_infer(&ep, &space, &AdditiveOptions::windowed(), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_stopwords_is_degenerate() {
        let (space, _) = red_dog();
        let ep = Episode::new("x", vec![toks("the <TRG> of a")]).unwrap();
        assert!(matches!(
            additive_infer(&ep, &space, &AdditiveOptions::plain(), None),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn expected_negative_symmetry() {
        let (space, _) = red_dog();
        let dist = NegativeDistribution::from_probs(vec![0.5, 0.5]).unwrap();
        assert_eq!(expected_negative_vector(&space, &dist).unwrap(), array![0.5, 0.5]);
    }

    #[test]
    fn single_context_pairs() {
        let space = EmbeddingSpace::new(
            vec!["w".into(), "c".into()],
            array![[1.0, 2.0], [3.0, -1.0]],
            vec![60, 60],
        )
        .unwrap();
        let corpus = Corpus::new(vec![toks("w c")]);
        let pairs = build_training_pairs(&corpus, &space, &AdditiveOptions::plain(), None, 50).unwrap();
        let i = pairs.words.iter().position(|w| w == "w").unwrap();
        assert_eq!(pairs.x.row(i), space.vector("c").unwrap());
        assert_eq!(pairs.y.row(i), space.vector("w").unwrap());
        assert!(build_training_pairs(&corpus, &space, &AdditiveOptions::plain(), None, 61).is_err());
    }

    fn planted(n: usize, d: usize, seed: u64) -> (TrainingPairSet, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_simple_fn((d, d), || rng.random_range(-1.0..1.0));
        let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
        let y = x.dot(&a.t());
        let words = (0..n).map(|i| format!("w{i}")).collect();
        (TrainingPairSet { words, x, y }, a)
    }

    #[test]
    fn ridge_recovers_identity_and_planted_map() {
        let (mut p, a) = planted(40, 8, 1);
        let fit = fit_alc_linear(&p, 1e-8, false).unwrap();
        let rel = (&fit.a - &a).mapv(|v| v * v).sum().sqrt() / a.mapv(|v| v * v).sum().sqrt();
        assert!(rel < 1e-3, "{rel}");
        p.y = p.x.clone();
        let fit = fit_alc_linear(&p, 1e-8, false).unwrap();
        let err = (&fit.a - &Array2::<f64>::eye(8)).mapv(|v| v * v).sum().sqrt();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn ridge_dominance_and_singularity() {
        let (p, _) = planted(1, 4, 2);
        let fit = fit_alc_linear(&p, 1e12, false).unwrap();
        assert!(fit.a.iter().all(|v| v.abs() < 1e-9));
        assert!(matches!(fit_alc_linear(&p, 0.0, false), Err(Error::Singular)));
    }

    #[test]
    fn ridge_bias_is_recovered() {
        let (mut p, _) = planted(30, 3, 5);
        p.y += 2.5;
        let fit = fit_alc_linear(&p, 1e-10, true).unwrap();
        for b in fit.bias.unwrap() {
            assert_abs_diff_eq!(b, 2.5, epsilon = 1e-6);
        }
    }

    #[test]
    fn identity_map_equals_additive_for_one_sentence() {
        let (space, ep) = red_dog();
        let opts = AdditiveOptions::plain();
        let a = alc_infer(&ep, &space, &opts, &LinearMap::identity(2).into(), None).unwrap();
        assert_eq!(a, additive_infer(&ep, &space, &opts, None).unwrap());
        let zero: ContextMap = Mlp::zeros(2, 3, 2).into();
        let z = alc_infer(&ep, &space, &opts, &zero, None).unwrap();
        assert!(crate::embedstore::cosine(z.view(), z.view()).is_err());
    }

    #[test]
    fn context_map_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.txt");
        let (pairs, _) = planted(12, 3, 4);
        for m in [
            ContextMap::from(fit_alc_linear(&pairs, 1e-3, true).unwrap()),
            ContextMap::from(LinearMap::identity(3)),
            ContextMap::from(Mlp::new(3, 5, 3, 1)),
        ] {
            m.save(&p).unwrap();
            assert_eq!(ContextMap::load(&p).unwrap(), m);
        }
    }

    #[test]
    fn stem_baseline() {
        let space = EmbeddingSpace::new(
            vec!["run".into(), "running".into(), "cat".into()],
            array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            vec![1, 1, 1],
        )
        .unwrap();
        let idx = build_stem_index(space.words());
        assert_eq!(
            stem_infer("runs", &space, &idx, &HashSet::new()).unwrap(),
            array![0.5, 0.5]
        );
        assert!(matches!(
            stem_infer("xyzzy", &space, &idx, &HashSet::new()),
            Err(Error::NoStemMatch(_))
        ));
        let ex: HashSet<String> = ["run".to_string(), "running".to_string()].into();
        assert!(stem_infer("runs", &space, &idx, &ex).is_err());
    }
}

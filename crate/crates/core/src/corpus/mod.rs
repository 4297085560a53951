//! Corpus pipeline: tokenization, counting, stemming, stem filtering,
//! few-shot episodes and the frequency-derived weights.

mod stem;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use stem::snowball_stem;

/// Token marking the target word inside an episode sentence.
pub const PLACEHOLDER: &str = "<TRG>";

fn push_pieces(chunk: &str, out: &mut Vec<String>) {
    for piece in chunk.split(|c: char| !c.is_alphanumeric()) {
        if !piece.is_empty() {
            out.push(piece.to_lowercase());
        }
    }
}

/// Lowercase, split on whitespace and punctuation, drop the punctuation.
///
/// The literal placeholder `<TRG>` survives as a single token.
pub fn tokenize(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in line.split_whitespace() {
        let mut rest = chunk;
        while let Some(at) = rest.find(PLACEHOLDER) {
            push_pieces(&rest[..at], &mut out);
            out.push(PLACEHOLDER.to_string());
            rest = &rest[at + PLACEHOLDER.len()..];
        }
        push_pieces(rest, &mut out);
    }
    out
}

/// An ordered collection of tokenized sentences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<Vec<String>>,
}

impl Corpus {
    pub fn new(sentences: Vec<Vec<String>>) -> Self {
        Corpus { sentences }
    }

    /// Tokenize raw lines; lines without tokens are skipped.
    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> Self {
        Corpus {
            sentences: lines.into_iter().map(tokenize).filter(|s| !s.is_empty()).collect(),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut sentences = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let toks = tokenize(&line);
            if !toks.is_empty() {
                sentences.push(toks);
            }
        }
        Ok(Corpus { sentences })
    }

    /// One sentence per line, tokens joined by single spaces.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        for s in &self.sentences {
            writeln!(w, "{}", s.join(" ")).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Every sentence containing `word`, with its first occurrence replaced by the placeholder.
    pub fn context_bank(&self, word: &str) -> Vec<Vec<String>> {
        self.sentences
            .iter()
            .filter_map(|s| {
                let pos = s.iter().position(|t| t == word)?;
                let mut s = s.clone();
                s[pos] = PLACEHOLDER.to_string();
                Some(s)
            })
            .collect()
    }
}

/// Word counts, ordered by descending count then ascending word.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyTable {
    entries: Vec<(String, u64)>,
    index: HashMap<String, usize>,
    total: u64,
}

impl FrequencyTable {
    pub fn from_counts(counts: HashMap<String, u64>) -> Self {
        let mut entries: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let index = entries.iter().enumerate().map(|(i, (w, _))| (w.clone(), i)).collect();
        let total = entries.iter().map(|(_, c)| c).sum();
        FrequencyTable { entries, index, total }
    }

    pub fn get(&self, word: &str) -> u64 {
        self.index.get(word).map_or(0, |&i| self.entries[i].1)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(w, _)| w.as_str())
    }

    /// Entries with count at least `min_count`, in table order.
    pub fn at_least(&self, min_count: u64) -> impl Iterator<Item = &(String, u64)> {
        self.entries.iter().filter(move |(_, c)| *c >= min_count)
    }
}

pub fn count_frequencies(corpus: &Corpus) -> FrequencyTable {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for s in &corpus.sentences {
        for t in s {
            *counts.entry(t.clone()).or_default() += 1;
        }
    }
    FrequencyTable::from_counts(counts)
}

/// Vocabulary words grouped by Porter2 stem.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StemIndex {
    groups: BTreeMap<String, BTreeSet<String>>,
}

impl StemIndex {
    pub fn get(&self, stem: &str) -> Option<&BTreeSet<String>> {
        self.groups.get(stem)
    }

    /// Vocabulary words sharing the stem of `word`.
    pub fn same_stem(&self, word: &str) -> Option<&BTreeSet<String>> {
        self.groups.get(&snowball_stem(word))
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.groups.iter()
    }
}

pub fn build_stem_index<S: AsRef<str>>(vocab: &[S]) -> StemIndex {
    let mut groups: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for w in vocab {
        let w = w.as_ref();
        groups.entry(snowball_stem(w)).or_default().insert(w.to_string());
    }
    StemIndex { groups }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemovalStats {
    pub tokens_removed: u64,
    pub tokens_total: u64,
}

impl RemovalStats {
    pub fn fraction(&self) -> f64 {
        if self.tokens_total == 0 {
            0.0
        } else {
            self.tokens_removed as f64 / self.tokens_total as f64
        }
    }
}

/// Drop every token whose stem matches the stem of a test word.
///
/// Sentences are kept even when emptied. Tokens in `keep` survive verbatim.
pub fn filter_corpus(corpus: &Corpus, test_words: &HashSet<String>, keep: &HashSet<String>) -> (Corpus, RemovalStats) {
    let stems: HashSet<String> = test_words.iter().map(|w| snowball_stem(w)).collect();
    let mut verdict: HashMap<&str, bool> = HashMap::new();
    let mut stats = RemovalStats {
        tokens_removed: 0,
        tokens_total: 0,
    };
    let mut sentences = Vec::with_capacity(corpus.sentences.len());
    for s in &corpus.sentences {
        let mut out = Vec::with_capacity(s.len());
        for t in s {
            stats.tokens_total += 1;
            let drop = *verdict
                .entry(t.as_str())
                .or_insert_with(|| !keep.contains(t) && stems.contains(&snowball_stem(t)));
            if drop {
                stats.tokens_removed += 1;
            } else {
                out.push(t.clone());
            }
        }
        sentences.push(out);
    }
    (Corpus { sentences }, stats)
}

/// A set of words ignored by the additive family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(Arc<HashSet<String>>);

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

impl Stopwords {
    /// The bundled 179-word English list.
    pub fn english() -> Self {
        Self::from_text(BUNDLED_STOPWORDS)
    }

    pub fn none() -> Self {
        Stopwords(Arc::new(HashSet::new()))
    }

    pub fn from_text(text: &str) -> Self {
        Stopwords(Arc::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
        ))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_text(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::english()
    }
}

/// One few-shot instance: a target form and sentences marking it with `<TRG>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub target: String,
    pub sentences: Vec<Vec<String>>,
    pub target_positions: Vec<usize>,
}

impl Episode {
    pub fn new(target: impl Into<String>, sentences: Vec<Vec<String>>) -> Result<Self> {
        let target = target.into();
        if sentences.is_empty() {
            return Err(Error::Empty(format!("episode for `{target}` has no sentences")));
        }
        let mut target_positions = Vec::with_capacity(sentences.len());
        for (i, s) in sentences.iter().enumerate() {
            let mut hits = s.iter().enumerate().filter(|(_, t)| *t == PLACEHOLDER);
            match (hits.next(), hits.next()) {
                (Some((p, _)), None) => target_positions.push(p),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "sentence {i} for `{target}` must contain {PLACEHOLDER} exactly once"
                    )))
                }
            }
        }
        Ok(Episode {
            target,
            sentences,
            target_positions,
        })
    }

    /// Parse raw text lines (tokenized) into an episode.
    pub fn from_lines<S: AsRef<str>>(target: impl Into<String>, lines: &[S]) -> Result<Self> {
        Self::new(target, lines.iter().map(|l| tokenize(l.as_ref())).collect())
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// `(sentence, target position)` pairs.
    pub fn contexts(&self) -> impl Iterator<Item = (&[String], usize)> {
        self.sentences
            .iter()
            .map(Vec::as_slice)
            .zip(self.target_positions.iter().copied())
    }
}

/// Sample `n` sentences of a word's context bank with a seeded shuffle.
pub fn extract_episode(bank: &[Vec<String>], word: &str, n: usize, seed: u64) -> Result<Episode> {
    if n == 0 {
        return Err(Error::InvalidArgument("episode needs at least one sentence".into()));
    }
    if bank.len() < n {
        return Err(Error::InsufficientSentences {
            word: word.to_string(),
            needed: n,
            available: bank.len(),
        });
    }
    let mut order: Vec<usize> = (0..bank.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let sentences = order[..n].iter().map(|&i| bank[i].clone()).collect();
    Episode::new(word, sentences)
}

/// Read a `word<TAB>sentence` file, grouping lines of the same word into one episode.
pub fn read_episodes(path: impl AsRef<Path>) -> Result<Vec<Episode>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Vec<String>>> = HashMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (word, sentence) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, i + 1, "expected `word<TAB>sentence`"))?;
        let toks = tokenize(sentence);
        if toks.iter().filter(|t| *t == PLACEHOLDER).count() != 1 {
            return Err(Error::format(
                path,
                i + 1,
                format!("sentence must contain {PLACEHOLDER} exactly once"),
            ));
        }
        let g = groups.entry(word.to_string()).or_insert_with(|| {
            order.push(word.to_string());
            Vec::new()
        });
        g.push(toks);
    }
    order
        .into_iter()
        .map(|w| {
            let s = groups.remove(&w).expect("grouped");
            Episode::new(w, s)
        })
        .collect()
}

/// How the subsampling frequency weight is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsampleMode {
    /// `clamp(1 - sqrt(t / f), 0, 1)`.
    #[default]
    PaperEq3,
    /// `min(1, sqrt(t / f))`, the usual keep probability.
    Standard,
}

pub fn subsample_weight(f: f64, t: f64, mode: SubsampleMode) -> Result<f64> {
    if !(f > 0.0) || !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "subsampling needs positive frequency and threshold, got f={f}, t={t}"
        )));
    }
    let r = (t / f).sqrt();
    Ok(match mode {
        SubsampleMode::PaperEq3 => (1.0 - r).clamp(0.0, 1.0),
        SubsampleMode::Standard => r.min(1.0),
    })
}

/// Negative-sampling distribution `count^(3/4) / sum`, aligned with some vocabulary order.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeDistribution {
    probs: Vec<f64>,
}

impl NegativeDistribution {
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let z: f64 = weights.iter().sum();
        if !(z > 0.0) {
            return Err(Error::Empty("negative distribution needs a positive count".into()));
        }
        Ok(NegativeDistribution {
            probs: weights.into_iter().map(|w| w / z).collect(),
        })
    }

    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let z: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (z - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(
                "probabilities must lie in [0, 1] and sum to 1".into(),
            ));
        }
        Ok(NegativeDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Distribution aligned with `freqs.entries()`.
pub fn negative_distribution(freqs: &FrequencyTable) -> Result<NegativeDistribution> {
    let counts: Vec<u64> = freqs.entries().iter().map(|(_, c)| *c).collect();
    NegativeDistribution::from_counts(&counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn s(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn set(words: &[&str]) -> HashSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The cat sat."), s(&["the", "cat", "sat"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Hello, World!"), s(&["hello", "world"]));
        assert_eq!(tokenize("a <TRG>, b"), s(&["a", "<TRG>", "b"]));
        assert_eq!(tokenize("don't"), s(&["don", "t"]));
    }

    #[test]
    fn frequency_examples() {
        let t = count_frequencies(&Corpus::new(vec![s(&["a", "b"]), s(&["a"])]));
        assert_eq!(t.get("a"), 2);
        assert_eq!(t.get("b"), 1);
        assert_eq!(t.total(), 3);
        let e = count_frequencies(&Corpus::default());
        assert!(e.is_empty());
        assert_eq!(e.total(), 0);
    }

    #[test]
    fn frequencies_match_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let toks: Vec<String> = (0..1000).map(|_| format!("t{}", rng.random_range(0..40))).collect();
        let corpus = Corpus::new(toks.chunks(7).map(|c| c.to_vec()).collect());
        let t = count_frequencies(&corpus);
        assert_eq!(t.total(), 1000);
        for (w, c) in t.entries() {
            assert_eq!(*c, toks.iter().filter(|x| *x == w).count() as u64);
        }
    }

    #[test]
    fn stem_index_examples() {
        let idx = build_stem_index(&["run", "running", "dog"]);
        assert_eq!(idx.len(), 2);
        assert_eq!(
            idx.get("run").unwrap(),
            &["run".to_string(), "running".to_string()].into()
        );
        assert_eq!(idx.get("dog").unwrap(), &["dog".to_string()].into());
        assert!(build_stem_index::<&str>(&[]).is_empty());
    }

    #[test]
    fn filter_examples() {
        let c = Corpus::new(vec![s(&["running", "jumps"])]);
        let (out, st) = filter_corpus(&c, &set(&["run"]), &HashSet::new());
        assert_eq!(out.sentences, vec![s(&["jumps"])]);
        assert_eq!(st.fraction(), 0.5);

        let (out, st) = filter_corpus(&c, &HashSet::new(), &HashSet::new());
        assert_eq!(out, c);
        assert_eq!(st.fraction(), 0.0);

        let (out, st) = filter_corpus(&c, &set(&["run"]), &set(&["running"]));
        assert_eq!(out, c);
        assert_eq!(st.fraction(), 0.0);
    }

    #[test]
    fn filter_keeps_emptied_sentences() {
        let c = Corpus::new(vec![s(&["runs"]), s(&["dog"])]);
        let (out, _) = filter_corpus(&c, &set(&["run"]), &HashSet::new());
        assert_eq!(out.sentences, vec![Vec::<String>::new(), s(&["dog"])]);
    }

    #[test]
    fn episode_requires_single_placeholder() {
        assert!(Episode::new("x", vec![s(&["a", "<TRG>"])]).is_ok());
        assert!(Episode::new("x", vec![s(&["a"])]).is_err());
        assert!(Episode::new("x", vec![s(&["<TRG>", "<TRG>"])]).is_err());
        assert!(Episode::new("x", vec![]).is_err());
    }

    fn bank(n: usize) -> Vec<Vec<String>> {
        (0..n).map(|i| s(&["<TRG>", &format!("c{i}")])).collect()
    }

    #[test]
    fn extract_examples() {
        let b = bank(3);
        let e = extract_episode(&b, "w", 3, 9).unwrap();
        let mut got = e.sentences.clone();
        got.sort();
        let mut want = b.clone();
        want.sort();
        assert_eq!(got, want);
        assert_eq!(e.target_positions, vec![0, 0, 0]);

        let a = extract_episode(&b, "w", 1, 42).unwrap();
        for _ in 0..5 {
            assert_eq!(extract_episode(&b, "w", 1, 42).unwrap(), a);
        }
        assert!(matches!(
            extract_episode(&b, "w", 4, 0),
            Err(Error::InsufficientSentences {
                needed: 4,
                available: 3,
                ..
            })
        ));
    }

    #[test]
    fn different_seeds_usually_differ() {
        let b = bank(255);
        let distinct = (0..100u64)
            .filter(|&i| {
                let x = extract_episode(&b, "w", 4, 2 * i).unwrap();
                let y = extract_episode(&b, "w", 4, 2 * i + 1).unwrap();
                x.sentences != y.sentences
            })
            .count();
        assert!(distinct >= 99, "only {distinct} of 100 seed pairs differed");
    }

    #[test]
    fn context_bank_marks_first_occurrence() {
        let c = Corpus::new(vec![s(&["a", "w", "w"]), s(&["b"])]);
        assert_eq!(c.context_bank("w"), vec![s(&["a", "<TRG>", "w"])]);
    }

    #[test]
    fn subsample_examples() {
        let t = 1e-5;
        assert_eq!(subsample_weight(t, t, SubsampleMode::PaperEq3).unwrap(), 0.0);
        assert_eq!(subsample_weight(4.0 * t, t, SubsampleMode::PaperEq3).unwrap(), 0.5);
        assert_eq!(subsample_weight(t / 4.0, t, SubsampleMode::PaperEq3).unwrap(), 0.0);
        assert_eq!(subsample_weight(t / 4.0, t, SubsampleMode::Standard).unwrap(), 1.0);
        assert!(subsample_weight(0.0, t, SubsampleMode::Standard).is_err());
        assert!(subsample_weight(0.1, 0.0, SubsampleMode::PaperEq3).is_err());
    }

    #[test]
    fn negative_distribution_examples() {
        let d = NegativeDistribution::from_counts(&[1, 1]).unwrap();
        assert_eq!(d.probs(), [0.5, 0.5]);
        let d = NegativeDistribution::from_counts(&[16, 1]).unwrap();
        assert!((d.probs()[0] - 8.0 / 9.0).abs() < 1e-12);
        assert!((d.probs()[1] - 1.0 / 9.0).abs() < 1e-12);
        assert!(NegativeDistribution::from_counts(&[]).is_err());
        assert!(NegativeDistribution::from_counts(&[0, 0]).is_err());
    }

    #[test]
    fn negative_distribution_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let counts: Vec<u64> = (0..100).map(|_| rng.random_range(0..1000)).collect();
        let d = NegativeDistribution::from_counts(&counts).unwrap();
        let z: f64 = counts.iter().map(|&c| (c as f64).powf(0.75)).sum();
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (p, &c) in d.probs().iter().zip(&counts) {
            assert!((p - (c as f64).powf(0.75) / z).abs() < 1e-15);
            assert_eq!(*p > 0.0, c > 0);
        }
    }

    #[test]
    fn bundled_stopwords() {
        let sw = Stopwords::english();
        assert_eq!(sw.len(), 179);
        assert!(sw.contains("the"));
        assert!(!sw.contains("dog"));
    }

    proptest! {
        #[test]
        fn filtering_is_idempotent_and_complete(
            sents in prop::collection::vec(
                prop::collection::vec(prop::sample::select(vec![
                    "run", "runs", "running", "runner", "dog", "dogs", "cat", "walked", "walk", "the",
                ]), 0..6),
                0..20,
            ),
            tests in prop::collection::hash_set(prop::sample::select(vec!["run", "dog", "walking", "xyz"]), 0..3),
        ) {
            let corpus = Corpus::new(sents.iter().map(|x| s(x)).collect());
            let tests: HashSet<String> = tests.into_iter().map(String::from).collect();
            let (once, _) = filter_corpus(&corpus, &tests, &HashSet::new());
            let (twice, st) = filter_corpus(&once, &tests, &HashSet::new());
            prop_assert_eq!(st.tokens_removed, 0);
            prop_assert_eq!(&once, &twice);
            let stems: HashSet<String> = tests.iter().map(|w| snowball_stem(w)).collect();
            for t in once.sentences.iter().flatten() {
                prop_assert!(!stems.contains(&snowball_stem(t)));
            }
        }

        #[test]
        fn subsample_monotone_and_bounded(
            f1 in 1e-9f64..1.0, f2 in 1e-9f64..1.0, t in 1e-7f64..1e-2,
        ) {
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            for mode in [SubsampleMode::PaperEq3, SubsampleMode::Standard] {
                let a = subsample_weight(lo, t, mode).unwrap();
                let b = subsample_weight(hi, t, mode).unwrap();
                prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
                match mode {
                    SubsampleMode::PaperEq3 => prop_assert!(a <= b),
                    // keep probability falls as words get more frequent
                    SubsampleMode::Standard => prop_assert!(a >= b),
                }
            }
        }

        #[test]
        fn negative_distribution_scale_invariant(counts in prop::collection::vec(0u64..10_000, 1..30)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let a = NegativeDistribution::from_counts(&counts).unwrap();
            let doubled: Vec<u64> = counts.iter().map(|c| c * 2).collect();
            let b = NegativeDistribution::from_counts(&doubled).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

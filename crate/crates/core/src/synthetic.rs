//! Synthetic corpora and a miniature benchmark suite.
//!
//! The suite has 8 topics of 5 stems, each stem in 5 inflections, giving a
//! 200-word vocabulary with both morphological families and topical
//! clusters. Sentences draw most tokens from a single topic.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Episode, Stopwords, PLACEHOLDER};
use crate::embedstore::{cosine, save_space, EmbeddingSpace};
use crate::error::{Error, Result};
use crate::eval::data::{ChimeraDataset, ChimeraTrial, CrwDataset, CrwPair, DnDataset, DnItem};
use crate::fewshot::TrainingPairSet;
use crate::sgns::{train_background, TrainMode, TrainParams};

pub const SUFFIXES: [&str; 5] = ["", "s", "ed", "ing", "ings"];

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub topics: usize,
    pub stems_per_topic: usize,
    pub sentences: usize,
    pub sentence_len: usize,
    /// Chance that a token comes from a random topic instead.
    pub noise: f64,
    pub dn_items: usize,
    pub chimera_trials: usize,
    pub crw_words: usize,
    pub crw_partners: usize,
    pub crw_bank: usize,
    pub dim: usize,
    pub epochs: usize,
    pub buckets: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            topics: 8,
            stems_per_topic: 5,
            sentences: 3000,
            sentence_len: 8,
            noise: 0.1,
            dn_items: 20,
            chimera_trials: 12,
            crw_words: 10,
            crw_partners: 3,
            crw_bank: 64,
            dim: 24,
            epochs: 5,
            buckets: 2000,
            seed: 7,
        }
    }
}

impl SuiteConfig {
    /// Background training parameters for the suite corpus.
    pub fn train_params(&self, mode: TrainMode) -> TrainParams {
        TrainParams {
            dim: self.dim,
            epochs: self.epochs,
            min_count: 1,
            subsample: None,
            seed: self.seed,
            buckets: self.buckets,
            mode,
            ..TrainParams::default()
        }
    }
}

/// Generated text side of the suite. Scores are filled by [`Suite::attach_scores`].
#[derive(Debug, Clone)]
pub struct Suite {
    pub config: SuiteConfig,
    /// Words per topic, grouped by stem (`topics[t][s * 5 + k]`).
    pub topics: Vec<Vec<String>>,
    pub corpus: Corpus,
    pub dn: DnDataset,
    pub chimera: ChimeraDataset,
    /// The two vocabulary words blended into each chimera.
    pub chimera_sources: Vec<(String, String)>,
    pub crw: CrwDataset,
}

fn make_stems(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let stop = Stopwords::english();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut s = String::new();
        for i in 0..5 {
            let set = if i % 2 == 0 { CONSONANTS } else { VOWELS };
            s.push(*set.choose(rng).expect("non-empty") as char);
        }
        if !stop.contains(&s) && seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

struct Sampler {
    topics: Vec<Vec<String>>,
    weights: WeightedIndex<f64>,
    noise: f64,
}

impl Sampler {
    fn word(&self, topic: usize, rng: &mut ChaCha8Rng) -> &str {
        let t = if rng.random::<f64>() < self.noise {
            rng.random_range(0..self.topics.len())
        } else {
            topic
        };
        &self.topics[t][self.weights.sample(rng)]
    }

    fn sentence(&self, topic: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        (0..len).map(|_| self.word(topic, rng).to_string()).collect()
    }

    /// A sentence with the placeholder at a random position.
    fn context(&self, topic: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        let mut s = self.sentence(topic, len - 1, rng);
        let at = rng.random_range(0..len);
        s.insert(at, PLACEHOLDER.to_string());
        s
    }
}

impl Suite {
    pub fn generate(config: &SuiteConfig) -> Result<Self> {
        let c = config;
        if c.topics < 2 || c.stems_per_topic == 0 || c.sentence_len < 2 {
            return Err(Error::InvalidArgument(
                "suite needs 2+ topics, stems and sentences of 2+ tokens".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let stems = make_stems(c.topics * c.stems_per_topic, &mut rng);
        let topics: Vec<Vec<String>> = stems
            .chunks(c.stems_per_topic)
            .map(|ch| {
                ch.iter()
                    .flat_map(|s| SUFFIXES.iter().map(move |x| format!("{s}{x}")))
                    .collect()
            })
            .collect();
        let per_topic = topics[0].len();
        let weights: Vec<f64> = (0..per_topic).map(|r| 1.0 / ((r + 1) as f64).sqrt()).collect();
        let mut order: Vec<usize> = (0..per_topic).collect();
        order.shuffle(&mut rng);
        let weights = WeightedIndex::new(order.iter().map(|&i| weights[i])).expect("positive weights");
        let s = Sampler {
            topics: topics.clone(),
            weights,
            noise: c.noise,
        };

        let sentences = (0..c.sentences)
            .map(|i| s.sentence(i % c.topics, c.sentence_len, &mut rng))
            .collect();
        let corpus = Corpus::new(sentences);

        let mut pool: Vec<(usize, usize)> = (0..c.topics)
            .flat_map(|t| (0..per_topic).map(move |k| (t, k)))
            .collect();
        pool.shuffle(&mut rng);
        let need = c.dn_items + c.crw_words;
        if pool.len() < need + 1 {
            return Err(Error::InvalidArgument(
                "vocabulary too small for the requested items".into(),
            ));
        }
        let word = |(t, k): (usize, usize)| topics[t][k].clone();

        let mut items = Vec::with_capacity(c.dn_items);
        for &(t, k) in &pool[..c.dn_items] {
            let ep = Episode::new(word((t, k)), vec![s.context(t, c.sentence_len, &mut rng)])?;
            items.push(DnItem {
                gold: word((t, k)),
                episode: ep,
            });
        }

        let mut pairs = Vec::new();
        let mut banks = HashMap::new();
        for &(t, k) in &pool[c.dn_items..need] {
            let rare = word((t, k));
            let bank: Vec<Vec<String>> = (0..c.crw_bank)
                .map(|_| s.context(t, c.sentence_len, &mut rng))
                .collect();
            banks.insert(rare.clone(), bank);
            for j in 0..c.crw_partners {
                let pt = if j == 0 { t } else { (t + j) % c.topics };
                let mut pk = rng.random_range(0..per_topic);
                if pt == t && pk == k {
                    pk = (pk + 1) % per_topic;
                }
                pairs.push(CrwPair {
                    rare: rare.clone(),
                    partner: word((pt, pk)),
                    score: 0.0,
                });
            }
        }

        let mut trials = Vec::with_capacity(c.chimera_trials);
        let mut sources = Vec::with_capacity(c.chimera_trials);
        let ls = [2usize, 4, 6];
        for i in 0..c.chimera_trials {
            let l = ls[i * ls.len() / c.chimera_trials.max(1)];
            let ta = rng.random_range(0..c.topics);
            let tb = (ta + rng.random_range(1..c.topics)) % c.topics;
            let a = word((ta, rng.random_range(0..per_topic)));
            let b = word((tb, rng.random_range(0..per_topic)));
            let sents: Vec<Vec<String>> = (0..l)
                .map(|j| s.context(if j % 2 == 0 { ta } else { tb }, c.sentence_len, &mut rng))
                .collect();
            let id = format!("chimera{i}");
            let mut probes = Vec::new();
            let other = (0..c.topics).find(|&t| t != ta && t != tb).unwrap_or(ta);
            for t in [ta, ta, tb, tb, other, other] {
                let mut p = word((t, rng.random_range(0..per_topic)));
                while probes.contains(&p) || p == a || p == b {
                    p = word((t, rng.random_range(0..per_topic)));
                }
                probes.push(p);
            }
            trials.push(ChimeraTrial {
                episode: Episode::new(id.clone(), sents)?,
                id,
                l,
                ratings: vec![0.0; probes.len()],
                probes,
            });
            sources.push((a, b));
        }

        Ok(Suite {
            config: c.clone(),
            topics,
            corpus,
            dn: DnDataset { items },
            chimera: ChimeraDataset { trials },
            chimera_sources: sources,
            crw: CrwDataset { pairs, banks },
        })
    }

    pub fn vocab(&self) -> Vec<String> {
        self.topics.concat()
    }

    /// `space` plus one blended vector per chimera (mean of the unit source vectors).
    pub fn gold_space(&self, space: &EmbeddingSpace) -> Result<EmbeddingSpace> {
        let d = space.dim();
        let mut words = space.words().to_vec();
        let mut rows: Vec<Array1<f64>> = space.vectors().rows().into_iter().map(|r| r.to_owned()).collect();
        let mut counts = space.counts().to_vec();
        for (t, (a, b)) in self.chimera.trials.iter().zip(&self.chimera_sources) {
            let unit = |w: &str| -> Result<Array1<f64>> {
                let v = space.vector(w).ok_or_else(|| Error::UnknownWord(w.to_string()))?;
                let n = v.dot(&v).sqrt();
                if n == 0.0 {
                    return Err(Error::ZeroVector);
                }
                Ok(&v / n)
            };
            rows.push((unit(a)? + unit(b)?) / 2.0);
            words.push(t.id.clone());
            counts.push(0);
        }
        let mut m = Array2::zeros((rows.len(), d));
        for (i, r) in rows.iter().enumerate() {
            m.row_mut(i).assign(r);
        }
        EmbeddingSpace::new(words, m, counts)
    }

    /// Human scores: cosine between gold vectors.
    pub fn attach_scores(&mut self, gold: &EmbeddingSpace) -> Result<()> {
        let vec_of = |w: &str| gold.vector(w).ok_or_else(|| Error::UnknownWord(w.to_string()));
        for t in &mut self.chimera.trials {
            let g = vec_of(&t.id)?;
            t.ratings = t.probes.iter().map(|p| cosine(g, vec_of(p)?)).collect::<Result<_>>()?;
        }
        for p in &mut self.crw.pairs {
            p.score = cosine(vec_of(&p.rare)?, vec_of(&p.partner)?)?;
        }
        Ok(())
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<SuitePaths> {
        let paths = SuitePaths::new(dir);
        std::fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
        self.corpus.write(&paths.corpus)?;
        self.dn.save(&paths.dn)?;
        self.chimera.save(&paths.chimera)?;
        self.crw.save(&paths.crw_pairs, &paths.crw_contexts)?;
        let test: Vec<&str> = self.dn.items.iter().map(|i| i.gold.as_str()).collect();
        write_text(&paths.dn_words, &test.join("\n"))?;
        Ok(paths)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, format!("{text}\n")).map_err(|e| Error::io(path, e))
}

/// File layout of a written suite.
#[derive(Debug, Clone)]
pub struct SuitePaths {
    pub dir: PathBuf,
    pub corpus: PathBuf,
    pub dn: PathBuf,
    pub dn_words: PathBuf,
    pub chimera: PathBuf,
    pub crw_pairs: PathBuf,
    pub crw_contexts: PathBuf,
    /// Word2vec background space and its model sidecars.
    pub vectors: PathBuf,
    pub counts: PathBuf,
    /// Subword background model for the fastText-style methods.
    pub ft_vectors: PathBuf,
    pub ft_counts: PathBuf,
    pub gold_vectors: PathBuf,
    pub gold_counts: PathBuf,
}

impl SuitePaths {
    pub fn new(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref().to_path_buf();
        SuitePaths {
            corpus: d.join("corpus.txt"),
            dn: d.join("dn.tsv"),
            dn_words: d.join("dn_words.txt"),
            chimera: d.join("chimera.tsv"),
            crw_pairs: d.join("crw_pairs.tsv"),
            crw_contexts: d.join("crw_contexts"),
            vectors: d.join("background.vec"),
            counts: d.join("background.counts"),
            ft_vectors: d.join("subword.vec"),
            ft_counts: d.join("subword.counts"),
            gold_vectors: d.join("gold.vec"),
            gold_counts: d.join("gold.counts"),
            dir: d,
        }
    }
}

/// Generate the suite, train both background models and write everything to `dir`.
pub fn build_suite(config: &SuiteConfig, dir: impl AsRef<Path>) -> Result<(Suite, SuitePaths)> {
    let mut suite = Suite::generate(config)?;
    let w2v = train_background(&suite.corpus, &config.train_params(TrainMode::Standard))?;
    let ft = train_background(&suite.corpus, &config.train_params(TrainMode::Fasttext))?;
    let space = w2v.to_space(false)?;
    let gold = suite.gold_space(&space)?;
    suite.attach_scores(&gold)?;
    let paths = suite.write(dir)?;
    w2v.save(&paths.vectors, &paths.counts)?;
    ft.save(&paths.ft_vectors, &paths.ft_counts)?;
    save_space(&gold, &paths.gold_vectors, &paths.gold_counts)?;
    Ok((suite, paths))
}

/// Words `a1..a5` and `b1..b5`; each sentence uses only one cluster.
pub fn two_cluster_corpus(sentences: usize, len: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters: Vec<Vec<String>> = ["a", "b"]
        .iter()
        .map(|p| (1..=5).map(|i| format!("{p}{i}")).collect())
        .collect();
    Corpus::new(
        (0..sentences)
            .map(|i| {
                let c = &clusters[i % 2];
                (0..len)
                    .map(|_| c.choose(&mut rng).expect("non-empty").clone())
                    .collect()
            })
            .collect(),
    )
}

/// Uniform random tokens over `vocab`, in sentences of `len`.
pub fn random_corpus(vocab: &[String], tokens: usize, len: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(tokens / len.max(1) + 1);
    let mut left = tokens;
    while left > 0 {
        let n = len.min(left);
        sentences.push(
            (0..n)
                .map(|_| vocab.choose(&mut rng).expect("non-empty").clone())
                .collect(),
        );
        left -= n;
    }
    Corpus::new(sentences)
}

/// Pairs `y = A x (+ noise)` with standard-normal `x` and `A`.
///
/// Returns the pairs and the planted `A`.
pub fn planted_linear(d: usize, n: usize, noise: f64, seed: u64) -> (TrainingPairSet, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| StandardNormal.sample(&mut rng));
    let a: Array2<f64> = normal(d, d) / (d as f64).sqrt();
    let x = normal(n, d);
    let mut y = x.dot(&a.t());
    if noise > 0.0 {
        y = y + normal(n, d) * noise;
    }
    let pairs = TrainingPairSet {
        words: (0..n).map(|i| format!("w{i}")).collect(),
        x,
        y,
    };
    (pairs, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::snowball_stem;

    #[test]
    fn suite_shape() {
        let s = Suite::generate(&SuiteConfig::default()).unwrap();
        let v = s.vocab();
        assert_eq!(v.len(), 200);
        assert_eq!(v.iter().collect::<BTreeSet<_>>().len(), 200);
        assert_eq!(s.dn.items.len(), 20);
        assert_eq!(s.chimera.trials.len(), 12);
        assert_eq!(s.crw.pairs.len(), 30);
        assert!(s.crw.banks.values().all(|b| b.len() == 64));
        let ls: Vec<usize> = s.chimera.trials.iter().map(|t| t.l).collect();
        assert_eq!(ls.iter().filter(|&&l| l == 2).count(), 4);
        // Inflections of one stem share a Porter2 stem.
        let fam = &s.topics[0][..5];
        assert_eq!(snowball_stem(&fam[1]), snowball_stem(&fam[3]));
        let words: BTreeSet<&str> = s.corpus.sentences.iter().flatten().map(String::as_str).collect();
        assert!(v.iter().all(|w| words.contains(w.as_str())));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = Suite::generate(&SuiteConfig::default()).unwrap();
        let b = Suite::generate(&SuiteConfig::default()).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.chimera, b.chimera);
    }

    #[test]
    fn planted_pairs_are_exact_without_noise() {
        let (p, a) = planted_linear(4, 10, 0.0, 3);
        let diff = &p.y - &p.x.dot(&a.t());
        assert!(diff.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn random_corpus_token_count() {
        let vocab: Vec<String> = ["x", "y"].iter().map(|s| s.to_string()).collect();
        assert_eq!(random_corpus(&vocab, 25, 10, 1).token_count(), 25);
    }
}

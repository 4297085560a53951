//! Metrics, evaluation protocols and significance testing.

pub mod data;
pub mod methods;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{extract_episode, snowball_stem};
use crate::embedstore::{cosine, neighbors, rank_of, EmbeddingSpace};
use crate::error::{Error, Result};

pub use data::{ChimeraDataset, ChimeraTrial, CrwDataset, CrwPair, DnDataset, DnItem};
pub use methods::{Method, MethodId};

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two observations".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y)).ok_or_else(|| Error::UndefinedCorrelation("constant input".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub mrr: f64,
    pub median: usize,
}

/// Mean reciprocal rank and lower median.
pub fn ranking_metrics(ranks: &[usize]) -> Result<RankingMetrics> {
    if ranks.is_empty() {
        return Err(Error::Empty("no ranks".into()));
    }
    if ranks.contains(&0) {
        return Err(Error::InvalidArgument("ranks are 1-based".into()));
    }
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    Ok(RankingMetrics {
        mrr,
        median: sorted[(sorted.len() - 1) / 2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Dn,
    FilteredDn,
    Chimera,
    FullChimera,
    Crw,
    FilteredCrw,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Dn,
        Task::FilteredDn,
        Task::Chimera,
        Task::FullChimera,
        Task::Crw,
        Task::FilteredCrw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Dn => "dn",
            Task::FilteredDn => "filtered-dn",
            Task::Chimera => "chimera",
            Task::FullChimera => "full-chimera",
            Task::Crw => "crw",
            Task::FilteredCrw => "filtered-crw",
        }
    }

    pub fn is_filtered(self) -> bool {
        matches!(self, Task::FilteredDn | Task::FilteredCrw)
    }

    pub fn is_chimera(self) -> bool {
        matches!(self, Task::Chimera | Task::FullChimera)
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

/// One scored unit: a DN item, a chimera trial or a CRW pair at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub id: String,
    /// Reciprocal rank (DN), trial rho (chimera) or system similarity (CRW).
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human: Option<f64>,
    #[serde(default)]
    pub abstained: bool,
}

impl ItemScore {
    fn new(id: impl Into<String>, score: Option<f64>) -> Self {
        ItemScore {
            id: id.into(),
            score,
            rank: None,
            group: None,
            human: None,
            abstained: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub task: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub per_item: Vec<ItemScore>,
    pub aggregates: BTreeMap<String, f64>,
    /// Items left out of correlations (abstentions, undefined trials).
    pub dropped: usize,
}

/// SHA-256 of the canonical (key-sorted, compact) JSON of `config`.
pub fn config_hash(config: &serde_json::Value) -> String {
    let text = serde_json::to_string(config).expect("JSON values serialize");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl EvalReport {
    fn new(method: &str, task: Task, config: serde_json::Value) -> Self {
        EvalReport {
            method: method.to_string(),
            task: task.to_string(),
            config_hash: config_hash(&config),
            config,
            per_item: Vec::new(),
            aggregates: BTreeMap::new(),
            dropped: 0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Per-item scores in order; abstentions count as `fill`.
    pub fn scores(&self, fill: f64) -> Vec<f64> {
        self.per_item.iter().map(|i| i.score.unwrap_or(fill)).collect()
    }
}

/// Run `f` over items in parallel, keeping dataset order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.par_iter().map(f).collect()
}

fn abstain_or<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_abstention() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Rank of the gold word for each item's inferred vector.
///
/// Abstentions (and degenerate vectors) score the worst rank `|V|`.
pub fn eval_dn(
    method: &dyn Method,
    dataset: &DnDataset,
    space: &EmbeddingSpace,
    task: Task,
    config: serde_json::Value,
) -> Result<EvalReport> {
    dataset.validate(space)?;
    if dataset.items.is_empty() {
        return Err(Error::Empty("DN dataset has no items".into()));
    }
    let none = HashSet::new();
    let results = par_map(&dataset.items, |item| -> Result<(usize, bool)> {
        let ranked = method
            .infer(&item.episode)
            .and_then(|v| rank_of(space, v.view(), &item.gold, &none));
        Ok(match abstain_or(ranked)? {
            Some(r) => (r, false),
            None => (space.len(), true),
        })
    });
    let mut report = EvalReport::new(method.id(), task, config);
    let mut ranks = Vec::with_capacity(results.len());
    for (item, res) in dataset.items.iter().zip(results) {
        let (rank, abstained) = res?;
        ranks.push(rank);
        let mut s = ItemScore::new(&item.gold, Some(1.0 / rank as f64));
        s.rank = Some(rank);
        s.abstained = abstained;
        report.dropped += usize::from(abstained);
        report.per_item.push(s);
    }
    let m = ranking_metrics(&ranks)?;
    report.aggregates.insert("mrr".into(), m.mrr);
    report.aggregates.insert("median_rank".into(), m.median as f64);
    report.aggregates.insert("items".into(), ranks.len() as f64);
    Ok(report)
}

/// Per-trial Spearman between system similarities to probes and human ratings.
pub fn eval_chimera(
    method: &dyn Method,
    dataset: &ChimeraDataset,
    space: &EmbeddingSpace,
    task: Task,
    config: serde_json::Value,
) -> Result<EvalReport> {
    dataset.validate(space)?;
    let results = par_map(&dataset.trials, |trial| -> Result<Option<f64>> {
        let Some(v) = abstain_or(method.infer(&trial.episode))? else {
            return Ok(None);
        };
        let mut sims = Vec::with_capacity(trial.probes.len());
        for p in &trial.probes {
            let pv = space.vector(p).ok_or_else(|| Error::UnknownWord(p.clone()))?;
            match abstain_or(cosine(v.view(), pv))? {
                Some(c) => sims.push(c),
                None => return Ok(None),
            }
        }
        match spearman(&sims, &trial.ratings) {
            Ok(r) => Ok(Some(r)),
            Err(Error::UndefinedCorrelation(_)) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut report = EvalReport::new(method.id(), task, config);
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (trial, res) in dataset.trials.iter().zip(results) {
        let rho = res?;
        let group = format!("L{}", trial.l);
        let mut s = ItemScore::new(&trial.id, rho);
        s.group = Some(group.clone());
        match rho {
            Some(r) => groups.entry(group).or_default().push(r),
            None => {
                s.abstained = true;
                report.dropped += 1;
            }
        }
        report.per_item.push(s);
    }
    if groups.is_empty() {
        return Err(Error::UndefinedCorrelation("every chimera trial is undefined".into()));
    }
    let mut all = Vec::new();
    for (g, rhos) in &groups {
        report.aggregates.insert(format!("rho_{g}"), mean(rhos));
        all.extend_from_slice(rhos);
    }
    report.aggregates.insert("rho_all".into(), mean(&all));
    Ok(report)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrwOptions {
    pub ns: Vec<usize>,
    pub seed: u64,
    pub repeats: usize,
}

impl Default for CrwOptions {
    fn default() -> Self {
        CrwOptions {
            ns: vec![1, 2, 4, 8, 16, 32, 64],
            seed: 1,
            repeats: 1,
        }
    }
}

/// Seed of the sentence draw for one (word, n, repeat).
pub fn crw_draw_seed(seed: u64, word: &str, n: usize, repeat: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(word.as_bytes());
    h.update((n as u64).to_le_bytes());
    h.update((repeat as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Spearman between system and human similarity for each context count.
///
/// Each rare word is inferred once per (n, repeat) from a seeded draw of its
/// context bank; rho is averaged over repeats.
pub fn eval_crw(
    method: &dyn Method,
    dataset: &CrwDataset,
    space: &EmbeddingSpace,
    opts: &CrwOptions,
    task: Task,
    config: serde_json::Value,
) -> Result<EvalReport> {
    dataset.validate(space)?;
    if opts.ns.is_empty() || opts.repeats == 0 || opts.ns.contains(&0) {
        return Err(Error::InvalidArgument(
            "need positive context counts and repeats".into(),
        ));
    }
    let humans: Vec<f64> = dataset.pairs.iter().map(|p| p.score).collect();
    if humans.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::UndefinedCorrelation("human scores are constant".into()));
    }
    let max_n = *opts.ns.iter().max().expect("non-empty");
    let mut rare: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for p in &dataset.pairs {
        if seen.insert(p.rare.as_str()) {
            rare.push(&p.rare);
        }
    }
    for w in &rare {
        let bank = dataset.banks.get(*w).map_or(0, Vec::len);
        if bank < max_n {
            return Err(Error::InsufficientSentences {
                word: w.to_string(),
                needed: max_n,
                available: bank,
            });
        }
    }

    let mut report = EvalReport::new(method.id(), task, config);
    let mut jobs: Vec<(usize, usize, &str)> = Vec::new();
    for &n in &opts.ns {
        for r in 0..opts.repeats {
            jobs.extend(rare.iter().map(|w| (n, r, *w)));
        }
    }
    let vectors = par_map(&jobs, |&(n, r, w)| -> Result<Option<Array1<f64>>> {
        let bank = &dataset.banks[w];
        let ep = extract_episode(bank, w, n, crw_draw_seed(opts.seed, w, n, r))?;
        abstain_or(method.infer(&ep))
    });
    let mut cache: HashMap<(usize, usize, &str), Option<Array1<f64>>> = HashMap::new();
    for (job, v) in jobs.iter().zip(vectors) {
        cache.insert(*job, v?);
    }

    for &n in &opts.ns {
        let mut rhos = Vec::new();
        for r in 0..opts.repeats {
            let mut sys = Vec::new();
            let mut hum = Vec::new();
            for p in &dataset.pairs {
                let pv = space
                    .vector(&p.partner)
                    .ok_or_else(|| Error::UnknownWord(p.partner.clone()))?;
                let sim = match &cache[&(n, r, p.rare.as_str())] {
                    Some(v) => abstain_or(cosine(v.view(), pv))?,
                    None => None,
                };
                if let Some(s) = sim {
                    sys.push(s);
                    hum.push(p.score);
                }
                let mut item = ItemScore::new(format!("{}|{}", p.rare, p.partner), sim);
                item.group = Some(if opts.repeats > 1 {
                    format!("n{n}r{r}")
                } else {
                    format!("n{n}")
                });
                item.human = Some(p.score);
                item.abstained = sim.is_none();
                report.dropped += usize::from(sim.is_none());
                report.per_item.push(item);
            }
            match spearman(&sys, &hum) {
                Ok(rho) => rhos.push(rho),
                Err(Error::UndefinedCorrelation(m)) => {
                    log::warn!("{}: rho undefined at n={n}: {m}", method.id());
                }
                Err(e) => return Err(e),
            }
        }
        if !rhos.is_empty() {
            report.aggregates.insert(format!("rho_n{n}"), mean(&rhos));
        }
    }
    if report.aggregates.is_empty() {
        return Err(Error::UndefinedCorrelation(
            "rho undefined for every context count".into(),
        ));
    }
    Ok(report)
}

/// Fraction of test words with a same-stem word among their `k` nearest
/// neighbours (the word itself excluded), for each `k`.
pub fn stem_neighbor_proportions(
    space: &EmbeddingSpace,
    test_words: &[String],
    ks: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if test_words.is_empty() {
        return Err(Error::Empty("no test words".into()));
    }
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let first_hits = par_map(test_words, |w| -> Result<Option<usize>> {
        let v = space.vector(w).ok_or_else(|| Error::UnknownWord(w.clone()))?;
        let stem = snowball_stem(w);
        let ex: HashSet<String> = [w.clone()].into();
        let list = match abstain_or(neighbors(space, v, max_k, &ex))? {
            Some(l) => l,
            None => return Ok(None),
        };
        let first = list.words().position(|n| snowball_stem(n) == stem).map(|p| p + 1);
        Ok(first)
    });
    let hits: Vec<Option<usize>> = first_hits.into_iter().collect::<Result<_>>()?;
    Ok(ks
        .iter()
        .map(|&k| {
            let c = hits.iter().filter(|h| h.is_some_and(|p| p <= k)).count();
            (k, c as f64 / test_words.len() as f64)
        })
        .collect())
}

/// Paired two-sided sign-flip test on per-item differences.
///
/// `p = (1 + #{|mean of flipped differences| ≥ observed}) / (1 + iterations)`.
pub fn permutation_test(a: &[f64], b: &[f64], iterations: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("no paired scores".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("paired score".into()));
    }
    let n = diffs.len() as f64;
    let observed = (diffs.iter().sum::<f64>() / n).abs();
    let tol = 1e-12 * diffs.iter().map(|d| d.abs()).sum::<f64>() / n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0usize;
    for _ in 0..iterations {
        let mut s = 0.0;
        for chunk in diffs.chunks(64) {
            let bits: u64 = rng.random();
            for (i, d) in chunk.iter().enumerate() {
                if bits >> i & 1 == 1 {
                    s += d;
                } else {
                    s -= d;
                }
            }
        }
        if (s / n).abs() + tol >= observed {
            count += 1;
        }
    }
    Ok((1 + count) as f64 / (1 + iterations) as f64)
}

/// Kolmogorov–Smirnov distance between a sample and Uniform(0, 1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

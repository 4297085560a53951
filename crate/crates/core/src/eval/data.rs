//! Dataset formats.
//!
//! * DN: `word<TAB>sentence` with one `<TRG>` per sentence, one item per line.
//! * Chimera: `id<TAB>L<TAB>s1@@s2@@…<TAB>p1,p2,…<TAB>r1,r2,…`.
//! * CRW: pairs file `rare<TAB>partner<TAB>score` and a directory holding
//!   `<rare>.txt` with one `<TRG>`-marked sentence per line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::corpus::{tokenize, Episode, PLACEHOLDER};
use crate::embedstore::EmbeddingSpace;
use crate::error::{Error, Result};

fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for l in lines {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn sentence_text(tokens: &[String]) -> String {
    tokens.join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DnItem {
    pub gold: String,
    pub episode: Episode,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DnDataset {
    pub items: Vec<DnItem>,
}

impl DnDataset {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut items = Vec::new();
        for (no, line) in lines(path)? {
            let (word, sentence) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(path, no, "expected `word<TAB>sentence`"))?;
            let episode = Episode::from_lines(word, &[sentence]).map_err(|e| Error::format(path, no, e.to_string()))?;
            items.push(DnItem {
                gold: word.to_string(),
                episode,
            });
        }
        Ok(DnDataset { items })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_lines(
            path.as_ref(),
            self.items
                .iter()
                .map(|i| format!("{}\t{}", i.gold, sentence_text(&i.episode.sentences[0]))),
        )
    }

    pub fn validate(&self, space: &EmbeddingSpace) -> Result<()> {
        for item in &self.items {
            if !space.contains(&item.gold) {
                return Err(Error::UnknownWord(item.gold.clone()));
            }
            if item.episode.len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "DN item `{}` must have exactly one sentence",
                    item.gold
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChimeraTrial {
    pub id: String,
    pub l: usize,
    pub episode: Episode,
    pub probes: Vec<String>,
    pub ratings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChimeraDataset {
    pub trials: Vec<ChimeraTrial>,
}

impl ChimeraDataset {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut trials = Vec::new();
        for (no, line) in lines(path)? {
            let bad = |m: &str| Error::format(path, no, m);
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad("expected 5 tab-separated fields"));
            }
            let l: usize = f[1].trim().parse().map_err(|_| bad("invalid L"))?;
            let sentences: Vec<&str> = f[2].split("@@").collect();
            if sentences.len() != l {
                return Err(bad(&format!("L={l} but {} sentences", sentences.len())));
            }
            let episode = Episode::from_lines(f[0], &sentences).map_err(|e| bad(&e.to_string()))?;
            let probes: Vec<String> = f[3].split(',').map(|p| p.trim().to_lowercase()).collect();
            let ratings = f[4]
                .split(',')
                .map(|r| r.trim().parse::<f64>().map_err(|_| bad("invalid rating")))
                .collect::<Result<Vec<_>>>()?;
            if probes.len() != ratings.len() {
                return Err(bad("probe and rating counts differ"));
            }
            trials.push(ChimeraTrial {
                id: f[0].to_string(),
                l,
                episode,
                probes,
                ratings,
            });
        }
        Ok(ChimeraDataset { trials })
    }

    /// Concatenate several trial files (the full task joins train and test).
    pub fn load_all<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut trials = Vec::new();
        for p in paths {
            trials.extend(Self::load(p)?.trials);
        }
        Ok(ChimeraDataset { trials })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_lines(
            path.as_ref(),
            self.trials.iter().map(|t| {
                let sents: Vec<String> = t.episode.sentences.iter().map(|s| sentence_text(s)).collect();
                let ratings: Vec<String> = t.ratings.iter().map(|r| crate::textmat::fmt_f64(*r)).collect();
                format!(
                    "{}\t{}\t{}\t{}\t{}",
                    t.id,
                    t.l,
                    sents.join("@@"),
                    t.probes.join(","),
                    ratings.join(",")
                )
            }),
        )
    }

    pub fn validate(&self, space: &EmbeddingSpace) -> Result<()> {
        for t in &self.trials {
            if t.episode.len() != t.l || t.probes.len() != t.ratings.len() {
                return Err(Error::InvalidArgument(format!("malformed chimera trial `{}`", t.id)));
            }
            if let Some(p) = t.probes.iter().find(|p| !space.contains(p)) {
                return Err(Error::UnknownWord(p.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrwPair {
    pub rare: String,
    pub partner: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrwDataset {
    pub pairs: Vec<CrwPair>,
    /// Rare word → tokenized context sentences (each with one `<TRG>`).
    pub banks: HashMap<String, Vec<Vec<String>>>,
}

pub fn crw_context_path(dir: &Path, rare: &str) -> PathBuf {
    dir.join(format!("{rare}.txt"))
}

impl CrwDataset {
    pub fn load(pairs_path: impl AsRef<Path>, contexts_dir: impl AsRef<Path>) -> Result<Self> {
        let path = pairs_path.as_ref();
        let dir = contexts_dir.as_ref();
        let mut pairs = Vec::new();
        for (no, line) in lines(path)? {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::format(path, no, "expected `rare<TAB>partner<TAB>score`"));
            }
            let score = f[2]
                .trim()
                .parse()
                .map_err(|_| Error::format(path, no, "invalid score"))?;
            pairs.push(CrwPair {
                rare: f[0].to_string(),
                partner: f[1].to_lowercase(),
                score,
            });
        }
        let mut banks = HashMap::new();
        for p in &pairs {
            if banks.contains_key(&p.rare) {
                continue;
            }
            let cp = crw_context_path(dir, &p.rare);
            let mut bank = Vec::new();
            for (no, line) in lines(&cp)? {
                let toks = tokenize(&line);
                if toks.iter().filter(|t| *t == PLACEHOLDER).count() != 1 {
                    return Err(Error::format(
                        &cp,
                        no,
                        format!("sentence must contain {PLACEHOLDER} exactly once"),
                    ));
                }
                bank.push(toks);
            }
            banks.insert(p.rare.clone(), bank);
        }
        Ok(CrwDataset { pairs, banks })
    }

    pub fn save(&self, pairs_path: impl AsRef<Path>, contexts_dir: impl AsRef<Path>) -> Result<()> {
        let dir = contexts_dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_lines(
            pairs_path.as_ref(),
            self.pairs
                .iter()
                .map(|p| format!("{}\t{}\t{}", p.rare, p.partner, crate::textmat::fmt_f64(p.score))),
        )?;
        let mut words: Vec<&String> = self.banks.keys().collect();
        words.sort();
        for w in words {
            write_lines(
                &crw_context_path(dir, w),
                self.banks[w].iter().map(|s| sentence_text(s)),
            )?;
        }
        Ok(())
    }

    pub fn validate(&self, space: &EmbeddingSpace) -> Result<()> {
        if let Some(p) = self.pairs.iter().find(|p| !space.contains(&p.partner)) {
            return Err(Error::UnknownWord(p.partner.clone()));
        }
        Ok(())
    }
}

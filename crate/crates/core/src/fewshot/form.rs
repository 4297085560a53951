//! Surface-form vectors: a word is the mean of its character n-gram vectors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{array, Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedstore::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState};
use crate::sgns::{char_ngrams, NGRAM_MAX, NGRAM_MIN};
use crate::textmat::{SectionReader, SectionWriter};

#[derive(Debug, Clone, PartialEq)]
pub struct FormModel {
    ngrams: Vec<String>,
    index: HashMap<String, usize>,
    pub vectors: Array2<f64>,
    pub min_n: usize,
    pub max_n: usize,
}

impl FormModel {
    pub fn new(ngrams: Vec<String>, vectors: Array2<f64>, min_n: usize, max_n: usize) -> Result<Self> {
        if ngrams.len() != vectors.nrows() {
            return Err(Error::DimensionMismatch {
                expected: ngrams.len(),
                actual: vectors.nrows(),
            });
        }
        if min_n == 0 || min_n > max_n {
            return Err(Error::InvalidArgument(
                "n-gram range must satisfy 1 <= min <= max".into(),
            ));
        }
        let mut index = HashMap::with_capacity(ngrams.len());
        for (i, g) in ngrams.iter().enumerate() {
            if index.insert(g.clone(), i).is_some() {
                return Err(Error::DuplicateWord(g.clone()));
            }
        }
        Ok(FormModel {
            ngrams,
            index,
            vectors,
            min_n,
            max_n,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.ngrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty()
    }

    pub fn ngrams(&self) -> &[String] {
        &self.ngrams
    }

    pub fn vector(&self, ngram: &str) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.index.get(ngram).map(|&i| self.vectors.row(i))
    }

    /// Rows of the word's known n-grams (with repetition).
    pub fn rows(&self, word: &str) -> Vec<usize> {
        char_ngrams(word, self.min_n, self.max_n)
            .iter()
            .filter_map(|g| self.index.get(g).copied())
            .collect()
    }

    fn mean_of(&self, rows: &[usize]) -> Array1<f64> {
        let mut v = Array1::zeros(self.dim());
        for &r in rows {
            v += &self.vectors.row(r);
        }
        v / rows.len() as f64
    }

    pub fn infer(&self, word: &str) -> Result<Array1<f64>> {
        let rows = self.rows(word);
        if rows.is_empty() {
            return Err(Error::DegenerateForm(word.to_string()));
        }
        Ok(self.mean_of(&rows))
    }

    pub(crate) fn write_sections<W: Write>(&self, w: W) -> std::io::Result<W> {
        let mut s = SectionWriter::new(w);
        s.matrix("range", &array![[self.min_n as f64, self.max_n as f64]])?;
        s.keyed("ngrams", &self.ngrams, &self.vectors)?;
        Ok(s.into_inner())
    }

    pub(crate) fn read_sections<R: BufRead>(r: &mut SectionReader<R>) -> Result<Self> {
        let range = r.expect("range", false)?.data;
        if range.dim() != (1, 2) {
            return Err(Error::Config("form model range section must be 1x2".into()));
        }
        let tab = r.expect("ngrams", true)?;
        FormModel::new(
            tab.keys.unwrap_or_default(),
            tab.data,
            range[[0, 0]] as usize,
            range[[0, 1]] as usize,
        )
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

pub fn form_infer(word: &str, form: &FormModel) -> Result<Array1<f64>> {
    form.infer(word)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormFitConfig {
    pub min_n: usize,
    pub max_n: usize,
    pub min_count: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for FormFitConfig {
    fn default() -> Self {
        FormFitConfig {
            min_n: NGRAM_MIN,
            max_n: NGRAM_MAX,
            min_count: 50,
            epochs: 200,
            batch_size: 64,
            seed: 1,
            adam: AdamConfig {
                rate: 0.01,
                ..AdamConfig::default()
            },
        }
    }
}

/// Fit n-gram vectors so that each frequent word's n-gram mean matches its
/// background vector. N-gram vectors start at zero; Adam updates are sparse
/// (only rows present in the mini-batch move).
pub fn fit_form_model(space: &EmbeddingSpace, cfg: &FormFitConfig) -> Result<FormModel> {
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let words: Vec<usize> = (0..space.len())
        .filter(|&i| space.counts()[i] >= cfg.min_count)
        .collect();
    if words.is_empty() {
        return Err(Error::Empty(format!("no word with count >= {}", cfg.min_count)));
    }
    let mut ngrams: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let word_rows: Vec<Vec<usize>> = words
        .iter()
        .map(|&w| {
            char_ngrams(&space.words()[w], cfg.min_n, cfg.max_n)
                .into_iter()
                .map(|g| {
                    *index.entry(g.clone()).or_insert_with(|| {
                        ngrams.push(g);
                        ngrams.len() - 1
                    })
                })
                .collect()
        })
        .collect();
    let d = space.dim();
    let mut model = FormModel::new(ngrams, Array2::zeros((index.len(), d)), cfg.min_n, cfg.max_n)?;

    let mut adam = AdamState::new(cfg.adam, &[model.vectors.len()]);
    let mut grad = vec![0.0; model.vectors.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..words.len()).collect();
    let mut touched: Vec<usize> = Vec::new();
    let mut seen = vec![false; model.len()];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let scale = 2.0 / (batch.len() * d) as f64;
            for &b in batch {
                let rows = &word_rows[b];
                let err = model.mean_of(rows) - space.row(words[b]);
                let g = err * (scale / rows.len() as f64);
                for &r in rows {
                    if !seen[r] {
                        seen[r] = true;
                        touched.push(r);
                    }
                    for (k, gv) in g.iter().enumerate() {
                        grad[r * d + k] += gv;
                    }
                }
            }
            adam.tick();
            let params = model.vectors.as_slice_mut().expect("standard layout");
            adam.update_rows(0, params, &grad, &touched, d);
            for &r in &touched {
                seen[r] = false;
                grad[r * d..(r + 1) * d].iter_mut().for_each(|g| *g = 0.0);
            }
            touched.clear();
        }
    }
    Ok(model)
}

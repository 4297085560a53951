//! Background embedding spaces: storage, text persistence, cosine ranking.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::textmat::{parse_floats, push_row};

/// Default embedding dimension.
pub const DEFAULT_DIM: usize = 300;

/// A vocabulary with one dense vector and one corpus count per word.
///
/// Immutable once constructed; share it freely across evaluation workers.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
    counts: Vec<u64>,
    norms: Vec<f64>,
}

impl EmbeddingSpace {
    /// Build a space, checking uniqueness, shapes and finiteness.
    pub fn new(words: Vec<String>, vectors: Array2<f64>, counts: Vec<u64>) -> Result<Self> {
        if vectors.ncols() == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if vectors.nrows() != words.len() {
            return Err(Error::DimensionMismatch {
                expected: words.len(),
                actual: vectors.nrows(),
            });
        }
        if counts.len() != words.len() {
            return Err(Error::DimensionMismatch {
                expected: words.len(),
                actual: counts.len(),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::DuplicateWord(w.clone()));
            }
        }
        for (w, row) in words.iter().zip(vectors.rows()) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(w.clone()));
            }
        }
        let norms = vectors.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        Ok(EmbeddingSpace {
            words,
            index,
            vectors,
            counts,
            norms,
        })
    }

    /// An empty space of the given dimension.
    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(Vec::new(), Array2::zeros((0, dim)), Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
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

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Sum of all counts.
    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, idx: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(idx)
    }

    pub fn vector(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.index_of(word).map(|i| self.vectors.row(i))
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        self.index_of(word).map(|i| self.counts[i])
    }

    /// Cosine of `query` against every row. Zero-norm rows score 0.
    fn similarities(&self, query: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: query.len(),
            });
        }
        let qn = query.dot(&query).sqrt();
        if qn == 0.0 {
            return Err(Error::ZeroVector);
        }
        let dots = self.vectors.dot(&query);
        Ok(dots
            .iter()
            .zip(&self.norms)
            .map(|(&d, &n)| if n == 0.0 { 0.0 } else { (d / (qn * n)).clamp(-1.0, 1.0) })
            .collect())
    }

    /// Keep only the given rows (in the given order).
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let words = rows.iter().map(|&i| self.words[i].clone()).collect();
        let vectors = self.vectors.select(Axis(0), rows);
        let counts = rows.iter().map(|&i| self.counts[i]).collect();
        Self::new(words, vectors, counts)
    }
}

/// Ranking order: descending similarity, then ascending word.
fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Nearest neighbours, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub entries: Vec<(String, f64)>,
}

impl NeighborList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(w, _)| w.as_str())
    }
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Top-`k` words by cosine to `query`, skipping `exclude`.
pub fn neighbors(
    space: &EmbeddingSpace,
    query: ArrayView1<'_, f64>,
    k: usize,
    exclude: &HashSet<String>,
) -> Result<NeighborList> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let sims = space.similarities(query)?;
    let mut cands: Vec<(usize, f64)> = sims
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !exclude.contains(&space.words[*i]))
        .collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| rank_order((&space.words[a.0], a.1), (&space.words[b.0], b.1));
    if k < cands.len() {
        cands.select_nth_unstable_by(k - 1, cmp);
        cands.truncate(k);
    }
    cands.sort_unstable_by(cmp);
    Ok(NeighborList {
        entries: cands.into_iter().map(|(i, s)| (space.words[i].clone(), s)).collect(),
    })
}

/// 1-based rank of `target` among non-excluded words ordered by cosine to `query`.
pub fn rank_of(
    space: &EmbeddingSpace,
    query: ArrayView1<'_, f64>,
    target: &str,
    exclude: &HashSet<String>,
) -> Result<usize> {
    let t = space
        .index_of(target)
        .ok_or_else(|| Error::UnknownWord(target.to_string()))?;
    if exclude.contains(target) {
        return Err(Error::ExcludedTarget(target.to_string()));
    }
    let sims = space.similarities(query)?;
    let key = (target, sims[t]);
    let ahead = sims
        .iter()
        .enumerate()
        .filter(|&(i, &s)| {
            i != t && !exclude.contains(&space.words[i]) && rank_order((&space.words[i], s), key) == Ordering::Less
        })
        .count();
    Ok(ahead + 1)
}

/// Parse the vector text format from a reader.
pub fn read_vectors<R: BufRead>(reader: R, path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::format(path, 1, "missing header")),
    };
    let mut hp = header.split(' ');
    let (n, d) = match (hp.next(), hp.next(), hp.next()) {
        (Some(n), Some(d), None) => (n, d),
        _ => return Err(Error::format(path, 1, "header must be `<vocab_size> <dim>`")),
    };
    let n: usize = n
        .parse()
        .map_err(|_| Error::format(path, 1, "invalid vocabulary size"))?;
    let d: usize = d.parse().map_err(|_| Error::format(path, 1, "invalid dimension"))?;
    if d == 0 {
        return Err(Error::format(path, 1, "dimension must be at least 1"));
    }

    let mut words = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    let mut seen = HashSet::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if words.len() == n {
            if line.is_empty() {
                continue;
            }
            return Err(Error::format(path, line_no, "more rows than the header declares"));
        }
        let mut fields = line.split(' ');
        let word = fields.next().unwrap_or_default();
        if word.is_empty() {
            return Err(Error::format(path, line_no, "empty word"));
        }
        let fields: Vec<&str> = fields.collect();
        if fields.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: fields.len(),
            });
        }
        if !seen.insert(word.to_string()) {
            return Err(Error::DuplicateWord(word.to_string()));
        }
        data.extend(parse_floats(fields.into_iter(), d, path, line_no, word)?);
        words.push(word.to_string());
    }
    if words.len() != n {
        return Err(Error::format(
            path,
            words.len() + 2,
            format!("header declares {n} rows, found {}", words.len()),
        ));
    }
    let vectors = Array2::from_shape_vec((n, d), data).expect("rows checked");
    Ok((words, vectors))
}

/// Write the vector text format.
pub fn write_vectors<W: Write, S: AsRef<str>>(mut w: W, words: &[S], vectors: &Array2<f64>) -> std::io::Result<()> {
    let mut buf = String::new();
    buf.push_str(&format!("{} {}\n", words.len(), vectors.ncols()));
    for (word, row) in words.iter().zip(vectors.rows()) {
        buf.push_str(word.as_ref());
        buf.push(' ');
        push_row(&mut buf, row.iter().copied());
        buf.push('\n');
        if buf.len() > 1 << 16 {
            w.write_all(buf.as_bytes())?;
            buf.clear();
        }
    }
    w.write_all(buf.as_bytes())
}

/// Parse a `word<TAB>count` sidecar.
pub fn read_counts<R: BufRead>(reader: R, path: &Path) -> Result<HashMap<String, u64>> {
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (w, c) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, i + 1, "expected `word<TAB>count`"))?;
        let c: u64 = c
            .parse()
            .map_err(|_| Error::format(path, i + 1, format!("invalid count `{c}`")))?;
        out.insert(w.to_string(), c);
    }
    Ok(out)
}

pub fn load_space(vectors_path: impl AsRef<Path>, counts_path: impl AsRef<Path>) -> Result<EmbeddingSpace> {
    let vp = vectors_path.as_ref();
    let cp = counts_path.as_ref();
    let vf = File::open(vp).map_err(|e| Error::io(vp, e))?;
    let (words, vectors) = read_vectors(BufReader::new(vf), vp)?;
    let cf = File::open(cp).map_err(|e| Error::io(cp, e))?;
    let counts_map = read_counts(BufReader::new(cf), cp)?;
    let counts = words
        .iter()
        .map(|w| counts_map.get(w).copied().ok_or_else(|| Error::MissingCount(w.clone())))
        .collect::<Result<Vec<_>>>()?;
    EmbeddingSpace::new(words, vectors, counts)
}

pub fn save_space(space: &EmbeddingSpace, vectors_path: impl AsRef<Path>, counts_path: impl AsRef<Path>) -> Result<()> {
    let vp = vectors_path.as_ref();
    let cp = counts_path.as_ref();
    let vf = File::create(vp).map_err(|e| Error::io(vp, e))?;
    let mut vw = BufWriter::new(vf);
    write_vectors(&mut vw, &space.words, &space.vectors).map_err(|e| Error::io(vp, e))?;
    vw.flush().map_err(|e| Error::io(vp, e))?;

    let cf = File::create(cp).map_err(|e| Error::io(cp, e))?;
    let mut cw = BufWriter::new(cf);
    for (w, c) in space.words.iter().zip(&space.counts) {
        writeln!(cw, "{w}\t{c}").map_err(|e| Error::io(cp, e))?;
    }
    cw.flush().map_err(|e| Error::io(cp, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space(words: &[&str], rows: Array2<f64>) -> EmbeddingSpace {
        let n = words.len();
        EmbeddingSpace::new(words.iter().map(|s| s.to_string()).collect(), rows, vec![5; n]).unwrap()
    }

    fn random_space(n: usize, d: usize, seed: u64) -> EmbeddingSpace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words: Vec<String> = (0..n).map(|i| format!("w{i:03}")).collect();
        let m = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let counts = (0..n).map(|_| rng.random_range(0..100)).collect();
        EmbeddingSpace::new(words, m, counts).unwrap()
    }

    #[test]
    fn load_minimal_file() {
        let (words, m) = read_vectors("2 2\na 1 0\nb 0 1".as_bytes(), Path::new("mem")).unwrap();
        let s = EmbeddingSpace::new(words, m, vec![5, 5]).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.len(), 2);
        assert_eq!(s.words(), ["a", "b"]);
    }

    #[test]
    fn header_dimension_mismatch() {
        let err = read_vectors("1 2\na 1 0 0\n".as_bytes(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, actual: 3 }));
    }

    #[test]
    fn duplicate_and_non_finite_rejected() {
        let err = read_vectors("2 1\na 1\na 2\n".as_bytes(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::DuplicateWord(_)));
        let err = read_vectors("1 1\na NaN\n".as_bytes(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn missing_count_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let v = dir.path().join("v.txt");
        let c = dir.path().join("c.tsv");
        std::fs::write(&v, "2 2\na 1 0\nb 0 1\n").unwrap();
        std::fs::write(&c, "a\t5\n").unwrap();
        assert!(matches!(load_space(&v, &c), Err(Error::MissingCount(w)) if w == "b"));
    }

    #[test]
    fn empty_space_file() {
        let mut out = Vec::new();
        let s = EmbeddingSpace::empty(300).unwrap();
        write_vectors(&mut out, s.words(), s.vectors()).unwrap();
        assert_eq!(out, b"0 300\n");
    }

    #[test]
    fn one_word_file() {
        let mut out = Vec::new();
        write_vectors(&mut out, &["a"], &array![[1.0, 0.0]]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "1 2\na 1 0\n");
    }

    #[test]
    fn save_load_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let s = random_space(10, 5, 3);
        let (v1, c1) = (dir.path().join("v1"), dir.path().join("c1"));
        let (v2, c2) = (dir.path().join("v2"), dir.path().join("c2"));
        save_space(&s, &v1, &c1).unwrap();
        let back = load_space(&v1, &c1).unwrap();
        assert_eq!(back, s);
        save_space(&back, &v2, &c2).unwrap();
        assert_eq!(std::fs::read(&v1).unwrap(), std::fs::read(&v2).unwrap());
        assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&c2).unwrap());
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(array![1.0, 0.0].view(), array![1.0, 0.0].view()).unwrap(), 1.0);
        assert_eq!(cosine(array![1.0, 0.0].view(), array![0.0, 1.0].view()).unwrap(), 0.0);
        let c = cosine(array![1.0, 1.0].view(), array![1.0, 0.0].view()).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(
            cosine(array![0.0, 0.0].view(), array![1.0, 0.0].view()),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn neighbor_examples() {
        let s = space(&["a", "b"], array![[1.0, 0.0], [0.0, 1.0]]);
        let q = array![1.0, 0.0];
        let n = neighbors(&s, q.view(), 1, &HashSet::new()).unwrap();
        assert_eq!(n.entries, vec![("a".to_string(), 1.0)]);
        let ex: HashSet<String> = ["a".to_string()].into();
        let n = neighbors(&s, q.view(), 1, &ex).unwrap();
        assert_eq!(n.entries, vec![("b".to_string(), 0.0)]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let s = space(&["zeta", "alpha", "mid"], array![[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]);
        let n = neighbors(&s, array![1.0, 0.0].view(), 3, &HashSet::new()).unwrap();
        assert_eq!(n.words().collect::<Vec<_>>(), ["alpha", "zeta", "mid"]);
        assert_eq!(
            rank_of(&s, array![1.0, 0.0].view(), "zeta", &HashSet::new()).unwrap(),
            2
        );
    }

    #[test]
    fn rank_examples() {
        let s = space(&["a", "b", "c"], array![[1.0, 0.0], [0.3, 1.0], [-1.0, 0.2]]);
        assert_eq!(rank_of(&s, s.row(1), "b", &HashSet::new()).unwrap(), 1);
        let s = space(&["t", "p"], array![[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(rank_of(&s, array![1.0, 0.0].view(), "t", &HashSet::new()).unwrap(), 2);
        assert!(matches!(
            rank_of(&s, array![1.0, 0.0].view(), "nope", &HashSet::new()),
            Err(Error::UnknownWord(_))
        ));
        let ex: HashSet<String> = ["t".to_string()].into();
        assert!(matches!(
            rank_of(&s, array![1.0, 0.0].view(), "t", &ex),
            Err(Error::ExcludedTarget(_))
        ));
    }

    #[test]
    fn full_neighbor_list_is_a_permutation() {
        let s = random_space(50, 6, 11);
        let q = s.row(7).to_owned() + 0.1;
        let n = neighbors(&s, q.view(), s.len(), &HashSet::new()).unwrap();
        let mut got: Vec<_> = n.words().map(str::to_string).collect();
        got.sort();
        let mut want = s.words().to_vec();
        want.sort();
        assert_eq!(got, want);
        assert!(n.entries.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    proptest! {
        #[test]
        fn cosine_properties(
            u in prop::collection::vec(-10.0f64..10.0, 4),
            v in prop::collection::vec(-10.0f64..10.0, 4),
            c in 0.01f64..100.0,
        ) {
            let u = Array1::from(u);
            let v = Array1::from(v);
            prop_assume!(u.dot(&u) > 1e-6 && v.dot(&v) > 1e-6);
            let uv = cosine(u.view(), v.view()).unwrap();
            prop_assert!((cosine(u.view(), u.view()).unwrap() - 1.0).abs() < 1e-12);
            prop_assert_eq!(uv, cosine(v.view(), u.view()).unwrap());
            prop_assert!(uv.abs() <= 1.0);
            let scaled = &u * c;
            prop_assert!((cosine(scaled.view(), v.view()).unwrap() - uv).abs() < 1e-12);
        }
    }
}

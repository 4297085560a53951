//! Plain-text matrix serialization shared by every persisted artifact.
//!
//! Floats are written in the shortest decimal form that parses back to the
//! identical `f64`, so write → read → write is byte-stable. Values far from
//! unity switch to exponent notation to keep lines short.
//!
//! A *section* is a header line `<name> <rows> <cols>` followed by `rows`
//! lines of `cols` floats. A keyed section prefixes every row with a key
//! token (a word or n-gram), which is how vocabulary-indexed tables are stored.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Format one float so that `s.parse::<f64>()` returns the same bits.
pub fn fmt_f64(v: f64) -> String {
    let mut s = String::new();
    push_f64(&mut s, v);
    s
}

pub(crate) fn push_f64(out: &mut String, v: f64) {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        let _ = write!(out, "{v}");
    } else {
        let _ = write!(out, "{v:e}");
    }
}

pub(crate) fn push_row(out: &mut String, row: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        first = false;
        push_f64(out, v);
    }
}

/// Parse `cols` whitespace-separated floats.
pub(crate) fn parse_floats<'a>(
    fields: impl Iterator<Item = &'a str>,
    cols: usize,
    path: &Path,
    line: usize,
    key: &str,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(cols);
    for f in fields {
        let v: f64 = f
            .parse()
            .map_err(|_| Error::format(path, line, format!("invalid number `{f}`")))?;
        if !v.is_finite() {
            return Err(Error::NonFinite(key.to_string()));
        }
        out.push(v);
    }
    if out.len() != cols {
        return Err(Error::format(
            path,
            line,
            format!("expected {cols} values, found {}", out.len()),
        ));
    }
    Ok(out)
}

/// Writer for sectioned matrix files.
pub struct SectionWriter<W: Write> {
    inner: W,
    buf: String,
}

impl<W: Write> SectionWriter<W> {
    pub fn new(inner: W) -> Self {
        SectionWriter {
            inner,
            buf: String::new(),
        }
    }

    pub fn matrix(&mut self, name: &str, m: &Array2<f64>) -> std::io::Result<()> {
        self.buf.clear();
        let _ = writeln!(self.buf, "{name} {} {}", m.nrows(), m.ncols());
        for row in m.rows() {
            push_row(&mut self.buf, row.iter().copied());
            self.buf.push('\n');
        }
        self.inner.write_all(self.buf.as_bytes())
    }

    pub fn keyed<S: AsRef<str>>(&mut self, name: &str, keys: &[S], m: &Array2<f64>) -> std::io::Result<()> {
        debug_assert_eq!(keys.len(), m.nrows());
        self.buf.clear();
        let _ = writeln!(self.buf, "{name} {} {}", m.nrows(), m.ncols());
        for (key, row) in keys.iter().zip(m.rows()) {
            self.buf.push_str(key.as_ref());
            self.buf.push(' ');
            push_row(&mut self.buf, row.iter().copied());
            self.buf.push('\n');
        }
        self.inner.write_all(self.buf.as_bytes())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

/// One parsed section.
#[derive(Debug, Clone)]
pub struct Section {
    pub name: String,
    pub keys: Option<Vec<String>>,
    pub data: Array2<f64>,
}

/// Reader for sectioned matrix files.
pub struct SectionReader<R: BufRead> {
    inner: R,
    path: std::path::PathBuf,
    line_no: usize,
    line: String,
}

impl<R: BufRead> SectionReader<R> {
    pub fn new(inner: R, path: impl AsRef<Path>) -> Self {
        SectionReader {
            inner,
            path: path.as_ref().to_path_buf(),
            line_no: 0,
            line: String::new(),
        }
    }

    fn next_line(&mut self) -> Result<bool> {
        self.line.clear();
        let n = self
            .inner
            .read_line(&mut self.line)
            .map_err(|e| Error::io(&self.path, e))?;
        if n > 0 {
            self.line_no += 1;
        }
        Ok(n > 0)
    }

    /// Read the next section; `keyed` selects whether rows carry a key.
    pub fn section(&mut self, keyed: bool) -> Result<Option<Section>> {
        if !self.next_line()? {
            return Ok(None);
        }
        let header = self.line.trim_end_matches('\n').to_string();
        let mut parts = header.split(' ');
        let (name, rows, cols) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(r), Some(c), None) => (n, r, c),
            _ => {
                return Err(Error::format(
                    &self.path,
                    self.line_no,
                    "expected section header `<name> <rows> <cols>`",
                ))
            }
        };
        let bad = |what: &str| Error::format(&self.path, self.line_no, format!("invalid {what}"));
        let rows: usize = rows.parse().map_err(|_| bad("row count"))?;
        let cols: usize = cols.parse().map_err(|_| bad("column count"))?;
        let name = name.to_string();

        let mut data = Vec::with_capacity(rows * cols);
        let mut keys = keyed.then(|| Vec::with_capacity(rows));
        for _ in 0..rows {
            if !self.next_line()? {
                return Err(Error::format(&self.path, self.line_no, "truncated section"));
            }
            let body = self.line.trim_end_matches('\n');
            let mut fields = body.split(' ').filter(|f| !f.is_empty());
            let key = if let Some(keys) = keys.as_mut() {
                let k = fields.next().unwrap_or_default().to_string();
                keys.push(k.clone());
                k
            } else {
                name.clone()
            };
            let vals = parse_floats(fields, cols, &self.path, self.line_no, &key)?;
            data.extend(vals);
        }
        let data = Array2::from_shape_vec((rows, cols), data).expect("shape checked per row");
        Ok(Some(Section { name, keys, data }))
    }

    /// Read a section that must carry the given name.
    pub fn expect(&mut self, name: &str, keyed: bool) -> Result<Section> {
        match self.section(keyed)? {
            Some(s) if s.name == name => Ok(s),
            Some(s) => Err(Error::format(
                &self.path,
                self.line_no,
                format!("expected section `{name}`, found `{}`", s.name),
            )),
            None => Err(Error::format(
                &self.path,
                self.line_no,
                format!("missing section `{name}`"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_integers_have_no_decimal_point() {
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(-0.5), "-0.5");
        assert_eq!(fmt_f64(1e-300), "1e-300");
    }

    proptest! {
        #[test]
        fn float_text_round_trips(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let back: f64 = fmt_f64(v).parse().unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn sections_round_trip() {
        let m = Array2::from_shape_fn((3, 2), |(i, j)| i as f64 * 0.1 - j as f64);
        let mut w = SectionWriter::new(Vec::new());
        w.matrix("w1", &m).unwrap();
        w.keyed("tab", &["x", "y", "z"], &m).unwrap();
        let bytes = w.into_inner();
        let mut r = SectionReader::new(&bytes[..], "mem");
        let a = r.expect("w1", false).unwrap();
        assert_eq!(a.data, m);
        let b = r.expect("tab", true).unwrap();
        assert_eq!(b.keys.unwrap(), vec!["x", "y", "z"]);
        assert_eq!(b.data, m);
        assert!(r.section(false).unwrap().is_none());
    }
}

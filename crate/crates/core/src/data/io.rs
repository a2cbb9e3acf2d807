//! Plain-text sparse tensor files.
//!
//! ```text
//! shape 10 10 10
//! kind continuous
//! 1 1 1 0.25
//! 3 10 2 -1.5
//! ```
//!
//! Indices are 1-based. Values are written with Rust's shortest round-trip
//! formatting so a write/read cycle is lossless. Prediction files use the
//! same header; binary predictions carry a logit and a probability column.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DataKind, SparseTensor};

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct Header {
    shape: Vec<usize>,
    kind: DataKind,
}

fn parse_header<'a>(
    path: &Path,
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<Header> {
    let (no, line) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "missing `shape` header"))?;
    let mut words = line.split_whitespace();
    if words.next() != Some("shape") {
        return Err(parse_error(path, no, "expected `shape I1 ... ID`"));
    }
    let shape = words
        .map(|w| match w.parse::<usize>() {
            Ok(0) | Err(_) => Err(parse_error(path, no, format!("bad mode size `{w}`"))),
            Ok(s) => Ok(s),
        })
        .collect::<Result<Vec<_>>>()?;
    if shape.is_empty() {
        return Err(parse_error(path, no, "shape has no modes"));
    }
    let (no, line) = lines
        .next()
        .ok_or_else(|| parse_error(path, no + 1, "missing `kind` header"))?;
    let mut words = line.split_whitespace();
    let kind = match (words.next(), words.next(), words.next()) {
        (Some("kind"), Some(k), None) => k
            .parse::<DataKind>()
            .map_err(|e| parse_error(path, no, e.to_string()))?,
        _ => return Err(parse_error(path, no, "expected `kind continuous|binary`")),
    };
    Ok(Header { shape, kind })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_index(path: &Path, no: usize, words: &[&str], shape: &[usize]) -> Result<Vec<usize>> {
    words
        .iter()
        .zip(shape)
        .enumerate()
        .map(|(d, (w, &size))| {
            let i: usize = w
                .parse()
                .map_err(|_| parse_error(path, no, format!("bad index `{w}`")))?;
            if i == 0 || i > size {
                return Err(parse_error(
                    path,
                    no,
                    format!("index {i} out of range 1..={size} for mode {}", d + 1),
                ));
            }
            Ok(i - 1)
        })
        .collect()
}

fn parse_value(path: &Path, no: usize, w: &str) -> Result<f64> {
    let v: f64 = w
        .parse()
        .map_err(|_| parse_error(path, no, format!("bad value `{w}`")))?;
    if !v.is_finite() {
        return Err(parse_error(path, no, format!("non-finite value `{w}`")));
    }
    Ok(v)
}

/// Parses the text of a sparse tensor file. `path` is only used in errors.
pub fn parse_sparse(text: &str, path: &Path) -> Result<SparseTensor> {
    let mut lines = content_lines(text);
    let Header { shape, kind } = parse_header(path, &mut lines)?;
    let order = shape.len();
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (no, line) in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.len() != order + 1 {
            return Err(parse_error(
                path,
                no,
                format!(
                    "expected {order} indices and a value, found {} fields",
                    words.len()
                ),
            ));
        }
        let idx = parse_index(path, no, &words[..order], &shape)?;
        let v = parse_value(path, no, words[order])?;
        if kind == DataKind::Binary && v != 0.0 && v != 1.0 {
            return Err(parse_error(
                path,
                no,
                format!("binary value {v} is not 0 or 1"),
            ));
        }
        if !seen.insert(idx.clone()) {
            return Err(parse_error(path, no, "duplicate index"));
        }
        indices.extend(idx);
        values.push(v);
    }
    SparseTensor::from_flat(shape, indices, values, kind)
}

fn write_header(out: &mut String, shape: &[usize], kind: DataKind) {
    out.push_str("shape");
    for s in shape {
        write!(out, " {s}").expect("writing to a String");
    }
    writeln!(out, "\nkind {kind}").expect("writing to a String");
}

fn write_index(out: &mut String, idx: &[usize]) {
    for i in idx {
        write!(out, "{} ", i + 1).expect("writing to a String");
    }
}

pub fn format_sparse(t: &SparseTensor) -> String {
    let mut out = String::with_capacity(32 + t.len() * (4 * t.order() + 24));
    write_header(&mut out, t.shape(), t.kind());
    for (idx, v) in t.iter() {
        write_index(&mut out, idx);
        writeln!(out, "{v}").expect("writing to a String");
    }
    out
}

pub fn read_sparse(path: impl AsRef<Path>) -> Result<SparseTensor> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sparse(&text, path)
}

pub fn write_sparse(path: impl AsRef<Path>, t: &SparseTensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_sparse(t)).map_err(|e| Error::io(path, e))
}

/// Point predictions at a set of indices. For binary data `values` are
/// logits and the file also carries `sigmoid(logit)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub shape: Vec<usize>,
    pub kind: DataKind,
    /// Flat `len × order` 0-based indices.
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[allow(clippy::should_implement_trait)]
    pub fn index(&self, n: usize) -> &[usize] {
        let d = self.shape.len();
        &self.indices[n * d..(n + 1) * d]
    }
}

pub fn format_predictions(p: &Predictions) -> String {
    let mut out = String::new();
    write_header(&mut out, &p.shape, p.kind);
    for n in 0..p.len() {
        write_index(&mut out, p.index(n));
        let v = p.values[n];
        match p.kind {
            DataKind::Continuous => writeln!(out, "{v}"),
            DataKind::Binary => writeln!(out, "{v} {}", crate::gibbs::sigmoid(v)),
        }
        .expect("writing to a String");
    }
    out
}

pub fn parse_predictions(text: &str, path: &Path) -> Result<Predictions> {
    let mut lines = content_lines(text);
    let Header { shape, kind } = parse_header(path, &mut lines)?;
    let order = shape.len();
    let fields = match kind {
        DataKind::Continuous => order + 1,
        DataKind::Binary => order + 2,
    };
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for (no, line) in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.len() != fields {
            return Err(parse_error(
                path,
                no,
                format!("expected {fields} fields, found {}", words.len()),
            ));
        }
        indices.extend(parse_index(path, no, &words[..order], &shape)?);
        values.push(parse_value(path, no, words[order])?);
    }
    Ok(Predictions {
        shape,
        kind,
        indices,
        values,
    })
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Predictions> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text, path)
}

pub fn write_predictions(path: impl AsRef<Path>, p: &Predictions) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_predictions(p)).map_err(|e| Error::io(path, e))
}

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::{Error, Result};

/// Pretrained word vectors, all of one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct WordVectorTable {
    dimension: usize,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl WordVectorTable {
    pub fn new(dimension: usize) -> Self {
        WordVectorTable {
            dimension,
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    /// Inserts or overwrites a vector. Returns true when it replaced one.
    pub fn insert(&mut self, token: &str, v: &[f64]) -> Result<bool> {
        if v.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: v.len(),
            });
        }
        if let Some(&row) = self.index.get(token) {
            self.data[row * self.dimension..(row + 1) * self.dimension].copy_from_slice(v);
            return Ok(true);
        }
        self.index.insert(token.to_string(), self.index.len());
        self.data.extend_from_slice(v);
        Ok(false)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&r| &self.data[r * self.dimension..(r + 1) * self.dimension])
    }
}

pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<WordVectorTable> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_word_vectors(f)
}

/// Parses `token v1 ... vd` lines. The first non-blank line fixes `d`.
pub fn read_word_vectors(reader: impl Read) -> Result<WordVectorTable> {
    let mut table: Option<WordVectorTable> = None;
    let mut buf = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        buf.clear();
        for p in parts {
            let v: f64 = p.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("`{p}` is not a number"),
            })?;
            buf.push(v);
        }
        let t = table.get_or_insert_with(|| WordVectorTable::new(buf.len()));
        if buf.is_empty() || buf.len() != t.dimension {
            return Err(Error::Dimension {
                line: lineno,
                expected: t.dimension,
                found: buf.len(),
            });
        }
        if t.insert(token, &buf)? {
            log::warn!("line {lineno}: duplicate token `{token}` overwrites earlier vector");
        }
    }
    table.ok_or(Error::Empty("word-vector file has no vectors"))
}

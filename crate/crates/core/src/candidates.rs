//! Candidate pairs: the union over encoders and responses of each response's
//! k nearest neighbours.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::embeddings::{knn_all, EmbeddingMatrix};
use crate::{Error, Exec, ResponseId, Result};

/// Unordered response pair stored as `(min, max)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair(ResponseId, ResponseId);

impl Pair {
    /// Canonical pair; `None` for a self-pair.
    pub fn new(a: ResponseId, b: ResponseId) -> Option<Pair> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Pair(a, b)),
            std::cmp::Ordering::Greater => Some(Pair(b, a)),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn lo(self) -> ResponseId {
        self.0
    }

    pub fn hi(self) -> ResponseId {
        self.1
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePairSet {
    pub pairs: BTreeSet<Pair>,
    /// Distinct pairs contributed by each encoder before the union.
    pub per_encoder_counts: BTreeMap<String, usize>,
}

impl CandidatePairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, a: ResponseId, b: ResponseId) -> bool {
        Pair::new(a, b).is_some_and(|p| self.pairs.contains(&p))
    }

    /// `i\tj` lines in ascending order.
    pub fn write_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        for p in &self.pairs {
            writeln!(w, "{}\t{}", p.0, p.1)?;
        }
        Ok(())
    }

    /// Reads pairs written by [`write_tsv`](Self::write_tsv). Lines starting
    /// with `#` are comments.
    pub fn read_tsv(r: impl BufRead) -> Result<Self> {
        let mut pairs = BTreeSet::new();
        for (idx, line) in r.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| Error::Parse {
                line: lineno,
                message: m.to_string(),
            };
            let mut it = line.split('\t');
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(bad("expected two tab-separated ids"));
            };
            let a: ResponseId = a.trim().parse().map_err(|_| bad("bad id"))?;
            let b: ResponseId = b.trim().parse().map_err(|_| bad("bad id"))?;
            pairs.insert(Pair::new(a, b).ok_or_else(|| bad("self pair"))?);
        }
        Ok(CandidatePairSet {
            pairs,
            per_encoder_counts: BTreeMap::new(),
        })
    }
}

/// Pairs of one encoder: `{i, n}` for each `n` in the k-NN of `i`, skipping
/// rows that carry the fallback flag on either side.
pub fn encoder_pairs(mat: &EmbeddingMatrix, k: usize, exec: Exec) -> BTreeSet<Pair> {
    let neighbours = knn_all(mat, k, exec);
    let mut out = BTreeSet::new();
    for (i, nn) in neighbours.into_iter().enumerate() {
        let i = i as ResponseId;
        if mat.is_fallback(i) {
            continue;
        }
        out.extend(
            nn.into_iter()
                .filter(|&(j, _)| !mat.is_fallback(j))
                .filter_map(|(j, _)| Pair::new(i, j)),
        );
    }
    out
}

pub fn generate_candidate_pairs(
    mats: &[EmbeddingMatrix],
    k: usize,
    exec: Exec,
) -> Result<CandidatePairSet> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if let Some(first) = mats.first() {
        if let Some(m) = mats.iter().find(|m| m.len() != first.len()) {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                found: m.len(),
            });
        }
    }
    let mut set = CandidatePairSet::default();
    for m in mats {
        let pairs = encoder_pairs(m, k, exec);
        *set.per_encoder_counts.entry(m.encoder.name()).or_default() += pairs.len();
        set.pairs.extend(pairs);
    }
    Ok(set)
}

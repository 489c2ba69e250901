//! Pair scoring and the sparse dissimilarity matrix.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::candidates::{CandidatePairSet, Pair};
use crate::corpus::ResponseTable;
use crate::embeddings::EmbeddingMatrix;
use crate::external::{ExternalClient, RetryPolicy};
use crate::{Error, Exec, ResponseId, Result};

fn default_slope() -> f64 {
    8.0
}

fn default_intercept() -> f64 {
    -4.0
}

fn default_batch_size() -> usize {
    128
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSpec {
    /// `σ(a · mean_cosine + b)` over the configured encoders.
    CosineCalibrated {
        #[serde(default = "default_slope")]
        a: f64,
        #[serde(default = "default_intercept")]
        b: f64,
    },
    External {
        endpoint: String,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

impl Default for ScorerSpec {
    fn default() -> Self {
        ScorerSpec::CosineCalibrated {
            a: default_slope(),
            b: default_intercept(),
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean cosine over encoders, skipping encoders where either response only
/// has a fallback vector. Zero when no encoder has real vectors for both.
pub fn mean_cosine(mats: &[EmbeddingMatrix], i: ResponseId, j: ResponseId) -> f64 {
    let (sum, n) = mats
        .iter()
        .filter(|m| !m.is_fallback(i) && !m.is_fallback(j))
        .fold((0.0, 0usize), |(s, n), m| (s + m.cosine(i, j), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub type PairScores = BTreeMap<Pair, f64>;

pub fn score_pairs(
    pairs: &CandidatePairSet,
    table: &ResponseTable,
    spec: &ScorerSpec,
    mats: &[EmbeddingMatrix],
    exec: Exec,
) -> Result<PairScores> {
    let list: Vec<Pair> = pairs.pairs.iter().copied().collect();
    if let Some(p) = list.iter().find(|p| p.hi() as usize >= table.len()) {
        return Err(Error::InvalidArgument(format!(
            "pair ({}, {}) outside a table of {} responses",
            p.lo(),
            p.hi(),
            table.len()
        )));
    }
    match spec {
        ScorerSpec::CosineCalibrated { a, b } => {
            if list.is_empty() {
                return Ok(PairScores::new());
            }
            if mats.is_empty() {
                return Err(Error::InvalidArgument(
                    "cosine scorer needs at least one embedding matrix".into(),
                ));
            }
            if let Some(m) = mats.iter().find(|m| m.len() != table.len()) {
                return Err(Error::DimensionMismatch {
                    expected: table.len(),
                    found: m.len(),
                });
            }
            let probs = exec.map(&list, |p| logistic(a * mean_cosine(mats, p.lo(), p.hi()) + b));
            Ok(list.into_iter().zip(probs).collect())
        }
        ScorerSpec::External {
            endpoint,
            batch_size,
            retry,
        } => {
            let client = ExternalClient::new(endpoint, retry.clone())?;
            let batches: Vec<&[Pair]> = list.chunks((*batch_size).max(1)).collect();
            let results = exec.map(&batches, |batch| {
                let texts: Vec<(&str, &str)> =
                    batch.iter().map(|p| (table.text(p.lo()), table.text(p.hi()))).collect();
                client.score(&texts)
            });
            let mut out = PairScores::new();
            let mut unscored = Vec::new();
            let mut last_err = None;
            for (batch, r) in batches.iter().zip(results) {
                match r {
                    Ok(probs) => out.extend(batch.iter().copied().zip(probs)),
                    Err(e) => {
                        unscored.extend(batch.iter().map(|p| (p.lo(), p.hi())));
                        last_err = Some(e);
                    }
                }
            }
            match last_err {
                None => Ok(out),
                Some(e) => Err(Error::Unscored {
                    pairs: unscored,
                    message: e.to_string(),
                }),
            }
        }
    }
}

/// Dissimilarities on scored pairs; every other off-diagonal entry reads 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistanceRepr", into = "DistanceRepr")]
pub struct SparseDistanceMatrix {
    size: usize,
    entries: BTreeMap<Pair, f64>,
}

#[derive(Serialize, Deserialize)]
struct DistanceRepr {
    size: usize,
    /// `(i, j, distance)` with `i < j`, sorted.
    entries: Vec<(ResponseId, ResponseId, f64)>,
}

impl TryFrom<DistanceRepr> for SparseDistanceMatrix {
    type Error = Error;

    fn try_from(r: DistanceRepr) -> Result<Self> {
        let mut m = SparseDistanceMatrix::new(r.size);
        for (a, b, d) in r.entries {
            m.insert(a, b, d)?;
        }
        Ok(m)
    }
}

impl From<SparseDistanceMatrix> for DistanceRepr {
    fn from(m: SparseDistanceMatrix) -> Self {
        DistanceRepr {
            size: m.size,
            entries: m.entries.into_iter().map(|(p, d)| (p.lo(), p.hi(), d)).collect(),
        }
    }
}

impl SparseDistanceMatrix {
    pub fn new(size: usize) -> Self {
        SparseDistanceMatrix {
            size,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, a: ResponseId, b: ResponseId, distance: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&distance) {
            return Err(Error::InvalidArgument(format!(
                "distance {distance} outside [0, 1]"
            )));
        }
        let p = Pair::new(a, b)
            .ok_or_else(|| Error::InvalidArgument("diagonal entries are implicit".into()))?;
        if p.hi() as usize >= self.size {
            return Err(Error::InvalidArgument(format!(
                "pair ({a}, {b}) outside size {}",
                self.size
            )));
        }
        self.entries.insert(p, distance);
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn stored(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, a: ResponseId, b: ResponseId) -> f64 {
        match Pair::new(a, b) {
            None => 0.0,
            Some(p) => self.entries.get(&p).copied().unwrap_or(1.0),
        }
    }

    pub fn is_scored(&self, a: ResponseId, b: ResponseId) -> bool {
        Pair::new(a, b).is_some_and(|p| self.entries.contains_key(&p))
    }

    pub fn entries(&self) -> impl Iterator<Item = (Pair, f64)> + '_ {
        self.entries.iter().map(|(p, d)| (*p, *d))
    }

    /// Dense copy, for small instances and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![1.0; self.size]; self.size];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for (p, d) in self.entries() {
            m[p.lo() as usize][p.hi() as usize] = d;
            m[p.hi() as usize][p.lo() as usize] = d;
        }
        m
    }

    /// `i\tj\tdistance` lines sorted by `(i, j)`, preceded by a `# size=R` line.
    pub fn write_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# size={}", self.size)?;
        for (p, d) in self.entries() {
            writeln!(w, "{}\t{}\t{}", p.lo(), p.hi(), d)?;
        }
        Ok(())
    }

    pub fn read_tsv(r: impl BufRead) -> Result<Self> {
        let mut size = None;
        let mut rows = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let lineno = idx + 1;
            let bad = |m: String| Error::Parse {
                line: lineno,
                message: m,
            };
            let line = line.map_err(|e| bad(e.to_string()))?;
            if let Some(rest) = line.strip_prefix("# size=") {
                size = Some(rest.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?);
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad("expected i, j, distance".into()));
            }
            let a: ResponseId = f[0].parse().map_err(|_| bad(format!("bad id `{}`", f[0])))?;
            let b: ResponseId = f[1].parse().map_err(|_| bad(format!("bad id `{}`", f[1])))?;
            let d: f64 = f[2].parse().map_err(|_| bad(format!("bad distance `{}`", f[2])))?;
            rows.push((lineno, a, b, d));
        }
        let size = size.ok_or(Error::Parse {
            line: 1,
            message: "missing `# size=` header".into(),
        })?;
        let mut m = SparseDistanceMatrix::new(size);
        for (line, a, b, d) in rows {
            m.insert(a, b, d).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        }
        Ok(m)
    }
}

/// `D(i,j) = 1 − p(i,j)` for each scored pair.
pub fn build_distance_matrix(scores: &PairScores, size: usize) -> Result<SparseDistanceMatrix> {
    let mut m = SparseDistanceMatrix::new(size);
    for (p, &prob) in scores {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::Probability(prob));
        }
        m.insert(p.lo(), p.hi(), 1.0 - prob)?;
    }
    Ok(m)
}

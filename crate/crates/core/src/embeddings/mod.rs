//! Sentence encoders over the response table and exact cosine k-NN.

mod tfidf;
mod wordvec;

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use tfidf::{fit_tfidf, TfidfModel};
pub use wordvec::{load_word_vectors, read_word_vectors, WordVectorTable};

use crate::corpus::ResponseTable;
use crate::external::{ExternalClient, RetryPolicy};
use crate::{Error, Exec, ResponseId, Result};

const FALLBACK_SEED: u64 = 0x6f6f_765f_6661_6c6c;

fn default_batch_size() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    Tfidf,
    AvgWordvec,
    TfidfWeightedWordvec,
    External {
        endpoint: String,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

impl EncoderSpec {
    pub fn name(&self) -> String {
        match self {
            EncoderSpec::Tfidf => "tfidf".into(),
            EncoderSpec::AvgWordvec => "avg_wordvec".into(),
            EncoderSpec::TfidfWeightedWordvec => "tfidf_weighted_wordvec".into(),
            EncoderSpec::External { endpoint, .. } => format!("external:{endpoint}"),
        }
    }

    pub fn needs_tfidf(&self) -> bool {
        matches!(self, EncoderSpec::Tfidf | EncoderSpec::TfidfWeightedWordvec)
    }

    pub fn needs_word_vectors(&self) -> bool {
        matches!(self, EncoderSpec::AvgWordvec | EncoderSpec::TfidfWeightedWordvec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum Rows {
    Dense { dim: usize, data: Vec<f64> },
    /// Each row sorted by column, no duplicate columns.
    Sparse { dim: usize, rows: Vec<Vec<(u32, f64)>> },
}

/// One encoder's vectors for every response, plus cached norms and the
/// per-row fallback flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub encoder: EncoderSpec,
    rows: Rows,
    norms: Vec<f64>,
    fallback: Vec<bool>,
}

/// Deterministic unit vector for response `id`, used when an encoder has
/// nothing to say about a response.
pub fn fallback_vector(id: ResponseId, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(FALLBACK_SEED ^ u64::from(id));
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn dense_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

impl EmbeddingMatrix {
    /// Builds a dense matrix; all-zero rows are replaced by the fallback vector
    /// and flagged.
    pub fn from_dense(encoder: EncoderSpec, dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 && !rows.is_empty() {
            return Err(Error::InvalidArgument("zero-dimensional embedding".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        let mut fallback = Vec::with_capacity(rows.len());
        for (i, mut r) in rows.into_iter().enumerate() {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            if let Some(j) = r.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(j));
            }
            let zero = r.iter().all(|&x| x == 0.0);
            if zero {
                r = fallback_vector(i as ResponseId, dim);
            }
            fallback.push(zero);
            data.extend_from_slice(&r);
        }
        let norms = data
            .chunks(dim.max(1))
            .map(|r| dense_dot(r, r).sqrt())
            .collect();
        Ok(EmbeddingMatrix {
            encoder,
            rows: Rows::Dense { dim, data },
            norms,
            fallback,
        })
    }

    pub fn from_sparse(encoder: EncoderSpec, dim: usize, rows: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        if dim == 0 && !rows.is_empty() {
            return Err(Error::InvalidArgument("zero-dimensional embedding".into()));
        }
        let mut out = Vec::with_capacity(rows.len());
        let mut fallback = Vec::with_capacity(rows.len());
        for (i, r) in rows.into_iter().enumerate() {
            if let Some(&(c, _)) = r.iter().find(|(_, x)| !x.is_finite()) {
                return Err(Error::NonFinite(c as usize));
            }
            if r.iter().any(|&(c, _)| c as usize >= dim) {
                return Err(Error::InvalidArgument(format!("row {i} has a column >= {dim}")));
            }
            if r.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::InvalidArgument(format!("row {i} is not sorted by column")));
            }
            let zero = r.iter().all(|&(_, x)| x == 0.0);
            fallback.push(zero);
            if zero {
                let v = fallback_vector(i as ResponseId, dim);
                out.push(v.into_iter().enumerate().map(|(c, x)| (c as u32, x)).collect());
            } else {
                out.push(r);
            }
        }
        let norms = out.iter().map(|r| sparse_dot(r, r).sqrt()).collect();
        Ok(EmbeddingMatrix {
            encoder,
            rows: Rows::Sparse { dim, rows: out },
            norms,
            fallback,
        })
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn dimension(&self) -> usize {
        match &self.rows {
            Rows::Dense { dim, .. } | Rows::Sparse { dim, .. } => *dim,
        }
    }

    pub fn is_fallback(&self, id: ResponseId) -> bool {
        self.fallback[id as usize]
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }

    pub fn norm(&self, id: ResponseId) -> f64 {
        self.norms[id as usize]
    }

    /// Row as a dense vector.
    pub fn row_dense(&self, id: ResponseId) -> Vec<f64> {
        match &self.rows {
            Rows::Dense { dim, data } => data[id as usize * dim..(id as usize + 1) * dim].to_vec(),
            Rows::Sparse { dim, rows } => {
                let mut v = vec![0.0; *dim];
                for &(c, x) in &rows[id as usize] {
                    v[c as usize] = x;
                }
                v
            }
        }
    }

    pub fn dot(&self, i: ResponseId, j: ResponseId) -> f64 {
        match &self.rows {
            Rows::Dense { dim, data } => {
                let (i, j) = (i as usize, j as usize);
                dense_dot(&data[i * dim..(i + 1) * dim], &data[j * dim..(j + 1) * dim])
            }
            Rows::Sparse { rows, .. } => sparse_dot(&rows[i as usize], &rows[j as usize]),
        }
    }

    pub fn cosine(&self, i: ResponseId, j: ResponseId) -> f64 {
        self.dot(i, j) / (self.norms[i as usize] * self.norms[j as usize])
    }
}

fn by_similarity(a: &(ResponseId, f64), b: &(ResponseId, f64)) -> Ordering {
    // `+ 0.0` folds -0.0 into 0.0 so the two tie
    (b.1 + 0.0).total_cmp(&(a.1 + 0.0)).then(a.0.cmp(&b.0))
}

/// The `k` rows most cosine-similar to `query`, excluding `query` itself,
/// in descending similarity with ties broken by ascending id.
pub fn cosine_knn(mat: &EmbeddingMatrix, query: ResponseId, k: usize) -> Vec<(ResponseId, f64)> {
    let n = mat.len() as ResponseId;
    let mut sims: Vec<(ResponseId, f64)> = (0..n)
        .filter(|&j| j != query)
        .map(|j| (j, mat.cosine(query, j)))
        .collect();
    let k = k.min(sims.len());
    if k == 0 {
        return Vec::new();
    }
    if k < sims.len() {
        sims.select_nth_unstable_by(k - 1, by_similarity);
        sims.truncate(k);
    }
    sims.sort_by(by_similarity);
    sims
}

/// [`cosine_knn`] for every row.
pub fn knn_all(mat: &EmbeddingMatrix, k: usize, exec: Exec) -> Vec<Vec<(ResponseId, f64)>> {
    exec.map_range(mat.len(), |i| cosine_knn(mat, i as ResponseId, k))
}

fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

fn average_word_vectors(text: &str, wv: &WordVectorTable) -> Vec<f64> {
    let mut acc = vec![0.0; wv.dimension()];
    let mut n = 0usize;
    for v in tokens(text).filter_map(|t| wv.get(t)) {
        acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
        n += 1;
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    acc
}

fn tfidf_weighted_word_vectors(text: &str, tfidf: &TfidfModel, wv: &WordVectorTable) -> Vec<f64> {
    let mut acc = vec![0.0; wv.dimension()];
    let mut total = 0.0;
    let mut counts: Vec<(&str, f64)> = Vec::new();
    for t in tokens(text) {
        match counts.iter_mut().find(|(s, _)| *s == t) {
            Some((_, c)) => *c += 1.0,
            None => counts.push((t, 1.0)),
        }
    }
    for (t, tf) in counts {
        let (Some(idf), Some(v)) = (tfidf.idf_of(t), wv.get(t)) else {
            continue;
        };
        let w = tf * idf;
        acc.iter_mut().zip(v).for_each(|(a, x)| *a += w * x);
        total += w;
    }
    if total > 0.0 {
        acc.iter_mut().for_each(|a| *a /= total);
    }
    acc
}

/// Encodes every response in `table` with `spec`.
///
/// Responses that come out as the zero vector (no in-vocabulary tokens)
/// receive a seeded unit vector and are flagged via
/// [`EmbeddingMatrix::is_fallback`].
pub fn embed(
    table: &ResponseTable,
    spec: &EncoderSpec,
    tfidf: Option<&TfidfModel>,
    wv: Option<&WordVectorTable>,
    exec: Exec,
) -> Result<EmbeddingMatrix> {
    let texts: Vec<&str> = table.responses().iter().map(|r| r.normalized_text.as_str()).collect();
    let need_tfidf = || tfidf.ok_or_else(|| Error::InvalidArgument(format!("{} needs a tf-idf model", spec.name())));
    let need_wv = || wv.ok_or_else(|| Error::InvalidArgument(format!("{} needs word vectors", spec.name())));
    match spec {
        EncoderSpec::Tfidf => {
            let m = need_tfidf()?;
            let rows = exec.map(&texts, |t| m.transform(t));
            EmbeddingMatrix::from_sparse(spec.clone(), m.dimension(), rows)
        }
        EncoderSpec::AvgWordvec => {
            let wv = need_wv()?;
            let rows = exec.map(&texts, |t| average_word_vectors(t, wv));
            EmbeddingMatrix::from_dense(spec.clone(), wv.dimension(), rows)
        }
        EncoderSpec::TfidfWeightedWordvec => {
            let (m, wv) = (need_tfidf()?, need_wv()?);
            let rows = exec.map(&texts, |t| tfidf_weighted_word_vectors(t, m, wv));
            EmbeddingMatrix::from_dense(spec.clone(), wv.dimension(), rows)
        }
        EncoderSpec::External {
            endpoint,
            batch_size,
            retry,
        } => {
            let client = ExternalClient::new(endpoint, retry.clone())?;
            let batches: Vec<Vec<String>> = texts
                .chunks((*batch_size).max(1))
                .map(|c| c.iter().map(|s| s.to_string()).collect())
                .collect();
            let results = exec.map(&batches, |b| client.encode(b));
            let mut dim = None;
            let mut rows = Vec::with_capacity(texts.len());
            for r in results {
                let (d, vs) = r?;
                match dim {
                    None => dim = Some(d),
                    Some(expected) if expected != d => {
                        return Err(Error::DimensionMismatch { expected, found: d })
                    }
                    _ => {}
                }
                rows.extend(vs);
            }
            EmbeddingMatrix::from_dense(spec.clone(), dim.unwrap_or(0), rows)
        }
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::ResponseTable;
use crate::{Error, Result};

/// Vocabulary and smoothed inverse document frequencies over the response
/// table: `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, with `N` the number of
/// responses and `df(t)` the number of responses containing `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    /// token -> column; columns follow lexicographic token order.
    pub vocabulary: BTreeMap<String, u32>,
    pub idf: Vec<f64>,
    pub n_documents: usize,
}

pub fn fit_tfidf(table: &ResponseTable) -> Result<TfidfModel> {
    if table.is_empty() {
        return Err(Error::Empty("tf-idf needs at least one response"));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for r in table.responses() {
        let mut seen: Vec<&str> = r.normalized_text.split_whitespace().collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = table.len() as f64;
    let mut vocabulary = BTreeMap::new();
    let mut idf = Vec::with_capacity(df.len());
    for (col, (token, d)) in df.into_iter().enumerate() {
        vocabulary.insert(token.to_string(), col as u32);
        idf.push(((1.0 + n) / (1.0 + d as f64)).ln() + 1.0);
    }
    Ok(TfidfModel {
        vocabulary,
        idf,
        n_documents: table.len(),
    })
}

impl TfidfModel {
    pub fn dimension(&self) -> usize {
        self.idf.len()
    }

    pub fn idf_of(&self, token: &str) -> Option<f64> {
        self.vocabulary.get(token).map(|&c| self.idf[c as usize])
    }

    /// Raw term counts of in-vocabulary tokens, keyed by column.
    pub fn term_counts(&self, text: &str) -> BTreeMap<u32, f64> {
        let mut tf = BTreeMap::new();
        for tok in text.split_whitespace() {
            if let Some(&c) = self.vocabulary.get(tok) {
                *tf.entry(c).or_insert(0.0) += 1.0;
            }
        }
        tf
    }

    /// Sparse tf·idf row, sorted by column. Out-of-vocabulary tokens are ignored.
    pub fn transform(&self, text: &str) -> Vec<(u32, f64)> {
        self.term_counts(text)
            .into_iter()
            .map(|(c, tf)| (c, tf * self.idf[c as usize]))
            .collect()
    }
}

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::features::{featurize_with, FeatureHasher, SparseFeatures};
use super::{LabeledExample, TrainingConfig};
use crate::corpus::{Normalizer, Turn};
use crate::responseclasses::Catalog;
use crate::{Error, Exec, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Label-smoothed target: `(1 − t) + t/K` on the true class, `t/K` elsewhere.
pub fn smoothed_targets(class_index: usize, k: usize, t: f64) -> Vec<f64> {
    assert!(class_index < k, "class index {class_index} out of range for {k} classes");
    assert!((0.0..1.0).contains(&t), "smoothing {t} outside [0, 1)");
    let off = t / k as f64;
    let mut q = vec![off; k];
    q[class_index] = (1.0 - t) + off;
    q
}

/// Softmax in place; returns log-sum-exp of the input logits.
pub fn softmax_in_place(z: &mut [f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
    m + s.ln()
}

/// Index of the largest value; lowest index on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Linear softmax classifier over hashed context features.
///
/// Weights are held per feature column and only for columns that have ever
/// received a gradient; absent columns are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxModel {
    pub hasher: FeatureHasher,
    /// Label index -> catalog class id, ascending.
    pub class_ids: Vec<u32>,
    columns: HashMap<u32, Vec<f64>>,
    pub bias: Vec<f64>,
    /// Structure hash of the catalog the model was trained against.
    pub catalog_hash: String,
    pub config: TrainingConfig,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    hasher: FeatureHasher,
    class_ids: Vec<u32>,
    catalog_hash: String,
    config: TrainingConfig,
    bias: Vec<f64>,
    /// (feature index, one weight per class), ascending by index.
    columns: Vec<(u32, Vec<f64>)>,
}

impl Serialize for SoftmaxModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let columns: BTreeMap<u32, Vec<f64>> = self
            .columns
            .iter()
            .filter(|(_, w)| w.iter().any(|&x| x != 0.0))
            .map(|(&f, w)| (f, w.clone()))
            .collect();
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            hasher: self.hasher,
            class_ids: self.class_ids.clone(),
            catalog_hash: self.catalog_hash.clone(),
            config: self.config.clone(),
            bias: self.bias.clone(),
            columns: columns.into_iter().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SoftmaxModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = ModelFile::deserialize(d)?;
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(D::Error::custom(format!(
                "unsupported model format version {}",
                f.format_version
            )));
        }
        let k = f.class_ids.len();
        if f.bias.len() != k || f.columns.iter().any(|(_, w)| w.len() != k) {
            return Err(D::Error::custom("weight shape does not match class count"));
        }
        let dim = f.hasher.dimension() as u32;
        if f.columns.iter().any(|(i, _)| *i >= dim) {
            return Err(D::Error::custom("feature index outside hasher dimension"));
        }
        Ok(SoftmaxModel {
            hasher: f.hasher,
            class_ids: f.class_ids,
            columns: f.columns.into_iter().collect(),
            bias: f.bias,
            catalog_hash: f.catalog_hash,
            config: f.config,
        })
    }
}

/// Gradient of the mean batch loss, same layout as the model parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradient {
    pub columns: BTreeMap<u32, Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Gradient {
    /// Dense `K × dim` weight gradient, row-major by class.
    pub fn weights_dense(&self, dim: usize) -> Vec<Vec<f64>> {
        let k = self.bias.len();
        let mut w = vec![vec![0.0; dim]; k];
        for (&f, g) in &self.columns {
            for c in 0..k {
                w[c][f as usize] = g[c];
            }
        }
        w
    }
}

impl SoftmaxModel {
    /// All-zero model over `class_ids`.
    pub fn zeros(hasher: FeatureHasher, class_ids: Vec<u32>, catalog_hash: String, config: TrainingConfig) -> Self {
        let k = class_ids.len();
        SoftmaxModel {
            hasher,
            class_ids,
            columns: HashMap::new(),
            bias: vec![0.0; k],
            catalog_hash,
            config,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn dimension(&self) -> usize {
        self.hasher.dimension()
    }

    pub fn label_index(&self, class_id: u32) -> Option<usize> {
        self.class_ids.binary_search(&class_id).ok()
    }

    pub fn weight(&self, class_index: usize, feature: u32) -> f64 {
        self.columns.get(&feature).map_or(0.0, |w| w[class_index])
    }

    pub fn set_weight(&mut self, class_index: usize, feature: u32, value: f64) {
        let k = self.num_classes();
        self.columns.entry(feature).or_insert_with(|| vec![0.0; k])[class_index] = value;
    }

    /// Number of feature columns holding weights.
    pub fn stored_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn logits(&self, x: &[(u32, f64)]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for &(f, v) in x {
            if let Some(w) = self.columns.get(&f) {
                z.iter_mut().zip(w).for_each(|(zk, wk)| *zk += v * wk);
            }
        }
        z
    }

    pub fn probabilities(&self, x: &[(u32, f64)]) -> Vec<f64> {
        let mut z = self.logits(x);
        softmax_in_place(&mut z);
        z
    }

    pub fn check_catalog(&self, catalog: &Catalog) -> Result<()> {
        let found = catalog.structure_hash();
        if found != self.catalog_hash {
            return Err(Error::CatalogMismatch {
                expected: self.catalog_hash.clone(),
                found,
            });
        }
        Ok(())
    }

    pub(crate) fn normalizer(&self) -> Normalizer {
        Normalizer::new(&self.config.placeholders)
    }

    /// Features of the conversation so far, using the model's own
    /// truncation settings.
    pub fn featurize_turns(&self, turns: &[Turn]) -> SparseFeatures {
        let w = featurize_with(turns, self.config.max_turns, self.config.max_tokens, &self.normalizer());
        self.hasher.features(&w)
    }

    pub(crate) fn column_mut(&mut self, feature: u32) -> &mut Vec<f64> {
        let k = self.num_classes();
        self.columns.entry(feature).or_insert_with(|| vec![0.0; k])
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Applies `params -= lr * grad`.
    pub fn step(&mut self, grad: &Gradient, lr: f64) {
        let k = self.num_classes();
        for (&f, g) in &grad.columns {
            let w = self.columns.entry(f).or_insert_with(|| vec![0.0; k]);
            w.iter_mut().zip(g).for_each(|(wi, gi)| *wi -= lr * gi);
        }
        self.bias.iter_mut().zip(&grad.bias).for_each(|(b, g)| *b -= lr * g);
    }
}

/// Per-coordinate adaptive step sizes: each parameter moves by
/// `lr * g / sqrt(Σ g²)` over the gradients it has seen so far.
#[derive(Clone, Debug, Default)]
pub struct AdaGrad {
    columns: HashMap<u32, Vec<f64>>,
    bias: Vec<f64>,
}

const ADAGRAD_EPS: f64 = 1e-8;

impl AdaGrad {
    pub fn step(&mut self, model: &mut SoftmaxModel, grad: &Gradient, lr: f64) {
        let k = model.num_classes();
        for (&f, g) in &grad.columns {
            let acc = self.columns.entry(f).or_insert_with(|| vec![0.0; k]);
            let w = model.column_mut(f);
            for ((wi, ai), gi) in w.iter_mut().zip(acc.iter_mut()).zip(g) {
                *ai += gi * gi;
                *wi -= lr * gi / (ai.sqrt() + ADAGRAD_EPS);
            }
        }
        self.bias.resize(k, 0.0);
        for ((b, a), g) in model.bias_mut().iter_mut().zip(self.bias.iter_mut()).zip(&grad.bias) {
            *a += g * g;
            *b -= lr * g / (a.sqrt() + ADAGRAD_EPS);
        }
    }
}

/// Mean smoothed cross-entropy over `(features, label index)` pairs and its
/// exact gradient.
///
/// Per example the loss is `lse(z) − Σ_k q_k z_k` with `z = Wx + b`, which is
/// `−Σ q_k log softmax(z)_k` without forming logs of probabilities; the
/// gradient with respect to `z` is `softmax(z) − q`.
pub fn loss_and_grad_features(
    model: &SoftmaxModel,
    batch: &[(SparseFeatures, usize)],
    smoothing: f64,
    exec: Exec,
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let k = model.num_classes();
    for (x, y) in batch {
        if let Some(&(f, _)) = x.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(f as usize));
        }
        if *y >= k {
            return Err(Error::InvalidArgument(format!("label {y} out of range for {k} classes")));
        }
    }
    let per_example: Vec<(f64, Vec<f64>)> = exec.map(batch, |(x, y)| {
        let mut z = model.logits(x);
        let q = smoothed_targets(*y, k, smoothing);
        let qz: f64 = q.iter().zip(&z).map(|(a, b)| a * b).sum();
        let lse = softmax_in_place(&mut z);
        let dz: Vec<f64> = z.iter().zip(&q).map(|(p, q)| p - q).collect();
        (lse - qz, dz)
    });

    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = Gradient {
        columns: BTreeMap::new(),
        bias: vec![0.0; k],
    };
    for ((x, _), (l, dz)) in batch.iter().zip(&per_example) {
        loss += l;
        grad.bias.iter_mut().zip(dz).for_each(|(g, d)| *g += d / n);
        for &(f, v) in x {
            let col = grad.columns.entry(f).or_insert_with(|| vec![0.0; k]);
            col.iter_mut().zip(dz).for_each(|(g, d)| *g += v * d / n);
        }
    }
    Ok((loss / n, grad))
}

/// [`loss_and_grad_features`] on labelled contexts.
pub fn loss_and_grad(model: &SoftmaxModel, batch: &[LabeledExample], exec: Exec) -> Result<(f64, Gradient)> {
    let encoded = encode_examples(model, batch, exec)?;
    loss_and_grad_features(model, &encoded, model.config.smoothing, exec)
}

pub(crate) fn encode_examples(
    model: &SoftmaxModel,
    examples: &[LabeledExample],
    exec: Exec,
) -> Result<Vec<(SparseFeatures, usize)>> {
    let labels = examples
        .iter()
        .map(|e| {
            model
                .label_index(e.class_id)
                .ok_or_else(|| Error::InvalidArgument(format!("class {} unknown to the model", e.class_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let feats = exec.map(examples, |e| model.hasher.features(&e.context));
    Ok(feats.into_iter().zip(labels).collect())
}

/// Class probabilities for the next doctor response after `turns`, in label
/// (ascending class id) order.
pub fn predict_proba(model: &SoftmaxModel, catalog: &Catalog, turns: &[Turn]) -> Result<Vec<f64>> {
    model.check_catalog(catalog)?;
    Ok(model.probabilities(&model.featurize_turns(turns)))
}

/// Fraction of examples whose argmax class equals the label.
pub fn evaluate_accuracy(model: &SoftmaxModel, examples: &[LabeledExample], exec: Exec) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let hits: Vec<bool> = exec.map(examples, |e| {
        let p = model.probabilities(&model.hasher.features(&e.context));
        model.class_ids[argmax(&p)] == e.class_id
    });
    hits.iter().filter(|&&h| h).count() as f64 / examples.len() as f64
}

//! Context → response-class training data and the label-smoothed softmax
//! classifier.

mod features;
mod model;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use features::{
    featurize_context, marker, ContextWindow, FeatureHasher, SparseFeatures, DOCTOR_MARKER, PATIENT_MARKER,
};
pub use model::{
    argmax, evaluate_accuracy, AdaGrad, loss_and_grad, loss_and_grad_features, predict_proba, smoothed_targets,
    softmax_in_place, Gradient, SoftmaxModel, MODEL_FORMAT_VERSION,
};

use crate::corpus::{group_turns, Conversation, Normalizer, Speaker};
use crate::responseclasses::{Catalog, ClassIndex};
use crate::{Error, Exec, Result};

const HASH_SEED: u64 = 0x5eed_0fc0_ffee;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub max_tokens: usize,
    pub max_turns: usize,
    pub smoothing: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub hash_bits: u32,
    /// Placeholder markers scrubbed from context text.
    pub placeholders: Vec<String>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            max_tokens: 304,
            max_turns: 6,
            smoothing: 0.1,
            learning_rate: 1.0,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            validation_fraction: 0.2,
            hash_bits: 18,
            placeholders: Vec::new(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.max_tokens == 0 || self.max_turns == 0 {
            return bad("max_tokens and max_turns must be positive");
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return bad("smoothing must be in [0, 1)");
        }
        // written this way so NaN is rejected too
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.learning_rate > 0.0) || self.epochs == 0 || self.batch_size == 0 {
            return bad("learning_rate, epochs and batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        if !(1..=30).contains(&self.hash_bits) {
            return bad("hash_bits must be in 1..=30");
        }
        Ok(())
    }

    pub fn hasher(&self) -> FeatureHasher {
        FeatureHasher::new(self.hash_bits, HASH_SEED)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub context: ContextWindow,
    pub class_id: u32,
}

/// One example per doctor turn whose normalised text belongs to a class,
/// with the preceding turns as context. Doctor turns outside every class, and
/// doctor turns that open a conversation, produce nothing.
pub fn build_dataset(
    convs: &[Conversation],
    index: &ClassIndex,
    cfg: &TrainingConfig,
    exec: Exec,
) -> Vec<LabeledExample> {
    let normalizer = Normalizer::new(&cfg.placeholders);
    exec.map(convs, |c| {
        let grouped = group_turns(&c.turns);
        let mut out = Vec::new();
        for (pos, turn) in grouped.iter().enumerate().skip(1) {
            if turn.speaker != Speaker::Doctor {
                continue;
            }
            let Some(class_id) = index.class_of(&normalizer.normalize(&turn.text)) else {
                continue;
            };
            let mut context = features::featurize_with(&grouped[..pos], cfg.max_turns, cfg.max_tokens, &normalizer);
            context.source_conversation = c.id.clone();
            context.position = pos;
            out.push(LabeledExample { context, class_id });
        }
        out
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Splits by conversation so no conversation contributes to both sides.
/// Returns `(train, validation)`.
pub fn split_by_conversation(
    examples: &[LabeledExample],
    validation_fraction: f64,
    seed: u64,
) -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    let ids: BTreeSet<&str> = examples.iter().map(|e| e.context.source_conversation.as_str()).collect();
    let mut ids: Vec<&str> = ids.into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (validation_fraction * ids.len() as f64).round() as usize;
    let val: BTreeSet<&str> = ids.into_iter().take(n_val).collect();
    examples
        .iter()
        .cloned()
        .partition(|e| !val.contains(e.context.source_conversation.as_str()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: SoftmaxModel,
    /// Mean training loss per epoch.
    pub curve: Vec<f64>,
}

/// Mini-batch AdaGrad on the smoothed loss from a zero model.
/// The label space is every class in `catalog`.
pub fn train(examples: &[LabeledExample], catalog: &Catalog, cfg: &TrainingConfig, exec: Exec) -> Result<TrainedModel> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    let present: BTreeSet<u32> = examples.iter().map(|e| e.class_id).collect();
    if present.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training needs at least 2 classes in the data, found {}",
            present.len()
        )));
    }
    let class_ids: Vec<u32> = catalog.classes().iter().map(|c| c.id).collect();
    let mut model = SoftmaxModel::zeros(cfg.hasher(), class_ids, catalog.structure_hash(), cfg.clone());
    let encoded = model::encode_examples(&model, examples, exec)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut opt = AdaGrad::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| encoded[i].clone()));
            let (loss, grad) = loss_and_grad_features(&model, &batch, cfg.smoothing, exec)?;
            total += loss * chunk.len() as f64;
            opt.step(&mut model, &grad, cfg.learning_rate);
        }
        let mean = total / encoded.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        curve.push(mean);
    }
    Ok(TrainedModel { model, curve })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub turns: usize,
    pub train_examples: usize,
    pub validation_examples: usize,
    pub accuracy: f64,
}

/// Trains one model per context length with the same seed and conversation
/// split, reporting validation accuracy for each.
pub fn history_ablation(
    convs: &[Conversation],
    index: &ClassIndex,
    catalog: &Catalog,
    cfg: &TrainingConfig,
    turn_counts: &[usize],
    exec: Exec,
) -> Result<Vec<AblationRow>> {
    if turn_counts.is_empty() {
        return Err(Error::Empty("turn counts"));
    }
    turn_counts
        .iter()
        .map(|&turns| {
            let c = TrainingConfig {
                max_turns: turns,
                ..cfg.clone()
            };
            let data = build_dataset(convs, index, &c, exec);
            let (tr, va) = split_by_conversation(&data, c.validation_fraction, c.seed);
            let trained = train(&tr, catalog, &c, exec)?;
            Ok(AblationRow {
                turns,
                train_examples: tr.len(),
                validation_examples: va.len(),
                accuracy: evaluate_accuracy(&trained.model, &va, exec),
            })
        })
        .collect()
}

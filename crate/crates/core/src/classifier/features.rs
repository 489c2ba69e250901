use serde::{Deserialize, Serialize};

use super::TrainingConfig;
use crate::corpus::{group_turns, Normalizer, Speaker, Turn};
use crate::hashing::fnv1a64;

/// Start-of-turn marker for patient turns. The angle brackets are Unicode
/// punctuation, so no normalised word can equal a marker.
pub const PATIENT_MARKER: &str = "⟨pat⟩";
/// Start-of-turn marker for doctor turns.
pub const DOCTOR_MARKER: &str = "⟨doc⟩";

pub fn marker(speaker: Speaker) -> &'static str {
    match speaker {
        Speaker::Patient => PATIENT_MARKER,
        Speaker::Doctor => DOCTOR_MARKER,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub tokens: Vec<String>,
    #[serde(default)]
    pub source_conversation: String,
    /// Index (in grouped turns) of the doctor turn being predicted.
    #[serde(default)]
    pub position: usize,
}

/// Keeps the last `max_turns` turns (consecutive same-speaker messages count
/// as one turn), prefixes each with its speaker marker, normalises the words
/// and keeps the last `max_tokens` tokens.
pub fn featurize_context(turns: &[Turn], cfg: &TrainingConfig) -> ContextWindow {
    let normalizer = Normalizer::new(&cfg.placeholders);
    featurize_with(turns, cfg.max_turns, cfg.max_tokens, &normalizer)
}

pub(crate) fn featurize_with(
    turns: &[Turn],
    max_turns: usize,
    max_tokens: usize,
    normalizer: &Normalizer,
) -> ContextWindow {
    let grouped = group_turns(turns);
    let start = grouped.len().saturating_sub(max_turns);
    let mut tokens = Vec::new();
    for t in &grouped[start..] {
        tokens.push(marker(t.speaker).to_string());
        tokens.extend(normalizer.normalize(&t.text).split_whitespace().map(str::to_string));
    }
    if tokens.len() > max_tokens {
        tokens.drain(..tokens.len() - max_tokens);
    }
    ContextWindow {
        tokens,
        ..Default::default()
    }
}

/// Sparse feature vector: `(index, value)` sorted by index, unique indices.
pub type SparseFeatures = Vec<(u32, f64)>;

const MULTIPLIER: u64 = 0x9e37_79b9_7f4a_7c15;

/// Hashed unigram + bigram features in `2^bits` slots, plus two dedicated
/// slots after them for the speaker-marker unigrams. Vectors are L2-normalised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureHasher {
    pub bits: u32,
    pub seed: u64,
}

impl FeatureHasher {
    pub fn new(bits: u32, seed: u64) -> Self {
        assert!((1..=30).contains(&bits), "hash bits must be in 1..=30");
        FeatureHasher { bits, seed }
    }

    pub fn hashed_slots(&self) -> u32 {
        1 << self.bits
    }

    /// Total feature dimension including the marker slots.
    pub fn dimension(&self) -> usize {
        self.hashed_slots() as usize + 2
    }

    fn slot(&self, bytes: &[u8]) -> u32 {
        let h = fnv1a64(bytes) ^ self.seed;
        (h.wrapping_mul(MULTIPLIER) >> (64 - self.bits)) as u32
    }

    fn token_slot(&self, tok: &str) -> u32 {
        match tok {
            PATIENT_MARKER => self.hashed_slots(),
            DOCTOR_MARKER => self.hashed_slots() + 1,
            _ => {
                let mut b = Vec::with_capacity(tok.len() + 2);
                b.extend_from_slice(b"u\x1f");
                b.extend_from_slice(tok.as_bytes());
                self.slot(&b)
            }
        }
    }

    fn bigram_slot(&self, a: &str, b: &str) -> u32 {
        let mut buf = Vec::with_capacity(a.len() + b.len() + 3);
        buf.extend_from_slice(b"b\x1f");
        buf.extend_from_slice(a.as_bytes());
        buf.push(0x1f);
        buf.extend_from_slice(b.as_bytes());
        self.slot(&buf)
    }

    pub fn features(&self, window: &ContextWindow) -> SparseFeatures {
        let toks = &window.tokens;
        let mut idx: Vec<u32> = toks.iter().map(|t| self.token_slot(t)).collect();
        idx.extend(toks.windows(2).map(|w| self.bigram_slot(&w[0], &w[1])));
        idx.sort_unstable();
        let mut out: SparseFeatures = Vec::with_capacity(idx.len());
        for i in idx {
            match out.last_mut() {
                Some((j, v)) if *j == i => *v += 1.0,
                _ => out.push((i, 1.0)),
            }
        }
        let norm = out.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|(_, v)| *v /= norm);
        }
        out
    }
}

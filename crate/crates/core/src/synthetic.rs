//! Seeded synthetic corpus with a known response-class structure.
//!
//! Twelve true classes, each a set of lexically close doctor paraphrases.
//! Patient turns carry trigger words for the class the doctor answers with,
//! so the right response is predictable from context. A small share of
//! patient turns mixes triggers from two classes; those contexts are the
//! ones a classifier should be unsure about. Some doctor turns are noise
//! that belongs to no class.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::clustering::ExportedCluster;
use crate::corpus::{Conversation, Normalizer, Turn};
use crate::hashing::fnv1a64;
use crate::responseclasses::{ActionKind, MergeAction};

pub const PLACEHOLDERS: [&str; 2] = ["[PATIENT_NAME]", "[DOCTOR_NAME]"];

struct ClassDef {
    name: &'static str,
    paraphrases: &'static [&'static str],
    triggers: &'static [&'static str],
}

const GREETING: usize = 0;
const ANYTHING_ELSE: usize = 10;
const GOODBYE: usize = 11;

const CLASSES: [ClassDef; 12] = [
    ClassDef {
        name: "greeting",
        paraphrases: &[
            "Hello, how can I help you today?",
            "Hi! How can I help you today?",
            "Hello [PATIENT_NAME], how can I help you today?",
            "Hello there, how can I help you today?",
            "Hi, I'm [DOCTOR_NAME]. How can I help you today?",
        ],
        triggers: &["hi", "hello", "hey", "morning", "evening"],
    },
    ClassDef {
        name: "symptom duration",
        paraphrases: &[
            "How long have you had these symptoms?",
            "How long have you had the symptoms?",
            "For how long have you had these symptoms?",
            "How long have you been having these symptoms?",
        ],
        triggers: &["started", "began", "coughing", "tired", "dizzy"],
    },
    ClassDef {
        name: "fever check",
        paraphrases: &[
            "Do you have a fever?",
            "Do you have any fever?",
            "Have you had a fever?",
            "Do you currently have a fever?",
        ],
        triggers: &["hot", "chills", "sweating", "shivering", "burning"],
    },
    ClassDef {
        name: "allergy check",
        paraphrases: &[
            "Are you allergic to any medications?",
            "Are you allergic to any medication?",
            "Are you allergic to any medicines?",
            "Are you allergic to any medications at all?",
        ],
        triggers: &["prescription", "antibiotics", "prescribe", "refill", "pills"],
    },
    ClassDef {
        name: "fluids and rest",
        paraphrases: &[
            "Drink plenty of fluids and rest.",
            "Drink plenty of water and rest.",
            "Please drink plenty of fluids and rest.",
            "Drink lots of fluids and rest!",
        ],
        triggers: &["congested", "sniffles", "flu", "runny", "sneezing"],
    },
    ClassDef {
        name: "ibuprofen",
        paraphrases: &[
            "You can take ibuprofen for the pain.",
            "You can take ibuprofen for pain.",
            "You may take ibuprofen for the pain.",
            "You can also take ibuprofen for the pain.",
        ],
        triggers: &["ache", "sore", "hurts", "painful", "throbbing"],
    },
    ClassDef {
        name: "emergency room",
        paraphrases: &[
            "Please go to the emergency room now.",
            "Please go to the emergency room right now.",
            "Go to the emergency room now.",
            "You should go to the emergency room now.",
        ],
        triggers: &["chest", "crushing", "breathe", "fainted", "numb"],
    },
    ClassDef {
        name: "rash photo",
        paraphrases: &[
            "Can you send a photo of the rash?",
            "Could you send a photo of the rash?",
            "Can you send me a photo of the rash?",
            "Please send a photo of the rash.",
        ],
        triggers: &["rash", "itchy", "spots", "bumps", "blotchy"],
    },
    ClassDef {
        name: "pregnancy check",
        paraphrases: &[
            "Is there any chance you could be pregnant?",
            "Is there a chance you could be pregnant?",
            "Is there any chance that you could be pregnant?",
            "Any chance you could be pregnant?",
        ],
        triggers: &["period", "late", "nausea", "cramps", "queasy"],
    },
    ClassDef {
        name: "primary care follow-up",
        paraphrases: &[
            "Follow up with your primary care doctor.",
            "Please follow up with your primary care doctor.",
            "Follow up with your primary care physician.",
            "Follow up with your own primary care doctor.",
        ],
        triggers: &["chronic", "months", "recurring", "years", "ongoing"],
    },
    ClassDef {
        name: "anything else",
        paraphrases: &[
            "Is there anything else I can do for you?",
            "Is there anything else I can do for you today?",
            "Anything else I can do for you?",
            "Is there anything else that I can do for you?",
        ],
        triggers: &["okay", "understood", "alright", "sure", "noted"],
    },
    ClassDef {
        name: "goodbye",
        paraphrases: &[
            "Take care and feel better soon!",
            "Take care, feel better soon.",
            "Take care [PATIENT_NAME] and feel better soon!",
            "Take care and feel better soon :)",
        ],
        triggers: &["thanks", "thank", "bye", "appreciate", "cheers"],
    },
];

const MIDDLE_CLASSES: std::ops::Range<usize> = 1..10;

const NOISE_RESPONSES: [&str; 8] = [
    "Let me look into that.",
    "One moment please.",
    "I see.",
    "Got it, thanks for sharing.",
    "Sorry to hear that.",
    "Let me check your chart.",
    "Understood, give me a second.",
    "That makes sense.",
];

const FILLER: [&str; 24] = [
    "i", "have", "been", "feeling", "really", "kind", "of", "and", "my", "it", "is", "so", "a", "bit", "since",
    "yesterday", "today", "also", "the", "pretty", "very", "just", "not", "sure",
];

const PATIENT_TEMPLATES: [&str; 6] = [
    "i have been {a} and {b}",
    "my {a} is {b}",
    "well it is {a} and kind of {b}",
    "{a} {b} since yesterday",
    "i feel {a} and also {b}",
    "so {a}, really {b}",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub conversations: usize,
    pub seed: u64,
    /// Share of middle patient turns carrying triggers from a second class.
    pub ambiguity: f64,
    /// Share of middle doctor turns replaced by a noise response.
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            conversations: 200,
            seed: 7,
            ambiguity: 0.05,
            noise: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub conversations: Vec<Conversation>,
    /// Normalised paraphrase text -> true class index.
    pub response_class: BTreeMap<String, usize>,
}

pub fn class_names() -> Vec<&'static str> {
    CLASSES.iter().map(|c| c.name).collect()
}

pub fn num_classes() -> usize {
    CLASSES.len()
}

fn patient_turn(rng: &mut ChaCha8Rng, triggers: [&str; 2]) -> String {
    let tpl = PATIENT_TEMPLATES.choose(rng).unwrap();
    let mut text = tpl.replace("{a}", triggers[0]).replace("{b}", triggers[1]);
    if rng.gen_bool(0.5) {
        text.push(' ');
        text.push_str(FILLER.choose(rng).unwrap());
    }
    text
}

fn two_triggers(rng: &mut ChaCha8Rng, class: usize) -> [&'static str; 2] {
    let t: Vec<&str> = CLASSES[class].triggers.choose_multiple(rng, 2).copied().collect();
    [t[0], t[1]]
}

fn trigger_turn(rng: &mut ChaCha8Rng, class: usize) -> String {
    let t = two_triggers(rng, class);
    patient_turn(rng, t)
}

fn paraphrase(rng: &mut ChaCha8Rng, class: usize) -> &'static str {
    CLASSES[class].paraphrases.choose(rng).unwrap()
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let middle: Vec<usize> = MIDDLE_CLASSES.collect();
    let mut conversations = Vec::with_capacity(cfg.conversations);
    for n in 0..cfg.conversations {
        let mut turns = Vec::new();
        turns.push(Turn::patient(trigger_turn(&mut rng, GREETING)));
        turns.push(Turn::doctor(paraphrase(&mut rng, GREETING)));
        let k = rng.gen_range(1..=3);
        for &class in middle.choose_multiple(&mut rng, k) {
            let mut trig = two_triggers(&mut rng, class);
            if rng.gen_bool(cfg.ambiguity) {
                let other = **middle.iter().filter(|&&c| c != class).collect::<Vec<_>>().choose(&mut rng).unwrap();
                trig[1] = CLASSES[other].triggers.choose(&mut rng).unwrap();
            }
            turns.push(Turn::patient(patient_turn(&mut rng, trig)));
            let reply = if rng.gen_bool(cfg.noise) {
                NOISE_RESPONSES.choose(&mut rng).unwrap()
            } else {
                paraphrase(&mut rng, class)
            };
            turns.push(Turn::doctor(reply));
        }
        turns.push(Turn::patient(trigger_turn(&mut rng, ANYTHING_ELSE)));
        turns.push(Turn::doctor(paraphrase(&mut rng, ANYTHING_ELSE)));
        turns.push(Turn::patient(trigger_turn(&mut rng, GOODBYE)));
        turns.push(Turn::doctor(paraphrase(&mut rng, GOODBYE)));
        conversations.push(Conversation {
            id: format!("syn-{n:04}"),
            turns,
        });
    }

    let normalizer = Normalizer::new(&PLACEHOLDERS);
    let mut response_class = BTreeMap::new();
    for (c, def) in CLASSES.iter().enumerate() {
        for p in def.paraphrases {
            response_class.insert(normalizer.normalize(p), c);
        }
    }
    SyntheticCorpus {
        conversations,
        response_class,
    }
}

impl SyntheticCorpus {
    pub fn true_class(&self, normalized: &str) -> Option<usize> {
        self.response_class.get(normalized).copied()
    }

    /// Majority true class of a cluster, weighted by response count.
    pub fn cluster_class(&self, cluster: &ExportedCluster) -> Option<usize> {
        let mut votes: BTreeMap<usize, u64> = BTreeMap::new();
        for m in &cluster.members {
            if let Some(c) = self.true_class(&m.text) {
                *votes.entry(c).or_default() += m.count;
            }
        }
        votes.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(c, _)| c)
    }

    /// The merge actions a labeller who knows the true classes would take
    /// over `queue`: create a class the first time it shows up, assign later
    /// clusters of the same class to it, skip noise. Timestamps are zero.
    pub fn scripted_actions(&self, queue: &[ExportedCluster]) -> Vec<MergeAction> {
        let mut created: BTreeMap<usize, u32> = BTreeMap::new();
        queue
            .iter()
            .map(|cluster| {
                let kind = match self.cluster_class(cluster) {
                    None => ActionKind::Skip { cluster_id: cluster.id },
                    Some(c) => match created.get(&c) {
                        Some(&class_id) => ActionKind::Assign {
                            cluster_id: cluster.id,
                            class_id,
                        },
                        None => {
                            created.insert(c, created.len() as u32);
                            ActionKind::Create {
                                cluster_id: cluster.id,
                                name: CLASSES[c].name.to_string(),
                                exemplar: None,
                            }
                        }
                    },
                };
                MergeAction {
                    kind,
                    timestamp_ms: 0,
                    actor: "script".into(),
                }
            })
            .collect()
    }

    /// Every normalised word in the corpus, sorted.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        let normalizer = Normalizer::new(&PLACEHOLDERS);
        self.conversations
            .iter()
            .flat_map(|c| c.turns.iter())
            .flat_map(|t| {
                normalizer
                    .normalize(&t.text)
                    .split_whitespace()
                    .map(str::to_string)
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// True class whose paraphrases (alone among classes) use `word`.
fn word_topics() -> BTreeMap<String, usize> {
    let normalizer = Normalizer::new(&PLACEHOLDERS);
    let mut seen: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (c, def) in CLASSES.iter().enumerate() {
        for p in def.paraphrases {
            for w in normalizer.normalize(p).split_whitespace() {
                seen.entry(w.to_string()).or_default().insert(c);
            }
        }
    }
    seen.into_iter()
        .filter(|(_, cs)| cs.len() == 1)
        .map(|(w, cs)| (w, *cs.iter().next().unwrap()))
        .collect()
}

fn gaussian_unit(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Deterministic word vectors for `vocab`. Words used by exactly one class's
/// paraphrases lean towards a shared per-class direction; the rest are
/// independent random directions.
pub fn word_vectors(vocab: &BTreeSet<String>, dim: usize, seed: u64) -> Vec<(String, Vec<f64>)> {
    let topics = word_topics();
    vocab
        .iter()
        .map(|w| {
            let own = gaussian_unit(seed ^ fnv1a64(w.as_bytes()), dim);
            let v = match topics.get(w) {
                Some(&c) => {
                    let topic = gaussian_unit(seed.wrapping_add(1 + c as u64).rotate_left(17), dim);
                    own.iter().zip(&topic).map(|(o, t)| 0.6 * o + 0.8 * t).collect()
                }
                None => own,
            };
            (w.clone(), v)
        })
        .collect()
}

/// Writes `token v1 ... vd` lines.
pub fn write_word_vectors(mut w: impl Write, vectors: &[(String, Vec<f64>)]) -> std::io::Result<()> {
    for (tok, v) in vectors {
        write!(w, "{tok}")?;
        for x in v {
            write!(w, " {x:.6}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

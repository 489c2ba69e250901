use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use replyclass_core::classifier::TrainingConfig;
use replyclass_core::clustering::DEFAULT_DISTANCE_THRESHOLD;
use replyclass_core::embeddings::EncoderSpec;
use replyclass_core::hashing::json_sha256;
use replyclass_core::similarity::ScorerSpec;

use crate::Failure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub work_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: None,
            word_vectors: None,
            work_dir: PathBuf::from("work"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub bind: String,
    pub ui_dir: Option<PathBuf>,
    pub actor: String,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings {
            bind: "127.0.0.1:8080".into(),
            ui_dir: None,
            actor: "labeler".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    /// De-identification markers removed during normalisation.
    pub placeholders: Vec<String>,
    pub encoders: Vec<EncoderSpec>,
    pub scorer: ScorerSpec,
    pub k: usize,
    pub threshold: f64,
    /// Merge-session queue length.
    pub top_n: usize,
    pub training: TrainingConfig,
    /// Confidence thresholds reported by `evaluate`.
    pub eval_thresholds: Vec<f64>,
    pub service: ServiceSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            placeholders: Vec::new(),
            encoders: vec![EncoderSpec::Tfidf, EncoderSpec::AvgWordvec, EncoderSpec::TfidfWeightedWordvec],
            scorer: ScorerSpec::default(),
            k: 10,
            threshold: DEFAULT_DISTANCE_THRESHOLD,
            top_n: 3000,
            training: TrainingConfig::default(),
            eval_thresholds: (0..10).map(|i| i as f64 / 10.0).collect(),
            service: ServiceSettings::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML file. Relative paths inside it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.paths.corpus.as_mut().map(rebase);
        cfg.paths.word_vectors.as_mut().map(rebase);
        rebase(&mut cfg.paths.work_dir);
        cfg.service.ui_dir.as_mut().map(rebase);
        Ok(cfg)
    }

    /// Pushes the shared settings down into the training config and checks
    /// ranges.
    pub fn finalize(&mut self) -> Result<(), Failure> {
        self.training.seed = self.seed;
        self.training.placeholders = self.placeholders.clone();
        let bad = |m: String| Err(Failure::Usage(format!("config: {m}")));
        if self.encoders.is_empty() {
            return bad("at least one encoder is required".into());
        }
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return bad(format!("threshold {} outside (0, 1]", self.threshold));
        }
        if self.top_n == 0 {
            return bad("top_n must be positive".into());
        }
        if let Some(t) = self.eval_thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return bad(format!("evaluation threshold {t} outside [0, 1]"));
        }
        self.training.validate().or_else(|e| bad(e.to_string()))
    }

    /// Hash of everything that affects artifact contents. Paths, the bind
    /// address and the UI location are left out so the same pipeline run from
    /// two directories produces the same artifacts.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        c.service = ServiceSettings::default();
        json_sha256(&c)[..16].to_string()
    }

    pub fn needs_word_vectors(&self) -> bool {
        self.encoders.iter().any(|e| e.needs_word_vectors())
    }
}

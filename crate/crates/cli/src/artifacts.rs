//! On-disk stage outputs. Every artifact is a JSON envelope carrying the
//! producing stage and the config hash; readers refuse a hash that differs
//! from the current config unless forced.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use replyclass_core::responseclasses::{import_classes_from, Catalog, CatalogFile};

use crate::Failure;

/// One entry per artifact: file name and the subcommand that writes it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Kind {
    pub file: &'static str,
    pub stage: &'static str,
}

pub const RESPONSES: Kind = Kind { file: "responses.json", stage: "ingest" };
pub const EMBEDDINGS: Kind = Kind { file: "embeddings.json", stage: "embed" };
pub const CANDIDATES: Kind = Kind { file: "candidates.json", stage: "candidates" };
pub const DISTANCES: Kind = Kind { file: "distances.json", stage: "score" };
pub const CLUSTERS: Kind = Kind { file: "clusters.json", stage: "cluster" };
pub const CATALOG: Kind = Kind { file: "catalog.json", stage: "export-catalog" };
pub const DATASET: Kind = Kind { file: "dataset.json", stage: "dataset" };
pub const MODEL: Kind = Kind { file: "model.json", stage: "train" };
pub const ABLATION: Kind = Kind { file: "ablation.json", stage: "ablate-history" };
pub const EVALUATION: Kind = Kind { file: "evaluation.json", stage: "evaluate" };

pub const ACTION_LOG: &str = "actions.jsonl";

#[derive(Serialize, Deserialize)]
pub struct Envelope<T> {
    pub stage: String,
    pub config_hash: String,
    pub data: T,
}

pub struct Workspace {
    pub dir: PathBuf,
    pub config_hash: String,
    pub force: bool,
}

impl Workspace {
    pub fn path(&self, kind: Kind) -> PathBuf {
        self.dir.join(kind.file)
    }

    pub fn action_log(&self) -> PathBuf {
        self.dir.join(ACTION_LOG)
    }

    pub fn exists(&self, kind: Kind) -> bool {
        self.path(kind).is_file()
    }

    fn check_hash(&self, kind: Kind, found: Option<&str>) -> Result<(), Failure> {
        match found {
            Some(h) if h == self.config_hash => Ok(()),
            _ if self.force => {
                log::warn!("{}: config hash differs, continuing because of --force", kind.file);
                Ok(())
            }
            found => Err(Failure::Data(format!(
                "{} was produced with config {} but the current config is {}; rerun `{}` or pass --force",
                self.path(kind).display(),
                found.unwrap_or("(none)"),
                self.config_hash,
                kind.stage
            ))),
        }
    }

    fn open(&self, kind: Kind) -> Result<BufReader<File>, Failure> {
        let path = self.path(kind);
        match File::open(&path) {
            Ok(f) => Ok(BufReader::new(f)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Failure::Data(format!(
                "{} not found: run `{}` first",
                path.display(),
                kind.stage
            ))),
            Err(e) => Err(Failure::Data(format!("{}: {e}", path.display()))),
        }
    }

    pub fn load<T: DeserializeOwned>(&self, kind: Kind) -> Result<T, Failure> {
        let env: Envelope<T> = serde_json::from_reader(self.open(kind)?)
            .map_err(|e| Failure::Data(format!("{}: {e}", self.path(kind).display())))?;
        if env.stage != kind.stage {
            return Err(Failure::Data(format!(
                "{} was written by `{}`, expected `{}`",
                self.path(kind).display(),
                env.stage,
                kind.stage
            )));
        }
        self.check_hash(kind, Some(&env.config_hash))?;
        Ok(env.data)
    }

    pub fn store<T: Serialize>(&self, kind: Kind, data: &T) -> Result<PathBuf, Failure> {
        let env = Envelope {
            stage: kind.stage.to_string(),
            config_hash: self.config_hash.clone(),
            data,
        };
        self.write_with(kind.file, |w| {
            serde_json::to_writer(&mut *w, &env)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn load_catalog(&self) -> Result<Catalog, Failure> {
        let (catalog, file) = import_classes_from(self.open(CATALOG)?, None).map_err(Failure::from)?;
        self.check_hash(CATALOG, file.config_hash.as_deref())?;
        Ok(catalog)
    }

    pub fn store_catalog(&self, catalog: &Catalog) -> Result<PathBuf, Failure> {
        let doc: CatalogFile = catalog.to_file(Some(self.config_hash.clone()));
        self.write_with(CATALOG.file, |w| {
            serde_json::to_writer_pretty(&mut *w, &doc)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    /// Writes to a temporary sibling and renames, so a crash never leaves a
    /// half-written artifact under the real name.
    pub fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<(), Box<dyn std::error::Error>>,
    ) -> Result<PathBuf, Failure> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Failure::Data(format!("{}: {e}", self.dir.display())))?;
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let io = |e: &dyn std::fmt::Display| Failure::Data(format!("{}: {e}", path.display()));
        let file = File::create(&tmp).map_err(|e| io(&e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).map_err(|e| io(&e))?;
        let file = w.into_inner().map_err(|e| io(&e))?;
        file.sync_all().map_err(|e| io(&e))?;
        std::fs::rename(&tmp, &path).map_err(|e| io(&e))?;
        Ok(path)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let f = File::open(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use replyclass_core::candidates::{generate_candidate_pairs, CandidatePairSet};
use replyclass_core::classifier::{
    argmax, build_dataset, evaluate_accuracy, history_ablation, split_by_conversation, train, LabeledExample,
    SoftmaxModel,
};
use replyclass_core::clustering::{clique_violations, cluster_responses, cluster_stats, ClusterExport, ClusterSet, ClusterStats};
use replyclass_core::corpus::{extract_response_table, load_conversations, Conversation, ResponseTable, Speaker, Turn};
use replyclass_core::embeddings::{embed, fit_tfidf, load_word_vectors, EmbeddingMatrix};
use replyclass_core::hashing::sha256_hex;
use replyclass_core::responseclasses::{read_action_log, ActionLog, Catalog, ClassIndex, MergeSession};
use replyclass_core::selective::{
    compare_labeling_procedures, format_comparison_table, format_judgment_table, read_judgments, risk_coverage_curve,
    suggest, tabulate_judgments, uniqueness_per_100, JudgmentCategory, JudgmentRecord, JudgmentRow, ProcedureRun,
    RiskCoveragePoint,
};
use replyclass_core::similarity::{build_distance_matrix, score_pairs, SparseDistanceMatrix};
use replyclass_core::synthetic::{self, SyntheticConfig, SyntheticCorpus};
use replyclass_core::{exec, Error, Exec};
use replyclass_service::{ServiceConfig, ServiceState};

use crate::artifacts::{self as art, read_json, Workspace};
use crate::{Cli, Command, Failure, PipelineConfig};

#[derive(Serialize, Deserialize)]
pub struct IngestOutput {
    pub corpus_sha256: String,
    pub conversations: usize,
    pub table: ResponseTable,
}

#[derive(Serialize, Deserialize)]
pub struct ClusterOutput {
    pub stats: ClusterStats,
    pub clusters: ClusterSet,
    pub export: ClusterExport,
}

#[derive(Serialize, Deserialize)]
pub struct DatasetOutput {
    pub train: Vec<LabeledExample>,
    pub validation: Vec<LabeledExample>,
}

#[derive(Serialize, Deserialize)]
pub struct ModelOutput {
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    /// Mean training loss per epoch.
    pub curve: Vec<f64>,
    pub model: SoftmaxModel,
}

#[derive(Serialize, Deserialize)]
pub struct EvaluationOutput {
    pub examples: usize,
    pub accuracy: f64,
    /// Judgments here are automatic: a wrong class counts as worse.
    pub risk_coverage: Vec<RiskCoveragePoint>,
    pub unique_per_100: Option<f64>,
    pub judgments: Vec<JudgmentRow>,
}

/// Written by `synth` next to the corpus.
#[derive(Serialize, Deserialize)]
pub struct Truth {
    pub classes: Vec<String>,
    /// Normalised response text -> index into `classes`.
    pub response_class: BTreeMap<String, usize>,
}

struct Ctx {
    cfg: PipelineConfig,
    ws: Workspace,
    exec: Exec,
}

/// Read from the working directory when `--config` is not given.
pub const DEFAULT_CONFIG: &str = "replyclass.toml";

pub fn dispatch(cli: Cli) -> Result<(), Failure> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None if Path::new(DEFAULT_CONFIG).is_file() => PipelineConfig::load(Path::new(DEFAULT_CONFIG))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(w) = g.work_dir {
        cfg.paths.work_dir = w;
    }
    cfg.finalize()?;
    let exec = match g.jobs {
        Some(0) => return Err(Failure::Usage("--jobs must be positive".into())),
        Some(1) => Exec::Sequential,
        Some(n) => {
            if !exec::configure_threads(n) {
                log::warn!("--jobs {n} ignored: worker pool unavailable");
            }
            Exec::default()
        }
        None => Exec::default(),
    };
    let ws = Workspace {
        dir: cfg.paths.work_dir.clone(),
        config_hash: cfg.hash(),
        force: g.force,
    };
    let ctx = Ctx { cfg, ws, exec };
    match cli.command {
        Command::Ingest { corpus } => ingest(&ctx, corpus),
        Command::Embed => embed_stage(&ctx),
        Command::Candidates => candidates(&ctx),
        Command::Score => score(&ctx),
        Command::Cluster => cluster(&ctx),
        Command::Serve { bind, ui_dir } => serve(&ctx, bind, ui_dir),
        Command::ScriptMerge { truth } => script_merge(&ctx, &truth),
        Command::ExportCatalog => export_catalog(&ctx),
        Command::Dataset => dataset(&ctx),
        Command::Train => train_stage(&ctx),
        Command::AblateHistory { turns } => ablate(&ctx, &turns),
        Command::Evaluate { judgments } => evaluate(&ctx, judgments.as_deref()),
        Command::Suggest {
            threshold,
            turns,
            context,
        } => suggest_cmd(&ctx, threshold, &turns, context.as_deref()),
        Command::TabulateJudgments { judgments } => {
            print!("{}", format_judgment_table(&tabulate_judgments(&load_judgments(&judgments)?)?));
            Ok(())
        }
        Command::CompareProcedures { runs } => {
            let runs: Vec<ProcedureRun> = read_json(&runs)?;
            print!("{}", format_comparison_table(&compare_labeling_procedures(&runs)?));
            Ok(())
        }
        Command::Synth {
            out,
            conversations,
            vector_dim,
            vector_seed,
        } => synth(&out, conversations, g.seed.unwrap_or(SyntheticConfig::default().seed), vector_dim, vector_seed),
    }
}

fn corpus_path(cfg: &PipelineConfig, given: Option<PathBuf>) -> Result<PathBuf, Failure> {
    given
        .or_else(|| cfg.paths.corpus.clone())
        .ok_or_else(|| Failure::Usage("no corpus: pass --corpus or set paths.corpus".into()))
}

fn file_digest(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

fn ingest(ctx: &Ctx, corpus: Option<PathBuf>) -> Result<(), Failure> {
    let path = corpus_path(&ctx.cfg, corpus)?;
    let convs = load_conversations(&path)?;
    let table = extract_response_table(&convs, Speaker::Doctor, &ctx.cfg.placeholders, ctx.exec)?;
    let out = IngestOutput {
        corpus_sha256: file_digest(&path)?,
        conversations: convs.len(),
        table,
    };
    let written = ctx.ws.store(art::RESPONSES, &out)?;
    println!(
        "ingest: {} conversations, {} distinct responses -> {}",
        out.conversations,
        out.table.len(),
        written.display()
    );
    Ok(())
}

/// Conversations from the configured corpus, checked against the digest
/// recorded at ingest.
fn conversations(ctx: &Ctx, ingested: &IngestOutput) -> Result<Vec<Conversation>, Failure> {
    let path = corpus_path(&ctx.cfg, None)?;
    if file_digest(&path)? != ingested.corpus_sha256 && !ctx.ws.force {
        return Err(Failure::Data(format!(
            "{} changed since it was ingested; rerun `ingest` or pass --force",
            path.display()
        )));
    }
    Ok(load_conversations(&path)?)
}

fn embed_stage(ctx: &Ctx) -> Result<(), Failure> {
    let ingested: IngestOutput = ctx.ws.load(art::RESPONSES)?;
    let table = &ingested.table;
    let tfidf = if ctx.cfg.encoders.iter().any(|e| e.needs_tfidf()) {
        Some(fit_tfidf(table)?)
    } else {
        None
    };
    let wv = if ctx.cfg.needs_word_vectors() {
        let p = ctx.cfg.paths.word_vectors.as_ref().ok_or_else(|| {
            Failure::Usage("the configured encoders need word vectors: set paths.word_vectors".into())
        })?;
        Some(load_word_vectors(p)?)
    } else {
        None
    };
    let mut mats = Vec::with_capacity(ctx.cfg.encoders.len());
    for spec in &ctx.cfg.encoders {
        let m = embed(table, spec, tfidf.as_ref(), wv.as_ref(), ctx.exec)?;
        println!("embed: {} dim {}, {} fallback rows", spec.name(), m.dimension(), m.fallback_count());
        mats.push(m);
    }
    let written = ctx.ws.store(art::EMBEDDINGS, &mats)?;
    println!("embed: -> {}", written.display());
    Ok(())
}

fn candidates(ctx: &Ctx) -> Result<(), Failure> {
    let mats: Vec<EmbeddingMatrix> = ctx.ws.load(art::EMBEDDINGS)?;
    let pairs = generate_candidate_pairs(&mats, ctx.cfg.k, ctx.exec)?;
    for (enc, n) in &pairs.per_encoder_counts {
        println!("candidates: {enc} {n} pairs");
    }
    let written = ctx.ws.store(art::CANDIDATES, &pairs)?;
    println!("candidates: {} pairs in the union -> {}", pairs.len(), written.display());
    Ok(())
}

fn score(ctx: &Ctx) -> Result<(), Failure> {
    let ingested: IngestOutput = ctx.ws.load(art::RESPONSES)?;
    let pairs: CandidatePairSet = ctx.ws.load(art::CANDIDATES)?;
    let mats: Vec<EmbeddingMatrix> = ctx.ws.load(art::EMBEDDINGS)?;
    let scores = match score_pairs(&pairs, &ingested.table, &ctx.cfg.scorer, &mats, ctx.exec) {
        Err(Error::Unscored { pairs, message }) => {
            let shown: Vec<String> = pairs.iter().take(10).map(|(a, b)| format!("({a}, {b})")).collect();
            return Err(Failure::Data(format!(
                "{} pairs could not be scored ({message}); first: {}",
                pairs.len(),
                shown.join(" ")
            )));
        }
        r => r?,
    };
    let d = build_distance_matrix(&scores, ingested.table.len())?;
    let written = ctx.ws.store(art::DISTANCES, &d)?;
    println!("score: {} pairs scored -> {}", d.stored(), written.display());
    Ok(())
}

fn cluster(ctx: &Ctx) -> Result<(), Failure> {
    let d: SparseDistanceMatrix = ctx.ws.load(art::DISTANCES)?;
    let ingested: IngestOutput = ctx.ws.load(art::RESPONSES)?;
    let table = &ingested.table;
    let clusters = cluster_responses(&d, table, ctx.cfg.threshold)?;
    let violations = clique_violations(&clusters.to_partition(), &d, ctx.cfg.threshold);
    if !violations.is_empty() {
        return Err(Failure::Data(format!("{} clique violations in the clustering", violations.len())));
    }
    let out = ClusterOutput {
        stats: cluster_stats(&clusters, table),
        export: clusters.export(table),
        clusters,
    };
    let written = ctx.ws.store(art::CLUSTERS, &out)?;
    println!(
        "cluster: {} clusters from {} responses, largest {}, {:.1}% of occurrences in non-singletons -> {}",
        out.stats.clusters,
        table.len(),
        out.stats.max_size,
        100.0 * out.stats.non_singleton_coverage,
        written.display()
    );
    Ok(())
}

/// Model and catalog if both exist, checked against each other.
fn optional_model(ctx: &Ctx) -> Result<Option<(SoftmaxModel, Catalog)>, Failure> {
    if !ctx.ws.exists(art::MODEL) || !ctx.ws.exists(art::CATALOG) {
        return Ok(None);
    }
    let (model, catalog) = model_and_catalog(ctx)?;
    Ok(Some((model, catalog)))
}

fn model_and_catalog(ctx: &Ctx) -> Result<(SoftmaxModel, Catalog), Failure> {
    let out: ModelOutput = ctx.ws.load(art::MODEL)?;
    let catalog = ctx.ws.load_catalog()?;
    out.model.check_catalog(&catalog)?;
    Ok((out.model, catalog))
}

fn serve(ctx: &Ctx, bind: Option<String>, ui_dir: Option<PathBuf>) -> Result<(), Failure> {
    let clusters: ClusterOutput = ctx.ws.load(art::CLUSTERS)?;
    let bind = bind.unwrap_or_else(|| ctx.cfg.service.bind.clone());
    let addr: SocketAddr = bind
        .parse()
        .map_err(|e| Failure::Usage(format!("bind address `{bind}`: {e}")))?;
    let model = optional_model(ctx)?;
    if model.is_none() {
        log::info!("no trained model: /api/suggest will answer 503");
    }
    let state = ServiceState::open(ServiceConfig {
        export: clusters.export,
        top_n: ctx.cfg.top_n,
        action_log: ctx.ws.action_log(),
        model,
        ui_dir: ui_dir.or_else(|| ctx.cfg.service.ui_dir.clone()),
        actor: ctx.cfg.service.actor.clone(),
    })?;
    println!("serve: http://{addr}");
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Data(e.to_string()))?;
    rt.block_on(replyclass_service::serve(state, addr))
        .map_err(|e| Failure::Data(format!("{addr}: {e}")))
}

fn session(ctx: &Ctx, export: &ClusterExport) -> Result<MergeSession, Failure> {
    let log = ctx.ws.action_log();
    let actions = read_action_log(&log)?;
    MergeSession::replay(export, ctx.cfg.top_n, &actions)
        .map_err(|e| Failure::Data(format!("{} does not replay: {e}", log.display())))
}

fn script_merge(ctx: &Ctx, truth: &Path) -> Result<(), Failure> {
    let clusters: ClusterOutput = ctx.ws.load(art::CLUSTERS)?;
    let truth: Truth = read_json(truth)?;
    let mut s = session(ctx, &clusters.export)?;
    if !s.log().is_empty() {
        return Err(Failure::Data(format!(
            "{} already holds {} actions; remove it to script a fresh session",
            ctx.ws.action_log().display(),
            s.log().len()
        )));
    }
    let oracle = SyntheticCorpus {
        conversations: Vec::new(),
        response_class: truth.response_class,
    };
    let actions = oracle.scripted_actions(s.queue());
    let mut log = ActionLog::open(ctx.ws.action_log())?;
    for a in &actions {
        s.apply(a.clone())?;
        log.append(a)?;
    }
    println!(
        "script-merge: {} actions, {} classes -> {}",
        actions.len(),
        s.classes().len(),
        ctx.ws.action_log().display()
    );
    Ok(())
}

fn export_catalog(ctx: &Ctx) -> Result<(), Failure> {
    let clusters: ClusterOutput = ctx.ws.load(art::CLUSTERS)?;
    let s = session(ctx, &clusters.export)?;
    let catalog = s.export_classes()?;
    catalog.check_integrity(&clusters.clusters)?;
    let written = ctx.ws.store_catalog(&catalog)?;
    println!(
        "export-catalog: {} classes after {}/{} clusters -> {}",
        catalog.len(),
        s.cursor(),
        s.queue().len(),
        written.display()
    );
    Ok(())
}

fn class_index(ctx: &Ctx) -> Result<(IngestOutput, Catalog, ClassIndex), Failure> {
    let ingested: IngestOutput = ctx.ws.load(art::RESPONSES)?;
    let catalog = ctx.ws.load_catalog()?;
    let index = ClassIndex::new(&catalog, &ingested.table)?;
    Ok((ingested, catalog, index))
}

fn dataset(ctx: &Ctx) -> Result<(), Failure> {
    let (ingested, _, index) = class_index(ctx)?;
    let convs = conversations(ctx, &ingested)?;
    let t = &ctx.cfg.training;
    let all = build_dataset(&convs, &index, t, ctx.exec);
    let (train, validation) = split_by_conversation(&all, t.validation_fraction, t.seed);
    let out = DatasetOutput { train, validation };
    let written = ctx.ws.store(art::DATASET, &out)?;
    println!(
        "dataset: {} train, {} validation examples -> {}",
        out.train.len(),
        out.validation.len(),
        written.display()
    );
    Ok(())
}

fn train_stage(ctx: &Ctx) -> Result<(), Failure> {
    let data: DatasetOutput = ctx.ws.load(art::DATASET)?;
    let catalog = ctx.ws.load_catalog()?;
    let trained = train(&data.train, &catalog, &ctx.cfg.training, ctx.exec)?;
    let out = ModelOutput {
        train_accuracy: evaluate_accuracy(&trained.model, &data.train, ctx.exec),
        validation_accuracy: evaluate_accuracy(&trained.model, &data.validation, ctx.exec),
        curve: trained.curve,
        model: trained.model,
    };
    let written = ctx.ws.store(art::MODEL, &out)?;
    println!(
        "train: loss {:.4} -> {:.4}, train accuracy {:.3}, validation accuracy {:.3} -> {}",
        out.curve.first().copied().unwrap_or(f64::NAN),
        out.curve.last().copied().unwrap_or(f64::NAN),
        out.train_accuracy,
        out.validation_accuracy,
        written.display()
    );
    Ok(())
}

fn ablate(ctx: &Ctx, turns: &[usize]) -> Result<(), Failure> {
    let (ingested, catalog, index) = class_index(ctx)?;
    let convs = conversations(ctx, &ingested)?;
    let rows = history_ablation(&convs, &index, &catalog, &ctx.cfg.training, turns, ctx.exec)?;
    println!("{:>5}  {:>6}  {:>10}  {:>8}", "turns", "train", "validation", "accuracy");
    for r in &rows {
        println!(
            "{:>5}  {:>6}  {:>10}  {:>8.3}",
            r.turns, r.train_examples, r.validation_examples, r.accuracy
        );
    }
    let written = ctx.ws.store(art::ABLATION, &rows)?;
    println!("ablate-history: -> {}", written.display());
    Ok(())
}

fn load_judgments(path: &Path) -> Result<Vec<JudgmentRecord>, Failure> {
    let f = File::open(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    read_judgments(f).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn evaluate(ctx: &Ctx, judgments: Option<&Path>) -> Result<(), Failure> {
    let data: DatasetOutput = ctx.ws.load(art::DATASET)?;
    let (model, catalog) = model_and_catalog(ctx)?;
    if data.validation.is_empty() {
        return Err(Failure::Data("the validation split is empty".into()));
    }
    let preds: Vec<(u32, f64)> = ctx.exec.map(&data.validation, |e| {
        let p = model.probabilities(&model.hasher.features(&e.context));
        let i = argmax(&p);
        (model.class_ids[i], p[i])
    });
    let conf: Vec<f64> = preds.iter().map(|p| p.1).collect();
    let judg: Vec<JudgmentCategory> = preds
        .iter()
        .zip(&data.validation)
        .map(|(p, e)| {
            if p.0 == e.class_id {
                JudgmentCategory::Equivalent
            } else {
                JudgmentCategory::Worse
            }
        })
        .collect();
    let records: Vec<JudgmentRecord> = data
        .validation
        .iter()
        .zip(&judg)
        .map(|(e, &category)| JudgmentRecord {
            context_id: format!("{}:{}", e.context.source_conversation, e.context.position),
            model: "classifier".into(),
            category,
        })
        .collect();
    let correct = judg.iter().filter(|&&j| j == JudgmentCategory::Equivalent).count();
    let suggestions: Vec<&str> = preds
        .iter()
        .map(|p| catalog.get(p.0).map(|c| c.exemplar_text.as_str()).unwrap_or(""))
        .collect();
    let whole = suggestions.len() / 100 * 100;
    let out = EvaluationOutput {
        examples: preds.len(),
        accuracy: correct as f64 / preds.len() as f64,
        risk_coverage: risk_coverage_curve(&conf, &judg, &ctx.cfg.eval_thresholds)?,
        unique_per_100: (whole > 0).then(|| uniqueness_per_100(&suggestions[..whole])).transpose()?,
        judgments: tabulate_judgments(&records)?,
    };

    println!("evaluate: {} validation contexts, accuracy {:.3}", out.examples, out.accuracy);
    println!("{:>9}  {:>8}  {:>8}", "threshold", "coverage", "bad rate");
    for p in &out.risk_coverage {
        let bad = p.bad_rate.map(|b| format!("{b:.3}")).unwrap_or_else(|| "-".into());
        println!("{:>9.2}  {:>8.3}  {:>8}", p.threshold, p.coverage, bad);
    }
    if let Some(u) = out.unique_per_100 {
        println!("unique suggestions per 100 contexts: {u:.1}");
    }
    if let Some(path) = judgments {
        print!("{}", format_judgment_table(&tabulate_judgments(&load_judgments(path)?)?));
    }
    let written = ctx.ws.store(art::EVALUATION, &out)?;
    println!("evaluate: -> {}", written.display());
    Ok(())
}

fn parse_turn(s: &str) -> Result<Turn, Failure> {
    let (who, text) = s
        .split_once(':')
        .ok_or_else(|| Failure::Usage(format!("turn `{s}` is not `speaker: text`")))?;
    let speaker = match who.trim().to_ascii_lowercase().as_str() {
        "patient" | "p" => Speaker::Patient,
        "doctor" | "d" => Speaker::Doctor,
        other => return Err(Failure::Usage(format!("unknown speaker `{other}`"))),
    };
    Ok(Turn::new(speaker, text.trim()))
}

fn suggest_cmd(ctx: &Ctx, threshold: f64, turns: &[String], context: Option<&Path>) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Failure::Usage(format!("--threshold {threshold} outside [0, 1]")));
    }
    let turns: Vec<Turn> = match context {
        Some(p) => read_json(p)?,
        None => turns.iter().map(|t| parse_turn(t)).collect::<Result<_, _>>()?,
    };
    if turns.is_empty() {
        return Err(Failure::Usage("give the context with --turn or --context".into()));
    }
    let (model, catalog) = model_and_catalog(ctx)?;
    let r = suggest(&model, &catalog, &turns, threshold)?;
    println!("{}", serde_json::to_string_pretty(&r).map_err(|e| Failure::Data(e.to_string()))?);
    Ok(())
}

fn synth(out: &Path, conversations: usize, seed: u64, dim: usize, vector_seed: u64) -> Result<(), Failure> {
    if conversations == 0 || dim == 0 {
        return Err(Failure::Usage("--conversations and --vector-dim must be positive".into()));
    }
    let syn = synthetic::generate(&SyntheticConfig {
        conversations,
        seed,
        ..Default::default()
    });
    let ws = Workspace {
        dir: out.to_path_buf(),
        config_hash: String::new(),
        force: false,
    };
    let boxed = |e: std::io::Error| -> Box<dyn std::error::Error> { Box::new(e) };
    ws.write_with("conversations.jsonl", |w| {
        replyclass_core::corpus::write_conversations(&mut *w, &syn.conversations).map_err(boxed)
    })?;
    let vectors = synthetic::word_vectors(&syn.vocabulary(), dim, vector_seed);
    ws.write_with("word_vectors.txt", |w| synthetic::write_word_vectors(&mut *w, &vectors).map_err(boxed))?;
    let truth = Truth {
        classes: synthetic::class_names().iter().map(|s| s.to_string()).collect(),
        response_class: syn.response_class.clone(),
    };
    ws.write_with("truth.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &truth)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    let placeholders: Vec<String> = synthetic::PLACEHOLDERS.iter().map(|p| format!("{p:?}")).collect();
    let config = format!(
        "seed = {seed}\nplaceholders = [{}]\n\n[paths]\ncorpus = \"conversations.jsonl\"\nword_vectors = \"word_vectors.txt\"\nwork_dir = \"work\"\n",
        placeholders.join(", ")
    );
    ws.write_with(DEFAULT_CONFIG, |w: &mut BufWriter<File>| {
        w.write_all(config.as_bytes())?;
        Ok(())
    })?;
    println!(
        "synth: {} conversations, {} classes, {} word vectors -> {}",
        syn.conversations.len(),
        truth.classes.len(),
        vectors.len(),
        out.display()
    );
    Ok(())
}

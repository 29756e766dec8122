use std::fs;
use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hscn_core::author::{batch_generate, Author, AuthorBackend, BackendKind, BatchOptions, GenerationRequest};
use hscn_core::corpus::{dedup, read_dataset, write_dataset, DatasetRecord, HsCnPair, PairId, StoreState};
use hscn_core::metrics::{
    corpus_bleu, edit_rate, repetition_rate, type_distribution, CorpusStats, NoveltyIndex, NoveltyVariant, RRConfig,
};
use hscn_core::orchestrator::service::{serve, AppState, ServiceConfig};
use hscn_core::orchestrator::{
    Action, ExpertDecision, Pipeline, PipelineConfig, ReportOptions, ReviewerMode, Sampling,
};
use hscn_core::review::{
    aggregate, build_classifier_dataset, evaluate_classifier, evaluate_scores, read_labeled, write_labeled,
    BaselineConfig, BaselineScorer, ClassifierDatasetSpec, RemoteScorer, ReviewScore, Score, TierCounts,
};
use hscn_core::text::NormalizationPolicy;
use hscn_core::{Error, Result};

#[derive(Parser)]
#[command(name = "hscn", version, about = "Curation pipeline for hate-speech / counter-narrative pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus metrics over dataset files.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Candidate generation.
    #[command(subcommand)]
    Author(AuthorCmd),
    /// Crowd review: aggregation and scoring against a store.
    #[command(subcommand)]
    Review(ReviewCmd),
    /// Machine reviewer: data, training, evaluation, filtering.
    #[command(subcommand)]
    Clf(ClfCmd),
    /// Expert queue.
    #[command(subcommand)]
    Expert(ExpertCmd),
    /// Experiment lifecycle.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    /// Store maintenance and export.
    #[command(subcommand)]
    Store(StoreCmd),
    /// Effort report for one condition.
    Report {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        condition: ReviewerMode,
        #[arg(long)]
        experiment: Option<String>,
        #[arg(long)]
        table: bool,
    },
    /// Run the REST service.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value_t = 300)]
        claim_timeout_s: u64,
    },
}

#[derive(Args)]
struct StatsOut {
    /// Also print a human-readable table to stderr.
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct DataArgs {
    /// Line-delimited dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Drop repeated CNs before measuring.
    #[arg(long)]
    dedup: bool,
    /// Compare texts case-sensitively.
    #[arg(long)]
    case_sensitive: bool,
}

impl DataArgs {
    fn policy(&self) -> NormalizationPolicy {
        if self.case_sensitive {
            NormalizationPolicy::case_sensitive()
        } else {
            NormalizationPolicy::default()
        }
    }

    fn load(&self) -> Result<Vec<HsCnPair>> {
        let pairs = read_dataset(&self.data)?;
        Ok(if self.dedup { dedup(&pairs, &self.policy()) } else { pairs })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Max,
    Mean,
}

impl From<VariantArg> for NoveltyVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Max => NoveltyVariant::Max,
            VariantArg::Mean => NoveltyVariant::Mean,
        }
    }
}

#[derive(Subcommand)]
enum MetricsCmd {
    Rr {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1000)]
        window: usize,
        #[arg(long, default_value_t = 5)]
        shuffles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: StatsOut,
    },
    Novelty {
        #[command(flatten)]
        data: DataArgs,
        /// Training dataset the candidates are compared with.
        #[arg(long)]
        train: PathBuf,
        #[arg(long, value_enum, default_value = "max")]
        variant: VariantArg,
        #[command(flatten)]
        out: StatsOut,
    },
    /// Corpus BLEU; references are the CNs written for the same HS.
    Bleu {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        refs: PathBuf,
        #[command(flatten)]
        out: StatsOut,
    },
    /// Mean edit rate between machine CNs and their post-edits, matched by
    /// the post-edit's `replaces` id or, failing that, by position.
    Hter {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long)]
        edited: PathBuf,
        #[command(flatten)]
        out: StatsOut,
    },
    Types {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: StatsOut,
    },
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "stub")]
    backend: BackendArg,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    in_flight: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Stub,
    Remote,
}

impl BackendArgs {
    fn backend(&self) -> AuthorBackend {
        AuthorBackend {
            kind: match self.backend {
                BackendArg::Stub => BackendKind::Stub,
                BackendArg::Remote => BackendKind::Remote,
            },
            endpoint: self.endpoint.clone(),
            timeout_ms: self.timeout_ms,
            retries: self.retries,
            stub_seed: self.seed,
            max_in_flight: self.in_flight,
        }
    }
}

#[derive(Subcommand)]
enum AuthorCmd {
    /// Generate candidates for every HS in a file (one per line).
    Run {
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        hs_file: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        top_p: f64,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 128)]
        max_new_tokens: usize,
        #[arg(long, default_value_t = 1)]
        n_samples: usize,
        #[arg(long, default_value = "g")]
        id_prefix: String,
        /// Write candidates here (default stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also append the candidates to this store.
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReviewCmd {
    /// Tier statistics over a file of scores (one JSON score per line).
    Aggregate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        table: bool,
    },
    /// Next pair for an annotator.
    Next {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        annotator: String,
    },
    Score {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        pair: String,
        #[arg(long)]
        annotator: String,
        #[arg(long)]
        score: u8,
        #[arg(long)]
        bad_hs: bool,
        #[arg(long, default_value_t = 0)]
        elapsed_ms: u64,
        #[arg(long)]
        key: Option<String>,
    },
}

#[derive(Subcommand)]
enum ClfCmd {
    /// Build the labeled classifier dataset from a store.
    BuildData {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        verbatim: usize,
        #[arg(long, default_value_t = 50)]
        random_hs: usize,
        #[arg(long)]
        no_balance: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    TrainBaseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 15)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Eval {
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long)]
        test: PathBuf,
    },
    /// Score every generated pair of a store that has no machine score yet.
    Filter {
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long)]
        store: PathBuf,
    },
}

#[derive(Args)]
struct ScorerArgs {
    /// Baseline model file.
    #[arg(long, conflicts_with = "endpoint")]
    model: Option<PathBuf>,
    /// Remote scorer endpoint.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Subcommand)]
enum ExpertCmd {
    Next {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        operator: String,
    },
    Decision {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        pair: String,
        #[arg(long)]
        operator: String,
        #[arg(long, value_enum)]
        action: ActionArg,
        #[arg(long)]
        edited_cn: Option<String>,
        #[arg(long, default_value_t = 0)]
        elapsed_ms: u64,
        #[arg(long)]
        key: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ActionArg {
    Validate,
    Edit,
    Discard,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    Open {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        experiment: String,
        #[arg(long, value_delimiter = ',', required = true)]
        operators: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Route {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        condition: ReviewerMode,
        /// Pairs per operator; 0 routes every passing pair.
        #[arg(long, default_value_t = 20)]
        session_size: usize,
        #[arg(long)]
        uniform: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Close {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        experiment: String,
    },
}

#[derive(Subcommand)]
enum StoreCmd {
    /// Add pairs from a dataset file.
    Ingest {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Accepted pairs with post-edits applied.
    ExportAccepted {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay the log from scratch and compare with the loaded state.
    Verify {
        #[arg(long)]
        store: PathBuf,
    },
    Snapshot {
        #[arg(long)]
        store: PathBuf,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn emit(stats: &CorpusStats, out: &StatsOut) -> Result<()> {
    print_json(stats)?;
    if out.table {
        eprint!("{}", stats.table());
    }
    Ok(())
}

fn cns(pairs: &[HsCnPair]) -> Vec<&str> {
    pairs.iter().map(|p| p.counter_narrative.as_str()).collect()
}

fn metrics(cmd: MetricsCmd) -> Result<()> {
    match cmd {
        MetricsCmd::Rr {
            data,
            window,
            shuffles,
            seed,
            out,
        } => {
            let pairs = data.load()?;
            let cfg = RRConfig {
                window_words: window,
                window_stride: window,
                shuffles,
                rng_seed: seed,
                ..RRConfig::default()
            };
            let stats = CorpusStats {
                n_pairs: pairs.len(),
                rr: Some(repetition_rate(&cns(&pairs), &cfg, &data.policy())?),
                ..Default::default()
            };
            emit(&stats, &out)
        }
        MetricsCmd::Novelty {
            data,
            train,
            variant,
            out,
        } => {
            let pairs = data.load()?;
            let training = read_dataset(&train)?;
            let index = NoveltyIndex::new(&cns(&training), data.policy())?;
            let stats = CorpusStats {
                n_pairs: pairs.len(),
                novelty: index.corpus_novelty(&cns(&pairs), variant.into()),
                novelty_variant: Some(variant.into()),
                ..Default::default()
            };
            emit(&stats, &out)
        }
        MetricsCmd::Bleu { data, refs, out } => {
            let policy = data.policy();
            let pairs = data.load()?;
            let refs = read_dataset(&refs)?;
            let mut by_hs: std::collections::HashMap<String, Vec<&str>> = Default::default();
            for r in &refs {
                by_hs.entry(policy.normalize(&r.hate_speech)).or_default().push(&r.counter_narrative);
            }
            let references: Vec<Vec<&str>> = pairs
                .iter()
                .map(|p| by_hs.get(&policy.normalize(&p.hate_speech)).cloned().unwrap_or_default())
                .collect();
            let stats = CorpusStats {
                n_pairs: pairs.len(),
                bleu: Some(corpus_bleu(&cns(&pairs), &references, &policy)?),
                ..Default::default()
            };
            emit(&stats, &out)
        }
        MetricsCmd::Hter { machine, edited, out } => {
            let machine = read_dataset(&machine)?;
            let edited = read_dataset(&edited)?;
            let policy = NormalizationPolicy::default();
            let mut rates = Vec::with_capacity(edited.len());
            for (i, e) in edited.iter().enumerate() {
                let original = match &e.replaces {
                    Some(id) => machine.iter().find(|m| &m.id == id),
                    None => machine.get(i),
                }
                .ok_or(Error::MissingReference(i))?;
                rates.push(edit_rate(&original.counter_narrative, &e.counter_narrative, &policy)?);
            }
            let stats = CorpusStats {
                n_pairs: rates.len(),
                mean_hter: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
                ..Default::default()
            };
            emit(&stats, &out)
        }
        MetricsCmd::Types { data, out } => {
            let pairs = data.load()?;
            let stats = CorpusStats {
                n_pairs: pairs.len(),
                type_distribution: type_distribution(&pairs)?,
                ..Default::default()
            };
            emit(&stats, &out)
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = io::BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(line.trim().to_owned());
        }
    }
    Ok(out)
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn author(cmd: AuthorCmd) -> Result<()> {
    let AuthorCmd::Run {
        backend,
        hs_file,
        top_p,
        temperature,
        max_new_tokens,
        n_samples,
        id_prefix,
        out,
        store,
    } = cmd;
    let hs_list = read_lines(&hs_file)?;
    let template = GenerationRequest {
        prompt: String::new(),
        max_new_tokens,
        top_p,
        temperature,
        n_samples,
    };
    let cfg = backend.backend();
    let author = Author::from_backend(&cfg)?;
    let rt = runtime()?;
    let batch = rt.block_on(async {
        if cfg.kind == BackendKind::Remote {
            author.health_probe().await?;
        }
        let opts = BatchOptions {
            max_in_flight: cfg.max_in_flight,
            ..BatchOptions::new(id_prefix)
        };
        Ok::<_, Error>(batch_generate(&hs_list, &author, &template, &opts).await)
    })?;
    if let Some(dir) = store {
        let mut pipeline = Pipeline::open(dir)?;
        for pair in &batch.pool {
            pipeline.add_pair(pair.clone(), None)?;
        }
        pipeline.log().write_snapshot()?;
    }
    match out {
        Some(path) => write_dataset(&path, &batch.pool)?,
        None => {
            for p in &batch.pool {
                print_json(&DatasetRecord::from(p))?;
            }
        }
    }
    eprintln!("{}", serde_json::to_string(&batch.report)?);
    Ok(())
}

fn review(cmd: ReviewCmd) -> Result<()> {
    match cmd {
        ReviewCmd::Aggregate { scores, table } => {
            let mut by_pair: std::collections::BTreeMap<PairId, Vec<ReviewScore>> = Default::default();
            for (i, line) in read_lines(&scores)?.into_iter().enumerate() {
                let s: ReviewScore = serde_json::from_str(&line).map_err(|e| Error::CorruptRecord {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                by_pair.entry(s.pair_id.clone()).or_default().push(s);
            }
            let tiers = by_pair.values().map(|s| aggregate(s)).collect::<Result<Vec<_>>>()?;
            let report = TierCounts::from_tiers(tiers).report();
            print_json(&report)?;
            if table {
                eprint!("{report}");
            }
            Ok(())
        }
        ReviewCmd::Next { store, annotator } => {
            let pipeline = Pipeline::open(store)?;
            match pipeline.next_for_annotator(&annotator, |_| 0) {
                Some(id) => print_json(&DatasetRecord::from(pipeline.state().pair(&id)?)),
                None => Ok(()),
            }
        }
        ReviewCmd::Score {
            store,
            pair,
            annotator,
            score,
            bad_hs,
            elapsed_ms,
            key,
        } => {
            let mut pipeline = Pipeline::open(store)?;
            let seq = pipeline.submit_score(
                ReviewScore {
                    pair_id: PairId::new(pair),
                    annotator_id: annotator,
                    score: Score::new(score)?,
                    bad_hs,
                    elapsed_ms,
                },
                key,
            )?;
            print_json(&serde_json::json!({ "seq": seq }))
        }
    }
}

enum AnyScorer {
    Baseline(BaselineScorer),
    Remote(RemoteScorer),
}

impl ScorerArgs {
    fn load(&self) -> Result<AnyScorer> {
        match (&self.model, &self.endpoint) {
            (Some(path), None) => {
                let mut m = BaselineScorer::load(path)?;
                m.config.threshold = self.threshold;
                Ok(AnyScorer::Baseline(m))
            }
            (None, Some(url)) => Ok(AnyScorer::Remote(
                RemoteScorer::new(url.clone(), Duration::from_secs(30), 2)?.with_threshold(self.threshold),
            )),
            _ => Err(Error::InvalidConfig("pass exactly one of --model or --endpoint".into())),
        }
    }
}

fn clf(cmd: ClfCmd) -> Result<()> {
    match cmd {
        ClfCmd::BuildData {
            store,
            out,
            verbatim,
            random_hs,
            no_balance,
            seed,
        } => {
            let pipeline = Pipeline::open(store)?;
            let spec = ClassifierDatasetSpec {
                verbatim_hs_hs: verbatim,
                random_hs_pairs: random_hs,
                balance: !no_balance,
                rng_seed: seed,
                ..Default::default()
            };
            let data = build_classifier_dataset(pipeline.state(), &spec)?;
            write_labeled(&out, &data.pairs)?;
            print_json(&data.manifest)
        }
        ClfCmd::TrainBaseline {
            data,
            model,
            epochs,
            seed,
        } => {
            let pairs = read_labeled(&data)?;
            let cfg = BaselineConfig {
                epochs,
                rng_seed: seed,
                ..Default::default()
            };
            let scorer = BaselineScorer::train(&pairs, cfg)?;
            scorer.save(&model)?;
            print_json(&evaluate_classifier(&scorer, &pairs)?)
        }
        ClfCmd::Eval { scorer, test } => {
            let test = read_labeled(&test)?;
            let eval = match scorer.load()? {
                AnyScorer::Baseline(m) => evaluate_classifier(&m, &test)?,
                AnyScorer::Remote(r) => {
                    let scores = runtime()?.block_on(async {
                        r.health_probe().await?;
                        let mut out = Vec::with_capacity(test.len());
                        for (i, p) in test.iter().enumerate() {
                            let id = p.pair_id.clone().unwrap_or_else(|| PairId::new(format!("test-{i}")));
                            out.push(r.score(id, &p.hs, &p.cn).await?);
                        }
                        Ok::<_, Error>(out)
                    })?;
                    evaluate_scores(&scores, &test)?
                }
            };
            print_json(&eval)
        }
        ClfCmd::Filter { scorer, store } => {
            let mut pipeline = Pipeline::open(store)?;
            let todo: Vec<PairId> = pipeline
                .state()
                .generated()
                .filter(|p| !pipeline.state().machine_scores.contains_key(&p.id))
                .map(|p| p.id.clone())
                .collect();
            match scorer.load()? {
                AnyScorer::Baseline(m) => {
                    pipeline.machine_review(&m, &todo)?;
                }
                AnyScorer::Remote(r) => {
                    let rt = runtime()?;
                    rt.block_on(r.health_probe())?;
                    for id in &todo {
                        let pair = pipeline.state().pair(id)?.clone();
                        let score = rt.block_on(r.score(id.clone(), &pair.hate_speech, &pair.counter_narrative))?;
                        pipeline.record_machine_score(score)?;
                    }
                }
            }
            pipeline.log().write_snapshot()?;
            let passed = todo
                .iter()
                .filter(|id| pipeline.state().machine_scores[*id].label.is_suitable())
                .count();
            print_json(&serde_json::json!({ "scored": todo.len(), "suitable": passed }))
        }
    }
}

fn expert(cmd: ExpertCmd) -> Result<()> {
    match cmd {
        ExpertCmd::Next { store, operator } => {
            let pipeline = Pipeline::open(store)?;
            match pipeline.next_for_operator(&operator) {
                Some(item) => {
                    let pair = pipeline.state().pair(&item.pair_id)?;
                    print_json(&serde_json::json!({
                        "pair_id": item.pair_id,
                        "hs": pair.hate_speech,
                        "cn": pair.counter_narrative,
                        "experiment": item.experiment,
                        "condition": item.condition,
                    }))
                }
                None => Ok(()),
            }
        }
        ExpertCmd::Decision {
            store,
            pair,
            operator,
            action,
            edited_cn,
            elapsed_ms,
            key,
        } => {
            let mut pipeline = Pipeline::open(store)?;
            let seq = pipeline.record_decision(
                ExpertDecision {
                    pair_id: PairId::new(pair),
                    operator_id: operator,
                    action: match action {
                        ActionArg::Validate => Action::Validate,
                        ActionArg::Edit => Action::Edit,
                        ActionArg::Discard => Action::Discard,
                    },
                    edited_cn,
                    elapsed_ms,
                },
                key,
            )?;
            print_json(&serde_json::json!({ "seq": seq }))
        }
    }
}

fn experiment(cmd: ExperimentCmd) -> Result<()> {
    match cmd {
        ExperimentCmd::Open {
            store,
            experiment,
            operators,
            seed,
        } => {
            let seq = Pipeline::open(store)?.open_experiment(&experiment, operators, seed)?;
            print_json(&serde_json::json!({ "seq": seq }))
        }
        ExperimentCmd::Route {
            store,
            experiment,
            condition,
            session_size,
            uniform,
            seed,
        } => {
            let mut pipeline = Pipeline::open(store)?;
            let cfg = PipelineConfig {
                reviewer_mode: condition,
                sampling: if uniform { Sampling::Uniform } else { Sampling::Stratified },
                session_size: (session_size > 0).then_some(session_size),
                rng_seed: seed,
            };
            let plan = pipeline.route_condition(&experiment, &cfg, None)?;
            print_json(&serde_json::json!({
                "passed": plan.passed.len(),
                "filtered_out": plan.filtered_out.len(),
                "routed": plan.assignments.len(),
            }))
        }
        ExperimentCmd::Close { store, experiment } => {
            let seq = Pipeline::open(store)?.close_experiment(&experiment)?;
            print_json(&serde_json::json!({ "seq": seq }))
        }
    }
}

fn store(cmd: StoreCmd) -> Result<()> {
    match cmd {
        StoreCmd::Ingest { store, data } => {
            let mut pipeline = Pipeline::open(store)?;
            let pairs = read_dataset(&data)?;
            for p in &pairs {
                pipeline.add_pair(p.clone(), None)?;
            }
            pipeline.log().write_snapshot()?;
            print_json(&serde_json::json!({ "added": pairs.len() }))
        }
        StoreCmd::ExportAccepted { store, out } => {
            let pipeline = Pipeline::open(store)?;
            let accepted: Vec<HsCnPair> = pipeline.state().accepted().cloned().collect();
            match out {
                Some(path) => write_dataset(&path, &accepted),
                None => accepted.iter().try_for_each(|p| print_json(&DatasetRecord::from(p))),
            }
        }
        StoreCmd::Verify { store } => {
            let pipeline = Pipeline::open(store)?;
            let replayed = StoreState::replay(pipeline.log().records())?;
            let same = replayed.export()? == pipeline.state().export()?;
            let conservation = pipeline.state().check_conservation();
            print_json(&serde_json::json!({
                "events": pipeline.log().records().len(),
                "replay_matches": same,
                "conservation": conservation.as_ref().err(),
            }))?;
            if same && conservation.is_ok() {
                Ok(())
            } else {
                Err(Error::CorruptRecord {
                    line: 0,
                    reason: "replay or conservation check failed".into(),
                })
            }
        }
        StoreCmd::Snapshot { store } => Pipeline::open(store)?.log().write_snapshot(),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Metrics(cmd) => metrics(cmd),
        Command::Author(cmd) => author(cmd),
        Command::Review(cmd) => review(cmd),
        Command::Clf(cmd) => clf(cmd),
        Command::Expert(cmd) => expert(cmd),
        Command::Experiment(cmd) => experiment(cmd),
        Command::Store(cmd) => store(cmd),
        Command::Report {
            store,
            condition,
            experiment,
            table,
        } => {
            let pipeline = Pipeline::open(store)?;
            let experiment = match experiment {
                Some(e) => e,
                None => pipeline.resolve_experiment(condition)?,
            };
            let report = pipeline.effort_report(&experiment, condition, &ReportOptions::default())?;
            print_json(&report)?;
            if table {
                eprintln!("{report}");
            }
            Ok(())
        }
        Command::Serve {
            store,
            addr,
            backend,
            claim_timeout_s,
        } => {
            let pipeline = Pipeline::open(store)?;
            let author = Author::from_backend(&backend.backend())?;
            let config = ServiceConfig {
                claim_timeout: Duration::from_secs(claim_timeout_s),
                ..Default::default()
            };
            tracing::info!(%addr, "serving");
            runtime()?.block_on(serve(addr, AppState::new(pipeline, Some(author), config)))
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": { "code": e.code(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}

//! Command-line front end. Data goes to stdout, logs to stderr and artifacts
//! to the output directory. Exit codes: 0 success, 1 domain error, 2 usage.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::Config;
use crate::embed::{
    embed_dataset, fit_for_threshold, grid_search_threshold, EmbeddingProvider, FixtureProvider, HttpEmbeddingProvider,
    ProjectionCheckpoint, Projector,
};
use crate::eval::{evaluate_pipeline, kfold, PipelineConfig};
use crate::harness::{
    apply_categories, benchmark, load_categories, load_dataset, load_records, CacheMode, ChatClient, HttpBackend,
    RunSettings, Sandbox, TaskInstance,
};
use crate::metrics::{self, MetricWeights};
use crate::nn::{derive_seed, holdout};
use crate::pets::{template_dump, ExemplarPool, ExemplarSet, PetId};
use crate::rank::{build_ranked_dataset, RankedDataset};
use crate::select::{self, rank_query, route, LabeledExample, RankedExample, SelectorCheckpoint, SelectorModel};

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Debug, Parser)]
#[command(name = "pet-router", version, about = "Route coding tasks to prompting techniques")]
struct Cli {
    /// TOML experiment manifest.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the manifest.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the benchmark sweep; overrides the manifest.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Complexity metrics of a Python file as JSON.
    Analyze {
        file: PathBuf,
        /// Combined-score weights `loc,cyclomatic,volume,cognitive,mi`.
        #[arg(long)]
        weights: Option<MetricWeights>,
    },
    /// Print every prompt template.
    Templates,
    /// Run every PET on every task and store execution records.
    Benchmark {
        /// Record directory [default: <output_dir>/records].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated PET subset.
        #[arg(long, value_delimiter = ',')]
        pets: Option<Vec<PetId>>,
    },
    /// Score records and write the ranked dataset as JSONL.
    Rank {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        weights: Option<MetricWeights>,
    },
    /// Train the projection head, grid-searching the split threshold.
    TrainEmbed {
        #[arg(long)]
        ranked: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Train at this threshold instead of searching the grid.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Train the PET classifier on projected embeddings.
    TrainSelect {
        #[arg(long)]
        ranked: Option<PathBuf>,
        #[arg(long)]
        projection: Option<PathBuf>,
        /// Feed base embeddings straight to the classifier.
        #[arg(long, conflicts_with = "projection")]
        no_projection: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank PETs for one task and optionally run the top one.
    Select {
        #[arg(long)]
        task: String,
        #[arg(long)]
        task_id: Option<String>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        projection: Option<PathBuf>,
        #[arg(long)]
        execute: bool,
    },
    /// Cross-validate every method and write the report.
    Evaluate {
        #[arg(long)]
        ranked: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        /// Execution records, for the exemplar leakage check.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Ctx {
    cfg: Config,
    seed: u64,
    jobs: usize,
}

impl Ctx {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn weights(&self, flag: Option<MetricWeights>) -> MetricWeights {
        flag.unwrap_or(self.cfg.metrics.weights)
    }

    fn tasks(&self) -> CliResult<Vec<TaskInstance>> {
        let path = self.cfg.dataset.path.as_ref().ok_or("the manifest needs dataset.path")?;
        let mut tasks = load_dataset(path, self.cfg.dataset.format)?;
        if let Some(c) = &self.cfg.dataset.categories {
            apply_categories(&mut tasks, &load_categories(c)?);
        }
        Ok(tasks)
    }

    fn client(&self) -> CliResult<ChatClient> {
        let llm = &self.cfg.llm;
        let backend = || -> CliResult<Box<HttpBackend>> {
            let endpoint = llm.endpoint.clone().ok_or("the manifest needs llm.endpoint")?;
            Ok(Box::new(HttpBackend::from_env(endpoint).with_retries(llm.max_retries, Duration::from_millis(500))))
        };
        let cache = || llm.cache_dir.clone().ok_or("the manifest needs llm.cache_dir");
        Ok(match llm.cache_mode {
            CacheMode::Replay => ChatClient::replay(cache()?),
            CacheMode::Record => ChatClient::record(backend()?, cache()?),
            CacheMode::Live => ChatClient::live(backend()?),
        })
    }

    fn sandbox(&self) -> CliResult<Sandbox> {
        Ok(Sandbox::new(&self.cfg.sandbox.python, Duration::from_secs_f64(self.cfg.sandbox.timeout_secs))?)
    }

    fn settings(&self) -> RunSettings {
        RunSettings {
            model: self.cfg.llm.model.clone(),
            temperature: self.cfg.llm.temperature,
            max_debug_rounds: self.cfg.llm.max_debug_rounds,
        }
    }

    /// The sweep's fixed exemplar set, drawn away from every dataset id.
    fn exemplars(&self, tasks: &[TaskInstance]) -> CliResult<Option<ExemplarSet>> {
        let Some(path) = &self.cfg.exemplars.pool else { return Ok(None) };
        let pool = ExemplarPool::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let exclude: BTreeSet<String> = tasks.iter().map(|t| t.id.clone()).collect();
        Ok(Some(pool.draw(self.cfg.exemplars.seed, &exclude)?))
    }

    fn provider(&self, ranked: Option<&RankedDataset>) -> CliResult<Box<dyn EmbeddingProvider>> {
        let e = &self.cfg.embedding;
        if let Some(path) = &e.fixture {
            let mut p = FixtureProvider::load(path)?;
            if let Some(r) = ranked {
                p = p.with_prompt_aliases(r);
            }
            return Ok(Box::new(p));
        }
        let endpoint = e.endpoint.clone().ok_or("the manifest needs embedding.fixture or embedding.endpoint")?;
        Ok(Box::new(HttpEmbeddingProvider::from_env(endpoint, e.model.clone())))
    }

    fn ranked(&self, path: Option<PathBuf>) -> CliResult<RankedDataset> {
        let path = path.unwrap_or_else(|| self.out("ranked.jsonl"));
        Ok(RankedDataset::read_jsonl(&path, self.cfg.metrics.weights)?)
    }
}

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    std::fs::write(path, body).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(v: &serde_json::Value) -> CliResult<()> {
    emit(&(serde_json::to_string_pretty(v)? + "\n"))
}

fn projector_from(path: Option<&Path>) -> CliResult<Projector> {
    match path {
        None => Ok(Projector::Identity),
        Some(p) => Ok(Projector::Trained(ProjectionCheckpoint::load(p)?.projection()?)),
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    cfg.seed = seed;
    let jobs = cli.jobs.unwrap_or(cfg.jobs).max(1);
    let ctx = Ctx { cfg, seed, jobs };

    match cli.command {
        Command::Analyze { file, weights } => {
            let source = std::fs::read_to_string(&file).map_err(|e| format!("{}: {e}", file.display()))?;
            let report = metrics::analyze(&source, &ctx.weights(weights))?;
            emit(&(serde_json::to_string_pretty(&report)? + "\n"))?;
        }
        Command::Templates => {
            let mut dump = String::new();
            for (pet, stage, text) in template_dump() {
                dump.push_str(&format!("## {} / {stage:?}\n{text}\n\n", pet.display_name()));
            }
            emit(&dump)?;
        }
        Command::Benchmark { out, pets } => {
            let tasks = ctx.tasks()?;
            let pets = pets.unwrap_or_else(|| PetId::ALL.to_vec());
            let out = out.unwrap_or_else(|| ctx.out("records"));
            let client = ctx.client()?;
            let exemplars = ctx.exemplars(&tasks)?;
            let sandbox = ctx.sandbox()?;
            let report =
                benchmark(&tasks, &pets, &client, exemplars.as_ref(), &ctx.settings(), &sandbox, &out, ctx.jobs)?;
            print_json(&json!({
                "tasks": tasks.len(),
                "records": report.records.len(),
                "reused_tasks": report.reused_tasks,
                "failures": report.failures,
                "backend_calls": client.backend_calls(),
            }))?;
            if !report.failures.is_empty() {
                return Err(format!("{} (task, PET) runs failed", report.failures.len()).into());
            }
        }
        Command::Rank { records, out, weights } => {
            let tasks = ctx.tasks()?;
            let records = load_records(&records.unwrap_or_else(|| ctx.out("records")))?;
            let ranked = build_ranked_dataset(&records, &tasks, &ctx.weights(weights), &PetId::ALL)?;
            let out = out.unwrap_or_else(|| ctx.out("ranked.jsonl"));
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            ranked.write_jsonl(&out)?;
            let mut labels: BTreeMap<String, usize> = BTreeMap::new();
            for r in &ranked.records {
                *labels.entry(r.label.to_string()).or_default() += 1;
            }
            print_json(&json!({ "records": ranked.records.len(), "dropped": tasks.len() - ranked.records.len(), "labels": labels }))?;
        }
        Command::TrainEmbed { ranked, out, threshold } => {
            let ranked = ctx.ranked(ranked)?;
            let embeddings = embed_dataset(ctx.provider(Some(&ranked))?.as_ref(), &ranked)?;
            let tcfg = crate::embed::TripletConfig { seed: ctx.seed, ..ctx.cfg.triplet.clone() };
            let (fit, candidates) = match threshold {
                Some(t) => (fit_for_threshold(&embeddings, &ranked.records, t, &tcfg, 0)?, Vec::new()),
                None => {
                    let g = grid_search_threshold(&embeddings, &ranked.records, &tcfg)?;
                    (g.fit, g.candidates)
                }
            };
            let out = out.unwrap_or_else(|| ctx.out("projection.json"));
            let ck = ProjectionCheckpoint::new(&fit.projection, fit.threshold, tcfg.margin);
            write_file(&out, &(serde_json::to_string(&ck)? + "\n"))?;
            print_json(&json!({
                "threshold": fit.threshold,
                "best_epoch": fit.best_epoch,
                "initial_validation_accuracy": fit.initial_validation_accuracy,
                "validation_accuracy": fit.validation_accuracy,
                "candidates": candidates,
                "history": fit.history,
            }))?;
        }
        Command::TrainSelect { ranked, projection, no_projection, out } => {
            let ranked = ctx.ranked(ranked)?;
            let embeddings = embed_dataset(ctx.provider(Some(&ranked))?.as_ref(), &ranked)?;
            let projector = if no_projection {
                Projector::Identity
            } else {
                projector_from(Some(&projection.unwrap_or_else(|| ctx.out("projection.json"))))?
            };
            let scfg = select::SelectTrainConfig { seed: ctx.seed, ..ctx.cfg.select.clone() };
            let pool = ranked.pet_pool.clone();
            let (_, val_ids) = holdout(&ranked.ids(), scfg.validation_fraction, derive_seed(scfg.seed, "selector-holdout", 0));
            let val_ids: BTreeSet<String> = val_ids.into_iter().collect();
            let (mut train, mut validation) = (Vec::new(), Vec::new());
            for r in &ranked.records {
                let x = projector.apply(&embeddings[&r.task_id])?;
                if val_ids.contains(&r.task_id) {
                    validation.push(RankedExample { x, relevance: r.relevance(&pool) });
                } else {
                    let label = pool.iter().position(|p| *p == r.label).ok_or("label outside the PET pool")?;
                    train.push(LabeledExample { x, label });
                }
            }
            let input = crate::embed::validate(&embeddings)?.ok_or("no embeddings")?;
            let model = SelectorModel::new(
                projector.output_dim(input),
                scfg.hidden,
                pool,
                derive_seed(scfg.seed, "selector-init", 0),
            );
            let fit = select::train(model, &train, &validation, &scfg)?;
            let out = out.unwrap_or_else(|| ctx.out("selector.json"));
            write_file(&out, &(serde_json::to_string(&SelectorCheckpoint::new(&fit.model))? + "\n"))?;
            print_json(&json!({ "best_epoch": fit.best_epoch, "initial_loss": fit.initial_loss, "history": fit.history }))?;
        }
        Command::Select { task, task_id, checkpoint, projection, execute } => {
            let model = SelectorCheckpoint::load(&checkpoint)?.model()?;
            let projector = projector_from(projection.as_deref())?;
            let default_ranked = ctx.out("ranked.jsonl");
            let ranked = match default_ranked.exists() {
                true => Some(ctx.ranked(Some(default_ranked))?),
                false => None,
            };
            let provider = ctx.provider(ranked.as_ref())?;
            let ranking_json = |ranking: &[(PetId, f64)]| -> serde_json::Value {
                ranking.iter().map(|(p, prob)| json!({ "pet": p, "probability": prob })).collect()
            };
            if !execute {
                let ranking = rank_query(&model, &projector, provider.as_ref(), task_id.as_deref(), &task)?;
                print_json(&json!({ "ranking": ranking_json(&ranking) }))?;
                return Ok(());
            }
            let tasks = ctx.tasks()?;
            let found = tasks
                .iter()
                .find(|t| task_id.as_deref().map_or(t.prompt == task, |id| t.id == id))
                .ok_or("--execute needs a dataset task matching --task or --task-id")?;
            let routed = route(
                &model,
                &projector,
                provider.as_ref(),
                found,
                &ctx.client()?,
                ctx.exemplars(&tasks)?.as_ref(),
                &ctx.settings(),
                &ctx.sandbox()?,
            )?;
            print_json(&json!({
                "ranking": ranking_json(&routed.ranking),
                "pet": routed.record.pet,
                "passed": routed.record.passed,
                "total_tokens": routed.record.total_tokens,
                "rounds": routed.record.rounds.len(),
                "final_code": routed.record.final_code,
            }))?;
        }
        Command::Evaluate { ranked, folds, records, out } => {
            let ranked = ctx.ranked(ranked)?;
            let embeddings = embed_dataset(ctx.provider(Some(&ranked))?.as_ref(), &ranked)?;
            let cats_path = ctx.cfg.dataset.categories.as_ref().ok_or("the manifest needs dataset.categories")?;
            let categories = load_categories(cats_path)?;
            let records_dir = records.unwrap_or_else(|| ctx.out("records"));
            let exemplar_ids: BTreeSet<String> = if records_dir.is_dir() {
                load_records(&records_dir)?.into_iter().flat_map(|r| r.exemplar_ids).collect()
            } else {
                log::warn!("no records at {}; exemplar leakage is not checked", records_dir.display());
                BTreeSet::new()
            };
            let plan = kfold(&ranked.ids(), folds.unwrap_or(ctx.cfg.eval.folds), ctx.seed)?;
            let pcfg = PipelineConfig {
                label: ctx.cfg.eval.label.clone(),
                triplet: ctx.cfg.triplet.clone(),
                select: ctx.cfg.select.clone(),
            };
            let output = evaluate_pipeline(&ranked, &embeddings, &categories, &plan, &pcfg, &exemplar_ids)?;
            let out = out.unwrap_or_else(|| ctx.cfg.output_dir.clone());
            let md = output.report.to_markdown();
            write_file(&out.join("report.md"), &md)?;
            write_file(&out.join("report.json"), &output.report.to_json())?;
            emit(&md)?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

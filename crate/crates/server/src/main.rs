use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use itemsmith_core::agreement::{cohen_kappa, ContingencyTable, KappaReport};
use itemsmith_core::bank::{BankStore, ItemBank, ReuseMode};
use itemsmith_core::item_model::{read_item_lines, write_item_lines, ItemStatus, McqItem};
use itemsmith_core::pipeline::{AuditBundle, GateDecision, GenerationInput, Pipeline, SeriesMode, SessionStore, Stage};
use itemsmith_core::prompts::Templates;
use itemsmith_core::providers::{ProviderConfig, TranscriptLog};
use itemsmith_core::quality::{deterministic_verdicts, Lexicon};
use itemsmith_core::similarity::{comparison_text, pairwise_matrix, FeatureKind, FeatureSet, TokenPolicy, TverskyParams};
use itemsmith_server::{router, AppState};

#[derive(Parser)]
#[command(name = "itemsmith", version, about = "Generate, review and bank multiple-choice items")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Providers {
    /// Provider configuration (TOML).
    #[arg(long, env = "ITEMSMITH_CONFIG")]
    config: Option<PathBuf>,
    /// Use the bundled mock backend for every role.
    #[arg(long)]
    mock: bool,
    /// Directory of prompt template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[command(flatten)]
        providers: Providers,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "0.0.0.0")]
        host: String,
        #[arg(long, default_value = "itemsmith-data")]
        data_dir: PathBuf,
        /// Bearer token required on every request except /health.
        #[arg(long, env = "ITEMSMITH_TOKEN", hide_env_values = true)]
        token: Option<String>,
        /// How long a request waits on provider work before answering 202.
        #[arg(long, default_value_t = 20_000)]
        stage_timeout_ms: u64,
    },
    /// Run a prototype session, or a one-step run, from a generation input.
    Generate {
        #[command(flatten)]
        providers: Providers,
        /// GenerationInput JSON.
        #[arg(long)]
        input: PathBuf,
        /// Single prompt, no gates; writes drafts.
        #[arg(long)]
        one_step: bool,
        /// JSON array of gate decisions applied in order.
        #[arg(long)]
        decisions: Option<PathBuf>,
        /// Item store to write (one JSON object per line).
        #[arg(long)]
        out: PathBuf,
        /// Audit bundle to write.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Generate a series from an accepted prototype item.
    Series {
        #[command(flatten)]
        providers: Providers,
        /// Prototype item JSON.
        #[arg(long)]
        prototype: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::ExampleBased)]
        mode: Mode,
        #[arg(long, default_value_t = 5)]
        count: u32,
        /// Accept every parsed candidate instead of leaving them under review.
        #[arg(long)]
        accept_all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deterministic criteria checks over an item store.
    Lint {
        #[arg(long)]
        items: PathBuf,
    },
    /// Pairwise similarity matrix as CSV.
    Similarity {
        #[arg(long, value_enum, default_value_t = Kind::Linguistic)]
        kind: Kind,
        /// Item store, for linguistic features.
        #[arg(long)]
        items: Option<PathBuf>,
        /// Item id to feature list JSON, for contextual features.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        /// Decimal places; full precision when absent.
        #[arg(long)]
        decimals: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cohen's kappa for a 2x2 table given as a,b,c,d.
    Kappa {
        #[arg(value_delimiter = ',', required = true)]
        table: Vec<u64>,
    },
    /// Item bank operations.
    #[command(subcommand)]
    Bank(BankCommand),
}

#[derive(Subcommand)]
enum BankCommand {
    /// Write exam sheets and answer keys for n variants.
    Compile {
        #[arg(long)]
        bank: PathBuf,
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        allow_reuse: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    ExampleBased,
    ConceptDerived,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Linguistic,
    Contextual,
}

fn pipeline(p: &Providers, transcripts: Option<&Path>) -> Result<Pipeline> {
    let (config, base) = match (&p.config, p.mock) {
        (Some(path), false) => (ProviderConfig::from_file(path)?, path.parent().map(Path::to_path_buf)),
        _ => (ProviderConfig::builtin_mock(), None),
    };
    let mut hub = config.build(base.as_deref())?;
    if let Some(path) = transcripts {
        hub = hub.with_transcripts(Arc::new(TranscriptLog::with_file(path)?));
    }
    let templates = match &p.templates {
        Some(dir) => Templates::with_overrides(dir)?,
        None => Templates::bundled(),
    };
    Ok(Pipeline::new(Arc::new(hub), Arc::new(templates)))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    serde_json::from_str(&text).with_context(|| path.display().to_string())
}

fn read_items(path: &Path) -> Result<Vec<McqItem>> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    read_item_lines(&text).with_context(|| path.display().to_string())
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve { providers, port, host, data_dir, token, stage_timeout_ms } => {
            std::fs::create_dir_all(&data_dir)?;
            let pipeline = pipeline(&providers, Some(&data_dir.join("transcripts.jsonl")))?;
            let sessions = SessionStore::open(&data_dir.join("sessions"))?;
            let banks = BankStore::open(&data_dir.join("banks"))?;
            let state = AppState::new(Arc::new(pipeline), Arc::new(sessions), Arc::new(banks))
                .with_token(token)
                .with_stage_timeout(Duration::from_millis(stage_timeout_ms));
            let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                .await
                .with_context(|| format!("binding {host}:{port}"))?;
            tracing::info!(addr = %listener.local_addr()?, "listening");
            axum::serve(listener, router(Arc::new(state)))
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
        }
        Command::Generate { providers, input, one_step, decisions, out, audit } => {
            let input: GenerationInput = read_json(&input)?;
            let pipeline = pipeline(&providers, None)?;
            let session = if one_step {
                let outcome = pipeline.run_one_step(input).await?;
                for (n, report) in &outcome.reports {
                    eprintln!("item {n} not parsed: {report}");
                }
                outcome.session
            } else {
                let mut session = pipeline.start_prototype_session(input).await?;
                let decisions: Vec<GateDecision> = match &decisions {
                    Some(path) => read_json(path)?,
                    None => Vec::new(),
                };
                for d in decisions {
                    if session.stage == Stage::Failed {
                        break;
                    }
                    pipeline.submit_gate_decision(&mut session, d).await?;
                }
                session
            };
            if let Some(f) = &session.failure {
                bail!("session failed at {:?}: {}", f.stage, f.error);
            }
            std::fs::write(&out, write_item_lines(session.items.values()))?;
            eprintln!("session {} at {:?}, {} items", session.id, session.stage, session.items.len());
            if let Some(path) = audit {
                let bundle = AuditBundle::build(&session, pipeline.hub().transcripts());
                std::fs::write(path, serde_json::to_string_pretty(&bundle)?)?;
            }
        }
        Command::Series { providers, prototype, mode, count, accept_all, out } => {
            let prototype: McqItem = read_json(&prototype)?;
            let mode = match mode {
                Mode::ExampleBased => SeriesMode::ExampleBased,
                Mode::ConceptDerived => SeriesMode::ConceptDerived,
            };
            let pipeline = pipeline(&providers, None)?;
            let session = pipeline.start_series_session(&prototype, mode, count).await?;
            if let Some(f) = &session.failure {
                bail!("series failed: {}", f.error);
            }
            let mut items: Vec<McqItem> = session.items.values().cloned().collect();
            if accept_all {
                for item in &mut items {
                    item.status = ItemStatus::Accepted;
                }
            }
            std::fs::write(&out, write_item_lines(&items))?;
        }
        Command::Lint { items } => {
            let lexicon = Lexicon::bundled();
            let mut failures = 0;
            for item in read_items(&items)? {
                for v in deterministic_verdicts(&item.body, &lexicon) {
                    let mark = if v.passed() { "pass" } else { "FAIL" };
                    failures += usize::from(!v.passed());
                    println!("{}\t{}\t{:?}\t{}\t{}", item.id, v.criterion, v.aspect, mark, v.rationale);
                }
            }
            if failures > 0 {
                std::process::exit(1);
            }
        }
        Command::Similarity { kind, items, features, theta, alpha, beta, decimals, out } => {
            let params = TverskyParams { theta, alpha, beta };
            let (sets, kind) = match kind {
                Kind::Linguistic => {
                    let path = items.context("--items is required for linguistic similarity")?;
                    let policy = TokenPolicy::default();
                    let sets = read_items(&path)?
                        .iter()
                        .map(|i| FeatureSet::linguistic(i.id.clone(), &comparison_text(&i.body, &policy), &policy))
                        .collect::<Result<Vec<_>, _>>()?;
                    (sets, FeatureKind::Linguistic)
                }
                Kind::Contextual => {
                    let path = features.context("--features is required for contextual similarity")?;
                    let map: serde_json::Map<String, serde_json::Value> = read_json(&path)?;
                    let mut sets = Vec::new();
                    for (id, list) in map {
                        let list: Vec<String> = serde_json::from_value(list).with_context(|| id.clone())?;
                        sets.push(FeatureSet::contextual(itemsmith_core::item_model::ItemId(id), list));
                    }
                    (sets, FeatureKind::Contextual)
                }
            };
            let csv = pairwise_matrix(&sets, kind, &params)?.to_csv(decimals);
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Kappa { table } => {
            if table.len() != 4 {
                bail!("expected four counts a,b,c,d, got {}", table.len());
            }
            let t = ContingencyTable::new(table[0], table[1], table[2], table[3]);
            println!("{}", KappaReport { label: "agreement", table: t, result: cohen_kappa(&t) });
        }
        Command::Bank(BankCommand::Compile { bank, n, seed, allow_reuse, out }) => {
            let text = std::fs::read_to_string(&bank).with_context(|| bank.display().to_string())?;
            let bank = ItemBank::import_json(&text)?;
            let mode = if allow_reuse { ReuseMode::AllowReuse } else { ReuseMode::Strict };
            std::fs::create_dir_all(&out)?;
            for v in bank.compile_variants(n, seed, mode)? {
                std::fs::write(out.join(format!("{}.txt", v.id)), bank.exam_sheet(&v)?)?;
                std::fs::write(out.join(format!("{}-key.txt", v.id)), bank.answer_key(&v)?)?;
                println!("{}: {}", v.id, v.item_ids.iter().map(|i| i.as_str()).collect::<Vec<_>>().join(" "));
            }
        }
    }
    Ok(())
}

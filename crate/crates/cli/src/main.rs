//! `medrag` command-line entry point.
//!
//! Exit codes: 0 success, 1 bad usage or bad data, 2 an upstream service
//! (LLM, encoder, transcriber) failed.

use std::fs;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use medrag_core::embedding::{EncoderKind, HashingEncoder};
use medrag_core::eval::{evaluate, load_cases, render_table, EvalError, Modality};
use medrag_core::kg::{DiagnosticKg, HierarchyMode, KgConfig, RuleBasedExtractor};
use medrag_core::llm::{HttpLlmClient, HttpLlmConfig, LlmClient, ReplayLlm};
use medrag_core::orchestrator::{ConsultationSession, EvidenceKind, OracleLlm, PipelineConfig, TurnMode, TurnOutcome};
use medrag_core::{Corpus, Engine, HttpEndpoint, Kg};
use medrag_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "medrag", version, about = "Knowledge-graph guided diagnostic assistant")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the diagnostic knowledge graph from a labelled EHR corpus.
    BuildKg {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = KgConfig::default().delta_sub)]
        delta_sub: f64,
        #[arg(long, default_value_t = KgConfig::default().delta_cat)]
        delta_cat: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
        mode: ModeArg,
        #[arg(long, default_value_t = medrag_core::embedding::DEFAULT_OFFLINE_DIMENSION)]
        dimension: usize,
    },
    /// Answer one query through the recommendation path and print JSON.
    Ask {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        text: String,
        #[command(flatten)]
        llm: LlmArgs,
        #[arg(long, default_value_t = PipelineConfig::default().k)]
        k: usize,
    },
    /// Score L1/L2/L3 accuracy over a JSONL file of cases.
    Eval {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        llm: LlmArgs,
        #[arg(long, value_enum, default_value_t = ModalArg::Text)]
        modal: ModalArg,
        /// Word-drop probability applied to voice transcripts.
        #[arg(long, default_value_t = 0.0)]
        noise_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Row label in the printed table.
        #[arg(long)]
        label: Option<String>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Labels,
    Cluster,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModalArg {
    Text,
    Voice,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LlmKind {
    /// Replays `--fixtures` if given, otherwise echoes the top retrieved diagnosis.
    Stub,
    Http,
}

#[derive(clap::Args)]
struct LlmArgs {
    #[arg(long, value_enum, default_value_t = LlmKind::Stub)]
    llm: LlmKind,
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long, env = "MEDRAG_LLM_URL")]
    llm_url: Option<String>,
    #[arg(long, env = "MEDRAG_LLM_MODEL", default_value = "")]
    llm_model: String,
    #[arg(long, env = "MEDRAG_LLM_TOKEN", hide_env_values = true)]
    llm_token: Option<String>,
}

enum Failure {
    Data(String),
    Upstream(String),
}

impl Failure {
    fn data(e: impl std::fmt::Display) -> Self {
        Failure::Data(e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildKg {
            corpus,
            out,
            delta_sub,
            delta_cat,
            mode,
            dimension,
        } => build_kg(&corpus, &out, delta_sub, delta_cat, mode, dimension),
        Command::Ask { kg, corpus, text, llm, k } => ask(&kg, &corpus, &text, &llm, k),
        Command::Eval {
            cases,
            kg,
            corpus,
            out,
            llm,
            modal,
            noise_rate,
            seed,
            label,
        } => {
            let modality = match modal {
                ModalArg::Text => Modality::Text,
                ModalArg::Voice => Modality::Voice { noise_rate, seed },
            };
            eval(&cases, &kg, &corpus, &out, &llm, modality, label)
        }
        Command::Serve { config } => serve(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Upstream(msg)) => {
            eprintln!("upstream error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn build_kg(corpus: &Path, out: &Path, delta_sub: f64, delta_cat: f64, mode: ModeArg, dimension: usize) -> Result<()> {
    let config = KgConfig {
        delta_sub,
        delta_cat,
        mode: match mode {
            ModeArg::Auto => HierarchyMode::Auto,
            ModeArg::Labels => HierarchyMode::Labels,
            ModeArg::Cluster => HierarchyMode::Cluster,
        },
    };
    config.validate().map_err(Failure::data)?;
    let encoder = HashingEncoder::<f64>::new(dimension);
    let corpus = Corpus::ingest(corpus)
        .and_then(|c| c.embed(&encoder))
        .map_err(Failure::data)?;
    let kg = DiagnosticKg::build(&corpus, &config, &RuleBasedExtractor).map_err(Failure::data)?;
    kg.save(out).map_err(Failure::data)?;
    let [c, s, d, f] = kg.tier_counts();
    println!("4 tiers: {c}/{s}/{d}/{f}");
    println!("{} edges written to {}", kg.edge_count(), out.display());
    Ok(())
}

fn llm_client(args: &LlmArgs) -> Result<Box<dyn LlmClient>> {
    match args.llm {
        LlmKind::Stub => match &args.fixtures {
            Some(path) => Ok(Box::new(ReplayLlm::from_file(path).map_err(Failure::data)?)),
            None => Ok(Box::new(OracleLlm)),
        },
        LlmKind::Http => {
            let url = args
                .llm_url
                .clone()
                .ok_or_else(|| Failure::Data("--llm http needs --llm-url".into()))?;
            Ok(Box::new(HttpLlmClient::new(HttpLlmConfig {
                endpoint: HttpEndpoint {
                    base_url: url,
                    auth_token: args.llm_token.clone(),
                    ..HttpEndpoint::default()
                },
                model: args.llm_model.clone(),
            })))
        }
    }
}

/// Loads the graph and corpus, embedding the corpus with the offline
/// encoder the graph was built with.
fn load_engine(kg: &Path, corpus: &Path, config: PipelineConfig) -> Result<Engine> {
    let kg: Kg = DiagnosticKg::load(kg).map_err(Failure::data)?;
    let descriptor = kg
        .encoder()
        .ok_or_else(|| Failure::Data("graph file records no encoder".into()))?;
    if descriptor.kind != EncoderKind::OfflineDeterministic {
        return Err(Failure::Data(format!(
            "graph was built with remote encoder `{}`; the CLI only runs the offline encoder",
            descriptor.name
        )));
    }
    let encoder = HashingEncoder::<f64>::new(descriptor.dimension);
    let corpus = Corpus::ingest(corpus)
        .and_then(|c| c.embed(&encoder))
        .map_err(Failure::data)?;
    Engine::new(corpus, kg, Arc::new(encoder), config).map_err(Failure::data)
}

fn ask(kg: &Path, corpus: &Path, text: &str, llm: &LlmArgs, k: usize) -> Result<()> {
    if text.trim().is_empty() {
        return Err(Failure::Data("--text is empty".into()));
    }
    if k == 0 {
        return Err(Failure::Data("--k must be at least 1".into()));
    }
    let client = llm_client(llm)?;
    let engine = load_engine(kg, corpus, PipelineConfig { k, ..PipelineConfig::default() })?;
    let mut session = ConsultationSession::new("ask");
    session
        .add_evidence(EvidenceKind::TypedQuery, text)
        .map_err(Failure::data)?;
    match engine.run_turn(&mut session, &*client, TurnMode::RecommendOnly) {
        Ok(TurnOutcome::Recommendation(r)) => {
            println!("{}", serde_json::to_string_pretty(&r).expect("recommendation serializes"));
            Ok(())
        }
        Ok(TurnOutcome::FollowUp(_)) => unreachable!("recommend-only turns never ask"),
        Err(e) if e.is_upstream() => Err(Failure::Upstream(e.to_string())),
        Err(e) => Err(Failure::data(e)),
    }
}

fn eval(
    cases: &Path,
    kg: &Path,
    corpus: &Path,
    out: &Path,
    llm: &LlmArgs,
    modality: Modality,
    label: Option<String>,
) -> Result<()> {
    let cases = load_cases(cases).map_err(Failure::data)?;
    let client = llm_client(llm)?;
    let engine = load_engine(kg, corpus, PipelineConfig::default())?;
    let label = label.unwrap_or_else(|| client.name().to_string());
    let report = evaluate(&engine, &*client, &cases, &label, modality).map_err(|e| match e {
        EvalError::Upstream { .. } => Failure::Upstream(e.to_string()),
        other => Failure::data(other),
    })?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(out, json + "\n").map_err(|e| Failure::Data(format!("{}: {e}", out.display())))?;
    print!("{}", render_table(std::slice::from_ref(&report)));
    Ok(())
}

fn serve(path: &Path) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let config = ServiceConfig::load(path).map_err(Failure::data)?;
    let state = medrag_service::prepare(&config).map_err(Failure::data)?;
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::data)?;
    runtime.block_on(async {
        let listener = medrag_service::bind(&config.bind).await.map_err(Failure::data)?;
        if let Ok(addr) = listener.local_addr() {
            println!("listening on http://{addr}");
        }
        medrag_service::serve(state, listener).await.map_err(Failure::data)
    })
}

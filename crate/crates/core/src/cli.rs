//! Command-line interface. `run` is the default subcommand, so the bare
//! `knight --topic ... --output ...` form executes the full pipeline.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use thiserror::Error;

use crate::config::{Backend, ConfigError, PipelineMode, Settings, StoreKind};
use crate::model::Topic;
use crate::pipeline::{self, PipelineError, Services};
use crate::qgen::McqItem;
use crate::store::{self, DatasetRecord, StoreError};
use crate::validation::validate_items;

#[derive(Debug, Parser)]
#[command(name = "knight", version, about = "Build a topic knowledge graph and generate multi-hop multiple-choice questions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Build the knowledge graph and write a snapshot to --output.
    Build,
    /// Generate questions from a graph snapshot (--input) into --output.
    Generate,
    /// Run the validity gate over a dataset (--input) and write it to --output.
    Validate,
    /// Score a dataset (--input); the report goes to --output or stdout.
    Eval,
    /// Execute the stage set of --mode end to end (default).
    Run,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn mode(s: &str) -> Result<PipelineMode, String> {
    s.parse().map_err(|e: ConfigError| e.to_string())
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Seed term of the graph.
    #[arg(long, global = true)]
    pub topic: Option<String>,
    /// Item format; only multiple-choice is available.
    #[arg(long, global = true, value_parser = ["multiple-choice"])]
    pub prompt: Option<String>,
    /// Maximum graph depth.
    #[arg(long, global = true, env = "KNIGHT_DEPTH", value_parser = positive)]
    pub depth: Option<usize>,
    /// Hop count of generated questions (defaults to --depth).
    #[arg(long, global = true, env = "KNIGHT_LEVEL", value_parser = positive)]
    pub level: Option<usize>,
    /// Number of questions to emit.
    #[arg(long = "num-q", global = true, env = "KNIGHT_NUM_Q", value_parser = positive)]
    pub num_q: Option<usize>,
    /// Dataset (JSON Lines) or snapshot path; sidecars are written next to it.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Snapshot for `generate`, dataset for `validate` and `eval`.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Run the validity gate even in modes without it.
    #[arg(long, global = true)]
    pub validate: bool,
    /// plain, rag, rag_kg, rag_val or knight.
    #[arg(long, global = true, env = "KNIGHT_MODE", value_parser = mode)]
    pub mode: Option<PipelineMode>,
    /// Seed for sampling and the mock backend.
    #[arg(long, global = true, env = "KNIGHT_SEED")]
    pub seed: Option<u64>,
    /// mock (offline fixtures) or network.
    #[arg(long, global = true, env = "KNIGHT_BACKEND", value_parser = ["mock", "network"])]
    pub backend: Option<String>,
    /// Graph store used by `build`.
    #[arg(long, global = true, env = "KNIGHT_STORE", value_parser = ["memory", "bolt"])]
    pub store: Option<String>,
    /// TOML file with [pipeline] and [backend] tables.
    #[arg(long, global = true, env = "KNIGHT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Bound on concurrent backend requests.
    #[arg(long = "max-inflight", global = true, env = "KNIGHT_MAX_INFLIGHT", value_parser = positive)]
    pub max_inflight: Option<usize>,
    /// Print the effective configuration, secrets masked, and exit.
    #[arg(long = "print-config", global = true)]
    pub print_config: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

/// Variables consulted after flags and before the config file.
pub const SECRET_VARS: [&str; 4] = ["OPENAI_API_KEY", "NEO4J_URI", "NEO4J_USER", "NEO4J_PASS"];

/// Merges defaults, the config file, environment and flags, in increasing
/// priority. Flag-level environment variables are already folded into
/// `opts` by the parser.
pub fn resolve_settings(opts: &Options, env: impl Fn(&str) -> Option<String>) -> Result<Settings, ConfigError> {
    let mut s = match &opts.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let b = &mut s.backend;
    for (var, slot) in SECRET_VARS
        .into_iter()
        .zip([&mut b.openai_api_key, &mut b.neo4j_uri, &mut b.neo4j_user, &mut b.neo4j_pass])
    {
        if let Some(v) = env(var).filter(|v| !v.is_empty()) {
            *slot = Some(v);
        }
    }
    let p = &mut s.pipeline;
    if let Some(d) = opts.depth {
        p.d_max = d;
    }
    if opts.level.is_some() {
        p.level = opts.level;
    }
    if let Some(n) = opts.num_q {
        p.num_q = n;
    }
    if let Some(m) = opts.mode {
        p.pipeline_mode = m;
    }
    if let Some(seed) = opts.seed {
        p.rng_seed = seed;
    }
    if let Some(n) = opts.max_inflight {
        p.max_inflight = n;
    }
    if opts.validate {
        p.validate = true;
    }
    match opts.backend.as_deref() {
        Some("mock") => s.backend.backend = Backend::Mock,
        Some("network") => s.backend.backend = Backend::Network,
        _ => {}
    }
    match opts.store.as_deref() {
        Some("memory") => s.backend.store = StoreKind::Memory,
        Some("bolt") => s.backend.store = StoreKind::Bolt,
        _ => {}
    }
    s.pipeline.validate()?;
    Ok(s)
}

fn usage_error(kind: ErrorKind, message: &str) -> clap::Error {
    Cli::command().error(kind, message)
}

fn required<'a, T>(value: &'a Option<T>, flag: &str, sub: &str) -> Result<&'a T, clap::Error> {
    value
        .as_ref()
        .ok_or_else(|| usage_error(ErrorKind::MissingRequiredArgument, &format!("`{sub}` requires {flag}")))
}

/// Checks per-subcommand required flags before any work starts.
fn check_required(cmd: Command, opts: &Options) -> Result<(), clap::Error> {
    if opts.print_config {
        return Ok(());
    }
    match cmd {
        Command::Run | Command::Build => {
            let name = if cmd == Command::Run { "run" } else { "build" };
            let topic = required(&opts.topic, "--topic", name)?;
            if topic.trim().is_empty() {
                return Err(usage_error(ErrorKind::InvalidValue, "--topic must not be empty"));
            }
            required(&opts.output, "--output", name)?;
        }
        Command::Generate | Command::Validate => {
            let name = if cmd == Command::Generate { "generate" } else { "validate" };
            required(&opts.input, "--input", name)?;
            required(&opts.output, "--output", name)?;
        }
        Command::Eval => {
            required(&opts.input, "--input", "eval")?;
        }
    }
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, StoreError> {
    store::read_jsonl(path)
}

fn execute(cmd: Command, opts: &Options, settings: &Settings, out: &mut dyn Write) -> Result<(), CliError> {
    let config = &settings.pipeline;
    let services = Services::from_settings(&settings.backend, config)?;
    match cmd {
        Command::Run => {
            let topic = Topic::new(opts.topic.clone().unwrap_or_default()).map_err(PipelineError::from)?;
            let output = opts.output.as_deref().expect("checked");
            let result = pipeline::run(&services, config, &topic)?;
            let written = pipeline::write_run(&result, config, output)?;
            writeln!(
                out,
                "{} items ({} requested, mode {}) written to {}",
                result.report.emitted,
                config.num_q,
                config.pipeline_mode,
                written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
            )?;
        }
        Command::Build => {
            let topic = Topic::new(opts.topic.clone().unwrap_or_default()).map_err(PipelineError::from)?;
            let output = opts.output.as_deref().expect("checked");
            let build = pipeline::build_graph(&services, config, &topic)?;
            let rejects = pipeline::sidecar(output, "curation_rejects.jsonl");
            pipeline::write_graph(&build, &topic.name, config, output, &rejects)?;
            if settings.backend.store == StoreKind::Bolt {
                let mut graph_store = store::open_store(&settings.backend)?;
                store::save_graph(graph_store.as_mut(), &build.graph)?;
            }
            writeln!(
                out,
                "{} nodes, {} edges written to {}",
                build.graph.node_count(),
                build.graph.edge_count(),
                output.display()
            )?;
        }
        Command::Generate => {
            let snapshot = store::load_snapshot(opts.input.as_deref().expect("checked"))?;
            let graph = snapshot.graph()?;
            let topic = opts.topic.clone().unwrap_or(snapshot.topic);
            let generated = pipeline::generate_from_graph(&services, config, &graph, &topic, config.validate)?;
            let records: Vec<DatasetRecord> =
                generated.items.iter().map(|i| DatasetRecord::new(i, Some(&graph), Default::default())).collect();
            let output = opts.output.as_deref().expect("checked");
            store::write_jsonl(&records, output)?;
            writeln!(out, "{} items written to {}", records.len(), output.display())?;
        }
        Command::Validate => {
            let records = read_dataset(opts.input.as_deref().expect("checked"))?;
            let mut items: Vec<McqItem> = records.iter().map(DatasetRecord::to_item).collect();
            let summary = validate_items(&services.gateway, config, &mut items).map_err(PipelineError::from)?;
            let records: Vec<DatasetRecord> = records
                .into_iter()
                .zip(&items)
                .map(|(mut r, i)| {
                    r.validation = i.flags.clone();
                    r
                })
                .collect();
            let output = opts.output.as_deref().expect("checked");
            store::write_jsonl(&records, output)?;
            writeln!(
                out,
                "{} of {} items kept ({} rule failures, {} critic errors); written to {}",
                summary.kept,
                summary.checked,
                summary.rule_failures,
                summary.critic_errors,
                output.display()
            )?;
        }
        Command::Eval => {
            let records = read_dataset(opts.input.as_deref().expect("checked"))?;
            let items: Vec<McqItem> = records.iter().map(DatasetRecord::to_item).collect();
            let report = crate::metrics::evaluate(&items, &services.metric_adapters(), config.nli_threshold);
            let text = serde_json::to_string_pretty(&report).map_err(StoreError::from)? + "\n";
            match &opts.output {
                Some(path) => {
                    std::fs::write(path, text)?;
                    writeln!(out, "metrics for {} items written to {}", items.len(), path.display())?;
                }
                None => out.write_all(text.as_bytes())?,
            }
        }
    }
    Ok(())
}

/// Value errors are rendered without a usage line; add one.
fn with_usage(text: String) -> String {
    if text.contains("Usage:") {
        text
    } else {
        format!("{text}\n{}\n", Cli::command().render_usage())
    }
}

/// Parses `args` and runs. Returns the process exit code: 0 on success,
/// 1 for configuration or backend failures, 2 for usage errors.
pub fn main_with<I, T>(args: I, env: impl Fn(&str) -> Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{}", with_usage(text));
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    let cmd = cli.command.unwrap_or(Command::Run);
    if let Err(e) = check_required(cmd, &cli.opts) {
        let _ = write!(err, "{}", with_usage(e.render().to_string()));
        return 2;
    }
    let settings = match resolve_settings(&cli.opts, env) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    if cli.opts.print_config {
        let _ = write!(out, "{}", settings.redacted_toml());
        return 0;
    }
    match execute(cmd, &cli.opts, &settings, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = main_with(std::iter::once("knight").chain(args.iter().copied()), |_| None, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_two() {
        for args in [
            &["--topic", "Biology", "--depth", "0", "--output", "x.jsonl"][..],
            &["--topic", "Biology", "--mode", "hybrid", "--output", "x.jsonl"],
            &["--topic", "Biology", "--prompt", "free-text", "--output", "x.jsonl"],
            &["--output", "x.jsonl"],
            &["eval"],
        ] {
            let (code, _, err) = run_args(args);
            assert_eq!(code, 2, "{args:?}");
            assert!(err.contains("Usage"), "{err}");
        }
    }

    #[test]
    fn print_config_masks_and_applies_flags() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("k.toml");
        std::fs::write(&file, "[pipeline]\nd_max = 3\nnum_q = 4\n[backend]\nopenai_api_key = \"sk-file\"\n").unwrap();
        let (code, out, _) = run_args(&["--print-config", "--config", file.to_str().unwrap(), "--num-q", "7"]);
        assert_eq!(code, 0);
        assert!(out.contains("d_max = 3"));
        assert!(out.contains("num_q = 7"));
        assert!(out.contains(crate::config::REDACTED) && !out.contains("sk-file"));
    }

    #[test]
    fn env_sits_between_flags_and_file() {
        let opts = Options { config: None, ..Default::default() };
        let s = resolve_settings(&opts, |k| (k == "NEO4J_URI").then(|| "bolt://h:1".to_string())).unwrap();
        assert_eq!(s.backend.neo4j_uri.as_deref(), Some("bolt://h:1"));
    }

    #[test]
    fn missing_config_file_exits_one() {
        let (code, _, err) = run_args(&["--print-config", "--config", "/nonexistent/k.toml"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error:"));
    }
}

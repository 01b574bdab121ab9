mod backends;
mod commands;
mod config;
mod errors;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use config::{FileConfig, FlagValues, Settings};

/// Controllable lexical simplification toolkit.
#[derive(Parser, Debug)]
#[command(name = "lexsimp", version, about)]
struct Cli {
    /// TOML file with sidecar_url, freq_dir, embed_model and jobs.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Base URL of the model sidecar [env: LEXSIMP_SIDECAR_URL]
    #[arg(long, global = true)]
    sidecar_url: Option<String>,
    /// Directory holding freq.<lang>.txt word lists [env: LEXSIMP_FREQ_DIR]
    #[arg(long, global = true)]
    freq_dir: Option<PathBuf>,
    /// Sidecar embedding model for the SS token (default: local hashing
    /// embedder).
    #[arg(long, global = true)]
    embed_model: Option<String>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Instance count and sentence length statistics.
    Stats(commands::StatsArgs),
    /// Seeded train/validation/test split.
    Split(commands::SplitArgs),
    /// Training pairs with control tokens, one per gold substitute.
    Preprocess(commands::PreprocessArgs),
    /// Masked-LM candidates for every instance.
    MlmCandidates(commands::MlmCandidatesArgs),
    /// Candidate substitutes under fixed token values.
    Generate(commands::GenerateArgs),
    /// Metric report for a prediction file against gold.
    Score(commands::ScoreArgs),
    /// Random search over WL/WR/WS/SS values on a validation set.
    SearchTokens(commands::SearchArgs),
    /// Order backends by Potential@K.
    RankBackends(commands::RankArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(|e| errors::UsageError(format!("{e:#}")))?,
        None => FileConfig::default(),
    };
    let flags = FlagValues {
        sidecar_url: cli.sidecar_url,
        freq_dir: cli.freq_dir,
        embed_model: cli.embed_model,
        jobs: cli.jobs,
    };
    let settings = Settings::resolve(flags, file, |key| std::env::var(key).ok());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(settings.jobs).build()?;
    pool.install(|| match &cli.command {
        Command::Stats(a) => commands::stats(a),
        Command::Split(a) => commands::split(a),
        Command::Preprocess(a) => commands::preprocess(a, &settings),
        Command::MlmCandidates(a) => commands::mlm_candidates(a, &settings),
        Command::Generate(a) => commands::generate(a, &settings),
        Command::Score(a) => commands::score(a),
        Command::SearchTokens(a) => commands::search_tokens(a, &settings),
        Command::RankBackends(a) => commands::rank_backends(a, &settings),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::from(errors::EXIT_OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(errors::exit_code(&e))
        }
    }
}

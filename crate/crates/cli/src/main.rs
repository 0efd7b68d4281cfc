use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use seekersim_core::config::RuntimeConfig;
use seekersim_core::Error;

mod evaluate;
mod simulate;

#[derive(Parser, Debug)]
#[command(name = "seekersim", version, about = "Simulated counseling help-seeker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Let configured counselor backends talk to the seekers.
    Simulate(SimulateArgs),
    /// Score transcripts.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Overrides {
    /// Runtime config (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_dynamic_evolution: bool,
    #[arg(long)]
    pub no_long_term_memory: bool,
}

impl Overrides {
    pub fn load(&self) -> Result<RuntimeConfig, CliError> {
        let mut cfg = RuntimeConfig::load(&self.config).map_err(|e| CliError::config(e.in_stage("config")))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.perturbation.rng_seed = None;
        }
        if self.no_dynamic_evolution {
            cfg.ablation.dynamic_evolution = false;
        }
        if self.no_long_term_memory {
            cfg.ablation.long_term_memory = false;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Output root; transcripts go to `<out>/<counselor>/<seeker>/`.
    /// Defaults to `paths.archive`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub rounds: usize,
    #[arg(long, default_value_t = 1)]
    pub sessions: usize,
    /// Restrict to these seeker ids.
    #[arg(long = "seeker", value_delimiter = ',')]
    pub seekers: Vec<String>,
    /// Restrict to these counselor names.
    #[arg(long = "counselor", value_delimiter = ',')]
    pub counselors: Vec<String>,
    /// Ignore the counselor's end token and always run every round.
    #[arg(long)]
    pub no_end_token: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provider {
    Exact,
    Lexical,
    Embedding,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Anthropomorphism,
    Rsd,
    Fidelity,
    Ltm,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of simulated transcripts.
    #[arg(long)]
    pub transcripts: PathBuf,
    /// Real-seeker references: transcript directory, `.jsonl` or plain text.
    #[arg(long)]
    pub references: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Provider::Lexical)]
    pub provider: Provider,
    #[arg(long)]
    pub embedding_url: Option<String>,
    #[arg(long)]
    pub embedding_model: Option<String>,
    /// Environment variable holding the embedding API key.
    #[arg(long)]
    pub embedding_key_env: Option<String>,
    /// Fraction of candidate/reference pairs scored, in (0, 1].
    #[arg(long, default_value_t = 0.1)]
    pub sample_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "anthropomorphism,rsd")]
    pub metrics: Vec<Metric>,
    /// Runtime config; needed for the judge-based metrics.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long = "seeker", value_delimiter = ',')]
    pub seekers: Vec<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Overrides `service.bind`.
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub trainer_mode: bool,
    #[arg(long)]
    pub ttl_secs: Option<u64>,
    /// Overrides `paths.archive`.
    #[arg(long)]
    pub archive: Option<PathBuf>,
}

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_EMPTY_CORPUS: u8 = 3;
pub const EXIT_INCOMPLETE: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn config(e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_CONFIG, e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Config(_) | Error::Format { .. } => EXIT_CONFIG,
            Error::EmptyCorpus(_) => EXIT_EMPTY_CORPUS,
            _ => EXIT_FAILURE,
        };
        CliError::new(code, e.to_string())
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: runtime: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let result = rt.block_on(async {
        match cli.command {
            Command::Simulate(a) => simulate::run(a).await,
            Command::Eval(a) => evaluate::run(a).await,
            Command::Serve(a) => serve(a).await,
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

async fn serve(args: ServeArgs) -> Result<(), CliError> {
    let mut cfg = args.overrides.load()?;
    if let Some(b) = args.bind {
        cfg.service.bind = b;
    }
    if args.trainer_mode {
        cfg.service.trainer_mode = true;
    }
    if let Some(t) = args.ttl_secs {
        cfg.service.ttl_secs = t;
    }
    if let Some(a) = args.archive {
        cfg.paths.archive = Some(a);
    }
    let bind = cfg.service.bind.clone();
    let state = seekersim_server::AppState::from_config(cfg).map_err(|e| CliError::from(e.in_stage("engine")))?;
    let listener = tokio::net::TcpListener::bind(&bind)
        .await
        .map_err(|e| CliError::config(format!("bind {bind}: {e}")))?;
    eprintln!(
        "listening on {} ({} seekers, trainer mode {})",
        listener.local_addr().map(|a| a.to_string()).unwrap_or(bind),
        state.seekers().len(),
        if state.trainer_mode() { "on" } else { "off" }
    );
    seekersim_server::serve(state, listener)
        .await
        .map_err(|e| CliError::new(EXIT_FAILURE, format!("serve: {e}")))
}

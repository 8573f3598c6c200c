use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use a3s::io::{load_dataset, write_labels, write_matrix};
use a3s::strategy::AggregationMode;
use a3s::synth::{gaussian_blobs, BlobConfig};
use a3s::{Dataset, Engine, SessionConfig, SimulatedOracle};
use a3s_service::session::FailureKind;
use a3s_service::{ApiError, SessionManager};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Active clustering with pairwise must-link / cannot-link queries.
#[derive(Parser)]
#[command(name = "a3s", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a dataset, asking a simulated or human oracle.
    Run(Box<RunArgs>),
    /// Serve the session API; sessions are created with `POST /session`.
    Serve {
        #[arg(long, default_value = DEFAULT_LISTEN)]
        listen: String,
    },
    /// Write a labelled Gaussian-blob dataset.
    Synth(SynthArgs),
}

const DEFAULT_LISTEN: &str = "127.0.0.1:8787";
const SHUTDOWN_GRACE: std::time::Duration = std::time::Duration::from_secs(5);

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleKind {
    /// Answers from the ground-truth labels.
    Simulated,
    /// Waits for answers over HTTP.
    Interactive,
}

#[derive(Args)]
struct RunArgs {
    /// Feature matrix, one sample per line, comma or whitespace separated.
    #[arg(long)]
    data: PathBuf,
    /// Ground-truth labels file, or `none`.
    #[arg(long, default_value = "none")]
    labels: String,
    /// One asset path per sample, shown to human annotators.
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OracleKind::Simulated)]
    oracle: OracleKind,
    /// probabilistic, kmeans or agglomerative.
    #[arg(long, default_value = "probabilistic")]
    init: String,
    #[arg(long)]
    budget: Option<usize>,
    /// Candidate pairs re-scored per iteration.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    neighbors: Option<usize>,
    /// Purity threshold, or `auto`.
    #[arg(long, default_value = "auto")]
    tau: String,
    /// Neighbors per cluster used when scoring a merge; 0 uses every pair.
    #[arg(long)]
    knn_agg: Option<usize>,
    /// Overridden by the A3S_SEED environment variable.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra queries for attaching leftover singletons.
    #[arg(long, default_value_t = 0)]
    refine_budget: usize,
    /// Replay `constraints.log` in `--out` before asking anything.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Address for the interactive oracle.
    #[arg(long, default_value = DEFAULT_LISTEN)]
    listen: String,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives `data.csv` and `labels.txt`.
    #[arg(long)]
    out: PathBuf,
}

/// A failure and the exit code it maps to.
struct Exit {
    code: u8,
    message: String,
}

impl Exit {
    const CONFIG: u8 = 2;
    const CONTRADICTION: u8 = 3;
    const IO: u8 = 4;

    fn config(message: impl Into<String>) -> Self {
        Exit {
            code: Self::CONFIG,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Exit {
            code: Self::IO,
            message: message.into(),
        }
    }
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<a3s::Error> for Exit {
    fn from(e: a3s::Error) -> Self {
        let code = match e {
            a3s::Error::Contradiction { .. } => Self::CONTRADICTION,
            a3s::Error::Io { .. } | a3s::Error::Parse { .. } => Self::IO,
            a3s::Error::OracleUnavailable(_) | a3s::Error::BudgetExhausted(_) => 1,
            _ => Self::CONFIG,
        };
        Exit {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ApiError> for Exit {
    fn from(e: ApiError) -> Self {
        let code = match e {
            ApiError::Contradiction(_) => Self::CONTRADICTION,
            ApiError::Internal(_) => 1,
            _ => Self::CONFIG,
        };
        Exit {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(*args),
        Command::Serve { listen } => serve(&listen),
        Command::Synth(args) => synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("a3s: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn seed(flag: Option<u64>) -> Result<Option<u64>, Exit> {
    match std::env::var("A3S_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Exit::config(format!("A3S_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(flag),
    }
}

fn config(args: &RunArgs) -> Result<SessionConfig, Exit> {
    let defaults = SessionConfig::default();
    let tau = match args.tau.as_str() {
        "auto" => None,
        raw => Some(
            raw.parse::<f64>()
                .map_err(|_| Exit::config(format!("--tau takes a number or `auto`, got {raw:?}")))?,
        ),
    };
    let mut config = SessionConfig {
        budget: args.budget.unwrap_or(defaults.budget),
        refine_budget: args.refine_budget,
        max_iterations: args.max_iterations,
        batch: args.batch.unwrap_or(defaults.batch),
        tau,
        neighbors: args.neighbors.unwrap_or(defaults.neighbors),
        aggregation: args.knn_agg.map_or(defaults.aggregation, AggregationMode::from_knn_agg),
        seed: seed(args.seed)?.unwrap_or(defaults.seed),
        out: args.out.clone(),
        resume: args.resume,
        ..defaults
    };
    config.init.method = args.init.parse()?;
    config.validate()?;
    Ok(config)
}

fn dataset(args: &RunArgs) -> Result<Dataset, Exit> {
    let labels = (args.labels != "none").then(|| Path::new(&args.labels));
    Ok(load_dataset(&args.data, labels, args.assets.as_deref())?)
}

fn run(args: RunArgs) -> Result<(), Exit> {
    let config = config(&args)?;
    let dataset = dataset(&args)?;
    match args.oracle {
        OracleKind::Simulated => run_simulated(&dataset, config),
        OracleKind::Interactive => run_interactive(dataset, config, &args.listen),
    }
}

fn run_simulated(dataset: &Dataset, config: SessionConfig) -> Result<(), Exit> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Exit::config("the simulated oracle needs --labels"))?
        .to_vec();
    let refine_budget = config.refine_budget;
    let out = config.out.clone();
    let mut oracle = SimulatedOracle::new(labels);
    let mut engine = Engine::new(dataset, config)?;
    engine.run(&mut oracle)?;
    if refine_budget > 0 {
        engine.refine(&mut oracle, refine_budget)?;
    }
    if let Some(dir) = &out {
        engine.write_outputs(dir)?;
    }
    let summary = serde_json::to_string(&engine.summary()?).map_err(|e| Exit::io(e.to_string()))?;
    println!("{summary}");
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime, Exit> {
    tokio::runtime::Runtime::new().map_err(|e| Exit::io(format!("cannot start runtime: {e}")))
}

fn bind(rt: &tokio::runtime::Runtime, listen: &str) -> Result<tokio::net::TcpListener, Exit> {
    rt.block_on(tokio::net::TcpListener::bind(listen))
        .map_err(|e| Exit::io(format!("cannot listen on {listen}: {e}")))
}

fn run_interactive(dataset: Dataset, config: SessionConfig, listen: &str) -> Result<(), Exit> {
    let rt = runtime()?;
    let listener = bind(&rt, listen)?;
    let addr = listener.local_addr().map_err(|e| Exit::io(e.to_string()))?;
    let manager = SessionManager::new();
    let session = manager.start(dataset, config, &[])?;
    eprintln!("session {} at http://{addr}/session/{}", session.id(), session.id());
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = rt.spawn(a3s_service::serve_until(listener, manager, async {
        stopped.await.ok();
    }));

    let status = session.wait_done();
    // Let the final answer's response reach the annotator.
    stop.send(()).ok();
    rt.block_on(async { tokio::time::timeout(SHUTDOWN_GRACE, server).await.ok() });
    if let Some(failure) = &status.failure {
        let code = match failure.kind {
            FailureKind::Config => Exit::CONFIG,
            FailureKind::Contradiction => Exit::CONTRADICTION,
            FailureKind::Io => Exit::IO,
            FailureKind::Oracle | FailureKind::Other => 1,
        };
        return Err(Exit {
            code,
            message: failure.message.clone(),
        });
    }
    let report = serde_json::json!({
        "stop_reason": status.stop_reason,
        "progress": status.progress,
        "metrics": status.metrics,
    });
    println!("{report}");
    Ok(())
}

fn serve(listen: &str) -> Result<(), Exit> {
    let rt = runtime()?;
    let listener = bind(&rt, listen)?;
    if let Ok(addr) = listener.local_addr() {
        eprintln!("listening on http://{addr}");
    }
    rt.block_on(a3s_service::serve(listener, SessionManager::new()))
        .map_err(|e| Exit::io(e.to_string()))
}

fn synth(args: SynthArgs) -> Result<(), Exit> {
    let ds = gaussian_blobs(&BlobConfig::scaled(args.n, args.k, seed(Some(args.seed))?.unwrap_or(0)))?;
    std::fs::create_dir_all(&args.out).map_err(|e| Exit::io(format!("{}: {e}", args.out.display())))?;
    write_matrix(&args.out.join("data.csv"), ds.features())?;
    write_labels(&args.out.join("labels.txt"), ds.labels().unwrap_or_default())?;
    Ok(())
}

//! `odeal`: synthesise data, check ingestion, run the strategy and
//! initialisation experiments, or serve annotation sessions.
//!
//! Exit codes: 0 success, 2 invalid flags or configuration, 3 I/O or
//! unreadable input data, 4 session failure, 5 target F1 unreachable.
//! `ODEAL_LOG` sets the log filter (default `warn`).

mod config;
mod error;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use odeal::data::write_observations_csv;
use odeal::eval::{cost_reduced, run_init_experiment, run_strategy_experiment, CostComparison};
use odeal_service::Registry;

use config::{read_dataset, Config, Overrides, SynthFlags};
use error::{exit, CliError};

#[derive(Debug, Parser)]
#[command(name = "odeal", version, about = "Outlier-initialised active learning for ocean observation quality control")]
struct Cli {
    /// TOML configuration file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (synth) or directory (experiments).
    #[arg(long, short = 'o', global = true)]
    out: Option<PathBuf>,
    /// Seed for synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic Argo-like dataset as CSV.
    Synth(SynthArgs),
    /// Parse a CSV and summarise it.
    IngestCheck {
        /// Observation CSV
        path: PathBuf,
    },
    /// Paired uncertainty-vs-baseline strategy comparison.
    Experiment(ExperimentArgs),
    /// Outlier-built vs random initial set: labels needed to reach a target F1.
    InitCompare(InitCompareArgs),
    /// Run the HTTP annotation service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Synthetic rows
    #[arg(long)]
    n: Option<usize>,
    /// Synthetic erroneous fraction, strictly between 0 and 1
    #[arg(long, value_parser = parse_rate)]
    error_rate: Option<f64>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Observation CSV; otherwise `[dataset]` or --n/--error-rate.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthetic rows
    #[arg(long)]
    n: Option<usize>,
    /// Synthetic erroneous fraction, strictly between 0 and 1
    #[arg(long, value_parser = parse_rate)]
    error_rate: Option<f64>,
}

#[derive(Debug, Args)]
struct SessionArgs {
    #[arg(long, value_parser = ["gbdt", "knn"])]
    classifier: Option<String>,
    /// Baseline strategy (experiment) or the query strategy of both arms (init-compare).
    #[arg(long, value_parser = ["uncertainty", "random"])]
    strategy: Option<String>,
    /// Shared initial-set method (experiment) or the outlier arm (init-compare).
    #[arg(long, value_parser = ["random", "lof", "iforest", "ocsvm"])]
    init: Option<String>,
    /// Queries per cycle.
    #[arg(long)]
    k: Option<usize>,
    /// Total labels (experiment) or queries allowed after the initial set (init-compare).
    #[arg(long)]
    budget: Option<usize>,
    /// Initial-set size; a comma-separated grid for init-compare.
    #[arg(long, value_delimiter = ',')]
    ni: Option<Vec<usize>>,
    /// Comma-separated session seeds, one paired run each
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Debug, Args)]
struct InitCompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    session: SessionArgs,
    /// Test F1 each arm must reach
    #[arg(long)]
    target_f1: Option<f64>,
    /// Only evaluate the cost reduction of `N_I_lof,N_L_lof,N_I_rd,N_L_rd`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    table3_row: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Listen address; port 0 picks a free port
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Persist datasets and session logs here; in-memory otherwise.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Register this CSV at startup.
    #[arg(long)]
    data: Option<PathBuf>,
}

fn parse_rate(s: &str) -> Result<f64, String> {
    let r: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if r > 0.0 && r < 1.0 {
        Ok(r)
    } else {
        Err(format!("error rate must lie strictly between 0 and 1, got {r}"))
    }
}

fn main() -> ExitCode {
    let filter = tracing_subscriber::EnvFilter::try_from_env("ODEAL_LOG").unwrap_or_else(|_| "warn".into());
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(args) => synth(&config, cli.out, SynthFlags { n: args.n, error_rate: args.error_rate, seed: cli.seed }),
        Command::IngestCheck { path } => ingest_check(&path),
        Command::Experiment(args) => experiment(&config, cli.out, cli.seed, args),
        Command::InitCompare(args) => init_compare(&config, cli.out, cli.seed, args),
        Command::Serve(args) => serve(args),
    }
}

fn overrides(s: SessionArgs, target_f1: Option<f64>) -> Overrides {
    Overrides {
        classifier: s.classifier,
        strategy: s.strategy,
        init: s.init,
        k: s.k,
        budget: s.budget,
        ni: s.ni,
        target_f1,
        seeds: s.seeds,
    }
}

fn out_dir(out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = out.unwrap_or_else(|| PathBuf::from("odeal-out"));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn synth(config: &Config, out: Option<PathBuf>, flags: SynthFlags) -> Result<(), CliError> {
    let out = out.ok_or_else(|| CliError::config("synth needs --out <file>"))?;
    let Some((n, rate, seed)) = config.synth_params(flags)? else {
        return Err(CliError::config("synth needs --n and --error-rate"));
    };
    let ds = odeal::data::generate_synthetic_dataset(n, rate, seed, &odeal::data::ProfileShape::default()).map_err(odeal::Error::from)?;
    write_observations_csv(&ds, &out).map_err(|source| CliError::Data { path: out.clone(), source })?;
    println!("wrote {} rows to {} ({} erroneous, error rate {:.4}%)", ds.len(), out.display(), ds.positives(), 100.0 * ds.error_rate());
    Ok(())
}

fn ingest_check(path: &Path) -> Result<(), CliError> {
    let ds = read_dataset(path)?;
    let records = ds.records();
    let first = records.iter().map(|r| r.timestamp).min().expect("datasets are non-empty");
    let last = records.iter().map(|r| r.timestamp).max().expect("datasets are non-empty");
    println!("rows: {}", ds.len());
    println!("erroneous: {}", ds.positives());
    println!("error rate: {:.4}%", 100.0 * ds.error_rate());
    println!("time span: {} .. {}", first.to_rfc3339(), last.to_rfc3339());
    Ok(())
}

fn experiment(config: &Config, out: Option<PathBuf>, seed: Option<u64>, args: ExperimentArgs) -> Result<(), CliError> {
    let cfg = config.strategy_experiment(&overrides(args.session, None))?;
    let flags = SynthFlags { n: args.data.n, error_rate: args.data.error_rate, seed };
    let ds = config.dataset(args.data.data.as_deref(), flags)?;
    let dir = out_dir(out)?;
    tracing::info!(rows = ds.len(), seeds = cfg.seeds.len(), "running strategy experiment");
    let report = run_strategy_experiment(&ds, &cfg)?;
    write_file(&dir.join("report.json"), |w| w.write_all(report.to_json().as_bytes()))?;
    write_file(&dir.join("curves.csv"), |w| report.write_curves_csv(w))?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_owned(), |x| format!("{x:.4}"));
    println!(
        "{:?} beat {:?} in {}/{} seeds; median F1 difference {}; report in {}",
        report.treatment,
        report.baseline,
        report.treatment_wins,
        report.runs.len(),
        fmt(report.median_f1_diff),
        dir.display()
    );
    audit(&report.audit_violations)
}

fn init_compare(config: &Config, out: Option<PathBuf>, seed: Option<u64>, args: InitCompareArgs) -> Result<(), CliError> {
    if let Some(row) = args.table3_row {
        let [a, b, c, d] = row.as_slice() else {
            return Err(CliError::config("--table3-row takes N_I_lof,N_L_lof,N_I_rd,N_L_rd"));
        };
        let r = cost_reduced(&CostComparison::from_counts(*a, *b, *c, *d)).map_err(odeal::Error::from)?;
        println!("{:.1}%", 100.0 * r);
        return Ok(());
    }
    let cfg = config.init_experiment(&overrides(args.session, args.target_f1))?;
    let flags = SynthFlags { n: args.data.n, error_rate: args.data.error_rate, seed };
    let ds = config.dataset(args.data.data.as_deref(), flags)?;
    let dir = out_dir(out)?;
    tracing::info!(rows = ds.len(), target = cfg.target_f1, "running initialisation comparison");
    let report = run_init_experiment(&ds, &cfg)?;
    write_file(&dir.join("init_report.json"), |w| w.write_all(serde_json::to_string_pretty(&report).expect("serialises").as_bytes()))?;
    write_file(&dir.join("init_costs.csv"), |w| report.write_csv(w))?;
    for s in &report.seeds {
        println!(
            "seed {}: {:?} {}+{} vs {:?} {}+{} labels, cost reduced {:.1}%",
            s.seed,
            s.outlier.method,
            s.outlier.n_initial,
            s.outlier.n_queried,
            s.baseline.method,
            s.baseline.n_initial,
            s.baseline.n_queried,
            100.0 * s.cost_reduced
        );
    }
    if let Some(m) = report.median_cost_reduced {
        println!("median cost reduced {:.1}%; report in {}", 100.0 * m, dir.display());
    }
    audit(&report.audit_violations)
}

fn audit(violations: &[String]) -> Result<(), CliError> {
    if violations.is_empty() {
        return Ok(());
    }
    for v in violations {
        eprintln!("audit: {v}");
    }
    Err(CliError::Audit(violations.len()))
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let registry = match &args.data_dir {
        Some(dir) => Registry::open(dir).map_err(|e| CliError::io(dir, std::io::Error::other(e.to_string())))?,
        None => Registry::in_memory(),
    };
    if let Some(path) = &args.data {
        let info = registry.register_dataset(read_dataset(path)?).map_err(|e| CliError::config(e.body.message))?;
        println!("dataset {} ({} rows)", info.dataset_id, info.rows);
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io("tokio runtime", e))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr).await.map_err(|e| CliError::io(&args.addr, e))?;
        let addr = listener.local_addr().map_err(|e| CliError::io(&args.addr, e))?;
        println!("listening on http://{addr}");
        std::io::stdout().flush().map_err(|e| CliError::io("stdout", e))?;
        odeal_service::serve(listener, Arc::new(registry)).await.map_err(|e| CliError::io(addr.to_string(), e))
    })
}

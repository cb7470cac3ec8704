use std::collections::BTreeSet;
use std::io::BufRead;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use alphalab_core::evaluate::cumulative_excess;
use alphalab_core::pipeline::{OpenOptions, Pipeline, RunOutcome};
use alphalab_core::synthetic::{SyntheticWorld, DEFAULT_SEED};
use alphalab_core::validate::{findings_to_jsonl, run_suite, summary_table, SuiteConfig};
use alphalab_core::{Config, CycleId, Error, MarketDataTable, ProviderId, ReasoningTrace, Result, SignalStrategy};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "alphalab", version, about = "LLM equity-signal harness")]
struct Cli {
    /// Run configuration.
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,
    /// Answer every provider from the mock adapter.
    #[arg(long, global = true)]
    mock: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Prompt, parse, validate and publish signals.
    Run {
        /// Cycle id such as 2025-04; every calendar cycle when omitted.
        #[arg(long)]
        cycle: Vec<String>,
        #[arg(long)]
        provider: Vec<String>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        /// Approve chain-of-thought items without a reviewer (mock runs).
        #[arg(long)]
        auto_review: bool,
    },
    /// Turn recorded signals into long-short returns.
    Backtest,
    /// Compute metrics and write the report grids.
    Report {
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Lint a JSONL corpus of reasoning traces.
    Validate {
        traces: PathBuf,
        /// Write findings as JSONL here instead of stdout.
        #[arg(long)]
        findings: Option<PathBuf>,
    },
    /// Start the review console API on a loopback address.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Check a price file; with a readable config it replaces the configured market data.
    Ingest { prices: PathBuf },
    /// Write a synthetic workspace answered by mock providers.
    Synth {
        dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Naive,
    Structured,
    Cot,
    Filings,
}

impl From<StrategyArg> for SignalStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Naive => Self::Naive,
            StrategyArg::Structured => Self::Structured,
            StrategyArg::Cot => Self::Cot,
            StrategyArg::Filings => Self::Filings,
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            eprintln!("error [{}]: {e}", category.label());
            ExitCode::from(category.exit_code() as u8)
        }
    }
}

fn load_config(path: &Path) -> Result<Config> {
    if !path.is_file() {
        return Err(Error::Config(format!("config file {} not found", path.display())));
    }
    Ok(Config::load(path)?)
}

fn open(cli: &Cli, auto_review: bool) -> Result<Pipeline> {
    let options = OpenOptions { force_mock: cli.mock, auto_review, ..OpenOptions::default() };
    Pipeline::open(load_config(&cli.config)?, options)
}

fn execute(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Run { cycle, provider, strategy, auto_review } => {
            let pipeline = open(&cli, *auto_review)?;
            let cycles: Vec<CycleId> = if cycle.is_empty() {
                pipeline.calendar().iter().map(|c| c.id.clone()).collect()
            } else {
                cycle.iter().map(|c| CycleId::from(c.as_str())).collect()
            };
            let providers: Vec<ProviderId> = if provider.is_empty() {
                pipeline.config().providers.iter().map(|p| p.id.clone()).collect()
            } else {
                provider.iter().map(|p| ProviderId::from(p.as_str())).collect()
            };
            let outcomes = match strategy {
                None => pipeline.run_all(Some(&cycles), Some(&providers))?,
                Some(s) => {
                    let mut out = Vec::new();
                    for c in &cycles {
                        for p in &providers {
                            out.push(pipeline.run(c, p, (*s).into())?);
                        }
                    }
                    out
                }
            };
            for o in &outcomes {
                println!("{}", outcome_line(o));
            }
            Ok(())
        }
        Command::Backtest => {
            let pipeline = open(&cli, false)?;
            for s in pipeline.backtest()? {
                let alphas = s.alphas();
                let cumulative = cumulative_excess(&alphas).map(|c| c.arithmetic).unwrap_or(f64::NAN);
                println!("{:<10} {:<20} cycles={:<3} cumulative_alpha={:+.4}", s.provider, s.strategy, alphas.len(), cumulative);
            }
            Ok(())
        }
        Command::Report { out } => {
            let pipeline = open(&cli, false)?;
            pipeline.backtest()?;
            let report = pipeline.report()?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            for (name, body) in report.csv_files() {
                let path = out.join(name);
                std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            }
            let text = report.to_text();
            let path = out.join("report.txt");
            std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
            print!("{text}");
            Ok(())
        }
        Command::Validate { traces, findings } => {
            let corpus = read_traces(traces)?;
            let suite = suite_config(&cli.config)?;
            let report = run_suite(&corpus, &suite);
            let jsonl = findings_to_jsonl(&report.findings);
            match findings {
                Some(path) => std::fs::write(path, jsonl).map_err(|e| Error::io(path, e))?,
                None => print!("{jsonl}"),
            }
            eprint!("{}", summary_table(&report));
            Ok(())
        }
        Command::Serve { addr } => {
            if !addr.ip().is_loopback() {
                return Err(Error::Usage(format!("refusing to serve on non-loopback address {addr}")));
            }
            let pipeline = open(&cli, false)?;
            let service = Arc::clone(pipeline.review());
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            eprintln!("review console on http://{addr}");
            runtime.block_on(alphalab_console::serve(service, *addr)).map_err(|e| Error::io(addr.to_string(), e))
        }
        Command::Ingest { prices } => {
            let table = MarketDataTable::ingest_prices(prices)?;
            let tickers = table.tickers().count();
            println!("{}: {tickers} series through {}", prices.display(), table.last_date().map(|d| d.to_string()).unwrap_or_default());
            if cli.config.exists() {
                let config = load_config(&cli.config)?;
                let target = &config.market_data_file;
                let file = std::fs::File::create(target).map_err(|e| Error::io(target, e))?;
                table.write_csv(std::io::BufWriter::new(file))?;
                println!("written to {}", target.display());
            }
            Ok(())
        }
        Command::Synth { dir, seed } => {
            let config = SyntheticWorld::generate(*seed).write_workspace(dir).map_err(|e| Error::io(dir, e))?;
            println!("{}", config.display());
            Ok(())
        }
    }
}

fn outcome_line(o: &RunOutcome) -> String {
    let head = format!("{} {:<10} {:<10}", o.cycle_id, o.provider, o.strategy);
    if let Some(reason) = &o.skipped {
        return format!("{head} skipped: {reason}");
    }
    let codes: BTreeSet<String> = o.findings.iter().map(|f| format!("{:?}", f.code)).collect();
    let signal = if o.signal.is_some() { "published" } else { "not published" };
    let mut line = format!("{head} traces={} findings={} signal {signal}", o.traces, o.findings.len());
    if !codes.is_empty() {
        line.push_str(&format!(" [{}]", codes.into_iter().collect::<Vec<_>>().join(",")));
    }
    if o.pending_review > 0 {
        line.push_str(&format!(" pending_review={}", o.pending_review));
    }
    line
}

fn read_traces(path: &Path) -> Result<Vec<ReasoningTrace>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let trace = serde_json::from_str(&line).map_err(|e| Error::Usage(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(trace);
    }
    Ok(out)
}

/// Thresholds and cutoffs from the config when one is readable, defaults otherwise.
fn suite_config(path: &Path) -> Result<SuiteConfig> {
    if !path.exists() {
        return Ok(SuiteConfig::default());
    }
    let config = load_config(path)?;
    let calendar = alphalab_core::backtest::read_calendar(&config.calendar_file)?;
    Ok(SuiteConfig {
        tolerance: config.thresholds.aggregation_tolerance,
        cluster_min: config.thresholds.cluster_min,
        max_period_skew_months: config.thresholds.max_period_skew_months,
        cutoffs: calendar.iter().map(|c| (c.id.clone(), c.cutoff)).collect(),
        ..SuiteConfig::default()
    })
}

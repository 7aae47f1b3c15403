mod commands;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blinkseq::codebook::{Coding, DEFAULT_SEARCH_ITERATIONS, DEFAULT_SEED};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use commands::{CmdResult, GenArgs, TraceArgs};
use config::RunConfig;

/// Blinking-sequence codebooks and optical identification experiments.
#[derive(Parser, Debug)]
#[command(name = "blinkseq", version)]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a dictionary and report the size after each filtering stage.
    Gen(Gen),
    /// Exact and estimated cardinalities for a CSV grid of L,bbar,n1,n0.
    Table(Table),
    /// Identification-time experiments from a key=value config.
    Simulate(WithConfig),
    /// Clock-limited group capacity curve from a key=value config.
    Capacity(WithConfig),
    /// Run the correlator bank over a received trace.
    Classify(Classify),
    /// Write a received trace for one dictionary row.
    Trace(TraceCmd),
}

#[derive(Args, Debug)]
struct Gen {
    #[arg(long, default_value = "nrz")]
    coding: Coding,
    #[arg(short = 'L', long = "length")]
    length: usize,
    /// Minimum fraction of ones.
    #[arg(long, default_value_t = 0.0)]
    bbar: f64,
    /// Longest circular run of ones (default L).
    #[arg(long)]
    n1: Option<usize>,
    /// Longest circular run of zeros (default L).
    #[arg(long)]
    n0: Option<usize>,
    /// Minimum circular Hamming distance.
    #[arg(long, default_value_t = 1)]
    hm: usize,
    #[arg(long, default_value_t = DEFAULT_SEARCH_ITERATIONS)]
    iterations: usize,
    #[arg(long, env = commands::SEED_ENV, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Table {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, default_value_t = 3)]
    hm: usize,
    #[arg(long, default_value_t = DEFAULT_SEARCH_ITERATIONS)]
    iterations: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct WithConfig {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Classify {
    #[arg(long)]
    dict: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// Decision threshold η_d (default from the dictionary's distance).
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TraceCmd {
    #[arg(long)]
    dict: PathBuf,
    #[arg(long, default_value_t = 0)]
    row: usize,
    #[arg(long, short = 'n', default_value_t = 200)]
    samples: usize,
    #[arg(long = "p-b", default_value_t = 0.0)]
    p_b: f64,
    /// Relative clock mismatch T_rx/T_tx − 1.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    phase: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn load_config(path: &Path) -> Result<RunConfig, String> {
    RunConfig::parse(&commands::read(path)?)
}

fn run(cli: Cli) -> Result<(), String> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    let (result, out): (CmdResult, Option<PathBuf>) = match cli.cmd {
        Cmd::Gen(g) => {
            let args = GenArgs {
                coding: g.coding,
                length: g.length,
                bbar: g.bbar,
                n1: g.n1,
                n0: g.n0,
                hm: g.hm,
                iterations: g.iterations,
                seed: g.seed,
            };
            (commands::gen(&args), g.out)
        }
        Cmd::Table(t) => (commands::table(&t.grid, t.hm, t.iterations, t.seed), t.out),
        Cmd::Simulate(c) => (load_config(&c.config).and_then(commands::simulate), c.out),
        Cmd::Capacity(c) => (load_config(&c.config).and_then(commands::capacity), c.out),
        Cmd::Classify(c) => (commands::classify(&c.dict, &c.trace, c.threshold), c.out),
        Cmd::Trace(t) => {
            let args = TraceArgs {
                dict: &t.dict,
                row: t.row,
                samples: t.samples,
                p_b: t.p_b,
                delta: t.delta,
                phase: t.phase,
                seed: t.seed,
            };
            (commands::trace(&args), t.out)
        }
    };
    let output = result?;
    match out {
        Some(path) => {
            std::fs::write(&path, &output.body).map_err(|e| format!("{}: {e}", path.display()))?;
            if let Some(n) = output.note {
                print!("{n}");
            }
        }
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(output.body.as_bytes()).map_err(|e| e.to_string())?;
            if let Some(n) = output.note {
                eprint!("{n}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

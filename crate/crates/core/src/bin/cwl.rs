//! Command-line front end. Exit codes: 0 success, 2 flagged instance,
//! 1 error.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_rational::Ratio;

use cwl::chain::{self, ChainConfig, Status};
use cwl::johnson::JohnsonGraph;
use cwl::oracle::Params;
use cwl::regimes::{self, GridRow};
use cwl::stats;
use cwl::Result;

#[derive(Parser)]
#[command(
    name = "cwl",
    version,
    about = "Chained quantum-walk multicollision simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exponent grid over (m/n, k/n) as CSV.
    Regimes {
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs the chained walk on a seeded random function.
    Simulate {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        m: u32,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        ell: u32,
        #[arg(long)]
        seed: u64,
        /// Number of tuples to find instead of 2^k.
        #[arg(long)]
        target: Option<u64>,
        #[arg(long)]
        max_iterations: Option<u64>,
        /// Initial vertex size instead of 2^ell.
        #[arg(long)]
        vertex_size: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extraction events as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Monte-Carlo multicollision statistics as one CSV row.
    VerifyStats {
        #[arg(long = "R")]
        r: u64,
        #[arg(long = "M")]
        m: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral gap and walk phase gap of J(N, R) as CSV.
    Spectrum {
        #[arg(long = "N")]
        n: usize,
        #[arg(long = "R")]
        r: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Memory/time trade-off curve as CSV.
    Tradeoff {
        #[arg(long)]
        mhat: f64,
        #[arg(long)]
        khat: f64,
        #[arg(long, default_value_t = 50)]
        steps: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_csv<S: serde::Serialize>(out: &Option<PathBuf>, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink(out)?);
    for row in rows {
        w.serialize(row)
            .map_err(|e| cwl::Error::Io(io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Regimes { step, out } => {
            let per_unit = regimes::steps_per_unit(step)?;
            let grid = regimes::region_grid::<Ratio<i64>>(per_unit)?;
            write_csv(&out, grid.iter().map(GridRow::from))?;
        }
        Command::Simulate {
            n,
            m,
            k,
            ell,
            seed,
            target,
            max_iterations,
            vertex_size,
            out,
            trace,
        } => {
            let mut config = ChainConfig::new(Params::new(n, m, k)?, ell, seed);
            config.target_tuples = target;
            config.max_outer_iterations = max_iterations;
            config.vertex_size = vertex_size;
            let result = chain::run(&config)?;
            let mut w = sink(&out)?;
            writeln!(w, "{}", result.to_json()?)?;
            if let Some(path) = trace {
                std::fs::write(path, result.trace_lines()?)?;
            }
            if result.status == Status::Exhausted {
                eprintln!("flagged: no multicollision left to extract");
                return Ok(ExitCode::from(2));
            }
        }
        Command::VerifyStats {
            r,
            m,
            samples,
            seed,
            out,
        } => {
            let row = stats::stats_row(r, m, samples, seed)?;
            write_csv(&out, [row])?;
        }
        Command::Spectrum { n, r, out } => {
            let row = JohnsonGraph::on_range(n, r)?.spectrum_row()?;
            write_csv(&out, [row])?;
        }
        Command::Tradeoff {
            mhat,
            khat,
            steps,
            out,
        } => {
            let curve = regimes::tradeoff_curve(mhat, khat, steps)?;
            write_csv(&out, curve)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

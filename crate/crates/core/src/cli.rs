//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 on usage, validation or input-format errors,
//! 1 when a solver fails or `clear --oracle` detects a disagreement.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analytic::{
    capital_threshold, realized_clearing_price, squeeze_limits, squeeze_threshold,
};
use crate::error::{Error, Result};
use crate::model::MarketParams;
use crate::oracle::{
    clearing_residual, enumerate_equilibria, fictitious_margin_call_solve, SolverConfig,
};
use crate::scenario::{
    case_study, emit, load_snapshot, sweep, ClearingRecord, Emit, EquilibriumRecord, Format,
    SnapshotDefaults, SweepGrid, SweepSpec, ThresholdRecord,
};

/// Largest relative gap tolerated between closed-form and bisection prices.
pub const ORACLE_REL_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(
    name = "squeeze",
    version,
    about = "Clearing prices, margin-call thresholds and short-squeeze size for a shorted asset"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Realized clearing price for external purchases c.
    Clear {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        c: f64,
        /// Cross-check against the bisection solver.
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Capital threshold c*, squeeze threshold s*, and the squeeze size when s is given.
    Thresholds {
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.45)]
        alpha: f64,
        #[arg(long, default_value_t = 0.30)]
        mu: f64,
        #[arg(long = "s")]
        s: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Realized prices over a grid of capital purchases.
    Sweep {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        c_min: f64,
        #[arg(long)]
        c_max: f64,
        #[arg(long = "n", default_value_t = 101)]
        n: usize,
        #[arg(long, value_enum, default_value_t = GridArg::Threshold)]
        grid: GridArg,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Every clearing price at capital c.
    Equilibria {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        c: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Case-study reports for each row of a snapshot CSV.
    Casestudy {
        #[arg(long)]
        input: PathBuf,
        /// Default alpha for rows that leave it blank.
        #[arg(long, default_value_t = 0.45)]
        alpha: f64,
        #[arg(long, default_value_t = 0.30)]
        mu: f64,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Args)]
struct ParamArgs {
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[arg(long = "s")]
    s: f64,
    #[arg(long, default_value_t = 0.45)]
    alpha: f64,
    #[arg(long, default_value_t = 0.30)]
    mu: f64,
}

impl ParamArgs {
    fn params(&self) -> Result<MarketParams> {
        MarketParams::new(self.beta, self.s, self.alpha, self.mu)
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Write to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GridArg {
    Uniform,
    Threshold,
}

/// Outcome of a subcommand that produced output but still wants a nonzero exit.
enum Status {
    Ok,
    Fail(i32, String),
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(Status::Ok) => 0,
        Ok(Status::Fail(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}

fn write_output<T: Emit + ?Sized>(
    item: &T,
    output: &OutputArgs,
    out: &mut dyn Write,
) -> Result<()> {
    let bytes = emit(item, output.format.into())?;
    match &output.out {
        Some(path) => File::create(path)?.write_all(&bytes)?,
        None => out.write_all(&bytes)?,
    }
    Ok(())
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<Status> {
    match command {
        Command::Clear {
            params,
            c,
            oracle,
            output,
        } => {
            let params = params.params()?;
            let outcome = realized_clearing_price(c, &params)?;
            let oracle = if oracle {
                Some(fictitious_margin_call_solve(
                    c,
                    &params,
                    &SolverConfig::default(),
                )?)
            } else {
                None
            };
            let record = ClearingRecord { c, outcome, oracle };
            write_output(&record, &output, out)?;
            match record.oracle_rel_diff() {
                Some(diff) if !(diff <= ORACLE_REL_TOL) => Ok(Status::Fail(
                    1,
                    format!("closed form and oracle disagree (relative difference {diff:e})"),
                )),
                _ => Ok(Status::Ok),
            }
        }
        Command::Thresholds {
            beta,
            alpha,
            mu,
            s,
            output,
        } => {
            let params = MarketParams::new(beta, s.unwrap_or(0.0), alpha, mu)?;
            let record = ThresholdRecord {
                c_star: capital_threshold(&params)?,
                s_star: squeeze_threshold(&params)?,
                squeeze: match s {
                    Some(s) => Some((s, squeeze_limits(&params)?)),
                    None => None,
                },
            };
            write_output(&record, &output, out)?;
            Ok(Status::Ok)
        }
        Command::Sweep {
            params,
            c_min,
            c_max,
            n,
            grid,
            output,
        } => {
            let params = params.params()?;
            let spec = SweepSpec {
                c_min,
                c_max,
                n_points: n,
                grid: match grid {
                    GridArg::Uniform => SweepGrid::Uniform,
                    GridArg::Threshold => SweepGrid::UniformPlusThreshold,
                },
            };
            let table = sweep(&spec, &params)?;
            write_output(&table, &output, out)?;
            if let Some(d) = table.discontinuity {
                writeln!(
                    err,
                    "note: price jumps by {} at c* = {}",
                    crate::scenario::fmt_sig(d.delta),
                    crate::scenario::fmt_sig(d.c_star)
                )?;
            }
            Ok(Status::Ok)
        }
        Command::Equilibria { params, c, output } => {
            let params = params.params()?;
            let set = enumerate_equilibria(c, &params, &SolverConfig::default())?;
            let residuals = set
                .prices
                .iter()
                .map(|&p| clearing_residual(p, c, &params).map(f64::abs))
                .collect::<Result<Vec<_>>>()?;
            write_output(&EquilibriumRecord { c, set, residuals }, &output, out)?;
            Ok(Status::Ok)
        }
        Command::Casestudy {
            input,
            alpha,
            mu,
            beta,
            output,
        } => {
            let file = File::open(&input)
                .map_err(|e| Error::Format(format!("cannot open {}: {e}", input.display())))?;
            let batch = load_snapshot(file, &SnapshotDefaults { alpha, mu, beta })?;
            let reports = batch
                .snapshots
                .iter()
                .map(case_study)
                .collect::<Result<Vec<_>>>()?;
            write_output(reports.as_slice(), &output, out)?;
            for reject in &batch.rejected {
                writeln!(err, "skipped {reject}")?;
            }
            if batch.rejected.is_empty() {
                Ok(Status::Ok)
            } else {
                Ok(Status::Fail(
                    2,
                    format!("{} snapshot row(s) rejected", batch.rejected.len()),
                ))
            }
        }
    }
}

//! Command-line interface.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical or precondition
//! failure, 3 I/O error.

pub mod files;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::baselines::{abdr_reward, compare_table, ddb_asymptotic, ddb_result, sr_solve, CompareRow, GameEntry};
use crate::convert::expand::{toy_exact_game, Materialize};
use crate::convert::{
    conversion_params, conversion_report, decompose_boundary, default_c1, delta_min, expand_tdpg_report,
    expansion_params, tradeoff_curve, BoundaryDecomposition, ConvertError, ExpandOptions, M1Rule,
};
use crate::par::{self, Mode};
use crate::points::l1_norm;
use crate::search::{run_search, PenTipg};
use crate::validity::{check_h_valid, check_v_valid, MoveReport, SweepMode, GOLDEN_TOL, SELF_TOL};

use files::{load_config, load_game, save_game, to_canonical, write_atomic, GameFile};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<ConvertError> for CliError {
    fn from(e: ConvertError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "pointgame", version, about = "Cheat-penalised point games: search, verify, convert, compare")]
pub struct Cli {
    /// Run every data-parallel loop on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Targets,
    Support,
    All,
}

impl From<RuleArg> for M1Rule {
    fn from(r: RuleArg) -> M1Rule {
        match r {
            RuleArg::Targets => M1Rule::Targets,
            RuleArg::Support => M1Rule::Support,
            RuleArg::All => M1Rule::AllCoordinates,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineKind {
    Sr,
    Ddb,
    Abdr,
}

#[derive(Debug, clap::Args)]
pub struct DeltaArgs {
    /// `c1` value, or `auto` for 0.999 of the admissible supremum.
    #[arg(long, default_value = "auto")]
    pub c1: String,
    /// `δ = δ_min + offset`.
    #[arg(long, conflicts_with = "delta")]
    pub delta_offset: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value = "targets")]
    pub m1_rule: RuleArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the four-step search and write a game file.
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the validity of a game file.
    Verify {
        game: PathBuf,
        /// Sweep this many log-spaced λ instead of the tier default.
        #[arg(long)]
        dense: Option<usize>,
    },
    /// Conversion parameters and resource counts.
    Convert {
        game: PathBuf,
        #[command(flatten)]
        delta: DeltaArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV of `delta,err,rc,bias` over a list of offsets above δ_min.
    Tradeoff {
        game: PathBuf,
        #[arg(long, default_value = "auto")]
        c1: String,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10])]
        offsets: Vec<f64>,
        #[arg(long, value_enum, default_value = "targets")]
        m1_rule: RuleArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the explicit frames and check every materialised transition.
    Expand {
        /// Game file; omit with `--toy`.
        game: Option<PathBuf>,
        #[arg(long, conflicts_with = "game")]
        toy: bool,
        #[arg(long)]
        c1: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        delta_offset: f64,
        /// Loop iterations to check: numbers, `last`, or `all`.
        #[arg(long, value_delimiter = ',', default_value = "0,1,last")]
        sample: Vec<String>,
        #[arg(long)]
        verbose: bool,
    },
    /// One reference protocol.
    Baseline {
        #[arg(value_enum)]
        kind: BaselineKind,
        #[arg(long)]
        lambda: f64,
    },
    /// CSV of `protocol,lambda,bias,rc,sc` for the baselines and any games.
    Compare {
        #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
        lambda: Vec<f64>,
        #[arg(long = "game")]
        games: Vec<PathBuf>,
        #[arg(long, default_value_t = 1e-5)]
        delta_offset: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    par::init_threads();
    let mode = if cli.sequential { Mode::Sequential } else { Mode::Parallel };
    let mut out = std::io::stdout().lock();
    match execute(cli.command, mode, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}")))
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => { emit($out, &format!("{}\n", format_args!($($arg)*))) };
}

fn execute(cmd: Command, mode: Mode, out: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        Command::Search { config, out: path } => cmd_search(&config, &path, out),
        Command::Verify { game, dense } => cmd_verify(&game, dense, out),
        Command::Convert { game, delta, out: path } => cmd_convert(&game, &delta, path.as_deref(), out),
        Command::Tradeoff { game, c1, offsets, m1_rule, out: path } => {
            cmd_tradeoff(&game, &c1, &offsets, m1_rule.into(), mode, path.as_deref(), out)
        }
        Command::Expand { game, toy, c1, delta_offset, sample, verbose } => {
            cmd_expand(game.as_deref(), toy, c1, delta_offset, &sample, verbose, mode, out)
        }
        Command::Baseline { kind, lambda } => cmd_baseline(kind, lambda, out),
        Command::Compare { lambda, games, delta_offset, out: path } => {
            cmd_compare(&lambda, &games, delta_offset, path.as_deref(), out)
        }
    }
}

fn cmd_search(config: &std::path::Path, path: &std::path::Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = load_config(config)?.config()?;
    let start = Instant::now();
    let game = run_search(&cfg).map_err(|e| CliError::Numerical(e.to_string()))?;
    let file = GameFile::from_search(&game, &cfg)?;
    save_game(path, &file)?;
    say!(out, "eps_approx {:e}", game.eps_approx)?;
    say!(out, "norm {}", game.norm)?;
    say!(out, "points {}", game.point_count)?;
    say!(out, "validity {:?}", game.validity)?;
    say!(out, "elapsed {:.2}s", start.elapsed().as_secs_f64())?;
    Ok(0)
}

/// Outcome of `verify` on one game file.
#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub tolerance: f64,
    pub h: MoveReport,
    pub v: MoveReport,
    pub max_line_sum: f64,
    pub eps_approx: f64,
    /// `‖v + vᵀ − (e − s)‖₁`.
    pub symmetry_residual: f64,
    pub empty: bool,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.empty
            || (self.h.all_valid
                && self.v.all_valid
                && self.max_line_sum <= self.tolerance
                && self.eps_approx <= self.tolerance)
    }
}

/// Golden files are checked on `T` at the printed-precision tier, others on
/// the dense sweep at [`SELF_TOL`].
pub fn verify_game(file: &GameFile, dense: Option<usize>) -> Result<VerifyOutcome, CliError> {
    let (h, v) = file.moves()?;
    let boundary = file.boundary()?;
    let (tolerance, default_sweep) = if file.is_golden() {
        (GOLDEN_TOL, SweepMode::Grid(file.t.clone()))
    } else {
        (SELF_TOL, SweepMode::dense())
    };
    let sweep = dense.map_or(default_sweep, SweepMode::Dense);
    let hr = check_h_valid(&h, &sweep, tolerance);
    let vr = check_v_valid(&v, &sweep, tolerance);
    let max_line_sum = hr.max_sum_residual().max(vr.max_sum_residual());
    let target = boundary.difference();
    let eps_approx = l1_norm(&(&(&h + &v) - &target));
    let sym = l1_norm(&(&(&v + &crate::points::transpose(&v)) - &target));
    Ok(VerifyOutcome {
        tolerance,
        h: hr,
        v: vr,
        max_line_sum,
        eps_approx,
        symmetry_residual: sym,
        empty: h.is_empty() && v.is_empty(),
    })
}

fn cmd_verify(path: &std::path::Path, dense: Option<usize>, out: &mut dyn Write) -> Result<i32, CliError> {
    let file = load_game(path)?;
    let r = verify_game(&file, dense)?;
    if r.empty {
        say!(out, "warning: empty game, nothing to check")?;
        return Ok(0);
    }
    say!(out, "tolerance {:e}", r.tolerance)?;
    for (name, rep) in [("h row y", &r.h), ("v column x", &r.v)] {
        for l in &rep.lines {
            say!(
                out,
                "{name} = {}: worst {:.3e} at lambda {:.3e}, sum {:.3e} {}",
                l.coordinate,
                l.report.worst_value,
                l.report.worst_lambda,
                l.report.sum_residual,
                if l.report.is_valid { "ok" } else { "FAIL" }
            )?;
        }
    }
    say!(out, "max line sum {:e}", r.max_line_sum)?;
    say!(out, "eps_approx {:e}", r.eps_approx)?;
    say!(out, "symmetry residual {:e}", r.symmetry_residual)?;
    let passed = r.passed();
    say!(out, "{}", if passed { "PASS" } else { "FAIL" })?;
    Ok(if passed { 0 } else { 2 })
}

fn parse_c1(c1: &str, d: &BoundaryDecomposition, rule: M1Rule) -> Result<f64, CliError> {
    if c1 == "auto" {
        return Ok(default_c1(d.m1(rule)?, d.lambda)?);
    }
    c1.parse::<f64>().map_err(|_| CliError::Input(format!("--c1 expects `auto` or a number, got `{c1}`")))
}

fn decompose(file: &GameFile) -> Result<(PenTipg, BoundaryDecomposition), CliError> {
    let game = file.game()?;
    let d = decompose_boundary(&game)?;
    Ok((game, d))
}

fn cmd_convert(
    path: &std::path::Path,
    args: &DeltaArgs,
    report_path: Option<&std::path::Path>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let file = load_game(path)?;
    let (_, d) = decompose(&file)?;
    let rule = M1Rule::from(args.m1_rule);
    let c1 = parse_c1(&args.c1, &d, rule)?;
    let dmin = delta_min(d.eps1, d.eps2, c1);
    let delta = match (args.delta, args.delta_offset) {
        (Some(v), _) => v,
        (None, Some(off)) => dmin + off,
        (None, None) => return Err(CliError::Input("one of --delta or --delta-offset is required".into())),
    };
    let p = conversion_params(&d, c1, delta, rule)?;
    let r = conversion_report(&d, &p);
    let text = to_canonical(&serde_json::json!({ "params": p, "report": r }))?;
    match report_path {
        Some(rp) => write_atomic(rp, text.as_bytes())?,
        None => emit(out, &text)?,
    }
    for f in &p.flags {
        eprintln!("note: {f:?}");
    }
    say!(out, "delta_min {:e}", p.delta_min)?;
    say!(out, "err {:e}  rc {}  sc {}  bias {:e}", r.err, r.rc, r.sc, r.protocol_bias)?;
    Ok(0)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish_csv(w: csv::Writer<Vec<u8>>, path: Option<&std::path::Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Io(format!("csv: {e}")))?;
    match path {
        Some(p) => write_atomic(p, &bytes),
        None => out.write_all(&bytes).map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(format!("csv: {e}"))
}

fn cmd_tradeoff(
    path: &std::path::Path,
    c1: &str,
    offsets: &[f64],
    rule: M1Rule,
    mode: Mode,
    csv_path: Option<&std::path::Path>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let file = load_game(path)?;
    let (_, d) = decompose(&file)?;
    let c1 = parse_c1(c1, &d, rule)?;
    let dmin = delta_min(d.eps1, d.eps2, c1);
    let deltas: Vec<f64> = offsets.iter().map(|o| dmin + o).collect();
    let rows = tradeoff_curve(&d, c1, rule, &deltas, mode)?;
    let mut w = csv_writer();
    w.write_record(["delta", "err", "rc", "bias"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.delta.to_string(), r.err.to_string(), r.rc.to_string(), r.protocol_bias.to_string()])
            .map_err(csv_err)?;
    }
    finish_csv(w, csv_path, out)?;
    Ok(0)
}

fn parse_sample(sample: &[String]) -> Result<Materialize, CliError> {
    let mut extra = Vec::new();
    for s in sample {
        match s.trim() {
            "all" => return Ok(Materialize::All),
            "last" | "0" | "1" => {}
            other => extra.push(
                other.parse::<u64>().map_err(|_| CliError::Input(format!("bad --sample entry `{other}`")))?,
            ),
        }
    }
    Ok(Materialize::Sampled(extra))
}

#[allow(clippy::too_many_arguments)]
fn cmd_expand(
    path: Option<&std::path::Path>,
    toy: bool,
    c1: Option<f64>,
    delta_offset: f64,
    sample: &[String],
    verbose: bool,
    mode: Mode,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let game = match (path, toy) {
        (_, true) => {
            let (h, v) = toy_exact_game();
            PenTipg::with_final_point(h, v, 1.0, (1.8, 1.8), &[0.1, 1.0, 10.0, 1000.0])
        }
        (Some(p), false) => load_game(p)?.game()?,
        (None, false) => return Err(CliError::Input("give a game file or --toy".into())),
    };
    let d = decompose_boundary(&game)?;
    let start = Instant::now();
    let probe = expansion_params(&d, 0.5, c1)?;
    let p = expansion_params(&d, probe.delta_min + delta_offset, c1)?;
    let opts = ExpandOptions { materialize: parse_sample(sample)?, par_mode: mode, ..Default::default() };
    let x = expand_tdpg_report(&d, &p, &opts)?;
    for t in &x.transitions {
        if verbose || !t.valid {
            say!(
                out,
                "{:<24} {:?} {} worst {:.3e} at lambda {:.3e} on line {} mass error {:.1e} support {}",
                t.step,
                t.axis,
                if t.valid { "ok" } else { "FAIL" },
                t.worst_value,
                t.worst_lambda,
                t.worst_line,
                t.mass_error,
                t.support
            )?;
        }
    }
    let (fx, fy) = x.final_point;
    say!(out, "c1 {}  delta {:e}  err {:e}", p.c1, p.delta, x.err)?;
    say!(out, "final point [{fx}, {fy}]")?;
    say!(
        out,
        "checked {} of {} transitions, max frame support {} (bound {}), max pair support {} (bound {}), max mass error {:.1e}, {:.2}s",
        x.transitions.len(),
        x.total_transitions,
        x.max_support,
        x.support_bound,
        x.max_pair_support,
        2 * x.support_bound,
        x.max_mass_error,
        start.elapsed().as_secs_f64()
    )?;
    if !x.within_support_bound() {
        say!(out, "point-count bound exceeded: a frame has {} points, supp{{h*, v*}} has {}", x.max_support, x.support_bound)?;
    }
    if x.all_valid() {
        say!(out, "all transitions valid")?;
    }
    if x.all_valid() && x.within_support_bound() {
        Ok(0)
    } else {
        if !x.all_valid() {
            say!(out, "invalid transitions found")?;
        }
        Ok(2)
    }
}

fn cmd_baseline(kind: BaselineKind, lambda: f64, out: &mut dyn Write) -> Result<i32, CliError> {
    let numerical = |e: crate::baselines::BaselineError| match e {
        crate::baselines::BaselineError::Domain { .. } => CliError::Input(e.to_string()),
        other => CliError::Numerical(other.to_string()),
    };
    let r = match kind {
        BaselineKind::Sr => sr_solve(lambda).map_err(numerical)?,
        BaselineKind::Ddb => ddb_result(lambda).map_err(numerical)?,
        BaselineKind::Abdr => abdr_reward(lambda).map_err(numerical)?,
    };
    emit(out, &to_canonical(&r)?)?;
    if let BaselineKind::Ddb = kind {
        if let Ok(series) = ddb_asymptotic(lambda, 2) {
            say!(out, "root {:.17e}  series {:.17e}  difference {:.3e}", r.reward, series, r.reward - series)?;
        }
    }
    Ok(0)
}

fn cmd_compare(
    lambdas: &[f64],
    games: &[PathBuf],
    delta_offset: f64,
    csv_path: Option<&std::path::Path>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let mut entries = Vec::new();
    for path in games {
        let file = load_game(path)?;
        let (_, d) = decompose(&file)?;
        let rule = M1Rule::Targets;
        let c1 = default_c1(d.m1(rule)?, d.lambda)?;
        let p = conversion_params(&d, c1, delta_min(d.eps1, d.eps2, c1) + delta_offset, rule)?;
        let name = path.file_stem().map_or_else(|| "game".to_string(), |s| s.to_string_lossy().into_owned());
        entries.push(GameEntry { name, lambda: d.lambda, report: conversion_report(&d, &p) });
    }
    let rows = compare_table(lambdas, &entries);
    write_compare(&rows, csv_path, out)?;
    Ok(0)
}

pub fn write_compare(rows: &[CompareRow], csv_path: Option<&std::path::Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let mut w = csv_writer();
    w.write_record(["protocol", "lambda", "bias", "rc", "sc"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.protocol.clone(),
            r.lambda.to_string(),
            r.bias.to_string(),
            r.rc.map_or_else(|| "inf".to_string(), |v| v.to_string()),
            r.sc.map_or_else(String::new, |v| v.to_string()),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w, csv_path, out)
}

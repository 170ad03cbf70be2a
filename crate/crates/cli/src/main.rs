//! `sweeper`: batch front end for the penalty simulator, oracle, sweeps,
//! optimal control solver and necessary-condition checker.
//!
//! Exit status: 0 on success or PASS, 1 on a FAIL verdict, 2 on any error.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sweeper_core::ocp::SolveMode;
use sweeper_core::par::ExecMode;
use sweeper_core::scenario::{load_scenario, Scenario};
use sweeper_core::workflow::{self, Command, Flags, Outcome, SolutionFile};

#[derive(Parser, Debug)]
#[command(name = "sweeper", version, about = "Exponential-penalty sweeping processes: simulate, sweep, solve, check")]
#[command(after_help = "Tolerances from the scenario can be overridden with --tol.NAME VALUE (e.g. --tol.sweep 0.01).")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Penalised trajectory at one gamma.
    Simulate(Common),
    /// Catching-up oracle with its recovered multiplier.
    Oracle(Common),
    /// Convergence sweep over a gamma schedule.
    Sweep(Common),
    /// Continuation solve of the scenario's optimal control problem.
    Solve(Common),
    /// Necessary-condition residuals for a solution written by `solve`.
    CheckNc(Common),
    /// Certify the set constants.
    Certify(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Nc,
    Plain,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,
    #[arg(long, conflicts_with = "gammas")]
    gamma: Option<f64>,
    /// Comma-separated ascending list.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// Output directory (default `out`).
    #[arg(long, env = "SWEEPER_OUT")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output grid size.
    #[arg(long)]
    grid: Option<usize>,
    /// Solution file for check-nc (default `<out>/<scenario>.solution.json`).
    #[arg(long)]
    solution: Option<PathBuf>,
    /// Run batches on one thread.
    #[arg(long)]
    sequential: bool,
}

type Split = (Vec<String>, Vec<(String, f64)>);

/// Pulls `--tol.NAME VALUE` and `--tol.NAME=VALUE` out of the argument list.
fn split_tolerances(args: Vec<String>) -> Result<Split, String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut tols = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(spec) = a.strip_prefix("--tol.") else {
            rest.push(a);
            continue;
        };
        let (name, value) = match spec.split_once('=') {
            Some((n, v)) => (n.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| format!("--tol.{spec} needs a value"))?;
                (spec.to_string(), v)
            }
        };
        let v: f64 = value.parse().map_err(|_| format!("--tol.{name}: `{value}` is not a number"))?;
        tols.push((name, v));
    }
    Ok((rest, tols))
}

fn write_artifacts(dir: &Path, outcome: &Outcome) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    outcome
        .artifacts
        .iter()
        .map(|a| {
            let path = dir.join(&a.name);
            std::fs::write(&path, &a.contents)?;
            Ok(path)
        })
        .collect()
}

fn execute(cmd: Command, args: Common, tols: &[(String, f64)]) -> Result<Option<bool>, String> {
    if args.solution.is_some() && cmd != Command::CheckNc {
        return Err("--solution only applies to check-nc".into());
    }
    if args.mode.is_some() && cmd != Command::Solve {
        return Err("--mode only applies to solve".into());
    }
    let mut sc: Scenario = load_scenario(&args.scenario).map_err(|e| format!("{}: {e}", args.scenario.display()))?;
    if !tols.is_empty() {
        let mut spec = sc.spec.clone();
        for (name, v) in tols {
            spec.tolerances.set(name, *v).map_err(|e| e.to_string())?;
        }
        sc = Scenario::from_spec(spec).map_err(|e| e.to_string())?;
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from("out"));
    let solution = if cmd == Command::CheckNc {
        let path = args.solution.unwrap_or_else(|| out.join(format!("{}.solution.json", sc.name())));
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let file: SolutionFile = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        Some(file)
    } else {
        None
    };
    let flags = Flags {
        gamma: args.gamma,
        gammas: args.gammas,
        mode: args.mode.map(|m| match m {
            ModeArg::Nc => SolveMode::Nc,
            ModeArg::Plain => SolveMode::Plain,
        }),
        grid: args.grid,
        solution,
        exec: if args.sequential { ExecMode::Sequential } else { ExecMode::Parallel },
    };
    let outcome = workflow::run(cmd, &sc, &flags).map_err(|e| e.to_string())?;
    let written = write_artifacts(&out, &outcome).map_err(|e| format!("{}: {e}", out.display()))?;
    // a closed stdout (e.g. piped into `head`) must not turn a verdict into a panic
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{}", outcome.summary);
    for p in written {
        let _ = writeln!(stdout, "wrote {}", p.display());
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let (args, tols) = match split_tolerances(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (cmd, common) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Oracle(c) => (Command::Oracle, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::CheckNc(c) => (Command::CheckNc, c),
        Cmd::Certify(c) => (Command::Certify, c),
    };
    match execute(cmd, common, &tols) {
        Ok(Some(false)) => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

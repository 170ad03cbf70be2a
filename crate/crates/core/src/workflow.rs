//! The six batch workflows behind the command line. Each returns its
//! artifacts in memory so callers decide where they go.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::convergence::{gamma_sweep, sweep_grid, ConvergenceReport, Provenance, Reference, SweepOptions};
use crate::dynamics::{check_bounds, integrate_penalized, BoundReport, N_OUT};
use crate::error::{Error, Result};
use crate::geometry::{certification_report, CertificationReport, PenaltySchedule};
use crate::grid;
use crate::nc::{check_nc, NcOptions, NcReport};
use crate::ocp::{continuation_solve, ContinuationReport, SolutionBundle, SolveMode, SolveOptions};
use crate::oracle::{catching_up, feasibility_residual, multiplier_from_trajectory, oracle_csv};
use crate::par::ExecMode;
use crate::scenario::Scenario;
use crate::stiff::StepControl;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Oracle,
    Sweep,
    Solve,
    CheckNc,
    Certify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Oracle => "oracle",
            Command::Sweep => "sweep",
            Command::Solve => "solve",
            Command::CheckNc => "check-nc",
            Command::Certify => "certify",
        }
    }
}

/// Per-invocation overrides. `None` means "use the scenario".
#[derive(Clone, Debug, Default)]
pub struct Flags {
    pub gamma: Option<f64>,
    pub gammas: Option<Vec<f64>>,
    pub mode: Option<SolveMode>,
    pub grid: Option<usize>,
    /// Contents of a solution file written by `solve`, for `check-nc`.
    pub solution: Option<SolutionFile>,
    pub exec: ExecMode,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub command: Command,
    /// `None` for workflows that produce data without a verdict.
    pub passed: Option<bool>,
    pub artifacts: Vec<Artifact>,
    pub summary: String,
}

impl Outcome {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

/// What `solve` writes and `check-nc` reads back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub scenario: String,
    pub mode: SolveMode,
    /// One bundle per gamma, ascending.
    pub bundles: Vec<SolutionBundle>,
    pub report: ContinuationReport,
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serialization");
    s.push('\n');
    s
}

fn verdict(p: bool) -> &'static str {
    if p {
        "PASS"
    } else {
        "FAIL"
    }
}

impl Scenario {
    fn step_control(&self) -> StepControl {
        let t = self.tolerances();
        StepControl { atol: t.atol, rtol: t.rtol, ..StepControl::default() }
    }

    /// `schedule` sizes the default output grid (see [`sweep_grid`]).
    pub fn sweep_options(&self, flags: &Flags, schedule: &PenaltySchedule) -> SweepOptions {
        SweepOptions {
            step: self.step_control(),
            n_out: flags.grid.unwrap_or_else(|| sweep_grid(*schedule.gammas.last().unwrap())),
            sweep_tol: self.tolerances().sweep,
            mode: flags.exec,
            ..SweepOptions::default()
        }
    }

    pub fn solve_options(&self, flags: &Flags) -> SolveOptions {
        let t = self.tolerances();
        let mut o = SolveOptions {
            cont_tol: t.cont,
            oracle_step: t.oracle_step,
            step: self.step_control(),
            n_out: flags.grid.unwrap_or(N_OUT),
            mode: flags.exec,
            ..SolveOptions::default()
        };
        o.optimizer.kkt_tol = t.kkt;
        o
    }

    pub fn nc_options(&self, flags: &Flags) -> NcOptions {
        let t = self.tolerances();
        NcOptions {
            tol: t.nc,
            nontriviality_tol: t.nontriviality,
            consistency_tol: t.consistency,
            oracle_step: t.oracle_step,
            step: self.step_control(),
            n_out: flags.grid.unwrap_or(N_OUT),
            mode: flags.exec,
            ..NcOptions::default()
        }
    }

    fn schedule_for(&self, flags: &Flags, fallback: &PenaltySchedule) -> Result<PenaltySchedule> {
        match (&flags.gammas, flags.gamma) {
            (Some(_), Some(_)) => Err(Error::Precondition("--gamma and --gammas are mutually exclusive".into())),
            (Some(g), None) => PenaltySchedule::new(g.clone(), self.model.mbar, self.model.set.eta),
            (None, Some(g)) => PenaltySchedule::new(vec![g], self.model.mbar, self.model.set.eta),
            (None, None) => Ok(fallback.clone()),
        }
    }

    /// Analytic reference when declared, otherwise catching-up at the oracle step.
    pub fn reference(&self, n_out: usize) -> Result<Reference> {
        if let Some(r) = self.analytic_reference(n_out)? {
            return Ok(r);
        }
        Reference::from_oracle(&self.model, &self.x0, &self.control, self.tolerances().oracle_step, &grid::uniform(n_out))
    }
}

pub fn run(command: Command, sc: &Scenario, flags: &Flags) -> Result<Outcome> {
    match command {
        Command::Simulate => simulate(sc, flags),
        Command::Oracle => oracle(sc, flags),
        Command::Sweep => sweep(sc, flags),
        Command::Solve => solve(sc, flags),
        Command::CheckNc => check(sc, flags),
        Command::Certify => certify(sc),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub scenario: String,
    pub gamma: f64,
    pub max_psi: f64,
    pub max_xi: f64,
    pub max_speed: f64,
    pub invariance_tol: f64,
    pub invariant: bool,
    pub bounds: BoundReport,
}

/// One penalised run at `--gamma` (default: the largest scheduled gamma).
pub fn simulate(sc: &Scenario, flags: &Flags) -> Result<Outcome> {
    if flags.gammas.is_some() {
        return Err(Error::Precondition("simulate takes --gamma, not --gammas".into()));
    }
    let gamma = flags.gamma.unwrap_or(*sc.schedule.gammas.last().unwrap());
    let schedule = PenaltySchedule::new(vec![gamma], sc.model.mbar, sc.model.set.eta)?;
    let run = integrate_penalized(&sc.model, gamma, &sc.x0, &sc.control, &sc.step_control(), flags.grid.unwrap_or(N_OUT))?;
    let started = sc.model.set.in_ck(schedule.alphas[0], &sc.x0);
    let tol = sc.tolerances().invariance;
    let summary = SimulateSummary {
        scenario: sc.name().into(),
        gamma,
        max_psi: run.diagnostics.max_psi,
        max_xi: run.diagnostics.max_xi,
        max_speed: run.diagnostics.max_speed,
        invariance_tol: tol,
        invariant: run.diagnostics.max_psi <= tol,
        bounds: check_bounds(&sc.model, &run, &schedule, started),
    };
    let line = format!("{} simulate gamma={gamma:e} max_psi={:e} {}", sc.name(), summary.max_psi, verdict(summary.invariant));
    Ok(Outcome {
        command: Command::Simulate,
        passed: Some(summary.invariant),
        artifacts: vec![
            Artifact { name: format!("{}.simulate.csv", sc.name()), contents: run.to_csv() },
            Artifact { name: format!("{}.simulate.json", sc.name()), contents: json(&summary) },
        ],
        summary: line,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub scenario: String,
    pub step: f64,
    pub max_xi: f64,
    /// `Mbar / (2 eta)`.
    pub xi_bound: f64,
    pub xi_bound_ok: bool,
    pub feasibility_residual: f64,
    /// Penalised run compared against the oracle.
    pub gamma: f64,
    pub state_gap: f64,
    pub state_gap_tol: f64,
    /// Largest `|xi_oracle - xi_analytic|` on contact, when an analytic reference exists.
    pub xi_contact_error: Option<f64>,
    pub xi_tol: f64,
    pub passed: bool,
}

/// Catching-up oracle, its recovered multiplier, and agreement with the
/// penalised run at `--gamma` (default: largest scheduled gamma).
pub fn oracle(sc: &Scenario, flags: &Flags) -> Result<Outcome> {
    let tol = sc.tolerances();
    let n_out = flags.grid.unwrap_or(N_OUT);
    let out = grid::uniform(n_out);
    let traj = catching_up(&sc.model, &sc.x0, &sc.control, tol.oracle_step)?;
    let xi = multiplier_from_trajectory(&sc.model, &traj, &sc.control)?;
    let residual = feasibility_residual(&sc.model, &traj, &sc.control, &xi)?;
    let bound = sc.model.mbar / (2.0 * sc.model.set.eta);
    let max_xi = xi.max();
    let gamma = flags.gamma.unwrap_or(*sc.schedule.gammas.last().unwrap());
    let run = integrate_penalized(&sc.model, gamma, &sc.x0, &sc.control, &sc.step_control(), n_out)?;
    let traj_out = traj.resample(&out);
    let xi_out = xi.resample(&out);
    let gap = run.trajectory.sup_distance(&traj_out)?;
    // Only nodes whose neighbours are also in contact: the difference
    // quotient at a contact onset straddles the kink.
    let xi_contact_error = sc.analytic_reference(n_out)?.map(|r| {
        let on = |i: usize| xi_out.support_mask[i] && r.multiplier.support_mask[i];
        (1..n_out - 1)
            .filter(|&i| on(i - 1) && on(i) && on(i + 1))
            .map(|i| (xi_out.xi[i] - r.multiplier.xi[i]).abs())
            .fold(0.0, f64::max)
    });
    let passed = max_xi <= bound + 1e-6 && gap <= tol.oracle_gap && xi_contact_error.is_none_or(|e| e <= tol.oracle_xi);
    let summary = OracleSummary {
        scenario: sc.name().into(),
        step: tol.oracle_step,
        max_xi,
        xi_bound: bound,
        xi_bound_ok: max_xi <= bound + 1e-6,
        feasibility_residual: residual,
        gamma,
        state_gap: gap,
        state_gap_tol: tol.oracle_gap,
        xi_contact_error,
        xi_tol: tol.oracle_xi,
        passed,
    };
    let line = format!(
        "{} oracle max_xi={max_xi:.6} bound={bound:.6} gap={gap:e} {}",
        sc.name(),
        verdict(passed)
    );
    Ok(Outcome {
        command: Command::Oracle,
        passed: Some(passed),
        artifacts: vec![
            Artifact { name: format!("{}.oracle.csv", sc.name()), contents: oracle_csv(&traj_out, &xi_out) },
            Artifact { name: format!("{}.oracle.json", sc.name()), contents: json(&summary) },
        ],
        summary: line,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub scenario: String,
    pub report: ConvergenceReport,
    pub state_sup_tol: f64,
    pub state_sup_ok: bool,
    pub passed: bool,
}

/// Gamma sweep against the reference. Passes when the convergence report
/// passes and the top-gamma state error is within `tol.state_sup`.
pub fn sweep(sc: &Scenario, flags: &Flags) -> Result<Outcome> {
    let schedule = sc.schedule_for(flags, &sc.schedule)?;
    let opts = sc.sweep_options(flags, &schedule);
    let reference = sc.reference(opts.n_out)?;
    let (report, _) = gamma_sweep(&sc.model, &schedule, &sc.x0, &sc.control, &reference, &opts)?;
    let tol = sc.tolerances().state_sup;
    let state_sup_ok = report.records.last().is_some_and(|r| r.state_sup_error <= tol);
    let passed = report.passed && state_sup_ok;
    let mut line = format!("{} sweep ({}) {}", sc.name(), provenance(reference.provenance), verdict(passed));
    for r in &report.records {
        write!(line, "\n  gamma={:e} sup={:e} vel={:e} xi={:e}", r.gamma, r.state_sup_error, r.velocity_l2_error, r.xi_l2_error)
            .unwrap();
    }
    let csv = report.to_csv();
    let summary = SweepSummary { scenario: sc.name().into(), report, state_sup_tol: tol, state_sup_ok, passed };
    Ok(Outcome {
        command: Command::Sweep,
        passed: Some(passed),
        artifacts: vec![
            Artifact { name: format!("{}.sweep.csv", sc.name()), contents: csv },
            Artifact { name: format!("{}.sweep.json", sc.name()), contents: json(&summary) },
        ],
        summary: line,
    })
}

fn provenance(p: Provenance) -> &'static str {
    match p {
        Provenance::Analytic => "analytic",
        Provenance::Oracle => "oracle",
    }
}

/// Continuation over the problem's schedule (or `--gammas`).
pub fn solve(sc: &Scenario, flags: &Flags) -> Result<Outcome> {
    let mut problem = sc.problem.clone().ok_or_else(|| Error::Precondition("scenario has no problem block".into()))?;
    if let Some(m) = flags.mode {
        problem.mode = m;
    }
    let schedule = sc.schedule_for(flags, sc.solve_schedule.as_ref().unwrap())?;
    let opts = sc.solve_options(flags);
    let result = continuation_solve(&sc.model, &problem, &schedule, &opts)?;
    let mode = problem.mode;
    let file = SolutionFile {
        scenario: sc.name().into(),
        mode,
        bundles: result.solutions.iter().map(|s| s.bundle(mode)).collect(),
        report: result.report.clone(),
    };
    let last = result.last();
    let passed = result.report.converged && result.report.final_feasible;
    let line = format!(
        "{} solve ({}) J={:.9} cost={:.9} violation={:e} {}",
        sc.name(),
        if mode == SolveMode::Nc { "nc" } else { "plain" },
        last.j,
        last.cost,
        last.endpoint_violation,
        verdict(passed)
    );
    let mut artifacts = vec![
        Artifact { name: format!("{}.solution.json", sc.name()), contents: json(&file) },
        Artifact { name: format!("{}.continuation.csv", sc.name()), contents: result.report.to_csv() },
        Artifact { name: format!("{}.solution.csv", sc.name()), contents: last.run.to_csv() },
    ];
    for s in &result.solutions {
        artifacts.push(Artifact { name: format!("{}.trace-g{:e}.csv", sc.name(), s.gamma), contents: s.trace_csv() });
    }
    Ok(Outcome { command: Command::Solve, passed: Some(passed), artifacts, summary: line })
}

/// Necessary-condition residuals at the last bundle of `--solution`.
pub fn check(sc: &Scenario, flags: &Flags) -> Result<Outcome> {
    let problem = sc.problem.as_ref().ok_or_else(|| Error::Precondition("scenario has no problem block".into()))?;
    let file = flags.solution.as_ref().ok_or_else(|| Error::Precondition("check-nc needs --solution".into()))?;
    if file.scenario != sc.name() {
        return Err(Error::Precondition(format!("solution belongs to `{}`, not `{}`", file.scenario, sc.name())));
    }
    let outcome = check_nc(&sc.model, problem, &file.bundles, &sc.nc_options(flags))?;
    let report: &NcReport = &outcome.report;
    let mut line = format!("{} check-nc gamma={:e} {}", sc.name(), report.gamma, report.verdict());
    for c in &report.conditions {
        write!(line, "\n  {}={:e} (tol {:e}) {}", c.name, c.residual, c.tol, verdict(c.pass)).unwrap();
    }
    Ok(Outcome {
        command: Command::CheckNc,
        passed: Some(report.passed),
        artifacts: vec![
            Artifact { name: format!("{}.nc.json", sc.name()), contents: json(report) },
            Artifact { name: format!("{}.adjoint.csv", sc.name()), contents: outcome.arc.to_csv() },
        ],
        summary: line,
    })
}

/// Certification report for the scenario's set. Loading already refuses
/// sets that fail, so this always passes for a loaded scenario.
pub fn certify(sc: &Scenario) -> Result<Outcome> {
    let report: CertificationReport = certification_report(&sc.model.set, sc.tolerances().certify_samples);
    let passed = report.passed();
    Ok(Outcome {
        command: Command::Certify,
        passed: Some(passed),
        artifacts: vec![Artifact { name: format!("{}.certify.json", sc.name()), contents: json(&report) }],
        summary: format!(
            "{} certify min|grad psi|={:.6} 2eta={:.6} {}",
            sc.name(),
            report.min_boundary_grad,
            2.0 * sc.model.set.eta,
            verdict(passed)
        ),
    })
}

//! Approximating optimal control problems: transcription, solves, and
//! gamma continuation.

pub mod endpoint;
pub mod optimizer;
pub mod transcription;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::ControlPath;
use crate::dynamics::{integrate_penalized, PenaltyRun, N_OUT};
use crate::error::{Error, Result};
use crate::geometry::{PenaltySchedule, Vector};
use crate::model::Model;
use crate::oracle::catching_up;
use crate::par::{self, ExecMode};
use crate::sets::Primitive;
use crate::stiff::StepControl;

use endpoint::{build_c0k, build_c1k, plain_endpoint, EndpointSet};
use optimizer::{minimize_in, BlockSet, OptimizerOptions, TraceRow};
use transcription::{prox_value, EndpointCost, ProxCenter, Transcription, N_STEPS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    /// Proximal terms centred on a fixed reference pair, shifted endpoint sets.
    #[default]
    Nc,
    /// Proximal terms centred on the current warm start, endpoint sets `C_i ∩ C`.
    Plain,
}

/// A candidate local minimiser `(xbar(0), ubar)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencePair {
    pub x0: Vec<f64>,
    pub control: ControlPath,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MayerProblem {
    pub cost: EndpointCost,
    pub c0: EndpointSet,
    pub c1: EndpointSet,
    /// Tube radius; monitored only.
    pub delta: f64,
    pub delta_o: f64,
    pub reference: Option<ReferencePair>,
    pub mode: SolveMode,
    pub nodes: usize,
}

impl MayerProblem {
    pub fn validate(&self, model: &Model) -> Result<()> {
        let n = model.state_dim();
        let c = &self.cost;
        if [c.a0.len(), c.a1.len(), c.t0.len(), c.t1.len()].iter().any(|&l| l != n) {
            return Err(Error::validation("problem.g", "vectors must have the state dimension"));
        }
        for p in self.c0.parts.iter().chain(&self.c1.parts) {
            p.validate().map_err(|e| Error::validation("problem.c0/c1", e))?;
            if p.dim() != n {
                return Err(Error::validation("problem.c0/c1", "set dimension differs from state dimension"));
            }
        }
        if !(self.delta > 0.0) || !(self.delta_o > 0.0) {
            return Err(Error::validation("problem.delta", "tube radii must be positive"));
        }
        if self.nodes < 2 {
            return Err(Error::validation("problem.nodes", "need at least two control nodes"));
        }
        let seed = self.c0.parts.first().map(|p| p.anchor()).unwrap_or_else(|| Vector::zeros(n));
        let p0 = self.c0.project(&model.set, &seed)?;
        if !model.set.in_c(&p0) {
            return Err(Error::validation("problem.c0", "C0 must lie in C"));
        }
        if let Some(r) = &self.reference {
            if r.x0.len() != n || r.control.dim() != model.control_dim() {
                return Err(Error::validation("problem.reference", "dimension mismatch"));
            }
        }
        Ok(())
    }

    /// Deterministic first guess: the reference when given, otherwise the zero
    /// control projected onto `U` and the point of `C0 ∩ C` nearest its anchor.
    pub fn initial_guess(&self, model: &Model) -> Result<(Vector, ControlPath)> {
        if let Some(r) = &self.reference {
            let u = r.control.resample(&crate::grid::uniform(self.nodes));
            return Ok((Vector::from_column_slice(&r.x0), model.controls.project_path(&u)));
        }
        let n = model.state_dim();
        let seed = self.c0.parts.first().map(|p| p.anchor()).unwrap_or_else(|| Vector::zeros(n));
        let x0 = plain_endpoint(&self.c0).project(&model.set, &seed)?;
        let u = ControlPath::constant(&vec![0.0; model.control_dim()], self.nodes);
        Ok((x0, model.controls.project_path(&u)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub optimizer: OptimizerOptions,
    /// Endpoint penalty weights, tried in order.
    pub weights: Vec<f64>,
    pub n_steps: usize,
    /// Successive-control distance that counts as converged.
    pub cont_tol: f64,
    /// Re-centring rounds allowed at the last gamma in plain mode.
    pub max_rounds: usize,
    /// Catching-up step used for the reference arc.
    pub oracle_step: f64,
    pub step: StepControl,
    pub n_out: usize,
    #[serde(skip)]
    pub mode: ExecMode,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            optimizer: OptimizerOptions::default(),
            weights: (1..=6).map(|e| 10f64.powi(e)).collect(),
            n_steps: N_STEPS,
            cont_tol: 1e-3,
            max_rounds: 50,
            oracle_step: 1e-4,
            step: StepControl::default(),
            n_out: N_OUT,
            mode: ExecMode::Parallel,
        }
    }
}

/// Violation below which weight continuation stops early.
pub const ENDPOINT_TOL: f64 = 1e-8;
/// Violation above which the final weight counts as stalled.
pub const ENDPOINT_STALL: f64 = 1e-4;

/// Data fixing one `(P_gamma_k)`.
#[derive(Clone, Debug)]
pub struct Stage {
    pub gamma: f64,
    pub k: usize,
    pub c0: EndpointSet,
    pub c1: EndpointSet,
    pub center: ProxCenter,
}

/// Distance of the solution from the reference tube, reported only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeReport {
    pub delta: f64,
    pub state_gap: f64,
    pub control_gap: f64,
    pub inside: bool,
}

#[derive(Clone, Debug)]
pub struct PkSolution {
    pub gamma: f64,
    pub k: usize,
    pub x0: Vector,
    pub control: ControlPath,
    pub decision: Vec<f64>,
    pub run: PenaltyRun,
    /// Objective of `(P_gamma_k)` evaluated on the accurate run.
    pub j: f64,
    /// `g(x(0), x(1))` on the accurate run.
    pub cost: f64,
    /// Transcribed objective including the endpoint penalty.
    pub j_transcribed: f64,
    pub endpoint_violation: f64,
    pub pg_norm: f64,
    pub iterations: usize,
    pub weight: f64,
    pub trace: Vec<TraceRow>,
    pub stage: Stage,
    pub tube: Option<TubeReport>,
}

impl PkSolution {
    /// Solver trace CSV: iteration, J, projected-gradient norm, step.
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }

    pub fn bundle(&self, mode: SolveMode) -> SolutionBundle {
        SolutionBundle {
            mode,
            gamma: self.gamma,
            k: self.k,
            x0: self.x0.as_slice().to_vec(),
            control: self.control.clone(),
            decision: self.decision.clone(),
            j: self.j,
            cost: self.cost,
            j_transcribed: self.j_transcribed,
            endpoint_violation: self.endpoint_violation,
            pg_norm: self.pg_norm,
            iterations: self.iterations,
            weight: self.weight,
            c0k: self.stage.c0.clone(),
            c1k: self.stage.c1.clone(),
            center: ReferencePair { x0: self.stage.center.x0.as_slice().to_vec(), control: self.stage.center.u.clone() },
            tube: self.tube,
            max_psi: self.run.diagnostics.max_psi,
        }
    }
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,J,pg_norm,step\n");
    for r in trace {
        writeln!(out, "{},{},{},{}", r.iteration, r.value, r.pg_norm, r.step).unwrap();
    }
    out
}

/// Everything the necessary-condition checker needs from a solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionBundle {
    pub mode: SolveMode,
    pub gamma: f64,
    pub k: usize,
    pub x0: Vec<f64>,
    pub control: ControlPath,
    pub decision: Vec<f64>,
    pub j: f64,
    pub cost: f64,
    pub j_transcribed: f64,
    pub endpoint_violation: f64,
    pub pg_norm: f64,
    pub iterations: usize,
    pub weight: f64,
    pub c0k: EndpointSet,
    pub c1k: EndpointSet,
    pub center: ReferencePair,
    pub tube: Option<TubeReport>,
    pub max_psi: f64,
}

/// `g(x(0), x(1)) + 1/2 (|u(0) - ubar(0)|^2 + int |u' - ubar'|^2 + |x(0) - xbar(0)|^2)`
/// on an accurate run.
pub fn evaluate_j(cost: &EndpointCost, center: &ProxCenter, run: &PenaltyRun, u: &ControlPath) -> Result<f64> {
    let x0 = run.trajectory.first();
    let x1 = run.trajectory.last();
    Ok(cost.value(&x0, &x1) + prox_value(center, &x0, u)?)
}

fn build_transcription<'a>(
    model: &'a Model,
    gamma: f64,
    cost: &'a EndpointCost,
    stage: &'a Stage,
    weight: f64,
    nodes: usize,
    n_steps: usize,
) -> Transcription<'a> {
    Transcription {
        model,
        gamma,
        cost,
        c0: &stage.c0,
        c1: &stage.c1,
        center: &stage.center,
        weight,
        node_grid: crate::grid::uniform(nodes),
        n_steps,
        fixed_x0: stage.c0.as_point(),
    }
}

fn last_iterate(e: &Error) -> Option<Vec<f64>> {
    match e {
        Error::MaxIterations { last, .. } | Error::LineSearchFailure { last, .. } => Some(last.clone()),
        _ => None,
    }
}

/// Solves the transcribed `(P_gamma_k)` from `(x0, u)` with endpoint-weight
/// continuation, then re-runs the solution with the accurate integrator.
pub fn solve_pk(
    model: &Model,
    problem: &MayerProblem,
    stage: Stage,
    x0: &Vector,
    u: &ControlPath,
    opts: &SolveOptions,
) -> Result<PkSolution> {
    let set = &model.set;
    let u = model.controls.project_path(&u.resample(&crate::grid::uniform(problem.nodes)));
    let x0 = match stage.c0.as_point() {
        Some(p) => p,
        None => stage.c0.project(set, x0)?,
    };
    let blocks = BlockSet {
        blocks: build_transcription(model, stage.gamma, &problem.cost, &stage, 0.0, problem.nodes, opts.n_steps)
            .blocks(),
    };
    let mut z = build_transcription(model, stage.gamma, &problem.cost, &stage, 0.0, problem.nodes, opts.n_steps)
        .join(&x0, &u);
    let mut trace = Vec::new();
    let mut result = None;
    for (i, &w) in opts.weights.iter().enumerate() {
        let tr = build_transcription(model, stage.gamma, &problem.cost, &stage, w, problem.nodes, opts.n_steps);
        let more = i + 1 < opts.weights.len();
        let metric = tr.prox_metric();
        let r = minimize_in(&blocks, &z, &opts.optimizer, Some(&metric), |zz| {
            let (v, g, _) = tr.value_and_gradient(zz)?;
            Ok((v, g))
        });
        let (zn, pg, iters, tr_rows) = match r {
            Ok(r) => (r.z, r.pg_norm, r.iterations, r.trace),
            Err(e) => match last_iterate(&e) {
                Some(last) if more && tr.forward(&last)?.endpoint_violation > ENDPOINT_TOL => {
                    z = last;
                    continue;
                }
                _ => return Err(e),
            },
        };
        let offset = trace.len();
        trace.extend(tr_rows.into_iter().map(|mut r| {
            r.iteration += offset;
            r
        }));
        let fw = tr.forward(&zn)?;
        z = zn;
        result = Some((fw, pg, iters, w));
        if result.as_ref().unwrap().0.endpoint_violation <= ENDPOINT_TOL {
            break;
        }
    }
    let Some((fw, pg_norm, iterations, weight)) = result else {
        return Err(Error::InfeasibleEndpoint { violation: f64::NAN, last: z });
    };
    if fw.endpoint_violation > ENDPOINT_STALL {
        return Err(Error::InfeasibleEndpoint { violation: fw.endpoint_violation, last: z });
    }
    let run = integrate_penalized(model, stage.gamma, &fw.x0, &fw.control, &opts.step, opts.n_out)?;
    let j = evaluate_j(&problem.cost, &stage.center, &run, &fw.control)?;
    let cost = problem.cost.value(&run.trajectory.first(), &run.trajectory.last());
    Ok(PkSolution {
        gamma: stage.gamma,
        k: stage.k,
        x0: fw.x0,
        control: fw.control,
        decision: z,
        run,
        j,
        cost,
        j_transcribed: fw.value,
        endpoint_violation: fw.endpoint_violation,
        pg_norm,
        iterations,
        weight,
        trace,
        stage,
        tube: None,
    })
}

/// Reference data of NC mode: the sweeping arc of `(xbar(0), ubar)`.
#[derive(Clone, Debug)]
pub struct ReferenceArc {
    pub x0: Vector,
    pub control: ControlPath,
    pub trajectory: crate::dynamics::Trajectory,
}

impl ReferenceArc {
    pub fn new(model: &Model, pair: &ReferencePair, nodes: usize, opts: &SolveOptions) -> Result<Self> {
        let x0 = Vector::from_column_slice(&pair.x0);
        let control = pair.control.resample(&crate::grid::uniform(nodes));
        let traj = catching_up(model, &x0, &control, opts.oracle_step)?;
        Ok(ReferenceArc { trajectory: traj.resample(&crate::grid::uniform(opts.n_out)), x0, control })
    }

    fn tube(&self, delta: f64, sol: &PkSolution) -> Result<TubeReport> {
        let state_gap = sol.run.trajectory.sup_distance(&self.trajectory)?;
        let control_gap = sol
            .control
            .nodes
            .iter()
            .zip(&self.control.nodes)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(TubeReport { delta, state_gap, control_gap, inside: state_gap <= delta && control_gap <= delta })
    }
}

/// `C0(k)`, `C1(k)` and the proximal centre of NC mode at index `k`.
pub fn nc_stage(
    model: &Model,
    problem: &MayerProblem,
    reference: &ReferenceArc,
    schedule: &PenaltySchedule,
    k: usize,
    opts: &SolveOptions,
) -> Result<Stage> {
    let set = &model.set;
    let (gamma, alpha, rho) = (schedule.gammas[k], schedule.alphas[k], schedule.rhos[k]);
    let c0 = build_c0k(&problem.c0, set, &reference.x0, rho, alpha, problem.delta_o)?;
    let start = set.start_in_ck(&reference.x0, rho)?;
    let xg = integrate_penalized(model, gamma, &start, &reference.control, &opts.step, opts.n_out)?;
    let xbar1 = reference.trajectory.last();
    let c1 = build_c1k(&problem.c1, set, &xbar1, &xg.trajectory.last(), problem.delta_o)?;
    Ok(Stage {
        gamma,
        k,
        c0,
        c1,
        center: ProxCenter { x0: reference.x0.clone(), u: reference.control.clone() },
    })
}

fn plain_stage(problem: &MayerProblem, gamma: f64, k: usize, x0: &Vector, u: &ControlPath) -> Stage {
    Stage {
        gamma,
        k,
        c0: plain_endpoint(&problem.c0),
        c1: plain_endpoint(&problem.c1),
        center: ProxCenter { x0: x0.clone(), u: u.clone() },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRecord {
    pub gamma: f64,
    pub j: f64,
    pub cost: f64,
    /// `|u_k - u_{k-1}|_{W12}`; `None` at the first gamma.
    pub control_distance: Option<f64>,
    pub j_drift: Option<f64>,
    /// `|u'|_2` of the solution (bounded along a minimising sequence).
    pub seminorm: f64,
    pub endpoint_violation: f64,
    pub pg_norm: f64,
    pub iterations: usize,
    pub rounds: usize,
    pub tube: Option<TubeReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationReport {
    pub mode: SolveMode,
    pub records: Vec<ContinuationRecord>,
    pub cont_tol: f64,
    pub converged: bool,
    /// Largest `|u'|_2` along the sequence.
    pub max_seminorm: f64,
    /// Whether the last iterate is feasible for the limit problem
    /// (`U`-membership, invariance, endpoint violation below the stall level).
    pub final_feasible: bool,
}

impl ContinuationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma,J,cost,control_distance,J_drift,seminorm,endpoint_violation,pg_norm,iterations,rounds\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.gamma,
                r.j,
                r.cost,
                opt(r.control_distance),
                opt(r.j_drift),
                r.seminorm,
                r.endpoint_violation,
                r.pg_norm,
                r.iterations,
                r.rounds
            )
            .unwrap();
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct ContinuationResult {
    pub solutions: Vec<PkSolution>,
    pub report: ContinuationReport,
    pub reference: Option<ReferenceArc>,
}

impl ContinuationResult {
    pub fn last(&self) -> &PkSolution {
        self.solutions.last().unwrap()
    }
}

/// Warm-started solves of `(P_gamma_k)` along `schedule`.
pub fn continuation_solve(
    model: &Model,
    problem: &MayerProblem,
    schedule: &PenaltySchedule,
    opts: &SolveOptions,
) -> Result<ContinuationResult> {
    problem.validate(model)?;
    let (mut x0, mut u) = problem.initial_guess(model)?;
    let mut solutions: Vec<PkSolution> = Vec::with_capacity(schedule.len());
    let mut rounds_used = Vec::with_capacity(schedule.len());
    let mut reference = None;

    match problem.mode {
        SolveMode::Nc => {
            let pair = match &problem.reference {
                Some(p) => p.clone(),
                None => {
                    // bootstrap from a plain solve at the first gamma
                    let st = plain_stage(problem, schedule.gammas[0], 0, &x0, &u);
                    let s = solve_pk(model, problem, st, &x0, &u, opts)?;
                    ReferencePair { x0: s.x0.as_slice().to_vec(), control: s.control }
                }
            };
            let arc = ReferenceArc::new(model, &pair, problem.nodes, opts)?;
            x0 = arc.x0.clone();
            u = arc.control.clone();
            for k in 0..schedule.len() {
                let stage = nc_stage(model, problem, &arc, schedule, k, opts)?;
                let mut s = solve_pk(model, problem, stage, &x0, &u, opts)?;
                s.tube = Some(arc.tube(problem.delta, &s)?);
                x0 = s.x0.clone();
                u = s.control.clone();
                solutions.push(s);
                rounds_used.push(1);
            }
            reference = Some(arc);
        }
        SolveMode::Plain => {
            let last = schedule.len() - 1;
            for k in 0..schedule.len() {
                let mut rounds = 0;
                loop {
                    let st = plain_stage(problem, schedule.gammas[k], k, &x0, &u);
                    let s = solve_pk(model, problem, st, &x0, &u, opts)?;
                    rounds += 1;
                    let moved = s.control.w12_distance(&u)? + (&s.x0 - &x0).norm();
                    x0 = s.x0.clone();
                    u = s.control.clone();
                    solutions.push(s);
                    if k < last || moved <= opts.cont_tol || rounds >= opts.max_rounds {
                        break;
                    }
                    solutions.pop();
                }
                rounds_used.push(rounds);
            }
        }
    }

    let mut records = Vec::with_capacity(solutions.len());
    for (i, s) in solutions.iter().enumerate() {
        let (dist, drift) = if i == 0 {
            (None, None)
        } else {
            let p = &solutions[i - 1];
            (Some(s.control.w12_distance(&p.control)?), Some(s.j - p.j))
        };
        records.push(ContinuationRecord {
            gamma: s.gamma,
            j: s.j,
            cost: s.cost,
            control_distance: dist,
            j_drift: drift,
            seminorm: s.control.seminorm(),
            endpoint_violation: s.endpoint_violation,
            pg_norm: s.pg_norm,
            iterations: s.iterations,
            rounds: rounds_used[i],
            tube: s.tube,
        });
    }
    let fin = solutions.last().unwrap();
    let converged = match problem.mode {
        SolveMode::Nc => records.last().unwrap().control_distance.is_none_or(|d| d <= opts.cont_tol),
        SolveMode::Plain => *rounds_used.last().unwrap() < opts.max_rounds || opts.max_rounds == 1,
    };
    let report = ContinuationReport {
        mode: problem.mode,
        cont_tol: opts.cont_tol,
        converged,
        max_seminorm: records.iter().map(|r| r.seminorm).fold(0.0, f64::max),
        final_feasible: model.controls.contains_path(&fin.control, 1e-12)
            && fin.run.diagnostics.max_psi <= model.set.boundary_tol
            && fin.endpoint_violation <= ENDPOINT_STALL,
        records,
    };
    Ok(ContinuationResult { solutions, report, reference })
}

/// Uniform sample of a primitive (unbounded parts use `[-1, 1]^n`).
fn sample_primitive(p: &Primitive, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match p {
        Primitive::Point { at } => at.clone(),
        Primitive::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect(),
        Primitive::Ball { center, radius } => loop {
            let v: Vec<f64> = center.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            if v.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
                break center.iter().zip(&v).map(|(c, a)| c + radius * a).collect();
            }
        },
        Primitive::Whole { dim } => (0..*dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub gamma: f64,
    pub points: usize,
    pub relative_errors: Vec<f64>,
    pub max_relative_error: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Directional derivatives of the transcribed objective against Richardson-
/// extrapolated central differences at random feasible points.
pub fn gradient_check(
    model: &Model,
    problem: &MayerProblem,
    gamma: f64,
    points: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<GradientCheckReport> {
    const WEIGHT: f64 = 1e3;
    const EPS: f64 = 1e-4;
    const TOL: f64 = 1e-5;
    let set = &model.set;
    let n = model.state_dim();
    let (gx0, gu) = problem.initial_guess(model)?;
    let c0 = plain_endpoint(&problem.c0);
    let stage = Stage {
        gamma,
        k: 0,
        c0: c0.clone(),
        c1: plain_endpoint(&problem.c1),
        center: ProxCenter { x0: gx0, u: gu },
    };
    let tr = build_transcription(model, gamma, &problem.cost, &stage, WEIGHT, problem.nodes, opts.n_steps);
    let blocks = tr.blocks();

    // draw every point up front so the sequence does not depend on scheduling
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(points);
    for _ in 0..points {
        let mut z = vec![0.0; tr.dim()];
        for (off, p) in &blocks {
            let v = if *off == 0 && tr.fixed_x0.is_none() {
                // strictly interior initial state near C0
                let mut x;
                loop {
                    let raw = Vector::from_vec(sample_primitive(&problem.c0.parts[0], &mut rng));
                    x = c0.project(set, &raw)?;
                    let jitter = Vector::from_iterator(n, (0..n).map(|_| rng.random_range(-0.05..0.05)));
                    let cand = &x + jitter;
                    if set.psi(&cand) < -0.01 {
                        x = cand;
                        break;
                    }
                    if set.psi(&x) < -0.01 {
                        break;
                    }
                }
                x.as_slice().to_vec()
            } else {
                sample_primitive(p, &mut rng)
            };
            z[*off..off + v.len()].copy_from_slice(&v);
        }
        let d: Vec<f64> = (0..tr.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        cases.push((z, d));
    }

    let errs = par::try_map(opts.mode, &cases, |(z, d)| {
        let (_, g, _) = tr.value_and_gradient(z)?;
        let ad: f64 = g.iter().zip(d).map(|(a, b)| a * b).sum();
        let central = |h: f64| -> Result<f64> {
            let zp: Vec<f64> = z.iter().zip(d).map(|(a, b)| a + h * b).collect();
            let zm: Vec<f64> = z.iter().zip(d).map(|(a, b)| a - h * b).collect();
            Ok((tr.value(&zp)? - tr.value(&zm)?) / (2.0 * h))
        };
        let fd = (4.0 * central(EPS / 2.0)? - central(EPS)?) / 3.0;
        Ok::<_, Error>((fd - ad).abs() / ad.abs().max(fd.abs()).max(1e-8))
    })?;
    let max = errs.iter().copied().fold(0.0, f64::max);
    Ok(GradientCheckReport {
        gamma,
        points,
        max_relative_error: max,
        passed: max <= TOL,
        relative_errors: errs,
        tol: TOL,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub best_cost: f64,
    pub best_angles: Vec<f64>,
    pub candidates: usize,
}

/// Exhaustive search over unit planar controls whose direction at each of the
/// nodes takes a value in `angles`, scoring `g` on the backward-Euler run.
pub fn brute_force_unit_controls(
    model: &Model,
    cost: &EndpointCost,
    x0: &Vector,
    gamma: f64,
    angles: &[f64],
    nodes: usize,
    n_steps: usize,
    mode: ExecMode,
) -> Result<BruteForceResult> {
    if model.control_dim() != 2 {
        return Err(Error::Precondition("brute-force grid needs planar controls".into()));
    }
    let base = angles.len();
    let total = base.pow(nodes as u32);
    let stage = Stage {
        gamma,
        k: 0,
        c0: EndpointSet::new(vec![Primitive::Point { at: x0.as_slice().to_vec() }], false),
        c1: EndpointSet::whole(model.state_dim()),
        center: ProxCenter { x0: x0.clone(), u: ControlPath::constant(&[0.0, 0.0], nodes) },
    };
    let tr = build_transcription(model, gamma, cost, &stage, 0.0, nodes, n_steps);
    let decode = |mut idx: usize| -> Vec<f64> {
        let mut out = Vec::with_capacity(nodes);
        for _ in 0..nodes {
            out.push(angles[idx % base]);
            idx /= base;
        }
        out
    };
    let scores = par::map_range(mode, total, |idx| -> Result<f64> {
        let th = decode(idx);
        let z: Vec<f64> = th.iter().flat_map(|a| [a.cos(), a.sin()]).collect();
        let fw = tr.forward(&z)?;
        Ok(cost.value(&fw.x0, fw.states.last().unwrap()))
    });
    let mut best = (f64::INFINITY, 0);
    for (i, s) in scores.into_iter().enumerate() {
        let s = s?;
        if s < best.0 {
            best = (s, i);
        }
    }
    Ok(BruteForceResult { best_cost: best.0, best_angles: decode(best.1), candidates: total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlSetFamily;
    use crate::geometry::{SetConstants, Shape, SublevelSet};
    use crate::model::{AffineField, Potential};

    fn reach1d() -> (Model, MayerProblem) {
        let set = SublevelSet::new(Shape::Interval { lo: -1.0, hi: 1.0 }, 0.9, SetConstants::default()).unwrap();
        let model = Model::new(
            set,
            AffineField::control_identity(1),
            Potential::zero(1),
            ControlSetFamily::constant(Primitive::Box { lo: vec![-1.0], hi: vec![1.0] }),
            1.0,
        )
        .unwrap();
        let mut cost = EndpointCost::zero(1);
        cost.a1 = vec![-1.0];
        let problem = MayerProblem {
            cost,
            c0: EndpointSet::new(vec![Primitive::Point { at: vec![0.0] }], false),
            c1: EndpointSet::new(vec![Primitive::Box { lo: vec![-1.0], hi: vec![1.0] }], false),
            delta: 1.0,
            delta_o: 0.5,
            reference: Some(ReferencePair { x0: vec![0.0], control: ControlPath::constant(&[1.0], 21) }),
            mode: SolveMode::Nc,
            nodes: 21,
        };
        (model, problem)
    }

    fn quick() -> SolveOptions {
        SolveOptions { n_steps: 400, n_out: 401, mode: ExecMode::Sequential, ..Default::default() }
    }

    #[test]
    fn gradient_matches_differences() {
        let (model, mut problem) = reach1d();
        problem.c0 = EndpointSet::new(vec![Primitive::Box { lo: vec![-0.5], hi: vec![0.5] }], false);
        problem.cost.w1 = 1.0;
        problem.cost.t1 = vec![0.3];
        let r = gradient_check(&model, &problem, 100.0, 5, 7, &quick()).unwrap();
        assert!(r.passed, "{:?}", r.relative_errors);
    }

    #[test]
    fn reach_right_single_gamma() {
        let (model, problem) = reach1d();
        let schedule = PenaltySchedule::new(vec![1e3], 1.0, 0.9).unwrap();
        let out = continuation_solve(&model, &problem, &schedule, &quick()).unwrap();
        let s = out.last();
        assert!((s.j + 1.0).abs() < 1e-2, "J = {}", s.j);
        assert!(s.control.nodes.iter().all(|n| (n[0] - 1.0).abs() < 1e-6));
    }

    #[test]
    fn zero_cost_returns_reference() {
        let (model, mut problem) = reach1d();
        problem.cost = EndpointCost::zero(1);
        problem.reference = Some(ReferencePair { x0: vec![0.0], control: ControlPath::constant(&[0.3], 21) });
        let schedule = PenaltySchedule::new(vec![1e2], 1.0, 0.9).unwrap();
        let out = continuation_solve(&model, &problem, &schedule, &quick()).unwrap();
        let s = out.last();
        assert!(s.control.nodes.iter().all(|n| (n[0] - 0.3).abs() < 1e-9));
        assert!(s.j.abs() < 1e-12);
    }

    #[test]
    fn evaluate_j_slope_offset() {
        let (model, problem) = reach1d();
        let ubar = ControlPath::constant(&[0.2], 11);
        let u = ControlPath::from_fn(11, |t| vec![0.2 + 0.1 * t]);
        let run = integrate_penalized(&model, 100.0, &Vector::zeros(1), &u, &StepControl::default(), 101).unwrap();
        let center = ProxCenter { x0: Vector::zeros(1), u: ubar };
        let j = evaluate_j(&EndpointCost::zero(1), &center, &run, &u).unwrap();
        assert!((j - 0.5 * 0.01).abs() < 1e-14);
        let _ = problem;
    }
}

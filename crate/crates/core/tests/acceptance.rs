//! Acceptance harness: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p sweeper-core --test acceptance`. Exits non-zero
//! when any criterion fails.

use std::time::{Duration, Instant};

use sweeper_core::dynamics::{check_bounds, integrate_penalized, N_OUT};
use sweeper_core::geometry::PenaltySchedule;
use sweeper_core::grid;
use sweeper_core::nc::check_nc;
use sweeper_core::ocp::{brute_force_unit_controls, continuation_solve, gradient_check, SolveMode};
use sweeper_core::oracle::{catching_up, multiplier_from_trajectory};
use sweeper_core::par::ExecMode;
use sweeper_core::scenario::{load_scenario, Scenario};
use sweeper_core::stiff::StepControl;
use sweeper_core::workflow::{self, Command, Flags, SolutionFile};

const CORPUS: [&str; 7] = ["slide1d", "reach1d", "disk-slide", "disk-push", "ellipse-graze", "interior-null", "steer"];
const GAMMAS: [f64; 4] = [10.0, 1e2, 1e3, 1e4];

fn scenario(name: &str) -> Scenario {
    let path = format!("{}/../../scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"));
    load_scenario(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn corpus() -> Vec<Scenario> {
    CORPUS.iter().map(|n| scenario(n)).collect()
}

fn step(sc: &Scenario) -> StepControl {
    let t = sc.tolerances();
    StepControl { atol: t.atol, rtol: t.rtol, ..StepControl::default() }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn within(t: Duration, budget: f64) -> bool {
    t.as_secs_f64() <= budget
}

fn invariance() -> Verdict {
    let t = Instant::now();
    let mut worst = (f64::NEG_INFINITY, String::new());
    for sc in corpus() {
        for g in GAMMAS {
            let run = integrate_penalized(&sc.model, g, &sc.x0, &sc.control, &step(&sc), N_OUT).unwrap();
            if run.diagnostics.max_psi > worst.0 {
                worst = (run.diagnostics.max_psi, format!("{} gamma={g:e}", sc.name()));
            }
        }
    }
    let el = t.elapsed();
    verdict(
        worst.0 <= 1e-8 && within(el, 10.0),
        format!("max psi {:e} at {}, {:.2?} of 10 s", worst.0, worst.1, el),
    )
}

fn schedule_identity() -> Verdict {
    let mut worst = 0.0f64;
    let mut count = 0;
    for sc in corpus() {
        let mut schedules = vec![sc.schedule.clone(), PenaltySchedule::new(GAMMAS.to_vec(), sc.model.mbar, sc.model.set.eta).unwrap()];
        schedules.extend(sc.solve_schedule.clone());
        schedules.push(PenaltySchedule::geometric(sc.model.mbar, sc.model.set.eta, None, 12).unwrap());
        for s in &schedules {
            for k in 0..s.len() {
                worst = worst.max(s.identity_defect(k));
                count += 1;
            }
        }
    }
    verdict(worst <= 1e-12, format!("worst relative defect {worst:e} over {count} entries"))
}

fn bound_suite() -> Verdict {
    let mut worst = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut runs = 0;
    for sc in corpus() {
        let schedule = PenaltySchedule::new(GAMMAS.to_vec(), sc.model.mbar, sc.model.set.eta).unwrap();
        for k in 0..schedule.len() {
            let start = sc.model.set.start_in_ck(&sc.x0, schedule.rhos[k]).unwrap();
            if !sc.model.set.in_ck(schedule.alphas[k], &start) {
                continue;
            }
            let run = integrate_penalized(&sc.model, schedule.gammas[k], &start, &sc.control, &step(&sc), N_OUT).unwrap();
            let b = check_bounds(&sc.model, &run, &schedule, true);
            worst.0 = worst.0.max(b.xi_excess);
            worst.1 = worst.1.max(b.speed_excess);
            worst.2 = worst.2.max(b.containment.unwrap());
            runs += 1;
        }
    }
    verdict(
        runs > 0 && worst.0 <= 1e-6 && worst.1 <= 1e-6 && worst.2 <= 1e-8,
        format!("{runs} runs, xi excess {:e}, speed excess {:e}, psi + alpha {:e}", worst.0, worst.1, worst.2),
    )
}

fn strong_convergence() -> Verdict {
    let t = Instant::now();
    let sc = scenario("slide1d");
    let flags = Flags { gammas: Some(GAMMAS.to_vec()), ..Flags::default() };
    let schedule = PenaltySchedule::new(GAMMAS.to_vec(), sc.model.mbar, sc.model.set.eta).unwrap();
    let opts = sc.sweep_options(&flags, &schedule);
    let reference = sc.analytic_reference(opts.n_out).unwrap().expect("slide1d declares an analytic reference");
    let (report, _) = sweeper_core::convergence::gamma_sweep(&sc.model, &schedule, &sc.x0, &sc.control, &reference, &opts).unwrap();
    let el = t.elapsed();
    let last = report.records.last().unwrap();
    let pass = report.velocity_decreasing
        && report.xi_decreasing == Some(true)
        && last.velocity_l2_error <= 0.05
        && last.xi_l2_error <= 0.05
        && last.state_sup_error <= 0.01
        && within(el, 30.0);
    let errs: Vec<String> =
        report.records.iter().map(|r| format!("{:.2e}/{:.2e}", r.velocity_l2_error, r.xi_l2_error)).collect();
    verdict(
        pass,
        format!(
            "velocity/xi L2 [{}], sup {:e}, {} grid nodes, {:.2?} of 30 s",
            errs.join(", "),
            last.state_sup_error,
            opts.n_out,
            el
        ),
    )
}

fn oracle_equivalence() -> Verdict {
    let sc = scenario("disk-slide");
    let out = grid::uniform(N_OUT);
    let traj = catching_up(&sc.model, &sc.x0, &sc.control, 1e-4).unwrap();
    let xi = multiplier_from_trajectory(&sc.model, &traj, &sc.control).unwrap().resample(&out);
    let run = integrate_penalized(&sc.model, 1e4, &sc.x0, &sc.control, &step(&sc), N_OUT).unwrap();
    let gap = run.trajectory.sup_distance(&traj.resample(&out)).unwrap();
    let contact: Vec<usize> = (0..N_OUT).filter(|&i| xi.support_mask[i]).collect();
    let xi_err = contact.iter().map(|&i| (xi.xi[i] - 0.5).abs()).fold(0.0, f64::max);
    verdict(
        gap <= 5e-3 && !contact.is_empty() && xi_err <= 5e-3,
        format!("state gap {gap:e}, |xi - 0.5| {xi_err:e} on {} contact nodes", contact.len()),
    )
}

fn multiplier_bound() -> Verdict {
    let mut worst = (f64::NEG_INFINITY, String::new());
    for sc in corpus() {
        let traj = catching_up(&sc.model, &sc.x0, &sc.control, sc.tolerances().oracle_step).unwrap();
        let xi = multiplier_from_trajectory(&sc.model, &traj, &sc.control).unwrap();
        let excess = xi.max() - sc.model.mbar / (2.0 * sc.model.set.eta);
        if excess > worst.0 {
            worst = (excess, sc.name().to_string());
        }
    }
    verdict(worst.0 <= 1e-6, format!("largest max xi - Mbar/(2 eta) = {:e} ({})", worst.0, worst.1))
}

fn gradients() -> Verdict {
    let t = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut points = 0;
    for (i, sc) in corpus().iter().enumerate() {
        let problem = sc.problem.as_ref().unwrap();
        let opts = sc.solve_options(&Flags::default());
        let r = gradient_check(&sc.model, problem, 1e4, 20, 7 + i as u64, &opts).unwrap();
        points += r.points;
        if r.max_relative_error >= worst.0 {
            worst = (r.max_relative_error, sc.name().to_string());
        }
    }
    let el = t.elapsed();
    verdict(
        worst.0 <= 1e-5 && within(el, 20.0),
        format!("{points} points, worst relative error {:e} ({}), {:.2?} of 20 s", worst.0, worst.1, el),
    )
}

fn ocp_optimum() -> Verdict {
    let t = Instant::now();
    let reach = scenario("reach1d");
    let r = continuation_solve(
        &reach.model,
        reach.problem.as_ref().unwrap(),
        reach.solve_schedule.as_ref().unwrap(),
        &reach.solve_options(&Flags::default()),
    )
    .unwrap();
    let j = r.last().j;

    let push = scenario("disk-push");
    let problem = push.problem.as_ref().unwrap();
    let opts = push.solve_options(&Flags::default());
    let p = continuation_solve(&push.model, problem, push.solve_schedule.as_ref().unwrap(), &opts).unwrap();
    let cost = p.last().cost;
    let angles = [-0.4, -0.2, 0.0, 0.2, 0.4];
    let brute =
        brute_force_unit_controls(&push.model, &problem.cost, &push.x0, p.last().gamma, &angles, 5, 1000, ExecMode::Parallel)
            .unwrap();
    let el = t.elapsed();
    let pass = (j + 1.0).abs() <= 1e-2
        && (cost - 1.0).abs() <= 5e-2
        && (brute.best_cost - 1.0).abs() <= 5e-2
        && cost <= brute.best_cost + 5e-3
        && within(el, 120.0);
    verdict(
        pass,
        format!(
            "reach1d J {j:.6}, disk-push cost {cost:.6}, brute force {:.6} over {} controls, {:.2?} of 120 s",
            brute.best_cost, brute.candidates, el
        ),
    )
}

fn necessary_conditions() -> Verdict {
    let sc = scenario("reach1d");
    let mut problem = sc.problem.clone().unwrap();
    problem.mode = SolveMode::Nc;
    let r = continuation_solve(&sc.model, &problem, sc.solve_schedule.as_ref().unwrap(), &sc.solve_options(&Flags::default()))
        .unwrap();
    let bundles: Vec<_> = r.solutions.iter().map(|s| s.bundle(SolveMode::Nc)).collect();
    let out = check_nc(&sc.model, &problem, &bundles, &sc.nc_options(&Flags::default())).unwrap();
    let rep = &out.report;
    let need = [
        ("maximization", 1e-3),
        ("transversality_initial", 1e-3),
        ("transversality_final", 1e-3),
        ("complementary_slackness", 1e-3),
        ("nu_mass_off_contact", 1e-3),
        ("nontriviality", 1e-12),
    ];
    let mut pass = (rep.gamma - 1e4).abs() <= 1e-9;
    let mut parts = vec![format!("gamma {:e}", rep.gamma)];
    for (name, tol) in need {
        let c = rep.condition(name).unwrap_or_else(|| panic!("no condition {name}"));
        pass &= c.residual >= 0.0 && c.residual <= tol;
        parts.push(format!("{name} {:.1e}", c.residual));
    }
    verdict(pass, parts.join(", "))
}

/// Every workflow on every scenario, artifacts flattened in order.
fn full_suite(exec: ExecMode) -> Vec<(String, String)> {
    let flags = Flags { exec, ..Flags::default() };
    let mut out = Vec::new();
    for sc in corpus() {
        for cmd in [Command::Certify, Command::Simulate, Command::Oracle, Command::Sweep, Command::Solve] {
            let o = workflow::run(cmd, &sc, &flags).unwrap();
            if cmd == Command::Solve && sc.problem.as_ref().unwrap().mode == SolveMode::Nc {
                let file: SolutionFile = serde_json::from_str(&o.artifact(&format!("{}.solution.json", sc.name())).unwrap().contents).unwrap();
                let nc = workflow::run(Command::CheckNc, &sc, &Flags { solution: Some(file), ..flags.clone() }).unwrap();
                out.extend(nc.artifacts.into_iter().map(|a| (a.name, a.contents)));
            }
            out.extend(o.artifacts.into_iter().map(|a| (a.name, a.contents)));
        }
    }
    out
}

fn determinism() -> Verdict {
    let a = full_suite(ExecMode::Parallel);
    let b = full_suite(ExecMode::Parallel);
    let c = full_suite(ExecMode::Sequential);
    let differ: Vec<&str> = a
        .iter()
        .zip(&b)
        .zip(&c)
        .filter(|((x, y), z)| x != y || x != z)
        .map(|((x, _), _)| x.0.as_str())
        .collect();
    let bytes: usize = a.iter().map(|x| x.1.len()).sum();
    verdict(
        a.len() == b.len() && a.len() == c.len() && differ.is_empty(),
        format!("{} artifacts, {bytes} bytes, differing: {:?}", a.len(), differ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        ("invariance", invariance),
        ("schedule identity", schedule_identity),
        ("bound suite", bound_suite),
        ("strong convergence", strong_convergence),
        ("oracle equivalence", oracle_equivalence),
        ("multiplier bound", multiplier_bound),
        ("gradient correctness", gradients),
        ("ocp optimum", ocp_optimum),
        ("necessary conditions", necessary_conditions),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let v = f();
        failed += usize::from(!v.pass);
        println!("criterion {:>2} {name}: {} ({})", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

//! The penalised system `x' = f_Phi(x, u) - gamma exp(gamma psi(x)) grad psi(x)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::control::ControlPath;
use crate::error::{Error, Result};
use crate::geometry::{alpha_of_gamma, Matrix, PenaltySchedule, Vector};
use crate::grid;
use crate::model::{penalty_multiplier, Model};
use crate::stiff::{self, DenseSolution, StepControl, StepStats, StiffRhs};

/// Default number of output nodes.
pub const N_OUT: usize = 2001;

/// Newton iterates with `gamma psi` above this are damped back.
const EXPONENT_CAP: f64 = 40.0;

/// States and velocities on a time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn state(&self, i: usize) -> Vector {
        Vector::from_column_slice(&self.states[i])
    }

    pub fn velocity(&self, i: usize) -> Vector {
        Vector::from_column_slice(&self.velocities[i])
    }

    pub fn eval(&self, t: f64) -> Vector {
        Vector::from_vec(grid::interp_rows(&self.grid, &self.states, t))
    }

    pub fn first(&self) -> Vector {
        self.state(0)
    }

    pub fn last(&self) -> Vector {
        self.state(self.grid.len() - 1)
    }

    /// `sup_t |x(t) - y(t)|` on a shared grid.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        grid::check_same_grid(&self.grid, &other.grid)?;
        Ok(max_row_distance(&self.states, &other.states))
    }

    /// `|x' - y'|_2` on a shared grid.
    pub fn velocity_l2_distance(&self, other: &Trajectory) -> Result<f64> {
        grid::check_same_grid(&self.grid, &other.grid)?;
        let diff: Vec<Vec<f64>> = self
            .velocities
            .iter()
            .zip(&other.velocities)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Ok(grid::l2_norm_rows(&self.grid, &diff))
    }

    /// `int |x'|^2`.
    pub fn energy(&self) -> f64 {
        grid::l2_norm_rows(&self.grid, &self.velocities).powi(2)
    }

    pub fn csv_header(&self) -> String {
        let n = self.dim();
        let mut h = String::from("t");
        for i in 1..=n {
            write!(h, ",x_{i}").unwrap();
        }
        for i in 1..=n {
            write!(h, ",xdot_{i}").unwrap();
        }
        h
    }

    pub fn csv_row(&self, i: usize) -> String {
        let mut row = format!("{}", self.grid[i]);
        for v in self.states[i].iter().chain(&self.velocities[i]) {
            write!(row, ",{v}").unwrap();
        }
        row
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for i in 0..self.grid.len() {
            out.push_str(&self.csv_row(i));
            out.push('\n');
        }
        out
    }
}

pub(crate) fn max_row_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub max_psi: f64,
    pub max_xi: f64,
    pub max_speed: f64,
    /// `int |x'|^2` by trapezoid on the output grid.
    pub energy: f64,
    /// `Mbar^2 + 2`.
    pub energy_bound: f64,
    pub steps: StepStats,
}

/// One solution of the penalised system on the output grid.
#[derive(Clone, Debug)]
pub struct PenaltyRun {
    pub trajectory: Trajectory,
    pub gamma: f64,
    pub xi: Vec<f64>,
    pub psi: Vec<f64>,
    pub diagnostics: RunDiagnostics,
    /// Accepted integrator steps, kept for interpolation off the output grid.
    pub dense: DenseSolution,
}

impl PenaltyRun {
    pub fn grid(&self) -> &[f64] {
        &self.trajectory.grid
    }

    pub fn to_csv(&self) -> String {
        let t = &self.trajectory;
        let mut out = t.csv_header();
        out.push_str(",xi,psi\n");
        for i in 0..t.grid.len() {
            out.push_str(&t.csv_row(i));
            writeln!(out, ",{},{}", self.xi[i], self.psi[i]).unwrap();
        }
        out
    }
}

/// Right-hand side of the penalised system for a fixed control path.
pub struct PenaltyRhs<'a> {
    pub model: &'a Model,
    pub gamma: f64,
    pub control: &'a ControlPath,
}

impl StiffRhs for PenaltyRhs<'_> {
    fn dim(&self) -> usize {
        self.model.state_dim()
    }

    fn eval(&self, t: f64, x: &Vector) -> Vector {
        self.model.penalized_rhs(self.gamma, x, &self.control.eval(t))
    }

    fn jac(&self, _t: f64, x: &Vector) -> Matrix {
        self.model.penalized_jac(self.gamma, x)
    }

    fn admissible(&self, x: &Vector) -> bool {
        self.gamma * self.model.set.psi(x) <= EXPONENT_CAP
    }
}

/// Solves the penalised system from `x0` under `u` and samples it on a
/// uniform grid of `n_out` nodes.
pub fn integrate_penalized(
    model: &Model,
    gamma: f64,
    x0: &Vector,
    u: &ControlPath,
    ctrl: &StepControl,
    n_out: usize,
) -> Result<PenaltyRun> {
    alpha_of_gamma(gamma, model.set.eta, model.mbar)?;
    let set = &model.set;
    if x0.len() != model.state_dim() || u.dim() != model.control_dim() {
        return Err(Error::Precondition("state or control dimension mismatch".into()));
    }
    let psi0 = set.psi(x0);
    if psi0 > set.boundary_tol {
        return Err(Error::Precondition(format!("initial state outside C (psi = {psi0:e})")));
    }
    let rhs = PenaltyRhs { model, gamma, control: u };
    let mut ctrl = *ctrl;
    if ctrl.h0.is_none() {
        ctrl.h0 = Some((1.0 / gamma).min(1e-2));
    }
    let (dense, steps) = stiff::integrate(&rhs, 0.0, 1.0, x0, &u.grid, &ctrl)?;

    let out = grid::uniform(n_out);
    let xs = dense.sample(&out);
    let mut states = Vec::with_capacity(n_out);
    let mut velocities = Vec::with_capacity(n_out);
    let mut xi = Vec::with_capacity(n_out);
    let mut psi = Vec::with_capacity(n_out);
    for (t, x) in out.iter().zip(&xs) {
        let p = set.psi(x);
        if p > set.boundary_tol {
            return Err(Error::InvarianceViolation { t: *t, psi: p, tol: set.boundary_tol });
        }
        velocities.push(rhs.eval(*t, x).as_slice().to_vec());
        states.push(x.as_slice().to_vec());
        xi.push(penalty_multiplier(gamma, p));
        psi.push(p);
    }
    let trajectory = Trajectory { grid: out, states, velocities };
    let max_speed = trajectory
        .velocities
        .iter()
        .map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let diagnostics = RunDiagnostics {
        max_psi: psi.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        max_xi: xi.iter().copied().fold(0.0, f64::max),
        max_speed,
        energy: trajectory.energy(),
        energy_bound: model.mbar * model.mbar + 2.0,
        steps,
    };
    Ok(PenaltyRun { trajectory, gamma, xi, psi, diagnostics, dense })
}

/// Residuals of the a priori bounds for one run; positive means violated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub gamma: f64,
    pub alpha: f64,
    /// `max psi + alpha_k`; `None` when the run did not start in `C(k)`.
    pub containment: Option<f64>,
    /// `max xi - 2 Mbar / eta`.
    pub xi_excess: f64,
    /// `max |x'| - (Mbar + 2 Mbar Mbar_psi / eta)`.
    pub speed_excess: f64,
    /// `int |x'|^2 - (Mbar^2 + 2)`.
    pub energy_excess: f64,
    /// `max psi`, for the invariance check.
    pub max_psi: f64,
}

impl BoundReport {
    pub fn passed(&self, tol: f64, containment_tol: f64) -> bool {
        self.xi_excess <= tol
            && self.speed_excess <= tol
            && self.containment.is_none_or(|c| c <= containment_tol)
            && self.max_psi <= containment_tol
    }
}

pub fn check_bounds(model: &Model, run: &PenaltyRun, schedule: &PenaltySchedule, started_in_ck: bool) -> BoundReport {
    let alpha = alpha_of_gamma(run.gamma, schedule.eta, schedule.mbar).unwrap_or(0.0);
    let d = &run.diagnostics;
    let speed_bound = schedule.mbar + 2.0 * schedule.mbar * model.set.mbar_psi / schedule.eta;
    BoundReport {
        gamma: run.gamma,
        alpha,
        containment: started_in_ck.then_some(d.max_psi + alpha),
        xi_excess: d.max_xi - schedule.xi_bound(),
        speed_excess: d.max_speed - speed_bound,
        energy_excess: d.energy - d.energy_bound,
        max_psi: d.max_psi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlSetFamily;
    use crate::geometry::{SetConstants, Shape, SublevelSet};
    use crate::model::{AffineField, Potential};
    use crate::sets::Primitive;

    fn slide_model() -> Model {
        let set = SublevelSet::new(Shape::Interval { lo: -1.0, hi: 1.0 }, 0.9, SetConstants::default()).unwrap();
        Model::new(
            set,
            AffineField::constant(Vector::from_element(1, 2.0), 1),
            Potential::zero(1),
            ControlSetFamily::constant(Primitive::Box { lo: vec![0.0], hi: vec![0.0] }),
            2.0,
        )
        .unwrap()
    }

    /// Root of `r gamma exp(gamma (r^2 - 1)) = 1` near 1.
    fn equilibrium(gamma: f64) -> f64 {
        let mut r: f64 = 1.0 - (gamma.ln() / (2.0 * gamma));
        for _ in 0..100 {
            let e = (gamma * (r * r - 1.0)).exp();
            let f = r * gamma * e - 1.0;
            let df = gamma * e + r * gamma * e * 2.0 * gamma * r;
            r -= f / df;
        }
        r
    }

    #[test]
    fn slide_reaches_penalty_equilibrium() {
        let m = slide_model();
        let u = ControlPath::constant(&[0.0], 2);
        let gamma = 1e4;
        let run = integrate_penalized(&m, gamma, &Vector::zeros(1), &u, &StepControl::default(), N_OUT).unwrap();
        let r = equilibrium(gamma);
        assert!((run.trajectory.last()[0] - r).abs() <= 1e-6, "{} vs {r}", run.trajectory.last()[0]);
        assert!(run.diagnostics.max_psi <= 1e-8);
        assert!(run.diagnostics.energy <= run.diagnostics.energy_bound);
    }

    #[test]
    fn xi_recomputes_bit_for_bit() {
        let m = slide_model();
        let u = ControlPath::constant(&[0.0], 2);
        let run = integrate_penalized(&m, 100.0, &Vector::zeros(1), &u, &StepControl::default(), 201).unwrap();
        for (i, xi) in run.xi.iter().enumerate() {
            let x = run.trajectory.state(i);
            assert_eq!(*xi, penalty_multiplier(100.0, m.set.psi(&x)));
        }
    }

    #[test]
    fn zero_field_interior_start_is_constant() {
        let mut m = slide_model();
        m.field = AffineField::constant(Vector::zeros(1), 1);
        let u = ControlPath::constant(&[0.0], 2);
        let x0 = Vector::from_element(1, 0.3);
        let run = integrate_penalized(&m, 1e4, &x0, &u, &StepControl::default(), 101).unwrap();
        assert!(run.trajectory.states.iter().all(|s| (s[0] - 0.3).abs() <= 1e-15));
        assert!(run.diagnostics.max_xi < 1e-300);
        let sched = PenaltySchedule::new(vec![1e4], 2.0, 0.9).unwrap();
        let rep = check_bounds(&m, &run, &sched, true);
        assert!(rep.passed(1e-6, 1e-8));
        assert!(rep.speed_excess < 0.0);
    }

    #[test]
    fn bounds_hold_from_ck_start() {
        let m = slide_model();
        let sched = PenaltySchedule::new(vec![10.0, 100.0, 1000.0, 1e4], 2.0, 0.9).unwrap();
        for k in 0..sched.len() {
            let run = integrate_penalized(&m, sched.gammas[k], &Vector::zeros(1), &ControlPath::constant(&[0.0], 2), &StepControl::default(), 501)
                .unwrap();
            let rep = check_bounds(&m, &run, &sched, true);
            assert!(rep.passed(1e-6, 1e-8), "{rep:?}");
        }
    }

    #[test]
    fn rejects_exterior_start_and_small_gamma() {
        let m = slide_model();
        let u = ControlPath::constant(&[0.0], 2);
        let out = Vector::from_element(1, 1.5);
        assert!(matches!(
            integrate_penalized(&m, 100.0, &out, &u, &StepControl::default(), 11),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            integrate_penalized(&m, 2.0, &Vector::zeros(1), &u, &StepControl::default(), 11),
            Err(Error::ScheduleDomain { .. })
        ));
    }

    #[test]
    fn csv_has_declared_columns() {
        let m = slide_model();
        let run = integrate_penalized(&m, 10.0, &Vector::zeros(1), &ControlPath::constant(&[0.0], 2), &StepControl::default(), 3).unwrap();
        let csv = run.to_csv();
        assert!(csv.starts_with("t,x_1,xdot_1,xi,psi\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}

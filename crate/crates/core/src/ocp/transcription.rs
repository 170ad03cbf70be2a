//! Direct transcription of `(P_gamma_k)`: backward-Euler states on a fixed
//! grid, piecewise-linear control nodes, and the exact discrete adjoint.

use serde::{Deserialize, Serialize};

use crate::control::ControlPath;
use crate::dynamics::PenaltyRhs;
use crate::error::{Error, Result};
use crate::geometry::{Matrix, Vector};
use crate::grid;
use crate::model::Model;
use crate::ocp::endpoint::EndpointSet;
use crate::ocp::optimizer::KronMetric;
use crate::sets::Primitive;
use crate::stiff::{implicit_solve, StepControl};

/// Default number of backward-Euler steps.
pub const N_STEPS: usize = 2000;

/// `g(x0, x1) = a0.x0 + a1.x1 + w0/2 |x0 - t0|^2 + w1/2 |x1 - t1|^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointCost {
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
    #[serde(default)]
    pub w0: f64,
    pub t0: Vec<f64>,
    #[serde(default)]
    pub w1: f64,
    pub t1: Vec<f64>,
}

impl EndpointCost {
    pub fn zero(n: usize) -> Self {
        EndpointCost { a0: vec![0.0; n], a1: vec![0.0; n], w0: 0.0, t0: vec![0.0; n], w1: 0.0, t1: vec![0.0; n] }
    }

    pub fn value(&self, x0: &Vector, x1: &Vector) -> f64 {
        let a0 = Vector::from_column_slice(&self.a0);
        let a1 = Vector::from_column_slice(&self.a1);
        let t0 = Vector::from_column_slice(&self.t0);
        let t1 = Vector::from_column_slice(&self.t1);
        a0.dot(x0) + a1.dot(x1) + 0.5 * self.w0 * (x0 - t0).norm_squared() + 0.5 * self.w1 * (x1 - t1).norm_squared()
    }

    pub fn grad_x0(&self, x0: &Vector) -> Vector {
        Vector::from_column_slice(&self.a0) + (x0 - Vector::from_column_slice(&self.t0)) * self.w0
    }

    pub fn grad_x1(&self, x1: &Vector) -> Vector {
        Vector::from_column_slice(&self.a1) + (x1 - Vector::from_column_slice(&self.t1)) * self.w1
    }
}

/// Proximal centre of the objective: `(xbar(0), ubar)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxCenter {
    pub x0: Vector,
    pub u: ControlPath,
}

/// `1/2 (|u(0) - ubar(0)|^2 + int |u' - ubar'|^2 + |x0 - xbar0|^2)`, exact
/// for piecewise-linear controls on a shared grid.
pub fn prox_value(center: &ProxCenter, x0: &Vector, u: &ControlPath) -> Result<f64> {
    grid::check_same_grid(&u.grid, &center.u.grid)?;
    let du0: f64 = u.nodes[0].iter().zip(&center.u.nodes[0]).map(|(a, b)| (a - b) * (a - b)).sum();
    let mut z = 0.0;
    for c in 0..u.len() - 1 {
        let h = u.grid[c + 1] - u.grid[c];
        z += (u.cell_slope(c) - center.u.cell_slope(c)).norm_squared() * h;
    }
    Ok(0.5 * (du0 + z + (x0 - &center.x0).norm_squared()))
}

/// The smooth NLP: decision vector `[x0 (when free), u nodes]`.
pub struct Transcription<'a> {
    pub model: &'a Model,
    pub gamma: f64,
    pub cost: &'a EndpointCost,
    pub c0: &'a EndpointSet,
    pub c1: &'a EndpointSet,
    pub center: &'a ProxCenter,
    /// Exterior penalty weight for the endpoint sets.
    pub weight: f64,
    /// Control-node grid.
    pub node_grid: Vec<f64>,
    pub n_steps: usize,
    /// `Some` when `C0` pins the initial state.
    pub fixed_x0: Option<Vector>,
}

/// Forward solution of the transcription.
#[derive(Clone, Debug)]
pub struct Forward {
    pub x0: Vector,
    pub control: ControlPath,
    pub states: Vec<Vector>,
    /// Transcribed objective including the endpoint penalty.
    pub value: f64,
    /// Objective without the endpoint penalty.
    pub objective: f64,
    pub endpoint_violation: f64,
}

impl<'a> Transcription<'a> {
    pub fn n_free_x0(&self) -> usize {
        if self.fixed_x0.is_some() {
            0
        } else {
            self.model.state_dim()
        }
    }

    pub fn dim(&self) -> usize {
        self.n_free_x0() + self.node_grid.len() * self.model.control_dim()
    }

    pub fn split(&self, z: &[f64]) -> (Vector, ControlPath) {
        let k = self.n_free_x0();
        let x0 = match &self.fixed_x0 {
            Some(x) => x.clone(),
            None => Vector::from_column_slice(&z[..k]),
        };
        (x0, ControlPath::from_flat(self.node_grid.clone(), self.model.control_dim(), &z[k..]))
    }

    pub fn join(&self, x0: &Vector, u: &ControlPath) -> Vec<f64> {
        let mut z = if self.fixed_x0.is_some() { Vec::new() } else { x0.as_slice().to_vec() };
        z.extend(u.flatten());
        z
    }

    /// Constraint blocks for the optimizer: free `x0`, then one block per node.
    pub fn blocks(&self) -> Vec<(usize, Primitive)> {
        let n = self.model.state_dim();
        let m = self.model.control_dim();
        let mut out = Vec::new();
        let mut at = 0;
        if self.fixed_x0.is_none() {
            out.push((0, Primitive::Whole { dim: n }));
            at = n;
        }
        for (i, &t) in self.node_grid.iter().enumerate() {
            out.push((at + i * m, self.model.controls.at(t).clone()));
        }
        out
    }

    fn step_control() -> StepControl {
        StepControl { newton_tol: 1e-14, newton_max_iter: 100, ..StepControl::default() }
    }

    /// Backward-Euler states `x_{j+1} = x_j + h F(x_{j+1}, u(t_{j+1}))`.
    pub fn forward(&self, z: &[f64]) -> Result<Forward> {
        let (x0, u) = self.split(z);
        let set = &self.model.set;
        if set.psi(&x0) > set.boundary_tol {
            return Err(Error::Precondition(format!("initial state outside C (psi = {:e})", set.psi(&x0))));
        }
        let rhs = PenaltyRhs { model: self.model, gamma: self.gamma, control: &u };
        let times = grid::uniform(self.n_steps + 1);
        let ctrl = Self::step_control();
        let mut states = Vec::with_capacity(times.len());
        states.push(x0.clone());
        for j in 0..self.n_steps {
            let h = times[j + 1] - times[j];
            let prev = &states[j];
            let (next, _) = implicit_solve(&rhs, times[j + 1], prev, prev, h, &ctrl).ok_or_else(|| {
                Error::StepFailure {
                    t: times[j + 1],
                    state: prev.as_slice().to_vec(),
                    reason: "backward-Euler Newton did not converge".into(),
                }
            })?;
            states.push(next);
        }
        let x1 = states.last().unwrap();
        let objective = self.cost.value(&x0, x1) + prox_value(self.center, &x0, &u)?;
        let d1 = self.c1.distance(set, x1)?;
        let d0 = if self.fixed_x0.is_some() { 0.0 } else { self.c0.distance(set, &x0)? };
        let value = objective + self.weight * (d0 * d0 + d1 * d1);
        Ok(Forward { x0, control: u, states, value, objective, endpoint_violation: d0.max(d1) })
    }

    pub fn value(&self, z: &[f64]) -> Result<f64> {
        Ok(self.forward(z)?.value)
    }

    /// Objective and gradient by the discrete adjoint of the forward sweep.
    pub fn value_and_gradient(&self, z: &[f64]) -> Result<(f64, Vec<f64>, Forward)> {
        let fw = self.forward(z)?;
        let set = &self.model.set;
        let n = self.model.state_dim();
        let m = self.model.control_dim();
        let times = grid::uniform(self.n_steps + 1);
        let x0 = &fw.x0;
        let x1 = fw.states.last().unwrap();
        let u = &fw.control;
        let eye = Matrix::identity(n, n);
        let b = self.model.f_phi_jac_u();

        // d/dx1 of the terminal part
        let mut seed = self.cost.grad_x1(x1) + (x1 - self.c1.project(set, x1)?) * (2.0 * self.weight);
        let mut grad = vec![0.0; self.dim()];
        let k0 = self.n_free_x0();
        for j in (1..=self.n_steps).rev() {
            let h = times[j] - times[j - 1];
            let xj = &fw.states[j];
            let a = eye.clone() - self.model.penalized_jac(self.gamma, xj) * h;
            let lam = a.transpose().lu().solve(&seed).ok_or_else(|| Error::StepFailure {
                t: times[j],
                state: xj.as_slice().to_vec(),
                reason: "singular adjoint system".into(),
            })?;
            // control enters through u(t_j), linear in the two adjacent nodes
            let gu = b.transpose() * &lam * h;
            let t = times[j];
            let c = grid::locate(&u.grid, t);
            let (ta, tb) = (u.grid[c], u.grid[c + 1]);
            let s = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            for r in 0..m {
                grad[k0 + c * m + r] += (1.0 - s) * gu[r];
                grad[k0 + (c + 1) * m + r] += s * gu[r];
            }
            seed = lam;
        }
        // seed is now dJ/dx0 through the dynamics
        if self.fixed_x0.is_none() {
            let gx0 = seed
                + self.cost.grad_x0(x0)
                + (x0 - &self.center.x0)
                + (x0 - self.c0.project(set, x0)?) * (2.0 * self.weight);
            grad[..n].copy_from_slice(gx0.as_slice());
        }
        // proximal control terms
        let ubar = &self.center.u;
        for r in 0..m {
            grad[k0 + r] += u.nodes[0][r] - ubar.nodes[0][r];
        }
        for c in 0..u.len() - 1 {
            let d = u.cell_slope(c) - ubar.cell_slope(c);
            for r in 0..m {
                grad[k0 + (c + 1) * m + r] += d[r];
                grad[k0 + c * m + r] -= d[r];
            }
        }
        Ok((fw.value, grad, fw))
    }

    /// Inverse of the Hessian of the proximal term, the natural metric for
    /// the decision vector: identity on `x0`, and per control component the
    /// tridiagonal `e0 e0^T + sum_c (e_{c+1} - e_c)(e_{c+1} - e_c)^T / h_c`.
    pub fn prox_metric(&self) -> KronMetric {
        let g = &self.node_grid;
        let inv_h: Vec<f64> = g.windows(2).map(|w| 1.0 / (w[1] - w[0])).collect();
        let mut diag = vec![0.0; g.len()];
        diag[0] = 1.0;
        for (c, ih) in inv_h.iter().enumerate() {
            diag[c] += ih;
            diag[c + 1] += ih;
        }
        KronMetric { head: self.n_free_x0(), block: self.model.control_dim(), diag, off: inv_h.iter().map(|v| -v).collect() }
    }

    /// Forward states sampled as a trajectory grid (the transcription grid).
    pub fn time_grid(&self) -> Vec<f64> {
        grid::uniform(self.n_steps + 1)
    }
}

/// Discrete adjoint of the transcription expressed as the costate `p` of the
/// continuous adjoint convention (`p(1) = -dJ/dx1`), for consistency checks.
pub fn discrete_costate(tr: &Transcription, fw: &Forward, p_terminal: &Vector) -> Result<Vec<Vector>> {
    let n = tr.model.state_dim();
    let eye = Matrix::identity(n, n);
    let times = tr.time_grid();
    let mut out = vec![Vector::zeros(n); tr.n_steps + 1];
    out[tr.n_steps] = p_terminal.clone();
    let mut seed = p_terminal.clone();
    for j in (1..=tr.n_steps).rev() {
        let h = times[j] - times[j - 1];
        let a = eye.clone() - tr.model.penalized_jac(tr.gamma, &fw.states[j]) * h;
        seed = a.transpose().lu().solve(&seed).ok_or_else(|| Error::StepFailure {
            t: times[j],
            state: fw.states[j].as_slice().to_vec(),
            reason: "singular adjoint system".into(),
        })?;
        out[j - 1] = seed.clone();
    }
    Ok(out)
}

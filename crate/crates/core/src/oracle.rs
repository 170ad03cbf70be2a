//! Catching-up (Moreau) scheme for the unpenalised sweeping process and
//! recovery of its multiplier from a trajectory.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::control::ControlPath;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::geometry::{Matrix, Shape, SublevelSet, Vector};
use crate::grid;
use crate::model::Model;

/// Nearest point of `C` to `y`.
pub fn proj_c(set: &SublevelSet, y: &Vector) -> Result<Vector> {
    if set.psi(y) <= 0.0 {
        return Ok(y.clone());
    }
    match &set.shape {
        Shape::Interval { lo, hi } => Ok(Vector::from_element(1, y[0].clamp(*lo, *hi))),
        Shape::Ball { center, radius } => {
            let d = y - center;
            let n = d.norm();
            Ok(center + d * (*radius / n))
        }
        Shape::Ellipse { .. } | Shape::Custom { .. } => kkt_projection(set, y),
    }
}

/// Damped Newton on `x - y + lambda grad psi(x) = 0, psi(x) = 0`.
fn kkt_projection(set: &SublevelSet, y: &Vector) -> Result<Vector> {
    let fail = || Error::ProjectionFailure { y: y.as_slice().to_vec() };
    let n = y.len();
    let mut x = set.boundary_along_ray(y).ok_or_else(fail)?;
    let g = set.grad_psi(&x);
    let mut lam = ((y - &x).dot(&g) / g.norm_squared()).max(0.0);
    let residual = |x: &Vector, lam: f64| {
        let mut r = Vector::zeros(n + 1);
        let g = set.grad_psi(x);
        r.rows_mut(0, n).copy_from(&(x - y + &g * lam));
        r[n] = set.psi(x);
        r
    };
    let mut r = residual(&x, lam);
    for _ in 0..100 {
        let scale = 1.0 + y.norm();
        if r.norm() <= 1e-14 * scale {
            break;
        }
        let g = set.grad_psi(&x);
        let h = set.hess_psi(&x);
        let mut jac = Matrix::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n)).copy_from(&(Matrix::identity(n, n) + h * lam));
        jac.view_mut((0, n), (n, 1)).copy_from(&g);
        jac.view_mut((n, 0), (1, n)).copy_from(&g.transpose());
        let delta = jac.lu().solve(&(-&r)).ok_or_else(fail)?;
        let mut step = 1.0;
        loop {
            let xc = &x + delta.rows(0, n) * step;
            let lc = lam + delta[n] * step;
            let rc = residual(&xc, lc);
            if rc.norm() < r.norm() || step < 1e-10 {
                x = xc;
                lam = lc;
                r = rc;
                break;
            }
            step *= 0.5;
        }
    }
    if r.norm() > 1e-10 * (1.0 + y.norm()) || lam < 0.0 {
        return Err(fail());
    }
    Ok(x)
}

/// `x_{j+1} = proj_C(x_j + h f_Phi(x_j, u(t_j)))` on the grid `j h`, with
/// central-difference velocities.
pub fn catching_up(model: &Model, x0: &Vector, u: &ControlPath, h: f64) -> Result<Trajectory> {
    let set = &model.set;
    let h_max = set.prox_radius() / (2.0 * model.mbar);
    if !(h > 0.0 && h <= h_max) {
        return Err(Error::Precondition(format!("catching-up step {h} must lie in (0, {h_max}]")));
    }
    if set.psi(x0) > set.boundary_tol {
        return Err(Error::Precondition("initial state outside C".into()));
    }
    let steps = (1.0 / h).round().max(1.0) as usize;
    let times = grid::uniform(steps + 1);
    let mut xs = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    xs.push(x.clone());
    for j in 0..steps {
        let hj = times[j + 1] - times[j];
        let y = &x + model.f_phi(&x, &u.eval(times[j])) * hj;
        x = proj_c(set, &y)?;
        xs.push(x.clone());
    }
    let velocities = difference_velocities(&times, &xs);
    let states = xs.iter().map(|v| v.as_slice().to_vec()).collect();
    Ok(Trajectory { grid: times, states, velocities })
}

/// Central differences inside, one-sided at the ends.
pub fn difference_velocities(times: &[f64], xs: &[Vector]) -> Vec<Vec<f64>> {
    let n = times.len();
    (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i + 1 == n {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            ((&xs[b] - &xs[a]) / (times[b] - times[a])).as_slice().to_vec()
        })
        .collect()
}

impl Trajectory {
    /// Linear resampling onto `grid` (exact at shared nodes).
    pub fn resample(&self, grid: &[f64]) -> Trajectory {
        Trajectory {
            grid: grid.to_vec(),
            states: grid.iter().map(|&t| grid::interp_rows(&self.grid, &self.states, t)).collect(),
            velocities: grid.iter().map(|&t| grid::interp_rows(&self.grid, &self.velocities, t)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierPath {
    pub grid: Vec<f64>,
    pub xi: Vec<f64>,
    pub support_mask: Vec<bool>,
}

impl MultiplierPath {
    pub fn max(&self) -> f64 {
        self.xi.iter().copied().fold(0.0, f64::max)
    }

    pub fn resample(&self, grid: &[f64]) -> MultiplierPath {
        MultiplierPath {
            grid: grid.to_vec(),
            xi: grid.iter().map(|&t| grid::interp(&self.grid, &self.xi, t)).collect(),
            support_mask: grid.iter().map(|&t| self.support_mask[grid::locate(&self.grid, t)]).collect(),
        }
    }
}

/// Mask tolerance for contact on oracle trajectories, in units of `boundary_tol`.
pub const MASK_FACTOR: f64 = 10.0;

/// `xi = |x' - f_Phi| / |grad psi|` on the contact mask, zero elsewhere.
pub fn multiplier_from_trajectory(model: &Model, traj: &Trajectory, u: &ControlPath) -> Result<MultiplierPath> {
    let set = &model.set;
    let tol = MASK_FACTOR * set.boundary_tol;
    let mut xi = Vec::with_capacity(traj.grid.len());
    let mut mask = Vec::with_capacity(traj.grid.len());
    for (i, &t) in traj.grid.iter().enumerate() {
        let x = traj.state(i);
        let on = set.psi(&x).abs() <= tol;
        mask.push(on);
        if !on {
            xi.push(0.0);
            continue;
        }
        let g = set.grad_psi(&x);
        let norm = g.norm();
        if norm <= set.eta {
            return Err(Error::DegenerateGradient { point: x.as_slice().to_vec(), norm, eta: set.eta });
        }
        xi.push((traj.velocity(i) - model.f_phi(&x, &u.eval(t))).norm() / norm);
    }
    Ok(MultiplierPath { grid: traj.grid.clone(), xi, support_mask: mask })
}

/// `max_i |x'_i - f_Phi(x_i, u_i) + xi_i grad psi(x_i)|`.
pub fn feasibility_residual(model: &Model, traj: &Trajectory, u: &ControlPath, xi: &MultiplierPath) -> Result<f64> {
    grid::check_same_grid(&traj.grid, &xi.grid)?;
    let mut worst: f64 = 0.0;
    for (i, &t) in traj.grid.iter().enumerate() {
        let x = traj.state(i);
        let r = traj.velocity(i) - model.f_phi(&x, &u.eval(t)) + model.set.grad_psi(&x) * xi.xi[i];
        worst = worst.max(r.norm());
    }
    Ok(worst)
}

/// Trajectory CSV with the `xi_oracle` and `on_boundary` columns appended.
pub fn oracle_csv(traj: &Trajectory, xi: &MultiplierPath) -> String {
    let mut out = traj.csv_header();
    out.push_str(",xi_oracle,on_boundary\n");
    for i in 0..traj.grid.len() {
        out.push_str(&traj.csv_row(i));
        writeln!(out, ",{},{}", xi.xi[i], u8::from(xi.support_mask[i])).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlSetFamily;
    use crate::geometry::SetConstants;
    use crate::model::{AffineField, Potential};
    use crate::sets::Primitive;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn model(shape: Shape, eta: f64, f: &[f64], mbar: f64) -> Model {
        let set = SublevelSet::new(shape, eta, SetConstants::default()).unwrap();
        Model::new(
            set,
            AffineField::constant(v(f), 1),
            Potential::zero(f.len()),
            ControlSetFamily::constant(Primitive::Box { lo: vec![0.0], hi: vec![0.0] }),
            mbar,
        )
        .unwrap()
    }

    fn zero_u() -> ControlPath {
        ControlPath::constant(&[0.0], 2)
    }

    #[test]
    fn slide1d_matches_closed_form() {
        let m = model(Shape::Interval { lo: -1.0, hi: 1.0 }, 0.9, &[2.0], 2.0);
        let h = 1e-4;
        let traj = catching_up(&m, &v(&[0.0]), &zero_u(), h).unwrap();
        for (t, s) in traj.grid.iter().zip(&traj.states) {
            assert!((s[0] - (2.0 * t).min(1.0)).abs() <= 2.0 * h);
        }
        let xi = multiplier_from_trajectory(&m, &traj, &zero_u()).unwrap();
        let at = |t: f64| xi.xi[(t * 1e4).round() as usize];
        assert_eq!(at(0.25), 0.0);
        assert!((at(0.75) - 1.0).abs() < 1e-9);
        assert!(xi.max() <= m.mbar / (2.0 * m.set.eta) + 1e-6);
        assert!(feasibility_residual(&m, &traj, &zero_u(), &xi).unwrap() <= 5.0 * h * 10.0);
    }

    #[test]
    fn stationary_disk_slide() {
        let disk = Shape::Ball { center: v(&[0.0, 0.0]), radius: 1.0 };
        let m = model(disk, 0.9, &[1.0, 0.0], 1.0);
        let traj = catching_up(&m, &v(&[1.0, 0.0]), &zero_u(), 1e-3).unwrap();
        assert!(traj.states.iter().all(|s| s == &vec![1.0, 0.0]));
        let xi = multiplier_from_trajectory(&m, &traj, &zero_u()).unwrap();
        assert!(xi.xi.iter().all(|x| (x - 0.5).abs() < 1e-12));
    }

    #[test]
    fn zero_field_is_fixed_point() {
        let m = model(Shape::Interval { lo: -1.0, hi: 1.0 }, 0.9, &[0.0], 1.0);
        let traj = catching_up(&m, &v(&[0.4]), &zero_u(), 1e-2).unwrap();
        assert!(traj.states.iter().all(|s| s[0] == 0.4));
        let xi = multiplier_from_trajectory(&m, &traj, &zero_u()).unwrap();
        assert!(xi.xi.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn perturbed_multiplier_raises_residual() {
        let m = model(Shape::Interval { lo: -1.0, hi: 1.0 }, 0.9, &[2.0], 2.0);
        let traj = catching_up(&m, &v(&[0.0]), &zero_u(), 1e-3).unwrap();
        let xi = multiplier_from_trajectory(&m, &traj, &zero_u()).unwrap();
        let mut bumped = xi.clone();
        for (x, on) in bumped.xi.iter_mut().zip(&xi.support_mask) {
            if *on {
                *x += 0.1;
            }
        }
        let r = feasibility_residual(&m, &traj, &zero_u(), &bumped).unwrap();
        assert!(r >= 0.1 * 2.0 - 1e-12);
    }

    #[test]
    fn ellipse_projection_is_idempotent_and_orthogonal() {
        let set = SublevelSet::new(
            Shape::Ellipse { center: v(&[0.0, 0.0]), semi_axes: v(&[2.0, 1.0]) },
            0.45,
            SetConstants::default(),
        )
        .unwrap();
        for y in [v(&[3.0, 0.5]), v(&[0.2, 1.5]), v(&[-2.5, -1.0]), v(&[2.2, 0.0])] {
            let p = proj_c(&set, &y).unwrap();
            assert!(set.psi(&p).abs() < 1e-12);
            let again = proj_c(&set, &p).unwrap();
            assert!((again - &p).norm() < 1e-12);
            // y - p is parallel to the outward normal
            let g = set.grad_psi(&p);
            let d = &y - &p;
            assert!((d[0] * g[1] - d[1] * g[0]).abs() < 1e-10 && d.dot(&g) > 0.0);
        }
    }

    #[test]
    fn step_above_reach_rejected() {
        let m = model(Shape::Interval { lo: -1.0, hi: 1.0 }, 0.9, &[2.0], 2.0);
        assert!(matches!(catching_up(&m, &v(&[0.0]), &zero_u(), 0.5), Err(Error::Precondition(_))));
    }
}

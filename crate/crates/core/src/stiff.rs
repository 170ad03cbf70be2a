//! Adaptive TR-BDF2 (L-stable, stiffly accurate, embedded third-order error
//! estimate) with damped Newton stage solves and cubic Hermite dense output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Matrix, Vector};
use crate::grid;

// TR-BDF2 in ESDIRK form: c = (0, GAMMA, 1), diagonal D, last row (W, W, D).
const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
const D: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
const W: f64 = std::f64::consts::SQRT_2 / 4.0;

pub trait StiffRhs {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &Vector) -> Vector;
    fn jac(&self, t: f64, x: &Vector) -> Matrix;
    /// Newton iterates failing this test are damped back towards the last
    /// accepted iterate (used to keep `exp(gamma psi)` finite).
    fn admissible(&self, _x: &Vector) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub atol: f64,
    pub rtol: f64,
    /// Initial step; `None` picks `min(1e-2, 1/gamma)` in the callers that know gamma.
    pub h0: Option<f64>,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            atol: 1e-10,
            rtol: 1e-10,
            h0: None,
            h_max: 0.02,
            h_min: 1e-15,
            max_steps: 5_000_000,
            newton_tol: 1e-13,
            newton_max_iter: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_failures: usize,
    pub newton_iterations: usize,
    pub min_step: f64,
    pub max_step: f64,
}

/// Accepted steps `(t_i, x_i, x'(t_i))`; evaluated by cubic Hermite interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSolution {
    pub ts: Vec<f64>,
    pub xs: Vec<Vector>,
    pub fs: Vec<Vector>,
}

impl DenseSolution {
    pub fn eval(&self, t: f64) -> Vector {
        let i = grid::locate(&self.ts, t);
        self.eval_in(i, t)
    }

    fn eval_in(&self, i: usize, t: f64) -> Vector {
        let (t0, t1) = (self.ts[i], self.ts[i + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        &self.xs[i] * h00 + &self.fs[i] * (h10 * h) + &self.xs[i + 1] * h01 + &self.fs[i + 1] * (h11 * h)
    }

    /// Samples at ascending times (one pass over the steps).
    pub fn sample(&self, times: &[f64]) -> Vec<Vector> {
        let mut i = 0;
        let last = self.ts.len() - 2;
        times
            .iter()
            .map(|&t| {
                while i < last && self.ts[i + 1] < t {
                    i += 1;
                }
                if t == self.ts[i + 1] {
                    return self.xs[i + 1].clone();
                }
                self.eval_in(i, t)
            })
            .collect()
    }
}

/// Integrates `x' = rhs(t, x)` on `[t0, t1]`, landing exactly on every `tstop`.
pub fn integrate<R: StiffRhs>(
    rhs: &R,
    t0: f64,
    t1: f64,
    x0: &Vector,
    tstops: &[f64],
    ctrl: &StepControl,
) -> Result<(DenseSolution, StepStats)> {
    let n = rhs.dim();
    let mut stops: Vec<f64> = tstops.iter().copied().filter(|&s| s > t0 && s < t1).collect();
    stops.push(t1);
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.dedup();

    let mut t = t0;
    let mut x = x0.clone();
    let mut sol = DenseSolution { ts: vec![t], xs: vec![x.clone()], fs: vec![rhs.eval(t, &x)] };
    let mut stats = StepStats { min_step: f64::INFINITY, ..Default::default() };
    let mut h = ctrl.h0.unwrap_or(1e-2).min(ctrl.h_max);
    let mut stop_idx = 0;
    let eye = Matrix::identity(n, n);

    while t < t1 {
        if stats.accepted + stats.rejected >= ctrl.max_steps {
            return Err(Error::StepFailure { t, state: x.as_slice().to_vec(), reason: "step budget exhausted".into() });
        }
        while stops[stop_idx] <= t {
            stop_idx += 1;
        }
        let target = stops[stop_idx];
        let mut h_try = h.min(target - t);
        // avoid slivers before a stop
        if target - t - h_try < 1e-3 * h_try {
            h_try = target - t;
        }
        let lands = h_try >= target - t;
        let t_new = if lands { target } else { t + h_try };
        let hs = t_new - t;

        let c = D * hs;
        let k0 = sol.fs.last().unwrap().clone();
        let mut iters = 0;
        // trapezoidal stage to t + GAMMA h, then the BDF2-like stage to t + h
        let base1 = &x + &k0 * c;
        let guess = &x + &k0 * (GAMMA * hs);
        let guess = if rhs.admissible(&guess) { guess } else { x.clone() };
        let z = newton_stage(rhs, t + GAMMA * hs, &base1, &guess, c, &eye, ctrl, &mut iters);
        let Some(z) = z else {
            stats.newton_failures += 1;
            stats.rejected += 1;
            h = hs * 0.25;
            if h < ctrl.h_min {
                return Err(step_failure(t, &x, "Newton failed in the first stage"));
            }
            continue;
        };
        let k1 = (&z - &base1) / c;
        let base2 = &x + (&k0 + &k1) * (W * hs);
        let y = newton_stage(rhs, t_new, &base2, &z, c, &eye, ctrl, &mut iters);
        let Some(y) = y else {
            stats.newton_failures += 1;
            stats.rejected += 1;
            h = hs * 0.25;
            if h < ctrl.h_min {
                return Err(step_failure(t, &x, "Newton failed in the second stage"));
            }
            continue;
        };
        stats.newton_iterations += iters;
        let k2 = (&y - &base2) / c;

        // third-order embedded estimate, filtered through the stage matrix
        let raw = (&k0 * ((4.0 * W - 1.0) / 3.0) - &k1 / 3.0 + &k2 * (2.0 * D / 3.0)) * hs;
        let m = &eye - rhs.jac(t_new, &y) * c;
        let est = m.lu().solve(&raw).unwrap_or(raw);
        let mut err: f64 = 0.0;
        for i in 0..n {
            let sc = ctrl.atol + ctrl.rtol * x[i].abs().max(y[i].abs());
            err = err.max(est[i].abs() / sc);
        }
        if !err.is_finite() {
            err = 1e10;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0) };
        if err <= 1.0 {
            t = t_new;
            x = y;
            sol.ts.push(t);
            sol.xs.push(x.clone());
            sol.fs.push(rhs.eval(t, &x));
            stats.accepted += 1;
            stats.min_step = stats.min_step.min(hs);
            stats.max_step = stats.max_step.max(hs);
            // a step clipped at a stop says little about the unclipped size
            h = if lands { h.max(hs * factor) } else { hs * factor }.min(ctrl.h_max);
        } else {
            stats.rejected += 1;
            h = hs * factor.min(0.9);
            if h < ctrl.h_min {
                return Err(step_failure(t, &x, "step size underflow"));
            }
        }
    }
    if stats.accepted == 0 {
        stats.min_step = 0.0;
    }
    Ok((sol, stats))
}

fn step_failure(t: f64, x: &Vector, reason: &str) -> Error {
    Error::StepFailure { t, state: x.as_slice().to_vec(), reason: reason.into() }
}

/// Solves `y = base + c * rhs(t, y)` by damped Newton, starting at `guess`.
pub fn implicit_solve<R: StiffRhs>(
    rhs: &R,
    t: f64,
    base: &Vector,
    guess: &Vector,
    c: f64,
    ctrl: &StepControl,
) -> Option<(Vector, usize)> {
    let eye = Matrix::identity(rhs.dim(), rhs.dim());
    let mut iters = 0;
    newton_stage(rhs, t, base, guess, c, &eye, ctrl, &mut iters).map(|y| (y, iters))
}

#[allow(clippy::too_many_arguments)]
fn newton_stage<R: StiffRhs>(
    rhs: &R,
    t: f64,
    base: &Vector,
    guess: &Vector,
    c: f64,
    eye: &Matrix,
    ctrl: &StepControl,
    iters: &mut usize,
) -> Option<Vector> {
    let resid = |y: &Vector| y - base - rhs.eval(t, y) * c;
    let mut y = guess.clone();
    if !rhs.admissible(&y) {
        y = base.clone();
    }
    let mut r = resid(&y);
    for _ in 0..ctrl.newton_max_iter {
        *iters += 1;
        let m = eye - rhs.jac(t, &y) * c;
        let delta = m.lu().solve(&(-&r))?;
        let mut lam = 1.0;
        let rn = r.norm();
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &y + &delta * lam;
            if rhs.admissible(&cand) {
                let rc = resid(&cand);
                if rc.iter().all(|v| v.is_finite()) && (rc.norm() < rn || lam < 1e-6 || rn == 0.0) {
                    accepted = Some((cand, rc));
                    break;
                }
            }
            lam *= 0.5;
        }
        let (cand, rc) = accepted?;
        let step = (&cand - &y).norm();
        y = cand;
        r = rc;
        let scale = 1.0 + y.norm();
        if step <= ctrl.newton_tol * scale || r.norm() <= 1e-3 * ctrl.newton_tol * scale {
            return Some(y);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        a: Matrix,
    }

    impl StiffRhs for Linear {
        fn dim(&self) -> usize {
            self.a.nrows()
        }
        fn eval(&self, _t: f64, x: &Vector) -> Vector {
            &self.a * x
        }
        fn jac(&self, _t: f64, _x: &Vector) -> Matrix {
            self.a.clone()
        }
    }

    #[test]
    fn exponential_decay_is_accurate() {
        let rhs = Linear { a: Matrix::from_element(1, 1, -3.0) };
        let x0 = Vector::from_element(1, 1.0);
        let (sol, _) = integrate(&rhs, 0.0, 1.0, &x0, &[], &StepControl::default()).unwrap();
        let end = sol.xs.last().unwrap()[0];
        assert!((end - (-3.0f64).exp()).abs() < 1e-7, "{end}");
        let mid = sol.eval(0.5)[0];
        assert!((mid - (-1.5f64).exp()).abs() < 1e-7, "{mid}");
    }

    #[test]
    fn very_stiff_decay_stays_bounded() {
        let rhs = Linear { a: Matrix::from_element(1, 1, -1e8) };
        let x0 = Vector::from_element(1, 1.0);
        let (sol, stats) = integrate(&rhs, 0.0, 1.0, &x0, &[], &StepControl::default()).unwrap();
        assert!(sol.xs.iter().all(|x| x[0].abs() <= 1.0));
        assert!(sol.xs.last().unwrap()[0].abs() < 1e-10);
        assert!(stats.accepted < 10_000, "{stats:?}");
    }

    #[test]
    fn lands_on_stops() {
        let rhs = Linear { a: Matrix::from_element(1, 1, -1.0) };
        let x0 = Vector::from_element(1, 1.0);
        let (sol, _) = integrate(&rhs, 0.0, 1.0, &x0, &[0.3, 0.7], &StepControl::default()).unwrap();
        assert!(sol.ts.contains(&0.3) && sol.ts.contains(&0.7));
        assert_eq!(*sol.ts.last().unwrap(), 1.0);
    }

    #[test]
    fn rotation_dense_output() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let rhs = Linear { a };
        let x0 = Vector::from_column_slice(&[1.0, 0.0]);
        let (sol, _) = integrate(&rhs, 0.0, 1.0, &x0, &[], &StepControl::default()).unwrap();
        let times = grid::uniform(101);
        for (t, x) in times.iter().zip(sol.sample(&times)) {
            assert!((x[0] - t.cos()).abs() < 1e-7 && (x[1] + t.sin()).abs() < 1e-7);
        }
    }
}

//! Projected limited-memory BFGS over products of boxes and balls, with an
//! Armijo search along the projected path.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Matrix, Vector};
use crate::sets::{Primitive, ACTIVE_TOL};

/// Feasible set as consecutive blocks `(offset, primitive)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSet {
    pub blocks: Vec<(usize, Primitive)>,
}

impl BlockSet {
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let mut out = z.to_vec();
        for (off, p) in &self.blocks {
            let d = p.dim();
            let y = Vector::from_column_slice(&z[*off..off + d]);
            out[*off..off + d].copy_from_slice(p.project(&y).as_slice());
        }
        out
    }

    /// Removes the components of `v` that would push active constraints
    /// outward when moving along `-v`.
    fn reduce(&self, z: &[f64], g: &[f64], v: &mut [f64]) {
        for (off, p) in &self.blocks {
            self.reduce_block(*off, p, z, g, v);
        }
    }

    fn reduce_block(&self, off: usize, p: &Primitive, z: &[f64], g: &[f64], v: &mut [f64]) {
        let d = p.dim();
        match p {
            Primitive::Box { lo, hi } => {
                for i in 0..d {
                    let k = off + i;
                    let at_lo = z[k] - lo[i] <= ACTIVE_TOL && g[k] > 0.0;
                    let at_hi = hi[i] - z[k] <= ACTIVE_TOL && g[k] < 0.0;
                    if at_lo || at_hi {
                        v[k] = 0.0;
                    }
                }
            }
            Primitive::Ball { center, radius } => {
                let y = Vector::from_column_slice(&z[off..off + d]);
                let c = Vector::from_column_slice(center);
                let r = &y - &c;
                let gb = Vector::from_column_slice(&g[off..off + d]);
                if (r.norm() - radius).abs() <= ACTIVE_TOL && gb.dot(&r) < 0.0 && r.norm() > 0.0 {
                    let nrm = r / radius.max(f64::MIN_POSITIVE);
                    let vb = Vector::from_column_slice(&v[off..off + d]);
                    let t = &vb - &nrm * vb.dot(&nrm) / nrm.norm_squared();
                    v[off..off + d].copy_from_slice(t.as_slice());
                }
            }
            Primitive::Point { .. } => v[off..off + d].iter_mut().for_each(|x| *x = 0.0),
            Primitive::Whole { .. } => {}
        }
    }
}


impl BlockSet {
    /// Orthogonal projector onto the directions left free by the active
    /// constraints at `z`, one matrix per block.
    fn free_projectors(&self, z: &[f64], g: &[f64]) -> Vec<(usize, Matrix)> {
        self.blocks
            .iter()
            .map(|(off, p)| {
                let d = p.dim();
                let mut e = Matrix::identity(d, d);
                for i in 0..d {
                    let mut col = vec![0.0; z.len()];
                    col[off + i] = 1.0;
                    self.reduce_block(*off, p, z, g, &mut col);
                    e.set_column(i, &Vector::from_column_slice(&col[*off..off + d]));
                }
                (*off, e)
            })
            .collect()
    }
}

/// Metric `I_head (+) T (x) I_block` with `T` symmetric tridiagonal, applied
/// through its inverse. Restricted to the free directions of the active set
/// at each iterate, so it never couples a free coordinate to a clamped one.
#[derive(Clone, Debug, PartialEq)]
pub struct KronMetric {
    pub head: usize,
    pub block: usize,
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl KronMetric {
    /// Solves `(P M P + I - P) x = P v` by block Thomas elimination. The
    /// node blocks of `projectors` must line up with the metric's blocks.
    fn solve(&self, projectors: &[(usize, Matrix)], v: &[f64]) -> Vec<f64> {
        let m = self.block;
        let nodes = self.diag.len();
        let mut p_node = vec![Matrix::identity(m, m); nodes];
        let mut out = v.to_vec();
        for (off, p) in projectors {
            if *off < self.head {
                let d = p.nrows();
                let y = p * Vector::from_column_slice(&v[*off..off + d]);
                out[*off..off + d].copy_from_slice(y.as_slice());
            } else {
                debug_assert_eq!(p.nrows(), m);
                p_node[(off - self.head) / m] = p.clone();
            }
        }
        let eye = Matrix::identity(m, m);
        let rhs = |i: usize| &p_node[i] * Vector::from_column_slice(&v[self.head + i * m..self.head + (i + 1) * m]);
        let a = |i: usize| &p_node[i] * self.diag[i] + (&eye - &p_node[i]);
        let b = |i: usize| &p_node[i] * &p_node[i + 1] * self.off[i];
        let mut cs: Vec<Matrix> = Vec::with_capacity(nodes);
        let mut ds: Vec<Vector> = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let (s, r) = if i == 0 {
                (a(0), rhs(0))
            } else {
                let bt = b(i - 1).transpose();
                (a(i) - &bt * &cs[i - 1], rhs(i) - &bt * &ds[i - 1])
            };
            let lu = s.lu();
            cs.push(if i + 1 < nodes { lu.solve(&b(i)).expect("metric block is positive definite") } else { Matrix::zeros(m, m) });
            ds.push(lu.solve(&r).expect("metric block is positive definite"));
        }
        for i in (0..nodes).rev() {
            let x = if i + 1 < nodes {
                let next = Vector::from_column_slice(&out[self.head + (i + 1) * m..self.head + (i + 2) * m]);
                &ds[i] - &cs[i] * next
            } else {
                ds[i].clone()
            };
            out[self.head + i * m..self.head + (i + 1) * m].copy_from_slice(x.as_slice());
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub kkt_tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    pub armijo: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions { kkt_tol: 1e-6, max_iter: 400, memory: 10, armijo: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub value: f64,
    pub pg_norm: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimResult {
    pub z: Vec<f64>,
    pub value: f64,
    pub pg_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub trace: Vec<TraceRow>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `|z - P(z - g)|_inf`.
pub fn projected_gradient_norm(set: &BlockSet, z: &[f64], g: &[f64]) -> f64 {
    let trial: Vec<f64> = z.iter().zip(g).map(|(a, b)| a - b).collect();
    let p = set.project(&trial);
    z.iter().zip(&p).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Minimises `f` over `set` from `z0`. `f` returns value and gradient.
pub fn minimize<F>(set: &BlockSet, z0: &[f64], opts: &OptimizerOptions, f: F) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    minimize_in(set, z0, opts, None, f)
}

/// [`minimize`] with the quasi-Newton model seeded by `metric`, which applies
/// the inverse of a symmetric positive definite matrix. A metric close to the
/// Hessian removes most of the conditioning the memory would otherwise have
/// to learn.
pub fn minimize_in<F>(
    set: &BlockSet,
    z0: &[f64],
    opts: &OptimizerOptions,
    metric: Option<&KronMetric>,
    mut f: F,
) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut z = set.project(z0);
    let (mut fz, mut g) = f(&z)?;
    let mut evaluations = 1;
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut trace = Vec::new();
    let mut last_step = 0.0;
    let mut last_alpha: f64 = 1.0;

    for it in 0..opts.max_iter {
        let pg = projected_gradient_norm(set, &z, &g);
        trace.push(TraceRow { iteration: it, value: fz, pg_norm: pg, step: last_step });
        if pg <= opts.kkt_tol {
            return Ok(OptimResult { z, value: fz, pg_norm: pg, iterations: it, evaluations, trace });
        }
        let mut gr = g.clone();
        set.reduce(&z, &g, &mut gr);

        // two-loop recursion on the reduced gradient
        let mut q = gr.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let projectors = metric.map(|_| set.free_projectors(&z, &g));
        if let Some(h0) = metric {
            let proj = projectors.as_deref().unwrap();
            q = h0.solve(proj, &q);
            if let Some((s, y, _)) = mem.back() {
                let scale = dot(s, y) / dot(y, &h0.solve(proj, y));
                q.iter_mut().for_each(|v| *v *= scale);
            }
        } else if let Some((s, y, _)) = mem.back() {
            let scale = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        set.reduce(&z, &g, &mut d);

        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 || dot(&g, &d) >= -1e-14 * inf_norm(&g) * inf_norm(&d) {
                mem.clear();
                d = g.iter().map(|v| -v).collect();
            }
            let unit = !mem.is_empty() || (metric.is_some() && attempt == 0);
            // start near the last accepted step so stiff stretches do not
            // pay for the same backtracking every iteration
            let mut alpha = if unit { (2.0 * last_alpha).min(1.0) } else { 1.0 / inf_norm(&g).max(1.0) };
            for _ in 0..50 {
                let trial: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
                let zn = set.project(&trial);
                let dz: Vec<f64> = zn.iter().zip(&z).map(|(a, b)| a - b).collect();
                if inf_norm(&dz) == 0.0 {
                    break;
                }
                match f(&zn) {
                    Ok((fnew, gnew)) => {
                        evaluations += 1;
                        let decrease = dot(&g, &dz);
                        if fnew <= fz + opts.armijo * decrease && fnew <= fz {
                            if unit {
                                last_alpha = alpha;
                            }
                            accepted = Some((zn, fnew, gnew, dz));
                            break;
                        }
                    }
                    Err(Error::StepFailure { .. }) | Err(Error::Precondition(_)) => {}
                    Err(e) => return Err(e),
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((zn, fnew, gnew, s)) = accepted else {
            if pg <= 10.0 * opts.kkt_tol {
                return Ok(OptimResult { z, value: fz, pg_norm: pg, iterations: it, evaluations, trace });
            }
            return Err(Error::LineSearchFailure { iteration: it, pg_norm: pg, last: z });
        };
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            mem.push_back((s.clone(), y, 1.0 / sy));
            if mem.len() > opts.memory {
                mem.pop_front();
            }
        }
        last_step = inf_norm(&s);
        z = zn;
        fz = fnew;
        g = gnew;
    }
    let pg = projected_gradient_norm(set, &z, &g);
    if pg <= opts.kkt_tol {
        trace.push(TraceRow { iteration: opts.max_iter, value: fz, pg_norm: pg, step: last_step });
        return Ok(OptimResult { z, value: fz, pg_norm: pg, iterations: opts.max_iter, evaluations, trace });
    }
    Err(Error::MaxIterations { iterations: opts.max_iter, pg_norm: pg, last: z })
}

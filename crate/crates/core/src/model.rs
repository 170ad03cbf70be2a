//! The controlled system: the set `C`, the field `f`, the potential `Phi`,
//! the control sets, and the bound `Mbar` of `f_Phi = f - grad Phi`.

use crate::control::ControlSetFamily;
use crate::error::{Error, Result};
use crate::geometry::{halton_points, Matrix, SublevelSet, Vector};

/// `f(x, u) = A x + B u + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineField {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Vector,
}

impl AffineField {
    pub fn constant(c: Vector, m: usize) -> Self {
        let n = c.len();
        AffineField { a: Matrix::zeros(n, n), b: Matrix::zeros(n, m), c }
    }

    /// `f(x, u) = u` (requires `m = n`).
    pub fn control_identity(n: usize) -> Self {
        AffineField { a: Matrix::zeros(n, n), b: Matrix::identity(n, n), c: Vector::zeros(n) }
    }

    pub fn eval(&self, x: &Vector, u: &Vector) -> Vector {
        &self.a * x + &self.b * u + &self.c
    }
}

/// `Phi(x) = x^T Q x / 2 + r^T x`; `Q = 0, r = 0` is the indicator case.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    pub q: Matrix,
    pub r: Vector,
}

impl Potential {
    pub fn zero(n: usize) -> Self {
        Potential { q: Matrix::zeros(n, n), r: Vector::zeros(n) }
    }

    pub fn is_zero(&self) -> bool {
        self.q.iter().all(|v| *v == 0.0) && self.r.iter().all(|v| *v == 0.0)
    }

    pub fn grad(&self, x: &Vector) -> Vector {
        &self.q * x + &self.r
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub set: SublevelSet,
    pub field: AffineField,
    pub potential: Potential,
    pub controls: ControlSetFamily,
    /// Bound and Lipschitz constant of `f_Phi` on `C x U`.
    pub mbar: f64,
}

impl Model {
    pub fn new(
        set: SublevelSet,
        field: AffineField,
        potential: Potential,
        controls: ControlSetFamily,
        mbar: f64,
    ) -> Result<Self> {
        let n = set.dim();
        if field.a.shape() != (n, n) || field.c.len() != n || field.b.nrows() != n {
            return Err(Error::validation("field", "dimensions do not match the set"));
        }
        if potential.q.shape() != (n, n) || potential.r.len() != n {
            return Err(Error::validation("potential", "dimensions do not match the set"));
        }
        controls.validate(field.b.ncols())?;
        if !(mbar > 0.0 && mbar.is_finite()) {
            return Err(Error::validation("Mbar", "must be positive"));
        }
        Ok(Model { set, field, potential, controls, mbar })
    }

    pub fn state_dim(&self) -> usize {
        self.set.dim()
    }

    pub fn control_dim(&self) -> usize {
        self.field.b.ncols()
    }

    /// `f_Phi(x, u) = f(x, u) - grad Phi(x)`.
    pub fn f_phi(&self, x: &Vector, u: &Vector) -> Vector {
        self.field.eval(x, u) - self.potential.grad(x)
    }

    pub fn f_phi_jac_x(&self) -> Matrix {
        &self.field.a - &self.potential.q
    }

    pub fn f_phi_jac_u(&self) -> &Matrix {
        &self.field.b
    }

    /// Right-hand side of the penalised system.
    pub fn penalized_rhs(&self, gamma: f64, x: &Vector, u: &Vector) -> Vector {
        let xi = penalty_multiplier(gamma, self.set.psi(x));
        self.f_phi(x, u) - xi * self.set.grad_psi(x)
    }

    /// Jacobian in `x` of the penalised right-hand side:
    /// `J f_Phi - xi (hess psi + gamma grad psi grad psi^T)`.
    pub fn penalized_jac(&self, gamma: f64, x: &Vector) -> Matrix {
        let xi = penalty_multiplier(gamma, self.set.psi(x));
        let g = self.set.grad_psi(x);
        let h = self.set.hess_psi(x);
        self.f_phi_jac_x() - xi * (h + gamma * &g * g.transpose())
    }

    /// Largest sampled `|f_Phi|` over `C x U`; scenario `Mbar` must dominate it.
    pub fn sampled_field_bound(&self, samples: usize) -> (f64, Vec<f64>) {
        let n = self.state_dim();
        let m = self.control_dim();
        let (lo, hi) = &self.set.bbox;
        let mut best = 0.0;
        let mut at = Vec::new();
        let pts = halton_points(n + m, samples.max(8));
        let mut states: Vec<Vector> = pts
            .iter()
            .map(|p| Vector::from_iterator(n, (0..n).map(|i| lo[i] + p[i] * (hi[i] - lo[i]))))
            .filter(|x| self.set.in_c(x))
            .collect();
        for p in halton_points(n, samples / 4 + 1) {
            let y = Vector::from_iterator(n, (0..n).map(|i| lo[i] + p[i] * (hi[i] - lo[i])));
            if let Some(b) = self.set.boundary_along_ray(&y) {
                states.push(b);
            }
        }
        for (k, x) in states.iter().enumerate() {
            let p = &pts[k % pts.len()];
            for (_, set) in &self.controls.segments {
                let mut cands = control_extremes(set);
                cands.push(sample_in(set, &p[n..]));
                for u in cands {
                    let v = self.f_phi(x, &u).norm();
                    if v > best {
                        best = v;
                        at = x.iter().chain(u.iter()).copied().collect();
                    }
                }
            }
        }
        (best, at)
    }
}

/// `xi = gamma exp(gamma psi)`.
#[inline]
pub fn penalty_multiplier(gamma: f64, psi: f64) -> f64 {
    gamma * (gamma * psi).exp()
}

fn control_extremes(set: &crate::sets::Primitive) -> Vec<Vector> {
    use crate::sets::Primitive;
    match set {
        Primitive::Point { at } => vec![Vector::from_column_slice(at)],
        Primitive::Box { lo, hi } => {
            let m = lo.len();
            (0..(1usize << m))
                .map(|mask| {
                    Vector::from_iterator(m, (0..m).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }))
                })
                .collect()
        }
        Primitive::Ball { center, radius } => {
            let m = center.len();
            let c = Vector::from_column_slice(center);
            let mut out = Vec::new();
            for i in 0..m {
                for s in [-1.0, 1.0] {
                    let mut v = c.clone();
                    v[i] += s * radius;
                    out.push(v);
                }
            }
            if m == 2 {
                for k in 0..16 {
                    let th = k as f64 * std::f64::consts::PI / 8.0;
                    out.push(&c + Vector::from_column_slice(&[th.cos(), th.sin()]) * *radius);
                }
            }
            out
        }
        Primitive::Whole { dim } => vec![Vector::zeros(*dim)],
    }
}

fn sample_in(set: &crate::sets::Primitive, unit: &[f64]) -> Vector {
    use crate::sets::Primitive;
    match set {
        Primitive::Box { lo, hi } => {
            Vector::from_iterator(lo.len(), (0..lo.len()).map(|i| lo[i] + unit[i] * (hi[i] - lo[i])))
        }
        other => other.project(&Vector::from_iterator(unit.len(), unit.iter().map(|v| 2.0 * v - 1.0))),
    }
}

//! Constraint sets `C = {psi <= 0}`, their certified constants, and the
//! penalty schedule `gamma_k -> (alpha_k, rho_k, C(k))`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Numerical meaning of "on the boundary": `|psi(x)| <= BOUNDARY_TOL`.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeTag {
    Interval,
    Ball,
    Ellipse,
    Custom,
}

/// Defining function of the set.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// `psi(x) = (x - m)^2 - r^2` for `[lo, hi]`, `m` the midpoint and `r` the half width.
    Interval { lo: f64, hi: f64 },
    /// `psi(x) = |x - c|^2 - R^2`.
    Ball { center: Vector, radius: f64 },
    /// `psi(x) = sum_i ((x_i - c_i) / a_i)^2 - 1`.
    Ellipse { center: Vector, semi_axes: Vector },
    /// `psi(x) = x^T A x + b^T x + c` with `A` symmetric.
    Custom { a: Matrix, b: Vector, c: f64 },
}

impl Shape {
    pub fn tag(&self) -> ShapeTag {
        match self {
            Shape::Interval { .. } => ShapeTag::Interval,
            Shape::Ball { .. } => ShapeTag::Ball,
            Shape::Ellipse { .. } => ShapeTag::Ellipse,
            Shape::Custom { .. } => ShapeTag::Custom,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Shape::Interval { .. } => 1,
            Shape::Ball { center, .. } => center.len(),
            Shape::Ellipse { center, .. } => center.len(),
            Shape::Custom { b, .. } => b.len(),
        }
    }

    fn psi(&self, x: &Vector) -> f64 {
        match self {
            Shape::Interval { lo, hi } => {
                let (m, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                (x[0] - m) * (x[0] - m) - r * r
            }
            Shape::Ball { center, radius } => (x - center).norm_squared() - radius * radius,
            Shape::Ellipse { center, semi_axes } => {
                (x - center).component_div(semi_axes).norm_squared() - 1.0
            }
            Shape::Custom { a, b, c } => x.dot(&(a * x)) + b.dot(x) + c,
        }
    }

    fn grad(&self, x: &Vector) -> Vector {
        match self {
            Shape::Interval { lo, hi } => Vector::from_element(1, 2.0 * (x[0] - 0.5 * (lo + hi))),
            Shape::Ball { center, .. } => 2.0 * (x - center),
            Shape::Ellipse { center, semi_axes } => {
                let a2 = semi_axes.component_mul(semi_axes);
                2.0 * (x - center).component_div(&a2)
            }
            Shape::Custom { a, b, .. } => 2.0 * (a * x) + b,
        }
    }

    fn hess(&self) -> Matrix {
        match self {
            Shape::Interval { .. } => Matrix::from_element(1, 1, 2.0),
            Shape::Ball { center, .. } => 2.0 * Matrix::identity(center.len(), center.len()),
            Shape::Ellipse { semi_axes, .. } => {
                Matrix::from_diagonal(&semi_axes.map(|a| 2.0 / (a * a)))
            }
            Shape::Custom { a, .. } => 2.0 * a,
        }
    }

    /// A point of `int C` from which every boundary point is visible along a
    /// segment (the sets here are convex).
    fn interior_point(&self) -> Option<Vector> {
        match self {
            Shape::Interval { lo, hi } => Some(Vector::from_element(1, 0.5 * (lo + hi))),
            Shape::Ball { center, .. } | Shape::Ellipse { center, .. } => Some(center.clone()),
            Shape::Custom { a, b, .. } => {
                let x = a.clone().lu().solve(&(-0.5 * b))?;
                (self.psi(&x) < 0.0).then_some(x)
            }
        }
    }

    /// Analytic constants `(min |grad psi| on bdry C, Mbar_psi, M_psi)`.
    fn analytic_constants(&self) -> Option<(f64, f64, f64)> {
        match self {
            Shape::Interval { lo, hi } => {
                let r = 0.5 * (hi - lo);
                Some((2.0 * r, 2.0 * r, 1.0))
            }
            Shape::Ball { radius, .. } => Some((2.0 * radius, 2.0 * radius, 1.0)),
            Shape::Ellipse { semi_axes, .. } => {
                let amax = semi_axes.max();
                let amin = semi_axes.min();
                Some((2.0 / amax, 2.0 / amin, 1.0 / (amin * amin)))
            }
            Shape::Custom { .. } => None,
        }
    }

    fn default_bbox(&self) -> Option<(Vector, Vector)> {
        match self {
            Shape::Interval { lo, hi } => {
                Some((Vector::from_element(1, *lo), Vector::from_element(1, *hi)))
            }
            Shape::Ball { center, radius } => Some((center.add_scalar(-radius), center.add_scalar(*radius))),
            Shape::Ellipse { center, semi_axes } => Some((center - semi_axes, center + semi_axes)),
            Shape::Custom { .. } => None,
        }
    }
}

/// `C = {psi <= 0}` together with the constants the penalty theory needs.
#[derive(Clone, Debug, PartialEq)]
pub struct SublevelSet {
    pub shape: Shape,
    /// Gradient floor: `|grad psi| > 2 eta` on the boundary.
    pub eta: f64,
    /// Bound of `|grad psi|` on `C`.
    pub mbar_psi: f64,
    /// Half the Lipschitz constant of `grad psi` near `C`.
    pub m_psi: f64,
    /// Radius of the neighbourhood on which `grad psi` is Lipschitz.
    pub rho: f64,
    /// Bounding box that contains `C`.
    pub bbox: (Vector, Vector),
    pub boundary_tol: f64,
}

/// Optional overrides for the constants of a [`SublevelSet`].
#[derive(Clone, Debug, Default)]
pub struct SetConstants {
    pub mbar_psi: Option<f64>,
    pub m_psi: Option<f64>,
    pub rho: Option<f64>,
    pub bbox: Option<(Vector, Vector)>,
}

impl SublevelSet {
    /// Builds a set from a shape, `eta`, and optional constants. Missing
    /// constants come from closed forms for built-in shapes or from sampling
    /// for custom ones.
    pub fn new(shape: Shape, eta: f64, constants: SetConstants) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::validation("eta", "must be positive"));
        }
        validate_shape(&shape)?;
        let bbox = match constants.bbox.clone().or_else(|| shape.default_bbox()) {
            Some(b) => b,
            None => return Err(Error::validation("set.bbox", "custom shapes need a bounding box")),
        };
        if bbox.0.len() != shape.dim() || bbox.1.len() != shape.dim() {
            return Err(Error::validation("set.bbox", "dimension mismatch"));
        }
        let mut set = SublevelSet {
            shape,
            eta,
            mbar_psi: 0.0,
            m_psi: 0.0,
            rho: 0.0,
            bbox,
            boundary_tol: BOUNDARY_TOL,
        };
        let (mbar_psi, m_psi) = match set.shape.analytic_constants() {
            Some((_, mb, m)) => (mb, m),
            None => {
                let sampled = set.sample_constants(4096);
                (sampled.mbar_psi, sampled.m_psi)
            }
        };
        set.mbar_psi = constants.mbar_psi.unwrap_or(mbar_psi);
        set.m_psi = constants.m_psi.unwrap_or(m_psi);
        set.rho = constants.rho.unwrap_or(4.0 * eta / set.m_psi);
        if set.m_psi < 4.0 * eta / set.rho * (1.0 - 1e-12) {
            return Err(Error::validation("set.rho", "M_psi must be at least 4 eta / rho"));
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn psi(&self, x: &Vector) -> f64 {
        self.shape.psi(x)
    }

    pub fn grad_psi(&self, x: &Vector) -> Vector {
        self.shape.grad(x)
    }

    pub fn hess_psi(&self, _x: &Vector) -> Matrix {
        self.shape.hess()
    }

    pub fn interior_point(&self) -> Option<Vector> {
        self.shape.interior_point()
    }

    pub fn in_c(&self, x: &Vector) -> bool {
        self.psi(x) <= 0.0
    }

    /// Membership in `C(k) = {psi <= -alpha_k}`.
    pub fn in_ck(&self, alpha_k: f64, x: &Vector) -> bool {
        self.psi(x) <= -alpha_k
    }

    pub fn on_boundary(&self, x: &Vector) -> bool {
        self.psi(x).abs() <= self.boundary_tol
    }

    /// Moves a boundary point a distance `rho_k` along the inward normal.
    pub fn shift_inward(&self, c: &Vector, rho_k: f64) -> Result<Vector> {
        let psi = self.psi(c);
        if psi.abs() > self.boundary_tol {
            return Err(Error::Precondition(format!(
                "shift_inward needs a boundary point, got psi = {psi:e}"
            )));
        }
        let g = self.grad_psi(c);
        let norm = g.norm();
        if norm <= self.eta {
            return Err(Error::DegenerateGradient { point: c.as_slice().to_vec(), norm, eta: self.eta });
        }
        Ok(c - (rho_k / norm) * g)
    }

    /// `c` itself when interior, the `rho_k` inward shift when on the boundary.
    pub fn start_in_ck(&self, c: &Vector, rho_k: f64) -> Result<Vector> {
        if self.on_boundary(c) {
            self.shift_inward(c, rho_k)
        } else if self.psi(c) < 0.0 {
            Ok(c.clone())
        } else {
            Err(Error::Precondition(format!("start point outside C (psi = {:e})", self.psi(c))))
        }
    }

    /// Reach of `C`: it is `eta / M_psi`-prox-regular.
    pub fn prox_radius(&self) -> f64 {
        self.eta / self.m_psi
    }

    /// Boundary point on the segment from the interior point towards `y`.
    pub fn boundary_along_ray(&self, y: &Vector) -> Option<Vector> {
        let c = self.interior_point()?;
        let d = y - &c;
        if d.norm() == 0.0 {
            return None;
        }
        // grow until outside, then bisect
        let mut hi = 1.0;
        let mut guard = 0;
        while self.psi(&(&c + hi * &d)) <= 0.0 {
            hi *= 2.0;
            guard += 1;
            if guard > 60 {
                return None;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.psi(&(&c + mid * &d)) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        Some(&c + lo * &d)
    }

    fn sample_constants(&self, budget: usize) -> SampledConstants {
        let n = self.dim();
        let mut mbar: f64 = 0.0;
        let mut lip: f64 = 0.0;
        let mut count = 0;
        for p in halton_points(n, budget) {
            let x = self.map_to_bbox(&p);
            if self.psi(&x) <= 0.0 {
                count += 1;
                mbar = mbar.max(self.grad_psi(&x).norm());
                lip = lip.max(spectral_norm(&self.hess_psi(&x)));
            }
        }
        for p in halton_points(n, budget / 4 + 1) {
            if let Some(b) = self.boundary_along_ray(&self.map_to_bbox(&p)) {
                mbar = mbar.max(self.grad_psi(&b).norm());
                lip = lip.max(spectral_norm(&self.hess_psi(&b)));
            }
        }
        let _ = count;
        SampledConstants { mbar_psi: mbar, m_psi: 0.5 * lip }
    }

    fn map_to_bbox(&self, unit: &[f64]) -> Vector {
        let (lo, hi) = &self.bbox;
        Vector::from_iterator(lo.len(), (0..lo.len()).map(|i| lo[i] + unit[i] * (hi[i] - lo[i])))
    }
}

struct SampledConstants {
    mbar_psi: f64,
    m_psi: f64,
}

fn validate_shape(shape: &Shape) -> Result<()> {
    let bad = |m: &str| Err(Error::validation("set.params", m));
    match shape {
        Shape::Interval { lo, hi } if !(hi > lo) => bad("interval needs lo < hi"),
        Shape::Ball { radius, .. } if !(*radius > 0.0) => bad("ball radius must be positive"),
        Shape::Ellipse { center, semi_axes }
            if center.len() != semi_axes.len() || semi_axes.iter().any(|a| !(*a > 0.0)) =>
        {
            bad("ellipse needs positive semi-axes, one per coordinate")
        }
        Shape::Custom { a, b, .. } if a.nrows() != b.len() || a.ncols() != b.len() => {
            bad("custom quadratic has inconsistent dimensions")
        }
        _ => Ok(()),
    }
}

fn spectral_norm(m: &Matrix) -> f64 {
    let sym = 0.5 * (m + m.transpose());
    SymmetricEigen::new(sym).eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Deterministic Halton sequence in `[0, 1)^dim`.
pub fn halton_points(dim: usize, count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    assert!(dim <= PRIMES.len(), "Halton sequence supports up to 8 dimensions");
    (1..=count as u64)
        .map(|i| PRIMES[..dim].iter().map(|&b| radical_inverse(i, b)).collect())
        .collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CertificationReport {
    pub shape: ShapeTag,
    pub eta: f64,
    pub boundary_samples: usize,
    pub interior_samples: usize,
    pub min_boundary_grad: f64,
    pub min_boundary_grad_at: Vec<f64>,
    /// Largest `eps` with `psi < -eps` wherever `|grad psi| <= eta` (None if no
    /// sample has a gradient that small).
    pub epsilon: Option<f64>,
    pub empirical_mbar_psi: f64,
    pub empirical_m_psi: f64,
    pub stored_mbar_psi: f64,
    pub stored_m_psi: f64,
    pub gradient_floor_ok: bool,
    pub constants_ok: bool,
}

impl CertificationReport {
    pub fn passed(&self) -> bool {
        self.gradient_floor_ok && self.constants_ok
    }
}

/// Samples the boundary shell and the interior and checks the stored
/// constants. Fails with the worst witness when the gradient floor
/// `|grad psi| > 2 eta` or a stored bound is broken.
pub fn certify_constants(set: &SublevelSet, sample_budget: usize) -> Result<CertificationReport> {
    let report = certification_report(set, sample_budget);
    if !report.gradient_floor_ok {
        return Err(Error::CertificationFailure {
            reason: format!(
                "boundary gradient {} does not exceed 2*eta = {}",
                report.min_boundary_grad,
                2.0 * set.eta
            ),
            witness: report.min_boundary_grad_at.clone(),
        });
    }
    if !report.constants_ok {
        return Err(Error::CertificationFailure {
            reason: format!(
                "stored constants (Mbar_psi = {}, M_psi = {}) below sampled values ({}, {})",
                report.stored_mbar_psi, report.stored_m_psi, report.empirical_mbar_psi, report.empirical_m_psi
            ),
            witness: report.min_boundary_grad_at.clone(),
        });
    }
    Ok(report)
}

/// The report behind [`certify_constants`], without turning failures into errors.
pub fn certification_report(set: &SublevelSet, sample_budget: usize) -> CertificationReport {
    let n = set.dim();
    let budget = sample_budget.max(16);
    let mut min_grad = f64::INFINITY;
    let mut min_at = Vec::new();
    let mut mbar: f64 = 0.0;
    let mut lip: f64 = 0.0;
    let mut epsilon: Option<f64> = None;
    let mut boundary_samples = 0;
    let mut interior_samples = 0;

    let mut visit = |x: &Vector, on_boundary: bool| {
        let g = set.grad_psi(x).norm();
        mbar = mbar.max(g);
        lip = lip.max(spectral_norm(&set.hess_psi(x)));
        if on_boundary && g < min_grad {
            min_grad = g;
            min_at = x.as_slice().to_vec();
        }
        if g <= set.eta {
            let e = -set.psi(x);
            epsilon = Some(epsilon.map_or(e, |v| v.min(e)));
        }
    };

    let boundary_budget = budget / 2;
    let directions = halton_points(n, boundary_budget);
    for p in &directions {
        let y = set.map_to_bbox(p);
        if let Some(b) = set.boundary_along_ray(&y) {
            if set.psi(&b).abs() <= set.boundary_tol {
                boundary_samples += 1;
                visit(&b, true);
            }
        }
    }
    // axis directions hit the extreme points of axis-aligned shapes exactly
    if let Some(c) = set.interior_point() {
        for i in 0..n {
            for s in [-1.0, 1.0] {
                let mut y = c.clone();
                y[i] += s;
                if let Some(b) = set.boundary_along_ray(&y) {
                    if set.psi(&b).abs() <= set.boundary_tol {
                        boundary_samples += 1;
                        visit(&b, true);
                    }
                }
            }
        }
    }
    for p in halton_points(n, budget - boundary_budget) {
        let x = set.map_to_bbox(&p);
        if set.psi(&x) <= 0.0 {
            interior_samples += 1;
            visit(&x, false);
        }
    }

    let m_psi = 0.5 * lip;
    let slack = 1e-9;
    CertificationReport {
        shape: set.shape.tag(),
        eta: set.eta,
        boundary_samples,
        interior_samples,
        min_boundary_grad: min_grad,
        min_boundary_grad_at: min_at,
        epsilon,
        empirical_mbar_psi: mbar,
        empirical_m_psi: m_psi,
        stored_mbar_psi: set.mbar_psi,
        stored_m_psi: set.m_psi,
        gradient_floor_ok: boundary_samples > 0 && min_grad > 2.0 * set.eta,
        constants_ok: set.mbar_psi >= mbar * (1.0 - slack) && set.m_psi >= m_psi * (1.0 - slack),
    }
}

/// `alpha = ln(eta * gamma / (2 Mbar)) / gamma`, defined for `gamma > 2 Mbar / eta`.
pub fn alpha_of_gamma(gamma: f64, eta: f64, mbar: f64) -> Result<f64> {
    let threshold = 2.0 * mbar / eta;
    if !(gamma > threshold) || !gamma.is_finite() {
        return Err(Error::ScheduleDomain { gamma, threshold });
    }
    Ok((eta * gamma / (2.0 * mbar)).ln() / gamma)
}

/// Ascending penalty parameters with the derived `alpha_k` and `rho_k = alpha_k / eta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub gammas: Vec<f64>,
    pub mbar: f64,
    pub eta: f64,
    pub alphas: Vec<f64>,
    pub rhos: Vec<f64>,
}

impl PenaltySchedule {
    pub fn new(gammas: Vec<f64>, mbar: f64, eta: f64) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::validation("schedule.gammas", "must not be empty"));
        }
        if gammas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("schedule.gammas", "must be strictly ascending"));
        }
        if !(mbar > 0.0) {
            return Err(Error::validation("Mbar", "must be positive"));
        }
        let alphas = gammas.iter().map(|&g| alpha_of_gamma(g, eta, mbar)).collect::<Result<Vec<_>>>()?;
        let rhos = alphas.iter().map(|a| a / eta).collect();
        Ok(PenaltySchedule { gammas, mbar, eta, alphas, rhos })
    }

    /// `gamma_k = gamma_0 * 2^k`, with `gamma_0 = 4 Mbar / eta` unless given.
    pub fn geometric(mbar: f64, eta: f64, gamma0: Option<f64>, count: usize) -> Result<Self> {
        let g0 = gamma0.unwrap_or(4.0 * mbar / eta);
        Self::new((0..count).map(|k| g0 * 2f64.powi(k as i32)).collect(), mbar, eta)
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    /// Upper bound `2 Mbar / eta` for the penalty multiplier.
    pub fn xi_bound(&self) -> f64 {
        2.0 * self.mbar / self.eta
    }

    /// Relative defect of `gamma_k exp(-alpha_k gamma_k) = 2 Mbar / eta`.
    pub fn identity_defect(&self, k: usize) -> f64 {
        let target = self.xi_bound();
        (self.gammas[k] * (-self.alphas[k] * self.gammas[k]).exp() - target).abs() / target
    }

    /// Index of `gamma` in the schedule (exact match up to 1e-12 relative).
    pub fn index_of(&self, gamma: f64) -> Option<usize> {
        self.gammas.iter().position(|g| (g - gamma).abs() <= 1e-12 * g.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn unit_interval(eta: f64) -> SublevelSet {
        SublevelSet::new(Shape::Interval { lo: -1.0, hi: 1.0 }, eta, SetConstants::default()).unwrap()
    }

    fn unit_ball(eta: f64) -> SublevelSet {
        SublevelSet::new(Shape::Ball { center: v(&[0.0, 0.0]), radius: 1.0 }, eta, SetConstants::default())
            .unwrap()
    }

    fn ellipse(eta: f64) -> SublevelSet {
        SublevelSet::new(
            Shape::Ellipse { center: v(&[0.0, 0.0]), semi_axes: v(&[2.0, 1.0]) },
            eta,
            SetConstants::default(),
        )
        .unwrap()
    }

    #[test]
    fn alpha_closed_form() {
        let a = alpha_of_gamma(100.0, 0.5, 1.0).unwrap();
        assert!((a - 25f64.ln() / 100.0).abs() < 1e-15);
        assert!((a - 0.0321888).abs() < 1e-7);
        let lhs = 100.0 * (-a * 100.0).exp();
        assert!((lhs - 4.0).abs() / 4.0 < 1e-12);
    }

    #[test]
    fn alpha_boundary_is_an_error() {
        assert!(matches!(alpha_of_gamma(4.0, 0.5, 1.0), Err(Error::ScheduleDomain { .. })));
        assert!(alpha_of_gamma(3.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn schedule_is_monotone() {
        let s = PenaltySchedule::new(vec![10.0, 100.0, 1e3, 1e4], 2.0, 0.9).unwrap();
        assert!(s.alphas.windows(2).all(|w| w[1] < w[0]));
        assert!(s.alphas.iter().all(|&a| a > 0.0));
        for k in 0..s.len() {
            assert!(s.identity_defect(k) <= 1e-12);
            assert!((s.rhos[k] - s.alphas[k] / 0.9).abs() < 1e-16);
        }
        assert!(PenaltySchedule::new(vec![10.0, 5.0], 2.0, 0.9).is_err());
    }

    #[test]
    fn geometric_default_schedule() {
        let s = PenaltySchedule::geometric(1.0, 0.5, None, 4).unwrap();
        assert_eq!(s.gammas, vec![8.0, 16.0, 32.0, 64.0]);
    }

    #[test]
    fn ck_membership_for_ball() {
        let set = unit_ball(0.9);
        let alpha = 0.1;
        let r = 0.9f64.sqrt();
        assert!(set.in_ck(alpha, &v(&[r - 1e-9, 0.0])));
        assert!(!set.in_ck(alpha, &v(&[r + 1e-9, 0.0])));
        let boundary = v(&[0.6, 0.8]);
        assert!(set.in_c(&boundary));
        assert!(!set.in_ck(1e-6, &boundary));
    }

    #[test]
    fn shift_inward_examples() {
        let set = unit_interval(0.9);
        let y = set.shift_inward(&v(&[1.0]), 0.05).unwrap();
        assert!((y[0] - 0.95).abs() < 1e-15);
        assert!((set.psi(&y) + 0.0975).abs() < 1e-12);

        let ball = unit_ball(0.9);
        let y = ball.shift_inward(&v(&[1.0, 0.0]), 0.1).unwrap();
        assert!((y - v(&[0.9, 0.0])).norm() < 1e-15);

        assert!(matches!(set.shift_inward(&v(&[0.5]), 0.05), Err(Error::Precondition(_))));
    }

    #[test]
    fn prox_radius_examples() {
        let mut set = unit_interval(0.9);
        assert!((set.prox_radius() - 0.9).abs() < 1e-15);
        set.eta = 0.999_999;
        assert!((set.prox_radius() - 1.0).abs() < 1e-5);
        let ball = unit_ball(0.999_999);
        assert!((ball.prox_radius() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn certification_of_builtin_shapes() {
        let rep = certify_constants(&unit_ball(0.9), 512).unwrap();
        assert!((rep.min_boundary_grad - 2.0).abs() < 1e-6);
        assert!(rep.passed());
        assert!((rep.empirical_m_psi - 1.0).abs() < 1e-12);

        match certify_constants(&unit_ball(1.1), 512) {
            Err(Error::CertificationFailure { witness, .. }) => assert_eq!(witness.len(), 2),
            other => panic!("expected failure, got {other:?}"),
        }

        let rep = certification_report(&ellipse(0.49), 2048);
        assert!((rep.min_boundary_grad - 1.0).abs() < 1e-6, "{}", rep.min_boundary_grad);
        assert!(rep.passed());
        assert!(certify_constants(&ellipse(0.5), 2048).is_err());
        assert!(rep.empirical_mbar_psi <= 2.0 + 1e-9);
    }

    #[test]
    fn custom_shape_matches_ellipse_constants() {
        let a = Matrix::from_diagonal(&v(&[0.25, 1.0]));
        let set = SublevelSet::new(
            Shape::Custom { a, b: v(&[0.0, 0.0]), c: -1.0 },
            0.45,
            SetConstants { bbox: Some((v(&[-2.0, -1.0]), v(&[2.0, 1.0]))), ..Default::default() },
        )
        .unwrap();
        assert!((set.m_psi - 1.0).abs() < 1e-12);
        assert!(set.mbar_psi <= 2.0 + 1e-9 && set.mbar_psi > 1.9);
        let rep = certification_report(&set, 2048);
        assert!((rep.min_boundary_grad - 1.0).abs() < 1e-6);
    }

    #[test]
    fn epsilon_estimate_for_ball() {
        let rep = certification_report(&unit_ball(0.9), 4096);
        // |grad psi| <= 0.9 iff |x| <= 0.45, where psi <= 0.2025 - 1
        let eps = rep.epsilon.unwrap();
        assert!(eps >= 1.0 - 0.2025 - 1e-12 && eps < 1.0);
    }
}

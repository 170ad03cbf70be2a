//! Closed convex primitives used for control sets and endpoint sets.

use serde::{Deserialize, Serialize};

use crate::geometry::Vector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    Point { at: Vec<f64> },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// All of R^n.
    Whole { dim: usize },
}

/// Tolerance for deciding that a point sits on the boundary of a primitive.
pub const ACTIVE_TOL: f64 = 1e-10;

impl Primitive {
    pub fn dim(&self) -> usize {
        match self {
            Primitive::Point { at } => at.len(),
            Primitive::Box { lo, .. } => lo.len(),
            Primitive::Ball { center, .. } => center.len(),
            Primitive::Whole { dim } => *dim,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Primitive::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err("box bounds differ in length".into());
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    return Err("box needs lo <= hi".into());
                }
                Ok(())
            }
            Primitive::Ball { radius, .. } if !(*radius >= 0.0) => Err("ball radius must be >= 0".into()),
            _ => Ok(()),
        }
    }

    pub fn project(&self, y: &Vector) -> Vector {
        match self {
            Primitive::Point { at } => Vector::from_column_slice(at),
            Primitive::Box { lo, hi } => {
                Vector::from_iterator(y.len(), (0..y.len()).map(|i| y[i].clamp(lo[i], hi[i])))
            }
            Primitive::Ball { center, radius } => {
                let c = Vector::from_column_slice(center);
                let d = y - &c;
                let n = d.norm();
                if n <= *radius {
                    y.clone()
                } else {
                    c + d * (*radius / n)
                }
            }
            Primitive::Whole { .. } => y.clone(),
        }
    }

    pub fn distance(&self, y: &Vector) -> f64 {
        (y - self.project(y)).norm()
    }

    pub fn contains(&self, y: &Vector, tol: f64) -> bool {
        self.distance(y) <= tol
    }

    /// Whether `y` (assumed in the set) lies on its boundary.
    pub fn on_boundary(&self, y: &Vector) -> bool {
        match self {
            Primitive::Point { .. } => true,
            Primitive::Box { lo, hi } => (0..y.len())
                .any(|i| (y[i] - lo[i]).abs() <= ACTIVE_TOL || (y[i] - hi[i]).abs() <= ACTIVE_TOL),
            Primitive::Ball { center, radius } => {
                ((y - Vector::from_column_slice(center)).norm() - radius).abs() <= ACTIVE_TOL
            }
            Primitive::Whole { .. } => false,
        }
    }

    /// Generators of the normal cone at `y`: `(rays, full_space)`. The cone is
    /// the nonnegative span of `rays`, or everything when `full_space`.
    pub fn normal_generators(&self, y: &Vector) -> (Vec<Vector>, bool) {
        match self {
            Primitive::Point { .. } => (Vec::new(), true),
            Primitive::Box { lo, hi } => {
                let n = y.len();
                let mut rays = Vec::new();
                for i in 0..n {
                    if (y[i] - hi[i]).abs() <= ACTIVE_TOL {
                        let mut e = Vector::zeros(n);
                        e[i] = 1.0;
                        rays.push(e);
                    }
                    if (y[i] - lo[i]).abs() <= ACTIVE_TOL {
                        let mut e = Vector::zeros(n);
                        e[i] = -1.0;
                        rays.push(e);
                    }
                }
                (rays, false)
            }
            Primitive::Ball { center, radius } => {
                let d = y - Vector::from_column_slice(center);
                let n = d.norm();
                if *radius == 0.0 {
                    (Vec::new(), true)
                } else if (n - radius).abs() <= ACTIVE_TOL {
                    (vec![d / n], false)
                } else {
                    (Vec::new(), false)
                }
            }
            Primitive::Whole { .. } => (Vec::new(), false),
        }
    }

    /// Distance from `w` to the normal cone of the set at `y`.
    pub fn normal_cone_distance(&self, y: &Vector, w: &Vector) -> f64 {
        let (rays, full) = self.normal_generators(y);
        cone_distance(w, &rays, full)
    }

    /// A maximiser of `<w, v>` over the set (None for unbounded sets).
    pub fn support_point(&self, w: &Vector) -> Option<Vector> {
        match self {
            Primitive::Point { at } => Some(Vector::from_column_slice(at)),
            Primitive::Box { lo, hi } => Some(Vector::from_iterator(
                w.len(),
                (0..w.len()).map(|i| if w[i] > 0.0 { hi[i] } else if w[i] < 0.0 { lo[i] } else { 0.5 * (lo[i] + hi[i]) }),
            )),
            Primitive::Ball { center, radius } => {
                let c = Vector::from_column_slice(center);
                let n = w.norm();
                Some(if n > 0.0 { c + w * (*radius / n) } else { c })
            }
            Primitive::Whole { .. } => None,
        }
    }

    pub fn translate(&self, shift: &Vector) -> Primitive {
        let add = |v: &[f64]| v.iter().zip(shift.iter()).map(|(a, b)| a + b).collect::<Vec<_>>();
        match self {
            Primitive::Point { at } => Primitive::Point { at: add(at) },
            Primitive::Box { lo, hi } => Primitive::Box { lo: add(lo), hi: add(hi) },
            Primitive::Ball { center, radius } => Primitive::Ball { center: add(center), radius: *radius },
            Primitive::Whole { dim } => Primitive::Whole { dim: *dim },
        }
    }

    /// A point of the set used to seed alternating projections.
    pub fn anchor(&self) -> Vector {
        match self {
            Primitive::Point { at } => Vector::from_column_slice(at),
            Primitive::Box { lo, hi } => {
                Vector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)))
            }
            Primitive::Ball { center, .. } => Vector::from_column_slice(center),
            Primitive::Whole { dim } => Vector::zeros(*dim),
        }
    }
}

/// `min |w - sum_j s_j g_j|` over `s >= 0` (zero when `full_space`).
pub fn cone_distance(w: &Vector, rays: &[Vector], full_space: bool) -> f64 {
    if full_space {
        return 0.0;
    }
    if rays.is_empty() {
        return w.norm();
    }
    // cyclic coordinate descent on the nonnegative least-squares problem
    let mut s = vec![0.0; rays.len()];
    let mut r = w.clone();
    for _ in 0..2000 {
        let mut change: f64 = 0.0;
        for (j, g) in rays.iter().enumerate() {
            let gg = g.norm_squared();
            if gg == 0.0 {
                continue;
            }
            let new = (s[j] + g.dot(&r) / gg).max(0.0);
            let delta = new - s[j];
            if delta != 0.0 {
                r -= g * delta;
                s[j] = new;
                change = change.max(delta.abs() * gg.sqrt());
            }
        }
        if change <= 1e-15 * (1.0 + w.norm()) {
            break;
        }
    }
    r.norm()
}

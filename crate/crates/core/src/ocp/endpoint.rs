//! Endpoint sets: finite intersections of primitives, optionally with `C`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{SublevelSet, Vector};
use crate::oracle::proj_c;
use crate::sets::{cone_distance, Primitive};

/// `parts[0] ∩ parts[1] ∩ ... (∩ C when with_c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointSet {
    pub parts: Vec<Primitive>,
    pub with_c: bool,
}

const DYKSTRA_ITERS: usize = 20_000;

impl EndpointSet {
    pub fn new(parts: Vec<Primitive>, with_c: bool) -> Self {
        EndpointSet { parts, with_c }
    }

    pub fn whole(dim: usize) -> Self {
        EndpointSet { parts: vec![Primitive::Whole { dim }], with_c: false }
    }

    /// The single point of the set when one part is a point.
    pub fn as_point(&self) -> Option<Vector> {
        self.parts.iter().find_map(|p| match p {
            Primitive::Point { at } => Some(Vector::from_column_slice(at)),
            _ => None,
        })
    }

    /// Whether membership constrains nothing beyond `C` (which runs never leave).
    pub fn is_unconstrained(&self) -> bool {
        self.parts.iter().all(|p| matches!(p, Primitive::Whole { .. }))
    }

    pub fn translate(&self, shift: &Vector) -> EndpointSet {
        EndpointSet { parts: self.parts.iter().map(|p| p.translate(shift)).collect(), with_c: self.with_c }
    }

    fn pieces(&self) -> usize {
        self.parts.len() + usize::from(self.with_c)
    }

    fn project_piece(&self, i: usize, set: &SublevelSet, y: &Vector) -> Result<Vector> {
        if i < self.parts.len() {
            Ok(self.parts[i].project(y))
        } else {
            proj_c(set, y)
        }
    }

    /// Projection by Dykstra's alternating scheme (exact for a single piece).
    pub fn project(&self, set: &SublevelSet, y: &Vector) -> Result<Vector> {
        let m = self.pieces();
        if m == 1 {
            return self.project_piece(0, set, y);
        }
        let mut x = y.clone();
        let mut incr = vec![Vector::zeros(y.len()); m];
        for _ in 0..DYKSTRA_ITERS {
            let before = x.clone();
            for (i, inc) in incr.iter_mut().enumerate() {
                let z = &x + &*inc;
                let p = self.project_piece(i, set, &z)?;
                *inc = z - &p;
                x = p;
            }
            if (&x - before).norm() <= 1e-15 * (1.0 + x.norm()) {
                break;
            }
        }
        Ok(x)
    }

    pub fn distance(&self, set: &SublevelSet, y: &Vector) -> Result<f64> {
        Ok((y - self.project(set, y)?).norm())
    }

    pub fn contains(&self, set: &SublevelSet, y: &Vector, tol: f64) -> Result<bool> {
        let part_ok = self.parts.iter().all(|p| p.contains(y, tol));
        Ok(part_ok && (!self.with_c || set.psi(y) <= set.boundary_tol.max(tol)))
    }

    /// Distance from `w` to the sum of the normal cones of the pieces active at `y`.
    pub fn normal_cone_distance(&self, set: &SublevelSet, y: &Vector, w: &Vector) -> f64 {
        let mut rays = Vec::new();
        for p in &self.parts {
            let (r, full) = p.normal_generators(y);
            if full {
                return 0.0;
            }
            rays.extend(r);
        }
        if self.with_c && set.psi(y) >= -set.boundary_tol {
            rays.push(set.grad_psi(y));
        }
        cone_distance(w, &rays, false)
    }

    fn check_nonempty(&self, set: &SublevelSet, seed: &Vector, what: &str) -> Result<Vector> {
        let p = self.project(set, seed)?;
        if !self.contains(set, &p, 1e-9)? {
            return Err(Error::EmptySet(format!("{what}: alternating projections found no common point")));
        }
        Ok(p)
    }
}

/// `C0 ∩ B(xbar0, delta_o)`, shifted inward by `rho_k` when `xbar0` lies on
/// the boundary of `C`.
pub fn build_c0k(
    c0: &EndpointSet,
    set: &SublevelSet,
    xbar0: &Vector,
    rho_k: f64,
    alpha_k: f64,
    delta_o: f64,
) -> Result<EndpointSet> {
    let mut parts = c0.parts.clone();
    parts.push(Primitive::Ball { center: xbar0.as_slice().to_vec(), radius: delta_o });
    let base = EndpointSet { parts, with_c: false };
    if set.psi(xbar0) < -set.boundary_tol {
        base.check_nonempty(set, xbar0, "C0(k)")?;
        return Ok(base);
    }
    let shifted = set.shift_inward(xbar0, rho_k)?;
    let out = base.translate(&(&shifted - xbar0));
    let p = out.check_nonempty(set, &shifted, "C0(k)")?;
    if set.psi(&p) > -alpha_k {
        return Err(Error::EmptySet(format!(
            "shifted C0(k) leaves C(k): psi = {:e} > -alpha_k = {:e}",
            set.psi(&p),
            -alpha_k
        )));
    }
    Ok(out)
}

/// `(C1 ∩ B(xbar1, delta_o)) + (xbar_gk1 - xbar1)`, intersected with `C`.
pub fn build_c1k(
    c1: &EndpointSet,
    set: &SublevelSet,
    xbar1: &Vector,
    xbar_gk1: &Vector,
    delta_o: f64,
) -> Result<EndpointSet> {
    let mut parts = c1.parts.clone();
    parts.push(Primitive::Ball { center: xbar1.as_slice().to_vec(), radius: delta_o });
    let moved = EndpointSet { parts, with_c: false }.translate(&(xbar_gk1 - xbar1));
    let out = EndpointSet { parts: moved.parts, with_c: true };
    out.check_nonempty(set, xbar_gk1, "C1(k)")?;
    Ok(out)
}

/// Endpoint sets of plain mode: `C_i ∩ C`.
pub fn plain_endpoint(c: &EndpointSet) -> EndpointSet {
    EndpointSet { parts: c.parts.clone(), with_c: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{SetConstants, Shape};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn interval() -> SublevelSet {
        SublevelSet::new(Shape::Interval { lo: -1.0, hi: 1.0 }, 0.9, SetConstants::default()).unwrap()
    }

    #[test]
    fn c0k_interior_branch_keeps_point() {
        let set = interval();
        let c0 = EndpointSet::new(vec![Primitive::Point { at: vec![0.0] }], false);
        let k = build_c0k(&c0, &set, &v(&[0.0]), 0.05, 0.01, 0.5).unwrap();
        assert_eq!(k.as_point().unwrap(), v(&[0.0]));
    }

    #[test]
    fn c0k_boundary_branch_shifts() {
        let set = interval();
        let c0 = EndpointSet::new(vec![Primitive::Point { at: vec![1.0] }], false);
        let k = build_c0k(&c0, &set, &v(&[1.0]), 0.05, 0.05, 0.5).unwrap();
        assert!((k.as_point().unwrap()[0] - 0.95).abs() < 1e-15);
        assert!(set.psi(&k.as_point().unwrap()) <= -0.05);
    }

    #[test]
    fn c1k_translates_and_intersects() {
        let set = interval();
        let c1 = EndpointSet::new(vec![Primitive::Box { lo: vec![0.9], hi: vec![1.0] }], false);
        let k = build_c1k(&c1, &set, &v(&[1.0]), &v(&[0.98]), 1.0).unwrap();
        let p = k.project(&set, &v(&[2.0])).unwrap();
        assert!((p[0] - 0.98).abs() < 1e-12);
        let q = k.project(&set, &v(&[0.0])).unwrap();
        assert!((q[0] - 0.88).abs() < 1e-12);
        // zero translate leaves the set unchanged
        let same = build_c1k(&c1, &set, &v(&[1.0]), &v(&[1.0]), 1.0).unwrap();
        assert!((same.project(&set, &v(&[0.0])).unwrap()[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn empty_intersection_is_reported() {
        let set = interval();
        let c1 = EndpointSet::new(vec![Primitive::Box { lo: vec![0.0], hi: vec![0.1] }], false);
        assert!(matches!(build_c1k(&c1, &set, &v(&[1.0]), &v(&[1.0]), 0.2), Err(Error::EmptySet(_))));
    }

    #[test]
    fn dykstra_on_disk_and_box() {
        let set = SublevelSet::new(
            Shape::Ball { center: v(&[0.0, 0.0]), radius: 1.0 },
            0.9,
            SetConstants::default(),
        )
        .unwrap();
        let s = EndpointSet::new(vec![Primitive::Box { lo: vec![0.5, -2.0], hi: vec![2.0, 2.0] }], true);
        let p = s.project(&set, &v(&[2.0, 2.0])).unwrap();
        assert!((p - v(&[0.5f64.sqrt(), 0.5f64.sqrt()])).norm() < 1e-6);
        let corner = v(&[0.5, 0.75f64.sqrt()]);
        let d = s.normal_cone_distance(&set, &corner, &v(&[-1.0, 1.0]));
        assert!(d < 1e-12);
    }

    #[test]
    fn normal_cone_interior_is_zero_cone() {
        let set = interval();
        let s = EndpointSet::new(vec![Primitive::Box { lo: vec![-1.0], hi: vec![1.0] }], false);
        assert!((s.normal_cone_distance(&set, &v(&[0.2]), &v(&[0.7])) - 0.7).abs() < 1e-15);
    }
}

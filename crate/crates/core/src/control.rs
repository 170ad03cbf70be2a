//! Piecewise-linear W^{1,2} controls and the control-set family `U(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vector;
use crate::grid;
use crate::sets::Primitive;

/// A control given by its values at grid nodes and linear in between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    pub grid: Vec<f64>,
    pub nodes: Vec<Vec<f64>>,
}

impl ControlPath {
    pub fn new(grid: Vec<f64>, nodes: Vec<Vec<f64>>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != nodes.len() {
            return Err(Error::validation("control.grid", "need at least two nodes, one value per node"));
        }
        if grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
            return Err(Error::validation("control.grid", "grid must start at 0 and end at 1"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("control.grid", "grid must be strictly ascending"));
        }
        let m = nodes[0].len();
        if m == 0 || nodes.iter().any(|n| n.len() != m) {
            return Err(Error::validation("control.nodes", "all nodes need the same positive dimension"));
        }
        Ok(ControlPath { grid, nodes })
    }

    /// Constant control on a uniform grid of `n_nodes`.
    pub fn constant(value: &[f64], n_nodes: usize) -> Self {
        ControlPath { grid: grid::uniform(n_nodes), nodes: vec![value.to_vec(); n_nodes] }
    }

    /// Uniform-grid control sampled from a function of time.
    pub fn from_fn(n_nodes: usize, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let grid = grid::uniform(n_nodes);
        let nodes = grid.iter().map(|&t| f(t)).collect();
        ControlPath { grid, nodes }
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn eval(&self, t: f64) -> Vector {
        Vector::from_vec(grid::interp_rows(&self.grid, &self.nodes, t))
    }

    /// Slope on cell `i` (between nodes `i` and `i + 1`).
    pub fn cell_slope(&self, i: usize) -> Vector {
        let h = self.grid[i + 1] - self.grid[i];
        Vector::from_iterator(self.dim(), (0..self.dim()).map(|j| (self.nodes[i + 1][j] - self.nodes[i][j]) / h))
    }

    /// Right-continuous derivative.
    pub fn derivative(&self, t: f64) -> Vector {
        let i = grid::locate(&self.grid, t);
        let i = if t >= self.grid[i + 1] && i + 2 < self.grid.len() { i + 1 } else { i };
        self.cell_slope(i)
    }

    /// `int |u'|^2`, exact for piecewise-linear paths.
    pub fn seminorm_sq(&self) -> f64 {
        (0..self.grid.len() - 1)
            .map(|i| self.cell_slope(i).norm_squared() * (self.grid[i + 1] - self.grid[i]))
            .sum()
    }

    pub fn seminorm(&self) -> f64 {
        self.seminorm_sq().sqrt()
    }

    /// `(|u - v|_2^2 + |u' - v'|_2^2)^(1/2)`, exact when both share a grid.
    pub fn w12_distance(&self, other: &ControlPath) -> Result<f64> {
        grid::check_same_grid(&self.grid, &other.grid)?;
        let mut l2 = 0.0;
        let mut h1 = 0.0;
        for i in 0..self.grid.len() - 1 {
            let h = self.grid[i + 1] - self.grid[i];
            for j in 0..self.dim() {
                let a = self.nodes[i][j] - other.nodes[i][j];
                let b = self.nodes[i + 1][j] - other.nodes[i + 1][j];
                l2 += h * (a * a + a * b + b * b) / 3.0;
                h1 += (b - a) * (b - a) / h;
            }
        }
        Ok((l2 + h1).sqrt())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.nodes.iter().flatten().copied().collect()
    }

    pub fn from_flat(grid: Vec<f64>, dim: usize, data: &[f64]) -> Self {
        let nodes = data.chunks(dim).map(|c| c.to_vec()).collect();
        ControlPath { grid, nodes }
    }

    /// Linear resampling onto another grid.
    pub fn resample(&self, grid: &[f64]) -> ControlPath {
        ControlPath {
            grid: grid.to_vec(),
            nodes: grid.iter().map(|&t| grid::interp_rows(&self.grid, &self.nodes, t)).collect(),
        }
    }
}

/// `U(t)`: a convex primitive, piecewise constant in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSetFamily {
    /// `(t_start, set)` segments with ascending starts, the first at 0.
    pub segments: Vec<(f64, Primitive)>,
}

impl ControlSetFamily {
    pub fn constant(set: Primitive) -> Self {
        ControlSetFamily { segments: vec![(0.0, set)] }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.segments.is_empty() || self.segments[0].0 != 0.0 {
            return Err(Error::validation("control.U", "first segment must start at t = 0"));
        }
        if self.segments.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::validation("control.U", "segment starts must ascend"));
        }
        for (_, s) in &self.segments {
            s.validate().map_err(|e| Error::validation("control.U", e))?;
            if s.dim() != m {
                return Err(Error::validation("control.U", "set dimension differs from control dimension"));
            }
            if matches!(s, Primitive::Whole { .. }) {
                return Err(Error::validation("control.U", "control sets must be bounded"));
            }
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> &Primitive {
        let mut cur = &self.segments[0].1;
        for (start, s) in &self.segments {
            if t >= *start {
                cur = s;
            }
        }
        cur
    }

    pub fn project_node(&self, t: f64, u: &Vector) -> Vector {
        self.at(t).project(u)
    }

    /// Exact projection of every node of `u` onto `U(t_i)`.
    pub fn project_path(&self, u: &ControlPath) -> ControlPath {
        let nodes = u
            .grid
            .iter()
            .zip(&u.nodes)
            .map(|(&t, n)| self.project_node(t, &Vector::from_column_slice(n)).as_slice().to_vec())
            .collect();
        ControlPath { grid: u.grid.clone(), nodes }
    }

    pub fn contains_path(&self, u: &ControlPath, tol: f64) -> bool {
        u.grid.iter().zip(&u.nodes).all(|(&t, n)| self.at(t).contains(&Vector::from_column_slice(n), tol))
    }

    /// Largest `|u|` over all sets (a bound for `U` as a whole).
    pub fn radius_bound(&self) -> f64 {
        self.segments
            .iter()
            .map(|(_, s)| match s {
                Primitive::Point { at } => at.iter().map(|v| v * v).sum::<f64>().sqrt(),
                Primitive::Box { lo, hi } => lo
                    .iter()
                    .zip(hi)
                    .map(|(l, h)| l.abs().max(h.abs()).powi(2))
                    .sum::<f64>()
                    .sqrt(),
                Primitive::Ball { center, radius } => {
                    center.iter().map(|v| v * v).sum::<f64>().sqrt() + radius
                }
                Primitive::Whole { .. } => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seminorm_of_ramp() {
        let u = ControlPath::from_fn(11, |t| vec![2.0 * t, -t]);
        assert!((u.seminorm_sq() - 5.0).abs() < 1e-12);
        assert!((u.derivative(0.55)[0] - 2.0).abs() < 1e-12);
        assert!((u.eval(0.25)[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn w12_distance_constant_offset() {
        let u = ControlPath::constant(&[1.0], 5);
        let v = ControlPath::constant(&[0.5], 5);
        assert!((u.w12_distance(&v).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(ControlPath::new(vec![0.0, 0.5], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(ControlPath::new(vec![0.0, 1.0], vec![vec![1.0]]).is_err());
    }

    #[test]
    fn piecewise_family() {
        let fam = ControlSetFamily {
            segments: vec![
                (0.0, Primitive::Box { lo: vec![-1.0], hi: vec![1.0] }),
                (0.5, Primitive::Box { lo: vec![0.0], hi: vec![2.0] }),
            ],
        };
        fam.validate(1).unwrap();
        let u = ControlPath::constant(&[1.5], 5);
        let p = fam.project_path(&u);
        assert_eq!(p.nodes[0], vec![1.0]);
        assert_eq!(p.nodes[4], vec![1.5]);
        assert!(fam.contains_path(&p, 0.0));
    }

    proptest! {
        #[test]
        fn w12_distance_is_symmetric_and_flat_roundtrips(
            a in proptest::collection::vec(-3.0f64..3.0, 6),
            b in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let g = grid::uniform(3);
            let u = ControlPath::from_flat(g.clone(), 2, &a);
            let v = ControlPath::from_flat(g, 2, &b);
            prop_assert_eq!(u.flatten(), a);
            let d1 = u.w12_distance(&v).unwrap();
            let d2 = v.w12_distance(&u).unwrap();
            prop_assert!((d1 - d2).abs() <= 1e-12 * (1.0 + d1));
        }
    }
}

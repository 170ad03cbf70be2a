//! Time grids on [0, 1] and the quadrature/interpolation used on them.

use crate::error::{Error, Result};

/// `n` equally spaced nodes on [0, 1] (n >= 2), last node exactly 1.
pub fn uniform(n: usize) -> Vec<f64> {
    assert!(n >= 2, "a grid needs at least two nodes");
    let last = (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { 1.0 } else { i as f64 / last }).collect()
}

/// Composite trapezoid rule for samples on `grid`.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(grid.len(), values.len());
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Trapezoid weights: `trapezoid(grid, v) == sum_i w[i] * v[i]`.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; grid.len()];
    for i in 0..grid.len().saturating_sub(1) {
        let h = grid[i + 1] - grid[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// L2 norm of a vector-valued path sampled as rows.
pub fn l2_norm_rows(grid: &[f64], rows: &[Vec<f64>]) -> f64 {
    let sq: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    trapezoid(grid, &sq).max(0.0).sqrt()
}

pub fn l2_norm(grid: &[f64], values: &[f64]) -> f64 {
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    trapezoid(grid, &sq).max(0.0).sqrt()
}

pub fn check_same_grid(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("{} vs {} nodes", a.len(), b.len())));
    }
    if let Some(i) = a.iter().zip(b).position(|(x, y)| (x - y).abs() > 1e-12) {
        return Err(Error::GridMismatch(format!("node {i} differs: {} vs {}", a[i], b[i])));
    }
    Ok(())
}

/// Index `i` with `grid[i] <= t <= grid[i + 1]` (clamped to the grid).
pub fn locate(grid: &[f64], t: f64) -> usize {
    let n = grid.len();
    if t <= grid[0] {
        return 0;
    }
    if t >= grid[n - 1] {
        return n - 2;
    }
    match grid.binary_search_by(|g| g.partial_cmp(&t).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(i) => i - 1,
    }
}

/// Piecewise-linear interpolation of vector rows at `t`.
pub fn interp_rows(grid: &[f64], rows: &[Vec<f64>], t: f64) -> Vec<f64> {
    let i = locate(grid, t);
    let (t0, t1) = (grid[i], grid[i + 1]);
    let s = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 0.0 };
    rows[i].iter().zip(&rows[i + 1]).map(|(a, b)| a + s * (b - a)).collect()
}

pub fn interp(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let i = locate(grid, t);
    let (t0, t1) = (grid[i], grid[i + 1]);
    let s = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 0.0 };
    values[i] + s * (values[i + 1] - values[i])
}

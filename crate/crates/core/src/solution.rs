//! Nodal value containers shared by every solver, plus CSV export.

use std::io::{self, Write};

use serde::Serialize;

use crate::coefficients::TimeGrid;
use crate::stats;

/// Values on grid nodes, either one deterministic row or one row per path.
/// Layout is row-major `[path][node][coord]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    paths: usize,
    nodes: usize,
    dim: usize,
    stochastic: bool,
    data: Vec<f64>,
}

impl NodalField {
    pub fn deterministic(values: Vec<f64>) -> Self {
        let nodes = values.len();
        Self {
            paths: 1,
            nodes,
            dim: 1,
            stochastic: false,
            data: values,
        }
    }

    pub fn deterministic_zeros(nodes: usize, dim: usize) -> Self {
        Self {
            paths: 1,
            nodes,
            dim,
            stochastic: false,
            data: vec![0.0; nodes * dim],
        }
    }

    pub fn pathwise(paths: usize, nodes: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), paths * nodes * dim, "pathwise field shape");
        Self {
            paths,
            nodes,
            dim,
            stochastic: true,
            data,
        }
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Coordinate vector at `(path, node)`; deterministic fields ignore `path`.
    pub fn at(&self, path: usize, node: usize) -> &[f64] {
        let m = if self.stochastic { path } else { 0 };
        let base = (m * self.nodes + node) * self.dim;
        &self.data[base..base + self.dim]
    }

    /// Scalar value (coordinate sum) at `(path, node)`.
    pub fn value(&self, path: usize, node: usize) -> f64 {
        let v = self.at(path, node);
        if v.len() == 1 {
            v[0]
        } else {
            v.iter().sum()
        }
    }

    pub fn set(&mut self, path: usize, node: usize, coord: usize, v: f64) {
        let m = if self.stochastic { path } else { 0 };
        self.data[(m * self.nodes + node) * self.dim + coord] = v;
    }

    /// Scalar values at `node` across paths.
    pub fn node_values(&self, node: usize) -> Vec<f64> {
        (0..self.paths).map(|m| self.value(m, node)).collect()
    }

    pub fn mean_at(&self, node: usize) -> f64 {
        if !self.stochastic {
            return self.value(0, node);
        }
        stats::mean(&self.node_values(node))
    }

    pub fn sd_at(&self, node: usize) -> f64 {
        if !self.stochastic {
            return 0.0;
        }
        stats::std_dev(&self.node_values(node))
    }

    pub fn se_at(&self, node: usize) -> f64 {
        if !self.stochastic {
            return 0.0;
        }
        stats::std_error(&self.node_values(node))
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| self.mean_at(i)).collect()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Adds a constant to every value (used to build perturbed candidates).
    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v += delta);
        out
    }
}

/// Anything carrying `(Y, Z)` on a grid.
pub trait NodalSolution {
    fn grid(&self) -> &TimeGrid;
    fn y(&self) -> &NodalField;
    fn z(&self) -> &NodalField;
}

/// Writes `t, Y_mean, Y_sd, Z_mean, <extra_name>` rows.
pub fn write_solution_csv<W: Write>(
    mut out: W,
    sol: &dyn NodalSolution,
    extra_name: &str,
    extra: &[f64],
) -> io::Result<()> {
    writeln!(out, "t,Y_mean,Y_sd,Z_mean,{extra_name}")?;
    let grid = sol.grid();
    for i in 0..grid.len() {
        writeln!(
            out,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            grid.time(i),
            sol.y().mean_at(i),
            sol.y().sd_at(i),
            sol.z().mean_at(i),
            extra.get(i).copied().unwrap_or(f64::NAN)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub t: f64,
    pub lower: f64,
    pub upper: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_field_statistics() {
        let f = NodalField::deterministic(vec![1.0, 2.0, 3.0]);
        assert_eq!(f.mean_at(1), 2.0);
        assert_eq!(f.sd_at(1), 0.0);
        assert_eq!(f.value(7, 2), 3.0);
    }

    #[test]
    fn pathwise_field_statistics() {
        let f = NodalField::pathwise(2, 2, 1, vec![1.0, 2.0, 3.0, 6.0]);
        assert_eq!(f.mean_at(0), 2.0);
        assert_eq!(f.mean_at(1), 4.0);
        assert_eq!(f.node_values(1), vec![2.0, 6.0]);
    }
}

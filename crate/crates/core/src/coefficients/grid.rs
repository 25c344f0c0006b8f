use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

use super::intensity::IntensityModel;

/// Default cap on the cumulative intensity for Λ-equidistributed grids.
pub const DEFAULT_LAMBDA_MAX: f64 = 12.0;

/// Strictly increasing partition of `[0, T]`.
///
/// `cap_index` marks the last regular node `t_cap < T`; the step from
/// `t_cap` to `T` is the only one touching the singular endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    points: Vec<f64>,
    cap_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum GridScheme {
    Uniform,
    LambdaEquidistributed { lambda_max: f64 },
    GeometricTail { ratio: f64, eps_min: f64 },
}

impl TimeGrid {
    pub fn new(points: Vec<f64>, cap_index: usize) -> Result<Self> {
        if points.len() < 2 {
            return Err(domain("a grid needs at least two points"));
        }
        if points[0] != 0.0 {
            return Err(domain(format!("grid must start at 0, starts at {}", points[0])));
        }
        if let Some(w) = points.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(domain(format!("grid not strictly increasing at {} -> {}", w[0], w[1])));
        }
        if cap_index + 1 >= points.len() {
            return Err(domain(format!(
                "cap index {cap_index} must precede the terminal node {}",
                points.len() - 1
            )));
        }
        Ok(Self { points, cap_index })
    }

    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(domain("uniform grid needs N >= 2"));
        }
        let mut points: Vec<f64> = (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect();
        points[n - 1] = horizon;
        Self::new(points, n - 2)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn terminal_index(&self) -> usize {
        self.points.len() - 1
    }

    pub fn cap_index(&self) -> usize {
        self.cap_index
    }

    pub fn t_cap(&self) -> f64 {
        self.points[self.cap_index]
    }

    pub fn time(&self, i: usize) -> f64 {
        self.points[i]
    }

    /// `t_{i+1} - t_i`.
    pub fn step(&self, i: usize) -> f64 {
        self.points[i + 1] - self.points[i]
    }

    /// Index of the last node `<= t`.
    pub fn index_at_or_before(&self, t: f64) -> usize {
        match self.points.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// Inserts the midpoint of every step. The cap moves to the same time.
    pub fn refine(&self) -> TimeGrid {
        let mut points = Vec::with_capacity(2 * self.points.len() - 1);
        for w in self.points.windows(2) {
            points.push(w[0]);
            points.push(0.5 * (w[0] + w[1]));
        }
        points.push(self.horizon());
        TimeGrid {
            points,
            cap_index: 2 * self.cap_index,
        }
    }

    pub fn same_nodes(&self, other: &TimeGrid) -> bool {
        self.points == other.points
    }
}

/// Builds a grid on `[0, T]` for the given intensity.
///
/// * `Uniform`: `N` equally spaced nodes.
/// * `LambdaEquidistributed`: `N` nodes with `Λ(t_i) = i Λ_max / (N - 1)`,
///   then `T`; `t_cap` is the last of them.
/// * `GeometricTail`: `N` uniform nodes on `[0, T(1 - ratio)]`, then nodes
///   `T - T ratio^k` (`k >= 2`) while the distance to `T` stays `>= eps_min`,
///   then `T`.
pub fn make_grid(model: &IntensityModel, n: usize, scheme: GridScheme) -> Result<TimeGrid> {
    let horizon = model.horizon();
    if n < 2 {
        return Err(domain(format!("grid needs N >= 2, got {n}")));
    }
    match scheme {
        GridScheme::Uniform => TimeGrid::uniform(horizon, n),
        GridScheme::LambdaEquidistributed { lambda_max } => {
            if !(lambda_max.is_finite() && lambda_max > 0.0) {
                return Err(domain(format!("Λ_max must be positive, got {lambda_max}")));
            }
            if !model.is_singular() {
                let reach = model.cumulative(horizon)?;
                if reach <= lambda_max {
                    return Err(Error::InfeasibleGrid(format!(
                        "Λ(T) = {reach} does not exceed Λ_max = {lambda_max}"
                    )));
                }
            }
            let mut points = Vec::with_capacity(n + 1);
            for i in 0..n {
                let level = lambda_max * i as f64 / (n - 1) as f64;
                points.push(model.inverse_cumulative(level)?);
            }
            if *points.last().unwrap() >= horizon {
                return Err(Error::InfeasibleGrid(format!(
                    "Λ_max = {lambda_max} is not resolvable below the horizon in floating point"
                )));
            }
            points.push(horizon);
            TimeGrid::new(points, n - 1)
        }
        GridScheme::GeometricTail { ratio, eps_min } => {
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(domain(format!("tail ratio must lie in (0, 1), got {ratio}")));
            }
            if !(eps_min > 0.0 && eps_min < horizon) {
                return Err(domain(format!("eps_min must lie in (0, T), got {eps_min}")));
            }
            let head_end = horizon * (1.0 - ratio);
            let mut points: Vec<f64> = (0..n).map(|i| head_end * i as f64 / (n - 1) as f64).collect();
            let mut k = 2;
            loop {
                let gap = horizon * ratio.powi(k);
                if gap < eps_min {
                    break;
                }
                points.push(horizon - gap);
                k += 1;
            }
            let cap = points.len() - 1;
            points.push(horizon);
            TimeGrid::new(points, cap)
        }
    }
}

//! Intensities, coefficient processes, driver maps, time grids and the
//! problem container, plus the standing-assumption probe.

mod driver;
mod grid;
mod intensity;
mod phi;
mod problem;

pub use driver::{DriverFlags, DriverSpec, FlagCheck};
pub use grid::{make_grid, GridScheme, TimeGrid, DEFAULT_LAMBDA_MAX};
pub use intensity::{CustomIntensity, IntensityKind, IntensityModel, IntensitySummary, CUMULATIVE_TOL};
pub use phi::{CoefficientKind, CoefficientProcess};
pub use problem::{BsdeProblem, EquationForm, TerminalFn, TerminalValue};

use serde::Serialize;

use crate::error::Result;

/// `cumulative_intensity`: `Λ(t)` for `0 <= t < T`.
pub fn cumulative_intensity(model: &IntensityModel, t: f64) -> Result<f64> {
    model.cumulative(t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub epsilons: Vec<f64>,
    /// `Λ(T - ε)` per probe, `None` where evaluation failed.
    pub values: Vec<Option<f64>>,
    pub threshold: f64,
    pub all_finite: bool,
    pub increasing: bool,
    pub diverges: bool,
    pub failures: Vec<String>,
}

/// Probes `Λ(T - ε)` for shrinking `ε`. `diverges` holds iff every value is
/// finite, the sequence increases, and the last value exceeds `threshold`.
pub fn validate_standing_assumption(model: &IntensityModel, epsilons: &[f64], threshold: f64) -> ValidationReport {
    let horizon = model.horizon();
    let mut failures = Vec::new();
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        failures.push("probe epsilons must strictly decrease".to_string());
    }
    let values: Vec<Option<f64>> = epsilons
        .iter()
        .map(|&eps| {
            if !(eps > 0.0 && eps <= horizon) {
                failures.push(format!("epsilon {eps} outside (0, T]"));
                return None;
            }
            match model.cumulative(horizon - eps) {
                Ok(v) if v.is_finite() => Some(v),
                Ok(v) => {
                    failures.push(format!("Λ(T - {eps}) = {v}"));
                    None
                }
                Err(e) => {
                    failures.push(format!("Λ(T - {eps}): {e}"));
                    None
                }
            }
        })
        .collect();
    let all_finite = values.iter().all(Option::is_some);
    let finite: Vec<f64> = values.iter().flatten().copied().collect();
    let increasing = all_finite && finite.windows(2).all(|w| w[1] > w[0]);
    let diverges = increasing && failures.is_empty() && finite.last().is_some_and(|&v| v > threshold);
    ValidationReport {
        epsilons: epsilons.to_vec(),
        values,
        threshold,
        all_finite,
        increasing,
        diverges,
        failures,
    }
}

//! Backward solvers for the truncated (Lipschitz) equations.
//!
//! Both modes step backward with an implicit Euler update in `Y`:
//! `Y_i + Δ_i (λⁿ(t_i) F(Y_i) + b Y_i) = E_i[Y_{i+1}] - Δ_i (φ_i + σ Σ_k Z_i^k)`.
//! The ODE mode is exact in expectation when `φ` and the terminal value are
//! deterministic (then `Z = 0`). The regression mode estimates `E_i[·]` by
//! least squares on the Brownian level and sets
//! `Z_i = E_i[(Y_{i+1} - E_i[Y_{i+1}]) ΔW_i] / Δ_i`.

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::{BsdeProblem, EquationForm, TimeGrid};
use crate::error::{domain, Error, Result};
use crate::paths::PathBundle;
use crate::regression::{fit_node, RegressionBasis};
use crate::singular_scheme::TruncatedDriver;
use crate::solution::{NodalField, NodalSolution};

/// Newton iterations stop once `|h(y)| <= NEWTON_TOL max(1, |rhs|)`.
pub const NEWTON_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SolverMode {
    OdeExact,
    RegressionMc {
        paths: usize,
        seed: u64,
        basis: RegressionBasis,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    pub max_newton_residual: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Number of values moved back into the a-priori box.
    pub clamped: usize,
}

/// Output of a classical solve.
#[derive(Debug, Clone)]
pub struct SolutionEstimate {
    pub grid: TimeGrid,
    pub y: NodalField,
    pub z: NodalField,
    pub mode: SolverMode,
    /// Truncation level used for the intensity (`inf` when bounded).
    pub level: f64,
    pub diagnostics: SolveDiagnostics,
}

impl NodalSolution for SolutionEstimate {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    fn y(&self) -> &NodalField {
        &self.y
    }
    fn z(&self) -> &NodalField {
        &self.z
    }
}

/// A problem together with an intensity truncation level, i.e. an equation
/// with bounded coefficients.
#[derive(Debug, Clone)]
pub struct ClassicalBsde<'a> {
    problem: &'a BsdeProblem,
    level: f64,
    clip: Option<TruncatedDriver>,
    clamp: Option<(f64, f64)>,
}

impl<'a> ClassicalBsde<'a> {
    /// `level` caps the intensity at `λ ∧ level`; pass `f64::INFINITY` only for
    /// bounded intensities.
    pub fn new(problem: &'a BsdeProblem, level: f64) -> Result<Self> {
        if level.is_nan() || level <= 0.0 {
            return Err(domain(format!("truncation level must be positive, got {level}")));
        }
        if level.is_infinite() && problem.intensity.is_singular() {
            return Err(domain(
                "a singular intensity needs a finite truncation level for the classical solver",
            ));
        }
        problem.validate()?;
        Ok(Self {
            problem,
            level,
            clip: None,
            clamp: None,
        })
    }

    /// Replaces the driver of a nonlinear problem by its clipped version.
    pub fn with_clip(mut self, clip: TruncatedDriver) -> Self {
        self.clip = Some(clip);
        self
    }

    /// Enables clamping of regression estimates to `[-(T - t) ‖φ‖∞, 0]` when
    /// the problem structure guarantees that range.
    pub fn with_box_clamp(mut self) -> Self {
        self.clamp = self.a_priori_box();
        self
    }

    pub fn problem(&self) -> &BsdeProblem {
        self.problem
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// `[-T ‖φ‖∞, 0]` when `A = 0`, `φ >= 0`, no extra slopes, and the λ-term is
    /// nondecreasing in `Y`.
    pub fn a_priori_box(&self) -> Option<(f64, f64)> {
        let p = self.problem;
        let contracting = matches!(p.form, EquationForm::PlusLambdaY | EquationForm::NonlinearPlus);
        let ok = contracting
            && p.terminal.is_zero()
            && p.y_slope == 0.0
            && p.z_slope == 0.0
            && p.phi.is_nonnegative_sampled(&p.intensity, 1);
        ok.then(|| (-p.horizon() * p.phi.bound(), 0.0))
    }

    pub fn rate(&self, t: f64) -> f64 {
        self.problem.intensity.truncated_rate(t, self.level)
    }

    fn response(&self, y: f64) -> (f64, f64) {
        match (&self.clip, self.problem.form) {
            (Some(c), EquationForm::NonlinearPlus) => (c.eval(y), c.derivative(y)),
            _ => self.problem.response(y),
        }
    }

    /// `λⁿ(t) F(y)` with the convention `0 · F = 0`.
    pub fn lambda_term(&self, t: f64, y: f64) -> f64 {
        let rate = self.rate(t);
        if rate == 0.0 {
            0.0
        } else {
            rate * self.response(y).0
        }
    }

    /// Solves `y + dt (rate F(y) + b y) = rhs`; returns `(y, |h(y)|)`.
    pub fn implicit_step(&self, dt: f64, rate: f64, rhs: f64, guess: f64) -> Result<(f64, f64)> {
        let b = self.problem.y_slope;
        let h = |y: f64| {
            let (fy, _) = self.response(y);
            let lam = if rate == 0.0 { 0.0 } else { rate * fy };
            y + dt * (lam + b * y) - rhs
        };
        match self.problem.form {
            EquationForm::PlusLambdaY | EquationForm::MinusLambdaY => {
                let sign = if self.problem.form == EquationForm::PlusLambdaY { 1.0 } else { -1.0 };
                let k = 1.0 + dt * (sign * rate + b);
                if !(k > 0.0) {
                    return Err(Error::Numeric(format!(
                        "implicit step is not solvable: 1 + Δ(±λ + b) = {k:.3e} (Δ = {dt:.3e}, λ = {rate:.3e})"
                    )));
                }
                let y = rhs / k;
                Ok((y, h(y).abs()))
            }
            EquationForm::NonlinearPlus => {
                if !(1.0 + dt * b > 0.0) {
                    return Err(Error::Numeric(format!("implicit step is not monotone: 1 + Δ b = {}", 1.0 + dt * b)));
                }
                solve_monotone(&h, |y| 1.0 + dt * (rate * self.response(y).1 + b), rhs, guess)
            }
        }
    }

    /// Moves `y` into `[-(T - t) ‖φ‖∞, 0]` when clamping is enabled.
    fn clamp_value(&self, t: f64, y: f64) -> (f64, bool) {
        match self.clamp {
            Some(_) => {
                let lo = -(self.problem.horizon() - t) * self.problem.phi.bound();
                if y < lo {
                    (lo, true)
                } else if y > 0.0 {
                    (0.0, true)
                } else {
                    (y, false)
                }
            }
            None => (y, false),
        }
    }
}

/// Safeguarded Newton for an increasing scalar function with bisection
/// fallback.
fn solve_monotone(h: &dyn Fn(f64) -> f64, dh: impl Fn(f64) -> f64, rhs: f64, guess: f64) -> Result<(f64, f64)> {
    let tol = NEWTON_TOL * rhs.abs().max(1.0);
    let guess = if guess.is_finite() { guess } else { rhs };
    let h0 = h(guess);
    if h0.abs() <= tol {
        return Ok((guess, h0.abs()));
    }
    let mut step = rhs.abs().max(1.0);
    let (mut lo, mut hi) = (guess, guess);
    let mut expansions = 0;
    if h0 > 0.0 {
        loop {
            lo -= step;
            step *= 2.0;
            expansions += 1;
            if h(lo) <= 0.0 || expansions > 200 {
                break;
            }
        }
    } else {
        loop {
            hi += step;
            step *= 2.0;
            expansions += 1;
            if h(hi) >= 0.0 || expansions > 200 {
                break;
            }
        }
    }
    if expansions > 200 {
        return Err(Error::Numeric(format!("no root bracket for the implicit step (rhs = {rhs})")));
    }
    let mut y = guess.clamp(lo, hi);
    let mut best = (y, f64::INFINITY);
    for _ in 0..MAX_NEWTON {
        let hv = h(y);
        if hv.abs() < best.1 {
            best = (y, hv.abs());
        }
        if hv.abs() <= tol {
            return Ok((y, hv.abs()));
        }
        if hv > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        if hi - lo <= 4.0 * f64::EPSILON * y.abs().max(1e-300) {
            return Ok(best);
        }
        let newton = y - hv / dh(y);
        y = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(best)
}

fn terminal_constant(problem: &BsdeProblem) -> Result<f64> {
    problem
        .terminal
        .constant()
        .ok_or_else(|| domain("the ODE mode needs a deterministic terminal value"))
}

/// Deterministic mode: `φ` and `A` deterministic, `Z = 0`.
pub fn solve_ode_mode(bsde: &ClassicalBsde, grid: &TimeGrid) -> Result<SolutionEstimate> {
    let problem = bsde.problem;
    if !problem.phi.is_deterministic() {
        return Err(domain("the ODE mode needs a deterministic coefficient φ"));
    }
    if (grid.horizon() - problem.horizon()).abs() > 1e-12 * problem.horizon() {
        return Err(domain("grid horizon differs from the problem horizon"));
    }
    let n = grid.len();
    let mut y = vec![0.0; n];
    y[n - 1] = terminal_constant(problem)?;
    let mut max_res: f64 = 0.0;
    for i in (0..n - 1).rev() {
        let t = grid.time(i);
        let dt = grid.step(i);
        let phi = problem.phi.value(&problem.intensity, t, &[]);
        let rhs = y[i + 1] - dt * phi;
        let (v, res) = bsde.implicit_step(dt, bsde.rate(t), rhs, y[i + 1])?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite value at t = {t}")));
        }
        y[i] = v;
        max_res = max_res.max(res);
    }
    let (y_min, y_max) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(SolutionEstimate {
        grid: grid.clone(),
        y: NodalField::deterministic(y),
        z: NodalField::deterministic_zeros(n, 1),
        mode: SolverMode::OdeExact,
        level: bsde.level,
        diagnostics: SolveDiagnostics {
            max_newton_residual: max_res,
            y_min,
            y_max,
            clamped: 0,
        },
    })
}

/// Least-squares Monte Carlo on a simulated bundle. Every `Y_i`, `Z_i` is a
/// function of the level `W_{t_i}` of its own path.
pub fn solve_regression_mc(bsde: &ClassicalBsde, bundle: &PathBundle, basis: &RegressionBasis) -> Result<SolutionEstimate> {
    let problem = bsde.problem;
    let grid = bundle.grid();
    if (grid.horizon() - problem.horizon()).abs() > 1e-12 * problem.horizon() {
        return Err(domain("bundle horizon differs from the problem horizon"));
    }
    let (m_paths, n, d) = (bundle.paths(), grid.len(), bundle.dim());
    let mut y_all = vec![0.0; m_paths * n];
    let mut z_all = vec![0.0; m_paths * n * d];
    let mut next: Vec<f64> = (0..m_paths)
        .map(|m| problem.terminal.value(bundle.level(m, n - 1)))
        .collect();
    for (m, v) in next.iter().enumerate() {
        y_all[m * n + n - 1] = *v;
    }
    let mut max_res: f64 = 0.0;
    let mut clamped = 0usize;
    for i in (0..n - 1).rev() {
        let t = grid.time(i);
        let dt = grid.step(i);
        let cond = fit_node(bundle, basis, i, &[&next])?.remove(0);
        let c: Vec<f64> = (0..m_paths).into_par_iter().map(|m| cond.eval(bundle.level(m, i))).collect();
        let z_targets: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                (0..m_paths)
                    .into_par_iter()
                    .map(|m| (next[m] - c[m]) * bundle.increment(m, i)[k] / dt)
                    .collect()
            })
            .collect();
        let z_refs: Vec<&[f64]> = z_targets.iter().map(|v| v.as_slice()).collect();
        let z_fits = fit_node(bundle, basis, i, &z_refs)?;
        let rate = bsde.rate(t);
        #[allow(clippy::type_complexity)]
        let steps: Vec<Result<(f64, f64, bool, Vec<f64>)>> = (0..m_paths)
            .into_par_iter()
            .map(|m| {
                let w = bundle.level(m, i);
                let z: Vec<f64> = z_fits.iter().map(|f| f.eval(w)).collect();
                let phi = problem.phi.value(&problem.intensity, t, w);
                let rhs = c[m] - dt * (phi + problem.z_slope * z.iter().sum::<f64>());
                let (v, res) = bsde.implicit_step(dt, rate, rhs, next[m])?;
                let (v, moved) = bsde.clamp_value(t, v);
                Ok((v, res, moved, z))
            })
            .collect();
        for (m, s) in steps.into_iter().enumerate() {
            let (v, res, moved, z) = s?;
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite value at t = {t}, path {m}")));
            }
            next[m] = v;
            y_all[m * n + i] = v;
            z_all[(m * n + i) * d..(m * n + i + 1) * d].copy_from_slice(&z);
            max_res = max_res.max(res);
            clamped += moved as usize;
        }
    }
    let y = NodalField::pathwise(m_paths, n, 1, y_all);
    let (y_min, y_max) = y.min_max();
    Ok(SolutionEstimate {
        grid: grid.clone(),
        y,
        z: NodalField::pathwise(m_paths, n, d, z_all),
        mode: SolverMode::RegressionMc {
            paths: m_paths,
            seed: bundle.seed(),
            basis: basis.clone(),
        },
        level: bsde.level,
        diagnostics: SolveDiagnostics {
            max_newton_residual: max_res,
            y_min,
            y_max,
            clamped,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// `max_i (mean(low_i - high_i))_+`.
    pub max_violation: f64,
    /// `max_i (mean(low_i - high_i) - tol_i)_+`; zero iff the check passes.
    pub max_excess: f64,
    pub violating_nodes: Vec<usize>,
    pub holds: bool,
}

/// Checks `low <= high` node by node. Deterministic fields compare exactly;
/// stochastic fields compare path-paired means within three standard errors.
pub fn comparison_check(low: &dyn NodalSolution, high: &dyn NodalSolution) -> Result<ComparisonReport> {
    if !low.grid().same_nodes(high.grid()) {
        return Err(domain("comparison needs solutions on the same grid"));
    }
    let (ly, hy) = (low.y(), high.y());
    let stochastic = ly.is_stochastic() || hy.is_stochastic();
    if ly.is_stochastic() && hy.is_stochastic() && ly.paths() != hy.paths() {
        return Err(domain("comparison needs the same number of paths"));
    }
    let paths = ly.paths().max(hy.paths());
    let mut max_violation: f64 = 0.0;
    let mut max_excess: f64 = 0.0;
    let mut violating_nodes = Vec::new();
    for i in 0..low.grid().len() {
        let (diff, tol) = if stochastic {
            let d: Vec<f64> = (0..paths).map(|m| ly.value(m, i) - hy.value(m, i)).collect();
            (crate::stats::mean(&d), 3.0 * crate::stats::std_error(&d))
        } else {
            (ly.value(0, i) - hy.value(0, i), 0.0)
        };
        max_violation = max_violation.max(diff);
        let excess = diff - tol;
        if excess > 0.0 {
            max_excess = max_excess.max(excess);
            violating_nodes.push(i);
        }
    }
    Ok(ComparisonReport {
        max_violation,
        max_excess,
        holds: violating_nodes.is_empty(),
        violating_nodes,
    })
}

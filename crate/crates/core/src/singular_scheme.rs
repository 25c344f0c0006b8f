//! Monotone truncation scheme for the singular nonlinear equation.
//!
//! For each level `n` of a schedule the intensity is capped at `λ ∧ n` and the
//! driver is clipped below `L = -T ‖φ‖∞`; the resulting classical equations
//! are solved and the sequence `Yⁿ` is checked for monotonicity, the a-priori
//! box and the Cauchy property on `[0, t₀]`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::{BsdeProblem, DriverSpec, EquationForm, TimeGrid};
use crate::error::{domain, Error, Result};
use crate::lipschitz_solver::{solve_ode_mode, solve_regression_mc, ClassicalBsde, SolutionEstimate};
use crate::paths::PathBundle;
use crate::regression::{fit_node, RegressionBasis};
use crate::solution::{Envelope, NodalSolution};
use crate::stats;

/// Driver clipped below `lower_clip`: `f̃(x) = f(max(x, L))`.
#[derive(Debug, Clone)]
pub struct TruncatedDriver {
    base: DriverSpec,
    lower_clip: f64,
    lipschitz: f64,
}

impl TruncatedDriver {
    pub fn base(&self) -> &DriverSpec {
        &self.base
    }

    pub fn lower_clip(&self) -> f64 {
        self.lower_clip
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.base.eval(x.max(self.lower_clip))
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x < self.lower_clip {
            0.0
        } else {
            self.base.derivative(x)
        }
    }
}

/// Builds `f̃` with `L = -T ‖φ‖∞`; the Lipschitz constant is the sampled sup of
/// `f'` over `[L, 0]` including both endpoints.
pub fn truncate(driver: &DriverSpec, phi_bound: f64, horizon: f64) -> Result<TruncatedDriver> {
    if !driver.flags().admits_scheme() {
        return Err(domain(format!(
            "driver {} lacks the flags needed for truncation",
            driver.name()
        )));
    }
    if !(phi_bound.is_finite() && phi_bound >= 0.0 && horizon > 0.0) {
        return Err(domain("truncation needs a finite ‖φ‖∞ and a positive horizon"));
    }
    let lower_clip = -horizon * phi_bound;
    let samples = 1000;
    let mut lipschitz = driver.derivative(lower_clip).max(driver.derivative(0.0));
    for i in 1..samples {
        let x = lower_clip * i as f64 / samples as f64;
        lipschitz = lipschitz.max(driver.derivative(x));
    }
    if !lipschitz.is_finite() {
        return Err(domain("driver derivative is unbounded on the clip range"));
    }
    Ok(TruncatedDriver {
        base: driver.clone(),
        lower_clip,
        lipschitz,
    })
}

/// Doubling schedule `2, 4, ..., 256`.
pub fn default_schedule() -> Vec<f64> {
    (1..=8).map(|k| f64::from(1u32 << k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeConfig {
    pub schedule: Vec<f64>,
    /// Cauchy horizon; `None` picks the default rule (see [`default_t0_index`]).
    pub t0: Option<f64>,
    /// Success threshold for the last Cauchy gap.
    pub tol: f64,
    /// Slack for box checks; `None` uses `1e-10` (ODE) or three standard errors
    /// plus `1e-3` (regression).
    pub box_slack: Option<f64>,
    /// Keep every level's solution in the report.
    pub keep_solutions: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            schedule: default_schedule(),
            t0: None,
            tol: 1e-5,
            box_slack: None,
            keep_solutions: false,
        }
    }
}

#[derive(Debug, Clone)]
pub enum SchemeMode<'a> {
    Ode,
    Regression {
        bundle: &'a PathBundle,
        basis: RegressionBasis,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeStatus {
    Converged,
    NotConverged,
}

/// One line per schedule level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeRow {
    pub n: f64,
    pub y0: f64,
    pub y0_se: f64,
    /// Gap to the previous level on `[0, t₀]` (none for the first level).
    pub cauchy_gap: Option<f64>,
    /// `max_i (Y^{prev}_i - Y^n_i)_+` (none for the first level).
    pub monotone_violation: Option<f64>,
    pub lambda_f_integral: f64,
    pub box_violation: f64,
    pub bmo_estimate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeReport {
    pub schedule: Vec<f64>,
    pub t0: f64,
    pub t0_index: usize,
    pub t_cap: f64,
    pub phi_bound: f64,
    pub lower_clip: f64,
    pub lipschitz: f64,
    pub rows: Vec<SchemeRow>,
    pub cauchy_gaps: Vec<f64>,
    pub cauchy_decreasing: bool,
    pub monotone_violation: f64,
    pub monotone_ok: bool,
    pub bounds_ok: bool,
    pub max_box_violation: f64,
    /// `max |Y(T - ε)| - ε ‖φ‖∞` over the last nodes up to `t_cap` (final level).
    pub terminal_continuity_excess: f64,
    pub lambda_f_integrals: Vec<f64>,
    /// `|Y(0)| + T ‖φ‖∞` for the final level.
    pub lambda_f_bound: f64,
    pub bmo: Option<BmoEstimate>,
    pub status: SchemeStatus,
    /// Last iterate; on `(t₀, T]` it is only certified through `envelope`.
    #[serde(skip)]
    pub final_solution: SolutionEstimate,
    pub envelope: Vec<Envelope>,
    #[serde(skip)]
    pub solutions: Vec<SolutionEstimate>,
}

impl SchemeReport {
    /// Writes `n, Y0, cauchy_gap, monotone_violation, lambda_f_integral, bmo_estimate`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,Y0,cauchy_gap,monotone_violation,lambda_f_integral,bmo_estimate")?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.12e}"));
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.12e},{},{},{:.12e},{}",
                r.n,
                r.y0,
                opt(r.cauchy_gap),
                opt(r.monotone_violation),
                r.lambda_f_integral,
                opt(r.bmo_estimate)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BmoEstimate {
    pub value: f64,
    pub standard_error: f64,
    /// Grid node where the maximum is attained.
    pub node: usize,
}

/// Default Cauchy horizon: the last node `<= t_cap` where `λ <= n_min`.
pub fn default_t0_index(problem: &BsdeProblem, grid: &TimeGrid, n_min: f64) -> usize {
    let cap = grid.cap_index();
    (0..=cap)
        .rev()
        .find(|&i| problem.intensity.rate(grid.time(i)) <= n_min)
        .unwrap_or(0)
}

/// Runs the truncation scheme over `config.schedule`.
pub fn run_scheme(problem: &BsdeProblem, grid: &TimeGrid, config: &SchemeConfig, mode: &SchemeMode) -> Result<SchemeReport> {
    if !problem.terminal.is_zero() {
        return Err(Error::NoSolution {
            reason: "terminal value must vanish when the intensity explodes at the horizon".into(),
        });
    }
    if problem.form == EquationForm::MinusLambdaY {
        return Err(domain("the truncation scheme needs a nondecreasing λ-term"));
    }
    let schedule = &config.schedule;
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[1] > w[0])) || !(schedule[0] > 0.0) {
        return Err(domain("schedule must be a nonempty increasing list of positive levels"));
    }
    if let SchemeMode::Regression { bundle, .. } = mode {
        if !bundle.grid().same_nodes(grid) {
            return Err(domain("bundle and scheme grid differ"));
        }
    }
    let horizon = problem.horizon();
    let phi_bound = problem.phi.bound();
    let driver = match problem.form {
        EquationForm::PlusLambdaY => DriverSpec::identity(),
        _ => problem.driver.clone(),
    };
    let clip = truncate(&driver, phi_bound, horizon)?;
    let t0_index = match config.t0 {
        Some(t0) => {
            if !(t0 >= 0.0 && t0 < horizon) {
                return Err(domain(format!("t0 = {t0} must lie in [0, T)")));
            }
            grid.index_at_or_before(t0).min(grid.cap_index())
        }
        None => default_t0_index(problem, grid, schedule[0]),
    };
    let t0 = grid.time(t0_index);
    let stochastic = matches!(mode, SchemeMode::Regression { .. });

    let mut rows: Vec<SchemeRow> = Vec::with_capacity(schedule.len());
    let mut solutions = Vec::new();
    let mut prev: Option<SolutionEstimate> = None;
    let mut monotone_violation: f64 = 0.0;
    let mut monotone_ok = true;
    let mut max_box_violation: f64 = 0.0;
    let mut bounds_ok = true;
    let mut cauchy_gaps = Vec::new();
    let mut lambda_f_integrals = Vec::new();

    for &n in schedule {
        let bsde = ClassicalBsde::new(problem, n)?.with_clip(clip.clone());
        let sol = match mode {
            SchemeMode::Ode => solve_ode_mode(&bsde, grid)?,
            SchemeMode::Regression { bundle, basis } => solve_regression_mc(&bsde.with_box_clamp(), bundle, basis)?,
        };
        // box −(T−t)‖φ‖∞ ≤ Y ≤ 0
        let mut box_violation: f64 = 0.0;
        for i in 0..grid.len() {
            let lo = -(horizon - grid.time(i)) * phi_bound;
            let slack = config
                .box_slack
                .unwrap_or(if stochastic { 3.0 * sol.y.se_at(i) + 1e-3 } else { 1e-10 });
            let (y_lo, y_hi) = if stochastic {
                let v = sol.y.mean_at(i);
                (v, v)
            } else {
                (sol.y.value(0, i), sol.y.value(0, i))
            };
            let excess = (lo - y_lo).max(y_hi).max(0.0);
            box_violation = box_violation.max(excess);
            if excess > slack {
                bounds_ok = false;
            }
        }
        max_box_violation = max_box_violation.max(box_violation);
        let lf = estimate_lambda_f_integral(&sol, problem, n);
        lambda_f_integrals.push(lf);

        let (mut gap, mut viol) = (None, None);
        if let Some(p) = &prev {
            let mut g: f64 = 0.0;
            let mut v: f64 = 0.0;
            for i in 0..grid.len() {
                let (d_mean, d_tol) = if stochastic {
                    let d: Vec<f64> = (0..sol.y.paths()).map(|m| p.y.value(m, i) - sol.y.value(m, i)).collect();
                    (stats::mean(&d), 3.0 * stats::std_error(&d))
                } else {
                    (p.y.value(0, i) - sol.y.value(0, i), 1e-10)
                };
                v = v.max(d_mean);
                if d_mean > d_tol {
                    monotone_ok = false;
                }
                if i <= t0_index {
                    let dist = if stochastic {
                        let sq: Vec<f64> = (0..sol.y.paths())
                            .map(|m| (p.y.value(m, i) - sol.y.value(m, i)).powi(2))
                            .collect();
                        stats::mean(&sq).sqrt()
                    } else {
                        d_mean.abs()
                    };
                    g = g.max(dist);
                }
            }
            monotone_violation = monotone_violation.max(v);
            cauchy_gaps.push(g);
            gap = Some(g);
            viol = Some(v.max(0.0));
        }
        rows.push(SchemeRow {
            n,
            y0: sol.y.mean_at(0),
            y0_se: sol.y.se_at(0),
            cauchy_gap: gap,
            monotone_violation: viol,
            lambda_f_integral: lf,
            box_violation,
            bmo_estimate: None,
        });
        if config.keep_solutions {
            solutions.push(sol.clone());
        }
        prev = Some(sol);
    }
    let final_solution = prev.expect("nonempty schedule");

    let cap = grid.cap_index();
    let first = cap.saturating_sub(4);
    let terminal_continuity_excess = (first..=cap)
        .map(|i| final_solution.y.mean_at(i).abs() - (horizon - grid.time(i)) * phi_bound)
        .fold(f64::NEG_INFINITY, f64::max);

    let bmo = match mode {
        SchemeMode::Regression { bundle, basis } => Some(estimate_bmo(&final_solution, bundle, basis)?),
        SchemeMode::Ode => None,
    };
    if let (Some(b), Some(last)) = (bmo, rows.last_mut()) {
        last.bmo_estimate = Some(b.value);
    }
    let envelope = (t0_index + 1..grid.len())
        .map(|i| Envelope {
            t: grid.time(i),
            lower: -(horizon - grid.time(i)) * phi_bound,
            upper: 0.0,
        })
        .collect();
    let cauchy_decreasing = cauchy_gaps.windows(2).all(|w| w[1] < w[0]);
    let status = match cauchy_gaps.last() {
        Some(&g) if g < config.tol => SchemeStatus::Converged,
        _ => SchemeStatus::NotConverged,
    };
    Ok(SchemeReport {
        schedule: schedule.clone(),
        t0,
        t0_index,
        t_cap: grid.t_cap(),
        phi_bound,
        lower_clip: clip.lower_clip(),
        lipschitz: clip.lipschitz(),
        lambda_f_bound: final_solution.y.mean_at(0).abs() + horizon * phi_bound,
        rows,
        cauchy_gaps,
        cauchy_decreasing,
        monotone_violation: monotone_violation.max(0.0),
        monotone_ok,
        bounds_ok,
        max_box_violation,
        terminal_continuity_excess,
        lambda_f_integrals,
        bmo,
        status,
        final_solution,
        envelope,
        solutions,
    })
}

/// `sup_{t <= t0} |a - b|` on a shared grid (means in stochastic mode).
pub fn sup_distance_until(a: &dyn NodalSolution, b: &dyn NodalSolution, t0: f64) -> Result<f64> {
    let ga = a.grid();
    let gb = b.grid();
    let mut worst: f64 = 0.0;
    if ga.same_nodes(gb) {
        for i in 0..=ga.index_at_or_before(t0) {
            worst = worst.max((a.y().mean_at(i) - b.y().mean_at(i)).abs());
        }
        return Ok(worst);
    }
    // Different grids: compare at the nodes of `a`, interpolating `b` linearly.
    let pb = gb.points();
    for i in 0..=ga.index_at_or_before(t0) {
        let t = ga.time(i);
        let j = gb.index_at_or_before(t);
        let vb = if j + 1 < pb.len() {
            let w = (t - pb[j]) / (pb[j + 1] - pb[j]);
            (1.0 - w) * b.y().mean_at(j) + w * b.y().mean_at(j + 1)
        } else {
            b.y().mean_at(j)
        };
        worst = worst.max((a.y().mean_at(i) - vb).abs());
    }
    Ok(worst)
}

/// Conditional BMO proxy: for every node `τ`, regress the pathwise sums
/// `Σ_{i >= τ} ‖Z_i‖² Δ_i` on `W_τ` and take the largest fitted value over
/// paths with `|W_τ / √τ| <= 3`; the result is the max over nodes.
/// Deterministic solutions have `Z = 0` and return 0.
pub fn estimate_bmo(sol: &SolutionEstimate, bundle: &PathBundle, basis: &RegressionBasis) -> Result<BmoEstimate> {
    if !sol.z.is_stochastic() {
        return Ok(BmoEstimate {
            value: 0.0,
            standard_error: 0.0,
            node: 0,
        });
    }
    let grid = &sol.grid;
    if !bundle.grid().same_nodes(grid) || bundle.paths() != sol.z.paths() {
        return Err(domain("BMO estimate needs the bundle the solution was computed on"));
    }
    let (m_paths, n) = (bundle.paths(), grid.len());
    let mut q = vec![0.0; m_paths];
    let mut best = BmoEstimate {
        value: 0.0,
        standard_error: 0.0,
        node: n - 1,
    };
    for i in (0..n - 1).rev() {
        let dt = grid.step(i);
        q.par_iter_mut().enumerate().for_each(|(m, acc)| {
            let z = sol.z.at(m, i);
            *acc += z.iter().map(|v| v * v).sum::<f64>() * dt;
        });
        let fit = fit_node(bundle, basis, i, &[&q])?.remove(0);
        let t = grid.time(i);
        let scale = if t > 0.0 { 1.0 / t.sqrt() } else { 0.0 };
        let candidate = (0..m_paths)
            .into_par_iter()
            .filter(|&m| bundle.level(m, i).iter().all(|w| (w * scale).abs() <= 3.0))
            .map(|m| (fit.eval(bundle.level(m, i)), m))
            .reduce(|| (f64::NEG_INFINITY, usize::MAX), |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            });
        if candidate.1 != usize::MAX && candidate.0 > best.value {
            best = BmoEstimate {
                value: candidate.0,
                standard_error: fit.std_error(bundle.level(candidate.1, i)),
                node: i,
            };
        }
    }
    Ok(best)
}

/// Trapezoidal estimate of `E ∫_0^T λⁿ |f(Yⁿ)| dt` on the solution grid.
pub fn estimate_lambda_f_integral(sol: &SolutionEstimate, problem: &BsdeProblem, level: f64) -> f64 {
    let grid = &sol.grid;
    let n = grid.len();
    let integrand = |m: usize, i: usize| {
        let rate = problem.intensity.truncated_rate(grid.time(i), level);
        if rate == 0.0 {
            0.0
        } else {
            rate * problem.response(sol.y.value(m, i)).0.abs()
        }
    };
    let per_path: Vec<f64> = (0..sol.y.paths())
        .into_par_iter()
        .map(|m| {
            (0..n - 1)
                .map(|i| 0.5 * (integrand(m, i) + integrand(m, i + 1)) * grid.step(i))
                .sum()
        })
        .collect();
    stats::mean(&per_path)
}

//! Numerical certificates: non-existence evidence for nonzero terminal values,
//! verified families of distinct solutions, residual checks and the
//! class-(D) norm.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::affine::{classify_ode, fundamental_family, ode_family_member, transported_fundamental, AffineSolution, OdeCase};
use crate::coefficients::{BsdeProblem, CoefficientProcess, EquationForm, IntensityModel, TerminalValue, TimeGrid};
use crate::error::{domain, Error, Result};
use crate::lipschitz_solver::{solve_ode_mode, ClassicalBsde};
use crate::paths::PathBundle;
use crate::solution::NodalSolution;
use crate::stats;

/// Which quantity the non-existence growth test is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthMeasure {
    /// `∫_0^T λⁿ |F(Yⁿ)| dt`.
    DriverMass,
    /// `max_t λⁿ(t) |F(Yⁿ_t)|`.
    DriverPeak,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CertificateKind {
    NonExistence {
        /// `(n, ∫ λⁿ |F(Yⁿ)| dt)`.
        growth_series: Vec<(f64, f64)>,
        /// `(n, max_t λⁿ |F(Yⁿ)|)`.
        peak_series: Vec<(f64, f64)>,
        measure: GrowthMeasure,
        /// last / first value of the tested series.
        ratio: f64,
        monotone_divergent: bool,
    },
    NonUniqueness {
        #[serde(skip)]
        members: Vec<AffineSolution>,
        y0: Vec<f64>,
        residuals: Vec<ResidualReport>,
        /// `(a, b, sup_{t <= t_cap} |Y_a - Y_b|)`.
        pairwise_sup_distance: Vec<(usize, usize, f64)>,
        /// `(a, b, |Y_a(0) - Y_b(0)|)`.
        distance_at_zero: Vec<(usize, usize, f64)>,
        tolerance: f64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct PathologyCertificate {
    pub scenario_id: String,
    pub kind: CertificateKind,
    pub note: String,
}

/// Required last/first ratio of a divergent growth series.
pub const GROWTH_RATIO: f64 = 10.0;

impl PathologyCertificate {
    pub fn is_nonexistence_certified(&self) -> bool {
        matches!(self.kind, CertificateKind::NonExistence { monotone_divergent: true, .. })
    }

    /// Plain text rendering with one `key: value` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.scenario_id);
        match &self.kind {
            CertificateKind::NonExistence {
                growth_series,
                peak_series,
                measure,
                ratio,
                monotone_divergent,
            } => {
                let _ = writeln!(s, "kind: non_existence");
                let _ = writeln!(s, "measure: {}", measure_name(*measure));
                for ((n, mass), (_, peak)) in growth_series.iter().zip(peak_series) {
                    let _ = writeln!(s, "level {n}: driver_mass {mass:.12e} driver_peak {peak:.12e}");
                }
                let _ = writeln!(s, "ratio_last_first: {ratio:.6e}");
                let _ = writeln!(s, "monotone_divergent: {monotone_divergent}");
            }
            CertificateKind::NonUniqueness {
                y0,
                residuals,
                pairwise_sup_distance,
                distance_at_zero,
                tolerance,
                ..
            } => {
                let _ = writeln!(s, "kind: non_uniqueness");
                let _ = writeln!(s, "tolerance: {tolerance:.3e}");
                for (k, (v, r)) in y0.iter().zip(residuals).enumerate() {
                    let _ = writeln!(
                        s,
                        "member {k}: y0 {v} max_residual {:.3e} terminal_gap {:.3e} integrability {:.6e}",
                        r.max_residual, r.terminal_gap, r.integrability_estimate
                    );
                }
                for ((a, b, d), (_, _, d0)) in pairwise_sup_distance.iter().zip(distance_at_zero) {
                    let _ = writeln!(s, "pair ({a}, {b}): sup_distance {d:.12e} distance_at_0 {d0:.12e}");
                }
            }
        }
        let _ = writeln!(s, "note: {}", self.note);
        s
    }

    /// Growth series as CSV (`n, driver_mass, driver_peak`); empty for
    /// non-uniqueness certificates apart from the header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        match &self.kind {
            CertificateKind::NonExistence {
                growth_series,
                peak_series,
                ..
            } => {
                writeln!(out, "n,driver_mass,driver_peak")?;
                for ((n, mass), (_, peak)) in growth_series.iter().zip(peak_series) {
                    writeln!(out, "{n},{mass:.12e},{peak:.12e}")?;
                }
            }
            CertificateKind::NonUniqueness {
                y0,
                residuals,
                pairwise_sup_distance,
                ..
            } => {
                writeln!(out, "member,y0,max_residual,terminal_gap,integrability")?;
                for (k, (v, r)) in y0.iter().zip(residuals).enumerate() {
                    writeln!(
                        out,
                        "{k},{v:.12e},{:.12e},{:.12e},{:.12e}",
                        r.max_residual, r.terminal_gap, r.integrability_estimate
                    )?;
                }
                writeln!(out, "pair_a,pair_b,sup_distance")?;
                for (a, b, d) in pairwise_sup_distance {
                    writeln!(out, "{a},{b},{d:.12e}")?;
                }
            }
        }
        Ok(())
    }
}

fn measure_name(m: GrowthMeasure) -> &'static str {
    match m {
        GrowthMeasure::DriverMass => "driver_mass",
        GrowthMeasure::DriverPeak => "driver_peak",
    }
}

/// Solves the truncated problems `λ ∧ n` (driver not clipped) for a constant
/// terminal value `a ≠ 0` and records the driver mass and peak per level.
///
/// For the `-λY` form the mass `∫ λⁿ |Yⁿ|` is tested. For nondecreasing
/// λ-terms the mass is bounded by `|a - Yⁿ_0 - ∫ φ|`, so the peak
/// `max_t λⁿ |F(Yⁿ)|` (which grows like `n |F(a)|`) is tested instead.
pub fn certify_nonexistence(problem: &BsdeProblem, grid: &TimeGrid, schedule: &[f64]) -> Result<PathologyCertificate> {
    let a = problem
        .terminal
        .constant()
        .ok_or_else(|| domain("non-existence certificates need a constant terminal value"))?;
    if a == 0.0 {
        return Err(domain(
            "terminal value is zero; use the truncation scheme or the affine solvers instead",
        ));
    }
    if !problem.intensity.is_singular() {
        return Err(domain("not a singular model: the intensity stays integrable up to T"));
    }
    if schedule.len() < 2 || schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain("schedule must hold at least two increasing levels"));
    }
    if problem.form == EquationForm::NonlinearPlus && !problem.driver.flags().nondecreasing {
        return Err(domain("the nonlinear certificate needs a nondecreasing driver"));
    }
    let measure = match problem.form {
        EquationForm::MinusLambdaY => GrowthMeasure::DriverMass,
        _ => GrowthMeasure::DriverPeak,
    };
    let mut growth_series = Vec::with_capacity(schedule.len());
    let mut peak_series = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let bsde = ClassicalBsde::new(problem, n)?;
        let sol = solve_ode_mode(&bsde, grid)?;
        let term = |i: usize| bsde.lambda_term(grid.time(i), sol.y.value(0, i)).abs();
        let mass: f64 = (0..grid.len() - 1)
            .map(|i| 0.5 * (term(i) + term(i + 1)) * grid.step(i))
            .sum();
        let peak = (0..grid.len()).map(term).fold(0.0, f64::max);
        growth_series.push((n, mass));
        peak_series.push((n, peak));
    }
    let tested = match measure {
        GrowthMeasure::DriverMass => &growth_series,
        GrowthMeasure::DriverPeak => &peak_series,
    };
    let first = tested[0].1;
    let last = tested[tested.len() - 1].1;
    let ratio = if first > 0.0 { last / first } else { f64::INFINITY };
    let increasing = tested.windows(2).all(|w| w[1].1 > w[0].1);
    let monotone_divergent = increasing && ratio >= GROWTH_RATIO && last.is_finite();
    Ok(PathologyCertificate {
        scenario_id: format!("nonexistence(a = {a})"),
        kind: CertificateKind::NonExistence {
            growth_series,
            peak_series,
            measure,
            ratio,
            monotone_divergent,
        },
        note: "divergence in n of the truncated driver term stands in for the pathwise argument, which uses a random time that is not a stopping time".into(),
    })
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum NonUniquenessScenario {
    /// `Y₀ e^{-Λ}` for each `Y₀`.
    FundamentalMinus { model: IntensityModel, y0: Vec<f64> },
    /// `e^{-Λ(t)}(Y₀ + ∫_0^t e^{Λ} φ)` with terminal value `c`.
    OdeFamily {
        model: IntensityModel,
        phi: ScalarFn,
        phi_label: String,
        c: f64,
        y0: Vec<f64>,
    },
    /// `g = -λY - rY + σ Σ Z` with `λ = γ / expm1(γ (1 - t))` on `[0, 1]`;
    /// members `Y₀ e^{-Λ(t) - r t}`.
    EkRed { r: f64, sigma: f64, gamma: f64, y0: Vec<f64> },
}

impl std::fmt::Debug for NonUniquenessScenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.id())
    }
}

impl NonUniquenessScenario {
    pub fn id(&self) -> String {
        match self {
            NonUniquenessScenario::FundamentalMinus { y0, .. } => format!("fundamental_minus{y0:?}"),
            NonUniquenessScenario::OdeFamily { phi_label, c, y0, .. } => format!("ode_family(φ = {phi_label}, C = {c}){y0:?}"),
            NonUniquenessScenario::EkRed { r, sigma, gamma, y0 } => {
                format!("ek_red(r = {r}, σ = {sigma}, γ = {gamma}){y0:?}")
            }
        }
    }

    pub fn model(&self) -> Result<IntensityModel> {
        match self {
            NonUniquenessScenario::FundamentalMinus { model, .. } | NonUniquenessScenario::OdeFamily { model, .. } => {
                Ok(model.clone())
            }
            NonUniquenessScenario::EkRed { gamma, .. } => IntensityModel::exp_gap(*gamma, 1.0),
        }
    }

    fn y0(&self) -> &[f64] {
        match self {
            NonUniquenessScenario::FundamentalMinus { y0, .. }
            | NonUniquenessScenario::OdeFamily { y0, .. }
            | NonUniquenessScenario::EkRed { y0, .. } => y0,
        }
    }

    /// The equation every member must solve.
    pub fn problem(&self) -> Result<BsdeProblem> {
        let model = self.model()?;
        match self {
            NonUniquenessScenario::FundamentalMinus { .. } => {
                BsdeProblem::affine(model, CoefficientProcess::zero(), EquationForm::MinusLambdaY)
            }
            NonUniquenessScenario::OdeFamily { phi, phi_label, c, .. } => {
                let phi = phi.clone();
                BsdeProblem::affine(
                    model,
                    CoefficientProcess::function_unbounded(phi_label.clone(), move |t| phi(t)),
                    EquationForm::MinusLambdaY,
                )?
                .with_terminal(TerminalValue::Constant(*c))
            }
            NonUniquenessScenario::EkRed { r, sigma, .. } => {
                BsdeProblem::affine(model, CoefficientProcess::zero(), EquationForm::MinusLambdaY)?.with_slopes(-r, *sigma)
            }
        }
    }
}

/// Builds every member, verifies each with [`residual_check`] at `tol`, and
/// reports pairwise distances, which must exceed `10 tol`.
pub fn certify_nonuniqueness(scenario: &NonUniquenessScenario, grid: &TimeGrid, tol: f64) -> Result<PathologyCertificate> {
    let y0 = scenario.y0().to_vec();
    if y0.len() < 2 {
        return Err(domain("a non-uniqueness certificate needs at least two members"));
    }
    let model = scenario.model()?;
    let problem = scenario.problem()?;
    let members: Vec<AffineSolution> = match scenario {
        NonUniquenessScenario::FundamentalMinus { .. } => y0
            .iter()
            .map(|&v| fundamental_family(&model, v, grid, None, None))
            .collect::<Result<_>>()?,
        NonUniquenessScenario::OdeFamily { phi, c, .. } => {
            let class = classify_ode(&model, phi.as_ref(), 1e-6)?;
            match class.case {
                OdeCase::ConvergesTo { c: limit } if (limit - c).abs() <= 1e-6 * (1.0 + c.abs()) => {}
                other => {
                    return Err(domain(format!(
                        "declared terminal value {c} does not match the ODE classification {other:?}"
                    )))
                }
            }
            y0.iter()
                .map(|&v| ode_family_member(&model, phi.as_ref(), v, grid, &class))
                .collect::<Result<_>>()?
        }
        NonUniquenessScenario::EkRed { r, .. } => y0
            .iter()
            .map(|&v| transported_fundamental(&model, v, -r, grid))
            .collect::<Result<_>>()?,
    };
    let mut residuals = Vec::with_capacity(members.len());
    for (k, m) in members.iter().enumerate() {
        let rep = residual_check(m, &problem, None)?;
        if !(rep.max_residual < tol && rep.terminal_gap < tol) {
            return Err(Error::CertificateFailed {
                member: k,
                residual: rep.max_residual.max(rep.terminal_gap),
                tolerance: tol,
            });
        }
        residuals.push(rep);
    }
    let cap = grid.cap_index();
    let mut pairwise = Vec::new();
    let mut at_zero = Vec::new();
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            let d = (0..=cap)
                .map(|i| (members[a].y.mean_at(i) - members[b].y.mean_at(i)).abs())
                .fold(0.0, f64::max);
            if !(d > 10.0 * tol) {
                return Err(domain(format!(
                    "members {a} and {b} are not distinct: sup distance {d:.3e} <= 10 tol"
                )));
            }
            pairwise.push((a, b, d));
            at_zero.push((a, b, (members[a].y.mean_at(0) - members[b].y.mean_at(0)).abs()));
        }
    }
    Ok(PathologyCertificate {
        scenario_id: scenario.id(),
        kind: CertificateKind::NonUniqueness {
            members,
            y0,
            residuals,
            pairwise_sup_distance: pairwise,
            distance_at_zero: at_zero,
            tolerance: tol,
        },
        note: "members are exact family formulas checked against the integrated equation on [0, t_cap]".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    /// Max over nodes `<= t_cap` of the integrated residual (deterministic),
    /// or its path average of per-path maxima (stochastic).
    pub max_residual: f64,
    /// Largest per-path maximum (equal to `max_residual` when deterministic).
    pub worst_path_residual: f64,
    /// `|E Y_T - A|`.
    pub terminal_gap: f64,
    /// `E ∫_0^{t_cap} |g| dt`.
    pub integrability_estimate: f64,
}

/// Checks a candidate against the integrated equation
/// `Y_{t_i} - Y_0 = ∫_0^{t_i} g dt + Σ_{j<i} Z_j ΔW_j` at every node `t_i <= t_cap`.
///
/// Deterministic candidates integrate the cubic through four neighbouring nodes;
/// stochastic candidates need `bundle` and use left-point sums. The intensity is
/// the untruncated `λ`, finite at every node before `T`.
pub fn residual_check(candidate: &dyn NodalSolution, problem: &BsdeProblem, bundle: Option<&PathBundle>) -> Result<ResidualReport> {
    residual_check_at_level(candidate, problem, bundle, f64::INFINITY)
}

/// [`residual_check`] against the truncated intensity `λ ∧ level`.
pub fn residual_check_at_level(
    candidate: &dyn NodalSolution,
    problem: &BsdeProblem,
    bundle: Option<&PathBundle>,
    level: f64,
) -> Result<ResidualReport> {
    let grid = candidate.grid();
    let (y, z) = (candidate.y(), candidate.z());
    let cap = grid.cap_index();
    let model = &problem.intensity;
    let rate = |i: usize| model.truncated_rate(grid.time(i), level);
    let terminal_expected = match &problem.terminal {
        TerminalValue::Random(_) => {
            let b = bundle.ok_or_else(|| domain("a random terminal value needs the path bundle"))?;
            let last = grid.terminal_index();
            let v: Vec<f64> = (0..b.paths()).map(|m| problem.terminal.value(b.level(m, last))).collect();
            stats::mean(&v)
        }
        t => t.constant().unwrap_or(0.0),
    };
    let terminal_gap = (y.mean_at(grid.terminal_index()) - terminal_expected).abs();
    if !y.is_stochastic() && !z.is_stochastic() {
        let ts: Vec<f64> = (0..=cap).map(|i| grid.time(i)).collect();
        let gs: Vec<f64> = (0..=cap)
            .map(|i| problem.generator(ts[i], &[], y.value(0, i), z.at(0, i), rate(i)))
            .collect();
        let mut integral = 0.0;
        let mut abs_integral = 0.0;
        let mut worst: f64 = 0.0;
        let y0 = y.value(0, 0);
        for i in 0..cap {
            integral += cubic_piece(&ts, &gs, i);
            abs_integral += 0.5 * (gs[i].abs() + gs[i + 1].abs()) * (ts[i + 1] - ts[i]);
            worst = worst.max((y.value(0, i + 1) - y0 - integral).abs());
        }
        return Ok(ResidualReport {
            max_residual: worst,
            worst_path_residual: worst,
            terminal_gap,
            integrability_estimate: abs_integral,
        });
    }
    let bundle = bundle.ok_or_else(|| domain("a stochastic candidate needs the path bundle"))?;
    if !bundle.grid().same_nodes(grid) {
        return Err(domain("bundle grid differs from the candidate grid"));
    }
    let per_path: Vec<(f64, f64)> = (0..bundle.paths())
        .into_par_iter()
        .map(|m| {
            let y0 = y.value(m, 0);
            let (mut acc, mut abs_acc, mut worst) = (0.0, 0.0, 0.0f64);
            for i in 0..cap {
                let t = grid.time(i);
                let w = bundle.level(m, i);
                let zi = z.at(m, i);
                let g = problem.generator(t, w, y.value(m, i), zi, rate(i));
                let dw = bundle.increment(m, i);
                let mart: f64 = zi.iter().zip(dw).map(|(a, b)| a * b).sum();
                acc += g * grid.step(i) + mart;
                abs_acc += g.abs() * grid.step(i);
                worst = worst.max((y.value(m, i + 1) - y0 - acc).abs());
            }
            (worst, abs_acc)
        })
        .collect();
    let worsts: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let integrals: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    Ok(ResidualReport {
        max_residual: stats::mean(&worsts),
        worst_path_residual: worsts.iter().copied().fold(0.0, f64::max),
        terminal_gap,
        integrability_estimate: stats::mean(&integrals),
    })
}

/// `∫_{t_i}^{t_{i+1}}` of the cubic interpolating `gs` at four neighbouring
/// nodes, by the two-point Gauss rule (exact for cubics). Trapezoid when
/// fewer than four nodes exist.
fn cubic_piece(ts: &[f64], gs: &[f64], i: usize) -> f64 {
    let n = ts.len();
    let (a, b) = (ts[i], ts[i + 1]);
    if n < 4 {
        return 0.5 * (gs[i] + gs[i + 1]) * (b - a);
    }
    let j0 = i.saturating_sub(1).min(n - 4);
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let off = half / 3f64.sqrt();
    let interp = |x: f64| -> f64 {
        (0..4)
            .map(|k| {
                let weight: f64 = (0..4)
                    .filter(|&m| m != k)
                    .map(|m| (x - ts[j0 + m]) / (ts[j0 + k] - ts[j0 + m]))
                    .product();
                weight * gs[j0 + k]
            })
            .sum()
    };
    (interp(mid - off) + interp(mid + off)) * half
}

/// `sup_τ E|Y_τ|` over grid nodes and, for stochastic candidates, over the
/// first times `Y` crosses the levels `±k s / 8`, `k = 1..=8` (`s` =
/// `level_scale`, default `max |Y|`). A lower bound of the true supremum.
pub fn class_d_norm(candidate: &dyn NodalSolution, level_scale: Option<f64>) -> f64 {
    let y = candidate.y();
    let n = candidate.grid().len();
    let nodes = (0..n).map(|i| stats::mean(&y.node_values(i).iter().map(|v| v.abs()).collect::<Vec<_>>()));
    let mut best = nodes.fold(0.0, f64::max);
    if !y.is_stochastic() {
        return best;
    }
    let (lo, hi) = y.min_max();
    let scale = level_scale.unwrap_or(lo.abs().max(hi.abs()));
    if !(scale > 0.0) {
        return best;
    }
    for k in 1..=8 {
        for sign in [-1.0, 1.0] {
            let level = sign * k as f64 * scale / 8.0;
            let hits: Vec<f64> = (0..y.paths())
                .into_par_iter()
                .map(|m| {
                    let i = (0..n)
                        .find(|&i| {
                            let v = y.value(m, i);
                            if sign < 0.0 {
                                v <= level
                            } else {
                                v >= level
                            }
                        })
                        .unwrap_or(n - 1);
                    y.value(m, i).abs()
                })
                .collect();
            best = best.max(stats::mean(&hits));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::solve_affine_minus_particular;
    use crate::coefficients::{make_grid, DriverSpec, GridScheme};

    fn pg() -> IntensityModel {
        IntensityModel::power_gap(1.0, 1.0).unwrap()
    }

    fn grid(n: usize) -> TimeGrid {
        make_grid(&pg(), n, GridScheme::LambdaEquidistributed { lambda_max: 12.0 }).unwrap()
    }

    #[test]
    fn minus_nonexistence_mass_grows() {
        let p = BsdeProblem::affine(pg(), CoefficientProcess::zero(), EquationForm::MinusLambdaY)
            .unwrap()
            .with_terminal(TerminalValue::Constant(1.0))
            .unwrap();
        let c = certify_nonexistence(&p, &grid(4000), &[4.0, 16.0, 64.0, 256.0]).unwrap();
        assert!(c.is_nonexistence_certified());
        if let CertificateKind::NonExistence { growth_series, ratio, .. } = &c.kind {
            assert!(growth_series.windows(2).all(|w| w[1].1 / w[0].1 > 1.0));
            assert!(*ratio > 10.0);
            // ∫ λⁿ Yⁿ = Yⁿ_0 - 1 ≈ e n - 1
            let (n, mass) = growth_series[3];
            assert!((mass / (std::f64::consts::E * n - 1.0) - 1.0).abs() < 0.02, "{mass}");
        }
    }

    #[test]
    fn bounded_model_is_refused() {
        let m = IntensityModel::bounded(2.0, 1.0).unwrap();
        let p = BsdeProblem::affine(m, CoefficientProcess::zero(), EquationForm::MinusLambdaY)
            .unwrap()
            .with_terminal(TerminalValue::Constant(1.0))
            .unwrap();
        let g = TimeGrid::uniform(1.0, 11).unwrap();
        assert!(matches!(certify_nonexistence(&p, &g, &[4.0, 16.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn nonlinear_nonexistence_peak_grows() {
        let p = BsdeProblem::nonlinear(pg(), CoefficientProcess::zero(), DriverSpec::exp_utility(1.0).unwrap())
            .unwrap()
            .with_terminal(TerminalValue::Constant(-1.0))
            .unwrap();
        let c = certify_nonexistence(&p, &grid(4000), &[4.0, 16.0, 64.0, 256.0]).unwrap();
        assert!(c.is_nonexistence_certified(), "{}", c.to_text());
    }

    #[test]
    fn zero_terminal_is_a_domain_error() {
        let p = BsdeProblem::affine(pg(), CoefficientProcess::zero(), EquationForm::MinusLambdaY).unwrap();
        assert!(certify_nonexistence(&p, &grid(100), &[4.0, 16.0]).is_err());
    }

    #[test]
    fn fundamental_certificate() {
        let s = NonUniquenessScenario::FundamentalMinus { model: pg(), y0: vec![0.0, 1.0, 3.0] };
        let c = certify_nonuniqueness(&s, &grid(500), 1e-8).unwrap();
        if let CertificateKind::NonUniqueness { distance_at_zero, residuals, .. } = &c.kind {
            let d: Vec<f64> = distance_at_zero.iter().map(|x| x.2).collect();
            assert_eq!(d, vec![1.0, 3.0, 2.0]);
            assert!(residuals.iter().all(|r| r.max_residual < 1e-10 && r.terminal_gap == 0.0));
        } else {
            panic!("wrong kind");
        }
    }

    #[test]
    fn ode_family_certificate() {
        let m = pg();
        let mm = m.clone();
        let s = NonUniquenessScenario::OdeFamily {
            model: m,
            phi: Arc::new(move |t| 2.0 * mm.rate(t)),
            phi_label: "2λ".into(),
            c: 2.0,
            y0: vec![0.0, 1.0],
        };
        let c = certify_nonuniqueness(&s, &grid(500), 1e-8).unwrap();
        if let CertificateKind::NonUniqueness { residuals, .. } = &c.kind {
            // ∫ λ|c - Y| = |c - Y₀|(1 - e^{-Λ(t_cap)}) is the integrability witness
            assert!(residuals.iter().all(|r| r.integrability_estimate.is_finite()));
        }
    }

    #[test]
    fn ek_red_certificate() {
        let s = NonUniquenessScenario::EkRed { r: 0.05, sigma: 0.2, gamma: 1.0, y0: vec![0.0, 1.0] };
        let model = s.model().unwrap();
        let g = make_grid(&model, 4000, GridScheme::LambdaEquidistributed { lambda_max: 12.0 }).unwrap();
        let c = certify_nonuniqueness(&s, &g, 1e-6).unwrap();
        if let CertificateKind::NonUniqueness { distance_at_zero, .. } = &c.kind {
            assert!(distance_at_zero[0].2 > 0.5);
        }
    }

    #[test]
    fn corrupted_member_is_detected() {
        let g = grid(500);
        let p = BsdeProblem::affine(pg(), CoefficientProcess::zero(), EquationForm::MinusLambdaY).unwrap();
        let mut member = fundamental_family(&pg(), 1.0, &g, None, None).unwrap();
        assert!(residual_check(&member, &p, None).unwrap().max_residual < 1e-10);
        member.y = member.y.shifted(0.01);
        assert!(residual_check(&member, &p, None).unwrap().max_residual > 5e-3);
    }

    #[test]
    fn particular_solution_residual() {
        let g = grid(500);
        let phi = CoefficientProcess::exp_minus_lambda();
        let sol = solve_affine_minus_particular(&pg(), &phi, &g).unwrap();
        let p = BsdeProblem::affine(pg(), phi, EquationForm::MinusLambdaY).unwrap();
        assert!(residual_check(&sol, &p, None).unwrap().max_residual < 1e-8);
    }

    #[test]
    fn class_d_examples() {
        let g = grid(100);
        assert_eq!(class_d_norm(&fundamental_family(&pg(), 0.0, &g, None, None).unwrap(), None), 0.0);
        assert_eq!(class_d_norm(&fundamental_family(&pg(), 3.0, &g, None, None).unwrap(), None), 3.0);
    }

    #[test]
    fn certificate_text_is_stable() {
        let s = NonUniquenessScenario::FundamentalMinus { model: pg(), y0: vec![0.0, 1.0] };
        let g = grid(100);
        let a = certify_nonuniqueness(&s, &g, 1e-8).unwrap().to_text();
        let b = certify_nonuniqueness(&s, &g, 1e-8).unwrap().to_text();
        assert_eq!(a, b);
        assert!(a.contains("kind: non_uniqueness"));
    }
}

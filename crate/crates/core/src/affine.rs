//! Affine equations: the representation formula for `g = φ + λY`, the
//! fundamental and particular solutions of `g = φ - λY`, and the
//! deterministic ODE families.

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::{BsdeProblem, CoefficientProcess, EquationForm, IntensityModel, TimeGrid};
use crate::error::{domain, Error, Result};
use crate::paths::PathBundle;
use crate::quadrature::{integrate, integrate_graded, integrate_to_singular_end, TailOutcome};
use crate::regression::{fit_node, RegressionBasis};
use crate::solution::{NodalField, NodalSolution};

const STEP_TOL: f64 = 1e-14;
/// Weighted integrals beyond `DIVERGENCE_FACTOR ‖φ‖∞` count as divergent.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Deepest ODE probe is `T - T 10^{-PROBE_DEPTH}`.
pub const PROBE_DEPTH: i32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    RepresentationFormula,
    FundamentalFamily { y0: f64 },
    /// Fundamental member carried by an extra linear term `b Y`.
    TransportedFundamental { y0: f64, y_slope: f64 },
    StochasticFundamental { y0: f64 },
    ParticularSolution,
    OdeFamily { y0: f64 },
}

#[derive(Debug, Clone)]
pub struct AffineSolution {
    pub grid: TimeGrid,
    pub y: NodalField,
    pub z: NodalField,
    pub provenance: Provenance,
    /// Terminal value assigned at the last node.
    pub terminal: f64,
    /// Per-node `bound - |Y|` for representation-formula solutions.
    pub bound_margin: Option<Vec<f64>>,
    /// `∫_0^{t_cap} |φ - λY| dt` (trapezoid) for ODE family members.
    pub integrability: Option<f64>,
}

impl NodalSolution for AffineSolution {
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

impl AffineSolution {
    /// Column used in the CSV export.
    pub fn bound_check(&self) -> Vec<f64> {
        self.bound_margin
            .clone()
            .unwrap_or_else(|| vec![f64::NAN; self.grid.len()])
    }

    fn deterministic(grid: &TimeGrid, y: Vec<f64>, provenance: Provenance, terminal: f64) -> Self {
        let n = grid.len();
        Self {
            grid: grid.clone(),
            y: NodalField::deterministic(y),
            z: NodalField::deterministic_zeros(n, 1),
            provenance,
            terminal,
            bound_margin: None,
            integrability: None,
        }
    }
}

fn check_grid(model: &IntensityModel, grid: &TimeGrid) -> Result<()> {
    if (grid.horizon() - model.horizon()).abs() > 1e-12 * model.horizon() {
        return Err(domain("grid horizon differs from the intensity horizon"));
    }
    Ok(())
}

/// `decay(t, s) e^{-b (s - t)}`.
fn kernel(model: &IntensityModel, b: f64, t: f64, s: f64) -> f64 {
    let d = model.decay(t, s);
    if b == 0.0 {
        d
    } else {
        d * (-b * (s - t)).exp()
    }
}

/// Solves `dY = (φ + λY + bY + σ Σ Z) dt + Z dW`, `Y_T = 0`.
///
/// Deterministic `φ` uses `Y(t) = -∫_t^T e^{-(Λ(s) - Λ(t)) - b(s - t)} φ(s) ds`,
/// evaluated step by step with adaptive quadrature. Markovian `φ` needs a
/// bundle: the pathwise discounted sums are regressed on `W_{t_i}`. A nonzero
/// `σ` is absorbed by treating the bundle as the Brownian motion under which
/// `W + σ t` is driftless.
pub fn solve_affine_plus(
    problem: &BsdeProblem,
    grid: &TimeGrid,
    paths: Option<(&PathBundle, &RegressionBasis)>,
) -> Result<AffineSolution> {
    if problem.form != EquationForm::PlusLambdaY {
        return Err(domain("solve_affine_plus needs the +λY form"));
    }
    if !problem.terminal.is_zero() {
        return Err(Error::NoSolution {
            reason: "terminal value must vanish".into(),
        });
    }
    let model = &problem.intensity;
    check_grid(model, grid)?;
    let phi_bound = problem.phi.bound();
    if !phi_bound.is_finite() {
        return Err(domain("the representation formula needs a bounded φ"));
    }
    let b = problem.y_slope;
    let horizon = grid.horizon();
    let n = grid.len();
    let cap = grid.cap_index();
    // Discount over each step and the deterministic step weights.
    let discount: Vec<f64> = (0..n - 1).map(|i| kernel(model, b, grid.time(i), grid.time(i + 1))).collect();

    let mut sol = if problem.phi.is_deterministic() {
        let phi = |s: f64| problem.phi.value(model, s, &[]);
        let mut r = vec![0.0; n];
        for i in (0..n - 1).rev() {
            let (t, t1) = (grid.time(i), grid.time(i + 1));
            let integrand = |s: f64| kernel(model, b, t, s) * phi(s);
            let piece = if i == cap {
                match integrate_to_singular_end(integrand, t, horizon, STEP_TOL, f64::INFINITY)? {
                    TailOutcome::Converged { value, .. } => value,
                    TailOutcome::Diverged { .. } => {
                        return Err(Error::Numeric("bounded integrand failed to converge at the horizon".into()))
                    }
                }
            } else {
                integrate(integrand, t, t1, STEP_TOL, 1e-13)?.value
            };
            r[i] = piece + discount[i] * r[i + 1];
        }
        let y: Vec<f64> = r.iter().map(|v| -v).collect();
        AffineSolution::deterministic(grid, y, Provenance::RepresentationFormula, 0.0)
    } else {
        let (bundle, basis) = paths.ok_or_else(|| domain("a Markovian φ needs a path bundle"))?;
        if !bundle.grid().same_nodes(grid) {
            return Err(domain("bundle grid differs from the solution grid"));
        }
        markovian_plus(problem, grid, bundle, basis, &discount)?
    };

    // |Y| <= ‖φ‖∞ ∫_t^T e^{-b(s-t)} ds
    let margins: Vec<f64> = (0..n)
        .map(|i| {
            let tau = horizon - grid.time(i);
            let bound = phi_bound * if b >= 0.0 { tau } else { (-b * tau).exp_m1() / -b };
            bound - sol.y.mean_at(i).abs()
        })
        .collect();
    if !sol.y.is_stochastic() {
        if let Some(i) = margins.iter().position(|&m| m < -1e-12 * (1.0 + phi_bound)) {
            return Err(Error::Numeric(format!(
                "representation value at t = {} breaks the bound ‖φ‖∞ (T - t) by {:.3e}",
                grid.time(i),
                -margins[i]
            )));
        }
    }
    sol.bound_margin = Some(margins);
    Ok(sol)
}

fn markovian_plus(
    problem: &BsdeProblem,
    grid: &TimeGrid,
    bundle: &PathBundle,
    basis: &RegressionBasis,
    discount: &[f64],
) -> Result<AffineSolution> {
    let model = &problem.intensity;
    let b = problem.y_slope;
    let sigma = problem.z_slope;
    let (m_paths, n, d) = (bundle.paths(), grid.len(), bundle.dim());
    let horizon = grid.horizon();
    let cap = grid.cap_index();
    // ∫_{t_i}^{t_{i+1}} kernel(t_i, s) ds, shared by every path.
    let mut weights = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let (t, t1) = (grid.time(i), grid.time(i + 1));
        let w = if i == cap {
            integrate_to_singular_end(|s| kernel(model, b, t, s), t, horizon, STEP_TOL, f64::INFINITY)?
                .value()
                .ok_or_else(|| Error::Numeric("discount weight failed to converge".into()))?
        } else {
            integrate(|s| kernel(model, b, t, s), t, t1, STEP_TOL, 1e-13)?.value
        };
        weights.push(w);
    }
    // φ at the physical level W = W^Q - σ t.
    let phi_at = |m: usize, i: usize| -> f64 {
        let t = grid.time(i);
        let level = bundle.level(m, i);
        if sigma == 0.0 {
            problem.phi.value(model, t, level)
        } else {
            let shifted: Vec<f64> = level.iter().map(|w| w - sigma * t).collect();
            problem.phi.value(model, t, &shifted)
        }
    };
    // Pathwise discounted sums S_i = w_i (φ_i + φ_{i+1}) / 2 + D_i S_{i+1}.
    let mut s_next = vec![0.0; m_paths];
    let mut y_all = vec![0.0; m_paths * n];
    let mut z_all = vec![0.0; m_paths * n * d];
    let mut y_next = vec![0.0; m_paths];
    for i in (0..n - 1).rev() {
        let s_i: Vec<f64> = (0..m_paths)
            .into_par_iter()
            .map(|m| weights[i] * 0.5 * (phi_at(m, i) + phi_at(m, i + 1)) + discount[i] * s_next[m])
            .collect();
        let fit = fit_node(bundle, basis, i, &[&s_i])?.remove(0);
        let y_i: Vec<f64> = (0..m_paths).into_par_iter().map(|m| -fit.eval(bundle.level(m, i))).collect();
        let dt = grid.step(i);
        let cond = fit_node(bundle, basis, i, &[&y_next])?.remove(0);
        let targets: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                (0..m_paths)
                    .into_par_iter()
                    .map(|m| (y_next[m] - cond.eval(bundle.level(m, i))) * bundle.increment(m, i)[k] / dt)
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = targets.iter().map(|v| v.as_slice()).collect();
        let z_fits = fit_node(bundle, basis, i, &refs)?;
        for m in 0..m_paths {
            y_all[m * n + i] = y_i[m];
            for (k, f) in z_fits.iter().enumerate() {
                z_all[(m * n + i) * d + k] = f.eval(bundle.level(m, i));
            }
        }
        s_next = s_i;
        y_next = y_i;
    }
    Ok(AffineSolution {
        grid: grid.clone(),
        y: NodalField::pathwise(m_paths, n, 1, y_all),
        z: NodalField::pathwise(m_paths, n, d, z_all),
        provenance: Provenance::RepresentationFormula,
        terminal: 0.0,
        bound_margin: None,
        integrability: None,
    })
}

/// `Y = Y₀ e^{-Λ}`, `Z = 0` (solves `g = -λY`); with a bundle and `β`,
/// `Y = e^{-Λ}(Y₀ + ∫_0^t β dW)` and `Z = e^{-Λ} β`. `beta` holds one value
/// per step (a trailing node value is ignored).
pub fn fundamental_family(
    model: &IntensityModel,
    y0: f64,
    grid: &TimeGrid,
    beta: Option<&[f64]>,
    paths: Option<&PathBundle>,
) -> Result<AffineSolution> {
    if !model.is_singular() {
        return Err(domain("the fundamental family needs an intensity that explodes at T"));
    }
    check_grid(model, grid)?;
    let n = grid.len();
    let surv: Vec<f64> = (0..n).map(|i| if i == n - 1 { 0.0 } else { model.survival(grid.time(i)) }).collect();
    match (beta, paths) {
        (None, _) => {
            let y: Vec<f64> = surv.iter().map(|s| y0 * s).collect();
            Ok(AffineSolution::deterministic(grid, y, Provenance::FundamentalFamily { y0 }, 0.0))
        }
        (Some(_), None) => Err(domain("a stochastic fundamental member needs a path bundle")),
        (Some(beta), Some(bundle)) => {
            if !bundle.grid().same_nodes(grid) {
                return Err(domain("bundle grid differs from the solution grid"));
            }
            let beta = if beta.len() == n { &beta[..n - 1] } else { beta };
            let running = bundle.running_integrals(beta)?;
            let (m_paths, d) = (bundle.paths(), bundle.dim());
            let mut y = vec![0.0; m_paths * n];
            let mut z = vec![0.0; m_paths * n * d];
            for m in 0..m_paths {
                for i in 0..n {
                    y[m * n + i] = surv[i] * (y0 + running[m * n + i]);
                    if i < n - 1 {
                        let zi = surv[i] * beta[i.min(beta.len() - 1)];
                        for k in 0..d {
                            z[(m * n + i) * d + k] = zi;
                        }
                    }
                }
            }
            Ok(AffineSolution {
                grid: grid.clone(),
                y: NodalField::pathwise(m_paths, n, 1, y),
                z: NodalField::pathwise(m_paths, n, d, z),
                provenance: Provenance::StochasticFundamental { y0 },
                terminal: 0.0,
                bound_margin: None,
                integrability: None,
            })
        }
    }
}

/// `Y = Y₀ e^{-Λ(t) + b t}`, `Z = 0`: the fundamental member of
/// `g = -λY + bY`.
pub fn transported_fundamental(model: &IntensityModel, y0: f64, y_slope: f64, grid: &TimeGrid) -> Result<AffineSolution> {
    if !model.is_singular() {
        return Err(domain("the fundamental family needs an intensity that explodes at T"));
    }
    check_grid(model, grid)?;
    let n = grid.len();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            if i == n - 1 {
                0.0
            } else {
                let t = grid.time(i);
                y0 * model.survival(t) * (y_slope * t).exp()
            }
        })
        .collect();
    Ok(AffineSolution::deterministic(
        grid,
        y,
        Provenance::TransportedFundamental { y0, y_slope },
        0.0,
    ))
}

/// `Y(t) = -∫_t^T e^{Λ(s) - Λ(t)} φ(s) ds`, a solution of `g = φ - λY` with
/// `Y_T = 0`, when the weighted integral converges.
pub fn solve_affine_minus_particular(model: &IntensityModel, phi: &CoefficientProcess, grid: &TimeGrid) -> Result<AffineSolution> {
    if !phi.is_deterministic() {
        return Err(domain("the particular solution is computed for deterministic φ only"));
    }
    check_grid(model, grid)?;
    let n = grid.len();
    let cap = grid.cap_index();
    let horizon = grid.horizon();
    if phi.is_zero() {
        return Ok(AffineSolution::deterministic(grid, vec![0.0; n], Provenance::ParticularSolution, 0.0));
    }
    let f = |s: f64| phi.value(model, s, &[]);
    let cap_value = DIVERGENCE_FACTOR * phi.bound().max(f64::MIN_POSITIVE);
    let mut p = vec![0.0; n];
    for i in (0..n - 1).rev() {
        let (t, t1) = (grid.time(i), grid.time(i + 1));
        let weighted = |s: f64| f(s) / model.decay(t, s);
        let piece = if i == cap {
            match integrate_to_singular_end(weighted, t, horizon, 1e-13, cap_value)? {
                TailOutcome::Converged { value, .. } => value,
                TailOutcome::Diverged { partial_sums } => {
                    return Err(Error::NoParticularSolution(format!(
                        "∫ e^(Λ(s) - Λ(t)) φ(s) ds from t = {t} to T diverges (partial sums reach {:.3e})",
                        partial_sums.last().copied().unwrap_or(f64::NAN)
                    )))
                }
            }
        } else {
            integrate(weighted, t, t1, STEP_TOL, 1e-13)?.value
        };
        // The terminal node carries P = 0 and decay(t_cap, T) = 0.
        p[i] = if i + 1 == n - 1 { piece } else { piece + p[i + 1] / model.decay(t, t1) };
    }
    let y: Vec<f64> = p.iter().map(|v| -v).collect();
    Ok(AffineSolution::deterministic(grid, y, Provenance::ParticularSolution, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum OdeCase {
    ConvergesTo { c: f64 },
    Diverges,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeClassification {
    pub case: OdeCase,
    /// `(T - ε_k, m(T - ε_k))` for `ε_k = T 10^{-k}`, `k = 1..=PROBE_DEPTH`.
    pub limit_estimates: Vec<(f64, f64)>,
    pub tolerance: f64,
}

/// `m(t) = ∫_0^t e^{-(Λ(t) - Λ(s))} φ(s) ds`.
pub fn ode_particular(model: &IntensityModel, phi: &dyn Fn(f64) -> f64, t: f64) -> Result<f64> {
    integrate_graded(|s| model.decay(s, t) * phi(s), 0.0, t, model.horizon(), 1e-13)
}

/// Probes `m(T - ε_k)`, `k = 1..=PROBE_DEPTH`. The limit exists when the last
/// three estimates agree within `tolerance`. Deeper probes are not used: the
/// rounding of `s` near `T` then dominates the integrand.
pub fn classify_ode(model: &IntensityModel, phi: &dyn Fn(f64) -> f64, tolerance: f64) -> Result<OdeClassification> {
    if !(tolerance > 0.0) {
        return Err(domain("tolerance must be positive"));
    }
    let horizon = model.horizon();
    let mut estimates = Vec::new();
    for k in 1..=PROBE_DEPTH {
        let t = horizon - horizon * 10f64.powi(-k);
        if t >= horizon {
            break;
        }
        estimates.push((t, ode_particular(model, phi, t)?));
    }
    let k = estimates.len();
    let tail = &estimates[k.saturating_sub(3)..];
    let agree = tail.len() == 3
        && tail.windows(2).all(|w| (w[1].1 - w[0].1).abs() <= tolerance)
        && tail.iter().all(|e| e.1.is_finite());
    let case = if agree {
        OdeCase::ConvergesTo { c: tail[2].1 }
    } else {
        OdeCase::Diverges
    };
    Ok(OdeClassification {
        case,
        limit_estimates: estimates,
        tolerance,
    })
}

/// `Y(t) = e^{-Λ(t)} Y₀ + m(t)` on the grid with terminal value `C`.
pub fn ode_family_member(
    model: &IntensityModel,
    phi: &dyn Fn(f64) -> f64,
    y0: f64,
    grid: &TimeGrid,
    classification: &OdeClassification,
) -> Result<AffineSolution> {
    let c = match classification.case {
        OdeCase::ConvergesTo { c } => c,
        OdeCase::Diverges => return Err(domain("the ODE family needs a convergent classification")),
    };
    check_grid(model, grid)?;
    let n = grid.len();
    let mut m = vec![0.0; n];
    for i in 0..n - 2 {
        let (t, t1) = (grid.time(i), grid.time(i + 1));
        let piece = integrate_graded(|s| model.decay(s, t1) * phi(s), t, t1, model.horizon(), STEP_TOL)?;
        m[i + 1] = model.decay(t, t1) * m[i] + piece;
    }
    let mut y: Vec<f64> = (0..n).map(|i| model.survival(grid.time(i)) * y0 + m[i]).collect();
    y[n - 1] = c;
    let cap = grid.cap_index();
    let g = |i: usize| (phi(grid.time(i)) - model.rate(grid.time(i)) * y[i]).abs();
    let integrability = (0..cap).map(|i| 0.5 * (g(i) + g(i + 1)) * grid.step(i)).sum();
    let mut sol = AffineSolution::deterministic(grid, y, Provenance::OdeFamily { y0 }, c);
    sol.integrability = Some(integrability);
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{make_grid, GridScheme, TerminalValue};
    use crate::paths::simulate_paths;

    fn pg() -> IntensityModel {
        IntensityModel::power_gap(1.0, 1.0).unwrap()
    }

    fn lambda_grid(n: usize) -> TimeGrid {
        make_grid(&pg(), n, GridScheme::LambdaEquidistributed { lambda_max: 12.0 }).unwrap()
    }

    #[test]
    fn plus_closed_form() {
        let p = BsdeProblem::affine(pg(), CoefficientProcess::constant(1.0), EquationForm::PlusLambdaY).unwrap();
        let g = lambda_grid(200);
        let sol = solve_affine_plus(&p, &g, None).unwrap();
        for i in 0..g.len() {
            let t = g.time(i);
            assert!((sol.y.mean_at(i) + (1.0 - t) / 2.0).abs() < 1e-8, "t = {t}");
        }
        assert!(sol.bound_check().iter().all(|&m| m >= -1e-12));
    }

    #[test]
    fn plus_zero_and_terminal() {
        let p = BsdeProblem::affine(pg(), CoefficientProcess::zero(), EquationForm::PlusLambdaY).unwrap();
        let g = lambda_grid(20);
        let sol = solve_affine_plus(&p, &g, None).unwrap();
        assert!(sol.y.means().iter().all(|&v| v == 0.0));
        let with_a = p.with_terminal(TerminalValue::Constant(1.0)).unwrap();
        assert!(matches!(solve_affine_plus(&with_a, &g, None), Err(Error::NoSolution { .. })));
    }

    #[test]
    fn plus_markovian_within_bound() {
        let phi = CoefficientProcess::markovian("half", 1.0, |_, w| 0.5 * (1.0 + w[0].sin())).unwrap();
        let p = BsdeProblem::affine(pg(), phi, EquationForm::PlusLambdaY).unwrap();
        let g = make_grid(&pg(), 30, GridScheme::LambdaEquidistributed { lambda_max: 6.0 }).unwrap();
        let bundle = simulate_paths(&g, 1, 20_000, 17).unwrap();
        let sol = solve_affine_plus(&p, &g, Some((&bundle, &RegressionBasis::default()))).unwrap();
        // E φ(W_s) = (1 + e^{-s/2} sin 0) / 2 = 1/2 so Y(0) = -1/4 up to step error
        assert!((sol.y.mean_at(0) + 0.25).abs() < 0.01, "{}", sol.y.mean_at(0));
        assert!(sol.bound_check().iter().all(|&m| m >= -1e-3));
    }

    #[test]
    fn fundamental_examples() {
        let g = lambda_grid(100);
        let zero = fundamental_family(&pg(), 0.0, &g, None, None).unwrap();
        assert!(zero.y.means().iter().all(|&v| v == 0.0));
        let three = fundamental_family(&pg(), 3.0, &g, None, None).unwrap();
        let i = g.index_at_or_before(0.5);
        let t = g.time(i);
        assert!((three.y.mean_at(i) - 3.0 * (1.0 - t)).abs() < 1e-14);
        assert_eq!(three.y.mean_at(g.terminal_index()), 0.0);
        let bounded = IntensityModel::bounded(1.0, 1.0).unwrap();
        assert!(fundamental_family(&bounded, 1.0, &TimeGrid::uniform(1.0, 5).unwrap(), None, None).is_err());
    }

    #[test]
    fn stochastic_fundamental_mean() {
        let g = TimeGrid::new(vec![0.0, 0.25, 0.5, 0.75, 1.0], 3).unwrap();
        let bundle = simulate_paths(&g, 1, 100_000, 77).unwrap();
        let beta = vec![1.0; 4];
        let sol = fundamental_family(&pg(), 2.0, &g, Some(&beta), Some(&bundle)).unwrap();
        let mean = sol.y.mean_at(2);
        let se = sol.y.se_at(2);
        assert!((mean - 2.0 * 0.5).abs() <= 4.0 * se, "{mean} ± {se}");
        assert!((sol.z.mean_at(1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn particular_solution_examples() {
        let g = lambda_grid(200);
        let sol = solve_affine_minus_particular(&pg(), &CoefficientProcess::exp_minus_lambda(), &g).unwrap();
        for i in 0..g.len() {
            let t = g.time(i);
            assert!((sol.y.mean_at(i) + (1.0 - t).powi(2)).abs() < 1e-10, "t = {t}");
        }
        let zero = solve_affine_minus_particular(&pg(), &CoefficientProcess::zero(), &g).unwrap();
        assert!(zero.y.means().iter().all(|&v| v == 0.0));
        assert!(matches!(
            solve_affine_minus_particular(&pg(), &CoefficientProcess::constant(1.0), &g),
            Err(Error::NoParticularSolution(_))
        ));
    }

    #[test]
    fn ode_classification_examples() {
        let m = pg();
        let two_lambda = |s: f64| 2.0 * m.rate(s);
        let c = classify_ode(&m, &two_lambda, 1e-6).unwrap();
        match c.case {
            OdeCase::ConvergesTo { c } => assert!((c - 2.0).abs() < 1e-8, "{c}"),
            OdeCase::Diverges => panic!("expected convergence"),
        }
        let zero = classify_ode(&m, &|_| 0.0, 1e-8).unwrap();
        assert_eq!(zero.case, OdeCase::ConvergesTo { c: 0.0 });
        let one = classify_ode(&m, &|_| 1.0, 1e-6).unwrap();
        match one.case {
            OdeCase::ConvergesTo { c } => assert!(c.abs() < 1e-8),
            OdeCase::Diverges => panic!("expected convergence"),
        }
        let log = |s: f64| m.rate(s) * m.cumulative(s).unwrap();
        assert_eq!(classify_ode(&m, &log, 1e-6).unwrap().case, OdeCase::Diverges);
    }

    #[test]
    fn ode_family_members() {
        let m = pg();
        let two_lambda = |s: f64| 2.0 * m.rate(s);
        let class = classify_ode(&m, &two_lambda, 1e-6).unwrap();
        let g = lambda_grid(300);
        let a = ode_family_member(&m, &two_lambda, 0.0, &g, &class).unwrap();
        let b = ode_family_member(&m, &two_lambda, 1.0, &g, &class).unwrap();
        for i in 0..g.len() - 1 {
            let t = g.time(i);
            assert!((a.y.mean_at(i) - 2.0 * t).abs() < 1e-10, "t = {t}");
            assert!((b.y.mean_at(i) - (2.0 - (1.0 - t))).abs() < 1e-10);
        }
        assert!((a.terminal - 2.0).abs() < 1e-8 && (b.terminal - 2.0).abs() < 1e-8);
        assert!(a.integrability.unwrap().is_finite());
        let five = ode_family_member(&m, &|_| 0.0, 5.0, &g, &classify_ode(&m, &|_| 0.0, 1e-8).unwrap()).unwrap();
        let i = g.index_at_or_before(0.5);
        assert!((five.y.mean_at(i) - 5.0 * (1.0 - g.time(i))).abs() < 1e-14);
        let diverging = OdeClassification { case: OdeCase::Diverges, limit_estimates: vec![], tolerance: 1.0 };
        assert!(ode_family_member(&m, &two_lambda, 0.0, &g, &diverging).is_err());
    }
}

//! Built-in scenarios and the runner that turns a resolved config into output
//! files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sbsde_core::affine::{classify_ode, solve_affine_plus, AffineSolution, OdeCase};
use sbsde_core::diagnostics::{
    certify_nonexistence, certify_nonuniqueness, class_d_norm, residual_check, residual_check_at_level, CertificateKind,
    NonUniquenessScenario, PathologyCertificate,
};
use sbsde_core::singular_scheme::sup_distance_until;
use sbsde_core::solution::write_solution_csv;
use sbsde_core::{
    make_grid, run_scheme, simulate_paths, BsdeProblem, CoefficientProcess, DriverSpec, EquationForm, GridScheme, IntensityKind,
    IntensityModel, NodalSolution, PathBundle, RegressionBasis, SchemeConfig, SchemeMode, SchemeStatus, TerminalValue, TimeGrid,
};
use serde::Serialize;

use crate::config::{DriverKindName, GridSchemeName, IntensityKindName, PhiKindName, ScenarioConfig, SchemeModeName};
use crate::CliError;

pub struct Builtin {
    pub name: &'static str,
    pub claim: &'static str,
    pub defaults: &'static str,
}

pub const BUILTINS: [Builtin; 5] = [
    Builtin {
        name: "affine_plus",
        claim: "+λY equation: unique bounded solution for A = 0, none for A ≠ 0",
        defaults: r#"
terminal = 0.0
[intensity]
kind = "power_gap"
p = 1.0
horizon = 1.0
[phi]
kind = "constant"
value = 1.0
[grid]
scheme = "lambda_equidistributed"
n = 2001
lambda_max = 12.0
[mc]
paths = 20000
seed = 1
degree = 4
[scheme]
schedule = [4.0, 16.0, 64.0, 256.0]
"#,
    },
    Builtin {
        name: "affine_minus_family",
        claim: "-λY equation: the family Y0·e^(-Λ) solves it for every Y0",
        defaults: r#"
terminal = 0.0
[intensity]
kind = "power_gap"
p = 1.0
horizon = 1.0
[phi]
kind = "zero"
[grid]
scheme = "lambda_equidistributed"
n = 2001
lambda_max = 12.0
[scheme]
schedule = [4.0, 16.0, 64.0, 256.0]
[family]
y0 = [0.0, 1.0, 3.0]
tol = 1e-8
"#,
    },
    Builtin {
        name: "ek_red",
        claim: "reduced exponential-utility equation has infinitely many solutions",
        defaults: r#"
terminal = 0.0
[intensity]
kind = "exp_gap"
gamma = 1.0
horizon = 1.0
[grid]
scheme = "lambda_equidistributed"
n = 4001
lambda_max = 12.0
[family]
y0 = [0.0, 1.0]
r = 0.05
sigma = 0.2
tol = 1e-8
"#,
    },
    Builtin {
        name: "ode_trichotomy",
        claim: "deterministic -λY equation: infinitely many solutions iff the terminal value equals the limit",
        defaults: r#"
[intensity]
kind = "power_gap"
p = 1.0
horizon = 1.0
[phi]
kind = "lambda_multiple"
scale = 2.0
[grid]
scheme = "lambda_equidistributed"
n = 2001
lambda_max = 12.0
[family]
c = 2.0
y0 = [0.0, 1.0]
tol = 1e-8
"#,
    },
    Builtin {
        name: "nonlinear_exp",
        claim: "λf(Y) equation with f(x) = (1 - e^(-αx))/α: solution iff A = 0, built by truncation",
        defaults: r#"
terminal = 0.0
[intensity]
kind = "power_gap"
p = 1.0
horizon = 1.0
[phi]
kind = "constant"
value = 1.0
[driver]
kind = "exp_utility"
alpha = 1.0
[grid]
scheme = "lambda_equidistributed"
n = 4001
lambda_max = 12.0
[mc]
paths = 20000
seed = 1
degree = 4
[scheme]
mode = "ode"
schedule = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0]
tol = 1e-5
"#,
    },
];

pub fn builtin(name: &str) -> Option<&'static Builtin> {
    BUILTINS.iter().find(|b| b.name == name)
}

/// Defaults of a built-in merged with `file`, `scenario` set.
pub fn default_config(name: &str) -> Result<ScenarioConfig, CliError> {
    let b = builtin(name).ok_or_else(|| {
        let names: Vec<&str> = BUILTINS.iter().map(|b| b.name).collect();
        CliError::Config(format!("unknown scenario `{name}` (built-ins: {})", names.join(", ")))
    })?;
    let mut cfg = ScenarioConfig::from_toml_str(b.defaults, name)?;
    cfg.scenario = Some(name.to_string());
    Ok(cfg)
}

/// One line of the `list` output: the defaults as `section.key=value`.
pub fn default_summary(b: &Builtin) -> String {
    let mut out = Vec::new();
    let mut section = "";
    for line in b.defaults.lines() {
        let line = line.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name;
        } else if let Some((k, v)) = line.split_once('=') {
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            out.push(format!("{key}={}", v.trim().trim_matches('"').replace(' ', "")));
        }
    }
    out.join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Solved,
    FamilyCertified,
    NotConverged,
    /// Non-existence certified where it is the reproduced claim.
    NoSolutionExpected,
    NoSolution,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Solved | Outcome::FamilyCertified | Outcome::NoSolutionExpected => 0,
            Outcome::NotConverged => 2,
            Outcome::NoSolution => 3,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Outcome::Solved => "solved",
            Outcome::FamilyCertified => "family_certified",
            Outcome::NotConverged => "not_converged",
            Outcome::NoSolutionExpected => "no_solution (expected)",
            Outcome::NoSolution => "no_solution",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub outcome: Outcome,
    pub exit_code: i32,
    pub metrics: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    pub files: Vec<String>,
}

/// Result of one run; `report` holds the `[result]` lines in write order.
pub struct RunResult {
    pub summary: RunSummary,
    pub report: Vec<(String, String)>,
    pub out_dir: PathBuf,
}

impl RunResult {
    pub fn metric(&self, key: &str) -> Option<f64> {
        self.summary.metrics.get(key).copied()
    }

    pub fn flag(&self, key: &str) -> Option<bool> {
        self.summary.flags.get(key).copied()
    }
}

struct Ctx {
    out_dir: PathBuf,
    metrics: BTreeMap<String, f64>,
    flags: BTreeMap<String, bool>,
    report: Vec<(String, String)>,
    files: Vec<String>,
}

impl Ctx {
    fn metric(&mut self, key: &str, v: f64) {
        self.metrics.insert(key.to_string(), v);
        self.report.push((key.to_string(), format!("{v:.12e}")));
    }

    fn flag(&mut self, key: &str, v: bool) {
        self.flags.insert(key.to_string(), v);
        self.report.push((key.to_string(), v.to_string()));
    }

    fn line(&mut self, key: &str, v: impl Into<String>) {
        self.report.push((key.to_string(), v.into()));
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| CliError::Io(path.display().to_string(), e))?);
        f(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::Io(path.display().to_string(), e))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn need<T: Clone>(v: &Option<T>, key: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| CliError::Config(format!("missing field `{key}`")))
}

fn in_section<T>(section: &str, r: sbsde_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Config(format!("[{section}] {e}")))
}

fn build_intensity(cfg: &ScenarioConfig) -> Result<IntensityModel, CliError> {
    let ic = cfg.intensity.clone().unwrap_or_default();
    let horizon = ic.horizon.unwrap_or(1.0);
    let model = match need(&ic.kind, "intensity.kind")? {
        IntensityKindName::PowerGap => IntensityModel::power_gap(need(&ic.p, "intensity.p")?, horizon),
        IntensityKindName::ExpGap => IntensityModel::exp_gap(need(&ic.gamma, "intensity.gamma")?, horizon),
        IntensityKindName::Bounded => IntensityModel::bounded(need(&ic.c, "intensity.c")?, horizon),
    };
    in_section("intensity", model)
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The coefficient process, plus `t ↦ φ(t)` when it is deterministic.
fn build_phi(cfg: &ScenarioConfig, model: &IntensityModel) -> Result<(CoefficientProcess, Option<ScalarFn>), CliError> {
    let pc = cfg.phi.clone().unwrap_or_default();
    let horizon = model.horizon();
    let kind = pc.kind.unwrap_or(PhiKindName::Zero);
    let out = match kind {
        PhiKindName::Zero => (CoefficientProcess::zero(), Some(Arc::new(|_| 0.0) as ScalarFn)),
        PhiKindName::Constant => {
            let v = need(&pc.value, "phi.value")?;
            (CoefficientProcess::constant(v), Some(Arc::new(move |_| v) as ScalarFn))
        }
        PhiKindName::LambdaMultiple => {
            let s = need(&pc.scale, "phi.scale")?;
            let m = model.clone();
            let f: ScalarFn = Arc::new(move |t| s * m.rate(t));
            let g = f.clone();
            (CoefficientProcess::function_unbounded(format!("{s}λ"), move |t| g(t)), Some(f))
        }
        PhiKindName::ExpMinusLambda => {
            let m = model.clone();
            (CoefficientProcess::exp_minus_lambda(), Some(Arc::new(move |t| m.survival(t)) as ScalarFn))
        }
        PhiKindName::SinW => (
            in_section(
                "phi",
                CoefficientProcess::markovian("(1+sin W)/2", 1.0, |_, w| 0.5 * (1.0 + w[0].sin())),
            )?,
            None,
        ),
        PhiKindName::Trig => {
            let value = pc.value.unwrap_or(0.0);
            let cos = pc.cos.clone().unwrap_or_default();
            let sin = pc.sin.clone().unwrap_or_default();
            let f: ScalarFn = Arc::new(move |t| {
                let x = std::f64::consts::PI * t / horizon;
                let c: f64 = cos.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * x).cos()).sum();
                let s: f64 = sin.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * x).sin()).sum();
                value + c + s
            });
            let g = f.clone();
            (in_section("phi", CoefficientProcess::function_sampled("trig", horizon, move |t| g(t)))?, Some(f))
        }
    };
    Ok(out)
}

fn build_driver(cfg: &ScenarioConfig) -> Result<DriverSpec, CliError> {
    let dc = cfg.driver.clone().unwrap_or_default();
    match dc.kind.unwrap_or(DriverKindName::ExpUtility) {
        DriverKindName::Identity => Ok(DriverSpec::identity()),
        DriverKindName::ExpUtility => in_section("driver", DriverSpec::exp_utility(dc.alpha.unwrap_or(1.0))),
    }
}

fn build_grid(cfg: &ScenarioConfig, model: &IntensityModel) -> Result<TimeGrid, CliError> {
    let gc = cfg.grid.clone().unwrap_or_default();
    let scheme = match gc.scheme.unwrap_or(GridSchemeName::LambdaEquidistributed) {
        GridSchemeName::Uniform => GridScheme::Uniform,
        GridSchemeName::LambdaEquidistributed => GridScheme::LambdaEquidistributed {
            lambda_max: gc.lambda_max.unwrap_or(12.0),
        },
        GridSchemeName::GeometricTail => GridScheme::GeometricTail {
            ratio: gc.ratio.unwrap_or(0.5),
            eps_min: gc.eps_min.unwrap_or(1e-8),
        },
    };
    in_section("grid", make_grid(model, gc.n.unwrap_or(2001), scheme))
}

fn build_bundle(cfg: &ScenarioConfig, grid: &TimeGrid) -> Result<(PathBundle, RegressionBasis), CliError> {
    let mc = cfg.mc.clone().unwrap_or_default();
    let bundle = in_section(
        "mc",
        simulate_paths(grid, 1, mc.paths.unwrap_or(20_000), mc.seed.unwrap_or(1)),
    )?;
    Ok((bundle, RegressionBasis::Polynomial { degree: mc.degree.unwrap_or(4) }))
}

fn terminal_of(cfg: &ScenarioConfig) -> TerminalValue {
    match cfg.terminal.unwrap_or(0.0) {
        0.0 => TerminalValue::Zero,
        a => TerminalValue::Constant(a),
    }
}

fn schedule_of(cfg: &ScenarioConfig, default: &[f64]) -> Vec<f64> {
    cfg.scheme
        .as_ref()
        .and_then(|s| s.schedule.clone())
        .unwrap_or_else(|| default.to_vec())
}

/// `-c (T - t) / (1 + p)`: the solution of the +λY form for `λ = p/(T-t)` and constant `φ = c`.
fn power_gap_closed_form(model: &IntensityModel, phi: &CoefficientProcess) -> Option<impl Fn(f64) -> f64> {
    let p = match model.kind() {
        IntensityKind::PowerGap { p } => *p,
        _ => return None,
    };
    let c = phi.deterministic_value(model, 0.0)?;
    if !matches!(phi.kind(), sbsde_core::CoefficientKind::Constant(_)) {
        return None;
    }
    let horizon = model.horizon();
    Some(move |t: f64| -c * (horizon - t) / (1.0 + p))
}

/// Validates `cfg` for `name`, then runs it writing into `out_dir`.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunResult, CliError> {
    let name = need(&cfg.scenario, "scenario")?;
    if builtin(&name).is_none() {
        return Err(CliError::Config(format!("unknown scenario `{name}`")));
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(out_dir.display().to_string(), e))?;
    let mut ctx = Ctx {
        out_dir: out_dir.to_path_buf(),
        metrics: BTreeMap::new(),
        flags: BTreeMap::new(),
        report: Vec::new(),
        files: Vec::new(),
    };
    let outcome = match name.as_str() {
        "affine_plus" => affine_plus(cfg, &mut ctx)?,
        "affine_minus_family" => affine_minus_family(cfg, &mut ctx)?,
        "ek_red" => ek_red(cfg, &mut ctx)?,
        "ode_trichotomy" => ode_trichotomy(cfg, &mut ctx)?,
        _ => nonlinear_exp(cfg, &mut ctx)?,
    };
    let claim = builtin(&name).map_or("", |b| b.claim);
    let mut text = String::new();
    text.push_str(&format!("scenario: {name}\nclaim: {claim}\noutcome: {}\nexit_code: {}\n", outcome.name(), outcome.exit_code()));
    text.push_str("\n[config]\n");
    text.push_str(&cfg.to_toml());
    text.push_str("\n[result]\n");
    for (k, v) in &ctx.report {
        text.push_str(&format!("{k}: {v}\n"));
    }
    ctx.write("report.txt", |w| w.write_all(text.as_bytes()))?;
    let mut files = ctx.files.clone();
    files.push("summary.json".into());
    let summary = RunSummary {
        scenario: name,
        outcome,
        exit_code: outcome.exit_code(),
        metrics: ctx.metrics.clone(),
        flags: ctx.flags.clone(),
        files,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Config(e.to_string()))?;
    ctx.write("summary.json", |w| writeln!(w, "{json}"))?;
    Ok(RunResult {
        summary,
        report: ctx.report,
        out_dir: out_dir.to_path_buf(),
    })
}

fn nonexistence(problem: &BsdeProblem, grid: &TimeGrid, schedule: &[f64], ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let cert = in_section("scheme", certify_nonexistence(problem, grid, schedule))?;
    ctx.write("certificate.csv", |w| cert.write_csv(w))?;
    if let CertificateKind::NonExistence { ratio, .. } = &cert.kind {
        ctx.metric("growth_ratio", *ratio);
    }
    let certified = cert.is_nonexistence_certified();
    ctx.flag("monotone_divergent", certified);
    push_certificate(ctx, &cert);
    Ok(if certified {
        Outcome::NoSolutionExpected
    } else {
        Outcome::NotConverged
    })
}

fn push_certificate(ctx: &mut Ctx, cert: &PathologyCertificate) {
    for line in cert.to_text().lines() {
        if let Some((k, v)) = line.split_once(": ") {
            ctx.line(&format!("certificate.{k}"), v);
        }
    }
}

fn affine_plus(cfg: &ScenarioConfig, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let model = build_intensity(cfg)?;
    let (phi, _) = build_phi(cfg, &model)?;
    let grid = build_grid(cfg, &model)?;
    let problem = in_section(
        "phi",
        BsdeProblem::affine(model.clone(), phi.clone(), EquationForm::PlusLambdaY).and_then(|p| p.with_terminal(terminal_of(cfg))),
    )?;
    if !problem.terminal.is_zero() {
        return nonexistence(&problem, &grid, &schedule_of(cfg, &[4.0, 16.0, 64.0, 256.0]), ctx);
    }
    let bundle = if phi.is_deterministic() {
        None
    } else {
        Some(build_bundle(cfg, &grid)?)
    };
    let sol = in_section("phi", solve_affine_plus(&problem, &grid, bundle.as_ref().map(|(b, k)| (b, k))))?;
    let margin = sol.bound_check();
    let worst = margin.iter().copied().filter(|m| m.is_finite()).fold(f64::INFINITY, f64::min);
    ctx.metric("y0", sol.y.mean_at(0));
    ctx.metric("phi_bound", phi.bound());
    ctx.metric("min_bound_margin", worst);
    ctx.flag("bound_ok", worst >= -1e-12);
    if let Some(exact) = power_gap_closed_form(&model, &phi) {
        let err = (0..grid.len())
            .map(|i| (sol.y.mean_at(i) - exact(grid.time(i))).abs())
            .fold(0.0, f64::max);
        ctx.metric("closed_form_max_error", err);
    }
    if bundle.is_none() {
        let r = in_section("phi", residual_check(&sol, &problem, None))?;
        ctx.metric("max_residual", r.max_residual);
    }
    ctx.metric("class_d_norm", class_d_norm(&sol, Some(grid.horizon() * phi.bound())));
    ctx.write("solution.csv", |w| write_solution_csv(w, &sol, "bound_margin", &margin))?;
    Ok(Outcome::Solved)
}

fn family_report(cert: &PathologyCertificate, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    if let CertificateKind::NonUniqueness {
        members,
        residuals,
        pairwise_sup_distance,
        ..
    } = &cert.kind
    {
        ctx.metric("members", members.len() as f64);
        ctx.metric(
            "max_residual",
            residuals.iter().map(|r| r.max_residual).fold(0.0, f64::max),
        );
        ctx.metric(
            "min_pairwise_sup_distance",
            pairwise_sup_distance.iter().map(|p| p.2).fold(f64::INFINITY, f64::min),
        );
        ctx.write("solution.csv", |w| write_members_csv(w, members))?;
    }
    ctx.write("certificate.csv", |w| cert.write_csv(w))?;
    push_certificate(ctx, cert);
    Ok(Outcome::FamilyCertified)
}

fn write_members_csv<W: Write>(mut w: W, members: &[AffineSolution]) -> std::io::Result<()> {
    let grid = &members[0].grid;
    write!(w, "t")?;
    for k in 0..members.len() {
        write!(w, ",Y_{k}")?;
    }
    writeln!(w)?;
    for i in 0..grid.len() {
        write!(w, "{:.12e}", grid.time(i))?;
        for m in members {
            write!(w, ",{:.12e}", m.y.mean_at(i))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn family_section(cfg: &ScenarioConfig) -> (Vec<f64>, f64) {
    let f = cfg.family.clone().unwrap_or_default();
    (f.y0.unwrap_or_else(|| vec![0.0, 1.0]), f.tol.unwrap_or(1e-8))
}

fn affine_minus_family(cfg: &ScenarioConfig, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let model = build_intensity(cfg)?;
    let (phi, _) = build_phi(cfg, &model)?;
    let grid = build_grid(cfg, &model)?;
    if !phi.is_zero() {
        return Err(CliError::Config(
            "[phi] affine_minus_family uses φ = 0; use ode_trichotomy for a nonzero φ".into(),
        ));
    }
    let terminal = terminal_of(cfg);
    if !terminal.is_zero() {
        let problem = in_section(
            "terminal",
            BsdeProblem::affine(model, phi, EquationForm::MinusLambdaY).and_then(|p| p.with_terminal(terminal)),
        )?;
        return nonexistence(&problem, &grid, &schedule_of(cfg, &[4.0, 16.0, 64.0, 256.0]), ctx);
    }
    let (y0, tol) = family_section(cfg);
    let scenario = NonUniquenessScenario::FundamentalMinus { model, y0 };
    let cert = in_section("family", certify_nonuniqueness(&scenario, &grid, tol))?;
    family_report(&cert, ctx)
}

fn ek_red(cfg: &ScenarioConfig, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let ic = cfg.intensity.clone().unwrap_or_default();
    if ic.kind != Some(IntensityKindName::ExpGap) || ic.horizon.unwrap_or(1.0) != 1.0 {
        return Err(CliError::Config("[intensity] ek_red needs kind = \"exp_gap\" on horizon 1".into()));
    }
    let f = cfg.family.clone().unwrap_or_default();
    let (y0, tol) = family_section(cfg);
    let scenario = NonUniquenessScenario::EkRed {
        r: f.r.unwrap_or(0.05),
        sigma: f.sigma.unwrap_or(0.2),
        gamma: need(&ic.gamma, "intensity.gamma")?,
        y0,
    };
    let model = in_section("intensity", scenario.model())?;
    let grid = build_grid(cfg, &model)?;
    let cert = in_section("family", certify_nonuniqueness(&scenario, &grid, tol))?;
    family_report(&cert, ctx)
}

fn ode_trichotomy(cfg: &ScenarioConfig, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let model = build_intensity(cfg)?;
    let (_, phi_fn) = build_phi(cfg, &model)?;
    let phi_fn = phi_fn.ok_or_else(|| CliError::Config("[phi] ode_trichotomy needs a deterministic φ".into()))?;
    let grid = build_grid(cfg, &model)?;
    let f = cfg.family.clone().unwrap_or_default();
    let c = f.c.unwrap_or(0.0);
    let class = in_section("phi", classify_ode(&model, phi_fn.as_ref(), 1e-6))?;
    ctx.write("classification.csv", |w| {
        writeln!(w, "t,m")?;
        for (t, m) in &class.limit_estimates {
            writeln!(w, "{t:.17e},{m:.12e}")?;
        }
        Ok(())
    })?;
    match class.case {
        OdeCase::ConvergesTo { c: limit } => {
            ctx.line("classification", format!("ConvergesTo({limit:.9})"));
            ctx.metric("limit", limit);
            if (limit - c).abs() > 1e-6 * (1.0 + c.abs()) {
                ctx.line("reason", format!("terminal value {c} differs from the limit {limit:.9}"));
                return Ok(Outcome::NoSolution);
            }
        }
        OdeCase::Diverges => {
            ctx.line("classification", "Diverges");
            ctx.line("reason", "the weighted integral has no limit at T");
            return Ok(Outcome::NoSolution);
        }
    }
    let (y0, tol) = family_section(cfg);
    let label = cfg
        .phi
        .as_ref()
        .and_then(|p| p.kind)
        .map_or("zero".to_string(), |k| format!("{k:?}"));
    let scenario = NonUniquenessScenario::OdeFamily {
        model,
        phi: phi_fn,
        phi_label: label,
        c,
        y0,
    };
    let cert = in_section("family", certify_nonuniqueness(&scenario, &grid, tol))?;
    family_report(&cert, ctx)
}

fn nonlinear_exp(cfg: &ScenarioConfig, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let model = build_intensity(cfg)?;
    let (phi, _) = build_phi(cfg, &model)?;
    let driver = build_driver(cfg)?;
    let grid = build_grid(cfg, &model)?;
    let problem = in_section(
        "driver",
        BsdeProblem::nonlinear(model.clone(), phi.clone(), driver).and_then(|p| p.with_terminal(terminal_of(cfg))),
    )?;
    let sc = cfg.scheme.clone().unwrap_or_default();
    if !problem.terminal.is_zero() {
        return nonexistence(&problem, &grid, &schedule_of(cfg, &[4.0, 16.0, 64.0, 256.0]), ctx);
    }
    let config = SchemeConfig {
        schedule: schedule_of(cfg, &sbsde_core::singular_scheme::default_schedule()),
        t0: sc.t0,
        tol: sc.tol.unwrap_or(1e-5),
        box_slack: None,
        keep_solutions: false,
    };
    let mode_name = sc.mode.unwrap_or(SchemeModeName::Ode);
    let bundle = match mode_name {
        SchemeModeName::Ode => None,
        SchemeModeName::Regression => Some(build_bundle(cfg, &grid)?),
    };
    let mode = match &bundle {
        None => SchemeMode::Ode,
        Some((b, basis)) => SchemeMode::Regression {
            bundle: b,
            basis: basis.clone(),
        },
    };
    let report = in_section("scheme", run_scheme(&problem, &grid, &config, &mode))?;
    let sol = &report.final_solution;
    let horizon = grid.horizon();
    ctx.metric("y0", sol.y.mean_at(0));
    ctx.metric("y0_se", sol.y.se_at(0));
    ctx.metric("t0", report.t0);
    ctx.metric("t_cap", report.t_cap);
    ctx.metric("lower_clip", report.lower_clip);
    ctx.metric("lipschitz", report.lipschitz);
    ctx.metric("final_cauchy_gap", report.cauchy_gaps.last().copied().unwrap_or(f64::NAN));
    ctx.flag("cauchy_decreasing", report.cauchy_decreasing);
    ctx.metric("monotone_violation", report.monotone_violation);
    ctx.flag("monotone_ok", report.monotone_ok);
    ctx.flag("bounds_ok", report.bounds_ok);
    ctx.metric("max_box_violation", report.max_box_violation);
    ctx.metric(
        "max_lambda_f_integral",
        report.lambda_f_integrals.iter().copied().fold(0.0, f64::max),
    );
    ctx.metric("lambda_f_bound", report.lambda_f_bound);
    ctx.metric("class_d_norm", class_d_norm(sol, Some(horizon * report.phi_bound)));
    if let Some(b) = report.bmo {
        let bound = 2.0 * horizon * horizon * report.phi_bound * report.phi_bound;
        ctx.metric("bmo_estimate", b.value);
        ctx.metric("bmo_standard_error", b.standard_error);
        ctx.metric("bmo_bound", bound);
        ctx.flag("bmo_within_bound", b.value <= bound + 3.0 * b.standard_error);
    }
    if bundle.is_none() {
        let level = config.schedule.last().copied().unwrap_or(f64::INFINITY);
        let r = in_section("scheme", residual_check_at_level(sol, &problem, None, level))?;
        ctx.metric("max_residual", r.max_residual);
    }
    let is_identity = cfg.driver.as_ref().and_then(|d| d.kind) == Some(DriverKindName::Identity);
    if let (true, Some(exact)) = (is_identity, power_gap_closed_form(&model, &phi)) {
        let y: Vec<f64> = grid.points().iter().map(|&t| exact(t)).collect();
        let closed = AffineSolution {
            grid: grid.clone(),
            y: sbsde_core::NodalField::deterministic(y),
            z: sbsde_core::NodalField::deterministic_zeros(grid.len(), 1),
            provenance: sbsde_core::affine::Provenance::RepresentationFormula,
            terminal: 0.0,
            bound_margin: None,
            integrability: None,
        };
        let on_cap = in_section("scheme", sup_distance_until(sol, &closed, report.t_cap))?;
        let on_t0 = in_section("scheme", sup_distance_until(sol, &closed, report.t0))?;
        ctx.metric("closed_form_sup_error_t_cap", on_cap);
        ctx.metric("closed_form_sup_error_t0", on_t0);
    }
    ctx.line("status", format!("{:?}", report.status));
    ctx.write("scheme.csv", |w| report.write_csv(w))?;
    let lower: Vec<f64> = grid.points().iter().map(|&t| -(horizon - t) * report.phi_bound).collect();
    ctx.write("solution.csv", |w| write_solution_csv(w, sol as &dyn NodalSolution, "box_lower", &lower))?;
    Ok(match report.status {
        SchemeStatus::Converged => Outcome::Solved,
        SchemeStatus::NotConverged => Outcome::NotConverged,
    })
}

//! Acceptance suite: one pass/fail line per criterion, every tolerance pinned
//! below. Exits non-zero when any criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbsde_cli::{execute, Outcome, RunArgs, RunResult};

const CLOSED_FORM_TOL: f64 = 1e-8;
const CLOSED_FORM_SECONDS: f64 = 1.0;
const RANDOM_PHI_COUNT: usize = 20;
const RANDOM_PHI_SEED: u64 = 20_240_601;
const BOUND_SLACK: f64 = 1e-12;
const ODE_LIMIT_TOL: f64 = 1e-6;
const ODE_MEMBER_TOL: f64 = 1e-10;
const ODE_SECONDS: f64 = 1.0;
const FAMILY_RESIDUAL_TOL: f64 = 1e-8;
const FAMILY_MIN_MEMBERS: f64 = 3.0;
const FAMILY_MIN_DISTANCE: f64 = 1.0;
const EK_RED_MIN_MEMBERS: f64 = 2.0;
const GROWTH_MIN_RATIO: f64 = 10.0;
const NONEXISTENCE_SECONDS: f64 = 30.0;
const IDENTITY_SUP_TOL: f64 = 1e-4;
const FINAL_GAP_TOL: f64 = 1e-5;
const SCHEDULE_AGREEMENT_TOL: f64 = 2e-5;
const SCHEME_SECONDS: f64 = 60.0;
const BMO_PATHS: usize = 100_000;
const BMO_BOUND: f64 = 2.0;
const BMO_SE_MULTIPLE: f64 = 3.0;
const BMO_SECONDS: f64 = 120.0;
const LAMBDA_F_MARGIN: f64 = 0.05;
const WORKER_COUNTS: [usize; 3] = [1, 4, 8];

fn run(dir: &Path, scenario: &str, tag: &str, overrides: &[(&str, String)], threads: Option<usize>) -> (RunResult, f64) {
    let out = dir.join(tag);
    let mut args = RunArgs {
        scenario: scenario.to_string(),
        threads,
        ..Default::default()
    };
    args.overrides.push(("out".into(), out.display().to_string()));
    for (k, v) in overrides {
        args.overrides.push((k.to_string(), v.clone()));
    }
    let start = Instant::now();
    let r = execute(&args).unwrap_or_else(|e| panic!("{scenario} ({tag}) failed: {e}"));
    (r, start.elapsed().as_secs_f64())
}

fn o(k: &str, v: impl ToString) -> (&str, String) {
    (k, v.to_string())
}

/// Columns of a CSV file with a header row.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for line in lines {
        for (k, v) in line.split(',').enumerate() {
            cols[k].push(v.parse().unwrap_or(f64::NAN));
        }
    }
    (header, cols)
}

fn metric(r: &RunResult, key: &str) -> f64 {
    r.metric(key).unwrap_or_else(|| panic!("missing metric {key}"))
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn c1(dir: &Path) -> Verdict {
    let (r, secs) = run(dir, "affine_plus", "c1", &[], Some(1));
    let err = metric(&r, "closed_form_max_error");
    verdict(
        r.summary.outcome == Outcome::Solved && err <= CLOSED_FORM_TOL && secs < CLOSED_FORM_SECONDS,
        format!("affine closed form: max |Y + (1-t)/2| = {err:.2e} (tol {CLOSED_FORM_TOL:.0e}), {secs:.3} s"),
    )
}

fn c2(dir: &Path) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_PHI_SEED);
    let mut worst = f64::INFINITY;
    let mut all_ok = true;
    for k in 0..RANDOM_PHI_COUNT {
        let mut coeffs = |len: usize| -> String {
            (0..len)
                .map(|_| format!("{:?}", rng.gen_range(-1.0..1.0)))
                .collect::<Vec<_>>()
                .join(",")
        };
        let (value, cos, sin) = (coeffs(1), coeffs(3), coeffs(3));
        let overrides = [o("phi", "trig"), o("phi.value", value), o("phi.cos", cos), o("phi.sin", sin)];
        let (r, _) = run(dir, "affine_plus", &format!("c2_{k}"), &overrides, Some(1));
        worst = worst.min(metric(&r, "min_bound_margin"));
        all_ok &= r.flag("bound_ok") == Some(true);
    }
    verdict(
        all_ok && worst >= -BOUND_SLACK,
        format!("bound ‖φ‖(T-t) over {RANDOM_PHI_COUNT} random φ: min margin {worst:.3e} (slack {BOUND_SLACK:.0e})"),
    )
}

fn c3(dir: &Path) -> Verdict {
    let (r, secs_a) = run(dir, "ode_trichotomy", "c3a", &[o("c", 2)], Some(1));
    let limit = metric(&r, "limit");
    let (header, cols) = read_csv(&r.out_dir.join("solution.csv"));
    let y0_col = header.iter().position(|h| h == "Y_0").unwrap();
    let member_err = cols[0]
        .iter()
        .zip(&cols[y0_col])
        .filter(|(t, _)| **t < 1.0)
        .map(|(t, y)| (y - 2.0 * t).abs())
        .fold(0.0, f64::max);
    let (r1, secs_b) = run(
        dir,
        "ode_trichotomy",
        "c3b",
        &[o("phi", "constant"), o("phi_value", 1), o("c", 0)],
        Some(1),
    );
    let limit1 = metric(&r1, "limit");
    let pass = r.summary.outcome == Outcome::FamilyCertified
        && (limit - 2.0).abs() <= ODE_LIMIT_TOL
        && member_err <= ODE_MEMBER_TOL
        && limit1.abs() <= ODE_LIMIT_TOL
        && secs_a < ODE_SECONDS
        && secs_b < ODE_SECONDS;
    verdict(
        pass,
        format!(
            "ODE trichotomy: |C-2| = {:.1e}, member vs 2t {member_err:.1e}, φ=1 limit {limit1:.1e}, {secs_a:.3}/{secs_b:.3} s",
            (limit - 2.0).abs()
        ),
    )
}

fn c4(dir: &Path) -> Verdict {
    let (r, _) = run(dir, "affine_minus_family", "c4a", &[], Some(1));
    let (members, resid, dist) = (
        metric(&r, "members"),
        metric(&r, "max_residual"),
        metric(&r, "min_pairwise_sup_distance"),
    );
    let (e, _) = run(dir, "ek_red", "c4b", &[o("r", 0.05), o("sigma", 0.2), o("gamma", 1)], Some(1));
    let (ek_members, ek_resid) = (metric(&e, "members"), metric(&e, "max_residual"));
    let pass = r.summary.outcome == Outcome::FamilyCertified
        && members >= FAMILY_MIN_MEMBERS
        && resid <= FAMILY_RESIDUAL_TOL
        && dist >= FAMILY_MIN_DISTANCE
        && e.summary.outcome == Outcome::FamilyCertified
        && ek_members >= EK_RED_MIN_MEMBERS
        && ek_resid <= FAMILY_RESIDUAL_TOL;
    verdict(
        pass,
        format!(
            "non-uniqueness: {members} members, residual {resid:.1e}, min distance {dist}; ek_red {ek_members} members, residual {ek_resid:.1e}"
        ),
    )
}

fn c5(dir: &Path) -> Verdict {
    let schedule = o("schedule", "4,16,64,256");
    let (a, secs_a) = run(dir, "affine_plus", "c5a", &[o("terminal", 1), schedule.clone()], Some(1));
    let (b, secs_b) = run(dir, "nonlinear_exp", "c5b", &[o("terminal", -1), schedule], Some(1));
    let (ra, rb) = (metric(&a, "growth_ratio"), metric(&b, "growth_ratio"));
    let pass = [&a, &b]
        .iter()
        .all(|r| r.summary.outcome == Outcome::NoSolutionExpected && r.flag("monotone_divergent") == Some(true))
        && ra >= GROWTH_MIN_RATIO
        && rb >= GROWTH_MIN_RATIO
        && secs_a + secs_b < NONEXISTENCE_SECONDS;
    verdict(
        pass,
        format!("non-existence: growth ratios {ra:.1} (affine, A=1) and {rb:.1} (nonlinear, A=-1), {:.2} s", secs_a + secs_b),
    )
}

fn c6(identity: &RunResult) -> Verdict {
    let sup = metric(identity, "closed_form_sup_error_t_cap");
    let on_t0 = metric(identity, "closed_form_sup_error_t0");
    verdict(
        sup <= IDENTITY_SUP_TOL,
        format!(
            "identity cross-check n=256: sup error on [0, t_cap] {sup:.2e} (tol {IDENTITY_SUP_TOL:.0e}); on [0, t0={:.3}] {on_t0:.2e}",
            metric(identity, "t0")
        ),
    )
}

fn c7(dir: &Path, exp: &RunResult, secs: f64) -> Verdict {
    let (alt, secs_alt) = run(dir, "nonlinear_exp", "c7_alt", &[o("schedule", "3,9,27,81,243")], Some(1));
    let t0 = metric(exp, "t0").min(metric(&alt, "t0"));
    let (_, a) = read_csv(&exp.out_dir.join("solution.csv"));
    let (_, b) = read_csv(&alt.out_dir.join("solution.csv"));
    let agreement = a[0]
        .iter()
        .zip(a[1].iter().zip(&b[1]))
        .filter(|(t, _)| **t <= t0)
        .map(|(_, (x, y))| (x - y).abs())
        .fold(0.0, f64::max);
    let gap = metric(exp, "final_cauchy_gap");
    let viol = metric(exp, "monotone_violation");
    let pass = viol == 0.0
        && exp.flag("bounds_ok") == Some(true)
        && exp.flag("cauchy_decreasing") == Some(true)
        && gap < FINAL_GAP_TOL
        && agreement <= SCHEDULE_AGREEMENT_TOL
        && secs + secs_alt < SCHEME_SECONDS;
    verdict(
        pass,
        format!(
            "ExpUtility scheme: violation {viol}, box ok {}, gaps decreasing {}, final gap {gap:.2e}, schedules agree {agreement:.1e} on [0, {t0:.3}], {:.2} s",
            exp.flag("bounds_ok").unwrap_or(false),
            exp.flag("cauchy_decreasing").unwrap_or(false),
            secs + secs_alt
        ),
    )
}

fn c8(dir: &Path) -> Verdict {
    let overrides = [
        o("phi", "sin_w"),
        o("mode", "regression"),
        o("paths", BMO_PATHS),
        o("schedule", "16,32,64"),
        o("n", 65),
        o("lambda_max", 5),
    ];
    let (r, secs) = run(dir, "nonlinear_exp", "c8", &overrides, None);
    let (b, se) = (metric(&r, "bmo_estimate"), metric(&r, "bmo_standard_error"));
    verdict(
        b <= BMO_BOUND + BMO_SE_MULTIPLE * se && secs < BMO_SECONDS,
        format!("BMO (M = {BMO_PATHS}, n = 64): estimate {b:.4} ± {se:.1e} vs bound {BMO_BOUND}, {secs:.1} s"),
    )
}

fn c9(runs: &[(&str, &RunResult)]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, r) in runs {
        let integral = metric(r, "max_lambda_f_integral");
        let bound = metric(r, "lambda_f_bound") + LAMBDA_F_MARGIN;
        pass &= integral <= bound;
        parts.push(format!("{name} {integral:.4} <= {bound:.4}"));
    }
    verdict(pass, format!("driver mass bound: {}", parts.join(", ")))
}

fn c10(dir: &Path) -> Verdict {
    let cases: [(&str, Vec<(&str, String)>); 2] = [
        (
            "nonlinear_exp",
            vec![
                o("phi", "sin_w"),
                o("mode", "regression"),
                o("paths", 20_000),
                o("schedule", "4,8"),
                o("n", 65),
                o("lambda_max", 5),
                o("seed", 11),
            ],
        ),
        (
            "affine_plus",
            vec![o("phi", "sin_w"), o("paths", 20_000), o("n", 129), o("lambda_max", 6), o("seed", 5)],
        ),
    ];
    let mut identical = true;
    let mut compared = 0;
    for (scenario, overrides) in &cases {
        let mut reference: Option<Vec<(String, Vec<u8>)>> = None;
        for w in WORKER_COUNTS {
            let (r, _) = run(dir, scenario, &format!("c10_{scenario}_{w}"), overrides, Some(w));
            let mut files: Vec<(String, Vec<u8>)> = r
                .summary
                .files
                .iter()
                .filter(|f| f.ends_with(".csv"))
                .map(|f| (f.clone(), fs::read(r.out_dir.join(f)).unwrap()))
                .collect();
            files.sort();
            match &reference {
                None => reference = Some(files),
                Some(base) => {
                    compared += files.len();
                    identical &= *base == files;
                }
            }
        }
    }
    verdict(
        identical && compared > 0,
        format!("reproducibility: {compared} CSV files at workers {WORKER_COUNTS:?} byte-identical: {identical}"),
    )
}

fn report(results: &mut Vec<(usize, Verdict)>, k: usize, v: Verdict) {
    println!("criterion {k:>2} [{}] {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    results.push((k, v));
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut results = Vec::new();
    let started = Instant::now();

    report(&mut results, 1, c1(dir));
    report(&mut results, 2, c2(dir));
    report(&mut results, 3, c3(dir));
    report(&mut results, 4, c4(dir));
    report(&mut results, 5, c5(dir));
    let (identity, _) = run(dir, "nonlinear_exp", "c6", &[o("driver", "identity")], Some(1));
    report(&mut results, 6, c6(&identity));
    let (exp, secs) = run(dir, "nonlinear_exp", "c7", &[], Some(1));
    report(&mut results, 7, c7(dir, &exp, secs));
    report(&mut results, 8, c8(dir));
    report(&mut results, 9, c9(&[("exp_utility", &exp), ("identity", &identity)]));
    report(&mut results, 10, c10(dir));

    let failed: Vec<usize> = results.iter().filter(|(_, v)| !v.pass).map(|(k, _)| *k).collect();
    println!(
        "acceptance: {} passed, {} failed {failed:?} in {:.1} s",
        results.len() - failed.len(),
        failed.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

use proptest::prelude::*;
use sbsde_core::affine::{fundamental_family, solve_affine_plus};
use sbsde_core::diagnostics::{class_d_norm, residual_check};
use sbsde_core::{
    make_grid, run_scheme, simulate_paths, truncate, BsdeProblem, ClassicalBsde, CoefficientProcess, DriverSpec, EquationForm, GridScheme,
    IntensityModel, SchemeConfig, SchemeMode, TimeGrid,
};

fn singular_model() -> impl Strategy<Value = IntensityModel> {
    prop_oneof![
        (0.25f64..4.0, 0.5f64..2.0).prop_map(|(p, h)| IntensityModel::power_gap(p, h).unwrap()),
        (0.1f64..5.0, 0.5f64..2.0).prop_map(|(g, h)| IntensityModel::exp_gap(g, h).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cumulative_is_nondecreasing(model in singular_model(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let h = model.horizon();
        let (s, t) = (a.min(b) * h * 0.999, a.max(b) * h * 0.999);
        let (ls, lt) = (model.cumulative(s).unwrap(), model.cumulative(t).unwrap());
        prop_assert!(lt >= ls);
        prop_assert!(ls >= 0.0);
    }

    #[test]
    fn decay_lies_in_unit_interval(model in singular_model(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let h = model.horizon();
        let (s, t) = (a.min(b) * h, a.max(b) * h * 0.9999);
        let s = s.min(t);
        let d = model.decay(s, t);
        prop_assert!(d > 0.0 && d <= 1.0, "decay({s}, {t}) = {d}");
        prop_assert!(model.survival(t) > 0.0 && model.survival(t) <= 1.0);
    }

    #[test]
    fn lambda_grid_is_strictly_increasing(model in singular_model(), n in 3usize..400, lmax in 1.0f64..15.0) {
        let g = make_grid(&model, n, GridScheme::LambdaEquidistributed { lambda_max: lmax }).unwrap();
        prop_assert!(g.points().windows(2).all(|w| w[1] > w[0]));
        prop_assert!(g.t_cap() < g.horizon());
        prop_assert_eq!(g.horizon(), model.horizon());
    }

    #[test]
    fn fundamental_family_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let model = IntensityModel::power_gap(1.0, 1.0).unwrap();
        let g = make_grid(&model, 200, GridScheme::LambdaEquidistributed { lambda_max: 10.0 }).unwrap();
        let ya = fundamental_family(&model, a, &g, None, None).unwrap();
        let yb = fundamental_family(&model, b, &g, None, None).unwrap();
        let yab = fundamental_family(&model, a + b, &g, None, None).unwrap();
        for i in 0..g.len() {
            let lhs = ya.y.value(0, i) + yb.y.value(0, i);
            prop_assert!((lhs - yab.y.value(0, i)).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()));
        }
        prop_assert!((class_d_norm(&yab, None) - (a + b).abs()).abs() <= 1e-12 * (1.0 + (a + b).abs()));
    }

    #[test]
    fn affine_plus_respects_bound(p in 0.5f64..3.0, c in -2.0f64..2.0, w in 0.5f64..6.0) {
        let model = IntensityModel::power_gap(p, 1.0).unwrap();
        let phi = CoefficientProcess::function_sampled("sin", 1.0, move |t| c * (w * t).sin()).unwrap();
        let bound = phi.bound();
        let problem = BsdeProblem::affine(model.clone(), phi, EquationForm::PlusLambdaY).unwrap();
        let g = make_grid(&model, 120, GridScheme::LambdaEquidistributed { lambda_max: 10.0 }).unwrap();
        let sol = solve_affine_plus(&problem, &g, None).unwrap();
        for i in 0..g.len() {
            prop_assert!(sol.y.value(0, i).abs() <= bound * (1.0 - g.time(i)) + 1e-12);
        }
    }

    #[test]
    fn corruption_is_detected(delta in 0.01f64..0.5, y0 in -3.0f64..3.0) {
        let model = IntensityModel::power_gap(1.0, 1.0).unwrap();
        let g = make_grid(&model, 300, GridScheme::LambdaEquidistributed { lambda_max: 12.0 }).unwrap();
        let problem = BsdeProblem::affine(model.clone(), CoefficientProcess::zero(), EquationForm::MinusLambdaY).unwrap();
        let mut m = fundamental_family(&model, y0, &g, None, None).unwrap();
        prop_assert!(residual_check(&m, &problem, None).unwrap().max_residual < 1e-10);
        m.y = m.y.shifted(delta);
        prop_assert!(residual_check(&m, &problem, None).unwrap().max_residual > 5e-3);
    }

    #[test]
    fn clipped_driver_is_monotone_and_lipschitz(alpha in 0.2f64..3.0, bound in 0.1f64..2.0, x in -10.0f64..0.0, dx in 0.0f64..1.0) {
        let d = DriverSpec::exp_utility(alpha).unwrap();
        let clip = truncate(&d, bound, 1.0).unwrap();
        let (fx, fy) = (clip.eval(x), clip.eval((x + dx).min(0.0)));
        let y = (x + dx).min(0.0);
        prop_assert!(fy >= fx);
        prop_assert!(fy - fx <= clip.lipschitz() * (y - x) * (1.0 + 1e-12) + 1e-15);
        prop_assert!(clip.eval(x) >= d.eval(-bound) - 1e-12);
    }

    #[test]
    fn implicit_step_is_monotone_in_rhs(alpha in 0.2f64..3.0, rate in 0.0f64..300.0, dt in 1e-5f64..0.05, r1 in -2.0f64..0.0, dr in 0.0f64..1.0) {
        let model = IntensityModel::power_gap(1.0, 1.0).unwrap();
        let problem = BsdeProblem::nonlinear(model, CoefficientProcess::constant(1.0), DriverSpec::exp_utility(alpha).unwrap()).unwrap();
        let clip = truncate(&problem.driver, 1.0, 1.0).unwrap();
        let bsde = ClassicalBsde::new(&problem, 256.0).unwrap().with_clip(clip);
        let (ya, ra) = bsde.implicit_step(dt, rate, r1, r1).unwrap();
        let (yb, rb) = bsde.implicit_step(dt, rate, r1 + dr, r1 + dr).unwrap();
        prop_assert!(yb >= ya - 1e-12);
        prop_assert!(ra <= 1e-12 * (1.0 + r1.abs()) && rb <= 1e-12 * (1.0 + (r1 + dr).abs()));
    }

    #[test]
    fn paths_are_reproducible(seed in 0u64..1000, paths in 1usize..64) {
        let g = TimeGrid::uniform(1.0, 9).unwrap();
        let a = simulate_paths(&g, 2, paths, seed).unwrap();
        let b = simulate_paths(&g, 2, paths, seed).unwrap();
        prop_assert_eq!(a.increments(), b.increments());
        prop_assert_eq!(a.levels(), b.levels());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scheme_is_monotone_and_boxed(alpha in 0.3f64..2.0, c in 0.1f64..1.5) {
        let model = IntensityModel::power_gap(1.0, 1.0).unwrap();
        let problem = BsdeProblem::nonlinear(model.clone(), CoefficientProcess::constant(c), DriverSpec::exp_utility(alpha).unwrap()).unwrap();
        let g = make_grid(&model, 400, GridScheme::LambdaEquidistributed { lambda_max: 8.0 }).unwrap();
        let config = SchemeConfig { schedule: vec![2.0, 8.0, 32.0], ..Default::default() };
        let report = run_scheme(&problem, &g, &config, &SchemeMode::Ode).unwrap();
        prop_assert!(report.monotone_ok && report.monotone_violation == 0.0);
        prop_assert!(report.bounds_ok);
        prop_assert!(report.lambda_f_integrals.iter().all(|&v| v <= report.lambda_f_bound + 0.05));
    }
}

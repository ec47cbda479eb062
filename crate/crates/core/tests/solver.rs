mod common;

use common::*;
use ehjb_core::config::ProblemConfig;
use ehjb_core::error::Error;
use ehjb_core::model::{DriverSplit, ProblemSpec};
use ehjb_core::pde::{
    ergodic_residual, gradient_bound_check, gradient_system_residual, solve_discounted, truncate_driver,
    vanishing_discount, CapMode, Region, SolverOptions, TruncatedDriver,
};

fn bulk() -> Region {
    Region::Ball { radius: 2.0, layer: 3 }
}

#[test]
fn constant_driver_is_exact() {
    let s = solve(&constant(1.25));
    assert!((s.report.lambda - 1.25).abs() < 1e-8);
    assert!(s.report.u.values.iter().all(|u| u.abs() < 1e-10));
    assert!(s.report.v.values.iter().all(|v| v.abs() < 1e-10));
    assert!(s.report.pde_residual.unwrap() < 1e-8);
    assert!(s.report.gradient_bound.unwrap().verdict);
}

#[test]
fn discounted_constant_source() {
    let cfg = ProblemConfig::from_toml(&constant(0.7)).unwrap();
    let spec = cfg.spec().unwrap();
    let driver = TruncatedDriver::untruncated(spec.driver.clone());
    let u = solve_discounted(&spec, &driver, 0.25, &cfg.solver).unwrap();
    assert!(u.values.iter().all(|v| (v - 2.8).abs() < 1e-10));
    let zero = spec.with_driver(DriverSplit::zero(1));
    let u = solve_discounted(&zero, &TruncatedDriver::untruncated(zero.driver.clone()), 0.25, &cfg.solver).unwrap();
    assert!(u.values.iter().all(|v| *v == 0.0));
}

#[test]
fn lq_discounted_at_small_rho() {
    // ergodic Riccati: −p − ½p² + 3/2 = 0 gives p = 1, λ = p/2
    let cfg = ProblemConfig::from_toml(LQ).unwrap();
    let spec = cfg.spec().unwrap();
    let driver = TruncatedDriver::untruncated(spec.driver.clone());
    let rho = 1e-4;
    let u = solve_discounted(&spec, &driver, rho, &cfg.solver).unwrap();
    let i0 = u.grid.nearest_node(&[0.0]);
    assert!((rho * u.values[i0] - 0.5).abs() < 1e-2);
    let h = u.grid.spacing[0];
    for i in 1..u.grid.len() - 1 {
        let x = u.grid.node(i)[0];
        if x.abs() <= 2.0 {
            let grad = (u.values[i + 1] - u.values[i - 1]) / (2.0 * h);
            assert!((grad - x).abs() < 2e-2, "x = {x}: {grad}");
        }
    }
}

#[test]
fn lq_vanishing_discount() {
    let s = solve(LQ);
    assert!((s.report.lambda - 0.5).abs() < 1e-2);
    let g = &s.report.v.grid;
    for i in 0..g.len() {
        let x = g.node(i)[0];
        if x.abs() <= 2.0 {
            assert!((s.report.v.at(i)[0] - x).abs() < 2e-2);
        }
    }
    assert!(ergodic_residual(&s.spec, &s.spec.driver, &s.report, &bulk()) < 1e-3);
    assert!((s.report.lambda_grid_average - s.report.lambda).abs() < 1e-2);
}

#[test]
fn lq_gradient_system_residual_is_small() {
    // v = x is reproduced exactly by the stencils, so only the discount
    // floor ρ·|v| remains in the bulk
    for h in ["0.04", "0.02"] {
        let s = solve(&LQ.replace("spacing = 0.01", &format!("spacing = {h}")));
        let r = gradient_system_residual(&s.spec, &s.spec.driver, &s.report, &bulk());
        assert!(r < 1e-3, "h = {h}: {r}");
    }
}

#[test]
fn benchmark_gradient_system_is_second_order() {
    let coarse = solve(&format!("{BENCHMARK}\n[solver]\nspacing = 0.1\n"));
    let fine = solve(&format!("{BENCHMARK}\n[solver]\nspacing = 0.05\n"));
    let region = bulk();
    let rc = gradient_system_residual(&coarse.spec, &coarse.spec.driver, &coarse.report, &region);
    let rf = gradient_system_residual(&fine.spec, &fine.spec.driver, &fine.report, &region);
    let ratio = rc / rf;
    assert!((3.0..5.5).contains(&ratio), "{rc} / {rf} = {ratio}");
}

#[test]
fn residual_rejects_non_solution() {
    let mut s = solve(BENCHMARK);
    for (i, u) in s.report.u.values.iter_mut().enumerate() {
        *u += 0.1 * ((i * 7919) % 13) as f64;
    }
    assert!(ergodic_residual(&s.spec, &s.spec.driver, &s.report, &Region::default()) > 1.0);
}

#[test]
fn benchmark_bound_and_negative_control() {
    let s = solve(BENCHMARK);
    let b = s.report.gradient_bound.unwrap();
    assert!(b.verdict && b.sup_v <= 2.0 * 1.05);
    // a bound below the computed sup must fail
    let tight = gradient_bound_check(&s.report, 0.5 * b.sup_v, 1.0, 0.05, &Region::default());
    assert!(!tight.verdict);
}

#[test]
fn truncation_is_inert_on_benchmark() {
    let capped = solve(BENCHMARK);
    let mut cfg = ProblemConfig::from_toml(BENCHMARK).unwrap();
    cfg.solver.cap = CapMode::Off;
    let free = solve_config(cfg);
    assert!(capped.report.cap.is_some() && free.report.cap.is_none());
    assert!((capped.report.lambda - free.report.lambda).abs() < capped.config.solver.fixed_point_tol);
}

#[test]
fn shift_covariance() {
    let base = solve(BENCHMARK);
    let cfg = ProblemConfig::from_toml(BENCHMARK).unwrap();
    let spec = base.spec.with_driver(base.spec.driver.shifted(0.75));
    let driver = truncate_driver(spec.driver.clone(), base.report.cap.unwrap()).unwrap();
    let shifted = vanishing_discount(&spec, &driver, &cfg.solver).unwrap();
    assert!((shifted.lambda - base.report.lambda - 0.75).abs() < 1e-6);
    for (a, b) in shifted.u.values.iter().zip(&base.report.u.values) {
        assert!((a - b).abs() < 1e-8);
    }
    for (a, b) in shifted.v.values.iter().zip(&base.report.v.values) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn anchor_normalization() {
    let src = BENCHMARK.replace("delta = 1.0", "delta = 1.0\nx0 = [0.33]");
    let s = solve(&src);
    let i = s.report.u.grid.nearest_node(&[0.33]);
    assert_eq!(s.report.u.values[i], 0.0);
}

#[test]
fn discount_trace_is_cauchy() {
    for src in [BENCHMARK, LQ, CONTROL] {
        let s = solve(src);
        let l: Vec<f64> = s.report.discount_trace.iter().map(|t| t.lambda).collect();
        let n = l.len();
        assert!(n >= 4);
        let d: Vec<f64> = (n - 3..n).map(|k| (l[k] - l[k - 1]).abs()).collect();
        assert!(d[1] <= d[0] && d[2] <= d[1], "{d:?}");
    }
}

#[test]
fn discrete_comparison() {
    let cfg = ProblemConfig::from_toml(BENCHMARK).unwrap();
    let low = cfg.spec().unwrap();
    let high = low.with_driver(DriverSplit::new(
        1,
        "raised",
        |x, z| -x[0].tanh() * z[0].powi(3),
        |x, _| x[0].cos() + 0.1 * (1.0 + x[0].sin()).powi(2),
    ));
    let u1 = solve_discounted(&low, &truncate_driver(low.driver.clone(), 2.0).unwrap(), 0.5, &cfg.solver).unwrap();
    let u2 = solve_discounted(&high, &truncate_driver(high.driver.clone(), 2.0).unwrap(), 0.5, &cfg.solver).unwrap();
    assert!(u1.values.iter().zip(&u2.values).all(|(a, b)| *a <= b + 1e-8));
}

#[test]
fn linear_solvers_agree() {
    let mut cfg = ProblemConfig::from_toml(BENCHMARK).unwrap();
    cfg.solver.spacing = 0.1;
    let spec = cfg.spec().unwrap();
    let driver = truncate_driver(spec.driver.clone(), 2.0).unwrap();
    let lu = solve_discounted(&spec, &driver, 0.5, &cfg.solver).unwrap();
    cfg.solver.linear_solver = "gauss_seidel".into();
    let gs = solve_discounted(&spec, &driver, 0.5, &cfg.solver).unwrap();
    for (a, b) in lu.values.iter().zip(&gs.values) {
        assert!((a - b).abs() < 1e-8);
    }
    cfg.solver.linear_solver = "cholesky".into();
    let err = solve_discounted(&spec, &driver, 0.5, &cfg.solver).unwrap_err();
    assert!(matches!(err, Error::UnknownStrategy { .. }), "{err}");
}

#[test]
fn separable_two_dimensional_ou() {
    // h = cos x1 + cos x2 under the OU stationary law N(0, ½ I): λ = 2 e^{−1/4}
    let src = r#"
[problem]
dim = 2
box_half_width = 5.0

[drift]
b = ["-x1", "-x2"]

[h]
expr = "cos(x1) + cos(x2)"

[solver]
spacing = 0.1
"#;
    let s = solve(src);
    let oracle = 2.0 * (-0.25f64).exp();
    assert!((s.report.lambda - oracle).abs() < 5e-3, "{} vs {oracle}", s.report.lambda);
    assert!(s.report.gradient_bound.unwrap().verdict);
}

#[test]
fn failures_are_reported() {
    let mut opts = SolverOptions {
        fixed_point_max_iter: 1,
        ..SolverOptions::default()
    };
    let cfg = ProblemConfig::from_toml(BENCHMARK).unwrap();
    let spec: ProblemSpec = cfg.spec().unwrap();
    let driver = truncate_driver(spec.driver.clone(), 2.0).unwrap();
    match vanishing_discount(&spec, &driver, &opts) {
        Err(Error::FixedPointNotConverged { history, .. }) => assert_eq!(history.len(), 1),
        other => panic!("{other:?}"),
    }
    opts.fixed_point_max_iter = 500;
    opts.min_rho = 0.2;
    opts.lambda_tol = 1e-12;
    match vanishing_discount(&spec, &driver, &opts) {
        Err(Error::DiscountNotConverged { trace, .. }) => assert_eq!(trace.len(), 3),
        other => panic!("{other:?}"),
    }
}

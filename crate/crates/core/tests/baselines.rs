use cbo_core::baselines::{gd_run, langevin_run, AnnealSchedule};
use cbo_core::cbo::{initial_point, SchemeConfig};
use cbo_core::objectives::{quadratic_objective, Objective};
use cbo_core::Error;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn gd_on_a_quadratic_is_geometric() {
    let obj = quadratic_objective(1, 2.0).unwrap();
    let run = gd_run(&obj, &[1.0], 0.1, 60).unwrap();
    for (k, x) in run.iterates.iter().enumerate() {
        let exact = 0.8f64.powi(k as i32);
        assert!((x[0] - exact).abs() <= 1e-14 * exact, "k={k}");
    }
}

#[test]
fn gd_descends_below_the_inverse_smoothness_step() {
    let obj = Objective::by_name("canyon3").unwrap();
    let step = 0.01;
    assert!(step <= 1.0 / obj.constants.lipschitz_smooth.unwrap());
    let run = gd_run(&obj, &[8.0, 8.0], step, 2000).unwrap();
    for w in run.objective_values.windows(2) {
        assert!(
            w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0),
            "{} > {}",
            w[1],
            w[0]
        );
    }
}

#[test]
fn gd_divergence_is_reported() {
    let obj = quadratic_objective(1, 2.0).unwrap();
    assert!(matches!(
        gd_run(&obj, &[1.0], 10.0, 1000),
        Err(Error::NonFinite(_))
    ));
}

#[test]
fn invalid_inputs_are_rejected() {
    let obj = quadratic_objective(2, 2.0).unwrap();
    assert!(gd_run(&obj, &[1.0], 0.1, 10).is_err());
    assert!(gd_run(&obj, &[1.0, 1.0], 0.0, 10).is_err());
    assert!(gd_run(&obj, &[1.0, 1.0], 0.1, 0).is_err());
    assert!(langevin_run(&obj, &[1.0, 1.0], 0.1, 10, AnnealSchedule::log(0.0), 0).is_err());
}

#[test]
fn schedules() {
    let log = AnnealSchedule::log(0.02);
    assert_eq!(log.beta(0.0), 0.0);
    assert!((log.beta(std::f64::consts::E - 1.0) - 0.02).abs() < 1e-17);
    assert_eq!(AnnealSchedule::constant(3.0).beta(123.0), 3.0);
}

#[test]
fn zero_temperature_langevin_is_gradient_descent() {
    let obj = Objective::by_name("canyon3").unwrap();
    let gd = gd_run(&obj, &[8.0, 8.0], 0.001, 500).unwrap();
    let lv = langevin_run(
        &obj,
        &[8.0, 8.0],
        0.001,
        500,
        AnnealSchedule::log(f64::INFINITY),
        7,
    )
    .unwrap();
    assert_eq!(gd.iterates, lv.iterates);
}

#[test]
fn langevin_is_reproducible() {
    let obj = Objective::by_name("canyon2").unwrap();
    let a = langevin_run(&obj, &[4.0, 4.0], 0.001, 300, AnnealSchedule::log(0.02), 3).unwrap();
    let b = langevin_run(&obj, &[4.0, 4.0], 0.001, 300, AnnealSchedule::log(0.02), 3).unwrap();
    let c = langevin_run(&obj, &[4.0, 4.0], 0.001, 300, AnnealSchedule::log(0.02), 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.iterates, c.iterates);
}

#[test]
fn stationary_second_moment_matches_the_discrete_ou_chain() {
    // x' = (1 - c dt) x + sqrt(2 dt / beta) z has stationary per-coordinate
    // variance 1 / (c beta (1 - c dt / 2)).
    let (d, c, beta, dt) = (2usize, 2.0, 5.0, 0.01);
    let obj = quadratic_objective(d, c).unwrap();
    let n = 200_000;
    let burn = 10_000;
    let run = langevin_run(&obj, &[0.0; 2], dt, n, AnnealSchedule::constant(beta), 21).unwrap();
    let m2 = run.iterates[burn..]
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / (run.iterates.len() - burn) as f64;
    let exact = d as f64 / (c * beta * (1.0 - c * dt / 2.0));
    assert!((m2 - exact).abs() < 0.08 * exact, "{m2} vs {exact}");
}

#[test]
fn fig2b_gradient_descent_stalls_away_from_the_minimizer() {
    let obj = Objective::by_name("canyon3").unwrap();
    for start in [[8.0, 8.0], [7.5, 8.0], [8.5, 8.0], [8.0, 7.5], [8.0, 8.5]] {
        let run = gd_run(&obj, &start, 0.01, 10_000).unwrap();
        let last = run.last();
        assert!(norm(&obj.grad(last)) <= 1e-3);
        assert!(norm(last) > 1.0, "{start:?} -> {last:?}");
    }
}

/// The annealed Langevin baseline stays in the valley minima at this
/// temperature scale: 0 of 50 runs reach the unit ball around the minimizer.
#[test]
#[ignore = "known not to reproduce: reported only"]
fn fig2c_langevin_majority() {
    let obj = Objective::by_name("canyon3").unwrap();
    let mut hits = 0;
    for seed in 0..50 {
        let mut cfg = SchemeConfig::new(vec![8.0, 8.0]);
        cfg.seed = seed;
        let run = langevin_run(
            &obj,
            &initial_point(&cfg),
            0.001,
            10_000,
            AnnealSchedule::log(0.02),
            seed,
        )
        .unwrap();
        if norm(run.last()) <= 1.0 {
            hits += 1;
        }
    }
    println!("langevin: {hits}/50 within 1.0 of x*");
    assert!(hits > 25);
}

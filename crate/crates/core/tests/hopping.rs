use cbo_core::cbo::{RunRecord, SchemeConfig, Start};
use cbo_core::hopping::{
    alpha_zero, ch_run_from, ch_step, implicit_ch_run, laplace_bound_check, mms_run_from, prox,
    LaplaceBoundInputs, ProxProblem, PROX_MAX_ITER, PROX_TOL,
};
use cbo_core::objectives::{quadratic_objective, Objective};
use cbo_core::Error;
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A stable step for the registered objective: `tau = 0.25/|Lambda|` when
/// `Lambda < 0`, else 0.1.
fn safe_tau(obj: &Objective) -> f64 {
    let lam = obj.constants.lambda_semiconvex;
    if lam < 0.0 {
        0.25 / -lam
    } else {
        0.1
    }
}

#[test]
fn prox_of_a_quadratic_has_closed_form() {
    let obj = quadratic_objective(3, 2.0).unwrap();
    let p = vec![1.5, -0.25, 4.0];
    for tau in [0.01, 0.1, 1.0, 10.0] {
        let sol = prox(
            &ProxProblem::new(p.clone(), tau, &obj).unwrap(),
            PROX_TOL,
            PROX_MAX_ITER,
        )
        .unwrap();
        let exact: Vec<f64> = p.iter().map(|v| v / (1.0 + 2.0 * tau)).collect();
        assert!(
            dist(&sol.point, &exact) < 1e-8,
            "tau {tau}: {:?}",
            sol.point
        );
        assert!(sol.residual <= PROX_TOL);
    }
}

#[test]
fn prox_matches_dense_grid_in_one_dimension() {
    for (name, tau, anchor) in [
        ("quadratic-1", 0.3, 1.7),
        ("rastrigin-1", 0.002, 0.62),
        ("rastrigin-1", 0.002, -2.3),
    ] {
        let obj = Objective::by_name(name).unwrap();
        let problem = ProxProblem::new(vec![anchor], tau, &obj).unwrap();
        let sol = prox(&problem, PROX_TOL, PROX_MAX_ITER).unwrap();
        let (lo, hi, n) = (anchor - 1.0, anchor + 1.0, 100_000);
        let h = (hi - lo) / (n - 1) as f64;
        let best = (0..n)
            .map(|i| lo + i as f64 * h)
            .min_by(|a, b| problem.value(&[*a]).total_cmp(&problem.value(&[*b])))
            .unwrap();
        assert!(
            (sol.point[0] - best).abs() <= h,
            "{name} at {anchor}: {} vs {best}",
            sol.point[0]
        );
    }
}

#[test]
fn prox_rejects_non_convex_modulation() {
    let obj = Objective::by_name("rastrigin-2").unwrap();
    assert!(matches!(
        ProxProblem::new(vec![0.0, 0.0], 0.01, &obj),
        Err(Error::NotStronglyConvex(m)) if m < 0.0
    ));
    assert!(ProxProblem::new(vec![0.0], 0.01, &obj).is_err());
}

#[test]
fn prox_reports_non_convergence() {
    let obj = Objective::by_name("canyon3").unwrap();
    let problem = ProxProblem::new(vec![8.0, 8.0], 0.03, &obj).unwrap();
    match prox(&problem, 1e-14, 3) {
        Err(Error::ProxNotConverged {
            iterations,
            best_residual,
        }) => {
            assert_eq!(iterations, 3);
            assert!(best_residual > 1e-14);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn mms_on_a_quadratic_is_iterated_closed_form() {
    let obj = quadratic_objective(2, 2.0).unwrap();
    let mut cfg = SchemeConfig::new(vec![0.0, 0.0]);
    cfg.tau = Some(0.2);
    cfg.n_steps = 30;
    let p = vec![3.0, -2.0];
    let run = mms_run_from(&obj, &cfg, &Start::Point(p.clone())).unwrap();
    for (k, x) in run.iterates.iter().enumerate() {
        let f = 1.4f64.powi(k as i32);
        assert!(dist(x, &[p[0] / f, p[1] / f]) < 1e-8, "k={k}");
    }
}

#[test]
fn mms_on_the_canyon_stalls_in_a_valley_minimum() {
    let obj = Objective::by_name("canyon3").unwrap();
    let mut cfg = SchemeConfig::new(vec![8.0, 8.0]);
    cfg.tau = Some(0.03);
    cfg.n_steps = 3000;
    let run = mms_run_from(&obj, &cfg, &Start::Point(vec![8.0, 8.0])).unwrap();
    for w in run.objective_values.windows(2) {
        assert!(
            w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0),
            "{} > {}",
            w[1],
            w[0]
        );
    }
    let last = run.last();
    assert!(
        norm(&obj.grad(last)) <= 10.0 * PROX_TOL,
        "{}",
        norm(&obj.grad(last))
    );
    assert!(norm(last) > 1.0, "{last:?}");
}

#[test]
fn hopping_moves_downhill() {
    let obj = quadratic_objective(1, 2.0).unwrap();
    let mut cfg = SchemeConfig::new(vec![0.0]);
    cfg.alpha = 100.0;
    cfg.sigma_tilde = Some(0.1);
    cfg.n_particles = 10_000;
    for seed in 0..5 {
        cfg.seed = seed;
        let x = ch_step(&[1.0], &obj, &cfg, 1).unwrap()[0];
        // Further than three proposal widths toward the minimizer.
        assert!(x > 0.0 && x < 0.7, "{x}");
    }
}

fn coupled(obj: &Objective, tau: f64, n_steps: usize) -> (SchemeConfig, RunRecord) {
    let mut cfg = SchemeConfig::new(vec![0.0; obj.dim]);
    cfg.alpha = 1e3;
    cfg.n_particles = 500;
    cfg.n_steps = n_steps;
    let cfg = cfg.with_coupled_tau(tau);
    let ch = ch_run_from(obj, &cfg, &Start::Point(vec![2.0; obj.dim])).unwrap();
    (cfg, ch)
}

#[test]
fn implicit_hopping_on_a_quadratic_is_closed_form() {
    let obj = quadratic_objective(2, 2.0).unwrap();
    let (cfg, ch) = coupled(&obj, 0.1, 10);
    let ich = implicit_ch_run(&obj, &cfg, &ch).unwrap();
    assert_eq!(ich.iterates[0], ch.iterates[0]);
    for k in 1..ich.iterates.len() {
        let exact: Vec<f64> = ch.iterates[k - 1].iter().map(|v| v / 1.2).collect();
        assert!(dist(&ich.iterates[k], &exact) < 1e-8);
    }
}

#[test]
fn implicit_hopping_checks_its_inputs() {
    let obj = quadratic_objective(2, 2.0).unwrap();
    let (cfg, ch) = coupled(&obj, 0.1, 3);
    let mut other = cfg.clone();
    other.seed += 1;
    assert!(matches!(
        implicit_ch_run(&obj, &other, &ch),
        Err(Error::ConfigMismatch(_))
    ));
    let ich = implicit_ch_run(&obj, &cfg, &ch).unwrap();
    assert!(matches!(
        implicit_ch_run(&obj, &cfg, &ich),
        Err(Error::ConfigMismatch(_))
    ));
}

#[test]
fn alpha_zero_matches_gamma_values() {
    use std::f64::consts::{LN_2, PI};
    // Gamma(3/2) = sqrt(pi)/2, Gamma(2) = 1, Gamma(5/2) = 3 sqrt(pi)/4.
    let gamma = [PI.sqrt() / 2.0, 1.0, 0.75 * PI.sqrt()];
    for (i, g) in gamma.iter().enumerate() {
        let d = i + 1;
        let expected = (d as f64 * LN_2 + (1.0 + d as f64).ln() + 2.0 * g.ln()) / 0.05;
        assert!((alpha_zero(0.05, d) - expected).abs() < 1e-12 * expected);
    }
}

#[test]
fn laplace_bound_on_a_quadratic() {
    let obj = Objective::by_name("quadratic-2").unwrap();
    let problem = ProxProblem::new(vec![1.0, -0.5], 0.1, &obj).unwrap();
    let inputs = LaplaceBoundInputs {
        r: 0.5,
        q: 0.1,
        sample_count: 100_000,
    };
    let check = laplace_bound_check(&problem, &inputs, 1e3, 4).unwrap();
    assert!(check.satisfied, "{check:?}");
    assert!(check.ball_mass > 0.0 && check.e_r > 0.0);
    let exact = [1.0 / 1.2, -0.5 / 1.2];
    assert!(dist(&check.prox_point, &exact) < 1e-8);
}

#[test]
fn laplace_bound_validates_inputs() {
    let obj = Objective::by_name("quadratic-2").unwrap();
    let problem = ProxProblem::new(vec![1.0, 1.0], 0.1, &obj).unwrap();
    let bad = LaplaceBoundInputs {
        r: 0.0,
        q: 0.1,
        sample_count: 10,
    };
    assert!(laplace_bound_check(&problem, &bad, 1e3, 0).is_err());
    let far = LaplaceBoundInputs {
        r: 1e-9,
        q: 0.1,
        sample_count: 10,
    };
    assert!(matches!(
        laplace_bound_check(&problem, &far, 1e3, 0),
        Err(Error::ZeroBallMass)
    ));
}

fn objective_strategy() -> impl Strategy<Value = Objective> {
    prop::sample::select(Objective::registered_names())
        .prop_map(|n| Objective::by_name(&n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mms_dissipates_energy(obj in objective_strategy(), seed in any::<u64>()) {
        let tau = safe_tau(&obj);
        let mut cfg = SchemeConfig::new(vec![0.0; obj.dim]);
        cfg.tau = Some(tau);
        cfg.n_steps = 15;
        cfg.seed = seed;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let start = obj.test_box.sample(&mut rng);
        let run = mms_run_from(&obj, &cfg, &Start::Point(start)).unwrap();
        for k in 1..run.iterates.len() {
            let step = dist(&run.iterates[k], &run.iterates[k - 1]);
            let lhs = run.objective_values[k] + step * step / (2.0 * tau);
            let prev = run.objective_values[k - 1];
            prop_assert!(lhs <= prev + 1e-9 * (1.0 + prev.abs()), "{}: k={k} {lhs} > {prev}", obj.name);
        }
    }

    #[test]
    fn implicit_step_length_is_bounded(obj in objective_strategy(), seed in any::<u64>()) {
        let tau = safe_tau(&obj);
        let mut cfg = SchemeConfig::new(vec![0.0; obj.dim]);
        cfg.alpha = 100.0;
        cfg.n_particles = 100;
        cfg.n_steps = 5;
        cfg.seed = seed;
        let cfg = cfg.with_coupled_tau(tau);
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let start = obj.test_box.sample(&mut rng);
        let ch = ch_run_from(&obj, &cfg, &Start::Point(start)).unwrap();
        let ich = implicit_ch_run(&obj, &cfg, &ch).unwrap();
        let c1 = obj.constants.c1;
        for k in 1..ich.iterates.len() {
            let (prev, next) = (&ch.iterates[k - 1], &ich.iterates[k]);
            let bound = 2.0 * tau * c1 * (norm(prev) + norm(next));
            prop_assert!(dist(next, prev) <= bound + 1e-9, "{}: k={k}", obj.name);
        }
    }
}

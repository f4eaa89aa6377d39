//! Objective functions with declared regularity constants.
//!
//! The canyon family is `E(x) = (x2 - v(x1))^2 + s*(sqrt(1 + |x|^2) - 1)
//! + a*(1 - cos(w x1) cos(w x2))` with `v(t) = t^3/64` (degree 3) or
//! `v(t) = t^2/8` (degree 2) and tilt `s = 3.5`. Both valleys pass through
//! `(0, 0)` and `(8, 8)`; every term is non-negative and vanishes only at the
//! origin, so `x* = (0, 0)` and `E(x*) = 0` for every amplitude and frequency.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::noise::{rng_at, Stream};
use crate::{dist, norm, Error, Result};

pub const CANYON_TILT: f64 = 3.5;
pub const CANYON_AMPLITUDE: f64 = 4.0;
pub const CANYON_FREQUENCY: f64 = 1.5;
pub const QUADRATIC_CURVATURE: f64 = 2.0;

/// Constants of the oscillation-free canyon over its test box, found by
/// sampled maximization on a 1201x1201 grid and rounded outward.
struct CanyonBase {
    lambda: f64,
    lipschitz: f64,
    c1: f64,
    c2: f64,
    upper: f64,
}

const CANYON3_BASE: CanyonBase = CanyonBase {
    lambda: -5.8,
    lipschitz: 79.0,
    c1: 17.0,
    c2: 3.3,
    upper: 344.0,
};

const CANYON2_BASE: CanyonBase = CanyonBase {
    lambda: -4.7,
    lipschitz: 21.2,
    c1: 8.1,
    c2: 2.35,
    upper: 243.0,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub grid_per_axis: usize,
}

impl TestBox {
    pub fn cube(dim: usize, lo: f64, hi: f64, grid_per_axis: usize) -> Self {
        Self {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
            grid_per_axis,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidInput(
                "box bounds must have equal, positive length".into(),
            ));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidInput(
                "box requires lower < upper componentwise".into(),
            ));
        }
        if self.grid_per_axis < 2 {
            return Err(Error::InvalidInput(
                "box grid needs at least 2 points per axis".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| rng.random_range(*l..*u))
            .collect()
    }
}

/// Declared regularity constants. Exactly one of `upper_bound` or the pair
/// `(c3, c4)` should be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub lambda_semiconvex: f64,
    pub lipschitz_smooth: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub upper_bound: Option<f64>,
}

/// Which alternative of the growth assumption the constants describe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthBranch {
    Bounded { upper: f64 },
    Quadratic { c3: f64, c4: f64 },
}

impl Constants {
    pub fn growth_branch(&self) -> Option<GrowthBranch> {
        match (self.upper_bound, self.c3, self.c4) {
            (Some(upper), None, None) => Some(GrowthBranch::Bounded { upper }),
            (None, Some(c3), Some(c4)) => Some(GrowthBranch::Quadratic { c3, c4 }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Kind {
    Quadratic {
        curvature: f64,
    },
    Rastrigin,
    Canyon {
        degree: u32,
        /// Coefficient and power of the valley monomial `v(t) = coef * t^degree`.
        valley_coef: f64,
        tilt: f64,
        amplitude: f64,
        frequency: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub name: String,
    pub dim: usize,
    pub kind: Kind,
    pub minimizer: Option<Vec<f64>>,
    pub min_value: Option<f64>,
    pub constants: Constants,
    pub test_box: TestBox,
}

impl Objective {
    /// Looks up `canyon3`, `canyon2`, `rastrigin-<d>` or `quadratic-<d>`.
    pub fn by_name(name: &str) -> Result<Self> {
        let parse_dim = |s: &str| {
            s.parse::<usize>().map_err(|_| {
                Error::InvalidInput(format!("bad dimension in objective name `{name}`"))
            })
        };
        let obj = match name {
            "canyon3" => canyon_objective(3, CANYON_AMPLITUDE, CANYON_FREQUENCY)?,
            "canyon2" => canyon_objective(2, CANYON_AMPLITUDE, CANYON_FREQUENCY)?,
            _ => {
                if let Some(d) = name.strip_prefix("rastrigin-") {
                    rastrigin_objective(parse_dim(d)?)?
                } else if let Some(d) = name.strip_prefix("quadratic-") {
                    quadratic_objective(parse_dim(d)?, QUADRATIC_CURVATURE)?
                } else {
                    return Err(Error::InvalidInput(format!("unknown objective `{name}`")));
                }
            }
        };
        Ok(obj)
    }

    pub fn registered_names() -> Vec<String> {
        let mut names = vec!["canyon3".to_string(), "canyon2".to_string()];
        for d in 1..=3 {
            names.push(format!("quadratic-{d}"));
            names.push(format!("rastrigin-{d}"));
        }
        names
    }

    pub fn with_constants(mut self, constants: Constants) -> Self {
        self.constants = constants;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            Kind::Quadratic { curvature } => 0.5 * curvature * x.iter().map(|v| v * v).sum::<f64>(),
            Kind::Rastrigin => x
                .iter()
                .map(|v| v * v + 10.0 * (1.0 - (2.0 * PI * v).cos()))
                .sum(),
            Kind::Canyon {
                degree,
                valley_coef,
                tilt,
                amplitude,
                frequency,
            } => {
                let (x1, x2) = (x[0], x[1]);
                let r = x2 - valley_coef * x1.powi(*degree as i32);
                let osc = 1.0 - (frequency * x1).cos() * (frequency * x2).cos();
                r * r + tilt * ((1.0 + x1 * x1 + x2 * x2).sqrt() - 1.0) + amplitude * osc
            }
        }
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            Kind::Quadratic { curvature } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = curvature * v;
                }
            }
            Kind::Rastrigin => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = 2.0 * v + 20.0 * PI * (2.0 * PI * v).sin();
                }
            }
            Kind::Canyon {
                degree,
                valley_coef,
                tilt,
                amplitude,
                frequency,
            } => {
                let (x1, x2) = (x[0], x[1]);
                let p = *degree as i32;
                let r = x2 - valley_coef * x1.powi(p);
                let dv = valley_coef * f64::from(*degree) * x1.powi(p - 1);
                let root = (1.0 + x1 * x1 + x2 * x2).sqrt();
                let (s1, c1) = (frequency * x1).sin_cos();
                let (s2, c2) = (frequency * x2).sin_cos();
                out[0] = -2.0 * r * dv + tilt * x1 / root + amplitude * frequency * s1 * c2;
                out[1] = 2.0 * r + tilt * x2 / root + amplitude * frequency * c1 * s2;
            }
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.grad_into(x, &mut g);
        g
    }
}

/// Noisy canyon with a valley of the given polynomial degree.
pub fn canyon_objective(
    degree: u32,
    oscillation_amplitude: f64,
    oscillation_frequency: f64,
) -> Result<Objective> {
    let (base, valley_coef) = match degree {
        3 => (CANYON3_BASE, 1.0 / 64.0),
        2 => (CANYON2_BASE, 1.0 / 8.0),
        _ => {
            return Err(Error::InvalidInput(format!(
                "canyon degree must be 2 or 3, got {degree}"
            )))
        }
    };
    if !(oscillation_amplitude >= 0.0) || !oscillation_amplitude.is_finite() {
        return Err(Error::InvalidInput(
            "oscillation amplitude must be finite and non-negative".into(),
        ));
    }
    if !(oscillation_frequency > 0.0) || !oscillation_frequency.is_finite() {
        return Err(Error::InvalidInput(
            "oscillation frequency must be finite and positive".into(),
        ));
    }
    // The oscillation has Hessian norm and gradient-to-radius ratio at most
    // a*w^2, and stays in [0, 2a].
    let (a, w) = (oscillation_amplitude, oscillation_frequency);
    let curv = a * w * w;
    let constants = Constants {
        lambda_semiconvex: base.lambda - curv,
        lipschitz_smooth: Some(base.lipschitz + curv),
        c1: base.c1 + curv,
        c2: base.c2 + 2.0 * a,
        c3: None,
        c4: None,
        upper_bound: Some(base.upper + 2.0 * a),
    };
    Ok(Objective {
        name: format!("canyon{degree}"),
        dim: 2,
        kind: Kind::Canyon {
            degree,
            valley_coef,
            tilt: CANYON_TILT,
            amplitude: a,
            frequency: w,
        },
        minimizer: Some(vec![0.0, 0.0]),
        min_value: Some(0.0),
        constants,
        test_box: TestBox::cube(2, -2.0, 10.0, 401),
    })
}

pub fn rastrigin_objective(dim: usize) -> Result<Objective> {
    if dim == 0 {
        return Err(Error::InvalidInput(
            "rastrigin dimension must be positive".into(),
        ));
    }
    let curv = 2.0 + 40.0 * PI * PI;
    Ok(Objective {
        name: format!("rastrigin-{dim}"),
        dim,
        kind: Kind::Rastrigin,
        minimizer: Some(vec![0.0; dim]),
        min_value: Some(0.0),
        constants: Constants {
            lambda_semiconvex: 2.0 - 40.0 * PI * PI,
            lipschitz_smooth: Some(curv),
            c1: curv,
            c2: 20.0 * dim as f64,
            c3: Some(1.0),
            c4: Some(1.0),
            upper_bound: None,
        },
        test_box: TestBox::cube(dim, -5.12, 5.12, if dim <= 2 { 401 } else { 61 }),
    })
}

/// `E(x) = (curvature/2) |x|^2`.
pub fn quadratic_objective(dim: usize, curvature: f64) -> Result<Objective> {
    if dim == 0 {
        return Err(Error::InvalidInput(
            "quadratic dimension must be positive".into(),
        ));
    }
    if !(curvature > 0.0) || !curvature.is_finite() {
        return Err(Error::InvalidInput(
            "curvature must be finite and positive".into(),
        ));
    }
    Ok(Objective {
        name: format!("quadratic-{dim}"),
        dim,
        kind: Kind::Quadratic { curvature },
        minimizer: Some(vec![0.0; dim]),
        min_value: Some(0.0),
        constants: Constants {
            lambda_semiconvex: curvature,
            lipschitz_smooth: Some(curvature),
            c1: curvature / 2.0,
            c2: curvature / 2.0,
            c3: Some(curvature / 2.0),
            c4: Some(1.0),
            upper_bound: None,
        },
        test_box: TestBox::cube(dim, -5.0, 5.0, if dim <= 2 { 401 } else { 61 }),
    })
}

/// Worst observed value of one spot-checked condition.
///
/// For ratio conditions `worst` is the largest `lhs / rhs` seen and the
/// check passes when it is at most 1. For semi-convexity `worst` is the
/// largest amount by which the declared `Lambda` exceeds the curvature
/// implied by a sampled midpoint triple; it passes when non-positive up to
/// rounding.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub condition: String,
    pub worst: f64,
    pub passed: bool,
    pub witness: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub objective: String,
    pub samples: usize,
    pub checks: Vec<ConditionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, condition: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.condition == condition)
    }
}

struct Worst {
    value: f64,
    witness: Vec<Vec<f64>>,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            witness: Vec::new(),
        }
    }

    fn offer(&mut self, value: f64, witness: &[&[f64]]) {
        if value > self.value {
            self.value = value;
            self.witness = witness.iter().map(|w| w.to_vec()).collect();
        }
    }

    fn into_check(self, condition: &str, passed: impl Fn(f64) -> bool) -> ConditionCheck {
        let worst = if self.value.is_finite() {
            self.value
        } else {
            0.0
        };
        ConditionCheck {
            condition: condition.to_string(),
            worst,
            passed: passed(worst),
            witness: self.witness,
        }
    }
}

/// Monte Carlo spot check of the declared constants over `test_box`.
///
/// Conditions reported: `minimizer`, `lipschitz`, `A2-lipschitz`,
/// `A2-growth`, `A3` and `A4`.
pub fn validate_assumptions(
    obj: &Objective,
    test_box: &TestBox,
    samples: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    test_box.validate()?;
    if test_box.dim() != obj.dim {
        return Err(Error::InvalidInput(
            "box dimension does not match objective".into(),
        ));
    }
    let c = &obj.constants;
    let branch = c
        .growth_branch()
        .ok_or_else(|| Error::MissingConstants(obj.name.clone()))?;
    let e_min = obj
        .min_value
        .ok_or_else(|| Error::MissingConstants(obj.name.clone()))?;
    let mut rng = rng_at(seed, Stream::Check, 0, 0, 0);

    let mut minimizer = Worst::new();
    let mut lipschitz = Worst::new();
    let mut a2_lip = Worst::new();
    let mut a2_growth = Worst::new();
    let mut a3 = Worst::new();
    let mut a4 = Worst::new();

    for _ in 0..samples {
        let x = test_box.sample(&mut rng);
        let y = test_box.sample(&mut rng);
        let (ex, ey) = (obj.eval(&x), obj.eval(&y));
        let dxy = dist(&x, &y);

        if let Some(xs) = &obj.minimizer {
            minimizer.offer(e_min - ex, &[xs, &x]);
        }
        if let Some(l) = c.lipschitz_smooth {
            let dg = dist(&obj.grad(&x), &obj.grad(&y));
            if dxy > 0.0 {
                lipschitz.offer(dg / (l * dxy), &[&x, &y]);
            }
        }
        let rhs = c.c1 * (norm(&x) + norm(&y)) * dxy;
        if rhs > 0.0 {
            a2_lip.offer((ex - ey).abs() / rhs, &[&x, &y]);
        }
        a2_growth.offer(
            (ex - e_min).abs() / (c.c2 * (1.0 + norm(&x).powi(2))),
            &[&x],
        );
        match branch {
            GrowthBranch::Bounded { upper } => a3.offer((ex - e_min) / (upper - e_min), &[&x]),
            GrowthBranch::Quadratic { c3, c4 } => {
                let r = norm(&x);
                if r >= c4 && ex > e_min {
                    a3.offer(c3 * r * r / (ex - e_min), &[&x]);
                }
            }
        }
        if dxy > 1e-3 {
            let m: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            let excess = obj.eval(&m) - 0.5 * (ex + ey) + c.lambda_semiconvex / 8.0 * dxy * dxy;
            a4.offer(8.0 * excess / (dxy * dxy), &[&x, &y]);
        }
    }

    if let Some(xs) = &obj.minimizer {
        // Grid sweep as well, since uniform samples rarely land near x*.
        let total = test_box
            .grid_per_axis
            .checked_pow(obj.dim as u32)
            .unwrap_or(usize::MAX);
        if total <= 4_000_000 {
            for_each_grid_point(test_box, |p| minimizer.offer(e_min - obj.eval(p), &[xs, p]));
        }
    }

    let tol = 1e-9;
    let mut checks = vec![minimizer.into_check("minimizer", |w| w <= tol)];
    if c.lipschitz_smooth.is_some() {
        checks.push(lipschitz.into_check("lipschitz", |w| w <= 1.0 + tol));
    }
    checks.push(a2_lip.into_check("A2-lipschitz", |w| w <= 1.0 + tol));
    checks.push(a2_growth.into_check("A2-growth", |w| w <= 1.0 + tol));
    checks.push(a3.into_check("A3", |w| w <= 1.0 + tol));
    let a4_tol = 1e-6 * (1.0 + c.lambda_semiconvex.abs());
    checks.push(a4.into_check("A4", |w| w <= a4_tol));

    Ok(AssumptionReport {
        objective: obj.name.clone(),
        samples,
        checks,
    })
}

/// Visits every point of the regular grid spanned by the box.
pub fn for_each_grid_point(test_box: &TestBox, mut f: impl FnMut(&[f64])) {
    let n = test_box.grid_per_axis;
    let d = test_box.dim();
    let mut idx = vec![0usize; d];
    let mut p = test_box.lower.clone();
    loop {
        for j in 0..d {
            let t = idx[j] as f64 / (n - 1) as f64;
            p[j] = test_box.lower[j] + t * (test_box.upper[j] - test_box.lower[j]);
        }
        f(&p);
        let mut j = 0;
        loop {
            if j == d {
                return;
            }
            idx[j] += 1;
            if idx[j] < n {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

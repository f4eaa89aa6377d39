//! Consensus hopping, its implicit proximal variant, the minimizing movement
//! scheme, and a Monte Carlo check of the quantitative Laplace bound.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cbo::{evaluate, resolve_start, RunRecord, Scheme, SchemeConfig, Start};
use crate::consensus::{consensus_point, WeightedEnsemble};
use crate::noise::{rng_at, standard_normal_into, Stream};
use crate::objectives::Objective;
use crate::{dist, norm, Error, Result};

pub const PROX_TOL: f64 = 1e-10;
pub const PROX_MAX_ITER: usize = 100_000;

/// `min_x |x - anchor|^2 / (2 tau) + E(x)`.
#[derive(Debug, Clone)]
pub struct ProxProblem<'a> {
    pub anchor: Vec<f64>,
    pub tau: f64,
    pub obj: &'a Objective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxSolution {
    pub point: Vec<f64>,
    /// `|(x - anchor)/tau + grad E(x)|`.
    pub residual: f64,
    pub iterations: usize,
}

impl<'a> ProxProblem<'a> {
    pub fn new(anchor: Vec<f64>, tau: f64, obj: &'a Objective) -> Result<Self> {
        if anchor.len() != obj.dim {
            return Err(Error::InvalidInput("prox anchor dimension mismatch".into()));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidInput(format!(
                "tau must be finite and positive, got {tau}"
            )));
        }
        if anchor.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prox anchor".into()));
        }
        let margin = 1.0 + tau * obj.constants.lambda_semiconvex;
        if margin <= 0.0 {
            return Err(Error::NotStronglyConvex(margin));
        }
        Ok(Self { anchor, tau, obj })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let sq: f64 = x
            .iter()
            .zip(&self.anchor)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        sq / (2.0 * self.tau) + self.obj.eval(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.obj.grad(x);
        for ((gi, xi), ai) in g.iter_mut().zip(x).zip(&self.anchor) {
            *gi += (xi - ai) / self.tau;
        }
        g
    }

    /// Inverse-continuity constant `sqrt(1/(2 tau) + Lambda/2)`.
    pub fn eta(&self) -> f64 {
        (0.5 / self.tau + 0.5 * self.obj.constants.lambda_semiconvex).sqrt()
    }
}

/// Gradient descent on the modulated objective, warm-started at the anchor.
///
/// The step is `1/(L + 1/tau)` when `L` is registered and found by
/// backtracking otherwise. A step that fails the sufficient decrease test is
/// halved, which keeps the solver safe where the registered `L` does not
/// hold; once the objective change is at rounding level the step is taken
/// as is, since values can no longer discriminate.
pub fn prox(problem: &ProxProblem, tol: f64, max_iter: usize) -> Result<ProxSolution> {
    let fixed = problem
        .obj
        .constants
        .lipschitz_smooth
        .map(|l| 1.0 / (l + 1.0 / problem.tau));
    let mut h = fixed.unwrap_or(problem.tau);
    let mut x = problem.anchor.clone();
    let mut fx = problem.value(&x);
    let mut best = f64::INFINITY;
    let mut cand = vec![0.0; x.len()];
    for it in 0..max_iter {
        let g = problem.gradient(&x);
        let res = norm(&g);
        if !res.is_finite() {
            return Err(Error::NonFinite("prox iterate".into()));
        }
        best = best.min(res);
        if res <= tol {
            return Ok(ProxSolution {
                point: x,
                residual: res,
                iterations: it,
            });
        }
        let noise = 64.0 * f64::EPSILON * (fx.abs() + 1.0);
        loop {
            for ((c, xi), gi) in cand.iter_mut().zip(&x).zip(&g) {
                *c = xi - h * gi;
            }
            let fc = problem.value(&cand);
            if fc <= fx - 0.5 * h * res * res || (fc - fx).abs() <= noise {
                std::mem::swap(&mut x, &mut cand);
                fx = fc;
                break;
            }
            h *= 0.5;
            if h < 1e-300 {
                return Err(Error::ProxNotConverged {
                    iterations: it,
                    best_residual: best,
                });
            }
        }
        h = match fixed {
            Some(f) => f.min(2.0 * h),
            None => 2.0 * h,
        };
    }
    Err(Error::ProxNotConverged {
        iterations: max_iter,
        best_residual: best,
    })
}

fn require_tau(cfg: &SchemeConfig) -> Result<f64> {
    cfg.tau
        .ok_or_else(|| Error::InvalidInput("tau must be set for prox schemes".into()))
}

fn require_sigma_tilde(cfg: &SchemeConfig) -> Result<f64> {
    cfg.sigma_tilde
        .ok_or_else(|| Error::InvalidInput("sigma_tilde must be set for consensus hopping".into()))
}

pub fn mms_run(obj: &Objective, cfg: &SchemeConfig) -> Result<RunRecord> {
    mms_run_from(obj, cfg, &Start::Draw)
}

/// `x_k = prox(x_{k-1}, tau)`.
pub fn mms_run_from(obj: &Objective, cfg: &SchemeConfig, start: &Start) -> Result<RunRecord> {
    cfg.validated(Some(obj))?;
    let tau = require_tau(cfg)?;
    let mut x = resolve_start(obj, cfg, start)?;
    let mut iterates = vec![x.clone()];
    let mut residuals = Vec::with_capacity(cfg.n_steps);
    for _ in 0..cfg.n_steps {
        let sol = prox(&ProxProblem::new(x, tau, obj)?, PROX_TOL, PROX_MAX_ITER)?;
        residuals.push(sol.residual);
        x = sol.point;
        iterates.push(x.clone());
    }
    Ok(record(Scheme::Mms, obj, cfg, iterates, Some(residuals)))
}

fn record(
    scheme: Scheme,
    obj: &Objective,
    cfg: &SchemeConfig,
    iterates: Vec<Vec<f64>>,
    prox_residuals: Option<Vec<f64>>,
) -> RunRecord {
    let objective_values = iterates.iter().map(|x| obj.eval(x)).collect();
    RunRecord {
        scheme,
        iterates,
        objective_values,
        config: cfg.clone(),
        prox_residuals,
    }
}

/// Consensus point of `N` samples `prev + sigma_tilde * xi_k^i`.
pub fn ch_step(prev: &[f64], obj: &Objective, cfg: &SchemeConfig, step: usize) -> Result<Vec<f64>> {
    let st = require_sigma_tilde(cfg)?;
    let d = prev.len();
    let mut samples = vec![0.0; cfg.n_particles * d];
    samples.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
        standard_normal_into(cfg.seed, Stream::Hopping, step as u64, 0, i as u64, row);
        for (y, p) in row.iter_mut().zip(prev) {
            *y = p + st * *y;
        }
    });
    let values = evaluate(obj, &samples, d);
    consensus_point(&WeightedEnsemble::new(&samples, &values, d, cfg.alpha)?)
}

pub fn ch_run(obj: &Objective, cfg: &SchemeConfig) -> Result<RunRecord> {
    ch_run_from(obj, cfg, &Start::Draw)
}

pub fn ch_run_from(obj: &Objective, cfg: &SchemeConfig, start: &Start) -> Result<RunRecord> {
    cfg.validated(Some(obj))?;
    require_sigma_tilde(cfg)?;
    let mut x = resolve_start(obj, cfg, start)?;
    let mut iterates = vec![x.clone()];
    for k in 1..=cfg.n_steps {
        x = ch_step(&x, obj, cfg, k)?;
        iterates.push(x.clone());
    }
    Ok(record(Scheme::Ch, obj, cfg, iterates, None))
}

/// `x~_k = prox(x^CH_{k-1}, tau)`, anchored at the hopping iterate rather
/// than at the scheme's own previous iterate.
pub fn implicit_ch_run(
    obj: &Objective,
    cfg: &SchemeConfig,
    coupled_ch: &RunRecord,
) -> Result<RunRecord> {
    if coupled_ch.scheme != Scheme::Ch {
        return Err(Error::ConfigMismatch(format!(
            "expected a consensus hopping run, got {}",
            coupled_ch.scheme.as_str()
        )));
    }
    if &coupled_ch.config != cfg {
        return Err(Error::ConfigMismatch(
            "hopping run was produced with a different config".into(),
        ));
    }
    cfg.validated(Some(obj))?;
    let tau = require_tau(cfg)?;
    let n = coupled_ch.iterates.len();
    let solved: Vec<ProxSolution> = coupled_ch.iterates[..n - 1]
        .par_iter()
        .map(|anchor| {
            prox(
                &ProxProblem::new(anchor.clone(), tau, obj)?,
                PROX_TOL,
                PROX_MAX_ITER,
            )
        })
        .collect::<Result<_>>()?;
    let mut iterates = vec![coupled_ch.iterates[0].clone()];
    let mut residuals = Vec::with_capacity(n - 1);
    for sol in solved {
        residuals.push(sol.residual);
        iterates.push(sol.point);
    }
    Ok(record(
        Scheme::ImplicitCh,
        obj,
        cfg,
        iterates,
        Some(residuals),
    ))
}

/// `alpha_0 = (d log 2 + log(1 + d) + 2 log Gamma(d/2 + 1)) / tau`.
pub fn alpha_zero(tau: f64, dim: usize) -> f64 {
    let d = dim as f64;
    (d * std::f64::consts::LN_2 + (1.0 + d).ln() + 2.0 * ln_gamma_half_dim_plus_one(dim)) / tau
}

/// `log Gamma(d/2 + 1)` through the factorial recursions of integer and
/// half-integer arguments.
fn ln_gamma_half_dim_plus_one(dim: usize) -> f64 {
    if dim.is_multiple_of(2) {
        (1..=dim / 2).map(|j| (j as f64).ln()).sum()
    } else {
        0.5 * std::f64::consts::PI.ln() + (0..=dim / 2).map(|j| (j as f64 + 0.5).ln()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceBoundInputs {
    pub r: f64,
    pub q: f64,
    pub sample_count: usize,
}

pub const LAPLACE_BALL_DRAWS: usize = 10_000;
const LAPLACE_BOUNDARY_GRID: usize = 720;

#[derive(Debug, Clone, Serialize)]
pub struct LaplaceCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub mc_slack: f64,
    pub prox_point: Vec<f64>,
    pub e_r: f64,
    pub ball_mass: f64,
}

/// Estimates both sides of
/// `|x_alpha(rho) - x~*| <= (q + E~_r)^(1/2) / eta
///   + exp(-alpha q) / rho(B_r(x~*)) * int |x - x~*| d rho`
/// with `rho = N(anchor, 2 sigma_tilde^2 I)` and `sigma_tilde^2 = tau/(2 alpha)`.
///
/// `E~_r` is a sampled maximum over `B_r(x~*)`, so it can only under-estimate;
/// the verdict allows a relative slack of `3 / sqrt(sample_count)`.
pub fn laplace_bound_check(
    problem: &ProxProblem,
    inputs: &LaplaceBoundInputs,
    alpha: f64,
    seed: u64,
) -> Result<LaplaceCheck> {
    if !(inputs.r > 0.0 && inputs.q > 0.0 && inputs.sample_count > 0) {
        return Err(Error::InvalidInput(
            "laplace inputs need r > 0, q > 0 and samples > 0".into(),
        ));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(
            "alpha must be finite and positive".into(),
        ));
    }
    let d = problem.anchor.len();
    let star = prox(problem, PROX_TOL, PROX_MAX_ITER)?.point;
    let e_star = problem.value(&star);
    let std = (problem.tau / alpha).sqrt();

    let m = inputs.sample_count;
    let mut samples = vec![0.0; m * d];
    samples.par_chunks_mut(d).enumerate().for_each(|(j, row)| {
        standard_normal_into(seed, Stream::Laplace, 0, 0, j as u64, row);
        for (y, a) in row.iter_mut().zip(&problem.anchor) {
            *y = a + std * *y;
        }
    });
    let values: Vec<f64> = samples.par_chunks(d).map(|x| problem.value(x)).collect();
    let c = consensus_point(&WeightedEnsemble::new(&samples, &values, d, alpha)?)?;
    let lhs = dist(&c, &star);

    let dists: Vec<f64> = samples.chunks_exact(d).map(|x| dist(x, &star)).collect();
    let inside = dists.iter().filter(|r| **r <= inputs.r).count();
    if inside == 0 {
        return Err(Error::ZeroBallMass);
    }
    let ball_mass = inside as f64 / m as f64;
    let integral = dists.iter().sum::<f64>() / m as f64;

    let ball_max = (0..LAPLACE_BALL_DRAWS)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng_at(seed, Stream::Laplace, 1, 0, j as u64);
            let mut dir = vec![0.0; d];
            standard_normal_into(seed, Stream::Laplace, 2, 0, j as u64, &mut dir);
            let len = norm(&dir).max(f64::MIN_POSITIVE);
            let radius = inputs.r * rng.random::<f64>().powf(1.0 / d as f64);
            let x: Vec<f64> = star
                .iter()
                .zip(&dir)
                .map(|(s, u)| s + radius * u / len)
                .collect();
            problem.value(&x)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let boundary_max = boundary_points(&star, inputs.r)
        .iter()
        .map(|x| problem.value(x))
        .fold(f64::NEG_INFINITY, f64::max);
    let e_r = (ball_max.max(boundary_max) - e_star).max(0.0);

    let rhs =
        (inputs.q + e_r).sqrt() / problem.eta() + (-alpha * inputs.q).exp() / ball_mass * integral;
    let mc_slack = 3.0 / (m as f64).sqrt();
    Ok(LaplaceCheck {
        lhs,
        rhs,
        satisfied: lhs <= rhs * (1.0 + mc_slack),
        mc_slack,
        prox_point: star,
        e_r,
        ball_mass,
    })
}

fn boundary_points(center: &[f64], r: f64) -> Vec<Vec<f64>> {
    match center.len() {
        1 => vec![vec![center[0] - r], vec![center[0] + r]],
        2 => (0..LAPLACE_BOUNDARY_GRID)
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / LAPLACE_BOUNDARY_GRID as f64;
                vec![center[0] + r * t.cos(), center[1] + r * t.sin()]
            })
            .collect(),
        _ => Vec::new(),
    }
}

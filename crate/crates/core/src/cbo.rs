//! Interacting-particle CBO dynamics and the consensus-point trajectory.
//!
//! One step maps every particle to
//! `X - dt*lambda*(X - c) + sigma * diag(X - c) * B` with
//! `B ~ N(0, dt I)` drawn from the [`Stream::Cbo`] counter at
//! `(step, particle)`. The tracked iterate at step `k >= 1` is the consensus
//! point of the post-step ensemble; step 0 records the starting point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{consensus_point, WeightedEnsemble};
use crate::noise::{standard_normal, standard_normal_into, Stream};
use crate::objectives::Objective;
use crate::{Error, Result};

/// Relative tolerance for the `sigma_tilde^2 = tau / (2 alpha)` coupling.
pub const COUPLING_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub dt: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub n_particles: usize,
    pub n_steps: usize,
    pub tau: Option<f64>,
    pub sigma_tilde: Option<f64>,
    /// Require `sigma_tilde^2 = tau / (2 alpha)`.
    pub coupled: bool,
    pub init_mean: Vec<f64>,
    pub init_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Validation {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl SchemeConfig {
    /// Defaults to `dt = 0.1, lambda = 1, sigma = 1.6, alpha = 100, N = 200,
    /// K = 250` and `init_std = sqrt(0.5)`.
    pub fn new(init_mean: Vec<f64>) -> Self {
        Self {
            dt: 0.1,
            lambda: 1.0,
            sigma: 1.6,
            alpha: 100.0,
            n_particles: 200,
            n_steps: 250,
            tau: None,
            sigma_tilde: None,
            coupled: false,
            init_mean,
            init_std: 0.5f64.sqrt(),
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.init_mean.len()
    }

    /// Sets `tau` and the matching `sigma_tilde = sqrt(tau / (2 alpha))`.
    pub fn with_coupled_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self.sigma_tilde = Some((tau / (2.0 * self.alpha)).sqrt());
        self.coupled = true;
        self
    }

    pub fn check(&self, obj: Option<&Objective>) -> Validation {
        let mut v = Validation::default();
        let mut err = |msg: String| v.errors.push(msg);
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.dt) {
            err(format!("dt must be finite and positive, got {}", self.dt));
        }
        if !positive(self.lambda) {
            err(format!(
                "lambda must be finite and positive, got {}",
                self.lambda
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            err(format!(
                "sigma must be finite and non-negative, got {}",
                self.sigma
            ));
        }
        if !positive(self.alpha) {
            err(format!(
                "alpha must be finite and positive, got {}",
                self.alpha
            ));
        }
        if self.n_particles == 0 {
            err("n_particles must be positive".into());
        }
        if self.n_steps == 0 {
            err("n_steps must be positive".into());
        }
        if !positive(self.init_std) {
            err(format!(
                "init_std must be finite and positive, got {}",
                self.init_std
            ));
        }
        if self.init_mean.is_empty() || self.init_mean.iter().any(|x| !x.is_finite()) {
            err("init_mean must be a non-empty finite point".into());
        }
        if self.dt * self.lambda > 1.0 + 1e-12 {
            err(format!(
                "drift overshoot: dt*lambda = {} exceeds 1",
                self.dt * self.lambda
            ));
        }
        if let Some(tau) = self.tau {
            if !positive(tau) {
                err(format!("tau must be finite and positive, got {tau}"));
            }
        }
        if let Some(st) = self.sigma_tilde {
            if !(st >= 0.0 && st.is_finite()) {
                err(format!(
                    "sigma_tilde must be finite and non-negative, got {st}"
                ));
            }
        }
        if self.coupled {
            match (self.tau, self.sigma_tilde) {
                (Some(tau), Some(st)) => {
                    let target = tau / (2.0 * self.alpha);
                    if ((st * st - target) / target).abs() > COUPLING_RTOL {
                        err(format!(
                            "coupling requires sigma_tilde^2 = tau/(2 alpha) = {target:e}, got {:e}",
                            st * st
                        ));
                    }
                }
                _ => err("coupling requires both tau and sigma_tilde".into()),
            }
        }
        if let Some(obj) = obj {
            if !self.init_mean.is_empty() && self.init_mean.len() != obj.dim {
                err(format!(
                    "init_mean has dimension {} but `{}` has dimension {}",
                    self.init_mean.len(),
                    obj.name,
                    obj.dim
                ));
            }
            let lam = obj.constants.lambda_semiconvex;
            if let Some(tau) = self.tau {
                if lam < 0.0 && tau >= 1.0 / (-2.0 * lam) {
                    err(format!(
                        "tau = {tau} must be below 1/(-2 Lambda) = {} for Lambda = {lam}",
                        1.0 / (-2.0 * lam)
                    ));
                }
                if 1.0 + tau * lam <= 0.0 {
                    err(format!(
                        "prox not well-posed: 1 + tau*Lambda = {}",
                        1.0 + tau * lam
                    ));
                }
            }
        }
        if let Some(tau) = self.tau {
            let d = self.dim() as f64;
            let guide = d * d.ln() / tau;
            if d > 1.0 && self.alpha < guide {
                v.warnings.push(format!(
                    "alpha = {} is below the guidance (1/tau) d log d = {guide:.4}",
                    self.alpha
                ));
            }
        }
        v
    }

    /// Returns the warnings, or every error at once.
    pub fn validated(&self, obj: Option<&Objective>) -> Result<Vec<String>> {
        let v = self.check(obj);
        if v.errors.is_empty() {
            Ok(v.warnings)
        } else {
            Err(Error::Config(v.errors))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub dim: usize,
    /// Row-major `N x d` positions.
    pub positions: Vec<f64>,
    pub step: usize,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Cbo,
    Ch,
    ImplicitCh,
    Mms,
    Gd,
    Langevin,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Cbo => "cbo",
            Scheme::Ch => "ch",
            Scheme::ImplicitCh => "implicit_ch",
            Scheme::Mms => "mms",
            Scheme::Gd => "gd",
            Scheme::Langevin => "langevin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scheme: Scheme,
    /// `K + 1` tracked iterates.
    pub iterates: Vec<Vec<f64>>,
    pub objective_values: Vec<f64>,
    pub config: SchemeConfig,
    /// First-order residual of each prox solve, for prox-based schemes.
    pub prox_residuals: Option<Vec<f64>>,
}

impl RunRecord {
    pub fn last(&self) -> &[f64] {
        self.iterates
            .last()
            .expect("runs record at least one iterate")
    }
}

/// Where a trajectory starts.
#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    /// A draw from `rho_0` on the dedicated initial-point stream.
    Draw,
    /// The consensus point of the initial CBO ensemble.
    EnsembleConsensus,
    Point(Vec<f64>),
}

/// `x_0 = init_mean + init_std * xi`.
pub fn initial_point(cfg: &SchemeConfig) -> Vec<f64> {
    let xi = standard_normal(cfg.seed, Stream::InitPoint, 0, 0, 0, cfg.dim());
    cfg.init_mean
        .iter()
        .zip(xi)
        .map(|(m, z)| m + cfg.init_std * z)
        .collect()
}

/// `N` i.i.d. draws from `rho_0`.
pub fn initial_ensemble(cfg: &SchemeConfig) -> Ensemble {
    let d = cfg.dim();
    let mut positions = vec![0.0; cfg.n_particles * d];
    positions
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, row)| {
            standard_normal_into(cfg.seed, Stream::InitEnsemble, 0, 0, i as u64, row);
            for (x, m) in row.iter_mut().zip(&cfg.init_mean) {
                *x = m + cfg.init_std * *x;
            }
        });
    Ensemble {
        dim: d,
        positions,
        step: 0,
    }
}

pub fn resolve_start(obj: &Objective, cfg: &SchemeConfig, start: &Start) -> Result<Vec<f64>> {
    match start {
        Start::Draw => Ok(initial_point(cfg)),
        Start::EnsembleConsensus => {
            let ens = initial_ensemble(cfg);
            ensemble_consensus(&ens, obj, cfg.alpha)
        }
        Start::Point(p) => {
            if p.len() != obj.dim {
                return Err(Error::InvalidInput("start point dimension mismatch".into()));
            }
            Ok(p.clone())
        }
    }
}

/// Objective values of row-major points, evaluated in parallel.
pub fn evaluate(obj: &Objective, points: &[f64], dim: usize) -> Vec<f64> {
    points.par_chunks(dim).map(|p| obj.eval(p)).collect()
}

pub fn ensemble_consensus(ens: &Ensemble, obj: &Objective, alpha: f64) -> Result<Vec<f64>> {
    let values = evaluate(obj, &ens.positions, ens.dim);
    consensus_point(&WeightedEnsemble::new(
        &ens.positions,
        &values,
        ens.dim,
        alpha,
    )?)
}

/// `B_k^i ~ N(0, dt I)` for step `k >= 1` and particle `i`.
pub fn noise_matrix(step: usize, particle: usize, cfg: &SchemeConfig) -> Vec<f64> {
    let mut b = standard_normal(
        cfg.seed,
        Stream::Cbo,
        step as u64,
        0,
        particle as u64,
        cfg.dim(),
    );
    let s = cfg.dt.sqrt();
    for v in &mut b {
        *v *= s;
    }
    b
}

fn advance(ens: &Ensemble, c: &[f64], cfg: &SchemeConfig) -> Result<Ensemble> {
    let d = ens.dim;
    let step = ens.step + 1;
    let drift = cfg.dt * cfg.lambda;
    let sqrt_dt = cfg.dt.sqrt();
    let mut positions = ens.positions.clone();
    positions
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, row)| {
            let mut b = vec![0.0; d];
            standard_normal_into(cfg.seed, Stream::Cbo, step as u64, 0, i as u64, &mut b);
            for ((x, cj), bj) in row.iter_mut().zip(c).zip(&b) {
                let diff = *x - cj;
                // At dt*lambda = 1 land on c exactly instead of x - (x - c).
                let moved = if drift == 1.0 { *cj } else { *x - drift * diff };
                *x = moved + cfg.sigma * diff * (sqrt_dt * bj);
            }
        });
    if positions.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("CBO ensemble at step {step}")));
    }
    Ok(Ensemble {
        dim: d,
        positions,
        step,
    })
}

/// One CBO update; returns the new ensemble and the consensus point of the
/// ensemble it was computed from.
pub fn cbo_step(
    ens: &Ensemble,
    obj: &Objective,
    cfg: &SchemeConfig,
) -> Result<(Ensemble, Vec<f64>)> {
    if ens.step >= cfg.n_steps {
        return Err(Error::InvalidInput(format!(
            "ensemble already at step {} of {}",
            ens.step, cfg.n_steps
        )));
    }
    let c = ensemble_consensus(ens, obj, cfg.alpha)?;
    let next = advance(ens, &c, cfg)?;
    Ok((next, c))
}

pub fn cbo_run(obj: &Objective, cfg: &SchemeConfig) -> Result<RunRecord> {
    cbo_run_from(obj, cfg, &Start::Draw)
}

pub fn cbo_run_from(obj: &Objective, cfg: &SchemeConfig, start: &Start) -> Result<RunRecord> {
    cfg.validated(Some(obj))?;
    let x0 = resolve_start(obj, cfg, start)?;
    let mut ens = initial_ensemble(cfg);
    let mut c = ensemble_consensus(&ens, obj, cfg.alpha)?;
    let mut iterates = Vec::with_capacity(cfg.n_steps + 1);
    iterates.push(x0);
    for _ in 0..cfg.n_steps {
        ens = advance(&ens, &c, cfg)?;
        c = ensemble_consensus(&ens, obj, cfg.alpha)?;
        iterates.push(c.clone());
    }
    let objective_values = iterates.iter().map(|x| obj.eval(x)).collect();
    Ok(RunRecord {
        scheme: Scheme::Cbo,
        iterates,
        objective_values,
        config: cfg.clone(),
        prox_residuals: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let obj = Objective::by_name("canyon3").unwrap();
        let cfg = SchemeConfig::new(vec![8.0, 8.0]);
        assert!(cfg.check(Some(&obj)).errors.is_empty());
    }

    #[test]
    fn collects_every_error() {
        let mut cfg = SchemeConfig::new(vec![0.0]);
        cfg.dt = -1.0;
        cfg.n_particles = 0;
        cfg.init_std = 0.0;
        assert_eq!(cfg.check(None).errors.len(), 3);
    }

    #[test]
    fn coupled_tau_satisfies_relation() {
        let cfg = SchemeConfig::new(vec![0.0, 0.0]).with_coupled_tau(0.03);
        assert!(cfg.check(None).errors.is_empty());
        let mut bad = cfg.clone();
        bad.sigma_tilde = Some(0.5);
        assert!(!bad.check(None).errors.is_empty());
    }

    #[test]
    fn step_past_horizon_is_rejected() {
        let obj = Objective::by_name("quadratic-1").unwrap();
        let mut cfg = SchemeConfig::new(vec![0.0]);
        cfg.n_steps = 1;
        let ens = Ensemble {
            dim: 1,
            positions: vec![0.0],
            step: 1,
        };
        assert!(cbo_step(&ens, &obj, &cfg).is_err());
    }
}

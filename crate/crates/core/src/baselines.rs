//! Gradient descent and annealed overdamped Langevin dynamics.

use serde::{Deserialize, Serialize};

use crate::cbo::{RunRecord, Scheme, SchemeConfig};
use crate::noise::{standard_normal_into, Stream};
use crate::objectives::Objective;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `beta_t = scale * log(t + 1)`.
    Log,
    /// `beta_t = scale`.
    Constant,
}

/// Inverse temperature schedule. `scale = inf` switches the noise off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub kind: ScheduleKind,
    pub scale: f64,
}

impl AnnealSchedule {
    pub fn log(scale: f64) -> Self {
        Self {
            kind: ScheduleKind::Log,
            scale,
        }
    }

    pub fn constant(scale: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            scale,
        }
    }

    pub fn beta(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Log => self.scale * (t + 1.0).ln(),
            ScheduleKind::Constant => self.scale,
        }
    }
}

fn trajectory_config(x0: &[f64], step: f64, n_steps: usize, seed: u64) -> SchemeConfig {
    let mut cfg = SchemeConfig::new(x0.to_vec());
    cfg.dt = step;
    cfg.lambda = 1.0 / step;
    cfg.sigma = 0.0;
    cfg.n_particles = 1;
    cfg.n_steps = n_steps;
    cfg.seed = seed;
    cfg
}

fn check_inputs(obj: &Objective, x0: &[f64], step: f64, n_steps: usize) -> Result<()> {
    if x0.len() != obj.dim {
        return Err(Error::InvalidInput("start point dimension mismatch".into()));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidInput(format!(
            "step must be finite and positive, got {step}"
        )));
    }
    if n_steps == 0 {
        return Err(Error::InvalidInput("n_steps must be positive".into()));
    }
    Ok(())
}

/// `x_k = x_{k-1} - step * grad E(x_{k-1})`.
pub fn gd_run(obj: &Objective, x0: &[f64], step: f64, n_steps: usize) -> Result<RunRecord> {
    check_inputs(obj, x0, step, n_steps)?;
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut iterates = Vec::with_capacity(n_steps + 1);
    iterates.push(x.clone());
    for k in 1..=n_steps {
        obj.grad_into(&x, &mut g);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient descent at step {k}")));
        }
        iterates.push(x.clone());
    }
    let objective_values = iterates.iter().map(|p| obj.eval(p)).collect();
    Ok(RunRecord {
        scheme: Scheme::Gd,
        iterates,
        objective_values,
        config: trajectory_config(x0, step, n_steps, 0),
        prox_residuals: None,
    })
}

/// Euler-Maruyama for `dX = -grad E dt + sqrt(2/beta_t) dB`.
///
/// Step `k` (producing `X_k`, `k >= 1`) evaluates the schedule at `t = k*dt`,
/// i.e. one step later than the left endpoint, since `beta_0 = 0` for the
/// logarithmic schedule.
pub fn langevin_run(
    obj: &Objective,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    schedule: AnnealSchedule,
    seed: u64,
) -> Result<RunRecord> {
    check_inputs(obj, x0, dt, n_steps)?;
    if !(schedule.scale > 0.0) {
        return Err(Error::InvalidInput(
            "schedule scale must be positive".into(),
        ));
    }
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut iterates = Vec::with_capacity(n_steps + 1);
    iterates.push(x.clone());
    for k in 1..=n_steps {
        let beta = schedule.beta(k as f64 * dt);
        let amp = (2.0 * dt / beta).sqrt();
        obj.grad_into(&x, &mut g);
        standard_normal_into(seed, Stream::Langevin, k as u64, 0, 0, &mut xi);
        for ((xj, gj), zj) in x.iter_mut().zip(&g).zip(&xi) {
            *xj = *xj - dt * gj + amp * zj;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("Langevin iterate at step {k}")));
        }
        iterates.push(x.clone());
    }
    let objective_values = iterates.iter().map(|p| obj.eval(p)).collect();
    Ok(RunRecord {
        scheme: Scheme::Langevin,
        iterates,
        objective_values,
        config: trajectory_config(x0, dt, n_steps, seed),
        prox_residuals: None,
    })
}

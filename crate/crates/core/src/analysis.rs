//! Residual decomposition of the CBO consensus trajectory and empirical
//! rate checks for the CBO-to-hopping and hopping-to-prox discrepancies.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cbo::{
    cbo_run_from, ensemble_consensus, initial_ensemble, resolve_start, RunRecord, SchemeConfig,
    Start,
};
use crate::hopping::{alpha_zero, ch_run_from, implicit_ch_run};
use crate::noise::{rng_at, Stream};
use crate::objectives::Objective;
use crate::{dist, norm, Error, Result};

pub const RECONSTRUCTION_TOL: f64 = 1e-10;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// CBO, consensus hopping and implicit hopping sharing `x_0` and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub cbo: RunRecord,
    pub ch: RunRecord,
    pub ich: RunRecord,
}

pub fn coupled_triple_run(obj: &Objective, cfg: &SchemeConfig) -> Result<Triple> {
    coupled_triple_from(obj, cfg, &Start::Draw)
}

pub fn coupled_triple_from(obj: &Objective, cfg: &SchemeConfig, start: &Start) -> Result<Triple> {
    if !cfg.coupled || cfg.tau.is_none() || cfg.sigma_tilde.is_none() {
        return Err(Error::ConfigMismatch(
            "coupled runs need tau, sigma_tilde and the coupling flag".into(),
        ));
    }
    cfg.validated(Some(obj))?;
    let x0 = Start::Point(resolve_start(obj, cfg, start)?);
    let cbo = cbo_run_from(obj, cfg, &x0)?;
    let ch = ch_run_from(obj, cfg, &x0)?;
    let ich = implicit_ch_run(obj, cfg, &ch)?;
    Ok(Triple { cbo, ch, ich })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualStep {
    pub k: usize,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub g3: Vec<f64>,
    pub g: Vec<f64>,
    pub g1_norm: f64,
    pub g2_norm: f64,
    pub g3_norm: f64,
    pub g_norm: f64,
    pub reconstruction_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRecord {
    pub tau: f64,
    pub steps: Vec<ResidualStep>,
}

impl ResidualRecord {
    pub fn max_reconstruction_residual(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.reconstruction_residual)
            .fold(0.0, f64::max)
    }

    pub fn median_g_norm(&self) -> f64 {
        median(&self.steps.iter().map(|s| s.g_norm).collect::<Vec<_>>())
    }
}

/// Splits each CBO step into a gradient step plus
/// `g = g1 - g2 + g3` with
/// `g1 = x^CH_{k-1} - x^CBO_{k-1}`,
/// `g2 = tau (grad E(x~_k) - grad E(x^CBO_{k-1}))`,
/// `g3 = x^CBO_k - x~_k`.
pub fn decompose_residual(triple: &Triple, obj: &Objective, tau: f64) -> Result<ResidualRecord> {
    let (cbo, ch, ich) = (
        &triple.cbo.iterates,
        &triple.ch.iterates,
        &triple.ich.iterates,
    );
    if cbo.len() != ch.len() || cbo.len() != ich.len() {
        return Err(Error::ConfigMismatch(
            "trajectories have different lengths".into(),
        ));
    }
    let mut steps = Vec::with_capacity(cbo.len().saturating_sub(1));
    for k in 1..cbo.len() {
        let grad_prev = obj.grad(&cbo[k - 1]);
        let grad_ich = obj.grad(&ich[k]);
        let g1: Vec<f64> = ch[k - 1]
            .iter()
            .zip(&cbo[k - 1])
            .map(|(a, b)| a - b)
            .collect();
        let g2: Vec<f64> = grad_ich
            .iter()
            .zip(&grad_prev)
            .map(|(a, b)| tau * (a - b))
            .collect();
        let g3: Vec<f64> = cbo[k].iter().zip(&ich[k]).map(|(a, b)| a - b).collect();
        let g: Vec<f64> = (0..g1.len()).map(|j| g1[j] - g2[j] + g3[j]).collect();
        let rebuilt: Vec<f64> = (0..g.len())
            .map(|j| cbo[k - 1][j] - tau * grad_prev[j] + g[j])
            .collect();
        let residual = dist(&rebuilt, &cbo[k]);
        if !(residual <= RECONSTRUCTION_TOL) {
            return Err(Error::IdentityViolation { step: k, residual });
        }
        steps.push(ResidualStep {
            k,
            g1_norm: norm(&g1),
            g2_norm: norm(&g2),
            g3_norm: norm(&g3),
            g_norm: norm(&g),
            g1,
            g2,
            g3,
            g,
            reconstruction_residual: residual,
        });
    }
    Ok(ResidualRecord { tau, steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    NParticles,
    LambdaGap,
    SigmaSqrtDt,
    Tau,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "n_particles" => Ok(Axis::NParticles),
            "lambda_gap" => Ok(Axis::LambdaGap),
            "sigma_sqrt_dt" => Ok(Axis::SigmaSqrtDt),
            "tau" => Ok(Axis::Tau),
            _ => Err(Error::InvalidInput(format!("unknown scaling axis `{s}`"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::NParticles => "n_particles",
            Axis::LambdaGap => "lambda_gap",
            Axis::SigmaSqrtDt => "sigma_sqrt_dt",
            Axis::Tau => "tau",
        }
    }

    /// Sign of the expected log-log slope.
    fn direction(&self) -> f64 {
        match self {
            Axis::NParticles => -1.0,
            _ => 1.0,
        }
    }

    /// Grid point at which the swept term is negligible.
    fn floor_value(&self, grid: &[f64]) -> f64 {
        let (lo, hi) = grid
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(*v), hi.max(*v))
            });
        match self {
            Axis::NParticles => 16.0 * hi,
            Axis::LambdaGap | Axis::SigmaSqrtDt => 0.0,
            Axis::Tau => lo / 16.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub swept_parameter: String,
    pub values: Vec<f64>,
    /// Median over seeds of the measured discrepancy.
    pub errors: Vec<f64>,
    pub fitted_slope: f64,
    /// Bootstrap 90% interval.
    pub slope_ci: (f64, f64),
    pub seeds: usize,
    /// `per_seed_errors[i][s]` for grid value `i` and seed offset `s`.
    pub per_seed_errors: Vec<Vec<f64>>,
    pub floor_value: f64,
    pub floor_error: f64,
    pub monotone_inversions: usize,
    /// Fraction of runs above `C90 * value^slope`, `C90` the 90th percentile
    /// of the per-run constants.
    pub violation_fraction: f64,
}

/// Configuration actually run at one grid value.
pub fn sweep_config(axis: Axis, base: &SchemeConfig, value: f64) -> SchemeConfig {
    let mut cfg = base.clone();
    match axis {
        Axis::NParticles => cfg.n_particles = value.round() as usize,
        Axis::LambdaGap => cfg.lambda = (1.0 - value) / cfg.dt,
        Axis::SigmaSqrtDt => cfg.sigma = value / cfg.dt.sqrt(),
        Axis::Tau => {
            cfg.alpha = alpha_zero(value, cfg.dim());
            cfg = cfg.with_coupled_tau(value);
        }
    }
    cfg
}

/// Discrepancy measured for one grid value and seed.
///
/// For the CBO axes this is `max_k |x^CBO_k - x^CH_k|` with both schemes
/// started from the consensus point of the initial CBO ensemble; for `tau`
/// it is `max_k |x^CH_k - x~_k|` from a shared draw of `rho_0`.
pub fn sweep_error(axis: Axis, obj: &Objective, cfg: &SchemeConfig) -> Result<f64> {
    let max_gap = |a: &RunRecord, b: &RunRecord| {
        a.iterates
            .iter()
            .zip(&b.iterates)
            .skip(1)
            .map(|(x, y)| dist(x, y))
            .fold(0.0, f64::max)
    };
    match axis {
        Axis::Tau => {
            let ch = ch_run_from(obj, cfg, &Start::Draw)?;
            let ich = implicit_ch_run(obj, cfg, &ch)?;
            Ok(max_gap(&ch, &ich))
        }
        _ => {
            let c0 = ensemble_consensus(&initial_ensemble(cfg), obj, cfg.alpha)?;
            let start = Start::Point(c0);
            let cbo = cbo_run_from(obj, cfg, &start)?;
            let ch = ch_run_from(obj, cfg, &start)?;
            Ok(max_gap(&cbo, &ch))
        }
    }
}

fn errors_at(
    axis: Axis,
    obj: &Objective,
    base: &SchemeConfig,
    value: f64,
    seeds: usize,
) -> Result<Vec<f64>> {
    (0..seeds)
        .into_par_iter()
        .map(|s| {
            let mut cfg = sweep_config(axis, base, value);
            cfg.seed = base.seed.wrapping_add(s as u64);
            sweep_error(axis, obj, &cfg)
        })
        .collect()
}

pub fn scaling_sweep(
    axis: Axis,
    obj: &Objective,
    base: &SchemeConfig,
    grid: &[f64],
    seeds: usize,
) -> Result<ScalingReport> {
    if grid.len() < 4 {
        return Err(Error::InvalidInput(
            "scaling grid needs at least 4 values".into(),
        ));
    }
    if grid.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(
            "scaling grid values must be finite and positive".into(),
        ));
    }
    let increasing = grid.windows(2).all(|w| w[0] < w[1]);
    let decreasing = grid.windows(2).all(|w| w[0] > w[1]);
    if !increasing && !decreasing {
        return Err(Error::InvalidInput(
            "scaling grid must be strictly monotone".into(),
        ));
    }
    let (lo, hi) = (
        grid[0].min(grid[grid.len() - 1]),
        grid[0].max(grid[grid.len() - 1]),
    );
    if hi / lo < 8.0 {
        return Err(Error::InvalidInput(
            "scaling grid must span a factor of at least 8".into(),
        ));
    }
    if axis == Axis::LambdaGap && hi >= 1.0 {
        return Err(Error::InvalidInput(
            "relative lambda gap must stay below 1".into(),
        ));
    }
    if seeds == 0 {
        return Err(Error::InvalidInput("seeds must be positive".into()));
    }

    let per_seed: Vec<Vec<f64>> = grid
        .iter()
        .map(|v| errors_at(axis, obj, base, *v, seeds))
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = per_seed.iter().map(|e| median(e)).collect();
    if errors.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput(
            "measured errors must be positive for a log-log fit".into(),
        ));
    }

    let floor_value = axis.floor_value(grid);
    let floor_error = median(&errors_at(axis, obj, base, floor_value, seeds)?);
    let smallest = errors.iter().cloned().fold(f64::INFINITY, f64::min);
    if floor_error > 0.5 * smallest {
        return Err(Error::RegimeInvalid {
            floor: floor_error,
            smallest,
        });
    }

    let logs: Vec<f64> = grid.iter().map(|v| v.ln()).collect();
    let fitted_slope = fit_slope(&logs, &errors.iter().map(|e| e.ln()).collect::<Vec<_>>());
    let slope_ci = bootstrap_ci(&logs, &per_seed, base.seed);

    let monotone_inversions = errors
        .windows(2)
        .zip(grid.windows(2))
        .filter(|(e, v)| axis.direction() * (e[1] - e[0]) * (v[1] - v[0]) < 0.0)
        .count();

    let mut constants: Vec<f64> = per_seed
        .iter()
        .zip(grid)
        .flat_map(|(errs, v)| errs.iter().map(move |e| e / v.powf(fitted_slope)))
        .collect();
    constants.sort_by(f64::total_cmp);
    let c90 = quantile_sorted(&constants, 0.9);
    let violation_fraction =
        constants.iter().filter(|c| **c > c90).count() as f64 / constants.len() as f64;

    Ok(ScalingReport {
        swept_parameter: axis.as_str().to_string(),
        values: grid.to_vec(),
        errors,
        fitted_slope,
        slope_ci,
        seeds,
        per_seed_errors: per_seed,
        floor_value,
        floor_error,
        monotone_inversions,
        violation_fraction,
    })
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn bootstrap_ci(logs: &[f64], per_seed: &[Vec<f64>], seed: u64) -> (f64, f64) {
    let mut rng = rng_at(seed, Stream::Resample, 0, 0, 0);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut buf = Vec::new();
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let meds: Vec<f64> = per_seed
            .iter()
            .map(|errs| {
                buf.clear();
                buf.extend((0..errs.len()).map(|_| errs[rng.random_range(0..errs.len())]));
                median(&buf).ln()
            })
            .collect();
        slopes.push(fit_slope(logs, &meds));
    }
    slopes.sort_by(f64::total_cmp);
    (
        quantile_sorted(&slopes, 0.05),
        quantile_sorted(&slopes, 0.95),
    )
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Linear-interpolation quantile of an ascending slice.
fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = p * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let x: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0]
            .iter()
            .map(|v| (3.0 * v.powf(-0.5)).ln())
            .collect();
        assert!((fit_slope(&x, &y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn axis_names_round_trip() {
        for a in [
            Axis::NParticles,
            Axis::LambdaGap,
            Axis::SigmaSqrtDt,
            Axis::Tau,
        ] {
            assert_eq!(Axis::parse(a.as_str()).unwrap(), a);
        }
        assert!(Axis::parse("dt").is_err());
    }
}

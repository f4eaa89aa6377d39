//! Gibbs-weighted consensus points of discrete measures.
//!
//! Weights are `exp(-alpha (E_i - min_j E_j))`. The weighted mean is
//! accumulated as an offset from the lowest-valued point in ascending index
//! order, so identical points reproduce themselves exactly and the result
//! does not depend on how the values were computed.

use serde::Serialize;

use crate::objectives::{GrowthBranch, Objective};
use crate::{Error, Result};

/// Row-major `N x d` points with their objective values.
#[derive(Debug, Clone, Copy)]
pub struct WeightedEnsemble<'a> {
    points: &'a [f64],
    values: &'a [f64],
    dim: usize,
    alpha: f64,
}

impl<'a> WeightedEnsemble<'a> {
    pub fn new(points: &'a [f64], values: &'a [f64], dim: usize, alpha: f64) -> Result<Self> {
        if dim == 0 || values.is_empty() || points.len() != values.len() * dim {
            return Err(Error::InvalidInput(format!(
                "ensemble shape mismatch: {} coordinates, {} values, dimension {dim}",
                points.len(),
                values.len()
            )));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "alpha must be finite and positive, got {alpha}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ensemble values".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ensemble points".into()));
        }
        Ok(Self {
            points,
            values,
            dim,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn point(&self, i: usize) -> &'a [f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Unnormalized shifted weights; the minimizing particle has weight 1.
    fn raw_weights(&self) -> Vec<f64> {
        let m = self.values[self.argmin()];
        self.values
            .iter()
            .map(|v| (-self.alpha * (v - m)).exp())
            .collect()
    }

    /// Normalized Gibbs weights.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = self.raw_weights();
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        w
    }
}

pub fn consensus_point(ens: &WeightedEnsemble) -> Result<Vec<f64>> {
    let d = ens.dim;
    let w = ens.raw_weights();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::WeightUnderflow);
    }
    let reference = ens.point(ens.argmin());
    let mut acc = vec![0.0; d];
    for (i, wi) in w.iter().enumerate() {
        if *wi == 0.0 {
            continue;
        }
        for (a, (x, r)) in acc.iter_mut().zip(ens.point(i).iter().zip(reference)) {
            *a += wi * (x - r);
        }
    }
    Ok(reference
        .iter()
        .zip(&acc)
        .map(|(r, a)| r + a / total)
        .collect())
}

/// Equal-weight mean of row-major points; the `alpha = 0` path.
pub fn plain_mean(points: &[f64], dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
        return Err(Error::InvalidInput(
            "plain mean needs a non-empty N x d array".into(),
        ));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ensemble points".into()));
    }
    let n = points.len() / dim;
    let mut acc = vec![0.0; dim];
    for row in points.chunks_exact(dim) {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x;
        }
    }
    Ok(acc.into_iter().map(|a| a / n as f64).collect())
}

/// `-(1/alpha) log((1/N) sum_i exp(-alpha E_i))`.
pub fn gibbs_free_energy(ens: &WeightedEnsemble) -> f64 {
    let m = ens.values[ens.argmin()];
    let total: f64 = ens.raw_weights().iter().sum();
    let n = ens.len() as f64;
    m - (total / n).ln() / ens.alpha
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    /// May be `+inf` when `exp(alpha (upper - min))` overflows.
    pub rhs: f64,
    pub satisfied: bool,
}

/// `|x_alpha|^2 <= b1 + b2 * mean_i |X_i|^2` with the constants of the chosen
/// growth branch. The comparison is made in log space so an overflowing
/// `b2` still gives a meaningful verdict.
pub fn consensus_bound_check(ens: &WeightedEnsemble, obj: &Objective) -> Result<BoundCheck> {
    let branch = obj
        .constants
        .growth_branch()
        .ok_or_else(|| Error::MissingConstants(obj.name.clone()))?;
    let c = consensus_point(ens)?;
    let lhs: f64 = c.iter().map(|v| v * v).sum();
    let second_moment = ens.points.iter().map(|v| v * v).sum::<f64>() / ens.len() as f64;
    let alpha = ens.alpha;
    let (b1, log_b2) = match branch {
        GrowthBranch::Bounded { upper } => {
            let e_min = obj
                .min_value
                .ok_or_else(|| Error::MissingConstants(obj.name.clone()))?;
            (0.0, alpha * (upper - e_min))
        }
        GrowthBranch::Quadratic { c3, c4 } => {
            let b2 = 2.0 * obj.constants.c2 / c3 * (1.0 + 1.0 / (alpha * c3 * c4 * c4));
            (c4 * c4 + b2, b2.ln())
        }
    };
    // 0 * inf would be NaN when b2 overflows.
    let rhs = if second_moment == 0.0 {
        b1
    } else {
        b1 + log_b2.exp() * second_moment
    };
    let satisfied = if lhs <= rhs {
        true
    } else if b1 == 0.0 && second_moment > 0.0 {
        lhs.ln() <= log_b2 + second_moment.ln()
    } else {
        false
    };
    Ok(BoundCheck {
        lhs,
        rhs,
        satisfied,
    })
}

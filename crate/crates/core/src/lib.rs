//! Consensus-based optimization (CBO) and the chain of schemes it relaxes:
//! consensus hopping, implicit proximal hopping, the minimizing movement
//! scheme, gradient descent and annealed Langevin dynamics.
//!
//! All randomness is drawn from counter-addressed streams keyed by
//! `(seed, stream, step, index)`, so every run is reproducible bit for bit
//! regardless of how many worker threads evaluate the particles.
//!
//! ```
//! use cbo_core::{cbo::{cbo_run, SchemeConfig}, objectives::Objective};
//!
//! let obj = Objective::by_name("quadratic-2").unwrap();
//! let mut cfg = SchemeConfig::new(vec![1.0, 1.0]);
//! cfg.n_steps = 50;
//! let run = cbo_run(&obj, &cfg).unwrap();
//! let last = run.iterates.last().unwrap();
//! assert!(last.iter().all(|v| v.abs() < 0.5));
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
pub mod cbo;
pub mod consensus;
mod error;
pub mod harness;
pub mod hopping;
pub mod noise;
pub mod objectives;

pub use error::{Error, Result};

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#![allow(dead_code)]

use rand::Rng;

/// Double-double value `hi + lo`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    pub fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (hi, lo) = two_sum(s, e + self.lo + o.lo);
        Dd { hi, lo }
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul(Dd::from(-q1)));
        let q2 = r.hi / o.hi;
        let (hi, lo) = two_sum(q1, q2);
        Dd { hi, lo }
    }

    /// `exp(hi + lo)` to about 1e-16 relative.
    pub fn exp(self) -> Dd {
        let e = self.hi.exp();
        Dd::from(e).mul(Dd::from(1.0).add(Dd::from(self.lo)))
    }
}

/// Weighted mean with weights `exp(-alpha (v_i - min v))`, summed in
/// double-double in index order with no reference-point shift.
pub fn oracle_consensus(points: &[f64], values: &[f64], dim: usize, alpha: f64) -> Vec<f64> {
    let m = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<Dd> = values
        .iter()
        .map(|v| {
            let diff = Dd::from(*v).add(Dd::from(-m));
            diff.mul(Dd::from(-alpha)).exp()
        })
        .collect();
    let total = w.iter().fold(Dd::default(), |a, b| a.add(*b));
    (0..dim)
        .map(|j| {
            let num = w.iter().enumerate().fold(Dd::default(), |a, (i, wi)| {
                a.add(wi.mul(Dd::from(points[i * dim + j])))
            });
            num.div(total).hi
        })
        .collect()
}

pub struct RandomEnsemble {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    pub dim: usize,
    pub alpha: f64,
}

impl RandomEnsemble {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Largest point norm, the scale for absolute tolerances.
    pub fn scale(&self) -> f64 {
        self.points
            .chunks_exact(self.dim)
            .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(1.0, f64::max)
    }
}

/// `N <= max_n` points uniform in `[-width, width]^d` with values drawn
/// uniformly from `[0, 10)` and `alpha` log-uniform in `[1e-2, 1e3]`.
pub fn random_ensemble(
    rng: &mut impl Rng,
    max_n: usize,
    max_d: usize,
    width: f64,
) -> RandomEnsemble {
    let n = rng.random_range(1..=max_n);
    let dim = rng.random_range(1..=max_d);
    let points = (0..n * dim)
        .map(|_| rng.random_range(-width..width))
        .collect();
    let values = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    let alpha = 10f64.powf(rng.random_range(-2.0..3.0));
    RandomEnsemble {
        points,
        values,
        dim,
        alpha,
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

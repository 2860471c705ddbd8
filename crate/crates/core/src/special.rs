//! Removable-singularity helpers for the exponential integrals that show up
//! in every moment and error formula, plus compensated summation.
//!
//! All of the closed forms are written as `(e^z - 1)/z` style quotients that
//! are analytic at `z = 0`. Evaluating them naively near zero cancels
//! catastrophically, so each helper switches to its Taylor series there.

/// Below this magnitude `phi1` uses its 4th-order Taylor polynomial.
pub const TAYLOR_SWITCH: f64 = 1e-6;

/// Below this magnitude the higher divided differences use their power series.
const SERIES_SWITCH: f64 = 0.5;
const SERIES_TERMS: usize = 24;

/// `(e^x - 1) / x`, equal to 1 at the origin.
pub fn phi1(x: f64) -> f64 {
    if x.abs() < TAYLOR_SWITCH {
        1.0 + x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)))
    } else {
        libm::expm1(x) / x
    }
}

/// `(e^x - 1 - x) / x^2`, equal to 1/2 at the origin.
pub fn phi2(x: f64) -> f64 {
    if x.abs() < SERIES_SWITCH {
        // sum_k x^k / (k+2)!
        let mut term = 0.5;
        let mut acc = 0.0;
        for k in 0..SERIES_TERMS {
            acc += term;
            term *= x / (k as f64 + 3.0);
        }
        acc
    } else {
        (libm::expm1(x) - x) / (x * x)
    }
}

/// Derivative of [`phi1`]: `(x e^x - e^x + 1) / x^2`, equal to 1/2 at the origin.
pub fn phi1_prime(x: f64) -> f64 {
    if x.abs() < SERIES_SWITCH {
        // sum_k (k+1) x^k / (k+2)!
        let mut pow_over_fact = 0.5; // x^k / (k+2)!
        let mut acc = 0.0;
        for k in 0..SERIES_TERMS {
            acc += (k as f64 + 1.0) * pow_over_fact;
            pow_over_fact *= x / (k as f64 + 3.0);
        }
        acc
    } else {
        (x * libm::exp(x) - libm::expm1(x)) / (x * x)
    }
}

/// Evaluates `sum_{k >= start} coeff(k) y^(k - start)` for an entire function
/// whose Taylor coefficients are `coeff(k)`. Used for the stable branches of
/// the error-surface numerators, where the first `start` coefficients vanish.
pub(crate) fn shifted_series(y: f64, start: usize, terms: usize, coeff: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    let mut pow = 1.0;
    for k in start..start + terms {
        acc += coeff(k) * pow;
        pow *= y;
    }
    acc
}

/// `n!` as a float.
pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub const fn new() -> Self {
        Self { sum: 0.0, compensation: 0.0 }
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum into this one.
    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl core::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

//! Composite Gauss–Legendre quadrature with panel doubling.

use alloc::vec::Vec;
use core::ops::{AddAssign, Mul};

use crate::error::{Error, Result};

pub const NODES: usize = 32;
const MAX_PANELS: usize = 1 << 14;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        let mut nodes = Vec::with_capacity(order);
        let mut weights = Vec::with_capacity(order);
        let n = order as f64;
        for i in 0..order {
            // Newton on P_n starting from the Chebyshev-like guess.
            let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            if d != 0.0 {
                dp = d;
            }
            nodes.push(x);
            weights.push(2.0 / ((1.0 - x * x) * dp * dp));
        }
        Self { nodes, weights }
    }

    /// Single-panel estimate of `∫_lo^hi f`.
    pub fn panel<V, F>(&self, f: &mut F, lo: f64, hi: f64, zero: &V) -> V
    where
        V: Clone + AddAssign + Mul<f64, Output = V>,
        F: FnMut(f64) -> V,
    {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut acc = zero.clone();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += f(mid + half * x) * (w * half);
        }
        acc
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over `[lo, hi]` with 32-point panels, doubling the panel
/// count until two successive estimates differ by at most
/// `max(rel_tol * |I|, abs_tol)` in the supplied norm.
pub fn integrate_with<V, F, N>(mut f: F, lo: f64, hi: f64, rel_tol: f64, abs_tol: f64, zero: V, norm: N) -> Result<V>
where
    V: Clone + AddAssign + Mul<f64, Output = V> + core::ops::Sub<Output = V>,
    F: FnMut(f64) -> V,
    N: Fn(&V) -> f64,
{
    if hi == lo {
        return Ok(zero);
    }
    let rule = GaussLegendre::new(NODES);
    let composite = |f: &mut F, panels: usize| {
        let width = (hi - lo) / panels as f64;
        let mut acc = zero.clone();
        for p in 0..panels {
            let a = lo + width * p as f64;
            let b = if p + 1 == panels { hi } else { a + width };
            acc += rule.panel(f, a, b, &zero);
        }
        acc
    };
    let mut panels = 1;
    let mut prev = composite(&mut f, panels);
    while panels < MAX_PANELS {
        panels *= 2;
        let next = composite(&mut f, panels);
        let diff = norm(&(next.clone() - prev));
        if diff <= (rel_tol * norm(&next)).max(abs_tol) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureFailure { tolerance: rel_tol.max(abs_tol) })
}

/// Scalar convenience wrapper around [`integrate_with`].
pub fn integrate<F: FnMut(f64) -> f64>(f: F, lo: f64, hi: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    integrate_with(f, lo, hi, rel_tol, abs_tol, 0.0, |v: &f64| v.abs())
}

//! Exact MSE of the left-Riemann Monte-Carlo estimator through Gaussian
//! covariance algebra.
//!
//! For a single trajectory `Ĵ = Σ_k w_k X(t_k)ᵀ Q X(t_k)` with
//! `w_k = h γ^{t_k}`, Isserlis' theorem gives
//! `Var Ĵ = Σ_{k,l} w_k w_l · 2 tr(Q C_{kl} Q C_{kl}ᵀ)` where
//! `C_{kl} = E[X(t_l) X(t_k)ᵀ] = e^{A (t_l - t_k)} Σ(t_k)` for `l ≥ k`.

use alloc::vec::Vec;
use core::ops::Range;

use crate::error::Result;
use crate::linalg::{self, Mat};
use crate::process::{second_moment, transition};
use crate::special::KahanSum;
use crate::system::{EvalPlan, HorizonMode, System};
use crate::value;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MseBreakdown {
    pub bias_sq: f64,
    pub variance_over_m: f64,
    pub truncation_sq: f64,
    pub cross_term: f64,
    pub total: f64,
}

impl MseBreakdown {
    pub fn new(bias_sq: f64, variance_over_m: f64, truncation_sq: f64, cross_term: f64) -> Self {
        Self { bias_sq, variance_over_m, truncation_sq, cross_term, total: bias_sq + variance_over_m + truncation_sq + cross_term }
    }

    /// Every field multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.bias_sq * factor, self.variance_over_m * factor, self.truncation_sq * factor, self.cross_term * factor)
    }
}

/// Budget-independent moments of a single-trajectory estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorMoments {
    pub mean: f64,
    pub variance_single: f64,
}

/// The quantities the estimator is compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Targets {
    /// `V_T`.
    pub finite: f64,
    /// `V_{T,∞}`; zero in finite-horizon modes.
    pub tail: f64,
}

enum Cache {
    Scalar {
        q: f64,
        /// `Var x(t_k)`.
        var: Vec<f64>,
        /// `e^{a d h}`.
        decay: Vec<f64>,
    },
    Vector {
        /// `Σ(t_k)`.
        sigma: Vec<Mat>,
        /// `Σ(t_k) Q`.
        sigma_q: Vec<Mat>,
        /// `e^{A d h}`.
        powers: Vec<Mat>,
        /// `Q e^{A d h}`.
        q_powers: Vec<Mat>,
        q: Mat,
    },
}

/// Precomputed covariances on the sampling grid. Rows of the Isserlis double
/// sum can be evaluated independently; for a fixed partition of the rows the
/// merged result is bitwise reproducible.
pub struct IsserlisGrid {
    weights: Vec<f64>,
    cache: Cache,
}

impl IsserlisGrid {
    pub fn new(sys: &System, plan: &EvalPlan) -> Result<Self> {
        let n = plan.samples() as usize;
        let h = plan.step();
        let log_gamma = libm::log(plan.gamma());
        let weights = (0..n).map(|k| h * libm::exp(log_gamma * plan.time(k))).collect();
        let cache = match sys {
            System::Scalar(s) => Cache::Scalar {
                q: s.q(),
                var: (0..n).map(|k| second_moment(s, plan.time(k))).collect(),
                decay: (0..n).map(|d| libm::exp(s.a() * h * d as f64)).collect(),
            },
            System::Vector(v) => {
                let law = transition(sys, h)?;
                let dim = v.dim();
                let mut sigma = Vec::with_capacity(n);
                let mut powers = Vec::with_capacity(n);
                let mut current = Mat::zeros(dim, dim);
                let mut power = Mat::identity(dim, dim);
                for _ in 0..n {
                    sigma.push(current.clone());
                    powers.push(power.clone());
                    current = &law.phi * &current * law.phi.transpose() + &law.step_cov;
                    current = (&current + current.transpose()) * 0.5;
                    power = &power * &law.phi;
                }
                let q = v.q().clone();
                let sigma_q = sigma.iter().map(|s| s * &q).collect();
                let q_powers = powers.iter().map(|p| &q * p).collect();
                Cache::Vector { sigma, sigma_q, powers, q_powers, q }
            }
        };
        Ok(Self { weights, cache })
    }

    /// Number of grid points `N`.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `E[Ĵ] = Σ_k w_k tr(Q Σ(t_k))`.
    pub fn mean(&self) -> f64 {
        let terms = self.weights.iter().enumerate().map(|(k, w)| {
            w * match &self.cache {
                Cache::Scalar { q, var, .. } => q * var[k],
                Cache::Vector { sigma, q, .. } => linalg::trace_of_product(q, &sigma[k]),
            }
        });
        terms.collect::<KahanSum>().value()
    }

    /// `Σ_{l ≥ k} (2 - δ_{kl}) w_k w_l · 2 tr(Q C_{kl} Q C_{kl}ᵀ)`.
    pub fn row(&self, k: usize, acc: &mut KahanSum) {
        let n = self.len();
        let wk = self.weights[k];
        let mult = |d: usize| if d == 0 { 2.0 } else { 4.0 };
        match &self.cache {
            Cache::Scalar { q, var, decay } => {
                for l in k..n {
                    let d = l - k;
                    let c = q * decay[d] * var[k];
                    acc.add(mult(d) * wk * self.weights[l] * c * c);
                }
            }
            Cache::Vector { sigma, sigma_q, powers, q_powers, q } => {
                let dim = q.nrows();
                let mut qm = Mat::zeros(dim, dim);
                let mut mq = Mat::zeros(dim, dim);
                for l in k..n {
                    let d = l - k;
                    // tr(Q M Q Mᵀ) = Σ_ij (Q M)_ij (M Q)_ij with M = e^{A d h} Σ_k
                    qm.gemm(1.0, &q_powers[d], &sigma[k], 0.0);
                    mq.gemm(1.0, &powers[d], &sigma_q[k], 0.0);
                    let pair: f64 = qm.iter().zip(mq.iter()).map(|(x, y)| x * y).sum();
                    acc.add(mult(d) * wk * self.weights[l] * pair);
                }
            }
        }
    }

    /// Partial double sum over a contiguous block of rows.
    pub fn partial(&self, rows: Range<usize>) -> KahanSum {
        let mut acc = KahanSum::new();
        for k in rows {
            self.row(k, &mut acc);
        }
        acc
    }

    /// Row ranges splitting the triangle into `parts` blocks of similar work.
    pub fn partition(&self, parts: usize) -> Vec<Range<usize>> {
        let n = self.len();
        let parts = parts.clamp(1, n.max(1));
        let total = (n * (n + 1) / 2) as f64;
        let mut out = Vec::with_capacity(parts);
        let mut start = 0;
        let mut done = 0.0;
        for p in 1..=parts {
            let goal = total * p as f64 / parts as f64;
            let mut end = start;
            while end < n && (done < goal || p == parts) {
                done += (n - end) as f64;
                end += 1;
            }
            out.push(start..end);
            start = end;
        }
        out
    }

    /// Merges per-block partial sums in block order.
    pub fn combine(partials: &[KahanSum]) -> f64 {
        let mut acc = KahanSum::new();
        for p in partials {
            acc.merge(p);
        }
        acc.value().max(0.0)
    }

    /// `Var(Ĵ)` over one trajectory.
    pub fn variance_single(&self) -> f64 {
        Self::combine(&[self.partial(0..self.len())])
    }

    pub fn moments(&self) -> EstimatorMoments {
        EstimatorMoments { mean: self.mean(), variance_single: self.variance_single() }
    }
}

pub fn estimator_mean(sys: &System, plan: &EvalPlan) -> Result<f64> {
    Ok(IsserlisGrid::new(sys, plan)?.mean())
}

pub fn estimator_variance_single(sys: &System, plan: &EvalPlan) -> Result<f64> {
    Ok(IsserlisGrid::new(sys, plan)?.variance_single())
}

/// `V_T` and, in the infinite-horizon mode, `V_{T,∞}` for the plan's horizon.
pub fn targets(sys: &System, horizon: f64, gamma: f64, mode: HorizonMode) -> Result<Targets> {
    let finite = match sys {
        System::Scalar(s) => value::value_finite_scalar(s, horizon, gamma)?.value,
        System::Vector(v) => value::value_finite_vector(v, horizon, gamma)?.value,
    };
    let tail = match (mode, sys) {
        (HorizonMode::InfiniteDiscounted, System::Scalar(s)) => value::value_tail_scalar(s, horizon, gamma)?.value,
        (HorizonMode::InfiniteDiscounted, System::Vector(v)) => value::value_tail_vector(v, horizon, gamma)?.value,
        _ => 0.0,
    };
    Ok(Targets { finite, tail })
}

/// Assembles the breakdown from moments, targets and the episode count `M`.
pub fn breakdown(moments: &EstimatorMoments, targets: &Targets, episodes: u64) -> MseBreakdown {
    let bias = moments.mean - targets.finite;
    MseBreakdown::new(bias * bias, moments.variance_single / episodes as f64, targets.tail * targets.tail, -2.0 * bias * targets.tail)
}

pub fn mse_exact(sys: &System, plan: &EvalPlan) -> Result<MseBreakdown> {
    let grid = IsserlisGrid::new(sys, plan)?;
    let t = targets(sys, plan.horizon(), plan.gamma(), plan.mode())?;
    Ok(breakdown(&grid.moments(), &t, plan.episodes()))
}

/// Breakdown for the cost scaled by `q_scale`; every field scales by `q_scale²`.
pub fn mse_exact_scaled(sys: &System, plan: &EvalPlan, q_scale: f64) -> Result<MseBreakdown> {
    if !(q_scale > 0.0) {
        return Err(crate::Error::NonPositiveParameter("q_scale"));
    }
    Ok(mse_exact(sys, plan)?.scaled(q_scale * q_scale))
}

//! Exact-discretisation sampling, the left-Riemann cost estimator and the
//! empirical MSE of the Monte-Carlo value estimate.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::oracle;
use crate::process::transition;
use crate::system::{EvalPlan, HorizonMode, System};

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream {
    pub seed: u64,
    pub replicate: u64,
    pub trajectory: u64,
}

const STREAM_TAG: u64 = 0x7465_6d70_7265_7331;

impl Stream {
    pub const fn new(seed: u64, replicate: u64, trajectory: u64) -> Self {
        Self { seed, replicate, trajectory }
    }

    /// ChaCha8 generator keyed by the full `(seed, replicate, trajectory)` triple.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.replicate.to_le_bytes());
        key[16..24].copy_from_slice(&self.trajectory.to_le_bytes());
        key[24..].copy_from_slice(&STREAM_TAG.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

/// The one place standard normals are drawn: `rand_distr`'s ziggurat sampler.
#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// States on the grid `t_k = k h`, `k = 0..=N`, stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    step: f64,
    dim: usize,
    states: Vec<f64>,
}

impl Trajectory {
    /// Builds a trajectory from flat row-major states (`(N + 1) · dim` values).
    pub fn from_states(step: f64, dim: usize, states: Vec<f64>) -> Result<Self> {
        if dim == 0 || !states.len().is_multiple_of(dim) || states.is_empty() {
            return Err(Error::DimensionMismatch { expected: dim, found: states.len() });
        }
        Ok(Self { step, dim, states })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of grid points, `N + 1`.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }
}

fn quad_form(q: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let row = &q[i * n..(i + 1) * n];
        let mut s = 0.0;
        for j in 0..n {
            s += row[j] * x[j];
        }
        acc += x[i] * s;
    }
    acc
}

fn row_major(m: &Mat) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn cost_matrix(sys: &System) -> Mat {
    match sys {
        System::Scalar(s) => Mat::from_element(1, 1, s.q()),
        System::Vector(v) => v.q().clone(),
    }
}

fn discount_weights(plan: &EvalPlan) -> Vec<f64> {
    let l = libm::log(plan.gamma());
    (0..plan.samples() as usize).map(|k| plan.step() * libm::exp(l * plan.time(k))).collect()
}

/// `Ĵ(h) = Σ_{k<N} γ^{t_k} h x_kᵀ Q x_k`.
pub fn riemann_cost(traj: &Trajectory, plan: &EvalPlan, q: &Mat) -> Result<f64> {
    let n = plan.samples() as usize;
    if traj.len() != n + 1 {
        return Err(Error::DimensionMismatch { expected: n + 1, found: traj.len() });
    }
    if q.nrows() != traj.dim() || q.ncols() != traj.dim() {
        return Err(Error::DimensionMismatch { expected: traj.dim(), found: q.nrows() });
    }
    let q = row_major(q);
    let weights = discount_weights(plan);
    let mut cost = 0.0;
    for (k, w) in weights.iter().enumerate() {
        cost += w * quad_form(&q, traj.state(k));
    }
    Ok(cost)
}

/// Sampler prepared for one system and plan: transition matrix, Cholesky
/// factor of the step covariance, cost matrix and discount weights.
#[derive(Debug, Clone)]
pub struct Simulator {
    dim: usize,
    step: f64,
    episodes: u64,
    phi: Vec<f64>,
    chol: Vec<f64>,
    q: Vec<f64>,
    weights: Vec<f64>,
}

impl Simulator {
    pub fn new(sys: &System, plan: &EvalPlan) -> Result<Self> {
        let law = transition(sys, plan.step())?;
        let chol = linalg::psd_cholesky(&law.step_cov);
        Ok(Self {
            dim: sys.dim(),
            step: plan.step(),
            episodes: plan.episodes(),
            phi: row_major(&law.phi),
            chol: row_major(&chol),
            q: row_major(&cost_matrix(sys)),
            weights: discount_weights(plan),
        })
    }

    fn advance<R: Rng + ?Sized>(&self, rng: &mut R, x: &[f64], next: &mut [f64], noise: &mut [f64]) {
        let n = self.dim;
        for z in noise.iter_mut() {
            *z = standard_normal(rng);
        }
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.phi[i * n + j] * x[j];
            }
            for j in 0..=i {
                s += self.chol[i * n + j] * noise[j];
            }
            next[i] = s;
        }
    }

    /// Full trajectory `x_0 = 0, …, x_N` on the given stream.
    pub fn trajectory(&self, stream: Stream) -> Trajectory {
        let n = self.dim;
        let steps = self.weights.len();
        let mut rng = stream.rng();
        let mut states = vec![0.0; (steps + 1) * n];
        let mut noise = vec![0.0; n];
        for k in 0..steps {
            let (head, tail) = states.split_at_mut((k + 1) * n);
            self.advance(&mut rng, &head[k * n..], &mut tail[..n], &mut noise);
        }
        Trajectory { step: self.step, dim: n, states }
    }

    /// `Ĵ(h)` of the trajectory on `stream`, without storing it.
    pub fn cost(&self, stream: Stream) -> f64 {
        let n = self.dim;
        let mut rng = stream.rng();
        let mut x = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut noise = vec![0.0; n];
        let mut cost = 0.0;
        let last = self.weights.len().saturating_sub(1);
        for (k, w) in self.weights.iter().enumerate() {
            cost += w * quad_form(&self.q, &x);
            if k < last {
                self.advance(&mut rng, &x, &mut next, &mut noise);
                core::mem::swap(&mut x, &mut next);
            }
        }
        cost
    }

    /// `V̂_M(h)`: average of `M` trajectory costs on streams
    /// `(seed, replicate, i)`, `i = 1..=M`.
    pub fn estimate(&self, seed: u64, replicate: u64) -> f64 {
        let mut acc = 0.0;
        for i in 1..=self.episodes {
            acc += self.cost(Stream::new(seed, replicate, i));
        }
        acc / self.episodes as f64
    }
}

pub fn sample_trajectory(sys: &System, plan: &EvalPlan, stream: Stream) -> Result<Trajectory> {
    Ok(Simulator::new(sys, plan)?.trajectory(stream))
}

/// Monte-Carlo value estimate for replicate 0 of `seed`.
pub fn mc_estimate(sys: &System, plan: &EvalPlan, seed: u64) -> Result<f64> {
    Ok(Simulator::new(sys, plan)?.estimate(seed, 0))
}

/// `V_T` in finite modes, `V_∞` in the infinite-horizon mode.
pub fn target_value(sys: &System, plan: &EvalPlan) -> Result<f64> {
    let t = oracle::targets(sys, plan.horizon(), plan.gamma(), plan.mode())?;
    Ok(match plan.mode() {
        HorizonMode::InfiniteDiscounted => t.finite + t.tail,
        _ => t.finite,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalMse {
    pub mean: f64,
    pub std_error: f64,
    pub replicates: u64,
    pub seed: u64,
}

impl EmpiricalMse {
    /// Mean and standard error of per-replicate squared errors, summed in index order.
    pub fn from_squared_errors(values: &[f64], seed: u64) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::InvalidArgument("at least two replicates are required"));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        let std = libm::sqrt(ss / (n - 1) as f64);
        Ok(Self { mean, std_error: std / libm::sqrt(n as f64), replicates: n as u64, seed })
    }
}

/// Squared error of replicate `r`.
pub fn replicate_squared_error(sim: &Simulator, target: f64, seed: u64, replicate: u64) -> f64 {
    let e = sim.estimate(seed, replicate) - target;
    e * e
}

/// Empirical MSE of `V̂_M(h)` against `target` over `replicates` seeds.
pub fn empirical_mse(sys: &System, plan: &EvalPlan, target: f64, replicates: u64, seed: u64) -> Result<EmpiricalMse> {
    let sim = Simulator::new(sys, plan)?;
    let values: Vec<f64> = (0..replicates).map(|r| replicate_squared_error(&sim, target, seed, r)).collect();
    EmpiricalMse::from_squared_errors(&values, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{estimator_mean, mse_exact};
    use crate::process::second_moment;
    use crate::system::{build_plan, ScalarSystem, VectorSystem};

    const FU: HorizonMode = HorizonMode::FiniteUndiscounted;

    fn scalar(a: f64, sigma: f64) -> System {
        ScalarSystem::new_unchecked(a, sigma, 1.0).into()
    }

    #[test]
    fn zero_noise_gives_zero_paths() {
        let plan = build_plan(0.5, 64, 4.0, 1.0, FU).unwrap();
        let t = sample_trajectory(&scalar(-1.0, 0.0), &plan, Stream::new(1, 0, 0)).unwrap();
        assert!(t.states().iter().all(|v| *v == 0.0));
        assert_eq!(t.len(), 9);
        assert_eq!(mc_estimate(&scalar(-1.0, 0.0), &plan, 3).unwrap(), 0.0);
        let e = empirical_mse(&scalar(-1.0, 0.0), &plan, 0.0, 5, 1).unwrap();
        assert_eq!((e.mean, e.std_error), (0.0, 0.0));
    }

    #[test]
    fn wiener_increments_are_standard_normal() {
        let plan = build_plan(1.0, 2, 2.0, 1.0, FU).unwrap();
        let sim = Simulator::new(&scalar(0.0, 1.0), &plan).unwrap();
        let draws = 20_000;
        let (mut s1, mut s2, mut cross) = (0.0, 0.0, 0.0);
        for i in 0..draws {
            let t = sim.trajectory(Stream::new(5, 0, i));
            let d1 = t.state(1)[0];
            let d2 = t.state(2)[0] - d1;
            s1 += d1 * d1;
            s2 += d2 * d2;
            cross += d1 * d2;
        }
        let n = draws as f64;
        let se = (2.0 / n).sqrt();
        assert!((s1 / n - 1.0).abs() < 4.0 * se);
        assert!((s2 / n - 1.0).abs() < 4.0 * se);
        assert!((cross / n).abs() < 4.0 / n.sqrt());
    }

    #[test]
    fn terminal_variance_matches_second_moment() {
        let s = ScalarSystem::new_unchecked(-0.8, 1.2, 1.0);
        let plan = build_plan(0.5, 4, 2.0, 1.0, FU).unwrap();
        let sim = Simulator::new(&s.into(), &plan).unwrap();
        let draws = 100_000u64;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for i in 0..draws {
            let x = sim.trajectory(Stream::new(9, 0, i)).state(4)[0];
            acc += x * x;
            acc2 += x * x * x * x;
        }
        let n = draws as f64;
        let mean = acc / n;
        let se = ((acc2 / n - mean * mean) / n).sqrt();
        assert!((mean - second_moment(&s, 2.0)).abs() < 4.0 * se);
    }

    #[test]
    fn riemann_cost_examples() {
        let plan = build_plan(0.5, 64, 4.0, 1.0, FU).unwrap();
        let q = Mat::identity(1, 1);
        let zero = Trajectory::from_states(0.5, 1, vec![0.0; 9]).unwrap();
        assert_eq!(riemann_cost(&zero, &plan, &q).unwrap(), 0.0);
        let ones = Trajectory::from_states(0.5, 1, vec![1.0; 9]).unwrap();
        assert!((riemann_cost(&ones, &plan, &q).unwrap() - 4.0).abs() < 1e-15);
        let single = build_plan(4.0, 64, 4.0, 1.0, FU).unwrap();
        let t = sample_trajectory(&scalar(-1.0, 1.0), &single, Stream::new(0, 0, 0)).unwrap();
        assert_eq!(riemann_cost(&t, &single, &q).unwrap(), 0.0);
        assert!(riemann_cost(&ones, &single, &q).is_err());
    }

    #[test]
    fn fused_cost_equals_stored_trajectory_cost() {
        let a = nalgebra::dmatrix![-1.0, 0.4; -0.2, -0.6];
        let q = nalgebra::dmatrix![1.5, 0.2; 0.2, 0.7];
        let sys: System = VectorSystem::new_unchecked(a, 0.9, q.clone()).into();
        let plan = build_plan(0.25, 256, 3.0, 0.9, HorizonMode::FiniteDiscounted).unwrap();
        let sim = Simulator::new(&sys, &plan).unwrap();
        for i in 0..5 {
            let st = Stream::new(11, 2, i);
            let stored = riemann_cost(&sim.trajectory(st), &plan, &q).unwrap();
            assert_eq!(stored.to_bits(), sim.cost(st).to_bits());
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let plan = build_plan(0.5, 1 << 10, 8.0, 1.0, FU).unwrap();
        let sys = scalar(-1.0, 1.0);
        let a = mc_estimate(&sys, &plan, 42).unwrap();
        assert_eq!(a.to_bits(), mc_estimate(&sys, &plan, 42).unwrap().to_bits());
        assert_ne!(a, mc_estimate(&sys, &plan, 43).unwrap());
        let sim = Simulator::new(&sys, &plan).unwrap();
        let first: Vec<_> = (0..4).map(|r| replicate_squared_error(&sim, 3.75, 7, r)).collect();
        let more: Vec<_> = (0..8).map(|r| replicate_squared_error(&sim, 3.75, 7, r)).collect();
        assert_eq!(&more[..4], &first[..]);
    }

    #[test]
    fn estimate_is_unbiased_for_the_riemann_sum() {
        let plan = build_plan(0.5, 64, 4.0, 1.0, FU).unwrap();
        let sys = scalar(-1.0, 1.0);
        let sim = Simulator::new(&sys, &plan).unwrap();
        let vals: Vec<f64> = (0..200).map(|s| sim.estimate(s, 0)).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let exact = estimator_mean(&sys, &plan).unwrap();
        assert!((mean - exact).abs() < 4.0 * sd / n.sqrt());
    }

    #[test]
    fn empirical_mse_matches_oracle() {
        let sys = scalar(-1.0, 1.0);
        let plan = build_plan(0.5, 1 << 14, 8.0, 1.0, FU).unwrap();
        let target = target_value(&sys, &plan).unwrap();
        let e = empirical_mse(&sys, &plan, target, 50, 2024).unwrap();
        let o = mse_exact(&sys, &plan).unwrap().total;
        assert!((e.mean - o).abs() < 4.0 * e.std_error, "{} ± {} vs {o}", e.mean, e.std_error);
    }
}

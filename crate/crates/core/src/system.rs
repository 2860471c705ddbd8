//! Langevin systems, horizon modes and evaluation plans.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Relative tolerance used when checking that `T / h` is an integer.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// Which cost functional is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HorizonMode {
    FiniteUndiscounted,
    FiniteDiscounted,
    InfiniteDiscounted,
}

impl HorizonMode {
    pub const fn as_str(self) -> &'static str {
        match self {
            HorizonMode::FiniteUndiscounted => "finite-undiscounted",
            HorizonMode::FiniteDiscounted => "finite-discounted",
            HorizonMode::InfiniteDiscounted => "infinite-discounted",
        }
    }

    pub const fn is_finite(self) -> bool {
        !matches!(self, HorizonMode::InfiniteDiscounted)
    }
}

impl fmt::Display for HorizonMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HorizonMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finite-undiscounted" | "finite" => Ok(HorizonMode::FiniteUndiscounted),
            "finite-discounted" => Ok(HorizonMode::FiniteDiscounted),
            "infinite-discounted" | "infinite" => Ok(HorizonMode::InfiniteDiscounted),
            _ => Err(Error::InvalidArgument("unknown horizon mode")),
        }
    }
}

/// Scalar Langevin system `dx = a x dt + σ dw` with running cost `q x²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSystem {
    a: f64,
    sigma: f64,
    q: f64,
}

impl ScalarSystem {
    /// Builds a system without validation. Useful for degenerate cases such as
    /// `σ = 0` that the validated constructor rejects.
    pub const fn new_unchecked(a: f64, sigma: f64, q: f64) -> Self {
        Self { a, sigma, q }
    }

    pub const fn a(&self) -> f64 {
        self.a
    }

    pub const fn sigma(&self) -> f64 {
        self.sigma
    }

    pub const fn q(&self) -> f64 {
        self.q
    }

    /// Same system with the cost weight multiplied by `factor`.
    pub fn with_cost_scaled(&self, factor: f64) -> Self {
        Self { q: self.q * factor, ..*self }
    }

    /// The 1×1 vector system with identical dynamics and cost.
    pub fn embed(&self) -> VectorSystem {
        VectorSystem { a: Mat::from_element(1, 1, self.a), sigma: self.sigma, q: Mat::from_element(1, 1, self.q) }
    }
}

/// Validates a scalar system. Marginal stability (`a = 0`) is accepted in
/// every mode: with discounting the tail integrals stay finite.
pub fn validate_scalar(a: f64, sigma: f64, q: f64, _mode: HorizonMode) -> Result<ScalarSystem> {
    if !(a.is_finite() && sigma.is_finite() && q.is_finite()) {
        return Err(Error::InvalidArgument("system parameters must be finite"));
    }
    if a > 0.0 {
        return Err(Error::UnstableSystem("drift coefficient a > 0"));
    }
    if sigma <= 0.0 {
        return Err(Error::NonPositiveParameter("sigma"));
    }
    if q <= 0.0 {
        return Err(Error::NonPositiveParameter("q"));
    }
    Ok(ScalarSystem { a, sigma, q })
}

/// Vector Langevin system `dX = A X dt + σ dW` with running cost `Xᵀ Q X`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSystem {
    a: Mat,
    sigma: f64,
    q: Mat,
}

impl VectorSystem {
    pub fn new_unchecked(a: Mat, sigma: f64, q: Mat) -> Self {
        Self { a, sigma, q }
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn with_cost_scaled(&self, factor: f64) -> Self {
        Self { a: self.a.clone(), sigma: self.sigma, q: &self.q * factor }
    }

    /// `(Lᵀ A L, Lᵀ Q L)` for an orthogonal `L`.
    pub fn rotated(&self, l: &Mat) -> Self {
        Self { a: l.transpose() * &self.a * l, sigma: self.sigma, q: l.transpose() * &self.q * l }
    }
}

pub fn validate_vector(a: Mat, sigma: f64, q: Mat, _mode: HorizonMode) -> Result<VectorSystem> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: q.nrows() });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty system"));
    }
    if !(sigma.is_finite() && a.iter().all(|v| v.is_finite()) && q.iter().all(|v| v.is_finite())) {
        return Err(Error::InvalidArgument("system parameters must be finite"));
    }
    let tol = 1e-12 * a.amax() * n as f64;
    if linalg::spectral_abscissa(&a) > tol {
        return Err(Error::UnstableSystem("eigenvalue with positive real part"));
    }
    if sigma <= 0.0 {
        return Err(Error::NonPositiveParameter("sigma"));
    }
    if !linalg::is_spd(&q) {
        return Err(Error::NonSpdCost);
    }
    Ok(VectorSystem { a, sigma, q })
}

/// Either flavour of system.
#[derive(Debug, Clone, PartialEq)]
pub enum System {
    Scalar(ScalarSystem),
    Vector(VectorSystem),
}

impl System {
    pub fn dim(&self) -> usize {
        match self {
            System::Scalar(_) => 1,
            System::Vector(v) => v.dim(),
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            System::Scalar(s) => s.sigma(),
            System::Vector(v) => v.sigma(),
        }
    }

    pub fn to_vector(&self) -> VectorSystem {
        match self {
            System::Scalar(s) => s.embed(),
            System::Vector(v) => v.clone(),
        }
    }

    pub fn with_cost_scaled(&self, factor: f64) -> Self {
        match self {
            System::Scalar(s) => System::Scalar(s.with_cost_scaled(factor)),
            System::Vector(v) => System::Vector(v.with_cost_scaled(factor)),
        }
    }
}

impl From<ScalarSystem> for System {
    fn from(s: ScalarSystem) -> Self {
        System::Scalar(s)
    }
}

impl From<VectorSystem> for System {
    fn from(v: VectorSystem) -> Self {
        System::Vector(v)
    }
}

/// Step size, budget, horizon and discount of one Monte-Carlo evaluation.
///
/// The budget remainder `B - M N` is discarded: only whole trajectories are
/// averaged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPlan {
    step: f64,
    budget: u64,
    horizon: f64,
    gamma: f64,
    mode: HorizonMode,
    samples: u64,
    episodes: u64,
}

impl EvalPlan {
    pub const fn step(&self) -> f64 {
        self.step
    }

    pub const fn budget(&self) -> u64 {
        self.budget
    }

    pub const fn horizon(&self) -> f64 {
        self.horizon
    }

    pub const fn gamma(&self) -> f64 {
        self.gamma
    }

    pub const fn mode(&self) -> HorizonMode {
        self.mode
    }

    /// `N = T / h`, samples per trajectory.
    pub const fn samples(&self) -> u64 {
        self.samples
    }

    /// `M = floor(B / N)`, number of trajectories.
    pub const fn episodes(&self) -> u64 {
        self.episodes
    }

    /// `M N`, the part of the budget that is actually spent.
    pub const fn effective_budget(&self) -> u64 {
        self.samples * self.episodes
    }

    /// Grid time `t_k = k h`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// Plan with `h = T / m`, which is always on the grid.
    pub fn from_steps(horizon: f64, steps: u64, budget: u64, gamma: f64, mode: HorizonMode) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("number of steps must be positive"));
        }
        build_plan(horizon / steps as f64, budget, horizon, gamma, mode)
    }
}

pub fn build_plan(h: f64, budget: u64, horizon: f64, gamma: f64, mode: HorizonMode) -> Result<EvalPlan> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::NonPositiveParameter("h"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::NonPositiveParameter("T"));
    }
    if budget == 0 {
        return Err(Error::NonPositiveParameter("B"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument("gamma must lie in (0, 1]"));
    }
    match mode {
        HorizonMode::FiniteUndiscounted if gamma != 1.0 => {
            return Err(Error::InvalidArgument("finite-undiscounted mode requires gamma = 1"))
        }
        HorizonMode::InfiniteDiscounted if gamma >= 1.0 => {
            return Err(Error::InvalidArgument("infinite-discounted mode requires gamma < 1"))
        }
        _ => {}
    }
    let ratio = horizon / h;
    let samples = libm::round(ratio);
    if samples < 1.0 || (ratio - samples).abs() > GRID_TOLERANCE * samples {
        return Err(Error::NonIntegerGrid { ratio });
    }
    let samples = samples as u64;
    let episodes = budget / samples;
    if episodes < 1 {
        return Err(Error::BudgetTooSmall { budget, samples });
    }
    Ok(EvalPlan { step: horizon / samples as f64, budget, horizon, gamma, mode, samples, episodes })
}

/// Step sizes `T / m` for `m = 1..=min(m_max, B)`.
pub fn admissible_grid(horizon: f64, budget: u64, m_max: u64) -> Vec<f64> {
    (1..=m_max.min(budget)).map(|m| horizon / m as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    const FU: HorizonMode = HorizonMode::FiniteUndiscounted;

    #[test]
    fn scalar_validation() {
        assert!(validate_scalar(-1.0, 1.0, 1.0, FU).is_ok());
        assert!(validate_scalar(0.0, 1.0, 1.0, FU).is_ok());
        assert!(validate_scalar(0.0, 1.0, 1.0, HorizonMode::InfiniteDiscounted).is_ok());
        assert_eq!(validate_scalar(0.5, 1.0, 1.0, FU), Err(Error::UnstableSystem("drift coefficient a > 0")));
        assert_eq!(validate_scalar(-1.0, 0.0, 1.0, FU), Err(Error::NonPositiveParameter("sigma")));
        assert_eq!(validate_scalar(-1.0, 1.0, -2.0, FU), Err(Error::NonPositiveParameter("q")));
    }

    #[test]
    fn vector_validation() {
        let i3 = Mat::identity(3, 3);
        assert!(validate_vector(-i3.clone(), 1.0, i3.clone(), FU).is_ok());
        let a = Mat::from_diagonal(&nalgebra::dvector![-1.2, -1.0, -0.8]);
        assert!(validate_vector(a, 1.0, i3.clone(), HorizonMode::InfiniteDiscounted).is_ok());
        let a = Mat::from_diagonal(&nalgebra::dvector![-1.0, 0.1, -0.5]);
        assert!(matches!(validate_vector(a, 1.0, i3.clone(), FU), Err(Error::UnstableSystem(_))));
        let q = dmatrix![1.0, 2.0; 2.0, 1.0];
        assert_eq!(validate_vector(-Mat::identity(2, 2), 1.0, q, FU), Err(Error::NonSpdCost));
        assert!(matches!(validate_vector(-i3, 1.0, Mat::identity(2, 2), FU), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn one_dimensional_vector_matches_scalar_acceptance() {
        for &(a, s, q) in &[(-1.0, 1.0, 1.0), (0.0, 1.0, 1.0), (1e-13, 1.0, 1.0), (0.5, 1.0, 1.0), (-1.0, -1.0, 1.0), (-1.0, 1.0, 0.0)] {
            let scalar = validate_scalar(a, s, q, FU).is_ok();
            let vector = validate_vector(dmatrix![a], s, dmatrix![q], FU).is_ok();
            assert_eq!(scalar, vector, "a={a} s={s} q={q}");
        }
    }

    #[test]
    fn plan_examples() {
        let p = build_plan(0.5, 1 << 14, 8.0, 1.0, FU).unwrap();
        assert_eq!((p.samples(), p.episodes()), (16, 1024));
        assert!(matches!(build_plan(0.3, 100, 8.0, 1.0, FU), Err(Error::NonIntegerGrid { .. })));
        assert!(matches!(build_plan(1.0, 4, 8.0, 1.0, FU), Err(Error::BudgetTooSmall { .. })));
    }

    #[test]
    fn grid_examples() {
        let g = admissible_grid(8.0, 16, 4);
        let expected = [8.0, 4.0, 8.0 / 3.0, 2.0];
        assert_eq!(g.len(), 4);
        for (x, y) in g.iter().zip(expected) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(admissible_grid(1.0, 1, 1), [1.0]);
        let g = admissible_grid(8.0, 1 << 14, 800);
        assert_eq!(g.len(), 800);
        assert!((g[799] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn mode_rules() {
        assert!(build_plan(0.5, 64, 8.0, 0.9, FU).is_err());
        assert!(build_plan(0.5, 64, 8.0, 1.0, HorizonMode::InfiniteDiscounted).is_err());
        assert!(build_plan(0.5, 64, 8.0, 0.9, HorizonMode::FiniteDiscounted).is_ok());
    }
}

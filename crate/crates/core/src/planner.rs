//! Optimal step size `h*`: closed forms, root finding on the exact error
//! surface, grid search, and extrapolation of `h*` across budgets.

use alloc::vec::Vec;
use core::fmt;

use crate::closed_form::{self, ErrorSurface};
use crate::error::{Error, Result};
use crate::oracle::{self, EstimatorMoments, IsserlisGrid, MseBreakdown, Targets};
use crate::sim;
use crate::special::{factorial, phi1, shifted_series};
use crate::system::{build_plan, EvalPlan, HorizonMode, System};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMethod {
    MarginalClosed,
    LeadingOrder,
    CubicRefined,
    PolyRoot,
    GridArgmin,
    InfiniteLeading,
    Extrapolated,
}

impl StepMethod {
    pub const fn as_str(self) -> &'static str {
        match self {
            StepMethod::MarginalClosed => "marginal-closed",
            StepMethod::LeadingOrder => "leading-order",
            StepMethod::CubicRefined => "cubic-refined",
            StepMethod::PolyRoot => "poly-root",
            StepMethod::GridArgmin => "grid-argmin",
            StepMethod::InfiniteLeading => "infinite-leading",
            StepMethod::Extrapolated => "extrapolated",
        }
    }
}

impl fmt::Display for StepMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeRecommendation {
    pub h_star: f64,
    pub method: StepMethod,
    /// MSE at `h_star` under the model that produced it, when available.
    pub predicted_mse: Option<f64>,
    /// `M` at `h_star`: `floor(B / N)` on the grid, `floor(B h*/T)` otherwise.
    pub episodes: u64,
    /// Set when the requested formula was unusable and a simpler one was returned.
    pub fallback: bool,
    /// Neighbouring grid step sizes `(smaller, larger)` around a grid argmin.
    pub bracket: Option<(f64, f64)>,
    /// Competing candidate, e.g. the constant-`γ^T` choice `B^{-1/2}`.
    pub alternative: Option<f64>,
}

impl StepSizeRecommendation {
    fn continuous(h_star: f64, method: StepMethod, predicted_mse: Option<f64>, horizon: f64, budget: f64) -> Self {
        Self {
            h_star,
            method,
            predicted_mse,
            episodes: libm::floor(budget * h_star / horizon).max(0.0) as u64,
            fallback: false,
            bracket: None,
            alternative: None,
        }
    }
}

fn check_budget(budget: f64) -> Result<()> {
    if budget >= 1.0 && budget.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter("B"))
    }
}

/// `T (2/(3B))^{1/3}` for a marginally stable system.
pub fn hstar_marginal(sigma: f64, horizon: f64, budget: f64) -> Result<StepSizeRecommendation> {
    check_budget(budget)?;
    let h = horizon * libm::cbrt(2.0 / (3.0 * budget));
    let mse = closed_form::mse_marginal(sigma, horizon, h, budget)?;
    Ok(StepSizeRecommendation::continuous(h, StepMethod::MarginalClosed, Some(mse), horizon, budget))
}

/// `M* = (2/3)^{1/3} B^{2/3}`; values below 1 are infeasible.
pub fn optimal_episodes(budget: f64) -> f64 {
    libm::cbrt(2.0 / 3.0) * libm::pow(budget, 2.0 / 3.0)
}

/// `(c₂/(2c₁B))^{1/3}`, the minimiser of `c₁h² + c₂/(hB)`.
pub fn hstar_leading(a: f64, sigma: f64, horizon: f64, budget: f64) -> Result<StepSizeRecommendation> {
    check_budget(budget)?;
    let (c1, c2) = closed_form::leading_constants(a, 1.0, horizon)?;
    let h = libm::cbrt(c2 / (2.0 * c1 * budget));
    let mse = ErrorSurface::new(a, sigma, horizon)?.mse(h, budget);
    Ok(StepSizeRecommendation::continuous(h, StepMethod::LeadingOrder, Some(mse), horizon, budget))
}

/// `v(y)/y²` with `v(y) = 1 + 2y + 4(y + 1)e^y - 5e^{2y}`.
fn v_over_y2(y: f64) -> f64 {
    if y.abs() < 0.5 {
        shifted_series(y, 2, 24, |k| (4.0 * k as f64 + 4.0 - 5.0 * libm::exp2(k as f64)) / factorial(k))
    } else {
        (1.0 + 2.0 * y + 4.0 * (y + 1.0) * libm::exp(y) - 5.0 * libm::exp(2.0 * y)) / (y * y)
    }
}

/// `w(y)/y⁴` with `w(y) = 2y - e^{2y} + 4(y - 1)e^y + 5`.
fn w_over_y4(y: f64) -> f64 {
    if y.abs() < 0.5 {
        shifted_series(y, 4, 24, |k| (4.0 * k as f64 - 4.0 - libm::exp2(k as f64)) / factorial(k))
    } else {
        (2.0 * y - libm::exp(2.0 * y) + 4.0 * (y - 1.0) * libm::exp(y) + 5.0) / (y * y * y * y)
    }
}

/// Minimiser of the error surface truncated at `O(h³)`: the cubic-root
/// expression in `D₁, D₂, D₃`. Falls back to [`hstar_leading`] when the
/// discriminant is negative or the result is not positive.
pub fn hstar_refined(a: f64, sigma: f64, horizon: f64, budget: f64) -> Result<StepSizeRecommendation> {
    check_budget(budget)?;
    let leading = hstar_leading(a, sigma, horizon, budget)?;
    let t = horizon;
    let y = 2.0 * a * t;
    // D₁ = T v(y), D₂ = T w(y), D₃ = 3B(e^y - 1)² - 2y(e^{2y} - 1); all carry a
    // factor y² (D₂/a² carries y²·4T²/y²), which is divided out here.
    let d1 = t * v_over_y2(y);
    let f = phi1(y);
    let d3 = 3.0 * budget * f * f - 4.0 * phi1(2.0 * y);
    let w = w_over_y4(y);
    let t3 = t * t * t;
    let base = d1 * d1 * d1 / (27.0 * d3 * d3 * d3) - 6.0 * t3 * w / d3;
    let disc = 36.0 * t3 * t3 * w * w / (d3 * d3) - 4.0 * t3 * d1 * d1 * d1 * w / (9.0 * d3 * d3 * d3 * d3);
    let h = if disc >= 0.0 && d3 > 0.0 {
        let root = libm::sqrt(disc);
        d1 / (3.0 * d3) + libm::cbrt(base - root) + libm::cbrt(base + root)
    } else {
        f64::NAN
    };
    if !(h.is_finite() && h > 0.0) {
        return Ok(StepSizeRecommendation { method: StepMethod::LeadingOrder, fallback: true, ..leading });
    }
    let mse = ErrorSurface::new(a, sigma, horizon)?.mse(h, budget);
    Ok(StepSizeRecommendation::continuous(h, StepMethod::CubicRefined, Some(mse), horizon, budget))
}

pub const ROOT_LOWER: f64 = 1e-9;
pub const ROOT_UPPER: f64 = 1.0;
pub const ROOT_TOL: f64 = 1e-12;

/// Root of `∂MSE/∂h` on `(1e-9, 1)` by bisection, using the exact
/// derivative of the closed-form error surface.
pub fn hstar_poly_root(a: f64, sigma: f64, horizon: f64, budget: f64) -> Result<StepSizeRecommendation> {
    check_budget(budget)?;
    let surface = ErrorSurface::new(a, 1.0, horizon)?;
    let g = |h: f64| surface.slope(h, budget);
    let (mut lo, mut hi) = (ROOT_LOWER, ROOT_UPPER);
    let (glo, ghi) = (g(lo), g(hi));
    if !(glo < 0.0 && ghi > 0.0) {
        return Err(Error::NoRootInInterval { lo, hi });
    }
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h = 0.5 * (lo + hi);
    let mse = ErrorSurface::new(a, sigma, horizon)?.mse(h, budget);
    Ok(StepSizeRecommendation::continuous(h, StepMethod::PolyRoot, Some(mse), horizon, budget))
}

/// `(36 T C(a,γ) / B)^{1/5}`.
pub fn infinite_leading_step(a: f64, gamma: f64, horizon: f64, budget: f64) -> Result<f64> {
    check_budget(budget)?;
    let c = closed_form::discounted_variance_constant(a, gamma)?;
    Ok(libm::pow(36.0 * horizon * c / budget, 0.2))
}

/// Infinite-horizon step size. The fifth-root choice applies while
/// `γ^T < h⁴/10`; otherwise the constant-`γ^T` choice `B^{-1/2}` is returned
/// and the fifth-root value is kept as the alternative.
pub fn hstar_infinite(a: f64, sigma: f64, gamma: f64, horizon: f64, budget: f64) -> Result<StepSizeRecommendation> {
    let candidate = infinite_leading_step(a, gamma, horizon, budget)?;
    let constant_tail = 1.0 / libm::sqrt(budget);
    let h4 = candidate * candidate * candidate * candidate;
    let small_tail = libm::pow(gamma, horizon) < h4 / 10.0;
    let (h, alt) = if small_tail { (candidate, constant_tail) } else { (constant_tail, candidate) };
    let mse = closed_form::mse_infinite_discounted(a, sigma, horizon, gamma, h, budget)?.value;
    let mut rec = StepSizeRecommendation::continuous(h, StepMethod::InfiniteLeading, Some(mse), horizon, budget);
    rec.alternative = Some(alt);
    Ok(rec)
}

/// How grid points are scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluator {
    /// Closed-form MSE (scalar systems only) at the spent budget `M N`.
    ClosedForm,
    /// Exact Isserlis oracle.
    ExactOracle,
    /// Monte-Carlo estimate of the MSE.
    Empirical { replicates: u64, seed: u64 },
}

impl Evaluator {
    pub const fn as_str(&self) -> &'static str {
        match self {
            Evaluator::ClosedForm => "closed-form",
            Evaluator::ExactOracle => "exact-oracle",
            Evaluator::Empirical { .. } => "empirical",
        }
    }
}

/// MSE of one grid point under `evaluator`.
pub fn evaluate_point(sys: &System, plan: &EvalPlan, evaluator: Evaluator) -> Result<f64> {
    match evaluator {
        Evaluator::ClosedForm => {
            let s = match sys {
                System::Scalar(s) => s,
                System::Vector(_) => return Err(Error::ClosedFormUnavailable("closed forms cover scalar systems only")),
            };
            let sigma = s.sigma() * libm::sqrt(s.q());
            let (h, b, t, g) = (plan.step(), plan.effective_budget() as f64, plan.horizon(), plan.gamma());
            match plan.mode() {
                HorizonMode::FiniteUndiscounted => closed_form::mse_finite_undiscounted(s.a(), sigma, t, h, b),
                HorizonMode::FiniteDiscounted => closed_form::mse_finite_discounted(s.a(), sigma, t, g, h, b),
                HorizonMode::InfiniteDiscounted => Ok(closed_form::mse_infinite_discounted(s.a(), sigma, t, g, h, b)?.value),
            }
        }
        Evaluator::ExactOracle => Ok(oracle::mse_exact(sys, plan)?.total),
        Evaluator::Empirical { replicates, seed } => {
            let target = sim::target_value(sys, plan)?;
            Ok(sim::empirical_mse(sys, plan, target, replicates, seed)?.mean)
        }
    }
}

/// Argmin over `(m, mse)` pairs listed in increasing `m`; ties go to the
/// smaller `m` (larger `h`).
pub fn grid_argmin(horizon: f64, budget: u64, values: &[(u64, f64)]) -> Result<StepSizeRecommendation> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &(_, v)) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    let (i, v) = best.ok_or(Error::InvalidArgument("no admissible grid point"))?;
    let m = values[i].0;
    let lower = values.get(i + 1).map_or(horizon / m as f64, |p| horizon / p.0 as f64);
    let upper = if i > 0 { horizon / values[i - 1].0 as f64 } else { horizon / m as f64 };
    Ok(StepSizeRecommendation {
        h_star: horizon / m as f64,
        method: StepMethod::GridArgmin,
        predicted_mse: Some(v),
        episodes: budget / m,
        fallback: false,
        bracket: Some((lower, upper)),
        alternative: None,
    })
}

/// Argmin of `evaluator` over `h = T/m`, `m = 1..=min(m_max, B)`.
pub fn hstar_grid(
    sys: &System,
    horizon: f64,
    budget: u64,
    gamma: f64,
    mode: HorizonMode,
    evaluator: Evaluator,
    m_max: u64,
) -> Result<StepSizeRecommendation> {
    let mut values = Vec::new();
    for m in 1..=m_max.min(budget) {
        let plan = EvalPlan::from_steps(horizon, m, budget, gamma, mode)?;
        values.push((m, evaluate_point(sys, &plan, evaluator)?));
    }
    grid_argmin(horizon, budget, &values)
}

/// True when successive differences change sign at most once, from
/// decreasing to increasing, ignoring changes below `slack`.
pub fn is_unimodal(values: &[f64], slack: f64) -> bool {
    let mut rising = false;
    for w in values.windows(2) {
        let d = w[1] - w[0];
        let tol = slack * w[0].abs().max(w[1].abs());
        if d > tol {
            rising = true;
        } else if d < -tol && rising {
            return false;
        }
    }
    true
}

/// Budget-independent oracle moments for `m = 1..=m_max`, reusable for the
/// grid argmin at any number of budgets.
#[derive(Debug, Clone)]
pub struct OracleCurve {
    horizon: f64,
    targets: Targets,
    moments: Vec<EstimatorMoments>,
}

impl OracleCurve {
    pub fn new(sys: &System, horizon: f64, gamma: f64, mode: HorizonMode, m_max: u64) -> Result<Self> {
        let mut moments = Vec::with_capacity(m_max as usize);
        for m in 1..=m_max {
            moments.push(Self::moments_at(sys, horizon, gamma, mode, m)?);
        }
        Self::from_moments(sys, horizon, gamma, mode, moments)
    }

    /// Moments for one `m`; lets callers fill the curve in parallel.
    pub fn moments_at(sys: &System, horizon: f64, gamma: f64, mode: HorizonMode, m: u64) -> Result<EstimatorMoments> {
        let plan = build_plan(horizon / m as f64, m, horizon, gamma, mode)?;
        Ok(IsserlisGrid::new(sys, &plan)?.moments())
    }

    /// `moments[i]` must belong to `m = i + 1`.
    pub fn from_moments(sys: &System, horizon: f64, gamma: f64, mode: HorizonMode, moments: Vec<EstimatorMoments>) -> Result<Self> {
        let targets = oracle::targets(sys, horizon, gamma, mode)?;
        Ok(Self { horizon, targets, moments })
    }

    pub fn m_max(&self) -> u64 {
        self.moments.len() as u64
    }

    /// Exact breakdown at `h = T/m` and budget `B`; `None` when `m > B`.
    pub fn breakdown(&self, m: u64, budget: u64) -> Option<MseBreakdown> {
        if m == 0 || m > budget || m > self.m_max() {
            return None;
        }
        Some(oracle::breakdown(&self.moments[m as usize - 1], &self.targets, budget / m))
    }

    /// `(m, mse)` along the grid for budget `B`.
    pub fn values(&self, budget: u64) -> Vec<(u64, f64)> {
        (1..=self.m_max().min(budget)).filter_map(|m| self.breakdown(m, budget).map(|b| (m, b.total))).collect()
    }

    pub fn argmin(&self, budget: u64) -> Result<StepSizeRecommendation> {
        grid_argmin(self.horizon, budget, &self.values(budget))
    }
}

/// `h* ≈ c B^{exponent}` fitted on pilot argmins.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetScalingFit {
    pub coefficient: f64,
    pub exponent: f64,
    pub pilot_budgets: Vec<u64>,
    /// Root-mean-square residual in `log h*`.
    pub fit_residual: f64,
}

impl BudgetScalingFit {
    pub fn predict(&self, budget: f64) -> f64 {
        self.coefficient * libm::pow(budget, self.exponent)
    }

    pub fn recommend(&self, horizon: f64, budget: f64) -> StepSizeRecommendation {
        StepSizeRecommendation::continuous(self.predict(budget), StepMethod::Extrapolated, None, horizon, budget)
    }
}

/// `-1/3` in finite-horizon modes, `-1/5` in the infinite-horizon mode.
pub const fn budget_exponent(mode: HorizonMode) -> f64 {
    match mode {
        HorizonMode::InfiniteDiscounted => -0.2,
        _ => -1.0 / 3.0,
    }
}

/// Least squares of `log h* = log c + e log B` with `e` fixed by `mode`.
pub fn extrapolate_budget(pilot: &[(u64, f64)], mode: HorizonMode) -> Result<BudgetScalingFit> {
    if pilot.len() < 2 || pilot.iter().all(|p| p.0 == pilot[0].0) {
        return Err(Error::DegeneratePilot);
    }
    if pilot.iter().any(|&(b, h)| b == 0 || !(h > 0.0)) {
        return Err(Error::InvalidArgument("pilot budgets and step sizes must be positive"));
    }
    let e = budget_exponent(mode);
    let logs: Vec<f64> = pilot.iter().map(|&(b, h)| libm::log(h) - e * libm::log(b as f64)).collect();
    let n = logs.len() as f64;
    let log_c = logs.iter().sum::<f64>() / n;
    let rms = libm::sqrt(logs.iter().map(|l| (l - log_c) * (l - log_c)).sum::<f64>() / n);
    Ok(BudgetScalingFit {
        coefficient: libm::exp(log_c),
        exponent: e,
        pilot_budgets: pilot.iter().map(|p| p.0).collect(),
        fit_residual: rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::ScalarSystem;

    const FU: HorizonMode = HorizonMode::FiniteUndiscounted;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn scalar(a: f64) -> System {
        ScalarSystem::new_unchecked(a, 1.0, 1.0).into()
    }

    /// Golden-section minimiser, independent of the derivative.
    fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - r * (hi - lo);
        let mut x2 = lo + r * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        while hi - lo > 1e-11 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - r * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + r * (hi - lo);
                f2 = f(x2);
            }
        }
        0.5 * (lo + hi)
    }

    fn surface_grid(a: f64, t: f64, b: u64, m_max: u64) -> StepSizeRecommendation {
        hstar_grid(&scalar(a), t, b, 1.0, FU, Evaluator::ClosedForm, m_max).unwrap()
    }

    #[test]
    fn marginal_examples() {
        let h1 = hstar_marginal(1.0, 1.0, 1000.0).unwrap();
        assert!((h1.h_star - 0.087358).abs() < 1e-6);
        let h2 = hstar_marginal(1.0, 2.0, 1000.0).unwrap();
        assert_eq!(h2.h_star, 2.0 * h1.h_star);
        assert!((optimal_episodes(1000.0) - 87.358).abs() < 1e-3);
        assert!((optimal_episodes(1.0) - 0.8736).abs() < 1e-4);
        assert!(rel(optimal_episodes(1000.0), 1000.0 * h1.h_star / 1.0) < 1e-14);
        let grid = surface_grid(0.0, 1.0, 100_000, 200);
        let closed = hstar_marginal(1.0, 1.0, 1e5).unwrap().h_star;
        let m_closed = 1.0 / closed;
        assert!((1.0 / grid.h_star - m_closed).abs() <= 1.0, "{} vs {}", grid.h_star, closed);
    }

    #[test]
    fn leading_examples() {
        let near = hstar_leading(-1e-6, 1.0, 1.0, 1000.0).unwrap().h_star;
        assert!(rel(near, hstar_marginal(1.0, 1.0, 1000.0).unwrap().h_star) < 1e-4);
        let b = 1u64 << 14;
        let lead = hstar_leading(-1.0, 1.0, 8.0, b as f64).unwrap().h_star;
        let grid = surface_grid(-1.0, 8.0, b, 400).h_star;
        assert!(rel(lead, grid) < 0.25);
        let ratio = hstar_leading(-1.0, 1.0, 8.0, 4.0 * b as f64).unwrap().h_star / lead;
        assert!(rel(ratio, libm::pow(4.0, -1.0 / 3.0)) < 1e-12);
    }

    #[test]
    fn refined_examples() {
        let b = 1u64 << 14;
        let lead = hstar_leading(-1.0, 1.0, 8.0, b as f64).unwrap();
        let refined = hstar_refined(-1.0, 1.0, 8.0, b as f64).unwrap();
        assert_eq!(refined.method, StepMethod::CubicRefined);
        let grid = surface_grid(-1.0, 8.0, b, 400).h_star;
        assert!((refined.h_star - grid).abs() < (lead.h_star - grid).abs());
        // marginal limit
        let r0 = hstar_refined(0.0, 1.0, 1.0, 1e6).unwrap().h_star;
        assert!(rel(r0, hstar_marginal(1.0, 1.0, 1e6).unwrap().h_star) < 0.01);
        let r1 = hstar_refined(-1e-7, 1.0, 1.0, 1e6).unwrap().h_star;
        assert!(rel(r0, r1) < 1e-5);
        // refined - leading = O(1/B)
        let mut ratios = Vec::new();
        for k in 12..=20 {
            let bb = libm::exp2(k as f64);
            let d = hstar_refined(-1.0, 1.0, 8.0, bb).unwrap().h_star - hstar_leading(-1.0, 1.0, 8.0, bb).unwrap().h_star;
            ratios.push(d * bb);
        }
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), r| (l.min(*r), h.max(*r)));
        assert!(hi / lo < 3.0 && lo.signum() == hi.signum(), "{ratios:?}");
    }

    #[test]
    fn refined_falls_back_when_discriminant_negative() {
        let r = hstar_refined(-1.0, 1.0, 8.0, 1.0).unwrap();
        if r.fallback {
            assert_eq!(r.method, StepMethod::LeadingOrder);
        } else {
            assert!(r.h_star > 0.0);
        }
    }

    #[test]
    fn poly_root_matches_continuous_argmin() {
        for &(a, t, b) in &[(-1.0, 8.0, 1u64 << 14), (-0.1, 1.0, 1 << 16), (-2.0, 1.0, 1 << 12), (0.0, 1.0, 1 << 14)] {
            let r = hstar_poly_root(a, 1.0, t, b as f64).unwrap();
            let s = ErrorSurface::new(a, 1.0, t).unwrap();
            let g = golden_min(|h| s.mse(h, b as f64), 1e-4, 1.0);
            assert!((r.h_star - g).abs() < 1e-6, "a={a}: {} vs {g}", r.h_star);
            assert!(s.slope(r.h_star, b as f64).abs() <= 1e-9);
        }
    }

    #[test]
    fn infinite_examples() {
        let g = libm::exp(-1.0);
        let r = hstar_infinite(-1.0, 1.0, g, 10.0, 1e5).unwrap();
        assert!((r.h_star - 0.18206).abs() < 1e-5, "{}", r.h_star);
        assert_eq!(r.alternative, Some(1.0 / 1e5f64.sqrt()));
        let ratio = infinite_leading_step(-1.0, g, 10.0, 32e5).unwrap() / infinite_leading_step(-1.0, g, 10.0, 1e5).unwrap();
        assert!(rel(ratio, 0.5) < 1e-12);
        let grid = hstar_grid(&scalar(-1.0), 10.0, 100_000, g, HorizonMode::InfiniteDiscounted, Evaluator::ClosedForm, 400).unwrap();
        assert!(rel(grid.h_star, r.h_star) < 0.3);
        assert!(hstar_infinite(-1.0, 1.0, 1.0, 10.0, 1e5).is_err());
    }

    #[test]
    fn grid_evaluators_agree_and_curve_is_u_shaped() {
        let b = 1u64 << 14;
        let closed = surface_grid(-1.0, 8.0, b, 120);
        let exact = hstar_grid(&scalar(-1.0), 8.0, b, 1.0, FU, Evaluator::ExactOracle, 120).unwrap();
        assert_eq!(closed.h_star, exact.h_star);
        let curve = OracleCurve::new(&scalar(-1.0), 8.0, 1.0, FU, 120).unwrap();
        assert_eq!(curve.argmin(b).unwrap().h_star, exact.h_star);
        let vals: Vec<f64> = curve.values(b).iter().map(|v| v.1).collect();
        assert!(is_unimodal(&vals, 1e-12));
        let (lo, hi) = exact.bracket.unwrap();
        assert!(lo < exact.h_star && exact.h_star < hi);
        let one = surface_grid(-1.0, 8.0, b, 1);
        assert_eq!(one.h_star, 8.0);
    }

    #[test]
    fn ties_prefer_larger_steps() {
        let r = grid_argmin(1.0, 100, &[(1, 2.0), (2, 1.0), (3, 1.0), (4, 3.0)]).unwrap();
        assert_eq!(r.h_star, 0.5);
        assert_eq!(r.episodes, 50);
    }

    #[test]
    fn hstar_is_monotone_and_near_leading() {
        for &a in &[-2.0, -1.0, -0.1] {
            for &t in &[1.0, 8.0] {
                let mut prev = f64::INFINITY;
                for k in (12..=20).step_by(2) {
                    let b = 1u64 << k;
                    let grid = surface_grid(a, t, b, 2000).h_star;
                    let lead = hstar_leading(a, 1.0, t, b as f64).unwrap().h_star;
                    assert!(grid <= prev);
                    assert!(grid >= lead / 2.0 && grid <= 2.0 * lead, "a={a} T={t} B={b}");
                    prev = grid;
                }
            }
        }
    }

    #[test]
    fn extrapolation_examples() {
        let pilot: Vec<(u64, f64)> =
            [1u64 << 10, 1 << 12].iter().map(|&b| (b, hstar_marginal(1.0, 1.0, b as f64).unwrap().h_star)).collect();
        let fit = extrapolate_budget(&pilot, FU).unwrap();
        assert!(rel(fit.coefficient, libm::cbrt(2.0 / 3.0)) < 1e-10);
        assert!(fit.fit_residual < 1e-12);
        assert_eq!(extrapolate_budget(&[(64, 0.1), (64, 0.2)], FU), Err(Error::DegeneratePilot));
        let pilot: Vec<(u64, f64)> = [1u64 << 12, 1 << 13].iter().map(|&b| (b, surface_grid(-1.0, 8.0, b, 400).h_star)).collect();
        let fit = extrapolate_budget(&pilot, FU).unwrap();
        let target = surface_grid(-1.0, 8.0, 1 << 16, 400).h_star;
        let pred = fit.predict(65536.0);
        assert!(pred / target < 1.5 && target / pred < 1.5);
    }
}

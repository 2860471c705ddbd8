//! Analytic MSE of the scalar estimator, its expansions and bounds, and a
//! least-squares fit of the leading-order structure for vector systems.
//!
//! Formulas are rewritten in terms of `φ1(x) = (e^x - 1)/x`,
//! `φ2(x) = (e^x - 1 - x)/x²` and power series so that they stay accurate for
//! small `|a h|`, small `|a T|` and at `a = 0`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::oracle::{self, IsserlisGrid};
use crate::special::{factorial, phi1, phi1_prime, phi2, shifted_series};
use crate::system::{build_plan, HorizonMode, ScalarSystem, System, VectorSystem};
use crate::value;

/// Below this `|2aT|` the variance term is evaluated by its power series.
const SERIES_SWITCH: f64 = 0.5;
const SERIES_ORDER: usize = 26;

fn check_scalar(a: f64, sigma: f64, horizon: f64) -> Result<()> {
    if !a.is_finite() || a > 0.0 {
        return Err(Error::UnstableSystem("drift coefficient a > 0"));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::NonPositiveParameter("sigma"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::NonPositiveParameter("T"));
    }
    Ok(())
}

fn check_step(h: f64, budget: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::NonPositiveParameter("h"));
    }
    if !(budget > 0.0) {
        return Err(Error::NonPositiveParameter("B"));
    }
    Ok(())
}

/// `(n-1)! g_n(r)` coefficients of `r^j`, `j = 0..=n`.
fn g_coefficients(n: usize, out: &mut [f64]) {
    let m = n - 1;
    let mut binom = [0.0f64; SERIES_ORDER + 2];
    binom[0] = 1.0;
    for i in 1..=m {
        for j in (1..=i).rev() {
            binom[j] += binom[j - 1];
        }
    }
    let pow2 = libm::exp2(m as f64);
    for j in 0..=n {
        let lower = if j >= 1 { binom[j - 1] } else { 0.0 };
        let upper = if j <= m { binom[j] } else { 0.0 };
        out[j] = 4.0 * (lower - upper);
    }
    out[0] += 4.0;
    out[1] += pow2;
    out[m] -= pow2;
    out[n] -= 4.0;
}

/// `E₁` and `E₂` of the finite-horizon undiscounted error surface
/// `MSE(h, B) = E₁(h) + E₂(h)/B` for a scalar system with `a ≤ 0`.
#[derive(Debug, Clone)]
pub struct ErrorSurface {
    sigma4: f64,
    a: f64,
    horizon: f64,
    /// `2aT`.
    y: f64,
    /// Series coefficients `(n-1)! g_n` for `n = 5..`, flattened, when `|y|` is small.
    series: Vec<[f64; SERIES_ORDER + 2]>,
}

impl ErrorSurface {
    pub fn new(a: f64, sigma: f64, horizon: f64) -> Result<Self> {
        check_scalar(a, sigma, horizon)?;
        let y = 2.0 * a * horizon;
        let mut series = Vec::new();
        if y.abs() < SERIES_SWITCH {
            for n in 5..=SERIES_ORDER {
                let mut c = [0.0; SERIES_ORDER + 2];
                g_coefficients(n, &mut c);
                let scale = 1.0 / factorial(n - 1);
                for v in c.iter_mut() {
                    *v *= scale;
                }
                series.push(c);
            }
        }
        let s2 = sigma * sigma;
        Ok(Self { sigma4: s2 * s2, a, horizon, y, series })
    }

    pub fn for_system(sys: &ScalarSystem, horizon: f64) -> Result<Self> {
        // the cost weight enters squared
        Self::new(sys.a(), sys.sigma() * libm::sqrt(sys.q()), horizon)
    }

    /// Squared bias `E₁(h)`.
    pub fn e1(&self, h: f64) -> f64 {
        let t = self.horizon;
        let x = 2.0 * self.a * h;
        let psi = phi2(x) / phi1(x);
        let f = phi1(self.y);
        self.sigma4 * t * t * h * h * f * f * psi * psi
    }

    /// `dE₁/dh`.
    pub fn e1_slope(&self, h: f64) -> f64 {
        let t = self.horizon;
        let x = 2.0 * self.a * h;
        let (p1, f) = (phi1(x), phi1(self.y));
        2.0 * self.sigma4 * t * t * f * f * h * (phi2(x) / p1) * phi1_prime(x) / (p1 * p1)
    }

    /// `Σ_n y^{n-5} g_n(r)` and its `r`-derivative.
    fn series_numerator(&self, r: f64) -> (f64, f64) {
        let mut s = 0.0;
        let mut ds = 0.0;
        let mut ypow = 1.0;
        for (i, c) in self.series.iter().enumerate() {
            let n = i + 5;
            let (mut p, mut dp) = (0.0, 0.0);
            for j in (0..=n).rev() {
                dp = dp * r + p;
                p = p * r + c[j];
            }
            s += ypow * p;
            ds += ypow * dp;
            ypow *= self.y;
        }
        (s, ds)
    }

    /// `G(x, y)` and `∂G/∂x` for the direct evaluation of `E₂`.
    fn g_direct(&self, x: f64) -> (f64, f64) {
        let y = self.y;
        let (em1, em2) = (libm::expm1(y), libm::expm1(2.0 * y));
        let big_e = em1 + 1.0;
        let (xm1, xm2) = (libm::expm1(x), libm::expm1(2.0 * x));
        let ex = xm1 + 1.0;
        let g = x * (4.0 * ex * em1 + em2) - y * (xm2 + 4.0 * big_e * xm1);
        let gx = 4.0 * ex * em1 + em2 + 4.0 * x * ex * em1 - y * (2.0 * (xm2 + 1.0) + 4.0 * big_e * ex);
        (g, gx)
    }

    /// Single-trajectory variance term `E₂(h)`.
    pub fn e2(&self, h: f64) -> f64 {
        let t = self.horizon;
        let t4 = t * t * t * t;
        if self.series.is_empty() {
            let x = 2.0 * self.a * h;
            let (g, _) = self.g_direct(x);
            let xm1 = libm::expm1(x);
            2.0 * self.sigma4 * t4 * g / (self.y * self.y * self.y * xm1 * xm1)
        } else {
            let r = h / t;
            let (s, _) = self.series_numerator(r);
            let p = phi1(r * self.y);
            2.0 * self.sigma4 * t4 * s / (r * r * p * p)
        }
    }

    /// `dE₂/dh`.
    pub fn e2_slope(&self, h: f64) -> f64 {
        let t = self.horizon;
        let t4 = t * t * t * t;
        if self.series.is_empty() {
            let x = 2.0 * self.a * h;
            let (g, gx) = self.g_direct(x);
            let xm1 = libm::expm1(x);
            let y3 = self.y * self.y * self.y;
            let dx = 2.0 * self.sigma4 * t4 / y3 * (gx * xm1 - 2.0 * (xm1 + 1.0) * g) / (xm1 * xm1 * xm1);
            2.0 * self.a * dx
        } else {
            let r = h / t;
            let (s, ds) = self.series_numerator(r);
            let ry = r * self.y;
            let p = phi1(ry);
            let df = (ds - s * (2.0 / r + 2.0 * self.y * phi1_prime(ry) / p)) / (r * r * p * p);
            2.0 * self.sigma4 * t4 / t * df
        }
    }

    pub fn mse(&self, h: f64, budget: f64) -> f64 {
        self.e1(h) + self.e2(h) / budget
    }

    /// `∂MSE/∂h`.
    pub fn slope(&self, h: f64, budget: f64) -> f64 {
        self.e1_slope(h) + self.e2_slope(h) / budget
    }
}

/// Exact finite-horizon undiscounted MSE, `E₁(h) + E₂(h)/B`.
pub fn mse_finite_undiscounted(a: f64, sigma: f64, horizon: f64, h: f64, budget: f64) -> Result<f64> {
    check_step(h, budget)?;
    Ok(ErrorSurface::new(a, sigma, horizon)?.mse(h, budget))
}

/// `∂/∂h` of [`mse_finite_undiscounted`].
pub fn mse_slope(a: f64, sigma: f64, horizon: f64, h: f64, budget: f64) -> Result<f64> {
    check_step(h, budget)?;
    Ok(ErrorSurface::new(a, sigma, horizon)?.slope(h, budget))
}

/// MSE of a marginally stable system (`a = 0`).
pub fn mse_marginal(sigma: f64, horizon: f64, h: f64, budget: f64) -> Result<f64> {
    check_scalar(0.0, sigma, horizon)?;
    check_step(h, budget)?;
    let s4 = sigma * sigma * sigma * sigma;
    let t = horizon;
    Ok(s4 * t * t * h * h / 4.0
        + s4 * t * t * t * t * t / (3.0 * h * budget)
        + s4 * t * t * (-2.0 * t * t + 2.0 * h * t - h * h) / (3.0 * budget))
}

/// Leading-order coefficients `(c₁, c₂)` of `c₁ h² + c₂/(hB)`.
pub fn leading_constants(a: f64, sigma: f64, horizon: f64) -> Result<(f64, f64)> {
    check_scalar(a, sigma, horizon)?;
    let s4 = sigma * sigma * sigma * sigma;
    let t = horizon;
    let y = 2.0 * a * t;
    let f = phi1(y);
    let c1 = s4 * t * t * f * f / 4.0;
    // w(y)/y⁴ with w(y) = 2y - e^{2y} + 4(y - 1)e^y + 5
    let w_over_y4 = if y.abs() < SERIES_SWITCH {
        shifted_series(y, 4, 24, |k| (4.0 * k as f64 - 4.0 - libm::exp2(k as f64)) / factorial(k))
    } else {
        let w = 2.0 * y - libm::exp(2.0 * y) + 4.0 * (y - 1.0) * libm::exp(y) + 5.0;
        w / (y * y * y * y)
    };
    let t5 = t * t * t * t * t;
    let c2 = -2.0 * s4 * t5 * w_over_y4;
    Ok((c1, c2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxMse {
    pub approx: f64,
    pub lower: f64,
    pub upper: f64,
    pub c1: f64,
    pub c2: f64,
    /// Lower-order polynomial remainder of the bounds, `σ⁴ h/B · poly(h, a, T)`.
    pub slack: f64,
}

/// Leading-order approximation with the sandwich
/// `c₁h² + c₂/(hB) ≲ MSE ≲ 4c₁h² + 2c₂/(hB)`.
pub fn mse_approx_and_bounds(a: f64, sigma: f64, horizon: f64, h: f64, budget: f64) -> Result<ApproxMse> {
    check_step(h, budget)?;
    let (c1, c2) = leading_constants(a, sigma, horizon)?;
    let s4 = sigma * sigma * sigma * sigma;
    let t = horizon;
    let a4 = a * a * a * a;
    // (32a⁴T³h/3 + 16a⁴T²h²)(1 + 1/(8a⁴h²)), expanded so that a = 0 is finite
    let poly = a4 * (32.0 * t * t * t * h / 3.0 + 16.0 * t * t * h * h) + 4.0 * t * t * t / (3.0 * h) + 2.0 * t * t;
    let slack = s4 * t / budget * poly;
    let approx = c1 * h * h + c2 / (h * budget);
    Ok(ApproxMse { approx, lower: approx, upper: 4.0 * c1 * h * h + 2.0 * c2 / (h * budget) + slack, c1, c2, slack })
}

fn discount_log(a: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument("gamma must lie in (0, 1)"));
    }
    let l = libm::log(gamma);
    if !(a + l < 0.0 && 2.0 * a + l < 0.0) {
        return Err(Error::DivergentTail("requires a + log γ < 0 and 2a + log γ < 0"));
    }
    Ok(l)
}

/// `C(a, γ) = 1 / (log γ (a + log γ) (2a + log γ)²)`.
pub fn discounted_variance_constant(a: f64, gamma: f64) -> Result<f64> {
    if a > 0.0 {
        return Err(Error::UnstableSystem("drift coefficient a > 0"));
    }
    let l = discount_log(a, gamma)?;
    let d = 2.0 * a + l;
    Ok(1.0 / (l * (a + l) * d * d))
}

/// Expansion coefficients `(C₁, C₂, C₃)` of the discounted squared bias
/// `C₁h² + C₂h³ + (1/144 + C₃)h⁴`, per unit `σ⁴`.
pub fn discounted_bias_constants(a: f64, horizon: f64, gamma: f64) -> Result<(f64, f64, f64)> {
    check_scalar(a, 1.0, horizon)?;
    let l = discount_log(a, gamma)?;
    let t = horizon;
    let y = 2.0 * a * t;
    let gt = libm::exp(l * t);
    let f = phi1(y);
    let ey = libm::exp(y);
    // e^{2aT}(2a + log γ) - log γ = 2a (e^{2aT} + log γ · T φ1(2aT))
    let v = ey + l * t * f;
    let c1 = gt * gt * t * t * f * f / 4.0;
    let c2 = gt * t * f * (gt * ey - 1.0 + gt * l * t * f) / 12.0;
    let c3 = gt * (gt * v * v - 2.0 * v) / 144.0;
    Ok((c1, c2, c3))
}

/// Finite-horizon discounted MSE from the small-`h` expansion; the unknown
/// `γ^T`-order correction of the variance coefficient is omitted.
pub fn mse_finite_discounted(a: f64, sigma: f64, horizon: f64, gamma: f64, h: f64, budget: f64) -> Result<f64> {
    check_scalar(a, sigma, horizon)?;
    check_step(h, budget)?;
    let (c1, c2, c3) = discounted_bias_constants(a, horizon, gamma)?;
    let k = discounted_variance_constant(a, gamma)?;
    let s4 = sigma * sigma * sigma * sigma;
    let h2 = h * h;
    Ok(s4 * (c1 * h2 + c2 * h2 * h + (1.0 / 144.0 + c3) * h2 * h2) + s4 * horizon * k / (h * budget))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfiniteMse {
    /// Returned estimate.
    pub value: f64,
    /// `σ⁴ T C(a,γ)/(hB) + σ⁴h⁴/144`.
    pub leading: f64,
    /// Whether `γ^T` is negligible against `h⁴` (`γ^T < h⁴/10`).
    pub tail_negligible: bool,
}

/// Infinite-horizon discounted MSE. Outside the small-tail regime the
/// truncated tail `V_{T,∞}` and the finite-horizon bias expansion are added,
/// giving `σ⁴TC/(hB) + (bias - V_{T,∞})²`.
pub fn mse_infinite_discounted(a: f64, sigma: f64, horizon: f64, gamma: f64, h: f64, budget: f64) -> Result<InfiniteMse> {
    check_scalar(a, sigma, horizon)?;
    check_step(h, budget)?;
    let k = discounted_variance_constant(a, gamma)?;
    let l = libm::log(gamma);
    let s2 = sigma * sigma;
    let s4 = s2 * s2;
    let variance = s4 * horizon * k / (h * budget);
    let h4 = h * h * h * h;
    let leading = variance + s4 * h4 / 144.0;
    let tail_negligible = libm::exp(l * horizon) < h4 / 10.0;
    if tail_negligible {
        return Ok(InfiniteMse { value: leading, leading, tail_negligible });
    }
    // Left Riemann bias of f(t) = γ^t σ² t φ1(2at): -h f(T)/2 + h² (f'(T) - f'(0))/12
    let t = horizon;
    let y = 2.0 * a * t;
    let gt = libm::exp(l * t);
    let f_end = gt * s2 * t * phi1(y);
    let df_end = gt * s2 * (libm::exp(y) + l * t * phi1(y));
    let bias = -0.5 * h * f_end + h * h * (df_end - s2) / 12.0;
    let tail = value::value_tail_scalar(&ScalarSystem::new_unchecked(a, sigma, 1.0), horizon, gamma)?.value;
    let value = variance + (bias - tail) * (bias - tail);
    Ok(InfiniteMse { value, leading, tail_negligible })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadingCoefficients {
    /// Coefficient of `h²`.
    pub c_h2: f64,
    /// Coefficient of `1/(hB)`.
    pub c_hb: f64,
    /// `‖X c - y‖ / ‖y‖` over the fitting points.
    pub fit_residual: f64,
}

/// One exact MSE value for the least-squares fit. `budget` is the budget
/// actually spent, `M N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitPoint {
    pub h: f64,
    pub budget: f64,
    pub mse: f64,
}

/// Condition-number ceiling of the column-normalised design matrix.
pub const MAX_FIT_CONDITION: f64 = 1e8;

/// Least squares of `mse ≈ c_h2 h² + c_hb/(hB)`.
pub fn fit_points(points: &[FitPoint]) -> Result<LeadingCoefficients> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("at least two fit points are required"));
    }
    let rows = points.len();
    let mut x = Mat::zeros(rows, 2);
    let mut y = nalgebra::DVector::zeros(rows);
    for (i, p) in points.iter().enumerate() {
        x[(i, 0)] = p.h * p.h;
        x[(i, 1)] = 1.0 / (p.h * p.budget);
        y[i] = p.mse;
    }
    let norms = [x.column(0).norm(), x.column(1).norm()];
    let mut xs = x.clone();
    for (j, n) in norms.iter().enumerate() {
        if *n == 0.0 {
            return Err(Error::IllConditionedFit { condition: f64::INFINITY });
        }
        xs.column_mut(j).scale_mut(1.0 / n);
    }
    let svd = xs.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MAX_FIT_CONDITION {
        return Err(Error::IllConditionedFit { condition });
    }
    let scaled = svd.solve(&y, 0.0).map_err(|_| Error::IllConditionedFit { condition })?;
    let c = [scaled[0] / norms[0], scaled[1] / norms[1]];
    let residual = (&x * nalgebra::DVector::from_row_slice(&c) - &y).norm() / y.norm().max(f64::MIN_POSITIVE);
    Ok(LeadingCoefficients { c_h2: c[0], c_hb: c[1], fit_residual: residual })
}

/// Exact oracle values over the product grid `h_grid × budgets`
/// (finite horizon, undiscounted). Step sizes must divide `T`.
pub fn oracle_fit_points(sys: &System, horizon: f64, budgets: &[u64], h_grid: &[f64]) -> Result<Vec<FitPoint>> {
    let mode = HorizonMode::FiniteUndiscounted;
    let targets = oracle::targets(sys, horizon, 1.0, mode)?;
    let mut points = Vec::with_capacity(budgets.len() * h_grid.len());
    for &h in h_grid {
        let &first = budgets.first().ok_or(Error::InvalidArgument("no budgets given"))?;
        let plan = build_plan(h, first, horizon, 1.0, mode)?;
        let moments = IsserlisGrid::new(sys, &plan)?.moments();
        for &b in budgets {
            let plan = build_plan(h, b, horizon, 1.0, mode)?;
            let mse = oracle::breakdown(&moments, &targets, plan.episodes()).total;
            points.push(FitPoint { h: plan.step(), budget: plan.effective_budget() as f64, mse });
        }
    }
    Ok(points)
}

/// Fits `c_h2 h² + c_hb/(hB)` to the exact MSE of a vector system.
pub fn fit_leading_coefficients(sys: &VectorSystem, horizon: f64, budgets: &[u64], h_grid: &[f64]) -> Result<LeadingCoefficients> {
    fit_points(&oracle_fit_points(&sys.clone().into(), horizon, budgets, h_grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::mse_exact;
    use crate::system::EvalPlan;

    const FU: HorizonMode = HorizonMode::FiniteUndiscounted;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    /// The MSE in its original unstabilised form, for moderate arguments.
    fn naive(a: f64, sigma: f64, t: f64, h: f64, b: f64) -> f64 {
        let e = libm::exp;
        let s4 = libm::pow(sigma, 4.0);
        let (eh, et) = (e(2.0 * a * h), e(2.0 * a * t));
        let e1 =
            s4 * libm::pow(-2.0 * a * h + eh - 1.0, 2.0) * libm::pow(et - 1.0, 2.0) / (16.0 * libm::pow(a, 4.0) * libm::pow(eh - 1.0, 2.0));
        let e2 = s4 * t * (h * (et - 1.0) * (4.0 * eh + et + 1.0) - (eh - 1.0) * (eh + 4.0 * et + 1.0) * t)
            / (2.0 * a * a * libm::pow(eh - 1.0, 2.0));
        e1 + e2 / b
    }

    fn oracle_total(a: f64, t: f64, m: u64, b: u64) -> (f64, EvalPlan) {
        let plan = EvalPlan::from_steps(t, m, b, 1.0, FU).unwrap();
        let sys: System = ScalarSystem::new_unchecked(a, 1.0, 1.0).into();
        (mse_exact(&sys, &plan).unwrap().total, plan)
    }

    #[test]
    fn g_polynomials_vanish_below_fifth_order() {
        let mut c = [0.0; SERIES_ORDER + 2];
        for n in 2..5 {
            g_coefficients(n, &mut c[..]);
            assert!(c[..=n].iter().all(|v| *v == 0.0), "n = {n}: {:?}", &c[..=n]);
            c = [0.0; SERIES_ORDER + 2];
        }
        g_coefficients(5, &mut c);
        assert_eq!(&c[..6], &[0.0, 4.0, -8.0, 8.0, -4.0, 0.0]);
    }

    #[test]
    fn matches_naive_formula() {
        for &(a, t) in &[(-1.0, 8.0), (-2.0, 1.0), (-0.1, 8.0), (-0.1, 1.0), (-0.2, 1.0)] {
            for &h in &[0.5, 0.1, 0.01] {
                let v = mse_finite_undiscounted(a, 1.3, t, h, 1e4).unwrap();
                assert!(rel(v, naive(a, 1.3, t, h, 1e4)) < 1e-7, "a={a} T={t} h={h}");
            }
        }
    }

    #[test]
    fn oracle_identity() {
        for &a in &[-2.0, -1.0, -0.1] {
            for &t in &[1.0, 8.0] {
                for &m in &[2u64, 4, 8, 16, 64] {
                    for &b in &[1u64 << 10, 1 << 14] {
                        let (o, plan) = oracle_total(a, t, m, b);
                        let c = mse_finite_undiscounted(a, 1.0, t, plan.step(), plan.effective_budget() as f64).unwrap();
                        assert!(rel(c, o) < 1e-9, "a={a} T={t} m={m} B={b}: {c} vs {o}");
                    }
                }
            }
        }
    }

    #[test]
    fn marginal_identity_and_continuity() {
        for &t in &[1.0, 8.0] {
            for &m in &[1u64, 2, 4, 16, 64] {
                let (o, plan) = oracle_total(0.0, t, m, 1 << 10);
                let b = plan.effective_budget() as f64;
                let cor = mse_marginal(1.0, t, plan.step(), b).unwrap();
                assert!(rel(cor, o) < 1e-10, "T={t} m={m}");
                assert!(rel(mse_finite_undiscounted(0.0, 1.0, t, plan.step(), b).unwrap(), cor) < 1e-12);
            }
        }
        let near = mse_finite_undiscounted(-1e-8, 1.0, 1.0, 0.25, 64.0).unwrap();
        assert!(rel(near, mse_marginal(1.0, 1.0, 0.25, 64.0).unwrap()) < 1e-6);
        assert!((mse_marginal(1.0, 1.0, 0.1, 1000.0).unwrap() - 0.0052300).abs() < 1e-7);
        assert_eq!(mse_finite_undiscounted(-1.0, 0.0, 8.0, 0.5, 1e3).unwrap(), 0.0);
        assert_eq!(mse_marginal(0.0, 1.0, 0.1, 1e3).unwrap(), 0.0);
    }

    #[test]
    fn branches_join_smoothly() {
        // y = 2aT either side of the series switch
        for &y in &[-0.4999999, -0.5000001] {
            let a = y / 2.0;
            for &h in &[0.001, 0.1, 0.7] {
                let v = mse_finite_undiscounted(a, 1.0, 1.0, h, 1e3).unwrap();
                assert!(rel(v, naive(a, 1.0, 1.0, h, 1e3)) < 1e-8);
            }
        }
    }

    #[test]
    fn slope_matches_finite_differences() {
        for &(a, t) in &[(-1.0, 8.0), (-0.1, 1.0), (0.0, 2.0), (-2.0, 1.0)] {
            let s = ErrorSurface::new(a, 1.0, t).unwrap();
            for &h in &[0.01, 0.2, 0.5] {
                let d = 1e-6 * h;
                let fd = (s.mse(h + d, 1e4) - s.mse(h - d, 1e4)) / (2.0 * d);
                assert!(rel(s.slope(h, 1e4), fd) < 1e-6, "a={a} T={t} h={h}");
            }
        }
    }

    #[test]
    fn leading_constants_examples() {
        let (c1, _) = leading_constants(-1.0, 1.0, 1.0).unwrap();
        assert!((c1 - libm::pow(libm::exp(-2.0) - 1.0, 2.0) / 16.0).abs() < 1e-15);
        assert!((c1 - 0.046728).abs() < 1e-6);
        for &(a, t) in &[(-1.0, 1.0), (-0.1, 1.0), (-1.0, 8.0), (-0.2, 1.0)] {
            let (_, c2) = leading_constants(a, 1.0, t).unwrap();
            let e = libm::exp;
            let naive = -t * (4.0 * a * t - e(4.0 * a * t) + e(2.0 * a * t) * (8.0 * a * t - 4.0) + 5.0) / (8.0 * libm::pow(a, 4.0));
            assert!(rel(c2, naive) < 1e-8, "a={a} T={t}");
        }
        let (c1, c2) = leading_constants(0.0, 1.0, 2.0).unwrap();
        assert_eq!(c1, 1.0);
        assert!(rel(c2, 32.0 / 3.0) < 1e-15);
    }

    #[test]
    fn sandwich_holds() {
        for &(a, t) in &[(-1.0, 1.0), (-1.0, 8.0), (-0.1, 1.0), (-2.0, 8.0)] {
            for &b in &[1024.0, 16384.0, 1e6] {
                for &m in &[4u64, 10, 40, 200] {
                    let h = t / m as f64;
                    if h > 0.1 && m < 10 {
                        continue;
                    }
                    let ap = mse_approx_and_bounds(a, 1.0, t, h, b).unwrap();
                    let exact = mse_finite_undiscounted(a, 1.0, t, h, b).unwrap();
                    assert!(ap.lower <= ap.upper);
                    assert!(ap.lower - ap.slack <= exact && exact <= ap.upper + ap.slack, "a={a} T={t} B={b} h={h}");
                }
            }
        }
    }

    #[test]
    fn approximation_dominates_as_h_shrinks() {
        let mut prev = f64::INFINITY;
        for &m in &[8u64, 32, 128, 512] {
            let h = 1.0 / m as f64;
            let b = (m * m * m) as f64;
            let ap = mse_approx_and_bounds(-1.0, 1.0, 1.0, h, b).unwrap().approx;
            let gap = (ap / mse_finite_undiscounted(-1.0, 1.0, 1.0, h, b).unwrap() - 1.0).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 0.02);
    }

    #[test]
    fn discounted_constants() {
        assert!(rel(discounted_variance_constant(-1.0, libm::exp(-1.0)).unwrap(), 1.0 / 18.0) < 1e-15);
        let (c1, c2, c3) = discounted_bias_constants(-1.0, 8.0, 0.9).unwrap();
        let expected = libm::pow(0.9, 16.0) * libm::pow(1.0 - libm::exp(-16.0), 2.0) / 16.0;
        assert!(rel(c1, expected) < 1e-13);
        // naive forms
        let (a, t, g) = (-1.0, 8.0, 0.9f64);
        let (l, gt, et) = (g.ln(), g.powf(t), libm::exp(2.0 * a * t));
        let u = et * (2.0 * a + l) - l;
        assert!(rel(c2, gt * (et - 1.0) * (gt * u - 2.0 * a) / (48.0 * a * a)) < 1e-12);
        assert!(rel(c3, gt * (gt * u * u - 4.0 * a * u) / (576.0 * a * a)) < 1e-12);
        assert_eq!(mse_finite_discounted(-1.0, 0.0, 8.0, 0.9, 0.1, 1e4).unwrap(), 0.0);
        assert!(matches!(discounted_variance_constant(-1.0, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn finite_discounted_within_oracle_budget() {
        let (t, g, b) = (8.0, 0.9, 1u64 << 14);
        let sys: System = ScalarSystem::new_unchecked(-1.0, 1.0, 1.0).into();
        for &m in &[80u64, 160, 400] {
            let plan = EvalPlan::from_steps(t, m, b, g, HorizonMode::FiniteDiscounted).unwrap();
            let h = plan.step();
            let bb = plan.effective_budget() as f64;
            let o = mse_exact(&sys, &plan).unwrap().total;
            let c = mse_finite_discounted(-1.0, 1.0, t, g, h, bb).unwrap();
            let tol = 10.0 * (libm::pow(h, 5.0) + libm::pow(g, t) / bb + 1.0 / bb) * libm::pow(t, 5.0);
            assert!((o - c).abs() <= tol, "h={h}: {o} vs {c}");
        }
    }

    #[test]
    fn infinite_within_oracle_budget() {
        let (t, g, b) = (30.0, libm::exp(-1.0), 1_000_000u64);
        let sys: System = ScalarSystem::new_unchecked(-1.0, 1.0, 1.0).into();
        for &m in &[300u64, 600] {
            let plan = EvalPlan::from_steps(t, m, b, g, HorizonMode::InfiniteDiscounted).unwrap();
            let h = plan.step();
            let o = mse_exact(&sys, &plan).unwrap().total;
            let c = mse_infinite_discounted(-1.0, 1.0, t, g, h, plan.effective_budget() as f64).unwrap();
            assert!(c.tail_negligible);
            assert!((o - c.value).abs() <= 20.0 * (libm::pow(h, 5.0) + libm::pow(g, t) + 1e-6), "h={h}");
        }
        assert_eq!(mse_infinite_discounted(-1.0, 0.0, 10.0, 0.5, 0.1, 1e4).unwrap().value, 0.0);
    }

    #[test]
    fn infinite_outside_regime_tracks_oracle() {
        let (t, g) = (3.0, 0.7);
        let sys: System = ScalarSystem::new_unchecked(-1.0, 1.0, 1.0).into();
        for &m in &[30u64, 60] {
            let plan = EvalPlan::from_steps(t, m, 1 << 16, g, HorizonMode::InfiniteDiscounted).unwrap();
            let o = mse_exact(&sys, &plan).unwrap().total;
            let c = mse_infinite_discounted(-1.0, 1.0, t, g, plan.step(), plan.effective_budget() as f64).unwrap();
            assert!(!c.tail_negligible);
            assert!(rel(c.value, o) < 0.05, "m={m}: {} vs {o}", c.value);
        }
    }

    #[test]
    fn scalar_fit_recovers_constants() {
        let sys: System = ScalarSystem::new_unchecked(-1.0, 1.0, 1.0).into();
        let h_grid: Vec<f64> = (20..160).step_by(3).map(|m| 1.0 / m as f64).collect();
        let budgets = [1u64 << 16, 1 << 18, 1 << 20];
        let fit = fit_points(&oracle_fit_points(&sys, 1.0, &budgets, &h_grid).unwrap()).unwrap();
        let (c1, c2) = leading_constants(-1.0, 1.0, 1.0).unwrap();
        assert!(rel(fit.c_h2, c1) < 0.05, "{} vs {c1}", fit.c_h2);
        assert!(rel(fit.c_hb, c2) < 0.05, "{} vs {c2}", fit.c_hb);
    }

    #[test]
    fn vector_fit_decouples() {
        let h_grid: Vec<f64> = (20..100).step_by(8).map(|m| 1.0 / m as f64).collect();
        let budgets = [1u64 << 16, 1 << 18];
        let scalar: System = ScalarSystem::new_unchecked(-1.0, 1.0, 1.0).into();
        let one = fit_points(&oracle_fit_points(&scalar, 1.0, &budgets, &h_grid).unwrap()).unwrap();
        let v = VectorSystem::new_unchecked(-Mat::identity(2, 2), 1.0, Mat::identity(2, 2));
        let two = fit_leading_coefficients(&v, 1.0, &budgets, &h_grid).unwrap();
        // biases add across independent coordinates, variances add
        // exact per point; the fitted coefficients inherit it up to model mismatch
        assert!(rel(two.c_h2, 4.0 * one.c_h2) < 0.02, "{} vs {}", two.c_h2, one.c_h2);
        assert!(rel(two.c_hb, 2.0 * one.c_hb) < 0.02, "{} vs {}", two.c_hb, one.c_hb);
    }

    #[test]
    fn degenerate_fit_is_rejected() {
        let p = [FitPoint { h: 0.1, budget: 1e4, mse: 1.0 }, FitPoint { h: 0.1, budget: 1e4, mse: 1.0 }];
        assert!(matches!(fit_points(&p), Err(Error::IllConditionedFit { .. })));
    }
}

//! Expected costs `V_T`, `V_{T,∞}` and `V_∞` that the estimator targets.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::process::CovarianceKernel;
use crate::quadrature;
use crate::special::{phi1, phi2};
use crate::system::{ScalarSystem, VectorSystem};

/// How a value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueMethod {
    ClosedForm,
    Lyapunov,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueResult {
    pub value: f64,
    pub method: ValueMethod,
    pub est_abs_error: f64,
}

impl ValueResult {
    fn exact(value: f64, method: ValueMethod) -> Self {
        Self { value, method, est_abs_error: f64::EPSILON * 16.0 * value.abs().max(1.0) }
    }
}

/// Relative tolerance of the vector finite-horizon quadrature.
pub const VECTOR_QUAD_TOL: f64 = 1e-11;

/// Switch to power series in the drift once `|2a| · scale` drops below this.
const SMALL_DRIFT: f64 = 1e-3;
const DRIFT_TERMS: usize = 6;

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument("gamma must lie in (0, 1]"))
    }
}

/// `∫_0^1 u^j e^{zu} du` for `j = 0..out.len()`.
fn unit_moments(z: f64, out: &mut [f64]) {
    if z.abs() <= 5.0 {
        for (j, slot) in out.iter_mut().enumerate() {
            // Σ_k z^k / (k! (j + k + 1))
            let mut term = 1.0;
            let mut acc = 0.0;
            for k in 0..60 {
                acc += term / (j + k + 1) as f64;
                term *= z / (k + 1) as f64;
            }
            *slot = acc;
        }
    } else {
        let ez = libm::exp(z);
        let mut m = phi1(z);
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = m;
            m = (ez - (j + 1) as f64 * m) / z;
        }
    }
}

/// `V_T = q ∫_0^T γ^t E[x(t)²] dt`.
pub fn value_finite_scalar(sys: &ScalarSystem, horizon: f64, gamma: f64) -> Result<ValueResult> {
    check_gamma(gamma)?;
    if !(horizon > 0.0) {
        return Err(Error::NonPositiveParameter("T"));
    }
    let (a, s2, q) = (sys.a(), sys.sigma() * sys.sigma(), sys.q());
    let t = horizon;
    if gamma == 1.0 {
        // σ²/(2a) ((e^{2aT} - 1)/(2a) - T)
        return Ok(ValueResult::exact(q * s2 * t * t * phi2(2.0 * a * t), ValueMethod::ClosedForm));
    }
    let l = libm::log(gamma);
    let value = if (2.0 * a * t).abs() >= SMALL_DRIFT {
        // σ²/(2a) ((γ^T e^{2aT} - 1)/(log γ + 2a) - (γ^T - 1)/log γ)
        t * (phi1((l + 2.0 * a) * t) - phi1(l * t)) / (2.0 * a)
    } else {
        // Σ_m (2a)^m/(m+1)! ∫ t^{m+1} γ^t dt
        let mut mom = [0.0; DRIFT_TERMS + 1];
        unit_moments(l * t, &mut mom);
        let mut acc = 0.0;
        let mut coeff = 1.0;
        let mut tp = t * t;
        for m in 0..DRIFT_TERMS {
            acc += coeff * tp * mom[m + 1];
            coeff *= 2.0 * a / (m + 2) as f64;
            tp *= t;
        }
        acc
    };
    Ok(ValueResult::exact(q * s2 * value, ValueMethod::ClosedForm))
}

fn check_tail(a: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::DivergentTail("the tail needs gamma < 1"));
    }
    let l = libm::log(gamma);
    if !(a + l < 0.0 && 2.0 * a + l < 0.0) {
        return Err(Error::DivergentTail("requires a + log γ < 0 and 2a + log γ < 0"));
    }
    Ok(l)
}

/// `V_{T,∞} = q ∫_T^∞ γ^t E[x(t)²] dt`.
pub fn value_tail_scalar(sys: &ScalarSystem, horizon: f64, gamma: f64) -> Result<ValueResult> {
    let (a, s2, q) = (sys.a(), sys.sigma() * sys.sigma(), sys.q());
    let l = check_tail(a, gamma)?;
    let t = horizon;
    let scale = t.max(1.0 / -l);
    let value = if (2.0 * a).abs() * scale >= SMALL_DRIFT {
        // σ² γ^T/(2a) (1/log γ - e^{2aT}/(log γ + 2a))
        let c = l + 2.0 * a;
        (libm::exp(c * t) / -c - libm::exp(l * t) / -l) / (2.0 * a)
    } else {
        // Σ_m (2a)^m/(m+1)! ∫_T^∞ t^{m+1} e^{Lt} dt, with
        // ∫_T^∞ t^j e^{Lt} dt = e^{LT} Σ_i j!/i! T^i / (-L)^{j-i+1}
        let upper = |j: usize| {
            let mut acc = 0.0;
            let mut ratio = 1.0 / -l; // j!/j! T^j / (-L)
            let mut tp = 1.0;
            for _ in 0..j {
                tp *= t;
            }
            for i in (0..=j).rev() {
                acc += ratio * tp;
                if i > 0 {
                    tp /= t.max(f64::MIN_POSITIVE);
                    ratio *= i as f64 / -l;
                }
            }
            acc * libm::exp(l * t)
        };
        let mut acc = 0.0;
        let mut coeff = 1.0;
        for m in 0..DRIFT_TERMS {
            acc += coeff * upper(m + 1);
            coeff *= 2.0 * a / (m + 2) as f64;
        }
        acc
    };
    Ok(ValueResult::exact(q * s2 * value, ValueMethod::ClosedForm))
}

/// `V_∞ = V_T + V_{T,∞}`, evaluated at two horizons; the spread is reported
/// as the error estimate.
pub fn value_infinite_scalar(sys: &ScalarSystem, gamma: f64) -> Result<ValueResult> {
    check_tail(sys.a(), gamma)?;
    let at = |t: f64| -> Result<f64> { Ok(value_finite_scalar(sys, t, gamma)?.value + value_tail_scalar(sys, t, gamma)?.value) };
    let (v1, v5) = (at(1.0)?, at(5.0)?);
    Ok(ValueResult { value: v1, method: ValueMethod::ClosedForm, est_abs_error: (v1 - v5).abs().max(f64::EPSILON * v1.abs()) })
}

/// `∫_0^T γ^t tr(Q Σ(t)) dt` by composite Gauss–Legendre quadrature.
pub fn value_finite_vector(sys: &VectorSystem, horizon: f64, gamma: f64) -> Result<ValueResult> {
    check_gamma(gamma)?;
    if !(horizon > 0.0) {
        return Err(Error::NonPositiveParameter("T"));
    }
    let kernel = CovarianceKernel::new(sys);
    let l = libm::log(gamma);
    let mut failure = None;
    let value = quadrature::integrate(
        |t| match kernel.gramian(t) {
            Ok(g) => libm::exp(l * t) * linalg::trace_of_product(sys.q(), &g),
            Err(e) => {
                failure = Some(e);
                0.0
            }
        },
        0.0,
        horizon,
        VECTOR_QUAD_TOL,
        0.0,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(ValueResult { value, method: ValueMethod::Quadrature, est_abs_error: VECTOR_QUAD_TOL * value.abs() })
}

fn shifted_drift(sys: &VectorSystem, gamma: f64) -> Result<(Mat, f64)> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::DivergentTail("the infinite horizon needs gamma < 1"));
    }
    let l = libm::log(gamma);
    let n = sys.dim();
    let shifted = sys.a() + Mat::identity(n, n) * (0.5 * l);
    if linalg::spectral_abscissa(&shifted) >= 0.0 {
        return Err(Error::DivergentTail("requires Re λ(A) + log(γ)/2 < 0"));
    }
    Ok((shifted, l))
}

/// `tr(Q P_γ) / (-log γ)` with `(A + ½ log γ I) P_γ + P_γ (A + ½ log γ I)ᵀ + σ² I = 0`.
pub fn value_infinite_vector(sys: &VectorSystem, gamma: f64) -> Result<ValueResult> {
    let (shifted, l) = shifted_drift(sys, gamma)?;
    let n = sys.dim();
    let w = Mat::identity(n, n) * (sys.sigma() * sys.sigma());
    let p = linalg::lyapunov_solve(&shifted, &w)?;
    let value = linalg::trace_of_product(sys.q(), &p) / -l;
    Ok(ValueResult::exact(value, ValueMethod::Lyapunov))
}

/// `∫_T^∞ γ^t tr(Q Σ(t)) dt`.
///
/// For strictly stable `A` this is `tr(Q (γ^T P / (-log γ) - e^{A_γ T} X e^{A_γᵀ T}))`
/// with `A_γ X + X A_γᵀ + P = 0`; otherwise the difference `V_∞ - V_T`.
pub fn value_tail_vector(sys: &VectorSystem, horizon: f64, gamma: f64) -> Result<ValueResult> {
    let (shifted, l) = shifted_drift(sys, gamma)?;
    let kernel = CovarianceKernel::new(sys);
    match kernel.stationary() {
        Some(st) => {
            let p = st.matrix();
            let x = linalg::lyapunov_solve(&shifted, p)?;
            let e = linalg::matrix_exponential(&shifted, horizon);
            let tail = p * (libm::exp(l * horizon) / -l) - &e * x * e.transpose();
            let value = linalg::trace_of_product(sys.q(), &tail);
            Ok(ValueResult::exact(value, ValueMethod::Lyapunov))
        }
        None => {
            let inf = value_infinite_vector(sys, gamma)?;
            let fin = value_finite_vector(sys, horizon, gamma)?;
            Ok(ValueResult {
                value: inf.value - fin.value,
                method: ValueMethod::Quadrature,
                est_abs_error: inf.est_abs_error + fin.est_abs_error,
            })
        }
    }
}

//! Moments, covariance kernels and exact one-step transition laws of the
//! Langevin process started at the origin.
//!
//! Scalar closed forms are written in terms of [`phi1`] so that the marginally
//! stable case `a = 0` is the continuous limit of the stable one.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::quadrature;
use crate::special::phi1;
use crate::system::{ScalarSystem, System, VectorSystem};

/// `E[x(t)²] = σ² (e^{2at} - 1) / (2a)`, and `σ² t` at `a = 0`.
pub fn second_moment(sys: &ScalarSystem, t: f64) -> f64 {
    sys.sigma() * sys.sigma() * t * phi1(2.0 * sys.a() * t)
}

/// `E[x(t)⁴] = 3 σ⁴ (e^{2at} - 1)² / (4a²)`.
pub fn fourth_moment(sys: &ScalarSystem, t: f64) -> f64 {
    let s2 = sys.sigma() * sys.sigma();
    let g = t * phi1(2.0 * sys.a() * t);
    3.0 * s2 * s2 * g * g
}

/// `E[x(s)² x(t)²]`, symmetric in its arguments.
///
/// For `s ≤ t` this is `σ⁴/(4a²) (e^{2as} - 1)(3e^{2at} - 2e^{2a(t-s)} - 1)`,
/// regrouped into `phi1` quotients.
pub fn cross_moment(sys: &ScalarSystem, s: f64, t: f64) -> f64 {
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    let a2 = 2.0 * sys.a();
    let s2 = sys.sigma() * sys.sigma();
    let head = s * phi1(a2 * s);
    let tail = 3.0 * t * phi1(a2 * t) - 2.0 * (t - s) * phi1(a2 * (t - s));
    s2 * s2 * head * tail
}

/// `E[x(s) x(t)] = σ² e^{a|t-s|} m φ₁(2am)` with `m = min(s, t)`.
pub fn cov_pair(sys: &ScalarSystem, s: f64, t: f64) -> f64 {
    let m = s.min(t);
    let gap = (t - s).abs();
    sys.sigma() * sys.sigma() * libm::exp(sys.a() * gap) * m * phi1(2.0 * sys.a() * m)
}

/// Stationary covariance `P` solving `A P + P Aᵀ + σ² I = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryGramian {
    p: Mat,
}

impl StationaryGramian {
    /// Requires every eigenvalue of `A` to have a strictly negative real part.
    pub fn new(sys: &VectorSystem) -> Result<Self> {
        if linalg::spectral_abscissa(sys.a()) >= 0.0 {
            return Err(Error::UnstableSystem("stationary Gramian needs a strictly stable matrix"));
        }
        let n = sys.dim();
        let w = Mat::identity(n, n) * (sys.sigma() * sys.sigma());
        let p = linalg::lyapunov_solve(sys.a(), &w)?;
        Ok(Self { p })
    }

    pub fn matrix(&self) -> &Mat {
        &self.p
    }
}

/// Covariance kernel `C(s, t) = E[X(s) X(t)ᵀ]` of a vector system.
///
/// `Σ(t) = C(t, t)` is evaluated by its power series for short times, by the
/// stationary identity `Σ(t) = P - e^{At} P e^{Aᵀt}` for stable `A`, and by
/// quadrature of `σ² ∫ e^{Au} e^{Aᵀu} du` otherwise.
#[derive(Debug, Clone)]
pub struct CovarianceKernel {
    a: Mat,
    sigma: f64,
    stationary: Option<StationaryGramian>,
    a_norm: f64,
}

/// Absolute tolerance of the Gramian quadrature fallback.
pub const GRAMIAN_QUAD_TOL: f64 = 1e-12;
const SERIES_TERMS: usize = 30;

impl CovarianceKernel {
    pub fn new(sys: &VectorSystem) -> Self {
        let stationary = StationaryGramian::new(sys).ok();
        let a_norm = sys.a().column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        Self { a: sys.a().clone(), sigma: sys.sigma(), stationary, a_norm }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn stationary(&self) -> Option<&StationaryGramian> {
        self.stationary.as_ref()
    }

    /// Controllability Gramian `Σ(t)`.
    pub fn gramian(&self, t: f64) -> Result<Mat> {
        let n = self.dim();
        if t <= 0.0 {
            return Ok(Mat::zeros(n, n));
        }
        let s2 = self.sigma * self.sigma;
        if 2.0 * self.a_norm * t <= 1.0 {
            return Ok(self.gramian_series(t) * s2);
        }
        if let Some(st) = &self.stationary {
            let e = linalg::matrix_exponential(&self.a, t);
            let p = st.matrix();
            let g = p - &e * p * e.transpose();
            return Ok((&g + g.transpose()) * 0.5);
        }
        let a = &self.a;
        let g = quadrature::integrate_with(
            |u| {
                let e = linalg::matrix_exponential(a, u);
                &e * e.transpose()
            },
            0.0,
            t,
            0.0,
            GRAMIAN_QUAD_TOL / s2,
            Mat::zeros(n, n),
            |m: &Mat| m.amax(),
        )?;
        Ok((&g + g.transpose()) * (0.5 * s2))
    }

    // ∫_0^t e^{Au} e^{Aᵀu} du = Σ_k t^{k+1}/(k+1)! S_k,  S_{k+1} = A S_k + S_k Aᵀ
    fn gramian_series(&self, t: f64) -> Mat {
        let n = self.dim();
        let mut s = Mat::identity(n, n);
        let mut coeff = t;
        let mut acc = &s * coeff;
        for k in 1..SERIES_TERMS {
            s = &self.a * &s + &s * self.a.transpose();
            coeff *= t / (k as f64 + 1.0);
            acc += &s * coeff;
        }
        acc
    }

    /// `C(s, t)`; equals `Σ(s) e^{Aᵀ(t-s)}` for `s ≤ t` and `C(t, s)ᵀ` otherwise.
    pub fn cov(&self, s: f64, t: f64) -> Result<Mat> {
        if s <= t {
            let g = self.gramian(s)?;
            Ok(g * linalg::matrix_exponential(&self.a, t - s).transpose())
        } else {
            Ok(self.cov(t, s)?.transpose())
        }
    }
}

/// `E[X(s) X(t)ᵀ]` for a vector system.
pub fn cov_matrix(sys: &VectorSystem, s: f64, t: f64) -> Result<Mat> {
    CovarianceKernel::new(sys).cov(s, t)
}

/// Exact law of one grid step: `X(t+h) = Φ X(t) + η`, `η ~ N(0, Σ(h))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionLaw {
    pub phi: Mat,
    pub step_cov: Mat,
}

pub fn transition(sys: &System, h: f64) -> Result<TransitionLaw> {
    if !(h > 0.0) {
        return Err(Error::NonPositiveParameter("h"));
    }
    match sys {
        System::Scalar(s) => {
            Ok(TransitionLaw { phi: Mat::from_element(1, 1, libm::exp(s.a() * h)), step_cov: Mat::from_element(1, 1, second_moment(s, h)) })
        }
        System::Vector(v) => {
            let kernel = CovarianceKernel::new(v);
            Ok(TransitionLaw { phi: linalg::matrix_exponential(v.a(), h), step_cov: kernel.gramian(h)? })
        }
    }
}

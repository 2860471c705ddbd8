//! Dense matrix kernels: matrix exponential, continuous Lyapunov solver,
//! spectral checks and a pivot-tolerant Cholesky factor.

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

fn norm1(m: &Mat) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(A t)` by degree-13 Padé approximation with scaling and squaring.
pub fn matrix_exponential(a: &Mat, t: f64) -> Mat {
    let n = a.nrows();
    let at = a * t;
    let norm = norm1(&at);
    if norm == 0.0 {
        return Mat::identity(n, n);
    }
    let squarings = if norm > THETA13 { libm::ceil(libm::log2(norm / THETA13)) as i32 } else { 0 };
    let a1 = at * libm::exp2(-(squarings as f64));
    let ident = Mat::identity(n, n);
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = &a1 * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular for scaled input");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(a: &Mat) -> Vec<Complex<f64>> {
    a.clone().complex_eigenvalues().iter().copied().collect()
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &Mat) -> f64 {
    eigenvalues(a).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    let scale = m.amax().max(1.0);
    m.is_square() && (m - m.transpose()).amax() <= tol * scale
}

/// Symmetric and strictly positive definite.
pub fn is_spd(m: &Mat) -> bool {
    is_symmetric(m, 1e-12) && m.clone().cholesky().is_some() && {
        let eig = nalgebra::SymmetricEigen::new(m.clone());
        eig.eigenvalues.iter().all(|&l| l > 0.0)
    }
}

/// Solves `A P + P Aᵀ + W = 0` through the Kronecker-vectorised system
/// `(I ⊗ A + A ⊗ I) vec(P) = -vec(W)`.
pub fn lyapunov_solve(a: &Mat, w: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: w.nrows() });
    }
    let eig = eigenvalues(a);
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for li in &eig {
        for lj in &eig {
            let z = li + lj;
            if libm::hypot(z.re, z.im) <= 1e-12 * scale {
                return Err(Error::SingularLyapunov);
            }
        }
    }
    let ident = Mat::identity(n, n);
    let op = ident.kronecker(a) + a.kronecker(&ident);
    let rhs = nalgebra::DVector::from_iterator(n * n, w.iter().map(|v| -v));
    let lu = op.lu();
    let mut x = lu.solve(&rhs).ok_or(Error::SingularLyapunov)?;
    // one round of iterative refinement
    let op = ident.kronecker(a) + a.kronecker(&ident);
    let residual = &rhs - &op * &x;
    if let Some(dx) = lu.solve(&residual) {
        x += dx;
    }
    let mut p = Mat::from_column_slice(n, n, x.as_slice());
    if is_symmetric(w, 1e-14) {
        p = (&p + p.transpose()) * 0.5;
    }
    Ok(p)
}

/// Lower-triangular `L` with `L Lᵀ = m` for symmetric positive semi-definite
/// `m`. Zero (or round-off negative) pivots produce zero columns.
pub fn psd_cholesky(m: &Mat) -> Mat {
    let n = m.nrows();
    let mut l = Mat::zeros(n, n);
    let scale = m.amax();
    let floor = 1e-14 * scale;
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= floor {
            continue;
        }
        let pivot = libm::sqrt(d);
        l[(j, j)] = pivot;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    l
}

/// `tr(X Y)` without forming the product.
pub fn trace_of_product(x: &Mat, y: &Mat) -> f64 {
    let n = x.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += x[(i, k)] * y[(k, i)];
        }
    }
    acc
}

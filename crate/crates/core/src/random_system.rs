//! Random stable drift matrices with eigenvalues in `[-1.5, -0.75]`.

use alloc::vec::Vec;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Mat;
use crate::sim::standard_normal;

const SYSTEM_TAG: u64 = 0x7379_735f_7361_6d70;

fn system_rng(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[24..].copy_from_slice(&SYSTEM_TAG.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Eigenvalues for an `n × n` system: `-1` always, then `λ₁ ∈ [-1.5, -1)`,
/// `λ₃ ∈ (-1, -0.75]`, and further values uniform on `[-1.5, -0.75]`.
/// Returned in the order `λ₁, -1, λ₃, …`, truncated for `n < 3`.
pub fn stable_eigenvalues<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 1 {
        out.push(-1.0);
        return out;
    }
    if n >= 2 {
        out.push(rng.random_range(-1.5..-1.0));
        out.push(-1.0);
    }
    if n >= 3 {
        out.push(-0.75 - 0.25 * rng.random::<f64>());
    }
    while out.len() < n {
        out.push(rng.random_range(-1.5..=-0.75));
    }
    out
}

/// Haar orthogonal matrix: QR of a Gaussian matrix with `Q` columns
/// multiplied by `sign(R_ii)`.
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    let g = Mat::from_fn(n, n, |_, _| standard_normal(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `A = Lᵀ Λ L` with `L` Haar orthogonal; symmetric with the spectrum of
/// [`stable_eigenvalues`].
pub fn sample_stable_matrix(n: usize, seed: u64) -> Mat {
    let mut rng = system_rng(seed);
    let lambda = stable_eigenvalues(n, &mut rng);
    let l = haar_orthogonal(n, &mut rng);
    let a = l.transpose() * Mat::from_diagonal(&DVector::from_vec(lambda)) * &l;
    (&a + a.transpose()) * 0.5
}

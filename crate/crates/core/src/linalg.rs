//! Small dense helpers shared by the low-rank kernels: type aliases, the
//! Hermitian eigensolver wrapper, phase normalization and seeded random
//! vectors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
///
/// Only the Hermitian part `(M + M*)/2` is used.
pub fn eigh_desc(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "eigh_desc needs a square matrix");
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let herm = hermitian_part(m);
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    let n = m.nrows();
    CMat::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Scales each column so that its largest-magnitude entry is real positive.
/// The first entry attaining the maximum wins ties.
pub fn normalize_phases(v: &mut CMat) {
    for mut col in v.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, z) in col.iter().enumerate() {
            let a = z.norm();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if best_abs > 0.0 {
            let phase = col[best].conj() / best_abs;
            col.iter_mut().for_each(|z| *z *= phase);
        }
    }
}

/// Deterministic pseudo-random unit vector.
pub fn random_unit(n: usize, seed: u64) -> CVec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_unit_with(n, &mut rng)
}

pub(crate) fn random_unit_with(n: usize, rng: &mut ChaCha8Rng) -> CVec {
    let mut v = CVec::from_fn(n, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let nrm = v.norm();
    v.unscale_mut(nrm);
    v
}

/// `‖M‖_max`, the largest entry magnitude.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// `‖V*V − I‖_max` for a tall factor.
pub fn orthonormality_defect(v: &CMat) -> f64 {
    let gram = v.ad_mul(v);
    let n = gram.nrows();
    max_abs(&(gram - CMat::identity(n, n)))
}

/// Dense `V diag(w) V*`. Only meant for verification-sized problems.
pub fn reconstruct(v: &CMat, weights: &[f64]) -> CMat {
    let mut vw = v.clone();
    for (mut col, &w) in vw.column_iter_mut().zip(weights) {
        col.scale_mut(w);
    }
    vw * v.adjoint()
}

/// Orthogonal projector onto the column span of an orthonormal factor.
pub fn projector(v: &CMat) -> CMat {
    v * v.adjoint()
}

pub fn real_diag(values: &[f64]) -> CMat {
    CMat::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&x| re(x)),
    ))
}

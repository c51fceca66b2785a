//! Leading eigenpairs of a Hermitian operator known only through its action.
//!
//! Thick-restart Lanczos with full (twice-iterated classical Gram–Schmidt)
//! reorthogonalization. The projected matrix is taken from the
//! orthogonalization coefficients, so after a restart the arrowhead
//! couplings between kept Ritz vectors and the new residual direction are
//! picked up automatically. An invariant subspace (breakdown) is continued
//! with a fresh random direction orthogonal to the basis, which is also what
//! lets a single start vector resolve degenerate eigenvalues.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audit::{note_krylov_columns, Block};
use crate::error::{Error, Result};
use crate::linalg::{eigh_desc, normalize_phases, random_unit_with, CMat, CVec, C64, ONE, ZERO};
use crate::lowrank::sum::HermitianOperator;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_SEED: u64 = 0x1e1_5eed;

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// Residual target relative to `|θ₁|`.
    pub tol: f64,
    /// Krylov dimension; defaults to `max(2r+1, r+8)` capped at `N`.
    pub krylov_dim: Option<usize>,
    /// Defaults to `50·r`.
    pub max_restarts: Option<usize>,
    pub seed: u64,
    /// Overrides the seeded random start vector.
    pub start: Option<CVec>,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: DEFAULT_TOLERANCE,
            krylov_dim: None,
            max_restarts: None,
            seed: DEFAULT_SEED,
            start: None,
        }
    }
}

#[derive(Debug)]
pub struct Eigenpairs {
    /// `N×r`, orthonormal, phase-normalized.
    pub vectors: Block,
    /// Descending.
    pub values: Vec<f64>,
    /// True residuals `‖Mv − θv‖`.
    pub residuals: Vec<f64>,
    pub restarts: usize,
    pub matvecs: usize,
}

pub fn default_krylov_dim(r: usize, n: usize) -> usize {
    (2 * r + 1).max(r + 8).min(n)
}

/// Classical Gram–Schmidt against the first `cols` basis vectors, repeated
/// once when the first pass cancels more than `1 − 1/√2` of the norm.
fn orthogonalize(basis: &CMat, cols: usize, x: &mut CVec, coeffs: &mut CVec) {
    let q = basis.columns(0, cols);
    let mut h = CVec::zeros(cols);
    let mut before = x.norm();
    for _ in 0..2 {
        h.gemv_ad(ONE, &q, x, ZERO);
        x.gemv(-ONE, &q, &h, ONE);
        for i in 0..cols {
            coeffs[i] += h[i];
        }
        let after = x.norm();
        if after > std::f64::consts::FRAC_1_SQRT_2 * before {
            break;
        }
        before = after;
    }
}

fn fresh_direction(basis: &CMat, cols: usize, rng: &mut ChaCha8Rng) -> CVec {
    let n = basis.nrows();
    let mut scratch = CVec::zeros(cols);
    for _ in 0..8 {
        let mut x = random_unit_with(n, rng);
        orthogonalize(basis, cols, &mut x, &mut scratch);
        let nrm = x.norm();
        if nrm > 1e-8 {
            return x.unscale(nrm);
        }
    }
    CVec::zeros(n)
}

/// Eigenpairs of the leading `size × size` block of the projected matrix,
/// mirrored from its upper triangle.
fn ritz(proj: &CMat, size: usize) -> (Vec<f64>, CMat) {
    let herm = CMat::from_fn(size, size, |i, j| {
        if i <= j {
            proj[(i, j)]
        } else {
            proj[(j, i)].conj()
        }
    });
    eigh_desc(&herm)
}

/// The `r` algebraically largest eigenpairs of `op`.
pub fn lanczos_topk<A: HermitianOperator + ?Sized>(
    op: &A,
    r: usize,
    opts: &LanczosOptions,
) -> Result<Eigenpairs> {
    let n = op.dim();
    if r == 0 || r > n {
        return Err(Error::InvalidArgument(format!(
            "requested {r} eigenpairs of a dimension-{n} operator"
        )));
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::InvalidArgument(
            "Lanczos tolerance must be positive".into(),
        ));
    }
    let m = opts
        .krylov_dim
        .unwrap_or_else(|| default_krylov_dim(r, n))
        .max(r)
        .min(n);
    let keep = r.max((m + r) / 2).min(m - 1);
    let max_restarts = opts.max_restarts.unwrap_or(50 * r);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let v0 = match &opts.start {
        Some(s) => {
            if s.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "Lanczos start vector",
                    expected: n,
                    found: s.len(),
                });
            }
            let nrm = s.norm();
            if !(nrm > 0.0 && nrm.is_finite()) {
                random_unit_with(n, &mut rng)
            } else {
                s.unscale(nrm)
            }
        }
        None => random_unit_with(n, &mut rng),
    };

    let mut basis = CMat::zeros(n, m + 1);
    note_krylov_columns(m + 1 + keep);
    basis.set_column(0, &v0);
    let mut proj = CMat::zeros(m, m);
    let mut x = CVec::zeros(n);
    let mut w = CVec::zeros(n);
    let mut coeffs = CVec::zeros(m);
    let mut locked = 0usize;
    let mut matvecs = 0usize;
    let mut norm_est = 0.0f64;
    let mut best = vec![f64::INFINITY; r];

    for restart in 0..=max_restarts {
        let mut size = m;
        let mut beta_last = 0.0;
        let mut fresh_at = None;
        for j in locked..m {
            x.copy_from(&basis.column(j));
            op.apply(&x, &mut w);
            matvecs += 1;
            if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite);
            }
            coeffs.fill(ZERO);
            orthogonalize(&basis, j + 1, &mut w, &mut coeffs);
            for i in 0..=j {
                proj[(i, j)] = coeffs[i];
            }
            norm_est = norm_est.max(coeffs[j].re.abs());
            let beta = w.norm();
            norm_est = norm_est.max(beta);
            let breakdown = beta <= 64.0 * f64::EPSILON * norm_est.max(f64::MIN_POSITIVE);
            beta_last = if breakdown { 0.0 } else { beta };
            if !breakdown {
                basis.set_column(j + 1, &w.unscale(beta));
            }
            // A (near) invariant Krylov space only proves convergence once a
            // random direction orthogonal to it has been tried as well;
            // otherwise copies of degenerate eigenvalues go unseen.
            let probed = fresh_at == Some(j);
            let mut probe = breakdown;
            if j + 1 >= r && j + 1 < m && (!breakdown || probed) {
                let (theta, y) = ritz(&proj, j + 1);
                let thresh = opts.tol * theta[0].abs();
                if (0..r).all(|i| beta_last * y[(j, i)].norm() <= thresh) {
                    if probed || beta_last > thresh {
                        size = j + 1;
                        break;
                    }
                    probe = true;
                }
            }
            if probe && j + 1 < m {
                let fresh = fresh_direction(&basis, j + 1, &mut rng);
                basis.set_column(j + 1, &fresh);
                fresh_at = Some(j + 1);
            }
        }

        let (theta, y) = ritz(&proj, size);
        norm_est = norm_est.max(theta[0].abs()).max(theta[size - 1].abs());
        let thresh = opts.tol * theta[0].abs();
        let est: Vec<f64> = (0..r)
            .map(|i| beta_last * y[(size - 1, i)].norm())
            .collect();
        for (b, e) in best.iter_mut().zip(&est) {
            *b = b.min(*e);
        }

        if est.iter().all(|&e| e <= thresh) {
            let mut vecs = basis.columns(0, size) * y.columns(0, r);
            let mut images = CMat::zeros(n, r);
            op.apply_block(&vecs, &mut images);
            matvecs += r;
            let residuals: Vec<f64> = (0..r)
                .map(|i| {
                    let mut res = images.column(i).into_owned();
                    res.axpy(C64::new(-theta[i], 0.0), &vecs.column(i), ONE);
                    res.norm()
                })
                .collect();
            drop(images);
            if residuals.iter().all(|&res| res <= thresh) {
                normalize_phases(&mut vecs);
                return Ok(Eigenpairs {
                    vectors: Block::new(vecs),
                    values: theta[..r].to_vec(),
                    residuals,
                    restarts: restart,
                    matvecs,
                });
            }
            best.copy_from_slice(&residuals);
        }

        if restart == max_restarts || keep == 0 {
            break;
        }
        if size < m {
            // Early exit rejected by the true residuals: keep expanding.
            if beta_last == 0.0 {
                let fresh = fresh_direction(&basis, size, &mut rng);
                basis.set_column(size, &fresh);
            }
            locked = size;
            continue;
        }

        let kept = basis.columns(0, m) * y.columns(0, keep);
        basis.columns_mut(0, keep).copy_from(&kept);
        drop(kept);
        if beta_last > 0.0 {
            x.copy_from(&basis.column(m));
            basis.set_column(keep, &x);
        } else {
            let fresh = fresh_direction(&basis, keep, &mut rng);
            basis.set_column(keep, &fresh);
        }
        proj.fill(ZERO);
        for i in 0..keep {
            proj[(i, i)] = C64::new(theta[i], 0.0);
        }
        locked = keep;
    }
    Err(Error::NoConvergence {
        restarts: max_restarts,
        residuals: best,
    })
}

//! Householder factorization of a tall orthonormal factor, used to apply the
//! orthogonal complement `V̂` without ever forming it.
//!
//! For `Ṽ ∈ C^{N×r}` the stack stores reflectors `P_k = I − β_k u_k u_k*`
//! with `P_r⋯P_1 Ṽ = [R; 0]`. The unitary `Q = P_1⋯P_r` has `V̂` as its last
//! `N − r` columns. A diagonal of unit phases `d_k = R_kk/|R_kk|` is kept so
//! that `Q·diag(d, 1, …, 1)` has exactly `Ṽ` as its first `r` columns.

use nalgebra::DVectorView;

use crate::audit::Block;
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ONE, ZERO};

/// Pivot norms below this are treated as rank deficiency.
pub const PIVOT_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct HouseholderStack {
    // column k holds u_k; rows above k are zero
    vectors: Block,
    betas: Vec<f64>,
    r_diag: Vec<C64>,
}

impl HouseholderStack {
    /// Factors `v` (N×r, full column rank). Cost ≈ 2Nr².
    pub fn from_factor(v: &CMat) -> Result<Self> {
        let (n, r) = v.shape();
        if r > n {
            return Err(Error::DimensionMismatch {
                context: "Householder factor columns",
                expected: n,
                found: r,
            });
        }
        let mut a = Block::new(v.clone());
        let mut betas = Vec::with_capacity(r);
        let mut r_diag = Vec::with_capacity(r);
        for k in 0..r {
            let len = n - k;
            let (alpha, tail) = {
                let x = a.view((k, k), (len, 1));
                let tail = if len > 1 {
                    x.rows(1, len - 1).norm()
                } else {
                    0.0
                };
                (x.norm(), tail)
            };
            if alpha < PIVOT_TOLERANCE {
                return Err(Error::RankDeficient {
                    column: k,
                    norm: alpha,
                });
            }
            let x0 = a[(k, k)];
            if tail == 0.0 {
                r_diag.push(x0);
                betas.push(0.0);
                a.view_mut((k, k), (len, 1)).fill(ZERO);
            } else {
                let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
                a[(k, k)] += phase * alpha;
                let beta = 1.0 / (alpha * (alpha + x0.norm()));
                r_diag.push(-phase * alpha);
                betas.push(beta);
                let (head, mut rest) = a.columns_range_pair_mut(k, k + 1..);
                let u = head.rows(k, len);
                for mut col in rest.column_iter_mut() {
                    let mut col = col.rows_mut(k, len);
                    let s = u.dotc(&col) * beta;
                    col.axpy(-s, &u, ONE);
                }
            }
            for i in 0..k {
                a[(i, k)] = ZERO;
            }
        }
        Ok(HouseholderStack {
            vectors: a,
            betas,
            r_diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn rank(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Diagonal of the triangular factor produced by `P_r⋯P_1`.
    pub fn r_diagonal(&self) -> &[C64] {
        &self.r_diag
    }

    /// `u_k` restricted to rows `k..`.
    fn reflector(&self, k: usize) -> DVectorView<'_, C64> {
        let n = self.dim();
        self.vectors
            .generic_view((k, k), (nalgebra::Dyn(n - k), nalgebra::U1))
    }

    fn reflect_rows(&self, k: usize, b: &mut CMat) {
        let beta = self.betas[k];
        if beta == 0.0 {
            return;
        }
        let n = self.dim();
        let u = self.reflector(k);
        let mut tail = b.view_mut((k, 0), (n - k, b.ncols()));
        for mut col in tail.column_iter_mut() {
            let s = u.dotc(&col) * beta;
            col.axpy(-s, &u, ONE);
        }
    }

    /// `B ← Q* B = P_r⋯P_1 B` (no phase correction).
    pub fn apply_qh_in_place(&self, b: &mut CMat) {
        assert_eq!(b.nrows(), self.dim());
        for k in 0..self.rank() {
            self.reflect_rows(k, b);
        }
    }

    /// `B ← Q B = P_1⋯P_r B` (no phase correction).
    pub fn apply_q_in_place(&self, b: &mut CMat) {
        assert_eq!(b.nrows(), self.dim());
        for k in (0..self.rank()).rev() {
            self.reflect_rows(k, b);
        }
    }

    /// `B ← Q diag(d,1,…) B`, the unitary whose first `r` columns are `Ṽ`.
    pub fn apply_phased_q_in_place(&self, b: &mut CMat) {
        for (k, d) in self.phases().enumerate() {
            b.row_mut(k).iter_mut().for_each(|z| *z *= d);
        }
        self.apply_q_in_place(b);
    }

    /// `B ← diag(d̄,1,…) Q* B`.
    pub fn apply_phased_qh_in_place(&self, b: &mut CMat) {
        self.apply_qh_in_place(b);
        for (k, d) in self.phases().enumerate() {
            b.row_mut(k).iter_mut().for_each(|z| *z *= d.conj());
        }
    }

    fn phases(&self) -> impl Iterator<Item = C64> + '_ {
        self.r_diag
            .iter()
            .map(|&z| if z.norm() > 0.0 { z / z.norm() } else { ONE })
    }

    /// `A V̂` for `A ∈ C^{m×N}`: `A ← A P_1⋯P_r` by rank-1 updates
    /// `A P = A − β (A u) u*`, then the first `r` columns are dropped.
    pub fn apply_complement_right(&self, a: &CMat) -> Result<CMat> {
        let n = self.dim();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "complement product (right)",
                expected: n,
                found: a.ncols(),
            });
        }
        let r = self.rank();
        let mut a = a.clone();
        let m = a.nrows();
        for k in 0..r {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let u = self.reflector(k);
            let mut view = a.view_mut((0, k), (m, n - k));
            let mut w = nalgebra::DVector::<C64>::zeros(m);
            w.gemv(ONE, &view, &u, ZERO);
            view.gerc(C64::new(-beta, 0.0), &w, &u, ONE);
        }
        Ok(a.columns(r, n - r).into_owned())
    }

    /// `V̂ A` for `A ∈ C^{(N−r)×m}`, computed as `Q [0; A]`.
    pub fn apply_complement_left(&self, a: &CMat) -> Result<CMat> {
        let (n, r) = (self.dim(), self.rank());
        if a.nrows() != n - r {
            return Err(Error::DimensionMismatch {
                context: "complement product (left)",
                expected: n - r,
                found: a.nrows(),
            });
        }
        let mut out = CMat::zeros(n, a.ncols());
        out.view_mut((r, 0), (n - r, a.ncols())).copy_from(a);
        self.apply_q_in_place(&mut out);
        Ok(out)
    }

    /// `V̂* B` for `B ∈ C^{N×m}`.
    pub fn complement_adjoint(&self, b: &CMat) -> Result<CMat> {
        let (n, r) = (self.dim(), self.rank());
        if b.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "complement adjoint product",
                expected: n,
                found: b.nrows(),
            });
        }
        let mut t = b.clone();
        self.apply_qh_in_place(&mut t);
        Ok(t.rows(r, n - r).into_owned())
    }

    /// Dense phased `Q`, for verification only.
    pub fn to_dense_q(&self) -> CMat {
        let n = self.dim();
        let mut q = CMat::identity(n, n);
        self.apply_phased_q_in_place(&mut q);
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, orthonormality_defect, re};
    use crate::states::random_state;

    fn e(n: usize, i: usize) -> CMat {
        let mut m = CMat::zeros(n, 1);
        m[(i, 0)] = ONE;
        m
    }

    #[test]
    fn already_triangular_gives_identity() {
        let s = HouseholderStack::from_factor(&e(4, 0)).unwrap();
        assert_eq!(s.betas(), &[0.0]);
        assert!(max_abs(&(s.to_dense_q() - CMat::identity(4, 4))) < 1e-15);
    }

    #[test]
    fn swap_case() {
        let s = HouseholderStack::from_factor(&e(2, 1)).unwrap();
        let q = s.to_dense_q();
        assert!((q.column(0) - e(2, 1).column(0)).norm() < 1e-15);
        let ones = CMat::from_element(1, 2, ONE);
        let c = s.apply_complement_right(&ones).unwrap();
        assert!((c[(0, 0)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn complement_of_e1() {
        let s = HouseholderStack::from_factor(&e(2, 0)).unwrap();
        let ones = CMat::from_element(1, 2, ONE);
        let c = s.apply_complement_right(&ones).unwrap();
        assert!((c[(0, 0)].norm() - 1.0).abs() < 1e-15);
        let a = CMat::from_element(1, 1, C64::new(0.3, -0.2));
        let left = s.apply_complement_left(&a).unwrap();
        assert!(left[(0, 0)].norm() < 1e-15);
        assert!((left[(1, 0)].norm() - a[(0, 0)].norm()).abs() < 1e-15);
    }

    #[test]
    fn random_factor_round_trip() {
        let st = random_state(64, 5, 3).unwrap();
        let v = st.v();
        let s = HouseholderStack::from_factor(v).unwrap();
        let q = s.to_dense_q();
        assert!(orthonormality_defect(&q) < 1e-13);
        assert!(max_abs(&(q.columns(0, 5) - v)) < 1e-13);
        let mut t = v.clone();
        s.apply_phased_qh_in_place(&mut t);
        for i in 0..64 {
            for j in 0..5 {
                let want = if i == j { ONE } else { ZERO };
                assert!((t[(i, j)] - want).norm() < 1e-13);
            }
        }
        let vh = v.adjoint();
        assert!(max_abs(&s.apply_complement_right(&vh).unwrap()) < 1e-13);
        let ident = CMat::identity(59, 3);
        let comp = s.apply_complement_left(&ident).unwrap();
        assert!(max_abs(&v.ad_mul(&comp)) < 1e-13);
        let back = s.complement_adjoint(&comp).unwrap();
        assert!(max_abs(&(back - ident)) < 1e-13);
    }

    #[test]
    fn rank_deficiency_names_column() {
        let mut v = CMat::zeros(4, 2);
        v[(0, 0)] = ONE;
        v[(0, 1)] = re(2.0);
        match HouseholderStack::from_factor(&v) {
            Err(Error::RankDeficient { column, .. }) => assert_eq!(column, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dimension_checks() {
        let s = HouseholderStack::from_factor(&e(4, 2)).unwrap();
        assert!(s.apply_complement_right(&CMat::zeros(2, 3)).is_err());
        assert!(s.apply_complement_left(&CMat::zeros(4, 1)).is_err());
    }
}

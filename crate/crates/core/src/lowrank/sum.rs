//! Formal sums of tall factor pairs, applied matrix-free.

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64, ONE, ZERO};
use crate::spinsys::SparseHermitian;

/// A Hermitian linear map given only through its action.
pub trait HermitianOperator {
    fn dim(&self) -> usize;
    /// `y = M x`; `y` has length `dim` and its previous contents are ignored.
    fn apply(&self, x: &CVec, y: &mut CVec);

    /// `Y = M X` column by column; implementors may fuse the columns.
    fn apply_block(&self, x: &CMat, y: &mut CMat) {
        let mut xi = CVec::zeros(self.dim());
        let mut yi = CVec::zeros(self.dim());
        for c in 0..x.ncols() {
            xi.copy_from(&x.column(c));
            self.apply(&xi, &mut yi);
            y.set_column(c, &yi);
        }
    }
}

/// Rows per cache block in fused multi-vector products.
const ROW_CHUNK: usize = 2048;

impl HermitianOperator for SparseHermitian {
    fn dim(&self) -> usize {
        SparseHermitian::dim(self)
    }

    fn apply(&self, x: &CVec, y: &mut CVec) {
        self.apply_into(x.as_slice(), y.as_mut_slice());
    }
}

impl HermitianOperator for CMat {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &CVec, y: &mut CVec) {
        y.gemv(ONE, self, x, ZERO);
    }
}

/// Adapter for a closure `|x, y| y = M x`.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&CVec, &mut CVec)> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnOperator { dim, f }
    }
}

impl<F: Fn(&CVec, &mut CVec)> HermitianOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &CVec, y: &mut CVec) {
        (self.f)(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SumForm {
    /// `Σ A_ℓ D_ℓ B_ℓ*`.
    General,
    /// `Σ (A_ℓ D_ℓ B_ℓ* + B_ℓ D̄_ℓ A_ℓ*)`, Hermitian by construction.
    HermitianPairs,
}

/// One factor pair `left · diag(weights) · right*`.
#[derive(Debug, Clone)]
pub struct Term<'a> {
    pub left: &'a CMat,
    pub right: &'a CMat,
    pub weights: Vec<C64>,
}

#[derive(Debug, Clone)]
pub struct LowRankSum<'a> {
    dim: usize,
    form: SumForm,
    terms: Vec<Term<'a>>,
    /// Distinct factors; a factor shared by several terms is read once per
    /// product.
    factors: Vec<&'a CMat>,
    /// `(left, right)` indices into `factors`, one pair per term.
    links: Vec<(usize, usize)>,
}

impl<'a> LowRankSum<'a> {
    pub fn new(dim: usize, form: SumForm) -> Self {
        LowRankSum {
            dim,
            form,
            terms: Vec::new(),
            factors: Vec::new(),
            links: Vec::new(),
        }
    }

    pub fn form(&self) -> SumForm {
        self.form
    }

    pub fn terms(&self) -> &[Term<'a>] {
        &self.terms
    }

    /// Adds `left · right*` scaled by `scale`.
    pub fn push(&mut self, left: &'a CMat, right: &'a CMat, scale: C64) -> Result<()> {
        let w = vec![scale; left.ncols()];
        self.push_weighted(left, right, w)
    }

    /// Adds `left · diag(weights) · right*`.
    pub fn push_weighted(
        &mut self,
        left: &'a CMat,
        right: &'a CMat,
        weights: Vec<C64>,
    ) -> Result<()> {
        for m in [left, right] {
            if m.nrows() != self.dim {
                return Err(Error::DimensionMismatch {
                    context: "low-rank sum term rows",
                    expected: self.dim,
                    found: m.nrows(),
                });
            }
        }
        if right.ncols() != left.ncols() || weights.len() != left.ncols() {
            return Err(Error::DimensionMismatch {
                context: "low-rank sum term columns",
                expected: left.ncols(),
                found: right.ncols().min(weights.len()),
            });
        }
        let left_id = self.factor_id(left);
        let right_id = self.factor_id(right);
        self.links.push((left_id, right_id));
        self.terms.push(Term {
            left,
            right,
            weights,
        });
        Ok(())
    }

    fn factor_id(&mut self, m: &'a CMat) -> usize {
        match self.factors.iter().position(|f| std::ptr::eq(*f, m)) {
            Some(i) => i,
            None => {
                self.factors.push(m);
                self.factors.len() - 1
            }
        }
    }

    /// Total column count `Σ r_ℓ`.
    pub fn width(&self) -> usize {
        self.terms.iter().map(|t| t.left.ncols()).sum()
    }

    /// `y = M x` with inner products taken first: `A (D (B* x))`.
    pub fn apply_into(&self, x: &CVec, y: &mut CVec) {
        let inner: Vec<CVec> = self.factors.iter().map(|f| f.ad_mul(x)).collect();
        let mut outer: Vec<CVec> = self
            .factors
            .iter()
            .map(|f| CVec::zeros(f.ncols()))
            .collect();
        for (t, &(l, r)) in self.terms.iter().zip(&self.links) {
            for (k, w) in t.weights.iter().enumerate() {
                outer[l][k] += w * inner[r][k];
                if self.form == SumForm::HermitianPairs {
                    outer[r][k] += w.conj() * inner[l][k];
                }
            }
        }
        y.fill(ZERO);
        for (f, c) in self.factors.iter().zip(&outer) {
            y.gemv(ONE, *f, c, ONE);
        }
    }

    /// `Y = M X`, streaming every factor once for all columns of `X`.
    pub fn apply_block_into(&self, x: &CMat, y: &mut CMat) {
        let (n, p) = (self.dim, x.ncols());
        let xs = x.as_slice();
        let mut inner: Vec<CMat> = self
            .factors
            .iter()
            .map(|f| CMat::zeros(f.ncols(), p))
            .collect();
        for start in (0..n).step_by(ROW_CHUNK) {
            let end = (start + ROW_CHUNK).min(n);
            for (f, acc) in self.factors.iter().zip(inner.iter_mut()) {
                let fs = f.as_slice();
                for c in 0..f.ncols() {
                    let fc = &fs[c * n + start..c * n + end];
                    for q in 0..p {
                        let xq = &xs[q * n + start..q * n + end];
                        acc[(c, q)] += dotc(fc, xq);
                    }
                }
            }
        }
        let mut outer: Vec<CMat> = self
            .factors
            .iter()
            .map(|f| CMat::zeros(f.ncols(), p))
            .collect();
        for (t, &(l, r)) in self.terms.iter().zip(&self.links) {
            for (k, w) in t.weights.iter().enumerate() {
                for q in 0..p {
                    let from_right = inner[r][(k, q)];
                    outer[l][(k, q)] += w * from_right;
                    if self.form == SumForm::HermitianPairs {
                        let from_left = inner[l][(k, q)];
                        outer[r][(k, q)] += w.conj() * from_left;
                    }
                }
            }
        }
        y.fill(ZERO);
        let ys = y.as_mut_slice();
        for start in (0..n).step_by(ROW_CHUNK) {
            let end = (start + ROW_CHUNK).min(n);
            for (f, coef) in self.factors.iter().zip(&outer) {
                let fs = f.as_slice();
                for c in 0..f.ncols() {
                    let fc = &fs[c * n + start..c * n + end];
                    for q in 0..p {
                        let a = coef[(c, q)];
                        for (yi, fi) in ys[q * n + start..q * n + end].iter_mut().zip(fc) {
                            *yi += a * fi;
                        }
                    }
                }
            }
        }
    }

    pub fn matvec(&self, x: &CVec) -> Result<CVec> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "low-rank matvec",
                expected: self.dim,
                found: x.len(),
            });
        }
        let mut y = CVec::zeros(self.dim);
        self.apply_into(x, &mut y);
        Ok(y)
    }

    /// Dense materialization, verification only.
    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for t in &self.terms {
            let mut l = t.left.clone();
            for (mut col, w) in l.column_iter_mut().zip(&t.weights) {
                col.iter_mut().for_each(|z| *z *= w);
            }
            let part = &l * t.right.adjoint();
            if self.form == SumForm::HermitianPairs {
                m += &part + part.adjoint();
            } else {
                m += part;
            }
        }
        m
    }
}

impl HermitianOperator for LowRankSum<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &CVec, y: &mut CVec) {
        self.apply_into(x, y);
    }

    fn apply_block(&self, x: &CMat, y: &mut CMat) {
        self.apply_block_into(x, y);
    }
}

/// `Σ conj(a_i) b_i`.
fn dotc(a: &[C64], b: &[C64]) -> C64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (p, q) in a.iter().zip(b) {
        re += p.re * q.re + p.im * q.im;
        im += p.re * q.im - p.im * q.re;
    }
    C64::new(re, im)
}

/// `g(x) = Σ_ℓ A_ℓ(B_ℓ* x)` (plus the mirrored pair in Hermitian form).
pub fn lowrank_matvec(sum: &LowRankSum<'_>, x: &CVec) -> Result<CVec> {
    sum.matvec(x)
}

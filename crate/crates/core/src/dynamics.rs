//! Right-hand side of the q-LL and q-LLG equations in factored form.
//!
//! With `V = [Ṽ V̂]` unitary and `ρ = Ṽ Λ Ṽ*`, the time derivative has the
//! block structure `V* ρ̇ V = [[X11, X12], [X12*, 0]]`, so
//! `ρ̇ = Z Ṽ* + Ṽ W*` with `W = V̂ X12*` and `Z = Ṽ X11 + W`. With
//! `G = Ṽ* H Ṽ` and `δ = λ_j − λ_l`:
//!
//! * q-LLG: `X11_jl = (i/ħ) δ G_jl / (1 − iκδ)`, `X12 = diag(c) Λ Ṽ* H V̂`
//!   with `c_j = (i/ħ) / (1 − iκλ_j)`;
//! * q-LL: `X11_jl = δ G_jl (i − κδ) / ħ`, `c_j = (i − κλ_j) / ħ`.
//!
//! The block `X12` is never formed. `H Ṽ Λ` is reflected by `Q*`, which
//! leaves `(Λ Ṽ* H V̂)*` in rows `r..`; those rows are scaled by `c̄`, the
//! top rows zeroed, and `Q` applied, giving `W` in the same buffer.

use crate::audit::Block;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, CMat, C64, I, ONE, ZERO};
use crate::lowrank::HouseholderStack;
use crate::spinsys::SparseHermitian;
use crate::states::LowRankState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Qll,
    Qllg,
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qll" | "q-ll" => Ok(Model::Qll),
            "qllg" | "q-llg" => Ok(Model::Qllg),
            other => Err(Error::Parse(format!(
                "unknown model `{other}` (expected qll or qllg)"
            ))),
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::Qll => "qll",
            Model::Qllg => "qllg",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelKind {
    pub model: Model,
    pub kappa: f64,
    pub hbar: f64,
}

impl ModelKind {
    pub fn new(model: Model, kappa: f64, hbar: f64) -> Result<Self> {
        let m = ModelKind { model, kappa, hbar };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "damping must be finite and >= 0, got {}",
                self.kappa
            )));
        }
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "hbar must be positive, got {}",
                self.hbar
            )));
        }
        Ok(())
    }

    pub fn with_kappa(self, kappa: f64) -> Self {
        ModelKind { kappa, ..self }
    }

    /// Coupling factor for `X11_jl` given `δ = λ_j − λ_l`.
    fn inner_factor(&self, delta: f64) -> C64 {
        let (k, hb) = (self.kappa, self.hbar);
        match self.model {
            Model::Qllg => I * delta / (ONE - I * (k * delta)) / hb,
            Model::Qll => (I - k * delta) * delta / hb,
        }
    }

    /// Row scaling `c_j` of `X12`.
    fn outer_factor(&self, lambda: f64) -> C64 {
        let (k, hb) = (self.kappa, self.hbar);
        match self.model {
            Model::Qllg => I / (ONE - I * (k * lambda)) / hb,
            Model::Qll => (I - k * lambda) / hb,
        }
    }
}

fn check_inputs(v: &CMat, lambda: &[f64], h: &SparseHermitian) -> Result<()> {
    if v.nrows() != h.dim() {
        return Err(Error::DimensionMismatch {
            context: "factor rows vs Hamiltonian",
            expected: h.dim(),
            found: v.nrows(),
        });
    }
    if v.ncols() != lambda.len() {
        return Err(Error::DimensionMismatch {
            context: "factor columns vs spectrum",
            expected: v.ncols(),
            found: lambda.len(),
        });
    }
    Ok(())
}

fn x11_from_gram(g: &CMat, lambda: &[f64], model: &ModelKind) -> CMat {
    let r = lambda.len();
    CMat::from_fn(r, r, |j, l| {
        if j == l {
            ZERO
        } else {
            model.inner_factor(lambda[j] - lambda[l]) * g[(j, l)]
        }
    })
}

/// `G = Ṽ* H Ṽ`, Hermitian part.
fn gram(v: &CMat, hv: &CMat) -> CMat {
    hermitian_part(&v.ad_mul(hv))
}

fn x11_for(v: &CMat, lambda: &[f64], h: &SparseHermitian, model: &ModelKind) -> Result<CMat> {
    check_inputs(v, lambda, h)?;
    model.validate()?;
    let hv = h.apply_block(v)?;
    Ok(x11_from_gram(&gram(v, &hv), lambda, model))
}

fn x12_for(
    v: &CMat,
    lambda: &[f64],
    h: &SparseHermitian,
    model: &ModelKind,
    stack: &HouseholderStack,
) -> Result<CMat> {
    check_inputs(v, lambda, h)?;
    model.validate()?;
    let mut hvl = h.apply_block(v)?;
    for (mut col, &l) in hvl.column_iter_mut().zip(lambda) {
        col.scale_mut(l);
    }
    let mut x12 = stack.apply_complement_right(&hvl.adjoint())?;
    for (j, mut row) in x12.row_iter_mut().enumerate() {
        let c = model.outer_factor(lambda[j]);
        row.iter_mut().for_each(|z| *z *= c);
    }
    Ok(x12)
}

/// Leading block `X11` for q-LLG; its diagonal is zero.
pub fn x11_qllg(
    v: &CMat,
    lambda: &[f64],
    h: &SparseHermitian,
    kappa: f64,
    hbar: f64,
) -> Result<CMat> {
    x11_for(v, lambda, h, &ModelKind::new(Model::Qllg, kappa, hbar)?)
}

/// Off-diagonal block `X12 ∈ C^{r×(N−r)}` for q-LLG (materialized; for tests
/// and diagnostics, the integrators never form it).
pub fn x12_qllg(
    v: &CMat,
    lambda: &[f64],
    h: &SparseHermitian,
    kappa: f64,
    hbar: f64,
    stack: &HouseholderStack,
) -> Result<CMat> {
    x12_for(
        v,
        lambda,
        h,
        &ModelKind::new(Model::Qllg, kappa, hbar)?,
        stack,
    )
}

/// `(X11, X12)` for q-LL.
pub fn x_blocks_qll(
    v: &CMat,
    lambda: &[f64],
    h: &SparseHermitian,
    kappa: f64,
    hbar: f64,
    stack: &HouseholderStack,
) -> Result<(CMat, CMat)> {
    let model = ModelKind::new(Model::Qll, kappa, hbar)?;
    Ok((
        x11_for(v, lambda, h, &model)?,
        x12_for(v, lambda, h, &model, stack)?,
    ))
}

/// `ρ̇ = Z Ṽ* + Ṽ W*`, stored as `(Ṽ, W, X11)` with `Z = Ṽ X11 + W`.
#[derive(Debug)]
pub struct RhsFactors<'a> {
    v: &'a CMat,
    w: Block,
    x11: CMat,
}

impl<'a> RhsFactors<'a> {
    pub fn v(&self) -> &CMat {
        self.v
    }

    pub fn w(&self) -> &CMat {
        &self.w
    }

    pub fn x11(&self) -> &CMat {
        &self.x11
    }

    /// `Z = Ṽ X11 + W`, formed on request.
    pub fn z(&self) -> CMat {
        let mut z = self.w.clone().into_inner();
        z.gemm(ONE, self.v, &self.x11, ONE);
        z
    }

    /// `Y = W + Ṽ X11 / 2`, so that `ρ̇ = Y Ṽ* + Ṽ Y*` exactly Hermitian.
    pub fn into_half(self) -> Block {
        let mut y = self.w;
        y.gemm(C64::new(0.5, 0.0), self.v, &self.x11, ONE);
        y
    }

    /// `Tr(Ṽ* Z) + Tr(W* Ṽ)`, without materialization.
    pub fn trace(&self) -> C64 {
        let vw = self.v.ad_mul(&*self.w);
        let mut t = self.x11.trace();
        for j in 0..vw.nrows() {
            t += vw[(j, j)] + vw[(j, j)].conj();
        }
        t
    }

    /// Dense `Z Ṽ* + Ṽ W*`, verification only.
    pub fn to_dense(&self) -> CMat {
        let z = self.z();
        &z * self.v.adjoint() + self.v * self.w.adjoint()
    }
}

/// Factored right-hand side with a prebuilt Householder stack of `v`.
pub fn rhs_with_stack<'a>(
    v: &'a CMat,
    lambda: &[f64],
    h: &SparseHermitian,
    model: &ModelKind,
    stack: &HouseholderStack,
) -> Result<RhsFactors<'a>> {
    check_inputs(v, lambda, h)?;
    if stack.dim() != v.nrows() || stack.rank() != v.ncols() {
        return Err(Error::DimensionMismatch {
            context: "Householder stack vs factor",
            expected: v.ncols(),
            found: stack.rank(),
        });
    }
    let r = v.ncols();
    let mut buf = Block::new(h.apply_block(v)?);
    let g = gram(v, &buf);
    let x11 = x11_from_gram(&g, lambda, model);
    for (mut col, &l) in buf.column_iter_mut().zip(lambda) {
        col.scale_mut(l);
    }
    stack.apply_qh_in_place(&mut buf);
    for (j, mut col) in buf.column_iter_mut().enumerate() {
        let c = model.outer_factor(lambda[j]).conj();
        col.rows_mut(0, r).fill(ZERO);
        col.iter_mut().skip(r).for_each(|z| *z *= c);
    }
    stack.apply_q_in_place(&mut buf);
    Ok(RhsFactors { v, w: buf, x11 })
}

/// Factored right-hand side at `(Ṽ, λ)`; builds the Householder stack.
pub fn rhs<'a>(
    v: &'a CMat,
    lambda: &[f64],
    h: &SparseHermitian,
    model: &ModelKind,
) -> Result<RhsFactors<'a>> {
    model.validate()?;
    let stack = HouseholderStack::from_factor(v)?;
    rhs_with_stack(v, lambda, h, model, &stack)
}

/// [`rhs`] for a state, using its own spectrum.
pub fn rhs_for_state<'a>(
    state: &'a LowRankState,
    h: &SparseHermitian,
    model: &ModelKind,
) -> Result<RhsFactors<'a>> {
    rhs(state.v(), state.weights(), h, model)
}

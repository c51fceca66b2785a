//! Dense reference solvers for verification at small sizes (`N ≤ 1024`).
//!
//! Everything here is `O(N³)` and forms full matrices on purpose; the
//! low-rank path never calls into this module.

use crate::dynamics::{Model, ModelKind};
use crate::error::{Error, Result};
use crate::integrate::{ab_weights, time_grid, Scheme, Tableau};
use crate::linalg::{eigh_desc, hermitian_part, max_abs, normalize_phases, re, CMat, CVec, C64, I};
use crate::states::{LowRankState, PureState};

/// Largest dimension the dense path accepts.
pub const DENSE_MAX: usize = 1 << 10;

fn guard(dim: usize) -> Result<()> {
    if dim > DENSE_MAX {
        return Err(Error::SizeGuard {
            dim,
            max: DENSE_MAX,
        });
    }
    Ok(())
}

/// Full density matrix together with the spectrum it is projected onto.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub rho: CMat,
    /// All `N` eigenvalues, descending.
    pub spectrum: Vec<f64>,
}

impl DenseState {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(rho: CMat) -> Result<Self> {
        guard(rho.nrows())?;
        if rho.nrows() != rho.ncols() {
            return Err(Error::DimensionMismatch {
                context: "dense density matrix",
                expected: rho.nrows(),
                found: rho.ncols(),
            });
        }
        let herm = max_abs(&(&rho - rho.adjoint()));
        if herm > 1e-12 {
            return Err(Error::InvalidState(format!(
                "density matrix not Hermitian (defect {herm:e})"
            )));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(Error::InvalidState(format!("trace {tr}, expected 1")));
        }
        let (spectrum, _) = eigh_desc(&rho);
        let min = *spectrum.last().expect("nonempty");
        if min < -1e-10 {
            return Err(Error::NotPositiveSemidefinite { min_eig: min });
        }
        Ok(DenseState { rho, spectrum })
    }

    pub fn from_low_rank(state: &LowRankState) -> Result<Self> {
        guard(state.dim())?;
        let rho = state.to_dense()?;
        let mut spectrum = state.weights().to_vec();
        spectrum.resize(state.dim(), 0.0);
        Ok(DenseState { rho, spectrum })
    }

    pub fn from_pure(psi: &PureState) -> Result<Self> {
        Self::from_low_rank(&psi.to_low_rank())
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }
}

/// `V diag(spectrum) V*` with `V` the eigenvectors of `m` (descending).
pub fn project_spectrum(m: &CMat, spectrum: &[f64]) -> CMat {
    let (_, mut v) = eigh_desc(m);
    let vv = v.clone();
    for (mut col, &l) in v.column_iter_mut().zip(spectrum) {
        col.scale_mut(l);
    }
    hermitian_part(&(v * vv.adjoint()))
}

fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Dense `ρ̇`. q-LL: `(i/ħ)[ρ,H] − (κ/ħ)[ρ,[ρ,H]]`. q-LLG: eigenbasis
/// solve of `ρ̇ − (i/ħ)[ρ,H] − iκ[ρ,ρ̇] = 0`.
pub fn dense_rhs(rho: &CMat, h: &CMat, model: &ModelKind) -> Result<CMat> {
    guard(rho.nrows())?;
    model.validate()?;
    let (k, hb) = (model.kappa, model.hbar);
    let c = commutator(rho, h);
    match model.model {
        Model::Qll => Ok(&c * (I / hb) - commutator(rho, &c) * re(k / hb)),
        Model::Qllg => {
            let (lam, v) = eigh_desc(rho);
            let d = v.ad_mul(&c) * &v * (I / hb);
            let n = lam.len();
            let x = CMat::from_fn(n, n, |j, l| {
                d[(j, l)] / (C64::new(1.0, 0.0) - I * (k * (lam[j] - lam[l])))
            });
            Ok(hermitian_part(&(&v * x * v.adjoint())))
        }
    }
}

/// One projected Runge–Kutta step of the dense eigenmode integrator. Every
/// stage state and the output are reprojected onto `state.spectrum`.
pub fn ei_step(
    state: &DenseState,
    h: &CMat,
    model: &ModelKind,
    tableau: &Tableau,
    dt: f64,
) -> Result<DenseState> {
    guard(state.dim())?;
    let spec = &state.spectrum;
    let base = project_spectrum(&state.rho, spec);
    let mut ks: Vec<CMat> = Vec::with_capacity(tableau.stages());
    ks.push(dense_rhs(&base, h, model)?);
    for j in 1..tableau.stages() {
        let mut stage = base.clone();
        for (l, &a) in tableau.a[j].iter().enumerate() {
            if a != 0.0 {
                stage += &ks[l] * re(dt * a);
            }
        }
        let stage = project_spectrum(&stage, spec);
        ks.push(dense_rhs(&stage, h, model)?);
    }
    let mut out = base;
    for (k, &b) in ks.iter().zip(&tableau.b) {
        out += k * re(dt * b);
    }
    Ok(DenseState {
        rho: project_spectrum(&out, spec),
        spectrum: spec.clone(),
    })
}

/// Dense trajectory with the same grid, bootstrap and projection rules as
/// the low-rank integrators. `sink` sees `(t, ρ)` at every grid point.
pub fn dense_evolve<F>(
    initial: DenseState,
    h: &CMat,
    model: &ModelKind,
    scheme: Scheme,
    dt: f64,
    t_final: f64,
    mut sink: F,
) -> Result<DenseState>
where
    F: FnMut(f64, &DenseState) -> Result<()>,
{
    let grid = time_grid(scheme, dt, t_final)?;
    let mut state = initial;
    sink(0.0, &state)?;
    let mut derivs: std::collections::VecDeque<CMat> = std::collections::VecDeque::new();
    for k in 1..grid.len() {
        let step = grid[k] - grid[k - 1];
        let mut advance = || -> Result<DenseState> {
            Ok(match scheme {
                Scheme::Rk(m) => ei_step(&state, h, model, &Tableau::of_order(m as usize)?, step)?,
                Scheme::Ab(m) => {
                    let m = m as usize;
                    if derivs.is_empty() {
                        derivs.push_back(dense_rhs(&state.rho, h, model)?);
                    }
                    let next = if k < m {
                        ei_step(&state, h, model, &Tableau::of_order(m - 1)?, step)?
                    } else {
                        let mut acc = state.rho.clone();
                        for (d, &b) in derivs.iter().rev().zip(&ab_weights(m)?) {
                            acc += d * re(step * b);
                        }
                        DenseState {
                            rho: project_spectrum(&acc, &state.spectrum),
                            spectrum: state.spectrum.clone(),
                        }
                    };
                    derivs.push_back(dense_rhs(&next.rho, h, model)?);
                    if derivs.len() > m {
                        derivs.pop_front();
                    }
                    next
                }
            })
        };
        let next = advance().map_err(|e| e.at_step(k))?;
        state = next;
        sink(grid[k], &state)?;
    }
    Ok(state)
}

/// Closed-form pure-state trajectory `ψ(t) ∝ exp(−(i+κ) H t/ħ) ψ₀`, with q-LLG
/// time rescaled by `1/(1+κ²)`. The exponential acts through the spectral
/// decomposition of `H`, shifted by the smallest eigenvalue so that the
/// damping factor never overflows.
pub fn exact_rank1(
    psi0: &PureState,
    h: &CMat,
    kappa: f64,
    hbar: f64,
    t: f64,
    model: Model,
) -> Result<DenseState> {
    let evolver = ExactRank1::new(h, kappa, hbar, model)?;
    evolver.at(psi0, t)
}

/// Reusable form of [`exact_rank1`] holding the eigendecomposition of `H`.
#[derive(Debug, Clone)]
pub struct ExactRank1 {
    energies: Vec<f64>,
    basis: CMat,
    kappa: f64,
    hbar: f64,
    model: Model,
}

impl ExactRank1 {
    pub fn new(h: &CMat, kappa: f64, hbar: f64, model: Model) -> Result<Self> {
        guard(h.nrows())?;
        ModelKind::new(model, kappa, hbar)?;
        let (energies, basis) = eigh_desc(h);
        Ok(ExactRank1 {
            energies,
            basis,
            kappa,
            hbar,
            model,
        })
    }

    pub fn state_vector(&self, psi0: &PureState, t: f64) -> Result<CVec> {
        if psi0.dim() != self.basis.nrows() {
            return Err(Error::DimensionMismatch {
                context: "exact solution state",
                expected: self.basis.nrows(),
                found: psi0.dim(),
            });
        }
        let tau = match self.model {
            Model::Qll => t,
            Model::Qllg => t / (1.0 + self.kappa * self.kappa),
        };
        let e_min = *self.energies.last().expect("nonempty");
        let mut c = self.basis.ad_mul(psi0.amplitudes());
        for (ci, &e) in c.iter_mut().zip(&self.energies) {
            let phase = C64::new(-self.kappa * (e - e_min), -e) * (tau / self.hbar);
            *ci *= phase.exp();
        }
        let psi = &self.basis * c;
        let nrm = psi.norm();
        Ok(psi.unscale(nrm))
    }

    pub fn at(&self, psi0: &PureState, t: f64) -> Result<DenseState> {
        let psi = self.state_vector(psi0, t)?;
        let rho = &psi * psi.adjoint();
        let mut spectrum = vec![0.0; psi.len()];
        spectrum[0] = 1.0;
        Ok(DenseState { rho, spectrum })
    }
}

/// Top-`r` eigenpairs by full decomposition, phase-normalized.
pub fn dense_partial_eig(m: &CMat, r: usize) -> Result<(CMat, Vec<f64>)> {
    guard(m.nrows())?;
    if r == 0 || r > m.nrows() {
        return Err(Error::InvalidArgument(format!(
            "requested {r} eigenpairs of a dimension-{} matrix",
            m.nrows()
        )));
    }
    let (vals, vecs) = eigh_desc(m);
    let mut v = vecs.columns(0, r).into_owned();
    normalize_phases(&mut v);
    Ok((v, vals[..r].to_vec()))
}

/// Brute-force partial trace keeping sites `k, l` (1-based, `k` first).
pub fn dense_reduced_density(rho: &CMat, n: usize, k: usize, l: usize) -> Result<CMat> {
    guard(rho.nrows())?;
    let dim = 1usize << n;
    if rho.nrows() != dim {
        return Err(Error::DimensionMismatch {
            context: "dense partial trace",
            expected: dim,
            found: rho.nrows(),
        });
    }
    let bit = |i: usize, s: usize| (i >> (n - s)) & 1;
    let rest = |i: usize| {
        (1..=n)
            .filter(|&s| s != k && s != l)
            .fold(0usize, |acc, s| (acc << 1) | bit(i, s))
    };
    let mut r = CMat::zeros(4, 4);
    for i in 0..dim {
        for j in 0..dim {
            if rest(i) == rest(j) {
                let a = 2 * bit(i, k) + bit(i, l);
                let b = 2 * bit(j, k) + bit(j, l);
                r[(a, b)] += rho[(i, j)];
            }
        }
    }
    Ok(r)
}

/// `Tr(A ρ)`, real part.
pub fn dense_expectation(a: &CMat, rho: &CMat) -> f64 {
    (a * rho).trace().re
}

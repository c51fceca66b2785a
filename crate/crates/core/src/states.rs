//! Initial states: basis and entangled pure states, mixtures in factored
//! form, the Werner split, and the state mini-language used by configs.
//!
//! Basis indices in the public API are 1-based, matching the bit-string
//! labels `(b₁b₂…bₙ)₂ + 1` with site 1 as the most significant bit.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audit::Block;
use crate::error::{Error, Result};
use crate::linalg::{
    eigh_desc, normalize_phases, orthonormality_defect, re, CMat, CVec, C64, ZERO,
};
use crate::spinsys::check_sites;

/// Eigenvalues below this fraction of the largest are dropped by [`mix`].
pub const RANK_TOLERANCE: f64 = 1e-12;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;
const ORTHONORMALITY_TOLERANCE: f64 = 1e-12;
const DENSE_LIMIT: usize = 1 << 12;

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVec,
    label: String,
}

impl PureState {
    /// Normalizes `amplitudes`; fails on a zero or non-finite vector.
    pub fn new(amplitudes: CVec, label: impl Into<String>) -> Result<Self> {
        let norm = amplitudes.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidState(
                "pure state needs a finite nonzero vector".into(),
            ));
        }
        Ok(PureState {
            amplitudes: amplitudes.unscale(norm),
            label: label.into(),
        })
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amplitudes
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// The state as a rank-1 factored density matrix.
    pub fn to_low_rank(&self) -> LowRankState {
        let mut v = CMat::from_column_slice(self.dim(), 1, self.amplitudes.as_slice());
        normalize_phases(&mut v);
        LowRankState::from_parts(v, vec![1.0])
    }
}

fn basis_vector(dim: usize, index0: usize, label: String) -> PureState {
    let mut a = CVec::zeros(dim);
    a[index0] = re(1.0);
    PureState {
        amplitudes: a,
        label,
    }
}

/// Alternating basis state: variant 1 is `0101…`, variant 2 is `1010…`.
pub fn af_state(variant: u8, n: usize) -> Result<PureState> {
    let dim = check_sites(n)?;
    let first = match variant {
        1 => 0,
        2 => 1,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "AF variant must be 1 or 2, got {variant}"
            )))
        }
    };
    let mut index = 0usize;
    for k in 0..n {
        index = (index << 1) | ((first + k) % 2);
    }
    Ok(basis_vector(dim, index, format!("af{variant}")))
}

/// `e_index` with a 1-based index.
pub fn basis_state(index: usize, n: usize) -> Result<PureState> {
    let dim = check_sites(n)?;
    if index == 0 || index > dim {
        return Err(Error::InvalidArgument(format!(
            "basis index {index} outside 1..={dim}"
        )));
    }
    Ok(basis_vector(dim, index - 1, format!("basis:{index}")))
}

pub fn ghz_state(n: usize) -> Result<PureState> {
    if n < 2 {
        return Err(Error::InvalidArgument("GHZ state needs n >= 2".into()));
    }
    let dim = check_sites(n)?;
    let mut a = CVec::zeros(dim);
    let c = re(std::f64::consts::FRAC_1_SQRT_2);
    a[0] = c;
    a[dim - 1] = c;
    Ok(PureState {
        amplitudes: a,
        label: "ghz".into(),
    })
}

pub fn w_state(n: usize) -> Result<PureState> {
    if n < 2 {
        return Err(Error::InvalidArgument("W state needs n >= 2".into()));
    }
    let dim = check_sites(n)?;
    let mut a = CVec::zeros(dim);
    let c = re(1.0 / (n as f64).sqrt());
    for k in 0..n {
        a[1 << k] = c;
    }
    Ok(PureState {
        amplitudes: a,
        label: "w".into(),
    })
}

/// Factored density matrix `ρ = Ṽ diag(λ) Ṽ*`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankState {
    v: Block,
    weights: Vec<f64>,
}

impl LowRankState {
    /// Validates orthonormality, positivity, ordering and unit trace.
    pub fn new(v: CMat, weights: Vec<f64>) -> Result<Self> {
        if v.ncols() != weights.len() {
            return Err(Error::DimensionMismatch {
                context: "low-rank state weights",
                expected: v.ncols(),
                found: weights.len(),
            });
        }
        if weights.is_empty() || v.ncols() > v.nrows() {
            return Err(Error::InvalidState("rank must be between 1 and N".into()));
        }
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidState(
                "weights must be strictly positive".into(),
            ));
        }
        if weights.windows(2).any(|p| p[0] < p[1]) {
            return Err(Error::InvalidState(
                "weights must be sorted descending".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        let defect = orthonormality_defect(&v);
        if defect > ORTHONORMALITY_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "columns not orthonormal (defect {defect:e})"
            )));
        }
        Ok(LowRankState::from_parts(v, weights))
    }

    pub(crate) fn from_parts(v: CMat, weights: Vec<f64>) -> Self {
        LowRankState {
            v: Block::new(v),
            weights,
        }
    }

    pub(crate) fn from_block(v: Block, weights: Vec<f64>) -> Self {
        LowRankState { v, weights }
    }

    pub fn v(&self) -> &CMat {
        &self.v
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn into_parts(self) -> (CMat, Vec<f64>) {
        (self.v.into_inner(), self.weights)
    }

    /// Site count inferred from `N = 2^n`.
    pub fn n_sites(&self) -> Option<usize> {
        let n = self.dim();
        n.is_power_of_two().then(|| n.trailing_zeros() as usize)
    }

    /// Dense `ρ`; refused above `N = 4096`.
    pub fn to_dense(&self) -> Result<CMat> {
        if self.dim() > DENSE_LIMIT {
            return Err(Error::SizeGuard {
                dim: self.dim(),
                max: DENSE_LIMIT,
            });
        }
        Ok(crate::linalg::reconstruct(&self.v, &self.weights))
    }
}

/// Result of [`mix`]: the factored state and the number of components that
/// were requested. A rank below `requested` signals linearly dependent input.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub state: LowRankState,
    pub requested: usize,
}

impl Mixture {
    pub fn rank_deficient(&self) -> bool {
        self.state.rank() < self.requested
    }
}

/// `ρ = Σ w_k |ψ_k⟩⟨ψ_k|` in exact eigen-factored form.
pub fn mix(components: &[PureState], weights: &[f64]) -> Result<Mixture> {
    if components.is_empty() {
        return Err(Error::InvalidWeights(
            "mixture needs at least one component".into(),
        ));
    }
    if components.len() != weights.len() {
        return Err(Error::InvalidWeights(format!(
            "{} components but {} weights",
            components.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidWeights(
            "weights must be positive and finite".into(),
        ));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::InvalidWeights(format!(
            "weights sum to {sum}, expected 1"
        )));
    }
    let dim = components[0].dim();
    if let Some(bad) = components.iter().find(|c| c.dim() != dim) {
        return Err(Error::DimensionMismatch {
            context: "mixture components",
            expected: dim,
            found: bad.dim(),
        });
    }
    let k = components.len();
    if k > dim {
        return Err(Error::InvalidWeights(format!(
            "{k} components exceed dimension {dim}"
        )));
    }
    let mut psi = CMat::zeros(dim, k);
    for (j, c) in components.iter().enumerate() {
        psi.set_column(j, c.amplitudes());
    }
    // ρ = Ψ W Ψ* = Q (R W R*) Q*
    let qr = psi.qr();
    let q = qr.q();
    let r = qr.r();
    let mut rw = r.clone();
    for (mut col, &w) in rw.column_iter_mut().zip(weights) {
        col.scale_mut(w);
    }
    let small = &rw * r.adjoint();
    let (vals, vecs) = eigh_desc(&small);
    let lmax = vals[0];
    let keep = vals
        .iter()
        .take_while(|&&l| l > RANK_TOLERANCE * lmax)
        .count();
    let kept: f64 = vals[..keep].iter().sum();
    let lambda: Vec<f64> = vals[..keep].iter().map(|l| l / kept).collect();
    let mut v = q * vecs.columns(0, keep);
    normalize_phases(&mut v);
    Ok(Mixture {
        state: LowRankState::from_parts(v, lambda),
        requested: k,
    })
}

/// Werner state `p·I/N + (1−p)|ψ⟩⟨ψ|` carried through its rank-1 part.
#[derive(Debug, Clone, PartialEq)]
pub struct WernerState {
    pub core: LowRankState,
    pub p: f64,
}

impl WernerState {
    /// Damping rate to evolve the rank-1 part with.
    pub fn reduced_damping(&self, kappa: f64) -> f64 {
        (1.0 - self.p) * kappa
    }

    /// `p·I/N + (1−p)·ρ̂` for a dense `ρ̂` in the same space.
    pub fn reconstruct(&self, core_dense: &CMat) -> CMat {
        reconstruct_werner(self.p, core_dense)
    }
}

pub fn reconstruct_werner(p: f64, core_dense: &CMat) -> CMat {
    let n = core_dense.nrows();
    let mut out = core_dense * re(1.0 - p);
    for i in 0..n {
        out[(i, i)] += re(p / n as f64);
    }
    out
}

pub fn werner_split(psi: &PureState, p: f64) -> Result<(LowRankState, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Werner weight p = {p} outside (0, 1)"
        )));
    }
    Ok((psi.to_low_rank(), p))
}

/// Random full-rank mixed state with distinct positive eigenvalues, for
/// tests and benchmarks.
pub fn random_state(dim: usize, rank: usize, seed: u64) -> Result<LowRankState> {
    if rank == 0 || rank > dim {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} outside 1..={dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMat::from_fn(dim, rank, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let mut v = g.qr().q();
    normalize_phases(&mut v);
    let mut w: Vec<f64> = (0..rank).map(|_| rng.random_range(0.1..1.0)).collect();
    w.sort_by(|a, b| b.total_cmp(a));
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    Ok(LowRankState::from_parts(v, w))
}

/// Parsed initial-state expression.
///
/// Grammar: `af1 | af2 | ghz | w | basis:<index> | mix:[(<pure>,<w>),...]
/// | werner:(<pure>,<p>)`, where `<pure>` is any of the first five forms.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSpec {
    Af(u8),
    Ghz,
    W,
    Basis(usize),
    Mix(Vec<(StateSpec, f64)>),
    Werner(Box<StateSpec>, f64),
}

/// Output of [`StateSpec::build`].
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    LowRank(Mixture),
    Werner(WernerState),
}

impl InitialState {
    /// The factor that is actually evolved.
    pub fn evolved(&self) -> &LowRankState {
        match self {
            InitialState::LowRank(m) => &m.state,
            InitialState::Werner(w) => &w.core,
        }
    }
}

impl StateSpec {
    pub fn is_pure(&self) -> bool {
        !matches!(self, StateSpec::Mix(_) | StateSpec::Werner(..))
    }

    pub fn pure(&self, n: usize) -> Result<PureState> {
        match self {
            StateSpec::Af(v) => af_state(*v, n),
            StateSpec::Ghz => ghz_state(n),
            StateSpec::W => w_state(n),
            StateSpec::Basis(i) => basis_state(*i, n),
            _ => Err(Error::InvalidState(format!("`{self}` is not a pure state"))),
        }
    }

    pub fn build(&self, n: usize) -> Result<InitialState> {
        match self {
            StateSpec::Mix(parts) => {
                let comps = parts
                    .iter()
                    .map(|(s, _)| s.pure(n))
                    .collect::<Result<Vec<_>>>()?;
                let w: Vec<f64> = parts.iter().map(|(_, w)| *w).collect();
                Ok(InitialState::LowRank(mix(&comps, &w)?))
            }
            StateSpec::Werner(inner, p) => {
                let (core, p) = werner_split(&inner.pure(n)?, *p)?;
                Ok(InitialState::Werner(WernerState { core, p }))
            }
            pure => Ok(InitialState::LowRank(Mixture {
                state: pure.pure(n)?.to_low_rank(),
                requested: 1,
            })),
        }
    }
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpec::Af(v) => write!(f, "af{v}"),
            StateSpec::Ghz => write!(f, "ghz"),
            StateSpec::W => write!(f, "w"),
            StateSpec::Basis(i) => write!(f, "basis:{i}"),
            StateSpec::Mix(parts) => {
                write!(f, "mix:[")?;
                for (k, (s, w)) in parts.iter().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "({s},{w})")?;
                }
                write!(f, "]")
            }
            StateSpec::Werner(s, p) => write!(f, "werner:({s},{p})"),
        }
    }
}

fn parse_pure(s: &str) -> Result<StateSpec> {
    let s = s.trim();
    match s.to_ascii_lowercase().as_str() {
        "af1" => Ok(StateSpec::Af(1)),
        "af2" => Ok(StateSpec::Af(2)),
        "ghz" => Ok(StateSpec::Ghz),
        "w" => Ok(StateSpec::W),
        other => {
            if let Some(idx) = other.strip_prefix("basis:") {
                let i = idx
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad basis index `{idx}`")))?;
                Ok(StateSpec::Basis(i))
            } else {
                Err(Error::Parse(format!(
                    "unknown state `{s}` (expected af1, af2, ghz, w, basis:<index>, mix:[...], werner:(...))"
                )))
            }
        }
    }
}

fn parse_pair(s: &str) -> Result<(StateSpec, f64)> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| Error::Parse(format!("expected `(state,weight)`, got `{s}`")))?;
    let (state, w) = inner
        .rsplit_once(',')
        .ok_or_else(|| Error::Parse(format!("expected `(state,weight)`, got `{s}`")))?;
    let w: f64 = w
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad weight `{}`", w.trim())))?;
    Ok((parse_pure(state)?, w))
}

impl FromStr for StateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Some(rest) = t.strip_prefix("mix:") {
            let body = rest
                .trim()
                .strip_prefix('[')
                .and_then(|b| b.strip_suffix(']'))
                .ok_or_else(|| Error::Parse(format!("mix needs `[...]`, got `{rest}`")))?;
            let mut parts = Vec::new();
            let mut depth = 0i32;
            let mut start = 0usize;
            for (i, ch) in body.char_indices() {
                match ch {
                    '(' => depth += 1,
                    ')' => {
                        depth -= 1;
                        if depth == 0 {
                            parts.push(parse_pair(&body[start..=i])?);
                        }
                    }
                    ',' if depth == 0 => start = i + 1,
                    c if depth == 0 && !c.is_whitespace() => {
                        return Err(Error::Parse(format!("unexpected `{c}` in mix list")));
                    }
                    _ => {}
                }
                if depth < 0 {
                    return Err(Error::Parse("unbalanced parentheses in mix list".into()));
                }
            }
            if depth != 0 {
                return Err(Error::Parse("unbalanced parentheses in mix list".into()));
            }
            if parts.is_empty() {
                return Err(Error::Parse("empty mix list".into()));
            }
            return Ok(StateSpec::Mix(parts));
        }
        if let Some(rest) = t.strip_prefix("werner:") {
            let (state, p) = parse_pair(rest)?;
            return Ok(StateSpec::Werner(Box::new(state), p));
        }
        parse_pure(t)
    }
}

/// Amplitude vector with a single entry, 0-based; convenience for tests.
pub fn unit_vector(dim: usize, index0: usize) -> CVec {
    let mut v = DVector::from_element(dim, ZERO);
    v[index0] = re(1.0);
    v
}

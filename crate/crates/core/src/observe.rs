//! Observables evaluated directly on the factors `(Ṽ, Λ₀)`.
//!
//! Nothing here forms `ρ`. Expectations use `Tr(Λ (Ṽ* (A Ṽ)))`; the
//! two-site reduced density and the magnetization are computed by walking
//! basis indices, which is a partial trace without any auxiliary operator.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{eigh_desc, re, CMat, C64, I, ZERO};
use crate::spinsys::{Axis, SparseHermitian};
use crate::states::LowRankState;

const IMAG_TOLERANCE: f64 = 1e-10;
const PSD_TOLERANCE: f64 = 1e-10;

fn check_dim(a: &SparseHermitian, state: &LowRankState) -> Result<()> {
    if a.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            context: "observable vs state",
            expected: a.dim(),
            found: state.dim(),
        });
    }
    Ok(())
}

/// `Tr(A ρ)` before the imaginary part is dropped.
pub fn expectation_complex(a: &SparseHermitian, state: &LowRankState) -> Result<C64> {
    check_dim(a, state)?;
    let av = a.apply_block(state.v())?;
    let v = state.v();
    let mut acc = ZERO;
    for (j, &l) in state.weights().iter().enumerate() {
        acc += v.column(j).dotc(&av.column(j)) * l;
    }
    Ok(acc)
}

/// `Tr(A ρ)` for Hermitian `A`.
pub fn expectation(a: &SparseHermitian, state: &LowRankState) -> Result<f64> {
    let z = expectation_complex(a, state)?;
    debug_assert!(
        z.im.abs() <= IMAG_TOLERANCE * (1.0 + z.re.abs()),
        "imaginary residue {z}"
    );
    Ok(z.re)
}

/// Site magnetization averaged over sites, `(1/n) Σ_i ⟨S_i⟩`, without
/// building the spin operators.
pub fn magnetization(state: &LowRankState, hbar: f64) -> Result<[f64; 3]> {
    let n_sites = state
        .n_sites()
        .ok_or_else(|| Error::InvalidState("dimension is not a power of two".into()))?;
    let dim = state.dim();
    let v = state.v();
    let mut out = [0.0f64; 3];
    for (j, &lam) in state.weights().iter().enumerate() {
        let col = v.column(j);
        let (mut sx, mut sy, mut sz) = (ZERO, ZERO, 0.0f64);
        for site in 1..=n_sites {
            let bit = 1usize << (n_sites - site);
            for b in 0..dim {
                let amp = col[b];
                let flipped = col[b ^ bit];
                // ⟨b|σx|b⊕bit⟩ = 1, ⟨b|σy|b⊕bit⟩ = −i for bit 0, +i for bit 1
                sx += amp.conj() * flipped;
                if b & bit == 0 {
                    sy += -I * amp.conj() * flipped;
                    sz += amp.norm_sqr();
                } else {
                    sy += I * amp.conj() * flipped;
                    sz -= amp.norm_sqr();
                }
            }
        }
        out[0] += lam * sx.re;
        out[1] += lam * sy.re;
        out[2] += lam * sz;
    }
    let scale = hbar / 2.0 / n_sites as f64;
    Ok(out.map(|x| x * scale))
}

/// Two-site reduced density matrix, basis order `|s_k s_l⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDensity2 {
    pub matrix: CMat,
    pub sites: (usize, usize),
}

impl ReducedDensity2 {
    pub fn new(matrix: CMat, sites: (usize, usize)) -> Result<Self> {
        if matrix.shape() != (4, 4) {
            return Err(Error::DimensionMismatch {
                context: "two-site reduced density",
                expected: 4,
                found: matrix.nrows(),
            });
        }
        Ok(ReducedDensity2 { matrix, sites })
    }

    /// Mixes in maximal noise: `p·I/4 + (1−p)·R`.
    pub fn with_noise(&self, p: f64) -> Self {
        let mut m = &self.matrix * re(1.0 - p);
        for i in 0..4 {
            m[(i, i)] += re(p / 4.0);
        }
        ReducedDensity2 {
            matrix: m,
            sites: self.sites,
        }
    }
}

/// `Tr_{rest} ρ` for sites `k ≠ l` (1-based).
pub fn reduced_density_2spin(state: &LowRankState, k: usize, l: usize) -> Result<ReducedDensity2> {
    let n = state
        .n_sites()
        .ok_or_else(|| Error::InvalidState("dimension is not a power of two".into()))?;
    for s in [k, l] {
        if s == 0 || s > n {
            return Err(Error::SiteOutOfRange { site: s, n });
        }
    }
    if k == l {
        return Err(Error::InvalidArgument(format!(
            "reduced density needs two distinct sites, got {k} twice"
        )));
    }
    let bk = 1usize << (n - k);
    let bl = 1usize << (n - l);
    let mask = bk | bl;
    let embed = |a: usize| (if a & 2 != 0 { bk } else { 0 }) | (if a & 1 != 0 { bl } else { 0 });
    let offs: [usize; 4] = [embed(0), embed(1), embed(2), embed(3)];
    let v = state.v();
    let mut r = CMat::zeros(4, 4);
    for (j, &lam) in state.weights().iter().enumerate() {
        let col = v.column(j);
        let mut acc = [[ZERO; 4]; 4];
        for e in (0..state.dim()).filter(|e| e & mask == 0) {
            let amps = offs.map(|o| col[e | o]);
            for a in 0..4 {
                for b in 0..4 {
                    acc[a][b] += amps[a] * amps[b].conj();
                }
            }
        }
        for a in 0..4 {
            for b in 0..4 {
                r[(a, b)] += acc[a][b] * lam;
            }
        }
    }
    ReducedDensity2::new(r, (k, l))
}

fn spin_flip(r: &CMat) -> CMat {
    // σy⊗σy maps |ab⟩ to −(−1)^{a+b}|āb̄⟩; conjugation by it is an index
    // reversal with sign (−1)^{a+b+c+d}, and the two − signs cancel.
    CMat::from_fn(4, 4, |i, j| {
        let sign = if ((i.count_ones() + j.count_ones()) % 2) == 0 {
            1.0
        } else {
            -1.0
        };
        r[(3 - i, 3 - j)].conj() * sign
    })
}

fn psd_sqrt(m: &CMat) -> Result<CMat> {
    let (vals, vecs) = eigh_desc(m);
    let min = vals.last().copied().unwrap_or(0.0);
    if min < -PSD_TOLERANCE {
        return Err(Error::NotPositiveSemidefinite { min_eig: min });
    }
    let mut scaled = vecs.clone();
    for (mut col, &l) in scaled.column_iter_mut().zip(&vals) {
        col.scale_mut(l.max(0.0).sqrt());
    }
    Ok(scaled * vecs.adjoint())
}

/// Wootters concurrence, via the Hermitian form `√R R̃ √R`.
pub fn concurrence(r: &ReducedDensity2) -> Result<f64> {
    let s = psd_sqrt(&r.matrix)?;
    let m = &s * spin_flip(&r.matrix) * &s;
    let (mu, _) = eigh_desc(&m);
    if let Some(&min) = mu.last() {
        if min < -PSD_TOLERANCE {
            return Err(Error::NotPositiveSemidefinite { min_eig: min });
        }
    }
    let sq: Vec<f64> = mu.iter().map(|x| x.max(0.0).sqrt()).collect();
    Ok((sq[0] - sq[1] - sq[2] - sq[3]).clamp(0.0, 1.0))
}

/// `(‖R^{T_B}‖₁ − 1)/2`, partial transpose on the second site.
pub fn negativity(r: &ReducedDensity2) -> f64 {
    let m = &r.matrix;
    let pt = CMat::from_fn(4, 4, |i, j| {
        let (a1, a2) = (i >> 1, i & 1);
        let (b1, b2) = (j >> 1, j & 1);
        m[((a1 << 1) | b2, (b1 << 1) | a2)]
    });
    let (vals, _) = eigh_desc(&pt);
    let norm1: f64 = vals.iter().map(|x| x.abs()).sum();
    ((norm1 - 1.0) / 2.0).max(0.0)
}

/// `Σ λ_i^m`, exact from the conserved spectrum.
pub fn trace_power(state: &LowRankState, m: u32) -> f64 {
    state.weights().iter().map(|l| l.powi(m as i32)).sum()
}

/// `Tr(Ṽ Λ Ṽ*) = Σ λ_j ‖ṽ_j‖²`, sensitive to loss of normalization.
pub fn trace_from_factors(state: &LowRankState) -> f64 {
    let v = state.v();
    state
        .weights()
        .iter()
        .enumerate()
        .map(|(j, l)| l * v.column(j).norm_squared())
        .sum()
}

/// `Tr(ρ²) = Σ_jk λ_j λ_k |ṽ_j* ṽ_k|²`, sensitive to loss of orthogonality.
pub fn purity_from_factors(state: &LowRankState) -> f64 {
    let g = state.v().ad_mul(state.v());
    let w = state.weights();
    let mut acc = 0.0;
    for j in 0..w.len() {
        for k in 0..w.len() {
            acc += w[j] * w[k] * g[(j, k)].norm_sqr();
        }
    }
    acc
}

/// `Tr(A ρ_W)` for `ρ_W = p·I/N + (1−p)·ρ̂`.
pub fn werner_expectation(a: &SparseHermitian, core: &LowRankState, p: f64) -> Result<f64> {
    let base = expectation(a, core)?;
    Ok(p * a.trace() / a.dim() as f64 + (1.0 - p) * base)
}

/// Reduced density of `p·I/N + (1−p)·ρ̂`.
pub fn werner_reduced_density(
    core: &LowRankState,
    p: f64,
    k: usize,
    l: usize,
) -> Result<ReducedDensity2> {
    Ok(reduced_density_2spin(core, k, l)?.with_noise(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Selector {
    Energy,
    Magnetization(Axis),
    Concurrence(usize, usize),
    Negativity(usize, usize),
    Trace,
    Purity,
}

impl Selector {
    /// CSV column name.
    pub fn column(&self) -> String {
        match self {
            Selector::Energy => "energy".into(),
            Selector::Magnetization(Axis::X) => "mx".into(),
            Selector::Magnetization(Axis::Y) => "my".into(),
            Selector::Magnetization(Axis::Z) => "mz".into(),
            Selector::Concurrence(k, l) => format!("concurrence_{k}_{l}"),
            Selector::Negativity(k, l) => format!("negativity_{k}_{l}"),
            Selector::Trace => "trace".into(),
            Selector::Purity => "purity".into(),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Concurrence(k, l) => write!(f, "concurrence:{k},{l}"),
            Selector::Negativity(k, l) => write!(f, "negativity:{k},{l}"),
            other => f.write_str(&other.column()),
        }
    }
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| Error::Parse(format!("expected `k,l`, got `{s}`")))?;
    let k = a
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad site `{a}`")))?;
    let l = b
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad site `{b}`")))?;
    if k == l {
        return Err(Error::Parse(format!(
            "pair measure needs distinct sites, got {k},{l}"
        )));
    }
    Ok((k, l))
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Ok(match t.as_str() {
            "energy" => Selector::Energy,
            "mx" => Selector::Magnetization(Axis::X),
            "my" => Selector::Magnetization(Axis::Y),
            "mz" => Selector::Magnetization(Axis::Z),
            "trace" => Selector::Trace,
            "purity" => Selector::Purity,
            other => {
                if let Some(rest) = other.strip_prefix("concurrence:") {
                    let (k, l) = parse_pair(rest)?;
                    Selector::Concurrence(k, l)
                } else if let Some(rest) = other.strip_prefix("negativity:") {
                    let (k, l) = parse_pair(rest)?;
                    Selector::Negativity(k, l)
                } else {
                    return Err(Error::Parse(format!(
                        "unknown observable `{s}` (valid: energy, mx, my, mz, concurrence:k,l, negativity:k,l, trace, purity)"
                    )));
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairMeasures {
    pub concurrence: Option<f64>,
    pub negativity: Option<f64>,
}

/// One time sample. Quantities that were not selected are `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservableRecord {
    pub t: f64,
    pub energy: Option<f64>,
    pub magnetization: Option<[f64; 3]>,
    pub pair_measures: BTreeMap<(usize, usize), PairMeasures>,
    pub trace: f64,
    pub purity: f64,
    pub ritz_drift: f64,
}

impl ObservableRecord {
    pub fn value(&self, sel: &Selector) -> Option<f64> {
        match sel {
            Selector::Energy => self.energy,
            Selector::Magnetization(a) => self.magnetization.map(|m| m[a.index()]),
            Selector::Concurrence(k, l) => self
                .pair_measures
                .get(&(*k, *l))
                .and_then(|p| p.concurrence),
            Selector::Negativity(k, l) => {
                self.pair_measures.get(&(*k, *l)).and_then(|p| p.negativity)
            }
            Selector::Trace => Some(self.trace),
            Selector::Purity => Some(self.purity),
        }
    }
}

/// Selected observables for one system, optionally seen through a Werner
/// noise weight `p`.
#[derive(Debug, Clone)]
pub struct ObservableSet<'h> {
    selectors: Vec<Selector>,
    hamiltonian: &'h SparseHermitian,
    hbar: f64,
    werner: Option<f64>,
    h_trace: f64,
}

impl<'h> ObservableSet<'h> {
    pub fn new(
        selectors: Vec<Selector>,
        hamiltonian: &'h SparseHermitian,
        hbar: f64,
    ) -> Result<Self> {
        let n = hamiltonian.dim().trailing_zeros() as usize;
        for sel in &selectors {
            if let Selector::Concurrence(k, l) | Selector::Negativity(k, l) = *sel {
                for s in [k, l] {
                    if s == 0 || s > n {
                        return Err(Error::SiteOutOfRange { site: s, n });
                    }
                }
            }
        }
        Ok(ObservableSet {
            selectors,
            hamiltonian,
            hbar,
            werner: None,
            h_trace: 0.0,
        })
    }

    /// Report observables of `p·I/N + (1−p)·ρ̂` when sampling `ρ̂`.
    pub fn with_werner(mut self, p: f64) -> Self {
        self.h_trace = self.hamiltonian.trace();
        self.werner = Some(p);
        self
    }

    pub fn selectors(&self) -> &[Selector] {
        &self.selectors
    }

    pub fn columns(&self) -> Vec<String> {
        self.selectors.iter().map(Selector::column).collect()
    }

    pub fn sample(&self, t: f64, state: &LowRankState) -> Result<ObservableRecord> {
        let p = self.werner.unwrap_or(0.0);
        let dim = state.dim() as f64;
        let mut rec = ObservableRecord {
            t,
            ..Default::default()
        };
        let core_trace = trace_from_factors(state);
        let core_purity = purity_from_factors(state);
        rec.trace = p + (1.0 - p) * core_trace;
        rec.purity =
            p * p / dim + 2.0 * p * (1.0 - p) * core_trace / dim + (1.0 - p).powi(2) * core_purity;

        if self.selectors.contains(&Selector::Energy) {
            let e = expectation(self.hamiltonian, state)?;
            rec.energy = Some(p * self.h_trace / dim + (1.0 - p) * e);
        }
        if self
            .selectors
            .iter()
            .any(|s| matches!(s, Selector::Magnetization(_)))
        {
            rec.magnetization = Some(magnetization(state, self.hbar)?.map(|m| (1.0 - p) * m));
        }
        let mut cache: BTreeMap<(usize, usize), ReducedDensity2> = BTreeMap::new();
        for sel in &self.selectors {
            let (k, l, conc) = match *sel {
                Selector::Concurrence(k, l) => (k, l, true),
                Selector::Negativity(k, l) => (k, l, false),
                _ => continue,
            };
            if let std::collections::btree_map::Entry::Vacant(e) = cache.entry((k, l)) {
                let r = reduced_density_2spin(state, k, l)?;
                e.insert(if p > 0.0 { r.with_noise(p) } else { r });
            }
            let r = &cache[&(k, l)];
            let entry = rec.pair_measures.entry((k, l)).or_default();
            if conc {
                entry.concurrence = Some(concurrence(r)?);
            } else {
                entry.negativity = Some(negativity(r));
            }
        }
        Ok(rec)
    }
}

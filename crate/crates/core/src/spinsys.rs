//! Sparse spin-1/2 operators on `n`-site lattices.
//!
//! Basis convention: computational basis index `b` in `0..2^n`, with site 1
//! stored in the most significant bit. This matches the Kronecker order
//! `S_i = I ⊗ … ⊗ (ħ/2)σ ⊗ … ⊗ I`, where the σ sits in tensor slot `i`.
//!
//! Operators are assembled from Pauli strings. A string is a Kronecker
//! product of single-site Pauli matrices, so it has exactly one nonzero per
//! row; assembly sums the strings entry by entry into a row-compressed
//! structure and prunes entries below `1e-15`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ZERO};

/// Default upper bound on the number of sites.
pub const DEFAULT_MAX_SITES: usize = 26;

/// Reduced Planck constant in meV·ps.
pub const HBAR_MEV_PS: f64 = 0.6582119569;

/// Bohr magneton in meV/T.
pub const BOHR_MAGNETON_MEV_PER_T: f64 = 5.8e-2;

/// Landé g-factor.
pub const G_FACTOR: f64 = 2.0;

const PRUNE: f64 = 1e-15;

/// Site limit, honoring the `LREI_MAX_SITES` environment override.
pub fn max_sites() -> usize {
    std::env::var("LREI_MAX_SITES")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_SITES)
        .min(32)
}

pub(crate) fn check_sites(n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one site".into()));
    }
    let max = max_sites();
    if n > max {
        return Err(Error::DimensionOverflow { n_sites: n, max });
    }
    Ok(1usize << n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticePreset {
    Chain,
    Triangular,
    Custom,
}

/// Sites and bonds. Sites are numbered `1..=n_sites`; every edge is stored
/// once as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinLattice {
    n_sites: usize,
    edges: Vec<(usize, usize)>,
    preset: LatticePreset,
    periodic: bool,
}

impl SpinLattice {
    /// Builds a custom lattice, normalizing every edge to `i < j`.
    pub fn custom(n_sites: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::from_edges(n_sites, edges.iter().copied(), LatticePreset::Custom, false)
    }

    /// Open or periodic chain `1-2-…-n`.
    pub fn chain(n_sites: usize, periodic: bool) -> Result<Self> {
        let mut edges: Vec<(usize, usize)> = (1..n_sites).map(|i| (i, i + 1)).collect();
        if periodic && n_sites > 2 {
            edges.push((1, n_sites));
        }
        Self::from_edges(n_sites, edges, LatticePreset::Chain, periodic)
    }

    /// Triangular lattice on a `rows × cols` grid in skew coordinates: site
    /// `(a, b)` bonds to `(a, b+1)`, `(a+1, b)` and `(a+1, b+1)`. With
    /// `periodic` the grid wraps in both directions.
    pub fn triangular(rows: usize, cols: usize, periodic: bool) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidLattice(
                "triangular lattice needs rows, cols >= 1".into(),
            ));
        }
        let site = |a: usize, b: usize| a * cols + b + 1;
        let mut edges = Vec::new();
        for a in 0..rows {
            for b in 0..cols {
                for (da, db) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let (na, nb) = (a + da, b + db);
                    let (na, nb) = if periodic {
                        (na % rows, nb % cols)
                    } else if na >= rows || nb >= cols {
                        continue;
                    } else {
                        (na, nb)
                    };
                    let (i, j) = (site(a, b), site(na, nb));
                    if i != j {
                        edges.push((i, j));
                    }
                }
            }
        }
        Self::from_edges(rows * cols, edges, LatticePreset::Triangular, periodic)
    }

    fn from_edges(
        n_sites: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        preset: LatticePreset,
        periodic: bool,
    ) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidLattice(
                "lattice needs at least one site".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidLattice(format!("self-loop at site {a}")));
            }
            for s in [a, b] {
                if s == 0 || s > n_sites {
                    return Err(Error::SiteOutOfRange {
                        site: s,
                        n: n_sites,
                    });
                }
            }
            let e = (a.min(b), a.max(b));
            if seen.insert(e) {
                out.push(e);
            } else if preset == LatticePreset::Custom {
                return Err(Error::InvalidLattice(format!("duplicate edge {e:?}")));
            }
        }
        Ok(SpinLattice {
            n_sites,
            edges: out,
            preset,
            periodic,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn preset(&self) -> LatticePreset {
        self.preset
    }

    pub fn periodic(&self) -> bool {
        self.periodic
    }
}

/// Dzyaloshinskii–Moriya vectors, oriented along the stored `i < j` edges.
#[derive(Debug, Clone, PartialEq)]
pub enum Dmi {
    Uniform([f64; 3]),
    PerEdge(Vec<[f64; 3]>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianParams {
    /// Isotropic exchange `J`.
    pub j: f64,
    pub dmi: Dmi,
    /// Uniform external field `b`.
    pub b_field: [f64; 3],
    /// Gyromagnetic constant `μ`.
    pub mu: f64,
    pub hbar: f64,
}

impl HamiltonianParams {
    /// Parameters with `μ = −μ_B g / ħ`.
    pub fn new(j: f64, dmi: Dmi, b_field: [f64; 3], hbar: f64) -> Self {
        HamiltonianParams {
            j,
            dmi,
            b_field,
            mu: -BOHR_MAGNETON_MEV_PER_T * G_FACTOR / hbar,
            hbar,
        }
    }

    /// `J = 1`, `d = 0.4 ẑ`, `b = 1 x̂`.
    pub fn reference_system(hbar: f64) -> Self {
        Self::new(1.0, Dmi::Uniform([0.0, 0.0, 0.4]), [1.0, 0.0, 0.0], hbar)
    }

    fn validate(&self, lattice: &SpinLattice) -> Result<()> {
        let finite = |x: f64| x.is_finite();
        let dmi_ok = match &self.dmi {
            Dmi::Uniform(d) => d.iter().all(|&x| finite(x)),
            Dmi::PerEdge(ds) => {
                if ds.len() != lattice.edges().len() {
                    return Err(Error::DimensionMismatch {
                        context: "per-edge DMI vectors",
                        expected: lattice.edges().len(),
                        found: ds.len(),
                    });
                }
                ds.iter().flatten().all(|&x| finite(x))
            }
        };
        if !(finite(self.j) && dmi_ok && self.b_field.iter().all(|&x| finite(x)) && finite(self.mu))
        {
            return Err(Error::InvalidArgument(
                "Hamiltonian parameters must be finite".into(),
            ));
        }
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::InvalidArgument("hbar must be positive".into()));
        }
        Ok(())
    }
}

/// Row-compressed Hermitian operator of dimension `2^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHermitian {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<C64>,
}

impl SparseHermitian {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&j, &v)| (j as usize, v))
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&(j as u32)) {
            Ok(k) => self.values[span.start + k],
            Err(_) => ZERO,
        }
    }

    /// `y = A x`.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[k] * x[self.indices[k] as usize];
            }
            *yi = acc;
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim];
        self.apply_into(x, &mut y);
        y
    }

    /// `A X` for a tall block `X`, one pass over the sparsity pattern.
    pub fn apply_block(&self, x: &CMat) -> Result<CMat> {
        if x.nrows() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "sparse block product",
                expected: self.dim,
                found: x.nrows(),
            });
        }
        let cols = x.ncols();
        let n = self.dim;
        let mut y = CMat::zeros(n, cols);
        let xs = x.as_slice();
        let ys = y.as_mut_slice();
        let mut acc = vec![ZERO; cols];
        for i in 0..n {
            acc.iter_mut().for_each(|a| *a = ZERO);
            for k in self.indptr[i]..self.indptr[i + 1] {
                let (j, v) = (self.indices[k] as usize, self.values[k]);
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += v * xs[c * n + j];
                }
            }
            for (c, a) in acc.iter().enumerate() {
                ys[c * n + i] = *a;
            }
        }
        Ok(y)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.entry(i, i).re).sum()
    }

    /// Largest `|A(i,j) − conj(A(j,i))|` over the stored entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.entry(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Dense copy, for verification at small sizes only.
    pub fn to_dense(&self) -> Result<CMat> {
        const MAX_DENSE: usize = 1 << 12;
        if self.dim > MAX_DENSE {
            return Err(Error::SizeGuard {
                dim: self.dim,
                max: MAX_DENSE,
            });
        }
        let mut m = CMat::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }
}

/// Weighted sum of Pauli strings on `n` sites.
///
/// A string is stored by its flip mask (sites carrying X or Y) and phase
/// mask (sites carrying Z or Y); `P|b⟩ = i^{#Y} (−1)^{|b ∧ z|} |b ⊕ x⟩`.
#[derive(Debug, Clone, Default)]
pub struct PauliSum {
    n: usize,
    // flip mask -> list of (phase mask, coefficient including i^{#Y})
    groups: BTreeMap<u64, Vec<(u64, C64)>>,
}

impl PauliSum {
    pub fn new(n: usize) -> Self {
        PauliSum {
            n,
            groups: BTreeMap::new(),
        }
    }

    fn bit(&self, site: usize) -> u64 {
        1u64 << (self.n - site)
    }

    /// Adds `coeff · σ_{a1}^{(s1)} σ_{a2}^{(s2)} …` for distinct 1-based sites.
    pub fn add(&mut self, coeff: C64, factors: &[(usize, Axis)]) {
        let (mut x, mut z, mut ny) = (0u64, 0u64, 0u32);
        for &(site, axis) in factors {
            let b = self.bit(site);
            match axis {
                Axis::X => x |= b,
                Axis::Z => z |= b,
                Axis::Y => {
                    x |= b;
                    z |= b;
                    ny += 1;
                }
            }
        }
        let phase = match ny % 4 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        };
        self.groups.entry(x).or_default().push((z, coeff * phase));
    }

    /// Sums all strings into a row-compressed operator.
    pub fn assemble(&self) -> Result<SparseHermitian> {
        let dim = check_sites(self.n)?;
        let groups: Vec<(u64, &[(u64, C64)])> = self
            .groups
            .iter()
            .map(|(&x, zs)| (x, zs.as_slice()))
            .collect();
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut row: Vec<(u32, C64)> = Vec::with_capacity(groups.len());
        indptr.push(0);
        for r in 0..dim as u64 {
            row.clear();
            for &(x, zs) in &groups {
                let col = r ^ x;
                let mut v = ZERO;
                for &(z, c) in zs {
                    if (col & z).count_ones() % 2 == 0 {
                        v += c;
                    } else {
                        v -= c;
                    }
                }
                if v.norm() >= PRUNE {
                    row.push((col as u32, v));
                }
            }
            row.sort_unstable_by_key(|&(c, _)| c);
            indices.extend(row.iter().map(|&(c, _)| c));
            values.extend(row.iter().map(|&(_, v)| v));
            indptr.push(values.len());
        }
        Ok(SparseHermitian {
            dim,
            indptr,
            indices,
            values,
        })
    }
}

fn check_site(site: usize, n: usize) -> Result<()> {
    if site == 0 || site > n {
        return Err(Error::SiteOutOfRange { site, n });
    }
    Ok(())
}

/// `S_site^axis = (ħ/2) σ_axis` in tensor slot `site` (1-based).
pub fn spin_operator(site: usize, axis: Axis, n: usize, hbar: f64) -> Result<SparseHermitian> {
    check_sites(n)?;
    check_site(site, n)?;
    let mut sum = PauliSum::new(n);
    sum.add(C64::new(hbar / 2.0, 0.0), &[(site, axis)]);
    sum.assemble()
}

/// `M_v = (1/n) Σ_i S_i^v`.
pub fn magnetization_operator(axis: Axis, n: usize, hbar: f64) -> Result<SparseHermitian> {
    check_sites(n)?;
    let mut sum = PauliSum::new(n);
    let c = C64::new(hbar / 2.0 / n as f64, 0.0);
    for site in 1..=n {
        sum.add(c, &[(site, axis)]);
    }
    sum.assemble()
}

/// Pauli-string form of the spin Hamiltonian
/// `H = (2J/ħ²) Σ S_i·S_j + (2/ħ²) Σ d_ij·(S_i × S_j) − μ Σ b·S_i`,
/// each unordered edge counted once.
pub fn hamiltonian_terms(lattice: &SpinLattice, params: &HamiltonianParams) -> Result<PauliSum> {
    params.validate(lattice)?;
    let n = lattice.n_sites();
    let hb = params.hbar;
    let mut sum = PauliSum::new(n);
    // (2/ħ²)(ħ/2)² = 1/2
    let exch = C64::new(params.j / 2.0, 0.0);
    for (e, &(i, j)) in lattice.edges().iter().enumerate() {
        if params.j != 0.0 {
            for a in Axis::ALL {
                sum.add(exch, &[(i, a), (j, a)]);
            }
        }
        let d = match &params.dmi {
            Dmi::Uniform(d) => *d,
            Dmi::PerEdge(ds) => ds[e],
        };
        // (S_i × S_j)_x = S_i^y S_j^z − S_i^z S_j^y, cyclic.
        let cross = [(Axis::Y, Axis::Z), (Axis::Z, Axis::X), (Axis::X, Axis::Y)];
        for (k, &(a, b)) in cross.iter().enumerate() {
            if d[k] != 0.0 {
                let c = C64::new(d[k] / 2.0, 0.0);
                sum.add(c, &[(i, a), (j, b)]);
                sum.add(-c, &[(i, b), (j, a)]);
            }
        }
    }
    for site in 1..=n {
        for a in Axis::ALL {
            let bv = params.b_field[a.index()];
            if bv != 0.0 {
                sum.add(C64::new(-params.mu * bv * hb / 2.0, 0.0), &[(site, a)]);
            }
        }
    }
    Ok(sum)
}

pub fn build_hamiltonian(
    lattice: &SpinLattice,
    params: &HamiltonianParams,
) -> Result<SparseHermitian> {
    check_sites(lattice.n_sites())?;
    hamiltonian_terms(lattice, params)?.assemble()
}

/// Number of stored entries the assembled Hamiltonian would have, without
/// building it: distinct flip masks with a nonzero coefficient on some row.
pub fn estimate_hamiltonian_nnz(lattice: &SpinLattice, params: &HamiltonianParams) -> Result<u128> {
    let terms = hamiltonian_terms(lattice, params)?;
    Ok((terms.groups.len() as u128) << lattice.n_sites())
}

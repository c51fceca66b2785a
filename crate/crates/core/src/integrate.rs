//! Spectrum-preserving explicit integrators on the factored state.
//!
//! Every intermediate density matrix is held as a Hermitian-pairs
//! [`LowRankSum`]: the base `ρ_k = Ṽ Λ₀ Ṽ*` as the pair `(Ṽ, Ṽ, Λ₀/2)` and
//! each stage derivative `K_ℓ = Y_ℓ Ṽ_ℓ* + Ṽ_ℓ Y_ℓ*` as the pair
//! `(Y_ℓ, Ṽ_ℓ, h·a)`. The leading `r` eigenvectors of that sum become the
//! next support and `Λ₀` is reattached, so the spectrum never drifts.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::audit::{self, Block};
use crate::dynamics::{rhs, ModelKind};
use crate::error::{Error, Result};
use crate::linalg::{re, CVec, C64};
use crate::lowrank::{lanczos_topk, LanczosOptions, LowRankSum, SumForm};
use crate::observe::{ObservableRecord, ObservableSet};
use crate::spinsys::SparseHermitian;
use crate::states::LowRankState;

/// Residual tolerance of the eigensolves inside a step.
pub const STEP_LANCZOS_TOLERANCE: f64 = 1e-12;

const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Tableau {
    pub name: &'static str,
    /// Strictly lower triangular; row `j` holds `a_{j,0..j}`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub order: usize,
}

impl Tableau {
    pub fn euler() -> Self {
        Tableau {
            name: "euler",
            a: vec![vec![]],
            b: vec![1.0],
            order: 1,
        }
    }

    /// Heun's method, `a21 = 1`, `b = (1/2, 1/2)`.
    pub fn heun() -> Self {
        Tableau {
            name: "heun",
            a: vec![vec![], vec![1.0]],
            b: vec![0.5, 0.5],
            order: 2,
        }
    }

    /// Kutta's third-order method.
    pub fn kutta3() -> Self {
        Tableau {
            name: "kutta3",
            a: vec![vec![], vec![0.5], vec![-1.0, 2.0]],
            b: vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            order: 3,
        }
    }

    pub fn rk4() -> Self {
        Tableau {
            name: "rk4",
            a: vec![vec![], vec![0.5], vec![0.0, 0.5], vec![0.0, 0.0, 1.0]],
            b: vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            order: 4,
        }
    }

    pub fn of_order(order: usize) -> Result<Self> {
        match order {
            1 => Ok(Self::euler()),
            2 => Ok(Self::heun()),
            3 => Ok(Self::kutta3()),
            4 => Ok(Self::rk4()),
            _ => Err(Error::InvalidArgument(format!(
                "no Runge-Kutta tableau of order {order}"
            ))),
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Stage nodes `c_j = Σ_ℓ a_{jℓ}`.
    pub fn nodes(&self) -> Vec<f64> {
        self.a.iter().map(|row| row.iter().sum()).collect()
    }
}

/// Adams–Bashforth weights, newest derivative first.
pub fn ab_weights(order: usize) -> Result<Vec<f64>> {
    match order {
        2 => Ok(vec![1.5, -0.5]),
        3 => Ok([23.0, -16.0, 5.0].iter().map(|x| x / 12.0).collect()),
        4 => Ok([55.0, -59.0, 37.0, -9.0].iter().map(|x| x / 24.0).collect()),
        _ => Err(Error::InvalidArgument(format!(
            "no Adams-Bashforth scheme of order {order}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Rk(u8),
    Ab(u8),
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Rk(1),
        Scheme::Rk(2),
        Scheme::Rk(3),
        Scheme::Rk(4),
        Scheme::Ab(2),
        Scheme::Ab(3),
        Scheme::Ab(4),
    ];

    pub fn order(self) -> usize {
        match self {
            Scheme::Rk(m) | Scheme::Ab(m) => m as usize,
        }
    }

    /// Derivative evaluations per step once running.
    pub fn stages(self) -> usize {
        match self {
            Scheme::Rk(m) => m as usize,
            Scheme::Ab(_) => 1,
        }
    }

    pub fn is_multistep(self) -> bool {
        matches!(self, Scheme::Ab(_))
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Rk(m) => write!(f, "rk{m}"),
            Scheme::Ab(m) => write!(f, "ab{m}"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.to_string() == t)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown scheme `{s}` (valid: rk1, rk2, rk3, rk4, ab2, ab3, ab4)"
                ))
            })
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    /// `max |θ_i − λ₀_i|` over the step's eigensolves.
    pub ritz_drift: f64,
    pub eigensolves: usize,
    pub matvecs: usize,
    pub restarts: usize,
}

impl StepReport {
    fn absorb(&mut self, other: StepReport) {
        self.ritz_drift = self.ritz_drift.max(other.ritz_drift);
        self.eigensolves += other.eigensolves;
        self.matvecs += other.matvecs;
        self.restarts += other.restarts;
    }
}

/// Immutable step context: Hamiltonian, model and eigensolver settings.
#[derive(Debug, Clone)]
pub struct Stepper<'h> {
    pub hamiltonian: &'h SparseHermitian,
    pub model: ModelKind,
    pub lanczos_tol: f64,
    pub seed: u64,
}

impl<'h> Stepper<'h> {
    pub fn new(hamiltonian: &'h SparseHermitian, model: ModelKind) -> Result<Self> {
        model.validate()?;
        Ok(Stepper {
            hamiltonian,
            model,
            lanczos_tol: STEP_LANCZOS_TOLERANCE,
            seed: crate::lowrank::lanczos::DEFAULT_SEED,
        })
    }

    fn check(&self, state: &LowRankState, h: f64) -> Result<()> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive, got {h}"
            )));
        }
        if state.dim() != self.hamiltonian.dim() {
            return Err(Error::DimensionMismatch {
                context: "state vs Hamiltonian",
                expected: self.hamiltonian.dim(),
                found: state.dim(),
            });
        }
        Ok(())
    }

    /// `Y` with `ρ̇ = Y Ṽ* + Ṽ Y*` at `(Ṽ, Λ₀)`.
    fn derivative(&self, v: &crate::linalg::CMat, lambda: &[f64]) -> Result<Block> {
        Ok(rhs(v, lambda, self.hamiltonian, &self.model)?.into_half())
    }

    /// Leading support of `sum`, started from `Ṽ·1`.
    fn support(
        &self,
        sum: &LowRankSum<'_>,
        base: &crate::linalg::CMat,
        lambda: &[f64],
    ) -> Result<(Block, StepReport)> {
        let start: CVec = base.column_sum();
        let opts = LanczosOptions {
            tol: self.lanczos_tol,
            seed: self.seed,
            start: Some(start),
            ..Default::default()
        };
        let e = lanczos_topk(sum, lambda.len(), &opts)?;
        let drift = e
            .values
            .iter()
            .zip(lambda)
            .fold(0.0f64, |acc, (t, l)| acc.max((t - l).abs()));
        let report = StepReport {
            ritz_drift: drift,
            eigensolves: 1,
            matvecs: e.matvecs,
            restarts: e.restarts,
        };
        Ok((e.vectors, report))
    }

    fn base_sum<'a>(&self, v: &'a crate::linalg::CMat, half: &[C64]) -> LowRankSum<'a> {
        let mut sum = LowRankSum::new(v.nrows(), SumForm::HermitianPairs);
        sum.push_weighted(v, v, half.to_vec())
            .expect("base term shapes");
        sum
    }

    /// One Runge–Kutta step.
    pub fn rk_step(
        &self,
        state: &LowRankState,
        tableau: &Tableau,
        h: f64,
    ) -> Result<(LowRankState, StepReport)> {
        self.check(state, h)?;
        let lambda = state.weights();
        let half: Vec<C64> = lambda.iter().map(|&l| re(0.5 * l)).collect();
        let s = tableau.stages();
        let mut report = StepReport::default();
        let mut supports: Vec<Block> = Vec::with_capacity(s.saturating_sub(1));
        let mut derivs: Vec<Block> = Vec::with_capacity(s);

        derivs.push(
            self.derivative(state.v(), lambda)
                .map_err(|e| e.at_stage(1))?,
        );
        for j in 1..s {
            let next = {
                let mut sum = self.base_sum(state.v(), &half);
                for (l, &a) in tableau.a[j].iter().enumerate() {
                    if a != 0.0 {
                        let v_l = if l == 0 { state.v() } else { &*supports[l - 1] };
                        sum.push(&derivs[l], v_l, re(h * a))?;
                    }
                }
                let (v, rep) = self
                    .support(&sum, state.v(), lambda)
                    .map_err(|e| e.at_stage(j + 1))?;
                report.absorb(rep);
                v
            };
            let y = self
                .derivative(&next, lambda)
                .map_err(|e| e.at_stage(j + 1))?;
            supports.push(next);
            derivs.push(y);
        }
        let out = {
            let mut sum = self.base_sum(state.v(), &half);
            for (l, &b) in tableau.b.iter().enumerate() {
                if b != 0.0 {
                    let v_l = if l == 0 { state.v() } else { &*supports[l - 1] };
                    sum.push(&derivs[l], v_l, re(h * b))?;
                }
            }
            let (v, rep) = self
                .support(&sum, state.v(), lambda)
                .map_err(|e| e.at_stage(s + 1))?;
            report.absorb(rep);
            v
        };
        Ok((LowRankState::from_block(out, lambda.to_vec()), report))
    }

    /// History for an order-`m` Adams–Bashforth run: `m − 1` steps of the
    /// order-`(m−1)` Runge–Kutta method.
    pub fn ab_bootstrap(
        &self,
        state: &LowRankState,
        order: usize,
        h: f64,
    ) -> Result<(AbHistory, StepReport)> {
        let weights = ab_weights(order)?;
        self.check(state, h)?;
        let tableau = Tableau::of_order(order - 1)?;
        let mut hist = AbHistory {
            entries: std::collections::VecDeque::with_capacity(order),
            weights,
        };
        let mut report = StepReport::default();
        let mut cur = state.clone();
        hist.push(self.entry(cur.clone())?);
        for step in 1..order {
            let (next, rep) = self
                .rk_step(&cur, &tableau, h)
                .map_err(|e| e.at_step(step))?;
            report.absorb(rep);
            hist.push(self.entry(next.clone()).map_err(|e| e.at_step(step))?);
            cur = next;
        }
        Ok((hist, report))
    }

    fn entry(&self, state: LowRankState) -> Result<AbEntry> {
        let y = self.derivative(state.v(), state.weights())?;
        Ok(AbEntry { state, deriv: y })
    }

    /// One Adams–Bashforth step from a full history; one eigensolve and one
    /// derivative evaluation.
    pub fn ab_step(&self, hist: &mut AbHistory, h: f64) -> Result<(LowRankState, StepReport)> {
        if !hist.is_full() {
            return Err(Error::InvalidArgument(
                "Adams-Bashforth history is not bootstrapped".into(),
            ));
        }
        let newest = hist.newest();
        self.check(&newest.state, h)?;
        let lambda = newest.state.weights().to_vec();
        let half: Vec<C64> = lambda.iter().map(|&l| re(0.5 * l)).collect();
        let out = {
            let mut sum = self.base_sum(newest.state.v(), &half);
            for (entry, &b) in hist.entries.iter().rev().zip(&hist.weights) {
                sum.push(&entry.deriv, entry.state.v(), re(h * b))?;
            }
            self.support(&sum, newest.state.v(), &lambda)?
        };
        let (v, report) = out;
        let next = LowRankState::from_block(v, lambda);
        hist.entries.pop_front();
        hist.push(self.entry(next.clone())?);
        Ok((next, report))
    }
}

#[derive(Debug, Clone)]
pub struct AbEntry {
    pub state: LowRankState,
    /// Half-form derivative `Y` at `state`.
    pub deriv: Block,
}

/// The last `m` states and derivatives, oldest first.
#[derive(Debug, Clone)]
pub struct AbHistory {
    entries: std::collections::VecDeque<AbEntry>,
    weights: Vec<f64>,
}

impl AbHistory {
    pub fn order(&self) -> usize {
        self.weights.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.order()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn newest(&self) -> &AbEntry {
        self.entries
            .back()
            .expect("history is never empty after bootstrap")
    }

    pub fn entries(&self) -> impl Iterator<Item = &AbEntry> {
        self.entries.iter()
    }

    fn push(&mut self, e: AbEntry) {
        self.entries.push_back(e);
    }
}

/// Uniform RK grid with a shortened last step, or an exact AB grid.
pub fn time_grid(scheme: Scheme, h: f64, t_final: f64) -> Result<Vec<f64>> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "t_final must be positive, got {t_final}"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive, got {h}"
        )));
    }
    if h > t_final * (1.0 + GRID_TOLERANCE) {
        return Err(Error::InvalidArgument(format!(
            "step size {h} exceeds t_final {t_final}"
        )));
    }
    let ratio = t_final / h;
    let rounded = ratio.round();
    let integral = (ratio - rounded).abs() <= GRID_TOLERANCE * ratio.max(1.0);
    if scheme.is_multistep() && !integral {
        return Err(Error::NonUniformGrid { ratio });
    }
    let steps = if integral {
        rounded as usize
    } else {
        ratio.ceil() as usize
    };
    let mut grid: Vec<f64> = (0..=steps).map(|k| (k as f64 * h).min(t_final)).collect();
    *grid.last_mut().expect("grid has at least two points") = t_final;
    Ok(grid)
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub scheme: Scheme,
    pub h: f64,
    pub t_final: f64,
    pub lanczos_tol: f64,
    pub seed: u64,
}

impl EvolveOptions {
    pub fn new(scheme: Scheme, h: f64, t_final: f64) -> Self {
        EvolveOptions {
            scheme,
            h,
            t_final,
            lanczos_tol: STEP_LANCZOS_TOLERANCE,
            seed: crate::lowrank::lanczos::DEFAULT_SEED,
        }
    }
}

/// What the sink sees after each step (and once at `t = 0`).
#[derive(Debug)]
pub struct StepInfo<'a> {
    pub step: usize,
    pub t: f64,
    pub state: &'a LowRankState,
    pub report: StepReport,
}

#[derive(Debug)]
pub struct EvolveSummary {
    pub final_state: LowRankState,
    pub steps: usize,
    pub step_seconds: Vec<f64>,
    pub peak_blocks: usize,
    pub krylov_peak_columns: usize,
    pub max_ritz_drift: f64,
}

impl EvolveSummary {
    pub fn mean_step_seconds(&self) -> f64 {
        if self.step_seconds.is_empty() {
            0.0
        } else {
            self.step_seconds.iter().sum::<f64>() / self.step_seconds.len() as f64
        }
    }

    pub fn max_step_seconds(&self) -> f64 {
        self.step_seconds.iter().copied().fold(0.0, f64::max)
    }
}

fn ensure_finite(state: &LowRankState) -> Result<()> {
    if state
        .v()
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Runs from `t = 0` to `t_final`, streaming every step to `sink`.
pub fn evolve_with<F>(
    initial: LowRankState,
    hamiltonian: &SparseHermitian,
    model: ModelKind,
    opts: &EvolveOptions,
    mut sink: F,
) -> Result<EvolveSummary>
where
    F: FnMut(&StepInfo<'_>) -> Result<()>,
{
    let grid = time_grid(opts.scheme, opts.h, opts.t_final)?;
    let mut stepper = Stepper::new(hamiltonian, model)?;
    stepper.lanczos_tol = opts.lanczos_tol;
    stepper.seed = opts.seed;
    stepper.check(&initial, opts.h)?;
    ensure_finite(&initial)?;

    let blocks_before = audit::counts().live;
    audit::reset_peak();
    let mut step_seconds = Vec::with_capacity(grid.len() - 1);
    let mut max_drift = 0.0f64;
    let mut state = initial;
    sink(&StepInfo {
        step: 0,
        t: 0.0,
        state: &state,
        report: StepReport::default(),
    })?;

    let total = grid.len() - 1;
    let mut history: Option<AbHistory> = None;
    for k in 1..=total {
        let h_k = grid[k] - grid[k - 1];
        let clock = Instant::now();
        let (next, report) = match opts.scheme {
            Scheme::Rk(m) => stepper.rk_step(&state, &Tableau::of_order(m as usize)?, h_k),
            Scheme::Ab(m) => {
                let m = m as usize;
                if k < m {
                    if history.is_none() {
                        let entry = stepper.entry(state.clone()).map_err(|e| e.at_step(k))?;
                        let mut hist = AbHistory {
                            entries: std::collections::VecDeque::with_capacity(m),
                            weights: ab_weights(m)?,
                        };
                        hist.push(entry);
                        history = Some(hist);
                    }
                    let tableau = Tableau::of_order(m - 1)?;
                    stepper
                        .rk_step(&state, &tableau, h_k)
                        .and_then(|(next, rep)| {
                            let entry = stepper.entry(next.clone())?;
                            history.as_mut().expect("history initialized").push(entry);
                            Ok((next, rep))
                        })
                } else {
                    let hist = history.as_mut().expect("bootstrap precedes multistep");
                    stepper.ab_step(hist, h_k)
                }
            }
        }
        .map_err(|e| e.at_step(k))?;
        step_seconds.push(clock.elapsed().as_secs_f64());
        ensure_finite(&next).map_err(|e| e.at_step(k))?;
        max_drift = max_drift.max(report.ritz_drift);
        state = next;
        sink(&StepInfo {
            step: k,
            t: grid[k],
            state: &state,
            report,
        })?;
    }
    drop(history);
    let counts = audit::counts();
    Ok(EvolveSummary {
        final_state: state,
        steps: total,
        step_seconds,
        peak_blocks: counts.peak.saturating_sub(blocks_before.saturating_sub(1)),
        krylov_peak_columns: counts.krylov_peak_columns,
        max_ritz_drift: max_drift,
    })
}

/// Runs and samples `observables` at every grid point.
pub fn evolve(
    initial: LowRankState,
    hamiltonian: &SparseHermitian,
    model: ModelKind,
    opts: &EvolveOptions,
    observables: &ObservableSet,
) -> Result<(Vec<ObservableRecord>, EvolveSummary)> {
    let mut records = Vec::new();
    let summary = evolve_with(initial, hamiltonian, model, opts, |info| {
        let mut rec = observables.sample(info.t, info.state)?;
        rec.ritz_drift = info.report.ritz_drift;
        records.push(rec);
        Ok(())
    })?;
    Ok((records, summary))
}

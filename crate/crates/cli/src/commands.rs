//! The four subcommands. Each takes a validated [`Experiment`] and writes its
//! table to `config.output`.

use std::path::PathBuf;
use std::time::Instant;

use lrei_core::dynamics::ModelKind;
use lrei_core::integrate::{evolve_with, time_grid, EvolveOptions, Scheme};
use lrei_core::linalg::{max_abs, CMat};
use lrei_core::lowrank::lanczos::default_krylov_dim;
use lrei_core::observe::{concurrence, negativity, ObservableSet, ReducedDensity2, Selector};
use lrei_core::oracle::{
    dense_evolve, dense_expectation, dense_reduced_density, DenseState, ExactRank1,
};
use lrei_core::spinsys::{
    build_hamiltonian, estimate_hamiltonian_nnz, magnetization_operator, max_sites, Axis,
    SparseHermitian, SpinLattice,
};
use lrei_core::states::{
    random_state, reconstruct_werner, InitialState, LowRankState, PureState, StateSpec,
};
use serde::Serialize;

use crate::config::{Engine, Experiment, ExperimentConfig};
use crate::output::{fmt_float, manifest_path, write_json_atomic, CsvSink};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest system the dense engine and dense references accept.
pub const DENSE_MAX_SITES: usize = 10;

/// Largest system for which mixed-state convergence uses a dense reference.
pub const DENSE_REFERENCE_MAX_SITES: usize = 8;

/// Reference runs use this fraction of the smallest step.
pub const REFERENCE_REFINEMENT: f64 = 1.0 / 8.0;

/// Site count from which `validate` warns about run cost.
pub const LARGE_SYSTEM_SITES: usize = 24;

fn hamiltonian(cfg: &ExperimentConfig, lattice: &SpinLattice) -> Result<SparseHermitian, CliError> {
    Ok(build_hamiltonian(lattice, &cfg.hamiltonian_params())?)
}

/// Factor to evolve, damping to evolve it with and Werner weight, if any.
fn evolved_part(exp: &Experiment) -> Result<(LowRankState, ModelKind, Option<f64>), CliError> {
    let n = exp.config.system.n_sites;
    Ok(match exp.state.build(n)? {
        InitialState::LowRank(m) => {
            if m.rank_deficient() {
                eprintln!(
                    "warning: mixture of {} components has rank {}",
                    m.requested,
                    m.state.rank()
                );
            }
            (m.state, exp.model, None)
        }
        InitialState::Werner(w) => {
            let kappa = w.reduced_damping(exp.model.kappa);
            (w.core, exp.model.with_kappa(kappa), Some(w.p))
        }
    })
}

fn pure_core(spec: &StateSpec, n: usize) -> Result<Option<PureState>, CliError> {
    Ok(match spec {
        StateSpec::Werner(inner, _) => Some(inner.pure(n)?),
        s if s.is_pure() => Some(s.pure(n)?),
        _ => None,
    })
}

fn header(selectors: &[Selector]) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(selectors.iter().map(Selector::column))
        .collect()
}

/// Observables of a dense density matrix.
struct DenseObservables {
    n: usize,
    energy: CMat,
    magnetization: Vec<CMat>,
}

impl DenseObservables {
    fn new(
        h: &SparseHermitian,
        n: usize,
        hbar: f64,
        selectors: &[Selector],
    ) -> Result<Self, CliError> {
        let magnetization = if selectors
            .iter()
            .any(|s| matches!(s, Selector::Magnetization(_)))
        {
            Axis::ALL
                .iter()
                .map(|&a| magnetization_operator(a, n, hbar)?.to_dense())
                .collect::<Result<Vec<_>, _>>()?
        } else {
            Vec::new()
        };
        Ok(DenseObservables {
            n,
            energy: h.to_dense()?,
            magnetization,
        })
    }

    fn value(&self, sel: &Selector, rho: &CMat) -> Result<f64, CliError> {
        Ok(match *sel {
            Selector::Energy => dense_expectation(&self.energy, rho),
            Selector::Magnetization(a) => dense_expectation(&self.magnetization[a.index()], rho),
            Selector::Concurrence(k, l) | Selector::Negativity(k, l) => {
                let r = ReducedDensity2::new(dense_reduced_density(rho, self.n, k, l)?, (k, l))?;
                if matches!(sel, Selector::Concurrence(..)) {
                    concurrence(&r)?
                } else {
                    negativity(&r)
                }
            }
            Selector::Trace => rho.trace().re,
            Selector::Purity => rho.iter().map(|z| z.norm_sqr()).sum(),
        })
    }
}

/// Contents of the JSON file written beside a run's CSV.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub status: String,
    pub error: Option<String>,
    pub version: String,
    pub engine: Engine,
    pub csv: PathBuf,
    pub columns: Vec<String>,
    pub rows: usize,
    pub rank: usize,
    pub werner_p: Option<f64>,
    pub evolved_kappa: f64,
    pub mean_step_seconds: Option<f64>,
    pub max_step_seconds: Option<f64>,
    pub peak_blocks: Option<usize>,
    pub krylov_peak_columns: Option<usize>,
    pub max_ritz_drift: f64,
    pub config: ExperimentConfig,
}

/// Time series of the selected observables, one row per grid point.
pub fn run(exp: &Experiment) -> Result<RunManifest, CliError> {
    let cfg = &exp.config;
    let n = cfg.system.n_sites;
    let lattice = cfg.lattice()?;
    let h = hamiltonian(cfg, &lattice)?;
    let columns = header(&exp.selectors);
    let (core, model, werner) = evolved_part(exp)?;
    let mut csv = CsvSink::create(&cfg.output, &columns)?;
    let mut manifest = RunManifest {
        status: "running".into(),
        error: None,
        version: VERSION.into(),
        engine: cfg.engine,
        csv: cfg.output.clone(),
        columns,
        rows: 0,
        rank: core.rank(),
        werner_p: werner,
        evolved_kappa: model.kappa,
        mean_step_seconds: None,
        max_step_seconds: None,
        peak_blocks: None,
        krylov_peak_columns: None,
        max_ritz_drift: 0.0,
        config: cfg.clone(),
    };

    let mut rows = 0usize;
    let mut drift = 0.0f64;
    let outcome: Result<(), CliError> = match cfg.engine {
        Engine::Lrei => {
            let mut obs = ObservableSet::new(exp.selectors.clone(), &h, cfg.hbar())?;
            if let Some(p) = werner {
                obs = obs.with_werner(p);
            }
            let mut opts = EvolveOptions::new(exp.scheme, cfg.h, cfg.t_final);
            opts.seed = cfg.seed;
            let mut sink_err = None;
            let result = evolve_with(core, &h, model, &opts, |info| {
                let rec = obs.sample(info.t, info.state)?;
                let mut row = vec![info.t];
                row.extend(
                    exp.selectors
                        .iter()
                        .map(|s| rec.value(s).unwrap_or(f64::NAN)),
                );
                drift = drift.max(info.report.ritz_drift);
                if let Err(e) = csv.float_row(&row) {
                    sink_err = Some(e);
                    return Err(lrei_core::Error::InvalidArgument("output failed".into()));
                }
                rows += 1;
                Ok(())
            });
            match (result, sink_err) {
                (_, Some(e)) => Err(e),
                (Err(e), None) => Err(e.into()),
                (Ok(summary), None) => {
                    manifest.mean_step_seconds = Some(summary.mean_step_seconds());
                    manifest.max_step_seconds = Some(summary.max_step_seconds());
                    manifest.peak_blocks = Some(summary.peak_blocks);
                    manifest.krylov_peak_columns = Some(summary.krylov_peak_columns);
                    Ok(())
                }
            }
        }
        Engine::Dense => {
            // The dense engine evolves the full state, Werner noise included.
            let dense = DenseObservables::new(&h, n, cfg.hbar(), &exp.selectors)?;
            let core_rho = core.to_dense()?;
            let init = match werner {
                Some(p) => DenseState::new(reconstruct_werner(p, &core_rho))?,
                None => DenseState::from_low_rank(&core)?,
            };
            let mut sink_err = None;
            let mut times = Vec::new();
            let mut clock = Instant::now();
            let result = dense_evolve(
                init,
                &dense.energy,
                &exp.model,
                exp.scheme,
                cfg.h,
                cfg.t_final,
                |t, st| {
                    if rows > 0 {
                        times.push(clock.elapsed().as_secs_f64());
                    }
                    let mut row = vec![t];
                    for s in &exp.selectors {
                        match dense.value(s, &st.rho) {
                            Ok(v) => row.push(v),
                            Err(e) => {
                                sink_err = Some(e);
                                return Err(lrei_core::Error::InvalidArgument(
                                    "observable failed".into(),
                                ));
                            }
                        }
                    }
                    if let Err(e) = csv.float_row(&row) {
                        sink_err = Some(e);
                        return Err(lrei_core::Error::InvalidArgument("output failed".into()));
                    }
                    rows += 1;
                    clock = Instant::now();
                    Ok(())
                },
            );
            match (result, sink_err) {
                (_, Some(e)) => Err(e),
                (Err(e), None) => Err(e.into()),
                (Ok(_), None) => {
                    if !times.is_empty() {
                        manifest.mean_step_seconds =
                            Some(times.iter().sum::<f64>() / times.len() as f64);
                        manifest.max_step_seconds = Some(times.iter().copied().fold(0.0, f64::max));
                    }
                    Ok(())
                }
            }
        }
    };
    manifest.rows = rows;
    manifest.max_ritz_drift = drift;
    match &outcome {
        Ok(()) => manifest.status = "completed".into(),
        Err(e) => {
            manifest.status = "aborted".into();
            manifest.error = Some(e.to_string());
        }
    }
    write_json_atomic(&manifest_path(&cfg.output), &manifest)?;
    outcome.map(|()| manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeRow {
    pub scheme: Scheme,
    pub h: f64,
    pub error: f64,
    pub fitted_order: f64,
}

/// How `converge` measured its errors.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergeManifest {
    pub version: String,
    pub metric: String,
    pub reference: String,
    pub csv: PathBuf,
    pub rows: Vec<ConvergeRowJson>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeRowJson {
    pub scheme: String,
    pub h: f64,
    pub error: f64,
    pub fitted_order: f64,
}

/// Least-squares slope of `ln error` against `ln h` over the three smallest
/// steps with a positive error.
pub fn fitted_order(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(h, e)| *h > 0.0 && *e > 0.0 && e.is_finite())
        .map(|&(h, e)| (h.ln(), e.ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.truncate(3);
    if pts.len() < 2 {
        return f64::NAN;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

enum Reference {
    /// Dense matrix at `t_final`.
    Density(CMat),
    /// Observable values along the reference grid.
    Trajectory { step: f64, values: Vec<Vec<f64>> },
}

fn sample_values(
    state: &LowRankState,
    obs: &ObservableSet,
    selectors: &[Selector],
    t: f64,
) -> Result<Vec<f64>, lrei_core::Error> {
    let rec = obs.sample(t, state)?;
    Ok(selectors
        .iter()
        .map(|s| rec.value(s).unwrap_or(f64::NAN))
        .collect())
}

/// Reference grid index that coincides with `t`, if any.
fn reference_index(t: f64, step: f64, len: usize, t_final: f64) -> Option<usize> {
    if t == t_final {
        return Some(len - 1);
    }
    let k = (t / step).round();
    ((k * step - t).abs() <= 1e-9 * t_final && (k as usize) < len).then_some(k as usize)
}

pub fn converge_schemes(exp: &Experiment) -> Result<Vec<Scheme>, CliError> {
    match &exp.config.converge.schemes {
        None => Ok(vec![exp.scheme]),
        Some(list) => list
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|e| CliError::Config(format!("field `converge.schemes`: {e}")))
            })
            .collect(),
    }
}

pub fn converge_steps(exp: &Experiment) -> Vec<f64> {
    let h = exp.config.h;
    exp.config
        .converge
        .h_values
        .clone()
        .unwrap_or_else(|| vec![h, h / 2.0, h / 4.0])
}

/// Checks the schemes and step sizes of a convergence study.
pub fn check_converge(exp: &Experiment) -> Result<(Vec<Scheme>, Vec<f64>), CliError> {
    let schemes = converge_schemes(exp)?;
    let steps = converge_steps(exp);
    if steps.is_empty() {
        return Err(CliError::Config(
            "field `converge.h_values`: empty list".into(),
        ));
    }
    let n = exp.config.system.n_sites;
    let pure = matches!(exp.state, StateSpec::Werner(..)) || exp.state.is_pure();
    if !pure && n > DENSE_REFERENCE_MAX_SITES {
        return Err(CliError::Config(format!(
            "field `initial_state`: convergence of a mixed state needs a dense reference, limited to {DENSE_REFERENCE_MAX_SITES} sites (got {n})"
        )));
    }
    for &s in &schemes {
        for &h in &steps {
            time_grid(s, h, exp.config.t_final).map_err(|e| {
                CliError::Config(format!("field `converge.h_values`: {s} at h = {h}: {e}"))
            })?;
        }
    }
    Ok((schemes, steps))
}

/// Error at `t_final` against a reference, for every scheme and step size.
pub fn converge(exp: &Experiment) -> Result<(Vec<ConvergeRow>, String), CliError> {
    let cfg = &exp.config;
    let n = cfg.system.n_sites;
    let (schemes, steps) = check_converge(exp)?;
    let lattice = cfg.lattice()?;
    let h = hamiltonian(cfg, &lattice)?;
    let (core, model, werner) = evolved_part(exp)?;
    let mut obs = ObservableSet::new(exp.selectors.clone(), &h, cfg.hbar())?;
    if let Some(p) = werner {
        obs = obs.with_werner(p);
    }
    let h_min = steps.iter().copied().fold(f64::INFINITY, f64::min);
    let h_ref = h_min * REFERENCE_REFINEMENT;
    let pure = pure_core(&exp.state, n)?;

    let (reference, label) = if let Some(psi) = pure.filter(|_| n <= DENSE_MAX_SITES) {
        let hd = h.to_dense()?;
        let exact = ExactRank1::new(&hd, model.kappa, model.hbar, model.model)?;
        let rho = exact.at(&psi, cfg.t_final)?.rho;
        (
            Reference::Density(rho),
            "density max-abs error vs closed form".to_string(),
        )
    } else if n <= DENSE_REFERENCE_MAX_SITES {
        let hd = h.to_dense()?;
        let out = dense_evolve(
            DenseState::from_low_rank(&core)?,
            &hd,
            &model,
            Scheme::Rk(4),
            h_ref,
            cfg.t_final,
            |_, _| Ok(()),
        )?;
        (
            Reference::Density(out.rho),
            format!("density max-abs error vs dense rk4 at h = {h_ref:e}"),
        )
    } else {
        let mut opts = EvolveOptions::new(Scheme::Rk(4), h_ref, cfg.t_final);
        opts.seed = cfg.seed;
        let mut values = Vec::new();
        evolve_with(core.clone(), &h, model, &opts, |info| {
            values.push(sample_values(info.state, &obs, &exp.selectors, info.t)?);
            Ok(())
        })?;
        (
            Reference::Trajectory {
                step: h_ref,
                values,
            },
            format!("observable trajectory sup-norm error vs low-rank rk4 at h = {h_ref:e}"),
        )
    };

    let mut rows = Vec::new();
    for &s in &schemes {
        let mut pts = Vec::new();
        for &step in &steps {
            let mut opts = EvolveOptions::new(s, step, cfg.t_final);
            opts.seed = cfg.seed;
            let mut sup = 0.0f64;
            let out = evolve_with(core.clone(), &h, model, &opts, |info| {
                if let Reference::Trajectory { step, values } = &reference {
                    if let Some(k) = reference_index(info.t, *step, values.len(), cfg.t_final) {
                        let now = sample_values(info.state, &obs, &exp.selectors, info.t)?;
                        for (x, y) in now.iter().zip(&values[k]) {
                            sup = sup.max((x - y).abs());
                        }
                    }
                }
                Ok(())
            })?
            .final_state;
            let err = match &reference {
                Reference::Density(rho) => max_abs(&(out.to_dense()? - rho)),
                Reference::Trajectory { .. } => sup,
            };
            pts.push((step, err));
        }
        let order = fitted_order(&pts);
        rows.extend(pts.into_iter().map(|(h, error)| ConvergeRow {
            scheme: s,
            h,
            error,
            fitted_order: order,
        }));
    }

    let mut csv = CsvSink::create(
        &cfg.output,
        &["scheme", "h", "error", "fitted_order"].map(String::from),
    )?;
    for r in &rows {
        csv.row(&[
            r.scheme.to_string(),
            fmt_float(r.h),
            fmt_float(r.error),
            fmt_float(r.fitted_order),
        ])?;
    }
    let manifest = ConvergeManifest {
        version: VERSION.into(),
        metric: label.clone(),
        reference: if matches!(reference, Reference::Density(_)) {
            "density"
        } else {
            "observable trajectory"
        }
        .into(),
        csv: cfg.output.clone(),
        rows: rows
            .iter()
            .map(|r| ConvergeRowJson {
                scheme: r.scheme.to_string(),
                h: r.h,
                error: r.error,
                fitted_order: r.fitted_order,
            })
            .collect(),
        config: cfg.clone(),
    };
    write_json_atomic(&manifest_path(&cfg.output), &manifest)?;
    Ok((rows, label))
}

/// Live `N×r` blocks a scheme holds at once.
pub fn scheme_blocks(s: Scheme) -> usize {
    match s {
        Scheme::Rk(m) => 2 * m as usize + 1,
        // History of `m` states with their derivatives, plus the step itself.
        Scheme::Ab(m) => 3 * m as usize + 2,
    }
}

/// Estimated working set in bytes: factor blocks, Krylov basis and the
/// sparse Hamiltonian.
pub fn estimate_bytes(n_sites: usize, rank: usize, scheme: Scheme, nnz: u128) -> u128 {
    let dim = 1u128 << n_sites;
    let krylov = default_krylov_dim(rank, usize::try_from(dim).unwrap_or(usize::MAX)) as u128;
    let blocks = scheme_blocks(scheme) as u128;
    16 * dim * (rank as u128 * blocks + krylov) + 24 * nnz + 8 * (dim + 1)
}

/// Memory the process may use: `LREI_MEMORY_LIMIT_GB`, else available RAM.
pub fn memory_limit_bytes() -> u128 {
    if let Some(gb) = std::env::var("LREI_MEMORY_LIMIT_GB")
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
    {
        return (gb * (1u64 << 30) as f64) as u128;
    }
    std::fs::read_to_string("/proc/meminfo")
        .ok()
        .and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("MemAvailable:"))
                .and_then(|l| l.split_whitespace().nth(1))
                .and_then(|kb| kb.parse::<u128>().ok())
        })
        .map_or(16u128 << 30, |kb| kb * 1024)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCell {
    pub n: usize,
    pub r: usize,
    pub scheme: String,
    pub seconds_per_step: Option<f64>,
    pub dense_seconds_per_step: Option<f64>,
    pub error: Option<String>,
}

fn bench_cell(
    cfg: &ExperimentConfig,
    model: ModelKind,
    n: usize,
    r: usize,
    s: Scheme,
    steps: usize,
) -> Result<f64, CliError> {
    if n == 0 || n > max_sites() {
        return Err(CliError::Resource(format!(
            "{n} sites outside 1..={}",
            max_sites()
        )));
    }
    let dim = 1usize << n;
    if r == 0 || r >= dim {
        return Err(CliError::Config(format!("rank {r} outside 1..{dim}")));
    }
    let lattice = bench_lattice(cfg, n)?;
    let params = cfg.hamiltonian_params();
    let need = estimate_bytes(n, r, s, estimate_hamiltonian_nnz(&lattice, &params)?);
    let limit = memory_limit_bytes();
    if need > limit {
        return Err(CliError::Resource(format!(
            "memory guard: needs about {:.1} GiB, limit {:.1} GiB",
            need as f64 / (1u64 << 30) as f64,
            limit as f64 / (1u64 << 30) as f64
        )));
    }
    let h = build_hamiltonian(&lattice, &params)?;
    let state = random_state(dim, r, cfg.seed)?;
    // Multistep bootstrap steps and one warm-up step are not timed.
    let warm = s.order().saturating_sub(1).max(1);
    let mut opts = EvolveOptions::new(s, cfg.h, cfg.h * (warm + steps) as f64);
    opts.seed = cfg.seed;
    let summary = evolve_with(state, &h, model, &opts, |_| Ok(()))?;
    let timed = &summary.step_seconds[warm..];
    Ok(timed.iter().sum::<f64>() / timed.len() as f64)
}

fn bench_lattice(cfg: &ExperimentConfig, n: usize) -> Result<SpinLattice, CliError> {
    if n == cfg.system.n_sites {
        cfg.lattice()
    } else {
        Ok(SpinLattice::chain(n, cfg.system.periodic)?)
    }
}

/// Same cell on the dense engine, for `n ≤ 10`.
fn dense_bench_cell(
    cfg: &ExperimentConfig,
    model: ModelKind,
    n: usize,
    r: usize,
    s: Scheme,
    steps: usize,
) -> Result<f64, CliError> {
    if n > DENSE_MAX_SITES {
        return Err(CliError::Resource(format!(
            "dense engine is limited to {DENSE_MAX_SITES} sites"
        )));
    }
    let h = build_hamiltonian(&bench_lattice(cfg, n)?, &cfg.hamiltonian_params())?.to_dense()?;
    let state = DenseState::from_low_rank(&random_state(1 << n, r, cfg.seed)?)?;
    let warm = s.order().saturating_sub(1).max(1);
    let mut times = Vec::new();
    let mut clock = Instant::now();
    dense_evolve(
        state,
        &h,
        &model,
        s,
        cfg.h,
        cfg.h * (warm + steps) as f64,
        |_, _| {
            times.push(clock.elapsed().as_secs_f64());
            clock = Instant::now();
            Ok(())
        },
    )?;
    // The first entry is the initial sample, not a step.
    let timed = &times[1 + warm..];
    Ok(timed.iter().sum::<f64>() / timed.len() as f64)
}

/// Seconds per step over an `(n, r, scheme)` grid of random mixed states.
/// Failing cells are reported and skipped.
pub fn bench(exp: &Experiment) -> Result<Vec<BenchCell>, CliError> {
    let cfg = &exp.config;
    let b = &cfg.bench;
    let n_values = b
        .n_values
        .clone()
        .unwrap_or_else(|| vec![cfg.system.n_sites]);
    let r_values = b.r_values.clone().unwrap_or_else(|| vec![1]);
    let schemes: Vec<Scheme> = match &b.schemes {
        None => vec![exp.scheme],
        Some(list) => list
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|e| CliError::Config(format!("field `bench.schemes`: {e}")))
            })
            .collect::<Result<_, _>>()?,
    };
    let steps = b.steps.unwrap_or(5);
    if steps < 5 {
        return Err(CliError::Config(format!(
            "field `bench.steps`: need at least 5, got {steps}"
        )));
    }
    let mut header: Vec<String> = ["n", "r", "scheme", "seconds_per_step"]
        .map(String::from)
        .into();
    if b.dense {
        header.push("dense_seconds_per_step".into());
    }
    let mut csv = CsvSink::create(&cfg.output, &header)?;
    let mut cells = Vec::new();
    for &n in &n_values {
        for &r in &r_values {
            for &s in &schemes {
                let outcome = bench_cell(cfg, exp.model, n, r, s, steps);
                let mut cell = BenchCell {
                    n,
                    r,
                    scheme: s.to_string(),
                    seconds_per_step: None,
                    dense_seconds_per_step: None,
                    error: None,
                };
                match outcome {
                    Ok(sec) => cell.seconds_per_step = Some(sec),
                    Err(e) => {
                        eprintln!("bench n={n} r={r} {s}: {e}");
                        cell.error = Some(e.to_string());
                    }
                }
                if b.dense && n <= DENSE_MAX_SITES {
                    match dense_bench_cell(cfg, exp.model, n, r, s, steps) {
                        Ok(sec) => cell.dense_seconds_per_step = Some(sec),
                        Err(e) => eprintln!("bench n={n} r={r} {s} dense: {e}"),
                    }
                }
                let mut fields = vec![
                    n.to_string(),
                    r.to_string(),
                    cell.scheme.clone(),
                    fmt_float(cell.seconds_per_step.unwrap_or(f64::NAN)),
                ];
                if b.dense {
                    fields.push(fmt_float(cell.dense_seconds_per_step.unwrap_or(f64::NAN)));
                }
                csv.row(&fields)?;
                cells.push(cell);
            }
        }
    }
    #[derive(Serialize)]
    struct BenchManifest<'a> {
        version: &'a str,
        cells: &'a [BenchCell],
        config: &'a ExperimentConfig,
    }
    write_json_atomic(
        &manifest_path(&cfg.output),
        &BenchManifest {
            version: VERSION,
            cells: &cells,
            config: cfg,
        },
    )?;
    Ok(cells)
}

/// Pre-flight summary printed by `validate`.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub n_sites: usize,
    pub dimension: u128,
    pub edges: usize,
    pub model: String,
    pub scheme: String,
    pub steps: usize,
    pub rank: usize,
    pub estimated_bytes: u128,
    pub warnings: Vec<String>,
}

fn spec_rank(spec: &StateSpec) -> usize {
    match spec {
        StateSpec::Mix(parts) => parts.len(),
        _ => 1,
    }
}

/// Checks everything `run` would check, without allocating any state.
pub fn validate(exp: &Experiment) -> Result<ValidationReport, CliError> {
    let cfg = &exp.config;
    let n = cfg.system.n_sites;
    let lattice = cfg.lattice()?;
    let nnz = estimate_hamiltonian_nnz(&lattice, &cfg.hamiltonian_params())?;
    let steps = time_grid(exp.scheme, cfg.h, cfg.t_final)?.len() - 1;
    if cfg.converge.schemes.is_some() || cfg.converge.h_values.is_some() {
        check_converge(exp)?;
    }
    let rank = spec_rank(&exp.state);
    let estimated_bytes = estimate_bytes(n, rank, exp.scheme, nnz);
    let gib = |b: u128| b as f64 / (1u64 << 30) as f64;
    let mut warnings = Vec::new();
    if n >= max_sites() {
        warnings.push(format!(
            "{n} sites is at the configured maximum of {}; estimated memory {:.1} GiB",
            max_sites(),
            gib(estimated_bytes)
        ));
    } else if n >= LARGE_SYSTEM_SITES {
        warnings.push(format!(
            "{n} sites: expect long step times; estimated memory {:.1} GiB",
            gib(estimated_bytes)
        ));
    }
    let limit = memory_limit_bytes();
    if estimated_bytes > limit {
        warnings.push(format!(
            "estimated memory {:.1} GiB exceeds the limit of {:.1} GiB",
            gib(estimated_bytes),
            gib(limit)
        ));
    }
    Ok(ValidationReport {
        n_sites: n,
        dimension: 1u128 << n,
        edges: lattice.edges().len(),
        model: exp.model.model.to_string(),
        scheme: exp.scheme.to_string(),
        steps,
        rank,
        estimated_bytes,
        warnings,
    })
}

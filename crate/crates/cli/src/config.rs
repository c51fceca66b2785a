//! Experiment configuration: TOML text, dotted-key overrides, validation.

use std::path::PathBuf;

use lrei_core::dynamics::{Model, ModelKind};
use lrei_core::integrate::{time_grid, Scheme};
use lrei_core::observe::Selector;
use lrei_core::spinsys::{self, Dmi, HamiltonianParams, SpinLattice, HBAR_MEV_PS};
use lrei_core::states::StateSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Lrei,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Energies in meV, time in ps.
    Physical,
    /// `ħ = 1`.
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Chain,
    Triangular,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n_sites: usize,
    #[serde(default = "default_lattice")]
    pub lattice: LatticeKind,
    #[serde(default)]
    pub periodic: bool,
    /// Triangular lattice shape; `rows · cols = n_sites`.
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    /// Custom lattice edges, 1-based.
    pub edges: Option<Vec<[usize; 2]>>,
}

fn default_lattice() -> LatticeKind {
    LatticeKind::Chain
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(rename = "J", alias = "j")]
    pub j: f64,
    /// Uniform DMI vector.
    #[serde(default)]
    pub dmi: Option<[f64; 3]>,
    /// Per-edge DMI vectors in lattice edge order.
    #[serde(default)]
    pub dmi_edges: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub b_field: [f64; 3],
    pub kappa: f64,
    #[serde(default = "default_units")]
    pub units: Units,
}

fn default_units() -> Units {
    Units::Physical
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub schemes: Option<Vec<String>>,
    pub h_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub n_values: Option<Vec<usize>>,
    pub r_values: Option<Vec<usize>>,
    pub schemes: Option<Vec<String>>,
    pub steps: Option<usize>,
    /// Also time the dense engine where it fits.
    #[serde(default)]
    pub dense: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    pub scheme: String,
    pub h: f64,
    pub t_final: f64,
    pub initial_state: String,
    #[serde(default = "default_observables")]
    pub observables: Vec<String>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_engine")]
    pub engine: Engine,
    pub system: SystemConfig,
    pub params: ParamsConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
    #[serde(default)]
    pub bench: BenchConfig,
}

fn default_observables() -> Vec<String> {
    ["energy", "mx", "my", "mz", "trace", "purity"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn default_output() -> PathBuf {
    PathBuf::from("lrei_run.csv")
}

fn default_engine() -> Engine {
    Engine::Lrei
}

/// Validated configuration with every string field parsed.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: ModelKind,
    pub scheme: Scheme,
    pub state: StateSpec,
    pub selectors: Vec<Selector>,
}

impl ExperimentConfig {
    /// Parses TOML text, applying `key=value` overrides (dotted keys address
    /// sections) before deserialization.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(format!("config: {e}")))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let echo = toml::to_string(&table).expect("tables serialize");
        toml::from_str(&echo).map_err(|e: toml::de::Error| {
            let msg = if overrides.is_empty() {
                // Re-parse the original text so the diagnostic points at its lines.
                toml::from_str::<ExperimentConfig>(text)
                    .err()
                    .map_or_else(|| e.to_string(), |orig| orig.to_string())
            } else {
                e.to_string()
            };
            CliError::Config(format!("config: {msg}"))
        })
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn hbar(&self) -> f64 {
        match self.params.units {
            Units::Physical => HBAR_MEV_PS,
            Units::Natural => 1.0,
        }
    }

    /// Checks and parses every field without allocating any state.
    pub fn validate(self) -> Result<Experiment, CliError> {
        let bad = |field: &str, why: String| CliError::Config(format!("field `{field}`: {why}"));
        let p = &self.params;
        let finite = |field: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(bad(field, format!("must be finite, got {x}")))
            }
        };
        finite("params.J", p.j)?;
        finite("params.kappa", p.kappa)?;
        for (k, b) in p.b_field.iter().enumerate() {
            finite(&format!("params.b_field[{k}]"), *b)?;
        }
        if let Some(d) = &p.dmi {
            for (k, x) in d.iter().enumerate() {
                finite(&format!("params.dmi[{k}]"), *x)?;
            }
        }
        if let Some(list) = &p.dmi_edges {
            for (e, d) in list.iter().enumerate() {
                for (k, x) in d.iter().enumerate() {
                    finite(&format!("params.dmi_edges[{e}][{k}]"), *x)?;
                }
            }
        }
        if p.dmi.is_some() && p.dmi_edges.is_some() {
            return Err(bad(
                "params.dmi",
                "give either `dmi` or `dmi_edges`, not both".into(),
            ));
        }
        if p.kappa < 0.0 {
            return Err(bad(
                "params.kappa",
                format!("must be non-negative, got {}", p.kappa),
            ));
        }
        for (name, x) in [("h", self.h), ("t_final", self.t_final)] {
            finite(name, x)?;
            if x <= 0.0 {
                return Err(bad(name, format!("must be positive, got {x}")));
            }
        }
        let n = self.system.n_sites;
        if n == 0 {
            return Err(bad("system.n_sites", "must be positive".into()));
        }
        if n > spinsys::max_sites() {
            return Err(CliError::Resource(format!(
                "{n} sites exceed the maximum of {} (set LREI_MAX_SITES to override)",
                spinsys::max_sites()
            )));
        }
        let model: Model = self
            .model
            .parse()
            .map_err(|e| bad("model", format!("{e}")))?;
        let model = ModelKind::new(model, p.kappa, self.hbar())
            .map_err(|e| bad("params", e.to_string()))?;
        let scheme: Scheme = self
            .scheme
            .parse()
            .map_err(|e| bad("scheme", format!("{e}")))?;
        time_grid(scheme, self.h, self.t_final).map_err(|e| bad("h", e.to_string()))?;
        let state: StateSpec = self
            .initial_state
            .parse()
            .map_err(|e| bad("initial_state", format!("{e}")))?;
        check_state(&state, n).map_err(|why| bad("initial_state", why))?;
        let selectors = self
            .observables
            .iter()
            .map(|s| {
                s.parse::<Selector>()
                    .map_err(|e| bad("observables", format!("{e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for sel in &selectors {
            if let Selector::Concurrence(k, l) | Selector::Negativity(k, l) = *sel {
                if k == 0 || l == 0 || k > n || l > n || k == l {
                    return Err(bad(
                        "observables",
                        format!("`{sel}` needs two distinct sites in 1..={n}"),
                    ));
                }
            }
        }
        let lattice = self.lattice()?;
        if let Some(list) = &p.dmi_edges {
            if list.len() != lattice.edges().len() {
                return Err(bad(
                    "params.dmi_edges",
                    format!("{} vectors for {} edges", list.len(), lattice.edges().len()),
                ));
            }
        }
        if self.engine == Engine::Dense && n > 10 {
            return Err(CliError::Resource(format!(
                "dense engine is limited to 10 sites, got {n}"
            )));
        }
        Ok(Experiment {
            config: self,
            model,
            scheme,
            state,
            selectors,
        })
    }

    pub fn lattice(&self) -> Result<SpinLattice, CliError> {
        let s = &self.system;
        let bad = |why: String| CliError::Config(format!("field `system`: {why}"));
        match s.lattice {
            LatticeKind::Chain => {
                SpinLattice::chain(s.n_sites, s.periodic).map_err(|e| bad(e.to_string()))
            }
            LatticeKind::Triangular => {
                let (rows, cols) = match (s.rows, s.cols) {
                    (Some(r), Some(c)) => (r, c),
                    _ => return Err(bad("triangular lattices need `rows` and `cols`".into())),
                };
                if rows * cols != s.n_sites {
                    return Err(bad(format!(
                        "rows·cols = {} but n_sites = {}",
                        rows * cols,
                        s.n_sites
                    )));
                }
                SpinLattice::triangular(rows, cols, s.periodic).map_err(|e| bad(e.to_string()))
            }
            LatticeKind::Custom => {
                let edges: Vec<(usize, usize)> = s
                    .edges
                    .as_ref()
                    .ok_or_else(|| bad("custom lattices need `edges`".into()))?
                    .iter()
                    .map(|e| (e[0], e[1]))
                    .collect();
                SpinLattice::custom(s.n_sites, &edges).map_err(|e| bad(e.to_string()))
            }
        }
    }

    pub fn hamiltonian_params(&self) -> HamiltonianParams {
        let p = &self.params;
        let dmi = match (&p.dmi, &p.dmi_edges) {
            (_, Some(list)) => Dmi::PerEdge(list.clone()),
            (Some(d), None) => Dmi::Uniform(*d),
            (None, None) => Dmi::Uniform([0.0; 3]),
        };
        HamiltonianParams::new(p.j, dmi, p.b_field, self.hbar())
    }
}

/// Arithmetic checks on a state expression; nothing is built.
fn check_state(spec: &StateSpec, n: usize) -> Result<(), String> {
    let dim = 1u128 << n;
    match spec {
        StateSpec::Basis(i) if *i == 0 || *i as u128 > dim => {
            Err(format!("basis index {i} outside 1..={dim}"))
        }
        StateSpec::Af(v) if !matches!(v, 1 | 2) => Err(format!("unknown antiferromagnet af{v}")),
        StateSpec::Mix(parts) => {
            if parts.len() as u128 > dim {
                return Err(format!("{} components exceed dimension {dim}", parts.len()));
            }
            for (s, w) in parts {
                if !(w.is_finite() && *w > 0.0) {
                    return Err(format!("mixture weight {w} must be positive and finite"));
                }
                check_state(s, n)?;
            }
            let sum: f64 = parts.iter().map(|(_, w)| w).sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(format!("mixture weights sum to {sum}, expected 1"));
            }
            Ok(())
        }
        StateSpec::Werner(s, p) => {
            if !(*p > 0.0 && *p < 1.0) {
                return Err(format!("Werner weight {p} outside (0, 1)"));
            }
            check_state(s, n)
        }
        _ => Ok(()),
    }
}

fn apply_override(table: &mut toml::Table, ov: &str) -> Result<(), CliError> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{ov}` is not of the form key=value")))?;
    let value: toml::Value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for part in path {
        cur = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                CliError::Config(format!("override `{key}`: `{part}` is not a section"))
            })?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

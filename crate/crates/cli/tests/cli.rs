//! End-to-end runs of the `lrei` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_lrei");

const CHAIN: &str = r#"
model = "qllg"
scheme = "rk4"
h = 0.01
t_final = 0.05
initial_state = "af1"
observables = ["energy", "mx", "my", "mz", "concurrence:1,2", "trace", "purity"]

[system]
n_sites = 4

[params]
J = 1.0
dmi = [0.0, 0.0, 0.4]
b_field = [1.0, 0.0, 0.0]
kappa = 0.5
units = "natural"
"#;

const TRIANGLE: &str = r#"
model = "qllg"
scheme = "rk4"
h = 0.02
t_final = 2.0
initial_state = "af2"
observables = ["mx", "my", "mz"]

[system]
n_sites = 9
lattice = "triangular"
rows = 3
cols = 3
periodic = true

[params]
J = 1.0
dmi = [0.0, 0.0, 0.4]
b_field = [1.0, 0.0, 0.0]
kappa = 0.5
units = "natural"
"#;

struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("lrei-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Scratch(dir)
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.0.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn lrei(args: &[&str], cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg(cfg)
        .arg("--output")
        .arg(out)
        .args(extra.iter().flat_map(|s| ["--set", s]))
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn manifest(csv: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(csv.with_extension("json")).unwrap()).unwrap()
}

#[test]
fn single_step_gives_two_rows() {
    let s = Scratch::new("single");
    let cfg = s.config("c.toml", CHAIN);
    let out = s.path("r.csv");
    ok(&lrei(&["run"], &cfg, &out, &["t_final=0.01"]));
    let (header, rows) = table(&out);
    assert_eq!(header[0], "t");
    assert_eq!(header.len(), 8);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[1][0], 0.01);
    let m = manifest(&out);
    assert_eq!(m["status"], "completed");
    assert_eq!(m["rows"], 2);
    assert!(m["max_ritz_drift"].as_f64().unwrap().is_finite());
}

#[test]
fn runs_are_bit_identical() {
    let s = Scratch::new("determinism");
    let cfg = s.config("c.toml", CHAIN);
    let mix = r#"initial_state="mix:[(af1,0.5),(ghz,0.3),(w,0.2)]""#;
    for extra in [vec![], vec![mix]] {
        let (a, b) = (s.path("a.csv"), s.path("b.csv"));
        ok(&lrei(&["run"], &cfg, &a, &extra));
        ok(&lrei(&["run"], &cfg, &b, &extra));
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}

#[test]
fn unit_trace_and_purity_are_reported() {
    let s = Scratch::new("trace");
    let cfg = s.config("c.toml", CHAIN);
    let out = s.path("r.csv");
    ok(&lrei(
        &["run"],
        &cfg,
        &out,
        &[r#"initial_state="mix:[(af1,0.75),(af2,0.25)]""#],
    ));
    let (header, rows) = table(&out);
    let tr = header.iter().position(|h| h == "trace").unwrap();
    let pu = header.iter().position(|h| h == "purity").unwrap();
    for r in &rows {
        assert!((r[tr] - 1.0).abs() < 1e-12);
        assert!((r[pu] - 0.625).abs() < 1e-12);
    }
}

/// Runs q-LL at `(h, t)` and q-LLG at `(h, t)·(1+κ²)` and returns the largest
/// index-by-index gap in magnetization.
fn rescaled_gap(s: &Scratch, state: &str) -> f64 {
    let cfg = s.config("t.toml", TRIANGLE);
    let kappa: f64 = 0.5;
    let stretch = 1.0 + kappa * kappa;
    let state = format!("initial_state=\"{state}\"");
    let (ll, llg) = (s.path("ll.csv"), s.path("llg.csv"));
    ok(&lrei(&["run"], &cfg, &ll, &["model=\"qll\"", &state]));
    let h = format!("h={}", 0.02 * stretch);
    let t = format!("t_final={}", 2.0 * stretch);
    ok(&lrei(
        &["run"],
        &cfg,
        &llg,
        &["model=\"qllg\"", &state, &h, &t],
    ));
    let (_, a) = table(&ll);
    let (_, b) = table(&llg);
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(&b)
        .flat_map(|(x, y)| x[1..].iter().zip(&y[1..]).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn damped_pure_dynamics_rescale_in_time() {
    let s = Scratch::new("rescale-pure");
    let gap = rescaled_gap(&s, "af2");
    assert!(gap < 1e-10, "gap {gap:e}");
}

#[test]
fn damped_mixed_dynamics_do_not_rescale() {
    let s = Scratch::new("rescale-mixed");
    let gap = rescaled_gap(&s, "mix:[(af1,0.5),(af2,0.5)]");
    assert!(gap > 1e-3, "gap {gap:e}");
}

#[test]
fn werner_runs_match_dense_engine() {
    let s = Scratch::new("werner");
    let cfg = s.config("c.toml", CHAIN);
    let state = r#"initial_state="werner:(ghz,0.3)""#;
    let (low, dense) = (s.path("low.csv"), s.path("dense.csv"));
    ok(&lrei(&["run"], &cfg, &low, &[state]));
    ok(&lrei(&["run"], &cfg, &dense, &[state, "engine=\"dense\""]));
    let (_, a) = table(&low);
    let (_, b) = table(&dense);
    for (x, y) in a.iter().zip(&b) {
        for (p, q) in x.iter().zip(y) {
            assert!((p - q).abs() < 1e-8, "{p} vs {q}");
        }
    }
    let m = manifest(&low);
    assert!((m["evolved_kappa"].as_f64().unwrap() - 0.35).abs() < 1e-15);
}

#[test]
fn converge_reports_orders() {
    let s = Scratch::new("converge");
    let cfg = s.config("c.toml", CHAIN);
    let out = s.path("conv.csv");
    ok(&lrei(
        &["converge"],
        &cfg,
        &out,
        &[
            "t_final=0.2",
            r#"converge.schemes=["rk2","ab3","rk4"]"#,
            "converge.h_values=[0.04,0.02,0.01]",
        ],
    ));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "scheme,h,error,fitted_order");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);
    for (scheme, order) in [("rk2", 2.0), ("ab3", 3.0), ("rk4", 4.0)] {
        let r = rows.iter().find(|r| r[0] == scheme).unwrap();
        let fitted: f64 = r[3].parse().unwrap();
        assert!((fitted - order).abs() < 0.3, "{scheme}: {fitted}");
    }
    assert!(manifest(&out)["metric"]
        .as_str()
        .unwrap()
        .contains("closed form"));
}

#[test]
fn bench_reports_guarded_cells_and_continues() {
    let s = Scratch::new("bench");
    let cfg = s.config("c.toml", &format!("{CHAIN}\n[bench]\nn_values = [4, 30]\nr_values = [1, 2]\nschemes = [\"rk2\", \"ab2\"]\n"));
    let out = s.path("bench.csv");
    ok(&lrei(&["bench"], &cfg, &out, &[]));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,r,scheme,seconds_per_step");
    assert_eq!(lines.len(), 9);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        let t: f64 = f[3].parse().unwrap();
        assert_eq!(t.is_nan(), f[0] == "30", "{l}");
    }
}

#[test]
fn memory_guard_skips_cells() {
    let s = Scratch::new("guard");
    let cfg = s.config("c.toml", CHAIN);
    let out = s.path("bench.csv");
    let res = Command::new(BIN)
        .env("LREI_MEMORY_LIMIT_GB", "1e-9")
        .args(["bench"])
        .arg(&cfg)
        .arg("-o")
        .arg(&out)
        .output()
        .unwrap();
    ok(&res);
    assert!(String::from_utf8_lossy(&res.stderr).contains("memory guard"));
    let m = manifest(&out);
    assert!(m["cells"][0]["error"]
        .as_str()
        .unwrap()
        .contains("memory guard"));
}

fn validate(cfg: &Path, extra: &[&str]) -> Output {
    Command::new(BIN)
        .arg("validate")
        .arg(cfg)
        .args(extra.iter().flat_map(|s| ["--set", s]))
        .output()
        .unwrap()
}

#[test]
fn validate_catches_bad_configs() {
    let s = Scratch::new("validate");
    let cfg = s.config("c.toml", CHAIN);
    let good = validate(&cfg, &[]);
    ok(&good);
    assert!(String::from_utf8_lossy(&good.stdout).starts_with("ok: 4 sites"));

    let cases: [(&[&str], i32, &str); 7] = [
        (&["scheme=\"rk9\""], 2, "rk1, rk2, rk3, rk4, ab2, ab3, ab4"),
        (&["scheme=\"ab3\"", "h=0.03"], 2, "uniform grid"),
        (&["params.kappa=-0.1"], 2, "params.kappa"),
        (&["observables=[\"concurrence:1,7\"]"], 2, "observables"),
        (&["initial_state=\"mix:[(af1,0.5),(af2,0.4)]\""], 2, "sum"),
        (&["system.n_sites=40"], 4, "maximum"),
        (&["engine=\"dense\"", "system.n_sites=12"], 4, "dense"),
    ];
    for (extra, code, needle) in cases {
        let out = validate(&cfg, extra);
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(code), "{extra:?}: {err}");
        assert!(err.contains(needle), "{extra:?}: {err}");
    }

    let large = validate(&cfg, &["system.n_sites=24"]);
    ok(&large);
    assert!(String::from_utf8_lossy(&large.stderr).contains("warning"));

    let unknown = s.config("u.toml", &format!("{CHAIN}\nstep_size = 0.1\n"));
    let out = validate(&unknown, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step_size"));
}

#[test]
fn custom_lattice_round_trip() {
    let s = Scratch::new("custom");
    let text = CHAIN.replace(
        "n_sites = 4",
        "n_sites = 4\nlattice = \"custom\"\nedges = [[1, 2], [2, 3], [3, 4], [4, 1]]",
    );
    let cfg = s.config("c.toml", &text);
    let (a, b) = (s.path("custom.csv"), s.path("ring.csv"));
    ok(&lrei(&["run"], &cfg, &a, &[]));
    let ring = s.config(
        "r.toml",
        &CHAIN.replace("n_sites = 4", "n_sites = 4\nperiodic = true"),
    );
    ok(&lrei(&["run"], &ring, &b, &[]));
    let (_, x) = table(&a);
    let (_, y) = table(&b);
    for (p, q) in x.iter().flatten().zip(y.iter().flatten()) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn manifest_block_count_within_budget() {
    let s = Scratch::new("blocks");
    let cfg = s.config("c.toml", CHAIN);
    for stages in 1..=4 {
        let out = s.path(&format!("rk{stages}.csv"));
        let scheme = format!("scheme=\"rk{stages}\"");
        let mix = r#"initial_state="mix:[(af1,0.6),(ghz,0.4)]""#;
        ok(&lrei(&["run"], &cfg, &out, &[&scheme, mix]));
        let peak = manifest(&out)["peak_blocks"].as_u64().unwrap();
        assert!(peak <= 2 * stages + 1, "rk{stages}: {peak}");
    }
}

#[test]
fn converge_metric_depends_on_size_and_state() {
    let s = Scratch::new("metric");
    let cfg = s.config("c.toml", CHAIN);
    let out = s.path("conv.csv");
    let big = [
        "system.n_sites=11",
        "converge.h_values=[0.01,0.005]",
        "t_final=0.02",
    ];
    ok(&lrei(&["converge"], &cfg, &out, &big));
    let metric = manifest(&out)["metric"].as_str().unwrap().to_string();
    assert!(
        metric.contains("observable trajectory sup-norm"),
        "{metric}"
    );

    let mixed = [
        "system.n_sites=9",
        r#"initial_state="mix:[(af1,0.5),(af2,0.5)]""#,
    ];
    let res = lrei(&["converge"], &cfg, &out, &mixed);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("dense reference"));
}

#[test]
fn bench_dense_column() {
    let s = Scratch::new("bench-dense");
    let cfg = s.config(
        "c.toml",
        &format!("{CHAIN}\n[bench]\nn_values = [4, 11]\nschemes = [\"rk4\"]\ndense = true\n"),
    );
    let out = s.path("bench.csv");
    ok(&lrei(&["bench"], &cfg, &out, &[]));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "n,r,scheme,seconds_per_step,dense_seconds_per_step"
    );
    let dense: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert!(dense[0] > 0.0 && dense[1].is_nan());
}

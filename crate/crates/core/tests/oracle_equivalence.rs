//! The low-rank integrators against the dense reference solvers.

use lrei_core::dynamics::{rhs_for_state, Model, ModelKind};
use lrei_core::integrate::{evolve_with, EvolveOptions, Scheme, Stepper, Tableau};
use lrei_core::linalg::{max_abs, projector, CMat, C64};
use lrei_core::lowrank::{lanczos_topk, LanczosOptions};
use lrei_core::observe::magnetization;
use lrei_core::oracle::{dense_partial_eig, dense_rhs, ei_step, DenseState, ExactRank1};
use lrei_core::spinsys::{
    build_hamiltonian, magnetization_operator, Axis, HamiltonianParams, SparseHermitian,
    SpinLattice,
};
use lrei_core::states::{af_state, random_state, LowRankState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference(lat: &SpinLattice) -> SparseHermitian {
    build_hamiltonian(lat, &HamiltonianParams::reference_system(1.0)).unwrap()
}

fn qllg() -> ModelKind {
    ModelKind::new(Model::Qllg, 0.5, 1.0).unwrap()
}

#[test]
fn rk4_step_matches_dense_eigenmode_step() {
    let h = reference(&SpinLattice::chain(6, false).unwrap());
    let hd = h.to_dense().unwrap();
    let st = random_state(64, 3, 11).unwrap();
    for m in [Model::Qll, Model::Qllg] {
        let mk = ModelKind::new(m, 0.5, 1.0).unwrap();
        let low = Stepper::new(&h, mk)
            .unwrap()
            .rk_step(&st, &Tableau::rk4(), 0.02)
            .unwrap()
            .0;
        let full = ei_step(
            &DenseState::from_low_rank(&st).unwrap(),
            &hd,
            &mk,
            &Tableau::rk4(),
            0.02,
        )
        .unwrap();
        assert!(max_abs(&(low.to_dense().unwrap() - full.rho)) < 1e-8);
    }
}

#[test]
fn rhs_matches_dense_rhs() {
    let h = reference(&SpinLattice::chain(4, true).unwrap());
    let hd = h.to_dense().unwrap();
    let st = random_state(16, 3, 4).unwrap();
    let rho = st.to_dense().unwrap();
    for m in [Model::Qll, Model::Qllg] {
        let mk = ModelKind::new(m, 0.5, 0.8).unwrap();
        let low = rhs_for_state(&st, &h, &mk).unwrap().to_dense();
        assert!(max_abs(&(low - dense_rhs(&rho, &hd, &mk).unwrap())) < 1e-11);
    }
}

#[test]
fn rank_one_rhs_matches_closed_form_derivative() {
    let h = reference(&SpinLattice::chain(4, false).unwrap());
    let hd = h.to_dense().unwrap();
    let psi = af_state(2, 4).unwrap();
    let exact = ExactRank1::new(&hd, 0.5, 1.0, Model::Qllg).unwrap();
    let eps = 1e-5;
    let fd = (exact.at(&psi, eps).unwrap().rho - exact.at(&psi, -eps).unwrap().rho)
        * C64::new(0.5 / eps, 0.0);
    let low = rhs_for_state(&psi.to_low_rank(), &h, &qllg())
        .unwrap()
        .to_dense();
    assert!(max_abs(&(low - fd)) < 1e-8);
}

#[test]
fn ab4_tracks_rk4() {
    let h = reference(&SpinLattice::chain(4, false).unwrap());
    let psi = af_state(1, 4).unwrap().to_low_rank();
    let mut gaps = Vec::new();
    for step in [0.02, 0.01] {
        let run = |s| {
            let opts = EvolveOptions::new(s, step, 10.0 * step);
            evolve_with(psi.clone(), &h, qllg(), &opts, |_| Ok(()))
                .unwrap()
                .final_state
        };
        let a = run(Scheme::Ab(4)).to_dense().unwrap();
        let b = run(Scheme::Rk(4)).to_dense().unwrap();
        gaps.push(max_abs(&(a - b)));
    }
    // Fixed number of steps: the gap shrinks like h^5.
    assert!(gaps[1] < gaps[0] / 16.0, "{gaps:?}");
}

#[test]
fn rk4_halving_at_zero_damping() {
    let h = reference(&SpinLattice::chain(4, false).unwrap());
    let hd = h.to_dense().unwrap();
    let psi = af_state(1, 4).unwrap();
    let mk = ModelKind::new(Model::Qll, 0.0, 1.0).unwrap();
    let target = ExactRank1::new(&hd, 0.0, 1.0, Model::Qll)
        .unwrap()
        .at(&psi, 1.0)
        .unwrap()
        .rho;
    let err = |step: f64| {
        let s = evolve_with(
            psi.to_low_rank(),
            &h,
            mk,
            &EvolveOptions::new(Scheme::Rk(4), step, 1.0),
            |_| Ok(()),
        )
        .unwrap();
        max_abs(&(s.final_state.to_dense().unwrap() - &target))
    };
    let ratio = err(0.1) / err(0.05);
    assert!((ratio - 16.0).abs() < 3.0, "ratio {ratio}");
}

#[test]
fn pure_state_rescaling_holds_at_rhs_level() {
    let h = reference(&SpinLattice::chain(5, false).unwrap());
    let psi = af_state(1, 5).unwrap().to_low_rank();
    let kappa = 0.5;
    let ll = rhs_for_state(&psi, &h, &ModelKind::new(Model::Qll, kappa, 1.0).unwrap())
        .unwrap()
        .to_dense();
    let llg = rhs_for_state(&psi, &h, &ModelKind::new(Model::Qllg, kappa, 1.0).unwrap())
        .unwrap()
        .to_dense();
    assert!(max_abs(&(llg - ll * C64::new(1.0 / (1.0 + kappa * kappa), 0.0))) < 1e-10);
}

#[test]
fn partial_eig_agrees_with_lanczos() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 128;
    let g = CMat::from_fn(n, n, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let m = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let (v, vals) = dense_partial_eig(&m, 4).unwrap();
    let e = lanczos_topk(
        &m,
        4,
        &LanczosOptions {
            max_restarts: Some(2000),
            ..Default::default()
        },
    )
    .unwrap();
    for (a, b) in e.values.iter().zip(&vals) {
        assert!((a - b).abs() < 1e-9);
    }
    assert!(max_abs(&(projector(&e.vectors) - projector(&v))) < 1e-8);
}

#[test]
fn nine_spin_magnetization_matches_dense() {
    let lat = SpinLattice::triangular(3, 3, true).unwrap();
    let h = reference(&lat);
    let hd = h.to_dense().unwrap();
    let psi = af_state(2, 9).unwrap();
    let mk = qllg();
    let ops: Vec<CMat> = Axis::ALL
        .iter()
        .map(|&a| {
            magnetization_operator(a, 9, 1.0)
                .unwrap()
                .to_dense()
                .unwrap()
        })
        .collect();
    let steps = 4;
    let mut low: Vec<[f64; 3]> = Vec::new();
    let opts = EvolveOptions::new(Scheme::Rk(4), 0.01, 0.01 * steps as f64);
    evolve_with(psi.to_low_rank(), &h, mk, &opts, |info| {
        low.push(magnetization(info.state, 1.0).unwrap());
        Ok(())
    })
    .unwrap();
    let mut full = DenseState::from_pure(&psi).unwrap();
    for (k, m) in low.iter().enumerate() {
        for (axis, op) in ops.iter().enumerate() {
            let dense_m = (op * &full.rho).trace().re;
            assert!((dense_m - m[axis]).abs() < 1e-6, "step {k} axis {axis}");
        }
        if k < steps {
            full = ei_step(&full, &hd, &mk, &Tableau::rk4(), 0.01).unwrap();
        }
    }
}

#[test]
fn every_scheme_converges_to_closed_form() {
    let h = reference(&SpinLattice::chain(4, false).unwrap());
    let hd = h.to_dense().unwrap();
    let psi = af_state(1, 4).unwrap();
    let target = ExactRank1::new(&hd, 0.5, 1.0, Model::Qllg)
        .unwrap()
        .at(&psi, 0.5)
        .unwrap()
        .rho;
    for s in Scheme::ALL {
        let opts = EvolveOptions::new(s, 0.005, 0.5);
        let out: LowRankState = evolve_with(psi.to_low_rank(), &h, qllg(), &opts, |_| Ok(()))
            .unwrap()
            .final_state;
        let err = max_abs(&(out.to_dense().unwrap() - &target));
        assert!(
            err < 1e-2_f64.powi(s.order() as i32).max(1e-10) * 10.0,
            "{s}: {err:e}"
        );
    }
}

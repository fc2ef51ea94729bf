//! The threshold-truncated engine against brute-force evolution of the
//! explicit chain.

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use histent_core::bath::{auto_chain_length, uniform_chain, ChainSpec};
use histent_core::engine::{Engine, EngineConfig};
use histent_core::histories::{enumerate_branches, output_times, run_without_collapse, sample_history};
use histent_core::kicked_top::{build_spin_sector, KickedTopParams, SpinSector};
use histent_core::lightcone::{
    accumulate_windows, checkpoint_grid, propagate_one_particle, Boundary, LightConeSchedule, OneParticleTrajectory,
};
use histent_core::linalg::max_abs;
use histent_core::oracle::{
    decoherence_functional, decoherence_ratio, embed_engine_state, exact_evolve, fidelity, reduced_compare,
    ExactSystem,
};

const SITES: usize = 3;
const N_MAX: usize = 6;
const HORIZON: f64 = 5.0;

struct Small {
    sector: SpinSector,
    spec: ChainSpec,
    traj: OneParticleTrajectory,
}

impl Small {
    fn new() -> Self {
        let sector = build_spin_sector(1.0).unwrap();
        let spec = uniform_chain(1.0, 0.2, 0.05, SITES).unwrap();
        let traj = propagate_one_particle(&spec, HORIZON, 0.001, Boundary::Finite).unwrap();
        Small { sector, spec, traj }
    }

    fn schedule(&self, a_cut: f64) -> LightConeSchedule {
        let wd = accumulate_windows(&self.traj, &checkpoint_grid(&self.traj, 1)).unwrap();
        LightConeSchedule::build(&wd, a_cut).unwrap()
    }

    fn engine(&self, a_cut: f64) -> Engine<'_> {
        let cfg = EngineConfig { n_max: N_MAX, a_cut, ..EngineConfig::default() };
        Engine::new(&self.sector, KickedTopParams::default(), self.spec.h_sys, &self.traj, cfg).unwrap()
    }
}

fn spin_state(dim: usize, re: &[f64], im: &[f64]) -> DVector<C64> {
    let v = DVector::from_iterator(dim, re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)));
    &v / C64::new(v.norm(), 0.0)
}

fn state_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-1.0f64..1.0, 3), prop::collection::vec(-1.0f64..1.0, 3))
        .prop_filter("nonzero", |(a, b)| a.iter().chain(b).map(|x| x * x).sum::<f64>() > 1e-2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn engine_matches_exact_evolution((re, im) in state_strategy()) {
        let small = Small::new();
        let a_cut = 1e-10;
        let psi = spin_state(3, &re, &im);
        let engine = small.engine(a_cut);
        let schedule = small.schedule(a_cut);
        let outputs = output_times(HORIZON, 0.1);
        let (st, series) = run_without_collapse(&engine, &schedule, &psi, HORIZON, &outputs).unwrap();
        let params = KickedTopParams::default();
        let exact = exact_evolve(&small.sector, params, &small.spec, N_MAX, &psi, HORIZON, 0.1).unwrap();
        let sys = ExactSystem::new(&small.sector, params, &small.spec, N_MAX).unwrap();
        let exact_series: Vec<(f64, f64)> = exact.iter().map(|e| (e.time, sys.expectation_jy(e))).collect();
        let dev = reduced_compare(&exact_series, &series).unwrap();
        let embedded = embed_engine_state(&st, &small.sector, &small.spec).unwrap();
        let infidelity = 1.0 - fidelity(&embedded, &exact.last().unwrap().amps);
        prop_assert!(infidelity < 1e-6, "1 - F = {:e}", infidelity);
        prop_assert!(dev < 1e-5, "deviation {:e}", dev);
    }

    /// Histories told apart by their records do not interfere.
    #[test]
    fn record_histories_decohere((re, im) in state_strategy(), log_cut in -8.0f64..-4.0) {
        let small = Small::new();
        let a_cut = 10f64.powf(log_cut);
        let psi = spin_state(3, &re, &im);
        let engine = small.engine(a_cut);
        let schedule = small.schedule(a_cut);
        let set = enumerate_branches(&engine, &schedule, &psi, HORIZON, 1e-14).unwrap();
        let sys = ExactSystem::new(&small.sector, KickedTopParams::default(), &small.spec, 2 * N_MAX).unwrap();
        let init = sys.initial(&psi).unwrap();
        let d = decoherence_functional(&sys, &init, &set, HORIZON).unwrap();
        prop_assert!(max_abs(&(&d - d.adjoint())) < 1e-8);
        prop_assert!((d.trace().re - 1.0).abs() < 1e-8, "trace {}", d.trace().re);
        prop_assert!(d.clone().symmetric_eigen().eigenvalues.min() > -1e-8);
        let ratio = decoherence_ratio(&d, a_cut);
        prop_assert!(ratio < 10.0 * a_cut, "ratio {:e} at a_cut {:e}", ratio, a_cut);
    }
}

#[test]
fn looser_threshold_costs_accuracy() {
    let small = Small::new();
    let psi = small.sector.jy_eigenstate(0.0).unwrap();
    let params = KickedTopParams::default();
    let exact = exact_evolve(&small.sector, params, &small.spec, N_MAX, &psi, HORIZON, 0.1).unwrap();
    let sys = ExactSystem::new(&small.sector, params, &small.spec, N_MAX).unwrap();
    let exact_series: Vec<(f64, f64)> = exact.iter().map(|e| (e.time, sys.expectation_jy(e))).collect();
    let outputs = output_times(HORIZON, 0.1);
    let devs: Vec<f64> = [1e-4, 1e-2, 1e-1]
        .iter()
        .map(|&a| {
            let (_, series) = run_without_collapse(&small.engine(a), &small.schedule(a), &psi, HORIZON, &outputs).unwrap();
            reduced_compare(&exact_series, &series).unwrap()
        })
        .collect();
    assert!(devs.windows(2).all(|w| w[1] >= w[0]), "{devs:?}");
}

#[test]
fn exact_evolution_conserves_norm_and_energy() {
    let sector = build_spin_sector(1.0).unwrap();
    let params = KickedTopParams { k: 0.0, p: 0.0, ..KickedTopParams::default() };
    let spec = uniform_chain(1.0, 0.2, 0.3, 2).unwrap();
    let sys = ExactSystem::new(&sector, params, &spec, 6).unwrap();
    let mut st = sys.initial(&sector.jy_eigenstate(1.0).unwrap()).unwrap();
    let e0 = sys.energy(&st);
    for i in 1..=10 {
        sys.evolve(&mut st, 0.7 * i as f64);
        assert!((st.amps.norm() - 1.0).abs() < 1e-10);
        assert!((sys.energy(&st) - e0).abs() < 1e-8);
    }
}

#[test]
fn effective_hamiltonian_is_hermitian_and_kicks_are_unitary() {
    let small = Small::new();
    let engine = small.engine(1e-10);
    let schedule = small.schedule(1e-10);
    let mut st = engine.init(&small.sector.jy_eigenstate(1.0).unwrap()).unwrap();
    for ev in schedule.in_events.iter().take(2) {
        engine.attach_mode(&mut st, &ev.mode).unwrap();
    }
    engine.evolve_to(&mut st, 0.5).unwrap();
    for t in [0.5, 1.3, 4.0] {
        let h = engine.effective_hamiltonian(&st, t).to_dense(&st.basis);
        assert!(max_abs(&(&h - h.adjoint())) < 1e-12);
    }
    let before = st.norm();
    engine.kick(&mut st);
    assert!((st.norm() - before).abs() < 1e-12);
}

#[test]
fn attaching_a_mode_leaves_the_spin_alone() {
    let small = Small::new();
    let engine = small.engine(1e-10);
    let schedule = small.schedule(1e-10);
    let psi = spin_state(3, &[0.3, -0.5, 0.2], &[0.1, 0.4, -0.6]);
    let mut st = engine.init(&psi).unwrap();
    for ev in &schedule.in_events {
        engine.evolve_to(&mut st, ev.time).unwrap();
        let before = engine.expectation(&st);
        engine.attach_mode(&mut st, &ev.mode).unwrap();
        assert!((engine.expectation(&st) - before).abs() < 1e-10);
    }
}

#[test]
fn unnormalized_spin_state_is_rejected() {
    let small = Small::new();
    let engine = small.engine(1e-4);
    let psi = DVector::from_element(3, C64::new(1.0, 0.0));
    assert!(engine.init(&psi).is_err());
}

#[test]
fn long_sampled_run_keeps_its_norm() {
    let horizon = 500.0;
    let sector = build_spin_sector(1.0).unwrap();
    let spec = uniform_chain(1.0, 0.2, 0.05, auto_chain_length(0.2, horizon + 50.0)).unwrap();
    let traj = propagate_one_particle(&spec, horizon + 50.0, 0.1, Boundary::SemiInfinite).unwrap();
    let wd = accumulate_windows(&traj, &checkpoint_grid(&traj, 1)).unwrap();
    let schedule = LightConeSchedule::build(&wd, 1e-4).unwrap();
    let engine = Engine::new(&sector, KickedTopParams::default(), spec.h_sys, &traj, EngineConfig::default()).unwrap();
    let psi = sector.jy_eigenstate(1.0).unwrap();
    let (_, st) = sample_history(&engine, &schedule, &psi, horizon, &[], 0).unwrap();
    assert!((st.norm() - 1.0).abs() < 1e-6, "norm {}", st.norm());
}

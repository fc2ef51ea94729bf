//! Small instances where the engine can be compared against brute force.

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde::Serialize;

use histent_core::bath::{uniform_chain, ChainSpec};
use histent_core::engine::{Engine, EngineConfig};
use histent_core::histories::{enumerate_branches, output_times, run_without_collapse};
use histent_core::kicked_top::{build_spin_sector, floquet_operator, KickedTopParams, SpinSector};
use histent_core::lightcone::{
    accumulate_windows, checkpoint_grid, propagate_one_particle, Boundary, LightConeSchedule, OneParticleTrajectory,
};
use histent_core::oracle::{
    decoherence_functional, decoherence_ratio, embed_engine_state, exact_evolve, fidelity, reduced_compare,
    ExactSystem,
};
use histent_core::Result;

/// Parameters of the reference instance: `j = 1` on a three-site chain.
pub const SPIN: f64 = 1.0;
pub const SITES: usize = 3;
pub const N_MAX: usize = 6;
pub const HORIZON: f64 = 5.0;
pub const A_CUT: f64 = 1e-10;
const LIGHTCONE_DT: f64 = 0.001;
const SAMPLE_DT: f64 = 0.1;

/// Histories lighter than this are not followed further.
const BRANCH_FLOOR: f64 = 1e-14;

pub struct SmallInstance {
    pub sector: SpinSector,
    pub params: KickedTopParams,
    pub spec: ChainSpec,
    pub traj: OneParticleTrajectory,
    pub schedule: LightConeSchedule,
    pub cfg: EngineConfig,
    pub initial: DVector<C64>,
}

impl SmallInstance {
    /// The reference instance at threshold `a_cut`, starting from `|J_y = 0>`.
    pub fn new(a_cut: f64) -> Result<Self> {
        let sector = build_spin_sector(SPIN)?;
        let initial = sector.jy_eigenstate(0.0)?;
        Self::with_state(a_cut, sector, initial)
    }

    pub fn with_state(a_cut: f64, sector: SpinSector, initial: DVector<C64>) -> Result<Self> {
        let params = KickedTopParams::default();
        let spec = uniform_chain(1.0, 0.2, 0.05, SITES)?;
        let traj = propagate_one_particle(&spec, HORIZON, LIGHTCONE_DT, Boundary::Finite)?;
        let wd = accumulate_windows(&traj, &checkpoint_grid(&traj, 1))?;
        let schedule = LightConeSchedule::build(&wd, a_cut)?;
        let cfg = EngineConfig { n_max: N_MAX, a_cut, ..EngineConfig::default() };
        Ok(SmallInstance { sector, params, spec, traj, schedule, cfg, initial })
    }

    pub fn engine(&self) -> Result<Engine<'_>> {
        Engine::new(&self.sector, self.params, self.spec.h_sys, &self.traj, self.cfg.clone())
    }

    /// `1 - |<engine|exact>|` at the horizon and `sup_t |<J_y>|` deviation.
    pub fn compare(&self) -> Result<(f64, f64)> {
        let engine = self.engine()?;
        let outputs = output_times(HORIZON, SAMPLE_DT);
        let (st, series) = run_without_collapse(&engine, &self.schedule, &self.initial, HORIZON, &outputs)?;
        let exact = exact_evolve(&self.sector, self.params, &self.spec, N_MAX, &self.initial, HORIZON, SAMPLE_DT)?;
        let sys = ExactSystem::new(&self.sector, self.params, &self.spec, N_MAX)?;
        let exact_series: Vec<(f64, f64)> = exact.iter().map(|e| (e.time, sys.expectation_jy(e))).collect();
        let dev = reduced_compare(&exact_series, &series)?;
        let embedded = embed_engine_state(&st, &self.sector, &self.spec)?;
        let last = exact.last().expect("grid is nonempty");
        Ok((1.0 - fidelity(&embedded, &last.amps), dev))
    }

    /// Decoherence ratio of the record histories, retaining weights >= a_cut.
    ///
    /// Projectors on a record slot can push quanta past a global cap, so the
    /// reference runs with twice the engine's cap.
    pub fn decoherence(&self) -> Result<f64> {
        let engine = self.engine()?;
        let set = enumerate_branches(&engine, &self.schedule, &self.initial, HORIZON, BRANCH_FLOOR)?;
        let sys = ExactSystem::new(&self.sector, self.params, &self.spec, 2 * N_MAX)?;
        let init = sys.initial(&self.initial)?;
        let d = decoherence_functional(&sys, &init, &set, HORIZON)?;
        Ok(decoherence_ratio(&d, self.schedule.a_cut))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: &'static str, value: f64, threshold: f64) -> Self {
        Check { name, value, threshold, pass: value < threshold }
    }
}

/// Without coupling the spin follows the closed kicked top.
pub fn decoupled_check() -> Result<Check> {
    let sector = build_spin_sector(SPIN)?;
    let params = KickedTopParams::default();
    let spec = uniform_chain(1.0, 0.2, 0.0, SITES)?;
    let psi = sector.jy_eigenstate(1.0)?;
    let exact = exact_evolve(&sector, params, &spec, 2, &psi, HORIZON, 1.0)?;
    let sys = ExactSystem::new(&sector, params, &spec, 2)?;
    let u = floquet_operator(&sector, &params)?;
    let mut closed = psi.clone();
    let mut worst: f64 = 0.0;
    for e in &exact {
        let jy = (closed.adjoint() * &sector.jy * &closed)[(0, 0)].re;
        worst = worst.max((jy - sys.expectation_jy(e)).abs());
        closed = &u * closed;
    }
    Ok(Check::below("decoupled_spin", worst, 1e-10))
}

/// A single mode with no kick and no precession conserves energy.
pub fn energy_check() -> Result<Check> {
    let sector = build_spin_sector(SPIN)?;
    let params = KickedTopParams { k: 0.0, p: 0.0, ..KickedTopParams::default() };
    let spec = uniform_chain(1.0, 0.2, 0.3, 1)?;
    let psi = sector.jy_eigenstate(1.0)?;
    let sys = ExactSystem::new(&sector, params, &spec, 8)?;
    let mut st = sys.initial(&psi)?;
    let e0 = sys.energy(&st);
    let mut worst: f64 = 0.0;
    for i in 1..=20 {
        sys.evolve(&mut st, 0.5 * i as f64);
        worst = worst.max((sys.energy(&st) - e0).abs());
    }
    Ok(Check::below("energy_conservation", worst, 1e-8))
}

/// Deviation of `<J_y>` from the oracle at the thresholds `a_cuts`.
pub fn threshold_sweep(a_cuts: &[f64]) -> Result<Vec<f64>> {
    a_cuts.iter().map(|&a| SmallInstance::new(a)?.compare().map(|(_, dev)| dev)).collect()
}

/// Every check of `oracle-check`.
pub fn run_suite() -> Result<Vec<Check>> {
    let mut checks = vec![decoupled_check()?, energy_check()?];
    let inst = SmallInstance::new(A_CUT)?;
    let (infidelity, dev) = inst.compare()?;
    checks.push(Check::below("engine_infidelity", infidelity, 1e-6));
    checks.push(Check::below("engine_jy_deviation", dev, 1e-5));
    checks.push(Check::below("decoherence_ratio", inst.decoherence()?, 10.0 * A_CUT));
    let sweep = threshold_sweep(&[1e-4, 1e-2, 1e-1])?;
    // Any decrease along the sweep is a violation.
    let worst_drop = sweep.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    checks.push(Check { name: "threshold_bias_monotone", value: worst_drop, threshold: 0.0, pass: worst_drop <= 0.0 });
    Ok(checks)
}

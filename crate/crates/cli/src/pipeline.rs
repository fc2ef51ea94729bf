//! Builds the numerical objects a command needs from a `RunConfig`.

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use histent_core::bath::{auto_chain_length, chain_from_spectral_density, parse_spectral_csv, uniform_chain, ChainSpec};
use histent_core::engine::{Engine, EngineConfig, JointState};
use histent_core::histories::{output_times, run_trajectory, run_without_collapse, History};
use histent_core::kicked_top::{build_spin_sector, KickedTopParams, SpinSector};
use histent_core::lightcone::{
    accumulate_windows, checkpoint_grid, propagate_one_particle, Boundary, LightConeSchedule, OneParticleTrajectory,
};

use crate::config::RunConfig;
use crate::error::CliError;

/// Chain length used to estimate the hopping scale of a spectral density.
const PROBE_SITES: usize = 50;

pub fn chain_spec(cfg: &RunConfig, propagation: f64) -> Result<ChainSpec, CliError> {
    let b = &cfg.bath;
    if let Some(path) = &b.spectral_csv {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        let sd = parse_spectral_csv(&text)?;
        let sites = match b.sites {
            Some(m) => m,
            None => {
                let probe = chain_from_spectral_density(&sd, PROBE_SITES.min(sd.nodes.len()))?;
                auto_chain_length(probe.max_hop(), propagation)
            }
        };
        return Ok(chain_from_spectral_density(&sd, sites)?);
    }
    let sites = b.sites.unwrap_or_else(|| auto_chain_length(b.hop, propagation));
    Ok(uniform_chain(b.eps, b.hop, b.h_sys, sites)?)
}

/// The bath side of a run: shared by every spin and kick strength.
pub struct Environment {
    pub spec: ChainSpec,
    pub traj: OneParticleTrajectory,
    pub schedule: LightConeSchedule,
    /// End of the analysed window; the bath is propagated past it.
    pub horizon: f64,
}

impl Environment {
    pub fn build(cfg: &RunConfig) -> Result<Self, CliError> {
        let lc = &cfg.lightcone;
        let propagation = lc.horizon + lc.margin;
        let spec = chain_spec(cfg, propagation)?;
        let traj = propagate_one_particle(&spec, propagation, lc.dt, Boundary::SemiInfinite)?;
        let schedule = {
            let wd = accumulate_windows(&traj, &checkpoint_grid(&traj, lc.stride))?;
            LightConeSchedule::build(&wd, lc.a_cut)?
        };
        Ok(Environment { spec, traj, schedule, horizon: lc.horizon })
    }
}

/// Spin sector, kick parameters and initial state for spin `j` and kick `k`.
pub struct Top {
    pub sector: SpinSector,
    pub params: KickedTopParams,
    pub initial: DVector<C64>,
}

impl Top {
    pub fn new(cfg: &RunConfig, j: f64, k: f64) -> Result<Self, CliError> {
        let s = &cfg.spin;
        let sector = build_spin_sector(j)?;
        let params = KickedTopParams { k, p: s.p, tau: s.tau, beta: s.beta };
        params.validate()?;
        let initial = sector.jy_eigenstate(s.initial_jy)?;
        Ok(Top { sector, params, initial })
    }
}

pub fn engine_config(cfg: &RunConfig, leakage_bound: f64) -> EngineConfig {
    let e = &cfg.engine;
    EngineConfig {
        dt: e.dt,
        n_max: e.n_max,
        a_cut: cfg.lightcone.a_cut,
        seed: cfg.histories.seed,
        tolerance: e.tolerance,
        leakage_bound,
        max_modes: e.max_modes,
        ..EngineConfig::default()
    }
}

/// `n_traj` sampled histories; trajectory `i` uses stream `i` of the seed.
pub fn sample_histories(
    env: &Environment,
    top: &Top,
    ecfg: &EngineConfig,
    n_traj: usize,
    output_dt: f64,
) -> Result<Vec<History>, CliError> {
    let engine = Engine::new(&top.sector, top.params, env.spec.h_sys, &env.traj, ecfg.clone())?;
    let outputs = output_times(env.horizon, output_dt);
    let results: Vec<_> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| run_trajectory(&engine, &env.schedule, &top.initial, env.horizon, &outputs, i))
        .collect();
    results.into_iter().map(|r| r.map_err(CliError::from)).collect()
}

/// The unsampled evolution on the output grid.
pub fn mean_evolution(
    env: &Environment,
    top: &Top,
    ecfg: &EngineConfig,
    output_dt: f64,
) -> Result<(JointState, Vec<(f64, f64)>), CliError> {
    let engine = Engine::new(&top.sector, top.params, env.spec.h_sys, &env.traj, ecfg.clone())?;
    let outputs = output_times(env.horizon, output_dt);
    Ok(run_without_collapse(&engine, &env.schedule, &top.initial, env.horizon, &outputs)?)
}

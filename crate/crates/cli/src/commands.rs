//! One function per subcommand. Each writes its data files into `out` and
//! returns a JSON summary for the terminal.

use serde::Serialize;
use serde_json::{json, Value};

use histent_core::bath::chain_moments;
use histent_core::checkpoint;
use histent_core::engine::Engine;
use histent_core::histories::{ensemble_stats, output_times, sample_history, EnsembleStats, History};
use histent_core::kicked_top::{floquet_operator, quasienergy_spacings, SpectrumStats};
use rayon::prelude::*;

use crate::config::{Format, RunConfig};
use crate::error::CliError;
use crate::oracle_suite;
use crate::output::{num, OutDir};
use crate::pipeline::{chain_spec, engine_config, mean_evolution, sample_histories, Environment, Top};

pub fn spectrum(cfg: &RunConfig, out: &OutDir) -> Result<Value, CliError> {
    let stats = spectrum_stats(cfg, cfg.spin.j, cfg.spin.k)?;
    if cfg.wants(Format::Csv) {
        write_spectrum_csv(out, "spectrum.csv", &stats)?;
    }
    let summary = spectrum_summary(cfg, cfg.spin.j, cfg.spin.k, &stats);
    if cfg.wants(Format::Json) {
        out.write_json("spectrum.json", &summary)?;
    }
    Ok(summary)
}

pub fn spectrum_stats(cfg: &RunConfig, j: f64, k: f64) -> Result<SpectrumStats, CliError> {
    let top = Top::new(cfg, j, k)?;
    let u = floquet_operator(&top.sector, &top.params)?;
    Ok(quasienergy_spacings(&u)?)
}

pub fn write_spectrum_csv(out: &OutDir, name: &str, stats: &SpectrumStats) -> Result<(), CliError> {
    let rows = stats
        .quasienergies
        .iter()
        .zip(&stats.spacings)
        .enumerate()
        .map(|(i, (q, s))| vec![i.to_string(), num(*q), num(*s)]);
    out.write_csv(name, &["index", "quasienergy", "spacing"], rows)
}

pub fn spectrum_summary(cfg: &RunConfig, j: f64, k: f64, stats: &SpectrumStats) -> Value {
    json!({
        "j": j,
        "k": k,
        "p": cfg.spin.p,
        "tau": cfg.spin.tau,
        "beta": cfg.spin.beta,
        "levels": stats.quasienergies.len(),
        "ks_poisson": stats.ks_poisson,
        "ks_wigner": stats.ks_wigner,
        "mean_r": stats.mean_r,
    })
}

pub fn chain(cfg: &RunConfig, out: &OutDir) -> Result<Value, CliError> {
    let spec = chain_spec(cfg, cfg.lightcone.horizon + cfg.lightcone.margin)?;
    let summary = json!({
        "sites": spec.len(),
        "h_sys": spec.h_sys,
        "eps": spec.eps,
        "hop": spec.hop,
        "moments": chain_moments(&spec, 4),
    });
    out.write_json("chain.json", &summary)?;
    Ok(json!({ "sites": spec.len(), "h_sys": spec.h_sys }))
}

pub fn lightcone(cfg: &RunConfig, out: &OutDir) -> Result<Value, CliError> {
    let env = Environment::build(cfg)?;
    let counts: Vec<_> = env.schedule.counts().into_iter().filter(|c| c.t <= env.horizon + 1e-9).collect();
    if cfg.wants(Format::Csv) {
        let rows = counts
            .iter()
            .map(|c| vec![num(c.t), c.m_in.to_string(), c.m_out.to_string(), c.r.to_string()]);
        out.write_csv("lightcone.csv", &["t", "m_in", "m_out", "r"], rows)?;
    }
    if cfg.wants(Format::Json) {
        out.write_json("modes.json", &env.schedule.dump())?;
    }
    let last = counts.last().copied();
    Ok(json!({
        "sites": env.spec.len(),
        "horizon": env.horizon,
        "m_in": last.map_or(0, |c| c.m_in),
        "m_out": last.map_or(0, |c| c.m_out),
        "r": last.map_or(0, |c| c.r),
        "max_r": counts.iter().map(|c| c.r).max().unwrap_or(0),
    }))
}

/// `<J_y>(t)` per sampled trajectory, or the unsampled evolution, plus a
/// binary checkpoint of each final state.
pub fn evolve(cfg: &RunConfig, out: &OutDir, no_collapse: bool) -> Result<Value, CliError> {
    let env = Environment::build(cfg)?;
    let top = Top::new(cfg, cfg.spin.j, cfg.spin.k)?;
    let ecfg = engine_config(cfg, cfg.engine.leakage_bound);
    if no_collapse {
        let (st, series) = mean_evolution(&env, &top, &ecfg, cfg.histories.output_dt)?;
        out.write_csv("evolve.csv", &["t", "jy"], series.iter().map(|(t, y)| vec![num(*t), num(*y)]))?;
        out.write_bytes("state.bin", &checkpoint::encode(&st))?;
        return Ok(json!({ "trajectories": 0, "peak_leakage": st.peak_leakage, "final_jy": series.last().map(|p| p.1) }));
    }
    let engine = Engine::new(&top.sector, top.params, env.spec.h_sys, &env.traj, ecfg)?;
    let outputs = output_times(env.horizon, cfg.histories.output_dt);
    let runs: Vec<_> = (0..cfg.histories.n_traj as u64)
        .into_par_iter()
        .map(|i| sample_history(&engine, &env.schedule, &top.initial, env.horizon, &outputs, i))
        .collect();
    let mut rows = Vec::new();
    let mut peak: f64 = 0.0;
    for (i, run) in runs.into_iter().enumerate() {
        let (h, st) = run?;
        peak = peak.max(h.peak_leakage);
        rows.extend(h.jy_series.iter().map(|(t, y)| vec![i.to_string(), num(*t), num(*y)]));
        out.write_bytes(&format!("state_{i}.bin"), &checkpoint::encode(&st))?;
    }
    out.write_csv("evolve.csv", &["trajectory", "t", "jy"], rows)?;
    Ok(json!({ "trajectories": cfg.histories.n_traj, "peak_leakage": peak }))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub j: f64,
    pub k: f64,
    #[serde(flatten)]
    pub stats: EnsembleStats,
    pub peak_leakage: f64,
}

/// Histories at every kick strength of `ks`; the bath side is shared.
pub fn sweep(
    cfg: &RunConfig,
    env: &Environment,
    j: f64,
    ks: &[f64],
    leakage_bound: f64,
) -> Result<Vec<(SweepPoint, Vec<History>)>, CliError> {
    let ecfg = engine_config(cfg, leakage_bound);
    let mut points = Vec::with_capacity(ks.len());
    for &k in ks {
        let top = Top::new(cfg, j, k)?;
        let hs = sample_histories(env, &top, &ecfg, cfg.histories.n_traj, cfg.histories.output_dt)?;
        let stats = ensemble_stats(&hs, cfg.histories.bins)?;
        let peak_leakage = hs.iter().map(|h| h.peak_leakage).fold(0.0, f64::max);
        points.push((SweepPoint { j, k, stats, peak_leakage }, hs));
    }
    Ok(points)
}

pub fn write_jumps(out: &OutDir, name: &str, points: &[(SweepPoint, Vec<History>)]) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for (pt, hs) in points {
        for h in hs {
            for r in &h.records {
                rows.push(vec![
                    num(pt.j),
                    num(pt.k),
                    h.trajectory.to_string(),
                    r.k.to_string(),
                    num(r.t_out),
                    r.q.to_string(),
                    num(r.probs[r.q]),
                    num(r.p_max()),
                    num(r.delta_s),
                    r.schmidt_rank.to_string(),
                ]);
            }
        }
    }
    let header = ["j", "kick", "trajectory", "k", "t_out", "q", "p_q", "p_q_max", "delta_S", "schmidt_rank"];
    out.write_csv(name, &header, rows)
}

pub fn write_histogram(out: &OutDir, name: &str, points: &[(SweepPoint, Vec<History>)]) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for (pt, _) in points {
        let bins = pt.stats.jump_histogram.len();
        for (b, count) in pt.stats.jump_histogram.iter().enumerate() {
            let lo = b as f64 / bins as f64;
            let hi = (b + 1) as f64 / bins as f64;
            rows.push(vec![num(pt.j), num(pt.k), num(lo), num(hi), count.to_string()]);
        }
    }
    out.write_csv(name, &["j", "kick", "p_lo", "p_hi", "count"], rows)
}

pub fn histories(cfg: &RunConfig, out: &OutDir) -> Result<Value, CliError> {
    let env = Environment::build(cfg)?;
    let points = sweep(cfg, &env, cfg.spin.j, &cfg.histories.k_list, cfg.engine.leakage_bound)?;
    if cfg.wants(Format::Csv) {
        write_jumps(out, "jumps.csv", &points)?;
        write_histogram(out, "histogram.csv", &points)?;
    }
    let summary: Vec<&SweepPoint> = points.iter().map(|(p, _)| p).collect();
    if cfg.wants(Format::Json) {
        out.write_json("summary.json", &summary)?;
    }
    Ok(json!(summary
        .iter()
        .map(|p| json!({ "k": p.k, "mean_delta_s": p.stats.mean_delta_s, "n_jumps": p.stats.n_jumps }))
        .collect::<Vec<_>>()))
}

pub fn oracle_check(out: &OutDir) -> Result<Value, CliError> {
    let checks = oracle_suite::run_suite()?;
    let pass = checks.iter().all(|c| c.pass);
    let report = json!({ "pass": pass, "checks": checks });
    out.write_json("oracle.json", &report)?;
    if !pass {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
        return Err(CliError::Failed(format!("oracle checks failed: {}", failed.join(", "))));
    }
    Ok(report)
}

//! Data behind each figure, one subdirectory per figure.

use std::f64::consts::PI;

use serde_json::{json, Value};

use histent_core::lightcone::OneParticleTrajectory;

use crate::commands::{spectrum_stats, spectrum_summary, sweep, write_histogram, write_jumps, write_spectrum_csv};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{num, OutDir};
use crate::pipeline::{engine_config, sample_histories, Environment, Top};

pub const ALL: [&str; 6] = ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7"];

/// Bins of the spacing histograms on [0, SPACING_MAX].
const SPACING_BINS: usize = 30;
const SPACING_MAX: f64 = 4.0;

/// Run the requested figures. A failing figure is reported and the others
/// still run; the error lists every failure.
pub fn reproduce(cfg: &RunConfig, out: &OutDir, which: &[String]) -> Result<Value, CliError> {
    for w in which {
        if !ALL.contains(&w.as_str()) {
            return Err(CliError::Config {
                path: "figures".into(),
                line: None,
                message: format!("unknown figure `{w}`; expected one of {}", ALL.join(", ")),
            });
        }
    }
    let needs_bath = which.iter().any(|w| w != "fig2");
    let mut status = serde_json::Map::new();
    let mut failures = Vec::new();
    let env = if needs_bath { Some(Environment::build(cfg)) } else { None };
    for w in which {
        let res = match (w.as_str(), &env) {
            ("fig2", _) => out.sub("fig2", cfg).and_then(|d| fig2(cfg, &d)),
            (_, Some(Err(e))) => Err(CliError::Failed(format!("bath setup failed: {e}"))),
            (name, Some(Ok(env))) => out.sub(name, cfg).and_then(|d| match name {
                "fig3" => fig3(cfg, env, &d),
                "fig4" => fig4(cfg, &env.traj, env.horizon, &d),
                "fig5" => fig5(env, &d),
                "fig6" => fig6(cfg, env, &d),
                _ => fig7(cfg, env, &d),
            }),
            (_, None) => unreachable!("bath is built whenever a figure needs it"),
        };
        match res {
            Ok(v) => {
                status.insert(w.clone(), json!({ "status": "ok", "summary": v }));
            }
            Err(e) => {
                failures.push(format!("{w}: {e}"));
                status.insert(w.clone(), json!({ "status": "failed", "error": e.to_string(), "exit_code": e.exit_code() }));
            }
        }
    }
    let report = Value::Object(status);
    out.write_json("figures.json", &report)?;
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(CliError::Failed(failures.join("; ")))
    }
}

/// Spacing histograms at each kick strength with the two reference densities.
fn fig2(cfg: &RunConfig, out: &OutDir) -> Result<Value, CliError> {
    let f = &cfg.figures;
    let width = SPACING_MAX / SPACING_BINS as f64;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &k in &f.spectrum_k {
        let stats = spectrum_stats(cfg, f.spectrum_j, k)?;
        write_spectrum_csv(out, &format!("spectrum_k{}.csv", num(k)), &stats)?;
        let mut counts = vec![0usize; SPACING_BINS];
        for &s in &stats.spacings {
            let b = (s / width) as usize;
            if b < SPACING_BINS {
                counts[b] += 1;
            }
        }
        let n = stats.spacings.len() as f64;
        for (b, &cnt) in counts.iter().enumerate() {
            let mid = (b as f64 + 0.5) * width;
            rows.push(vec![
                num(k),
                num(b as f64 * width),
                num((b + 1) as f64 * width),
                num(cnt as f64 / (n * width)),
                num((-mid).exp()),
                num(0.5 * PI * mid * (-PI * mid * mid / 4.0).exp()),
            ]);
        }
        summaries.push(spectrum_summary(cfg, f.spectrum_j, k, &stats));
    }
    out.write_csv("fig2.csv", &["kick", "s_lo", "s_hi", "density", "poisson", "wigner"], rows)?;
    out.write_json("fig2.json", &summaries)?;
    Ok(json!(summaries))
}

/// `<J_y>(t)` along the first sampled trajectory at each kick strength.
fn fig3(cfg: &RunConfig, env: &Environment, out: &OutDir) -> Result<Value, CliError> {
    let ecfg = engine_config(cfg, cfg.figures.leakage_bound);
    let mut rows = Vec::new();
    let mut peaks = Vec::new();
    for &k in &cfg.figures.series_k {
        let top = Top::new(cfg, cfg.spin.j, k)?;
        let h = sample_histories(env, &top, &ecfg, 1, cfg.histories.output_dt)?.remove(0);
        rows.extend(h.jy_series.iter().map(|(t, y)| vec![num(k), num(*t), num(*y)]));
        peaks.push(json!({ "k": k, "jumps": h.records.len(), "peak_leakage": h.peak_leakage }));
    }
    out.write_csv("fig3.csv", &["kick", "t", "jy"], rows)?;
    Ok(json!(peaks))
}

/// `|phi_k(t)|` on a coarse time grid, long format.
fn fig4(cfg: &RunConfig, traj: &OneParticleTrajectory, horizon: f64, out: &OutDir) -> Result<Value, CliError> {
    let n = (horizon / cfg.figures.heatmap_dt).round() as usize;
    let mut rows = Vec::new();
    let mut front = Vec::new();
    for i in 0..=n {
        let t = (i as f64 * cfg.figures.heatmap_dt).min(horizon);
        let phi = traj.phi_at(t);
        let mut reach = 0;
        for (k, z) in phi.iter().enumerate() {
            let a = z.norm();
            if a * a > cfg.lightcone.a_cut {
                reach = k;
            }
            rows.push(vec![num(t), k.to_string(), num(a)]);
        }
        front.push((t, reach));
    }
    out.write_csv("fig4.csv", &["t", "site", "amplitude"], rows)?;
    out.write_csv("fig4_front.csv", &["t", "farthest_site"], front.iter().map(|(t, k)| vec![num(*t), k.to_string()]))?;
    let speed = front.iter().filter(|(t, _)| *t > 0.0).map(|(t, k)| *k as f64 / t).fold(0.0, f64::max);
    Ok(json!({ "sites": traj.sites(), "max_front_speed": speed }))
}

fn fig5(env: &Environment, out: &OutDir) -> Result<Value, CliError> {
    let counts: Vec<_> = env.schedule.counts().into_iter().filter(|c| c.t <= env.horizon + 1e-9).collect();
    let rows = counts
        .iter()
        .map(|c| vec![num(c.t), c.m_in.to_string(), c.m_out.to_string(), c.r.to_string()]);
    out.write_csv("fig5.csv", &["t", "m_in", "m_out", "r"], rows)?;
    let last = counts.last().copied();
    Ok(json!({
        "m_in": last.map_or(0, |c| c.m_in),
        "m_out": last.map_or(0, |c| c.m_out),
        "r": last.map_or(0, |c| c.r),
    }))
}

fn fig6(cfg: &RunConfig, env: &Environment, out: &OutDir) -> Result<Value, CliError> {
    let points = sweep(cfg, env, cfg.spin.j, &cfg.figures.jump_k, cfg.figures.leakage_bound)?;
    write_histogram(out, "fig6.csv", &points)?;
    write_jumps(out, "fig6_jumps.csv", &points)?;
    let summary: Vec<_> = points.iter().map(|(p, _)| p).collect();
    out.write_json("fig6.json", &summary)?;
    Ok(json!(summary
        .iter()
        .map(|p| json!({ "k": p.k, "mean_p_max": p.stats.mean_p_max }))
        .collect::<Vec<_>>()))
}

fn fig7(cfg: &RunConfig, env: &Environment, out: &OutDir) -> Result<Value, CliError> {
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &j in &cfg.figures.sweep_j {
        let points = sweep(cfg, env, j, &cfg.histories.k_list, cfg.figures.leakage_bound)?;
        for (p, _) in &points {
            rows.push(vec![
                num(p.j),
                num(p.k),
                num(p.stats.mean_delta_s),
                p.stats.n_jumps.to_string(),
                num(p.stats.mean_p_max),
                num(p.peak_leakage),
            ]);
        }
        all.extend(points.into_iter().map(|(p, _)| p));
    }
    out.write_csv("fig7.csv", &["j", "kick", "mean_delta_S", "n_jumps", "mean_p_max", "peak_leakage"], rows)?;
    out.write_json("fig7.json", &all)?;
    Ok(json!(all
        .iter()
        .map(|p| json!({ "j": p.j, "k": p.k, "mean_delta_s": p.stats.mean_delta_s }))
        .collect::<Vec<_>>()))
}

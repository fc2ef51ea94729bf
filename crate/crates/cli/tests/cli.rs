//! The binary end to end: exit codes, output files and their headers.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

use histent_core::checkpoint;

fn histent(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histent"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("HISTENT_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &TempDir, text: &str) -> String {
    let p = dir.path().join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn help_and_version_succeed() {
    let dir = TempDir::new().unwrap();
    assert_eq!(histent(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(histent(&["--version"], dir.path()).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(histent(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(histent(&["spectrum", "--j", "many"], dir.path()).status.code(), Some(1));
    let o = histent(&["spectrum", "--j", "-1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("spin.j"), "{}", stderr(&o));
}

#[test]
fn config_errors_name_key_and_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[spin]\nj = 3\nfoo = 1\n");
    let o = histent(&["--config", &cfg, "spectrum"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("spin.foo (line 3)"), "{}", stderr(&o));
    let o = histent(&["--config", "/nonexistent/run.toml", "spectrum"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn short_chain_is_a_numerical_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[bath]\nsites = 3\n\n[lightcone]\nhorizon = 20.0\n");
    let o = histent(&["--config", &cfg, "lightcone"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn spectrum_writes_csv_json_and_config_echo() {
    let dir = TempDir::new().unwrap();
    let o = histent(&["spectrum", "--j", "10", "--k", "3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(header(&dir.path().join("spectrum.csv")), "index,quasienergy,spacing");
    let rows = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 21);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("spectrum.json")).unwrap()).unwrap();
    assert_eq!(summary["levels"], 21);
    let echo = fs::read_to_string(dir.path().join("config.toml")).unwrap();
    let body: String = echo.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    let cfg = histent_cli::parse_config(&body).unwrap();
    assert_eq!((cfg.spin.j, cfg.spin.k), (10.0, 3.0));
}

#[test]
fn out_dir_from_environment() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_histent"))
        .args(["spectrum", "--j", "3"])
        .env("HISTENT_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(target.join("spectrum.csv").exists());
}

#[test]
fn json_only_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[output]\nformats = [\"json\"]\n");
    let out = dir.path().join("out");
    let o = histent(&["--config", &cfg, "spectrum", "--j", "3"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("spectrum.json").exists());
    assert!(!out.join("spectrum.csv").exists());
}

#[test]
fn chain_from_spectral_samples() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("density.csv");
    let mut text = String::from("omega,w\n");
    for i in 0..200 {
        let x = 0.8 + 0.4 * (i as f64 + 0.5) / 200.0;
        text.push_str(&format!("{x},{}\n", (1.0 - ((x - 1.0) / 0.2).powi(2)).sqrt()));
    }
    fs::write(&csv, text).unwrap();
    let out = dir.path().join("out");
    let o = histent(&["chain", "--spectral-csv", csv.to_str().unwrap(), "--sites", "6"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let chain: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("chain.json")).unwrap()).unwrap();
    assert_eq!(chain["sites"], 6);
    let hop = chain["hop"].as_array().unwrap();
    assert!(hop.iter().all(|h| h.as_f64().unwrap() > 0.0));
}

#[test]
fn lightcone_counts_and_modes() {
    let dir = TempDir::new().unwrap();
    let o = histent(&["lightcone", "--horizon", "30", "--dt", "0.05", "--stride", "2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(header(&dir.path().join("lightcone.csv")), "t,m_in,m_out,r");
    assert!(dir.path().join("modes.json").exists());
}

#[test]
fn evolve_checkpoints_decode() {
    let dir = TempDir::new().unwrap();
    let args = ["evolve", "--j", "2", "--horizon", "20", "--dt", "0.1", "--n-traj", "2", "--seed", "4"];
    let o = histent(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(header(&dir.path().join("evolve.csv")), "trajectory,t,jy");
    for i in 0..2 {
        let bytes = fs::read(dir.path().join(format!("state_{i}.bin"))).unwrap();
        let st = checkpoint::decode(&bytes).unwrap();
        assert!((st.time - 20.0).abs() < 1e-9);
        assert_eq!(st.spin_dim(), 5);
    }
    let o = histent(&["evolve", "--j", "2", "--horizon", "20", "--dt", "0.1", "--no-collapse"], &dir.path().join("mean"));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(header(&dir.path().join("mean/evolve.csv")), "t,jy");
    assert!(checkpoint::decode(&fs::read(dir.path().join("mean/state.bin")).unwrap()).is_ok());
}

#[test]
fn histories_writes_jumps_and_histogram() {
    let dir = TempDir::new().unwrap();
    let args = ["histories", "--j", "2", "--k-list", "-10,3", "--horizon", "20", "--dt", "0.1", "--n-traj", "2"];
    let o = histent(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        header(&dir.path().join("jumps.csv")),
        "j,kick,trajectory,k,t_out,q,p_q,p_q_max,delta_S,schmidt_rank"
    );
    assert_eq!(header(&dir.path().join("histogram.csv")), "j,kick,p_lo,p_hi,count");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
}

#[test]
fn oracle_check_passes() {
    let dir = TempDir::new().unwrap();
    let o = histent(&["oracle-check"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("oracle.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn reproduce_spacing_figure() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[figures]\nspectrum_j = 10\n");
    let out = dir.path().join("out");
    let o = histent(&["--config", &cfg, "reproduce", "--figures", "fig2"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(header(&out.join("fig2/fig2.csv")), "kick,s_lo,s_hi,density,poisson,wigner");
    assert!(out.join("fig2/spectrum_k2.csv").exists());
    assert!(out.join("figures.json").exists());
    let o = histent(&["reproduce", "--figures", "fig9"], &out);
    assert_eq!(o.status.code(), Some(1));
}

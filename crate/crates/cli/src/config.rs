//! Run configuration: a TOML document with one table per stage.
//!
//! Every key is optional. Unknown keys, type mismatches and constraint
//! violations are reported with the dotted key path and the line number.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::de::{DeTable, DeValue};
use toml::Spanned;

use crate::error::CliError;

/// Version of the configuration schema; bumped when a default changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub spin: SpinConfig,
    pub bath: BathConfig,
    pub lightcone: LightconeConfig,
    pub engine: EngineSection,
    pub histories: HistoriesConfig,
    pub figures: FiguresConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinConfig {
    pub j: f64,
    /// Kick strength.
    pub k: f64,
    /// Precession angle per period.
    pub p: f64,
    pub tau: f64,
    pub beta: f64,
    /// `J_y` eigenvalue of the initial spin state.
    pub initial_jy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BathConfig {
    pub eps: f64,
    pub hop: f64,
    pub h_sys: f64,
    /// Chain length; chosen from the horizon when absent.
    pub sites: Option<usize>,
    /// Two-column `omega,w` file; replaces `eps` and `hop` when present.
    pub spectral_csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightconeConfig {
    pub a_cut: f64,
    pub dt: f64,
    /// Grid steps between checkpoints.
    pub stride: usize,
    pub horizon: f64,
    /// Extra time propagated past the horizon so late records can decouple.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub dt: f64,
    pub n_max: usize,
    pub tolerance: f64,
    pub leakage_bound: f64,
    pub max_modes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistoriesConfig {
    pub seed: u64,
    pub n_traj: usize,
    pub k_list: Vec<f64>,
    /// Spacing of the `<J_y>` samples.
    pub output_dt: f64,
    /// Bins of the jump-probability histogram on [0, 1].
    pub bins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiguresConfig {
    pub spectrum_j: f64,
    pub spectrum_k: Vec<f64>,
    pub series_k: Vec<f64>,
    pub jump_k: Vec<f64>,
    pub sweep_j: Vec<f64>,
    /// Time step of the `|phi_k(t)|` heat map.
    pub heatmap_dt: f64,
    /// Cap-shell population tolerated in the kick-strength runs, whose cap
    /// is fixed; the observed peak is reported with the data.
    pub leakage_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: SCHEMA_VERSION,
            spin: SpinConfig::default(),
            bath: BathConfig::default(),
            lightcone: LightconeConfig::default(),
            engine: EngineSection::default(),
            histories: HistoriesConfig::default(),
            figures: FiguresConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for SpinConfig {
    fn default() -> Self {
        SpinConfig { j: 20.0, k: 3.0, p: 1.7, tau: 1.0, beta: 0.1, initial_jy: 0.0 }
    }
}

impl Default for BathConfig {
    fn default() -> Self {
        BathConfig { eps: 1.0, hop: 0.2, h_sys: 0.05, sites: None, spectral_csv: None }
    }
}

impl Default for LightconeConfig {
    fn default() -> Self {
        LightconeConfig { a_cut: 1e-4, dt: 0.01, stride: 10, horizon: 500.0, margin: 50.0 }
    }
}

impl Default for EngineSection {
    fn default() -> Self {
        EngineSection { dt: 0.01, n_max: 7, tolerance: 1e-8, leakage_bound: 1e-3, max_modes: 24 }
    }
}

impl Default for HistoriesConfig {
    fn default() -> Self {
        HistoriesConfig {
            seed: 0,
            n_traj: 1,
            k_list: vec![-10.0, -5.0, 0.0, 1.0, 2.0, 2.5, 3.0, 4.0, 5.0, 10.0],
            output_dt: 1.0,
            bins: 20,
        }
    }
}

impl Default for FiguresConfig {
    fn default() -> Self {
        FiguresConfig {
            spectrum_j: 40.0,
            spectrum_k: vec![2.0, 3.0],
            series_k: vec![1.0, -10.0],
            jump_k: vec![0.0, -10.0],
            sweep_j: vec![20.0, 40.0],
            heatmap_dt: 1.0,
            leakage_bound: 0.5,
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json] }
    }
}

impl RunConfig {
    /// Effective configuration as TOML; `parse_config` reads it back unchanged.
    pub fn echo(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }

    /// Constraint violations as (key path, message), first one only.
    pub fn check(&self) -> Result<(), (String, String)> {
        let fail = |key: &str, msg: String| Err((key.to_string(), msg));
        let s = &self.spin;
        if !(s.j >= 0.5) || !s.j.is_finite() || (s.j * 2.0).fract() != 0.0 {
            return fail("spin.j", format!("must be a positive multiple of 1/2, got {}", s.j));
        }
        for (key, v) in [("spin.k", s.k), ("spin.p", s.p), ("spin.beta", s.beta)] {
            if !v.is_finite() {
                return fail(key, format!("must be finite, got {v}"));
            }
        }
        if !(s.tau > 0.0) || !s.tau.is_finite() {
            return fail("spin.tau", format!("must be positive, got {}", s.tau));
        }
        if !(s.initial_jy.abs() <= s.j) || ((s.j - s.initial_jy) % 1.0) != 0.0 {
            return fail("spin.initial_jy", format!("{} is not an eigenvalue for j = {}", s.initial_jy, s.j));
        }
        let b = &self.bath;
        if !b.eps.is_finite() {
            return fail("bath.eps", format!("must be finite, got {}", b.eps));
        }
        if !(b.hop > 0.0) || !b.hop.is_finite() {
            return fail("bath.hop", format!("must be positive, got {}", b.hop));
        }
        if !b.h_sys.is_finite() {
            return fail("bath.h_sys", format!("must be finite, got {}", b.h_sys));
        }
        if b.sites == Some(0) {
            return fail("bath.sites", "must be at least 1".into());
        }
        let l = &self.lightcone;
        if !(l.a_cut > 0.0) || !l.a_cut.is_finite() {
            return fail("lightcone.a_cut", format!("must be positive, got {}", l.a_cut));
        }
        if !(l.dt > 0.0) || !l.dt.is_finite() {
            return fail("lightcone.dt", format!("must be positive, got {}", l.dt));
        }
        if l.stride == 0 {
            return fail("lightcone.stride", "must be at least 1".into());
        }
        if !(l.horizon >= l.dt) || !l.horizon.is_finite() {
            return fail("lightcone.horizon", format!("must be at least dt = {}, got {}", l.dt, l.horizon));
        }
        if !(l.margin >= 0.0) || !l.margin.is_finite() {
            return fail("lightcone.margin", format!("must be nonnegative, got {}", l.margin));
        }
        let e = &self.engine;
        if !(e.dt > 0.0) || !e.dt.is_finite() {
            return fail("engine.dt", format!("must be positive, got {}", e.dt));
        }
        if e.n_max == 0 || e.n_max > 64 {
            return fail("engine.n_max", format!("must be in 1..=64, got {}", e.n_max));
        }
        if !(e.tolerance > 0.0) {
            return fail("engine.tolerance", format!("must be positive, got {}", e.tolerance));
        }
        if !(e.leakage_bound > 0.0) {
            return fail("engine.leakage_bound", format!("must be positive, got {}", e.leakage_bound));
        }
        if e.max_modes == 0 {
            return fail("engine.max_modes", "must be at least 1".into());
        }
        let h = &self.histories;
        if h.n_traj == 0 {
            return fail("histories.n_traj", "must be at least 1".into());
        }
        if h.k_list.is_empty() || h.k_list.iter().any(|k| !k.is_finite()) {
            return fail("histories.k_list", "must be a nonempty list of finite numbers".into());
        }
        if !(h.output_dt > 0.0) || !h.output_dt.is_finite() {
            return fail("histories.output_dt", format!("must be positive, got {}", h.output_dt));
        }
        if h.bins == 0 {
            return fail("histories.bins", "must be at least 1".into());
        }
        let f = &self.figures;
        if f.spectrum_j < 0.5 || (f.spectrum_j * 2.0).fract() != 0.0 {
            return fail("figures.spectrum_j", format!("must be a positive multiple of 1/2, got {}", f.spectrum_j));
        }
        if f.sweep_j.iter().any(|j| *j < 0.5 || (j * 2.0).fract() != 0.0) {
            return fail("figures.sweep_j", "entries must be positive multiples of 1/2".into());
        }
        for (key, list) in [("figures.spectrum_k", &f.spectrum_k), ("figures.series_k", &f.series_k), ("figures.jump_k", &f.jump_k)] {
            if list.iter().any(|k| !k.is_finite()) {
                return fail(key, "entries must be finite".into());
            }
        }
        if !(f.heatmap_dt > 0.0) || !f.heatmap_dt.is_finite() {
            return fail("figures.heatmap_dt", format!("must be positive, got {}", f.heatmap_dt));
        }
        if !(f.leakage_bound > 0.0) {
            return fail("figures.leakage_bound", format!("must be positive, got {}", f.leakage_bound));
        }
        if self.schema != SCHEMA_VERSION {
            return fail("schema", format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema));
        }
        Ok(())
    }

    /// Re-check after command-line overrides; no source text to point into.
    pub fn validate(&self) -> Result<(), CliError> {
        self.check().map_err(|(path, message)| CliError::Config { path, line: None, message })
    }
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config {
        path: String::new(),
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config {
            path: if path == "." { String::new() } else { path },
            line: inner.span().map(|s| line_of(text, s.start)),
            message: inner.message().to_string(),
        }
    })?;
    cfg.check().map_err(|(path, message)| CliError::Config {
        line: key_line(text, &path),
        path,
        message,
    })?;
    Ok(cfg)
}

fn line_of(text: &str, offset: usize) -> usize {
    let end = offset.min(text.len());
    text.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
}

/// Line of a dotted key in the source, if it was written there.
fn key_line(text: &str, path: &str) -> Option<usize> {
    let root = DeTable::parse(text).ok()?;
    let mut table: &DeTable = root.get_ref();
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        let (key, value): (&Spanned<_>, &Spanned<DeValue>) = table.iter().find(|(k, _)| k.get_ref() == part)?;
        if parts.peek().is_none() {
            return Some(line_of(text, key.span().start));
        }
        match value.get_ref() {
            DeValue::Table(t) => table = t,
            _ => return Some(line_of(text, value.span().start)),
        }
    }
    None
}

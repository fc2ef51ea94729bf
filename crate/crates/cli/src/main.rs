use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use histent_cli::commands;
use histent_cli::figures;
use histent_cli::output::OutDir;
use histent_cli::{parse_config, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "histent", version, about = "Decoherent-history entropy of an open kicked top")]
struct Cli {
    /// TOML run configuration; absent keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "HISTENT_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads for independent trajectories.
    #[arg(long, global = true, env = "HISTENT_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quasienergy spacings of the closed top.
    Spectrum(SpinArgs),
    /// Chain coefficients of the bath.
    Chain(ChainArgs),
    /// Schedule of coupled and decoupled modes.
    Lightcone(LightconeArgs),
    /// <J_y>(t) along sampled trajectories or without collapse.
    Evolve(EvolveArgs),
    /// Jump statistics and entropy production over kick strengths.
    Histories(HistoriesArgs),
    /// Compare the engine against brute force on small instances.
    OracleCheck,
    /// Data for the figures.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct SpinArgs {
    #[arg(long, allow_negative_numbers = true)]
    j: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    k: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    p: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
}

#[derive(Args)]
struct ChainArgs {
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    hop: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    h_sys: Option<f64>,
    #[arg(long)]
    sites: Option<usize>,
    /// Two-column omega,w samples of the spectral density.
    #[arg(long)]
    spectral_csv: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
}

#[derive(Args)]
struct LightconeArgs {
    #[arg(long, allow_negative_numbers = true)]
    a_cut: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    spin: SpinArgs,
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    a_cut: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    /// Integrator step.
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep decoupled modes as spectators instead of sampling jumps.
    #[arg(long)]
    no_collapse: bool,
}

#[derive(Args)]
struct HistoriesArgs {
    #[arg(long, allow_negative_numbers = true)]
    j: Option<f64>,
    /// Kick strengths, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    k_list: Option<Vec<f64>>,
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    a_cut: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    /// Integrator step.
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Figures to produce, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    figures: Option<Vec<String>>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl SpinArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.spin.j, self.j);
        set(&mut cfg.spin.k, self.k);
        set(&mut cfg.spin.p, self.p);
        set(&mut cfg.spin.tau, self.tau);
        set(&mut cfg.spin.beta, self.beta);
    }
}

fn load(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(format!("reading {}", p.display()), e))?;
            parse_config(&text)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load(&cli.config)?;
    set(&mut cfg.output.dir, cli.out);
    if let Some(n) = cli.workers {
        // Fails only if a pool already exists, which cannot happen here.
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().ok();
    }
    let command = cli.command;
    match command {
        Command::Spectrum(ref a) => a.apply(&mut cfg),
        Command::Chain(ref a) => {
            set(&mut cfg.bath.eps, a.eps);
            set(&mut cfg.bath.hop, a.hop);
            set(&mut cfg.bath.h_sys, a.h_sys);
            if a.sites.is_some() {
                cfg.bath.sites = a.sites;
            }
            if a.spectral_csv.is_some() {
                cfg.bath.spectral_csv = a.spectral_csv.clone();
            }
            set(&mut cfg.lightcone.horizon, a.horizon);
        }
        Command::Lightcone(ref a) => {
            set(&mut cfg.lightcone.a_cut, a.a_cut);
            set(&mut cfg.lightcone.dt, a.dt);
            set(&mut cfg.lightcone.horizon, a.horizon);
            set(&mut cfg.lightcone.stride, a.stride);
        }
        Command::Evolve(ref a) => {
            a.spin.apply(&mut cfg);
            set(&mut cfg.lightcone.horizon, a.horizon);
            set(&mut cfg.lightcone.a_cut, a.a_cut);
            set(&mut cfg.engine.n_max, a.n_max);
            set(&mut cfg.engine.dt, a.dt);
            set(&mut cfg.histories.n_traj, a.n_traj);
            set(&mut cfg.histories.seed, a.seed);
        }
        Command::Histories(ref a) => {
            set(&mut cfg.spin.j, a.j);
            set(&mut cfg.histories.k_list, a.k_list.clone());
            set(&mut cfg.histories.n_traj, a.n_traj);
            set(&mut cfg.histories.seed, a.seed);
            set(&mut cfg.lightcone.a_cut, a.a_cut);
            set(&mut cfg.engine.n_max, a.n_max);
            set(&mut cfg.lightcone.horizon, a.horizon);
            set(&mut cfg.engine.dt, a.dt);
        }
        Command::OracleCheck | Command::Reproduce(_) => {}
    }
    cfg.validate()?;
    let out = OutDir::create(&cfg.output.dir, &cfg)?;
    let summary = match command {
        Command::Spectrum(_) => commands::spectrum(&cfg, &out)?,
        Command::Chain(_) => commands::chain(&cfg, &out)?,
        Command::Lightcone(_) => commands::lightcone(&cfg, &out)?,
        Command::Evolve(a) => commands::evolve(&cfg, &out, a.no_collapse)?,
        Command::Histories(_) => commands::histories(&cfg, &out)?,
        Command::OracleCheck => commands::oracle_check(&out)?,
        Command::Reproduce(a) => {
            let which = a.figures.unwrap_or_else(|| figures::ALL.iter().map(|s| s.to_string()).collect());
            figures::reproduce(&cfg, &out, &which)?
        }
    };
    println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

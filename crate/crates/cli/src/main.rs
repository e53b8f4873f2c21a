//! `equipart`: run disordered-trap scenarios and export weak-value
//! diagnostics time series.

mod config;
mod runner;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use config::{preset_table, Preset, ScenarioConfig};

#[derive(Parser)]
#[command(name = "equipart", version, about = "Few-fermion trap dynamics with weak-value equipartition diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one scenario (or a seed ensemble) and write artifacts.
    Run(RunArgs),
    /// Print the scenario preset table.
    Presets,
    /// Run the invariant suite on a short trajectory.
    Check,
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML config file; flags override file values.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    #[arg(long)]
    preset: Option<Preset>,
    /// Enable the disorder potential (preset initial conditions follow it).
    #[arg(long, overrides_with = "no_disorder")]
    disorder: bool,
    #[arg(long = "no-disorder")]
    no_disorder: bool,
    /// Initial centers "x01,x02".
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    x0: Option<[f64; 2]>,
    /// Initial boosts "p01,p02".
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    p0: Option<[f64; 2]>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "gamma-d")]
    gamma_d: Option<f64>,
    #[arg(long = "sigma-d")]
    sigma_d: Option<f64>,
    /// Packet width (0 = harmonic ground width).
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long = "half-width")]
    half_width: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    #[arg(long = "sample-every")]
    sample_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed range "a..b" (inclusive); runs one process per seed.
    #[arg(long, value_parser = parse_seed_range)]
    seeds: Option<(u64, u64)>,
    /// Cap on concurrent ensemble processes (default: available cores).
    #[arg(long = "max-procs")]
    max_procs: Option<usize>,
    #[arg(long = "output-dir")]
    output_dir: Option<String>,
    #[arg(long = "emit-plots")]
    emit_plots: bool,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected two comma-separated values, got {s:?}"));
    }
    let a = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let b = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    Ok([a, b])
}

fn parse_seed_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a..b, got {s:?}"))?;
    let lo = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("{e}"))?;
    if hi < lo {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok((lo, hi))
}

fn resolve_config(args: &RunArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::from_file(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(p) = args.preset {
        cfg.preset = p;
    }
    if args.disorder {
        cfg.disorder = true;
    }
    if args.no_disorder {
        cfg.disorder = false;
    }
    // Preset initial conditions follow the (preset, disorder) pair unless the
    // user pins x0/p0 explicitly (custom runs only).
    cfg.apply_preset();
    if let Some(x0) = args.x0 {
        cfg.x0 = x0;
    }
    if let Some(p0) = args.p0 {
        cfg.p0 = p0;
    }
    if let Some(v) = args.omega {
        cfg.omega = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.gamma_d {
        cfg.gamma_d = v;
    }
    if let Some(v) = args.sigma_d {
        cfg.sigma_d = v;
    }
    if let Some(v) = args.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = args.points {
        cfg.points = v;
    }
    if let Some(v) = args.half_width {
        cfg.half_width = v;
    }
    if let Some(v) = args.dt {
        cfg.dt = v;
    }
    if let Some(v) = args.t_final {
        cfg.t_final = v;
    }
    if let Some(v) = args.sample_every {
        cfg.sample_every = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.output_dir {
        cfg.output_dir = v.clone();
    }
    if args.emit_plots {
        cfg.emit_plots = true;
    }
    Ok(cfg)
}

fn main() {
    if let Err(e) = dispatch() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = resolve_config(&args)?;
            match args.seeds {
                Some(range) => {
                    let procs = args.max_procs.unwrap_or_else(|| {
                        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
                    });
                    runner::run_ensemble(&cfg, range, procs)?;
                    println!("ensemble written under {}", runner::resolve_output_dir(&cfg).display());
                }
                None => {
                    let out = runner::run(&cfg)?;
                    println!("run written to {}", out.dir.display());
                    for v in &out.verdicts {
                        match v.t_eq {
                            Some(t) => println!("  {} t_eq = {t:.3}", v.channel),
                            None => println!("  {} t_eq not detected", v.channel),
                        }
                    }
                }
            }
            Ok(())
        }
        Command::Presets => {
            println!("preset  disorder  x0            p0");
            for preset in [Preset::D1, Preset::D2, Preset::D3] {
                for disorder in [false, true] {
                    let (x0, p0) = preset_table(preset, disorder).unwrap();
                    println!(
                        "{preset}      {}       ({:5.1},{:5.1})  ({:5.1},{:5.1})",
                        if disorder { "yes" } else { "no " },
                        x0[0],
                        x0[1],
                        p0[0],
                        p0[1]
                    );
                }
            }
            Ok(())
        }
        Command::Check => {
            if runner::check()? {
                println!("all checks passed");
                Ok(())
            } else {
                bail!("invariant suite failed");
            }
        }
    }
}

//! Run orchestration: propagate, post-process every sample into diagnostics
//! and CoM rows, and export bit-stable artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use equipart_core::comframe::{self, ComRecord};
use equipart_core::diagnostics::{self, Channel, DiagnosticsRecord, DEFAULT_DELTA, DEFAULT_WINDOW};
use equipart_core::lattice::{ConfigGrid, Grid1D};
use equipart_core::model::{build_initial_state, GaussianSpec, PotentialField};
use equipart_core::propagator::Propagator;
use equipart_core::weakfields::{Differentiator, WeakFieldSet};

use crate::config::ScenarioConfig;

/// Environment variable naming the root under which relative output
/// directories are created.
pub const OUTPUT_ROOT_ENV: &str = "EQUIPART_OUTPUT_ROOT";

pub const CSV_COLUMNS: &[&str] = &[
    "t",
    "norm",
    "x_mean_1",
    "x_mean_2",
    "p_mean_1",
    "p_mean_2",
    "v_mean_1",
    "v_mean_2",
    "u_mean_1",
    "u_mean_2",
    "k_total",
    "v_h",
    "v_i",
    "v_d",
    "h_total",
    "k_b_1",
    "k_b_2",
    "q_b_1",
    "q_b_2",
    "c_pp",
    "c_vv",
    "c_uu",
    "c_xx",
    "c_weak_re",
    "c_weak_im",
    "equip_ratio",
    "virial_ratio",
    "masked_prob",
    "flags",
    "com_k_c",
    "com_v_h_c",
    "com_e_c",
    "rel_k_r",
    "rel_v_h_r",
    "rel_v_i_r",
    "rel_e_r",
    "com_k_b_c",
    "com_q_b_c",
    "rel_k_b_r",
    "rel_q_b_r",
];

/// 17 significant digits, enough to reproduce the f64 bit pattern.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_row(rec: &DiagnosticsRecord, com: &ComRecord) -> String {
    let fields: Vec<String> = vec![
        fmt_f64(rec.t),
        fmt_f64(rec.norm),
        fmt_f64(rec.x_mean[0]),
        fmt_f64(rec.x_mean[1]),
        fmt_f64(rec.p_mean[0]),
        fmt_f64(rec.p_mean[1]),
        fmt_f64(rec.v_mean[0]),
        fmt_f64(rec.v_mean[1]),
        fmt_f64(rec.u_mean[0]),
        fmt_f64(rec.u_mean[1]),
        fmt_f64(rec.k_total),
        fmt_f64(rec.v_h_mean),
        fmt_f64(rec.v_i_mean),
        fmt_f64(rec.v_d_mean),
        fmt_f64(rec.h_total),
        fmt_f64(rec.k_b[0]),
        fmt_f64(rec.k_b[1]),
        fmt_f64(rec.q_b[0]),
        fmt_f64(rec.q_b[1]),
        fmt_f64(rec.c_pp),
        fmt_f64(rec.c_vv),
        fmt_f64(rec.c_uu),
        fmt_f64(rec.c_xx),
        fmt_f64(rec.c_weak.re),
        fmt_f64(rec.c_weak.im),
        fmt_f64(rec.equipartition_ratio),
        fmt_f64(rec.virial_ratio),
        fmt_f64(rec.masked_probability),
        rec.flags.to_string(),
        fmt_f64(com.k_c),
        fmt_f64(com.v_h_c),
        fmt_f64(com.e_c),
        fmt_f64(com.k_r),
        fmt_f64(com.v_h_r),
        fmt_f64(com.v_i_r),
        fmt_f64(com.e_r),
        fmt_f64(com.k_b_c),
        fmt_f64(com.q_b_c),
        fmt_f64(com.k_b_r),
        fmt_f64(com.q_b_r),
    ];
    fields.join(",")
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChannelVerdict {
    pub channel: String,
    pub delta: f64,
    pub window: f64,
    pub t_eq: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerdictFile {
    pub channels: Vec<ChannelVerdict>,
    pub ehrenfest_max_defect: Option<f64>,
    pub pre_teq_drift_e_c: Option<f64>,
    pub post_teq_drift_e_c: Option<f64>,
    pub pre_teq_drift_e_r: Option<f64>,
    pub post_teq_drift_e_r: Option<f64>,
}

pub struct RunOutput {
    pub dir: PathBuf,
    pub verdicts: Vec<ChannelVerdict>,
}

/// Resolve the output directory against the environment root.
pub fn resolve_output_dir(config: &ScenarioConfig) -> PathBuf {
    let dir = PathBuf::from(&config.output_dir);
    if dir.is_absolute() {
        return dir;
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(dir),
        None => dir,
    }
}

/// Execute one configured propagation and write run.json, series.csv,
/// verdict.json, and optionally the plot scripts.
pub fn run(config: &ScenarioConfig) -> Result<RunOutput> {
    config.validate()?;
    let dir = resolve_output_dir(config);
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating output dir {}", dir.display()))?;

    let resolved = serde_json::json!({
        "config": config,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": config.seed,
    });
    fs::write(dir.join("run.json"), serde_json::to_string_pretty(&resolved)?)
        .context("writing run.json")?;

    let grid = ConfigGrid::new(Grid1D::new(config.points, config.half_width)?, 2)?;
    let params = config.trap_params();
    let potential = PotentialField::build(&params, &grid)?;
    let sigma = config.packet_sigma();
    let specs = [
        GaussianSpec::new(config.x0[0], config.p0[0], sigma)?,
        GaussianSpec::new(config.x0[1], config.p0[1], sigma)?,
    ];
    let mut psi = build_initial_state(&specs, &grid)?;
    let mut propagator = Propagator::new(&grid, &potential, config.dt)?;
    if propagator.plan().phase_wrap_warning {
        eprintln!("warning: dt * max|V| exceeds the pi phase-wrap guard");
    }
    let mut diff = Differentiator::spectral(&grid);

    let csv_path = dir.join("series.csv");
    let mut csv = BufWriter::new(File::create(&csv_path).context("creating series.csv")?);
    writeln!(csv, "{}", CSV_COLUMNS.join(","))?;

    let mut series: Vec<DiagnosticsRecord> = Vec::new();
    let mut com_series: Vec<ComRecord> = Vec::new();
    propagator.evolve(&mut psi, config.t_final, config.sample_every, |_t, state| {
        let wf = WeakFieldSet::compute(state, &mut diff)?;
        let rec = diagnostics::sample(state, &potential, &wf)?;
        let com = comframe::com_sample(state, &potential, &wf, params.omega)?;
        writeln!(csv, "{}", csv_row(&rec, &com)).map_err(|e| {
            equipart_core::CoreError::InvalidParameter(format!("csv write failed: {e}"))
        })?;
        series.push(rec);
        com_series.push(com);
        Ok(())
    })?;
    csv.flush()?;

    let mut verdicts = Vec::new();
    let mut equip_teq = None;
    for channel in [Channel::Equipartition, Channel::Virial, Channel::Correlation] {
        let t_eq = match diagnostics::detect_t_eq_channel(
            &series,
            channel_delta(channel),
            DEFAULT_WINDOW,
            channel,
        ) {
            Ok(v) => v.t_eq,
            Err(_) => None,
        };
        if channel == Channel::Equipartition {
            equip_teq = t_eq;
        }
        verdicts.push(ChannelVerdict {
            channel: channel.name().to_string(),
            delta: channel_delta(channel),
            window: DEFAULT_WINDOW,
            t_eq,
        });
    }
    let drift = comframe::com_separability_drift(&com_series, equip_teq)?;
    let verdict_file = VerdictFile {
        channels: verdicts,
        ehrenfest_max_defect: diagnostics::ehrenfest_check(&series).ok(),
        pre_teq_drift_e_c: Some(drift.pre_c),
        post_teq_drift_e_c: drift.post_c,
        pre_teq_drift_e_r: Some(drift.pre_r),
        post_teq_drift_e_r: drift.post_r,
    };
    fs::write(
        dir.join("verdict.json"),
        serde_json::to_string_pretty(&verdict_file)?,
    )
    .context("writing verdict.json")?;

    if config.emit_plots {
        write_plot_scripts(&dir)?;
    }

    Ok(RunOutput { dir, verdicts: verdict_file.channels })
}

fn channel_delta(channel: Channel) -> f64 {
    match channel {
        Channel::Equipartition => DEFAULT_DELTA,
        // Post-thermalization virial band from the acceptance contract.
        Channel::Virial => 0.15,
        Channel::Correlation => DEFAULT_DELTA,
    }
}

/// Seed-ensemble runner: one subdirectory per seed plus aggregate t_eq stats.
pub fn run_ensemble(base: &ScenarioConfig, seeds: (u64, u64), max_procs: usize) -> Result<()> {
    if seeds.1 < seeds.0 {
        bail!("empty seed range {}..{}", seeds.0, seeds.1);
    }
    let root = resolve_output_dir(base);
    fs::create_dir_all(&root)?;
    let exe = std::env::current_exe().context("locating current executable")?;
    let mut pending: Vec<u64> = (seeds.0..=seeds.1).collect();
    let mut active: Vec<(u64, std::process::Child)> = Vec::new();
    let limit = max_procs.max(1);
    while !pending.is_empty() || !active.is_empty() {
        while active.len() < limit && !pending.is_empty() {
            let seed = pending.remove(0);
            let sub = root.join(format!("seed_{seed:04}"));
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.output_dir = sub.to_string_lossy().into_owned();
            let cfg_path = root.join(format!("seed_{seed:04}.toml"));
            fs::write(&cfg_path, toml::to_string(&cfg)?)?;
            let child = std::process::Command::new(&exe)
                .arg("run")
                .arg("--config")
                .arg(&cfg_path)
                .spawn()
                .context("spawning ensemble worker")?;
            active.push((seed, child));
        }
        let (seed, mut child) = active.remove(0);
        let status = child.wait()?;
        if !status.success() {
            bail!("ensemble worker for seed {seed} failed with {status}");
        }
    }

    // Aggregate per-channel t_eq statistics.
    let mut per_channel: std::collections::BTreeMap<String, Vec<Option<f64>>> = Default::default();
    for seed in seeds.0..=seeds.1 {
        let verdict_path = root.join(format!("seed_{seed:04}")).join("verdict.json");
        let text = fs::read_to_string(&verdict_path)
            .with_context(|| format!("reading {}", verdict_path.display()))?;
        let v: VerdictFile = serde_json::from_str(&text)?;
        for ch in v.channels {
            per_channel.entry(ch.channel).or_default().push(ch.t_eq);
        }
    }
    let aggregate: Vec<serde_json::Value> = per_channel
        .into_iter()
        .map(|(channel, teqs)| {
            let finite: Vec<f64> = teqs.iter().filter_map(|t| *t).collect();
            let mean = if finite.is_empty() {
                None
            } else {
                Some(finite.iter().sum::<f64>() / finite.len() as f64)
            };
            serde_json::json!({
                "channel": channel,
                "detected": finite.len(),
                "total": teqs.len(),
                "t_eq_values": teqs,
                "t_eq_mean": mean,
                "t_eq_min": finite.iter().cloned().fold(f64::INFINITY, f64::min),
                "t_eq_max": finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect();
    fs::write(
        root.join("ensemble.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "seeds": [seeds.0, seeds.1],
            "channels": aggregate,
        }))?,
    )?;
    Ok(())
}

/// Gnuplot panels mirroring the run figures: energies, velocities/positions,
/// kinetic comparison, correlations.
fn write_plot_scripts(dir: &Path) -> Result<()> {
    let header = "set datafile separator ','\nset key autotitle columnhead\nset xlabel 't'\nset term pngcairo size 1000,600\n";
    let scripts: [(&str, String); 4] = [
        (
            "plot_energies.gp",
            format!(
                "{header}set output 'energies.png'\nset ylabel 'energy'\nplot 'series.csv' using 1:11 with lines title '<K>', \\\n     '' using 1:12 with lines title '<V_H>', \\\n     '' using 1:($13*100) with lines title '<V_I> x100', \\\n     '' using 1:15 with lines title '<H>'\n"
            ),
        ),
        (
            "plot_velocities.gp",
            format!(
                "{header}set output 'velocities.png'\nset ylabel 'mean'\nplot 'series.csv' using 1:7 with lines title '<v>', \\\n     '' using 1:3 with lines title '<x>', \\\n     '' using 1:9 with lines title '<u>'\n"
            ),
        ),
        (
            "plot_kinetic.gp",
            format!(
                "{header}set output 'kinetic.png'\nset ylabel 'energy'\nplot 'series.csv' using 1:11 with lines title '<K>', \\\n     '' using 1:($16+$17) with lines title '<K_B>', \\\n     '' using 1:($18+$19) with lines title '<Q_B>'\n"
            ),
        ),
        (
            "plot_correlations.gp",
            format!(
                "{header}set output 'correlations.png'\nset ylabel 'correlation'\nplot 'series.csv' using 1:20 with lines title 'C_pp', \\\n     '' using 1:21 with lines title 'C_vv', \\\n     '' using 1:22 with lines title 'C_uu', \\\n     '' using 1:23 with lines title 'C_xx'\n"
            ),
        ),
    ];
    for (name, body) in scripts {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}

/// Short-trajectory invariant suite behind `equipart check`.
pub fn check() -> Result<bool> {
    use equipart_core::lattice::norm_sq;
    use equipart_core::weakfields::osmotic_balance_residual;

    let grid = ConfigGrid::new(Grid1D::new(256, 14.0)?, 2)?;
    let mut cfg = ScenarioConfig::default();
    cfg.preset = crate::config::Preset::D3;
    cfg.disorder = false;
    cfg.apply_preset();
    let params = cfg.trap_params();
    let potential = PotentialField::build(&params, &grid)?;
    let sigma = cfg.packet_sigma();
    let specs = [
        GaussianSpec::new(cfg.x0[0], cfg.p0[0], sigma)?,
        GaussianSpec::new(cfg.x0[1], cfg.p0[1], sigma)?,
    ];
    let mut psi = build_initial_state(&specs, &grid)?;
    let mut propagator = Propagator::new(&grid, &potential, 1e-3)?;
    let mut diff = Differentiator::spectral(&grid);

    let mut series = Vec::new();
    let mut worst_kq: f64 = 0.0;
    let mut worst_u: f64 = 0.0;
    let mut worst_pv: f64 = 0.0;
    let mut worst_twoc: f64 = 0.0;
    let mut worst_weak_re: f64 = 0.0;
    let mut worst_osmotic: f64 = 0.0;
    let mut flags = 0u32;
    propagator.evolve(&mut psi, 6.0, 50, |_t, state| {
        let wf = WeakFieldSet::compute(state, &mut diff)?;
        let rec = diagnostics::sample(state, &potential, &wf)?;
        worst_kq = worst_kq.max(
            ((rec.k_b_total() + rec.q_b_total()) - rec.k_total).abs() / rec.k_total,
        );
        worst_u = worst_u.max(rec.u_mean[0].abs()).max(rec.u_mean[1].abs());
        worst_pv = worst_pv.max((rec.p_mean[0] - rec.v_mean[0]).abs());
        worst_twoc = worst_twoc
            .max((rec.c_pp - (rec.c_vv + rec.c_uu)).abs() / rec.c_pp.abs().max(1.0));
        worst_weak_re = worst_weak_re
            .max((rec.c_weak.re - 2.0 * rec.c_uu).abs() / rec.c_uu.abs().max(1.0));
        worst_osmotic = worst_osmotic.max(osmotic_balance_residual(state, &mut diff, 0)?);
        flags |= rec.flags;
        series.push(rec);
        Ok(())
    })?;
    let norm_drift = (norm_sq(&psi) - 1.0).abs();
    let h0 = series[0].h_total;
    let h_drift = series
        .iter()
        .map(|r| (r.h_total - h0).abs() / h0.abs())
        .fold(0.0f64, f64::max);
    let ehrenfest = diagnostics::ehrenfest_check(&series)?;

    let checks: [(&str, f64, f64); 9] = [
        ("norm drift", norm_drift, 1e-9),
        ("energy drift", h_drift, 1e-6),
        ("kinetic sum identity", worst_kq, 1e-6),
        ("mean osmotic velocity", worst_u, 1e-8),
        ("momentum = current velocity", worst_pv, 1e-8),
        ("correlation sum identity", worst_twoc, 1e-6),
        ("weak correlation real part", worst_weak_re, 1e-6),
        ("osmotic balance residual", worst_osmotic, 1e-6),
        ("ehrenfest defect", ehrenfest, 1e-4),
    ];
    let mut all_ok = true;
    for (name, value, bound) in checks {
        let ok = value <= bound;
        all_ok &= ok;
        println!(
            "{} {name}: {value:.3e} (bound {bound:.1e})",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if flags != 0 {
        all_ok = false;
        println!("FAIL flagged records present (flags bitmask {flags})");
    } else {
        println!("PASS no flagged records");
    }
    Ok(all_ok)
}

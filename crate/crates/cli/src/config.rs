//! Flat, file-backed run configuration and the Table-of-scenarios presets.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use equipart_core::model::TrapParams;

/// The three nonequilibrium scenarios plus free-form parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Preset {
    D1,
    D2,
    D3,
    #[serde(rename = "custom")]
    Custom,
}

impl std::str::FromStr for Preset {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "D1" => Ok(Preset::D1),
            "D2" => Ok(Preset::D2),
            "D3" => Ok(Preset::D3),
            "CUSTOM" => Ok(Preset::Custom),
            other => bail!("unknown preset {other:?} (expected D1, D2, D3, or custom)"),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Preset::D1 => "D1",
            Preset::D2 => "D2",
            Preset::D3 => "D3",
            Preset::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// Initial centers and boosts for a (preset, disorder) pair.
pub fn preset_table(preset: Preset, disorder: bool) -> Option<([f64; 2], [f64; 2])> {
    match (preset, disorder) {
        (Preset::D1, false) => Some(([-2.0, 2.0], [0.0, 0.0])),
        (Preset::D1, true) => Some(([-20.0, 20.0], [0.0, 0.0])),
        (Preset::D2, false) => Some(([-2.0, 2.0], [4.0, 4.0])),
        (Preset::D2, true) => Some(([-2.0, 2.0], [20.0, 20.0])),
        (Preset::D3, false) => Some(([-2.0, 2.0], [2.0, 2.0])),
        (Preset::D3, true) => Some(([-20.0, 20.0], [20.0, 20.0])),
        (Preset::Custom, _) => None,
    }
}

/// Full run configuration, stored as one flat key-value document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub preset: Preset,
    pub disorder: bool,
    pub x0: [f64; 2],
    pub p0: [f64; 2],
    pub omega: f64,
    pub alpha: f64,
    pub gamma_d: f64,
    pub sigma_d: f64,
    /// Packet width; zero means the harmonic ground width 1/sqrt(omega).
    pub sigma: f64,
    pub points: usize,
    pub half_width: f64,
    pub dt: f64,
    pub t_final: f64,
    pub sample_every: usize,
    pub seed: u64,
    pub output_dir: String,
    pub emit_plots: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            preset: Preset::D1,
            disorder: false,
            x0: [-2.0, 2.0],
            p0: [0.0, 0.0],
            omega: 1.0,
            alpha: 1.0,
            gamma_d: 2.0,
            sigma_d: 1.0,
            sigma: 0.0,
            points: 1024,
            half_width: 45.0,
            dt: 1e-3,
            t_final: 400.0,
            sample_every: 100,
            seed: 1,
            output_dir: "runs/latest".into(),
            emit_plots: false,
        }
    }
}

impl ScenarioConfig {
    /// Load a flat TOML document.
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ScenarioConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Overwrite initial conditions from the preset table.
    pub fn apply_preset(&mut self) {
        if let Some((x0, p0)) = preset_table(self.preset, self.disorder) {
            self.x0 = x0;
            self.p0 = p0;
        }
    }

    pub fn packet_sigma(&self) -> f64 {
        if self.sigma > 0.0 {
            self.sigma
        } else {
            1.0 / self.omega.sqrt()
        }
    }

    pub fn trap_params(&self) -> TrapParams {
        TrapParams {
            omega: self.omega,
            alpha: self.alpha,
            gamma_d: if self.disorder { self.gamma_d } else { 0.0 },
            sigma_d: self.sigma_d,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.alpha > 0.0 && self.sigma_d > 0.0) {
            bail!("omega, alpha, sigma_d must be positive");
        }
        if self.gamma_d < 0.0 || self.sigma < 0.0 {
            bail!("gamma_d and sigma must be non-negative");
        }
        if self.points % 2 != 0 || self.points < 8 {
            bail!("points must be even and at least 8");
        }
        if !(self.half_width > 0.0 && self.dt > 0.0 && self.t_final >= 0.0) {
            bail!("half_width, dt must be positive and t_final non-negative");
        }
        if self.sample_every == 0 {
            bail!("sample_every must be at least 1");
        }
        if self.x0[0] == self.x0[1] && self.p0[0] == self.p0[1] {
            bail!("identical packets are Pauli-annihilated; offset x0 or p0");
        }
        if let Some((x0, p0)) = preset_table(self.preset, self.disorder) {
            if self.x0 != x0 || self.p0 != p0 {
                bail!(
                    "preset {} ({}) fixes x0 = {:?}, p0 = {:?}; use --preset custom to override",
                    self.preset,
                    if self.disorder { "disorder" } else { "no disorder" },
                    x0,
                    p0
                );
            }
        }
        Ok(())
    }
}

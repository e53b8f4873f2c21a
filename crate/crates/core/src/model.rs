//! Trap potential (harmonic + soft-Coulomb + normalized speckle disorder) and
//! the antisymmetrized Gaussian nonequilibrium initial state.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CoreError, Result};
use crate::lattice::{pairwise_sum_by, ConfigGrid, WaveFunction};

/// Trap, interaction, and disorder parameters in atomic units.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapParams {
    /// Harmonic frequency omega > 0.
    pub omega: f64,
    /// Soft-Coulomb smoothing length alpha > 0.
    pub alpha: f64,
    /// Disorder strength gamma_D >= 0.
    pub gamma_d: f64,
    /// Disorder correlation length sigma_D > 0.
    pub sigma_d: f64,
    /// Seed for the disorder draw. The stream is ChaCha8 seeded with this
    /// value, sampled through the standard-normal ziggurat, so identical
    /// (seed, grid, sigma_d, gamma_d) reproduce the field bit for bit.
    pub seed: u64,
}

impl Default for TrapParams {
    fn default() -> Self {
        Self { omega: 1.0, alpha: 1.0, gamma_d: 2.0, sigma_d: 1.0, seed: 1 }
    }
}

impl TrapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) {
            return Err(CoreError::InvalidParameter(format!("omega = {}", self.omega)));
        }
        if !(self.alpha > 0.0) {
            return Err(CoreError::InvalidParameter(format!("alpha = {}", self.alpha)));
        }
        if !(self.gamma_d >= 0.0) {
            return Err(CoreError::InvalidParameter(format!("gamma_d = {}", self.gamma_d)));
        }
        if !(self.sigma_d > 0.0) {
            return Err(CoreError::InvalidParameter(format!("sigma_d = {}", self.sigma_d)));
        }
        Ok(())
    }
}

/// One Gaussian packet: center, boost, and width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub x0: f64,
    pub p0: f64,
    pub sigma: f64,
}

impl GaussianSpec {
    pub fn new(x0: f64, p0: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(CoreError::InvalidParameter(format!("sigma = {sigma}")));
        }
        Ok(Self { x0, p0, sigma })
    }
}

/// Real potential on the configuration grid with its labeled components.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub grid: ConfigGrid,
    harmonic: Vec<f64>,
    interaction: Vec<f64>,
    disorder: Vec<f64>,
    values: Vec<f64>,
}

impl PotentialField {
    /// Sum of all components at every node.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn harmonic(&self) -> &[f64] {
        &self.harmonic
    }

    pub fn interaction(&self) -> &[f64] {
        &self.interaction
    }

    pub fn disorder(&self) -> &[f64] {
        &self.disorder
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Assemble the full trap V = V_H + V_I + V_D.
    pub fn build(params: &TrapParams, grid: &ConfigGrid) -> Result<Self> {
        params.validate()?;
        let harmonic = harmonic_values(params, grid);
        let interaction = interaction_values(params, grid);
        let disorder = disorder_values(params, grid)?;
        let values = harmonic
            .iter()
            .zip(&interaction)
            .zip(&disorder)
            .map(|((h, i), d)| h + i + d)
            .collect();
        Ok(Self { grid: grid.clone(), harmonic, interaction, disorder, values })
    }

    /// A field with arbitrary values and no labeled components; used for
    /// auxiliary 1D propagations.
    pub fn from_values(grid: &ConfigGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(CoreError::ShapeMismatch {
                field: values.len(),
                grid: grid.total_points(),
            });
        }
        let n = values.len();
        Ok(Self {
            grid: grid.clone(),
            harmonic: vec![0.0; n],
            interaction: vec![0.0; n],
            disorder: vec![0.0; n],
            values,
        })
    }
}

fn harmonic_values(params: &TrapParams, grid: &ConfigGrid) -> Vec<f64> {
    let w2 = 0.5 * params.omega * params.omega;
    (0..grid.total_points())
        .map(|idx| {
            (0..grid.particles())
                .map(|j| {
                    let x = grid.coordinate(idx, j);
                    w2 * x * x
                })
                .sum()
        })
        .collect()
}

fn interaction_values(params: &TrapParams, grid: &ConfigGrid) -> Vec<f64> {
    let a2 = params.alpha * params.alpha;
    match grid.particles() {
        1 => vec![0.0; grid.total_points()],
        _ => (0..grid.total_points())
            .map(|idx| {
                let d = grid.coordinate(idx, 0) - grid.coordinate(idx, 1);
                1.0 / (d * d + a2).sqrt()
            })
            .collect(),
    }
}

fn disorder_values(params: &TrapParams, grid: &ConfigGrid) -> Result<Vec<f64>> {
    if params.gamma_d == 0.0 {
        return Ok(vec![0.0; grid.total_points()]);
    }
    let profile = disorder_profile(params, grid)?;
    let m = grid.axis().points();
    Ok((0..grid.total_points())
        .map(|idx| match grid.particles() {
            1 => params.gamma_d * profile[idx],
            _ => params.gamma_d * (profile[idx / m] + profile[idx % m]),
        })
        .collect())
}

/// Single-axis speckle profile D(x): Gaussian bumps with i.i.d. standard
/// normal weights on every grid node, rescaled so that the integral of D^2
/// over the box is one.
pub fn disorder_profile(params: &TrapParams, grid: &ConfigGrid) -> Result<Vec<f64>> {
    let axis = grid.axis();
    let m = axis.points();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let weights: Vec<f64> =
        (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let inv_s2 = 4.0 / (params.sigma_d * params.sigma_d);
    let mut profile = vec![0.0f64; m];
    for (i, p) in profile.iter_mut().enumerate() {
        let x = axis.node(i);
        let mut acc = 0.0;
        for (l, &b) in weights.iter().enumerate() {
            let d = x - axis.node(l);
            acc += b * (-inv_s2 * d * d).exp();
        }
        *p = acc;
    }
    let sq_integral = pairwise_sum_by(0, m, &|i| profile[i] * profile[i]) * axis.spacing();
    if sq_integral <= 0.0 {
        return Err(CoreError::DegenerateDisorder);
    }
    let scale = 1.0 / sq_integral.sqrt();
    for p in &mut profile {
        *p *= scale;
    }
    Ok(profile)
}

/// V_H alone on the grid.
pub fn build_harmonic(params: &TrapParams, grid: &ConfigGrid) -> PotentialField {
    let harmonic = harmonic_values(params, grid);
    let n = harmonic.len();
    PotentialField {
        grid: grid.clone(),
        values: harmonic.clone(),
        harmonic,
        interaction: vec![0.0; n],
        disorder: vec![0.0; n],
    }
}

/// V_I alone; zero field for a single particle.
pub fn build_interaction(params: &TrapParams, grid: &ConfigGrid) -> PotentialField {
    let interaction = interaction_values(params, grid);
    let n = interaction.len();
    PotentialField {
        grid: grid.clone(),
        values: interaction.clone(),
        interaction,
        harmonic: vec![0.0; n],
        disorder: vec![0.0; n],
    }
}

/// V_D alone, deterministic in (seed, grid, sigma_d, gamma_d).
pub fn build_disorder(params: &TrapParams, grid: &ConfigGrid) -> Result<PotentialField> {
    let disorder = disorder_values(params, grid)?;
    let n = disorder.len();
    Ok(PotentialField {
        grid: grid.clone(),
        values: disorder.clone(),
        disorder,
        harmonic: vec![0.0; n],
        interaction: vec![0.0; n],
    })
}

fn packet(spec: &GaussianSpec, x: f64) -> Complex64 {
    let arg = (x - spec.x0) / spec.sigma;
    let phase = spec.p0 * (x - spec.x0);
    Complex64::from_polar((-0.5 * arg * arg).exp(), phase)
}

/// Antisymmetrized (Slater) product of Gaussian packets, normalized, t = 0.
///
/// For N = 1 this is a single normalized packet. For N = 2 the two specs must
/// differ; identical packets annihilate under exchange.
pub fn build_initial_state(specs: &[GaussianSpec], grid: &ConfigGrid) -> Result<WaveFunction> {
    if specs.len() != grid.particles() {
        return Err(CoreError::InvalidParameter(format!(
            "{} packet specs for {} particles",
            specs.len(),
            grid.particles()
        )));
    }
    let m = grid.axis().points();
    let mut psi = WaveFunction::zeros(grid.clone());
    match grid.particles() {
        1 => {
            for (i, a) in psi.amplitudes.iter_mut().enumerate() {
                *a = packet(&specs[0], grid.axis().node(i));
            }
        }
        2 => {
            // Tabulate both packets on the axis once, then take the 2x2
            // Slater determinant at every node pair.
            let p0: Vec<Complex64> =
                (0..m).map(|i| packet(&specs[0], grid.axis().node(i))).collect();
            let p1: Vec<Complex64> =
                (0..m).map(|i| packet(&specs[1], grid.axis().node(i))).collect();
            for i1 in 0..m {
                let row = i1 * m;
                for i2 in 0..m {
                    psi.amplitudes[row + i2] = p0[i1] * p1[i2] - p1[i1] * p0[i2];
                }
            }
        }
        n => return Err(CoreError::UnsupportedParticleCount(n)),
    }
    if psi.norm_sq() < 1e-8 {
        return Err(CoreError::PauliAnnihilated);
    }
    psi.normalize()?;
    Ok(psi)
}

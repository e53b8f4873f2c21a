//! Local-in-position weak values computed from the wavefunction alone: the
//! complex weak momentum p_w = v - i u per particle, its bilinear and kinetic
//! variants, and conditional (marginalized) weak values.
//!
//! Velocity fields diverge at wavefunction nodes while every density-weighted
//! integrand stays finite, so nodes below a density threshold are masked and
//! dropped from quadratures; the dropped probability is tracked.

use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::lattice::{pairwise_csum_by, pairwise_sum_by, ConfigGrid, WaveFunction};
use crate::spectral::SpectralEngine;

/// Diffusion constant of the osmotic balance check.
pub const OSMOTIC_NU: f64 = 0.5;

/// Relative density threshold below which nodes are masked.
pub const DEFAULT_EPSILON_REL: f64 = 1e-12;

/// Differentiation backend for every weak-field derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffBackend {
    /// FFT differentiation; matches the propagator and is the default.
    Spectral,
    /// Second-order periodic central differences; independent cross-check.
    CentralDifference,
}

/// Derivative provider bound to one grid and backend.
pub struct Differentiator {
    grid: ConfigGrid,
    backend: DiffBackend,
    engine: SpectralEngine,
}

impl Differentiator {
    pub fn new(grid: &ConfigGrid, backend: DiffBackend) -> Self {
        Self { grid: grid.clone(), backend, engine: SpectralEngine::new(grid) }
    }

    pub fn spectral(grid: &ConfigGrid) -> Self {
        Self::new(grid, DiffBackend::Spectral)
    }

    pub fn grid(&self) -> &ConfigGrid {
        &self.grid
    }

    pub fn derivative(&mut self, amps: &[Complex64], axis: usize) -> Vec<Complex64> {
        match self.backend {
            DiffBackend::Spectral => self.engine.derivative(amps, axis),
            DiffBackend::CentralDifference => central_difference(&self.grid, amps, axis),
        }
    }

    pub fn second_derivative(&mut self, amps: &[Complex64], axis: usize) -> Vec<Complex64> {
        match self.backend {
            DiffBackend::Spectral => self.engine.second_derivative(amps, axis),
            DiffBackend::CentralDifference => {
                let d = central_difference(&self.grid, amps, axis);
                central_difference(&self.grid, &d, axis)
            }
        }
    }

    pub fn mixed_derivative(&mut self, amps: &[Complex64]) -> Vec<Complex64> {
        match self.backend {
            DiffBackend::Spectral => self.engine.mixed_derivative(amps),
            DiffBackend::CentralDifference => {
                let d = central_difference(&self.grid, amps, 1);
                central_difference(&self.grid, &d, 0)
            }
        }
    }

    pub fn derivative_real(&mut self, field: &[f64], axis: usize) -> Vec<f64> {
        match self.backend {
            DiffBackend::Spectral => self.engine.derivative_real(field, axis),
            DiffBackend::CentralDifference => {
                let buf: Vec<Complex64> =
                    field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                central_difference(&self.grid, &buf, axis).iter().map(|c| c.re).collect()
            }
        }
    }

    pub fn second_derivative_real(&mut self, field: &[f64], axis: usize) -> Vec<f64> {
        match self.backend {
            DiffBackend::Spectral => self.engine.second_derivative_real(field, axis),
            DiffBackend::CentralDifference => {
                let d = self.derivative_real(field, axis);
                self.derivative_real(&d, axis)
            }
        }
    }
}

fn central_difference(grid: &ConfigGrid, amps: &[Complex64], axis: usize) -> Vec<Complex64> {
    let m = grid.axis().points();
    let inv2dx = 0.5 / grid.axis().spacing();
    let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
    match grid.particles() {
        1 => {
            for i in 0..m {
                let up = amps[(i + 1) % m];
                let dn = amps[(i + m - 1) % m];
                out[i] = (up - dn) * inv2dx;
            }
        }
        _ => {
            if axis == 1 {
                for i1 in 0..m {
                    let row = i1 * m;
                    for i2 in 0..m {
                        let up = amps[row + (i2 + 1) % m];
                        let dn = amps[row + (i2 + m - 1) % m];
                        out[row + i2] = (up - dn) * inv2dx;
                    }
                }
            } else {
                for i1 in 0..m {
                    let up_row = ((i1 + 1) % m) * m;
                    let dn_row = ((i1 + m - 1) % m) * m;
                    let row = i1 * m;
                    for i2 in 0..m {
                        out[row + i2] = (amps[up_row + i2] - amps[dn_row + i2]) * inv2dx;
                    }
                }
            }
        }
    }
    out
}

/// Per-particle weak momentum split into current/osmotic velocities, with the
/// node mask shared by every quadrature.
pub struct WeakFieldSet {
    pub grid: ConfigGrid,
    /// Current velocity fields v_j = Im[(d_j psi)/psi].
    pub v: Vec<Vec<f64>>,
    /// Osmotic velocity fields u_j = Re[(d_j psi)/psi].
    pub u: Vec<Vec<f64>>,
    /// Complex weak momentum p_w_j = v_j - i u_j.
    pub p_w: Vec<Vec<Complex64>>,
    /// Weak kinetic fields K_w_j = bilinear(j, j) / 2.
    pub k_w: Vec<Vec<Complex64>>,
    /// True where |psi|^2 < epsilon_node; such nodes carry zeros.
    pub mask: Vec<bool>,
    pub epsilon_node: f64,
    /// Probability weight of the masked nodes.
    pub masked_probability: f64,
    /// Cached first derivatives d_j psi for downstream quadratures.
    pub(crate) dpsi: Vec<Vec<Complex64>>,
    /// Cached diagonal second derivatives d_j^2 psi.
    pub(crate) d2psi_diag: Vec<Vec<Complex64>>,
    /// Cached mixed derivative d_0 d_1 psi (two particles only).
    pub(crate) d2psi_mixed: Option<Vec<Complex64>>,
}

impl WeakFieldSet {
    /// Compute all fields with the default node threshold.
    pub fn compute(psi: &WaveFunction, diff: &mut Differentiator) -> Result<Self> {
        Self::compute_with_epsilon(psi, diff, DEFAULT_EPSILON_REL)
    }

    /// `epsilon_rel` scales the node threshold: epsilon_node = epsilon_rel * max|psi|^2.
    pub fn compute_with_epsilon(
        psi: &WaveFunction,
        diff: &mut Differentiator,
        epsilon_rel: f64,
    ) -> Result<Self> {
        if *diff.grid() != psi.grid {
            return Err(CoreError::GridMismatch);
        }
        let grid = psi.grid.clone();
        let n_particles = grid.particles();
        let n = grid.total_points();
        let epsilon_node = epsilon_rel * psi.max_density();

        let mask: Vec<bool> =
            psi.amplitudes.iter().map(|a| a.norm_sqr() < epsilon_node).collect();
        let masked_probability = pairwise_sum_by(0, n, &|i| {
            if mask[i] {
                psi.amplitudes[i].norm_sqr()
            } else {
                0.0
            }
        }) * grid.cell_volume();

        let dpsi: Vec<Vec<Complex64>> =
            (0..n_particles).map(|j| diff.derivative(&psi.amplitudes, j)).collect();
        let d2psi_diag: Vec<Vec<Complex64>> =
            (0..n_particles).map(|j| diff.second_derivative(&psi.amplitudes, j)).collect();
        let d2psi_mixed = if n_particles == 2 {
            Some(diff.mixed_derivative(&psi.amplitudes))
        } else {
            None
        };

        let mut v = vec![vec![0.0; n]; n_particles];
        let mut u = vec![vec![0.0; n]; n_particles];
        let mut p_w = vec![vec![Complex64::new(0.0, 0.0); n]; n_particles];
        let mut k_w = vec![vec![Complex64::new(0.0, 0.0); n]; n_particles];
        for j in 0..n_particles {
            let dj = &dpsi[j];
            let ddj = &d2psi_diag[j];
            for i in 0..n {
                if mask[i] {
                    continue;
                }
                let g = dj[i] / psi.amplitudes[i];
                let uji = g.re;
                let vji = g.im;
                u[j][i] = uji;
                v[j][i] = vji;
                p_w[j][i] = Complex64::new(vji, -uji);
                // Half the bilinear j = j weak value, assembled from the
                // velocity fields and the derivative field d_j g_j.
                let gjj = ddj[i] / psi.amplitudes[i];
                let dg = gjj - g * g;
                let re = vji * vji - uji * uji - dg.re;
                let im = -(2.0 * uji * vji + dg.im);
                k_w[j][i] = 0.5 * Complex64::new(re, im);
            }
        }
        Ok(Self {
            grid,
            v,
            u,
            p_w,
            k_w,
            mask,
            epsilon_node,
            masked_probability,
            dpsi,
            d2psi_diag,
            d2psi_mixed,
        })
    }

    /// Cached first derivative d_j psi (spectral by default), shared with the
    /// diagnostics quadratures.
    pub fn derivative(&self, j: usize) -> &[Complex64] {
        &self.dpsi[j]
    }
}

/// Logarithmic gradient (d_j psi)/psi with its node mask. The real part is
/// the osmotic velocity, the imaginary part the current velocity.
pub fn log_gradient(
    psi: &WaveFunction,
    diff: &mut Differentiator,
    j: usize,
) -> Result<(Vec<Complex64>, Vec<bool>)> {
    check_axis(psi, diff, j)?;
    let epsilon = DEFAULT_EPSILON_REL * psi.max_density();
    let d = diff.derivative(&psi.amplitudes, j);
    let mask: Vec<bool> = psi.amplitudes.iter().map(|a| a.norm_sqr() < epsilon).collect();
    let field = d
        .iter()
        .zip(&psi.amplitudes)
        .zip(&mask)
        .map(|((dv, a), &msk)| if msk { Complex64::new(0.0, 0.0) } else { dv / a })
        .collect();
    Ok((field, mask))
}

/// Weak momentum field p_w_j = v_j - i u_j = -i (d_j psi)/psi.
pub fn weak_momentum(
    psi: &WaveFunction,
    diff: &mut Differentiator,
    j: usize,
) -> Result<Vec<Complex64>> {
    let (g, mask) = log_gradient(psi, diff, j)?;
    Ok(g
        .iter()
        .zip(&mask)
        .map(|(gi, &msk)| {
            if msk {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(gi.im, -gi.re)
            }
        })
        .collect())
}

/// Bilinear weak momentum field p_w_jl with real part
/// v_j v_l - u_j u_l - d_j u_l and imaginary part -(u_j v_l + v_j u_l + d_j v_l).
pub fn weak_bilinear(
    psi: &WaveFunction,
    diff: &mut Differentiator,
    j: usize,
    l: usize,
) -> Result<Vec<Complex64>> {
    check_axis(psi, diff, j)?;
    check_axis(psi, diff, l)?;
    let epsilon = DEFAULT_EPSILON_REL * psi.max_density();
    let dj = diff.derivative(&psi.amplitudes, j);
    let dl = if l == j { dj.clone() } else { diff.derivative(&psi.amplitudes, l) };
    let djl = if j == l {
        diff.second_derivative(&psi.amplitudes, j)
    } else {
        diff.mixed_derivative(&psi.amplitudes)
    };
    let n = psi.amplitudes.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        let a = psi.amplitudes[i];
        if a.norm_sqr() < epsilon {
            continue;
        }
        let gj = dj[i] / a;
        let gl = dl[i] / a;
        let dg = djl[i] / a - gj * gl; // d_j g_l
        let (uj, vj) = (gj.re, gj.im);
        let (ul, vl) = (gl.re, gl.im);
        out[i] = Complex64::new(
            vj * vl - uj * ul - dg.re,
            -(uj * vl + vj * ul + dg.im),
        );
    }
    Ok(out)
}

/// Weak value of the kinetic energy, K_w_j = p_w_jj / 2.
pub fn weak_kinetic(
    psi: &WaveFunction,
    diff: &mut Differentiator,
    j: usize,
) -> Result<Vec<Complex64>> {
    let mut field = weak_bilinear(psi, diff, j, j)?;
    for f in &mut field {
        *f *= 0.5;
    }
    Ok(field)
}

/// Conditional weak value over one retained axis.
pub struct ConditionalWeakValue {
    /// Marginal density P(x_k), unit integral.
    pub marginal: Vec<f64>,
    /// Effective single-particle weak momentum on the axis.
    pub values: Vec<Complex64>,
    /// True where the marginal is below threshold.
    pub mask: Vec<bool>,
}

impl ConditionalWeakValue {
    /// Expectation of the conditional field over its marginal.
    pub fn expectation(&self, spacing: f64) -> Complex64 {
        pairwise_csum_by(0, self.values.len(), &|i| {
            if self.mask[i] {
                Complex64::new(0.0, 0.0)
            } else {
                self.values[i] * self.marginal[i]
            }
        }) * spacing
    }
}

/// Marginalize the weak momentum of particle `k` onto its own axis:
/// p~(x_k) = [integral of p_w_k |psi|^2 over the other axes] / P(x_k).
///
/// The numerator integrand is -i (d_k psi) conj(psi), which is finite at
/// nodes, so only the marginal itself is thresholded.
pub fn conditional_weak_momentum(
    psi: &WaveFunction,
    diff: &mut Differentiator,
    k: usize,
) -> Result<ConditionalWeakValue> {
    check_axis(psi, diff, k)?;
    let grid = &psi.grid;
    let m = grid.axis().points();
    let d = diff.derivative(&psi.amplitudes, k);
    let mut numer = vec![Complex64::new(0.0, 0.0); m];
    let mut marginal = vec![0.0f64; m];
    match grid.particles() {
        1 => {
            for i in 0..m {
                let a = psi.amplitudes[i];
                numer[i] = Complex64::new(0.0, -1.0) * d[i] * a.conj();
                marginal[i] = a.norm_sqr();
            }
        }
        _ => {
            let dx = grid.axis().spacing();
            for ik in 0..m {
                let (num, den) = if k == 0 {
                    let row = ik * m;
                    (
                        pairwise_csum_by(0, m, &|i2| d[row + i2] * psi.amplitudes[row + i2].conj()),
                        pairwise_sum_by(0, m, &|i2| psi.amplitudes[row + i2].norm_sqr()),
                    )
                } else {
                    (
                        pairwise_csum_by(0, m, &|i1| {
                            d[i1 * m + ik] * psi.amplitudes[i1 * m + ik].conj()
                        }),
                        pairwise_sum_by(0, m, &|i1| psi.amplitudes[i1 * m + ik].norm_sqr()),
                    )
                };
                numer[ik] = Complex64::new(0.0, -1.0) * num * dx;
                marginal[ik] = den * dx;
            }
        }
    }
    let peak = marginal.iter().fold(0.0f64, |acc, &p| acc.max(p));
    let threshold = DEFAULT_EPSILON_REL * peak;
    let mask: Vec<bool> = marginal.iter().map(|&p| p < threshold).collect();
    let values = numer
        .iter()
        .zip(&marginal)
        .zip(&mask)
        .map(|((nu, &p), &msk)| if msk { Complex64::new(0.0, 0.0) } else { nu / p })
        .collect();
    Ok(ConditionalWeakValue { marginal, values, mask })
}

/// Relative L2 residual of the osmotic balance nu d^2(R^2)/dx_j^2 = d(u_j R^2)/dx_j
/// with nu = 1/2, evaluated over unmasked nodes.
pub fn osmotic_balance_residual(
    psi: &WaveFunction,
    diff: &mut Differentiator,
    j: usize,
) -> Result<f64> {
    check_axis(psi, diff, j)?;
    let n = psi.amplitudes.len();
    let density: Vec<f64> = psi.amplitudes.iter().map(|a| a.norm_sqr()).collect();
    let diffusion = diff.second_derivative_real(&density, j);
    // u_j R^2 = Re[conj(psi) d_j psi], finite everywhere.
    let dj = diff.derivative(&psi.amplitudes, j);
    let osmotic_current: Vec<f64> = dj
        .iter()
        .zip(&psi.amplitudes)
        .map(|(d, a)| (a.conj() * d).re)
        .collect();
    let drift = diff.derivative_real(&osmotic_current, j);
    let epsilon = DEFAULT_EPSILON_REL * psi.max_density();
    let mut resid = 0.0;
    let mut scale_a = 0.0;
    let mut scale_b = 0.0;
    for i in 0..n {
        if density[i] < epsilon {
            continue;
        }
        let a = OSMOTIC_NU * diffusion[i];
        let b = drift[i];
        resid += (a - b) * (a - b);
        scale_a += a * a;
        scale_b += b * b;
    }
    let scale = scale_a.max(scale_b);
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((resid / scale).sqrt())
}

fn check_axis(psi: &WaveFunction, diff: &Differentiator, j: usize) -> Result<()> {
    if *diff.grid() != psi.grid {
        return Err(CoreError::GridMismatch);
    }
    if j >= psi.grid.particles() {
        return Err(CoreError::InvalidParameter(format!(
            "particle index {j} out of range for N = {}",
            psi.grid.particles()
        )));
    }
    Ok(())
}

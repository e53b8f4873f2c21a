//! Center-of-mass/relative decomposition for two particles: frame energies,
//! framewise Bohmian bookkeeping, the coupling drift used to discuss
//! thermalization, and the conditional weak value over the CoM coordinate.
//!
//! Everything is evaluated on the original (x_1, x_2) grid by coordinate
//! substitution x_c = (x_1 + x_2)/2, x_r = x_1 - x_2; nothing is re-gridded.
//! Mass conventions: CoM mass 2, reduced mass 1/2, so the kinetic split
//! K_c + K_r = <K> is an algebraic identity.

use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::lattice::{pairwise_csum_by, pairwise_sum_by, WaveFunction};
use crate::model::PotentialField;
use crate::weakfields::{WeakFieldSet, DEFAULT_EPSILON_REL};

/// One time sample of the frame-resolved energies.
#[derive(Debug, Clone)]
pub struct ComRecord {
    pub t: f64,
    /// CoM kinetic <(p_1 + p_2)^2>/4 and confinement omega^2 <x_c^2>.
    pub k_c: f64,
    pub v_h_c: f64,
    pub e_c: f64,
    /// Relative kinetic <(p_1 - p_2)^2>/4, confinement omega^2 <x_r^2>/4,
    /// Coulomb <V_I>; e_r sums all three.
    pub k_r: f64,
    pub v_h_r: f64,
    pub v_i_r: f64,
    pub e_r: f64,
    /// Framewise Bohmian kinetic and quantum-potential energies.
    pub k_b_c: f64,
    pub q_b_c: f64,
    pub k_b_r: f64,
    pub q_b_r: f64,
}

/// Frame-resolved sample; requires N = 2 and omega for the confinement split.
pub fn com_sample(
    psi: &WaveFunction,
    potential: &PotentialField,
    wf: &WeakFieldSet,
    omega: f64,
) -> Result<ComRecord> {
    if psi.grid.particles() != 2 {
        return Err(CoreError::UnsupportedParticleCount(psi.grid.particles()));
    }
    if potential.grid != psi.grid || wf.grid != psi.grid {
        return Err(CoreError::GridMismatch);
    }
    let grid = &psi.grid;
    let n = grid.total_points();
    let dvol = grid.cell_volume();
    let amps = &psi.amplitudes;
    let d0 = wf.derivative(0);
    let d1 = wf.derivative(1);

    let k_c = 0.25 * pairwise_sum_by(0, n, &|i| (d0[i] + d1[i]).norm_sqr()) * dvol;
    let k_r = 0.25 * pairwise_sum_by(0, n, &|i| (d0[i] - d1[i]).norm_sqr()) * dvol;
    let w2 = omega * omega;
    let v_h_c = w2
        * pairwise_sum_by(0, n, &|i| {
            let xc = 0.5 * (grid.coordinate(i, 0) + grid.coordinate(i, 1));
            xc * xc * amps[i].norm_sqr()
        })
        * dvol;
    let v_h_r = 0.25
        * w2
        * pairwise_sum_by(0, n, &|i| {
            let xr = grid.coordinate(i, 0) - grid.coordinate(i, 1);
            xr * xr * amps[i].norm_sqr()
        })
        * dvol;
    let v_i_r = pairwise_sum_by(0, n, &|i| {
        potential.interaction()[i] * amps[i].norm_sqr()
    }) * dvol;

    // Quarter-sum Bohmian combinations. Masked nodes: the (u_1 +/- u_2)^2
    // integrand limit is |d_0 psi +/- d_1 psi|^2 (all osmotic, as for the
    // per-particle quadratures); the v combinations vanish there.
    let mask = &wf.mask;
    let (v0, u0, v1, u1) = (&wf.v[0], &wf.u[0], &wf.v[1], &wf.u[1]);
    let k_b_c = 0.25
        * pairwise_sum_by(0, n, &|i| {
            if mask[i] {
                0.0
            } else {
                let s = v0[i] + v1[i];
                s * s * amps[i].norm_sqr()
            }
        })
        * dvol;
    let q_b_c = 0.25
        * pairwise_sum_by(0, n, &|i| {
            if mask[i] {
                (d0[i] + d1[i]).norm_sqr()
            } else {
                let s = u0[i] + u1[i];
                s * s * amps[i].norm_sqr()
            }
        })
        * dvol;
    let k_b_r = 0.25
        * pairwise_sum_by(0, n, &|i| {
            if mask[i] {
                0.0
            } else {
                let s = v0[i] - v1[i];
                s * s * amps[i].norm_sqr()
            }
        })
        * dvol;
    let q_b_r = 0.25
        * pairwise_sum_by(0, n, &|i| {
            if mask[i] {
                (d0[i] - d1[i]).norm_sqr()
            } else {
                let s = u0[i] - u1[i];
                s * s * amps[i].norm_sqr()
            }
        })
        * dvol;

    Ok(ComRecord {
        t: psi.time,
        k_c,
        v_h_c,
        e_c: k_c + v_h_c,
        k_r,
        v_h_r,
        v_i_r,
        e_r: k_r + v_h_r + v_i_r,
        k_b_c,
        q_b_c,
        k_b_r,
        q_b_r,
    })
}

/// Max-minus-min of the frame energies over the pre- and post-t_eq regions.
#[derive(Debug, Clone)]
pub struct SeparabilityDrift {
    pub pre_c: f64,
    pub pre_r: f64,
    /// Present only when a t_eq split the series.
    pub post_c: Option<f64>,
    pub post_r: Option<f64>,
}

fn span(values: impl Iterator<Item = f64>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut any = false;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
        any = true;
    }
    if any {
        hi - lo
    } else {
        0.0
    }
}

/// Energy drift before and after `t_eq`. With no verdict the whole series is
/// reported as the pre-region profile.
pub fn com_separability_drift(
    series: &[ComRecord],
    t_eq: Option<f64>,
) -> Result<SeparabilityDrift> {
    if series.is_empty() {
        return Err(CoreError::EmptySeries);
    }
    match t_eq {
        None => Ok(SeparabilityDrift {
            pre_c: span(series.iter().map(|r| r.e_c)),
            pre_r: span(series.iter().map(|r| r.e_r)),
            post_c: None,
            post_r: None,
        }),
        Some(teq) => Ok(SeparabilityDrift {
            pre_c: span(series.iter().filter(|r| r.t < teq).map(|r| r.e_c)),
            pre_r: span(series.iter().filter(|r| r.t < teq).map(|r| r.e_r)),
            post_c: Some(span(series.iter().filter(|r| r.t >= teq).map(|r| r.e_c))),
            post_r: Some(span(series.iter().filter(|r| r.t >= teq).map(|r| r.e_r))),
        }),
    }
}

/// Conditional weak value over the CoM coordinate, evaluated on the
/// anti-diagonal families x_1 + x_2 = 2 x_c of the grid. The CoM nodes have
/// spacing dx/2 and line up with a grid of 2M points on the same box.
pub struct ComConditional {
    /// CoM nodes x_c, 2M - 1 of them.
    pub nodes: Vec<f64>,
    /// Marginal P(x_c) with unit integral over the dx/2 spacing.
    pub marginal: Vec<f64>,
    /// Effective CoM weak momentum p_w,c = p_w,1 + p_w,2 conditioned on x_c.
    pub values: Vec<Complex64>,
    pub mask: Vec<bool>,
}

pub fn com_conditional_weak_momentum(
    psi: &WaveFunction,
    wf: &WeakFieldSet,
) -> Result<ComConditional> {
    if psi.grid.particles() != 2 {
        return Err(CoreError::UnsupportedParticleCount(psi.grid.particles()));
    }
    if wf.grid != psi.grid {
        return Err(CoreError::GridMismatch);
    }
    let grid = &psi.grid;
    let m = grid.axis().points();
    let dx = grid.axis().spacing();
    let d0 = wf.derivative(0);
    let d1 = wf.derivative(1);
    let amps = &psi.amplitudes;
    let count = 2 * m - 1;
    let mut nodes = vec![0.0; count];
    let mut marginal = vec![0.0; count];
    let mut numer = vec![Complex64::new(0.0, 0.0); count];
    // Along a fixed anti-diagonal s = i1 + i2 the relative coordinate steps
    // by 2 dx, so the line integral weight is 2 dx.
    for s in 0..count {
        nodes[s] = -grid.axis().half_width() + s as f64 * dx / 2.0;
        let i1_lo = s.saturating_sub(m - 1);
        let i1_hi = s.min(m - 1);
        let mut den = 0.0;
        let mut num = Complex64::new(0.0, 0.0);
        for i1 in i1_lo..=i1_hi {
            let i2 = s - i1;
            let idx = i1 * m + i2;
            den += amps[idx].norm_sqr();
            num += (d0[idx] + d1[idx]) * amps[idx].conj();
        }
        marginal[s] = 2.0 * dx * den;
        numer[s] = Complex64::new(0.0, -2.0 * dx) * num;
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
    Ok(ComConditional { nodes, marginal, values, mask })
}

impl ComConditional {
    /// Expectation over the CoM marginal (spacing dx/2).
    pub fn expectation(&self, axis_spacing: f64) -> Complex64 {
        pairwise_csum_by(0, self.values.len(), &|i| {
            if self.mask[i] {
                Complex64::new(0.0, 0.0)
            } else {
                self.values[i] * self.marginal[i]
            }
        }) * (axis_spacing / 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics;
    use crate::lattice::{ConfigGrid, Grid1D};
    use crate::model::{build_initial_state, GaussianSpec, PotentialField, TrapParams};
    use crate::propagator::Propagator;
    use crate::weakfields::Differentiator;
    use approx::assert_relative_eq;

    fn two_grid(points: usize, half: f64) -> ConfigGrid {
        ConfigGrid::new(Grid1D::new(points, half).unwrap(), 2).unwrap()
    }

    fn fields_for(
        psi: &WaveFunction,
        params: &TrapParams,
    ) -> (PotentialField, WeakFieldSet) {
        let pot = PotentialField::build(params, &psi.grid).unwrap();
        let mut diff = Differentiator::spectral(&psi.grid);
        let wf = WeakFieldSet::compute(psi, &mut diff).unwrap();
        (pot, wf)
    }

    #[test]
    fn kinetic_split_is_an_identity() {
        let grid = two_grid(128, 10.0);
        let params = TrapParams { gamma_d: 1.5, seed: 8, ..TrapParams::default() };
        let pot = PotentialField::build(&params, &grid).unwrap();
        let mut psi = build_initial_state(
            &[
                GaussianSpec::new(-2.0, 1.0, 1.0).unwrap(),
                GaussianSpec::new(2.0, 1.0, 1.0).unwrap(),
            ],
            &grid,
        )
        .unwrap();
        let mut prop = Propagator::new(&grid, &pot, 1e-3).unwrap();
        let mut diff = Differentiator::spectral(&grid);
        for _ in 0..20 {
            prop.advance(&mut psi, 113).unwrap();
            let wf = WeakFieldSet::compute(&psi, &mut diff).unwrap();
            let com = com_sample(&psi, &pot, &wf, params.omega).unwrap();
            let rec = diagnostics::sample(&psi, &pot, &wf).unwrap();
            assert_relative_eq!(com.k_c + com.k_r, rec.k_total, max_relative = 1e-6);
            assert_relative_eq!(
                com.v_h_c + com.v_h_r,
                rec.v_h_mean,
                max_relative = 1e-6
            );
            assert_relative_eq!(
                com.k_b_c + com.k_b_r,
                rec.k_b_total(),
                max_relative = 1e-6
            );
            assert_relative_eq!(
                com.q_b_c + com.q_b_r,
                rec.q_b_total(),
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn d1_start_is_pure_relative_motion() {
        let grid = two_grid(256, 12.0);
        let params = TrapParams { gamma_d: 0.0, ..TrapParams::default() };
        let psi = build_initial_state(
            &[
                GaussianSpec::new(-2.0, 0.0, 1.0).unwrap(),
                GaussianSpec::new(2.0, 0.0, 1.0).unwrap(),
            ],
            &grid,
        )
        .unwrap();
        let (pot, wf) = fields_for(&psi, &params);
        let com = com_sample(&psi, &pot, &wf, params.omega).unwrap();
        assert!(com.k_b_c.abs() < 1e-9, "K_B_c = {}", com.k_b_c);
        assert!(com.e_r > com.e_c, "E_r {} should exceed E_c {}", com.e_r, com.e_c);
    }

    #[test]
    fn product_of_identical_centers_has_com_ground_energy() {
        // Non-antisymmetrized product of two identical ground-state packets:
        // the CoM factor is the mass-2 oscillator ground state, E_c = omega/2
        // split evenly.
        let grid = two_grid(128, 10.0);
        let m = 128;
        let mut amps = vec![Complex64::new(0.0, 0.0); m * m];
        for i1 in 0..m {
            for i2 in 0..m {
                let x1 = grid.coordinate(i1 * m + i2, 0);
                let x2 = grid.coordinate(i1 * m + i2, 1);
                amps[i1 * m + i2] = Complex64::new((-0.5 * (x1 * x1 + x2 * x2)).exp(), 0.0);
            }
        }
        let mut psi = WaveFunction::new(grid.clone(), amps, 0.0).unwrap();
        psi.normalize().unwrap();
        let params = TrapParams { gamma_d: 0.0, ..TrapParams::default() };
        let (pot, wf) = fields_for(&psi, &params);
        let com = com_sample(&psi, &pot, &wf, params.omega).unwrap();
        assert_relative_eq!(com.k_c, 0.25, epsilon = 1e-8);
        assert_relative_eq!(com.v_h_c, 0.25, epsilon = 1e-8);
    }

    #[test]
    fn drift_of_constant_series_is_zero() {
        let rec = ComRecord {
            t: 0.0,
            k_c: 1.0,
            v_h_c: 1.0,
            e_c: 2.0,
            k_r: 1.0,
            v_h_r: 0.5,
            v_i_r: 0.1,
            e_r: 1.6,
            k_b_c: 0.5,
            q_b_c: 0.5,
            k_b_r: 0.5,
            q_b_r: 0.5,
        };
        let series: Vec<ComRecord> = (0..10)
            .map(|i| ComRecord { t: i as f64, ..rec.clone() })
            .collect();
        let drift = com_separability_drift(&series, Some(5.0)).unwrap();
        assert_eq!(drift.pre_c, 0.0);
        assert_eq!(drift.post_c, Some(0.0));
        let no_verdict = com_separability_drift(&series, None).unwrap();
        assert!(no_verdict.post_c.is_none());
    }

    #[test]
    fn frame_energies_constant_without_disorder() {
        let grid = two_grid(128, 10.0);
        let params = TrapParams { gamma_d: 0.0, ..TrapParams::default() };
        let pot = PotentialField::build(&params, &grid).unwrap();
        let mut psi = build_initial_state(
            &[
                GaussianSpec::new(-2.0, 0.0, 1.0).unwrap(),
                GaussianSpec::new(2.0, 0.0, 1.0).unwrap(),
            ],
            &grid,
        )
        .unwrap();
        let mut prop = Propagator::new(&grid, &pot, 1e-3).unwrap();
        let mut diff = Differentiator::spectral(&grid);
        let mut series = Vec::new();
        prop.evolve(&mut psi, 3.0, 300, |_, s| {
            let wf = WeakFieldSet::compute(s, &mut diff).unwrap();
            series.push(com_sample(s, &pot, &wf, params.omega).unwrap());
            Ok(())
        })
        .unwrap();
        let drift = com_separability_drift(&series, None).unwrap();
        assert!(drift.pre_c / series[0].e_c.abs() < 1e-6, "E_c drift {}", drift.pre_c);
        assert!(drift.pre_r / series[0].e_r.abs() < 1e-6, "E_r drift {}", drift.pre_r);
    }

    #[test]
    fn com_conditional_on_separable_frame_state() {
        // The D1-type antisymmetrized state factorizes in (x_c, x_r) with the
        // CoM factor equal to the mass-2 oscillator ground state
        // exp(-x_c^2), whose weak momentum is 2 i x_c at all times.
        let grid = two_grid(192, 10.0);
        let psi = build_initial_state(
            &[
                GaussianSpec::new(-2.0, 0.0, 1.0).unwrap(),
                GaussianSpec::new(2.0, 0.0, 1.0).unwrap(),
            ],
            &grid,
        )
        .unwrap();
        let mut diff = Differentiator::spectral(&grid);
        let wf = WeakFieldSet::compute(&psi, &mut diff).unwrap();
        let cond = com_conditional_weak_momentum(&psi, &wf).unwrap();
        for (s, &xc) in cond.nodes.iter().enumerate() {
            if cond.mask[s] || xc.abs() > 2.5 {
                continue;
            }
            let expect = Complex64::new(0.0, 2.0 * xc);
            assert!(
                (cond.values[s] - expect).norm() < 1e-8,
                "at x_c = {xc}: {} vs {expect}",
                cond.values[s]
            );
        }
        // Marginal normalization on the dx/2 comb.
        let total: f64 =
            cond.marginal.iter().sum::<f64>() * grid.axis().spacing() / 2.0;
        assert!((total - 1.0).abs() < 1e-10, "marginal integral {total}");
    }
}

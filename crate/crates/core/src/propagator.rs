//! Unitary time evolution: a Strang split-operator spectral stepper for
//! production runs and a dense Crank-Nicolson oracle for small grids.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{CoreError, Result};
use crate::lattice::{ConfigGrid, WaveFunction};
use crate::linalg::DenseLu;
use crate::model::PotentialField;
use crate::spectral::{filter_rows, transpose_square, SpectralEngine};

/// Largest grid the dense oracle accepts.
pub const ORACLE_MAX_POINTS: usize = 4096;

/// Propagation scheme attached to a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    SplitOperatorStrang,
    CrankNicolsonOracle,
}

/// Precomputed phase tables for one (grid, potential, dt, mass) combination.
pub struct PropagatorPlan {
    pub dt: f64,
    pub mass: f64,
    pub scheme: Scheme,
    /// Unit-modulus per-mode kinetic multipliers exp(-i k^2 dt / 2m).
    pub kinetic_phase: Vec<Complex64>,
    /// Unit-modulus per-node potential multipliers exp(-i V dt / 2).
    pub potential_phase: Vec<Complex64>,
    /// True when dt * max|V| exceeded the pi phase-wrap guard.
    pub phase_wrap_warning: bool,
}

/// Split-operator stepper bound to one grid and potential.
pub struct Propagator {
    grid: ConfigGrid,
    plan: PropagatorPlan,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    fft_scratch: Vec<Complex64>,
    // Scaled/fused tables for the hot loop.
    kin_scaled: Vec<Complex64>,
    half_pot: Vec<Complex64>,
    full_pot: Vec<Complex64>,
    flip: Vec<Complex64>,
    symmetric_potential: bool,
}

impl Propagator {
    pub fn new(grid: &ConfigGrid, potential: &PotentialField, dt: f64) -> Result<Self> {
        Self::with_mass(grid, potential, dt, 1.0)
    }

    /// Stepper for a particle of the given mass (the center-of-mass factor
    /// evolves with mass 2).
    pub fn with_mass(
        grid: &ConfigGrid,
        potential: &PotentialField,
        dt: f64,
        mass: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(CoreError::InvalidParameter(format!("dt = {dt}")));
        }
        if !(mass > 0.0) {
            return Err(CoreError::InvalidParameter(format!("mass = {mass}")));
        }
        if potential.grid != *grid {
            return Err(CoreError::GridMismatch);
        }
        let m = grid.axis().points();
        let ks = grid.axis().wavenumbers();
        let kinetic_phase: Vec<Complex64> = ks
            .iter()
            .map(|&k| Complex64::from_polar(1.0, -k * k * dt / (2.0 * mass)))
            .collect();
        let potential_phase: Vec<Complex64> = potential
            .values()
            .iter()
            .map(|&v| Complex64::from_polar(1.0, -v * dt / 2.0))
            .collect();
        let scale = 1.0 / m as f64;
        let kin_scaled = kinetic_phase.iter().map(|p| p * scale).collect();
        let half_pot = potential_phase.clone();
        let full_pot = half_pot.iter().map(|p| p * p).collect();
        let phase_wrap_warning = dt * potential.max_abs() > std::f64::consts::PI;
        let symmetric_potential = match grid.particles() {
            2 => {
                let v = potential.values();
                (0..m).all(|i| (0..i).all(|j| v[i * m + j] == v[j * m + i]))
            }
            _ => true,
        };
        let flip = if grid.particles() == 2 {
            vec![Complex64::new(0.0, 0.0); m * m]
        } else {
            Vec::new()
        };
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Ok(Self {
            grid: grid.clone(),
            plan: PropagatorPlan {
                dt,
                mass,
                scheme: Scheme::SplitOperatorStrang,
                kinetic_phase,
                potential_phase,
                phase_wrap_warning,
            },
            fwd,
            inv,
            fft_scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            kin_scaled,
            half_pot,
            full_pot,
            flip,
            symmetric_potential,
        })
    }

    pub fn plan(&self) -> &PropagatorPlan {
        &self.plan
    }

    fn check_grid(&self, psi: &WaveFunction) -> Result<()> {
        if psi.grid != self.grid {
            return Err(CoreError::GridMismatch);
        }
        Ok(())
    }

    /// Kinetic factor on both axes. For two particles the state is left in
    /// transposed layout; potential tables of symmetric traps remain valid
    /// there, which lets `advance` pay one transpose per step.
    fn kinetic_pass(&mut self, data: &mut Vec<Complex64>) {
        let m = self.grid.axis().points();
        match self.grid.particles() {
            1 => filter_rows(&self.fwd, &self.inv, &mut self.fft_scratch, data, m, &self.kin_scaled),
            _ => {
                filter_rows(&self.fwd, &self.inv, &mut self.fft_scratch, data, m, &self.kin_scaled);
                transpose_square(data, &mut self.flip, m);
                std::mem::swap(data, &mut self.flip);
                filter_rows(&self.fwd, &self.inv, &mut self.fft_scratch, data, m, &self.kin_scaled);
            }
        }
    }

    fn mul_table(data: &mut [Complex64], table: &[Complex64]) {
        for (a, t) in data.iter_mut().zip(table) {
            *a *= t;
        }
    }

    fn untranspose(&mut self, data: &mut Vec<Complex64>) {
        let m = self.grid.axis().points();
        transpose_square(data, &mut self.flip, m);
        std::mem::swap(data, &mut self.flip);
    }

    /// One Strang step: half potential phase, spectral kinetic phase on every
    /// axis, half potential phase. Norm is preserved to machine accuracy.
    pub fn step(&mut self, psi: &mut WaveFunction) -> Result<()> {
        self.advance(psi, 1)
    }

    /// `steps` Strang steps with the interior half-phases fused.
    pub fn advance(&mut self, psi: &mut WaveFunction, steps: usize) -> Result<()> {
        self.check_grid(psi)?;
        if steps == 0 {
            return Ok(());
        }
        let two = self.grid.particles() == 2;
        let data = &mut psi.amplitudes;
        Self::mul_table(data, &self.half_pot);
        let mut swapped = false;
        for s in 0..steps {
            self.kinetic_pass(data);
            if two {
                swapped = !swapped;
                if !self.symmetric_potential && swapped {
                    self.untranspose(data);
                    swapped = false;
                }
            }
            let table = if s + 1 < steps { &self.full_pot } else { &self.half_pot };
            Self::mul_table(data, table);
        }
        if swapped {
            self.untranspose(data);
        }
        psi.time += steps as f64 * self.plan.dt;
        Ok(())
    }

    /// Propagate to `t_final`, invoking `sink` at t = 0, every `sample_every`
    /// steps, and at the final time. The sink must not mutate the state.
    pub fn evolve<F>(
        &mut self,
        psi: &mut WaveFunction,
        t_final: f64,
        sample_every: usize,
        mut sink: F,
    ) -> Result<()>
    where
        F: FnMut(f64, &WaveFunction) -> Result<()>,
    {
        if sample_every == 0 {
            return Err(CoreError::InvalidParameter("sample_every = 0".into()));
        }
        if t_final < 0.0 {
            return Err(CoreError::InvalidParameter(format!("t_final = {t_final}")));
        }
        self.check_grid(psi)?;
        let t0 = psi.time;
        let total = (t_final / self.plan.dt).round() as usize;
        sink(psi.time, psi)?;
        let mut done = 0usize;
        while done < total {
            let n = sample_every.min(total - done);
            self.advance(psi, n)?;
            done += n;
            psi.time = t0 + done as f64 * self.plan.dt;
            if !psi.all_finite() {
                return Err(CoreError::NanDetected { t: psi.time });
            }
            sink(psi.time, psi)?;
        }
        Ok(())
    }
}

/// Dense Crank-Nicolson reference stepper: (1 + i H dt/2) psi' = (1 - i H dt/2) psi,
/// with H assembled from the same spectral kinetic stencil the fast path uses.
pub struct CrankNicolsonOracle {
    grid: ConfigGrid,
    pub dt: f64,
    mass: f64,
    lu: DenseLu,
    engine: SpectralEngine,
    potential: Vec<f64>,
}

impl CrankNicolsonOracle {
    pub fn new(grid: &ConfigGrid, potential: &PotentialField, dt: f64) -> Result<Self> {
        Self::with_mass(grid, potential, dt, 1.0)
    }

    pub fn with_mass(
        grid: &ConfigGrid,
        potential: &PotentialField,
        dt: f64,
        mass: f64,
    ) -> Result<Self> {
        let n = grid.total_points();
        if n > ORACLE_MAX_POINTS {
            return Err(CoreError::OracleSizeExceeded { limit: ORACLE_MAX_POINTS, got: n });
        }
        if potential.grid != *grid {
            return Err(CoreError::GridMismatch);
        }
        if !(dt > 0.0) {
            return Err(CoreError::InvalidParameter(format!("dt = {dt}")));
        }
        let engine = SpectralEngine::new(grid);
        let m = grid.axis().points();
        // Dense one-axis kinetic block K1d[p][q], built by pushing unit
        // vectors through the spectral second derivative.
        let mut k1d = vec![0.0f64; m * m];
        let mut unit = vec![Complex64::new(0.0, 0.0); m];
        let axis_grid = ConfigGrid::new(grid.axis().clone(), 1)?;
        let mut axis_engine = SpectralEngine::new(&axis_grid);
        for q in 0..m {
            unit.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            unit[q] = Complex64::new(1.0, 0.0);
            let col = axis_engine.second_derivative(&unit, 0);
            for p in 0..m {
                k1d[p * m + q] = -0.5 / mass * col[p].re;
            }
        }
        let half_dt = dt / 2.0;
        let v = potential.values();
        let mut re = vec![0.0f64; n * n];
        let mut im = vec![0.0f64; n * n];
        match grid.particles() {
            1 => {
                for p in 0..n {
                    re[p * n + p] = 1.0;
                    for q in 0..n {
                        im[p * n + q] = half_dt * k1d[p * m + q];
                    }
                    im[p * n + p] += half_dt * v[p];
                }
            }
            2 => {
                for p1 in 0..m {
                    for p2 in 0..m {
                        let p = p1 * m + p2;
                        re[p * n + p] = 1.0;
                        for q1 in 0..m {
                            im[p * n + (q1 * m + p2)] += half_dt * k1d[p1 * m + q1];
                        }
                        for q2 in 0..m {
                            im[p * n + (p1 * m + q2)] += half_dt * k1d[p2 * m + q2];
                        }
                        im[p * n + p] += half_dt * v[p];
                    }
                }
            }
            np => return Err(CoreError::UnsupportedParticleCount(np)),
        }
        let lu = DenseLu::factor(re, im, n)?;
        Ok(Self {
            grid: grid.clone(),
            dt,
            mass,
            lu,
            engine,
            potential: v.to_vec(),
        })
    }

    /// Apply H with the spectral stencil (matrix-free; used for the
    /// right-hand side so both sides share one discretization).
    fn apply_h(&mut self, amps: &[Complex64]) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = amps
            .iter()
            .zip(&self.potential)
            .map(|(a, &v)| a * v)
            .collect();
        for axis in 0..self.grid.particles() {
            let dd = self.engine.second_derivative(amps, axis);
            for (o, d) in out.iter_mut().zip(&dd) {
                *o -= 0.5 / self.mass * d;
            }
        }
        out
    }

    /// One Crank-Nicolson step.
    pub fn step(&mut self, psi: &mut WaveFunction) -> Result<()> {
        if psi.grid != self.grid {
            return Err(CoreError::GridMismatch);
        }
        let h_psi = self.apply_h(&psi.amplitudes);
        let half = Complex64::new(0.0, -self.dt / 2.0);
        let mut b: Vec<Complex64> = psi
            .amplitudes
            .iter()
            .zip(&h_psi)
            .map(|(a, h)| a + half * h)
            .collect();
        self.lu.solve(&mut b);
        psi.amplitudes = b;
        psi.time += self.dt;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{expectation, l2_distance, norm_sq, Grid1D};
    use crate::model::{build_harmonic, build_initial_state, GaussianSpec, TrapParams};
    use approx::assert_relative_eq;

    fn grid1(points: usize, half: f64) -> ConfigGrid {
        ConfigGrid::new(Grid1D::new(points, half).unwrap(), 1).unwrap()
    }

    fn zero_potential(grid: &ConfigGrid) -> PotentialField {
        PotentialField::from_values(grid, vec![0.0; grid.total_points()]).unwrap()
    }

    #[test]
    fn plan_multipliers_are_unit_modulus() {
        let grid = grid1(64, 10.0);
        let params = TrapParams::default();
        let pot = build_harmonic(&params, &grid);
        let prop = Propagator::new(&grid, &pot, 1e-3).unwrap();
        for p in &prop.plan().kinetic_phase {
            assert!((p.norm() - 1.0).abs() < 1e-14);
        }
        for p in &prop.plan().potential_phase {
            assert!((p.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn free_gaussian_spreads_analytically() {
        // sigma_eff^2(t) = 1 + t^2 for a resting unit-width packet.
        let grid = grid1(512, 30.0);
        let pot = zero_potential(&grid);
        let mut psi =
            build_initial_state(&[GaussianSpec::new(0.0, 0.0, 1.0).unwrap()], &grid).unwrap();
        let mut prop = Propagator::new(&grid, &pot, 1e-3).unwrap();
        prop.evolve(&mut psi, 1.0, 1000, |_, _| Ok(())).unwrap();
        let x2: Vec<f64> =
            (0..grid.total_points()).map(|i| grid.coordinate(i, 0).powi(2)).collect();
        let spread = expectation(&x2, &psi).unwrap();
        // <x^2> = sigma_eff^2 / 2.
        assert!((2.0 * spread - 2.0).abs() < 1e-6, "sigma_eff^2 = {}", 2.0 * spread);
    }

    #[test]
    fn coherent_state_oscillates() {
        let grid = grid1(512, 20.0);
        let params = TrapParams::default();
        let pot = build_harmonic(&params, &grid);
        let mut psi =
            build_initial_state(&[GaussianSpec::new(2.0, 0.0, 1.0).unwrap()], &grid).unwrap();
        let mut prop = Propagator::new(&grid, &pot, 1e-3).unwrap();
        let x: Vec<f64> = (0..grid.total_points()).map(|i| grid.coordinate(i, 0)).collect();
        let mut worst = 0.0f64;
        prop.evolve(&mut psi, 2.0 * std::f64::consts::PI, 500, |t, s| {
            let got = expectation(&x, s).unwrap();
            worst = worst.max((got - 2.0 * t.cos()).abs());
            Ok(())
        })
        .unwrap();
        assert!(worst < 1e-6, "max deviation {worst}");
    }

    #[test]
    fn norm_preserved_per_step() {
        let grid = ConfigGrid::new(Grid1D::new(64, 8.0).unwrap(), 2).unwrap();
        let params = TrapParams { gamma_d: 1.0, ..TrapParams::default() };
        let pot = PotentialField::build(&params, &grid).unwrap();
        let specs = [
            GaussianSpec::new(-2.0, 0.0, 1.0).unwrap(),
            GaussianSpec::new(2.0, 0.0, 1.0).unwrap(),
        ];
        let mut psi = build_initial_state(&specs, &grid).unwrap();
        let mut prop = Propagator::new(&grid, &pot, 1e-3).unwrap();
        let before = norm_sq(&psi);
        prop.step(&mut psi).unwrap();
        assert!((norm_sq(&psi) - before).abs() < 1e-12);
    }

    #[test]
    fn fused_advance_matches_single_steps() {
        let grid = ConfigGrid::new(Grid1D::new(48, 8.0).unwrap(), 2).unwrap();
        let params = TrapParams { gamma_d: 0.5, seed: 3, ..TrapParams::default() };
        let pot = PotentialField::build(&params, &grid).unwrap();
        let specs = [
            GaussianSpec::new(-1.5, 1.0, 1.0).unwrap(),
            GaussianSpec::new(1.5, 0.0, 1.0).unwrap(),
        ];
        let psi0 = build_initial_state(&specs, &grid).unwrap();

        let mut a = psi0.clone();
        let mut prop_a = Propagator::new(&grid, &pot, 1e-3).unwrap();
        prop_a.advance(&mut a, 7).unwrap();

        let mut b = psi0;
        let mut prop_b = Propagator::new(&grid, &pot, 1e-3).unwrap();
        for _ in 0..7 {
            prop_b.step(&mut b).unwrap();
        }
        assert!(l2_distance(&a, &b).unwrap() < 1e-13);
    }

    #[test]
    fn time_reversal_recovers_initial_state() {
        let grid = ConfigGrid::new(Grid1D::new(64, 8.0).unwrap(), 2).unwrap();
        let params = TrapParams { gamma_d: 1.0, seed: 5, ..TrapParams::default() };
        let pot = PotentialField::build(&params, &grid).unwrap();
        let specs = [
            GaussianSpec::new(-2.0, 0.0, 1.0).unwrap(),
            GaussianSpec::new(2.0, 0.0, 1.0).unwrap(),
        ];
        let psi0 = build_initial_state(&specs, &grid).unwrap();
        let mut psi = psi0.clone();
        let mut prop = Propagator::new(&grid, &pot, 1e-3).unwrap();
        prop.advance(&mut psi, 2000).unwrap();
        // Conjugate stepping: conj, evolve forward, conj.
        for a in &mut psi.amplitudes {
            *a = a.conj();
        }
        prop.advance(&mut psi, 2000).unwrap();
        for a in &mut psi.amplitudes {
            *a = a.conj();
        }
        assert!(l2_distance(&psi, &psi0).unwrap() < 1e-8);
    }

    #[test]
    fn evolve_zero_time_calls_sink_once() {
        let grid = grid1(32, 6.0);
        let pot = zero_potential(&grid);
        let mut psi =
            build_initial_state(&[GaussianSpec::new(0.0, 0.0, 1.0).unwrap()], &grid).unwrap();
        let mut prop = Propagator::new(&grid, &pot, 1e-3).unwrap();
        let mut calls = 0;
        prop.evolve(&mut psi, 0.0, 10, |t, _| {
            assert_eq!(t, 0.0);
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 1);
    }

    #[test]
    fn evolve_sink_count_arithmetic() {
        let grid = grid1(32, 6.0);
        let pot = zero_potential(&grid);
        let mut psi =
            build_initial_state(&[GaussianSpec::new(0.0, 0.0, 1.0).unwrap()], &grid).unwrap();
        let mut prop = Propagator::new(&grid, &pot, 1e-2).unwrap();
        let mut calls = 0;
        // 100 steps sampled every 10: initial sample + 10 more.
        prop.evolve(&mut psi, 1.0, 10, |_, _| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 11);
    }

    #[test]
    fn phase_wrap_warning_flag() {
        let grid = grid1(32, 6.0);
        let huge = PotentialField::from_values(&grid, vec![5000.0; 32]).unwrap();
        let prop = Propagator::new(&grid, &huge, 1e-3).unwrap();
        assert!(prop.plan().phase_wrap_warning);
        let mild = PotentialField::from_values(&grid, vec![1.0; 32]).unwrap();
        let prop = Propagator::new(&grid, &mild, 1e-3).unwrap();
        assert!(!prop.plan().phase_wrap_warning);
    }

    #[test]
    fn oracle_matches_fast_path_on_1d_harmonic() {
        let grid = grid1(64, 8.0);
        let params = TrapParams::default();
        let pot = build_harmonic(&params, &grid);
        let psi0 =
            build_initial_state(&[GaussianSpec::new(1.0, 0.0, 1.0).unwrap()], &grid).unwrap();

        let mut fast = psi0.clone();
        let mut prop = Propagator::new(&grid, &pot, 1e-3).unwrap();
        prop.advance(&mut fast, 100).unwrap();

        let mut slow = psi0;
        let mut oracle = CrankNicolsonOracle::new(&grid, &pot, 1e-3).unwrap();
        for _ in 0..100 {
            oracle.step(&mut slow).unwrap();
        }
        let d = l2_distance(&fast, &slow).unwrap();
        assert!(d <= 1e-4, "L2 difference {d}");
    }

    #[test]
    fn oracle_plane_wave_pure_phase() {
        let grid = grid1(64, 8.0);
        let pot = zero_potential(&grid);
        let k = grid.axis().wavenumbers()[3];
        let amps: Vec<Complex64> = (0..64)
            .map(|i| Complex64::from_polar(1.0, k * grid.coordinate(i, 0)))
            .collect();
        let mut psi = WaveFunction::new(grid.clone(), amps, 0.0).unwrap();
        let mag0: Vec<f64> = psi.amplitudes.iter().map(|a| a.norm()).collect();
        let mut oracle = CrankNicolsonOracle::new(&grid, &pot, 1e-3).unwrap();
        for _ in 0..50 {
            oracle.step(&mut psi).unwrap();
        }
        for (a, m0) in psi.amplitudes.iter().zip(&mag0) {
            assert!((a.norm() - m0).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_defect_is_second_order() {
        let grid = grid1(64, 8.0);
        let params = TrapParams::default();
        let pot = build_harmonic(&params, &grid);
        let psi0 =
            build_initial_state(&[GaussianSpec::new(1.0, 0.0, 1.0).unwrap()], &grid).unwrap();
        let defect = |dt: f64| {
            let mut fast = psi0.clone();
            let mut prop = Propagator::new(&grid, &pot, dt).unwrap();
            prop.step(&mut fast).unwrap();
            let mut slow = psi0.clone();
            let mut oracle = CrankNicolsonOracle::new(&grid, &pot, dt).unwrap();
            oracle.step(&mut slow).unwrap();
            l2_distance(&fast, &slow).unwrap()
        };
        let d1 = defect(1e-3);
        let d2 = defect(5e-4);
        assert!(d1 / d2 >= 4.0, "defect ratio {}", d1 / d2);
    }

    #[test]
    fn oracle_size_guard() {
        let grid = ConfigGrid::new(Grid1D::new(128, 8.0).unwrap(), 2).unwrap();
        let pot = zero_potential(&grid);
        assert!(matches!(
            CrankNicolsonOracle::new(&grid, &pot, 1e-3),
            Err(CoreError::OracleSizeExceeded { .. })
        ));
    }

    #[test]
    fn strang_richardson_triplet() {
        // Global error at fixed horizon scales ~ dt^2.
        let grid = grid1(128, 8.0);
        let params = TrapParams::default();
        let pot = build_harmonic(&params, &grid);
        let psi0 =
            build_initial_state(&[GaussianSpec::new(1.0, 0.0, 1.0).unwrap()], &grid).unwrap();
        let run = |dt: f64, steps: usize| {
            let mut psi = psi0.clone();
            let mut prop = Propagator::new(&grid, &pot, dt).unwrap();
            prop.advance(&mut psi, steps).unwrap();
            psi
        };
        let reference = run(1.25e-4, 1600);
        let coarse = l2_distance(&run(1e-3, 200), &reference).unwrap();
        let fine = l2_distance(&run(5e-4, 400), &reference).unwrap();
        let ratio = coarse / fine;
        assert!(
            (3.0..6.0).contains(&ratio),
            "expected ~4x second-order ratio, got {ratio} ({coarse} / {fine})"
        );
    }
}

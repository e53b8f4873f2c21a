//! Uniform spatial grids, N-fold configuration grids, and the quadrature
//! primitives every other module reduces through.
//!
//! All reductions go through fixed-shape pairwise summation so results do not
//! depend on how the work is partitioned.

use num_complex::Complex64;

use crate::error::{CoreError, Result};

/// Smallest usable per-axis grid.
pub const MIN_POINTS: usize = 8;

/// Uniform 1D grid on [-L, L) with periodic spectral topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    points: usize,
    half_width: f64,
    spacing: f64,
    nodes: Vec<f64>,
}

impl Grid1D {
    /// Build a grid of `points` nodes x_m = -L + m dx, dx = 2L / points.
    ///
    /// `points` must be even (spectral frequency layout) and at least
    /// [`MIN_POINTS`]; `half_width` must be positive.
    pub fn new(points: usize, half_width: f64) -> Result<Self> {
        if points % 2 != 0 {
            return Err(CoreError::OddPointCount(points));
        }
        if points < MIN_POINTS {
            return Err(CoreError::TinyPointCount(points));
        }
        if !(half_width > 0.0) {
            return Err(CoreError::NonPositiveHalfWidth(half_width));
        }
        let spacing = 2.0 * half_width / points as f64;
        let nodes = (0..points).map(|m| -half_width + m as f64 * spacing).collect();
        Ok(Self { points, half_width, spacing, nodes })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, m: usize) -> f64 {
        self.nodes[m]
    }

    /// Angular wavenumbers in FFT bin order: k_m = pi m / L for m < M/2,
    /// then the negative branch.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let m = self.points;
        let dk = std::f64::consts::PI / self.half_width;
        (0..m)
            .map(|i| {
                let shifted = if i < m / 2 { i as isize } else { i as isize - m as isize };
                shifted as f64 * dk
            })
            .collect()
    }
}

/// N-fold tensor grid over one shared axis; the domain of the wavefunction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigGrid {
    axis: Grid1D,
    particles: usize,
}

impl ConfigGrid {
    pub fn new(axis: Grid1D, particles: usize) -> Result<Self> {
        if particles == 0 || particles > 2 {
            return Err(CoreError::UnsupportedParticleCount(particles));
        }
        Ok(Self { axis, particles })
    }

    pub fn axis(&self) -> &Grid1D {
        &self.axis
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn total_points(&self) -> usize {
        self.axis.points().pow(self.particles as u32)
    }

    /// dx^N, the configuration-space cell volume.
    pub fn cell_volume(&self) -> f64 {
        self.axis.spacing().powi(self.particles as i32)
    }

    /// Coordinate of particle `j` at flat index `idx` (row-major, particle 0
    /// on the slow axis).
    #[inline]
    pub fn coordinate(&self, idx: usize, j: usize) -> f64 {
        debug_assert!(j < self.particles);
        let m = self.axis.points();
        match self.particles {
            1 => self.axis.node(idx),
            _ => {
                if j == 0 {
                    self.axis.node(idx / m)
                } else {
                    self.axis.node(idx % m)
                }
            }
        }
    }
}

/// Complex amplitudes over a configuration grid at one instant.
#[derive(Debug, Clone)]
pub struct WaveFunction {
    pub grid: ConfigGrid,
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
}

impl WaveFunction {
    pub fn new(grid: ConfigGrid, amplitudes: Vec<Complex64>, time: f64) -> Result<Self> {
        if amplitudes.len() != grid.total_points() {
            return Err(CoreError::ShapeMismatch {
                field: amplitudes.len(),
                grid: grid.total_points(),
            });
        }
        Ok(Self { grid, amplitudes, time })
    }

    /// Zero-filled state at t = 0.
    pub fn zeros(grid: ConfigGrid) -> Self {
        let n = grid.total_points();
        Self { grid, amplitudes: vec![Complex64::new(0.0, 0.0); n], time: 0.0 }
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(self)
    }

    /// Scale to unit norm. Errors if the state is numerically null.
    pub fn normalize(&mut self) -> Result<()> {
        let n2 = self.norm_sq();
        if n2 < 1e-300 {
            return Err(CoreError::PauliAnnihilated);
        }
        let inv = 1.0 / n2.sqrt();
        for a in &mut self.amplitudes {
            *a *= inv;
        }
        Ok(())
    }

    /// Largest |psi|^2 on the grid (mask thresholds are relative to this).
    pub fn max_density(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.amplitudes.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

const PAIRWISE_LEAF: usize = 1024;

/// Pairwise sum of f(i) over [lo, hi). The reduction tree depends only on the
/// index range, so the result is identical for any execution order.
pub fn pairwise_sum_by<F>(lo: usize, hi: usize, f: &F) -> f64
where
    F: Fn(usize) -> f64,
{
    let len = hi - lo;
    if len <= PAIRWISE_LEAF {
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        return acc;
    }
    let mid = lo + len / 2;
    pairwise_sum_by(lo, mid, f) + pairwise_sum_by(mid, hi, f)
}

/// Complex-valued counterpart of [`pairwise_sum_by`].
pub fn pairwise_csum_by<F>(lo: usize, hi: usize, f: &F) -> Complex64
where
    F: Fn(usize) -> Complex64,
{
    let len = hi - lo;
    if len <= PAIRWISE_LEAF {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in lo..hi {
            acc += f(i);
        }
        return acc;
    }
    let mid = lo + len / 2;
    pairwise_csum_by(lo, mid, f) + pairwise_csum_by(mid, hi, f)
}

/// Riemann-sum norm: sum |psi|^2 dx^N.
pub fn norm_sq(psi: &WaveFunction) -> f64 {
    let amps = &psi.amplitudes;
    pairwise_sum_by(0, amps.len(), &|i| amps[i].norm_sqr()) * psi.grid.cell_volume()
}

/// Expectation of a real field against |psi|^2: sum field |psi|^2 dx^N.
pub fn expectation(field: &[f64], psi: &WaveFunction) -> Result<f64> {
    if field.len() != psi.amplitudes.len() {
        return Err(CoreError::ShapeMismatch {
            field: field.len(),
            grid: psi.amplitudes.len(),
        });
    }
    let amps = &psi.amplitudes;
    Ok(pairwise_sum_by(0, field.len(), &|i| field[i] * amps[i].norm_sqr())
        * psi.grid.cell_volume())
}

/// Expectation restricted to unmasked nodes (mask true = excluded).
pub fn expectation_masked(
    field: &[f64],
    psi: &WaveFunction,
    mask: &[bool],
) -> Result<f64> {
    if field.len() != psi.amplitudes.len() || mask.len() != field.len() {
        return Err(CoreError::ShapeMismatch {
            field: field.len(),
            grid: psi.amplitudes.len(),
        });
    }
    let amps = &psi.amplitudes;
    Ok(pairwise_sum_by(0, field.len(), &|i| {
        if mask[i] {
            0.0
        } else {
            field[i] * amps[i].norm_sqr()
        }
    }) * psi.grid.cell_volume())
}

/// L2 inner product <a|b> = sum conj(a) b dx^N.
pub fn overlap(a: &WaveFunction, b: &WaveFunction) -> Result<Complex64> {
    if a.amplitudes.len() != b.amplitudes.len() {
        return Err(CoreError::GridMismatch);
    }
    let (xa, xb) = (&a.amplitudes, &b.amplitudes);
    Ok(pairwise_csum_by(0, xa.len(), &|i| xa[i].conj() * xb[i]) * a.grid.cell_volume())
}

/// L2 distance between two states on one grid.
pub fn l2_distance(a: &WaveFunction, b: &WaveFunction) -> Result<f64> {
    if a.amplitudes.len() != b.amplitudes.len() {
        return Err(CoreError::GridMismatch);
    }
    let (xa, xb) = (&a.amplitudes, &b.amplitudes);
    Ok(
        (pairwise_sum_by(0, xa.len(), &|i| (xa[i] - xb[i]).norm_sqr())
            * a.grid.cell_volume())
        .sqrt(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gaussian_state(grid: &ConfigGrid, omega: f64) -> WaveFunction {
        let amps = (0..grid.total_points())
            .map(|i| {
                let x = grid.coordinate(i, 0);
                Complex64::new((-0.5 * omega * x * x).exp(), 0.0)
            })
            .collect();
        let mut psi = WaveFunction::new(grid.clone(), amps, 0.0).unwrap();
        psi.normalize().unwrap();
        psi
    }

    #[test]
    fn make_grid_small() {
        let g = Grid1D::new(8, 4.0).unwrap();
        assert_eq!(g.spacing(), 1.0);
        let expect: Vec<f64> = (-4..4).map(|m| m as f64).collect();
        assert_eq!(g.nodes(), expect.as_slice());
    }

    #[test]
    fn make_grid_fine_spacing() {
        let g = Grid1D::new(512, 30.0).unwrap();
        assert_relative_eq!(g.spacing(), 60.0 / 512.0, max_relative = 1e-15);
    }

    #[test]
    fn make_grid_rejects_bad_inputs() {
        assert!(matches!(Grid1D::new(7, 4.0), Err(CoreError::OddPointCount(7))));
        assert!(matches!(Grid1D::new(4, 4.0), Err(CoreError::TinyPointCount(4))));
        assert!(matches!(
            Grid1D::new(64, 0.0),
            Err(CoreError::NonPositiveHalfWidth(_))
        ));
        assert!(matches!(
            Grid1D::new(64, -1.0),
            Err(CoreError::NonPositiveHalfWidth(_))
        ));
    }

    #[test]
    fn nodes_strictly_increasing_and_centered() {
        let g = Grid1D::new(64, 9.5).unwrap();
        for w in g.nodes().windows(2) {
            assert!(w[1] > w[0]);
        }
        // Symmetric about zero up to the one-sided endpoint.
        assert_relative_eq!(g.node(0), -9.5);
        assert_relative_eq!(g.node(32), 0.0);
    }

    #[test]
    fn norm_examples() {
        let grid = ConfigGrid::new(Grid1D::new(256, 8.0).unwrap(), 1).unwrap();
        let psi = gaussian_state(&grid, 1.0);
        assert!((psi.norm_sq() - 1.0).abs() < 1e-10);

        let zero = WaveFunction::zeros(grid.clone());
        assert_eq!(zero.norm_sq(), 0.0);

        let mut doubled = psi.clone();
        for a in &mut doubled.amplitudes {
            *a *= 2.0;
        }
        assert_relative_eq!(doubled.norm_sq(), 4.0 * psi.norm_sq(), max_relative = 1e-12);
    }

    #[test]
    fn expectation_examples() {
        let grid = ConfigGrid::new(Grid1D::new(256, 8.0).unwrap(), 1).unwrap();
        let psi = gaussian_state(&grid, 1.0);

        let ones = vec![1.0; grid.total_points()];
        assert_relative_eq!(expectation(&ones, &psi).unwrap(), 1.0, epsilon = 1e-10);

        let x: Vec<f64> = (0..grid.total_points()).map(|i| grid.coordinate(i, 0)).collect();
        assert!(expectation(&x, &psi).unwrap().abs() < 1e-10);

        let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
        assert_relative_eq!(expectation(&x2, &psi).unwrap(), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn expectation_shape_mismatch() {
        let grid = ConfigGrid::new(Grid1D::new(16, 4.0).unwrap(), 1).unwrap();
        let psi = gaussian_state(&grid, 1.0);
        assert!(matches!(
            expectation(&[1.0; 4], &psi),
            Err(CoreError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn grid_refinement_convergence() {
        // Coarse enough that the quadrature error is above the machine floor.
        let mut errs = Vec::new();
        for points in [10usize, 20, 40] {
            let grid = ConfigGrid::new(Grid1D::new(points, 6.0).unwrap(), 1).unwrap();
            let psi = gaussian_state(&grid, 1.0);
            let x2: Vec<f64> =
                (0..grid.total_points()).map(|i| grid.coordinate(i, 0).powi(2)).collect();
            errs.push((expectation(&x2, &psi).unwrap() - 0.5).abs());
        }
        assert!(errs[1] * 4.0 < errs[0], "errors {errs:?}");
        assert!(errs[2] * 4.0 < errs[1] || errs[2] < 1e-13, "errors {errs:?}");
    }

    #[test]
    fn pairwise_matches_partitioned_evaluation() {
        // Shifting work between halves by hand must not change any bit.
        let grid = ConfigGrid::new(Grid1D::new(64, 5.0).unwrap(), 2).unwrap();
        let n = grid.total_points();
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e-3 + 1.0;
        let whole = pairwise_sum_by(0, n, &f);
        let mid = n / 2;
        let split = pairwise_sum_by(0, mid, &f) + pairwise_sum_by(mid, n, &f);
        assert_eq!(whole.to_bits(), split.to_bits());
    }

    #[test]
    fn two_particle_coordinates() {
        let grid = ConfigGrid::new(Grid1D::new(8, 4.0).unwrap(), 2).unwrap();
        assert_eq!(grid.total_points(), 64);
        let idx = 3 * 8 + 5;
        assert_relative_eq!(grid.coordinate(idx, 0), -4.0 + 3.0);
        assert_relative_eq!(grid.coordinate(idx, 1), -4.0 + 5.0);
    }

    proptest! {
        #[test]
        fn quadrature_linearity(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let grid = ConfigGrid::new(Grid1D::new(64, 6.0).unwrap(), 1).unwrap();
            let psi = gaussian_state(&grid, 1.0);
            let f: Vec<f64> = (0..64).map(|i| (i as f64 * 0.11).sin()).collect();
            let g: Vec<f64> = (0..64).map(|i| (i as f64 * 0.07).cos()).collect();
            let combo: Vec<f64> = f.iter().zip(&g).map(|(fi, gi)| a * fi + b * gi).collect();
            let lhs = expectation(&combo, &psi).unwrap();
            let rhs = a * expectation(&f, &psi).unwrap() + b * expectation(&g, &psi).unwrap();
            let scale = lhs.abs().max(rhs.abs()).max(1e-30);
            prop_assert!((lhs - rhs).abs() / scale < 1e-12);
        }
    }
}

//! FFT-based spectral machinery shared by the propagator and the weak-field
//! post-processing: per-axis filters, derivatives, and square transposes.
//!
//! All filters run axis-by-axis over contiguous rows; the first axis of a
//! two-particle grid is reached by transposing, filtering, and transposing
//! back. Inverse-transform scaling (1/M per axis) is folded into the filter
//! multipliers, so every multiplier slice passed here is expected to carry it.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::lattice::ConfigGrid;

/// Cache-blocked transpose of a square row-major matrix.
pub(crate) fn transpose_square(src: &[Complex64], dst: &mut [Complex64], m: usize) {
    const B: usize = 64;
    debug_assert_eq!(src.len(), m * m);
    debug_assert_eq!(dst.len(), m * m);
    let mut ib = 0;
    while ib < m {
        let imax = (ib + B).min(m);
        let mut jb = 0;
        while jb < m {
            let jmax = (jb + B).min(m);
            for i in ib..imax {
                let row = i * m;
                for j in jb..jmax {
                    dst[j * m + i] = src[row + j];
                }
            }
            jb += B;
        }
        ib += B;
    }
}

/// forward FFT each row, multiply by `mult`, inverse FFT each row.
pub(crate) fn filter_rows(
    fwd: &Arc<dyn Fft<f64>>,
    inv: &Arc<dyn Fft<f64>>,
    scratch: &mut [Complex64],
    data: &mut [Complex64],
    m: usize,
    mult: &[Complex64],
) {
    for row in data.chunks_exact_mut(m) {
        fwd.process_with_scratch(row, scratch);
        for (a, w) in row.iter_mut().zip(mult) {
            *a *= w;
        }
        inv.process_with_scratch(row, scratch);
    }
}

/// Spectral filters and derivatives for one configuration grid.
pub struct SpectralEngine {
    m: usize,
    particles: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    flip: Vec<Complex64>,
    d1_mult: Vec<Complex64>,
    d2_mult: Vec<Complex64>,
}

impl SpectralEngine {
    pub fn new(grid: &ConfigGrid) -> Self {
        let m = grid.axis().points();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        let ks = grid.axis().wavenumbers();
        let scale = 1.0 / m as f64;
        // First-derivative multiplier i k / M; the Nyquist bin has no signed
        // frequency and is zeroed for odd-order derivatives.
        let d1_mult = ks
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                if j == m / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, k * scale)
                }
            })
            .collect();
        let d2_mult = ks.iter().map(|&k| Complex64::new(-k * k * scale, 0.0)).collect();
        let flip = if grid.particles() == 2 {
            vec![Complex64::new(0.0, 0.0); m * m]
        } else {
            Vec::new()
        };
        Self {
            m,
            particles: grid.particles(),
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            flip,
            d1_mult,
            d2_mult,
        }
    }

    pub fn points(&self) -> usize {
        self.m
    }

    /// Apply a per-mode filter along `axis`; `mult` must include the 1/M
    /// inverse-transform scale.
    pub fn apply_axis_filter(&mut self, data: &mut [Complex64], axis: usize, mult: &[Complex64]) {
        assert_eq!(data.len(), self.m.pow(self.particles as u32));
        assert!(axis < self.particles);
        let contiguous = axis + 1 == self.particles;
        if contiguous {
            filter_rows(&self.fwd, &self.inv, &mut self.scratch, data, self.m, mult);
        } else {
            transpose_square(data, &mut self.flip, self.m);
            filter_rows(&self.fwd, &self.inv, &mut self.scratch, &mut self.flip, self.m, mult);
            let flip = std::mem::take(&mut self.flip);
            transpose_square(&flip, data, self.m);
            self.flip = flip;
        }
    }

    /// Spectral partial derivative of `src` along particle axis `axis`.
    pub fn derivative(&mut self, src: &[Complex64], axis: usize) -> Vec<Complex64> {
        let mut out = src.to_vec();
        let mult = self.d1_mult.clone();
        self.apply_axis_filter(&mut out, axis, &mult);
        out
    }

    /// Spectral second derivative along `axis`.
    pub fn second_derivative(&mut self, src: &[Complex64], axis: usize) -> Vec<Complex64> {
        let mut out = src.to_vec();
        let mult = self.d2_mult.clone();
        self.apply_axis_filter(&mut out, axis, &mult);
        out
    }

    /// Mixed derivative d^2/dx_0 dx_1 for two-particle grids.
    pub fn mixed_derivative(&mut self, src: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.particles, 2);
        let d1 = self.derivative(src, 1);
        let mult = self.d1_mult.clone();
        let mut out = d1;
        self.apply_axis_filter(&mut out, 0, &mult);
        out
    }

    /// Real-field variants used for density post-processing.
    pub fn derivative_real(&mut self, src: &[f64], axis: usize) -> Vec<f64> {
        let buf: Vec<Complex64> = src.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let d = {
            let mut out = buf;
            let mult = self.d1_mult.clone();
            self.apply_axis_filter(&mut out, axis, &mult);
            out
        };
        d.iter().map(|c| c.re).collect()
    }

    pub fn second_derivative_real(&mut self, src: &[f64], axis: usize) -> Vec<f64> {
        let buf: Vec<Complex64> = src.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let d = {
            let mut out = buf;
            let mult = self.d2_mult.clone();
            self.apply_axis_filter(&mut out, axis, &mult);
            out
        };
        d.iter().map(|c| c.re).collect()
    }
}

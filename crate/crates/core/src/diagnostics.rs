//! Per-sample expectation values, energy bookkeeping, correlation functions,
//! and the equipartition/virial/correlation thermalization detectors.

use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::lattice::{pairwise_csum_by, pairwise_sum_by, WaveFunction};
use crate::model::PotentialField;
use crate::weakfields::WeakFieldSet;

/// Cross-check tolerance shared by the in-sample identities.
pub const IDENTITY_RTOL: f64 = 1e-6;

/// Bit flags recording which in-sample cross-check failed.
pub mod flags {
    /// Spectral vs weak-field kinetic routes disagreed.
    pub const KINETIC_ROUTE: u32 = 1;
    /// C_pp differed from C_vv + C_uu.
    pub const CORRELATION_SUM: u32 = 2;
    /// Re C_weak differed from 2 C_uu or Im C_weak was not small.
    pub const WEAK_CORRELATION: u32 = 4;
}

/// One time sample of every tracked expectation value.
#[derive(Debug, Clone)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub norm: f64,
    /// Per-particle means.
    pub x_mean: Vec<f64>,
    pub p_mean: Vec<f64>,
    pub v_mean: Vec<f64>,
    pub u_mean: Vec<f64>,
    /// Total orthodox kinetic energy (spectral route).
    pub k_total: f64,
    pub v_h_mean: f64,
    pub v_i_mean: f64,
    pub v_d_mean: f64,
    pub h_total: f64,
    /// Per-particle Bohmian kinetic <v_j^2>/2 and quantum potential <u_j^2>/2.
    pub k_b: Vec<f64>,
    pub q_b: Vec<f64>,
    pub c_pp: f64,
    pub c_vv: f64,
    pub c_uu: f64,
    pub c_xx: f64,
    pub c_weak: Complex64,
    pub equipartition_ratio: f64,
    pub virial_ratio: f64,
    pub masked_probability: f64,
    pub flags: u32,
}

impl DiagnosticsRecord {
    pub fn k_b_total(&self) -> f64 {
        self.k_b.iter().sum()
    }

    pub fn q_b_total(&self) -> f64 {
        self.q_b.iter().sum()
    }
}

/// Quadratures (<v_j v_l>, <u_j u_l>, <u_j v_l>, <v_j u_l>) with
/// removable-limit completion.
///
/// The exchange diagonal of an antisymmetric state holds exact zeros of psi.
/// The integrands u_j u_l |psi|^2 have finite limits there, carried entirely
/// by the osmotic part: Re[(d_j psi) conj(d_l psi)]. Summing only unmasked
/// nodes would lose an O(dx) slice of the integral, so masked nodes
/// contribute that limit instead of the (divergent) field values.
pub fn velocity_product_means(
    psi: &WaveFunction,
    wf: &WeakFieldSet,
    j: usize,
    l: usize,
) -> (f64, f64, f64, f64) {
    let n = psi.amplitudes.len();
    let dvol = psi.grid.cell_volume();
    let amps = &psi.amplitudes;
    let (vj, uj) = (&wf.v[j], &wf.u[j]);
    let (vl, ul) = (&wf.v[l], &wf.u[l]);
    let (dj, dl) = (wf.derivative(j), wf.derivative(l));
    let mask = &wf.mask;
    let vv = pairwise_sum_by(0, n, &|i| {
        if mask[i] {
            0.0
        } else {
            vj[i] * vl[i] * amps[i].norm_sqr()
        }
    }) * dvol;
    let uu = pairwise_sum_by(0, n, &|i| {
        if mask[i] {
            (dj[i] * dl[i].conj()).re
        } else {
            uj[i] * ul[i] * amps[i].norm_sqr()
        }
    }) * dvol;
    let uv = pairwise_sum_by(0, n, &|i| {
        if mask[i] {
            0.0
        } else {
            uj[i] * vl[i] * amps[i].norm_sqr()
        }
    }) * dvol;
    let vu = pairwise_sum_by(0, n, &|i| {
        if mask[i] {
            0.0
        } else {
            vj[i] * ul[i] * amps[i].norm_sqr()
        }
    }) * dvol;
    (vv, uu, uv, vu)
}

/// Masked quadratures of the velocity-gradient fields d_j u_l and d_j v_l,
/// with the same node completion as [`velocity_product_means`].
pub fn gradient_means(
    psi: &WaveFunction,
    wf: &WeakFieldSet,
    j: usize,
    l: usize,
) -> Result<(f64, f64)> {
    let n = psi.amplitudes.len();
    let dvol = psi.grid.cell_volume();
    let amps = &psi.amplitudes;
    let dj = wf.derivative(j);
    let dl = wf.derivative(l);
    let djl = if j == l {
        &wf.d2psi_diag[j]
    } else {
        wf.d2psi_mixed.as_ref().ok_or(CoreError::GridMismatch)?
    };
    let mask = &wf.mask;
    let du = pairwise_sum_by(0, n, &|i| {
        if mask[i] {
            -(dj[i] * dl[i].conj()).re
        } else {
            let a = amps[i];
            let gj = dj[i] / a;
            let gl = dl[i] / a;
            (djl[i] / a - gj * gl).re * a.norm_sqr()
        }
    }) * dvol;
    let dv = pairwise_sum_by(0, n, &|i| {
        if mask[i] {
            0.0
        } else {
            let a = amps[i];
            let gj = dj[i] / a;
            let gl = dl[i] / a;
            (djl[i] / a - gj * gl).im * a.norm_sqr()
        }
    }) * dvol;
    Ok((du, dv))
}

/// Assemble a full diagnostics record from one state, its trap, and its weak
/// fields. Cross-check failures set flags; they never abort the run.
pub fn sample(
    psi: &WaveFunction,
    potential: &PotentialField,
    wf: &WeakFieldSet,
) -> Result<DiagnosticsRecord> {
    if potential.grid != psi.grid || wf.grid != psi.grid {
        return Err(CoreError::GridMismatch);
    }
    let grid = &psi.grid;
    let np = grid.particles();
    let n = grid.total_points();
    let dvol = grid.cell_volume();
    let amps = &psi.amplitudes;

    let norm = psi.norm_sq();
    let mut x_mean = vec![0.0; np];
    let mut p_mean = vec![0.0; np];
    let mut v_mean = vec![0.0; np];
    let mut u_mean = vec![0.0; np];
    let mut k_spectral = vec![0.0; np];
    let mut k_b = vec![0.0; np];
    let mut q_b = vec![0.0; np];
    let mut flags_out = 0u32;

    for j in 0..np {
        x_mean[j] = pairwise_sum_by(0, n, &|i| {
            grid.coordinate(i, j) * amps[i].norm_sqr()
        }) * dvol;
        let dj = wf.derivative(j);
        p_mean[j] = pairwise_csum_by(0, n, &|i| amps[i].conj() * dj[i]).im * dvol;
        k_spectral[j] =
            0.5 * pairwise_sum_by(0, n, &|i| dj[i].norm_sqr()) * dvol;
        let mask = &wf.mask;
        let (vjf, ujf) = (&wf.v[j], &wf.u[j]);
        v_mean[j] = pairwise_sum_by(0, n, &|i| {
            if mask[i] {
                0.0
            } else {
                vjf[i] * amps[i].norm_sqr()
            }
        }) * dvol;
        u_mean[j] = pairwise_sum_by(0, n, &|i| {
            if mask[i] {
                0.0
            } else {
                ujf[i] * amps[i].norm_sqr()
            }
        }) * dvol;
        let (vv, uu, _, _) = velocity_product_means(psi, wf, j, j);
        k_b[j] = 0.5 * vv;
        q_b[j] = 0.5 * uu;
        let k_weak = k_b[j] + q_b[j];
        if (k_weak - k_spectral[j]).abs() > IDENTITY_RTOL * k_spectral[j].abs().max(1e-12) {
            flags_out |= flags::KINETIC_ROUTE;
        }
    }

    let k_total: f64 = k_spectral.iter().sum();
    let v_h_mean = pairwise_sum_by(0, n, &|i| {
        potential.harmonic()[i] * amps[i].norm_sqr()
    }) * dvol;
    let v_i_mean = pairwise_sum_by(0, n, &|i| {
        potential.interaction()[i] * amps[i].norm_sqr()
    }) * dvol;
    let v_d_mean = pairwise_sum_by(0, n, &|i| {
        potential.disorder()[i] * amps[i].norm_sqr()
    }) * dvol;
    let h_total = k_total + v_h_mean + v_i_mean + v_d_mean;

    let (mut c_pp, mut c_vv, mut c_uu, mut c_xx) = (0.0, 0.0, 0.0, 0.0);
    let mut c_weak = Complex64::new(0.0, 0.0);
    if np == 2 {
        let d0 = wf.derivative(0);
        let d1 = wf.derivative(1);
        let pp = pairwise_csum_by(0, n, &|i| d0[i].conj() * d1[i]).re * dvol;
        c_pp = pp - p_mean[0] * p_mean[1];
        let (vv, uu, _, _) = velocity_product_means(psi, wf, 0, 1);
        c_vv = vv - v_mean[0] * v_mean[1];
        c_uu = uu - u_mean[0] * u_mean[1];
        let xx = pairwise_sum_by(0, n, &|i| {
            grid.coordinate(i, 0) * grid.coordinate(i, 1) * amps[i].norm_sqr()
        }) * dvol;
        c_xx = xx - x_mean[0] * x_mean[1];
        // Bilinear weak expectation <p_w,12> = -<(d1 d2 psi) conj(psi)>; the
        // integrand vanishes at nodes so no completion is needed.
        let mixed = wf.d2psi_mixed.as_ref().ok_or(CoreError::GridMismatch)?;
        let pw12 = -pairwise_csum_by(0, n, &|i| mixed[i] * amps[i].conj()) * dvol;
        // Weak correlation: <p_w,12> minus the expectation of the product of
        // the two weak-momentum fields. At masked nodes the product integrand
        // has the finite limit -conj(d_0 psi) d_1 psi.
        let mask = &wf.mask;
        let (v0f, u0f, v1f, u1f) = (&wf.v[0], &wf.u[0], &wf.v[1], &wf.u[1]);
        let pw_prod = pairwise_csum_by(0, n, &|i| {
            if mask[i] {
                -(d0[i].conj() * d1[i])
            } else {
                Complex64::new(v0f[i], -u0f[i])
                    * Complex64::new(v1f[i], -u1f[i])
                    * amps[i].norm_sqr()
            }
        }) * dvol;
        c_weak = pw12 - pw_prod;

        let scale = c_pp.abs().max(1.0);
        if (c_pp - (c_vv + c_uu)).abs() > IDENTITY_RTOL * scale {
            flags_out |= flags::CORRELATION_SUM;
        }
        // Only the real part is an exact identity. Im C_weak equals
        // <u_1 v_2> + <v_1 u_2>, the relative-frame breathing rate, which is
        // O(1) during collisions and only dephases to ~0 after t_eq; it is
        // recorded as data rather than gated here.
        if (c_weak.re - 2.0 * c_uu).abs() > IDENTITY_RTOL * c_uu.abs().max(1.0) {
            flags_out |= flags::WEAK_CORRELATION;
        }
    }

    let k_b_total: f64 = k_b.iter().sum();
    let q_b_total: f64 = q_b.iter().sum();
    let equipartition_ratio = if q_b_total != 0.0 { k_b_total / q_b_total } else { f64::NAN };
    let virial_ratio = if v_h_mean != 0.0 { k_total / v_h_mean } else { f64::NAN };

    Ok(DiagnosticsRecord {
        t: psi.time,
        norm,
        x_mean,
        p_mean,
        v_mean,
        u_mean,
        k_total,
        v_h_mean,
        v_i_mean,
        v_d_mean,
        h_total,
        k_b,
        q_b,
        c_pp,
        c_vv,
        c_uu,
        c_xx,
        c_weak,
        equipartition_ratio,
        virial_ratio,
        masked_probability: wf.masked_probability,
        flags: flags_out,
    })
}

/// Which indicator a verdict was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Equipartition,
    Virial,
    Correlation,
}

impl Channel {
    pub fn name(&self) -> &'static str {
        match self {
            Channel::Equipartition => "equipartition",
            Channel::Virial => "virial",
            Channel::Correlation => "correlation",
        }
    }

    /// Whether a record sits inside the channel's thermalization band.
    pub fn satisfied(&self, rec: &DiagnosticsRecord, delta: f64) -> bool {
        match self {
            Channel::Equipartition => {
                (rec.k_b_total() - rec.q_b_total()).abs() <= delta * rec.k_total.abs()
            }
            Channel::Virial => (rec.k_total - rec.v_h_mean).abs() <= delta * rec.v_h_mean.abs(),
            Channel::Correlation => {
                (rec.c_vv - rec.c_uu).abs() <= delta * rec.c_pp.abs() + 1e-6
            }
        }
    }
}

/// Default detector threshold.
pub const DEFAULT_DELTA: f64 = 0.1;
/// Default trailing window (time units) the indicator must hold for.
pub const DEFAULT_WINDOW: f64 = 20.0;

#[derive(Debug, Clone)]
pub struct ThermalizationVerdict {
    pub t_eq: Option<f64>,
    pub window: f64,
    pub delta: f64,
    pub channel: Channel,
}

/// Earliest sample time after which the channel indicator stays within
/// `delta` for every sample in the next `window` of time. The window must be
/// fully simulated for a candidate to qualify.
pub fn detect_t_eq_channel(
    series: &[DiagnosticsRecord],
    delta: f64,
    window: f64,
    channel: Channel,
) -> Result<ThermalizationVerdict> {
    if series.is_empty() {
        return Err(CoreError::EmptySeries);
    }
    let t_first = series[0].t;
    let t_last = series[series.len() - 1].t;
    if !(window > 0.0) || window >= t_last - t_first {
        return Err(CoreError::InvalidParameter(format!(
            "window {window} not inside series span {}",
            t_last - t_first
        )));
    }
    // Prefix counts of out-of-band samples for O(1) window queries.
    let mut bad_prefix = vec![0usize; series.len() + 1];
    for (i, rec) in series.iter().enumerate() {
        bad_prefix[i + 1] = bad_prefix[i] + usize::from(!channel.satisfied(rec, delta));
    }
    for (i, rec) in series.iter().enumerate() {
        let t_end = rec.t + window;
        if t_end > t_last {
            break;
        }
        let hi = series.partition_point(|r| r.t <= t_end);
        if bad_prefix[hi] - bad_prefix[i] == 0 {
            return Ok(ThermalizationVerdict {
                t_eq: Some(rec.t),
                window,
                delta,
                channel,
            });
        }
    }
    Ok(ThermalizationVerdict { t_eq: None, window, delta, channel })
}

/// Equipartition-channel detector (the primary signature).
pub fn detect_t_eq(
    series: &[DiagnosticsRecord],
    delta: f64,
    window: f64,
) -> Result<ThermalizationVerdict> {
    detect_t_eq_channel(series, delta, window, Channel::Equipartition)
}

/// Max over interior samples of |d<x_j>/dt - <v_j>| using centered
/// differences on a uniformly sampled series.
pub fn ehrenfest_check(series: &[DiagnosticsRecord]) -> Result<f64> {
    if series.len() < 3 {
        return Err(CoreError::TooFewSamples { need: 3, got: series.len() });
    }
    let dt = series[1].t - series[0].t;
    for w in series.windows(2) {
        let step = w[1].t - w[0].t;
        if (step - dt).abs() > 1e-9 * dt.abs().max(1e-12) {
            return Err(CoreError::InvalidParameter(
                "ehrenfest check needs uniform sampling".into(),
            ));
        }
    }
    let np = series[0].x_mean.len();
    let mut worst = 0.0f64;
    for i in 1..series.len() - 1 {
        for j in 0..np {
            let slope = (series[i + 1].x_mean[j] - series[i - 1].x_mean[j]) / (2.0 * dt);
            worst = worst.max((slope - series[i].v_mean[j]).abs());
        }
    }
    Ok(worst)
}

//! Dense complex LU factorization used by the Crank-Nicolson oracle.
//!
//! The matrix is stored as separate real/imaginary planes so the rank-1
//! update runs over contiguous f64 streams.

use num_complex::Complex64;

use crate::error::{CoreError, Result};

pub(crate) struct DenseLu {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    /// Factor A = P L U in place with partial pivoting.
    pub fn factor(mut re: Vec<f64>, mut im: Vec<f64>, n: usize) -> Result<Self> {
        assert_eq!(re.len(), n * n);
        assert_eq!(im.len(), n * n);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let mut best = k;
            let mut best_mag = re[k * n + k].powi(2) + im[k * n + k].powi(2);
            for i in k + 1..n {
                let mag = re[i * n + k].powi(2) + im[i * n + k].powi(2);
                if mag > best_mag {
                    best_mag = mag;
                    best = i;
                }
            }
            if best_mag == 0.0 {
                return Err(CoreError::SingularMatrix(k));
            }
            piv[k] = best;
            if best != k {
                for j in 0..n {
                    re.swap(k * n + j, best * n + j);
                    im.swap(k * n + j, best * n + j);
                }
            }
            let pr = re[k * n + k];
            let pi = im[k * n + k];
            let inv_mag = 1.0 / (pr * pr + pi * pi);
            let (ir, ii) = (pr * inv_mag, -pi * inv_mag);
            let row_k_start = k * n;
            for i in k + 1..n {
                let row_i = i * n;
                let ar = re[row_i + k];
                let ai = im[row_i + k];
                let mr = ar * ir - ai * ii;
                let mi = ar * ii + ai * ir;
                re[row_i + k] = mr;
                im[row_i + k] = mi;
                if mr == 0.0 && mi == 0.0 {
                    continue;
                }
                let (re_head, re_tail) = re.split_at_mut(row_i);
                let (im_head, im_tail) = im.split_at_mut(row_i);
                let rk = &re_head[row_k_start + k + 1..row_k_start + n];
                let ik = &im_head[row_k_start + k + 1..row_k_start + n];
                let ri = &mut re_tail[k + 1..n];
                let ii_row = &mut im_tail[k + 1..n];
                for j in 0..rk.len() {
                    let br = rk[j];
                    let bi = ik[j];
                    ri[j] -= mr * br - mi * bi;
                    ii_row[j] -= mr * bi + mi * br;
                }
            }
        }
        Ok(Self { n, re, im, piv })
    }

    /// Solve A x = b in place.
    pub fn solve(&self, b: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        // L y = P b (unit lower triangle).
        for i in 1..n {
            let row = i * n;
            let mut acc = b[i];
            for j in 0..i {
                let l = Complex64::new(self.re[row + j], self.im[row + j]);
                acc -= l * b[j];
            }
            b[i] = acc;
        }
        // U x = y.
        for i in (0..n).rev() {
            let row = i * n;
            let mut acc = b[i];
            for j in i + 1..n {
                let u = Complex64::new(self.re[row + j], self.im[row + j]);
                acc -= u * b[j];
            }
            b[i] = acc / Complex64::new(self.re[row + i], self.im[row + i]);
        }
    }
}

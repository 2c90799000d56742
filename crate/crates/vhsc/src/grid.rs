//! Periodic lattices and unitary Fourier transforms.
//!
//! Position fields are stored row-major with `N^d` entries. Fourier-side
//! arrays use the usual FFT index order: bin `i` carries the wave number
//! `k = 2 pi m / L` with `m = i` for `i < N/2` and `m = i - N` otherwise.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized in-place 1-D DFT. `inverse` selects the `e^{+i}` kernel.
pub fn fft_inplace(buf: &mut [Complex64], inverse: bool) {
    if buf.len() <= 1 {
        return;
    }
    let plan = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        }
    });
    plan.process(buf);
}

/// Unnormalized in-place DFT applied to every row of a row-major
/// `rows x cols` array.
pub fn fft_rows(buf: &mut [Complex64], cols: usize, inverse: bool) {
    if cols <= 1 {
        return;
    }
    let plan = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(cols)
        } else {
            p.plan_fft_forward(cols)
        }
    });
    plan.process(buf);
}

/// Unnormalized in-place DFT applied to every column of a row-major array.
pub fn fft_cols(buf: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    let mut col = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = buf[r * cols + c];
        }
        fft_inplace(&mut col, inverse);
        for r in 0..rows {
            buf[r * cols + c] = col[r];
        }
    }
}

/// Signed mode number of FFT bin `i` out of `n`.
pub fn signed_mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// FFT bin holding the signed mode `m` (taken modulo `n`).
pub fn bin_of_mode(m: i64, n: usize) -> usize {
    m.rem_euclid(n as i64) as usize
}

/// Periodic truncation of `R^d` shared by the quantum and classical solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusGrid {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub hbar: f64,
    #[serde(rename = "Nv")]
    pub nv: usize,
    pub vmax: f64,
}

impl TorusGrid {
    pub fn new(d: usize, l: f64, n: usize, hbar: f64, nv: usize, vmax: f64) -> Result<Self> {
        let g = TorusGrid { d, l, n, hbar, nv, vmax };
        g.validate()?;
        Ok(g)
    }

    /// One-dimensional grid whose classical velocity lattice is unused.
    pub fn quantum_1d(l: f64, n: usize, hbar: f64) -> Result<Self> {
        Self::new(1, l, n, hbar, n, hbar * PI * n as f64 / l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d == 1 || self.d == 2) {
            return Err(Error::Config(format!("dimension {} not supported", self.d)));
        }
        if self.n == 0 || self.n % 2 != 0 || self.nv == 0 || self.nv % 2 != 0 {
            return Err(Error::Config(format!("N = {} and Nv = {} must be even and positive", self.n, self.nv)));
        }
        if !(self.l > 0.0 && self.hbar > 0.0 && self.vmax > 0.0) {
            return Err(Error::Config("L, hbar and vmax must be positive".into()));
        }
        Ok(())
    }

    /// Number of position points `N^d`.
    pub fn npos(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Number of classical velocity points `Nv^d`.
    pub fn nvel(&self) -> usize {
        self.nv.pow(self.d as u32)
    }

    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn cell(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    /// Minimum-image representative of `x` in `[-L/2, L/2)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.l;
        (x + 0.5 * l).rem_euclid(l) - 0.5 * l
    }

    /// Wave number of FFT bin `i`.
    pub fn k(&self, i: usize) -> f64 {
        2.0 * PI * signed_mode(i, self.n) as f64 / self.l
    }

    /// Wave numbers in FFT order.
    pub fn ks(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.k(i)).collect()
    }

    /// Quantum velocity spacing `2 pi hbar / L`.
    pub fn dv_quantum(&self) -> f64 {
        2.0 * PI * self.hbar / self.l
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.vmax / self.nv as f64
    }

    /// Classical velocity node `n` on `[-vmax, vmax)`.
    pub fn v(&self, n: usize) -> f64 {
        -self.vmax + n as f64 * self.dv()
    }

    pub fn vs(&self) -> Vec<f64> {
        (0..self.nv).map(|n| self.v(n)).collect()
    }

    pub fn phase_cell(&self) -> f64 {
        self.cell() * self.dv().powi(self.d as i32)
    }

    /// Coordinates of position point `j` (row-major over axes).
    pub fn position(&self, j: usize) -> [f64; 2] {
        if self.d == 1 {
            [self.x(j), 0.0]
        } else {
            [self.x(j / self.n), self.x(j % self.n)]
        }
    }

    /// Samples `f` on the position lattice.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.npos())
            .map(|j| {
                let p = self.position(j);
                f(&p[..self.d])
            })
            .collect()
    }

    /// Samples `f` at the minimum-image coordinates of the lattice.
    pub fn sample_centered<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.npos())
            .map(|j| {
                let p = self.position(j);
                let q = [self.wrap(p[0]), self.wrap(p[1])];
                f(&q[..self.d])
            })
            .collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.npos() {
            return Err(Error::SizeMismatch { expected: self.npos(), got: len });
        }
        Ok(())
    }

    fn dft_unnormalized(&self, buf: &mut [Complex64], inverse: bool) {
        if self.d == 1 {
            fft_inplace(buf, inverse);
        } else {
            fft_rows(buf, self.n, inverse);
            fft_cols(buf, self.n, self.n, inverse);
        }
    }

    /// Unitary forward transform to the momentum lattice.
    pub fn forward_fft(&self, field: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(field.len())?;
        let mut out = field.to_vec();
        self.dft_unnormalized(&mut out, false);
        let s = 1.0 / (self.npos() as f64).sqrt();
        out.iter_mut().for_each(|z| *z *= s);
        Ok(out)
    }

    /// Unitary inverse of [`Self::forward_fft`].
    pub fn inverse_fft(&self, field: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(field.len())?;
        let mut out = field.to_vec();
        self.dft_unnormalized(&mut out, true);
        let s = 1.0 / (self.npos() as f64).sqrt();
        out.iter_mut().for_each(|z| *z *= s);
        Ok(out)
    }

    /// Unnormalized forward DFT of a real field.
    pub fn dft_real(&self, f: &[f64]) -> Result<Vec<Complex64>> {
        self.check_len(f.len())?;
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.dft_unnormalized(&mut buf, false);
        Ok(buf)
    }

    /// Real part of the inverse DFT of `spec`, divided by `N^d`.
    pub fn idft_real(&self, spec: &[Complex64]) -> Result<Vec<f64>> {
        self.check_len(spec.len())?;
        let mut buf = spec.to_vec();
        self.dft_unnormalized(&mut buf, true);
        let s = 1.0 / self.npos() as f64;
        Ok(buf.iter().map(|z| z.re * s).collect())
    }

    /// Periodic approximation of `int f(x - y) g(y) dy`.
    pub fn convolve_periodic(&self, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        self.check_len(g.len())?;
        let fh = self.dft_real(f)?;
        let gh = self.dft_real(g)?;
        let prod: Vec<Complex64> = fh.iter().zip(&gh).map(|(a, b)| a * b).collect();
        let cell = self.cell();
        Ok(self.idft_real(&prod)?.into_iter().map(|x| x * cell).collect())
    }

    /// Spectral gradient of a real field, one component per axis. The
    /// Nyquist mode is dropped so the result stays real.
    pub fn gradient(&self, f: &[f64]) -> Result<Vec<Vec<f64>>> {
        let fh = self.dft_real(f)?;
        let n = self.n;
        let mut out = Vec::with_capacity(self.d);
        for axis in 0..self.d {
            let spec: Vec<Complex64> = (0..self.npos())
                .map(|j| {
                    let i = if self.d == 1 {
                        j
                    } else if axis == 0 {
                        j / n
                    } else {
                        j % n
                    };
                    if i == n / 2 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        fh[j] * Complex64::new(0.0, self.k(i))
                    }
                })
                .collect();
            out.push(self.idft_real(&spec)?);
        }
        Ok(out)
    }

    /// Cell-weighted integral of a position field.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.cell()
    }
}

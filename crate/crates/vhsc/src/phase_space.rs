//! Wigner and Husimi transforms, Weyl quantization and coherent states.
//!
//! Quantum phase-space fields live on `(x_j, v_n)` with `v_n = hbar k_m`
//! for `m = n - N/2`, i.e. the velocity lattice of
//! [`TorusGrid::quantum_1d`]. Half shifts in the Wigner kernel are taken on
//! the doubled position lattice, so the density marginal is exact.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{bin_of_mode, fft_inplace, fft_rows, fft_cols, TorusGrid};
use crate::hartree::{hermitize, to_momentum, QuantumState};
use crate::vlasov::PhaseField;

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Real phase-space symbol `a(x, v)`. Positions are passed as minimum-image
/// coordinates.
#[derive(Clone)]
pub enum Symbol {
    Zero,
    Constant(f64),
    /// `amplitude * prod_i exp(-(x_i - x0)^2 / (2 sx^2) - (v_i - v0)^2 / (2 sv^2))`.
    Gaussian { amplitude: f64, x0: f64, sx: f64, v0: f64, sv: f64 },
    Custom(Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Zero => write!(f, "Zero"),
            Symbol::Constant(c) => write!(f, "Constant({c})"),
            Symbol::Gaussian { amplitude, x0, sx, v0, sv } => {
                write!(f, "Gaussian {{ amplitude: {amplitude}, x0: {x0}, sx: {sx}, v0: {v0}, sv: {sv} }}")
            }
            Symbol::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Symbol {
    pub fn custom<F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Symbol::Custom(Arc::new(f))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Symbol::Zero => true,
            Symbol::Constant(c) => *c == 0.0,
            Symbol::Gaussian { amplitude, .. } => *amplitude == 0.0,
            Symbol::Custom(_) => false,
        }
    }

    pub fn eval(&self, x: &[f64], v: &[f64]) -> f64 {
        match self {
            Symbol::Zero => 0.0,
            Symbol::Constant(c) => *c,
            Symbol::Gaussian { .. } => {
                let (ax, av) = self.separable_parts().expect("separable");
                self.amplitude() * ax(x) * av(v)
            }
            Symbol::Custom(f) => f(x, v),
        }
    }

    fn amplitude(&self) -> f64 {
        match self {
            Symbol::Gaussian { amplitude, .. } => *amplitude,
            Symbol::Constant(c) => *c,
            _ => 1.0,
        }
    }

    #[allow(clippy::type_complexity)]
    fn separable_parts(&self) -> Option<(Box<dyn Fn(&[f64]) -> f64>, Box<dyn Fn(&[f64]) -> f64>)> {
        match *self {
            Symbol::Gaussian { x0, sx, v0, sv, .. } => Some((
                Box::new(move |x: &[f64]| x.iter().map(|t| (-(t - x0).powi(2) / (2.0 * sx * sx)).exp()).product()),
                Box::new(move |v: &[f64]| v.iter().map(|t| (-(t - v0).powi(2) / (2.0 * sv * sv)).exp()).product()),
            )),
            Symbol::Constant(_) => Some((Box::new(|_: &[f64]| 1.0), Box::new(|_: &[f64]| 1.0))),
            _ => None,
        }
    }
}

/// Weyl quantization of `a` as a Hermitian matrix on the momentum lattice.
pub fn weyl_quantize(a: &Symbol, grid: &TorusGrid) -> Result<DMatrix<Complex64>> {
    if grid.d != 1 {
        return Err(Error::Config("Weyl quantization is implemented for d = 1".into()));
    }
    let n = grid.n;
    if a.is_zero() {
        return Ok(DMatrix::from_element(n, n, C0));
    }
    if let Symbol::Constant(c) = a {
        return Ok(DMatrix::from_diagonal_element(n, n, Complex64::new(*c, 0.0)));
    }
    let dx = grid.dx();
    let mid = |j: usize, l: usize| {
        let y = grid.wrap((j as f64 - l as f64) * dx);
        grid.wrap(grid.x(l) + 0.5 * y)
    };
    // P_{jl} = (1/N) sum_m a(mid, hbar k_m) e^{2 pi i m (j - l) / N}
    let mut p = DMatrix::from_element(n, n, C0);
    if let Some((ax, av)) = a.separable_parts() {
        let mut kernel: Vec<Complex64> = (0..n).map(|i| Complex64::new(av(&[grid.hbar * grid.k(i)]), 0.0)).collect();
        fft_inplace(&mut kernel, true);
        let amp = a.amplitude() / n as f64;
        for l in 0..n {
            for j in 0..n {
                p[(j, l)] = kernel[(j + n - l) % n] * (amp * ax(&[mid(j, l)]));
            }
        }
    } else {
        let mut col = vec![C0; n];
        for l in 0..n {
            for j in 0..n {
                let xm = mid(j, l);
                for (i, c) in col.iter_mut().enumerate() {
                    *c = Complex64::new(a.eval(&[xm], &[grid.hbar * grid.k(i)]), 0.0);
                }
                fft_inplace(&mut col, true);
                p[(j, l)] = col[(j + n - l) % n] / n as f64;
            }
        }
    }
    hermitize(&mut p);
    let mut q = to_momentum(&p);
    hermitize(&mut q);
    Ok(q)
}

/// Grid carrying the quantum velocity lattice `v = hbar k`.
pub fn quantum_phase_grid(grid: &TorusGrid) -> TorusGrid {
    TorusGrid::quantum_1d(grid.l, grid.n, grid.hbar).expect("valid grid")
}

/// Kernel `K(a, b) = (1/L) sum Q_{mm'} e^{i pi (m a - m' b) / N}` on the
/// doubled lattice, row-major `2N x 2N`.
fn doubled_kernel(q: &DMatrix<Complex64>, l: f64) -> Vec<Complex64> {
    let n = q.nrows();
    let n2 = 2 * n;
    let mut e = vec![C0; n2 * n2];
    for i in 0..n {
        let mi = crate::grid::signed_mode(i, n);
        let r = bin_of_mode(mi, n2);
        for ip in 0..n {
            let mp = crate::grid::signed_mode(ip, n);
            e[r * n2 + bin_of_mode(mp, n2)] = q[(i, ip)];
        }
    }
    fft_cols(&mut e, n2, n2, true);
    fft_rows(&mut e, n2, false);
    let s = 1.0 / l;
    e.iter_mut().for_each(|z| *z *= s);
    e
}

/// Wigner transform of `Q` alone, row-major `(x_j, v_n)`, and the largest
/// imaginary part encountered.
pub fn wigner_matrix(q: &DMatrix<Complex64>, grid: &TorusGrid) -> (Vec<f64>, f64) {
    let n = grid.n;
    let n2 = 2 * n;
    let k = doubled_kernel(q, grid.l);
    let at = |a: i64, b: i64| k[bin_of_mode(a, n2) * n2 + bin_of_mode(b, n2)];
    let half = (n / 2) as i64;
    let mut out = vec![0.0; n * n];
    let mut max_im = 0.0f64;
    let mut t = vec![C0; n];
    for j in 0..n {
        let c = 2 * j as i64;
        for s in -half..half {
            let v = if s == -half { 0.5 * (at(c + s, c - s) + at(c - s, c + s)) } else { at(c + s, c - s) };
            t[bin_of_mode(s, n)] = v;
        }
        fft_inplace(&mut t, false);
        for nn in 0..n {
            let z = t[bin_of_mode(nn as i64 - half, n)] * grid.dx();
            max_im = max_im.max(z.im.abs());
            out[j * n + nn] = z.re;
        }
    }
    (out, max_im)
}

/// Wigner transform of a quantum state.
pub fn wigner(state: &QuantumState) -> PhaseField {
    wigner_with_imag(state).0
}

/// As [`wigner`], also returning the largest discarded imaginary part.
pub fn wigner_with_imag(state: &QuantumState) -> (PhaseField, f64) {
    let grid = quantum_phase_grid(&state.grid);
    let n = grid.n;
    let background: Vec<f64> = (0..n).map(|nn| state.background[bin_of_mode(nn as i64 - (n / 2) as i64, n)]).collect();
    let (pert, im) = wigner_matrix(&state.q, &grid);
    (PhaseField::from_parts(grid, background, pert), im)
}

/// Coherent-state window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Window {
    /// `chi(y) = (pi w^2)^{-1/4} exp(-y^2 / (2 w^2))`.
    #[serde(rename = "gaussian")]
    Gaussian { width: f64 },
    /// `chi_hat` a smooth bump supported in `|xi| < radius`.
    #[serde(rename = "compact_fourier")]
    CompactFourier { radius: f64 },
}

impl Window {
    /// Fourier support radius `R` of `chi_hat`, if finite.
    pub fn radius(&self) -> Option<f64> {
        match *self {
            Window::Gaussian { .. } => None,
            Window::CompactFourier { radius } => Some(radius),
        }
    }
}

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

/// Coherent states `chi^hbar_{x,v}` on a one-dimensional grid.
#[derive(Clone, Debug)]
pub struct CoherentFamily {
    pub window: Window,
    pub grid: TorusGrid,
    /// Window centred at 0 as a unit vector on the position lattice.
    pub position: Vec<Complex64>,
    /// Unitary Fourier coefficients of [`Self::position`], FFT order.
    pub alpha: Vec<Complex64>,
}

impl CoherentFamily {
    pub fn new(window: Window, grid: &TorusGrid) -> Result<Self> {
        if grid.d != 1 {
            return Err(Error::Config("coherent states are implemented for d = 1".into()));
        }
        let grid = quantum_phase_grid(grid);
        let h = grid.hbar;
        let (position, alpha) = match window {
            Window::Gaussian { width } => {
                let s = width * h.sqrt();
                let mut c: Vec<Complex64> =
                    (0..grid.n).map(|j| Complex64::new((-grid.wrap(grid.x(j)).powi(2) / (2.0 * s * s)).exp(), 0.0)).collect();
                normalize(&mut c);
                let a = grid.forward_fft(&c)?;
                (c, a)
            }
            Window::CompactFourier { radius } => {
                let mut a: Vec<Complex64> = (0..grid.n).map(|i| Complex64::new(bump(h.sqrt() * grid.k(i) / radius), 0.0)).collect();
                normalize(&mut a);
                let c = grid.inverse_fft(&a)?;
                (c, a)
            }
        };
        Ok(CoherentFamily { window, grid, position, alpha })
    }

    /// Cell-weighted `int chi^2`; unity up to roundoff.
    pub fn norm(&self) -> f64 {
        self.position.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Momentum coefficients of `chi_{x_j, v_n}`.
    pub fn state(&self, j: usize, nn: usize) -> Vec<Complex64> {
        let n = self.grid.n;
        let shift = nn as i64 - (n / 2) as i64;
        (0..n)
            .map(|i| {
                let m = crate::grid::signed_mode(i, n);
                let a = self.alpha[bin_of_mode(m - shift, n)];
                a * Complex64::from_polar(1.0, -(self.grid.k(i) - 2.0 * PI * shift as f64 / self.grid.l) * self.grid.x(j))
            })
            .collect()
    }

    /// `sum_m g_m |alpha(m - n)|^2`, the Husimi transform of `diag(g)`.
    pub fn smooth_background(&self, background_fft: &[f64]) -> Vec<f64> {
        let n = self.grid.n;
        let half = (n / 2) as i64;
        (0..n)
            .map(|nn| {
                let shift = nn as i64 - half;
                (0..n)
                    .map(|i| background_fft[i] * self.alpha[bin_of_mode(crate::grid::signed_mode(i, n) - shift, n)].norm_sqr())
                    .sum()
            })
            .collect()
    }

    /// Phase-space kernel `W^1_chi(y / sqrt hbar, u / sqrt hbar)` on the
    /// lattice offsets, row-major `(x, v)` with offsets in natural order
    /// centred at index `N/2`... stored in FFT order for correlation.
    fn moyal_kernel(&self) -> Vec<f64> {
        let g = &self.grid;
        let n = g.n;
        match self.window {
            Window::Gaussian { width } => {
                let h = g.hbar;
                let period_v = 2.0 * g.vmax;
                let mut k = vec![0.0; n * n];
                for a in 0..n {
                    let y = g.wrap(g.x(a));
                    for b in 0..n {
                        let u = crate::grid::signed_mode(b, n) as f64 * g.dv();
                        let u = (u + 0.5 * period_v).rem_euclid(period_v) - 0.5 * period_v;
                        k[a * n + b] = 2.0 * (-(y * y) / (width * width * h) - width * width * u * u / h).exp();
                    }
                }
                k
            }
            Window::CompactFourier { .. } => {
                let c = &self.alpha;
                let q = DMatrix::from_fn(n, n, |i, j| c[i] * c[j].conj());
                let (w, _) = wigner_matrix(&q, g);
                // natural velocity order -> FFT order in the offset
                let half = n / 2;
                let mut k = vec![0.0; n * n];
                for a in 0..n {
                    for b in 0..n {
                        k[a * n + b] = w[a * n + (b + half) % n];
                    }
                }
                k
            }
        }
    }
}

fn normalize(c: &mut [Complex64]) {
    let s = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    c.iter_mut().for_each(|z| *z /= s);
}

/// Husimi field together with the total clipped magnitude.
#[derive(Clone, Debug)]
pub struct HusimiField {
    pub field: PhaseField,
    pub clipped: f64,
    pub min_before_clip: f64,
}

/// Circular correlation `out(j, n) = sum w(j', n') k(j' - j, n' - n)`.
fn correlate(w: &[f64], k: &[f64], n: usize) -> Vec<f64> {
    let mut a: Vec<Complex64> = w.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut b: Vec<Complex64> = k.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    for buf in [&mut a, &mut b] {
        fft_rows(buf, n, false);
        fft_cols(buf, n, n, false);
    }
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y.conj();
    }
    fft_rows(&mut a, n, true);
    fft_cols(&mut a, n, n, true);
    let s = 1.0 / (n * n) as f64;
    a.iter().map(|z| z.re * s).collect()
}

/// Husimi transform by smoothing the Wigner transform with the window's
/// phase-space kernel. The background is smoothed exactly.
pub fn husimi(state: &QuantumState, family: &CoherentFamily, cap: f64) -> Result<HusimiField> {
    let g = &family.grid;
    let n = g.n;
    let background = family.smooth_background(&state.background);
    let (wq, _) = wigner_matrix(&state.q, g);
    let kern = family.moyal_kernel();
    // dx dv / (2 pi hbar) = 1 / N
    let mut pert: Vec<f64> = correlate(&wq, &kern, n).into_iter().map(|x| x / n as f64).collect();
    let mut clipped = 0.0;
    let mut min_total = f64::INFINITY;
    for j in 0..n {
        for nn in 0..n {
            let idx = j * n + nn;
            let m = background[nn] + pert[idx];
            min_total = min_total.min(m);
            let c = m.clamp(0.0, cap);
            clipped += (c - m).abs();
            pert[idx] = c - background[nn];
        }
    }
    if min_total < -1e-6 {
        return Err(Error::Violation(format!("Husimi transform reached {min_total}")));
    }
    Ok(HusimiField { field: PhaseField::from_parts(g.clone(), background, pert), clipped, min_before_clip: min_total })
}

/// Direct evaluation `<chi_{x_j,v_n}, gamma chi_{x_j,v_n}>` at the given
/// lattice points.
pub fn husimi_direct(state: &QuantumState, family: &CoherentFamily, points: &[(usize, usize)]) -> Vec<f64> {
    let n = family.grid.n;
    points
        .iter()
        .map(|&(j, nn)| {
            let c = family.state(j, nn);
            let mut acc = C0;
            for b in 0..n {
                let mut row = C0;
                for a in 0..n {
                    row += c[a].conj() * state.q[(a, b)];
                }
                acc += row * c[b];
            }
            let bg: f64 = (0..n).map(|i| state.background[i] * c[i].norm_sqr()).sum();
            acc.re + bg
        })
        .collect()
}

/// Returns the velocity marginal of the Husimi field and the smoothed
/// density `hbar rho * (chi^hbar)^2(-.)`, with their max-norm gap.
pub fn husimi_density_check(state: &QuantumState, family: &CoherentFamily, cap: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let g = &family.grid;
    let n = g.n;
    let h = husimi(state, family, cap)?;
    let lhs = h.field.rho();
    let rho = state.density();
    let win: Vec<f64> = family.position.iter().map(|z| z.norm_sqr()).collect();
    let rhs: Vec<f64> = (0..n)
        .map(|j| g.hbar * (0..n).map(|l| rho[l] * win[(l + n - j) % n]).sum::<f64>())
        .collect();
    let gap = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((lhs, rhs, gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::EntropyModel;
    use crate::hartree::{build_initial_from_symbol, build_reference, kinetic};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, l: f64, hbar: f64) -> TorusGrid {
        TorusGrid::quantum_1d(l, n, hbar).unwrap()
    }

    pub(crate) fn random_packets(g: &TorusGrid, rng: &mut ChaCha8Rng, count: usize, weight: f64) -> DMatrix<Complex64> {
        let n = g.n;
        let mut q = DMatrix::from_element(n, n, C0);
        for _ in 0..count {
            let x0 = rng.gen_range(-1.0..1.0);
            let s = rng.gen_range(0.3..0.6);
            let p0 = rng.gen_range(-0.5..0.5);
            let pos: Vec<Complex64> = (0..n)
                .map(|j| {
                    let x = g.wrap(g.x(j) - x0);
                    Complex64::from_polar((-x * x / (2.0 * s * s)).exp(), p0 * x / g.hbar)
                })
                .collect();
            let mut u = g.forward_fft(&pos).unwrap();
            normalize(&mut u);
            let c = weight * rng.gen_range(-1.0..1.0);
            for j in 0..n {
                for i in 0..n {
                    q[(i, j)] += u[i] * u[j].conj() * c;
                }
            }
        }
        q
    }

    #[test]
    fn weyl_of_position_symbol_is_multiplication() {
        let g = grid(32, 10.0, 0.5);
        let a = Symbol::custom(|x, _| (-x[0] * x[0]).exp() * 0.3);
        let q = weyl_quantize(&a, &g).unwrap();
        let p = crate::hartree::to_position(&q);
        for j in 0..32 {
            for l in 0..32 {
                let want = if j == l { 0.3 * (-g.wrap(g.x(j)).powi(2)).exp() } else { 0.0 };
                assert!((p[(j, l)] - Complex64::new(want, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn weyl_of_kinetic_symbol_is_multiplier() {
        let g = grid(32, 10.0, 0.5);
        let a = Symbol::custom(|_, v| v[0] * v[0]);
        let q = weyl_quantize(&a, &g).unwrap();
        let eps = kinetic(&g);
        for j in 0..32 {
            for i in 0..32 {
                let want = if i == j { eps[i] } else { 0.0 };
                assert!((q[(i, j)] - Complex64::new(want, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn weyl_fast_path_matches_generic() {
        let g = grid(32, 10.0, 0.5);
        let a = Symbol::Gaussian { amplitude: 0.4, x0: 0.2, sx: 0.7, v0: -0.1, sv: 0.6 };
        let b = a.clone();
        let generic = Symbol::custom(move |x, v| b.eval(x, v));
        let q1 = weyl_quantize(&a, &g).unwrap();
        let q2 = weyl_quantize(&generic, &g).unwrap();
        assert!((q1 - q2).norm() < 1e-12);
    }

    #[test]
    fn weyl_trace_rule() {
        let g = grid(64, 10.0, 0.25);
        let a = Symbol::Gaussian { amplitude: 0.4, x0: 0.0, sx: 0.7, v0: 0.0, sv: 0.6 };
        let q = weyl_quantize(&a, &g).unwrap();
        let lhs = 2.0 * PI * g.hbar * q.trace().re;
        let mut rhs = 0.0;
        for j in 0..64 {
            for nn in 0..64 {
                rhs += a.eval(&[g.wrap(g.x(j))], &[g.v(nn)]) * g.dx() * g.dv();
            }
        }
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn wigner_of_reference_is_g() {
        let g = grid(32, 10.0, 0.5);
        let s = build_reference(&EntropyModel::boltzmann(), &g).unwrap();
        let w = wigner(&s);
        for j in 0..32 {
            for nn in 0..32 {
                let v = w.grid.v(nn);
                assert!((w.total(j, nn) - (-v * v).exp()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn wigner_identities_random() {
        let g = grid(64, 10.0, 0.5);
        let mut s = build_reference(&EntropyModel::boltzmann(), &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        s.q = random_packets(&g, &mut rng, 3, 0.2);
        let (w, im) = wigner_with_imag(&s);
        assert!(im < 1e-10);
        let l2 = w.pert.iter().map(|x| x * x).sum::<f64>() * w.grid.dx() * w.grid.dv();
        let tr = (&s.q * &s.q).trace().re * 2.0 * PI * g.hbar;
        assert!((l2 - tr).abs() < 1e-10 * tr.max(1.0), "{l2} vs {tr}");
        let rho = s.density();
        let marg = w.rho();
        for j in 0..64 {
            assert!((marg[j] - g.hbar * rho[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn weyl_wigner_duality() {
        let g = grid(64, 10.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = random_packets(&g, &mut rng, 2, 0.3);
        let (w, _) = wigner_matrix(&q, &g);
        let a = Symbol::Gaussian { amplitude: 1.0, x0: 0.3, sx: 0.8, v0: 0.1, sv: 0.5 };
        let op = weyl_quantize(&a, &g).unwrap();
        let lhs = 2.0 * PI * g.hbar * (&q * &op).trace().re;
        let mut rhs = 0.0;
        for j in 0..64 {
            for nn in 0..64 {
                rhs += w[j * 64 + nn] * a.eval(&[g.wrap(g.x(j))], &[g.v(nn)]) * g.dx() * g.dv();
            }
        }
        assert!((lhs - rhs).abs() < 1e-8 * lhs.abs().max(1e-3), "{lhs} vs {rhs}");
    }

    #[test]
    fn coherent_windows_are_normalized() {
        let g = grid(64, 10.0, 0.25);
        for win in [Window::Gaussian { width: 1.0 }, Window::CompactFourier { radius: 2.0 }] {
            let fam = CoherentFamily::new(win, &g).unwrap();
            assert!((fam.norm() - 1.0).abs() < 1e-10);
            let c = fam.state(5, 40);
            assert!((c.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let fam = CoherentFamily::new(Window::CompactFourier { radius: 2.0 }, &g).unwrap();
        for i in 0..64 {
            if (g.hbar.sqrt() * g.k(i)).abs() >= 2.0 {
                assert_eq!(fam.alpha[i], C0);
            }
        }
    }

    #[test]
    fn husimi_of_reference_is_smoothed_g() {
        let g = grid(64, 10.0, 0.25);
        let s = build_reference(&EntropyModel::boltzmann(), &g).unwrap();
        let fam = CoherentFamily::new(Window::Gaussian { width: 1.0 }, &g).unwrap();
        let h = husimi(&s, &fam, 1.0).unwrap();
        assert!(h.field.pert.iter().all(|x| x.abs() < 1e-14));
        // continuum oracle: e^{-v^2} * N(0, hbar/2) = e^{-v^2/(1+hbar)} / sqrt(1+hbar)
        for nn in 16..48 {
            let v = h.field.grid.v(nn);
            let want = (-v * v / (1.0 + g.hbar)).exp() / (1.0 + g.hbar).sqrt();
            assert!((h.field.background[nn] - want).abs() < 1e-6);
        }
        let direct = husimi_direct(&s, &fam, &[(3, 20), (10, 33)]);
        assert!((direct[0] - h.field.total(3, 20)).abs() < 1e-14);
        assert!((direct[1] - h.field.total(10, 33)).abs() < 1e-14);
    }

    #[test]
    fn husimi_of_coherent_projector() {
        // rank-one gamma = |chi_{0,0}><chi_{0,0}|: peak 1, Gaussian overlap
        // |<chi_{x,v}, chi_{0,0}>|^2 = exp(-(x^2 + v^2) / (2 hbar)) for width 1
        let g = grid(128, 10.0, 0.25);
        let model = EntropyModel::boltzmann();
        let mut s = build_reference(&model, &g).unwrap();
        s.background.iter_mut().for_each(|x| *x = 0.0);
        let fam = CoherentFamily::new(Window::Gaussian { width: 1.0 }, &g).unwrap();
        let c = fam.state(0, 64);
        s.q = DMatrix::from_fn(128, 128, |i, j| c[i] * c[j].conj());
        let h = husimi(&s, &fam, 1.0).unwrap();
        for &(j, nn) in &[(0usize, 64usize), (3, 64), (0, 70), (125, 60)] {
            let x = h.field.grid.wrap(h.field.grid.x(j));
            let v = h.field.grid.v(nn);
            let want = (-(x * x + v * v) / (2.0 * g.hbar)).exp();
            assert!((h.field.total(j, nn) - want).abs() < 1e-6, "{j} {nn}: {} vs {want}", h.field.total(j, nn));
        }
    }

    #[test]
    fn husimi_matches_direct_inner_products() {
        let g = grid(128, 10.0, 0.25);
        let model = EntropyModel::boltzmann();
        let a = Symbol::Gaussian { amplitude: 0.6, x0: 0.0, sx: 0.7, v0: 0.2, sv: 0.6 };
        let s = build_initial_from_symbol(&model, &g, &a).unwrap();
        for win in [Window::Gaussian { width: 1.0 }, Window::CompactFourier { radius: 2.0 }] {
            let fam = CoherentFamily::new(win, &g).unwrap();
            let h = husimi(&s, &fam, 1.0).unwrap();
            let pts: Vec<(usize, usize)> = (0..32).flat_map(|a| (0..32).map(move |b| (a * 4, b * 4))).collect();
            let d = husimi_direct(&s, &fam, &pts);
            let err = pts.iter().zip(&d).map(|(&(j, nn), x)| (h.field.total(j, nn) - x).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "{win:?}: {err}");
            assert!(h.field.min() >= -1e-8 && h.field.max() <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn husimi_density_relation() {
        let g = grid(256, 10.0, 0.25);
        let model = EntropyModel::boltzmann();
        let a = Symbol::Gaussian { amplitude: 0.6, x0: 0.0, sx: 0.7, v0: 0.2, sv: 0.6 };
        let s = build_initial_from_symbol(&model, &g, &a).unwrap();
        let fam = CoherentFamily::new(Window::Gaussian { width: 1.0 }, &g).unwrap();
        let (_, _, gap) = husimi_density_check(&s, &fam, 1.0).unwrap();
        assert!(gap < 1e-6, "{gap}");
        let r = build_reference(&model, &g).unwrap();
        let (l, rr, gap0) = husimi_density_check(&r, &fam, 1.0).unwrap();
        assert!(gap0 < 1e-10);
        assert!(l.iter().all(|x| (x - l[0]).abs() < 1e-12) && rr.iter().all(|x| (x - rr[0]).abs() < 1e-12));
    }
}

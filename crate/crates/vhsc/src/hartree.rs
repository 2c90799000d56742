//! Density matrices around the translation-invariant reference and the
//! one-dimensional Hartree flow.
//!
//! A [`QuantumState`] stores `gamma = diag(g) + Q` on the momentum lattice in
//! FFT index order. The kernel in position space is `F Q F^* / dx` with
//! `F_{jm} = e^{i k_m x_j} / sqrt(N)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::entropy::{EntropyModel, EXTENSION_OFFSET};
use crate::error::{Error, Result};
use crate::grid::{fft_inplace, TorusGrid};
use crate::phase_space::{weyl_quantize, Symbol};
use crate::quad::gauss_legendre_unit;

/// Eigenvalues this far outside `[0, M]` are clamped silently.
pub const SPECTRUM_TOL: f64 = 1e-9;
/// Eigenvalues further outside `[0, M]` than this are rejected.
pub const SPECTRUM_HARD: f64 = 1e-6;

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Even pair interaction `w`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Interaction {
    #[serde(rename = "zero")]
    Zero,
    /// `amplitude * exp(-|x|^2 / (2 width^2))`.
    #[serde(rename = "gaussian")]
    Gaussian { amplitude: f64, width: f64 },
}

impl Interaction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Interaction::Zero => 0.0,
            Interaction::Gaussian { amplitude, width } => {
                let r2: f64 = x.iter().map(|t| t * t).sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Interaction::Zero => true,
            Interaction::Gaussian { amplitude, .. } => amplitude == 0.0,
        }
    }

    /// Samples on the minimum-image lattice, which keeps `w(x) = w(-x)`
    /// exact.
    pub fn sample(&self, grid: &TorusGrid) -> Vec<f64> {
        grid.sample_centered(|x| self.eval(x))
    }

    /// `w_hat(k) = cell * sum_j w(x_j) e^{-i k x_j}` on the lattice.
    pub fn fourier(&self, grid: &TorusGrid) -> Vec<f64> {
        let w = self.sample(grid);
        let cell = grid.cell();
        grid.dft_real(&w).expect("lattice-sized").iter().map(|z| z.re * cell).collect()
    }

    /// `w_hat >= -1e-12` on the lattice.
    pub fn is_defocusing(&self, grid: &TorusGrid) -> bool {
        self.fourier(grid).iter().all(|&x| x >= -1e-12)
    }

    /// `w * f`.
    pub fn apply(&self, grid: &TorusGrid, f: &[f64]) -> Result<Vec<f64>> {
        if self.is_zero() {
            return Ok(vec![0.0; f.len()]);
        }
        grid.convolve_periodic(&self.sample(grid), f)
    }
}

/// `diag(g) + Q` on the momentum lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    pub grid: TorusGrid,
    pub background: Vec<f64>,
    pub q: DMatrix<Complex64>,
}

/// `|hbar k_m|^2` in FFT order.
pub fn kinetic(grid: &TorusGrid) -> Vec<f64> {
    grid.ks().iter().map(|k| (grid.hbar * k).powi(2)).collect()
}

/// `F A`: inverse DFT down every column, scaled by `1/sqrt(N)`.
fn left_f(a: &mut DMatrix<Complex64>, inverse: bool) {
    let n = a.nrows();
    let s = 1.0 / (n as f64).sqrt();
    for mut col in a.column_iter_mut() {
        let buf = col.as_mut_slice();
        fft_inplace(buf, inverse);
        buf.iter_mut().for_each(|z| *z *= s);
    }
}

/// Position-basis matrix `F Q F^*` of a momentum-basis matrix.
pub fn to_position(q: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut a = q.clone();
    left_f(&mut a, true);
    // (A F^*)^T = conj(F) A^T, and conj(F) is the forward transform
    let mut t = a.transpose();
    left_f(&mut t, false);
    t.transpose()
}

/// Inverse of [`to_position`].
pub fn to_momentum(p: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut a = p.clone();
    left_f(&mut a, false);
    let mut t = a.transpose();
    left_f(&mut t, true);
    t.transpose()
}

/// `(A + A^*) / 2`.
pub fn hermitize(a: &mut DMatrix<Complex64>) {
    let n = a.nrows();
    for i in 0..n {
        a[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let z = 0.5 * (a[(i, j)] + a[(j, i)].conj());
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
        }
    }
}

impl QuantumState {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn full(&self) -> DMatrix<Complex64> {
        let mut g = self.q.clone();
        for (i, &b) in self.background.iter().enumerate() {
            g[(i, i)] += b;
        }
        g
    }

    /// Reference density `(1/L) sum_m g_m`.
    pub fn reference_density(&self) -> f64 {
        self.background.iter().sum::<f64>() / self.grid.l
    }

    /// Density of `Q` alone on the position lattice.
    pub fn relative_density(&self) -> Vec<f64> {
        let n = self.n();
        let mut c = vec![C0; n];
        for j in 0..n {
            for i in 0..n {
                c[(i + n - j) % n] += self.q[(i, j)];
            }
        }
        fft_inplace(&mut c, true);
        let s = 1.0 / self.grid.l;
        c.iter().map(|z| z.re * s).collect()
    }

    /// `rho(x_j) = gamma(x_j, x_j)`.
    pub fn density(&self) -> Vec<f64> {
        let r0 = self.reference_density();
        self.relative_density().into_iter().map(|r| r + r0).collect()
    }

    pub fn trace_q(&self) -> f64 {
        self.q.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn frobenius_q(&self) -> f64 {
        self.q.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Eigenvalues of the full operator, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.full().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Returns `(min, max)` of the spectrum, failing beyond the hard limit.
    pub fn check_spectrum(&self, cap: f64) -> Result<(f64, f64)> {
        let ev = self.eigenvalues();
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if lo < -SPECTRUM_HARD || hi > cap + SPECTRUM_HARD {
            return Err(Error::Spectrum(format!("spectrum [{lo}, {hi}] leaves [0, {cap}]")));
        }
        Ok((lo, hi))
    }
}

/// `gamma_ref = f(-hbar^2 Delta)`.
pub fn build_reference(model: &EntropyModel, grid: &TorusGrid) -> Result<QuantumState> {
    if grid.d != 1 {
        return Err(Error::Config("the quantum solver is one-dimensional".into()));
    }
    let background = kinetic(grid).iter().map(|&e| model.eval_sprime_inv(e)).collect::<Result<Vec<_>>>()?;
    let n = grid.n;
    Ok(QuantumState { grid: grid.clone(), background, q: DMatrix::from_element(n, n, C0) })
}

/// Strang splitting for `i hbar d/dt gamma = [-hbar^2 Delta + hbar w * rho, gamma]`.
pub struct HartreePropagator {
    grid: TorusGrid,
    interaction: Interaction,
    w: Vec<f64>,
    eps: Vec<f64>,
    circulant: Vec<Complex64>,
    rho_ref: f64,
}

impl HartreePropagator {
    pub fn new(state: &QuantumState, interaction: Interaction) -> Self {
        let grid = state.grid.clone();
        let n = grid.n;
        let mut c: Vec<Complex64> = state.background.iter().map(|&g| Complex64::new(g, 0.0)).collect();
        fft_inplace(&mut c, true);
        c.iter_mut().for_each(|z| *z /= n as f64);
        HartreePropagator {
            w: interaction.sample(&grid),
            eps: kinetic(&grid),
            circulant: c,
            rho_ref: state.reference_density(),
            interaction,
            grid,
        }
    }

    fn kinetic_half(&self, q: &mut DMatrix<Complex64>, dt: f64) {
        let n = self.grid.n;
        let a = 0.5 * dt / self.grid.hbar;
        let ph: Vec<Complex64> = self.eps.iter().map(|&e| Complex64::from_polar(1.0, -a * e)).collect();
        for j in 0..n {
            let pj = ph[j].conj();
            for i in 0..n {
                q[(i, j)] *= ph[i] * pj;
            }
        }
    }

    /// Mean-field potential divided by `hbar`: `w * (rho - rho_ref)`.
    pub fn potential(&self, state: &QuantumState) -> Vec<f64> {
        if self.interaction.is_zero() {
            return vec![0.0; self.grid.n];
        }
        let drho = state.relative_density();
        self.grid.convolve_periodic(&self.w, &drho).expect("lattice-sized")
    }

    pub fn step(&self, state: &mut QuantumState, dt: f64) {
        let n = self.grid.n;
        self.kinetic_half(&mut state.q, dt);
        if !self.interaction.is_zero() {
            let u = self.potential(state);
            let mut p = to_position(&state.q);
            for l in 0..n {
                for j in 0..n {
                    let theta = dt * (u[j] - u[l]);
                    let (s, c) = theta.sin_cos();
                    let phase = Complex64::new(c, -s);
                    let half = 0.5 * theta;
                    let pm1 = Complex64::new(-2.0 * half.sin().powi(2), -s);
                    p[(j, l)] = p[(j, l)] * phase + self.circulant[(j + n - l) % n] * pm1;
                }
            }
            state.q = to_momentum(&p);
        }
        self.kinetic_half(&mut state.q, dt);
        hermitize(&mut state.q);
    }

    pub fn rho_ref(&self) -> f64 {
        self.rho_ref
    }
}

/// One Strang step followed by a spectrum check.
pub fn hartree_step(state: &QuantumState, model: &EntropyModel, w: &Interaction, dt: f64) -> Result<QuantumState> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step {dt} must be positive")));
    }
    let mut next = state.clone();
    HartreePropagator::new(state, *w).step(&mut next, dt);
    next.check_spectrum(model.cap)
        .map_err(|e| Error::Instability(format!("after a step of {dt}: {e}")))?;
    Ok(next)
}

fn clamp_spectrum(ev: &DVector<f64>, cap: f64) -> Result<Vec<f64>> {
    ev.iter()
        .map(|&l| {
            if l < -SPECTRUM_HARD || l > cap + SPECTRUM_HARD {
                Err(Error::Spectrum(format!("eigenvalue {l} outside [0, {cap}]")))
            } else {
                Ok(l.clamp(0.0, cap))
            }
        })
        .collect()
}

/// `H_S(gamma, gamma_ref)` from the three-trace formula.
pub fn quantum_rel_entropy(state: &QuantumState, model: &EntropyModel) -> Result<f64> {
    let eps = kinetic(&state.grid);
    let ev = clamp_spectrum(&state.full().symmetric_eigenvalues(), model.cap)?;
    let lin: f64 = eps.iter().enumerate().map(|(i, e)| e * state.q[(i, i)].re).sum();
    let s_ref: f64 = state.background.iter().map(|&g| model.s_unchecked(g)).sum();
    let s_gam: f64 = ev.iter().map(|&l| model.s_unchecked(l)).sum();
    Ok((lin + s_ref - s_gam).max(0.0))
}

/// Smallest eigenvalue fed to `S'` in the integral representation.
const INTEGRAL_REP_FLOOR: f64 = 1e-300;

/// `H_S(A, B)` for Hermitian `A`, `B` with interior spectra via
/// `int_0^1 tr (f(tS'(A) + (1-t)S'(B)) - A)(S'(A) - S'(B)) dt`.
pub fn integral_rep_matrices(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, model: &EntropyModel, nodes: usize) -> Result<f64> {
    let sa = matrix_sprime(a, model)?;
    let sb = matrix_sprime(b, model)?;
    integral_rep_generators(&sa, &sb, a, model, nodes)
}

fn matrix_sprime(a: &DMatrix<Complex64>, model: &EntropyModel) -> Result<DMatrix<Complex64>> {
    let eig = SymmetricEigen::new(a.clone());
    let ev = clamp_spectrum(&eig.eigenvalues, model.cap)?;
    let d: Vec<f64> = ev.iter().map(|&l| model.sprime(l.max(INTEGRAL_REP_FLOOR))).collect();
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Spectrum("eigenvalue at an endpoint where S' is undefined".into()));
    }
    Ok(apply_spectral(&eig.eigenvectors, &d))
}

/// `V diag(d) V^*`.
pub fn apply_spectral(v: &DMatrix<Complex64>, d: &[f64]) -> DMatrix<Complex64> {
    let mut vd = v.clone();
    for (j, &x) in d.iter().enumerate() {
        vd.column_mut(j).scale_mut(x);
    }
    let mut out = vd * v.adjoint();
    hermitize(&mut out);
    out
}

fn integral_rep_generators(
    sa: &DMatrix<Complex64>,
    sb: &DMatrix<Complex64>,
    gamma: &DMatrix<Complex64>,
    model: &EntropyModel,
    nodes: usize,
) -> Result<f64> {
    let diff = sa - sb;
    let base: f64 = (gamma * &diff).trace().re;
    let floor = model.sprime_at_cap();
    let (ts, ws) = gauss_legendre_unit(nodes);
    let mut total = 0.0;
    for (&t, &wt) in ts.iter().zip(&ws) {
        let c = sa * Complex64::new(t, 0.0) + sb * Complex64::new(1.0 - t, 0.0);
        let eig = SymmetricEigen::new(c);
        let md = &diff * &eig.eigenvectors;
        let mut tr = 0.0;
        for (i, &ci) in eig.eigenvalues.iter().enumerate() {
            let fi = model.eval_sprime_inv(ci.max(floor))?;
            let dii: f64 = eig.eigenvectors.column(i).iter().zip(md.column(i).iter()).map(|(v, m)| (v.conj() * m).re).sum();
            tr += fi * dii;
        }
        total += wt * (tr - base);
    }
    Ok(total)
}

/// Integral representation of `H_S(gamma, gamma_ref)` with `nodes`
/// Gauss-Legendre points in `t`.
pub fn rel_entropy_integral_rep(state: &QuantumState, model: &EntropyModel, nodes: usize) -> Result<f64> {
    let gamma = state.full();
    let sa = matrix_sprime(&gamma, model)?;
    let n = state.n();
    let mut sb = DMatrix::from_element(n, n, C0);
    for (i, e) in kinetic(&state.grid).into_iter().enumerate() {
        sb[(i, i)] = Complex64::new(e, 0.0);
    }
    integral_rep_generators(&sa, &sb, &gamma, model, nodes)
}

/// `hbar/2 * int (rho - rho_ref) w * (rho - rho_ref)`.
pub fn interaction_energy(state: &QuantumState, w: &Interaction) -> Result<f64> {
    if w.is_zero() {
        return Ok(0.0);
    }
    let drho = state.relative_density();
    let u = w.apply(&state.grid, &drho)?;
    let e: f64 = drho.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() * state.grid.cell();
    Ok(0.5 * state.grid.hbar * e)
}

pub fn free_energy(state: &QuantumState, model: &EntropyModel, w: &Interaction) -> Result<f64> {
    Ok(quantum_rel_entropy(state, model)? + interaction_energy(state, w)?)
}

/// `(H_S, tr (1 - hbar^2 Delta) Q^2)`.
pub fn klein_lhs_rhs(state: &QuantumState, model: &EntropyModel) -> Result<(f64, f64)> {
    let eps = kinetic(&state.grid);
    let n = state.n();
    let mut k = 0.0;
    for j in 0..n {
        for i in 0..n {
            k += (1.0 + eps[i]) * state.q[(i, j)].norm_sqr();
        }
    }
    Ok((quantum_rel_entropy(state, model)?, k))
}

/// `gamma = f(-hbar^2 Delta + Op_W(a))` with `f` continued below the
/// physical range.
pub fn build_initial_from_symbol(model: &EntropyModel, grid: &TorusGrid, a: &Symbol) -> Result<QuantumState> {
    let mut state = build_reference(model, grid)?;
    if a.is_zero() {
        return Ok(state);
    }
    let mut h = weyl_quantize(a, grid)?;
    for (i, e) in kinetic(grid).into_iter().enumerate() {
        h[(i, i)] += e;
    }
    let eig = SymmetricEigen::new(h);
    let floor = model.sprime_at_cap();
    let eta = floor + EXTENSION_OFFSET;
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if floor.is_finite() && lo < eta {
        return Err(Error::Spectrum(format!("min eigenvalue {lo} of the generator is below {eta}")));
    }
    let fv: Vec<f64> = eig.eigenvalues.iter().map(|&l| model.eval_sprime_inv_extended(l, EXTENSION_OFFSET)).collect();
    let mut q = apply_spectral(&eig.eigenvectors, &fv);
    for (i, g) in state.background.iter().enumerate() {
        q[(i, i)] -= g;
    }
    hermitize(&mut q);
    state.q = q;
    Ok(state)
}

/// `a(x, v) = S'(m_ref(v) + b(x, v)) - |v|^2` where `b != 0`.
pub fn symbol_from_perturbation<B>(model: &EntropyModel, b: B) -> Symbol
where
    B: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
{
    let model = *model;
    Symbol::custom(move |x, v| {
        let bv = b(x, v);
        if bv == 0.0 {
            return 0.0;
        }
        let v2: f64 = v.iter().map(|t| t * t).sum();
        let m = model.eval_sprime_inv(v2).unwrap_or(0.0) + bv;
        model.sprime(m) - v2
    })
}

/// Checks that `m_ref + b` stays strictly inside `(0, M)` wherever `b != 0`.
pub fn check_perturbation_range<B>(model: &EntropyModel, b: &B, points: &[(Vec<f64>, Vec<f64>)]) -> Result<()>
where
    B: Fn(&[f64], &[f64]) -> f64,
{
    for (x, v) in points {
        let bv = b(x, v);
        if bv == 0.0 {
            continue;
        }
        let v2: f64 = v.iter().map(|t| t * t).sum();
        let m = model.eval_sprime_inv(v2)? + bv;
        if !(m > 0.0 && m < model.cap) {
            return Err(Error::Range(format!("m_ref + b = {m} at x = {x:?}, v = {v:?}")));
        }
    }
    Ok(())
}

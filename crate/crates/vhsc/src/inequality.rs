//! Randomized and structured checks of the relative-entropy inequalities:
//! Berezin-Lieb on finite resolutions of the identity, its coherent-state
//! form, stability of the Berezin-Lieb class, Klein and Lieb-Thirring ratios.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::entropy::{EntropyKind, EntropyModel};
use crate::error::{Error, Result};
use crate::hartree::{apply_spectral, hermitize, integral_rep_matrices, quantum_rel_entropy, QuantumState};
use crate::phase_space::{husimi, CoherentFamily};
use crate::vlasov::classical_rel_entropy;

/// Absolute slack of every inequality check.
pub const ABS_TOL: f64 = 1e-10;
/// Relative slack of every inequality check.
pub const REL_TOL: f64 = 1e-8;

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `sum_i zeta_i |n_i><n_i| = id`.
#[derive(Clone, Debug)]
pub struct ResolutionOfIdentity {
    pub n: usize,
    pub vectors: Vec<DVector<Complex64>>,
    pub weights: Vec<f64>,
}

impl ResolutionOfIdentity {
    pub fn standard(n: usize) -> Self {
        let vectors = (0..n)
            .map(|i| {
                let mut e = DVector::from_element(n, C0);
                e[i] = Complex64::new(1.0, 0.0);
                e
            })
            .collect();
        ResolutionOfIdentity { n, vectors, weights: vec![1.0; n] }
    }

    /// Operator norm of `sum_i zeta_i |n_i><n_i| - id`.
    pub fn residual(&self) -> f64 {
        let mut g = DMatrix::<Complex64>::identity(self.n, self.n) * Complex64::new(-1.0, 0.0);
        for (v, &z) in self.vectors.iter().zip(&self.weights) {
            g += v * v.adjoint() * Complex64::new(z, 0.0);
        }
        hermitize(&mut g);
        g.symmetric_eigenvalues().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `<n_i, A n_i>` for every element.
    pub fn diagonal(&self, a: &DMatrix<Complex64>) -> Vec<f64> {
        self.vectors.iter().map(|v| (v.adjoint() * a * v)[(0, 0)].re).collect()
    }
}

fn gaussian_vector<R: Rng>(n: usize, rng: &mut R) -> DVector<Complex64> {
    DVector::from_fn(n, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Normalizes `m >= n` complex Gaussian draws by `G^{-1/2}`.
pub fn random_resolution<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<ResolutionOfIdentity> {
    if m < n || n == 0 {
        return Err(Error::Domain(format!("need count {m} >= dimension {n} >= 1")));
    }
    for _ in 0..16 {
        let raw: Vec<DVector<Complex64>> = (0..m).map(|_| gaussian_vector(n, rng)).collect();
        let mut g = DMatrix::from_element(n, n, C0);
        for v in &raw {
            g += v * v.adjoint();
        }
        hermitize(&mut g);
        let eig = SymmetricEigen::new(g);
        let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        if lo <= 1e-8 * hi {
            continue;
        }
        let d: Vec<f64> = eig.eigenvalues.iter().map(|&l| 1.0 / l.sqrt()).collect();
        let isq = apply_spectral(&eig.eigenvectors, &d);
        let mut vectors = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        for v in raw {
            let u = &isq * v;
            let nrm = u.norm();
            weights.push(nrm * nrm);
            vectors.push(u / Complex64::new(nrm, 0.0));
        }
        return Ok(ResolutionOfIdentity { n, vectors, weights });
    }
    Err(Error::Spectrum("Gram matrix stayed singular after 16 draws".into()))
}

/// Hermitian matrix with Haar-like eigenvectors and eigenvalues uniform in
/// `(lo, hi)`.
pub fn random_hermitian<R: Rng>(n: usize, lo: f64, hi: f64, rng: &mut R) -> DMatrix<Complex64> {
    let z = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let u = z.qr().q();
    let d: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    apply_spectral(&u, &d)
}

fn spectrum(a: &DMatrix<Complex64>, lo: f64, hi: f64) -> Result<SymmetricEigen<Complex64, nalgebra::Dyn>> {
    let eig = SymmetricEigen::new(a.clone());
    for &l in eig.eigenvalues.iter() {
        if l < lo - 1e-12 || l > hi + 1e-12 {
            return Err(Error::Spectrum(format!("eigenvalue {l} outside [{lo}, {hi}]")));
        }
    }
    Ok(eig)
}

/// `-tr(S(A) - S(B) - S'(B)(A - B))` for a scalar concave `S` with
/// derivative `sp` on `[lo, hi]`.
pub fn rel_entropy_fn<S, D>(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, s: S, sp: D, lo: f64, hi: f64) -> Result<f64>
where
    S: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let ea = spectrum(a, lo, hi)?;
    let eb = spectrum(b, lo, hi)?;
    let mut lin = 0.0;
    for (i, &bi) in eb.eigenvalues.iter().enumerate() {
        let u = eb.eigenvectors.column(i);
        let aii = (u.adjoint() * a * u)[(0, 0)].re;
        let diff = aii - bi;
        let slope = sp(bi.clamp(lo, hi));
        if slope.is_finite() {
            lin += slope * diff;
        } else if diff.abs() > 1e-14 {
            return Ok(f64::INFINITY);
        }
    }
    let sa: f64 = ea.eigenvalues.iter().map(|&x| s(x.clamp(lo, hi))).sum();
    let sb: f64 = eb.eigenvalues.iter().map(|&x| s(x.clamp(lo, hi))).sum();
    Ok(lin - sa + sb)
}

/// Three-trace quantum relative entropy `H_S(A, B)` for spectra in `[0, M]`.
pub fn quantum_rel_entropy_matrices(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, model: &EntropyModel) -> Result<f64> {
    let m = *model;
    rel_entropy_fn(a, b, |x| m.s_unchecked(x), |x| m.sprime(x), 0.0, model.cap)
}

/// Berezin-Lieb constant of a catalog model on `[0, M]`.
pub fn bl_constant(model: &EntropyModel) -> Result<f64> {
    match model.kind {
        EntropyKind::Boltzmann | EntropyKind::Fermi => Ok(1.0),
        EntropyKind::Bose => Ok(1.0 + model.cap),
        EntropyKind::Power { .. } => Err(Error::InvalidModel("no Berezin-Lieb constant is known for the power family".into())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlOutcome {
    pub classical: f64,
    pub quantum: f64,
    pub constant: f64,
    pub violated: bool,
}

fn exceeds(lhs: f64, rhs: f64) -> bool {
    lhs > rhs + ABS_TOL + REL_TOL * rhs.abs()
}

/// Evaluates both sides of a Berezin-Lieb inequality; `constant`
/// overrides the model's value.
pub fn berezin_lieb_check(
    model: &EntropyModel,
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    res: &ResolutionOfIdentity,
    constant: Option<f64>,
) -> Result<BlOutcome> {
    let c = match constant {
        Some(c) => c,
        None => bl_constant(model)?,
    };
    let quantum = quantum_rel_entropy_matrices(a, b, model)?;
    let da = res.diagonal(a);
    let db = res.diagonal(b);
    let classical: f64 = res
        .weights
        .iter()
        .zip(da.iter().zip(&db))
        .map(|(z, (&x, &y))| z * model.rel_entropy_unchecked(x.clamp(0.0, model.cap), y.clamp(0.0, model.cap)))
        .sum();
    Ok(BlOutcome { classical, quantum, constant: c, violated: exceeds(classical, c * quantum) })
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SweepReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest `classical / (C quantum)`.
    pub worst_ratio: f64,
    /// Description of the first violating instance.
    pub first_violation: Option<String>,
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(trial);
    r
}

/// Sampling range of random spectra for a model.
fn spectral_window(model: &EntropyModel) -> (f64, f64) {
    let hi = if model.cap.is_finite() { model.cap } else { 4.0 };
    (1e-3 * hi, hi * (1.0 - 1e-3))
}

/// Random Berezin-Lieb instances with `n <= 8` and `m <= 24`.
pub fn bl_sweep(model: &EntropyModel, trials: usize, seed: u64, constant: Option<f64>) -> Result<SweepReport> {
    let (lo, hi) = spectral_window(model);
    let mut rep = SweepReport { trials, ..Default::default() };
    for t in 0..trials {
        let mut rng = trial_rng(seed, t as u64);
        let n = rng.gen_range(1..=8);
        let m = rng.gen_range(n..=24);
        let res = random_resolution(n, m, &mut rng)?;
        // occasional near-commuting pairs and concentrated spectra
        let a = random_hermitian(n, lo, hi, &mut rng);
        let b = if rng.gen_bool(0.2) {
            let mut b = a.clone() * Complex64::new(rng.gen_range(0.3..1.0), 0.0);
            b += random_hermitian(n, 0.0, lo, &mut rng);
            b
        } else {
            random_hermitian(n, lo, hi, &mut rng)
        };
        let out = berezin_lieb_check(model, &a, &b, &res, constant)?;
        if out.quantum > 0.0 {
            rep.worst_ratio = rep.worst_ratio.max(out.classical / (out.constant * out.quantum));
        }
        if out.violated {
            rep.violations += 1;
            if rep.first_violation.is_none() {
                rep.first_violation = Some(format!(
                    "trial {t}: n = {n}, m = {m}, classical = {:e}, C quantum = {:e}",
                    out.classical,
                    out.constant * out.quantum
                ));
            }
        }
    }
    Ok(rep)
}

/// Bose instances on `[0, 1]` checked against the deliberately small
/// constant 1; a sound harness finds violations.
pub fn bl_falsifiability_probe(trials: usize, seed: u64) -> Result<SweepReport> {
    let model = EntropyModel::bose(-1.0)?;
    let mut rep = SweepReport { trials, ..Default::default() };
    for t in 0..trials {
        let mut rng = trial_rng(seed ^ 0x5eed_b05e, t as u64);
        let n = rng.gen_range(2..=4);
        let m = rng.gen_range(n..=3 * n);
        let res = random_resolution(n, m, &mut rng)?;
        let a = random_hermitian(n, 1e-4, 1.0 - 1e-4, &mut rng);
        let b = random_hermitian(n, 1e-4, 1.0 - 1e-4, &mut rng);
        let out = berezin_lieb_check(&model, &a, &b, &res, Some(1.0))?;
        if out.quantum > 0.0 {
            rep.worst_ratio = rep.worst_ratio.max(out.classical / out.quantum);
        }
        if out.violated {
            rep.violations += 1;
            if rep.first_violation.is_none() {
                rep.first_violation = Some(format!("trial {t}: n = {n}, m = {m}, ratio = {}", out.classical / out.quantum));
            }
        }
    }
    Ok(rep)
}

/// Husimi-level inequality `H_cl(m_gamma, m_ref~) <= C hbar^d H_S(gamma, gamma_ref)`.
pub fn coherent_bl_check(state: &QuantumState, model: &EntropyModel, family: &CoherentFamily) -> Result<(f64, f64)> {
    let c = bl_constant(model)?;
    let h = husimi(state, family, model.cap)?;
    let classical = classical_rel_entropy(&h.field, model);
    let quantum = c * state.grid.hbar.powi(state.grid.d as i32) * quantum_rel_entropy(state, model)?;
    if classical > quantum + 1e-6 {
        return Err(Error::Violation(format!("coherent Berezin-Lieb: {classical} > {quantum}")));
    }
    Ok((classical, quantum))
}

/// Outcome of one stability item.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityItem {
    pub name: &'static str,
    pub trials: usize,
    pub violations: usize,
}

fn s0(x: f64) -> f64 {
    if x <= 0.0 { 0.0 } else { -x * x.ln() + x }
}
fn s0p(x: f64) -> f64 {
    -x.ln()
}
fn sf(x: f64) -> f64 {
    EntropyKind::Fermi.s(x)
}
fn sfp(x: f64) -> f64 {
    EntropyKind::Fermi.sprime(x)
}
fn sb(x: f64) -> f64 {
    EntropyKind::Bose.s(x)
}
fn sbp(x: f64) -> f64 {
    EntropyKind::Bose.sprime(x)
}

fn bregman<S: Fn(f64) -> f64, D: Fn(f64) -> f64>(s: &S, sp: &D, y: f64, y0: f64) -> f64 {
    sp(y0) * (y - y0) - s(y) + s(y0)
}

/// Classical side of a Berezin-Lieb inequality for a scalar `S`.
fn bl_sides<S: Fn(f64) -> f64 + Copy, D: Fn(f64) -> f64 + Copy>(
    s: S,
    sp: D,
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    res: &ResolutionOfIdentity,
) -> Result<(f64, f64)> {
    let q = rel_entropy_fn(a, b, s, sp, f64::NEG_INFINITY, f64::INFINITY)?;
    let da = res.diagonal(a);
    let db = res.diagonal(b);
    let c = res.weights.iter().zip(da.iter().zip(&db)).map(|(z, (&x, &y))| z * bregman(&s, &sp, x, y)).sum();
    Ok((c, q))
}

/// Randomized verification of the stability rules of the Berezin-Lieb
/// class: shifts, affine reparametrizations of `[0, 1]`, positive
/// combinations, and the two-sided concavity transfer.
pub fn bl_stability_checks(seed: u64, trials: usize) -> Result<Vec<StabilityItem>> {
    let mut items = Vec::new();
    let lo = 1e-3;
    let hi = 1.0 - 1e-3;

    // shift: S_0(t + .) on [0, 1]
    let mut v = 0;
    for k in 0..trials {
        let mut rng = trial_rng(seed, 4 * k as u64);
        let t: f64 = rng.gen_range(0.0..2.0);
        let n = rng.gen_range(1..=5);
        let res = random_resolution(n, rng.gen_range(n..=3 * n), &mut rng)?;
        let a = random_hermitian(n, lo, hi, &mut rng);
        let b = random_hermitian(n, lo, hi, &mut rng);
        let (c, q) = bl_sides(move |x| s0(t + x), move |x| s0p(t + x), &a, &b, &res)?;
        let y = rng.gen_range(lo..hi);
        let y0 = rng.gen_range(lo..hi);
        let direct = bregman(&|x| s0(t + x), &|x| s0p(t + x), y, y0);
        let shifted = bregman(&s0, &s0p, y + t, y0 + t);
        if exceeds(c, q) || (direct - shifted).abs() > 1e-12 * (1.0 + shifted.abs()) {
            v += 1;
        }
    }
    items.push(StabilityItem { name: "shift", trials, violations: v });

    // affine composition: S_f(a x + (1 - x) b)
    let mut v = 0;
    for k in 0..trials {
        let mut rng = trial_rng(seed, 4 * k as u64 + 1);
        let (p, r): (f64, f64) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let phi = move |x: f64| (p * x + (1.0 - x) * r).clamp(1e-300, 1.0 - 1e-16);
        let n = rng.gen_range(1..=5);
        let res = random_resolution(n, rng.gen_range(n..=3 * n), &mut rng)?;
        let a = random_hermitian(n, lo, hi, &mut rng);
        let b = random_hermitian(n, lo, hi, &mut rng);
        let s = move |x: f64| sf(phi(x));
        let sp = move |x: f64| (p - r) * sfp(phi(x));
        let (c, q) = bl_sides(s, sp, &a, &b, &res)?;
        if exceeds(c, q) {
            v += 1;
        }
    }
    items.push(StabilityItem { name: "composition", trials, violations: v });

    // positive combination mu1 S_0 + mu2 S_f
    let mut v = 0;
    for k in 0..trials {
        let mut rng = trial_rng(seed, 4 * k as u64 + 2);
        let (m1, m2): (f64, f64) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
        let n = rng.gen_range(1..=5);
        let res = random_resolution(n, rng.gen_range(n..=3 * n), &mut rng)?;
        let a = random_hermitian(n, lo, hi, &mut rng);
        let b = random_hermitian(n, lo, hi, &mut rng);
        let (c, q) = bl_sides(move |x| m1 * s0(x) + m2 * sf(x), move |x| m1 * s0p(x) + m2 * sfp(x), &a, &b, &res)?;
        if exceeds(c, q) {
            v += 1;
        }
    }
    items.push(StabilityItem { name: "combination", trials, violations: v });

    // transfer S_1 = S_0, S_2 = S_b with alpha = 2, beta = 1 on [0, 1]
    let (alpha, beta) = (2.0, 1.0);
    let mut v = 0;
    for k in 0..trials {
        let mut rng = trial_rng(seed, 4 * k as u64 + 3);
        let y = rng.gen_range(0.0..1.0);
        let y0 = rng.gen_range(lo..1.0);
        let h1 = bregman(&s0, &s0p, y, y0);
        let h2 = bregman(&sb, &sbp, y, y0);
        let mut bad = exceeds(h1 / alpha, h2) || exceeds(h2, beta * h1);
        let n = rng.gen_range(1..=5);
        let a = random_hermitian(n, lo, hi, &mut rng);
        let b = random_hermitian(n, lo, hi, &mut rng);
        let q1 = rel_entropy_fn(&a, &b, s0, s0p, 0.0, 1.0)?;
        let q2 = rel_entropy_fn(&a, &b, sb, sbp, 0.0, 1.0)?;
        bad |= exceeds(q1 / alpha, q2) || exceeds(q2, beta * q1);
        // the transferred constant C_1 alpha beta = 2
        let res = random_resolution(n, rng.gen_range(n..=3 * n), &mut rng)?;
        let (c, q) = bl_sides(sb, sbp, &a, &b, &res)?;
        bad |= exceeds(c, alpha * beta * q);
        if bad {
            v += 1;
        }
    }
    items.push(StabilityItem { name: "transfer", trials, violations: v });
    Ok(items)
}

/// Randomized quantum Klein check: `H_S(A, B) >= 0`, and `H_S(A, A) = 0`.
pub fn klein_sweep(model: &EntropyModel, trials: usize, seed: u64) -> Result<SweepReport> {
    let (lo, hi) = spectral_window(model);
    let mut rep = SweepReport { trials, worst_ratio: f64::INFINITY, ..Default::default() };
    for t in 0..trials {
        let mut rng = trial_rng(seed, t as u64);
        let n = rng.gen_range(1..=8);
        let a = random_hermitian(n, lo, hi, &mut rng);
        let b = random_hermitian(n, lo, hi, &mut rng);
        let h = quantum_rel_entropy_matrices(&a, &b, model)?;
        let h0 = quantum_rel_entropy_matrices(&a, &a, model)?;
        let f2 = (&a - &b).norm_squared();
        if f2 > 0.0 {
            rep.worst_ratio = rep.worst_ratio.min(h / f2);
        }
        if h < -ABS_TOL || h0.abs() > ABS_TOL || (f2 > 1e-16 && h <= 0.0) {
            rep.violations += 1;
            rep.first_violation.get_or_insert_with(|| format!("trial {t}: H = {h:e}, H(A, A) = {h0:e}"));
        }
    }
    Ok(rep)
}

/// Worst relative gap between the integral representation and the
/// three-trace formula on random interior-spectrum pairs.
pub fn appd_sweep(model: &EntropyModel, trials: usize, seed: u64, nodes: usize) -> Result<SweepReport> {
    let (lo, hi) = if model.cap.is_finite() { (0.02 * model.cap, 0.98 * model.cap) } else { (0.05, 3.0) };
    let mut rep = SweepReport { trials, ..Default::default() };
    for t in 0..trials {
        let mut rng = trial_rng(seed, t as u64);
        let n = rng.gen_range(1..=8);
        let a = random_hermitian(n, lo, hi, &mut rng);
        let b = random_hermitian(n, lo, hi, &mut rng);
        let direct = quantum_rel_entropy_matrices(&a, &b, model)?;
        let rep_value = integral_rep_matrices(&a, &b, model, nodes)?;
        let rel = (direct - rep_value).abs() / direct.abs().max(1e-300);
        rep.worst_ratio = rep.worst_ratio.max(rel);
        if rel > REL_TOL {
            rep.violations += 1;
            rep.first_violation.get_or_insert_with(|| format!("trial {t}: direct {direct:e}, integral {rep_value:e}"));
        }
    }
    Ok(rep)
}

/// `(H_S(gamma, gamma_ref), hbar^{-d} int delta(hbar^d rho_gamma, hbar^d rho_ref))`.
pub fn quantum_lt_pair(state: &QuantumState, model: &EntropyModel) -> Result<(f64, f64)> {
    let g = &state.grid;
    let hd = g.hbar.powi(g.d as i32);
    let r0 = hd * state.reference_density();
    let lt: f64 = state
        .density()
        .iter()
        .map(|&r| crate::entropy::delta_fn((hd * r).max(0.0), r0, g.d))
        .sum::<f64>()
        * g.cell()
        / hd;
    Ok((quantum_rel_entropy(state, model)?, lt))
}

/// `min_i H_i / F_i` over ensemble members `(H_i, F_i)`; `0/0` members are
/// excluded, and a member with vanishing entropy but positive functional
/// is a hard violation.
pub fn ratio_minimum(pairs: &[(f64, f64)]) -> Result<f64> {
    let mut best = f64::INFINITY;
    let mut used = 0;
    for &(h, f) in pairs {
        let tiny = 1e-14;
        if h.abs() <= tiny && f.abs() <= tiny {
            continue;
        }
        if h <= tiny {
            return Err(Error::Violation(format!("zero entropy {h:e} with functional {f:e}")));
        }
        used += 1;
        if f > 0.0 {
            best = best.min(h / f);
        }
    }
    if used == 0 {
        return Err(Error::Domain("ensemble has no member with positive entropy".into()));
    }
    Ok(best)
}

/// Empirical Lieb-Thirring constant of an ensemble of `(entropy, LT)` pairs.
pub fn lt_ratio_estimate(pairs: &[(f64, f64)]) -> Result<f64> {
    let k = ratio_minimum(pairs)?;
    if !(k > 1e-6) {
        return Err(Error::Violation(format!("empirical constant {k:e} is not bounded away from 0")));
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::hartree::{build_initial_from_symbol, build_reference};
    use crate::phase_space::{Symbol, Window};
    use proptest::prelude::*;

    fn diag(v: &[f64]) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&DVector::from_iterator(v.len(), v.iter().map(|&x| Complex64::new(x, 0.0))))
    }

    #[test]
    fn orthonormal_draws_give_unit_weights() {
        let res = ResolutionOfIdentity::standard(4);
        assert!(res.residual() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_resolution(4, 4, &mut rng).unwrap();
        assert!(r.residual() < 1e-10);
        // m = n forces an orthonormal basis
        assert!(r.weights.iter().all(|w| (w - 1.0).abs() < 1e-10));
        assert!(random_resolution(4, 3, &mut rng).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn resolutions_are_complete(seed in any::<u64>(), n in 1usize..8, extra in 0usize..16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_resolution(n, n + extra, &mut rng).unwrap();
            prop_assert!(r.residual() < 1e-10);
            prop_assert!((r.weights.iter().sum::<f64>() - n as f64).abs() < 1e-10);
        }

        #[test]
        fn klein_nonnegative(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = EntropyModel::fermi();
            let a = random_hermitian(n, 0.01, 0.99, &mut rng);
            let b = random_hermitian(n, 0.01, 0.99, &mut rng);
            prop_assert!(quantum_rel_entropy_matrices(&a, &b, &m).unwrap() > 0.0);
            prop_assert!(quantum_rel_entropy_matrices(&a, &a, &m).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_and_commuting_cases_are_equalities() {
        for m in [EntropyModel::boltzmann(), EntropyModel::fermi(), EntropyModel::bose(-1.0).unwrap()] {
            let a = diag(&[0.3]);
            let b = diag(&[0.6]);
            let out = berezin_lieb_check(&m, &a, &b, &ResolutionOfIdentity::standard(1), Some(1.0)).unwrap();
            assert!((out.classical - out.quantum).abs() < 1e-14);
            assert!((out.quantum - m.rel_entropy_scalar(0.3, 0.6).unwrap()).abs() < 1e-14);
            let a = diag(&[0.2, 0.7, 0.4]);
            let b = diag(&[0.5, 0.1, 0.4]);
            let out = berezin_lieb_check(&m, &a, &b, &ResolutionOfIdentity::standard(3), Some(1.0)).unwrap();
            assert!((out.classical - out.quantum).abs() < 1e-13);
        }
    }

    #[test]
    fn constants_of_the_catalog() {
        assert_eq!(bl_constant(&EntropyModel::boltzmann()).unwrap(), 1.0);
        assert_eq!(bl_constant(&EntropyModel::fermi()).unwrap(), 1.0);
        let bose = EntropyModel::new(EntropyKind::Bose, 1.0, -2.0, 0.5).unwrap();
        assert_eq!(bl_constant(&bose).unwrap(), 1.5);
        let p = EntropyModel::new(EntropyKind::Power { p: 0.5, a: 1.0 }, 1.0, 0.0, 1.0).unwrap();
        assert!(bl_constant(&p).is_err());
    }

    #[test]
    fn sweeps_pass_for_catalog_models() {
        for m in [EntropyModel::boltzmann(), EntropyModel::fermi(), EntropyModel::bose(-1.0).unwrap(), EntropyModel::new(EntropyKind::Bose, 1.0, -2.0, 0.5).unwrap()] {
            let rep = bl_sweep(&m, 500, 11, None).unwrap();
            assert_eq!(rep.violations, 0, "{:?}", rep.first_violation);
            let k = klein_sweep(&m, 200, 5).unwrap();
            assert_eq!(k.violations, 0, "{:?}", k.first_violation);
        }
    }

    #[test]
    fn wrong_bose_constant_is_detected() {
        let rep = bl_falsifiability_probe(20_000, 1).unwrap();
        assert!(rep.violations > 0, "worst ratio {}", rep.worst_ratio);
        let sound = bl_sweep(&EntropyModel::bose(-1.0).unwrap(), 2000, 1, None).unwrap();
        assert_eq!(sound.violations, 0);
    }

    #[test]
    fn spectrum_out_of_range_rejected() {
        let m = EntropyModel::fermi();
        let a = diag(&[1.5, 0.2]);
        let b = diag(&[0.5, 0.2]);
        assert!(matches!(quantum_rel_entropy_matrices(&a, &b, &m), Err(Error::Spectrum(_))));
    }

    #[test]
    fn stability_items_hold() {
        let items = bl_stability_checks(9, 200).unwrap();
        assert_eq!(items.len(), 4);
        for it in items {
            assert_eq!(it.violations, 0, "{}", it.name);
        }
    }

    #[test]
    fn identical_transfer_is_tight() {
        let (y, y0) = (0.3, 0.7);
        let h = bregman(&s0, &s0p, y, y0);
        assert_eq!(h, bregman(&s0, &s0p, y, y0) / 1.0);
        assert!(!exceeds(h, h) && !exceeds(h, 1.0 * h));
    }

    #[test]
    fn integral_representation_sweep() {
        for m in [EntropyModel::boltzmann(), EntropyModel::fermi()] {
            let rep = appd_sweep(&m, 100, 2, 48).unwrap();
            assert_eq!(rep.violations, 0, "{:?} worst {}", rep.first_violation, rep.worst_ratio);
        }
    }

    #[test]
    fn ratio_minimum_rules() {
        assert!(ratio_minimum(&[(0.0, 0.0)]).is_err());
        assert!(matches!(ratio_minimum(&[(0.0, 1.0)]), Err(Error::Violation(_))));
        assert_eq!(ratio_minimum(&[(0.0, 0.0), (2.0, 1.0), (3.0, 6.0)]).unwrap(), 0.5);
        assert!(lt_ratio_estimate(&[(1e-9, 1.0)]).is_err());
    }

    #[test]
    fn coherent_inequality_on_small_states() {
        let model = EntropyModel::boltzmann();
        for hbar in [0.5, 0.25] {
            let g = TorusGrid::quantum_1d(10.0, 64, hbar).unwrap();
            let fam = CoherentFamily::new(Window::Gaussian { width: 1.0 }, &g).unwrap();
            let r = build_reference(&model, &g).unwrap();
            let (c, q) = coherent_bl_check(&r, &model, &fam).unwrap();
            assert!(c.abs() < 1e-12 && q.abs() < 1e-12);
            let a = Symbol::Gaussian { amplitude: 0.8, x0: 0.0, sx: 1.0, v0: 0.0, sv: 0.8 };
            let s = build_initial_from_symbol(&model, &g, &a).unwrap();
            let (c, q) = coherent_bl_check(&s, &model, &fam).unwrap();
            assert!(c > 0.0 && c <= q);
            let (h, lt) = quantum_lt_pair(&s, &model).unwrap();
            assert!(h > 0.0 && lt > 0.0);
        }
    }
}

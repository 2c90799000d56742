//! Classical phase-space distributions around `m_ref(v) = f(|v|^2)` and the
//! Vlasov flow `d_t m + 2 v . grad_x m + F . grad_v m = 0` with
//! `F = -grad(w * rho)`.
//!
//! Fields are stored row-major as `pert[jx * Nv^d + iv]`; velocity indices
//! are row-major over axes as well.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::entropy::{delta_fn, EntropyModel};
use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::hartree::Interaction;
use crate::quad::tanh_sinh;

/// Occupations this far outside `[0, M]` are clipped.
pub const CLIP_TOL: f64 = 1e-9;
/// Out-of-window mass per step that aborts a run.
pub const MAX_FLUX: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseField {
    pub grid: TorusGrid,
    pub background: Vec<f64>,
    pub pert: Vec<f64>,
    /// `(2 pi)^{-d} int background dv`.
    pub rho_ref: f64,
}

/// `(2 pi)^{-d} int_{R^d} f(|v|^2) dv` by double-exponential quadrature.
pub fn reference_density(model: &EntropyModel, d: usize) -> f64 {
    let f = |s: f64| model.eval_sprime_inv(s).unwrap_or(0.0);
    // v = t / (1 - t) maps [0, 1) onto [0, inf)
    match d {
        1 => {
            let i = tanh_sinh(
                |t, _, db| {
                    let v = t / db;
                    f(v * v) / (db * db)
                },
                0.0,
                1.0,
                1e-13,
            );
            2.0 * i / (2.0 * PI)
        }
        _ => {
            let i = tanh_sinh(|t, _, db| f(t / db) / (db * db), 0.0, 1.0, 1e-13);
            i / (4.0 * PI)
        }
    }
}

/// `int_{|v| >= a} f(|v|^2) dv` in `d = 1`.
pub fn reference_tail_1d(model: &EntropyModel, a: f64) -> f64 {
    let f = |s: f64| model.eval_sprime_inv(s).unwrap_or(0.0);
    if a <= 0.0 {
        return 2.0 * PI * reference_density(model, 1);
    }
    // v = a / t
    2.0 * tanh_sinh(
        |t, _, _| {
            if t == 0.0 {
                return 0.0;
            }
            let v = a / t;
            f(v * v) * a / (t * t)
        },
        0.0,
        1.0,
        1e-13,
    )
}

impl PhaseField {
    /// Field with lattice-sum reference density.
    pub fn from_parts(grid: TorusGrid, background: Vec<f64>, pert: Vec<f64>) -> Self {
        let rho_ref = background.iter().sum::<f64>() * grid.dv().powi(grid.d as i32) / (2.0 * PI).powi(grid.d as i32);
        PhaseField { grid, background, pert, rho_ref }
    }

    /// `m = m_ref`, with the reference density from quadrature.
    pub fn reference(model: &EntropyModel, grid: &TorusGrid) -> Result<Self> {
        let background = velocity_points(grid)
            .iter()
            .map(|v| model.eval_sprime_inv(v.iter().map(|t| t * t).sum()))
            .collect::<Result<Vec<_>>>()?;
        Ok(PhaseField {
            grid: grid.clone(),
            pert: vec![0.0; grid.npos() * background.len()],
            background,
            rho_ref: reference_density(model, grid.d),
        })
    }

    /// `m_ref + b` with `b` sampled at minimum-image positions.
    pub fn from_perturbation<B: Fn(&[f64], &[f64]) -> f64>(model: &EntropyModel, grid: &TorusGrid, b: B) -> Result<Self> {
        let mut f = Self::reference(model, grid)?;
        let vs = velocity_points(grid);
        let nvel = vs.len();
        for jx in 0..grid.npos() {
            let p = grid.position(jx);
            let x = [grid.wrap(p[0]), grid.wrap(p[1])];
            for (iv, v) in vs.iter().enumerate() {
                f.pert[jx * nvel + iv] = b(&x[..grid.d], v);
            }
        }
        Ok(f)
    }

    /// `m = f(|v|^2 + a(x, v))`.
    pub fn from_symbol(model: &EntropyModel, grid: &TorusGrid, a: &crate::phase_space::Symbol) -> Result<Self> {
        let m = *model;
        let a = a.clone();
        Self::from_perturbation(model, grid, move |x, v| {
            let av = a.eval(x, v);
            if av == 0.0 {
                return 0.0;
            }
            let v2: f64 = v.iter().map(|t| t * t).sum();
            m.eval_sprime_inv_extended(v2 + av, crate::entropy::EXTENSION_OFFSET) - m.eval_sprime_inv(v2).unwrap_or(0.0)
        })
    }

    pub fn nvel(&self) -> usize {
        self.background.len()
    }

    pub fn total(&self, jx: usize, iv: usize) -> f64 {
        self.background[iv] + self.pert[jx * self.nvel() + iv]
    }

    pub fn min(&self) -> f64 {
        let nv = self.nvel();
        self.pert.iter().enumerate().map(|(i, b)| b + self.background[i % nv]).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        let nv = self.nvel();
        self.pert.iter().enumerate().map(|(i, b)| b + self.background[i % nv]).fold(f64::NEG_INFINITY, f64::max)
    }

    fn dv_d(&self) -> f64 {
        self.grid.dv().powi(self.grid.d as i32)
    }

    /// `rho - rho_ref` on the position lattice.
    pub fn relative_density(&self) -> Vec<f64> {
        let nv = self.nvel();
        let s = self.dv_d() / (2.0 * PI).powi(self.grid.d as i32);
        self.pert.chunks(nv).map(|row| row.iter().sum::<f64>() * s).collect()
    }

    /// `rho(x) = (2 pi)^{-d} int m(x, v) dv`.
    pub fn rho(&self) -> Vec<f64> {
        self.relative_density().into_iter().map(|r| r + self.rho_ref).collect()
    }

    /// `int int b dx dv`.
    pub fn mass(&self) -> f64 {
        self.pert.iter().sum::<f64>() * self.grid.phase_cell()
    }

    pub fn l2_sq(&self) -> f64 {
        self.pert.iter().map(|b| b * b).sum::<f64>() * self.grid.phase_cell()
    }
}

/// Velocity nodes of the classical lattice, row-major over axes.
pub fn velocity_points(grid: &TorusGrid) -> Vec<Vec<f64>> {
    let vs = grid.vs();
    if grid.d == 1 {
        vs.iter().map(|&v| vec![v]).collect()
    } else {
        vs.iter().flat_map(|&a| vs.iter().map(move |&b| vec![a, b])).collect()
    }
}

/// `H_cl(m, m_ref)` against the field's stored background.
pub fn classical_rel_entropy(field: &PhaseField, model: &EntropyModel) -> f64 {
    let nv = field.nvel();
    let mut total = 0.0;
    for (i, &b) in field.pert.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        let m0 = field.background[i % nv].clamp(0.0, model.cap);
        let m = (m0 + b).clamp(0.0, model.cap);
        total += model.rel_entropy_unchecked(m, m0);
    }
    total * field.grid.phase_cell() / (2.0 * PI).powi(field.grid.d as i32)
}

/// `1/2 int (rho - rho_ref) w * (rho - rho_ref)`.
pub fn classical_interaction_energy(field: &PhaseField, w: &Interaction) -> Result<f64> {
    if w.is_zero() {
        return Ok(0.0);
    }
    let drho = field.relative_density();
    let u = w.apply(&field.grid, &drho)?;
    Ok(0.5 * drho.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() * field.grid.cell())
}

pub fn classical_free_energy(field: &PhaseField, model: &EntropyModel, w: &Interaction) -> Result<f64> {
    Ok(classical_rel_entropy(field, model) + classical_interaction_energy(field, w)?)
}

/// `(H_cl, ||b||_2^2, LT functional)`.
pub fn classical_klein_lt(field: &PhaseField, model: &EntropyModel) -> (f64, f64, f64) {
    let d = field.grid.d;
    let rho = field.rho();
    let lt = rho.iter().map(|&r| delta_fn(r.max(0.0), field.rho_ref, d)).sum::<f64>() * field.grid.cell();
    (classical_rel_entropy(field, model), field.l2_sq(), lt)
}

/// Cubic Lagrange weights for fractional offset `t in [0, 1)` on nodes
/// `-1, 0, 1, 2`.
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// `out[n] = src(n + p)` by cubic interpolation, zero outside the window.
fn shift_line(src: &[f64], p: f64, out: &mut [f64]) {
    let n = src.len() as i64;
    let base = p.floor();
    let w = cubic_weights(p - base);
    let base = base as i64;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            let idx = i as i64 + base + k as i64 - 1;
            if (0..n).contains(&idx) {
                acc += wk * src[idx as usize];
            }
        }
        *o = acc;
    }
}

/// Periodic cubic interpolation of lattice values `f` at `x`.
pub fn interp_periodic(f: &[f64], dx: f64, x: f64) -> f64 {
    let n = f.len() as i64;
    let p = x / dx;
    let base = p.floor();
    let w = cubic_weights(p - base);
    let base = base as i64;
    (0..4).map(|k| w[k] * f[(base + k as i64 - 1).rem_euclid(n) as usize]).sum()
}

/// `sup |d/dx interp_periodic(f)|`, exact cell by cell.
pub fn cubic_lipschitz(f: &[f64], dx: f64) -> f64 {
    let n = f.len();
    let mut sup = 0.0f64;
    for j in 0..n {
        let g = |k: i64| f[(j as i64 + k).rem_euclid(n as i64) as usize];
        let (fm, f0, f1, f2) = (g(-1), g(0), g(1), g(2));
        let qa = 0.5 * (-fm + 3.0 * f0 - 3.0 * f1 + f2);
        let qb = fm - 2.0 * f0 + f1;
        let qc = -fm / 3.0 - 0.5 * f0 + f1 - f2 / 6.0;
        let d = |s: f64| (qa * s * s + qb * s + qc).abs();
        sup = sup.max(d(0.0)).max(d(1.0));
        if qa != 0.0 {
            let s = -qb / (2.0 * qa);
            if s > 0.0 && s < 1.0 {
                sup = sup.max(d(s));
            }
        }
    }
    sup / dx
}

/// Diagnostics of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    pub flux: f64,
    pub clipped: f64,
}

/// Strang-split semi-Lagrangian Vlasov solver.
pub struct VlasovPropagator {
    grid: TorusGrid,
    model: EntropyModel,
    interaction: Interaction,
    w: Vec<f64>,
    vel: Vec<Vec<f64>>,
}

impl VlasovPropagator {
    pub fn new(grid: &TorusGrid, model: &EntropyModel, interaction: Interaction) -> Self {
        VlasovPropagator {
            grid: grid.clone(),
            model: *model,
            interaction,
            w: interaction.sample(grid),
            vel: velocity_points(grid),
        }
    }

    /// `F = -grad(w * (rho - rho_ref))`, one field per axis.
    pub fn force(&self, field: &PhaseField) -> Vec<Vec<f64>> {
        if self.interaction.is_zero() {
            return vec![vec![0.0; self.grid.npos()]; self.grid.d];
        }
        let drho = field.relative_density();
        let u = self.grid.convolve_periodic(&self.w, &drho).expect("lattice-sized");
        self.grid.gradient(&u).expect("lattice-sized").into_iter().map(|g| g.into_iter().map(|x| -x).collect()).collect()
    }

    fn advect_x(&self, field: &mut PhaseField, tau: f64) {
        let g = &self.grid;
        let npos = g.npos();
        let nvel = self.vel.len();
        let n = g.n;
        let ks = g.ks();
        let mut buf = vec![Complex64::new(0.0, 0.0); npos];
        for (iv, v) in self.vel.iter().enumerate() {
            let mut any = false;
            for jx in 0..npos {
                let b = field.pert[jx * nvel + iv];
                any |= b != 0.0;
                buf[jx] = Complex64::new(b, 0.0);
            }
            if !any {
                continue;
            }
            let mut spec = g.forward_fft(&buf).expect("lattice-sized");
            // m(x) <- m(x - 2 v tau)
            for (jk, z) in spec.iter_mut().enumerate() {
                let kv = if g.d == 1 { ks[jk] * v[0] } else { ks[jk / n] * v[0] + ks[jk % n] * v[1] };
                *z *= Complex64::from_polar(1.0, -2.0 * kv * tau);
            }
            let back = g.inverse_fft(&spec).expect("lattice-sized");
            for jx in 0..npos {
                field.pert[jx * nvel + iv] = back[jx].re;
            }
        }
    }

    fn advect_v(&self, field: &mut PhaseField, force: &[Vec<f64>], dt: f64) -> f64 {
        let g = &self.grid;
        let nv = g.nv;
        let nvel = self.vel.len();
        let dv = g.dv();
        let mut flux = 0.0;
        let mut tmp = vec![0.0; nv];
        let mut line = vec![0.0; nv];
        for jx in 0..g.npos() {
            let fx: Vec<f64> = (0..g.d).map(|a| force[a][jx]).collect();
            if fx.iter().all(|&f| f == 0.0) {
                continue;
            }
            let row = &mut field.pert[jx * nvel..(jx + 1) * nvel];
            let before: f64 = row.iter().sum();
            // b(v) <- b(v - F dt), one axis at a time
            for axis in 0..g.d {
                let p = -fx[axis] * dt / dv;
                if g.d == 1 {
                    tmp.copy_from_slice(row);
                    shift_line(&tmp, p, row);
                } else {
                    for other in 0..nv {
                        for i in 0..nv {
                            let idx = if axis == 0 { i * nv + other } else { other * nv + i };
                            line[i] = row[idx];
                        }
                        shift_line(&line, p, &mut tmp);
                        for i in 0..nv {
                            let idx = if axis == 0 { i * nv + other } else { other * nv + i };
                            row[idx] = tmp[i];
                        }
                    }
                }
            }
            flux += (before - row.iter().sum::<f64>()).abs();
            for (iv, v) in self.vel.iter().enumerate() {
                let v2s: f64 = v.iter().zip(&fx).map(|(a, f)| (a - f * dt).powi(2)).sum();
                let v2: f64 = v.iter().map(|a| a * a).sum();
                let m = &self.model;
                row[iv] += m.eval_sprime_inv(v2s).unwrap_or(0.0) - m.eval_sprime_inv(v2).unwrap_or(0.0);
            }
        }
        flux * g.phase_cell()
    }

    fn clip(&self, field: &mut PhaseField) -> f64 {
        let nvel = self.vel.len();
        let cap = self.model.cap;
        let mut clipped = 0.0;
        for (i, b) in field.pert.iter_mut().enumerate() {
            let m0 = field.background[i % nvel];
            let m = m0 + *b;
            if m < -CLIP_TOL || m > cap + CLIP_TOL {
                let c = m.clamp(0.0, cap);
                clipped += (c - m).abs();
                *b = c - m0;
            }
        }
        clipped * self.grid.phase_cell()
    }

    pub fn step(&self, field: &mut PhaseField, dt: f64) -> Result<StepReport> {
        self.advect_x(field, 0.5 * dt);
        let f = self.force(field);
        let flux = self.advect_v(field, &f, dt);
        self.advect_x(field, 0.5 * dt);
        let clipped = self.clip(field);
        if flux > MAX_FLUX {
            let vmax_hint = 1.5 * self.grid.vmax;
            return Err(Error::Instability(format!(
                "velocity flux {flux:e} left the window; increase vmax (try {vmax_hint})"
            )));
        }
        Ok(StepReport { flux, clipped })
    }
}

pub fn vlasov_step(field: &PhaseField, model: &EntropyModel, w: &Interaction, dt: f64) -> Result<PhaseField> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step {dt} must be positive")));
    }
    let mut next = field.clone();
    VlasovPropagator::new(&field.grid, model, *w).step(&mut next, dt)?;
    Ok(next)
}

/// Force frames `F(t_k, x_j)` in one dimension, linear in time.
#[derive(Clone, Debug)]
pub struct ForceSeries {
    pub l: f64,
    pub times: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
}

impl ForceSeries {
    pub fn constant(l: f64, n: usize, f0: f64, t0: f64, t1: f64) -> Self {
        ForceSeries { l, times: vec![t0.min(t1), t0.max(t1)], frames: vec![vec![f0; n]; 2] }
    }

    fn bracket(&self, t: f64) -> (usize, usize, f64) {
        let k = self.times.len();
        if k == 1 || t <= self.times[0] {
            return (0, 0, 0.0);
        }
        if t >= self.times[k - 1] {
            return (k - 1, k - 1, 0.0);
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let th = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        (i, i + 1, th)
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let (a, b, th) = self.bracket(t);
        let dx = self.l / self.frames[a].len() as f64;
        let fa = interp_periodic(&self.frames[a], dx, x.rem_euclid(self.l));
        if th == 0.0 {
            return fa;
        }
        (1.0 - th) * fa + th * interp_periodic(&self.frames[b], dx, x.rem_euclid(self.l))
    }

    /// Lipschitz constant in `x` of the interpolated force at time `t`.
    pub fn grad_sup(&self, t: f64) -> f64 {
        let (a, b, th) = self.bracket(t);
        let dx = self.l / self.frames[a].len() as f64;
        if th == 0.0 {
            return cubic_lipschitz(&self.frames[a], dx);
        }
        let mixed: Vec<f64> = self.frames[a].iter().zip(&self.frames[b]).map(|(x, y)| (1.0 - th) * x + th * y).collect();
        cubic_lipschitz(&mixed, dx)
    }
}

/// One RK4 step of `(X', V') = (2V, F(t, X))`.
pub fn rk4_step(f: &ForceSeries, t: f64, h: f64, x: f64, v: f64) -> (f64, f64) {
    let k1 = (2.0 * v, f.eval(t, x));
    let k2 = (2.0 * (v + 0.5 * h * k1.1), f.eval(t + 0.5 * h, x + 0.5 * h * k1.0));
    let k3 = (2.0 * (v + 0.5 * h * k2.1), f.eval(t + 0.5 * h, x + 0.5 * h * k2.0));
    let k4 = (2.0 * (v + h * k3.1), f.eval(t + h, x + h * k3.0));
    (
        x + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        v + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Integrates seeds from `t0` to `t1` with `steps` RK4 steps; positions
/// are returned in `[0, L)`.
pub fn newton_flow(f: &ForceSeries, t0: f64, t1: f64, seeds: &[(f64, f64)], steps: usize) -> Vec<(f64, f64)> {
    let h = (t1 - t0) / steps.max(1) as f64;
    seeds
        .iter()
        .map(|&(x, v)| {
            let (mut x, mut v) = (x, v);
            for s in 0..steps.max(1) {
                (x, v) = rk4_step(f, t0 + s as f64 * h, h, x, v);
            }
            (x.rem_euclid(f.l), v)
        })
        .collect()
}

/// Components of the high-velocity bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HighVelocityTail {
    /// `int |phi(x)| 1(|v|^2 >= 4A) m dx dv`, with the reference beyond the
    /// velocity window added analytically.
    pub tail: f64,
    /// `||phi||_inf H_cl(m, m_tilde_ref) / A`.
    pub entropy_term: f64,
    /// `||phi||_1 int_{|v|^2 >= A/32} m_ref dv`.
    pub background_term: f64,
}

impl HighVelocityTail {
    /// `tail / (entropy_term + background_term)`.
    pub fn ratio(&self) -> f64 {
        self.tail / (self.entropy_term + self.background_term)
    }
}

/// Tail mass and bound ingredients for a one-dimensional field whose
/// background is the smoothed reference.
pub fn high_velocity_tail(field: &PhaseField, model: &EntropyModel, phi: &[f64], a: f64, radius: f64) -> Result<HighVelocityTail> {
    if !(a > 32.0 * radius * radius) {
        return Err(Error::Domain(format!("threshold A = {a} must exceed 32 R^2 = {}", 32.0 * radius * radius)));
    }
    if field.grid.d != 1 {
        return Err(Error::Config("high-velocity diagnostics are implemented for d = 1".into()));
    }
    let g = &field.grid;
    let nv = field.nvel();
    let mut tail = 0.0;
    for jx in 0..g.npos() {
        let p = phi[jx].abs();
        if p == 0.0 {
            continue;
        }
        for iv in 0..nv {
            let v = g.v(iv);
            if v * v >= 4.0 * a {
                tail += p * field.total(jx, iv).max(0.0);
            }
        }
    }
    tail *= g.phase_cell();
    let sup = phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let l1 = phi.iter().map(|x| x.abs()).sum::<f64>() * g.cell();
    // background beyond the velocity window
    let half = 0.5 * g.dv();
    let (lo, hi) = (0..nv).map(|iv| g.v(iv)).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let cut = 2.0 * a.sqrt();
    tail += 0.5 * l1 * (reference_tail_1d(model, (hi + half).max(cut)) + reference_tail_1d(model, (half - lo).max(cut)));
    Ok(HighVelocityTail {
        tail,
        entropy_term: sup * classical_rel_entropy(field, model) / a,
        background_term: l1 * reference_tail_1d(model, (a / 32.0).sqrt()),
    })
}

/// Restriction and mollification of a gridded perturbation.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub pert: Vec<f64>,
    pub entropy_in: f64,
    pub entropy_out: f64,
    pub eps_used: f64,
}

/// Localizes `b_raw` to `|(x, v)| < r` and `1/r <= m <= M - 1/r`, then
/// mollifies it with a compact bump of width `eps` (halved until the
/// result stays inside `(0, M)`).
pub fn prepare_energy_data(model: &EntropyModel, grid: &TorusGrid, b_raw: &[f64], r: f64, eps: f64) -> Result<PreparedData> {
    if grid.d != 1 {
        return Err(Error::Config("data preparation is implemented for d = 1".into()));
    }
    let reference = PhaseField::reference(model, grid)?;
    let nv = reference.nvel();
    if b_raw.len() != grid.npos() * nv {
        return Err(Error::SizeMismatch { expected: grid.npos() * nv, got: b_raw.len() });
    }
    let entropy_in = classical_rel_entropy(&PhaseField { pert: b_raw.to_vec(), ..reference.clone() }, model);
    let mut cut = vec![0.0; b_raw.len()];
    for jx in 0..grid.npos() {
        let x = grid.wrap(grid.x(jx));
        for iv in 0..nv {
            let v = grid.v(iv);
            let idx = jx * nv + iv;
            let m = reference.background[iv] + b_raw[idx];
            if x * x + v * v < r * r && m >= 1.0 / r && m <= model.cap - 1.0 / r {
                cut[idx] = b_raw[idx];
            }
        }
    }
    let mut e = eps;
    for _ in 0..30 {
        let out = mollify(grid, &cut, nv, e);
        let ok = out.iter().enumerate().all(|(i, b)| {
            if *b == 0.0 {
                return true;
            }
            let m = reference.background[i % nv] + b;
            m > 0.0 && m < model.cap
        });
        if ok {
            let entropy_out = classical_rel_entropy(&PhaseField { pert: out.clone(), ..reference.clone() }, model);
            return Ok(PreparedData { pert: out, entropy_in, entropy_out, eps_used: e });
        }
        e *= 0.5;
    }
    Ok(PreparedData { entropy_out: classical_rel_entropy(&PhaseField { pert: cut.clone(), ..reference }, model), pert: cut, entropy_in, eps_used: 0.0 })
}

/// Separable convolution with `exp(-1/(1 - (s/eps)^2))` in `x` and `v`.
fn mollify(grid: &TorusGrid, b: &[f64], nv: usize, eps: f64) -> Vec<f64> {
    let weights = |h: f64| -> Vec<(i64, f64)> {
        let r = (eps / h).ceil() as i64;
        let mut w: Vec<(i64, f64)> = (-r..=r)
            .map(|k| {
                let t = k as f64 * h / eps;
                (k, if t.abs() < 1.0 { (-1.0 / (1.0 - t * t)).exp() } else { 0.0 })
            })
            .filter(|p| p.1 > 0.0)
            .collect();
        let s: f64 = w.iter().map(|p| p.1).sum();
        w.iter_mut().for_each(|p| p.1 /= s);
        w
    };
    let wx = weights(grid.dx());
    let wv = weights(grid.dv());
    let nx = grid.npos() as i64;
    let mut tmp = vec![0.0; b.len()];
    for jx in 0..nx {
        for iv in 0..nv {
            tmp[jx as usize * nv + iv] = wx.iter().map(|&(k, w)| w * b[(jx + k).rem_euclid(nx) as usize * nv + iv]).sum();
        }
    }
    let mut out = vec![0.0; b.len()];
    for jx in 0..nx as usize {
        for iv in 0..nv as i64 {
            out[jx * nv + iv as usize] = wv
                .iter()
                .filter(|&&(k, _)| (0..nv as i64).contains(&(iv + k)))
                .map(|&(k, w)| w * tmp[jx * nv + (iv + k) as usize])
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::Symbol;

    fn grid1(n: usize, nv: usize, l: f64, vmax: f64) -> TorusGrid {
        TorusGrid::new(1, l, n, 1.0, nv, vmax).unwrap()
    }

    fn bump_b(x: &[f64], v: &[f64]) -> f64 {
        -0.05 * (-(x[0] * x[0]) / 0.5 - (v[0] - 0.3).powi(2) / 0.3).exp()
    }

    #[test]
    fn reference_density_values() {
        // (2 pi)^{-1} int e^{-v^2} dv = 1 / (2 sqrt(pi))
        let r = reference_density(&EntropyModel::boltzmann(), 1);
        assert!((r - 0.5 / PI.sqrt()).abs() < 1e-12);
        let r2 = reference_density(&EntropyModel::boltzmann(), 2);
        assert!((r2 - 1.0 / (4.0 * PI)).abs() < 1e-12);
        let g = grid1(16, 64, 10.0, 6.0);
        let f = PhaseField::reference(&EntropyModel::boltzmann(), &g).unwrap();
        assert!(f.rho().iter().all(|&x| (x - 0.2820947917738781).abs() < 1e-12));
        let t = reference_tail_1d(&EntropyModel::boltzmann(), 0.0);
        assert!((t - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn box_perturbation_density_jump() {
        let g = grid1(16, 64, 10.0, 6.0);
        let mut f = PhaseField::reference(&EntropyModel::boltzmann(), &g).unwrap();
        let h = 0.1;
        for iv in 20..30 {
            f.pert[3 * 64 + iv] = h;
        }
        let drho = f.relative_density();
        assert!((drho[3] - h * 10.0 * g.dv() / (2.0 * PI)).abs() < 1e-14);
        assert!(drho.iter().enumerate().all(|(j, &x)| j == 3 || x == 0.0));
        assert!((g.integrate(&drho) - f.mass() / (2.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn homogeneous_states_are_stationary() {
        let model = EntropyModel::boltzmann();
        let g = grid1(32, 64, 10.0, 6.0);
        let mut f = PhaseField::reference(&model, &g).unwrap();
        // an x-independent perturbation exerts no force either
        for jx in 0..32 {
            for iv in 0..64 {
                f.pert[jx * 64 + iv] = -0.2 * (-g.v(iv).powi(2) - (g.v(iv) - 0.5).powi(2)).exp();
            }
        }
        let b0 = f.pert.clone();
        let p = VlasovPropagator::new(&g, &model, Interaction::Gaussian { amplitude: 1.0, width: 0.5 });
        for _ in 0..1000 {
            p.step(&mut f, 0.01).unwrap();
        }
        let err = f.pert.iter().zip(&b0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn free_transport_uses_factor_two() {
        let model = EntropyModel::boltzmann();
        let g = grid1(64, 64, 10.0, 6.0);
        let f0 = PhaseField::from_perturbation(&model, &g, bump_b).unwrap();
        let t = 0.5;
        let f1 = vlasov_step(&f0, &model, &Interaction::Zero, t).unwrap();
        let mut err = 0.0f64;
        for jx in 0..64 {
            for iv in 0..64 {
                let x = g.wrap(g.x(jx) - 2.0 * g.v(iv) * t);
                let want = bump_b(&[x], &[g.v(iv)]);
                err = err.max((f1.pert[jx * 64 + iv] - want).abs());
            }
        }
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn small_perturbation_entropy_is_quadratic() {
        let model = EntropyModel::fermi();
        let g = grid1(32, 64, 10.0, 8.0);
        let f = PhaseField::from_perturbation(&model, &g, |x, v| 0.01 * (-x[0] * x[0] - v[0] * v[0]).exp()).unwrap();
        let h = classical_rel_entropy(&f, &model);
        let mut quad = 0.0;
        for (i, b) in f.pert.iter().enumerate() {
            quad += 0.5 * model.sprime2(f.background[i % 64]).abs() * b * b;
        }
        quad *= g.phase_cell() / (2.0 * PI);
        assert!(((h - quad) / quad).abs() < 0.05, "{h} vs {quad}");
        let zero = PhaseField::reference(&model, &g).unwrap();
        assert_eq!(classical_klein_lt(&zero, &model), (0.0, 0.0, 0.0));
        let w = Interaction::Gaussian { amplitude: 1.0, width: 0.5 };
        assert_eq!(classical_free_energy(&zero, &model, &w).unwrap(), 0.0);
        assert_eq!(classical_free_energy(&f, &model, &Interaction::Zero).unwrap(), h);
    }

    fn interacting() -> (PhaseField, EntropyModel, Interaction) {
        let model = EntropyModel::boltzmann();
        let g = grid1(64, 128, 10.0, 6.0);
        let a = Symbol::Gaussian { amplitude: 0.6, x0: 0.0, sx: 0.7, v0: 0.2, sv: 0.6 };
        (PhaseField::from_symbol(&model, &g, &a).unwrap(), model, Interaction::Gaussian { amplitude: 2.0, width: 0.6 })
    }

    #[test]
    fn mass_conserved_and_order_two() {
        let (f0, model, w) = interacting();
        let run = |dt: f64| {
            let p = VlasovPropagator::new(&f0.grid, &model, w);
            let mut f = f0.clone();
            for _ in 0..(0.5 / dt).round() as usize {
                p.step(&mut f, dt).unwrap();
            }
            f
        };
        let a = run(0.02);
        let b = run(0.01);
        let c = run(0.005);
        assert!((c.mass() - f0.mass()).abs() < 1e-9);
        let d = |x: &PhaseField, y: &PhaseField| x.pert.iter().zip(&y.pert).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let ratio = d(&a, &b) / d(&b, &c);
        assert!((ratio - 4.0).abs() < 0.6, "{ratio}");
        assert!(c.min() >= -1e-6 && c.max() <= 1.0 + 1e-6);
    }

    #[test]
    fn flux_abort() {
        let model = EntropyModel::boltzmann();
        let g = grid1(16, 16, 10.0, 2.0);
        let f = PhaseField::from_perturbation(&model, &g, |x, v| 0.2 * (-x[0] * x[0] - (v[0] - 1.8).powi(2) * 10.0).exp()).unwrap();
        let w = Interaction::Gaussian { amplitude: 50.0, width: 0.5 };
        assert!(matches!(vlasov_step(&f, &model, &w, 0.5), Err(Error::Instability(_))));
    }

    #[test]
    fn two_dimensional_stationary_and_mass() {
        let model = EntropyModel::boltzmann();
        let g = TorusGrid::new(2, 8.0, 16, 1.0, 16, 5.0).unwrap();
        let f0 = PhaseField::reference(&model, &g).unwrap();
        let w = Interaction::Gaussian { amplitude: 1.0, width: 0.6 };
        let p = VlasovPropagator::new(&g, &model, w);
        let mut f = f0.clone();
        for _ in 0..10 {
            p.step(&mut f, 0.05).unwrap();
        }
        assert!(f.pert.iter().all(|x| x.abs() < 1e-12));
        let mut f = PhaseField::from_perturbation(&model, &g, |x, v| -0.05 * (-(x[0] * x[0] + x[1] * x[1]) - v[0] * v[0] - v[1] * v[1]).exp()).unwrap();
        let m0 = f.mass();
        for _ in 0..10 {
            p.step(&mut f, 0.05).unwrap();
        }
        assert!((f.mass() - m0).abs() < 1e-9);
        let (h, k, lt) = classical_klein_lt(&f, &model);
        assert!(h > 0.0 && k > 0.0 && lt > 0.0);
    }

    #[test]
    fn newton_flow_closed_forms() {
        let l = 10.0;
        let zero = ForceSeries::constant(l, 32, 0.0, 0.0, 1.0);
        let out = newton_flow(&zero, 0.0, 1.0, &[(1.0, 0.7), (9.0, -2.0)], 10);
        assert!((out[0].0 - 2.4).abs() < 1e-12 && out[0].1 == 0.7);
        assert!((out[1].0 - 5.0).abs() < 1e-12);
        let f0 = 0.3;
        let cst = ForceSeries::constant(l, 32, f0, 0.0, 1.0);
        let out = newton_flow(&cst, 0.0, 1.0, &[(1.0, 0.5)], 7);
        assert!((out[0].1 - (0.5 + f0)).abs() < 1e-12);
        assert!((out[0].0 - (1.0 + 1.0 + f0)).abs() < 1e-12);
    }

    #[test]
    fn newton_flow_round_trip() {
        let l = 2.0 * PI;
        let n = 64;
        let frames: Vec<Vec<f64>> = (0..3).map(|k| (0..n).map(|j| -(0.5 + 0.1 * k as f64) * (j as f64 * l / n as f64).sin()).collect()).collect();
        let f = ForceSeries { l, times: vec![0.0, 0.5, 1.0], frames };
        let seeds = [(0.3, 0.2), (2.0, -0.4), (5.0, 1.0)];
        for steps in [20usize, 40] {
            let fw = newton_flow(&f, 0.0, 1.0, &seeds, steps);
            let bw = newton_flow(&f, 1.0, 0.0, &fw, steps);
            let err = seeds.iter().zip(&bw).map(|(a, b)| {
                let dx = (a.0 - b.0 + l / 2.0).rem_euclid(l) - l / 2.0;
                dx.abs() + (a.1 - b.1).abs()
            }).fold(0.0, f64::max);
            assert!(err < 1e-6, "{steps}: {err}");
        }
    }

    #[test]
    fn high_velocity_preconditions_and_scaling() {
        let model = EntropyModel::boltzmann();
        let g = grid1(16, 64, 10.0, 12.0);
        let f = PhaseField::from_perturbation(&model, &g, bump_b).unwrap();
        let phi = vec![1.0; 16];
        assert!(high_velocity_tail(&f, &model, &phi, 1.0, 1.0).is_err());
        let a = high_velocity_tail(&f, &model, &phi, 33.0, 1.0).unwrap();
        let b = high_velocity_tail(&f, &model, &phi, 66.0, 1.0).unwrap();
        assert!(b.entropy_term <= 0.5 * a.entropy_term + 1e-15);
        let r = PhaseField::reference(&model, &g).unwrap();
        let t = high_velocity_tail(&r, &model, &phi, 33.0, 1.0).unwrap();
        assert_eq!(t.entropy_term, 0.0);
        assert!(t.tail > 0.0 && t.tail < t.background_term);
    }

    #[test]
    fn preparation_of_energy_data() {
        let model = EntropyModel::boltzmann();
        let g = grid1(64, 64, 10.0, 6.0);
        let f = PhaseField::from_perturbation(&model, &g, bump_b).unwrap();
        let out = prepare_energy_data(&model, &g, &f.pert, 1e3, g.dx()).unwrap();
        assert!((out.entropy_out - out.entropy_in).abs() < 1e-3);
        let zero = prepare_energy_data(&model, &g, &vec![0.0; f.pert.len()], 10.0, 0.3).unwrap();
        assert!(zero.pert.iter().all(|&x| x == 0.0));
        let mut bad = f.pert.clone();
        bad[5 * 64 + 32] = 2.0;
        bad[7 * 64 + 10] = -1.0;
        let out = prepare_energy_data(&model, &g, &bad, 20.0, 0.3).unwrap();
        for (i, b) in out.pert.iter().enumerate() {
            let m = f.background[i % 64] + b;
            assert!(*b == 0.0 || (m > 0.0 && m < 1.0));
        }
    }
}

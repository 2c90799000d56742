//! Stability machinery for the Vlasov flow in one dimension: twin Newton
//! flows and the gap functional `Q(t)`, a dictionary lower bound on the
//! dual norm `||.||_X`, quadratic optimal transport between local
//! perturbations of a common background, and displacement convexity.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::entropy::EntropyModel;
use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::hartree::Interaction;
use crate::vlasov::{rk4_step, ForceSeries, PhaseField, VlasovPropagator};

/// One characteristic seed with its `W_0 dx dv` weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Seed {
    pub x: f64,
    pub v: f64,
    pub weight: f64,
}

/// Two force histories sharing one initial distribution.
#[derive(Clone, Debug)]
pub struct TwinRun {
    pub l: f64,
    pub f1: ForceSeries,
    pub f2: ForceSeries,
    pub seeds: Vec<Seed>,
}

impl TwinRun {
    /// One seed per phase-space cell where `W_0 > 0`, at the lattice node
    /// or, with `jitter`, uniformly inside the cell.
    pub fn new(w0: &PhaseField, f1: ForceSeries, f2: ForceSeries, jitter: Option<u64>) -> Result<Self> {
        let g = &w0.grid;
        if g.d != 1 {
            return Err(Error::Config("twin runs are implemented for d = 1".into()));
        }
        let mut rng = jitter.map(ChaCha8Rng::seed_from_u64);
        let (dx, dv) = (g.dx(), g.dv());
        let mut seeds = Vec::new();
        for jx in 0..g.npos() {
            for iv in 0..w0.nvel() {
                let m = w0.total(jx, iv);
                if m <= 0.0 {
                    continue;
                }
                let (mut x, mut v) = (g.x(jx), g.v(iv));
                if let Some(r) = rng.as_mut() {
                    x += dx * (r.gen::<f64>() - 0.5);
                    v += dv * (r.gen::<f64>() - 0.5);
                }
                seeds.push(Seed { x, v, weight: m * dx * dv });
            }
        }
        Ok(TwinRun { l: g.l, f1, f2, seeds })
    }

    pub fn mass(&self) -> f64 {
        self.seeds.iter().map(|s| s.weight).sum()
    }

    /// Integrates both flows to `t_end` with `steps` RK4 steps and records
    /// the diagnostics at every step.
    pub fn evolve(&self, t_end: f64, steps: usize) -> TwinHistory {
        let steps = steps.max(1);
        let h = t_end / steps as f64;
        let ns = self.seeds.len();
        let mut p1: Vec<(f64, f64)> = self.seeds.iter().map(|s| (s.x, s.v)).collect();
        let mut p2 = p1.clone();
        let mut i1 = vec![0.0; ns];
        let mut i2 = vec![0.0; ns];
        let mut prev_g = 2.0 + self.f2.grad_sup(0.0);
        let mut expo = 0.0;
        let mut hist = TwinHistory { times: vec![0.0], q: vec![0.0], newton_ratio: vec![0.0], cloud_rhs: vec![0.0], exponent: vec![0.0] };
        for k in 0..steps {
            let t = k as f64 * h;
            for s in 0..ns {
                let start = p1[s];
                p1[s] = rk4_step(&self.f1, t, h, start.0, start.1);
                p2[s] = rk4_step(&self.f2, t, h, p2[s].0, p2[s].1);
                let (a, b) = self.gap_integrals(t, h, start, p1[s]);
                i1[s] += a;
                i2[s] += b;
            }
            let tn = t + h;
            let gnow = 2.0 + self.f2.grad_sup(tn);
            expo += 0.5 * h * (prev_g + gnow);
            prev_g = gnow;
            let mut q = 0.0;
            let mut worst = 0.0f64;
            let mut crhs = 0.0;
            for s in 0..ns {
                let dxu = p1[s].0 - p2[s].0;
                let lhs = dxu.abs() + (p1[s].1 - p2[s].1).abs();
                let rhs = expo.exp() * i1[s];
                if lhs > 0.0 {
                    worst = worst.max(if rhs > 0.0 { lhs / rhs } else { f64::INFINITY });
                }
                let dp = (dxu + 0.5 * self.l).rem_euclid(self.l) - 0.5 * self.l;
                q += self.seeds[s].weight * dp * dp;
                crhs += self.seeds[s].weight * i2[s];
            }
            hist.times.push(tn);
            hist.q.push(q);
            hist.newton_ratio.push(worst);
            hist.cloud_rhs.push(tn * (2.0 * expo).exp() * crhs);
            hist.exponent.push(expo);
        }
        hist
    }
}

impl TwinRun {
    /// `int |F_1 - F_2|` and `int |F_1 - F_2|^2` along one step of the first
    /// flow, on a Hermite reconstruction of the path.
    fn gap_integrals(&self, t: f64, h: f64, a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
        let (da, db) = (2.0 * a.1 * h, 2.0 * b.1 * h);
        let (mut s1, mut s2) = (0.0, 0.0);
        for k in 0..=GAP_SUBSTEPS {
            let u = k as f64 / GAP_SUBSTEPS as f64;
            let (u2, u3) = (u * u, u * u * u);
            let x = (2.0 * u3 - 3.0 * u2 + 1.0) * a.0 + (u3 - 2.0 * u2 + u) * da + (3.0 * u2 - 2.0 * u3) * b.0 + (u3 - u2) * db;
            let d = (self.f1.eval(t + u * h, x) - self.f2.eval(t + u * h, x)).abs();
            let w = if k == 0 || k == GAP_SUBSTEPS { 0.5 } else { 1.0 };
            s1 += w * d;
            s2 += w * d * d;
        }
        let c = h / GAP_SUBSTEPS as f64;
        (s1 * c, s2 * c)
    }
}

const GAP_SUBSTEPS: usize = 32;

/// Per-step diagnostics of a twin evolution.
#[derive(Clone, Debug, Serialize)]
pub struct TwinHistory {
    pub times: Vec<f64>,
    /// `Q(t)` with the periodic distance.
    pub q: Vec<f64>,
    /// Worst per-seed ratio of the two sides of the Newton gap estimate.
    pub newton_ratio: Vec<f64>,
    /// `C_t sum_i w_i int_0^t |F_1 - F_2|^2(s, X_1(s)) ds`.
    pub cloud_rhs: Vec<f64>,
    /// `int_0^t (2 + ||grad F_2||_inf) ds`.
    pub exponent: Vec<f64>,
}

pub fn q_functional(twin: &TwinRun, t: f64, steps: usize) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    *twin.evolve(t, steps).q.last().expect("nonempty")
}

/// Worst ratio of `|X_1 - X_2| + |V_1 - V_2|` to its Gronwall bound along
/// the whole interval `[0, t]`.
pub fn newton_gap_bound_check(twin: &TwinRun, t: f64, steps: usize) -> Result<f64> {
    let worst = twin.evolve(t, steps).newton_ratio.into_iter().fold(0.0, f64::max);
    if worst > 1.0 + 1e-6 {
        return Err(Error::Violation(format!("Newton gap estimate fails with ratio {worst}")));
    }
    Ok(worst)
}

/// `max(||f||_2, ||f||_p)` on a periodic lattice with `p = max(d + 2, 4)`.
pub fn l2_cap_lp(f: &[f64], cell: f64, d: usize) -> f64 {
    let p = (d as f64 + 2.0).max(4.0);
    let n2 = (f.iter().map(|x| x * x).sum::<f64>() * cell).sqrt();
    let np = (f.iter().map(|x| x.abs().powf(p)).sum::<f64>() * cell).powf(1.0 / p);
    n2.max(np)
}

/// Upper bound on `||rho||_{L^2 + L^inf}` from the splits
/// `min(rho, R) + (rho - R)_+`.
pub fn l2_plus_linf(rho: &[f64], cell: f64) -> f64 {
    let mut levels: Vec<f64> = rho.iter().map(|x| x.abs()).collect();
    levels.push(0.0);
    levels.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    levels
        .iter()
        .map(|&r| r + (rho.iter().map(|x| (x.abs() - r).max(0.0).powi(2)).sum::<f64>() * cell).sqrt())
        .fold(f64::INFINITY, f64::min)
}

/// Certified lower bound on `||rho_gap||_X` from the Fourier modes
/// `1 <= |m| <= size`, each scaled to `max(||phi'||_2, ||phi'||_4) = 1`.
pub fn x_norm_lower_bound(grid: &TorusGrid, rho_gap: &[f64], size: usize) -> Result<f64> {
    if grid.d != 1 {
        return Err(Error::Config("the dictionary bound is implemented for d = 1".into()));
    }
    if rho_gap.len() != grid.n {
        return Err(Error::SizeMismatch { expected: grid.n, got: rho_gap.len() });
    }
    let cell = grid.cell();
    let mut best = 0.0f64;
    for m in 1..=size.min(grid.n / 2 - 1) {
        let k = 2.0 * PI * m as f64 / grid.l;
        let (mut c, mut s) = (0.0, 0.0);
        for (j, &r) in rho_gap.iter().enumerate() {
            let x = grid.x(j);
            c += r * (k * x).cos();
            s += r * (k * x).sin();
        }
        // the best phase of cos(kx - theta) pairs with the same norm
        let pair = (c * c + s * s).sqrt() * cell;
        let grad: Vec<f64> = (0..grid.n).map(|j| k * (k * grid.x(j)).sin()).collect();
        best = best.max(pair / l2_cap_lp(&grad, cell, 1));
    }
    Ok(best)
}

/// Force frames and densities of a recorded Vlasov run.
#[derive(Clone, Debug)]
pub struct VlasovRecord {
    pub forces: ForceSeries,
    pub rho: Vec<Vec<f64>>,
    pub last: PhaseField,
}

/// Evolves `field` for `steps` steps of size `dt`, recording the force and
/// density at every step.
pub fn record_vlasov_run(field: &PhaseField, model: &EntropyModel, w: &Interaction, dt: f64, steps: usize) -> Result<VlasovRecord> {
    let p = VlasovPropagator::new(&field.grid, model, *w);
    let mut f = field.clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut frames = Vec::with_capacity(steps + 1);
    let mut rho = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        if k > 0 {
            p.step(&mut f, dt)?;
        }
        times.push(k as f64 * dt);
        frames.push(p.force(&f).remove(0));
        rho.push(f.rho());
    }
    Ok(VlasovRecord { forces: ForceSeries { l: field.grid.l, times, frames }, rho, last: f })
}

/// Empirical constants of the two stability links at one time.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChainPoint {
    pub t: f64,
    pub q: f64,
    /// `Q / (C_t sum_i w_i int |dF|^2(X_1))`, at most 1.
    pub link1_cloud: f64,
    /// `Q / (2 pi C_t int int rho_1 |dF|^2)`.
    pub link1_field: f64,
    /// `Q / (2 pi C_t N(rho_1) int ||dF||^2)` with the norms of the estimate.
    pub link1_norms: f64,
    /// Dictionary lower bound on `||rho_1 - rho_2||_X`.
    pub x_lower: f64,
    /// `x_lower^2 / Q`.
    pub link2: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub points: Vec<ChainPoint>,
    pub newton_worst: f64,
    pub link1_max: f64,
    pub link2_max: f64,
}

/// Evaluates both links on the frame times of two recorded runs from a
/// common initial field.
pub fn gronwall_chain_check(w0: &PhaseField, r1: &VlasovRecord, r2: &VlasovRecord, dictionary: usize, rk_per_frame: usize) -> Result<ChainReport> {
    let g = &w0.grid;
    let times = &r1.forces.times;
    if times.len() < 2 || r2.forces.times.len() != times.len() {
        return Err(Error::Config("twin records need matching frame times".into()));
    }
    let t_end = *times.last().expect("nonempty");
    let frames = times.len() - 1;
    let twin = TwinRun::new(w0, r1.forces.clone(), r2.forces.clone(), None)?;
    let hist = twin.evolve(t_end, frames * rk_per_frame.max(1));
    let cell = g.cell();
    let mut field_int = 0.0;
    let mut norm_int = 0.0;
    let mut prev_field = 0.0;
    let mut prev_norm = 0.0;
    let mut rho_sup = 0.0f64;
    let mut points = Vec::with_capacity(frames);
    for k in 0..=frames {
        let df: Vec<f64> = r1.forces.frames[k].iter().zip(&r2.forces.frames[k]).map(|(a, b)| a - b).collect();
        let fld = r1.rho[k].iter().zip(&df).map(|(r, d)| r * d * d).sum::<f64>() * cell;
        let nrm = l2_cap_lp(&df, cell, 1).powi(2);
        rho_sup = rho_sup.max(l2_plus_linf(&r1.rho[k], cell));
        if k > 0 {
            let h = times[k] - times[k - 1];
            field_int += 0.5 * h * (prev_field + fld);
            norm_int += 0.5 * h * (prev_norm + nrm);
        }
        prev_field = fld;
        prev_norm = nrm;
        if k == 0 {
            continue;
        }
        let idx = k * rk_per_frame.max(1);
        let t = hist.times[idx];
        let q = hist.q[idx];
        let ct = t * (2.0 * hist.exponent[idx]).exp();
        let gap: Vec<f64> = r1.rho[k].iter().zip(&r2.rho[k]).map(|(a, b)| a - b).collect();
        let x_lower = x_norm_lower_bound(g, &gap, dictionary)?;
        let ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
        points.push(ChainPoint {
            t,
            q,
            link1_cloud: ratio(q, hist.cloud_rhs[idx]),
            link1_field: ratio(q, 2.0 * PI * ct * field_int),
            link1_norms: ratio(q, 2.0 * PI * ct * rho_sup * norm_int),
            x_lower,
            link2: ratio(x_lower * x_lower, q),
        });
    }
    let newton_worst = hist.newton_ratio.iter().copied().fold(0.0, f64::max);
    let link1_max = points.iter().map(|p| p.link1_cloud.max(p.link1_field).max(p.link1_norms)).fold(0.0, f64::max);
    let link2_max = points.iter().map(|p| p.link2).fold(0.0, f64::max);
    Ok(ChainReport { points, newton_worst, link1_max, link2_max })
}

/// Discrete measure on the line, sorted by position.
#[derive(Clone, Debug, PartialEq)]
pub struct Atoms {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl Atoms {
    pub fn new(x: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if x.len() != w.len() {
            return Err(Error::SizeMismatch { expected: x.len(), got: w.len() });
        }
        if w.iter().any(|&m| m < 0.0) || x.windows(2).any(|p| p[1] < p[0]) {
            return Err(Error::Domain("atoms need sorted positions and non-negative weights".into()));
        }
        Ok(Atoms { x, w })
    }

    pub fn mass(&self) -> f64 {
        self.w.iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct OtResult {
    pub cost: f64,
    /// Barycentric image of every source atom.
    pub map: Vec<f64>,
    /// `(i, j, mass)` triples of the monotone coupling.
    pub coupling: Vec<(usize, usize, f64)>,
}

/// Monotone (north-west corner) coupling of two atom measures of equal
/// mass, optimal for the quadratic cost.
pub fn ot_monotone(a: &Atoms, b: &Atoms) -> Result<OtResult> {
    let (ma, mb) = (a.mass(), b.mass());
    if (ma - mb).abs() > 1e-8 * ma.max(mb).max(1.0) {
        return Err(Error::Domain(format!("window masses differ: {ma} vs {mb}")));
    }
    // absorb a sub-tolerance mismatch into the target
    let scale = if mb > 0.0 { ma / mb } else { 1.0 };
    let mut rb: Vec<f64> = b.w.iter().map(|w| w * scale).collect();
    let mut coupling = Vec::new();
    let mut cost = 0.0;
    let mut image = vec![0.0; a.x.len()];
    let mut j = 0;
    for (i, &wi) in a.w.iter().enumerate() {
        let mut left = wi;
        while left > 0.0 && j < rb.len() {
            let m = left.min(rb[j]);
            if m > 0.0 {
                coupling.push((i, j, m));
                cost += m * (a.x[i] - b.x[j]).powi(2);
                image[i] += m * b.x[j];
            }
            left -= m;
            rb[j] -= m;
            if rb[j] <= 1e-300 || left > 0.0 {
                j += 1;
            }
        }
    }
    let map = image.iter().zip(&a.w).zip(&a.x).map(|((s, &w), &x)| if w > 0.0 { s / w } else { x }).collect();
    Ok(OtResult { cost, map, coupling })
}

/// Quadratic transport cost between lattice densities that agree outside
/// the index window `[lo, hi)`.
pub fn ot_cost_1d(rho1: &[f64], rho2: &[f64], x: &[f64], dx: f64, window: (usize, usize)) -> Result<OtResult> {
    let (lo, hi) = window;
    if rho1.len() != rho2.len() || x.len() != rho1.len() {
        return Err(Error::SizeMismatch { expected: rho1.len(), got: rho2.len().min(x.len()) });
    }
    let outside = (0..rho1.len()).filter(|&i| i < lo || i >= hi).map(|i| (rho1[i] - rho2[i]).abs()).fold(0.0, f64::max);
    if outside > 1e-12 {
        return Err(Error::Domain(format!("densities differ by {outside} outside the window")));
    }
    let a = Atoms::new(x[lo..hi].to_vec(), rho1[lo..hi].iter().map(|r| r * dx).collect())?;
    let b = Atoms::new(x[lo..hi].to_vec(), rho2[lo..hi].iter().map(|r| r * dx).collect())?;
    ot_monotone(&a, &b)
}

/// Transport cost from a generic linear-programming solve of the coupling
/// problem.
pub fn ot_cost_lp(a: &Atoms, b: &Atoms) -> Result<f64> {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let (na, nb) = (a.x.len(), b.x.len());
    let scale = b.mass() / a.mass();
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = (0..na)
        .map(|i| (0..nb).map(|j| p.add_var((a.x[i] - b.x[j]).powi(2), (0.0, f64::INFINITY))).collect())
        .collect();
    for i in 0..na {
        let row: Vec<_> = (0..nb).map(|j| (vars[i][j], 1.0)).collect();
        p.add_constraint(row.as_slice(), ComparisonOp::Eq, a.w[i] * scale);
    }
    for j in 0..nb.saturating_sub(1) {
        let col: Vec<_> = (0..na).map(|i| (vars[i][j], 1.0)).collect();
        p.add_constraint(col.as_slice(), ComparisonOp::Eq, b.w[j]);
    }
    let sol = p.solve().map_err(|e| Error::Violation(format!("LP solve failed: {e}")))?;
    Ok(sol.objective() / scale)
}

/// Piece of the monotone map on which both densities are constant.
#[derive(Clone, Copy, Debug)]
struct Piece {
    x0: f64,
    len: f64,
    t0: f64,
    r1: f64,
    r2: f64,
}

/// Exact monotone map between piecewise-constant densities on a common
/// window of cells.
#[derive(Clone, Debug)]
pub struct MonotoneMap {
    pieces: Vec<Piece>,
}

impl MonotoneMap {
    /// `rho_i` are cell averages on `[x0 + j dx, x0 + (j + 1) dx)`.
    pub fn new(rho1: &[f64], rho2: &[f64], x0: f64, dx: f64) -> Result<Self> {
        let (m1, m2): (f64, f64) = (rho1.iter().sum::<f64>() * dx, rho2.iter().sum::<f64>() * dx);
        if (m1 - m2).abs() > 1e-8 * m1.max(m2).max(1.0) {
            return Err(Error::Domain(format!("window masses differ: {m1} vs {m2}")));
        }
        let scale = m1 / m2;
        let mut pieces = Vec::new();
        let (mut i, mut k) = (0usize, 0usize);
        let (mut rem1, mut rem2) = (rho1.first().map_or(0.0, |r| r * dx), rho2.first().map_or(0.0, |r| r * scale * dx));
        let (mut pos1, mut pos2) = (x0, x0);
        while i < rho1.len() && k < rho2.len() {
            if rho1[i] <= 0.0 {
                i += 1;
                pos1 = x0 + i as f64 * dx;
                rem1 = rho1.get(i).map_or(0.0, |r| r * dx);
                continue;
            }
            if rho2[k] <= 0.0 {
                k += 1;
                pos2 = x0 + k as f64 * dx;
                rem2 = rho2.get(k).map_or(0.0, |r| r * scale * dx);
                continue;
            }
            let (r1, r2) = (rho1[i], rho2[k] * scale);
            let m = rem1.min(rem2);
            let len = m / r1;
            pieces.push(Piece { x0: pos1, len, t0: pos2, r1, r2 });
            pos1 += len;
            pos2 += m / r2;
            rem1 -= m;
            rem2 -= m;
            if rem1 <= 1e-15 * r1 * dx {
                i += 1;
                pos1 = x0 + i as f64 * dx;
                rem1 = rho1.get(i).map_or(0.0, |r| r * dx);
            }
            if rem2 <= 1e-15 * r2 * dx {
                k += 1;
                pos2 = x0 + k as f64 * dx;
                rem2 = rho2.get(k).map_or(0.0, |r| r * scale * dx);
            }
        }
        Ok(MonotoneMap { pieces })
    }

    /// `int |x - T(x)|^2 rho_1(x) dx`.
    pub fn cost(&self) -> f64 {
        self.pieces
            .iter()
            .map(|p| {
                let u0 = p.x0 - p.t0;
                let u1 = p.x0 + p.len - (p.t0 + p.len * p.r1 / p.r2);
                p.r1 * p.len * (u0 * u0 + u0 * u1 + u1 * u1) / 3.0
            })
            .sum()
    }

    /// `T(x)` on the support of `rho_1`.
    pub fn eval(&self, x: f64) -> Option<f64> {
        self.pieces.iter().find(|p| x >= p.x0 && x <= p.x0 + p.len).map(|p| p.t0 + (x - p.x0) * p.r1 / p.r2)
    }

    /// `int A(rho_theta)` along `((theta - 1) T + (2 - theta) id)_# rho_1`.
    pub fn interpolated_integral(&self, a: &AFunction, theta: f64) -> f64 {
        self.pieces
            .iter()
            .map(|p| {
                let j = (theta - 1.0) * p.r1 / p.r2 + (2.0 - theta);
                a.eval(p.r1 / j) * j * p.len
            })
            .sum()
    }
}

/// `A(rho) = 1(rho >= rho_0) (rho - rho_0)^2` for `d <= 2`, and the tangent
/// remainder of `rho^{1 + 2/d}` at `rho_0` for `d >= 3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AFunction {
    pub rho0: f64,
    pub d: usize,
}

impl AFunction {
    pub fn eval(&self, rho: f64) -> f64 {
        if rho < self.rho0 {
            return 0.0;
        }
        if self.d <= 2 {
            return (rho - self.rho0).powi(2);
        }
        let q = 1.0 + 2.0 / self.d as f64;
        (rho.powf(q) - self.rho0.powf(q) - q * self.rho0.powf(q - 1.0) * (rho - self.rho0)).max(0.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct McCannReport {
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
    pub min_second_difference: f64,
    pub convex: bool,
}

/// Midpoint convexity of `theta -> int A(rho_theta)` on
/// `theta in {1, 1.25, 1.5, 1.75, 2}`.
pub fn mccann_convexity_check(map: &MonotoneMap, a: &AFunction) -> McCannReport {
    let thetas: Vec<f64> = (0..5).map(|k| 1.0 + 0.25 * k as f64).collect();
    let values: Vec<f64> = thetas.iter().map(|&t| map.interpolated_integral(a, t)).collect();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale + 1e-15;
    let mut min2 = f64::INFINITY;
    for w in 1..4 {
        min2 = min2.min(values[w - 1] - 2.0 * values[w] + values[w + 1]);
    }
    for (lo, hi) in [(0, 4), (0, 2), (2, 4), (1, 3)] {
        let mid = (lo + hi) / 2;
        min2 = min2.min(0.5 * (values[lo] + values[hi]) - values[mid]);
    }
    McCannReport { convex: min2 >= -tol, thetas, values, min_second_difference: min2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn grid(n: usize, nv: usize) -> TorusGrid {
        TorusGrid::new(1, 10.0, n, 1.0, nv, 6.0).unwrap()
    }

    fn w0(g: &TorusGrid) -> PhaseField {
        PhaseField::from_perturbation(&EntropyModel::boltzmann(), g, |x, v| -0.1 * (-x[0] * x[0] - v[0] * v[0]).exp()).unwrap()
    }

    #[test]
    fn identical_flows_have_zero_gap() {
        let g = grid(16, 16);
        let f = ForceSeries { l: 10.0, times: vec![0.0, 1.0], frames: vec![(0..16).map(|j| (j as f64).sin()).collect(); 2] };
        let twin = TwinRun::new(&w0(&g), f.clone(), f, None).unwrap();
        assert_eq!(q_functional(&twin, 1.0, 20), 0.0);
        assert_eq!(q_functional(&twin, 0.0, 20), 0.0);
        assert_eq!(newton_gap_bound_check(&twin, 1.0, 20).unwrap(), 0.0);
    }

    #[test]
    fn constant_force_gap_closed_form() {
        let g = grid(16, 16);
        let eps = 0.01;
        let f1 = ForceSeries::constant(10.0, 16, 0.0, 0.0, 1.0);
        let f2 = ForceSeries::constant(10.0, 16, eps, 0.0, 1.0);
        let twin = TwinRun::new(&w0(&g), f1, f2, Some(4)).unwrap();
        let t: f64 = 0.8;
        let q = q_functional(&twin, t, 16);
        let want = eps * eps * t.powi(4) * twin.mass();
        assert!((q - want).abs() < 1e-12 * want.max(1.0), "{q} vs {want}");
        let r = newton_gap_bound_check(&twin, t, 16).unwrap();
        assert!(r > 0.0 && r <= 1.0);
    }

    #[test]
    fn random_smooth_forces_respect_the_gap_bound() {
        let g = grid(32, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mk = |rng: &mut ChaCha8Rng| {
            let frames = (0..5)
                .map(|_| {
                    let (a, b, c): (f64, f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..6.0));
                    (0..32).map(|j| a * (2.0 * PI * j as f64 / 32.0 + c).sin() + b * (4.0 * PI * j as f64 / 32.0).cos()).collect()
                })
                .collect();
            ForceSeries { l: 10.0, times: vec![0.0, 0.25, 0.5, 0.75, 1.0], frames }
        };
        let twin = TwinRun::new(&w0(&g), mk(&mut rng), mk(&mut rng), Some(1)).unwrap();
        assert!(twin.seeds.len() >= 1000);
        let r = newton_gap_bound_check(&twin, 1.0, 100).unwrap();
        assert!(r < 1.0);
    }

    #[test]
    fn dictionary_bound_single_mode() {
        let g = grid(64, 4);
        let k = 2.0 * PI / 10.0;
        let rho: Vec<f64> = (0..64).map(|j| (k * g.x(j)).cos()).collect();
        assert_eq!(x_norm_lower_bound(&g, &vec![0.0; 64], 5).unwrap(), 0.0);
        let b = x_norm_lower_bound(&g, &rho, 1).unwrap();
        // <cos, cos> = L/2, ||phi'||_2 = k sqrt(L/2), ||phi'||_4 = k (3L/8)^{1/4}
        let want = 5.0 / (k * 5f64.sqrt()).max(k * (30.0f64 / 8.0).powf(0.25));
        assert!((b - want).abs() < 1e-12, "{b} vs {want}");
        let mut prev = 0.0;
        for s in 1..8 {
            let v = x_norm_lower_bound(&g, &rho.iter().enumerate().map(|(j, r)| r + 0.3 * (3.0 * k * g.x(j)).sin()).collect::<Vec<_>>(), s).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn norm_helpers() {
        let f = vec![2.0; 10];
        assert!((l2_plus_linf(&f, 0.1) - 2.0).abs() < 1e-15);
        assert!((l2_cap_lp(&f, 0.1, 1) - 2.0).abs() < 1e-15);
        let spike: Vec<f64> = (0..10).map(|i| if i == 3 { 100.0 } else { 1.0 }).collect();
        assert!(l2_plus_linf(&spike, 0.1) < 100.0);
    }

    fn atoms(x: &[f64], w: &[f64]) -> Atoms {
        Atoms::new(x.to_vec(), w.to_vec()).unwrap()
    }

    #[test]
    fn ot_trivial_cases() {
        let a = atoms(&[0.0, 1.0, 2.0], &[0.3, 0.4, 0.3]);
        let r = ot_monotone(&a, &a).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.map, vec![0.0, 1.0, 2.0]);
        let (p, q) = (0.5, 2.25);
        let r = ot_monotone(&atoms(&[p], &[1.0]), &atoms(&[q], &[1.0])).unwrap();
        assert_eq!(r.cost, (p - q) * (p - q));
        assert!(ot_monotone(&atoms(&[0.0], &[1.0]), &atoms(&[0.0], &[1.1])).is_err());
    }

    fn bump_pair(shift: f64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let dx = 8.0 / n as f64;
        let x: Vec<f64> = (0..n).map(|j| -4.0 + (j as f64 + 0.5) * dx).collect();
        let b = |y: f64| 0.5 * (-(y * y) / 0.3).exp();
        let r1 = x.iter().map(|&y| 0.2 + b(y)).collect();
        let r2 = x.iter().map(|&y| 0.2 + b(y - shift)).collect();
        (x, r1, r2, dx)
    }

    #[test]
    fn ot_matches_linear_programming() {
        let (x, r1, r2, dx) = bump_pair(0.7, 64);
        let res = ot_cost_1d(&r1, &r2, &x, dx, (0, 64)).unwrap();
        let a = atoms(&x, &r1.iter().map(|r| r * dx).collect::<Vec<_>>());
        let b = atoms(&x, &r2.iter().map(|r| r * dx).collect::<Vec<_>>());
        let lp = ot_cost_lp(&a, &b).unwrap();
        assert!((res.cost - lp).abs() < 1e-6, "{} vs {lp}", res.cost);
        // moving the bump directly is feasible
        let naive = 0.7f64.powi(2) * 0.5 * (0.3 * PI).sqrt();
        assert!(res.cost <= naive * 1.01);
        let back = ot_cost_1d(&r2, &r1, &x, dx, (0, 64)).unwrap();
        assert!((back.cost - res.cost).abs() < 1e-8);
    }

    #[test]
    fn monotone_map_matches_translation() {
        let (_, r1, r2, dx) = bump_pair(0.0, 64);
        let m = MonotoneMap::new(&r1, &r2, -4.0, dx).unwrap();
        assert!(m.cost() < 1e-20);
        assert!((m.eval(0.3).unwrap() - 0.3).abs() < 1e-12);
        let a = AFunction { rho0: 0.2, d: 1 };
        let rep = mccann_convexity_check(&m, &a);
        assert!(rep.values.iter().all(|v| (v - rep.values[0]).abs() < 1e-14));
        // uniform densities translate rigidly
        let u1 = vec![1.0; 10];
        let m = MonotoneMap::new(&u1, &u1, 0.0, 0.1).unwrap();
        assert!(m.cost() < 1e-24);
    }

    #[test]
    fn displacement_convexity_both_branches() {
        let (_, r1, r2, dx) = bump_pair(0.9, 128);
        let m = MonotoneMap::new(&r1, &r2, -4.0, dx).unwrap();
        for a in [AFunction { rho0: 0.2, d: 1 }, AFunction { rho0: 0.2, d: 3 }, AFunction { rho0: 0.0, d: 1 }] {
            let rep = mccann_convexity_check(&m, &a);
            assert!(rep.convex, "{a:?}: {}", rep.min_second_difference);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn ot_is_symmetric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 12;
            let x: Vec<f64> = (0..n).map(|j| j as f64 * 0.5).collect();
            let w1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let mut w2: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let s = w1.iter().sum::<f64>() / w2.iter().sum::<f64>();
            w2.iter_mut().for_each(|w| *w *= s);
            let a = atoms(&x, &w1);
            let b = atoms(&x, &w2);
            let ab = ot_monotone(&a, &b).unwrap().cost;
            let ba = ot_monotone(&b, &a).unwrap().cost;
            prop_assert!((ab - ba).abs() < 1e-8);
            prop_assert!((ab - ot_cost_lp(&a, &b).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn twin_vlasov_chain() {
        let model = EntropyModel::boltzmann();
        let g = TorusGrid::new(1, 10.0, 32, 1.0, 48, 6.0).unwrap();
        let f0 = PhaseField::from_perturbation(&model, &g, |x, v| -0.3 * (-x[0] * x[0] - v[0] * v[0]).exp()).unwrap();
        let w1 = Interaction::Gaussian { amplitude: 1.0, width: 0.6 };
        let w2 = Interaction::Gaussian { amplitude: 1.1, width: 0.6 };
        let r1 = record_vlasov_run(&f0, &model, &w1, 0.05, 10).unwrap();
        let r2 = record_vlasov_run(&f0, &model, &w2, 0.05, 10).unwrap();
        let rep = gronwall_chain_check(&f0, &r1, &r2, 6, 2).unwrap();
        assert!(rep.newton_worst <= 1.0, "{}", rep.newton_worst);
        assert!(rep.points.iter().all(|p| p.link1_cloud <= 1.0 && p.q > 0.0));
        assert!(rep.link2_max.is_finite() && rep.link2_max > 0.0);
        let same = gronwall_chain_check(&f0, &r1, &r1, 6, 2).unwrap();
        assert!(same.points.iter().all(|p| p.q == 0.0 && p.x_lower == 0.0));
    }

    #[test]
    fn characteristics_push_forward_the_vlasov_density() {
        let model = EntropyModel::boltzmann();
        let g = TorusGrid::new(1, 10.0, 64, 1.0, 96, 6.0).unwrap();
        let f0 = PhaseField::from_perturbation(&model, &g, |x, v| -0.4 * (-x[0] * x[0] - (v[0] - 0.5).powi(2)).exp()).unwrap();
        let w = Interaction::Gaussian { amplitude: 1.0, width: 0.6 };
        let rec = record_vlasov_run(&f0, &model, &w, 0.02, 25).unwrap();
        let twin = TwinRun::new(&f0, rec.forces.clone(), rec.forces.clone(), None).unwrap();
        let seeds: Vec<(f64, f64)> = twin.seeds.iter().map(|s| (s.x, s.v)).collect();
        let moved = crate::vlasov::newton_flow(&rec.forces, 0.0, 0.5, &seeds, 100);
        let bins = 8;
        let width = 10.0 / bins as f64;
        let bin_of = |x: f64| ((x.rem_euclid(10.0) + 0.5 * g.dx()) / width) as usize % bins;
        let mut before = vec![0.0; bins];
        let mut after = vec![0.0; bins];
        for (s, &(x, _)) in twin.seeds.iter().zip(&moved) {
            before[bin_of(s.x)] += s.weight;
            after[bin_of(x)] += s.weight;
        }
        let lattice = |f: &PhaseField| {
            let mut out = vec![0.0; bins];
            for jx in 0..g.n {
                let m: f64 = (0..f.nvel()).map(|iv| f.total(jx, iv)).sum::<f64>() * g.dx() * g.dv();
                out[bin_of(g.x(jx))] += m;
            }
            out
        };
        let (e0, e1) = (lattice(&f0), lattice(&rec.last));
        let change = e0.iter().zip(&e1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let gap = (0..bins).map(|b| ((after[b] - before[b]) - (e1[b] - e0[b])).abs()).fold(0.0, f64::max);
        assert!(change > 1e-3);
        assert!(gap < 0.1 * change, "{gap} vs {change}");
    }
}

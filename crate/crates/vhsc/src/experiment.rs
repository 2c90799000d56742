//! Experiment configuration and orchestration: semiclassical ladders that
//! compare Hartree and Vlasov runs, simulation artifacts with checkpoints
//! and diagnostics, ladder drivers for the inequality suites, and
//! plot-ready tables.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{scalar_bridge_check, EntropyKind, EntropyModel};
use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::hartree::{
    build_initial_from_symbol, free_energy, klein_lhs_rhs, quantum_rel_entropy, rel_entropy_integral_rep, symbol_from_perturbation,
    HartreePropagator, Interaction, QuantumState,
};
use crate::inequality::{
    appd_sweep, bl_falsifiability_probe, bl_stability_checks, bl_sweep, coherent_bl_check, klein_sweep, quantum_lt_pair, ratio_minimum,
};
use crate::io::{self, Array};
use crate::phase_space::{husimi, quantum_phase_grid, wigner, CoherentFamily, Symbol, Window};
use crate::transport::{
    gronwall_chain_check, mccann_convexity_check, newton_gap_bound_check, ot_cost_1d, ot_cost_lp, record_vlasov_run, AFunction, Atoms,
    ChainReport, MonotoneMap, TwinRun,
};
use crate::vlasov::{classical_free_energy, classical_klein_lt, classical_rel_entropy, high_velocity_tail, PhaseField, VlasovPropagator};

/// Classical lattice parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Nv")]
    pub nv: usize,
    pub vmax: f64,
}

impl GridSpec {
    pub fn classical(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.d, self.l, self.n, 1.0, self.nv, self.vmax)
    }
}

/// Smallest `n_base 2^j` whose quantum velocity lattice reaches `vcut`.
pub fn quantum_grid(l: f64, n_base: usize, hbar: f64, vcut: f64) -> Result<TorusGrid> {
    let mut n = n_base;
    while hbar * PI * (n as f64) / l < vcut {
        n *= 2;
    }
    TorusGrid::quantum_1d(l, n, hbar)
}

/// Initial data: the reference state, a Gaussian symbol `a`, or a Gaussian
/// perturbation `b` of the reference distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum InitialData {
    #[serde(rename = "reference")]
    Reference,
    #[serde(rename = "gaussian_symbol")]
    GaussianSymbol { amplitude: f64, x0: f64, sx: f64, v0: f64, sv: f64 },
    #[serde(rename = "gaussian_perturbation")]
    GaussianPerturbation { amplitude: f64, x0: f64, sx: f64, v0: f64, sv: f64 },
}

fn gaussian_product(amplitude: f64, x0: f64, sx: f64, v0: f64, sv: f64) -> impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + Copy {
    move |x: &[f64], v: &[f64]| {
        let ex: f64 = x.iter().map(|t| -(t - x0).powi(2) / (2.0 * sx * sx)).sum();
        let ev: f64 = v.iter().map(|t| -(t - v0).powi(2) / (2.0 * sv * sv)).sum();
        amplitude * (ex + ev).exp()
    }
}

impl InitialData {
    pub fn symbol(&self, model: &EntropyModel) -> Symbol {
        match *self {
            InitialData::Reference => Symbol::Zero,
            InitialData::GaussianSymbol { amplitude, x0, sx, v0, sv } => Symbol::Gaussian { amplitude, x0, sx, v0, sv },
            InitialData::GaussianPerturbation { amplitude, x0, sx, v0, sv } => {
                symbol_from_perturbation(model, gaussian_product(amplitude, x0, sx, v0, sv))
            }
        }
    }

    pub fn quantum(&self, model: &EntropyModel, grid: &TorusGrid) -> Result<QuantumState> {
        build_initial_from_symbol(model, grid, &self.symbol(model))
    }

    pub fn classical(&self, model: &EntropyModel, grid: &TorusGrid) -> Result<PhaseField> {
        match *self {
            InitialData::Reference => PhaseField::reference(model, grid),
            InitialData::GaussianSymbol { .. } => PhaseField::from_symbol(model, grid, &self.symbol(model)),
            InitialData::GaussianPerturbation { amplitude, x0, sx, v0, sv } => {
                PhaseField::from_perturbation(model, grid, gaussian_product(amplitude, x0, sx, v0, sv))
            }
        }
    }
}

/// Suites run by `check-inequalities` when no explicit suite is named.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Suites {
    pub bl: bool,
    pub coherent_bl: bool,
    pub klein: bool,
    pub lt: bool,
    pub highv: bool,
    pub appd: bool,
    pub bridge: bool,
}

impl Suites {
    pub fn enabled(&self) -> Vec<&'static str> {
        let all = [
            (self.bl, "bl"),
            (self.coherent_bl, "coherent-bl"),
            (self.klein, "klein"),
            (self.lt, "lt"),
            (self.highv, "highv"),
            (self.appd, "appd"),
            (self.bridge, "bridge"),
        ];
        all.iter().filter(|(on, _)| *on).map(|(_, n)| *n).collect()
    }
}

fn default_checkpoint() -> usize {
    10
}

fn default_sigma() -> f64 {
    0.5
}

fn default_trials() -> usize {
    1000
}

/// A complete experiment, read from one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: EntropyModel,
    pub grid: GridSpec,
    pub interaction: Interaction,
    pub initial: InitialData,
    /// Strictly decreasing ladder; the first entry drives single quantum runs.
    pub hbar: Vec<f64>,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: usize,
    /// Velocity reach of the quantum lattices; defaults to `grid.vmax`.
    #[serde(default)]
    pub quantum_vmax: Option<f64>,
    /// Width of the Gaussian smoothing in the Wigner comparison.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub suites: Suites,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.classical()?;
        self.model.check_dimension(self.grid.d)?;
        if self.hbar.is_empty() || self.hbar.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::Config("the hbar ladder needs positive entries".into()));
        }
        if self.hbar.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(format!("the hbar ladder {:?} is not strictly decreasing", self.hbar)));
        }
        if !(self.dt > 0.0 && self.t_end > 0.0) {
            return Err(Error::Config("T and dt must be positive".into()));
        }
        let steps = (self.t_end / self.dt).round();
        if steps < 1.0 || (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(Error::Config(format!("T = {} is not an integer multiple of dt = {}", self.t_end, self.dt)));
        }
        if self.checkpoint_every == 0 || !(self.sigma > 0.0) {
            return Err(Error::Config("checkpoint_every and sigma must be positive".into()));
        }
        if let Some(v) = self.quantum_vmax {
            if !(v > 0.0) {
                return Err(Error::Config("quantum_vmax must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Step indices at which frames and diagnostics are taken.
    pub fn checkpoint_steps(&self) -> Vec<usize> {
        let n = self.steps();
        let mut out: Vec<usize> = (0..=n).step_by(self.checkpoint_every).collect();
        if *out.last().expect("nonempty") != n {
            out.push(n);
        }
        out
    }

    pub fn quantum_grid(&self, hbar: f64) -> Result<TorusGrid> {
        if self.grid.d != 1 {
            return Err(Error::Config("quantum runs are one-dimensional".into()));
        }
        quantum_grid(self.grid.l, self.grid.n, hbar, self.quantum_vmax.unwrap_or(self.grid.vmax))
    }
}

/// Serializes non-finite values as the strings `+inf`, `-inf` and `nan`.
mod marker {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("+inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(D::Error::custom(format!("unknown marker {other:?}"))),
            },
        }
    }
}

/// One diagnostics line. Quantum entries are `hbar^d`-scaled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    #[serde(with = "marker")]
    pub entropy: f64,
    #[serde(with = "marker")]
    pub free_energy: f64,
    #[serde(with = "marker")]
    pub l2: f64,
    #[serde(with = "marker")]
    pub lt: f64,
    #[serde(with = "marker")]
    pub mass: f64,
    #[serde(with = "marker")]
    pub min: f64,
    #[serde(with = "marker")]
    pub max: f64,
}

pub fn quantum_diagnostics(state: &QuantumState, model: &EntropyModel, w: &Interaction, t: f64) -> Result<DiagnosticsRecord> {
    let h = state.grid.hbar;
    let (lo, hi) = state.check_spectrum(model.cap)?;
    let (_, lt) = quantum_lt_pair(state, model)?;
    Ok(DiagnosticsRecord {
        t,
        entropy: h * quantum_rel_entropy(state, model)?,
        free_energy: h * free_energy(state, model, w)?,
        l2: h * state.frobenius_q().powi(2),
        lt: h * lt,
        mass: h * state.trace_q(),
        min: lo,
        max: hi,
    })
}

pub fn classical_diagnostics(field: &PhaseField, model: &EntropyModel, w: &Interaction, t: f64) -> Result<DiagnosticsRecord> {
    let (entropy, _, lt) = classical_klein_lt(field, model);
    Ok(DiagnosticsRecord {
        t,
        entropy,
        free_energy: classical_free_energy(field, model, w)?,
        l2: field.l2_sq(),
        lt,
        mass: field.mass(),
        min: field.min(),
        max: field.max(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Quantum,
    Classical,
}

#[derive(Clone, Debug)]
pub struct SimulationSummary {
    pub side: Side,
    pub dir: PathBuf,
    pub frames: Vec<PathBuf>,
    pub records: Vec<DiagnosticsRecord>,
    pub wall_seconds: f64,
}

pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const LADDER_FILE: &str = "ladder.json";
pub const TAIL_FILE: &str = "tail.json";
const CSV_HEADER: &str = "t,entropy,free_energy,l2,lt,mass,min,max";

pub fn frame_name(step: usize) -> String {
    format!("frame_{step:06}.vhsc")
}

struct ArtifactWriter {
    dir: PathBuf,
    diag: BufWriter<File>,
    csv: BufWriter<File>,
    frames: Vec<PathBuf>,
    records: Vec<DiagnosticsRecord>,
}

impl ArtifactWriter {
    fn new(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
        let mut csv = BufWriter::new(File::create(dir.join(SUMMARY_FILE))?);
        writeln!(csv, "{CSV_HEADER}")?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            diag: BufWriter::new(File::create(dir.join(DIAGNOSTICS_FILE))?),
            csv,
            frames: Vec::new(),
            records: Vec::new(),
        })
    }

    fn record(&mut self, r: DiagnosticsRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if r.t <= last.t {
                return Err(Error::Format(format!("time stamps must increase: {} after {}", r.t, last.t)));
            }
        }
        writeln!(self.diag, "{}", serde_json::to_string(&r)?)?;
        writeln!(self.csv, "{},{},{},{},{},{},{},{}", r.t, r.entropy, r.free_energy, r.l2, r.lt, r.mass, r.min, r.max)?;
        self.records.push(r);
        Ok(())
    }

    fn frame(&mut self, step: usize, arrays: &[Array]) -> Result<()> {
        let p = self.dir.join(frame_name(step));
        io::save(&p, arrays)?;
        self.frames.push(p);
        Ok(())
    }

    fn finish(mut self, side: Side, start: Instant) -> Result<SimulationSummary> {
        self.diag.flush()?;
        self.csv.flush()?;
        let wall = start.elapsed().as_secs_f64();
        // wall-clock lives apart from the byte-deterministic diagnostics
        fs::write(self.dir.join("timing.json"), format!("{{\"wall_seconds\": {wall}}}\n"))?;
        Ok(SimulationSummary { side, dir: self.dir, frames: self.frames, records: self.records, wall_seconds: wall })
    }
}

fn quantum_arrays(state: &QuantumState, step: usize, t: f64) -> Vec<Array> {
    let n = state.n() as u64;
    let q: Vec<_> = (0..state.n()).flat_map(|i| (0..state.n()).map(move |j| (i, j))).map(|(i, j)| state.q[(i, j)]).collect();
    vec![
        Array::real(vec![3], vec![step as f64, t, state.grid.hbar]),
        Array::real(vec![n], state.background.clone()),
        Array::complex(vec![n, n], q),
    ]
}

fn classical_arrays(field: &PhaseField, step: usize, t: f64) -> Vec<Array> {
    vec![
        Array::real(vec![2], vec![step as f64, t]),
        Array::real(vec![field.nvel() as u64], field.background.clone()),
        Array::real(vec![field.grid.npos() as u64, field.nvel() as u64], field.pert.clone()),
    ]
}

/// Checkpoint contents with the step index they were taken at.
pub enum Checkpoint {
    Quantum(usize, QuantumState),
    Classical(usize, PhaseField),
}

fn step_of(meta: &Array) -> Result<usize> {
    let m = meta.as_real()?;
    m.first().map(|&s| s as usize).ok_or_else(|| Error::Format("empty frame header".into()))
}

/// Reads a frame written by [`run_simulation`] for the grid of `cfg`.
pub fn load_checkpoint(cfg: &ExperimentConfig, side: Side, path: &Path) -> Result<Checkpoint> {
    let arrays = io::load(path)?;
    if arrays.len() != 3 {
        return Err(Error::Format(format!("frame holds {} arrays, expected 3", arrays.len())));
    }
    let step = step_of(&arrays[0])?;
    match side {
        Side::Quantum => {
            let grid = cfg.quantum_grid(cfg.hbar[0])?;
            let n = grid.n;
            let bg = arrays[1].as_real()?.to_vec();
            let q = arrays[2].as_complex()?;
            if bg.len() != n || q.len() != n * n {
                return Err(Error::SizeMismatch { expected: n * n, got: q.len() });
            }
            Ok(Checkpoint::Quantum(step, QuantumState { grid, background: bg, q: DMatrix::from_row_slice(n, n, q) }))
        }
        Side::Classical => {
            let grid = cfg.grid.classical()?;
            let bg = arrays[1].as_real()?.to_vec();
            let pert = arrays[2].as_real()?.to_vec();
            if bg.len() != grid.nvel() || pert.len() != grid.npos() * grid.nvel() {
                return Err(Error::SizeMismatch { expected: grid.npos() * grid.nvel(), got: pert.len() });
            }
            Ok(Checkpoint::Classical(step, PhaseField::from_parts(grid, bg, pert)))
        }
    }
}

/// Full evolution with frames and diagnostics at the checkpoint steps.
pub fn run_simulation(cfg: &ExperimentConfig, side: Side, dir: &Path) -> Result<SimulationSummary> {
    let start = match side {
        Side::Quantum => Checkpoint::Quantum(0, cfg.initial.quantum(&cfg.model, &cfg.quantum_grid(cfg.hbar[0])?)?),
        Side::Classical => Checkpoint::Classical(0, cfg.initial.classical(&cfg.model, &cfg.grid.classical()?)?),
    };
    simulate_from(cfg, start, dir)
}

/// Continues a run from a checkpoint frame.
pub fn resume_simulation(cfg: &ExperimentConfig, side: Side, frame: &Path, dir: &Path) -> Result<SimulationSummary> {
    simulate_from(cfg, load_checkpoint(cfg, side, frame)?, dir)
}

fn simulate_from(cfg: &ExperimentConfig, start: Checkpoint, dir: &Path) -> Result<SimulationSummary> {
    cfg.validate()?;
    let clock = Instant::now();
    let mut out = ArtifactWriter::new(dir, cfg)?;
    let marks = cfg.checkpoint_steps();
    let total = cfg.steps();
    let (model, w, dt) = (cfg.model, cfg.interaction, cfg.dt);
    match start {
        Checkpoint::Quantum(s0, mut state) => {
            let prop = HartreePropagator::new(&state, w);
            let mut good = (s0, state.clone());
            for step in s0..=total {
                if step > s0 {
                    prop.step(&mut state, dt);
                }
                if marks.contains(&step) || step == s0 {
                    let t = step as f64 * dt;
                    match quantum_diagnostics(&state, &model, &w, t) {
                        Ok(r) => out.record(r)?,
                        Err(e) => {
                            io::save(&dir.join("last_good.vhsc"), &quantum_arrays(&good.1, good.0, good.0 as f64 * dt))?;
                            return Err(Error::Instability(format!("step {step}: {e}; last good frame at step {}", good.0)));
                        }
                    }
                    out.frame(step, &quantum_arrays(&state, step, t))?;
                    good = (step, state.clone());
                }
            }
            out.finish(Side::Quantum, clock)
        }
        Checkpoint::Classical(s0, mut field) => {
            let prop = VlasovPropagator::new(&field.grid, &model, w);
            for step in s0..=total {
                if step > s0 {
                    let before = field.clone();
                    if let Err(e) = prop.step(&mut field, dt) {
                        io::save(&dir.join("last_good.vhsc"), &classical_arrays(&before, step - 1, (step - 1) as f64 * dt))?;
                        return Err(Error::Instability(format!("step {step}: {e}; last good frame at step {}", step - 1)));
                    }
                }
                if marks.contains(&step) || step == s0 {
                    let t = step as f64 * dt;
                    out.record(classical_diagnostics(&field, &model, &w, t)?)?;
                    out.frame(step, &classical_arrays(&field, step, t))?;
                }
            }
            out.finish(Side::Classical, clock)
        }
    }
}

/// Values of `G_sigma * f` on the lattice of `target` for a one-dimensional
/// phase-space field, with periodic smoothing in `x`.
pub fn smooth_onto(field: &PhaseField, target: &TorusGrid, sigma: f64) -> Result<DMatrix<f64>> {
    let src = &field.grid;
    if src.d != 1 || target.d != 1 || (src.l - target.l).abs() > 1e-12 * src.l {
        return Err(Error::Config("smoothing needs one-dimensional grids of equal length".into()));
    }
    let (ns, nvs) = (src.n, field.nvel());
    let f = DMatrix::from_fn(ns, nvs, |j, n| field.total(j, n));
    let cx = src.dx() / ((2.0 * PI).sqrt() * sigma);
    let gx = DMatrix::from_fn(target.n, ns, |i, j| {
        let d = src.wrap(target.x(i) - src.x(j));
        cx * (-d * d / (2.0 * sigma * sigma)).exp()
    });
    let cv = src.dv() / ((2.0 * PI).sqrt() * sigma);
    let gv = DMatrix::from_fn(target.nv, nvs, |i, n| {
        let d = target.v(i) - src.v(n);
        cv * (-d * d / (2.0 * sigma * sigma)).exp()
    });
    Ok(gx * f * gv.transpose())
}

/// `||G_sigma * (a - b)||_2` on the lattice of `target`.
pub fn smeared_distance(a: &PhaseField, b: &PhaseField, target: &TorusGrid, sigma: f64) -> Result<f64> {
    let d = smooth_onto(a, target, sigma)? - smooth_onto(b, target, sigma)?;
    Ok((d.norm_squared() * target.dx() * target.dv()).sqrt())
}

/// `||hbar rho_gamma - rho_W||_2` at the classical positions, which must be
/// a sublattice of the quantum ones.
pub fn density_distance(state: &QuantumState, field: &PhaseField) -> Result<f64> {
    let (nq, nc) = (state.grid.n, field.grid.n);
    if nq % nc != 0 {
        return Err(Error::SizeMismatch { expected: nc, got: nq });
    }
    let k = nq / nc;
    let rq = state.density();
    let rc = field.rho();
    let h = state.grid.hbar;
    Ok((rc.iter().enumerate().map(|(j, r)| (h * rq[j * k] - r).powi(2)).sum::<f64>() * field.grid.dx()).sqrt())
}

/// Least-squares slope of `ln err` against `ln hbar` over positive errors.
pub fn fitted_order(hbar: &[f64], err: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = hbar.iter().zip(err).filter(|(_, &e)| e > 0.0).map(|(&h, &e)| (h.ln(), e.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Extrapolation of `E(hbar) = E_0 + c hbar^2` from the two finest rungs.
pub fn richardson_hbar2(h_coarse: f64, e_coarse: f64, h_fine: f64, e_fine: f64) -> f64 {
    let r2 = (h_coarse / h_fine).powi(2);
    (r2 * e_fine - e_coarse) / (r2 - 1.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderRow {
    pub hbar: f64,
    pub n_quantum: usize,
    /// Distances at the final time.
    pub err_wigner: f64,
    pub err_density: f64,
    pub wigner_by_time: Vec<f64>,
    pub density_by_time: Vec<f64>,
    /// `hbar^d H_S(gamma(t), gamma_ref)` at the checkpoints.
    pub entropy_by_time: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntropyBoundPoint {
    pub t: f64,
    pub classical: f64,
    /// Minimum over the computed ladder, standing in for the liminf.
    pub ladder_min_surrogate: f64,
    pub constant: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareReport {
    pub times: Vec<f64>,
    pub rows: Vec<LadderRow>,
    pub order_fit: f64,
    pub entropy_bound: Vec<EntropyBoundPoint>,
    pub initial_entropy_classical: f64,
    pub initial_entropy_extrapolated: f64,
    pub initial_entropy_rel_error: f64,
}

impl CompareReport {
    pub fn wigner_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].err_wigner < w[0].err_wigner)
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| Error::Config(e.to_string()))
}

/// Hartree runs along the ladder against one Vlasov run. Each member's row
/// is written to `dir/ladder/` as soon as it completes.
pub fn run_compare(cfg: &ExperimentConfig, jobs: usize, dir: Option<&Path>) -> Result<CompareReport> {
    cfg.validate()?;
    let (model, w, dt) = (cfg.model, cfg.interaction, cfg.dt);
    let target = cfg.grid.classical()?;
    if target.d != 1 {
        return Err(Error::Config("the comparison is one-dimensional".into()));
    }
    let marks = cfg.checkpoint_steps();
    let times: Vec<f64> = marks.iter().map(|&s| s as f64 * dt).collect();
    let mut field = cfg.initial.classical(&model, &target)?;
    let prop = VlasovPropagator::new(&target, &model, w);
    let mut classical = Vec::with_capacity(marks.len());
    for step in 0..=cfg.steps() {
        if step > 0 {
            prop.step(&mut field, dt)?;
        }
        if marks.contains(&step) {
            classical.push(field.clone());
        }
    }
    if let Some(d) = dir {
        fs::create_dir_all(d.join("ladder"))?;
    }
    let member = |(i, &hbar): (usize, &f64)| -> Result<LadderRow> {
        let grid = cfg.quantum_grid(hbar)?;
        let mut state = cfg.initial.quantum(&model, &grid)?;
        let hp = HartreePropagator::new(&state, w);
        let mut row = LadderRow {
            hbar,
            n_quantum: grid.n,
            err_wigner: 0.0,
            err_density: 0.0,
            wigner_by_time: Vec::new(),
            density_by_time: Vec::new(),
            entropy_by_time: Vec::new(),
        };
        let mut k = 0;
        for step in 0..=cfg.steps() {
            if step > 0 {
                hp.step(&mut state, dt);
            }
            if marks.contains(&step) {
                let wq = wigner(&state);
                row.wigner_by_time.push(smeared_distance(&wq, &classical[k], &target, cfg.sigma)?);
                row.density_by_time.push(density_distance(&state, &classical[k])?);
                row.entropy_by_time.push(hbar * quantum_rel_entropy(&state, &model)?);
                k += 1;
            }
        }
        row.err_wigner = *row.wigner_by_time.last().expect("checkpoints");
        row.err_density = *row.density_by_time.last().expect("checkpoints");
        if let Some(d) = dir {
            fs::write(d.join("ladder").join(format!("hbar_{i:02}.json")), serde_json::to_string_pretty(&row)?)?;
        }
        Ok(row)
    };
    let rows: Vec<LadderRow> = thread_pool(jobs)?.install(|| cfg.hbar.par_iter().enumerate().map(member).collect::<Result<Vec<_>>>())?;
    let hs: Vec<f64> = rows.iter().map(|r| r.hbar).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.err_wigner).collect();
    let constant = crate::inequality::bl_constant(&model).unwrap_or(1.0);
    let entropy_bound = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let cl = classical_rel_entropy(&classical[k], &model);
            let sur = rows.iter().map(|r| r.entropy_by_time[k]).fold(f64::INFINITY, f64::min);
            EntropyBoundPoint { t, classical: cl, ladder_min_surrogate: sur, constant, holds: cl <= constant * sur + 1e-8 }
        })
        .collect();
    let h0 = classical_rel_entropy(&classical[0], &model);
    let ex = match rows.len() {
        0 => f64::NAN,
        1 => rows[0].entropy_by_time[0],
        n => richardson_hbar2(rows[n - 2].hbar, rows[n - 2].entropy_by_time[0], rows[n - 1].hbar, rows[n - 1].entropy_by_time[0]),
    };
    let report = CompareReport {
        times,
        order_fit: fitted_order(&hs, &errs),
        rows,
        entropy_bound,
        initial_entropy_classical: h0,
        initial_entropy_extrapolated: ex,
        initial_entropy_rel_error: if h0 > 0.0 { (ex - h0).abs() / h0 } else { (ex - h0).abs() },
    };
    if let Some(d) = dir {
        fs::write(d.join(LADDER_FILE), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}

/// Random Gaussian symbols with positive amplitude.
pub fn symbol_ensemble(count: usize, seed: u64) -> Vec<Symbol> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Symbol::Gaussian {
            amplitude: rng.gen_range(0.2..1.0),
            x0: rng.gen_range(-1.0..1.0),
            sx: rng.gen_range(0.5..1.0),
            v0: rng.gen_range(-0.5..0.5),
            sv: rng.gen_range(0.5..1.0),
        })
        .collect()
}

/// Box length, base lattice size and velocity reach of ladder members.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSetup {
    #[serde(rename = "L")]
    pub l: f64,
    pub n_base: usize,
    pub vcut: f64,
}

impl Default for LadderSetup {
    fn default() -> Self {
        LadderSetup { l: 10.0, n_base: 16, vcut: 5.0 }
    }
}

pub const DEFAULT_LADDER: [f64; 4] = [0.5, 0.25, 0.125, 0.0625];

#[derive(Clone, Debug, Serialize)]
pub struct CoherentRow {
    pub hbar: f64,
    /// `(H_cl(m_gamma, m_ref~), C hbar^d H_S)` per state.
    pub pairs: Vec<(f64, f64)>,
}

pub fn coherent_bl_ladder(model: &EntropyModel, symbols: &[Symbol], ladder: &[f64], setup: &LadderSetup, window: Window, jobs: usize) -> Result<Vec<CoherentRow>> {
    thread_pool(jobs)?.install(|| {
        ladder
            .par_iter()
            .map(|&hbar| {
                let grid = quantum_grid(setup.l, setup.n_base, hbar, setup.vcut)?;
                let fam = CoherentFamily::new(window, &grid)?;
                let pairs = symbols
                    .iter()
                    .map(|a| coherent_bl_check(&build_initial_from_symbol(model, &grid, a)?, model, &fam))
                    .collect::<Result<Vec<_>>>()?;
                Ok(CoherentRow { hbar, pairs })
            })
            .collect()
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioRow {
    pub hbar: f64,
    pub klein_quantum: f64,
    pub lt_quantum: f64,
    pub klein_classical: f64,
    pub lt_classical: f64,
}

/// Ensemble minima of `entropy / functional` per ladder member. The
/// classical branch samples the same symbols on the quantum phase lattice.
pub fn klein_lt_ladder(model: &EntropyModel, symbols: &[Symbol], ladder: &[f64], setup: &LadderSetup, jobs: usize) -> Result<Vec<RatioRow>> {
    thread_pool(jobs)?.install(|| {
        ladder
            .par_iter()
            .map(|&hbar| {
                let grid = quantum_grid(setup.l, setup.n_base, hbar, setup.vcut)?;
                let pg = quantum_phase_grid(&grid);
                let (mut kq, mut lq, mut kc, mut lc) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                for a in symbols {
                    let state = build_initial_from_symbol(model, &grid, a)?;
                    kq.push(klein_lhs_rhs(&state, model)?);
                    lq.push(quantum_lt_pair(&state, model)?);
                    let f = PhaseField::from_symbol(model, &pg, a)?;
                    let (h, b2, lt) = classical_klein_lt(&f, model);
                    kc.push((h, b2));
                    lc.push((h, lt));
                }
                Ok(RatioRow {
                    hbar,
                    klein_quantum: ratio_minimum(&kq)?,
                    lt_quantum: ratio_minimum(&lq)?,
                    klein_classical: ratio_minimum(&kc)?,
                    lt_classical: ratio_minimum(&lc)?,
                })
            })
            .collect()
    })
}

/// `max / min` of positive values.
pub fn spread(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Parameters of the high-velocity experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighVelocitySetup {
    pub model: EntropyModel,
    pub ladder_setup: LadderSetup,
    pub radius: f64,
    /// Thresholds `A` as multiples of `R^2`.
    pub multiples: Vec<f64>,
    pub interaction: Interaction,
    pub initial: InitialData,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
}

impl Default for HighVelocitySetup {
    fn default() -> Self {
        HighVelocitySetup {
            model: EntropyModel::new(EntropyKind::Power { p: 0.2, a: 0.25 }, 1.0, 0.0, 1.0).expect("admissible"),
            ladder_setup: LadderSetup { l: 10.0, n_base: 40, vcut: 18.0 },
            radius: 0.75,
            multiples: vec![64.0, 128.0, 256.0],
            interaction: Interaction::Gaussian { amplitude: 1.0, width: 0.5 },
            initial: InitialData::GaussianSymbol { amplitude: 0.5, x0: 0.0, sx: 0.7, v0: 0.0, sv: 0.7 },
            t_end: 0.5,
            dt: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TailPoint {
    pub hbar: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub tail: f64,
    pub bound: f64,
    pub ratio: f64,
}

/// Husimi tails of evolved states against the two-term bound, for each
/// ladder member and threshold.
pub fn high_velocity_ladder(setup: &HighVelocitySetup, ladder: &[f64], jobs: usize) -> Result<Vec<TailPoint>> {
    let steps = (setup.t_end / setup.dt).round() as usize;
    let rows: Vec<Vec<TailPoint>> = thread_pool(jobs)?.install(|| {
        ladder
            .par_iter()
            .map(|&hbar| {
                let ls = &setup.ladder_setup;
                let grid = quantum_grid(ls.l, ls.n_base, hbar, ls.vcut)?;
                let mut state = setup.initial.quantum(&setup.model, &grid)?;
                let hp = HartreePropagator::new(&state, setup.interaction);
                for _ in 0..steps {
                    hp.step(&mut state, setup.dt);
                }
                let fam = CoherentFamily::new(Window::CompactFourier { radius: setup.radius }, &grid)?;
                let h = husimi(&state, &fam, setup.model.cap)?;
                let phi: Vec<f64> = (0..grid.n).map(|j| (-grid.wrap(grid.x(j)).powi(2) / 2.0).exp()).collect();
                setup
                    .multiples
                    .iter()
                    .map(|&m| {
                        let a = m * setup.radius * setup.radius;
                        let t = high_velocity_tail(&h.field, &setup.model, &phi, a, setup.radius)?;
                        Ok(TailPoint { hbar, a, tail: t.tail, bound: t.entropy_term + t.background_term, ratio: t.ratio() })
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(rows.into_iter().flatten().collect())
}

/// Verdict of one inequality suite.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteVerdict {
    pub suite: String,
    pub passed: bool,
    pub summary: String,
    pub detail: serde_json::Value,
}

pub const SUITES: [&str; 7] = ["bl", "coherent-bl", "klein", "lt", "highv", "appd", "bridge"];

/// Runs one named suite; a violation is reported, not raised.
pub fn run_suite(name: &str, model: &EntropyModel, trials: usize, seed: u64, ladder: &[f64], jobs: usize) -> Result<SuiteVerdict> {
    let setup = LadderSetup::default();
    let verdict = |passed: bool, summary: String, detail: serde_json::Value| SuiteVerdict { suite: name.to_string(), passed, summary, detail };
    match name {
        "bl" => {
            let sweep = bl_sweep(model, trials, seed, None)?;
            let probe = bl_falsifiability_probe((10 * trials).min(100_000), seed)?;
            let ok = sweep.violations == 0 && probe.violations > 0;
            Ok(verdict(
                ok,
                format!("{} violations in {} trials; control found {} in {}", sweep.violations, trials, probe.violations, probe.trials),
                serde_json::json!({ "sweep": sweep, "control": probe }),
            ))
        }
        "coherent-bl" => {
            let rows = coherent_bl_ladder(model, &symbol_ensemble(5, seed), ladder, &setup, Window::Gaussian { width: 1.0 }, jobs);
            match rows {
                Ok(rows) => Ok(verdict(true, format!("{} ladder members hold", rows.len()), serde_json::to_value(&rows)?)),
                Err(Error::Violation(m)) => Ok(verdict(false, m, serde_json::Value::Null)),
                Err(e) => Err(e),
            }
        }
        "klein" => {
            let sweep = klein_sweep(model, trials, seed)?;
            let rows = klein_lt_ladder(model, &symbol_ensemble(5, seed), ladder, &setup, jobs)?;
            let q: Vec<f64> = rows.iter().map(|r| r.klein_quantum).collect();
            let c: Vec<f64> = rows.iter().map(|r| r.klein_classical).collect();
            let ok = sweep.violations == 0 && q.iter().chain(&c).all(|&k| k > 1e-6) && spread(&q) <= 2.0 && spread(&c) <= 2.0;
            Ok(verdict(
                ok,
                format!("{} violations; quantum ratio spread {:.3}, classical {:.3}", sweep.violations, spread(&q), spread(&c)),
                serde_json::json!({ "sweep": sweep, "ladder": rows }),
            ))
        }
        "lt" => {
            let rows = klein_lt_ladder(model, &symbol_ensemble(5, seed), ladder, &setup, jobs)?;
            let q: Vec<f64> = rows.iter().map(|r| r.lt_quantum).collect();
            let c: Vec<f64> = rows.iter().map(|r| r.lt_classical).collect();
            let ok = q.iter().chain(&c).all(|&k| k > 1e-6) && spread(&q) <= 2.0 && spread(&c) <= 2.0;
            Ok(verdict(ok, format!("quantum ratio spread {:.3}, classical {:.3}", spread(&q), spread(&c)), serde_json::to_value(&rows)?))
        }
        "highv" => {
            let mut hv = HighVelocitySetup::default();
            if matches!(model.kind, EntropyKind::Power { .. }) {
                hv.model = *model;
            }
            let pts = high_velocity_ladder(&hv, ladder, jobs)?;
            let r: Vec<f64> = pts.iter().map(|p| p.ratio).collect();
            let ok = pts.iter().all(|p| p.tail <= p.bound) && spread(&r) <= 2.0;
            Ok(verdict(ok, format!("empirical constant spread {:.3} over {} points", spread(&r), r.len()), serde_json::to_value(&pts)?))
        }
        "appd" => {
            let sweep = appd_sweep(model, trials, seed, 48)?;
            Ok(verdict(sweep.violations == 0, format!("worst relative gap {:e}", sweep.worst_ratio), serde_json::to_value(&sweep)?))
        }
        "bridge" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut bad = 0;
            for _ in 0..trials {
                if scalar_bridge_check(rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)).is_err() {
                    bad += 1;
                }
            }
            let items = bl_stability_checks(seed, trials)?;
            let ok = bad == 0 && items.iter().all(|i| i.violations == 0);
            Ok(verdict(ok, format!("{bad} scalar bridge violations; {} stability items", items.len()), serde_json::to_value(&items)?))
        }
        other => Err(Error::Config(format!("unknown suite {other:?}; expected one of {SUITES:?}"))),
    }
}

/// Worst relative gap between the integral representation and the
/// three-trace entropy over the given frames.
pub fn appd_frame_gap(states: &[QuantumState], model: &EntropyModel, nodes: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for s in states {
        let direct = quantum_rel_entropy(s, model)?;
        let rep = rel_entropy_integral_rep(s, model, nodes)?;
        if direct > 0.0 {
            worst = worst.max((direct - rep).abs() / direct);
        } else {
            worst = worst.max(rep.abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct OtInstance {
    pub monotone: f64,
    pub lp: f64,
    pub convex_quadratic: bool,
    pub convex_power: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransportReport {
    /// `||f_dt - f_{dt/2}||_2` and `||f_{dt/2} - f_{dt/4}||_2`.
    pub refinement_gaps: (f64, f64),
    pub newton_worst: f64,
    pub seeds: usize,
    pub chain: ChainReport,
    pub chain_refined: ChainReport,
    pub ot: Vec<OtInstance>,
}

impl TransportReport {
    pub fn refinement_ratio(&self) -> f64 {
        self.refinement_gaps.0 / self.refinement_gaps.1
    }

    /// Ratio of the larger to the smaller empirical constant of both links
    /// under `dt` halving.
    pub fn chain_stability(&self) -> f64 {
        let r = |a: f64, b: f64| if a.min(b) > 0.0 { a.max(b) / a.min(b) } else if a == b { 1.0 } else { f64::INFINITY };
        r(self.chain.link1_max, self.chain_refined.link1_max).max(r(self.chain.link2_max, self.chain_refined.link2_max))
    }
}

fn field_gap(a: &PhaseField, b: &PhaseField) -> f64 {
    (a.pert.iter().zip(&b.pert).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * a.grid.phase_cell()).sqrt()
}

fn evolve(f0: &PhaseField, model: &EntropyModel, w: &Interaction, dt: f64, steps: usize) -> Result<PhaseField> {
    let p = VlasovPropagator::new(&f0.grid, model, *w);
    let mut f = f0.clone();
    for _ in 0..steps {
        p.step(&mut f, dt)?;
    }
    Ok(f)
}

/// Twin Vlasov runs with the interaction amplitude perturbed by `eps`,
/// followed by random transport instances.
pub fn run_transport_diag(cfg: &ExperimentConfig, eps: f64, ot_instances: usize, seed: u64) -> Result<TransportReport> {
    cfg.validate()?;
    let grid = cfg.grid.classical()?;
    if grid.d != 1 {
        return Err(Error::Config("transport diagnostics are one-dimensional".into()));
    }
    let (model, w, dt, steps) = (cfg.model, cfg.interaction, cfg.dt, cfg.steps());
    let f0 = cfg.initial.classical(&model, &grid)?;
    let a = evolve(&f0, &model, &w, dt, steps)?;
    let b = evolve(&f0, &model, &w, dt / 2.0, 2 * steps)?;
    let c = evolve(&f0, &model, &w, dt / 4.0, 4 * steps)?;
    let w2 = match w {
        Interaction::Gaussian { amplitude, width } => Interaction::Gaussian { amplitude: amplitude * (1.0 + eps), width },
        Interaction::Zero => Interaction::Gaussian { amplitude: eps, width: 0.5 },
    };
    let r1 = record_vlasov_run(&f0, &model, &w, dt, steps)?;
    let r2 = record_vlasov_run(&f0, &model, &w2, dt, steps)?;
    let twin = TwinRun::new(&f0, r1.forces.clone(), r2.forces.clone(), Some(seed))?;
    let newton_worst = newton_gap_bound_check(&twin, cfg.t_end, 4 * steps)?;
    let chain = gronwall_chain_check(&f0, &r1, &r2, 8, 2)?;
    let r1h = record_vlasov_run(&f0, &model, &w, dt / 2.0, 2 * steps)?;
    let r2h = record_vlasov_run(&f0, &model, &w2, dt / 2.0, 2 * steps)?;
    let chain_refined = gronwall_chain_check(&f0, &r1h, &r2h, 8, 2)?;
    let ot = random_ot_instances(ot_instances, 64, seed)?;
    Ok(TransportReport { refinement_gaps: (field_gap(&a, &b), field_gap(&b, &c)), newton_worst, seeds: twin.seeds.len(), chain, chain_refined, ot })
}

/// Background plus random bumps against a shifted, rescaled copy on a
/// window of `atoms` cells.
pub fn random_ot_instances(count: usize, atoms: usize, seed: u64) -> Result<Vec<OtInstance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dx = 8.0 / atoms as f64;
    let x: Vec<f64> = (0..atoms).map(|j| -4.0 + (j as f64 + 0.5) * dx).collect();
    (0..count)
        .map(|_| {
            let bg = rng.gen_range(0.05..0.5);
            let bump = |rng: &mut ChaCha8Rng| {
                let (h, c, s) = (rng.gen_range(0.1..1.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.2..0.8));
                x.iter().map(move |&y| h * (-(y - c).powi(2) / (2.0 * s * s)).exp()).collect::<Vec<f64>>()
            };
            let r1: Vec<f64> = bump(&mut rng).iter().map(|b| bg + b).collect();
            let b2 = bump(&mut rng);
            let excess1: f64 = r1.iter().map(|r| r - bg).sum();
            let s = excess1 / b2.iter().sum::<f64>();
            let r2: Vec<f64> = b2.iter().map(|b| bg + s * b).collect();
            let res = ot_cost_1d(&r1, &r2, &x, dx, (0, atoms))?;
            let a1 = Atoms::new(x.clone(), r1.iter().map(|r| r * dx).collect())?;
            let a2 = Atoms::new(x.clone(), r2.iter().map(|r| r * dx).collect())?;
            let lp = ot_cost_lp(&a1, &a2)?;
            let map = MonotoneMap::new(&r1, &r2, -4.0, dx)?;
            let rho0 = bg + 0.05;
            Ok(OtInstance {
                monotone: res.cost,
                lp,
                convex_quadratic: mccann_convexity_check(&map, &AFunction { rho0, d: 1 }).convex,
                convex_power: mccann_convexity_check(&map, &AFunction { rho0, d: 3 }).convex,
            })
        })
        .collect()
}

/// `|F(t) - F(0)| / max(|F(0)|, eps)`.
pub fn free_energy_drift(f0: f64, ft: f64, eps: f64) -> f64 {
    (ft - f0).abs() / f0.abs().max(eps)
}

const DRIFT_FLOOR: f64 = 1e-300;

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Writes whitespace-separated tables for gnuplot into `dir/plots`.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let diag = dir.join(DIAGNOSTICS_FILE);
    let ladder = dir.join(LADDER_FILE);
    let tail = dir.join(TAIL_FILE);
    if !diag.exists() && !ladder.exists() && !tail.exists() {
        return Err(Error::Config(format!("no diagnostics found in {}", dir.display())));
    }
    let records = if diag.exists() { read_diagnostics(&diag)? } else { Vec::new() };
    let out = dir.join("plots");
    fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    let mut table = |name: &str, header: &str, rows: Vec<String>| -> Result<()> {
        let p = out.join(name);
        let mut f = BufWriter::new(File::create(&p)?);
        writeln!(f, "# {header}")?;
        for r in rows {
            writeln!(f, "{r}")?;
        }
        f.flush()?;
        written.push(p);
        Ok(())
    };
    table("entropy_vs_time.dat", "t entropy", records.iter().map(|r| format!("{} {}", r.t, r.entropy)).collect())?;
    let f0 = records.first().map(|r| r.free_energy).unwrap_or(0.0);
    table(
        "free_energy_drift.dat",
        "t free_energy drift",
        records.iter().map(|r| format!("{} {} {}", r.t, r.free_energy, free_energy_drift(f0, r.free_energy, DRIFT_FLOOR))).collect(),
    )?;
    let rows = if ladder.exists() {
        let rep: CompareReport = serde_json::from_str(&fs::read_to_string(&ladder)?)?;
        rep.rows.iter().map(|r| format!("{} {} {} {}", r.hbar, r.err_wigner, r.err_density, rep.order_fit)).collect()
    } else {
        Vec::new()
    };
    table("ladder.dat", "hbar err_wigner err_density order_fit", rows)?;
    let rows = if tail.exists() {
        let pts: Vec<TailPoint> = serde_json::from_str(&fs::read_to_string(&tail)?)?;
        pts.iter().map(|p| format!("{} {} {} {} {}", p.hbar, p.a, p.tail, p.bound, p.ratio)).collect()
    } else {
        Vec::new()
    };
    table("tail_vs_A.dat", "hbar A tail bound ratio", rows)?;
    Ok(written)
}

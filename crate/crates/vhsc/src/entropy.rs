//! Entropy functionals and scalar relative-entropy arithmetic.
//!
//! An [`EntropyModel`] carries a catalog kind together with a temperature
//! `T`, a chemical potential `mu` and a spectral cap `M`. Every evaluation
//! uses the effective functional `S_eff(m) = T S_kind(m) + mu m` on `[0, M]`.
//! Scalar relative entropies are computed from Bregman forms of
//! `x log x` so that small deviations do not cancel catastrophically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::tanh_sinh;

/// Distance to an endpoint below which a value is snapped onto it.
pub const ENDPOINT_CLAMP: f64 = 1e-14;

/// Default gap between `S_eff'(M^-)` and the start of the extended inverse.
pub const EXTENSION_OFFSET: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EntropyKind {
    Boltzmann,
    Bose,
    Fermi,
    /// `S(m) = m^p - a m`.
    Power { p: f64, a: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct EntropyModel {
    pub kind: EntropyKind,
    pub temperature: f64,
    pub mu: f64,
    pub cap: f64,
}

/// Serialized form `{kind, T, mu, M, p?, a?}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: String,
    #[serde(rename = "T", default = "one")]
    pub t: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(rename = "M", default = "one")]
    pub m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<ModelSpec> for EntropyModel {
    type Error = Error;
    fn try_from(s: ModelSpec) -> Result<Self> {
        let kind = match s.kind.to_ascii_lowercase().as_str() {
            "boltzmann" => EntropyKind::Boltzmann,
            "bose" => EntropyKind::Bose,
            "fermi" => EntropyKind::Fermi,
            "power" => EntropyKind::Power {
                p: s.p.ok_or_else(|| Error::InvalidModel("power model needs p".into()))?,
                a: s.a.ok_or_else(|| Error::InvalidModel("power model needs a".into()))?,
            },
            other => return Err(Error::InvalidModel(format!("unknown kind {other:?}"))),
        };
        if !matches!(kind, EntropyKind::Power { .. }) && (s.p.is_some() || s.a.is_some()) {
            return Err(Error::InvalidModel("p and a only apply to the power kind".into()));
        }
        EntropyModel::new(kind, s.t, s.mu, s.m)
    }
}

impl From<EntropyModel> for ModelSpec {
    fn from(m: EntropyModel) -> Self {
        let (kind, p, a) = match m.kind {
            EntropyKind::Boltzmann => ("boltzmann", None, None),
            EntropyKind::Bose => ("bose", None, None),
            EntropyKind::Fermi => ("fermi", None, None),
            EntropyKind::Power { p, a } => ("power", Some(p), Some(a)),
        };
        ModelSpec { kind: kind.into(), t: m.temperature, mu: m.mu, m: m.cap, p, a }
    }
}

/// Bregman divergence of `x log x`: `y log(y/y0) - y + y0`.
pub fn xlogx_bregman(y: f64, y0: f64) -> f64 {
    if y == 0.0 {
        return y0;
    }
    if y0 == 0.0 {
        return f64::INFINITY;
    }
    let u = (y - y0) / y0;
    if u.abs() < 1e-3 {
        // (1+u) ln(1+u) - u = sum_{n>=2} (-1)^n u^n / (n (n-1))
        let mut s = 0.0;
        let mut un = u * u;
        for n in 2..12 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * un / (n * (n - 1)) as f64;
            un *= u;
        }
        y0 * s
    } else {
        (y * (y / y0).ln() - y + y0).max(0.0)
    }
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

impl EntropyKind {
    /// `S_kind(m)` at unit temperature and zero chemical potential.
    pub fn s(&self, m: f64) -> f64 {
        match *self {
            EntropyKind::Boltzmann => -xlogx(m) + m,
            EntropyKind::Bose => -xlogx(m) + xlogx(1.0 + m),
            EntropyKind::Fermi => -xlogx(m) - xlogx(1.0 - m),
            EntropyKind::Power { p, a } => m.max(0.0).powf(p) - a * m,
        }
    }

    pub fn sprime(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return f64::INFINITY;
        }
        match *self {
            EntropyKind::Boltzmann => -m.ln(),
            EntropyKind::Bose => (1.0 / m).ln_1p(),
            EntropyKind::Fermi => {
                if m >= 1.0 {
                    f64::NEG_INFINITY
                } else {
                    ((1.0 - m) / m).ln()
                }
            }
            EntropyKind::Power { p, a } => p * m.powf(p - 1.0) - a,
        }
    }

    pub fn sprime2(&self, m: f64) -> f64 {
        match *self {
            EntropyKind::Boltzmann => -1.0 / m,
            EntropyKind::Bose => -1.0 / (m * (1.0 + m)),
            EntropyKind::Fermi => -1.0 / (m * (1.0 - m)),
            EntropyKind::Power { p, .. } => p * (p - 1.0) * m.powf(p - 2.0),
        }
    }

    /// `(S_kind')^{-1}(y)`; `None` outside the range of `S_kind'` on `(0, inf)`.
    pub fn sprime_inv(&self, y: f64) -> Option<f64> {
        match *self {
            EntropyKind::Boltzmann => Some((-y).exp()),
            EntropyKind::Bose => (y > 0.0).then(|| 1.0 / y.exp_m1()),
            EntropyKind::Fermi => Some(if y > 0.0 {
                let e = (-y).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + y.exp())
            }),
            EntropyKind::Power { p, a } => (a + y > 0.0).then(|| (p / (a + y)).powf(1.0 / (1.0 - p))),
        }
    }

    /// Relative entropy of `S_kind` for scalars, `+inf` when the reference
    /// sits at an endpoint with infinite slope.
    pub fn bregman(&self, y: f64, y0: f64) -> f64 {
        match *self {
            EntropyKind::Boltzmann => xlogx_bregman(y, y0),
            EntropyKind::Bose => (xlogx_bregman(y, y0) - xlogx_bregman(1.0 + y, 1.0 + y0)).max(0.0),
            EntropyKind::Fermi => xlogx_bregman(y, y0) + xlogx_bregman(1.0 - y, 1.0 - y0),
            EntropyKind::Power { p, .. } => {
                if y0 == 0.0 {
                    return if y == 0.0 { 0.0 } else { f64::INFINITY };
                }
                // -(y^p - y0^p - p y0^{p-1} (y - y0)), computed relative to y0
                let r = y / y0;
                let u = r - 1.0;
                let g = if u.abs() < 1e-4 {
                    // 1 + p u - (1+u)^p
                    let mut s = 0.0;
                    let mut c = p * (p - 1.0) / 2.0;
                    let mut un = u * u;
                    for n in 2..10 {
                        s -= c * un;
                        c *= (p - n as f64) / (n as f64 + 1.0);
                        un *= u;
                    }
                    s
                } else {
                    1.0 + p * u - r.max(0.0).powf(p)
                };
                (y0.powf(p) * g).max(0.0)
            }
        }
    }
}

impl EntropyModel {
    /// Builds a model and checks `S_eff'(M^-) <= 0` together with the
    /// parameter constraints of the power family.
    pub fn new(kind: EntropyKind, temperature: f64, mu: f64, cap: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidModel(format!("temperature must be positive, got {temperature}")));
        }
        if !mu.is_finite() {
            return Err(Error::InvalidModel("chemical potential must be finite".into()));
        }
        if !(cap > 0.0 && cap <= 1.0) {
            return Err(Error::InvalidModel(format!("cap M must lie in (0, 1], got {cap}")));
        }
        if let EntropyKind::Power { p, a } = kind {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidModel(format!("power exponent must lie in (0, 1), got {p}")));
            }
            if a < p {
                return Err(Error::InvalidModel(format!("power model needs a >= p, got a = {a}, p = {p}")));
            }
        }
        let model = EntropyModel { kind, temperature, mu, cap };
        let edge = model.sprime_at_cap();
        if edge > 0.0 {
            return Err(Error::InvalidModel(format!(
                "S_eff'(M-) = {edge} > 0; lower the chemical potential"
            )));
        }
        Ok(model)
    }

    pub fn boltzmann() -> Self {
        Self::new(EntropyKind::Boltzmann, 1.0, 0.0, 1.0).expect("admissible")
    }

    pub fn fermi() -> Self {
        Self::new(EntropyKind::Fermi, 1.0, 0.0, 1.0).expect("admissible")
    }

    /// Bose gas with `M = 1`, `T = 1` and the given chemical potential.
    pub fn bose(mu: f64) -> Result<Self> {
        Self::new(EntropyKind::Bose, 1.0, mu, 1.0)
    }

    /// Power-family constraint tied to the space dimension.
    pub fn check_dimension(&self, d: usize) -> Result<()> {
        if let EntropyKind::Power { p, .. } = self.kind {
            let lo = (1.0 - 2.0 / d as f64).max(0.0);
            if p <= lo {
                return Err(Error::InvalidModel(format!("power exponent {p} must exceed {lo} in dimension {d}")));
            }
        }
        Ok(())
    }

    /// `S_eff'(M^-)`, possibly `-inf`.
    pub fn sprime_at_cap(&self) -> f64 {
        self.temperature * self.kind.sprime(self.cap) + self.mu
    }

    fn snap(&self, m: f64) -> Result<f64> {
        if m.is_nan() {
            return Err(Error::Domain("NaN occupation".into()));
        }
        if m < 0.0 {
            if m >= -ENDPOINT_CLAMP {
                return Ok(0.0);
            }
            return Err(Error::Domain(format!("occupation {m} below 0")));
        }
        if m > self.cap {
            if m <= self.cap + ENDPOINT_CLAMP {
                return Ok(self.cap);
            }
            return Err(Error::Domain(format!("occupation {m} above cap {}", self.cap)));
        }
        Ok(m)
    }

    /// `S_eff(m)` on `[0, M]` with `0 log 0 = 0`.
    pub fn eval_s(&self, m: f64) -> Result<f64> {
        let m = self.snap(m)?;
        Ok(self.s_unchecked(m))
    }

    /// `S_eff(m)` for callers that already guarantee `m` in `[0, M]`.
    pub fn s_unchecked(&self, m: f64) -> f64 {
        self.temperature * self.kind.s(m) + self.mu * m
    }

    /// `S_eff'(m)` on `(0, M]`.
    pub fn sprime(&self, m: f64) -> f64 {
        self.temperature * self.kind.sprime(m) + self.mu
    }

    pub fn sprime2(&self, m: f64) -> f64 {
        self.temperature * self.kind.sprime2(m)
    }

    /// `f(y) = (S_eff')^{-1}(y)`.
    pub fn eval_sprime_inv(&self, y: f64) -> Result<f64> {
        let floor = self.sprime_at_cap();
        if y < floor {
            return Err(Error::Range(format!("{y} below S_eff'(M-) = {floor}")));
        }
        let v = self
            .kind
            .sprime_inv((y - self.mu) / self.temperature)
            .ok_or_else(|| Error::Range(format!("{y} outside the range of S_eff'")))?;
        Ok(v.min(self.cap))
    }

    /// `f` continued to the whole real line as a C² function with values in
    /// `[0, M]`. It coincides with `f` on `[floor + offset, inf)`, where
    /// `floor = S_eff'(M^-)`, and blends to 0 over one unit below that point.
    pub fn eval_sprime_inv_extended(&self, y: f64, offset: f64) -> f64 {
        let floor = self.sprime_at_cap();
        let eta = floor + offset;
        if !floor.is_finite() || y >= eta {
            return self.eval_sprime_inv(y).unwrap_or(0.0);
        }
        let t = y - (eta - 1.0);
        if t <= 0.0 {
            return 0.0;
        }
        // exp(z - z^2/2) matches the identity to second order at z = 0 and
        // stays positive, so the argument never drops below the floor.
        let z = (y - eta) / offset;
        let arg = floor + offset * (z - 0.5 * z * z).exp();
        let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
        self.eval_sprime_inv(arg).unwrap_or(self.cap) * s
    }

    /// Scalar relative entropy `H(y, y0)`, `+inf` allowed.
    pub fn rel_entropy_scalar(&self, y: f64, y0: f64) -> Result<f64> {
        let y = self.snap(y)?;
        let y0 = self.snap(y0)?;
        Ok(self.rel_entropy_unchecked(y, y0))
    }

    /// As [`Self::rel_entropy_scalar`] for inputs already in `[0, M]`.
    pub fn rel_entropy_unchecked(&self, y: f64, y0: f64) -> f64 {
        if y == y0 {
            return 0.0;
        }
        if y0 == 0.0 {
            // S'(0+) = +inf for every catalog member.
            return f64::INFINITY;
        }
        if y0 == self.cap {
            let slope = self.sprime_at_cap();
            if slope == f64::NEG_INFINITY {
                return f64::INFINITY;
            }
            return (slope * (y - y0) - self.s_unchecked(y) + self.s_unchecked(y0)).max(0.0);
        }
        self.temperature * self.kind.bregman(y, y0)
    }

    /// Numerical `sup_theta` form of the relative entropy over
    /// `theta in [theta_min, 1)` (cross-check only).
    pub fn rel_entropy_sup_numeric(&self, y: f64, y0: f64, theta_min: f64) -> f64 {
        let mut best = 0.0f64;
        let steps = 400;
        let lo = theta_min.log10();
        for i in 0..=steps {
            let theta = 10f64.powf(lo - lo * i as f64 / steps as f64).min(1.0 - 1e-15);
            let z = theta * y + (1.0 - theta) * y0;
            let v = (self.s_unchecked(z) - (1.0 - theta) * self.s_unchecked(y0) - theta * self.s_unchecked(y)) / theta;
            if v.is_finite() {
                best = best.max(v);
            }
        }
        best
    }

    /// `int_0^M m |S''(m)| (S'_+(m))^{d/2-1} dm`, proportional to the density
    /// of the reference state in dimension `d`.
    pub fn admissibility_integral(&self, d: usize) -> f64 {
        let e = d as f64 / 2.0 - 1.0;
        let upper = match self.eval_sprime_inv(0.0) {
            Ok(zero) => zero.min(self.cap),
            Err(_) => self.cap,
        };
        let t = self.temperature;
        let kind = self.kind;
        let mu = self.mu;
        tanh_sinh(
            |m, _da, db| {
                let sp = t * kind.sprime(m) + mu;
                let sp = if sp <= 0.0 {
                    // near the zero of S', use the linearization to avoid cancellation
                    -t * kind.sprime2(m) * db
                } else {
                    sp
                };
                m * (t * kind.sprime2(m)).abs() * sp.powf(e)
            },
            0.0,
            upper,
            1e-10,
        )
    }
}

/// Tangent-line remainder of `rho^{1+2/d}` (quadratic for `d = 1`).
pub fn delta_fn(rho: f64, rho0: f64, d: usize) -> f64 {
    if d <= 1 {
        return (rho - rho0) * (rho - rho0);
    }
    let q = 1.0 + 2.0 / d as f64;
    let v = rho.powf(q) - rho0.powf(q) - q * rho0.powf(q - 1.0) * (rho - rho0);
    v.max(0.0)
}

/// Returns `(H_{S_b}(y, y0), H_{S_0}(y, y0))` for the bare Bose and Boltzmann
/// entropies and checks `H_0 / 2 <= H_b <= H_0`.
pub fn scalar_bridge_check(y: f64, y0: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&y) || !(0.0..=1.0).contains(&y0) {
        return Err(Error::Domain(format!("bridge inputs must lie in [0, 1]: ({y}, {y0})")));
    }
    let hb = EntropyKind::Bose.bregman(y, y0);
    let h0 = EntropyKind::Boltzmann.bregman(y, y0);
    let slack = 1e-14 + 1e-12 * h0;
    if !(h0 / 2.0 <= hb + slack && hb <= h0 + slack) {
        return Err(Error::Violation(format!(
            "bridge ordering fails at (y, y0) = ({y}, {y0}): H_b = {hb}, H_0 = {h0}"
        )));
    }
    Ok((hb, h0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn catalog() -> Vec<EntropyModel> {
        vec![
            EntropyModel::boltzmann(),
            EntropyModel::fermi(),
            EntropyModel::bose(-1.0).unwrap(),
            EntropyModel::new(EntropyKind::Power { p: 0.5, a: 1.0 }, 1.0, 0.0, 1.0).unwrap(),
            EntropyModel::new(EntropyKind::Fermi, 0.7, 0.3, 1.0).unwrap(),
        ]
    }

    #[test]
    fn entropy_values() {
        assert_relative_eq!(EntropyModel::boltzmann().eval_s(1.0).unwrap(), 1.0);
        let f = EntropyModel::fermi();
        assert_relative_eq!(f.eval_s(0.5).unwrap(), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(f.eval_s(0.0).unwrap(), 0.0);
        assert!(f.eval_s(1.5).is_err());
        assert!(f.eval_s(-1e-3).is_err());
        assert_eq!(f.eval_s(-1e-15).unwrap(), 0.0);
    }

    #[test]
    fn inverse_derivative_values() {
        assert_relative_eq!(EntropyModel::fermi().eval_sprime_inv(0.0).unwrap(), 0.5);
        let b = EntropyModel::boltzmann();
        assert_relative_eq!(b.eval_sprime_inv(1.0).unwrap(), (-1.0f64).exp(), max_relative = 1e-15);
        let bose = EntropyModel::bose(-1.0).unwrap();
        let expect = 1.0 / (1f64.exp() - 1.0);
        assert_relative_eq!(bose.eval_sprime_inv(0.0).unwrap(), expect, max_relative = 1e-14);
        assert!((expect - 0.581977).abs() < 1e-6);
        assert!(b.eval_sprime_inv(-0.5).is_err());
    }

    #[test]
    fn bose_admissibility_threshold() {
        assert!(EntropyModel::bose(-0.6).is_err());
        assert!(EntropyModel::bose(-std::f64::consts::LN_2 - 1e-12).is_ok());
        assert!(EntropyModel::new(EntropyKind::Power { p: 0.5, a: 0.4 }, 1.0, 0.0, 1.0).is_err());
        let pw = EntropyModel::new(EntropyKind::Power { p: 0.2, a: 1.0 }, 1.0, 0.0, 1.0).unwrap();
        assert!(pw.check_dimension(3).is_err());
        assert!(pw.check_dimension(2).is_ok());
    }

    #[test]
    fn relative_entropy_values() {
        let b2 = EntropyModel { kind: EntropyKind::Boltzmann, temperature: 1.0, mu: 0.0, cap: 2.0 };
        let h = b2.rel_entropy_unchecked(2.0, 1.0);
        assert_relative_eq!(h, 2.0 * 2f64.ln() - 1.0, max_relative = 1e-14);
        assert!((h - 0.386294).abs() < 1e-6);
        assert_relative_eq!(b2.rel_entropy_sup_numeric(2.0, 1.0, 1e-7), h, max_relative = 1e-6);

        let f = EntropyModel::fermi();
        let h = f.rel_entropy_scalar(0.25, 0.5).unwrap();
        let sf = -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        assert_relative_eq!(h, 2f64.ln() - sf, max_relative = 1e-14);
        assert!((h - 0.130812).abs() < 1e-6);

        for m in catalog() {
            assert_eq!(m.rel_entropy_scalar(0.3, 0.3).unwrap(), 0.0);
        }
        let b = EntropyModel::boltzmann();
        assert_eq!(b.rel_entropy_scalar(0.2, 0.0).unwrap(), f64::INFINITY);
        let grow = b.rel_entropy_sup_numeric(0.2, 0.0, 1e-7) - b.rel_entropy_sup_numeric(0.2, 0.0, 1e-4);
        assert!(grow > 0.99 * 0.2 * 1000f64.ln());
    }

    #[test]
    fn endpoint_closed_forms_match_sup() {
        for m in catalog() {
            let cap = m.cap;
            for &y in &[0.0, 0.1, 0.5, 0.9] {
                let closed = m.rel_entropy_scalar(y, cap).unwrap();
                let sup = m.rel_entropy_sup_numeric(y, cap, 1e-7);
                if closed.is_finite() {
                    assert_relative_eq!(closed, sup, max_relative = 1e-5, epsilon = 1e-12);
                } else {
                    let grow = sup - m.rel_entropy_sup_numeric(y, cap, 1e-4);
                    assert!(grow > 0.05, "{:?} y = {y}: growth {grow}", m.kind);
                }
            }
        }
    }

    #[test]
    fn interior_formula_matches_sup() {
        for m in catalog() {
            for &(y, y0) in &[(0.1, 0.6), (0.8, 0.3), (0.0, 0.4), (0.95, 0.05)] {
                let h = m.rel_entropy_scalar(y, y0).unwrap();
                assert_relative_eq!(h, m.rel_entropy_sup_numeric(y, y0, 1e-7), max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn delta_values() {
        assert_eq!(delta_fn(1.7, 1.7, 3), 0.0);
        let v = delta_fn(2.0, 1.0, 3);
        assert_relative_eq!(v, 2f64.powf(5.0 / 3.0) - 8.0 / 3.0, max_relative = 1e-14);
        assert!((v - 0.508135).abs() < 1e-6);
        assert_eq!(delta_fn(3.0, 1.0, 1), 4.0);
    }

    #[test]
    fn bridge_values() {
        assert_eq!(scalar_bridge_check(0.5, 0.5).unwrap(), (0.0, 0.0));
        let (hb, h0) = scalar_bridge_check(0.9, 0.1).unwrap();
        let b0 = 0.9 * 9f64.ln() - 0.8;
        let bb = b0 - (1.9 * (1.9f64 / 1.1).ln() - 0.8);
        assert_relative_eq!(h0, b0, max_relative = 1e-14);
        assert_relative_eq!(hb, bb, max_relative = 1e-13);
        let (hb, h0) = scalar_bridge_check(0.0, 0.5).unwrap();
        assert!(hb.is_finite() && h0.is_finite() && hb > 0.0);
        assert_relative_eq!(h0, 0.5);
        assert_relative_eq!(hb, 0.5 - ((1.0f64 / 1.5).ln() + 0.5), max_relative = 1e-14);
    }

    #[test]
    fn admissibility_integrals_are_finite() {
        let pw = EntropyModel::new(EntropyKind::Power { p: 0.6, a: 1.0 }, 1.0, 0.0, 1.0).unwrap();
        for m in catalog().into_iter().chain([pw]) {
            for d in 1..=3 {
                if m.check_dimension(d).is_err() {
                    continue;
                }
                let v = m.admissibility_integral(d);
                assert!(v.is_finite() && v > 0.0, "{:?} d = {d}: {v}", m.kind);
            }
        }
        // d = 2: the integral is int_0^{f(0)} m |S''| dm; Boltzmann gives int_0^1 1 = 1
        assert_relative_eq!(EntropyModel::boltzmann().admissibility_integral(2), 1.0, max_relative = 1e-9);
        // d = 1 Boltzmann: int_0^1 (-ln m)^{-1/2} dm = Gamma(1/2)
        let g = std::f64::consts::PI.sqrt();
        assert_relative_eq!(EntropyModel::boltzmann().admissibility_integral(1), g, max_relative = 1e-8);
    }

    #[test]
    fn serde_round_trip() {
        let m = EntropyModel::new(EntropyKind::Power { p: 0.5, a: 1.0 }, 2.0, -0.1, 0.8).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<EntropyModel>(&s).unwrap(), m);
        let bad = r#"{"kind":"bose","T":1,"mu":0,"M":1}"#;
        assert!(serde_json::from_str::<EntropyModel>(bad).is_err());
        let extra = r#"{"kind":"fermi","T":1,"mu":0,"M":1,"x":3}"#;
        assert!(serde_json::from_str::<EntropyModel>(extra).is_err());
    }

    #[test]
    fn extension_is_c2_and_bounded() {
        let b = EntropyModel::boltzmann();
        let off = 0.5;
        let f = |y: f64| b.eval_sprime_inv_extended(y, off);
        let h = 1e-4;
        let d2 = |y: f64| (f(y + h) - 2.0 * f(y) + f(y - h)) / (h * h);
        let d1 = |y: f64| (f(y + h) - f(y - h)) / (2.0 * h);
        for &y in &[off, off - 1.0] {
            assert!((d1(y + 2.0 * h) - d1(y - 2.0 * h)).abs() < 1e-3, "slope jump at {y}");
            assert!((d2(y + 2.0 * h) - d2(y - 2.0 * h)).abs() < 2e-2, "curvature jump at {y}");
        }
        for i in 0..200 {
            let y = -1.0 + 0.01 * i as f64;
            assert!((0.0..=1.0).contains(&f(y)));
        }
        assert_eq!(f(off - 1.0), 0.0);
        assert_eq!(f(0.7), (-0.7f64).exp());
        assert_eq!(b.eval_sprime_inv_extended(0.3, EXTENSION_OFFSET), (-0.3f64).exp());
    }

    fn any_model() -> impl Strategy<Value = EntropyModel> {
        (0usize..5).prop_map(|i| catalog()[i])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn concavity(m in any_model(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (a, b) = (a * m.cap, b * m.cap);
            let mid = m.eval_s(0.5 * (a + b)).unwrap();
            let avg = 0.5 * (m.eval_s(a).unwrap() + m.eval_s(b).unwrap());
            prop_assert!(mid >= avg - 1e-14);
        }

    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn relative_entropy_nonnegative(m in any_model(), y in 0.0f64..1.0, y0 in 1e-6f64..1.0) {
            let h = m.rel_entropy_scalar(y * m.cap, y0 * m.cap).unwrap();
            prop_assert!(h >= 0.0);
            if (y - y0).abs() > 1e-6 {
                prop_assert!(h > 0.0);
            }
        }

    }

    proptest! {
        #[test]
        fn joint_convexity(kind in 0usize..2, y in proptest::array::uniform4(0.01f64..0.99)) {
            let m = if kind == 0 { EntropyModel::boltzmann() } else { EntropyModel::fermi() };
            let h = |a: f64, b: f64| m.rel_entropy_scalar(a, b).unwrap();
            let mid = h(0.5 * (y[0] + y[2]), 0.5 * (y[1] + y[3]));
            prop_assert!(mid <= 0.5 * (h(y[0], y[1]) + h(y[2], y[3])) + 1e-14);
        }

        #[test]
        fn delta_convex(d in 1usize..4, a in 0.0f64..5.0, b in 0.0f64..5.0, r0 in 0.0f64..3.0) {
            let mid = delta_fn(0.5 * (a + b), r0, d);
            prop_assert!(mid <= 0.5 * (delta_fn(a, r0, d) + delta_fn(b, r0, d)) + 1e-12);
            prop_assert!(delta_fn(a, r0, d) >= 0.0);
        }

        #[test]
        fn bridge_holds(y in 0.0f64..=1.0, y0 in 1e-9f64..=1.0) {
            prop_assert!(scalar_bridge_check(y, y0).is_ok());
        }
    }
}

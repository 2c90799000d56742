//! Quadrature rules: Gauss–Legendre on `[0, 1]` and double-exponential
//! (tanh–sinh) integration for integrands with endpoint singularities.

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tanh–sinh integral of `f` over `(a, b)`. The integrand is never evaluated
/// at the endpoints; `f` receives the point together with its distances to
/// `a` and `b` so that singular factors can be evaluated without cancellation.
pub fn tanh_sinh<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64, f64, f64) -> f64,
{
    let half = 0.5 * (b - a);
    let hpi = std::f64::consts::FRAC_PI_2;
    let term = |t: f64| -> f64 {
        let s = hpi * t.sinh();
        let c = s.cosh();
        // distance of the node to the nearer endpoint, in units of `half`
        let e = 1.0 / (s.exp() * c);
        let w = hpi * t.cosh() / (c * c);
        let (x, da, db) = if t >= 0.0 {
            let db = half * e;
            (b - db, b - a - db, db)
        } else {
            let da = half * (1.0 / ((-s).exp() * c));
            (a + da, da, b - a - da)
        };
        if da <= 0.0 || db <= 0.0 {
            return 0.0;
        }
        let v = f(x, da, db) * w;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let tmax = 6.5;
    let mut h = 0.5;
    let mut sum = term(0.0);
    let mut k = 1;
    while (k as f64) * h <= tmax {
        let t = k as f64 * h;
        sum += term(t) + term(-t);
        k += 1;
    }
    let mut prev = sum * h;
    for _ in 0..10 {
        h *= 0.5;
        let mut add = 0.0;
        let mut k = 1;
        while (k as f64) * h <= tmax {
            let t = k as f64 * h;
            add += term(t) + term(-t);
            k += 2;
        }
        sum += add;
        let cur = sum * h;
        if (cur - prev).abs() <= tol * cur.abs().max(1e-300) {
            return cur * half;
        }
        prev = cur;
    }
    prev * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre_unit(16);
        for p in 0..32 {
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            assert!((s - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "degree {p}");
        }
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularities() {
        let v = tanh_sinh(|_, da, _| da.powf(-0.5), 0.0, 1.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-9);
        let v = tanh_sinh(|x, _, _| -x.ln(), 0.0, 1.0, 1e-12);
        assert!((v - 1.0).abs() < 1e-10);
    }
}

//! Numerical kernels shared by the rest of the crate: stable log-sum-exp,
//! composite Gauss–Legendre quadrature in log space, and 1-D Brent solvers.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// `ln Σ exp(x_i)`, returning `-inf` for an empty slice or all `-inf` inputs.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `ln (1/N) Σ exp(x_i)`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NEG_INFINITY;
    }
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// `ln(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Streaming accumulator for `ln Σ exp(x_i)` and `ln Σ exp(2 x_i)`; merging
/// two accumulators is associative, so chunked parallel sums stay exact up to
/// rounding and deterministic when merged in a fixed order.
#[derive(Debug, Clone, Copy)]
pub struct LogSumAcc {
    pub max: f64,
    pub sum: f64,
    pub sum_sq: f64,
    pub count: u64,
}

impl Default for LogSumAcc {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0, sum_sq: 0.0, count: 0 }
    }
}

impl LogSumAcc {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            let r = (self.max - x).exp();
            self.sum = self.sum * r + 1.0;
            self.sum_sq = self.sum_sq * r * r + 1.0;
            self.max = x;
        } else {
            let e = (x - self.max).exp();
            self.sum += e;
            self.sum_sq += e * e;
        }
    }

    pub fn merge(mut self, other: LogSumAcc) -> LogSumAcc {
        self.count += other.count;
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        if other.max > self.max {
            let r = (self.max - other.max).exp();
            self.sum = self.sum * r + other.sum;
            self.sum_sq = self.sum_sq * r * r + other.sum_sq;
            self.max = other.max;
        } else {
            let r = (other.max - self.max).exp();
            self.sum += other.sum * r;
            self.sum_sq += other.sum_sq * r * r;
        }
        self
    }

    /// `ln Σ exp(x_i)`.
    pub fn log_sum(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }

    /// `ln (1/N) Σ exp(x_i)`.
    pub fn log_mean(&self) -> f64 {
        self.log_sum() - (self.count as f64).ln()
    }

    /// Kish effective sample size `(Σw)² / Σw²`.
    pub fn ess(&self) -> f64 {
        if self.sum_sq == 0.0 {
            0.0
        } else {
            self.sum * self.sum / self.sum_sq
        }
    }

    /// Delta-method standard error of [`log_mean`](Self::log_mean):
    /// `sd(w) / (sqrt(N) mean(w))`, computed on scaled weights.
    pub fn log_mean_stderr(&self) -> f64 {
        let n = self.count as f64;
        if n < 2.0 || self.sum == 0.0 {
            return f64::INFINITY;
        }
        let mean = self.sum / n;
        let var = (self.sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
        var.sqrt() / (n.sqrt() * mean)
    }
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes and weights by Newton iteration on the Legendre polynomial.
    pub fn new(order: usize) -> Self {
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let m = order.div_ceil(2);
        let nf = order as f64;
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..order {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                dp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / dp;
                if (z - z1).abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[order - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Self { nodes, weights }
    }
}

/// Shared 20-point rule.
pub fn gl20() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(20))
}

/// Log-space moments of a density `exp(f)` on an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMoments {
    /// `ln ∫ exp(f(x)) dx`
    pub log_mass: f64,
    /// `∫ x exp(f) / ∫ exp(f)`
    pub mean: f64,
    /// `∫ (x - mean)² exp(f) / ∫ exp(f)`
    pub var: f64,
}

/// Composite Gauss–Legendre evaluation of `ln ∫_a^b exp(f(x)) dx` together
/// with the first two normalised moments. Exponents are max-subtracted, so
/// integrands far outside the `f64` range are fine.
pub fn log_integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> Result<LogMoments> {
    if !(a.is_finite() && b.is_finite()) || b <= a || panels == 0 {
        return Err(Error::Numerical(format!("bad quadrature interval [{a}, {b}]")));
    }
    let rule = gl20();
    let width = (b - a) / panels as f64;
    let half = 0.5 * width;
    let mut xs = Vec::with_capacity(panels * rule.nodes.len());
    let mut ls = Vec::with_capacity(xs.capacity());
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            let x = mid + half * t;
            xs.push(x);
            ls.push(f(x) + (w * half).ln());
        }
    }
    let max = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numerical(format!(
            "quadrature integrand is {max} on [{a}, {b}]"
        )));
    }
    let (mut s0, mut s1) = (0.0, 0.0);
    for (&x, &l) in xs.iter().zip(&ls) {
        let e = (l - max).exp();
        s0 += e;
        s1 += e * x;
    }
    let mean = s1 / s0;
    let mut s2 = 0.0;
    for (&x, &l) in xs.iter().zip(&ls) {
        let d = x - mean;
        s2 += (l - max).exp() * d * d;
    }
    let out = LogMoments { log_mass: max + s0.ln(), mean, var: s2 / s0 };
    if !(out.log_mass.is_finite() && out.mean.is_finite() && out.var.is_finite()) {
        return Err(Error::Numerical(format!("non-finite quadrature result {out:?}")));
    }
    Ok(out)
}

/// Brent minimisation of `f` on `[a, b]`; returns `(x_min, f(x_min))`.
pub fn brent_minimize(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + CGOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs().max(1.0) * 1e-3 + tol;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Brent root finder on a sign-changing bracket.
pub fn brent_root(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_iter: usize) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Numerical(format!("root not bracketed in [{a}, {b}]")));
    }
    let (mut c, mut fc) = (b, fb);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Err(Error::Numerical("brent_root did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(20);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let x6: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(6)).sum();
        assert!((x6 - 2.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn log_integrate_standard_normal() {
        let m = log_integrate(|x| -0.5 * x * x, -12.0, 12.0, 48).unwrap();
        let expect = (2.0 * std::f64::consts::PI).sqrt().ln();
        assert!((m.log_mass - expect).abs() < 1e-12);
        assert!(m.mean.abs() < 1e-13);
        assert!((m.var - 1.0).abs() < 1e-11);
    }

    #[test]
    fn log_integrate_survives_huge_exponents() {
        let m = log_integrate(|x| 5000.0 - 0.5 * x * x, -12.0, 12.0, 48).unwrap();
        assert!((m.log_mass - 5000.0 - (2.0 * std::f64::consts::PI).sqrt().ln()).abs() < 1e-9);
    }

    #[test]
    fn log_sum_exp_edge_cases() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn accumulator_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin() * 50.0).collect();
        let mut seq = LogSumAcc::default();
        xs.iter().for_each(|&x| seq.push(x));
        let (a, b) = xs.split_at(37);
        let mut left = LogSumAcc::default();
        a.iter().for_each(|&x| left.push(x));
        let mut right = LogSumAcc::default();
        b.iter().for_each(|&x| right.push(x));
        let merged = left.merge(right);
        assert!((merged.log_sum() - seq.log_sum()).abs() < 1e-12);
        assert!((merged.log_sum() - log_sum_exp(&xs)).abs() < 1e-12);
        assert!((merged.ess() - seq.ess()).abs() < 1e-9);
    }

    #[test]
    fn brent_solvers() {
        let (x, fx) = brent_minimize(|x| (x - 1.3).powi(2) + 2.0, -5.0, 5.0, 1e-12, 200);
        assert!((x - 1.3).abs() < 1e-8);
        assert!((fx - 2.0).abs() < 1e-14);
        let r = brent_root(|x| x * x * x - 2.0, 0.0, 3.0, 1e-14, 200).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-12);
        assert!(brent_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 50).is_err());
    }
}

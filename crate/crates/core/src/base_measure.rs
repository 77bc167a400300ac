//! Edge-weight base distributions: exact samplers, (truncated) log moment
//! generating functions and the moments of the exponentially tilted law.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Discrete, DiscreteCDF, Poisson as PoissonDist};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::numeric::{log_integrate, log_sum_exp, LogMoments};

/// Γ(1/4).
const GAMMA_QUARTER: f64 = 3.625_609_908_221_908_3;

/// Window half-depth (in nats) kept around the mode of a tilted density.
/// `e^-60` is far below the 1e-18 relative truncation target.
const WINDOW_NATS: f64 = 60.0;
const PANELS: usize = 48;
const REJECTION_RETRY_CAP: usize = 10_000;

/// Distribution of a single edge weight under independence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaseMeasure {
    Gaussian { mean: f64, variance: f64 },
    /// Density `C₄ exp(-x⁴)` on the real line.
    Quartic,
    Bernoulli { p: f64 },
    Poisson { rate: f64 },
}

/// Closure of the convex hull of the support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    WholeLine,
    UnitInterval,
    NonNegativeIntegers,
}

/// Log-MGF and first two moments of the law tilted by `e^{θ x}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tilt {
    pub log_mgf: f64,
    pub mean: f64,
    pub var: f64,
}

impl From<LogMoments> for Tilt {
    fn from(m: LogMoments) -> Self {
        Tilt { log_mgf: m.log_mass, mean: m.mean, var: m.var }
    }
}

impl BaseMeasure {
    pub fn standard_gaussian() -> Self {
        BaseMeasure::Gaussian { mean: 0.0, variance: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BaseMeasure::Gaussian { mean, variance } => {
                if !mean.is_finite() || !(variance > 0.0 && variance.is_finite()) {
                    return Err(Error::Config(format!(
                        "gaussian needs finite mean and positive variance, got ({mean}, {variance})"
                    )));
                }
            }
            BaseMeasure::Quartic => {}
            BaseMeasure::Bernoulli { p } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::Config(format!("bernoulli p must lie in (0, 1), got {p}")));
                }
            }
            BaseMeasure::Poisson { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(Error::Config(format!("poisson rate must be positive, got {rate}")));
                }
            }
        }
        Ok(())
    }

    pub fn support(&self) -> Support {
        match self {
            BaseMeasure::Gaussian { .. } | BaseMeasure::Quartic => Support::WholeLine,
            BaseMeasure::Bernoulli { .. } => Support::UnitInterval,
            BaseMeasure::Poisson { .. } => Support::NonNegativeIntegers,
        }
    }

    /// Closed convex hull of the support as `(lo, hi)`, optionally clipped to
    /// the range `[-l, l]` of the truncation map.
    pub fn hull(&self, truncation: Option<f64>) -> (f64, f64) {
        let (lo, hi) = match self.support() {
            Support::WholeLine => (f64::NEG_INFINITY, f64::INFINITY),
            Support::UnitInterval => (0.0, 1.0),
            Support::NonNegativeIntegers => (0.0, f64::INFINITY),
        };
        match truncation {
            Some(l) => (lo.max(-l).min(l), hi.min(l).max(-l)),
            None => (lo, hi),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, BaseMeasure::Bernoulli { .. } | BaseMeasure::Poisson { .. })
    }

    /// True when every draw is non-negative.
    pub fn is_nonnegative(&self) -> bool {
        matches!(self, BaseMeasure::Bernoulli { .. } | BaseMeasure::Poisson { .. })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            BaseMeasure::Gaussian { mean, .. } => mean,
            BaseMeasure::Quartic => 0.0,
            BaseMeasure::Bernoulli { p } => p,
            BaseMeasure::Poisson { rate } => rate,
        }
    }

    /// Normalising constant of the density; `C₄ = 2 / Γ(1/4)` for the quartic
    /// law and 1 otherwise.
    pub fn normalizer(&self) -> f64 {
        match self {
            BaseMeasure::Quartic => 2.0 / GAMMA_QUARTER,
            _ => 1.0,
        }
    }

    /// Log density (continuous) or log mass (discrete); `-inf` off support.
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            BaseMeasure::Gaussian { mean, variance } => {
                let d = x - mean;
                -0.5 * d * d / variance - 0.5 * (2.0 * std::f64::consts::PI * variance).ln()
            }
            BaseMeasure::Quartic => self.normalizer().ln() - x.powi(4),
            BaseMeasure::Bernoulli { p } => {
                if x == 0.0 {
                    (1.0 - p).ln()
                } else if x == 1.0 {
                    p.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            BaseMeasure::Poisson { rate } => {
                if x >= 0.0 && x.fract() == 0.0 && x < u64::MAX as f64 {
                    PoissonDist::new(rate)
                        .map(|d| d.ln_pmf(x as u64))
                        .unwrap_or(f64::NEG_INFINITY)
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// `ln M(θ)`, or `ln M_l(θ) = ln ∫ e^{θ f_l(x)} μ(dx)` when a truncation
    /// level is supplied.
    pub fn log_mgf(&self, theta: f64, truncation: Option<f64>) -> Result<f64> {
        Ok(self.tilt(theta, truncation)?.log_mgf)
    }

    /// Log-MGF together with mean and variance of the tilted (and optionally
    /// truncated) variable.
    pub fn tilt(&self, theta: f64, truncation: Option<f64>) -> Result<Tilt> {
        if !theta.is_finite() {
            return Err(Error::Numerical(format!("non-finite tilt {theta}")));
        }
        if let Some(l) = truncation {
            if !(l > 0.0) {
                return Err(Error::Argument(format!("truncation level must be positive, got {l}")));
            }
        }
        let out = match (*self, truncation) {
            (BaseMeasure::Gaussian { mean, variance }, None) => Tilt {
                log_mgf: theta * mean + 0.5 * variance * theta * theta,
                mean: mean + variance * theta,
                var: variance,
            },
            (BaseMeasure::Poisson { rate }, None) => {
                let et = theta.exp();
                Tilt { log_mgf: rate * (et - 1.0), mean: rate * et, var: rate * et }
            }
            (BaseMeasure::Bernoulli { p }, l) => {
                let top = l.map_or(1.0, |l| l.min(1.0));
                atoms_tilt(&[(0.0, (1.0 - p).ln()), (top, p.ln())], theta)
            }
            (BaseMeasure::Poisson { rate }, Some(l)) => poisson_truncated_tilt(rate, l, theta)?,
            (BaseMeasure::Quartic, None) => {
                let mode = (theta / 4.0).cbrt();
                concave_tilt(|x| self.log_density(x), theta, mode, f64::NEG_INFINITY, f64::INFINITY)?
                    .into()
            }
            (BaseMeasure::Gaussian { mean, variance }, Some(l)) => {
                self.truncated_continuous_tilt(theta, l, mean + variance * theta)?
            }
            (BaseMeasure::Quartic, Some(l)) => {
                self.truncated_continuous_tilt(theta, l, (theta / 4.0).cbrt())?
            }
        };
        if !(out.log_mgf.is_finite() && out.mean.is_finite() && out.var.is_finite()) {
            return Err(Error::Numerical(format!(
                "log-mgf evaluation failed for {self:?} at theta = {theta}: {out:?}"
            )));
        }
        Ok(out)
    }

    /// Continuous law pushed through `f_l`: point masses at `±l` carrying the
    /// tails plus the tilted density on `[-l, l]`.
    fn truncated_continuous_tilt(&self, theta: f64, l: f64, mode: f64) -> Result<Tilt> {
        let middle = concave_tilt(|x| self.log_density(x), theta, mode, -l, l)?;
        let (lower, upper) = self.log_tails(l)?;
        let parts = [
            (lower - theta * l, -l, 0.0),
            (middle.log_mass, middle.mean, middle.var),
            (upper + theta * l, l, 0.0),
        ];
        Ok(mix(&parts))
    }

    /// `(ln μ(-∞, -l), ln μ(l, ∞))` for continuous measures.
    fn log_tails(&self, l: f64) -> Result<(f64, f64)> {
        match *self {
            BaseMeasure::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                let upper = 0.5 * erfc((l - mean) / (sd * std::f64::consts::SQRT_2));
                let lower = 0.5 * erfc((l + mean) / (sd * std::f64::consts::SQRT_2));
                Ok((lower.ln(), upper.ln()))
            }
            BaseMeasure::Quartic => {
                let upper = concave_tilt(|x| self.log_density(x), 0.0, 0.0, l, f64::INFINITY)?;
                Ok((upper.log_mass, upper.log_mass))
            }
            _ => Err(Error::Argument("tails requested for a discrete measure".into())),
        }
    }

    /// Log mass sitting exactly at a hull endpoint `x`, used for the rate
    /// value at the boundary of the support. `None` when `x` carries no atom.
    pub fn boundary_log_mass(&self, x: f64, truncation: Option<f64>) -> Option<f64> {
        let (lo, hi) = self.hull(truncation);
        if x != lo && x != hi {
            return None;
        }
        match (*self, truncation) {
            (BaseMeasure::Bernoulli { p }, _) => {
                if x == 0.0 {
                    Some((1.0 - p).ln())
                } else {
                    Some(p.ln())
                }
            }
            (BaseMeasure::Poisson { rate }, Some(l)) if x == l && l > 0.0 => {
                let d = PoissonDist::new(rate).ok()?;
                let k = l.ceil() as u64;
                // P(X >= l)
                let mass = if k == 0 { 1.0 } else { d.sf(k - 1) };
                Some(mass.ln())
            }
            (BaseMeasure::Poisson { rate }, _) if x == 0.0 => Some(-rate),
            (BaseMeasure::Gaussian { .. } | BaseMeasure::Quartic, Some(l)) if x.abs() == l => {
                let (lower, upper) = self.log_tails(l).ok()?;
                Some(if x > 0.0 { upper } else { lower })
            }
            _ => None,
        }
    }

    /// `count` i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<f64>> {
        if count == 0 {
            return Err(Error::Argument("sample count must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sampler = Sampler::new(*self)?;
        (0..count).map(|_| sampler.draw(&mut rng)).collect()
    }
}

/// Reusable per-thread sampler for a base measure.
#[derive(Debug, Clone)]
pub struct Sampler {
    measure: BaseMeasure,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Normal(Normal<f64>),
    Quartic,
    Bernoulli(Bernoulli),
    Poisson(Poisson<f64>),
}

/// Envelope `N(0, 1/2)` for quartic rejection sampling; `σ⁴ = 1/4` maximises
/// the acceptance rate (≈ 0.80).
const QUARTIC_ENVELOPE_SD: f64 = std::f64::consts::FRAC_1_SQRT_2;

impl Sampler {
    pub fn new(measure: BaseMeasure) -> Result<Self> {
        measure.validate()?;
        let kind = match measure {
            BaseMeasure::Gaussian { mean, variance } => SamplerKind::Normal(
                Normal::new(mean, variance.sqrt()).map_err(|e| Error::Config(e.to_string()))?,
            ),
            BaseMeasure::Quartic => SamplerKind::Quartic,
            BaseMeasure::Bernoulli { p } => {
                SamplerKind::Bernoulli(Bernoulli::new(p).map_err(|e| Error::Config(e.to_string()))?)
            }
            BaseMeasure::Poisson { rate } => {
                SamplerKind::Poisson(Poisson::new(rate).map_err(|e| Error::Config(e.to_string()))?)
            }
        };
        Ok(Self { measure, kind })
    }

    pub fn measure(&self) -> BaseMeasure {
        self.measure
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        match &self.kind {
            SamplerKind::Normal(d) => Ok(d.sample(rng)),
            SamplerKind::Bernoulli(d) => Ok(if d.sample(rng) { 1.0 } else { 0.0 }),
            SamplerKind::Poisson(d) => Ok(d.sample(rng)),
            SamplerKind::Quartic => {
                let s2 = QUARTIC_ENVELOPE_SD * QUARTIC_ENVELOPE_SD;
                let log_bound = 1.0 / (16.0 * s2 * s2);
                for _ in 0..REJECTION_RETRY_CAP {
                    let z: f64 = rng.sample(StandardNormal);
                    let x = z * QUARTIC_ENVELOPE_SD;
                    let log_ratio = -x.powi(4) + x * x / (2.0 * s2) - log_bound;
                    let u: f64 = rng.random();
                    if u.ln() < log_ratio {
                        return Ok(x);
                    }
                }
                Err(Error::Numerical("quartic rejection sampler exceeded retry cap".into()))
            }
        }
    }
}

/// Tilted moments of a finite set of `(value, ln mass)` atoms.
fn atoms_tilt(atoms: &[(f64, f64)], theta: f64) -> Tilt {
    let parts: Vec<(f64, f64, f64)> =
        atoms.iter().map(|&(v, lm)| (lm + theta * v, v, 0.0)).collect();
    mix(&parts)
}

/// Combine `(ln mass, mean, var)` components into the moments of the mixture.
fn mix(parts: &[(f64, f64, f64)]) -> Tilt {
    let logs: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let total = log_sum_exp(&logs);
    let mut mean = 0.0;
    let mut second = 0.0;
    for &(lm, m, v) in parts {
        if lm == f64::NEG_INFINITY {
            continue;
        }
        let w = (lm - total).exp();
        mean += w * m;
        second += w * (v + m * m);
    }
    let var = (second - mean * mean).max(0.0);
    Tilt { log_mgf: total, mean, var }
}

fn poisson_truncated_tilt(rate: f64, l: f64, theta: f64) -> Result<Tilt> {
    let dist = PoissonDist::new(rate).map_err(|e| Error::Config(e.to_string()))?;
    let kmax = l.floor();
    if kmax > 1e6 {
        return Err(Error::Numerical(format!("poisson truncation level {l} too large")));
    }
    let kmax = kmax as u64;
    let mut parts = Vec::with_capacity(kmax as usize + 2);
    for k in 0..=kmax {
        parts.push((dist.ln_pmf(k) + theta * k as f64, k as f64, 0.0));
    }
    let tail = dist.sf(kmax);
    if tail > 0.0 {
        parts.push((tail.ln() + theta * l, l, 0.0));
    }
    Ok(mix(&parts))
}

/// `ln ∫_lo^hi exp(θx + logpdf(x)) dx` and tilted moments for a concave
/// `logpdf`. `mode` is the unconstrained maximiser of the tilted exponent; the
/// integration window is grown around the clamped mode until the exponent has
/// dropped by [`WINDOW_NATS`] on each side (or the domain ends).
pub(crate) fn concave_tilt(
    logpdf: impl Fn(f64) -> f64,
    theta: f64,
    mode: f64,
    lo: f64,
    hi: f64,
) -> Result<LogMoments> {
    let f = |x: f64| theta * x + logpdf(x);
    let x0 = mode.clamp(lo, hi);
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(Error::Numerical(format!("tilted log density not finite at {x0}")));
    }
    let reach = |dir: f64, limit: f64| -> f64 {
        let room = (limit - x0).abs();
        if room == 0.0 {
            return x0;
        }
        let drop = |d: f64| f0 - f(x0 + dir * d);
        let mut d = 0.25f64.min(room);
        if drop(d) > WINDOW_NATS {
            while d > 1e-12 && drop(d) > WINDOW_NATS {
                d *= 0.5;
            }
            d *= 2.0;
        } else {
            while d < room && drop(d) <= WINDOW_NATS {
                d *= 2.0;
            }
        }
        x0 + dir * d.min(room)
    };
    let a = reach(-1.0, lo);
    let b = reach(1.0, hi);
    if b <= a {
        return Ok(LogMoments { log_mass: f64::NEG_INFINITY, mean: x0, var: 0.0 });
    }
    log_integrate(f, a, b, PANELS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;

    #[test]
    fn quartic_normalizer_matches_gamma_function() {
        let c4 = BaseMeasure::Quartic.normalizer();
        assert!((c4 - 2.0 / gamma(0.25)).abs() < 1e-14);
        let mass = BaseMeasure::Quartic.log_mgf(0.0, None).unwrap();
        assert!(mass.abs() < 1e-10, "C4 ∫ exp(-x⁴) = {}", mass.exp());
    }

    #[test]
    fn log_mgf_examples() {
        let g = BaseMeasure::standard_gaussian();
        assert_eq!(g.log_mgf(0.0, None).unwrap(), 0.0);
        assert!((g.log_mgf(2.0, None).unwrap() - 2.0).abs() < 1e-15);
        let b = BaseMeasure::Bernoulli { p: 0.5 };
        let expect = ((1.0 + 1f64.exp()) / 2.0).ln();
        assert!((b.log_mgf(1.0, None).unwrap() - expect).abs() < 1e-15);
        assert!(BaseMeasure::Quartic.log_mgf(0.0, None).unwrap().abs() < 1e-10);
    }

    #[test]
    fn gaussian_log_mgf_is_exact_quadratic() {
        let g = BaseMeasure::Gaussian { mean: 0.7, variance: 2.5 };
        for &t in &[-3.0, -0.5, 0.0, 1.25, 4.0] {
            let lm = g.log_mgf(t, None).unwrap();
            assert_eq!(lm, t * 0.7 + 2.5 * t * t / 2.0);
        }
    }

    #[test]
    fn truncated_gaussian_agrees_with_quadrature_free_forms() {
        let g = BaseMeasure::standard_gaussian();
        // far tails barely matter at l = 10
        for &t in &[-3.0, 0.0, 2.0] {
            let full = g.log_mgf(t, None).unwrap();
            let trunc = g.log_mgf(t, Some(10.0)).unwrap();
            assert!((full - trunc).abs() < 1e-9, "t={t}: {full} vs {trunc}");
        }
        // at l = 0.5 nearly everything is clipped
        let t = 1.0;
        let l = 0.5f64;
        let tail = 0.5 * erfc(l / std::f64::consts::SQRT_2);
        let mid = g.tilt(t, Some(l)).unwrap();
        let inner = (0.5f64 * t * t).exp()
            * 0.5
            * (erfc((-l - t) / std::f64::consts::SQRT_2) - erfc((l - t) / std::f64::consts::SQRT_2));
        let expect = (tail * (-t * l).exp() + inner + tail * (t * l).exp()).ln();
        assert!((mid.log_mgf - expect).abs() < 1e-10, "{} vs {expect}", mid.log_mgf);
    }

    #[test]
    fn quartic_tilt_moments_match_finite_differences() {
        let q = BaseMeasure::Quartic;
        for &t in &[-5.0, -0.3, 0.0, 1.0, 30.0] {
            let h = 1e-4;
            let up = q.log_mgf(t + h, None).unwrap();
            let dn = q.log_mgf(t - h, None).unwrap();
            let mid = q.tilt(t, None).unwrap();
            let d1 = (up - dn) / (2.0 * h);
            let d2 = (up - 2.0 * mid.log_mgf + dn) / (h * h);
            assert!((d1 - mid.mean).abs() < 1e-7, "t={t}");
            assert!((d2 - mid.var).abs() < 1e-4 * mid.var.max(1.0), "t={t}");
        }
    }

    #[test]
    fn poisson_truncation_keeps_total_mass() {
        let p = BaseMeasure::Poisson { rate: 2.0 };
        assert!(p.log_mgf(0.0, Some(3.0)).unwrap().abs() < 1e-14);
        let full = p.log_mgf(0.4, None).unwrap();
        let trunc = p.log_mgf(0.4, Some(60.0)).unwrap();
        assert!((full - trunc).abs() < 1e-12);
    }

    #[test]
    fn bad_truncation_is_an_argument_error() {
        let err = BaseMeasure::Quartic.log_mgf(1.0, Some(0.0)).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn samplers_respect_support_and_are_deterministic() {
        let b = BaseMeasure::Bernoulli { p: 0.3 };
        let xs = b.sample(7, 1000).unwrap();
        assert!(xs.iter().all(|&x| x == 0.0 || x == 1.0));
        let p = BaseMeasure::Poisson { rate: 1.5 };
        let ys = p.sample(7, 1000).unwrap();
        assert!(ys.iter().all(|&y| y >= 0.0 && y.fract() == 0.0));
        assert_eq!(ys, p.sample(7, 1000).unwrap());
        assert!(BaseMeasure::Quartic.sample(1, 0).is_err());
    }

    #[test]
    fn sample_means_sit_in_clt_bands() {
        let n = 1_000_000;
        let g = BaseMeasure::standard_gaussian().sample(11, n).unwrap();
        let mg = g.iter().sum::<f64>() / n as f64;
        assert!(mg.abs() < 4.0 / (n as f64).sqrt());
        let b = BaseMeasure::Bernoulli { p: 0.5 }.sample(12, n).unwrap();
        let mb = b.iter().sum::<f64>() / n as f64;
        assert!((0.498..=0.502).contains(&mb));
        let q = BaseMeasure::Quartic.sample(13, n).unwrap();
        let mq = q.iter().sum::<f64>() / n as f64;
        let sd = BaseMeasure::Quartic.tilt(0.0, None).unwrap().var.sqrt();
        assert!(mq.abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn config_json_shapes() {
        let m: BaseMeasure = serde_json::from_str(r#"{"kind": "gaussian", "mean": 0.0, "variance": 1.0}"#).unwrap();
        assert_eq!(m, BaseMeasure::standard_gaussian());
        let q: BaseMeasure = serde_json::from_str(r#"{"kind": "quartic"}"#).unwrap();
        assert_eq!(q, BaseMeasure::Quartic);
        let b: BaseMeasure = serde_json::from_str(r#"{"kind": "bernoulli", "p": 0.5}"#).unwrap();
        assert_eq!(b, BaseMeasure::Bernoulli { p: 0.5 });
        let p: BaseMeasure = serde_json::from_str(r#"{"kind": "poisson", "rate": 1.0}"#).unwrap();
        assert_eq!(p, BaseMeasure::Poisson { rate: 1.0 });
    }
}

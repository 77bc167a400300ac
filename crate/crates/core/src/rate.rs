//! Cramér rate functions `h(x) = sup_θ [θx − ln M(θ)]`, evaluated either in
//! closed form or by a numeric Legendre transform, plus a memoised table with
//! cubic Hermite interpolation for repeated evaluation.

use serde::{Deserialize, Serialize};

use crate::base_measure::BaseMeasure;
use crate::error::{Error, Result};
use crate::graph::StepKernel;
use crate::numeric::brent_minimize;

const THETA_LIMIT: f64 = 1e6;
const DERIV_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    Analytic,
    NumericLegendre,
}

/// Value of `h` with its first two derivatives. At an optimum, `slope` is the
/// maximising `θ` and `curvature` is the reciprocal tilted variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

impl RatePoint {
    fn infinite() -> Self {
        RatePoint { value: f64::INFINITY, slope: f64::NAN, curvature: f64::NAN }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFunction {
    source: BaseMeasure,
    mode: RateMode,
    truncation: Option<f64>,
}

impl RateFunction {
    /// Closed form when one exists, numeric Legendre otherwise.
    pub fn for_measure(source: BaseMeasure) -> Self {
        let mode = if matches!(source, BaseMeasure::Quartic) {
            RateMode::NumericLegendre
        } else {
            RateMode::Analytic
        };
        RateFunction { source, mode, truncation: None }
    }

    pub fn new(source: BaseMeasure, mode: RateMode, truncation: Option<f64>) -> Result<Self> {
        source.validate()?;
        if let Some(l) = truncation {
            if !(l > 0.0) {
                return Err(Error::Argument(format!("truncation level must be positive, got {l}")));
            }
        }
        if mode == RateMode::Analytic && (truncation.is_some() || matches!(source, BaseMeasure::Quartic)) {
            return Err(Error::Argument(
                "no closed-form rate for quartic or truncated measures; use numeric mode".into(),
            ));
        }
        Ok(RateFunction { source, mode, truncation })
    }

    pub fn numeric(source: BaseMeasure) -> Self {
        RateFunction { source, mode: RateMode::NumericLegendre, truncation: None }
    }

    pub fn truncated(source: BaseMeasure, l: f64) -> Result<Self> {
        Self::new(source, RateMode::NumericLegendre, Some(l))
    }

    pub fn source(&self) -> BaseMeasure {
        self.source
    }

    pub fn mode(&self) -> RateMode {
        self.mode
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    /// `h(x)`; `+inf` outside the closed hull of the support.
    pub fn rate(&self, x: f64) -> Result<f64> {
        Ok(self.eval(x)?.value)
    }

    /// `h(x)` with derivatives.
    pub fn eval(&self, x: f64) -> Result<RatePoint> {
        if x.is_nan() {
            return Err(Error::Argument("rate evaluated at NaN".into()));
        }
        let (lo, hi) = self.source.hull(self.truncation);
        if x < lo || x > hi {
            return Ok(RatePoint::infinite());
        }
        if x == lo || x == hi {
            if let Some(lm) = self.source.boundary_log_mass(x, self.truncation) {
                return Ok(RatePoint { value: -lm, slope: f64::NAN, curvature: f64::INFINITY });
            }
        }
        match self.mode {
            RateMode::Analytic => Ok(analytic(self.source, x)),
            RateMode::NumericLegendre => self.legendre(x),
        }
    }

    fn legendre(&self, x: f64) -> Result<RatePoint> {
        let tilt = |t: f64| self.source.tilt(t, self.truncation);
        let mut lo = -1.0;
        let mut hi = 1.0;
        while tilt(lo)?.mean > x {
            hi = lo;
            lo *= 2.0;
            if lo < -THETA_LIMIT {
                return Err(Error::UnboundedRate { x });
            }
        }
        while tilt(hi)?.mean < x {
            lo = hi;
            hi *= 2.0;
            if hi > THETA_LIMIT {
                return Err(Error::UnboundedRate { x });
            }
        }
        let mut theta = if lo < 0.0 && hi > 0.0 { 0.0 } else { 0.5 * (lo + hi) };
        for _ in 0..MAX_NEWTON {
            let t = tilt(theta)?;
            let resid = x - t.mean;
            if resid.abs() < DERIV_TOL {
                return Ok(RatePoint {
                    value: theta * x - t.log_mgf,
                    slope: theta,
                    curvature: 1.0 / t.var,
                });
            }
            if resid > 0.0 {
                lo = theta;
            } else {
                hi = theta;
            }
            let step = theta + resid / t.var;
            theta = if t.var > 0.0 && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 * theta.abs().max(1.0) {
                break;
            }
        }
        // Newton stalled; maximise the concave objective directly.
        let neg = |t: f64| match tilt(t) {
            Ok(v) => v.log_mgf - t * x,
            Err(_) => f64::INFINITY,
        };
        let (theta, fmin) = brent_minimize(neg, lo, hi, 1e-13, 500);
        let t = tilt(theta)?;
        Ok(RatePoint { value: -fmin, slope: theta, curvature: 1.0 / t.var })
    }

    /// `sup_x (θx − h(x))`, which recovers `ln M(θ)` by duality. Grid search
    /// over a window around the tilted mean followed by Brent refinement.
    pub fn conjugate(&self, theta: f64) -> Result<f64> {
        let centre = self.source.tilt(theta, self.truncation)?;
        let (lo, hi) = self.source.hull(self.truncation);
        let spread = 12.0 * centre.var.sqrt().max(1e-3);
        let a = (centre.mean - spread).max(lo);
        let b = (centre.mean + spread).min(hi);
        let obj = |x: f64| match self.rate(x) {
            Ok(h) if h.is_finite() => theta * x - h,
            _ => f64::NEG_INFINITY,
        };
        let steps = 400;
        let mut best = (a, obj(a));
        for i in 1..=steps {
            let x = a + (b - a) * i as f64 / steps as f64;
            let v = obj(x);
            if v > best.1 {
                best = (x, v);
            }
        }
        let w = (b - a) / steps as f64;
        let (x, negv) = brent_minimize(|x| -obj(x), (best.0 - w).max(a), (best.0 + w).min(b), 1e-12, 300);
        Ok((-negv).max(best.1).max(obj(x)))
    }
}

fn analytic(m: BaseMeasure, x: f64) -> RatePoint {
    match m {
        BaseMeasure::Gaussian { mean, variance } => {
            let d = x - mean;
            RatePoint { value: d * d / (2.0 * variance), slope: d / variance, curvature: 1.0 / variance }
        }
        BaseMeasure::Bernoulli { p } => RatePoint {
            value: xlogy(x, x / p) + xlogy(1.0 - x, (1.0 - x) / (1.0 - p)),
            slope: (x / (1.0 - x)).ln() - (p / (1.0 - p)).ln(),
            curvature: 1.0 / (x * (1.0 - x)),
        },
        BaseMeasure::Poisson { rate } => RatePoint {
            value: xlogy(x, x / rate) - x + rate,
            slope: (x / rate).ln(),
            curvature: 1.0 / x,
        },
        BaseMeasure::Quartic => unreachable!("quartic rate is always numeric"),
    }
}

/// `x ln y` with `0 ln 0 = 0`.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// `I(u) = h(u) / 2`, the rate of the constant kernel `u`.
pub fn kernel_rate(h: &RateFunction, u: f64) -> Result<f64> {
    Ok(0.5 * h.rate(u)?)
}

/// `I(k) = ½ ∬ h(k)`: the cell average of `h` over a step kernel, halved.
pub fn step_kernel_rate(h: &RateFunction, k: &StepKernel) -> Result<f64> {
    let n = k.resolution();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += h.rate(k.get(i, j))?;
        }
    }
    Ok(0.5 * acc / (n * n) as f64)
}

/// Memoised rate function on a uniform grid with cubic Hermite interpolation
/// (nodes carry exact values and slopes). Queries outside the grid fall back
/// to direct evaluation.
#[derive(Debug, Clone)]
pub struct TabulatedRate {
    inner: RateFunction,
    lo: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

pub const DEFAULT_TABLE_STEP: f64 = 1e-3;

impl TabulatedRate {
    /// Tabulate on `[lo, hi]` (clipped to the open support hull) with the
    /// given step; the step is enlarged if the table would exceed 400k nodes.
    pub fn build(inner: RateFunction, lo: f64, hi: f64, step: f64) -> Result<Self> {
        let (slo, shi) = inner.source().hull(inner.truncation());
        let lo = lo.max(slo);
        let hi = hi.min(shi);
        if !(hi > lo) || !(step > 0.0) {
            return Err(Error::Argument(format!("bad table range [{lo}, {hi}] step {step}")));
        }
        let mut count = ((hi - lo) / step).ceil() as usize;
        let step = if count > 400_000 {
            count = 400_000;
            (hi - lo) / count as f64
        } else {
            (hi - lo) / count.max(1) as f64
        };
        let mut values = Vec::with_capacity(count + 1);
        let mut slopes = Vec::with_capacity(count + 1);
        for i in 0..=count {
            let p = inner.eval(lo + step * i as f64)?;
            if !p.value.is_finite() || !p.slope.is_finite() {
                return Err(Error::Argument(
                    "tabulation range must lie strictly inside the support".into(),
                ));
            }
            values.push(p.value);
            slopes.push(p.slope);
        }
        Ok(Self { inner, lo, step, values, slopes })
    }

    pub fn inner(&self) -> &RateFunction {
        &self.inner
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.lo + self.step * (self.values.len() - 1) as f64)
    }

    /// Interpolated `(h(x), h'(x))`.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            let p = self.inner.eval(x)?;
            return Ok((p.value, p.slope));
        }
        let pos = (x - lo) / self.step;
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let t = pos - i as f64;
        let h = self.step;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let deriv = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        Ok((value, deriv))
    }
}

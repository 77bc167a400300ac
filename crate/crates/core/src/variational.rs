//! Scalar variational problem `sup_u g(u)`, `g(u) = Σ βᵢ u^{e(Hᵢ)} − h(u)/2`,
//! its maximiser set, parameter scans for jumps in the maximiser, and the
//! quartic tail-bound diagnostic.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_measure::BaseMeasure;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numeric::{brent_minimize, log_add_exp, log_integrate};
use crate::rate::{RateFunction, RateMode, TabulatedRate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    /// Every motif is a star (edges included); no sign restriction.
    JStar,
    /// Non-edge coefficients non-negative, and a non-negative base or even
    /// edge counts.
    SpecGergm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub scan_points: usize,
    /// Maxima whose values differ by less than this are co-maximisers.
    pub value_gap: f64,
    pub u_tol: f64,
    pub bracket_start: f64,
    pub bracket_cap: f64,
    /// Required drop of `g` at the bracket edge below the interior best.
    pub coercive_margin: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            scan_points: 4001,
            value_gap: 1e-6,
            u_tol: 1e-10,
            bracket_start: 10.0,
            bracket_cap: 1e4,
            coercive_margin: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMax {
    pub u: f64,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalSolution {
    pub psi: f64,
    /// The maximiser set `K`, sorted.
    pub maximizers: Vec<f64>,
    pub g_values: Vec<f64>,
    /// Every refined local maximum, including non-global ones.
    pub local_maxima: Vec<LocalMax>,
    pub coercive: bool,
    pub degenerate: bool,
    pub path: SolverPath,
    pub bracket: (f64, f64),
}

impl VariationalSolution {
    /// Maximiser with the largest `g`.
    pub fn u_star(&self) -> f64 {
        let i = (0..self.maximizers.len())
            .max_by(|&a, &b| self.g_values[a].total_cmp(&self.g_values[b]))
            .unwrap_or(0);
        self.maximizers[i]
    }
}

/// Which scalar reduction applies to `spec`.
pub fn check_path(spec: &ModelSpec) -> Result<SolverPath> {
    spec.validate()?;
    for (i, t) in spec.terms.iter().enumerate() {
        if !t.motif.is_edge_unweighted() || !t.motif.is_node_unweighted() {
            return Err(Error::Admissibility(format!(
                "motif {i} carries edge or node weights; the scalar reduction needs plain motifs"
            )));
        }
    }
    if spec.terms.iter().all(|t| t.motif.star_leaves().is_some()) {
        return Ok(SolverPath::JStar);
    }
    let others: Vec<_> = spec.terms.iter().enumerate().filter(|(_, t)| t.motif.edge_count() != 1).collect();
    if let Some((i, t)) = others.iter().find(|(_, t)| t.beta < 0.0) {
        return Err(Error::Admissibility(format!(
            "motif {i} has negative coefficient {} and is not a star; no scalar reduction applies",
            t.beta
        )));
    }
    let even = others.iter().all(|(_, t)| t.motif.edge_count() % 2 == 0);
    if !(spec.base.is_nonnegative() || even) {
        return Err(Error::Admissibility(
            "base measure takes negative values and some non-edge motif has an odd edge count".into(),
        ));
    }
    Ok(SolverPath::SpecGergm)
}

/// Rate table shared across solves with the same base measure.
pub fn rate_table(base: BaseMeasure) -> Result<Option<Arc<TabulatedRate>>> {
    let rate = RateFunction::for_measure(base);
    if rate.mode() != RateMode::NumericLegendre {
        return Ok(None);
    }
    Ok(Some(Arc::new(TabulatedRate::build(rate, -8.0, 8.0, 1e-2)?)))
}

/// `g(u)` for a validated spec.
#[derive(Debug, Clone)]
pub struct Objective {
    poly: Vec<(f64, i32)>,
    rate: RateFunction,
    table: Option<Arc<TabulatedRate>>,
    hull: (f64, f64),
    path: SolverPath,
}

impl Objective {
    pub fn new(spec: &ModelSpec, table: Option<Arc<TabulatedRate>>) -> Result<Self> {
        let path = check_path(spec)?;
        let rate = RateFunction::for_measure(spec.base);
        let poly = spec.terms.iter().map(|t| (t.beta, t.motif.edge_count() as i32)).collect();
        let table = table.filter(|t| t.inner().source() == spec.base);
        Ok(Objective { poly, rate, table, hull: spec.base.hull(None), path })
    }

    fn poly(&self, u: f64) -> (f64, f64, f64) {
        let (mut p, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for &(b, e) in &self.poly {
            p += b * u.powi(e);
            if e >= 1 {
                d1 += b * e as f64 * u.powi(e - 1);
            }
            if e >= 2 {
                d2 += b * (e * (e - 1)) as f64 * u.powi(e - 2);
            }
        }
        (p, d1, d2)
    }

    /// Highest polynomial degree.
    pub fn degree(&self) -> i32 {
        self.poly.iter().filter(|t| t.0 != 0.0).map(|t| t.1).max().unwrap_or(0)
    }

    pub fn value(&self, u: f64) -> Result<f64> {
        let h = self.rate.rate(u)?;
        if h.is_infinite() {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.poly(u).0 - 0.5 * h)
    }

    fn scan_value(&self, u: f64) -> Result<f64> {
        match &self.table {
            Some(t) => {
                let (lo, hi) = t.range();
                if u >= lo && u <= hi {
                    Ok(self.poly(u).0 - 0.5 * t.eval(u)?.0)
                } else {
                    self.value(u)
                }
            }
            None => self.value(u),
        }
    }

    /// `(g'(u), g''(u))`; NaN at support endpoints.
    pub fn derivatives(&self, u: f64) -> Result<(f64, f64)> {
        let p = self.rate.eval(u)?;
        let (_, d1, d2) = self.poly(u);
        Ok((d1 - 0.5 * p.slope, d2 - 0.5 * p.curvature))
    }
}

fn scan(obj: &Objective, lo: f64, hi: f64, points: usize) -> Result<Vec<(f64, f64)>> {
    let m = points.max(3);
    (0..m)
        .map(|i| {
            let u = lo + (hi - lo) * i as f64 / (m - 1) as f64;
            Ok((u, obj.scan_value(u)?))
        })
        .collect()
}

fn coercive_bracket(obj: &Objective, opts: &SolveOptions) -> Result<(f64, f64)> {
    let (hlo, hhi) = obj.hull;
    let mut big = opts.bracket_start;
    loop {
        let lo = if hlo.is_finite() { hlo } else { -big };
        let hi = if hhi.is_finite() { hhi } else { big };
        let coarse = scan(obj, lo, hi, 401)?;
        let best = coarse.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if !best.is_finite() {
            return Err(Error::Numerical(format!("objective not finite on [{lo}, {hi}]")));
        }
        let edge_ok = |x: f64, inward: f64| -> Result<bool> {
            let gx = obj.value(x)?;
            let gin = obj.value(x + inward)?;
            Ok(gx < best - opts.coercive_margin && gx < gin)
        };
        let lo_ok = hlo.is_finite() || edge_ok(lo, 1e-3 * big)?;
        let hi_ok = hhi.is_finite() || edge_ok(hi, -1e-3 * big)?;
        if lo_ok && hi_ok {
            return Ok((lo, hi));
        }
        big *= 2.0;
        if big > opts.bracket_cap {
            return Err(Error::NonCoercive(format!(
                "objective does not fall {} below its interior best within |u| <= {}",
                opts.coercive_margin, opts.bracket_cap
            )));
        }
    }
}

/// Brent on `-g`, then Newton on `g'` inside the same bracket.
fn refine_max(obj: &Objective, a: f64, b: f64, opts: &SolveOptions) -> Result<LocalMax> {
    let err = std::cell::RefCell::new(None);
    let f = |u: f64| match obj.value(u) {
        Ok(v) if v.is_finite() => -v,
        Ok(_) => f64::INFINITY,
        Err(e) => {
            err.borrow_mut().get_or_insert(e);
            f64::INFINITY
        }
    };
    let (mut u, _) = brent_minimize(f, a, b, opts.u_tol, 500);
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    for _ in 0..30 {
        let (d1, d2) = obj.derivatives(u)?;
        if !(d1.is_finite() && d2.is_finite() && d2 < 0.0) || d1.abs() < 1e-13 {
            break;
        }
        let next = u - d1 / d2;
        if !(next > a && next < b) {
            break;
        }
        let done = (next - u).abs() < 1e-15 * u.abs().max(1.0);
        u = next;
        if done {
            break;
        }
    }
    Ok(LocalMax { u, g: obj.value(u)? })
}

/// Solve with a caller-supplied rate table (shared across scan points).
pub fn solve_with(spec: &ModelSpec, table: Option<Arc<TabulatedRate>>, opts: &SolveOptions) -> Result<VariationalSolution> {
    let obj = Objective::new(spec, table)?;
    let (lo, hi) = coercive_bracket(&obj, opts)?;
    let pts = scan(&obj, lo, hi, opts.scan_points)?;
    let m = pts.len();
    let mut maxima: Vec<LocalMax> = Vec::new();
    for i in 0..m {
        let g = pts[i].1;
        if !g.is_finite() {
            continue;
        }
        let left = if i > 0 { pts[i - 1].1 } else { f64::NEG_INFINITY };
        let right = if i + 1 < m { pts[i + 1].1 } else { f64::NEG_INFINITY };
        if g >= left && g > right {
            let a = pts[i.saturating_sub(1)].0;
            let b = pts[(i + 1).min(m - 1)].0;
            maxima.push(refine_max(&obj, a, b, opts)?);
        }
    }
    if maxima.is_empty() {
        return Err(Error::Numerical("no local maximum found".into()));
    }
    maxima.sort_by(|x, y| x.u.total_cmp(&y.u));
    maxima.dedup_by(|x, y| (x.u - y.u).abs() < 1e-7);
    let psi = maxima.iter().map(|m| m.g).fold(f64::NEG_INFINITY, f64::max);
    if !psi.is_finite() {
        return Err(Error::Numerical(format!("variational value not finite: {psi}")));
    }
    let k: Vec<LocalMax> = maxima.iter().copied().filter(|m| m.g >= psi - opts.value_gap).collect();
    Ok(VariationalSolution {
        psi,
        maximizers: k.iter().map(|m| m.u).collect(),
        g_values: k.iter().map(|m| m.g).collect(),
        degenerate: k.len() >= 2,
        local_maxima: maxima,
        coercive: true,
        path: obj.path,
        bracket: (lo, hi),
    })
}

pub fn solve(spec: &ModelSpec) -> Result<VariationalSolution> {
    solve_with(spec, rate_table(spec.base)?, &SolveOptions::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanOptions {
    pub solve: SolveOptions,
    /// A segment is a jump when its `|Δu*|` exceeds this multiple of the
    /// largest neighbouring `|Δu*|` along the same grid line.
    pub jump_ratio: f64,
    /// Jumps smaller than this are ignored.
    pub jump_floor: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { solve: SolveOptions::default(), jump_ratio: 10.0, jump_floor: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub beta: Vec<f64>,
    pub psi: Option<f64>,
    pub u_star: Vec<f64>,
    pub degenerate: bool,
    pub jump: bool,
    pub error: Option<String>,
    #[serde(skip)]
    pub solution: Option<VariationalSolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from: usize,
    pub to: usize,
    pub beta_from: Vec<f64>,
    pub beta_to: Vec<f64>,
    pub u_from: f64,
    pub u_to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub points: Vec<ScanPoint>,
    pub jumps: Vec<Segment>,
    pub degenerate_points: Vec<usize>,
}

impl ScanReport {
    pub fn flag_count(&self) -> usize {
        self.jumps.len() + self.degenerate_points.len()
    }

    /// One row per grid point: betas, psi, `;`-joined maximisers, flags.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let dim = self.points.first().map_or(0, |p| p.beta.len());
        let mut header: Vec<String> = (1..=dim).map(|i| format!("beta{i}")).collect();
        header.extend(["psi", "u_star_list", "degenerate_flag", "jump_flag", "error"].map(String::from));
        wtr.write_record(&header)?;
        for p in &self.points {
            let mut row: Vec<String> = p.beta.iter().map(|b| format!("{b}")).collect();
            row.push(p.psi.map_or(String::new(), |v| format!("{v}")));
            row.push(p.u_star.iter().map(|u| format!("{u}")).collect::<Vec<_>>().join(";"));
            row.push((p.degenerate as u8).to_string());
            row.push((p.jump as u8).to_string());
            row.push(p.error.clone().unwrap_or_default());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Index of the single coordinate in which `a` and `b` differ.
fn axis_between(a: &[f64], b: &[f64]) -> Option<usize> {
    let diffs: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
    (diffs.len() == 1).then(|| diffs[0])
}

/// Solve at every grid point and flag jumps in `u*` between neighbours.
/// Consecutive grid entries differing in exactly one coordinate are
/// neighbours; runs of them along one axis form a grid line.
pub fn phase_scan(template: &ModelSpec, grid: &[Vec<f64>], opts: &ScanOptions) -> Result<ScanReport> {
    let table = rate_table(template.base)?;
    let mut points: Vec<ScanPoint> = grid
        .par_iter()
        .map(|beta| {
            let res = template.with_betas(beta).and_then(|s| solve_with(&s, table.clone(), &opts.solve));
            match res {
                Ok(sol) => ScanPoint {
                    beta: beta.clone(),
                    psi: Some(sol.psi),
                    u_star: sol.maximizers.clone(),
                    degenerate: sol.degenerate,
                    jump: false,
                    error: None,
                    solution: Some(sol),
                },
                Err(e) => ScanPoint {
                    beta: beta.clone(),
                    psi: None,
                    u_star: vec![],
                    degenerate: false,
                    jump: false,
                    error: Some(e.to_string()),
                    solution: None,
                },
            }
        })
        .collect();

    // segments (i, i+1) with their axis and |Δu*|
    let seg: Vec<Option<(usize, f64)>> = (0..points.len().saturating_sub(1))
        .map(|i| {
            let axis = axis_between(&points[i].beta, &points[i + 1].beta)?;
            let a = points[i].solution.as_ref()?.u_star();
            let b = points[i + 1].solution.as_ref()?.u_star();
            Some((axis, (b - a).abs()))
        })
        .collect();
    let mut jumps = Vec::new();
    for (i, s) in seg.iter().enumerate() {
        let Some((axis, d)) = *s else { continue };
        let same_line = |j: Option<usize>| j.and_then(|j| seg.get(j).copied().flatten()).filter(|x| x.0 == axis);
        let left = same_line(i.checked_sub(1));
        let right = same_line(Some(i + 1));
        let reference = left.map_or(0.0, |x| x.1).max(right.map_or(0.0, |x| x.1));
        if left.is_none() && right.is_none() {
            continue;
        }
        if d > opts.jump_floor && d > opts.jump_ratio * reference {
            points[i].jump = true;
            points[i + 1].jump = true;
            jumps.push(Segment {
                from: i,
                to: i + 1,
                beta_from: points[i].beta.clone(),
                beta_to: points[i + 1].beta.clone(),
                u_from: points[i].solution.as_ref().map_or(f64::NAN, |s| s.u_star()),
                u_to: points[i + 1].solution.as_ref().map_or(f64::NAN, |s| s.u_star()),
            });
        }
    }
    let degenerate_points = points.iter().enumerate().filter(|(_, p)| p.degenerate).map(|(i, _)| i).collect();
    Ok(ScanReport { points, jumps, degenerate_points })
}

/// Values `start, start+step, …` up to `stop` (inclusive within rounding).
pub fn axis_values(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Config(format!("bad range {start}:{stop}:{step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    if count > 1_000_000 {
        return Err(Error::Config("range has more than a million points".into()));
    }
    Ok((0..=count).map(|i| start + step * i as f64).collect())
}

/// Cartesian product with the last axis varying fastest.
pub fn cartesian_grid(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Two coexisting maxima at a parameter where their values tie.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub beta: Vec<f64>,
    pub low: LocalMax,
    pub high: LocalMax,
}

/// Bisect the segment `beta_a → beta_b` (whose maximisers differ) down to the
/// point where the two branches exchange the global maximum.
pub fn refine_boundary(template: &ModelSpec, beta_a: &[f64], beta_b: &[f64], opts: &SolveOptions) -> Result<BoundaryPoint> {
    let table = rate_table(template.base)?;
    let at = |t: f64| -> Vec<f64> { beta_a.iter().zip(beta_b).map(|(a, b)| a + t * (b - a)).collect() };
    let solve_t = |t: f64| solve_with(&template.with_betas(&at(t))?, table.clone(), opts);
    let ua = solve_t(0.0)?.u_star();
    let ub = solve_t(1.0)?.u_star();
    let (mut ta, mut tb) = (0.0, 1.0);
    for _ in 0..80 {
        let tm = 0.5 * (ta + tb);
        if tb - ta < 1e-14 {
            break;
        }
        let um = solve_t(tm)?.u_star();
        if (um - ua).abs() <= (um - ub).abs() {
            ta = tm;
        } else {
            tb = tm;
        }
    }
    let tm = 0.5 * (ta + tb);
    let sol = solve_t(tm)?;
    let nearest = |target: f64| {
        sol.local_maxima
            .iter()
            .copied()
            .min_by(|x, y| (x.u - target).abs().total_cmp(&(y.u - target).abs()))
            .unwrap()
    };
    let (pa, pb) = (nearest(ua), nearest(ub));
    if (pa.u - pb.u).abs() < 1e-6 {
        return Err(Error::Numerical(
            "maximiser moves continuously along the segment; no coexisting branches".into(),
        ));
    }
    let (low, high) = if pa.u < pb.u { (pa, pb) } else { (pb, pa) };
    Ok(BoundaryPoint { beta: at(tm), low, high })
}

/// Components of the quartic edge-two-star tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C2Bound {
    pub bound: f64,
    /// `ln(2 C₄ C(M)) − 2M|β₂|l² − 2M|β₁|l`.
    pub log_tail: f64,
    /// `ln(C₄ ∫ exp(2β₁x + 2β₂x² − x⁴) dx)`.
    pub log_core: f64,
    /// `ln C(M)`.
    pub log_c: f64,
    /// Set when `ε = 0`: the bound carries no `−Mε` term.
    pub diagnostic_only: bool,
}

/// `ln ∫_a^∞ exp(φ(x)) dx` for `φ(x) = c0 + c1 x + c2 x² − x⁴`.
fn log_quartic_integral(c1: f64, c2: f64, a: f64) -> Result<f64> {
    let phi = |x: f64| c1 * x + c2 * x * x - x.powi(4);
    // the exponent decays like −x⁴ past the largest critical point
    let mut r = 1.0f64;
    while 4.0 * r.powi(3) < 2.0 * c2.abs() * r + c1.abs() + 1.0 {
        r *= 1.5;
    }
    let hi = r + 10.0;
    let lo = if a.is_finite() { a } else { -hi };
    let panels = (((hi - lo) / 0.01).ceil() as usize).clamp(200, 20_000);
    Ok(log_integrate(phi, lo, hi, panels)?.log_mass)
}

/// Per-edge log bound `−Mε + ½ ln(2C₄ C(M) e^{−2M|β₂|l² − 2M|β₁|l} + C₄ ∫ e^{2β₁x + 2β₂x² − x⁴} dx)`
/// with `C(M) = ∫_0^∞ exp(2M|β₂|x² + 2M|β₂|x + 2β₁x + 2β₂x² − x⁴) dx`, all in log space.
pub fn c2prime_bound(beta1: f64, beta2: f64, m: f64, l: f64, epsilon: f64) -> Result<C2Bound> {
    if !(m > 0.0) || !(l > 0.0) || !(epsilon >= 0.0) {
        return Err(Error::Argument(format!("need M > 0, l > 0, ε >= 0; got ({m}, {l}, {epsilon})")));
    }
    let ln_c4 = BaseMeasure::Quartic.normalizer().ln();
    let log_core = ln_c4 + log_quartic_integral(2.0 * beta1, 2.0 * beta2, f64::NEG_INFINITY)?;
    let log_c = log_quartic_integral(
        2.0 * m * beta2.abs() + 2.0 * beta1,
        2.0 * m * beta2.abs() + 2.0 * beta2,
        0.0,
    )?;
    let log_tail = std::f64::consts::LN_2 + ln_c4 + log_c
        - 2.0 * m * beta2.abs() * l * l
        - 2.0 * m * beta1.abs() * l;
    let bound = -m * epsilon + 0.5 * log_add_exp(log_tail, log_core);
    if !bound.is_finite() {
        return Err(Error::Numerical(format!("bound not finite at M={m}, l={l}")));
    }
    Ok(C2Bound { bound, log_tail, log_core, log_c, diagnostic_only: epsilon == 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homomorphism::{Convention, Motif};

    fn gaussian(b1: f64, b2: f64) -> ModelSpec {
        ModelSpec::gaussian_edge_two_star(b1, b2)
    }

    #[test]
    fn gaussian_closed_forms() {
        let s = solve(&gaussian(1.0, 0.0)).unwrap();
        assert!((s.psi - 1.0).abs() < 1e-10);
        assert_eq!(s.maximizers.len(), 1);
        assert!((s.maximizers[0] - 2.0).abs() < 1e-8);
        let s = solve(&gaussian(0.1, 0.1)).unwrap();
        assert!((s.psi - 0.01 / 0.6).abs() < 1e-10);
        assert!((s.maximizers[0] - 1.0 / 3.0).abs() < 1e-8);
        assert_eq!(s.path, SolverPath::JStar);
    }

    #[test]
    fn zero_beta_gives_base_mean() {
        let bases = [
            BaseMeasure::standard_gaussian(),
            BaseMeasure::Gaussian { mean: 1.5, variance: 0.3 },
            BaseMeasure::Quartic,
            BaseMeasure::Bernoulli { p: 0.3 },
            BaseMeasure::Poisson { rate: 2.0 },
        ];
        for base in bases {
            let s = solve(&ModelSpec::edge_two_star(base, 0.0, 0.0)).unwrap();
            assert!(s.psi.abs() < 1e-9, "{base:?}: {}", s.psi);
            assert_eq!(s.maximizers.len(), 1);
            assert!((s.maximizers[0] - base.mean()).abs() < 1e-6, "{base:?}: {:?}", s.maximizers);
        }
    }

    #[test]
    fn first_order_condition_at_maximisers() {
        for spec in [
            gaussian(-0.7, 0.2),
            ModelSpec::edge_two_star(BaseMeasure::Quartic, 0.5, 0.2),
            ModelSpec::edge_triangle(BaseMeasure::Bernoulli { p: 0.5 }, -0.3, 0.8),
        ] {
            let s = solve(&spec).unwrap();
            let obj = Objective::new(&spec, None).unwrap();
            for &u in &s.maximizers {
                assert!(obj.derivatives(u).unwrap().0.abs() < 1e-7, "{spec:?} at {u}");
            }
            assert!(s.local_maxima.len() as i32 <= obj.degree() + 1);
        }
    }

    #[test]
    fn paths_and_refusals() {
        // negative triangle coefficient with a Gaussian base
        let bad = ModelSpec::edge_triangle(BaseMeasure::standard_gaussian(), 0.1, -0.5);
        assert!(matches!(solve(&bad), Err(Error::Admissibility(_))));
        // positive triangle coefficient with a signed base and odd edge count
        let odd = ModelSpec::edge_triangle(BaseMeasure::standard_gaussian(), 0.1, 0.5);
        assert!(matches!(solve(&odd), Err(Error::Admissibility(_))));
        let ok = ModelSpec::edge_triangle(BaseMeasure::Bernoulli { p: 0.5 }, 0.1, 0.5);
        assert_eq!(check_path(&ok).unwrap(), SolverPath::SpecGergm);
        // star path allows any sign but must still be coercive
        assert!(matches!(solve(&gaussian(0.3, 0.3)), Err(Error::NonCoercive(_))));
        let weighted = ModelSpec::new(
            vec![(Motif::general(2, vec![(0, 1, 2.0)], None).unwrap(), 0.1)],
            BaseMeasure::Quartic,
            Convention::AllMaps,
        )
        .unwrap();
        assert!(matches!(solve(&weighted), Err(Error::Admissibility(_))));
    }

    #[test]
    fn halving_the_scan_step_is_harmless() {
        let spec = ModelSpec::edge_two_star(BaseMeasure::Quartic, 0.4, 0.3);
        let coarse = solve_with(&spec, None, &SolveOptions::default()).unwrap();
        let fine = solve_with(&spec, None, &SolveOptions { scan_points: 8001, ..Default::default() }).unwrap();
        assert!((coarse.psi - fine.psi).abs() < 1e-9);
    }

    #[test]
    fn gaussian_scan_has_no_flags() {
        let template = gaussian(-2.0, 0.0);
        let grid = cartesian_grid(&[vec![-2.0], axis_values(0.0, 0.24, 0.005).unwrap()]);
        assert_eq!(grid.len(), 49);
        let rep = phase_scan(&template, &grid, &ScanOptions::default()).unwrap();
        assert_eq!(rep.flag_count(), 0, "{:?}", rep.jumps);
        for p in &rep.points {
            let exact = 2.0 * p.beta[0] / (1.0 - 4.0 * p.beta[1]);
            assert!((p.u_star[0] - exact).abs() < 1e-6);
        }
        let mut out = Vec::new();
        rep.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 50);
    }

    #[test]
    fn bernoulli_triangle_jump_and_tie() {
        let base = BaseMeasure::Bernoulli { p: 0.5 };
        let template = ModelSpec::edge_triangle(base, 0.0, 0.0);
        let grid = cartesian_grid(&[vec![-0.8], axis_values(0.0, 2.0, 0.05).unwrap()]);
        let rep = phase_scan(&template, &grid, &ScanOptions::default()).unwrap();
        assert!(!rep.jumps.is_empty());
        let seg = &rep.jumps[0];
        let b = refine_boundary(&template, &seg.beta_from, &seg.beta_to, &SolveOptions::default()).unwrap();
        assert!((b.low.g - b.high.g).abs() < 1e-8, "{b:?}");
        assert!(b.high.u - b.low.u > 0.3);
    }

    #[test]
    fn c2_bound_components() {
        let b = c2prime_bound(1.0, 1.0, 10.0, 5.0, 0.1).unwrap();
        let b10 = c2prime_bound(1.0, 1.0, 10.0, 10.0, 0.1).unwrap();
        assert!(b10.log_tail < b.log_tail);
        assert!(b10.bound <= b.bound);
        let z = c2prime_bound(1.0, 1.0, 10.0, 5.0, 0.0).unwrap();
        assert!(z.diagnostic_only);
        assert!((z.bound - b.bound - 1.0).abs() < 1e-12);
        // independent check of the core term against a plain Riemann sum
        let c4 = BaseMeasure::Quartic.normalizer();
        let h = 1e-4;
        let riemann: f64 = (-100_000..100_000)
            .map(|i| {
                let x = i as f64 * h;
                (2.0 * x + 2.0 * x * x - x.powi(4)).exp() * h
            })
            .sum();
        assert!((b.log_core - (c4 * riemann).ln()).abs() < 1e-9);
        assert!(c2prime_bound(1.0, 1.0, 0.0, 5.0, 0.1).is_err());
    }
}

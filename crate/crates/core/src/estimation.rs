//! Maximum-likelihood estimation of β from one observed graph: exact Newton
//! for the Gaussian edge-two-star model, Monte Carlo MLE for anything the
//! sampler can simulate, and variational moment matching for a start value.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::base_measure::BaseMeasure;
use crate::error::{Error, Result};
use crate::gaussian_exact::{log_psi_exact, moments_exact, GaussianTwoStarParams};
use crate::graph::WeightedGraph;
use crate::homomorphism::Convention;
use crate::model::ModelSpec;
use crate::numeric::{log_mean_exp, LogSumAcc};
use crate::rate::RateFunction;
use crate::sampler::{run_chains, ChainConfig, ChainKernel};
use crate::variational::{solve, Objective};

/// Margin kept below the finite-`n` validity limit `n/(4(n−1))`.
pub const BETA2_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub beta: Vec<f64>,
    /// Exact log-likelihood (per `n²`) or the quasi-likelihood gain of the step.
    pub loglik: f64,
    pub ess: Option<f64>,
    /// `|T(observed) − E_β[T]|` in density units at the start of the iteration.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta_hat: Vec<f64>,
    pub trajectory: Vec<IterRecord>,
    pub converged: bool,
    /// Wald standard errors from the inverse information.
    pub stderr: Option<Vec<f64>>,
    /// Spread of the late Monte Carlo iterates (MC-MLE only).
    pub mc_stderr: Option<Vec<f64>>,
    /// Final `|T(observed) − E[T]|` in density units.
    pub grad_norm: f64,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// Columns `iter, beta_1..beta_s, loglik, ess, grad_norm`.
    pub fn write_trajectory_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let s = self.beta_hat.len();
        let mut header = vec!["iter".to_string()];
        header.extend((1..=s).map(|i| format!("beta{i}")));
        header.extend(["loglik", "ess", "grad_norm"].map(String::from));
        wtr.write_record(&header)?;
        for r in &self.trajectory {
            let mut row = vec![r.iter.to_string()];
            row.extend(r.beta.iter().map(|b| format!("{b}")));
            row.push(format!("{}", r.loglik));
            row.push(r.ess.map_or(String::new(), |e| format!("{e}")));
            row.push(format!("{}", r.grad_norm));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `(Σ_{i≠j} x_ij, (1/n) Σ_i r_i²)` of a graph.
pub fn gaussian_sufficient_stats(g: &WeightedGraph) -> (f64, f64) {
    let n = g.n();
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for i in 0..n {
        let r = g.row_sum(i);
        s1 += r;
        s2 += r * r;
    }
    (s1, s2 / n as f64)
}

/// Exact MLE for the standard-Gaussian edge-two-star model by Newton's method
/// with a backtracking line search on `β·S − ln ψ_n(β)`.
pub fn fit_exact_gaussian(observed: &WeightedGraph, init: [f64; 2]) -> Result<FitResult> {
    let n = observed.n();
    if n < 3 {
        return Err(Error::Argument(format!("need n >= 3, got {n}")));
    }
    let (s1, s2) = gaussian_sufficient_stats(observed);
    if !(s1.is_finite() && s2.is_finite()) {
        return Err(Error::Argument("observed statistics are not finite".into()));
    }
    let n2 = (n * n) as f64;
    let cap = GaussianTwoStarParams::beta2_limit(n) - BETA2_MARGIN;
    let mut warnings = Vec::new();
    let params = |b: [f64; 2]| GaussianTwoStarParams::new(n, b[0], b[1]);
    let objective = |b: [f64; 2]| -> Result<f64> { Ok(b[0] * s1 + b[1] * s2 - log_psi_exact(&params(b)?)?) };
    let gradient = |b: [f64; 2]| -> Result<[f64; 2]> {
        let (m1, m2) = moments_exact(&params(b)?)?;
        Ok([s1 - m1, s2 - m2])
    };
    let mut beta = init;
    if beta[1] > cap {
        warnings.push(format!("initial beta2 {} clipped to {cap}", beta[1]));
        beta[1] = cap;
    }
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut at_boundary = false;
    for iter in 0..200 {
        let g = gradient(beta)?;
        let f = objective(beta)?;
        trajectory.push(IterRecord { iter, beta: beta.to_vec(), loglik: f / n2, ess: None, grad_norm: norm(&g) / n2 });
        if norm(&g) / n2 < 1e-10 {
            converged = true;
            break;
        }
        // finite-difference Hessian of the objective from the analytic gradient
        let h = 1e-6;
        let mut hess = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut up = beta;
            let mut dn = beta;
            up[k] += h;
            dn[k] -= h;
            if up[1] > cap {
                up[1] = beta[1];
                dn[1] = beta[1] - 2.0 * h;
            }
            let (gu, gd) = (gradient(up)?, gradient(dn)?);
            for i in 0..2 {
                hess[i][k] = (gu[i] - gd[i]) / (up[k] - dn[k]);
            }
        }
        let off = 0.5 * (hess[0][1] + hess[1][0]);
        // ascent direction −H⁻¹ g with H negative definite
        let (a, b, c) = (-hess[0][0], -off, -hess[1][1]);
        let det = a * c - b * b;
        let dir = if det > 0.0 && a > 0.0 {
            [(c * g[0] - b * g[1]) / det, (a * g[1] - b * g[0]) / det]
        } else {
            g
        };
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let mut cand = [beta[0] + alpha * dir[0], beta[1] + alpha * dir[1]];
            let clipped = cand[1] > cap;
            if clipped {
                cand[1] = cap;
            }
            if let Ok(fc) = objective(cand) {
                if fc >= f {
                    at_boundary = clipped;
                    moved = cand != beta;
                    beta = cand;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            converged = norm(&g) / n2 < 1e-6;
            break;
        }
    }
    if at_boundary {
        warnings.push(format!(
            "observed statistics lie outside the achievable mean range; boundary MLE at beta2 = {cap}"
        ));
    }
    let (m1, m2) = moments_exact(&params(beta)?)?;
    let hs = crate::gaussian_exact::hessian_exact(&params(beta)?)?;
    let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
    let stderr = (det > 0.0).then(|| vec![(hs[1][1] / det).sqrt(), (hs[0][0] / det).sqrt()]);
    Ok(FitResult {
        beta_hat: beta.to_vec(),
        trajectory,
        converged,
        stderr,
        mc_stderr: None,
        grad_norm: norm(&[s1 - m1, s2 - m2]) / n2,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_outer_iters: usize,
    pub samples_per_iter: usize,
    /// Minimum importance ESS as a fraction of `samples_per_iter`.
    pub ess_floor: f64,
    pub tol: f64,
    pub chains: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub kernel: Option<ChainKernel>,
    /// Initial MH proposal scale (tuned during burn-in).
    pub proposal_sd: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_outer_iters: 20,
            samples_per_iter: 2000,
            ess_floor: 0.1,
            tol: 1e-4,
            chains: 4,
            burn_in: 100,
            thin: 2,
            seed: 1,
            kernel: None,
            proposal_sd: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub observed: WeightedGraph,
    /// Motifs and base; its coefficients are ignored.
    pub spec_template: ModelSpec,
    pub init: Vec<f64>,
    pub options: FitOptions,
}

/// Draw samples of `T` at `beta`, chains started from the observed graph.
fn draw_statistics(cfg: &FitConfig, beta: &[f64], iter: usize) -> Result<Vec<Vec<f64>>> {
    let o = &cfg.options;
    let spec = cfg.spec_template.with_betas(beta)?;
    let chains = o.chains.max(1);
    let per = o.samples_per_iter.div_ceil(chains);
    let kernel = o.kernel.unwrap_or_else(|| ChainKernel::default_for(&spec));
    let cfgs: Vec<ChainConfig> = (0..chains)
        .map(|c| ChainConfig {
            spec: spec.clone(),
            n: cfg.observed.n(),
            seed: o.seed.wrapping_mul(1_000_003).wrapping_add((iter * 1009 + c) as u64),
            sweeps: o.burn_in + per * o.thin,
            burn_in: o.burn_in,
            proposal_sd: o.proposal_sd,
            thin: o.thin,
            kernel,
            init: Some(cfg.observed.clone()),
        })
        .collect();
    let mut out = Vec::with_capacity(per * chains);
    for t in run_chains(&cfgs) {
        out.extend(t?.statistics);
    }
    Ok(out)
}

fn weighted_moments(samples: &[Vec<f64>], logw: &[f64]) -> (Vec<f64>, DMatrix<f64>, f64) {
    let s = samples[0].len();
    let mx = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|x| x * x).sum();
    let mut mean = vec![0.0; s];
    for (x, wi) in samples.iter().zip(&w) {
        for k in 0..s {
            mean[k] += wi * x[k] / sw;
        }
    }
    let mut cov = DMatrix::zeros(s, s);
    for (x, wi) in samples.iter().zip(&w) {
        for a in 0..s {
            for b in 0..s {
                cov[(a, b)] += wi / sw * (x[a] - mean[a]) * (x[b] - mean[b]);
            }
        }
    }
    (mean, cov, sw * sw / sw2)
}

/// Monte Carlo MLE: importance-sampled `ψ_n(β′) − ψ_n(β_r)` maximised inside
/// an ESS trust region, repeated until successive iterates agree.
pub fn fit_mcmle(cfg: &FitConfig) -> Result<FitResult> {
    let o = &cfg.options;
    let s = cfg.spec_template.dim();
    if cfg.init.len() != s {
        return Err(Error::Argument(format!("init has {} entries, model has {s}", cfg.init.len())));
    }
    if cfg.observed.n() < 3 {
        return Err(Error::Argument("need n >= 3".into()));
    }
    if o.samples_per_iter < 10 || !(o.ess_floor > 0.0 && o.ess_floor < 1.0) {
        return Err(Error::Argument("need samples_per_iter >= 10 and 0 < ess_floor < 1".into()));
    }
    let n2 = (cfg.observed.n() * cfg.observed.n()) as f64;
    let t_obs = cfg.spec_template.statistics(&cfg.observed)?;
    let gaussian_cap = (matches!(cfg.spec_template.base, BaseMeasure::Gaussian { .. })
        && cfg.spec_template.convention == Convention::AllMaps
        && s == 2
        && cfg.spec_template.terms[1].motif.star_leaves() == Some(2))
    .then(|| GaussianTwoStarParams::beta2_limit(cfg.observed.n()) - BETA2_MARGIN);

    let mut beta = cfg.init.clone();
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut warnings = Vec::new();
    let mut last_samples = Vec::new();
    let mut grad_norm = f64::NAN;
    for iter in 0..o.max_outer_iters {
        let samples = draw_statistics(cfg, &beta, iter)?;
        let m = samples.len();
        let floor = o.ess_floor * m as f64;
        let logw = |d: &[f64]| -> Vec<f64> {
            samples.iter().map(|x| n2 * x.iter().zip(d).map(|(a, b)| a * b).sum::<f64>()).collect()
        };
        let quasi = |d: &[f64]| -> f64 {
            n2 * t_obs.iter().zip(d).map(|(a, b)| a * b).sum::<f64>() - log_mean_exp(&logw(d))
        };
        let mut delta = vec![0.0; s];
        let mut ess_at = m as f64;
        let mut first_grad = f64::NAN;
        for inner in 0..50 {
            let lw = logw(&delta);
            let (mean, cov, _) = weighted_moments(&samples, &lw);
            let g: Vec<f64> = t_obs.iter().zip(&mean).map(|(a, b)| a - b).collect();
            if inner == 0 {
                first_grad = norm(&g);
            }
            let h = cov * (n2 * n2) + DMatrix::identity(s, s) * 1e-12;
            let step = match h.clone().try_inverse() {
                Some(inv) => inv * DVector::from_iterator(s, g.iter().map(|x| x * n2)),
                None => DVector::from_iterator(s, g.iter().map(|x| x * n2)),
            };
            let base_q = quasi(&delta);
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha * step.amax() > 1e-14 {
                let cand: Vec<f64> = delta.iter().zip(step.iter()).map(|(d, st)| d + alpha * st).collect();
                let mut acc = LogSumAcc::default();
                for l in logw(&cand) {
                    acc.push(l);
                }
                let ess = acc.ess();
                let ok_cap = gaussian_cap.is_none_or(|c| beta[1] + cand[1] <= c);
                if ess >= floor && ok_cap && quasi(&cand) >= base_q {
                    accepted = Some((cand, ess));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((cand, ess)) => {
                    let moved = cand.iter().zip(&delta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    delta = cand;
                    ess_at = ess;
                    if moved < 1e-10 {
                        break;
                    }
                }
                None if inner == 0 && norm(&g) * n2 > 1e-8 => {
                    return Err(Error::StepSize(format!(
                        "no step from beta = {beta:?} keeps the importance ESS above {floor:.0}; increase samples_per_iter"
                    )));
                }
                None => break,
            }
        }
        grad_norm = first_grad;
        let gain = quasi(&delta);
        let next: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + d).collect();
        let change = delta.iter().map(|d| d.abs()).fold(0.0, f64::max);
        trajectory.push(IterRecord { iter, beta: next.clone(), loglik: gain / n2, ess: Some(ess_at), grad_norm: first_grad });
        beta = next;
        last_samples = samples;
        if change < o.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!("no convergence to {} within {} iterations", o.tol, o.max_outer_iters));
    }
    // Wald errors from the sample covariance of T times n²
    let (_, cov, _) = weighted_moments(&last_samples, &vec![0.0; last_samples.len()]);
    let info = cov * (n2 * n2);
    let stderr = info.try_inverse().map(|inv| (0..s).map(|k| inv[(k, k)].max(0.0).sqrt()).collect());
    let tail = &trajectory[trajectory.len() / 2..];
    let mc_stderr = (tail.len() >= 3).then(|| {
        (0..s)
            .map(|k| {
                let xs: Vec<f64> = tail.iter().map(|r| r.beta[k]).collect();
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
            })
            .collect()
    });
    Ok(FitResult { beta_hat: beta, trajectory, converged, stderr, mc_stderr, grad_norm, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Solve for the edge coefficient with every other coefficient held at
    /// its template value.
    Pinned,
    /// Edge-two-star templates: also match the row-sum dispersion.
    MatchTwoStar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitResult {
    pub beta: Vec<f64>,
    /// `|u*(β) − u_obs|` after plugging back.
    pub residual: f64,
    pub warnings: Vec<String>,
}

/// Start value from variational moment matching: choose β so that the
/// maximiser `u*(β)` equals the observed mean edge weight.
pub fn init_moment_match(observed: &WeightedGraph, template: &ModelSpec, mode: InitMode) -> Result<InitResult> {
    let n = observed.n();
    if n < 3 {
        return Err(Error::Argument("need n >= 3".into()));
    }
    let edge_idx = template
        .terms
        .iter()
        .position(|t| t.motif.edge_count() == 1)
        .ok_or_else(|| Error::Argument("template needs an edge term".into()))?;
    let u = observed.edge_mean();
    let rate = RateFunction::for_measure(template.base);
    let p = rate.eval(u)?;
    if !p.slope.is_finite() {
        return Err(Error::Argument(format!("observed mean {u} lies outside the interior of the support")));
    }
    let mut warnings = Vec::new();
    let mut beta = template.betas();
    if mode == InitMode::MatchTwoStar {
        let two = template.terms.iter().position(|t| t.motif.star_leaves() == Some(2));
        match (template.dim(), two) {
            (2, Some(k)) if k != edge_idx => {
                let nf = n as f64;
                let v = 1.0 / p.curvature;
                let rows: Vec<f64> = (0..n).map(|i| observed.row_sum(i)).collect();
                let mean_r = rows.iter().sum::<f64>() / nf;
                let d_obs: f64 = rows.iter().map(|r| (r - mean_r).powi(2)).sum();
                if d_obs > 0.0 {
                    beta[k] = nf / (2.0 * v * (nf - 2.0)) * (1.0 - (nf - 1.0) * (nf - 2.0) * v / d_obs);
                } else {
                    warnings.push("observed row sums are all equal; two-star coefficient left at 0".into());
                    beta[k] = 0.0;
                }
            }
            _ => {
                return Err(Error::Argument(
                    "two-statistic matching needs an edge plus two-star template".into(),
                ))
            }
        }
    }
    // first-order condition g'(u) = 0 solved for the edge coefficient
    let first_order = |beta: &mut Vec<f64>| {
        let others: f64 = template
            .terms
            .iter()
            .zip(beta.iter())
            .enumerate()
            .filter(|(i, _)| *i != edge_idx)
            .map(|(_, (t, b))| {
                let e = t.motif.edge_count() as i32;
                if e == 0 {
                    0.0
                } else {
                    b * e as f64 * u.powi(e - 1)
                }
            })
            .sum();
        beta[edge_idx] = 0.5 * p.slope - others;
    };
    first_order(&mut beta);
    // project onto the region where the scalar problem is solvable
    let mut scale = 1.0;
    let original = beta.clone();
    for _ in 0..60 {
        let spec = template.with_betas(&beta)?;
        match Objective::new(&spec, None).and_then(|_| solve(&spec)) {
            Ok(_) => break,
            Err(Error::NonCoercive(_)) | Err(Error::Admissibility(_)) => {
                scale *= 0.9;
                for (i, b) in beta.iter_mut().enumerate() {
                    if i != edge_idx {
                        *b = original[i] * scale;
                        if template.terms[i].motif.edge_count() != 1 && !template.terms[i].motif.star_leaves().is_some() {
                            *b = b.max(0.0);
                        }
                    }
                }
                first_order(&mut beta);
            }
            Err(e) => return Err(e),
        }
    }
    if scale < 1.0 {
        warnings.push(format!(
            "matched coefficients lie outside the solvable region; non-edge coefficients scaled by {scale:.4}"
        ));
    }
    let sol = solve(&template.with_betas(&beta)?)?;
    let residual = sol.maximizers.iter().map(|m| (m - u).abs()).fold(f64::INFINITY, f64::min);
    if (sol.u_star() - u).abs() > 1e-6 {
        warnings.push(format!(
            "u_obs = {u} is a stationary point but the global maximiser is {}",
            sol.u_star()
        ));
    }
    Ok(InitResult { beta, residual, warnings })
}

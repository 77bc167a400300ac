//! The cross-module acceptance suite. Each criterion is a self-contained
//! experiment with fixed seeds returning a pass/fail report.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::base_measure::BaseMeasure;
use crate::cut::{cut_distance_d, cut_distance_delta, CutMode, CutOptions};
use crate::error::{Error, Result};
use crate::estimation::{fit_exact_gaussian, fit_mcmle, init_moment_match, FitConfig, FitOptions, InitMode};
use crate::gaussian_exact::{hessian_exact, log_psi_exact, psi_limit, GaussianTwoStarParams};
use crate::graph::WeightedGraph;
use crate::homomorphism::{fast_statistic, hom_number, Convention, Family, Motif};
use crate::model::ModelSpec;
use crate::numeric::log_integrate;
use crate::rate::RateFunction;
use crate::sampler::{concentration_check, estimate_psi_mc, run_chain, run_chains, ChainConfig, ChainKernel};
use crate::variational::{
    axis_values, c2prime_bound, C2Bound, cartesian_grid, phase_scan, rate_table, refine_boundary, solve, Objective, ScanOptions,
    SolveOptions,
};

pub const CRITERIA: [(u8, &str); 12] = [
    (1, "exact vs Monte Carlo partition function"),
    (2, "finite-n limit agreement"),
    (3, "variational vs closed form"),
    (4, "Gaussian non-degeneracy scan"),
    (5, "degeneracy positive control"),
    (6, "concentration around u*"),
    (7, "homomorphism oracle equivalence"),
    (8, "cut-distance oracles"),
    (9, "rate-function correctness"),
    (10, "estimation self-consistency"),
    (11, "tail bound monotonicity"),
    (12, "sampler exactness at n = 2"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2} ({}): {} [{:.1}s]",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

/// Criterion ids in a named suite.
pub fn suite(name: &str) -> Result<Vec<u8>> {
    Ok(match name {
        "all" => (1..=12).collect(),
        "gaussian" => vec![1, 2, 3, 4, 6, 10],
        "variational" => vec![3, 4, 5, 11],
        "graphkernel" => vec![7, 8],
        "base" => vec![9, 12],
        other => {
            return Err(Error::Argument(format!(
                "unknown suite '{other}'; expected all, gaussian, variational, graphkernel or base"
            )))
        }
    })
}

pub fn run_criterion(id: u8) -> Result<CriterionReport> {
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .ok_or_else(|| Error::Argument(format!("no criterion {id}")))?
        .1;
    let start = Instant::now();
    let outcome = match id {
        1 => c1_exact_vs_mc(),
        2 => c2_limit(),
        3 => c3_variational_identity(),
        4 => c4_gaussian_scan(),
        5 => c5_degeneracy_control(),
        6 => c6_concentration(),
        7 => c7_hom_oracle(),
        8 => c8_cut_oracles(),
        9 => c9_rate(),
        10 => c10_estimation(),
        11 => c11_c2prime(),
        _ => c12_two_node_sampler(),
    };
    let (passed, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Ok(CriterionReport { id, name: name.to_string(), passed, detail, seconds: start.elapsed().as_secs_f64() })
}

pub fn run_suite(name: &str) -> Result<Vec<CriterionReport>> {
    suite(name)?.into_iter().map(run_criterion).collect()
}

type Outcome = Result<(bool, String)>;

fn c1_exact_vs_mc() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let mut seed = 100;
    for n in [3usize, 4] {
        for (b1, b2) in [(0.1, 0.1), (0.05, 0.2), (-0.2, 0.1)] {
            let exact = log_psi_exact(&GaussianTwoStarParams::new(n, b1, b2)?)? / (n * n) as f64;
            seed += 1;
            let est = estimate_psi_mc(&ModelSpec::gaussian_edge_two_star(b1, b2), n, 10_000_000, seed)?;
            let z = (est.psi_hat - exact).abs() / est.stderr;
            worst = worst.max(z);
            ok &= z <= 3.0;
        }
    }
    Ok((ok, format!("max |MC − exact| / stderr = {worst:.2} over 6 points (limit 3)")))
}

fn c2_limit() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (b1, b2) in [(1.0, 0.1), (-2.0, 0.2)] {
        let gap = crate::gaussian_exact::convergence_row(1000, b1, b2)?.gap;
        ok &= gap <= 5e-3;
        parts.push(format!("({b1}, {b2}): gap {gap:.3e}"));
    }
    Ok((ok, format!("n = 1000, limit 5e-3; {}", parts.join(", "))))
}

fn c3_variational_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            let b1 = -2.0 + 4.0 * i as f64 / 9.0;
            let b2 = 0.24 * j as f64 / 9.0;
            let sol = solve(&ModelSpec::gaussian_edge_two_star(b1, b2))?;
            worst = worst.max((sol.psi - psi_limit(b1, b2)?).abs());
        }
    }
    Ok((worst <= 1e-7, format!("max |psi − β₁²/(1−4β₂)| = {worst:.2e} on 10×10 grid (limit 1e-7)")))
}

fn c4_gaussian_scan() -> Outcome {
    let b1 = -2.0;
    let grid: Vec<Vec<f64>> = axis_values(0.0, 0.24, 0.005)?.into_iter().map(|b2| vec![b1, b2]).collect();
    let report = phase_scan(&ModelSpec::gaussian_edge_two_star(0.0, 0.0), &grid, &ScanOptions::default())?;
    let mut worst: f64 = 0.0;
    for p in &report.points {
        let want = 2.0 * b1 / (1.0 - 4.0 * p.beta[1]);
        match p.u_star.first() {
            Some(u) if p.error.is_none() => worst = worst.max((u - want).abs()),
            _ => worst = f64::INFINITY,
        }
    }
    let flags = report.flag_count();
    Ok((
        flags == 0 && worst <= 1e-6,
        format!("{} points, {flags} flags, max |u* − 2β₁/(1−4β₂)| = {worst:.2e}", report.points.len()),
    ))
}

fn c5_degeneracy_control() -> Outcome {
    let template = ModelSpec::edge_triangle(BaseMeasure::Bernoulli { p: 0.5 }, 0.0, 0.0);
    let grid = cartesian_grid(&[axis_values(-1.0, -0.6, 0.1)?, axis_values(0.0, 2.0, 0.05)?]);
    let report = phase_scan(&template, &grid, &ScanOptions::default())?;
    let Some(seg) = report.jumps.first() else {
        return Ok((false, format!("no jump among {} points", report.points.len())));
    };
    let bp = refine_boundary(&template, &seg.beta_from, &seg.beta_to, &SolveOptions::default())?;
    let (lo, hi) = (bp.low.u, bp.high.u);
    let mid = 0.5 * (lo + hi);
    let obj = Objective::new(&template.with_betas(&bp.beta)?, rate_table(template.base)?)?;
    // dense brute force over (0, 1) on either side of the midpoint
    let (mut left, mut right) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let steps = 100_000;
    for k in 1..steps {
        let u = k as f64 / steps as f64;
        let g = obj.value(u)?;
        if u < mid {
            left = left.max(g);
        } else {
            right = right.max(g);
        }
    }
    let diff = (left - right).abs();
    Ok((
        diff <= 1e-6,
        format!(
            "{} jumps; boundary at β = ({:.6}, {:.6}) with co-maximisers {lo:.4}, {hi:.4}; brute-force |Δg| = {diff:.2e}",
            report.jumps.len(),
            bp.beta[0],
            bp.beta[1]
        ),
    ))
}

/// Median δ-distance to the constant-`u*` kernel for five chains at each size.
pub fn concentration_medians(sizes: &[usize], sweeps: usize, seed: u64) -> Result<Vec<f64>> {
    let spec = ModelSpec::gaussian_edge_two_star(1.0, 0.0);
    let sol = solve(&spec)?;
    sizes
        .iter()
        .map(|&n| {
            let cfgs: Vec<ChainConfig> = (0..5)
                .map(|c| ChainConfig {
                    spec: spec.clone(),
                    n,
                    seed: seed + 100 * n as u64 + c,
                    sweeps,
                    burn_in: sweeps / 2,
                    proposal_sd: 1.0,
                    thin: 10,
                    kernel: ChainKernel::ExactGibbsGaussian,
                    init: None,
                })
                .collect();
            let mut d = run_chains(&cfgs)
                .into_iter()
                .map(|t| Ok(concentration_check(&t?, &sol, Default::default()).distance))
                .collect::<Result<Vec<f64>>>()?;
            d.sort_by(f64::total_cmp);
            Ok(d[2])
        })
        .collect()
}

fn c6_concentration() -> Outcome {
    let med = concentration_medians(&[20, 40, 80], 5000, 600)?;
    let ok = med.windows(2).all(|w| w[1] < w[0]) && med[2] < 0.15;
    Ok((ok, format!("median δ at n = 20, 40, 80: {:.4}, {:.4}, {:.4} (final limit 0.15)", med[0], med[1], med[2])))
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> WeightedGraph {
    let mut g = WeightedGraph::empty(n);
    for i in 0..n {
        for j in (i + 1)..n {
            g.set(i, j, rng.random_range(lo..hi));
        }
    }
    g
}

fn c7_hom_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let motifs = [
        (Family::Edge, Motif::edge()),
        (Family::TwoStar, Motif::two_star()),
        (Family::JStar { j: 3 }, Motif::j_star(3)?),
        (Family::Triangle, Motif::triangle()),
    ];
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=6);
        let g = random_graph(&mut rng, n, -2.0, 2.0);
        for (tag, m) in &motifs {
            let fast = fast_statistic(*tag, &g, Convention::AllMaps)?;
            let brute = hom_number(m, &g)? / (n as f64).powi(m.vertices() as i32);
            worst = worst.max((fast - brute).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max |fast − brute force| = {worst:.2e} over 200 graphs × 4 motifs")))
}

fn c8_cut_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let opts = CutOptions::default();
    let (mut d_eq, mut delta_eq, mut delta_below) = (0, 0, 0);
    let tol = 1e-12;
    for _ in 0..100 {
        let n = 8;
        let a = crate::graph::embed(&random_graph(&mut rng, n, 0.0, 1.0));
        let b = crate::graph::embed(&random_graph(&mut rng, n, 0.0, 1.0));
        let de = cut_distance_d(&a, &b, CutMode::Exact, &opts)?;
        let dh = cut_distance_d(&a, &b, CutMode::Heuristic, &opts)?;
        if (de - dh).abs() <= tol {
            d_eq += 1;
        }
        let xe = cut_distance_delta(&a, &b, CutMode::Exact, &opts)?;
        let xh = cut_distance_delta(&a, &b, CutMode::Heuristic, &opts)?;
        if xh < xe - tol {
            delta_below += 1;
        } else if xh - xe <= tol {
            delta_eq += 1;
        }
    }
    Ok((
        d_eq >= 95 && delta_below == 0 && delta_eq >= 80,
        format!("d heuristic = exact on {d_eq}/100; δ heuristic = exact on {delta_eq}/100, below exact on {delta_below}"),
    ))
}

fn c9_rate() -> Outcome {
    let gauss = RateFunction::numeric(BaseMeasure::standard_gaussian());
    let mut g_err: f64 = 0.0;
    for k in 0..=200 {
        let x = -10.0 + 0.1 * k as f64;
        g_err = g_err.max((gauss.rate(x)? - 0.5 * x * x).abs());
    }
    let quartic = RateFunction::for_measure(BaseMeasure::Quartic);
    let h0 = quartic.rate(0.0)?.abs();
    let xs: Vec<f64> = (0..=160).map(|k| -4.0 + 0.05 * k as f64).collect();
    let hs = xs.iter().map(|&x| quartic.rate(x)).collect::<Result<Vec<f64>>>()?;
    let min_second = hs.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).fold(f64::INFINITY, f64::min);
    let mut dual: f64 = 0.0;
    for k in 0..=40 {
        let theta = -6.0 + 0.3 * k as f64;
        let lambda = BaseMeasure::Quartic.log_mgf(theta, None)?;
        dual = dual.max((quartic.conjugate(theta)? - lambda).abs());
    }
    let ok = g_err <= 1e-8 && h0 <= 1e-9 && min_second >= -1e-12 && dual <= 1e-6;
    Ok((
        ok,
        format!(
            "Gaussian |h − x²/2| = {g_err:.1e}; quartic h(0) = {h0:.1e}, min second difference = {min_second:.2e}; |h* − Λ| = {dual:.1e}"
        ),
    ))
}

/// Observed graphs at `beta` drawn as the final states of long exact-Gibbs chains.
pub fn simulate_gaussian_observations(beta: [f64; 2], n: usize, reps: usize, seed: u64) -> Result<Vec<WeightedGraph>> {
    let spec = ModelSpec::gaussian_edge_two_star(beta[0], beta[1]);
    let cfgs: Vec<ChainConfig> = (0..reps as u64)
        .map(|r| ChainConfig {
            spec: spec.clone(),
            n,
            seed: seed + r,
            sweeps: 500,
            burn_in: 499,
            proposal_sd: 1.0,
            thin: 1,
            kernel: ChainKernel::ExactGibbsGaussian,
            init: None,
        })
        .collect();
    run_chains(&cfgs).into_iter().map(|t| Ok(t?.final_state)).collect()
}

fn c10_estimation() -> Outcome {
    let truth = [0.1, 0.05];
    let obs = simulate_gaussian_observations(truth, 60, 20, 1000)?;
    let chi95 = ChiSquared::new(2.0).map_err(|e| Error::Numerical(e.to_string()))?.inverse_cdf(0.95);
    let mut covered = 0;
    let mut fits = Vec::new();
    for g in &obs {
        let init = init_moment_match(g, &ModelSpec::gaussian_edge_two_star(0.0, 0.0), InitMode::MatchTwoStar)?.beta;
        let fit = fit_exact_gaussian(g, [init[0], init[1]])?;
        // joint 95% Wald region: (β̂ − β⁰)ᵀ I(β̂) (β̂ − β⁰) ≤ χ²₂(0.95)
        let info = hessian_exact(&GaussianTwoStarParams::new(g.n(), fit.beta_hat[0], fit.beta_hat[1])?)?;
        let d = [fit.beta_hat[0] - truth[0], fit.beta_hat[1] - truth[1]];
        let q = info[0][0] * d[0] * d[0] + 2.0 * info[0][1] * d[0] * d[1] + info[1][1] * d[1] * d[1];
        if q <= chi95 {
            covered += 1;
        }
        fits.push(fit);
    }
    let exact = &fits[0];
    let cfg = FitConfig {
        observed: obs[0].clone(),
        spec_template: ModelSpec::gaussian_edge_two_star(0.0, 0.0),
        init: init_moment_match(&obs[0], &ModelSpec::gaussian_edge_two_star(0.0, 0.0), InitMode::MatchTwoStar)?.beta,
        options: FitOptions { max_outer_iters: 10, samples_per_iter: 4000, seed: 1010, ..Default::default() },
    };
    let mc = fit_mcmle(&cfg)?;
    let se_stat = exact.stderr.clone().unwrap_or(vec![0.0; 2]);
    let se_mc = mc.mc_stderr.clone().unwrap_or(vec![0.0; 2]);
    let mut agree = true;
    let mut ratios = Vec::new();
    for k in 0..2 {
        let comb = (se_stat[k].powi(2) + se_mc[k].powi(2)).sqrt();
        let r = (mc.beta_hat[k] - exact.beta_hat[k]).abs() / comb;
        agree &= r <= 2.0;
        ratios.push(format!("{r:.2}"));
    }
    Ok((
        covered >= 18 && agree,
        format!(
            "Wald coverage {covered}/20 (need 18); MC-MLE vs exact |Δβ|/combined error = [{}] (limit 2)",
            ratios.join(", ")
        ),
    ))
}

fn c11_c2prime() -> Outcome {
    let (b1, b2, eps) = (1.0, 1.0, 0.1);
    let ms = [1.0, 10.0, 100.0];
    let ls = [5.0, 10.0, 20.0];
    let mut table = Vec::new();
    for &m in &ms {
        let row = ls.iter().map(|&l| c2prime_bound(b1, b2, m, l, eps)).collect::<Result<Vec<_>>>()?;
        table.push(row);
    }
    // Once the tail term drops below f64 resolution the total is flat in l,
    // so strictness in l is read off the tail component.
    let dec_l = table.iter().all(|r| r.windows(2).all(|w| w[1].bound <= w[0].bound && w[1].log_tail < w[0].log_tail));
    let dec_m = (0..ls.len()).all(|j| table.windows(2).all(|w| w[1][j].bound < w[0][j].bound));
    let fmt = |r: &Vec<C2Bound>| r.iter().map(|x| format!("{:.3e}", x.bound)).collect::<Vec<_>>().join(" ");
    Ok((
        dec_l && dec_m,
        format!(
            "decreasing in l: {dec_l}, in M: {dec_m}; rows M = 1, 10, 100 over l = 5, 10, 20: [{}] [{}] [{}]",
            fmt(&table[0]),
            fmt(&table[1]),
            fmt(&table[2])
        ),
    ))
}

/// Chi-square p-value of a long two-node MH chain against the tilted density
/// `∝ exp(2β₁x + β₂x²) q(x)`, using 50 equal-probability bins.
pub fn two_node_chi_square(base: BaseMeasure, beta: [f64; 2], samples: usize, seed: u64) -> Result<f64> {
    let thin = 20;
    let cfg = ChainConfig {
        spec: ModelSpec::edge_two_star(base, beta[0], beta[1]),
        n: 2,
        seed,
        sweeps: 2000 + samples * thin,
        burn_in: 2000,
        proposal_sd: 1.0,
        thin,
        kernel: ChainKernel::MhWithinGibbs,
        init: None,
    };
    let trace = run_chain(&cfg)?;
    let log_f = |x: f64| 2.0 * beta[0] * x + beta[1] * x * x + base.log_density(x);
    // tabulated CDF on a wide grid
    let (lo, hi) = (-8.0, 8.0);
    let cells = 16_000;
    let w = (hi - lo) / cells as f64;
    let mut cdf = vec![0.0; cells + 1];
    let total = log_integrate(log_f, lo, hi, 4000)?.log_mass;
    for k in 0..cells {
        let a = lo + w * k as f64;
        let piece = log_integrate(log_f, a, a + w, 1)?.log_mass;
        cdf[k + 1] = cdf[k] + (piece - total).exp();
    }
    let bins = 50;
    let mut edges = Vec::with_capacity(bins - 1);
    let mut k = 0;
    for b in 1..bins {
        let q = b as f64 / bins as f64;
        while cdf[k + 1] < q {
            k += 1;
        }
        let frac = (q - cdf[k]) / (cdf[k + 1] - cdf[k]);
        edges.push(lo + w * (k as f64 + frac));
    }
    let mut counts = vec![0usize; bins];
    for x in &trace.edge_mean {
        counts[edges.partition_point(|e| e < x)] += 1;
    }
    let m = trace.edge_mean.len() as f64;
    let expect = m / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    let chi = ChiSquared::new((bins - 1) as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(1.0 - chi.cdf(stat))
}

fn c12_two_node_sampler() -> Outcome {
    let pg = two_node_chi_square(BaseMeasure::standard_gaussian(), [0.3, 0.2], 20_000, 1200)?;
    let pq = two_node_chi_square(BaseMeasure::Quartic, [0.5, 0.5], 20_000, 1201)?;
    Ok((pg > 1e-3 && pq > 1e-3, format!("chi-square p-values: Gaussian {pg:.4}, quartic {pq:.4} (limit 0.001)")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_resolve() {
        assert_eq!(suite("all").unwrap().len(), 12);
        assert!(suite("nope").is_err());
        assert!(run_criterion(13).is_err());
    }

    #[test]
    fn fast_criteria_report() {
        for id in [3, 7, 11] {
            let r = run_criterion(id).unwrap();
            assert!(r.line().contains(&format!("criterion {id:>2}")));
        }
    }
}

//! MCMC for the tilted law `exp(n²T(x)) Π q(x_ij)` over symmetric weighted
//! graphs, the i.i.d. Monte Carlo partition estimator, and concentration
//! diagnostics.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_measure::{BaseMeasure, Sampler as BaseSampler};
use crate::cut::{distance_to_constant_set, CutOptions};
use crate::error::{Error, Result};
use crate::graph::{embed, WeightedGraph};
use crate::homomorphism::{distinct_star_sum, Convention, Family};
use crate::model::ModelSpec;
use crate::numeric::LogSumAcc;
use crate::variational::VariationalSolution;

/// Any |x_ij| beyond this aborts the chain.
pub const DIVERGENCE_GUARD: f64 = 1e6;
/// Cached row sums and statistics are recomputed this often (in sweeps).
pub const REFRESH_EVERY: usize = 100;
const TARGET_ACCEPTANCE: f64 = 0.44;
const TUNE_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKernel {
    ExactGibbsGaussian,
    MhWithinGibbs,
}

impl ChainKernel {
    /// Exact Gibbs when every full conditional is Gaussian, MH otherwise.
    pub fn default_for(spec: &ModelSpec) -> ChainKernel {
        let quadratic = spec.terms.iter().all(|t| {
            t.motif.edges().iter().map(|e| e.2).sum::<f64>() <= 2.0 || t.motif.family() == Family::Triangle
        });
        if matches!(spec.base, BaseMeasure::Gaussian { .. }) && quadratic {
            ChainKernel::ExactGibbsGaussian
        } else {
            ChainKernel::MhWithinGibbs
        }
    }
}

fn default_sd() -> f64 {
    1.0
}

fn default_thin() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub spec: ModelSpec,
    pub n: usize,
    pub seed: u64,
    pub sweeps: usize,
    pub burn_in: usize,
    #[serde(default = "default_sd")]
    pub proposal_sd: f64,
    #[serde(default = "default_thin")]
    pub thin: usize,
    pub kernel: ChainKernel,
    /// Starting state; i.i.d. base draws when absent.
    #[serde(default, skip)]
    pub init: Option<WeightedGraph>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    /// Sweep number (1-based) of each recorded row.
    pub sweep: Vec<usize>,
    /// `t(Hᵢ, x)` per recorded sweep.
    pub statistics: Vec<Vec<f64>>,
    pub edge_mean: Vec<f64>,
    /// Post-burn-in acceptance rate (1 for exact Gibbs).
    pub acceptance_rate: f64,
    /// Proposal scale after burn-in tuning.
    pub proposal_sd: f64,
    pub final_state: WeightedGraph,
    /// Largest discrepancy between cached and recomputed row sums seen at a
    /// refresh.
    pub max_cache_drift: f64,
}

impl ChainTrace {
    /// Columns `sweep, stat_1, …, stat_s, edge_mean`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let s = self.statistics.first().map_or(0, |r| r.len());
        let mut header = vec!["sweep".to_string()];
        header.extend((1..=s).map(|i| format!("stat_{i}")));
        header.push("edge_mean".into());
        wtr.write_record(&header)?;
        for (k, row) in self.statistics.iter().enumerate() {
            let mut rec = vec![self.sweep[k].to_string()];
            rec.extend(row.iter().map(|v| format!("{v}")));
            rec.push(format!("{}", self.edge_mean[k]));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Mean of column `k` of the statistics.
    pub fn stat_mean(&self, k: usize) -> f64 {
        self.statistics.iter().map(|r| r[k]).sum::<f64>() / self.statistics.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Edge,
    StarAll(u32),
    StarDistinct(u32),
    Triangle,
}

fn term_kinds(spec: &ModelSpec) -> Result<Vec<Kind>> {
    spec.terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let m = &t.motif;
            if !(m.is_edge_unweighted() && m.is_node_unweighted()) {
                return Err(Error::Argument(format!("sampler needs plain motifs; motif {i} is weighted")));
            }
            match (m.star_leaves(), m.family()) {
                (Some(1), _) => Ok(Kind::Edge),
                (Some(j), _) => Ok(match spec.convention {
                    Convention::AllMaps => Kind::StarAll(j as u32),
                    Convention::DistinctIndices => Kind::StarDistinct(j as u32),
                }),
                (None, Family::Triangle) => Ok(Kind::Triangle),
                _ if m.vertices() == 3 && m.edge_count() == 3 => Ok(Kind::Triangle),
                _ => Err(Error::Argument(format!(
                    "sampler supports edge, star and triangle motifs; motif {i} is none of these"
                ))),
            }
        })
        .collect()
}

/// Mutable chain state with cached row sums, row power sums and statistics.
struct State {
    n: usize,
    g: WeightedGraph,
    kinds: Vec<Kind>,
    betas: Vec<f64>,
    /// `p[i * pmax + k - 1] = Σ_j x_ij^k`.
    pows: Vec<f64>,
    pmax: usize,
    stats: Vec<f64>,
    edge_total: f64,
    spec: ModelSpec,
    delta: Vec<f64>,
}

impl State {
    fn new(spec: &ModelSpec, g: WeightedGraph) -> Result<Self> {
        let kinds = term_kinds(spec)?;
        let pmax = kinds
            .iter()
            .map(|k| match k {
                Kind::StarDistinct(j) => *j as usize,
                _ => 1,
            })
            .max()
            .unwrap_or(1);
        let mut s = State {
            n: g.n(),
            g,
            betas: spec.betas(),
            delta: vec![0.0; kinds.len()],
            kinds,
            pows: Vec::new(),
            pmax,
            stats: Vec::new(),
            edge_total: 0.0,
            spec: spec.clone(),
        };
        s.refresh()?;
        Ok(s)
    }

    /// Recompute every cache; returns the largest row-sum drift.
    fn refresh(&mut self) -> Result<f64> {
        let n = self.n;
        let mut drift: f64 = 0.0;
        let old = std::mem::take(&mut self.pows);
        let mut pows = vec![0.0; n * self.pmax];
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let w = self.g.get(i, j);
                let mut p = w;
                for k in 0..self.pmax {
                    pows[i * self.pmax + k] += p;
                    p *= w;
                }
                if j > i {
                    total += w;
                }
            }
            if !old.is_empty() {
                drift = drift.max((old[i * self.pmax] - pows[i * self.pmax]).abs());
            }
        }
        self.pows = pows;
        self.edge_total = total;
        self.stats = self.spec.statistics(&self.g)?;
        Ok(drift)
    }

    #[inline]
    fn row(&self, i: usize) -> f64 {
        self.pows[i * self.pmax]
    }

    /// Fill `self.delta` with the change in each `t(Hᵢ)` if `x_ij := new`,
    /// returning the change in `n²T`.
    fn deltas(&mut self, i: usize, j: usize, new: f64) -> f64 {
        let n = self.n;
        let nf = n as f64;
        let old = self.g.get(i, j);
        let d = new - old;
        let mut total = 0.0;
        for (t, kind) in self.kinds.iter().enumerate() {
            let v = match *kind {
                Kind::Edge => 2.0 * d / (nf * nf),
                Kind::StarAll(jj) => {
                    let e = jj as i32;
                    let (ri, rj) = (self.row(i), self.row(j));
                    ((ri + d).powi(e) - ri.powi(e) + (rj + d).powi(e) - rj.powi(e)) / nf.powi(e + 1)
                }
                Kind::StarDistinct(jj) => {
                    let jj = jj as usize;
                    let mut acc = 0.0;
                    for r in [i, j] {
                        let p = &self.pows[r * self.pmax..r * self.pmax + jj];
                        let mut q = [0.0; 16];
                        let (mut on, mut nn) = (old, new);
                        for k in 0..jj {
                            q[k] = p[k] + nn - on;
                            on *= old;
                            nn *= new;
                        }
                        acc += distinct_star_sum(&q[..jj], jj) - distinct_star_sum(p, jj);
                    }
                    acc / nf.powi(jj as i32 + 1)
                }
                Kind::Triangle => {
                    let (ri, rj) = (self.g.row(i), self.g.row(j));
                    let s: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                    6.0 * d * s / (nf * nf * nf)
                }
            };
            self.delta[t] = v;
            total += self.betas[t] * v;
        }
        total * nf * nf
    }

    /// Commit `x_ij := new` using the deltas last computed for `new`.
    fn apply(&mut self, i: usize, j: usize, new: f64) {
        let old = self.g.get(i, j);
        for (s, d) in self.stats.iter_mut().zip(&self.delta) {
            *s += d;
        }
        let (mut on, mut nn) = (old, new);
        for k in 0..self.pmax {
            self.pows[i * self.pmax + k] += nn - on;
            self.pows[j * self.pmax + k] += nn - on;
            on *= old;
            nn *= new;
        }
        self.edge_total += new - old;
        self.g.set(i, j, new);
    }

    fn edge_mean(&self) -> f64 {
        let m = self.n * (self.n - 1) / 2;
        if m == 0 {
            0.0
        } else {
            self.edge_total / m as f64
        }
    }
}

fn instability(cfg: &ChainConfig, detail: String) -> Error {
    Error::Instability { beta: cfg.spec.betas(), n: cfg.n, detail }
}

fn validate(cfg: &ChainConfig) -> Result<()> {
    cfg.spec.validate()?;
    if cfg.n < 2 {
        return Err(Error::Argument(format!("chain needs n >= 2, got {}", cfg.n)));
    }
    if cfg.thin == 0 || cfg.burn_in > cfg.sweeps {
        return Err(Error::Argument(format!(
            "need thin >= 1 and burn_in <= sweeps; got thin {}, burn_in {}, sweeps {}",
            cfg.thin, cfg.burn_in, cfg.sweeps
        )));
    }
    if !(cfg.proposal_sd > 0.0 && cfg.proposal_sd.is_finite()) {
        return Err(Error::Argument(format!("proposal_sd must be positive, got {}", cfg.proposal_sd)));
    }
    if let Some(g) = &cfg.init {
        if g.n() != cfg.n {
            return Err(Error::Argument(format!("initial state has n = {}, expected {}", g.n(), cfg.n)));
        }
    }
    let kinds = term_kinds(&cfg.spec)?;
    if cfg.kernel == ChainKernel::ExactGibbsGaussian {
        if !matches!(cfg.spec.base, BaseMeasure::Gaussian { .. }) {
            return Err(Error::Argument("exact Gibbs needs a Gaussian base measure".into()));
        }
        if kinds.iter().any(|k| matches!(k, Kind::StarAll(j) | Kind::StarDistinct(j) if *j > 2)) {
            return Err(Error::Argument(
                "exact Gibbs needs a quadratic conditional; j-stars with j >= 3 are not allowed".into(),
            ));
        }
    }
    Ok(())
}

/// Run one chain. Deterministic in `cfg` (including the seed).
pub fn run_chain(cfg: &ChainConfig) -> Result<ChainTrace> {
    validate(cfg)?;
    let n = cfg.n;
    let base = cfg.spec.base;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = match &cfg.init {
        Some(g) => g.clone(),
        None => {
            let mut bs = BaseSampler::new(base)?;
            let mut g = WeightedGraph::empty(n);
            for i in 0..n {
                for j in (i + 1)..n {
                    g.set(i, j, bs.draw(&mut rng)?);
                }
            }
            g
        }
    };
    let mut st = State::new(&cfg.spec, init)?;
    let discrete = base.is_discrete();
    let mut sd = cfg.proposal_sd;
    let (mut acc_post, mut tried_post) = (0u64, 0u64);
    let (mut acc_win, mut tried_win) = (0u64, 0u64);
    let mut trace = ChainTrace {
        sweep: Vec::new(),
        statistics: Vec::new(),
        edge_mean: Vec::new(),
        acceptance_rate: 1.0,
        proposal_sd: sd,
        final_state: WeightedGraph::empty(n),
        max_cache_drift: 0.0,
    };
    let logq = |x: f64| base.log_density(x);

    for sweep in 1..=cfg.sweeps {
        let post = sweep > cfg.burn_in;
        for i in 0..n {
            for j in (i + 1)..n {
                let old = st.g.get(i, j);
                let new = match cfg.kernel {
                    ChainKernel::ExactGibbsGaussian => {
                        let fm = st.deltas(i, j, old - 1.0) + logq(old - 1.0);
                        let fp = st.deltas(i, j, old + 1.0) + logq(old + 1.0);
                        let f0 = logq(old);
                        let a = 0.5 * (fp + fm - 2.0 * f0);
                        let b = 0.5 * (fp - fm);
                        if !(a < 0.0) || !a.is_finite() || !b.is_finite() {
                            return Err(instability(
                                cfg,
                                format!("conditional of edge ({i}, {j}) is not normalisable (quadratic coefficient {a})"),
                            ));
                        }
                        let z: f64 = rng.sample(StandardNormal);
                        let new = old - b / (2.0 * a) + (-0.5 / a).sqrt() * z;
                        st.deltas(i, j, new);
                        new
                    }
                    ChainKernel::MhWithinGibbs => {
                        let (prop, log_hastings) = if discrete {
                            propose_discrete(base, old, &mut rng)
                        } else {
                            let z: f64 = rng.sample(StandardNormal);
                            (old + sd * z, 0.0)
                        };
                        let dh = st.deltas(i, j, prop);
                        let log_r = dh + logq(prop) - logq(old) + log_hastings;
                        let u: f64 = rng.random();
                        let accept = log_r >= 0.0 || u.ln() < log_r;
                        if post {
                            tried_post += 1;
                            acc_post += accept as u64;
                        } else {
                            tried_win += 1;
                            acc_win += accept as u64;
                        }
                        if !accept {
                            continue;
                        }
                        prop
                    }
                };
                if !(new.abs() <= DIVERGENCE_GUARD) {
                    return Err(instability(cfg, format!("|x_{i}{j}| = {} exceeds {DIVERGENCE_GUARD:e}", new.abs())));
                }
                st.apply(i, j, new);
            }
        }
        // tune during burn-in only
        if !post && !discrete && cfg.kernel == ChainKernel::MhWithinGibbs && sweep % TUNE_WINDOW == 0 && tried_win > 0 {
            let rate = acc_win as f64 / tried_win as f64;
            sd *= (rate - TARGET_ACCEPTANCE).exp();
            acc_win = 0;
            tried_win = 0;
        }
        if sweep % REFRESH_EVERY == 0 {
            let drift = st.refresh()?;
            trace.max_cache_drift = trace.max_cache_drift.max(drift);
        }
        if post && (sweep - cfg.burn_in) % cfg.thin == 0 {
            trace.sweep.push(sweep);
            trace.statistics.push(st.stats.clone());
            trace.edge_mean.push(st.edge_mean());
        }
    }
    if cfg.kernel == ChainKernel::MhWithinGibbs {
        trace.acceptance_rate = if tried_post > 0 {
            acc_post as f64 / tried_post as f64
        } else {
            acc_win as f64 / tried_win.max(1) as f64
        };
    }
    trace.proposal_sd = sd;
    trace.final_state = st.g;
    Ok(trace)
}

/// ±1 proposal reflected at the support boundary, with its log Hastings
/// correction `ln q(new→old) − ln q(old→new)`.
fn propose_discrete(base: BaseMeasure, old: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    match base {
        BaseMeasure::Bernoulli { .. } => (1.0 - old, 0.0),
        _ => {
            if old <= 0.0 {
                (1.0, -std::f64::consts::LN_2)
            } else {
                let up = rng.random_bool(0.5);
                let new = if up { old + 1.0 } else { old - 1.0 };
                let corr = if new == 0.0 { std::f64::consts::LN_2 } else { 0.0 };
                (new, corr)
            }
        }
    }
}

/// Run independent chains in parallel; results keep the input order.
pub fn run_chains(cfgs: &[ChainConfig]) -> Vec<Result<ChainTrace>> {
    cfgs.par_iter().map(run_chain).collect()
}

/// Integrated autocorrelation time with Sokal's adaptive window (c = 5).
pub fn autocorr_time(xs: &[f64]) -> f64 {
    let m = xs.len();
    if m < 4 {
        return 1.0;
    }
    let mean = xs.iter().sum::<f64>() / m as f64;
    let c: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let var = c.iter().map(|x| x * x).sum::<f64>() / m as f64;
    if var == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..m / 2 {
        let rho = c[..m - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / (m as f64 * var);
        tau += 2.0 * rho;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Largest `n` accepted by [`estimate_psi_mc`].
pub const MC_MAX_N: usize = 6;
const MC_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiEstimate {
    pub psi_hat: f64,
    pub stderr: f64,
    pub ess: f64,
    pub draws: usize,
}

/// `(1/n²) ln mean exp(n²T(x))` over i.i.d. base-measure graphs.
pub fn estimate_psi_mc(spec: &ModelSpec, n: usize, draws: usize, seed: u64) -> Result<PsiEstimate> {
    spec.validate()?;
    if !(2..=MC_MAX_N).contains(&n) {
        return Err(Error::Argument(format!("direct Monte Carlo needs 2 <= n <= {MC_MAX_N}, got {n}")));
    }
    if draws < 10_000 {
        return Err(Error::Argument(format!("need at least 10^4 draws, got {draws}")));
    }
    let chunks = draws.div_ceil(MC_CHUNK);
    let parts: Vec<Result<LogSumAcc>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = MC_CHUNK.min(draws - c * MC_CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut bs = BaseSampler::new(spec.base)?;
            let mut g = WeightedGraph::empty(n);
            let mut acc = LogSumAcc::default();
            for _ in 0..count {
                for i in 0..n {
                    for j in (i + 1)..n {
                        g.set(i, j, bs.draw(&mut rng)?);
                    }
                }
                acc.push(spec.hamiltonian(&g)?);
            }
            Ok(acc)
        })
        .collect();
    let mut acc = LogSumAcc::default();
    for p in parts {
        acc = acc.merge(p?);
    }
    let n2 = (n * n) as f64;
    let est = PsiEstimate {
        psi_hat: acc.log_mean() / n2,
        stderr: acc.log_mean_stderr() / n2,
        ess: acc.ess(),
        draws,
    };
    if !(est.ess >= 100.0) {
        return Err(Error::Unreliable { psi_hat: est.psi_hat, stderr: est.stderr, ess: est.ess });
    }
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationThresholds {
    pub distance: f64,
    pub mean_gap: f64,
}

impl Default for ConcentrationThresholds {
    fn default() -> Self {
        ConcentrationThresholds { distance: 0.15, mean_gap: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    /// `min_{u∈K} δ(embed(final_state), u)`.
    pub distance: f64,
    /// Time average of `|edge mean − nearest u|`.
    pub mean_gap: f64,
    pub passed: bool,
    pub thresholds: ConcentrationThresholds,
}

pub fn concentration_check(
    trace: &ChainTrace,
    solution: &VariationalSolution,
    thresholds: ConcentrationThresholds,
) -> ConcentrationReport {
    let k = &solution.maximizers;
    let distance = distance_to_constant_set(&embed(&trace.final_state), k, &CutOptions::default())
        .unwrap_or(f64::INFINITY);
    let nearest = |x: f64| k.iter().map(|u| (x - u).abs()).fold(f64::INFINITY, f64::min);
    let mean_gap = if trace.edge_mean.is_empty() {
        nearest(trace.final_state.edge_mean())
    } else {
        trace.edge_mean.iter().map(|&x| nearest(x)).sum::<f64>() / trace.edge_mean.len() as f64
    };
    ConcentrationReport {
        distance,
        mean_gap,
        passed: distance < thresholds.distance && mean_gap < thresholds.mean_gap,
        thresholds,
    }
}

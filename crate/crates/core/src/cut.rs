//! Cut distance `d` and its relabeling-invariant version `δ` between step
//! kernels of equal resolution.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::StepKernel;

/// Largest resolution the exact subset sweep accepts.
pub const EXACT_D_MAX_N: usize = 22;
/// Largest resolution the exact permutation sweep accepts.
pub const EXACT_DELTA_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutMode {
    Exact,
    Heuristic,
    /// Exact when the resolution allows it, heuristic otherwise.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutOptions {
    /// Random restarts of the set-improvement search for `d`.
    pub restarts: usize,
    /// Extra random-start hill climbs for heuristic `δ` on top of the
    /// row-sum-sorted start.
    pub delta_restarts: usize,
    /// Restarts for the `d` evaluations inside a δ hill climb; the best
    /// permutation is re-scored with `restarts`.
    pub climb_restarts: usize,
    /// Non-improving swaps before a climb stops; `n²` when absent.
    pub stale_limit: Option<usize>,
    pub seed: u64,
}

impl Default for CutOptions {
    fn default() -> Self {
        CutOptions { restarts: 200, delta_restarts: 8, climb_restarts: 20, stale_limit: None, seed: 0x5eed }
    }
}

fn check_same(k1: &StepKernel, k2: &StepKernel) -> Result<()> {
    if k1.resolution() != k2.resolution() {
        return Err(Error::Argument(format!(
            "resolution mismatch: {} vs {}; refine to a common resolution first",
            k1.resolution(),
            k2.resolution()
        )));
    }
    Ok(())
}

fn pos_neg(c: &[f64]) -> f64 {
    let (mut p, mut m) = (0.0, 0.0);
    for &x in c {
        if x > 0.0 {
            p += x;
        } else {
            m -= x;
        }
    }
    p.max(m)
}

/// `max_{S,T} |Σ_{S×T} diff|` by Gray-code enumeration of `S`.
fn exact_cut_norm(diff: &[f64], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let high = n.saturating_sub(10).min(6);
    let low = n - high;
    (0..1usize << high)
        .into_par_iter()
        .map(|block| {
            let mut c = vec![0.0; n];
            for h in 0..high {
                if block >> h & 1 == 1 {
                    let row = &diff[(low + h) * n..(low + h + 1) * n];
                    c.iter_mut().zip(row).for_each(|(ci, r)| *ci += r);
                }
            }
            let mut inside = vec![false; low];
            let mut best = pos_neg(&c);
            for g in 1usize..(1 << low) {
                let b = g.trailing_zeros() as usize;
                let row = &diff[b * n..(b + 1) * n];
                if inside[b] {
                    c.iter_mut().zip(row).for_each(|(ci, r)| *ci -= r);
                } else {
                    c.iter_mut().zip(row).for_each(|(ci, r)| *ci += r);
                }
                inside[b] = !inside[b];
                best = best.max(pos_neg(&c));
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// Alternating best response between `S` and `T` from random starts.
fn heuristic_cut_norm(diff: &[f64], n: usize, restarts: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    let mut s = vec![false; n];
    let mut t = vec![false; n];
    let mut col = vec![0.0; n];
    let mut row = vec![0.0; n];
    for _ in 0..restarts.max(1) {
        for sign in [1.0, -1.0] {
            s.iter_mut().for_each(|x| *x = rng.random_bool(0.5));
            let mut value = f64::NEG_INFINITY;
            loop {
                col.iter_mut().for_each(|x| *x = 0.0);
                for i in (0..n).filter(|&i| s[i]) {
                    for j in 0..n {
                        col[j] += sign * diff[i * n + j];
                    }
                }
                for j in 0..n {
                    t[j] = col[j] > 0.0;
                }
                row.iter_mut().for_each(|x| *x = 0.0);
                for i in 0..n {
                    for j in (0..n).filter(|&j| t[j]) {
                        row[i] += sign * diff[i * n + j];
                    }
                }
                let v: f64 = row.iter().filter(|&&x| x > 0.0).sum();
                for i in 0..n {
                    s[i] = row[i] > 0.0;
                }
                if v <= value + 1e-15 * v.abs().max(1.0) {
                    break;
                }
                value = v;
            }
            best = best.max(value);
        }
    }
    best
}

fn cut_norm(diff: &[f64], n: usize, mode: CutMode, opts: &CutOptions) -> Result<f64> {
    let scale = (n * n) as f64;
    match mode {
        CutMode::Exact if n > EXACT_D_MAX_N => Err(Error::TooLarge(format!(
            "exact cut distance needs n <= {EXACT_D_MAX_N}, got {n}; use heuristic mode"
        ))),
        // `+ 0.0` turns the empty-sum −0.0 into +0.0
        CutMode::Exact => Ok(exact_cut_norm(diff, n) / scale + 0.0),
        CutMode::Auto if n <= EXACT_D_MAX_N => Ok(exact_cut_norm(diff, n) / scale + 0.0),
        _ => Ok(heuristic_cut_norm(diff, n, opts.restarts, opts.seed) / scale + 0.0),
    }
}

/// Cut distance `d(k1, k2)`. Heuristic mode returns a lower bound.
pub fn cut_distance_d(k1: &StepKernel, k2: &StepKernel, mode: CutMode, opts: &CutOptions) -> Result<f64> {
    check_same(k1, k2)?;
    let diff = k1.diff(k2)?;
    cut_norm(diff.values(), k1.resolution(), mode, opts)
}

fn d_under(k1: &StepKernel, k2: &StepKernel, sigma: &[usize], opts: &CutOptions) -> Result<f64> {
    let n = k1.resolution();
    let mut diff = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            diff[i * n + j] = k1.get(sigma[i], sigma[j]) - k2.get(i, j);
        }
    }
    cut_norm(&diff, n, CutMode::Auto, opts)
}

/// `δ(k1, k2) = min_σ d(σ k1, k2)` over node permutations. Heuristic mode
/// returns an upper bound on the permutation minimum.
pub fn cut_distance_delta(
    k1: &StepKernel,
    k2: &StepKernel,
    mode: CutMode,
    opts: &CutOptions,
) -> Result<f64> {
    check_same(k1, k2)?;
    let n = k1.resolution();
    let exact = match mode {
        CutMode::Exact if n > EXACT_DELTA_MAX_N => {
            return Err(Error::TooLarge(format!(
                "exact delta needs n <= {EXACT_DELTA_MAX_N}, got {n}; use heuristic mode"
            )))
        }
        CutMode::Exact => true,
        CutMode::Auto => n <= EXACT_DELTA_MAX_N,
        CutMode::Heuristic => false,
    };
    if exact {
        exact_delta(k1, k2, opts)
    } else {
        heuristic_delta(k1, k2, opts)
    }
}

fn exact_delta(k1: &StepKernel, k2: &StepKernel, opts: &CutOptions) -> Result<f64> {
    let n = k1.resolution();
    let mut sigma: Vec<usize> = (0..n).collect();
    let mut best = d_under(k1, k2, &sigma, opts)?;
    // Heap's algorithm
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                sigma.swap(0, i);
            } else {
                sigma.swap(c[i], i);
            }
            best = best.min(d_under(k1, k2, &sigma, opts)?);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

fn row_sum_order(k: &StepKernel) -> Vec<usize> {
    let n = k.resolution();
    let sums: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k.get(i, j)).sum()).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| sums[a].total_cmp(&sums[b]));
    idx
}

fn hill_climb(
    k1: &StepKernel,
    k2: &StepKernel,
    mut sigma: Vec<usize>,
    rng: &mut ChaCha8Rng,
    opts: &CutOptions,
) -> Result<(f64, Vec<usize>)> {
    let n = k1.resolution();
    let inner = CutOptions { restarts: opts.climb_restarts.max(1), ..opts.clone() };
    let mut value = d_under(k1, k2, &sigma, &inner)?;
    if n < 2 {
        return Ok((value, sigma));
    }
    let mut stale = 0;
    let limit = opts.stale_limit.unwrap_or(n * n);
    while stale < limit && value > 0.0 {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        sigma.swap(a, b);
        let v = d_under(k1, k2, &sigma, &inner)?;
        if v < value - 1e-15 {
            value = v;
            stale = 0;
        } else {
            sigma.swap(a, b);
            stale += 1;
        }
    }
    Ok((value, sigma))
}

fn heuristic_delta(k1: &StepKernel, k2: &StepKernel, opts: &CutOptions) -> Result<f64> {
    let n = k1.resolution();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xde17a);
    let (o1, o2) = (row_sum_order(k1), row_sum_order(k2));
    let mut sigma = vec![0; n];
    for r in 0..n {
        sigma[o2[r]] = o1[r];
    }
    let mut best = hill_climb(k1, k2, sigma, &mut rng, opts)?;
    for _ in 0..opts.delta_restarts {
        if best.0 <= 0.0 {
            break;
        }
        let mut s: Vec<usize> = (0..n).collect();
        s.shuffle(&mut rng);
        let cand = hill_climb(k1, k2, s, &mut rng, opts)?;
        if cand.0 < best.0 {
            best = cand;
        }
    }
    if opts.climb_restarts >= opts.restarts || n <= EXACT_D_MAX_N {
        return Ok(best.0);
    }
    d_under(k1, k2, &best.1, opts)
}

/// `min_{u ∈ K} δ(k, u)`; against a constant kernel `δ` equals `d`.
pub fn distance_to_constant_set(k: &StepKernel, targets: &[f64], opts: &CutOptions) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Argument("target set K is empty".into()));
    }
    let n = k.resolution();
    let mut best = f64::INFINITY;
    for &u in targets {
        let diff: Vec<f64> = k.values().iter().map(|&x| x - u).collect();
        best = best.min(cut_norm(&diff, n, CutMode::Auto, opts)?);
    }
    Ok(best)
}

//! Closed-form partition function of the Gaussian edge-two-star model
//! `n²T(x) = β₁ Σ_{i≠j} x_ij + (β₂/n) Σ_i (Σ_j x_ij)²` over i.i.d. N(0,1) edges.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTwoStarParams {
    pub n: usize,
    pub beta1: f64,
    pub beta2: f64,
}

impl GaussianTwoStarParams {
    pub fn new(n: usize, beta1: f64, beta2: f64) -> Result<Self> {
        let p = GaussianTwoStarParams { n, beta1, beta2 };
        p.check()?;
        Ok(p)
    }

    /// `n / (4(n−1))`; the partition function is finite strictly below it.
    pub fn beta2_limit(n: usize) -> f64 {
        n as f64 / (4.0 * (n as f64 - 1.0))
    }

    fn check(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Argument(format!("closed form needs n >= 3, got {}", self.n)));
        }
        if !self.beta1.is_finite() || !self.beta2.is_finite() {
            return Err(Error::Argument("non-finite coefficient".into()));
        }
        if self.beta2 >= Self::beta2_limit(self.n) {
            return Err(Error::Divergent(format!(
                "beta2 = {} >= n/(4(n-1)) = {} at n = {}",
                self.beta2,
                Self::beta2_limit(self.n),
                self.n
            )));
        }
        Ok(())
    }

    /// `(a, b) = (1 − 4β₂(n−1)/n, 1 − 2β₂(n−2)/n)`.
    fn ab(&self) -> (f64, f64) {
        let n = self.n as f64;
        (1.0 - 4.0 * self.beta2 * (n - 1.0) / n, 1.0 - 2.0 * self.beta2 * (n - 2.0) / n)
    }
}

/// `ln ψ_n`.
pub fn log_psi_exact(p: &GaussianTwoStarParams) -> Result<f64> {
    p.check()?;
    let n = p.n as f64;
    let (a, b) = p.ab();
    Ok(-0.5 * a.ln() + p.beta1 * p.beta1 * n * (n - 1.0) / a - 0.5 * (n - 1.0) * b.ln())
}

/// `ψ_n` itself; overflows to `inf` for large `n`.
pub fn psi_exact(p: &GaussianTwoStarParams) -> Result<f64> {
    Ok(log_psi_exact(p)?.exp())
}

/// `lim (1/n²) ln ψ_n = β₁² / (1 − 4β₂)`.
pub fn psi_limit(beta1: f64, beta2: f64) -> Result<f64> {
    if !(beta2 < 0.25) {
        return Err(Error::Divergent(format!("beta2 = {beta2} >= 1/4")));
    }
    Ok(beta1 * beta1 / (1.0 - 4.0 * beta2))
}

/// `(∂ ln ψ_n/∂β₁, ∂ ln ψ_n/∂β₂) = (E Σ_{i≠j} x_ij, E (1/n) Σ_i r_i²)`.
pub fn moments_exact(p: &GaussianTwoStarParams) -> Result<(f64, f64)> {
    p.check()?;
    let n = p.n as f64;
    let (a, b) = p.ab();
    let d1 = 2.0 * p.beta1 * n * (n - 1.0) / a;
    let d2 = 2.0 * (n - 1.0) / (n * a)
        + 4.0 * p.beta1 * p.beta1 * (n - 1.0) * (n - 1.0) / (a * a)
        + (n - 1.0) * (n - 2.0) / (n * b);
    Ok((d1, d2))
}

/// Hessian of `ln ψ_n` in `(β₁, β₂)`, i.e. the covariance of the two sums.
pub fn hessian_exact(p: &GaussianTwoStarParams) -> Result<[[f64; 2]; 2]> {
    p.check()?;
    let n = p.n as f64;
    let (a, b) = p.ab();
    let da = 4.0 * (n - 1.0) / n; // −∂a/∂β₂
    let db = 2.0 * (n - 2.0) / n;
    let h11 = 2.0 * n * (n - 1.0) / a;
    let h12 = 2.0 * p.beta1 * n * (n - 1.0) * da / (a * a);
    let h22 = 2.0 * (n - 1.0) * da / (n * a * a)
        + 8.0 * p.beta1 * p.beta1 * (n - 1.0) * (n - 1.0) * da / (a * a * a)
        + (n - 1.0) * (n - 2.0) * db / (n * b * b);
    Ok([[h11, h12], [h12, h22]])
}

/// Eigenvalues (ascending) of the `n × n` matrix with diagonal `n−1` and unit
/// off-diagonal entries.
pub fn covariance_spectrum(n: usize) -> Vec<f64> {
    let m = DMatrix::from_fn(n, n, |i, j| if i == j { n as f64 - 1.0 } else { 1.0 });
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// One row of the finite-`n` convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub log_psi: f64,
    pub scaled: f64,
    pub limit: f64,
    pub gap: f64,
}

pub fn convergence_row(n: usize, beta1: f64, beta2: f64) -> Result<ConvergenceRow> {
    let log_psi = log_psi_exact(&GaussianTwoStarParams::new(n, beta1, beta2)?)?;
    let scaled = log_psi / (n * n) as f64;
    let limit = psi_limit(beta1, beta2)?;
    Ok(ConvergenceRow { n, beta1, beta2, log_psi, scaled, limit, gap: (scaled - limit).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: usize, b1: f64, b2: f64) -> GaussianTwoStarParams {
        GaussianTwoStarParams::new(n, b1, b2).unwrap()
    }

    #[test]
    fn trivial_and_limit_values() {
        assert_eq!(psi_exact(&p(3, 0.0, 0.0)).unwrap(), 1.0);
        assert_eq!(psi_limit(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(psi_limit(0.0, 0.2).unwrap(), 0.0);
        assert!((psi_limit(0.1, 0.1).unwrap() - 0.01 / 0.6).abs() < 1e-16);
        assert!(matches!(psi_limit(0.0, 0.25), Err(Error::Divergent(_))));
        assert!(matches!(GaussianTwoStarParams::new(3, 0.0, 0.375), Err(Error::Divergent(_))));
        assert!(GaussianTwoStarParams::new(3, 0.0, 0.3749).is_ok());
        assert!(GaussianTwoStarParams::new(2, 0.0, 0.0).is_err());
    }

    #[test]
    fn n3_by_direct_gaussian_integral() {
        // n = 3: x = (x01, x02, x12); exponent is β₁ 2Σx + (β₂/3) Σ_i r_i²,
        // r = (x01+x02, x01+x12, x02+x12). Gaussian integral with quadratic
        // form Q: ψ = det(I − 2A)^{-1/2} exp(½ bᵀ (I − 2A)^{-1} b).
        let (b1, b2) = (0.1, 0.1);
        let rows = [[1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        let mut a = DMatrix::<f64>::zeros(3, 3);
        for r in rows {
            for i in 0..3 {
                for j in 0..3 {
                    a[(i, j)] += b2 / 3.0 * r[i] * r[j];
                }
            }
        }
        let m = DMatrix::<f64>::identity(3, 3) - a * 2.0;
        let bvec = nalgebra::DVector::from_element(3, 2.0 * b1);
        let inv = m.clone().try_inverse().unwrap();
        let lnpsi = -0.5 * m.determinant().ln() + 0.5 * (bvec.transpose() * inv * &bvec)[(0, 0)];
        assert!((log_psi_exact(&p(3, b1, b2)).unwrap() - lnpsi).abs() < 1e-12);
    }

    #[test]
    fn moments_match_finite_differences() {
        for &(n, b1, b2) in &[(3, 0.1, 0.1), (4, 0.05, 0.2), (10, -0.7, 0.15), (50, 1.0, -0.3)] {
            let q = p(n, b1, b2);
            let (m1, m2) = moments_exact(&q).unwrap();
            let h = 1e-6;
            let f = |x: f64, y: f64| log_psi_exact(&p(n, x, y)).unwrap();
            let fd1 = (f(b1 + h, b2) - f(b1 - h, b2)) / (2.0 * h);
            let fd2 = (f(b1, b2 + h) - f(b1, b2 - h)) / (2.0 * h);
            assert!((m1 - fd1).abs() <= 1e-5 * m1.abs().max(1.0), "{m1} vs {fd1}");
            assert!((m2 - fd2).abs() <= 1e-5 * m2.abs().max(1.0), "{m2} vs {fd2}");
            let hs = hessian_exact(&q).unwrap();
            let g = |x: f64, y: f64| moments_exact(&p(n, x, y)).unwrap();
            let h12 = (g(b1, b2 + h).0 - g(b1, b2 - h).0) / (2.0 * h);
            let h22 = (g(b1, b2 + h).1 - g(b1, b2 - h).1) / (2.0 * h);
            assert!((hs[0][1] - h12).abs() <= 1e-5 * h12.abs().max(1.0));
            assert!((hs[1][1] - h22).abs() <= 1e-5 * h22.abs().max(1.0));
        }
        // independent edges at zero tilt
        let (m1, m2) = moments_exact(&p(7, 0.0, 0.0)).unwrap();
        assert_eq!(m1, 0.0);
        assert!((m2 - 6.0).abs() < 1e-12);
        let big = p(100_000, 1.0, 0.0);
        assert!((moments_exact(&big).unwrap().0 / 1e10 - 2.0).abs() < 1e-4);
    }

    #[test]
    fn covariance_eigenvalues() {
        for n in [3usize, 5, 8] {
            let ev = covariance_spectrum(n);
            for &e in &ev[..n - 1] {
                assert!((e - (n as f64 - 2.0)).abs() < 1e-9);
            }
            assert!((ev[n - 1] - 2.0 * (n as f64 - 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn edge_mean_is_smooth_in_beta1() {
        let slope = |b1: f64| moments_exact(&p(50, b1, 0.2)).unwrap().0;
        let xs: Vec<f64> = (0..=600).map(|i| -3.0 + 0.01 * i as f64).collect();
        let d: Vec<f64> = xs.windows(2).map(|w| (slope(w[1]) - slope(w[0])).abs()).collect();
        for w in d.windows(2) {
            assert!(w[1] <= 10.0 * w[0] + 1e-12);
        }
    }

    #[test]
    fn scaled_log_partition_approaches_limit() {
        let gaps: Vec<f64> =
            [10, 50, 250, 1000].iter().map(|&n| convergence_row(n, 1.0, 0.1).unwrap().gap).collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]));
        assert!(gaps[3] < 5e-3);
    }
}

//! Closed forms for the exchangeable Ornstein–Uhlenbeck particle system
//! dXⁱ = −(a Xⁱ + b/(n−1) Σ_{j≠i} Xʲ) dt + dWⁱ started at 0.
//!
//! Every covariance involved lives in span{I, J} and is stored as v(I − cJ),
//! with eigenvalues v (multiplicity dim − 1) and v(1 − c·dim) (multiplicity 1).
//! Differences of exponentials go through `exp_m1` so the n = 10⁶–10⁷ sweeps
//! keep full relative precision.

use thiserror::Error;

use crate::model::GaussianOUParams;
use crate::special::{ratio_divergence, sqrt_diff_sq};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("time must be > 0 (got {0})")]
    NonPositiveTime(f64),
    #[error("need n ≥ 2 particles (got {0})")]
    TooFewParticles(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("covariance is not positive definite (v={v}, c={c}, dim={dim})")]
    NotPositiveDefinite { v: f64, c: f64, dim: usize },
    #[error("marginal size {k} out of range 1..={dim}")]
    MarginalOutOfRange { k: usize, dim: usize },
}

/// Covariance v(I − cJ) on `dim` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeableCovariance {
    pub dim: usize,
    pub v: f64,
    pub c: f64,
    pub source_n: Option<usize>,
}

impl ExchangeableCovariance {
    pub fn new(dim: usize, v: f64, c: f64) -> Result<Self, GaussianError> {
        let cov = Self { dim, v, c, source_n: None };
        cov.check_pd()?;
        Ok(cov)
    }

    /// v·I, the product-measure covariance.
    pub fn diagonal(dim: usize, v: f64) -> Result<Self, GaussianError> {
        Self::new(dim, v, 0.0)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.dim >= 1 && self.v > 0.0 && self.v.is_finite() && self.c.is_finite() && self.c * (self.dim as f64) < 1.0
    }

    fn check_pd(&self) -> Result<(), GaussianError> {
        if self.is_positive_definite() {
            Ok(())
        } else {
            Err(GaussianError::NotPositiveDefinite { v: self.v, c: self.c, dim: self.dim })
        }
    }

    /// (bulk eigenvalue with multiplicity dim−1, eigenvalue along the all-ones vector)
    pub fn eigenvalues(&self) -> (f64, f64) {
        (self.v, self.v * (1.0 - self.c * self.dim as f64))
    }

    pub fn diagonal_entry(&self) -> f64 {
        self.v * (1.0 - self.c)
    }

    pub fn off_diagonal_entry(&self) -> f64 {
        -self.v * self.c
    }

    /// Dense row-major matrix.
    pub fn to_dense(&self) -> Vec<f64> {
        let k = self.dim;
        let mut m = vec![self.off_diagonal_entry(); k * k];
        for i in 0..k {
            m[i * k + i] = self.diagonal_entry();
        }
        m
    }
}

fn check_time(t: f64) -> Result<(), GaussianError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(GaussianError::NonPositiveTime(t))
    }
}

/// Covariance Σⁿ_t = ∫₀ᵗ e^{−2sA_n} ds of the n-particle system, A_n = aI + b/(n−1)·J.
pub fn ou_covariance_flow(p: GaussianOUParams, n: usize, t: f64) -> Result<ExchangeableCovariance, GaussianError> {
    check_time(t)?;
    if n < 2 {
        return Err(GaussianError::TooFewParticles(n));
    }
    let a = p.a;
    let nf = n as f64;
    let rate = a + p.b * nf / (nf - 1.0);
    let v = -(-2.0 * a * t).exp_m1() / (2.0 * a);
    let ratio = (a / rate) * ((-2.0 * t * rate).exp_m1() / (-2.0 * a * t).exp_m1());
    let c = (1.0 - ratio) / nf;
    Ok(ExchangeableCovariance { dim: n, v, c, source_n: Some(n) })
}

/// Law of the first k coordinates: same (v, c), dimension k.
pub fn restrict_marginal(cov: &ExchangeableCovariance, k: usize) -> Result<ExchangeableCovariance, GaussianError> {
    if k < 1 || k > cov.dim {
        return Err(GaussianError::MarginalOutOfRange { k, dim: cov.dim });
    }
    Ok(ExchangeableCovariance { dim: k, ..*cov })
}

fn check_pair(c1: &ExchangeableCovariance, c2: &ExchangeableCovariance) -> Result<(), GaussianError> {
    if c1.dim != c2.dim {
        return Err(GaussianError::DimensionMismatch(c1.dim, c2.dim));
    }
    c1.check_pd()?;
    c2.check_pd()
}

/// Squared W₂ between N(0, Σ₁) and N(0, Σ₂) for commuting exchangeable covariances.
pub fn w2_exchangeable(c1: &ExchangeableCovariance, c2: &ExchangeableCovariance) -> Result<f64, GaussianError> {
    check_pair(c1, c2)?;
    let (b1, t1) = c1.eigenvalues();
    let (b2, t2) = c2.eigenvalues();
    Ok((c1.dim as f64 - 1.0) * sqrt_diff_sq(b1, b2) + sqrt_diff_sq(t1, t2))
}

/// Relative entropy H(N(0, Σ₁) | N(0, Σ₂)) in nats.
pub fn kl_exchangeable(c1: &ExchangeableCovariance, c2: &ExchangeableCovariance) -> Result<f64, GaussianError> {
    check_pair(c1, c2)?;
    let k = c1.dim as f64;
    let (b1, _) = c1.eigenvalues();
    let (b2, t2) = c2.eigenvalues();
    let bulk_delta = (b1 - b2) / b2;
    // λ₁ − λ₂ along the all-ones direction, formed without subtracting two O(1) numbers
    let top_gap = (c1.v - c2.v) - k * (c1.v * c1.c - c2.v * c2.c);
    let top_delta = top_gap / t2;
    Ok(0.5 * ((k - 1.0) * ratio_divergence(bulk_delta) + ratio_divergence(top_delta)))
}

/// lim_{n→∞} n·c_n(t).
pub fn nc_limit(p: GaussianOUParams, t: f64) -> Result<f64, GaussianError> {
    check_time(t)?;
    let (a, b) = (p.a, p.b);
    Ok(1.0 - (a / (a + b)) * ((-2.0 * t * (a + b)).exp_m1() / (-2.0 * a * t).exp_m1()))
}

/// Variance (1 − e^{−2at})/(2a) of the mean-field law μ_t.
pub fn mean_field_variance(p: GaussianOUParams, t: f64) -> Result<f64, GaussianError> {
    check_time(t)?;
    Ok(-(-2.0 * p.a * t).exp_m1() / (2.0 * p.a))
}

/// lim (n/k)²·W₂²(P^{(n,k)}_t, μ_t^{⊗k}) as n → ∞ with k/n → 0.
pub fn w2_rate_limit(p: GaussianOUParams, t: f64) -> Result<f64, GaussianError> {
    let nc = nc_limit(p, t)?;
    Ok(nc * nc * mean_field_variance(p, t)? / 4.0)
}

/// lim (n/k)²·H(P^{(n,k)}_t | μ_t^{⊗k}) = (lim n c_n)²/4.
pub fn kl_rate_limit(p: GaussianOUParams, t: f64) -> Result<f64, GaussianError> {
    let nc = nc_limit(p, t)?;
    Ok(nc * nc / 4.0)
}

/// k-marginal of the n-particle law and μ_t^{⊗k}, ready for the distance functions.
pub fn marginal_and_product(
    p: GaussianOUParams,
    n: usize,
    k: usize,
    t: f64,
) -> Result<(ExchangeableCovariance, ExchangeableCovariance), GaussianError> {
    let full = ou_covariance_flow(p, n, t)?;
    let marginal = restrict_marginal(&full, k)?;
    let product = ExchangeableCovariance::diagonal(k, mean_field_variance(p, t)?)?;
    Ok((marginal, product))
}

/// Covariance of the Euler–Maruyama chain x ← (I − dt·A_n)x + √dt·ξ after `steps` steps from 0.
///
/// This is the exact law of the discretized OU system, used to separate
/// discretization bias from Monte Carlo noise.
pub fn euler_ou_covariance(
    p: GaussianOUParams,
    n: usize,
    dt: f64,
    steps: usize,
) -> Result<ExchangeableCovariance, GaussianError> {
    if n < 2 {
        return Err(GaussianError::TooFewParticles(n));
    }
    check_time(dt)?;
    let nf = n as f64;
    // (x, y) represents xI + yJ
    let mul = |(x1, y1): (f64, f64), (x2, y2): (f64, f64)| (x1 * x2, x1 * y2 + x2 * y1 + nf * y1 * y2);
    let step = (1.0 - p.a * dt, -p.b * dt / (nf - 1.0));
    let step_sq = mul(step, step);
    let mut sigma = (0.0, 0.0);
    for _ in 0..steps {
        let s = mul(step_sq, sigma);
        sigma = (s.0 + dt, s.1);
    }
    Ok(ExchangeableCovariance { dim: n, v: sigma.0, c: -sigma.1 / sigma.0, source_n: Some(n) })
}

//! Iterated exponential integrals A_ℓ, B_ℓ and the explicit propagation-of-chaos bounds.
//!
//! A_ℓ(t) is the CDF at t of Z₀ + … + Z_ℓ with independent Z_j ~ Exp(a + bj),
//! which equals P(Y ≥ e^{−bt}) for Y ~ Beta(a/b, ℓ + 1). Three independent
//! routes are provided: the Beta closed form ([`a_closed`]), nested quadrature
//! of the defining iterated integral ([`a_quadrature_oracle`]) and Monte Carlo
//! ([`a_montecarlo_oracle`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::SeriesCoefficients;
use crate::special::{beta_inc_reg, gamma_ratio_rising, ln_gamma};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("time must be ≥ 0 (got {0})")]
    NegativeTime(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("quadrature oracle supports ℓ ≤ 5 (got {0})")]
    QuadratureTooDeep(usize),
    #[error("quadrature did not reach tolerance after {panels} panels")]
    QuadratureTolerance { panels: usize },
    #[error("remainder budget unreachable within {cap} terms (remainder bound {remainder:e})")]
    RemainderBudget { cap: usize, remainder: f64 },
    #[error("precondition n ≥ {required_n} violated (n = {n})")]
    Precondition { n: usize, required_n: usize },
    #[error("precondition violated: {0}")]
    Range(String),
    #[error("series tolerance unreachable within {0} terms")]
    SeriesTolerance(usize),
    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),
}

/// Base rate a and increment rate b of the exponential chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ABParams {
    pub a: f64,
    pub b: f64,
}

impl ABParams {
    pub fn new(a: f64, b: f64) -> Result<Self, BoundsError> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(BoundsError::InvalidParams(format!("need a, b > 0 (got a={a}, b={b})")));
        }
        Ok(Self { a, b })
    }

    fn alpha(&self) -> f64 {
        self.a / self.b
    }

    fn rate(&self, j: usize) -> f64 {
        self.a + self.b * j as f64
    }
}

fn check_t(t: f64) -> Result<(), BoundsError> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::NegativeTime(t))
    }
}

/// A_ℓ(t) via the regularized incomplete beta function.
pub fn a_closed(p: ABParams, ell: usize, t: f64) -> Result<f64, BoundsError> {
    check_t(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    // P(Y ≥ x) = I_{1−x}(ℓ+1, a/b), with 1 − x = −expm1(−bt)
    let y = -(-p.b * t).exp_m1();
    beta_inc_reg((ell + 1) as f64, p.alpha(), y)
        .ok_or_else(|| BoundsError::InvalidParams("incomplete beta domain".into()))
}

/// B_ℓ(t) = A_ℓ′(t)/(a + bℓ), with B₀(t) = e^{−at}.
pub fn b_closed(p: ABParams, ell: usize, t: f64) -> Result<f64, BoundsError> {
    check_t(t)?;
    if ell == 0 {
        return Ok((-p.a * t).exp());
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let alpha = p.alpha();
    let l = ell as f64;
    let y = -(-p.b * t).exp_m1();
    let ln_val = p.b.ln() - p.a * t + ln_gamma(l + alpha + 1.0) - ln_gamma(l + 1.0) - ln_gamma(alpha) + l * y.ln()
        - p.rate(ell).ln();
    Ok(ln_val.exp())
}

/// Upper bound on A_ℓ(t) from the subgaussian tail of Beta(a/b, ℓ+1).
pub fn a_subgaussian_bound(p: ABParams, ell: usize, t: f64) -> f64 {
    let alpha = p.alpha();
    let l = ell as f64;
    let gap = ((-p.b * t).exp() - alpha / (l + alpha + 1.0)).max(0.0);
    (-2.0 * (l + alpha + 2.0) * gap * gap).exp()
}

// --- nested quadrature ---------------------------------------------------

const GL_ORDER: usize = 12;
const QUAD_TOL: f64 = 1e-10;

struct GaussLegendre {
    nodes: [f64; GL_ORDER],
    weights: [f64; GL_ORDER],
    // barycentric weights for Lagrange interpolation through `nodes`
    bary: [f64; GL_ORDER],
}

impl GaussLegendre {
    fn new() -> Self {
        let n = GL_ORDER;
        let mut nodes = [0.0; GL_ORDER];
        let mut weights = [0.0; GL_ORDER];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        let mut bary = [1.0; GL_ORDER];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    bary[i] /= nodes[i] - nodes[j];
                }
            }
        }
        Self { nodes, weights, bary }
    }

    /// Interpolates values given at the reference nodes, at reference point x ∈ [−1, 1].
    fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..GL_ORDER {
            let diff = x - self.nodes[i];
            if diff == 0.0 {
                return values[i];
            }
            let w = self.bary[i] / diff;
            num += w * values[i];
            den += w;
        }
        num / den
    }
}

/// One Volterra level: g(s) = ∫₀ˢ e^{−c(s−u)} f(u) du on `panels` equal panels of [0, t0],
/// where f is given by its values at the Gauss nodes of each panel.
/// Returns (values of g at the same nodes, g(t0)).
fn volterra_level(gl: &GaussLegendre, c: f64, f: &[f64], t0: f64, panels: usize) -> (Vec<f64>, f64) {
    let h = t0 / panels as f64;
    let mut out = vec![0.0; f.len()];
    let mut at_start = 0.0;
    for p in 0..panels {
        let s0 = p as f64 * h;
        let fp = &f[p * GL_ORDER..(p + 1) * GL_ORDER];
        for m in 0..GL_ORDER {
            let x = s0 + 0.5 * h * (gl.nodes[m] + 1.0);
            let half = 0.5 * (x - s0);
            let mut partial = 0.0;
            for q in 0..GL_ORDER {
                let u = s0 + half * (gl.nodes[q] + 1.0);
                let ref_u = 2.0 * (u - s0) / h - 1.0;
                partial += gl.weights[q] * (-c * (x - u)).exp() * gl.interpolate(fp, ref_u);
            }
            out[p * GL_ORDER + m] = (-c * (x - s0)).exp() * at_start + half * partial;
        }
        let s1 = s0 + h;
        let mut full = 0.0;
        for q in 0..GL_ORDER {
            let u = s0 + 0.5 * h * (gl.nodes[q] + 1.0);
            full += gl.weights[q] * (-c * (s1 - u)).exp() * fp[q];
        }
        at_start = (-c * h).exp() * at_start + 0.5 * h * full;
    }
    (out, at_start)
}

fn a_nested(gl: &GaussLegendre, p: ABParams, ell: usize, t: f64, panels: usize) -> f64 {
    let mut g = vec![1.0; panels * GL_ORDER];
    let mut last = 0.0;
    let mut prefactor = 1.0;
    for j in (0..=ell).rev() {
        let c = p.rate(j);
        prefactor *= c;
        let (next, end) = volterra_level(gl, c, &g, t, panels);
        g = next;
        last = end;
    }
    prefactor * last
}

/// A_ℓ(t) by nested quadrature of its defining (ℓ+1)-fold iterated integral.
///
/// Each level is a Volterra convolution with kernel e^{−(a+bj)(s−u)}, integrated by
/// composite 12-point Gauss–Legendre; panel counts double until two successive
/// results agree to 1e−10 absolute.
pub fn a_quadrature_oracle(p: ABParams, ell: usize, t: f64) -> Result<f64, BoundsError> {
    check_t(t)?;
    if ell > 5 {
        return Err(BoundsError::QuadratureTooDeep(ell));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let gl = GaussLegendre::new();
    let mut panels = 4;
    let mut prev = a_nested(&gl, p, ell, t, panels);
    while panels < 4096 {
        panels *= 2;
        let cur = a_nested(&gl, p, ell, t, panels);
        if (cur - prev).abs() < QUAD_TOL * 0.1 {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(BoundsError::QuadratureTolerance { panels })
}

/// Monte Carlo estimate with binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

const MC_CHUNK: usize = 1 << 16;

/// Frequency of {Z₀ + … + Z_ℓ ≤ t}, Z_j ~ Exp(a + bj). Deterministic in (seed, samples).
pub fn a_montecarlo_oracle(p: ABParams, ell: usize, t: f64, samples: usize, seed: u64) -> McEstimate {
    if t <= 0.0 || samples == 0 {
        return McEstimate { estimate: 0.0, std_error: 0.0, samples };
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut hits = 0usize;
            for _ in 0..len {
                let mut sum = 0.0;
                for j in 0..=ell {
                    let e: f64 = rng.sample(Exp1);
                    sum += e / p.rate(j);
                    if sum > t {
                        break;
                    }
                }
                if sum <= t {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let est = hits as f64 / samples as f64;
    McEstimate { estimate: est, std_error: (est * (1.0 - est) / samples as f64).sqrt(), samples }
}

// --- Γ-identities ----------------------------------------------------------

/// Closed form against truncated summation of the same infinite series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub closed_value: f64,
    pub truncated_value: f64,
    pub terms: usize,
    /// Analytic upper bound on the neglected tail.
    pub remainder_bound: f64,
}

impl IdentityCheck {
    pub fn relative_error(&self) -> f64 {
        ((self.truncated_value - self.closed_value) / self.closed_value).abs()
    }
}

pub const IDENTITY_TERM_CAP: usize = 100_000;
const IDENTITY_REL_BUDGET: f64 = 1e-10;

/// Σ_{ℓ ≥ 0} (∏_{i=1}^p (a/b+ℓ+i)) A_ℓ(t) = Γ(1+p+a/b)/Γ(a/b) · (e^{b(1+p)t} − 1)/(1+p).
///
/// Truncated with a tail bound from [`a_subgaussian_bound`]; fails if that bound
/// cannot be pushed below 1e−10 × closed value within `max_terms`.
pub fn sum_identity_a(p: ABParams, pexp: u32, t: f64, max_terms: usize) -> Result<IdentityCheck, BoundsError> {
    check_t(t)?;
    if pexp > 3 {
        return Err(BoundsError::InvalidParams(format!("pexp must be ≤ 3 (got {pexp})")));
    }
    let alpha = p.alpha();
    let pf = pexp as f64;
    let closed = gamma_ratio_rising(alpha, pexp) * (p.b * (1.0 + pf) * t).exp_m1() / (1.0 + pf);
    let weight = |ell: usize| (1..=pexp).map(|i| alpha + ell as f64 + i as f64).product::<f64>();

    let x = (-p.b * t).exp();
    // the tail bound is nonincreasing in the cutoff, so the cap decides feasibility up front
    match subgaussian_tail(alpha, pexp, x, max_terms) {
        Some(r) if r <= IDENTITY_REL_BUDGET * closed.abs() => {}
        other => return Err(BoundsError::RemainderBudget { cap: max_terms, remainder: other.unwrap_or(f64::INFINITY) }),
    }
    let mut sum = 0.0;
    let mut next = 0usize;
    let mut cutoff = 16usize;
    let mut remainder = f64::INFINITY;
    loop {
        let cutoff_now = cutoff.min(max_terms);
        while next < cutoff_now {
            sum += weight(next) * a_closed(p, next, t)?;
            next += 1;
        }
        remainder = subgaussian_tail(alpha, pexp, x, next).unwrap_or(remainder);
        if remainder <= IDENTITY_REL_BUDGET * closed.abs() {
            return Ok(IdentityCheck { closed_value: closed, truncated_value: sum, terms: next, remainder_bound: remainder });
        }
        if cutoff_now >= max_terms {
            return Err(BoundsError::RemainderBudget { cap: max_terms, remainder });
        }
        cutoff *= 2;
    }
}

// Upper bound on Σ_{ℓ ≥ first} (α+ℓ+p)^p exp(−2(ℓ+α+2)(x − α/(ℓ+α+1))₊²).
fn subgaussian_tail(alpha: f64, pexp: u32, x: f64, first: usize) -> Option<f64> {
    let gap = x - alpha / (first as f64 + alpha + 1.0);
    if gap <= 0.0 {
        return None;
    }
    // gap_ℓ ≥ gap for ℓ ≥ first, so every term is below (α+ℓ+p)^p r^{ℓ+α+2};
    // the ratio q of consecutive bounds decreases in ℓ, so once q < 1 the rest is geometric
    let ln_r = -2.0 * gap * gap;
    let pf = pexp as f64;
    let term = |ell: f64| (alpha + ell + pf).powf(pf) * (ln_r * (ell + alpha + 2.0)).exp();
    let mut acc = 0.0;
    let mut ell = first as f64;
    for _ in 0..10_000_000 {
        let cur = term(ell);
        let q = ((alpha + ell + 1.0 + pf) / (alpha + ell + pf)).powf(pf) * ln_r.exp();
        if q < 1.0 || cur == 0.0 {
            return Some(acc + cur / (1.0 - q));
        }
        acc += cur;
        ell += 1.0;
    }
    None
}

/// B-sum identity check. See [`BIdentityCheck`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BIdentityCheck {
    pub check: IdentityCheck,
    /// The expression b·Γ(2+a/b)/Γ(a/b)·e^{2bt}, obtained by differentiating the
    /// p = 1 A-identity as if its weight were (a + bℓ). Kept for comparison only.
    pub shifted_weight_value: f64,
}

/// Σ_{ℓ ≥ 0} (a+bℓ)² B_ℓ(t) = a((a+b)e^{2bt} − b e^{bt}), for t > 0.
///
/// Since (a+bℓ)²B_ℓ = (a+bℓ)A_ℓ′ = b(a/b+ℓ)A_ℓ′, the closed form is b·d/dt of the
/// p = 1 identity minus the p = 0 identity.
pub fn sum_identity_b(p: ABParams, t: f64, max_terms: usize) -> Result<BIdentityCheck, BoundsError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(BoundsError::Range(format!("B-identity is evaluated for t > 0 (got {t})")));
    }
    let (a, b) = (p.a, p.b);
    let alpha = p.alpha();
    let closed = a * ((a + b) * (2.0 * b * t).exp() - b * (b * t).exp());
    let shifted = b * gamma_ratio_rising(alpha, 1) * (2.0 * b * t).exp();

    let y = -(-b * t).exp_m1();
    let mut sum = 0.0;
    let mut ell = 0usize;
    loop {
        if ell >= max_terms {
            let tail = b_tail_bound(p, y, ell, t)?;
            return Err(BoundsError::RemainderBudget { cap: max_terms, remainder: tail });
        }
        let r = p.rate(ell);
        sum += r * r * b_closed(p, ell, t)?;
        ell += 1;
        if ell % 16 == 0 {
            let tail = b_tail_bound(p, y, ell, t)?;
            if tail <= IDENTITY_REL_BUDGET * closed {
                let check = IdentityCheck { closed_value: closed, truncated_value: sum, terms: ell, remainder_bound: tail };
                return Ok(BIdentityCheck { check, shifted_weight_value: shifted });
            }
        }
    }
}

// Tail Σ_{ℓ ≥ first} (a+bℓ)²B_ℓ(t): successive ratios decrease towards y.
fn b_tail_bound(p: ABParams, y: f64, first: usize, t: f64) -> Result<f64, BoundsError> {
    let alpha = p.alpha();
    let l = first as f64;
    let q = (p.rate(first + 1) / p.rate(first)) * ((l + alpha + 1.0) / (l + 1.0)) * y;
    if q >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let r = p.rate(first);
    Ok(r * r * b_closed(p, first, t)? / (1.0 - q))
}

// --- theorem bounds --------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub c0: f64,
    pub gamma: f64,
    pub m: f64,
    pub horizon: f64,
    pub n: usize,
    pub k: usize,
}

/// An evaluated bound with its named terms and intermediate constants.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub total: f64,
    pub terms: Vec<(&'static str, f64)>,
    pub constants: Vec<(&'static str, f64)>,
}

impl BoundReport {
    fn from_parts(terms: Vec<(&'static str, f64)>, constants: Vec<(&'static str, f64)>) -> Self {
        let total = terms.iter().map(|(_, v)| v).sum();
        Self { total, terms, constants }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

fn check_nk(n: usize, k: usize) -> Result<(), BoundsError> {
    if k < 1 || k > n {
        return Err(BoundsError::Range(format!("need 1 ≤ k ≤ n (got n={n}, k={k})")));
    }
    Ok(())
}

fn nonneg(name: &str, v: f64) -> Result<(), BoundsError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::InvalidParams(format!("{name} must be finite and ≥ 0 (got {v})")))
    }
}

/// Two-term entropy bound 2C k²/n² + C exp(−2n(e^{−γT} − k/n)₊²), where the
/// exponential term uses the given C and γ.
fn two_term(c: f64, gamma: f64, horizon: f64, n: usize, k: usize) -> [(&'static str, f64); 2] {
    let (nf, kf) = (n as f64, k as f64);
    let gap = ((-gamma * horizon).exp() - kf / nf).max(0.0);
    [("rate", 2.0 * c * kf * kf / (nf * nf)), ("exponential", c * (-2.0 * nf * gap * gap).exp())]
}

/// Minimum n for the pairwise entropy bound, 6e^{γT}.
pub fn main_bound_threshold(gamma: f64, horizon: f64) -> f64 {
    6.0 * (gamma * horizon).exp()
}

/// Entropy bound for pairwise interactions with C = 8(C₀ + (1+γ)MT)e^{6γT}.
/// Requires n ≥ 6e^{γT}.
pub fn bound_main(inp: BoundInputs) -> Result<BoundReport, BoundsError> {
    nonneg("C0", inp.c0)?;
    nonneg("gamma", inp.gamma)?;
    nonneg("M", inp.m)?;
    nonneg("T", inp.horizon)?;
    check_nk(inp.n, inp.k)?;
    let threshold = main_bound_threshold(inp.gamma, inp.horizon);
    let slack = inp.n as f64 - threshold;
    if slack < 0.0 {
        return Err(BoundsError::Precondition { n: inp.n, required_n: threshold.ceil() as usize });
    }
    let c = 8.0 * (inp.c0 + (1.0 + inp.gamma) * inp.m * inp.horizon) * (6.0 * inp.gamma * inp.horizon).exp();
    Ok(BoundReport::from_parts(
        two_term(c, inp.gamma, inp.horizon, inp.n, inp.k).to_vec(),
        vec![("C", c), ("gamma", inp.gamma), ("precondition_slack", slack)],
    ))
}

/// Reversed-entropy bound for bounded interactions: γ = 2‖|b|²‖∞, C = (C₀ + 2γT)e^{2γT}.
pub fn bound_reversed(c0: f64, b_sup: f64, horizon: f64, n: usize, k: usize) -> Result<BoundReport, BoundsError> {
    nonneg("C0", c0)?;
    nonneg("b_sup", b_sup)?;
    nonneg("T", horizon)?;
    check_nk(n, k)?;
    let gamma = 2.0 * b_sup * b_sup;
    let c = (c0 + 2.0 * gamma * horizon) * (2.0 * gamma * horizon).exp();
    Ok(BoundReport::from_parts(two_term(c, gamma, horizon, n, k).to_vec(), vec![("C", c), ("gamma", gamma)]))
}

/// s̄_p and S₀(x) values for a coefficient sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStats {
    pub moments: Vec<(u32, f64)>,
    pub tails: Vec<(f64, f64)>,
}

impl SeriesStats {
    pub fn moment(&self, p: u32) -> Option<f64> {
        self.moments.iter().find(|(q, _)| *q == p).map(|(_, v)| *v)
    }

    pub fn tail(&self, x: f64) -> Option<f64> {
        self.tails.iter().find(|(y, _)| *y == x).map(|(_, v)| *v)
    }
}

pub const SERIES_TERM_CAP: usize = 1_000_000;

/// s̄_p = Σ ℓ^p s_ℓ for each p, and S₀(x) = (1/s̄₀) Σ_{ℓ > ⌊x⌋} s_ℓ for each x.
pub fn series_stats(s: &SeriesCoefficients, p_list: &[u32], x_list: &[f64]) -> Result<SeriesStats, BoundsError> {
    let mut moments = Vec::with_capacity(p_list.len());
    for &p in p_list {
        if p > 3 {
            return Err(BoundsError::InvalidParams(format!("moment order must be ≤ 3 (got {p})")));
        }
        moments.push((p, series_moment(s, p)?));
    }
    let sbar0 = match moments.iter().find(|(p, _)| *p == 0) {
        Some((_, v)) => *v,
        None => series_moment(s, 0)?,
    };
    let mut tails = Vec::with_capacity(x_list.len());
    for &x in x_list {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(BoundsError::InvalidParams(format!("tail argument must be ≥ 0 (got {x})")));
        }
        let tail = if sbar0 == 0.0 { 0.0 } else { s.tail_sum(x.floor() as usize) / sbar0 };
        tails.push((x, tail));
    }
    Ok(SeriesStats { moments, tails })
}

fn series_moment(s: &SeriesCoefficients, p: u32) -> Result<f64, BoundsError> {
    use crate::model::SeriesFamily;
    let pf = p as f64;
    if let SeriesFamily::Finite(v) = &s.family {
        return Ok(v.iter().enumerate().map(|(i, c)| ((i + 1) as f64).powf(pf) * c).sum());
    }
    let mut sum = 0.0;
    for ell in 1..=SERIES_TERM_CAP {
        let l = ell as f64;
        sum += l.powf(pf) * s.coefficient(ell);
        // majorant terms m_ℓ with m_{ℓ+1}/m_ℓ decreasing in ℓ
        let (majorant, ratio) = match &s.family {
            SeriesFamily::Geometric { rho } => {
                let m = (l + 1.0).powf(pf) * s.coefficient(ell + 1);
                (m, ((l + 2.0) / (l + 1.0)).powf(pf) * rho)
            }
            SeriesFamily::SuperGeometric { c1, c2, q } => {
                let m = c1 * (l + 1.0).powf(pf) * (-c2 * (l + 1.0).powf(*q)).exp();
                (m, ((l + 2.0) / (l + 1.0)).powf(pf) * (-c2).exp())
            }
            SeriesFamily::Finite(_) => unreachable!(),
        };
        if ratio < 1.0 {
            let remainder = majorant / (1.0 - ratio);
            if remainder <= s.truncation_tol * sum || (sum == 0.0 && majorant == 0.0) {
                return Ok(sum);
            }
        }
    }
    Err(BoundsError::SeriesTolerance(SERIES_TERM_CAP))
}

/// Four-term entropy bound for power-series (infinite-range) interactions.
/// Requires 1 ≤ ℓ + k ≤ n/2 with ℓ, k ≥ 1.
pub fn bound_infrange(
    c0: f64,
    s: &SeriesCoefficients,
    horizon: f64,
    n: usize,
    k: usize,
    ell: usize,
) -> Result<BoundReport, BoundsError> {
    nonneg("C0", c0)?;
    nonneg("T", horizon)?;
    if ell < 1 || k < 1 || 2 * (ell + k) > n {
        return Err(BoundsError::Range(format!("need ℓ, k ≥ 1 and ℓ + k ≤ n/2 (got n={n}, k={k}, ℓ={ell})")));
    }
    let stats = series_stats(s, &[0, 2], &[ell as f64])?;
    let sbar0 = stats.moment(0).unwrap_or(0.0);
    let sbar2 = stats.moment(2).unwrap_or(0.0);
    let tail = stats.tail(ell as f64).unwrap_or(0.0);
    let (nf, kf, lf) = (n as f64, k as f64, ell as f64);
    let s2 = sbar0 * sbar0;
    let moment_ratio = if sbar0 == 0.0 { 0.0 } else { sbar2 / sbar0 };
    let gap = ((-8.0 * s2 * lf * horizon).exp() - kf / (2.0 * nf)).max(0.0);
    let terms = vec![
        ("initial", 16.0 * c0 * s2 * (16.0 * s2 * lf * horizon).exp() * kf * kf / (nf * nf)),
        ("moment", 9.0 * moment_ratio * moment_ratio * (24.0 * s2 * lf * horizon).exp() * kf.powi(3) / (lf * nf * nf)),
        ("tail", (8.0 * s2 * lf * horizon).exp() * tail * tail * kf / lf),
        ("exponential", (c0 + 2.0 * s2 * nf * horizon) * (-(nf / lf) * gap * gap).exp()),
    ];
    Ok(BoundReport::from_parts(terms, vec![("sbar0", sbar0), ("sbar2", sbar2), ("S0_ell", tail), ("ell", lf)]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EllMode {
    /// exponential tails S₀(x) ≤ c₁e^{−c₂x}; ε = 2/(α+2) with α = c₂/(4s̄₀²T)
    Subexp,
    /// tails S₀(x) ≤ c₁e^{−c₂x^q} with q > 1 and a caller-chosen ε ∈ (0, 1)
    SubexpQ { eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllChoice {
    pub ell: usize,
    /// Predicted exponent r in H = O((k/n)^r) for k = o(log n).
    pub exponent: f64,
    pub eps: f64,
}

/// η = (c₂ − 4s̄₀²T)/(c₂ + 8s̄₀²T), requiring c₂ > 4s̄₀²T.
pub fn subexp_eta(c2: f64, sbar0: f64, horizon: f64) -> Result<f64, BoundsError> {
    let s = sbar0 * sbar0 * horizon;
    if !(c2 > 4.0 * s) {
        return Err(BoundsError::Hypothesis(format!("c2 = {c2} must exceed 4·s̄₀²T = {}", 4.0 * s)));
    }
    Ok((c2 - 4.0 * s) / (c2 + 8.0 * s))
}

/// ℓ = ⌊(ε/(8s̄₀²T)) log(n/k)⌋, clamped to ≥ 1.
pub fn ell_from_eps(eps: f64, sbar0: f64, horizon: f64, n: usize, k: usize) -> usize {
    let s = 8.0 * sbar0 * sbar0 * horizon;
    let raw = (eps / s * (n as f64 / k as f64).ln()).floor();
    if raw.is_finite() && raw >= 1.0 {
        raw as usize
    } else {
        1
    }
}

/// Chooses the free truncation level ℓ of the infinite-range bound.
pub fn infrange_select_ell(
    s: &SeriesCoefficients,
    horizon: f64,
    n: usize,
    k: usize,
    mode: EllMode,
) -> Result<EllChoice, BoundsError> {
    check_nk(n, k)?;
    if let Some(r) = s.finite_range() {
        return Ok(EllChoice { ell: r.max(1), exponent: 2.0, eps: 0.0 });
    }
    let sbar0 = series_moment(s, 0)?;
    let (_, c2, q) = s.tail_constants().expect("infinite families carry tail constants");
    match mode {
        EllMode::Subexp => {
            let eta = subexp_eta(c2, sbar0, horizon)?;
            let alpha = c2 / (4.0 * sbar0 * sbar0 * horizon);
            let eps = 2.0 / (alpha + 2.0);
            Ok(EllChoice { ell: ell_from_eps(eps, sbar0, horizon, n, k), exponent: 2.0 * eta, eps })
        }
        EllMode::SubexpQ { eps } => {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(BoundsError::InvalidParams(format!("ε must be in (0,1) (got {eps})")));
            }
            if !(q > 1.0) {
                return Err(BoundsError::Hypothesis(format!("tail exponent q = {q} must exceed 1")));
            }
            Ok(EllChoice { ell: ell_from_eps(eps, sbar0, horizon, n, k), exponent: 2.0 - eps, eps })
        }
    }
}

/// γ = 2(1 + R)/κ from square-exponential integrability with constants (κ, R).
pub fn gamma_exp_integrability(kappa: f64, r: f64) -> Result<f64, BoundsError> {
    if !(kappa > 0.0) {
        return Err(BoundsError::InvalidParams(format!("κ must be > 0 (got {kappa})")));
    }
    nonneg("R", r)?;
    Ok(2.0 * (1.0 + r) / kappa)
}

/// Constants (M, γ) for Lipschitz coefficients:
/// M = 8L²e^{16TL²}(m₂(μ₀) + m₂(P₀) + 2M₀² + 8dT), γ = 3L²(η₀ ∨ 2T)e^{3TL²}.
#[allow(clippy::too_many_arguments)]
pub fn constants_lipschitz(
    l: f64,
    eta0: f64,
    horizon: f64,
    m0: f64,
    m2_mu0: f64,
    m2_p0: f64,
    d: usize,
) -> Result<(f64, f64), BoundsError> {
    if !(l > 0.0 && eta0 > 0.0 && horizon > 0.0) {
        return Err(BoundsError::InvalidParams(format!("need L, η₀, T > 0 (got {l}, {eta0}, {horizon})")));
    }
    nonneg("M0", m0)?;
    nonneg("m2_mu0", m2_mu0)?;
    nonneg("m2_P0", m2_p0)?;
    let l2 = l * l;
    let m = 8.0 * l2 * (16.0 * horizon * l2).exp() * (m2_mu0 + m2_p0 + 2.0 * m0 * m0 + 8.0 * d as f64 * horizon);
    let gamma = 3.0 * l2 * eta0.max(2.0 * horizon) * (3.0 * horizon * l2).exp();
    Ok((m, gamma))
}

/// Path-space quadratic transport constant 3(C₀ ∨ 2T)e^{3TL²}.
pub fn quadratic_transport_constant(c0: f64, horizon: f64, l: f64) -> Result<f64, BoundsError> {
    if !(c0 > 0.0 && horizon > 0.0) {
        return Err(BoundsError::InvalidParams(format!("need C₀, T > 0 (got {c0}, {horizon})")));
    }
    nonneg("L", l)?;
    Ok(3.0 * c0.max(2.0 * horizon) * (3.0 * horizon * l * l).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab(a: f64, b: f64) -> ABParams {
        ABParams::new(a, b).unwrap()
    }

    #[test]
    fn a_closed_single_exponential() {
        let v = a_closed(ab(1.0, 1.0), 0, 2f64.ln()).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
        assert_eq!(a_closed(ab(3.0, 2.0), 4, 0.0).unwrap(), 0.0);
        assert!(a_closed(ab(1.0, 1.0), 1, -1.0).is_err());
    }

    #[test]
    fn a_closed_unit_ratio_power() {
        // a = b: Beta(1, ℓ+1) tail is (1 − x)^{ℓ+1}
        let v = a_closed(ab(1.0, 1.0), 2, 2f64.ln()).unwrap();
        assert!((v - 0.125).abs() < 1e-14);
    }

    #[test]
    fn quadrature_matches_exact_low_orders() {
        let v = a_quadrature_oracle(ab(1.0, 1.0), 0, 2f64.ln()).unwrap();
        assert!((v - 0.5).abs() < 1e-10);
        let v = a_quadrature_oracle(ab(1.0, 1.0), 2, 2f64.ln()).unwrap();
        assert!((v - 0.125).abs() < 1e-10);
        assert!(matches!(a_quadrature_oracle(ab(1.0, 1.0), 6, 1.0), Err(BoundsError::QuadratureTooDeep(6))));
    }

    #[test]
    fn closed_vs_quadrature_mixed_rates() {
        let p = ab(2.0, 1.0);
        let c = a_closed(p, 3, 0.7).unwrap();
        let q = a_quadrature_oracle(p, 3, 0.7).unwrap();
        assert!((c - q).abs() < 1e-8, "{c} vs {q}");
    }

    #[test]
    fn montecarlo_edge_cases() {
        let p = ab(1.0, 1.0);
        let z = a_montecarlo_oracle(p, 3, 0.0, 10_000, 1);
        assert_eq!((z.estimate, z.std_error), (0.0, 0.0));
        let one = a_montecarlo_oracle(p, 3, 1e3, 10_000, 1);
        assert_eq!(one.estimate, 1.0);
        let again = a_montecarlo_oracle(p, 3, 1.0, 10_000, 5);
        assert_eq!(again, a_montecarlo_oracle(p, 3, 1.0, 10_000, 5));
    }

    #[test]
    fn b_closed_cases() {
        let p = ab(1.0, 1.0);
        assert!((b_closed(p, 0, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-16);
        assert_eq!(b_closed(ab(2.0, 1.0), 3, 0.0).unwrap(), 0.0);
        // finite-difference derivative of A
        let p = ab(2.0, 1.0);
        let (t, h) = (0.7, 1e-5);
        let fd = (a_closed(p, 2, t + h).unwrap() - a_closed(p, 2, t - h).unwrap()) / (2.0 * h * (2.0 + 2.0));
        assert!((b_closed(p, 2, t).unwrap() - fd).abs() < 1e-6);
    }

    #[test]
    fn subgaussian_cases() {
        // gap vanishes: e^{−bt} ≤ (a/b)/(ℓ+a/b+1)
        assert_eq!(a_subgaussian_bound(ab(1.0, 1.0), 0, 5.0), 1.0);
        let p = ab(1.0, 1.0);
        let expected = (-24.0 * ((-0.1f64).exp() - 1.0 / 11.0).powi(2)).exp();
        assert!((a_subgaussian_bound(p, 9, 0.1) / expected - 1.0).abs() < 1e-14);
        assert!(a_closed(p, 9, 0.1).unwrap() <= expected);

        let rate = -a_subgaussian_bound(p, 200, 0.05).ln() / 200.0;
        let asymptotic = 2.0 * (-0.1f64).exp();
        assert!((rate / asymptotic - 1.0).abs() < 0.1);
    }

    #[test]
    fn geometric_identity_p0() {
        let p = ab(1.5, 1.5);
        let chk = sum_identity_a(p, 0, 0.4, IDENTITY_TERM_CAP).unwrap();
        let exact = (1.5f64 * 0.4).exp_m1();
        assert!((chk.closed_value - exact).abs() < 1e-15);
        assert!(chk.relative_error() < 1e-10);
    }

    #[test]
    fn identity_a_higher_orders() {
        for (pexp, a, t) in [(1u32, 2.0, 0.5), (2, 3.0, 0.3)] {
            let chk = sum_identity_a(ab(a, 1.0), pexp, t, IDENTITY_TERM_CAP).unwrap();
            assert!(chk.relative_error() <= 1e-8, "p={pexp}: {chk:?}");
        }
        assert!(sum_identity_a(ab(1.0, 1.0), 4, 0.3, 10).is_err());
    }

    #[test]
    fn identity_a_budget_failure() {
        let err = sum_identity_a(ab(5.0, 5.0), 2, 2.0, 1000).unwrap_err();
        assert!(matches!(err, BoundsError::RemainderBudget { cap: 1000, .. }));
    }

    #[test]
    fn identity_b_cases() {
        let chk = sum_identity_b(ab(1.0, 1.0), 1e-8, IDENTITY_TERM_CAP).unwrap();
        assert!(chk.check.relative_error() < 1e-6);
        let chk = sum_identity_b(ab(2.0, 1.0), 0.4, IDENTITY_TERM_CAP).unwrap();
        assert!(chk.check.relative_error() <= 1e-8);
        assert!(sum_identity_b(ab(1.0, 1.0), 0.0, 10).is_err());
        // the shifted-weight expression scales purely as e^{2bt}
        let p = ab(1.3, 0.7);
        let r = sum_identity_b(p, 1.0, IDENTITY_TERM_CAP).unwrap().shifted_weight_value
            / sum_identity_b(p, 0.5, IDENTITY_TERM_CAP).unwrap().shifted_weight_value;
        assert!((r - 0.7f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn bound_main_cases() {
        let zero = bound_main(BoundInputs { c0: 0.0, gamma: 1.0, m: 0.0, horizon: 1.0, n: 100, k: 3 }).unwrap();
        assert_eq!(zero.total, 0.0);

        let r = bound_main(BoundInputs { c0: 1.0, gamma: 1.0, m: 1.0, horizon: 0.0, n: 10, k: 1 }).unwrap();
        assert_eq!(r.constant("C"), Some(8.0));
        let expected = 0.16 + 8.0 * (-2.0 * 10.0 * 0.81f64).exp();
        assert!((r.total - expected).abs() < 1e-15);

        let full = bound_main(BoundInputs { c0: 1.0, gamma: 0.5, m: 1.0, horizon: 1.0, n: 20, k: 20 }).unwrap();
        assert_eq!(full.term("exponential"), full.constant("C"));

        let err = bound_main(BoundInputs { c0: 1.0, gamma: 1.0, m: 1.0, horizon: 1.0, n: 16, k: 1 }).unwrap_err();
        assert_eq!(err, BoundsError::Precondition { n: 16, required_n: 17 });
    }

    #[test]
    fn bound_reversed_cases() {
        assert_eq!(bound_reversed(0.0, 0.0, 1.0, 10, 2).unwrap().total, 0.0);
        let r = bound_reversed(0.0, 1.0, 0.1, 100, 2).unwrap();
        assert_eq!(r.constant("gamma"), Some(2.0));
        assert!((r.constant("C").unwrap() - 0.4 * 0.4f64.exp()).abs() < 1e-15);
        let r4 = bound_reversed(0.0, 1.0, 0.1, 100, 4).unwrap();
        assert_eq!(r4.term("rate").unwrap(), 4.0 * r.term("rate").unwrap());
    }

    #[test]
    fn bound_infrange_finite_range() {
        let s = SeriesCoefficients::finite(vec![0.3, 0.2, 0.1]);
        let r = bound_infrange(1.0, &s, 0.1, 1000, 2, 3).unwrap();
        assert_eq!(r.term("tail"), Some(0.0));

        let zero = SeriesCoefficients::finite(vec![0.0, 0.0]);
        let r = bound_infrange(2.0, &zero, 0.5, 100, 3, 2).unwrap();
        let expected = 2.0 * (-(100.0 / 2.0) * (1.0 - 3.0 / 200.0f64).powi(2)).exp();
        assert!((r.total - expected).abs() < 1e-15 * expected.max(1e-300));

        assert!(bound_infrange(1.0, &s, 0.1, 10, 3, 3).is_err());
    }

    #[test]
    fn series_stats_families() {
        let st = series_stats(&SeriesCoefficients::finite(vec![1.0]), &[0, 2], &[1.0]).unwrap();
        assert_eq!((st.moment(0), st.moment(2), st.tail(1.0)), (Some(1.0), Some(1.0), Some(0.0)));

        let rho: f64 = 0.5;
        let st = series_stats(&SeriesCoefficients::geometric(rho), &[0], &[0.0, 2.7, 4.0]).unwrap();
        assert!((st.moment(0).unwrap() - 1.0).abs() < 1e-13);
        assert!((st.tail(2.7).unwrap() - rho.powi(2)).abs() < 1e-13);
        assert!((st.tail(4.0).unwrap() - rho.powi(4)).abs() < 1e-13);
        assert!(series_stats(&SeriesCoefficients::geometric(rho), &[4], &[]).is_err());
    }

    #[test]
    fn select_ell_cases() {
        let eta = subexp_eta(1e3, 1.0, 1.0).unwrap();
        assert!((eta - 996.0 / 1008.0).abs() < 1e-15);
        assert!(matches!(subexp_eta(4.0, 1.0, 1.0), Err(BoundsError::Hypothesis(_))));
        // 8 s̄₀²T = 1, n/k just above e⁸, ε = 1/2
        assert_eq!(ell_from_eps(0.5, 1.0, 0.125, 2982, 1), 4);
        assert_eq!(ell_from_eps(0.5, 1.0, 0.125, 2980, 1), 3);
        assert_eq!(ell_from_eps(0.5, 1.0, 0.125, 1_000_000, 1_000_000), 1);
    }

    #[test]
    fn small_constants() {
        assert_eq!(gamma_exp_integrability(1.0, 0.0).unwrap(), 2.0);
        assert_eq!(gamma_exp_integrability(2.0, 1.0).unwrap(), 2.0);
        assert_eq!(gamma_exp_integrability(0.5, 3.0).unwrap(), 16.0);
        assert!(gamma_exp_integrability(0.0, 1.0).is_err());

        assert_eq!(quadratic_transport_constant(1.0, 1.0, 0.0).unwrap(), 6.0);
        assert!((quadratic_transport_constant(4.0, 1.0, 1.0).unwrap() - 12.0 * 3f64.exp()).abs() < 1e-12);
        assert!(quadratic_transport_constant(0.0, 1.0, 1.0).is_err());

        let (m, g) = constants_lipschitz(1e-8, 1.0, 1.0, 0.0, 1.0, 1.0, 1).unwrap();
        assert!(m < 1e-14 && g < 1e-14);
        assert!(constants_lipschitz(0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1).is_err());
    }
}

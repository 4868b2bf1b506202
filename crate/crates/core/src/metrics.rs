//! Small-scale optimal transport, covariance fitting and inequality checkers.

use thiserror::Error;

use crate::simulate::Ensemble;
use crate::special::beta_inc_reg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("sample size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("sample count {0} exceeds the assignment cap {1}")]
    TooLarge(usize, usize),
    #[error("expected dimension 1, got {0}")]
    NotOneDimensional(usize),
    #[error("k = {k} must lie in 2..=n (n = {n})")]
    MarginalSize { k: usize, n: usize },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("no replicas supplied")]
    NoReplicas,
}

pub const ASSIGNMENT_CAP: usize = 2048;
const WEIGHT_TOL: f64 = 1e-12;

/// Weighted point cloud: `points` is m × d row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub d: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(d: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self, MetricsError> {
        if d == 0 || points.len() != d * weights.len() {
            return Err(MetricsError::InvalidMeasure("points must be m × d with m = #weights".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(MetricsError::InvalidMeasure("weights must be ≥ 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(MetricsError::InvalidMeasure(format!("weights sum to {total}")));
        }
        Ok(Self { d, points, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Minimum-cost perfect matching on an m × m cost matrix (Hungarian method with potentials).
/// Returns `assign[row] = column`.
fn hungarian(m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based arrays; column 0 is a virtual start
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=m {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; m];
    for j in 1..=m {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Squared W2 between two uniform empirical measures of m points each (m × d row-major),
/// computed as an exact optimal assignment.
pub fn w2_assignment(a: &[f64], b: &[f64], d: usize) -> Result<f64, MetricsError> {
    if a.len() != b.len() || d == 0 || a.len() % d != 0 {
        return Err(MetricsError::SizeMismatch(a.len(), b.len()));
    }
    let m = a.len() / d;
    if m > ASSIGNMENT_CAP {
        return Err(MetricsError::TooLarge(m, ASSIGNMENT_CAP));
    }
    if m == 0 {
        return Ok(0.0);
    }
    let cost = |i: usize, j: usize| sq_dist(&a[i * d..(i + 1) * d], &b[j * d..(j + 1) * d]);
    let assign = hungarian(m, cost);
    let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost(i, j)).sum();
    Ok(total / m as f64)
}

/// W1 between two uniform empirical measures on the line: mean gap of sorted samples.
pub fn w1_sorted_1d(a: &[f64], b: &[f64], d: usize) -> Result<f64, MetricsError> {
    if d != 1 {
        return Err(MetricsError::NotOneDimensional(d));
    }
    if a.len() != b.len() {
        return Err(MetricsError::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    Ok(sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Two-sided quantile of Student's t with `df` degrees of freedom: P(|T| ≤ q) = level.
pub fn student_t_quantile(level: f64, df: f64) -> f64 {
    // P(|T| > q) = I_{df/(df+q²)}(df/2, 1/2)
    let tail = |q: f64| beta_inc_reg(df / 2.0, 0.5, df / (df + q * q)).unwrap_or(0.0);
    let target = 1.0 - level;
    let (mut lo, mut hi) = (0.0, 1.0);
    while tail(hi) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Estimated exchangeable covariance v(I − cJ) of the first k particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovEstimate {
    pub k: usize,
    pub v: f64,
    pub c: f64,
    /// Standard errors across replicas; `None` with a single replica.
    pub v_se: Option<f64>,
    pub c_se: Option<f64>,
    pub replicas: usize,
}

impl CovEstimate {
    /// Half-widths of the two-sided confidence intervals at `level`.
    pub fn half_widths(&self, level: f64) -> Option<(f64, f64)> {
        let q = student_t_quantile(level, (self.replicas - 1) as f64);
        Some((q * self.v_se?, q * self.c_se?))
    }

    /// Whether (v, c) lie in the respective confidence intervals at `level`.
    pub fn covers(&self, v: f64, c: f64, level: f64) -> Option<(bool, bool)> {
        let (hv, hc) = self.half_widths(level)?;
        Some(((self.v - v).abs() <= hv, (self.c - c).abs() <= hc))
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() - 1) as f64
}

/// Fits (v, c) at a time index from replicas of a centered system.
///
/// Per replica, D is the mean of x_i² and O the mean of x_i x_j (i ≠ j) over the
/// first k particles (all coordinates pooled). Since the diagonal is v(1 − c) and the
/// off-diagonal −vc, the estimates are v̂ = D̄ − Ō and ĉ = −Ō/v̂, with delta-method
/// standard errors from the replica-to-replica spread.
pub fn fit_exchangeable_cov(replicas: &[Ensemble], step: usize, k: usize) -> Result<CovEstimate, MetricsError> {
    let first = replicas.first().ok_or(MetricsError::NoReplicas)?;
    if k > first.n || k < 2 {
        return Err(MetricsError::MarginalSize { k, n: first.n });
    }
    let d = first.d;
    let (mut ds, mut os) = (Vec::with_capacity(replicas.len()), Vec::with_capacity(replicas.len()));
    for e in replicas {
        if e.n != first.n || e.d != d {
            return Err(MetricsError::SizeMismatch(e.n, first.n));
        }
        let x = &e.state(step)[..k * d];
        let (mut diag, mut off) = (0.0, 0.0);
        for c in 0..d {
            let (mut s, mut s2) = (0.0, 0.0);
            for i in 0..k {
                let v = x[i * d + c];
                s += v;
                s2 += v * v;
            }
            diag += s2 / k as f64;
            off += (s * s - s2) / (k * (k - 1)) as f64;
        }
        ds.push(diag / d as f64);
        os.push(off / d as f64);
    }
    let (dm, om) = (mean(&ds), mean(&os));
    let v = dm - om;
    let c = -om / v;
    let r = replicas.len();
    let (v_se, c_se) = if r < 2 {
        (None, None)
    } else {
        let (sdd, soo, sdo) = (covariance(&ds, &ds), covariance(&os, &os), covariance(&ds, &os));
        let var_v = (sdd + soo - 2.0 * sdo) / r as f64;
        // gradient of −O/(D − O)
        let (gd, go) = (om / (v * v), -dm / (v * v));
        let var_c = (gd * gd * sdd + go * go * soo + 2.0 * gd * go * sdo) / r as f64;
        (Some(var_v.sqrt()), Some(var_c.sqrt()))
    };
    Ok(CovEstimate { k, v, c, v_se, c_se, replicas: r })
}

/// Left side, right side and slack (rhs − lhs) of an inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityGap {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

fn check_pair(nu: &DiscreteMeasure, nu_p: &DiscreteMeasure, f: &[f64]) -> Result<usize, MetricsError> {
    if nu.len() != nu_p.len() || nu.d != nu_p.d || nu.points != nu_p.points {
        return Err(MetricsError::InvalidMeasure("measures must share their support".into()));
    }
    if nu.is_empty() || f.len() % nu.len() != 0 || f.is_empty() {
        return Err(MetricsError::SizeMismatch(f.len(), nu.len()));
    }
    Ok(f.len() / nu.len())
}

/// Relative entropy Σ ν log(ν/ν′) with 0·log 0 = 0; ∞ if ν is not absolutely continuous.
pub fn relative_entropy(nu: &[f64], nu_p: &[f64]) -> f64 {
    let mut h = 0.0;
    for (&p, &q) in nu.iter().zip(nu_p) {
        if p > 0.0 {
            if q == 0.0 {
                return f64::INFINITY;
            }
            h += p * (p / q).ln();
        }
    }
    h.max(0.0)
}

fn pairing_sq(nu: &DiscreteMeasure, nu_p: &DiscreteMeasure, f: &[f64], q: usize) -> f64 {
    let mut acc = vec![0.0; q];
    for (i, (p, pp)) in nu.weights.iter().zip(&nu_p.weights).enumerate() {
        for c in 0..q {
            acc[c] += (p - pp) * f[i * q + c];
        }
    }
    acc.iter().map(|v| v * v).sum()
}

fn gap(lhs: f64, factor: f64, h: f64) -> InequalityGap {
    let rhs = if h.is_infinite() { f64::INFINITY } else { factor * h };
    InequalityGap { lhs, rhs, slack: rhs - lhs }
}

/// |⟨ν − ν′, f⟩|² against 2‖|f|²‖∞ H(ν|ν′). `f` holds one q-vector per support point.
pub fn pinsker_gap(nu: &DiscreteMeasure, nu_p: &DiscreteMeasure, f: &[f64]) -> Result<InequalityGap, MetricsError> {
    let q = check_pair(nu, nu_p, f)?;
    let sup = f.chunks_exact(q).map(|v| v.iter().map(|x| x * x).sum::<f64>()).fold(0.0, f64::max);
    Ok(gap(pairing_sq(nu, nu_p, f, q), 2.0 * sup, relative_entropy(&nu.weights, &nu_p.weights)))
}

/// |⟨ν − ν′, f⟩|² against 2(1 + log ∫e^{|f|²}dν′) H(ν|ν′).
pub fn weighted_pinsker_gap(
    nu: &DiscreteMeasure,
    nu_p: &DiscreteMeasure,
    f: &[f64],
) -> Result<InequalityGap, MetricsError> {
    let q = check_pair(nu, nu_p, f)?;
    let sq: Vec<f64> = f.chunks_exact(q).map(|v| v.iter().map(|x| x * x).sum::<f64>()).collect();
    // log Σ ν′ e^{|f|²}, shifted for range
    let top = sq.iter().zip(&nu_p.weights).filter(|(_, w)| **w > 0.0).map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
    let log_mgf = top + sq.iter().zip(&nu_p.weights).map(|(s, w)| w * (s - top).exp()).sum::<f64>().ln();
    Ok(gap(pairing_sq(nu, nu_p, f, q), 2.0 * (1.0 + log_mgf), relative_entropy(&nu.weights, &nu_p.weights)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubadditivityKind {
    W2Squared,
    Entropy,
}

/// (2k/n)·full − marginal for either W2² or relative entropy.
pub fn subadditivity_check(n: usize, k: usize, full_value: f64, marginal_value: f64, _kind: SubadditivityKind) -> f64 {
    2.0 * k as f64 / n as f64 * full_value - marginal_value
}

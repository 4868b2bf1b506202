//! Seeded Euler–Maruyama simulation of mean-field particle systems.
//!
//! Noise is keyed by (seed, replica, particle key, step): every particle owns a
//! ChaCha stream and each step reads from a fixed window of that stream, so a
//! trajectory does not depend on how particles are scheduled across threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    instantiate_drift, Drift, ExperimentConfig, InitCondition, Interaction, ModelError, PairKernel,
    SeriesCoefficients, SignPattern,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation input: {0}")]
    Invalid(String),
    #[error("non-finite state at step {step}")]
    BlowUp { step: usize },
    #[error("series truncation needs more than {0} terms")]
    TruncationBudget(usize),
    #[error("tuple enumeration needs {required} evaluations (budget {budget})")]
    OracleBudget { required: u128, budget: u128 },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Words of the per-particle stream reserved for one step.
const STEP_WINDOW_BITS: u32 = 16;
const MAX_DIM: usize = 1024;
pub const SERIES_TRUNCATION_CAP: usize = 1_000_000;
pub const TUPLE_BUDGET: u128 = 1_000_000;
const PROXY_SEED_SALT: u64 = 0x5851_f42d_4c95_7f2d;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keyed Gaussian source. Slot 0 of each stream is used for the initial condition,
/// slot `step + 1` for the increment of step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
    replica: u64,
}

impl NoiseSource {
    pub fn new(seed: u64, replica: u64) -> Self {
        Self { seed, replica }
    }

    fn stream(&self, key: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed ^ mix(self.replica)));
        rng.set_stream(key);
        rng
    }

    fn fill(rng: &mut ChaCha8Rng, slot: usize, out: &mut [f64]) {
        rng.set_word_pos((slot as u128) << STEP_WINDOW_BITS);
        for o in out {
            *o = rng.sample(StandardNormal);
        }
    }

    /// The standard normals used by particle `key` at step `step`.
    pub fn gaussian(&self, key: u64, step: usize, out: &mut [f64]) {
        Self::fill(&mut self.stream(key), step + 1, out);
    }

    /// The standard normals used for the initial condition of particle `key`.
    pub fn initial(&self, key: u64, out: &mut [f64]) {
        Self::fill(&mut self.stream(key), 0, out);
    }
}

/// A simulated trajectory block. Stored step-major: state at step s, particle i,
/// coordinate c lives at `data[(s * n + i) * d + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub n: usize,
    pub d: usize,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub drift_tag: String,
    data: Vec<f64>,
}

impl Ensemble {
    /// Positions of all particles at step s (n × d, row-major).
    pub fn state(&self, step: usize) -> &[f64] {
        let w = self.n * self.d;
        &self.data[step * w..(step + 1) * w]
    }

    pub fn position(&self, step: usize, i: usize) -> &[f64] {
        let base = (step * self.n + i) * self.d;
        &self.data[base..base + self.d]
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    /// Trajectories as an n × d × (steps + 1) row-major block.
    pub fn to_particle_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        let len = self.steps + 1;
        for s in 0..len {
            for i in 0..self.n {
                for c in 0..self.d {
                    out[(i * self.d + c) * len + s] = self.data[(s * self.n + i) * self.d + c];
                }
            }
        }
        out
    }

    /// Binary export: magic "MFPC", u32 version, u64 n, d, steps, f64 dt, u64 seed,
    /// then the particle-major block, all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"MFPC")?;
        w.write_all(&1u32.to_le_bytes())?;
        for v in [self.n as u64, self.d as u64, self.steps as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in self.to_particle_major() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// A particle system and its mean-field reference driven by identical noise.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPair {
    pub ensemble: Ensemble,
    pub reference: Ensemble,
}

impl CoupledPair {
    /// (1/k) Σ_{i<k} |X^i − Y^i|² at the given step.
    pub fn mean_sq_gap(&self, step: usize, k: usize) -> f64 {
        let k = k.min(self.ensemble.n);
        let mut acc = 0.0;
        for i in 0..k {
            let x = self.ensemble.position(step, i);
            let y = self.reference.position(step, i);
            acc += x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        acc / k as f64
    }
}

// --- drift evaluation --------------------------------------------------------

/// Exact (1/(n−1)) Σ_{j≠i} b(x_i, x_j) by direct summation.
pub fn drift_pairwise(i: usize, x: &[f64], d: usize, kernel: PairKernel) -> Vec<f64> {
    let n = x.len() / d;
    let xi = &x[i * d..(i + 1) * d];
    let mut acc = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    for j in (0..n).filter(|&j| j != i) {
        kernel.eval(xi, &x[j * d..(j + 1) * d], &mut tmp);
        acc.iter_mut().zip(&tmp).for_each(|(a, t)| *a += t);
    }
    let denom = (n - 1) as f64;
    acc.iter_mut().for_each(|a| *a /= denom);
    acc
}

/// Signed series coefficients s_ℓ·sign_ℓ for ℓ = 1..=L, with L chosen so that the
/// neglected tail (bounded by Σ_{ℓ>L} s_ℓ since |u| ≤ 1) is below tol·Σ s_ℓ.
pub fn truncated_series(s: &SeriesCoefficients, signs: SignPattern) -> Result<Vec<f64>, SimError> {
    let len = match s.finite_range() {
        Some(r) => r,
        None => {
            let budget = s.truncation_tol * s.tail_sum(0);
            (1..=SERIES_TRUNCATION_CAP)
                .find(|&l| s.tail_sum(l) <= budget)
                .ok_or(SimError::TruncationBudget(SERIES_TRUNCATION_CAP))?
        }
    };
    Ok((1..=len).map(|l| s.coefficient(l) * signs.sign(l)).collect())
}

fn horner(coeffs: &[f64], u: f64) -> f64 {
    let mut acc = 0.0;
    for c in coeffs.iter().rev() {
        acc = acc * u + c;
    }
    acc * u
}

/// G(u) = Σ sign_ℓ s_ℓ u^ℓ at u = (1/n) Σ_j b(x_i, x_j), j = i included.
/// For d > 1 the series acts coordinatewise.
pub fn drift_power_series(
    i: usize,
    x: &[f64],
    d: usize,
    s: &SeriesCoefficients,
    base: PairKernel,
    signs: SignPattern,
) -> Result<Vec<f64>, SimError> {
    let coeffs = truncated_series(s, signs)?;
    let u = empirical_average(&x[i * d..(i + 1) * d], x, d, base);
    Ok(u.into_iter().map(|v| horner(&coeffs, v)).collect())
}

fn empirical_average(xi: &[f64], sample: &[f64], d: usize, kernel: PairKernel) -> Vec<f64> {
    let m = sample.len() / d;
    let mut acc = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    for j in 0..m {
        kernel.eval(xi, &sample[j * d..(j + 1) * d], &mut tmp);
        acc.iter_mut().zip(&tmp).for_each(|(a, t)| *a += t);
    }
    acc.iter_mut().for_each(|a| *a /= m as f64);
    acc
}

/// Literal Σ_{ℓ ≤ ℓ_max} (s_ℓ sign_ℓ / n^ℓ) Σ_{S ∈ [n]^ℓ} ∏_m b(x_i, x_{S_m}), duplicates included.
pub fn tuple_average_oracle(
    i: usize,
    x: &[f64],
    d: usize,
    s: &SeriesCoefficients,
    base: PairKernel,
    signs: SignPattern,
    ell_max: usize,
) -> Result<Vec<f64>, SimError> {
    let n = x.len() / d;
    let required = (n as u128).checked_pow(ell_max as u32).unwrap_or(u128::MAX);
    if required > TUPLE_BUDGET {
        return Err(SimError::OracleBudget { required, budget: TUPLE_BUDGET });
    }
    let xi = &x[i * d..(i + 1) * d];
    let mut values = vec![0.0; n * d];
    for j in 0..n {
        base.eval(xi, &x[j * d..(j + 1) * d], &mut values[j * d..(j + 1) * d]);
    }
    let mut out = vec![0.0; d];
    for ell in 1..=ell_max {
        let weight = s.coefficient(ell) * signs.sign(ell);
        let mut idx = vec![0usize; ell];
        for c in 0..d {
            let mut sum = 0.0;
            idx.iter_mut().for_each(|v| *v = 0);
            loop {
                sum += idx.iter().map(|&j| values[j * d + c]).product::<f64>();
                // odometer increment over [n]^ℓ
                let mut pos = 0;
                while pos < ell {
                    idx[pos] += 1;
                    if idx[pos] < n {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
                if pos == ell {
                    break;
                }
            }
            out[c] += weight * sum / (n as f64).powi(ell as i32);
        }
    }
    Ok(out)
}

/// Per-step summary that lets each particle's interaction be evaluated cheaply.
enum Summary<'a> {
    None,
    /// coordinate sums of the sample
    Sum(Vec<f64>),
    /// sorted first coordinates of the sample
    Sorted(Vec<f64>),
    /// the raw sample, for O(m) per particle
    Raw(&'a [f64]),
}

/// How the interaction term is formed from a sample of m points.
#[derive(Clone, Copy)]
enum Averaging {
    /// the particle's own system: average over j ≠ i
    SelfExcluded,
    /// an external sample: average over all of it
    External,
}

struct DriftEval<'a> {
    drift: &'a Drift,
    series: Vec<f64>,
    d: usize,
}

impl<'a> DriftEval<'a> {
    fn new(drift: &'a Drift, d: usize) -> Result<Self, SimError> {
        let series = match &drift.interaction {
            Interaction::PowerSeries { coefficients, signs, .. } => truncated_series(coefficients, *signs)?,
            _ => Vec::new(),
        };
        Ok(Self { drift, series, d })
    }

    fn base_kernel(&self) -> Option<PairKernel> {
        match self.drift.interaction {
            Interaction::None => None,
            Interaction::Pairwise(k) => Some(k),
            Interaction::PowerSeries { base, .. } => Some(base),
        }
    }

    fn summarize<'s>(&self, sample: &'s [f64]) -> Summary<'s> {
        match self.base_kernel() {
            None | Some(PairKernel::Zero) => Summary::None,
            Some(PairKernel::OuLinear { .. }) => {
                let mut sum = vec![0.0; self.d];
                for p in sample.chunks_exact(self.d) {
                    sum.iter_mut().zip(p).for_each(|(s, v)| *s += v);
                }
                Summary::Sum(sum)
            }
            Some(PairKernel::RankIndicator) => {
                let mut v: Vec<f64> = sample.chunks_exact(self.d).map(|p| p[0]).collect();
                v.sort_by(f64::total_cmp);
                Summary::Sorted(v)
            }
            Some(_) => Summary::Raw(sample),
        }
    }

    /// Interaction contribution at position xi, given the sample summary.
    fn interaction(&self, xi: &[f64], summary: &Summary, m: usize, mode: Averaging, out: &mut [f64]) {
        let kernel = match self.base_kernel() {
            Some(k) => k,
            None => {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
        };
        let series = matches!(self.drift.interaction, Interaction::PowerSeries { .. });
        // power-series averages include the particle itself
        let exclude_self = !series && matches!(mode, Averaging::SelfExcluded);
        let denom = if exclude_self { (m - 1) as f64 } else { m as f64 };
        match summary {
            Summary::None => out.iter_mut().for_each(|o| *o = 0.0),
            Summary::Sum(sum) => {
                let b = match kernel {
                    PairKernel::OuLinear { b } => b,
                    _ => unreachable!(),
                };
                for c in 0..self.d {
                    let s = if exclude_self { sum[c] - xi[c] } else { sum[c] };
                    out[c] = -b * s / denom;
                }
            }
            Summary::Sorted(v) => {
                let count = v.partition_point(|&y| y <= xi[0]) as f64;
                let count = if exclude_self { count - 1.0 } else { count };
                out[0] = count / denom;
            }
            Summary::Raw(sample) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let mut tmp = vec![0.0; self.d];
                let mut skipped = !exclude_self;
                for p in sample.chunks_exact(self.d) {
                    // drop one copy of the particle itself
                    if !skipped && p == xi {
                        skipped = true;
                        continue;
                    }
                    kernel.eval(xi, p, &mut tmp);
                    out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
                }
                out.iter_mut().for_each(|o| *o /= denom);
            }
        }
        if series {
            for o in out.iter_mut() {
                *o = horner(&self.series, *o);
            }
        }
    }
}

/// Everything a single run needs besides the drift.
struct RunSpec<'a> {
    n: usize,
    d: usize,
    steps: usize,
    dt: f64,
    noise: NoiseSource,
    keys: &'a [u64],
    init: &'a [f64],
}

/// Interaction source of a run.
enum Field<'a> {
    /// the system's own empirical measure
    Own,
    /// an external trajectory block, read at the current step
    Sample(&'a Ensemble),
    /// −b·m(t) from a known mean path, used as the exact OU reference
    OuMean { b: f64, mean: Box<dyn Fn(f64) -> f64 + Sync + 'a> },
}

fn run(eval: &DriftEval, spec: &RunSpec, field: &Field) -> Result<Vec<f64>, SimError> {
    let (n, d) = (spec.n, spec.d);
    let w = n * d;
    let mut data = Vec::with_capacity(w * (spec.steps + 1));
    data.extend_from_slice(spec.init);
    let mut rngs: Vec<ChaCha8Rng> = spec.keys.iter().map(|&k| spec.noise.stream(k)).collect();
    let sqrt_dt = spec.dt.sqrt();
    let mut next = vec![0.0; w];
    for step in 0..spec.steps {
        let cur = &data[step * w..(step + 1) * w];
        let t = step as f64 * spec.dt;
        let (summary, m, mode) = match field {
            Field::Own => (eval.summarize(cur), n, Averaging::SelfExcluded),
            Field::Sample(e) => (eval.summarize(e.state(step)), e.n, Averaging::External),
            Field::OuMean { .. } => (Summary::None, 0, Averaging::External),
        };
        let scratch = || vec![0.0; 3 * d];
        next.par_chunks_mut(d).zip(rngs.par_iter_mut()).enumerate().for_each_init(scratch, |buf, (i, (out, rng))| {
            let xi = &cur[i * d..(i + 1) * d];
            let (conf, rest) = buf.split_at_mut(d);
            let (inter, z) = rest.split_at_mut(d);
            eval.drift.confinement.eval(xi, conf);
            match field {
                Field::OuMean { b, mean } => inter.iter_mut().for_each(|v| *v = -b * mean(t)),
                _ => eval.interaction(xi, &summary, m, mode, inter),
            }
            NoiseSource::fill(rng, step + 1, z);
            for c in 0..d {
                out[c] = xi[c] + (conf[c] + inter[c]) * spec.dt + sqrt_dt * z[c];
            }
        });
        if next.iter().any(|v| !v.is_finite()) {
            return Err(SimError::BlowUp { step });
        }
        data.extend_from_slice(&next);
    }
    Ok(data)
}

fn initial_state(init: InitCondition, n: usize, d: usize, noise: NoiseSource, keys: &[u64]) -> Vec<f64> {
    let mut x = vec![0.0; n * d];
    if let InitCondition::IidGaussian { mean, var } = init {
        let sd = var.sqrt();
        for (i, &key) in keys.iter().enumerate() {
            let slot = &mut x[i * d..(i + 1) * d];
            noise.initial(key, slot);
            slot.iter_mut().for_each(|v| *v = mean + sd * *v);
        }
    }
    x
}

fn check_cfg(cfg: &ExperimentConfig) -> Result<(), SimError> {
    if cfg.n < 2 && !matches!(cfg.drift.interaction, crate::model::InteractionSpec::None) {
        return Err(SimError::Invalid("interacting systems need n ≥ 2".into()));
    }
    if cfg.d == 0 || cfg.d > MAX_DIM {
        return Err(SimError::Invalid(format!("d must be in 1..={MAX_DIM}")));
    }
    if !(cfg.dt > 0.0) || cfg.steps() == 0 {
        return Err(SimError::Invalid("need dt > 0 and at least one step".into()));
    }
    Ok(())
}

fn ensemble(cfg: &ExperimentConfig, n: usize, seed: u64, data: Vec<f64>) -> Ensemble {
    Ensemble { n, d: cfg.d, steps: cfg.steps(), dt: cfg.dt, seed, drift_tag: cfg.drift.tag(), data }
}

/// Simulates one replica with explicit per-particle noise keys and initial state
/// (n × d). Permuting both permutes the trajectories.
pub fn simulate_with_keys(
    cfg: &ExperimentConfig,
    replica: u64,
    keys: &[u64],
    init: &[f64],
) -> Result<Ensemble, SimError> {
    check_cfg(cfg)?;
    if keys.len() != cfg.n || init.len() != cfg.n * cfg.d {
        return Err(SimError::Invalid("keys/init length must match n and n·d".into()));
    }
    let drift = instantiate_drift(&cfg.drift)?;
    let eval = DriftEval::new(&drift, cfg.d)?;
    let noise = NoiseSource::new(cfg.seed, replica);
    let spec = RunSpec { n: cfg.n, d: cfg.d, steps: cfg.steps(), dt: cfg.dt, noise, keys, init };
    let data = run(&eval, &spec, &Field::Own)?;
    Ok(ensemble(cfg, cfg.n, cfg.seed, data))
}

/// Simulates a given replica with the default keys 0..n.
pub fn simulate_replica(cfg: &ExperimentConfig, replica: u64) -> Result<Ensemble, SimError> {
    check_cfg(cfg)?;
    let keys: Vec<u64> = (0..cfg.n as u64).collect();
    let init = initial_state(cfg.init, cfg.n, cfg.d, NoiseSource::new(cfg.seed, replica), &keys);
    simulate_with_keys(cfg, replica, &keys, &init)
}

/// Replica 0 of the configured system.
pub fn simulate_particles(cfg: &ExperimentConfig) -> Result<Ensemble, SimError> {
    simulate_replica(cfg, 0)
}

/// All `cfg.replicas` replicas, in replica order.
pub fn simulate_replicas(cfg: &ExperimentConfig) -> Result<Vec<Ensemble>, SimError> {
    (0..cfg.replicas as u64).into_par_iter().map(|r| simulate_replica(cfg, r)).collect()
}

/// Particle system plus synchronously coupled mean-field reference for one replica.
///
/// The reference uses the exact law in the OU case (mean m₀e^{−(a+b)t}) and
/// otherwise an independent proxy system of 4n particles.
pub fn simulate_coupled(cfg: &ExperimentConfig, replica: u64) -> Result<CoupledPair, SimError> {
    check_cfg(cfg)?;
    let drift = instantiate_drift(&cfg.drift)?;
    let eval = DriftEval::new(&drift, cfg.d)?;
    let noise = NoiseSource::new(cfg.seed, replica);
    let keys: Vec<u64> = (0..cfg.n as u64).collect();
    let init = initial_state(cfg.init, cfg.n, cfg.d, noise, &keys);
    let spec = RunSpec { n: cfg.n, d: cfg.d, steps: cfg.steps(), dt: cfg.dt, noise, keys: &keys, init: &init };
    let data = run(&eval, &spec, &Field::Own)?;
    let ensemble_out = ensemble(cfg, cfg.n, cfg.seed, data);

    let reference = match (&drift.confinement, &drift.interaction) {
        (_, Interaction::None) => ensemble_out.clone(),
        (crate::model::Confinement::Linear { a }, Interaction::Pairwise(PairKernel::OuLinear { b })) => {
            let m0 = match cfg.init {
                InitCondition::DiracZero => 0.0,
                InitCondition::IidGaussian { mean, .. } => mean,
            };
            let rate = a + b;
            let field = Field::OuMean { b: *b, mean: Box::new(move |t| m0 * (-rate * t).exp()) };
            ensemble(cfg, cfg.n, cfg.seed, run(&eval, &spec, &field)?)
        }
        _ => {
            let proxy_n = 4 * cfg.n;
            let proxy_noise = NoiseSource::new(cfg.seed ^ PROXY_SEED_SALT, replica);
            let proxy_keys: Vec<u64> = (0..proxy_n as u64).collect();
            let proxy_init = initial_state(cfg.init, proxy_n, cfg.d, proxy_noise, &proxy_keys);
            let proxy_spec = RunSpec { n: proxy_n, keys: &proxy_keys, init: &proxy_init, noise: proxy_noise, ..spec };
            let proxy = ensemble(cfg, proxy_n, cfg.seed ^ PROXY_SEED_SALT, run(&eval, &proxy_spec, &Field::Own)?);
            let field = Field::Sample(&proxy);
            let data = run(&eval, &spec, &field)?;
            ensemble(cfg, cfg.n, cfg.seed, data)
        }
    };
    Ok(CoupledPair { ensemble: ensemble_out, reference })
}

// --- combinatorial checks ------------------------------------------------

/// (n)_ℓ = n(n−1)…(n−ℓ+1).
pub fn falling_factorial(n: usize, ell: usize) -> f64 {
    (0..ell).map(|i| n.saturating_sub(i) as f64).product()
}

fn for_each_tuple(n: usize, ell: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; ell];
    loop {
        f(&idx);
        let mut pos = 0;
        while pos < ell {
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == ell {
            return;
        }
    }
}

fn distinct(idx: &[usize]) -> bool {
    idx.iter().enumerate().all(|(p, a)| !idx[..p].contains(a))
}

/// For a table a_S over S ∈ [n]^ℓ (0-based, index Σ S_m n^m), returns
/// |n^{−ℓ} Σ_{[n]^ℓ} a_S − ((n−1)_ℓ)^{−1} Σ_{S distinct, 0 ∉ S} a_S| and the bound ℓ(ℓ+1)/n.
pub fn replacement_gap(n: usize, ell: usize, table: &[f64]) -> (f64, f64) {
    let (mut all, mut restricted) = (0.0, 0.0);
    let mut pos = 0usize;
    for_each_tuple(n, ell, |idx| {
        all += table[pos];
        if !idx.contains(&0) && distinct(idx) {
            restricted += table[pos];
        }
        pos += 1;
    });
    let gap = (all / (n as f64).powi(ell as i32) - restricted / falling_factorial(n - 1, ell)).abs();
    (gap, (ell * (ell + 1)) as f64 / n as f64)
}

/// Fraction of distinct ℓ-tuples from {2,…,n} that touch {2,…,k}, and the bound ℓ(k−1)/(n−ℓ).
pub fn restricted_tuple_ratio(n: usize, k: usize, ell: usize) -> (f64, f64) {
    let mut hits = 0u64;
    // 0-based: candidates are 1..n, "small" ones are 1..k
    for_each_tuple(n, ell, |idx| {
        if !idx.contains(&0) && distinct(idx) && idx.iter().any(|&j| j < k) {
            hits += 1;
        }
    });
    let ratio = hits as f64 / falling_factorial(n - 1, ell);
    (ratio, (ell * (k - 1)) as f64 / (n - ell) as f64)
}

/// Σ c_i − (1 − ∏(1 − c_i)), nonnegative for c ∈ [0,1]^m.
pub fn union_bound_slack(c: &[f64]) -> f64 {
    let prod: f64 = c.iter().map(|v| 1.0 - v).product();
    c.iter().sum::<f64>() - (1.0 - prod)
}

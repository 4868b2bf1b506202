//! Domain types and validated experiment configuration.
//!
//! A [`DriftSpec`] is declarative: kernel ids and named parameters. It turns
//! into an evaluable [`Drift`] through [`instantiate_drift`], which is the only
//! place kernel ids are resolved.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown kernel id `{0}`")]
    UnknownKernel(String),
    #[error("kernel `{kernel}`: {message}")]
    BadKernel { kernel: String, message: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// A kernel id plus named real parameters, as read from a config file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KernelSpec {
    pub id: String,
    pub params: BTreeMap<String, f64>,
}

impl KernelSpec {
    pub fn new(id: &str) -> Self {
        Self { id: id.to_string(), params: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn param(&self, key: &str) -> Result<f64, ModelError> {
        self.params.get(key).copied().ok_or_else(|| ModelError::BadKernel {
            kernel: self.id.clone(),
            message: format!("missing parameter `{key}`"),
        })
    }

    fn param_or(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }
}

/// Sign applied to the ℓ-th term of a power series G(u) = Σ sign_ℓ s_ℓ u^ℓ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignPattern {
    #[default]
    Positive,
    /// sign_ℓ = (−1)^{ℓ+1}
    Alternating,
}

impl SignPattern {
    pub fn sign(self, ell: usize) -> f64 {
        match self {
            SignPattern::Positive => 1.0,
            SignPattern::Alternating => {
                if ell % 2 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InteractionSpec {
    None,
    Pairwise(KernelSpec),
    PowerSeries { base: KernelSpec, coefficients: SeriesCoefficients, signs: SignPattern },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularity {
    Lipschitz { l: f64, m0: f64 },
    Bounded { b_sup: f64 },
    LinearGrowth { k: f64 },
    PowerSeriesBounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    pub confinement: KernelSpec,
    pub interaction: InteractionSpec,
    pub regularity: Option<Regularity>,
}

impl DriftSpec {
    /// Ornstein–Uhlenbeck drift −a·x − b·mean of the others.
    pub fn ou(p: GaussianOUParams) -> Self {
        Self {
            confinement: KernelSpec::new("ou_linear").with("a", p.a),
            interaction: InteractionSpec::Pairwise(KernelSpec::new("ou_linear").with("b", p.b)),
            regularity: Some(Regularity::Lipschitz { l: p.a + p.b, m0: 0.0 }),
        }
    }

    pub fn zero() -> Self {
        Self { confinement: KernelSpec::new("zero"), interaction: InteractionSpec::None, regularity: None }
    }

    pub fn tag(&self) -> String {
        let inter = match &self.interaction {
            InteractionSpec::None => "none".to_string(),
            InteractionSpec::Pairwise(k) => format!("pairwise:{}", k.id),
            InteractionSpec::PowerSeries { base, .. } => format!("power_series:{}", base.id),
        };
        format!("{}+{}", self.confinement.id, inter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianOUParams {
    pub a: f64,
    pub b: f64,
}

impl GaussianOUParams {
    pub fn new(a: f64, b: f64) -> Result<Self, ModelError> {
        // b = 0 is accepted as the no-interaction limit
        if !(a > 0.0 && a.is_finite()) || !(b >= 0.0 && b.is_finite()) {
            return Err(ModelError::InvalidParams(format!("need a > 0, b ≥ 0 (got a={a}, b={b})")));
        }
        Ok(Self { a, b })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeriesFamily {
    /// s_ℓ = list[ℓ − 1] for ℓ = 1..=len, zero afterwards.
    Finite(Vec<f64>),
    /// s_ℓ = (1 − ρ) ρ^{ℓ−1}, so that Σ s_ℓ = 1 and the normalized tail is ρ^{⌊x⌋}.
    Geometric { rho: f64 },
    /// s_ℓ = c₁ (e^{−c₂ ℓ^q} − e^{−c₂ (ℓ+1)^q}); the tail Σ_{ℓ>m} s_ℓ = c₁ e^{−c₂ (m+1)^q} telescopes.
    SuperGeometric { c1: f64, c2: f64, q: f64 },
}

/// Nonnegative summable interaction weights (s_ℓ)_{ℓ ≥ 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesCoefficients {
    pub family: SeriesFamily,
    pub truncation_tol: f64,
}

impl SeriesCoefficients {
    pub fn finite(list: Vec<f64>) -> Self {
        Self { family: SeriesFamily::Finite(list), truncation_tol: 1e-14 }
    }

    pub fn geometric(rho: f64) -> Self {
        Self { family: SeriesFamily::Geometric { rho }, truncation_tol: 1e-14 }
    }

    pub fn super_geometric(c1: f64, c2: f64, q: f64) -> Self {
        Self { family: SeriesFamily::SuperGeometric { c1, c2, q }, truncation_tol: 1e-14 }
    }

    /// s_ℓ for ℓ ≥ 1 (zero for ℓ = 0).
    pub fn coefficient(&self, ell: usize) -> f64 {
        if ell == 0 {
            return 0.0;
        }
        match &self.family {
            SeriesFamily::Finite(v) => v.get(ell - 1).copied().unwrap_or(0.0),
            SeriesFamily::Geometric { rho } => (1.0 - rho) * rho.powi(ell as i32 - 1),
            SeriesFamily::SuperGeometric { c1, c2, q } => {
                let l = ell as f64;
                // e^{−c₂ℓ^q}(1 − e^{−c₂((ℓ+1)^q − ℓ^q)})
                let lo = (-c2 * l.powf(*q)).exp();
                let gap = c2 * ((l + 1.0).powf(*q) - l.powf(*q));
                -c1 * lo * (-gap).exp_m1()
            }
        }
    }

    /// Σ_{ℓ > m} s_ℓ in closed form.
    pub fn tail_sum(&self, m: usize) -> f64 {
        match &self.family {
            SeriesFamily::Finite(v) => v.iter().skip(m).sum(),
            SeriesFamily::Geometric { rho } => rho.powi(m as i32),
            SeriesFamily::SuperGeometric { c1, c2, q } => c1 * (-c2 * ((m + 1) as f64).powf(*q)).exp(),
        }
    }

    /// Largest ℓ with s_ℓ ≠ 0 for finite families.
    pub fn finite_range(&self) -> Option<usize> {
        match &self.family {
            SeriesFamily::Finite(v) => Some(v.iter().rposition(|&s| s != 0.0).map_or(0, |i| i + 1)),
            _ => None,
        }
    }

    /// Constants (c₁, c₂, q) with S₀(x) ≤ c₁ e^{−c₂ x^q} for x > 0, or `None` for finite families.
    pub fn tail_constants(&self) -> Option<(f64, f64, f64)> {
        match &self.family {
            SeriesFamily::Finite(_) => None,
            // ρ^{⌊x⌋} ≤ ρ^{x−1}
            SeriesFamily::Geometric { rho } => Some((1.0 / rho, -rho.ln(), 1.0)),
            // e^{c₂} e^{−c₂(⌊x⌋+1)^q} ≤ e^{c₂} e^{−c₂x^q}
            SeriesFamily::SuperGeometric { c2, q, .. } => Some((c2.exp(), *c2, *q)),
        }
    }

    fn diagnostics(&self, path: &str, out: &mut Vec<Diagnostic>) {
        match &self.family {
            SeriesFamily::Finite(v) => {
                if v.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                    out.push(Diagnostic::new(path, "coefficients must be finite and ≥ 0"));
                }
            }
            SeriesFamily::Geometric { rho } => {
                if !(*rho > 0.0 && *rho < 1.0) {
                    out.push(Diagnostic::new(path, "geometric ratio must be in (0,1)"));
                }
            }
            SeriesFamily::SuperGeometric { c1, c2, q } => {
                if !(*c1 >= 0.0 && c1.is_finite()) {
                    out.push(Diagnostic::new(path, "super_geometric c1 must be finite and ≥ 0"));
                }
                if !(*c2 > 0.0 && c2.is_finite()) {
                    out.push(Diagnostic::new(path, "super_geometric c2 must be > 0"));
                }
                if !(*q >= 1.0 && q.is_finite()) {
                    out.push(Diagnostic::new(path, "super_geometric q must be ≥ 1"));
                }
            }
        }
        if !(self.truncation_tol > 0.0 && self.truncation_tol < 1.0) {
            out.push(Diagnostic::new(path, "truncation_tol must be in (0,1)"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitCondition {
    DiracZero,
    IidGaussian { mean: f64, var: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub horizon: f64,
    pub dt: f64,
    pub replicas: usize,
    pub seed: u64,
    pub drift: DriftSpec,
    pub init: InitCondition,
}

impl ExperimentConfig {
    /// Number of Euler steps covering the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// One violated invariant, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(path: &str, message: &str) -> Self {
        Self { path: path.to_string(), message: message.to_string() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

const CONFINEMENT_KERNELS: &[&str] = &["zero", "ou_linear"];
const PAIR_KERNELS: &[&str] = &["zero", "ou_linear", "bounded_tanh", "lingrowth_sign", "rank_indicator"];

/// Returns the config unchanged if every invariant holds, otherwise every violation found.
pub fn validate_config(cfg: ExperimentConfig) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    if cfg.n < 1 {
        diags.push(Diagnostic::new("experiment.n", "n ≥ 1 violated"));
    }
    if cfg.k < 1 {
        diags.push(Diagnostic::new("experiment.k", "k ≥ 1 violated"));
    }
    if cfg.k > cfg.n {
        diags.push(Diagnostic::new("experiment.k", "k ≤ n violated"));
    }
    if cfg.d < 1 {
        diags.push(Diagnostic::new("experiment.d", "d ≥ 1 violated"));
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        diags.push(Diagnostic::new("experiment.dt", "dt > 0 violated"));
    }
    if !(cfg.horizon >= cfg.dt && cfg.horizon.is_finite()) {
        diags.push(Diagnostic::new("experiment.horizon", "T ≥ dt violated"));
    }
    if cfg.replicas < 1 {
        diags.push(Diagnostic::new("experiment.replicas", "replicas ≥ 1 violated"));
    }
    if let InitCondition::IidGaussian { mean, var } = cfg.init {
        if !mean.is_finite() || !(var >= 0.0 && var.is_finite()) {
            diags.push(Diagnostic::new("experiment.init", "iid_gaussian needs finite mean and var ≥ 0"));
        }
    }
    drift_diagnostics(&cfg.drift, cfg.n, cfg.d, &mut diags);
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(diags)
    }
}

fn drift_diagnostics(spec: &DriftSpec, n: usize, d: usize, diags: &mut Vec<Diagnostic>) {
    if !CONFINEMENT_KERNELS.contains(&spec.confinement.id.as_str()) {
        diags.push(Diagnostic::new("confinement.kernel", &format!("unknown kernel id `{}`", spec.confinement.id)));
    }
    let check_pair = |k: &KernelSpec, path: &str, diags: &mut Vec<Diagnostic>| {
        if !PAIR_KERNELS.contains(&k.id.as_str()) {
            diags.push(Diagnostic::new(path, &format!("unknown kernel id `{}`", k.id)));
        }
        if k.id == "rank_indicator" && d != 1 {
            diags.push(Diagnostic::new(path, "rank_indicator requires d = 1"));
        }
        for (key, v) in &k.params {
            if !v.is_finite() {
                diags.push(Diagnostic::new(&format!("{path}.{key}"), "parameter must be finite"));
            }
        }
    };
    match &spec.interaction {
        InteractionSpec::None => {}
        InteractionSpec::Pairwise(k) => {
            check_pair(k, "interaction.kernel", diags);
            if n < 2 {
                diags.push(Diagnostic::new("experiment.n", "pairwise interaction needs n ≥ 2"));
            }
        }
        InteractionSpec::PowerSeries { base, coefficients, .. } => {
            check_pair(base, "interaction.kernel", diags);
            coefficients.diagnostics("interaction.series", diags);
            let bounded = match base.id.as_str() {
                "rank_indicator" | "zero" => true,
                "bounded_tanh" => base.param_or("scale", 1.0).abs() <= 1.0,
                _ => false,
            };
            if !bounded {
                diags.push(Diagnostic::new("interaction.kernel", "power_series base kernel must satisfy |b| ≤ 1"));
            }
        }
    }
    if let Some(reg) = spec.regularity {
        match reg {
            Regularity::Lipschitz { l, m0 } => {
                if !(l > 0.0 && l.is_finite()) {
                    diags.push(Diagnostic::new("regularity.L", "lipschitz requires L > 0"));
                }
                if !(m0 >= 0.0 && m0.is_finite()) {
                    diags.push(Diagnostic::new("regularity.M0", "lipschitz requires finite M0 ≥ 0"));
                }
            }
            Regularity::Bounded { b_sup } => {
                if !(b_sup >= 0.0 && b_sup.is_finite()) {
                    diags.push(Diagnostic::new("regularity.b_sup", "bounded requires b_sup ≥ 0"));
                }
            }
            Regularity::LinearGrowth { k } => {
                if !(k > 0.0 && k.is_finite()) {
                    diags.push(Diagnostic::new("regularity.K", "linear_growth requires K > 0"));
                }
            }
            Regularity::PowerSeriesBounded => {
                if !matches!(spec.interaction, InteractionSpec::PowerSeries { .. }) {
                    diags.push(Diagnostic::new("regularity", "power_series_bounded needs a power_series interaction"));
                }
            }
        }
    }
}

/// b₀(x): the confinement part of the drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Confinement {
    Zero,
    /// b₀(x) = −a x
    Linear { a: f64 },
}

impl Confinement {
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match *self {
            Confinement::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Confinement::Linear { a } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -a * xi;
                }
            }
        }
    }
}

/// Built-in pair kernels b(x, y), evaluated componentwise in ℝ^d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairKernel {
    Zero,
    /// b(x, y) = −b·y
    OuLinear { b: f64 },
    /// b(x, y) = scale·tanh(y − x)
    BoundedTanh { scale: f64 },
    /// b(x, y) = scale·sign(y − x)·(1 + |y|), sign(0) = +1
    LinGrowthSign { scale: f64 },
    /// b(x, y) = 1_{y ≤ x} (d = 1)
    RankIndicator,
}

impl PairKernel {
    pub fn eval(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match *self {
            PairKernel::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            PairKernel::OuLinear { b } => {
                for (o, yi) in out.iter_mut().zip(y) {
                    *o = -b * yi;
                }
            }
            PairKernel::BoundedTanh { scale } => {
                for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
                    *o = scale * (yi - xi).tanh();
                }
            }
            PairKernel::LinGrowthSign { scale } => {
                let norm_y = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
                    let s = if yi - xi >= 0.0 { 1.0 } else { -1.0 };
                    *o = scale * s * (1.0 + norm_y);
                }
            }
            PairKernel::RankIndicator => {
                out[0] = if y[0] <= x[0] { 1.0 } else { 0.0 };
            }
        }
    }

    /// sup |b| when the kernel is bounded.
    pub fn sup_norm(&self, d: usize) -> Option<f64> {
        match *self {
            PairKernel::Zero => Some(0.0),
            PairKernel::BoundedTanh { scale } => Some(scale.abs() * (d as f64).sqrt()),
            PairKernel::RankIndicator => Some(1.0),
            _ => None,
        }
    }

    /// Constant K for which b (with b₀ = 0) satisfies both linear-growth conditions
    /// |b(x,y)| ≤ K(1+|x|+|y|) and |b(x,y) − b(x,y′)| ≤ K(1+|y|+|y′|).
    pub fn linear_growth_constant(&self, d: usize) -> Option<f64> {
        match *self {
            // a sign flip between y and y′ costs (1+|y|) + (1+|y′|)
            PairKernel::LinGrowthSign { scale } => Some(2.0 * scale.abs() * (d as f64).sqrt()),
            PairKernel::OuLinear { b } => Some(b.abs().max(f64::MIN_POSITIVE)),
            _ => self.sup_norm(d).map(|s| 2.0 * s.max(f64::MIN_POSITIVE)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Interaction {
    None,
    Pairwise(PairKernel),
    PowerSeries { base: PairKernel, coefficients: SeriesCoefficients, signs: SignPattern },
}

/// Evaluable drift b₀(x) + interaction(x, snapshot).
#[derive(Debug, Clone, PartialEq)]
pub struct Drift {
    pub confinement: Confinement,
    pub interaction: Interaction,
}

fn resolve_pair(k: &KernelSpec) -> Result<PairKernel, ModelError> {
    Ok(match k.id.as_str() {
        "zero" => PairKernel::Zero,
        "ou_linear" => PairKernel::OuLinear { b: k.param("b")? },
        "bounded_tanh" => PairKernel::BoundedTanh { scale: k.param_or("scale", 1.0) },
        "lingrowth_sign" => PairKernel::LinGrowthSign { scale: k.param_or("scale", 1.0) },
        "rank_indicator" => PairKernel::RankIndicator,
        other => return Err(ModelError::UnknownKernel(other.to_string())),
    })
}

/// Resolves kernel ids into a pure evaluator.
pub fn instantiate_drift(spec: &DriftSpec) -> Result<Drift, ModelError> {
    let confinement = match spec.confinement.id.as_str() {
        "zero" => Confinement::Zero,
        "ou_linear" => Confinement::Linear { a: spec.confinement.param("a")? },
        other => return Err(ModelError::UnknownKernel(other.to_string())),
    };
    let interaction = match &spec.interaction {
        InteractionSpec::None => Interaction::None,
        InteractionSpec::Pairwise(k) => Interaction::Pairwise(resolve_pair(k)?),
        InteractionSpec::PowerSeries { base, coefficients, signs } => {
            let base_kernel = resolve_pair(base)?;
            match base_kernel.sup_norm(1) {
                Some(s) if s <= 1.0 => {}
                _ => {
                    return Err(ModelError::BadKernel {
                        kernel: base.id.clone(),
                        message: "power_series base kernel must satisfy |b| ≤ 1".into(),
                    })
                }
            }
            Interaction::PowerSeries { base: base_kernel, coefficients: coefficients.clone(), signs: *signs }
        }
    };
    Ok(Drift { confinement, interaction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn base_cfg() -> ExperimentConfig {
        ExperimentConfig {
            n: 8,
            k: 2,
            d: 1,
            horizon: 1.0,
            dt: 0.01,
            replicas: 1,
            seed: 1,
            drift: DriftSpec::ou(GaussianOUParams { a: 1.0, b: 1.0 }),
            init: InitCondition::DiracZero,
        }
    }

    #[test]
    fn valid_config_passes_unchanged() {
        let cfg = base_cfg();
        assert_eq!(validate_config(cfg.clone()).unwrap(), cfg);
        assert_eq!(cfg.steps(), 100);
    }

    #[test]
    fn k_above_n_is_reported() {
        let mut cfg = base_cfg();
        cfg.k = 9;
        let diags = validate_config(cfg).unwrap_err();
        assert!(diags.iter().any(|d| d.path == "experiment.k" && d.message == "k ≤ n violated"));
    }

    #[test]
    fn geometric_ratio_out_of_range() {
        let mut cfg = base_cfg();
        cfg.drift.interaction = InteractionSpec::PowerSeries {
            base: KernelSpec::new("bounded_tanh"),
            coefficients: SeriesCoefficients::geometric(1.2),
            signs: SignPattern::Positive,
        };
        let diags = validate_config(cfg).unwrap_err();
        assert!(diags.iter().any(|d| d.message == "geometric ratio must be in (0,1)"));
    }

    #[test]
    fn several_violations_all_listed() {
        let mut cfg = base_cfg();
        cfg.dt = -1.0;
        cfg.replicas = 0;
        cfg.drift.regularity = Some(Regularity::Lipschitz { l: 0.0, m0: 1.0 });
        let diags = validate_config(cfg).unwrap_err();
        let paths: Vec<_> = diags.iter().map(|d| d.path.as_str()).collect();
        assert!(paths.contains(&"experiment.dt"));
        assert!(paths.contains(&"experiment.replicas"));
        assert!(paths.contains(&"regularity.L"));
    }

    #[test]
    fn unknown_kernel_rejected() {
        let mut spec = DriftSpec::zero();
        spec.interaction = InteractionSpec::Pairwise(KernelSpec::new("coulomb"));
        assert_eq!(instantiate_drift(&spec), Err(ModelError::UnknownKernel("coulomb".into())));
        let mut cfg = base_cfg();
        cfg.drift = spec;
        assert!(validate_config(cfg).is_err());
    }

    #[test]
    fn unbounded_power_series_base_rejected() {
        let spec = DriftSpec {
            confinement: KernelSpec::new("zero"),
            interaction: InteractionSpec::PowerSeries {
                base: KernelSpec::new("lingrowth_sign"),
                coefficients: SeriesCoefficients::finite(vec![1.0]),
                signs: SignPattern::Positive,
            },
            regularity: None,
        };
        assert!(matches!(instantiate_drift(&spec), Err(ModelError::BadKernel { .. })));
    }

    #[test]
    fn bounded_kernels_respect_declared_sup() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let kernels = [PairKernel::BoundedTanh { scale: 0.7 }, PairKernel::RankIndicator, PairKernel::Zero];
        for kern in kernels {
            let sup = kern.sup_norm(1).unwrap();
            let mut out = [0.0];
            for _ in 0..10_000 {
                let x = [rng.random_range(-50.0..50.0)];
                let y = [rng.random_range(-50.0..50.0)];
                kern.eval(&x, &y, &mut out);
                assert!(out[0].abs() <= sup, "{kern:?}");
            }
        }
    }

    #[test]
    fn lingrowth_sign_satisfies_growth_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let kern = PairKernel::LinGrowthSign { scale: 1.5 };
        let k = kern.linear_growth_constant(1).unwrap();
        let (mut b1, mut b2) = ([0.0], [0.0]);
        for i in 0..10_000 {
            let x = rng.random_range(-20.0..20.0);
            let y = rng.random_range(-20.0..20.0);
            // include near-ties so the sign flip is exercised
            let y2 = if i % 3 == 0 { x - (y - x) } else { rng.random_range(-20.0..20.0) };
            kern.eval(&[x], &[y], &mut b1);
            kern.eval(&[x], &[y2], &mut b2);
            assert!(b1[0].abs() <= k * (1.0 + x.abs() + y.abs()));
            assert!((b1[0] - b2[0]).abs() <= k * (1.0 + y.abs() + y2.abs()) + 1e-12);
        }
    }

    #[test]
    fn sign_pattern_alternates_from_plus() {
        let s = SignPattern::Alternating;
        assert_eq!([s.sign(1), s.sign(2), s.sign(3)], [1.0, -1.0, 1.0]);
    }

    #[test]
    fn series_tails_are_consistent_with_coefficients() {
        for s in [
            SeriesCoefficients::geometric(0.5),
            SeriesCoefficients::super_geometric(2.0, 0.3, 1.5),
            SeriesCoefficients::finite(vec![0.5, 0.0, 0.25]),
        ] {
            for m in 0..6 {
                let direct: f64 = (m + 1..400).map(|l| s.coefficient(l)).sum();
                assert!((direct - s.tail_sum(m)).abs() < 1e-14, "{s:?} m={m}");
            }
        }
        assert_eq!(SeriesCoefficients::finite(vec![0.5, 0.0, 0.25, 0.0]).finite_range(), Some(3));
    }
}

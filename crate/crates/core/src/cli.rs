//! Scenario runner behind the `chaoskit` binary.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ConfigFile, Section};
use crate::gaussian_exact::{self as gx, GaussianError};
use crate::hierarchy_bounds::{self as hb, ABParams, BoundInputs, BoundsError, EllMode};
use crate::metrics::{self, MetricsError};
use crate::model::{
    validate_config, DriftSpec, ExperimentConfig, GaussianOUParams, InitCondition, InteractionSpec, KernelSpec,
    ModelError, SeriesCoefficients,
};
use crate::report::{emit_report, Cell, ColumnType, Manifest, ReportError, Schema};
use crate::simulate::{self, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Scenario {
    GaussianRate,
    AbIdentities,
    BoundTables,
    SimulateValidate,
    InfrangeSweep,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::GaussianRate => "gaussian_rate",
            Scenario::AbIdentities => "ab_identities",
            Scenario::BoundTables => "bound_tables",
            Scenario::SimulateValidate => "simulate_validate",
            Scenario::InfrangeSweep => "infrange_sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::from_str(s, false).ok()
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("config: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Invalid(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { .. } => CliError::Io(e.to_string()),
            ReportError::Schema { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Model(m) => m.into(),
            SimError::Invalid(s) => CliError::Invalid(s),
            SimError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<GaussianError> for CliError {
    fn from(e: GaussianError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::InvalidParams(s) => CliError::Invalid(s),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianRateParams {
    pub a: f64,
    pub b: f64,
    pub t: f64,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub ell_max: usize,
    pub t: Vec<f64>,
    pub mc_samples: usize,
    pub identity_t: Vec<f64>,
    pub identity_p: Vec<u32>,
    pub max_terms: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    pub c0: f64,
    pub gamma: f64,
    pub m: f64,
    pub horizon: f64,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub b_sup: f64,
    pub series: SeriesCoefficients,
    pub ell: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    pub replicas: usize,
    pub coupling_n: Vec<usize>,
    pub rank_n: Vec<usize>,
    pub rank_replicas: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfParams {
    pub c0: f64,
    pub horizon: f64,
    pub n: Vec<usize>,
    pub k: usize,
    pub rho: Vec<f64>,
    pub super_geometric: Option<(f64, f64, f64)>,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    GaussianRate(GaussianRateParams),
    AbIdentities(AbParams),
    BoundTables(BoundParams),
    SimulateValidate(SimParams),
    InfrangeSweep(InfParams),
}

/// A validated scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub params: Params,
    pub out: PathBuf,
    pub seed: u64,
    pub config_echo: Vec<(String, String, String)>,
}

fn nonempty<T>(s: &Section, key: &str, v: Vec<T>) -> Result<Vec<T>, ConfigError> {
    if v.is_empty() {
        Err(s.error(key, "grid must be nonempty"))
    } else {
        Ok(v)
    }
}

fn positive(s: &Section, key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(s.error(key, "must be a finite positive number"))
    }
}

fn parse_series(s: &Section, default: SeriesCoefficients) -> Result<SeriesCoefficients, ConfigError> {
    let Some(kind) = s.get::<String>("series")? else { return Ok(default) };
    let series = match kind.as_str() {
        "finite" => SeriesCoefficients::finite(s.list::<f64>("coefficients")?.ok_or_else(|| s.error("coefficients", "required for finite series"))?),
        "geometric" => SeriesCoefficients::geometric(s.require("rho")?),
        "super_geometric" => SeriesCoefficients::super_geometric(s.require("c1")?, s.require("c2")?, s.require("q")?),
        other => return Err(s.error("series", &format!("unknown family `{other}`"))),
    };
    if let Some(tol) = s.get::<f64>("truncation_tol")? {
        return Ok(SeriesCoefficients { truncation_tol: positive(s, "truncation_tol", tol)?, ..series });
    }
    Ok(series)
}

fn default_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 5.0]
}

fn read_params(scenario: Scenario, s: &Section) -> Result<Params, ConfigError> {
    Ok(match scenario {
        Scenario::GaussianRate => Params::GaussianRate(GaussianRateParams {
            a: positive(s, "a", s.get_or("a", 1.0)?)?,
            b: positive(s, "b", s.get_or("b", 1.0)?)?,
            t: positive(s, "t", s.get_or("t", 1.0)?)?,
            n: nonempty(s, "n", s.counts_or("n", vec![1_000, 10_000, 100_000, 1_000_000])?)?,
            k: nonempty(s, "k", s.counts_or("k", vec![2])?)?,
        }),
        Scenario::AbIdentities => {
            let ell_max = s.count_or("ell_max", 5)?;
            if ell_max > 5 {
                return Err(s.error("ell_max", "quadrature oracle supports ℓ ≤ 5"));
            }
            Params::AbIdentities(AbParams {
                a: nonempty(s, "a", s.list_or("a", default_grid())?)?,
                b: nonempty(s, "b", s.list_or("b", default_grid())?)?,
                ell_max,
                t: nonempty(s, "t", s.list_or("t", vec![0.1, 0.5, 1.0, 2.0])?)?,
                mc_samples: s.count_or("mc_samples", 100_000)?,
                identity_t: nonempty(s, "identity_t", s.list_or("identity_t", vec![0.1, 0.25, 0.5])?)?,
                identity_p: s.list_or("identity_p", vec![0, 1, 2])?,
                max_terms: s.count_or("max_terms", hb::IDENTITY_TERM_CAP)?,
            })
        }
        Scenario::BoundTables => Params::BoundTables(BoundParams {
            c0: s.get_or("c0", 1.0)?,
            gamma: s.get_or("gamma", 1.0)?,
            m: s.get_or("m", 1.0)?,
            horizon: s.get_or("horizon", 0.25)?,
            n: nonempty(s, "n", s.counts_or("n", vec![10, 100, 1_000, 10_000])?)?,
            k: nonempty(s, "k", s.counts_or("k", (1..=10).collect())?)?,
            b_sup: s.get_or("b_sup", 1.0)?,
            series: parse_series(s, SeriesCoefficients::finite(vec![0.5, 0.25]))?,
            ell: s.get("ell")?,
        }),
        Scenario::SimulateValidate => Params::SimulateValidate(SimParams {
            a: positive(s, "a", s.get_or("a", 1.0)?)?,
            b: positive(s, "b", s.get_or("b", 1.0)?)?,
            n: s.count_or("n", 256)?,
            dt: positive(s, "dt", s.get_or("dt", 1e-3)?)?,
            times: nonempty(s, "times", s.list_or("times", (1..=10).map(|i| i as f64 / 10.0).collect())?)?,
            replicas: s.count_or("replicas", 32)?,
            coupling_n: nonempty(s, "coupling_n", s.counts_or("coupling_n", vec![64, 128, 256, 512])?)?,
            rank_n: nonempty(s, "rank_n", s.counts_or("rank_n", vec![32, 64, 128, 256])?)?,
            rank_replicas: s.count_or("rank_replicas", 8)?,
        }),
        Scenario::InfrangeSweep => {
            let sg = match (s.get::<f64>("c1")?, s.get::<f64>("c2")?, s.get::<f64>("q")?) {
                (None, None, None) => Some((5.0, 2.0, 2.0)),
                (Some(c1), Some(c2), Some(q)) => Some((c1, c2, q)),
                _ => return Err(s.error("c1", "c1, c2 and q must be given together")),
            };
            Params::InfrangeSweep(InfParams {
                c0: s.get_or("c0", 1.0)?,
                horizon: positive(s, "horizon", s.get_or("horizon", 0.02)?)?,
                n: nonempty(s, "n", s.counts_or("n", vec![10_000, 100_000, 1_000_000, 10_000_000])?)?,
                k: s.count_or("k", 2)?,
                rho: s.list_or("rho", vec![0.5])?,
                super_geometric: sg,
                eps: s.get_or("eps", 0.25)?,
            })
        }
    })
}

/// Resolves the scenario, seed and parameter grid from flags and an optional config file.
pub fn build_spec(
    scenario: Option<Scenario>,
    config: Option<&ConfigFile>,
    out: PathBuf,
    seed: Option<u64>,
) -> Result<ScenarioSpec, CliError> {
    let empty = ConfigFile::default();
    let file = config.unwrap_or(&empty);
    let run = file.section("run");
    let from_file = run
        .get::<String>("scenario")?
        .map(|s| Scenario::parse(&s).ok_or_else(|| run.error("scenario", &format!("unknown scenario `{s}`"))))
        .transpose()?;
    let scenario = scenario.or(from_file).ok_or_else(|| CliError::Invalid("no scenario given".into()))?;
    let file_seed = run.get::<u64>("seed")?;
    let params = read_params(scenario, &file.section(scenario.name()))?;
    file.finish()?;
    Ok(ScenarioSpec {
        scenario,
        params,
        out,
        seed: seed.or(file_seed).unwrap_or(0),
        config_echo: file.entries(),
    })
}

fn float_cols(names: &[&'static str]) -> Vec<(&'static str, ColumnType)> {
    names.iter().map(|n| (*n, ColumnType::Float)).collect()
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Writer<'_> {
    fn table(&mut self, name: &str, schema: &Schema, rows: &[Vec<Cell>]) -> Result<(), CliError> {
        emit_report(rows, schema, &self.dir.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Runs a scenario, writing its tables and manifest into `spec.out`.
/// Returns the names of the files written.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<Vec<String>, CliError> {
    let start = Instant::now();
    fs::create_dir_all(&spec.out).map_err(|e| CliError::Io(format!("{}: {e}", spec.out.display())))?;
    let mut w = Writer { dir: &spec.out, files: Vec::new() };
    match &spec.params {
        Params::GaussianRate(p) => gaussian_rate(p, &mut w)?,
        Params::AbIdentities(p) => ab_identities(p, spec.seed, &mut w)?,
        Params::BoundTables(p) => bound_tables(p, &mut w)?,
        Params::SimulateValidate(p) => simulate_validate(p, spec.seed, &mut w)?,
        Params::InfrangeSweep(p) => infrange_sweep(p, &mut w)?,
    }
    let manifest = Manifest {
        scenario: spec.scenario.name().to_string(),
        seed: spec.seed,
        config: spec.config_echo.clone(),
        files: w.files.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    manifest.write(&spec.out.join("manifest.json"))?;
    let mut files = w.files;
    files.push("manifest.json".into());
    Ok(files)
}

fn gaussian_rate(p: &GaussianRateParams, w: &mut Writer) -> Result<(), CliError> {
    let ou = GaussianOUParams::new(p.a, p.b)?;
    if let Some((n, k)) = p.n.iter().flat_map(|&n| p.k.iter().map(move |&k| (n, k))).find(|&(n, k)| n < 2 || k < 1 || k > n) {
        return Err(CliError::Invalid(format!("[gaussian_rate] need n ≥ 2 and 1 ≤ k ≤ n (got n={n}, k={k})")));
    }
    let w2_lim = gx::w2_rate_limit(ou, p.t)?;
    let kl_lim = gx::kl_rate_limit(ou, p.t)?;
    let nc_lim = gx::nc_limit(ou, p.t)?;
    let grid: Vec<(usize, usize)> = p.n.iter().flat_map(|&n| p.k.iter().map(move |&k| (n, k))).collect();
    let rows = grid
        .par_iter()
        .map(|&(n, k)| -> Result<Vec<Cell>, CliError> {
            let (marginal, product) = gx::marginal_and_product(ou, n, k, p.t)?;
            let w2 = gx::w2_exchangeable(&marginal, &product)?;
            let kl = gx::kl_exchangeable(&marginal, &product)?;
            let scale = (n as f64 / k as f64).powi(2);
            Ok(vec![
                n.into(),
                k.into(),
                w2.into(),
                kl.into(),
                (scale * w2).into(),
                (scale * kl).into(),
                w2_lim.into(),
                kl_lim.into(),
                (n as f64 * marginal.c).into(),
                nc_lim.into(),
            ])
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut cols = vec![("n", ColumnType::Int), ("k", ColumnType::Int)];
    cols.extend(float_cols(&[
        "w2_sq",
        "kl",
        "w2_sq_scaled",
        "kl_scaled",
        "w2_rate_limit",
        "kl_rate_limit",
        "n_c",
        "nc_limit",
    ]));
    w.table("gaussian_rate.csv", &Schema::new(&cols), &rows)
}

fn ab_identities(p: &AbParams, seed: u64, w: &mut Writer) -> Result<(), CliError> {
    let mut grid = Vec::new();
    for &a in &p.a {
        for &b in &p.b {
            for ell in 0..=p.ell_max {
                for &t in &p.t {
                    grid.push((a, b, ell, t));
                }
            }
        }
    }
    let routes = grid
        .par_iter()
        .enumerate()
        .map(|(idx, &(a, b, ell, t))| -> Result<(Vec<Cell>, f64, f64, bool), CliError> {
            let ab = ABParams::new(a, b)?;
            let closed = hb::a_closed(ab, ell, t)?;
            let quad = hb::a_quadrature_oracle(ab, ell, t)?;
            let mc = hb::a_montecarlo_oracle(ab, ell, t, p.mc_samples, seed.wrapping_add(idx as u64));
            let sub = hb::a_subgaussian_bound(ab, ell, t);
            let se = mc.std_error.max((closed * (1.0 - closed) / p.mc_samples as f64).sqrt());
            let z = if se > 0.0 { (mc.estimate - closed) / se } else { 0.0 };
            let dominated = closed <= sub;
            let row = vec![
                a.into(),
                b.into(),
                ell.into(),
                t.into(),
                closed.into(),
                quad.into(),
                (closed - quad).abs().into(),
                mc.estimate.into(),
                mc.std_error.into(),
                z.into(),
                sub.into(),
                dominated.into(),
            ];
            Ok((row, (closed - quad).abs(), z.abs(), dominated))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut cols = float_cols(&["a", "b"]);
    cols.push(("ell", ColumnType::Int));
    cols.extend(float_cols(&["t", "closed", "quadrature", "quad_abs_err", "montecarlo", "mc_std_error", "mc_z", "subgaussian"]));
    cols.push(("dominated", ColumnType::Flag));
    let rows: Vec<Vec<Cell>> = routes.iter().map(|r| r.0.clone()).collect();
    w.table("ab_routes.csv", &Schema::new(&cols), &rows)?;

    let mut id_grid = Vec::new();
    for &a in &p.a {
        for &b in &p.b {
            for &t in &p.identity_t {
                for &pe in &p.identity_p {
                    id_grid.push((a, b, Some(pe), t));
                }
                id_grid.push((a, b, None, t));
            }
        }
    }
    let ids = id_grid
        .par_iter()
        .map(|&(a, b, pe, t)| -> Result<(Vec<Cell>, Option<f64>), CliError> {
            let ab = ABParams::new(a, b)?;
            let (res, shifted) = match pe {
                Some(pe) => (hb::sum_identity_a(ab, pe, t, p.max_terms), None),
                None => match hb::sum_identity_b(ab, t, p.max_terms) {
                    Ok(r) => (Ok(r.check), Some(r.shifted_weight_value)),
                    Err(e) => (Err(e), None),
                },
            };
            let head: Vec<Cell> = vec![
                if pe.is_some() { "A" } else { "B" }.into(),
                a.into(),
                b.into(),
                pe.map_or(Cell::Empty, |v| Cell::Int(v as i64)),
                t.into(),
            ];
            match res {
                Ok(c) => {
                    let rel = c.relative_error();
                    let mut row = head;
                    row.extend([
                        c.closed_value.into(),
                        c.truncated_value.into(),
                        rel.into(),
                        c.terms.into(),
                        c.remainder_bound.into(),
                        "ok".into(),
                        shifted.into(),
                    ]);
                    Ok((row, Some(rel)))
                }
                Err(BoundsError::RemainderBudget { remainder, .. }) => {
                    let mut row = head;
                    row.extend([Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, remainder.into(), "budget_exceeded".into(), Cell::Empty]);
                    Ok((row, None))
                }
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut cols = vec![("identity", ColumnType::Text), ("a", ColumnType::Float), ("b", ColumnType::Float), ("p", ColumnType::Int)];
    cols.extend(float_cols(&["t", "closed", "truncated", "rel_err"]));
    cols.push(("terms", ColumnType::Int));
    cols.push(("remainder_bound", ColumnType::Float));
    cols.push(("status", ColumnType::Text));
    cols.push(("shifted_weight_value", ColumnType::Float));
    let rows: Vec<Vec<Cell>> = ids.iter().map(|r| r.0.clone()).collect();
    w.table("ab_identities.csv", &Schema::new(&cols), &rows)?;

    let max_quad = routes.iter().map(|r| r.1).fold(0.0, f64::max);
    let max_z = routes.iter().map(|r| r.2).fold(0.0, f64::max);
    let violations = routes.iter().filter(|r| !r.3).count();
    let max_rel = ids.iter().filter_map(|r| r.1).fold(0.0, f64::max);
    let budget = ids.iter().filter(|r| r.1.is_none()).count();
    let summary = vec![
        vec!["max_quad_abs_err".into(), max_quad.into()],
        vec!["max_mc_abs_z".into(), max_z.into()],
        vec!["domination_violations".into(), (violations as f64).into()],
        vec!["max_identity_rel_err".into(), max_rel.into()],
        vec!["identity_budget_exceeded".into(), (budget as f64).into()],
    ];
    w.table("ab_summary.csv", &Schema::new(&[("metric", ColumnType::Text), ("value", ColumnType::Float)]), &summary)
}

const BOUND_TERMS: usize = 4;

fn bound_row(theorem: &str, n: usize, k: usize, ell: Option<usize>, slack: Option<f64>, report: Option<&hb::BoundReport>) -> Vec<Cell> {
    let mut row: Vec<Cell> = vec![
        theorem.into(),
        n.into(),
        k.into(),
        ell.map_or(Cell::Empty, |l| Cell::Int(l as i64)),
        slack.into(),
        report.is_none().into(),
    ];
    match report {
        Some(r) => {
            row.push(r.total.into());
            row.push(r.constant("C").into());
            row.push(r.constant("gamma").into());
            for i in 0..BOUND_TERMS {
                row.push(r.terms.get(i).map(|t| t.1).into());
            }
        }
        None => row.extend(std::iter::repeat_n(Cell::Empty, 3 + BOUND_TERMS)),
    }
    row
}

fn bound_schema() -> Schema {
    let mut cols = vec![
        ("theorem", ColumnType::Text),
        ("n", ColumnType::Int),
        ("k", ColumnType::Int),
        ("ell", ColumnType::Int),
        ("precondition_slack", ColumnType::Float),
        ("precondition_failed", ColumnType::Flag),
    ];
    cols.extend(float_cols(&["total", "C", "gamma", "term1", "term2", "term3", "term4"]));
    Schema::new(&cols)
}

fn bound_tables(p: &BoundParams, w: &mut Writer) -> Result<(), CliError> {
    let grid: Vec<(usize, usize)> =
        p.n.iter().flat_map(|&n| p.k.iter().filter(move |&&k| k <= n).map(move |&k| (n, k))).collect();
    let threshold = hb::main_bound_threshold(p.gamma, p.horizon);
    let blocks = grid
        .par_iter()
        .map(|&(n, k)| -> Result<Vec<Vec<Cell>>, CliError> {
            let slack = n as f64 - threshold;
            let inp = BoundInputs { c0: p.c0, gamma: p.gamma, m: p.m, horizon: p.horizon, n, k };
            let main = match hb::bound_main(inp) {
                Ok(r) => Some(r),
                Err(BoundsError::Precondition { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            let reversed = hb::bound_reversed(p.c0, p.b_sup, p.horizon, n, k)?;
            let ell = match p.ell {
                Some(l) => l,
                None => match hb::infrange_select_ell(&p.series, p.horizon, n, k, EllMode::Subexp) {
                    Ok(c) => c.ell,
                    Err(BoundsError::Hypothesis(_)) => 1,
                    Err(e) => return Err(e.into()),
                },
            };
            let inf_slack = n as f64 / 2.0 - (ell + k) as f64;
            let inf = if inf_slack >= 0.0 { Some(hb::bound_infrange(p.c0, &p.series, p.horizon, n, k, ell)?) } else { None };
            Ok(vec![
                bound_row("pairwise_entropy", n, k, None, Some(slack), main.as_ref()),
                bound_row("bounded_reversed", n, k, None, None, Some(&reversed)),
                bound_row("infinite_range", n, k, Some(ell), Some(inf_slack), inf.as_ref()),
            ])
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<Vec<Cell>> = blocks.into_iter().flatten().collect();
    w.table("bound_tables.csv", &bound_schema(), &rows)
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Least-squares slope of log y against log x.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ls_slope(&lx, &ly)
}

fn experiment(n: usize, horizon: f64, dt: f64, replicas: usize, seed: u64, drift: DriftSpec) -> Result<ExperimentConfig, CliError> {
    let cfg = ExperimentConfig { n, k: 1, d: 1, horizon, dt, replicas, seed, drift, init: InitCondition::DiracZero };
    validate_config(cfg).map_err(|d| CliError::Invalid(d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")))
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, f64::NAN);
    }
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn simulate_validate(p: &SimParams, seed: u64, w: &mut Writer) -> Result<(), CliError> {
    let ou = GaussianOUParams::new(p.a, p.b)?;
    let horizon = p.times.iter().cloned().fold(0.0, f64::max);
    let cfg = experiment(p.n, horizon, p.dt, p.replicas, seed, DriftSpec::ou(ou))?;
    let ens = simulate::simulate_replicas(&cfg)?;
    let mut cov_rows = Vec::new();
    let mut failures = 0usize;
    for &t in &p.times {
        let step = (t / p.dt).round() as usize;
        let est = metrics::fit_exchangeable_cov(&ens, step, p.n)?;
        let exact = gx::ou_covariance_flow(ou, p.n, t)?;
        let cover = est.covers(exact.v, exact.c, 0.99);
        if let Some((cv, cc)) = cover {
            failures += usize::from(!cv) + usize::from(!cc);
        }
        cov_rows.push(vec![
            t.into(),
            est.v.into(),
            est.v_se.into(),
            exact.v.into(),
            cover.map_or(Cell::Empty, |c| c.0.into()),
            est.c.into(),
            est.c_se.into(),
            exact.c.into(),
            cover.map_or(Cell::Empty, |c| c.1.into()),
        ]);
    }
    let mut cols = float_cols(&["t", "v_hat", "v_se", "v_exact"]);
    cols.push(("v_covered", ColumnType::Flag));
    cols.extend(float_cols(&["c_hat", "c_se", "c_exact"]));
    cols.push(("c_covered", ColumnType::Flag));
    w.table("sim_covariance.csv", &Schema::new(&cols), &cov_rows)?;

    let coupling = coupling_sweep(ou, &p.coupling_n, p.dt, p.replicas, seed)?;
    let rows: Vec<Vec<Cell>> = coupling.iter().map(|(n, m, se)| vec![(*n).into(), (*m).into(), (*se).into()]).collect();
    let sch = Schema::new(&[("n", ColumnType::Int), ("mean_sq_gap", ColumnType::Float), ("std_error", ColumnType::Float)]);
    w.table("sim_coupling.csv", &sch, &rows)?;

    let rank = rank_w1_sweep(&p.rank_n, p.dt, p.rank_replicas, seed)?;
    let rows: Vec<Vec<Cell>> = rank.iter().map(|(n, m, se)| vec![(*n).into(), (*m).into(), (*se).into()]).collect();
    let sch = Schema::new(&[("n", ColumnType::Int), ("w1", ColumnType::Float), ("std_error", ColumnType::Float)]);
    w.table("sim_rank_w1.csv", &sch, &rows)?;

    let slope = |v: &[(usize, f64, f64)]| {
        let x: Vec<f64> = v.iter().map(|r| r.0 as f64).collect();
        let y: Vec<f64> = v.iter().map(|r| r.1).collect();
        if x.len() >= 2 { log_log_slope(&x, &y) } else { f64::NAN }
    };
    let summary = vec![
        vec!["band_failures".into(), (failures as f64).into()],
        vec!["bands".into(), ((2 * p.times.len()) as f64).into()],
        vec!["coupling_slope".into(), slope(&coupling).into()],
        vec!["rank_w1_slope".into(), slope(&rank).into()],
    ];
    w.table("sim_summary.csv", &Schema::new(&[("metric", ColumnType::Text), ("value", ColumnType::Float)]), &summary)
}

/// Mean of (1/n)Σ|X^i − Y^i|² at t = 1 against the exact OU reference, per n.
pub fn coupling_sweep(
    ou: GaussianOUParams,
    ns: &[usize],
    dt: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<(usize, f64, f64)>, CliError> {
    ns.iter()
        .map(|&n| {
            let cfg = experiment(n, 1.0, dt, replicas, seed, DriftSpec::ou(ou))?;
            let gaps = (0..replicas as u64)
                .into_par_iter()
                .map(|r| simulate::simulate_coupled(&cfg, r).map(|pair| pair.mean_sq_gap(cfg.steps(), n)))
                .collect::<Result<Vec<_>, _>>()?;
            let (m, se) = mean_se(&gaps);
            Ok((n, m, se))
        })
        .collect()
}

/// W1 at t = 1 between a rank-interacting system and its proxy reference, per n.
pub fn rank_w1_sweep(ns: &[usize], dt: f64, replicas: usize, seed: u64) -> Result<Vec<(usize, f64, f64)>, CliError> {
    let drift = DriftSpec {
        confinement: KernelSpec::new("zero"),
        interaction: InteractionSpec::Pairwise(KernelSpec::new("rank_indicator")),
        regularity: None,
    };
    ns.iter()
        .map(|&n| {
            let cfg = experiment(n, 1.0, dt, replicas, seed, drift.clone())?;
            let dists = (0..replicas as u64)
                .into_par_iter()
                .map(|r| -> Result<f64, CliError> {
                    let pair = simulate::simulate_coupled(&cfg, r)?;
                    let s = cfg.steps();
                    Ok(metrics::w1_sorted_1d(pair.ensemble.state(s), pair.reference.state(s), 1)?)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (m, se) = mean_se(&dists);
            Ok((n, m, se))
        })
        .collect()
}

fn infrange_sweep(p: &InfParams, w: &mut Writer) -> Result<(), CliError> {
    let mut families: Vec<(String, SeriesCoefficients, EllMode)> =
        p.rho.iter().map(|&r| (format!("geometric(rho={r})"), SeriesCoefficients::geometric(r), EllMode::Subexp)).collect();
    if let Some((c1, c2, q)) = p.super_geometric {
        families.push((
            format!("super_geometric(c1={c1};c2={c2};q={q})"),
            SeriesCoefficients::super_geometric(c1, c2, q),
            EllMode::SubexpQ { eps: p.eps },
        ));
    }
    let mut rows = Vec::new();
    for (name, s, mode) in &families {
        let stats = hb::series_stats(s, &[0, 2], &[])?;
        let block = p
            .n
            .par_iter()
            .map(|&n| -> Result<Vec<Cell>, CliError> {
                let choice = hb::infrange_select_ell(s, p.horizon, n, p.k, *mode)?;
                let report = if 2 * (choice.ell + p.k) <= n {
                    Some(hb::bound_infrange(p.c0, s, p.horizon, n, p.k, choice.ell)?)
                } else {
                    None
                };
                let mut row: Vec<Cell> = vec![
                    name.as_str().into(),
                    n.into(),
                    p.k.into(),
                    stats.moment(0).into(),
                    stats.moment(2).into(),
                    choice.ell.into(),
                    choice.exponent.into(),
                    report.is_none().into(),
                ];
                match &report {
                    Some(r) => {
                        row.push(r.total.into());
                        row.extend(r.terms.iter().map(|t| Cell::Float(t.1)));
                    }
                    None => row.extend(std::iter::repeat_n(Cell::Empty, 1 + BOUND_TERMS)),
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.extend(block);
    }
    let mut cols = vec![("family", ColumnType::Text), ("n", ColumnType::Int), ("k", ColumnType::Int)];
    cols.extend(float_cols(&["sbar0", "sbar2"]));
    cols.push(("ell", ColumnType::Int));
    cols.push(("predicted_exponent", ColumnType::Float));
    cols.push(("precondition_failed", ColumnType::Flag));
    cols.extend(float_cols(&["total", "term1", "term2", "term3", "term4"]));
    w.table("infrange_sweep.csv", &Schema::new(&cols), &rows)
}

#[derive(Debug, Parser)]
#[command(name = "chaoskit", version, about = "Propagation-of-chaos numerics: closed forms, bounds and simulations")]
pub struct Args {
    /// Scenario to run (overrides `[run] scenario` in the config).
    #[arg(long, value_enum)]
    pub scenario: Option<Scenario>,
    /// Config file with `key = value` lines and `[section]` headers.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Seed for all stochastic parts (overrides `[run] seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "CHAOSKIT_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

fn execute(args: &Args) -> Result<Vec<String>, CliError> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Some(ConfigFile::parse(&text)?)
        }
        None => None,
    };
    let spec = build_spec(args.scenario, file.as_ref(), args.out.clone(), args.seed)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.workers {
        if n == 0 {
            return Err(CliError::Invalid("--workers must be ≥ 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| run_scenario(&spec))
}

/// Parses arguments, runs the scenario and returns the process exit status.
/// On failure the message is also written to `<out>/error.txt`.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&args) {
        Ok(files) => {
            if !args.quiet {
                for f in files {
                    eprintln!("wrote {}", args.out.join(f).display());
                }
            }
            0
        }
        Err(e) => {
            eprintln!("chaoskit: {e}");
            if fs::create_dir_all(&args.out).is_ok() {
                let _ = fs::write(args.out.join("error.txt"), format!("{e}\n"));
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::value_variants() {
            assert_eq!(Scenario::parse(s.name()), Some(*s));
        }
        assert_eq!(Scenario::parse("nope"), None);
    }

    #[test]
    fn flag_overrides_config() {
        let cfg = ConfigFile::parse("[run]\nscenario = bound_tables\nseed = 5\n").unwrap();
        let spec = build_spec(Some(Scenario::GaussianRate), Some(&cfg), "o".into(), Some(9)).unwrap();
        assert_eq!((spec.scenario, spec.seed), (Scenario::GaussianRate, 9));
        let spec = build_spec(None, Some(&cfg), "o".into(), None).unwrap();
        assert_eq!((spec.scenario, spec.seed), (Scenario::BoundTables, 5));
    }

    #[test]
    fn config_errors_map_to_exit_2() {
        let cfg = ConfigFile::parse("[gaussian_rate]\nnn = 3\n").unwrap();
        let err = build_spec(Some(Scenario::GaussianRate), Some(&cfg), "o".into(), None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = build_spec(None, None, "o".into(), None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let cfg = ConfigFile::parse("[gaussian_rate]\nn = 10\nk = 20\n").unwrap();
        let spec = build_spec(Some(Scenario::GaussianRate), Some(&cfg), "o".into(), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = run_scenario(&ScenarioSpec { out: dir.path().into(), ..spec }).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((log_log_slope(&x, &y) + 1.5).abs() < 1e-12);
    }
}

//! Experiment orchestration: seeded sweeps over metric, beta, cutoff,
//! noise, target optimality, trade-off weight, and tie-break; naive-
//! relative normalization; aggregation with confidence intervals; and
//! runtime measurement.
//!
//! Rankers run on the (possibly noise-perturbed) instance while all
//! evaluation uses the true intent distribution. Queries are processed
//! in query-id order; with a fixed seed the whole pipeline is
//! deterministic down to the report bytes.

pub mod report;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::exact::{exact_vrisk_opt, DEFAULT_ENUM_BUDGET};
use crate::ingest::{perturb_intents, NoiseConfig};
use crate::instance::{QueryInstance, Ranking};
use crate::metrics::{
    compute_targets, delta_normalize, BaseMetric, MetricSpec, QueryEvaluator, TargetMode,
};
use crate::rankers::{
    calibrated_rerank, ia_select, iw_greedy, mmr, naive_rank, vrisker, xquad, DiversifierConfig,
    SimilarityProvider, TieBreak,
};

pub use report::{
    emit_report, read_rows_csv, render_table, significance, write_csv, ComparisonResult,
    MetricField,
};

/// Re-ranking methods the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Naive,
    IwGreedy,
    Vrisker,
    Xquad,
    Mmr,
    IaSelect,
    Cr,
    Exact,
}

impl Method {
    pub fn all() -> [Method; 8] {
        [
            Method::Naive,
            Method::IwGreedy,
            Method::Vrisker,
            Method::Xquad,
            Method::Mmr,
            Method::IaSelect,
            Method::Cr,
            Method::Exact,
        ]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Naive => "naive",
            Method::IwGreedy => "iw_greedy",
            Method::Vrisker => "vrisker",
            Method::Xquad => "xquad",
            Method::Mmr => "mmr",
            Method::IaSelect => "ia_select",
            Method::Cr => "cr",
            Method::Exact => "exact",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Method::Naive),
            "iw_greedy" => Ok(Method::IwGreedy),
            "vrisker" => Ok(Method::Vrisker),
            "xquad" => Ok(Method::Xquad),
            "mmr" => Ok(Method::Mmr),
            "ia_select" => Ok(Method::IaSelect),
            "cr" => Ok(Method::Cr),
            "exact" => Ok(Method::Exact),
            other => Err(Error::InvalidConfig(format!("unknown method {other}"))),
        }
    }
}

/// How per-intent targets are chosen for loss computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetKind {
    Oracle,
    ScaledOracle(f64),
    /// Per-intent value of the naive ranking of the true instance.
    NaiveBaseline,
    Constant(f64),
}

/// Sweepable experiment axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Metric,
    Beta,
    K,
    Noise,
    TargetAlpha,
    Lambda,
    Tiebreak,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Metric => "metric",
            SweepAxis::Beta => "beta",
            SweepAxis::K => "k",
            SweepAxis::Noise => "noise",
            SweepAxis::TargetAlpha => "target_alpha",
            SweepAxis::Lambda => "lambda",
            SweepAxis::Tiebreak => "tiebreak",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "metric" => Ok(SweepAxis::Metric),
            "beta" => Ok(SweepAxis::Beta),
            "k" => Ok(SweepAxis::K),
            "noise" => Ok(SweepAxis::Noise),
            "target_alpha" => Ok(SweepAxis::TargetAlpha),
            "lambda" => Ok(SweepAxis::Lambda),
            "tiebreak" => Ok(SweepAxis::Tiebreak),
            other => Err(Error::InvalidConfig(format!("unknown sweep axis {other}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<String>,
}

/// Everything an experiment run needs besides the dataset itself.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub methods: Vec<Method>,
    pub k: usize,
    pub beta: f64,
    pub spec: MetricSpec,
    pub target: TargetKind,
    pub lambda: f64,
    pub noise_sigma2: f64,
    /// Use the random tie-break ablation instead of the IW tie-break.
    pub random_tie_break: bool,
    pub sweep: Option<Sweep>,
    pub seed: u64,
    pub exact_budget: u128,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            methods: vec![Method::Naive, Method::Vrisker],
            k: 10,
            beta: 0.10,
            spec: MetricSpec::avg_rel(),
            target: TargetKind::Oracle,
            lambda: 0.5,
            noise_sigma2: 0.0,
            random_tie_break: false,
            sweep: None,
            seed: 0,
            exact_budget: DEFAULT_ENUM_BUDGET,
        }
    }
}

/// One row of the per-query report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRecord {
    pub method: String,
    pub query_id: String,
    pub grid: String,
    pub vrisk: f64,
    pub v_std: f64,
    pub v_iw: f64,
    pub delta_risk: Option<f64>,
    pub delta_std: Option<f64>,
    pub delta_iw: Option<f64>,
}

/// Mean with a 95% normal-approximation confidence interval, treating
/// each query as an independent observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub ci95_half: f64,
    pub n: usize,
}

impl Aggregate {
    fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let ci95_half = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        };
        Some(Self { mean, ci95_half, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub grid: String,
    pub method: String,
    pub vrisk: Aggregate,
    pub v_std: Aggregate,
    pub v_iw: Aggregate,
    pub delta_risk: Option<Aggregate>,
    pub delta_std: Option<Aggregate>,
    pub delta_iw: Option<Aggregate>,
    /// Queries excluded from the corresponding delta aggregate because
    /// the naive value was zero while the method value was positive.
    pub excluded_risk: usize,
    pub excluded_std: usize,
    pub excluded_iw: usize,
}

/// A per-query method failure surfaced in the report (e.g. the exact
/// optimizer exceeding its enumeration budget).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodError {
    pub method: String,
    pub query_id: String,
    pub grid: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: String,
    pub ms_per_query: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<RowRecord>,
    pub aggregates: Vec<MethodAggregate>,
    pub method_errors: Vec<MethodError>,
    pub timings: Vec<MethodTiming>,
}

#[derive(Debug, Clone)]
struct GridPoint {
    label: String,
    spec: MetricSpec,
    beta: f64,
    k: usize,
    sigma2: f64,
    target: TargetKind,
    lambda: f64,
    random_tie_break: bool,
}

fn grid_points(plan: &ExperimentPlan) -> Result<Vec<GridPoint>, Error> {
    let base = GridPoint {
        label: "default".to_string(),
        spec: plan.spec.clone(),
        beta: plan.beta,
        k: plan.k,
        sigma2: plan.noise_sigma2,
        target: plan.target,
        lambda: plan.lambda,
        random_tie_break: plan.random_tie_break,
    };
    let Some(sweep) = &plan.sweep else {
        return Ok(vec![base]);
    };
    if sweep.values.is_empty() {
        return Err(Error::InvalidConfig("empty sweep grid".to_string()));
    }
    let mut points = Vec::with_capacity(sweep.values.len());
    for value in &sweep.values {
        let mut gp = base.clone();
        gp.label = format!("{}={}", sweep.axis, value);
        match sweep.axis {
            SweepAxis::Metric => {
                gp.spec.metric = value.parse::<BaseMetric>()?;
            }
            SweepAxis::Beta => {
                gp.beta = parse_f64(value)?;
            }
            SweepAxis::K => {
                gp.k = value
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad k value {value}")))?;
            }
            SweepAxis::Noise => {
                gp.sigma2 = parse_f64(value)?;
            }
            SweepAxis::TargetAlpha => {
                gp.target = TargetKind::ScaledOracle(parse_f64(value)?);
            }
            SweepAxis::Lambda => {
                gp.lambda = parse_f64(value)?;
            }
            SweepAxis::Tiebreak => {
                gp.random_tie_break = match value.to_ascii_lowercase().as_str() {
                    "iw" => false,
                    "random" => true,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "tiebreak grid value must be iw or random, got {other}"
                        )))
                    }
                };
            }
        }
        points.push(gp);
    }
    Ok(points)
}

fn parse_f64(value: &str) -> Result<f64, Error> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad numeric grid value {value}")))
}

/// FNV-style mix of the master seed, a grid salt, and the query id, so
/// per-query randomness is stable regardless of worker scheduling.
fn derive_seed(base: u64, salt: u64, query_id: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ base.wrapping_mul(0x100000001b3);
    for b in query_id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ salt.wrapping_mul(0x9e3779b97f4a7c15)
}

struct QueryOutcome {
    rows: Vec<RowRecord>,
    errors: Vec<MethodError>,
}

/// Runs the full plan over the instances and assembles the report.
/// Queries are evaluated in parallel; the reduction order is fixed by
/// sorting on query id, so reruns are byte-identical.
pub fn run_experiment(
    instances: &[QueryInstance],
    plan: &ExperimentPlan,
) -> Result<ExperimentReport, Error> {
    if instances.is_empty() {
        return Err(Error::Dataset("no instances to evaluate".to_string()));
    }
    if plan.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods selected".to_string()));
    }
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by(|&a, &b| instances[a].query_id().cmp(instances[b].query_id()));

    let points = grid_points(plan)?;
    let mut report = ExperimentReport::default();
    for (gp_idx, gp) in points.iter().enumerate() {
        let outcomes: Result<Vec<QueryOutcome>, Error> = order
            .par_iter()
            .map(|&qi| evaluate_query(&instances[qi], gp, gp_idx as u64, plan))
            .collect();
        for outcome in outcomes? {
            report.rows.extend(outcome.rows);
            report.method_errors.extend(outcome.errors);
        }
    }
    report.aggregates = aggregate(&report.rows, &points, &plan.methods);
    Ok(report)
}

fn evaluate_query(
    inst: &QueryInstance,
    gp: &GridPoint,
    gp_salt: u64,
    plan: &ExperimentPlan,
) -> Result<QueryOutcome, Error> {
    let spec = &gp.spec;
    let k = gp.k;
    // Rankers see the perturbed distribution; evaluation uses the truth.
    let noisy;
    let ranking_inst = if gp.sigma2 > 0.0 {
        noisy = perturb_intents(
            inst,
            &NoiseConfig {
                sigma2: gp.sigma2,
                seed: derive_seed(plan.seed, gp_salt, inst.query_id()),
            },
        )?;
        &noisy
    } else {
        inst
    };
    let target_mode = match gp.target {
        TargetKind::Oracle => TargetMode::Oracle,
        TargetKind::ScaledOracle(alpha) => TargetMode::ScaledOracle { alpha },
        TargetKind::NaiveBaseline => TargetMode::BaselineRanking(naive_rank(inst, k)?),
        TargetKind::Constant(v) => TargetMode::Constant(v),
    };
    let targets = compute_targets(inst, spec, k, &target_mode)?;
    let eval = QueryEvaluator::new(inst, spec, k)?;

    let cfg = DiversifierConfig {
        lambda: gp.lambda,
        tie_epsilon: 1e-12,
        tie_break: if gp.random_tie_break {
            TieBreak::Random {
                seed: derive_seed(plan.seed, gp_salt.wrapping_add(0x5eed), inst.query_id()),
            }
        } else {
            TieBreak::Iw
        },
    };

    let naive = naive_rank(ranking_inst, k)?;
    let naive_scores = score_ranking(&eval, inst, &naive, &targets, gp.beta)?;

    let mut rows = Vec::with_capacity(plan.methods.len());
    let mut errors = Vec::new();
    for &method in &plan.methods {
        let ranking = match run_method(method, ranking_inst, k, gp, spec, &targets, &cfg, plan) {
            Ok(r) => r,
            Err(e) => {
                errors.push(MethodError {
                    method: method.to_string(),
                    query_id: inst.query_id().to_string(),
                    grid: gp.label.clone(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let scores = if method == Method::Naive {
            naive_scores
        } else {
            score_ranking(&eval, inst, &ranking, &targets, gp.beta)?
        };
        rows.push(RowRecord {
            method: method.to_string(),
            query_id: inst.query_id().to_string(),
            grid: gp.label.clone(),
            vrisk: scores.0,
            v_std: scores.1,
            v_iw: scores.2,
            delta_risk: delta_normalize(scores.0, naive_scores.0).value(),
            delta_std: delta_normalize(scores.1, naive_scores.1).value(),
            delta_iw: delta_normalize(scores.2, naive_scores.2).value(),
        });
    }
    Ok(QueryOutcome { rows, errors })
}

#[allow(clippy::too_many_arguments)]
fn run_method(
    method: Method,
    inst: &QueryInstance,
    k: usize,
    gp: &GridPoint,
    spec: &MetricSpec,
    targets: &[f64],
    cfg: &DiversifierConfig,
    plan: &ExperimentPlan,
) -> Result<Ranking, Error> {
    match method {
        Method::Naive => naive_rank(inst, k),
        Method::IwGreedy => iw_greedy(inst, k, spec),
        Method::Vrisker => vrisker(inst, k, gp.beta, spec, targets, cfg),
        Method::Xquad => xquad(inst, k, cfg),
        Method::Mmr => {
            let sim = SimilarityProvider::for_instance(inst)?;
            mmr(inst, k, &sim, cfg)
        }
        Method::IaSelect => ia_select(inst, k),
        Method::Cr => calibrated_rerank(inst, k, cfg),
        Method::Exact => {
            exact_vrisk_opt(inst, k, gp.beta, spec, targets, plan.exact_budget).map(|(r, _)| r)
        }
    }
}

fn score_ranking(
    eval: &QueryEvaluator,
    inst: &QueryInstance,
    ranking: &Ranking,
    targets: &[f64],
    beta: f64,
) -> Result<(f64, f64, f64), Error> {
    let idxs = ranking.indices_in(inst)?;
    let risk = eval.risk(&idxs, targets, beta)?;
    Ok((risk.vrisk, eval.v_std(&idxs), eval.v_iw(&idxs)))
}

fn aggregate(
    rows: &[RowRecord],
    points: &[GridPoint],
    methods: &[Method],
) -> Vec<MethodAggregate> {
    let mut out = Vec::new();
    for gp in points {
        for method in methods {
            let method_name = method.to_string();
            let selected: Vec<&RowRecord> = rows
                .iter()
                .filter(|r| r.grid == gp.label && r.method == method_name)
                .collect();
            if selected.is_empty() {
                continue;
            }
            let collect = |f: &dyn Fn(&RowRecord) -> f64| -> Vec<f64> {
                selected.iter().map(|r| f(r)).collect()
            };
            let deltas = |f: &dyn Fn(&RowRecord) -> Option<f64>| -> (Option<Aggregate>, usize) {
                let values: Vec<f64> = selected.iter().filter_map(|r| f(r)).collect();
                let excluded = selected.len() - values.len();
                (Aggregate::from_values(&values), excluded)
            };
            let (delta_risk, excluded_risk) = deltas(&|r| r.delta_risk);
            let (delta_std, excluded_std) = deltas(&|r| r.delta_std);
            let (delta_iw, excluded_iw) = deltas(&|r| r.delta_iw);
            out.push(MethodAggregate {
                grid: gp.label.clone(),
                method: method_name,
                vrisk: Aggregate::from_values(&collect(&|r| r.vrisk)).expect("nonempty"),
                v_std: Aggregate::from_values(&collect(&|r| r.v_std)).expect("nonempty"),
                v_iw: Aggregate::from_values(&collect(&|r| r.v_iw)).expect("nonempty"),
                delta_risk,
                delta_std,
                delta_iw,
                excluded_risk,
                excluded_std,
                excluded_iw,
            });
        }
    }
    out
}

/// Wall-clock ranking cost per method, median of `trials` per-query
/// means, single-threaded, after `warmups` untimed passes. Targets and
/// similarity matrices are prepared outside the timed region.
pub fn measure_runtime(
    instances: &[QueryInstance],
    plan: &ExperimentPlan,
    warmups: usize,
    trials: usize,
) -> Result<Vec<MethodTiming>, Error> {
    if instances.is_empty() {
        return Err(Error::Dataset("no instances to time".to_string()));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("need at least one trial".to_string()));
    }
    let points = grid_points(plan)?;
    let gp = &points[0];
    let spec = &gp.spec;
    let k = gp.k;
    let cfg = DiversifierConfig {
        lambda: gp.lambda,
        tie_epsilon: 1e-12,
        tie_break: TieBreak::Iw,
    };

    let mut prepared = Vec::with_capacity(instances.len());
    for inst in instances {
        let target_mode = match gp.target {
            TargetKind::Oracle => TargetMode::Oracle,
            TargetKind::ScaledOracle(alpha) => TargetMode::ScaledOracle { alpha },
            TargetKind::NaiveBaseline => TargetMode::BaselineRanking(naive_rank(inst, k)?),
            TargetKind::Constant(v) => TargetMode::Constant(v),
        };
        let targets = compute_targets(inst, spec, k, &target_mode)?;
        let sim = if plan.methods.contains(&Method::Mmr) {
            Some(SimilarityProvider::for_instance(inst)?)
        } else {
            None
        };
        prepared.push((inst, targets, sim));
    }

    let mut timings = Vec::with_capacity(plan.methods.len());
    for &method in &plan.methods {
        let run_all = |prepared: &[(&QueryInstance, Vec<f64>, Option<SimilarityProvider>)]|
         -> Result<(), Error> {
            for (inst, targets, sim) in prepared {
                let ranking = match method {
                    Method::Mmr => {
                        let sim = sim.as_ref().expect("similarity prepared");
                        mmr(inst, k, sim, &cfg)?
                    }
                    _ => run_method(method, inst, k, gp, spec, targets, &cfg, plan)?,
                };
                std::hint::black_box(ranking);
            }
            Ok(())
        };
        for _ in 0..warmups {
            run_all(&prepared)?;
        }
        let mut per_query_means = Vec::with_capacity(trials);
        for _ in 0..trials {
            let start = Instant::now();
            run_all(&prepared)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            per_query_means.push(elapsed / instances.len() as f64);
        }
        per_query_means.sort_by(f64::total_cmp);
        let median = per_query_means[per_query_means.len() / 2];
        timings.push(MethodTiming {
            method: method.to_string(),
            ms_per_query: median,
            trials,
        });
    }
    Ok(timings)
}

#[cfg(test)]
mod tests;

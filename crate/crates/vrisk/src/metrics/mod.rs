//! Ranking quality metrics and the tail-risk evaluation built on them.
//!
//! Six base metrics share one interface: a value computed from the grade
//! sequence of the ranked documents at cutoff `k`. On top of them sit the
//! standard (intent-marginalized) value, per-intent values, the
//! intent-weighted average, per-intent losses against a target level, and
//! the discrete CVaR of the loss distribution.

pub(crate) mod incremental;

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::instance::{QueryInstance, Ranking};

/// Base ranking metric applied to a grade sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseMetric {
    AvgRel,
    Dcg,
    Ndcg,
    Err,
    Rbp,
    PrecAtK,
}

impl BaseMetric {
    /// Modular metrics have set values independent of position order
    /// (a sum of per-document contributions divided by `k`).
    pub fn is_modular(self) -> bool {
        matches!(self, BaseMetric::AvgRel | BaseMetric::PrecAtK)
    }

    pub fn all() -> [BaseMetric; 6] {
        [
            BaseMetric::AvgRel,
            BaseMetric::Dcg,
            BaseMetric::Ndcg,
            BaseMetric::Err,
            BaseMetric::Rbp,
            BaseMetric::PrecAtK,
        ]
    }
}

impl fmt::Display for BaseMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BaseMetric::AvgRel => "avgrel",
            BaseMetric::Dcg => "dcg",
            BaseMetric::Ndcg => "ndcg",
            BaseMetric::Err => "err",
            BaseMetric::Rbp => "rbp",
            BaseMetric::PrecAtK => "precatk",
        };
        f.write_str(s)
    }
}

impl FromStr for BaseMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "avgrel" => Ok(BaseMetric::AvgRel),
            "dcg" => Ok(BaseMetric::Dcg),
            "ndcg" => Ok(BaseMetric::Ndcg),
            "err" => Ok(BaseMetric::Err),
            "rbp" => Ok(BaseMetric::Rbp),
            "precatk" => Ok(BaseMetric::PrecAtK),
            other => Err(Error::InvalidConfig(format!("unknown metric {other}"))),
        }
    }
}

/// Gain applied to a grade before discounting (DCG/nDCG) or before
/// normalizing into a stop probability (ERR).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainScheme {
    Linear,
    Exponential,
}

impl fmt::Display for GainScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GainScheme::Linear => "linear",
            GainScheme::Exponential => "exponential",
        })
    }
}

impl FromStr for GainScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(GainScheme::Linear),
            "exponential" => Ok(GainScheme::Exponential),
            other => Err(Error::InvalidConfig(format!("unknown gain scheme {other}"))),
        }
    }
}

/// Which base metric to use plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub metric: BaseMetric,
    /// Gain scheme for DCG/nDCG/ERR. Exponential by default.
    pub gain: GainScheme,
    /// RBP persistence, in (0, 1).
    pub rbp_persistence: f64,
    /// Binarization threshold for Precision@k. Defaults to
    /// `(rel_min + rel_max) / 2` of the evaluated instance.
    pub binarize_threshold: Option<f64>,
}

impl MetricSpec {
    pub fn new(metric: BaseMetric) -> Self {
        Self {
            metric,
            gain: GainScheme::Exponential,
            rbp_persistence: 0.8,
            binarize_threshold: None,
        }
    }

    pub fn avg_rel() -> Self {
        Self::new(BaseMetric::AvgRel)
    }

    pub fn dcg() -> Self {
        Self::new(BaseMetric::Dcg)
    }

    pub fn ndcg() -> Self {
        Self::new(BaseMetric::Ndcg)
    }

    pub fn err() -> Self {
        Self::new(BaseMetric::Err)
    }

    pub fn rbp() -> Self {
        Self::new(BaseMetric::Rbp)
    }

    pub fn prec_at_k() -> Self {
        Self::new(BaseMetric::PrecAtK)
    }

    pub fn with_gain(mut self, gain: GainScheme) -> Self {
        self.gain = gain;
        self
    }

    pub fn with_rbp_persistence(mut self, p: f64) -> Self {
        self.rbp_persistence = p;
        self
    }

    pub fn with_binarize_threshold(mut self, threshold: f64) -> Self {
        self.binarize_threshold = Some(threshold);
        self
    }

    /// True when the intent-weighted value provably collapses to the
    /// standard value for every ranking.
    pub fn is_linear(&self) -> bool {
        match self.metric {
            BaseMetric::AvgRel | BaseMetric::PrecAtK => true,
            BaseMetric::Dcg => self.gain == GainScheme::Linear,
            _ => false,
        }
    }

    pub(crate) fn validate(&self, rel_min: f64, rel_max: f64) -> Result<(), Error> {
        if !(self.rbp_persistence > 0.0 && self.rbp_persistence < 1.0) {
            return Err(Error::InvalidMetricSpec(format!(
                "rbp persistence must be in (0, 1), got {}",
                self.rbp_persistence
            )));
        }
        if let Some(t) = self.binarize_threshold {
            if !(t >= rel_min && t <= rel_max) {
                return Err(Error::InvalidMetricSpec(format!(
                    "binarize threshold {t} outside [{rel_min}, {rel_max}]"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn threshold(&self, rel_min: f64, rel_max: f64) -> f64 {
        self.binarize_threshold
            .unwrap_or(0.5 * (rel_min + rel_max))
    }

    pub(crate) fn gain_of(&self, grade: f64) -> f64 {
        match self.gain {
            GainScheme::Linear => grade,
            GainScheme::Exponential => grade.exp2() - 1.0,
        }
    }

    /// ERR stop probability for a grade.
    pub(crate) fn stop_probability(&self, grade: f64, rel_max: f64) -> f64 {
        match self.gain {
            GainScheme::Exponential => (grade.exp2() - 1.0) / rel_max.exp2(),
            GainScheme::Linear => grade / rel_max,
        }
    }
}

/// Positional discount `1 / log2(1 + position)` with 1-based positions.
pub fn dcg_discount(position: usize) -> f64 {
    1.0 / ((position + 1) as f64).log2()
}

/// Value of a grade sequence under the given metric at cutoff `k`.
///
/// `rels` are the grades of the ranked documents (length <= `k`);
/// `ideal_rels` are the grades of all candidates, used only by nDCG for
/// its ideal normalization. Sum-style metrics (AvgRel, Precision@k)
/// always divide by `k`, even for prefixes shorter than `k`.
pub fn base_value(
    spec: &MetricSpec,
    rels: &[f64],
    k: usize,
    ideal_rels: &[f64],
    rel_min: f64,
    rel_max: f64,
) -> Result<f64, Error> {
    if k == 0 {
        return Err(Error::ZeroCutoff);
    }
    if rels.len() > k {
        return Err(Error::TooManyGrades { len: rels.len(), k });
    }
    spec.validate(rel_min, rel_max)?;
    let value = match spec.metric {
        BaseMetric::AvgRel => rels.iter().sum::<f64>() / k as f64,
        BaseMetric::Dcg => dcg_value(spec, rels),
        BaseMetric::Ndcg => {
            if ideal_rels.is_empty() {
                return Err(Error::EmptyIdeal);
            }
            let mut ideal = ideal_rels.to_vec();
            ideal.sort_unstable_by(|a, b| b.total_cmp(a));
            ideal.truncate(k);
            let idcg = dcg_value(spec, &ideal);
            if idcg == 0.0 {
                0.0
            } else {
                dcg_value(spec, rels) / idcg
            }
        }
        BaseMetric::Err => {
            let mut value = 0.0;
            let mut continue_prob = 1.0;
            for (i, &r) in rels.iter().enumerate() {
                let stop = spec.stop_probability(r, rel_max);
                value += continue_prob * stop / (i + 1) as f64;
                continue_prob *= 1.0 - stop;
            }
            value
        }
        BaseMetric::Rbp => {
            let p = spec.rbp_persistence;
            let mut weight = 1.0 - p;
            let mut value = 0.0;
            for &r in rels {
                value += weight * r / rel_max;
                weight *= p;
            }
            value
        }
        BaseMetric::PrecAtK => {
            let t = spec.threshold(rel_min, rel_max);
            rels.iter().filter(|&&r| r >= t).count() as f64 / k as f64
        }
    };
    Ok(value)
}

fn dcg_value(spec: &MetricSpec, rels: &[f64]) -> f64 {
    rels.iter()
        .enumerate()
        .map(|(i, &r)| spec.gain_of(r) * dcg_discount(i + 1))
        .sum()
}

/// Precomputed evaluation context for one `(instance, spec, k)` triple.
///
/// Resolves the Precision@k threshold, the nDCG ideals, and the
/// document-level grades used by the standard metric, so that many
/// rankings of the same query can be scored cheaply.
pub struct QueryEvaluator<'a> {
    inst: &'a QueryInstance,
    spec: MetricSpec,
    k: usize,
    /// Per-document grade seen by the standard metric: the raw relevance,
    /// except for Precision@k where the labels are binarized before the
    /// intent marginalization (which is what makes the metric linear).
    std_grades: Vec<f64>,
}

impl<'a> QueryEvaluator<'a> {
    pub fn new(inst: &'a QueryInstance, spec: &MetricSpec, k: usize) -> Result<Self, Error> {
        if k == 0 {
            return Err(Error::ZeroCutoff);
        }
        spec.validate(inst.rel_min(), inst.rel_max())?;
        let std_grades = match spec.metric {
            BaseMetric::PrecAtK => {
                let t = spec.threshold(inst.rel_min(), inst.rel_max());
                (0..inst.n_docs())
                    .map(|d| {
                        inst.rel_row(d)
                            .iter()
                            .zip(inst.intents().probs())
                            .map(|(&g, &p)| if g >= t { p } else { 0.0 })
                            .sum()
                    })
                    .collect()
            }
            _ => inst.raw_relevances(),
        };
        Ok(Self {
            inst,
            spec: spec.clone(),
            k,
            std_grades,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn spec(&self) -> &MetricSpec {
        &self.spec
    }

    /// Value of the ranking for one intent: the base metric applied to
    /// that intent's grade column.
    pub fn per_intent_value(&self, doc_idxs: &[usize], intent: usize) -> f64 {
        let rels: Vec<f64> = doc_idxs.iter().map(|&d| self.inst.grade(d, intent)).collect();
        let ideal = self.inst.rel_table().intent_column(intent);
        base_value(
            &self.spec,
            &rels,
            self.k,
            &ideal,
            self.inst.rel_min(),
            self.inst.rel_max(),
        )
        .expect("spec and k validated at construction")
    }

    /// Standard value: the base metric applied to the documents'
    /// intent-marginalized grades.
    pub fn v_std(&self, doc_idxs: &[usize]) -> f64 {
        let rels: Vec<f64> = doc_idxs.iter().map(|&d| self.std_grades[d]).collect();
        match self.spec.metric {
            // The labels were already binarized per intent; averaging the
            // marginalized indicator is what keeps v_iw == v_std.
            BaseMetric::PrecAtK => rels.iter().sum::<f64>() / self.k as f64,
            _ => base_value(
                &self.spec,
                &rels,
                self.k,
                &self.std_grades,
                self.inst.rel_min(),
                self.inst.rel_max(),
            )
            .expect("spec and k validated at construction"),
        }
    }

    /// Intent-weighted value: per-intent values averaged under the
    /// intent distribution.
    pub fn v_iw(&self, doc_idxs: &[usize]) -> f64 {
        self.inst
            .intents()
            .probs()
            .iter()
            .enumerate()
            .map(|(c, p)| p * self.per_intent_value(doc_idxs, c))
            .sum()
    }

    /// Per-intent hinge losses against the given targets.
    pub fn losses(&self, doc_idxs: &[usize], targets: &[f64]) -> Result<Vec<f64>, Error> {
        let mut out = vec![0.0; self.inst.n_intents()];
        self.fill_losses(doc_idxs, targets, &mut out)?;
        Ok(out)
    }

    pub(crate) fn fill_losses(
        &self,
        doc_idxs: &[usize],
        targets: &[f64],
        out: &mut [f64],
    ) -> Result<(), Error> {
        if targets.len() != self.inst.n_intents() {
            return Err(Error::DimensionMismatch(format!(
                "{} targets vs {} intents",
                targets.len(),
                self.inst.n_intents()
            )));
        }
        for (c, (t, o)) in targets.iter().zip(out.iter_mut()).enumerate() {
            *o = (t - self.per_intent_value(doc_idxs, c)).max(0.0);
        }
        Ok(())
    }

    /// Full risk evaluation of a ranking against targets at level `beta`.
    pub fn risk(
        &self,
        doc_idxs: &[usize],
        targets: &[f64],
        beta: f64,
    ) -> Result<RiskEvaluation, Error> {
        let losses = self.losses(doc_idxs, targets)?;
        RiskEvaluation::from_losses(self.inst, losses, beta)
    }
}

/// How the per-intent target level is derived.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetMode {
    /// Best achievable per-intent value at cutoff `k`.
    Oracle,
    /// `alpha` times the oracle value, `alpha` in `[0, 1]`.
    ScaledOracle { alpha: f64 },
    /// Per-intent value of a fixed baseline ranking.
    BaselineRanking(Ranking),
    /// The same constant for every intent.
    Constant(f64),
}

/// Per-intent target levels for `(inst, spec, k)` under the given mode.
///
/// The oracle sorts each intent's column descending and evaluates the
/// top-k prefix; descending order is optimal for all six base metrics.
pub fn compute_targets(
    inst: &QueryInstance,
    spec: &MetricSpec,
    k: usize,
    mode: &TargetMode,
) -> Result<Vec<f64>, Error> {
    if k == 0 {
        return Err(Error::ZeroCutoff);
    }
    spec.validate(inst.rel_min(), inst.rel_max())?;
    match mode {
        TargetMode::Oracle => oracle_targets(inst, spec, k, 1.0),
        TargetMode::ScaledOracle { alpha } => {
            if !(*alpha >= 0.0 && *alpha <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "target alpha must be in [0, 1], got {alpha}"
                )));
            }
            oracle_targets(inst, spec, k, *alpha)
        }
        TargetMode::BaselineRanking(ranking) => {
            let eval = QueryEvaluator::new(inst, spec, k)?;
            let mut idxs = ranking.indices_in(inst)?;
            idxs.truncate(k);
            Ok((0..inst.n_intents())
                .map(|c| eval.per_intent_value(&idxs, c))
                .collect())
        }
        TargetMode::Constant(v) => {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "constant target must be finite and >= 0, got {v}"
                )));
            }
            Ok(vec![*v; inst.n_intents()])
        }
    }
}

fn oracle_targets(
    inst: &QueryInstance,
    spec: &MetricSpec,
    k: usize,
    alpha: f64,
) -> Result<Vec<f64>, Error> {
    let mut targets = Vec::with_capacity(inst.n_intents());
    for c in 0..inst.n_intents() {
        let mut column = inst.rel_table().intent_column(c);
        column.sort_unstable_by(|a, b| b.total_cmp(a));
        let top: Vec<f64> = column.iter().take(k).copied().collect();
        let value = base_value(spec, &top, k, &column, inst.rel_min(), inst.rel_max())?;
        targets.push(alpha * value);
    }
    Ok(targets)
}

/// Per-intent hinge losses `max(0, target - value)` for a ranking.
pub fn intent_loss(
    inst: &QueryInstance,
    ranking: &Ranking,
    spec: &MetricSpec,
    targets: &[f64],
) -> Result<Vec<f64>, Error> {
    let eval = QueryEvaluator::new(inst, spec, ranking.k())?;
    eval.losses(&ranking.indices_in(inst)?, targets)
}

/// One entry of the worst-beta mass: an intent, the probability weight
/// clipped into the tail, and its loss.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstMassEntry {
    pub intent: String,
    pub weight: f64,
    pub loss: f64,
}

/// Discrete CVaR of the per-intent loss distribution at level `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskEvaluation {
    /// Expected loss over the worst `beta` probability mass, `>= 0`.
    pub vrisk: f64,
    pub beta: f64,
    /// The beta-quantile of the loss distribution (loss of the boundary
    /// intent that fills the tail).
    pub var_threshold: f64,
    /// Per-intent losses in intent order.
    pub losses: Vec<f64>,
    /// The intents composing the worst beta fraction, with clipped
    /// weights summing to `beta`.
    pub worst_mass: Vec<WorstMassEntry>,
}

impl RiskEvaluation {
    pub(crate) fn from_losses(
        inst: &QueryInstance,
        losses: Vec<f64>,
        beta: f64,
    ) -> Result<Self, Error> {
        check_beta(beta)?;
        let mut worst_mass = Vec::new();
        let mut taken = vec![false; losses.len()];
        let (vrisk, var_threshold) = cvar_core(
            &losses,
            inst.intents().probs(),
            inst.intent_id_rank(),
            beta,
            &mut taken,
            |i, w| {
                worst_mass.push(WorstMassEntry {
                    intent: inst.intents().ids()[i].clone(),
                    weight: w,
                    loss: losses[i],
                });
            },
        );
        Ok(Self {
            vrisk,
            beta,
            var_threshold,
            losses,
            worst_mass,
        })
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<(), Error> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::BetaOutOfRange(beta));
    }
    Ok(())
}

/// Sorted-fractional-mass CVaR: walk intents from worst loss down,
/// consuming probability mass until exactly `beta` is accumulated and
/// splitting the boundary intent fractionally. Equal losses are ordered
/// by descending probability, then ascending intent id, so reports are
/// deterministic. Returns `(vrisk, var_threshold)`.
pub(crate) fn cvar_core(
    losses: &[f64],
    probs: &[f64],
    intent_id_rank: &[usize],
    beta: f64,
    taken: &mut [bool],
    mut on_take: impl FnMut(usize, f64),
) -> (f64, f64) {
    let m = losses.len();
    taken.fill(false);
    let mut remaining = beta;
    let mut acc = 0.0;
    let mut zeta = 0.0;
    loop {
        let mut best: Option<usize> = None;
        for i in 0..m {
            if taken[i] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    if tail_order(i, b, losses, probs, intent_id_rank) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        let Some(i) = best else { break };
        taken[i] = true;
        let w = probs[i].min(remaining);
        if w > 0.0 {
            acc += w * losses[i];
            remaining -= w;
            zeta = losses[i];
            on_take(i, w);
        }
        if remaining <= 0.0 {
            break;
        }
    }
    (acc / beta, zeta)
}

/// True when intent `a` belongs earlier in the tail than intent `b`.
#[inline]
fn tail_order(a: usize, b: usize, losses: &[f64], probs: &[f64], rank: &[usize]) -> bool {
    if losses[a] != losses[b] {
        return losses[a] > losses[b];
    }
    if probs[a] != probs[b] {
        return probs[a] > probs[b];
    }
    rank[a] < rank[b]
}

/// Value of the ranking for a named intent.
pub fn per_intent_value(
    inst: &QueryInstance,
    ranking: &Ranking,
    intent_id: &str,
    spec: &MetricSpec,
) -> Result<f64, Error> {
    let c = inst
        .intents()
        .index_of(intent_id)
        .ok_or_else(|| Error::UnknownIntent(intent_id.to_string()))?;
    let eval = QueryEvaluator::new(inst, spec, ranking.k())?;
    Ok(eval.per_intent_value(&ranking.indices_in(inst)?, c))
}

/// Standard (intent-marginalized) value of a ranking.
pub fn v_std(inst: &QueryInstance, ranking: &Ranking, spec: &MetricSpec) -> Result<f64, Error> {
    let eval = QueryEvaluator::new(inst, spec, ranking.k())?;
    Ok(eval.v_std(&ranking.indices_in(inst)?))
}

/// Intent-weighted value of a ranking.
pub fn v_iw(inst: &QueryInstance, ranking: &Ranking, spec: &MetricSpec) -> Result<f64, Error> {
    let eval = QueryEvaluator::new(inst, spec, ranking.k())?;
    Ok(eval.v_iw(&ranking.indices_in(inst)?))
}

/// Risk evaluation of a ranking against per-intent targets.
pub fn vrisk(
    inst: &QueryInstance,
    ranking: &Ranking,
    spec: &MetricSpec,
    targets: &[f64],
    beta: f64,
) -> Result<RiskEvaluation, Error> {
    let eval = QueryEvaluator::new(inst, spec, ranking.k())?;
    eval.risk(&ranking.indices_in(inst)?, targets, beta)
}

/// A value normalized as a percentage of the naive ranker's value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaValue {
    Defined(f64),
    /// Naive value was zero while the method value was positive; the
    /// query is excluded from delta aggregates and counted.
    Undefined,
}

impl DeltaValue {
    pub fn value(self) -> Option<f64> {
        match self {
            DeltaValue::Defined(v) => Some(v),
            DeltaValue::Undefined => None,
        }
    }
}

/// `100 * value / naive_value`, with `0 / 0` defined as 100 (both
/// systems agree) and `positive / 0` flagged undefined.
pub fn delta_normalize(value: f64, naive_value: f64) -> DeltaValue {
    if naive_value == 0.0 {
        if value == 0.0 {
            DeltaValue::Defined(100.0)
        } else {
            DeltaValue::Undefined
        }
    } else {
        DeltaValue::Defined(100.0 * value / naive_value)
    }
}

#[cfg(test)]
mod tests;

//! Exact small-instance risk optimization by exhaustive enumeration,
//! plus the greedy approximation-guarantee checks and the weighted
//! max-k-cover reduction used to generate adversarial fixtures.

use itertools::Itertools;

use crate::error::Error;
use crate::instance::{IntentDistribution, QueryInstance, Ranking, RelevanceTable};
use crate::metrics::{check_beta, cvar_core, BaseMetric, MetricSpec, QueryEvaluator};
use crate::rankers::{vrisker, DiversifierConfig};

/// Default cap on evaluated arrangements per query.
pub const DEFAULT_ENUM_BUDGET: u128 = 2_000_000;

/// Number of arrangements the enumerator would evaluate: `C(n, k)`
/// subsets for modular metrics (order is irrelevant), times `k!`
/// orderings otherwise. Saturates at `u128::MAX`.
pub fn arrangement_count(n: usize, k: usize, modular: bool) -> u128 {
    let k = k.min(n);
    let mut combos: u128 = 1;
    for i in 0..k {
        combos = combos.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    if modular {
        combos
    } else {
        let mut fact: u128 = 1;
        for i in 1..=k {
            fact = fact.saturating_mul(i as u128);
        }
        combos.saturating_mul(fact)
    }
}

/// Global minimizer of the risk over all length-`min(k, n)` rankings.
///
/// Risk ties break by maximal intent-weighted value, then by the
/// lexicographically smallest doc-id sequence. For modular metrics the
/// returned subset is ordered by descending raw relevance (doc id on
/// ties), the same canonical order the naive ranker uses.
pub fn exact_vrisk_opt(
    inst: &QueryInstance,
    k: usize,
    beta: f64,
    spec: &MetricSpec,
    targets: &[f64],
    budget: u128,
) -> Result<(Ranking, f64), Error> {
    if k == 0 {
        return Err(Error::ZeroCutoff);
    }
    check_beta(beta)?;
    if targets.len() != inst.n_intents() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets vs {} intents",
            targets.len(),
            inst.n_intents()
        )));
    }
    let n = inst.n_docs();
    let kk = k.min(n);
    let modular = spec.metric.is_modular();
    let required = arrangement_count(n, kk, modular);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }

    let eval = QueryEvaluator::new(inst, spec, k)?;
    let raw = inst.raw_relevances();
    let doc_rank = inst.doc_id_rank();
    let intent_rank = inst.intent_id_rank();
    let probs = inst.intents().probs();
    let mut losses = vec![0.0f64; inst.n_intents()];
    let mut taken = vec![false; inst.n_intents()];

    let mut best: Option<(f64, f64, Vec<usize>)> = None;
    let mut consider = |arrangement: &[usize],
                        eval: &QueryEvaluator,
                        losses: &mut [f64],
                        taken: &mut [bool],
                        best: &mut Option<(f64, f64, Vec<usize>)>| {
        eval.fill_losses(arrangement, targets, losses)
            .expect("targets validated");
        let (risk, _) = cvar_core(losses, probs, intent_rank, beta, taken, |_, _| {});
        let improved = match best {
            None => true,
            Some((r, iw, seq)) => {
                if risk != *r {
                    risk < *r
                } else {
                    let candidate_iw = eval.v_iw(arrangement);
                    if candidate_iw != *iw {
                        candidate_iw > *iw
                    } else {
                        id_sequence(inst, arrangement) < id_sequence(inst, seq)
                    }
                }
            }
        };
        if improved {
            *best = Some((risk, eval.v_iw(arrangement), arrangement.to_vec()));
        }
    };

    for subset in (0..n).combinations(kk) {
        if modular {
            let mut canonical = subset.clone();
            canonical
                .sort_unstable_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(doc_rank[a].cmp(&doc_rank[b])));
            consider(&canonical, &eval, &mut losses, &mut taken, &mut best);
        } else {
            for perm in subset.iter().copied().permutations(kk) {
                consider(&perm, &eval, &mut losses, &mut taken, &mut best);
            }
        }
    }
    let (risk, _, idxs) = best.expect("at least one arrangement");
    Ok((Ranking::from_indices(inst, &idxs, k), risk))
}

fn id_sequence<'a>(inst: &'a QueryInstance, idxs: &[usize]) -> Vec<&'a str> {
    idxs.iter().map(|&d| inst.doc_ids()[d].as_str()).collect()
}

/// Approximation factor the greedy re-ranker is guaranteed to achieve on
/// the optimal risk reduction: `1 - 1/e` for modular metrics, and
/// `1 - exp(-gamma)` with the discount-ratio submodularity bound
/// `gamma = w_k / sum_{i<=k} w_i` for the log-discounted metrics.
pub fn greedy_bound(spec: &MetricSpec, k: usize) -> Result<f64, Error> {
    if k == 0 {
        return Err(Error::ZeroCutoff);
    }
    match spec.metric {
        BaseMetric::AvgRel | BaseMetric::PrecAtK => Ok(1.0 - (-1.0f64).exp()),
        BaseMetric::Ndcg | BaseMetric::Dcg => Ok(1.0 - (-discount_ratio(k)).exp()),
        other => Err(Error::InvalidConfig(format!(
            "no greedy guarantee bound for metric {other}"
        ))),
    }
}

/// `w_k / sum_{i<=k} w_i` for the positional discount `1/log2(1+i)`.
pub fn discount_ratio(k: usize) -> f64 {
    let total: f64 = (1..=k).map(crate::metrics::dcg_discount).sum();
    crate::metrics::dcg_discount(k) / total
}

/// Outcome of checking the greedy guarantee on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GuaranteeReport {
    /// Risk reduction of the greedy ranking: risk(empty) - risk(greedy).
    pub delta_greedy: f64,
    /// Risk reduction of the enumerated optimum.
    pub delta_opt: f64,
    /// The applicable approximation factor.
    pub bound: f64,
    /// Whether `delta_greedy >= bound * delta_opt - 1e-9`.
    pub satisfied: bool,
}

/// Runs the greedy re-ranker and the exact optimizer and compares their
/// risk reductions against the applicable bound.
pub fn check_guarantee(
    inst: &QueryInstance,
    k: usize,
    beta: f64,
    spec: &MetricSpec,
    targets: &[f64],
    budget: u128,
) -> Result<GuaranteeReport, Error> {
    let bound = greedy_bound(spec, k)?;
    let eval = QueryEvaluator::new(inst, spec, k)?;
    let empty_risk = eval.risk(&[], targets, beta)?.vrisk;
    let greedy = vrisker(inst, k, beta, spec, targets, &DiversifierConfig::default())?;
    let greedy_risk = eval
        .risk(&greedy.indices_in(inst)?, targets, beta)?
        .vrisk;
    let (_, opt_risk) = exact_vrisk_opt(inst, k, beta, spec, targets, budget)?;
    let delta_greedy = empty_risk - greedy_risk;
    let delta_opt = empty_risk - opt_risk;
    Ok(GuaranteeReport {
        delta_greedy,
        delta_opt,
        bound,
        satisfied: delta_greedy >= bound * delta_opt - 1e-9,
    })
}

/// A risk-minimization instance equivalent to a weighted max-k-cover
/// problem, for generating adversarial fixtures.
#[derive(Debug, Clone)]
pub struct MaxKCoverInstance {
    pub instance: QueryInstance,
    pub spec: MetricSpec,
    /// Constant per-intent target `1/k`.
    pub targets: Vec<f64>,
    /// Always 1: the reduction equates expected loss with uncovered weight.
    pub beta: f64,
    pub k: usize,
    /// Total universe weight.
    pub total_weight: f64,
}

impl MaxKCoverInstance {
    /// The closed-form risk of selecting the given set-documents:
    /// `(1/k) * (1 - covered_weight / W)`.
    pub fn closed_form_risk(&self, selected_docs: &[&str]) -> Result<f64, Error> {
        let inst = &self.instance;
        let mut covered = vec![false; inst.n_intents()];
        for id in selected_docs {
            let d = inst
                .doc_index(id)
                .ok_or_else(|| Error::UnknownDoc(id.to_string()))?;
            for (c, flag) in covered.iter_mut().enumerate() {
                if inst.grade(d, c) > 0.0 {
                    *flag = true;
                }
            }
        }
        let covered_weight: f64 = covered
            .iter()
            .zip(inst.intents().probs())
            .filter(|(c, _)| **c)
            .map(|(_, p)| p * self.total_weight)
            .sum();
        Ok((1.0 - covered_weight / self.total_weight) / self.k as f64)
    }
}

/// Builds the reduction: universe elements become intents weighted by
/// `w(u)/W`, each set becomes a binary-relevance document, the base
/// metric is average relevance, the target is the constant `1/k`, and
/// beta is 1. Minimizing the risk of a length-k selection is then
/// exactly maximizing the covered weight.
pub fn maxkcover_instance(
    weights: &[(String, f64)],
    family: &[(String, Vec<String>)],
    k: usize,
) -> Result<MaxKCoverInstance, Error> {
    if k == 0 {
        return Err(Error::ZeroCutoff);
    }
    if family.is_empty() {
        return Err(Error::Dataset("empty set family".to_string()));
    }
    for (u, w) in weights {
        if !(w.is_finite() && *w >= 0.0) {
            return Err(Error::Dataset(format!(
                "negative weight {w} for element {u}"
            )));
        }
    }
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(Error::Dataset("zero total weight".to_string()));
    }
    let universe: Vec<String> = weights.iter().map(|(u, _)| u.clone()).collect();
    let probs: Vec<f64> = weights.iter().map(|(_, w)| w / total).collect();
    let mut rows = Vec::with_capacity(family.len());
    let mut doc_ids = Vec::with_capacity(family.len());
    for (set_id, members) in family {
        let mut row = vec![0.0f64; universe.len()];
        for member in members {
            let u = universe
                .iter()
                .position(|x| x == member)
                .ok_or_else(|| Error::Dataset(format!("unknown element {member}")))?;
            row[u] = 1.0;
        }
        rows.push(row);
        doc_ids.push(set_id.clone());
    }
    let instance = QueryInstance::new(
        "maxkcover",
        IntentDistribution::new(universe, probs)?,
        RelevanceTable::new(doc_ids, rows, 1.0)?,
        None,
    )?;
    let m = instance.n_intents();
    Ok(MaxKCoverInstance {
        instance,
        spec: MetricSpec::avg_rel(),
        targets: vec![1.0 / k as f64; m],
        beta: 1.0,
        k,
        total_weight: total,
    })
}

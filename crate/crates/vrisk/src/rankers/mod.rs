//! Greedy re-ranking algorithms: the risk-minimizing re-ranker and the
//! classic diversification baselines it is compared against.
//!
//! Every ranker returns a duplicate-free ranking of length `min(k, n)`
//! and breaks remaining ties by ascending doc id, so outputs are
//! reproducible bit for bit.

mod similarity;

pub use similarity::SimilarityProvider;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::instance::{QueryInstance, Ranking};
use crate::metrics::incremental::PrefixEvaluator;
use crate::metrics::{check_beta, cvar_core, MetricSpec};

/// How ties on the primary risk objective are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Prefer the candidate maximizing the intent-weighted value.
    Iw,
    /// Pick uniformly among tied candidates with a per-call seeded
    /// generator (ablation mode).
    Random { seed: u64 },
}

/// Shared configuration for the diversifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiversifierConfig {
    /// Relevance/diversity trade-off for xQuAD, MMR and calibrated
    /// re-ranking, in `[0, 1]`.
    pub lambda: f64,
    /// Absolute tolerance under which risk decreases count as identical.
    pub tie_epsilon: f64,
    pub tie_break: TieBreak,
}

impl Default for DiversifierConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            tie_epsilon: 1e-12,
            tie_break: TieBreak::Iw,
        }
    }
}

impl DiversifierConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    fn validate(&self) -> Result<(), Error> {
        if !(self.lambda >= 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.tie_epsilon >= 0.0 && self.tie_epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tie epsilon must be nonnegative, got {}",
                self.tie_epsilon
            )));
        }
        Ok(())
    }
}

/// Top-k documents by raw (intent-marginalized) relevance.
pub fn naive_rank(inst: &QueryInstance, k: usize) -> Result<Ranking, Error> {
    if k == 0 {
        return Err(Error::ZeroCutoff);
    }
    let raw = inst.raw_relevances();
    let rank = inst.doc_id_rank();
    let mut order: Vec<usize> = (0..inst.n_docs()).collect();
    order.sort_unstable_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(rank[a].cmp(&rank[b])));
    order.truncate(k.min(inst.n_docs()));
    Ok(Ranking::from_indices(inst, &order, k))
}

/// Greedy maximization of the intent-weighted value: at each position,
/// append the document with the largest marginal gain.
pub fn iw_greedy(inst: &QueryInstance, k: usize, spec: &MetricSpec) -> Result<Ranking, Error> {
    let mut prefix = PrefixEvaluator::new(inst, spec, k)?;
    let n = inst.n_docs();
    let rank = inst.doc_id_rank();
    let mut selected = vec![false; n];
    let mut chosen = Vec::with_capacity(k.min(n));
    for _ in 0..k.min(n) {
        let mut best: Option<(f64, usize)> = None;
        for d in 0..n {
            if selected[d] {
                continue;
            }
            let gain = prefix.iw_increment(d);
            let better = match best {
                None => true,
                Some((g, b)) => gain > g || (gain == g && rank[d] < rank[b]),
            };
            if better {
                best = Some((gain, d));
            }
        }
        let (_, d) = best.expect("candidates remain");
        prefix.push(d);
        selected[d] = true;
        chosen.push(d);
    }
    Ok(Ranking::from_indices(inst, &chosen, k))
}

/// Greedy tail-risk minimizer: at each rank, pick the document whose
/// addition yields the smallest CVaR of the per-intent losses; break
/// ties within `tie_epsilon` by the configured tie-break, then doc id.
///
/// Per-intent values are updated incrementally, so a full run costs
/// O(k * n * m) plus the tail selection.
pub fn vrisker(
    inst: &QueryInstance,
    k: usize,
    beta: f64,
    spec: &MetricSpec,
    targets: &[f64],
    cfg: &DiversifierConfig,
) -> Result<Ranking, Error> {
    check_beta(beta)?;
    cfg.validate()?;
    let m = inst.n_intents();
    if targets.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} targets vs {m} intents",
            targets.len()
        )));
    }
    let mut prefix = PrefixEvaluator::new(inst, spec, k)?;
    let n = inst.n_docs();
    let probs = inst.intents().probs();
    let intent_rank = inst.intent_id_rank();
    let doc_rank = inst.doc_id_rank();

    let mut selected = vec![false; n];
    let mut chosen = Vec::with_capacity(k.min(n));
    let mut risks = vec![0.0f64; n];
    let mut losses = vec![0.0f64; m];
    let mut taken = vec![false; m];
    let mut rng = match cfg.tie_break {
        TieBreak::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        TieBreak::Iw => None,
    };
    let mut band = Vec::new();

    for _ in 0..k.min(n) {
        let mut min_risk = f64::INFINITY;
        for d in 0..n {
            if selected[d] {
                continue;
            }
            for c in 0..m {
                let value = prefix.values()[c] + prefix.increment(d, c);
                losses[c] = (targets[c] - value).max(0.0);
            }
            let (risk, _) =
                cvar_core(&losses, probs, intent_rank, beta, &mut taken, |_, _| {});
            risks[d] = risk;
            if risk < min_risk {
                min_risk = risk;
            }
        }
        let limit = min_risk + cfg.tie_epsilon;
        let d = match &mut rng {
            None => {
                // IW tie-break: largest intent-weighted gain; doc id last.
                let mut best: Option<(f64, usize)> = None;
                for d in 0..n {
                    if selected[d] || risks[d] > limit {
                        continue;
                    }
                    let gain = prefix.iw_increment(d);
                    let better = match best {
                        None => true,
                        Some((g, b)) => gain > g || (gain == g && doc_rank[d] < doc_rank[b]),
                    };
                    if better {
                        best = Some((gain, d));
                    }
                }
                best.expect("candidates remain").1
            }
            Some(rng) => {
                band.clear();
                band.extend((0..n).filter(|&d| !selected[d] && risks[d] <= limit));
                band[rng.gen_range(0..band.len())]
            }
        };
        prefix.push(d);
        selected[d] = true;
        chosen.push(d);
    }
    Ok(Ranking::from_indices(inst, &chosen, k))
}

/// Intent-based diversification: balances raw relevance against covering
/// intents that the selected prefix has not yet satisfied.
///
/// `score(d) = (1 - lambda) * raw(d) / rel_max
///           + lambda * sum_c P(c) * rhat(d, c) * prod_{d' in R} (1 - rhat(d', c))`
/// with `rhat = rel / rel_max`.
pub fn xquad(inst: &QueryInstance, k: usize, cfg: &DiversifierConfig) -> Result<Ranking, Error> {
    if k == 0 {
        return Err(Error::ZeroCutoff);
    }
    cfg.validate()?;
    let n = inst.n_docs();
    let m = inst.n_intents();
    let lambda = cfg.lambda;
    let inv_rel_max = 1.0 / inst.rel_max();
    let raw = inst.raw_relevances();
    let probs = inst.intents().probs();
    let doc_rank = inst.doc_id_rank();

    let mut coverage = vec![1.0f64; m];
    let mut selected = vec![false; n];
    let mut chosen = Vec::with_capacity(k.min(n));
    for _ in 0..k.min(n) {
        let mut best: Option<(f64, usize)> = None;
        for d in 0..n {
            if selected[d] {
                continue;
            }
            let row = inst.rel_row(d);
            let mut diversity = 0.0;
            for c in 0..m {
                diversity += probs[c] * row[c] * inv_rel_max * coverage[c];
            }
            let score = (1.0 - lambda) * raw[d] * inv_rel_max + lambda * diversity;
            let better = match best {
                None => true,
                Some((s, b)) => score > s || (score == s && doc_rank[d] < doc_rank[b]),
            };
            if better {
                best = Some((score, d));
            }
        }
        let (_, d) = best.expect("candidates remain");
        let row = inst.rel_row(d);
        for c in 0..m {
            coverage[c] *= 1.0 - row[c] * inv_rel_max;
        }
        selected[d] = true;
        chosen.push(d);
    }
    Ok(Ranking::from_indices(inst, &chosen, k))
}

/// Maximal marginal relevance over document-text similarity. The first
/// pick is pure relevance; afterwards
/// `score(d) = (1 - lambda) * raw(d) / rel_max - lambda * max_{d' in R} sim(d, d')`.
pub fn mmr(
    inst: &QueryInstance,
    k: usize,
    sim: &SimilarityProvider,
    cfg: &DiversifierConfig,
) -> Result<Ranking, Error> {
    if k == 0 {
        return Err(Error::ZeroCutoff);
    }
    cfg.validate()?;
    let n = inst.n_docs();
    if sim.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "similarity over {} docs vs {n} candidates",
            sim.len()
        )));
    }
    let lambda = cfg.lambda;
    let inv_rel_max = 1.0 / inst.rel_max();
    let raw = inst.raw_relevances();
    let doc_rank = inst.doc_id_rank();

    let mut max_sim = vec![0.0f64; n];
    let mut selected = vec![false; n];
    let mut chosen = Vec::with_capacity(k.min(n));
    for step in 0..k.min(n) {
        let mut best: Option<(f64, usize)> = None;
        for d in 0..n {
            if selected[d] {
                continue;
            }
            let score = if step == 0 {
                raw[d] * inv_rel_max
            } else {
                (1.0 - lambda) * raw[d] * inv_rel_max - lambda * max_sim[d]
            };
            let better = match best {
                None => true,
                Some((s, b)) => score > s || (score == s && doc_rank[d] < doc_rank[b]),
            };
            if better {
                best = Some((score, d));
            }
        }
        let (_, d) = best.expect("candidates remain");
        selected[d] = true;
        chosen.push(d);
        for other in 0..n {
            if !selected[other] {
                max_sim[other] = max_sim[other].max(sim.similarity(d, other));
            }
        }
    }
    Ok(Ranking::from_indices(inst, &chosen, k))
}

/// Greedy selection with residual intent weights: each intent's weight
/// starts at its probability and decays by `1 - rhat(d, c)` whenever a
/// selected document serves it.
pub fn ia_select(inst: &QueryInstance, k: usize) -> Result<Ranking, Error> {
    if k == 0 {
        return Err(Error::ZeroCutoff);
    }
    let n = inst.n_docs();
    let m = inst.n_intents();
    let inv_rel_max = 1.0 / inst.rel_max();
    let doc_rank = inst.doc_id_rank();

    let mut residual: Vec<f64> = inst.intents().probs().to_vec();
    let mut selected = vec![false; n];
    let mut chosen = Vec::with_capacity(k.min(n));
    for _ in 0..k.min(n) {
        let mut best: Option<(f64, usize)> = None;
        for d in 0..n {
            if selected[d] {
                continue;
            }
            let row = inst.rel_row(d);
            let mut score = 0.0;
            for c in 0..m {
                score += residual[c] * row[c] * inv_rel_max;
            }
            let better = match best {
                None => true,
                Some((s, b)) => score > s || (score == s && doc_rank[d] < doc_rank[b]),
            };
            if better {
                best = Some((score, d));
            }
        }
        let (_, d) = best.expect("candidates remain");
        let row = inst.rel_row(d);
        for c in 0..m {
            residual[c] *= 1.0 - row[c] * inv_rel_max;
        }
        selected[d] = true;
        chosen.push(d);
    }
    Ok(Ranking::from_indices(inst, &chosen, k))
}

/// Calibrated re-ranking: greedily maximizes
/// `(1 - lambda) * sum_{d in R} raw(d) - lambda * KL(P || Q~_R)` where
/// `Q_R(c)` is proportional to the selected relevance mass per intent and
/// `Q~ = 0.99 Q_R + 0.01 P` keeps the divergence finite. Ties break by
/// raw relevance, then doc id.
pub fn calibrated_rerank(
    inst: &QueryInstance,
    k: usize,
    cfg: &DiversifierConfig,
) -> Result<Ranking, Error> {
    if k == 0 {
        return Err(Error::ZeroCutoff);
    }
    cfg.validate()?;
    let n = inst.n_docs();
    let m = inst.n_intents();
    let lambda = cfg.lambda;
    let raw = inst.raw_relevances();
    let probs = inst.intents().probs();
    let doc_rank = inst.doc_id_rank();

    let mut mass = vec![0.0f64; m];
    let mut rel_sum = 0.0f64;
    let mut selected = vec![false; n];
    let mut chosen = Vec::with_capacity(k.min(n));
    for _ in 0..k.min(n) {
        let mut best: Option<(f64, f64, usize)> = None;
        for d in 0..n {
            if selected[d] {
                continue;
            }
            let row = inst.rel_row(d);
            let mut total = 0.0;
            for c in 0..m {
                total += mass[c] + row[c];
            }
            let mut kl = 0.0;
            for c in 0..m {
                let p = probs[c];
                if p <= 0.0 {
                    continue;
                }
                let q = if total > 0.0 {
                    (mass[c] + row[c]) / total
                } else {
                    1.0 / m as f64
                };
                let smoothed = 0.99 * q + 0.01 * p;
                kl += p * (p / smoothed).ln();
            }
            let objective = (1.0 - lambda) * (rel_sum + raw[d]) - lambda * kl;
            let better = match best {
                None => true,
                Some((o, r, b)) => {
                    objective > o
                        || (objective == o
                            && (raw[d] > r || (raw[d] == r && doc_rank[d] < doc_rank[b])))
                }
            };
            if better {
                best = Some((objective, raw[d], d));
            }
        }
        let (_, _, d) = best.expect("candidates remain");
        let row = inst.rel_row(d);
        for c in 0..m {
            mass[c] += row[c];
        }
        rel_sum += raw[d];
        selected[d] = true;
        chosen.push(d);
    }
    Ok(Ranking::from_indices(inst, &chosen, k))
}

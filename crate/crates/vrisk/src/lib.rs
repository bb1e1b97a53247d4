//! Intent-aware tail-risk evaluation and robust re-ranking.
//!
//! An ambiguous query has several user intents, and a ranking that
//! maximizes average relevance can leave minority intents completely
//! unserved. This crate treats that as a risk-minimization problem:
//!
//! * [`metrics`] scores rankings with six base metrics (average
//!   relevance, DCG, nDCG, ERR, RBP, Precision@k), per intent and
//!   intent-weighted, and measures tail risk as the discrete CVaR of the
//!   per-intent losses against a target level.
//! * [`rankers`] provides the risk-minimizing greedy re-ranker plus the
//!   classic diversification baselines (IW-greedy, xQuAD, MMR,
//!   IA-Select, calibrated re-ranking).
//! * [`exact`] enumerates small instances exactly and checks the greedy
//!   approximation guarantees against the enumerated optimum.
//! * [`ingest`] loads the canonical JSON-lines format, TREC-style
//!   diversity qrels, and MovieLens-style ratings, generates synthetic
//!   instances, and implements the intent-probability noise protocol.
//! * [`stats`] has the paired significance tests (Wilcoxon signed-rank,
//!   permutation, Holm-Bonferroni).
//! * [`harness`] runs seeded experiment sweeps and writes CSV/JSON
//!   reports; the `vrisk` binary is its CLI.

pub mod error;
pub mod exact;
pub mod harness;
pub mod ingest;
pub mod instance;
pub mod metrics;
pub mod rankers;
pub mod stats;

pub use error::Error;
pub use instance::{
    validate_instance, IntentDistribution, QueryInstance, Ranking, RelevanceTable,
};
pub use metrics::{
    base_value, compute_targets, delta_normalize, intent_loss, per_intent_value, v_iw, v_std,
    vrisk, BaseMetric, DeltaValue, GainScheme, MetricSpec, QueryEvaluator, RiskEvaluation,
    TargetMode, WorstMassEntry,
};
pub use rankers::{
    calibrated_rerank, ia_select, iw_greedy, mmr, naive_rank, vrisker, xquad, DiversifierConfig,
    SimilarityProvider, TieBreak,
};

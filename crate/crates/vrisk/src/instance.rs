//! Core data model: intent distributions, relevance tables, query
//! instances, and rankings.
//!
//! All types validate their invariants on construction and are immutable
//! afterwards, so they can be shared read-only across parallel workers.

use std::collections::{HashMap, HashSet};

use crate::error::Error;

/// Tolerance for "intent probabilities sum to one" checks. Sums within
/// this distance of one are renormalized silently; larger deviations are
/// rejected as data errors.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

/// A discrete distribution over the intents of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentDistribution {
    intents: Vec<String>,
    probs: Vec<f64>,
}

impl IntentDistribution {
    /// Builds a distribution over intent ids.
    ///
    /// Probabilities must be nonnegative and sum to one within
    /// [`PROB_SUM_TOLERANCE`] (the sum is renormalized to exactly one).
    pub fn new(intents: Vec<String>, probs: Vec<f64>) -> Result<Self, Error> {
        if intents.is_empty() {
            return Err(Error::NoIntents);
        }
        if intents.len() != probs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} intents vs {} probabilities",
                intents.len(),
                probs.len()
            )));
        }
        let mut seen = HashSet::with_capacity(intents.len());
        for id in &intents {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateIntent(id.clone()));
            }
        }
        for (id, &p) in intents.iter().zip(&probs) {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::NegativeProb {
                    intent: id.clone(),
                    prob: p,
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::ProbSum(sum));
        }
        let probs = probs.iter().map(|p| p / sum).collect();
        Ok(Self { intents, probs })
    }

    /// Uniform distribution over the given intent ids.
    pub fn uniform(intents: Vec<String>) -> Result<Self, Error> {
        let m = intents.len();
        if m == 0 {
            return Err(Error::NoIntents);
        }
        let p = 1.0 / m as f64;
        Self::new(intents, vec![p; m])
    }

    pub fn len(&self) -> usize {
        self.intents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intents.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.intents
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, intent: usize) -> f64 {
        self.probs[intent]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.intents.iter().position(|i| i == id)
    }
}

/// Dense per-intent relevance grades for the candidate documents of one
/// query. Grades live in `[rel_min, rel_max]` with `rel_min >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceTable {
    docs: Vec<String>,
    rel: Vec<f64>, // row-major: rel[doc * n_intents + intent]
    n_intents: usize,
    rel_min: f64,
    rel_max: f64,
}

impl RelevanceTable {
    /// Builds a table with the default `rel_min = 0`.
    pub fn new(docs: Vec<String>, rows: Vec<Vec<f64>>, rel_max: f64) -> Result<Self, Error> {
        Self::with_bounds(docs, rows, 0.0, rel_max)
    }

    pub fn with_bounds(
        docs: Vec<String>,
        rows: Vec<Vec<f64>>,
        rel_min: f64,
        rel_max: f64,
    ) -> Result<Self, Error> {
        if docs.is_empty() {
            return Err(Error::NoDocs);
        }
        if !(rel_max.is_finite() && rel_max > 0.0) {
            return Err(Error::NonPositiveRelMax(rel_max));
        }
        if !(rel_min.is_finite() && rel_min >= 0.0) {
            return Err(Error::NegativeRelMin(rel_min));
        }
        if rel_min > rel_max {
            return Err(Error::RelBoundsInverted { rel_min, rel_max });
        }
        if rows.len() != docs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} docs vs {} relevance rows",
                docs.len(),
                rows.len()
            )));
        }
        let mut seen = HashSet::with_capacity(docs.len());
        for id in &docs {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateDoc(id.clone()));
            }
        }
        let n_intents = rows[0].len();
        if n_intents == 0 {
            return Err(Error::NoIntents);
        }
        let mut rel = Vec::with_capacity(docs.len() * n_intents);
        for (doc, row) in docs.iter().zip(&rows) {
            if row.len() != n_intents {
                return Err(Error::DimensionMismatch(format!(
                    "doc {} has {} grades, expected {}",
                    doc,
                    row.len(),
                    n_intents
                )));
            }
            for &g in row {
                if !g.is_finite() || g < rel_min {
                    return Err(Error::RelBelowMin {
                        doc: doc.clone(),
                        value: g,
                    });
                }
                if g > rel_max {
                    return Err(Error::RelAboveMax {
                        doc: doc.clone(),
                        value: g,
                    });
                }
                rel.push(g);
            }
        }
        Ok(Self {
            docs,
            rel,
            n_intents,
            rel_min,
            rel_max,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn n_intents(&self) -> usize {
        self.n_intents
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.docs
    }

    pub fn rel_min(&self) -> f64 {
        self.rel_min
    }

    pub fn rel_max(&self) -> f64 {
        self.rel_max
    }

    /// Grade of document `doc` for intent `intent` (both by index).
    pub fn grade(&self, doc: usize, intent: usize) -> f64 {
        self.rel[doc * self.n_intents + intent]
    }

    /// All grades of one document, in intent order.
    pub fn row(&self, doc: usize) -> &[f64] {
        let start = doc * self.n_intents;
        &self.rel[start..start + self.n_intents]
    }

    /// All grades of one intent, in document order.
    pub fn intent_column(&self, intent: usize) -> Vec<f64> {
        (0..self.n_docs()).map(|d| self.grade(d, intent)).collect()
    }
}

/// One query (or user) together with everything needed to evaluate a
/// ranking for it: the intent distribution, the per-intent relevance
/// table, and optional per-document text for similarity-based methods.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryInstance {
    query_id: String,
    intents: IntentDistribution,
    rel: RelevanceTable,
    doc_texts: Option<Vec<String>>,
    doc_lookup: HashMap<String, usize>,
    doc_id_rank: Vec<usize>,
    intent_id_rank: Vec<usize>,
}

impl QueryInstance {
    pub fn new(
        query_id: impl Into<String>,
        intents: IntentDistribution,
        rel: RelevanceTable,
        doc_texts: Option<Vec<String>>,
    ) -> Result<Self, Error> {
        let query_id = query_id.into();
        if rel.n_intents() != intents.len() {
            return Err(Error::DimensionMismatch(format!(
                "relevance table has {} intent columns, distribution has {}",
                rel.n_intents(),
                intents.len()
            )));
        }
        if let Some(texts) = &doc_texts {
            if texts.len() != rel.n_docs() {
                return Err(Error::DimensionMismatch(format!(
                    "{} doc texts vs {} docs",
                    texts.len(),
                    rel.n_docs()
                )));
            }
        }
        let doc_lookup = rel
            .doc_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let doc_id_rank = id_ranks(rel.doc_ids());
        let intent_id_rank = id_ranks(intents.ids());
        Ok(Self {
            query_id,
            intents,
            rel,
            doc_texts,
            doc_lookup,
            doc_id_rank,
            intent_id_rank,
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn intents(&self) -> &IntentDistribution {
        &self.intents
    }

    pub fn rel_table(&self) -> &RelevanceTable {
        &self.rel
    }

    pub fn n_docs(&self) -> usize {
        self.rel.n_docs()
    }

    pub fn n_intents(&self) -> usize {
        self.intents.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        self.rel.doc_ids()
    }

    pub fn doc_texts(&self) -> Option<&[String]> {
        self.doc_texts.as_deref()
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<usize> {
        self.doc_lookup.get(doc_id).copied()
    }

    pub fn grade(&self, doc: usize, intent: usize) -> f64 {
        self.rel.grade(doc, intent)
    }

    pub fn rel_row(&self, doc: usize) -> &[f64] {
        self.rel.row(doc)
    }

    pub fn rel_min(&self) -> f64 {
        self.rel.rel_min()
    }

    pub fn rel_max(&self) -> f64 {
        self.rel.rel_max()
    }

    /// Intent-marginalized relevance of a document by id.
    pub fn raw_relevance(&self, doc_id: &str) -> Result<f64, Error> {
        let d = self
            .doc_index(doc_id)
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))?;
        Ok(self.raw_relevance_at(d))
    }

    /// Intent-marginalized relevance of a document by index.
    pub fn raw_relevance_at(&self, doc: usize) -> f64 {
        self.rel
            .row(doc)
            .iter()
            .zip(self.intents.probs())
            .map(|(r, p)| r * p)
            .sum()
    }

    /// Raw relevance of every document, in document order.
    pub fn raw_relevances(&self) -> Vec<f64> {
        (0..self.n_docs()).map(|d| self.raw_relevance_at(d)).collect()
    }

    /// Rebuilds the instance with different intent probabilities,
    /// revalidating everything (used by the noise protocol).
    pub fn with_intent_probs(&self, probs: Vec<f64>) -> Result<Self, Error> {
        let intents = IntentDistribution::new(self.intents.ids().to_vec(), probs)?;
        Self::new(
            self.query_id.clone(),
            intents,
            self.rel.clone(),
            self.doc_texts.clone(),
        )
    }

    /// Position of each document when doc ids are sorted ascending.
    /// Used as the deterministic final tie-break everywhere.
    pub(crate) fn doc_id_rank(&self) -> &[usize] {
        &self.doc_id_rank
    }

    /// Position of each intent when intent ids are sorted ascending.
    pub(crate) fn intent_id_rank(&self) -> &[usize] {
        &self.intent_id_rank
    }
}

fn id_ranks(ids: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_unstable_by(|&a, &b| ids[a].cmp(&ids[b]));
    let mut rank = vec![0usize; ids.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

/// Re-runs every type invariant and returns the (possibly renormalized)
/// instance. Idempotent: validating a validated instance is a no-op.
pub fn validate_instance(inst: QueryInstance) -> Result<QueryInstance, Error> {
    let intents = IntentDistribution::new(
        inst.intents.ids().to_vec(),
        inst.intents.probs().to_vec(),
    )?;
    let rows: Vec<Vec<f64>> = (0..inst.n_docs()).map(|d| inst.rel.row(d).to_vec()).collect();
    let rel = RelevanceTable::with_bounds(
        inst.rel.doc_ids().to_vec(),
        rows,
        inst.rel.rel_min(),
        inst.rel.rel_max(),
    )?;
    QueryInstance::new(inst.query_id.clone(), intents, rel, inst.doc_texts.clone())
}

/// An ordered list of distinct document ids evaluated at cutoff `k`.
/// The list may be shorter than `k` (a prefix); never longer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    doc_ids: Vec<String>,
    k: usize,
}

impl Ranking {
    pub fn new(doc_ids: Vec<String>, k: usize) -> Result<Self, Error> {
        if k == 0 {
            return Err(Error::ZeroCutoff);
        }
        if doc_ids.len() > k {
            return Err(Error::RankingTooLong {
                len: doc_ids.len(),
                k,
            });
        }
        let mut seen = HashSet::with_capacity(doc_ids.len());
        for id in &doc_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateInRanking(id.clone()));
            }
        }
        Ok(Self { doc_ids, k })
    }

    pub(crate) fn from_indices(inst: &QueryInstance, indices: &[usize], k: usize) -> Self {
        let doc_ids = indices.iter().map(|&d| inst.doc_ids()[d].clone()).collect();
        Self { doc_ids, k }
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// Resolves the ranked ids to document indices of `inst`, checking
    /// that every id exists there.
    pub fn indices_in(&self, inst: &QueryInstance) -> Result<Vec<usize>, Error> {
        self.doc_ids
            .iter()
            .map(|id| {
                inst.doc_index(id)
                    .ok_or_else(|| Error::UnknownDoc(id.clone()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::toy4;

    #[test]
    fn toy_instance_is_valid() {
        let inst = toy4();
        assert_eq!(inst.n_docs(), 4);
        assert_eq!(inst.n_intents(), 2);
        let inst = validate_instance(inst).unwrap();
        assert_eq!(inst.intents().probs(), &[0.51, 0.49]);
    }

    #[test]
    fn non_normalized_probs_are_rejected() {
        let err = IntentDistribution::new(
            vec!["c1".into(), "c2".into()],
            vec![0.6, 0.6],
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "probabilities sum to 1.2");
    }

    #[test]
    fn slightly_off_probs_are_renormalized() {
        let dist = IntentDistribution::new(
            vec!["c1".into(), "c2".into()],
            vec![0.5 + 2e-10, 0.5],
        )
        .unwrap();
        let sum: f64 = dist.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_relevance_is_rejected() {
        let err = RelevanceTable::new(
            vec!["d1".into()],
            vec![vec![-0.1]],
            1.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("relevance below rel_min"));
    }

    #[test]
    fn relevance_above_max_is_rejected() {
        let err = RelevanceTable::new(vec!["d1".into()], vec![vec![1.5]], 1.0).unwrap_err();
        assert!(err.to_string().contains("relevance above rel_max"));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let intents =
            IntentDistribution::new(vec!["c1".into(), "c2".into()], vec![0.5, 0.5]).unwrap();
        let rel = RelevanceTable::new(vec!["d1".into()], vec![vec![1.0]], 1.0).unwrap();
        let err = QueryInstance::new("q", intents, rel, None).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn raw_relevance_matches_hand_computation() {
        let inst = toy4();
        assert!((inst.raw_relevance("d1").unwrap() - 0.51).abs() < 1e-12);
        assert!((inst.raw_relevance("d3").unwrap() - 0.49).abs() < 1e-12);
        assert!(matches!(
            inst.raw_relevance("nope"),
            Err(Error::UnknownDoc(_))
        ));
    }

    #[test]
    fn raw_relevance_degenerate_cases() {
        let intents = IntentDistribution::new(vec!["c".into()], vec![1.0]).unwrap();
        let rel = RelevanceTable::new(vec!["d".into()], vec![vec![3.0]], 4.0).unwrap();
        let inst = QueryInstance::new("q", intents, rel, None).unwrap();
        assert_eq!(inst.raw_relevance_at(0), 3.0);

        // Constant grades marginalize to the constant.
        let intents = IntentDistribution::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.2, 0.3, 0.5],
        )
        .unwrap();
        let rel =
            RelevanceTable::new(vec!["d".into()], vec![vec![2.0, 2.0, 2.0]], 4.0).unwrap();
        let inst = QueryInstance::new("q", intents, rel, None).unwrap();
        assert!((inst.raw_relevance_at(0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ranking_rejects_duplicates_and_overflow() {
        assert!(matches!(
            Ranking::new(vec!["a".into(), "a".into()], 3),
            Err(Error::DuplicateInRanking(_))
        ));
        assert!(matches!(
            Ranking::new(vec!["a".into(), "b".into()], 1),
            Err(Error::RankingTooLong { .. })
        ));
        assert!(matches!(Ranking::new(vec![], 0), Err(Error::ZeroCutoff)));
    }

    #[test]
    fn validate_is_idempotent() {
        let inst = toy4();
        let once = validate_instance(inst).unwrap();
        let twice = validate_instance(once.clone()).unwrap();
        assert_eq!(once, twice);
    }
}

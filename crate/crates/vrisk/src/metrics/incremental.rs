//! Incremental per-intent evaluation of a growing ranking prefix.
//!
//! Appending a document at the next position adds a nonnegative
//! per-intent increment for every base metric, which is what makes the
//! greedy re-rankers O(k * n * m) instead of O(k^2 * n * m). Checked
//! against the direct [`base_value`](super::base_value) path in tests.

use crate::error::Error;
use crate::instance::QueryInstance;
use crate::metrics::{dcg_discount, BaseMetric, GainScheme, MetricSpec};

pub(crate) struct PrefixEvaluator<'a> {
    inst: &'a QueryInstance,
    metric: BaseMetric,
    gain: GainScheme,
    k: usize,
    len: usize,
    inv_k: f64,
    values: Vec<f64>,
    /// ERR continuation probability per intent.
    err_cont: Vec<f64>,
    /// 1 / IDCG per intent (0 where IDCG is 0); nDCG only.
    idcg_inv: Vec<f64>,
    threshold: f64,
    rel_max: f64,
    rbp_p: f64,
    /// rbp_p^(len): the RBP weight factor of the next position.
    rbp_pow: f64,
    /// Discount of the next position (1-based position len + 1).
    next_discount: f64,
    spec: MetricSpec,
}

impl<'a> PrefixEvaluator<'a> {
    pub fn new(inst: &'a QueryInstance, spec: &MetricSpec, k: usize) -> Result<Self, Error> {
        if k == 0 {
            return Err(Error::ZeroCutoff);
        }
        spec.validate(inst.rel_min(), inst.rel_max())?;
        let m = inst.n_intents();
        let idcg_inv = if spec.metric == BaseMetric::Ndcg {
            (0..m)
                .map(|c| {
                    let mut column = inst.rel_table().intent_column(c);
                    column.sort_unstable_by(|a, b| b.total_cmp(a));
                    let idcg: f64 = column
                        .iter()
                        .take(k)
                        .enumerate()
                        .map(|(i, &r)| spec.gain_of(r) * dcg_discount(i + 1))
                        .sum();
                    if idcg == 0.0 {
                        0.0
                    } else {
                        1.0 / idcg
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            inst,
            metric: spec.metric,
            gain: spec.gain,
            k,
            len: 0,
            inv_k: 1.0 / k as f64,
            values: vec![0.0; m],
            err_cont: vec![1.0; m],
            idcg_inv,
            threshold: spec.threshold(inst.rel_min(), inst.rel_max()),
            rel_max: inst.rel_max(),
            rbp_p: spec.rbp_persistence,
            rbp_pow: 1.0,
            next_discount: dcg_discount(1),
            spec: spec.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Current per-intent values of the committed prefix.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn v_iw(&self) -> f64 {
        self.values
            .iter()
            .zip(self.inst.intents().probs())
            .map(|(v, p)| v * p)
            .sum()
    }

    /// Per-intent value increment if `doc` were appended now.
    #[inline]
    pub fn increment(&self, doc: usize, intent: usize) -> f64 {
        let r = self.inst.grade(doc, intent);
        match self.metric {
            BaseMetric::AvgRel => r * self.inv_k,
            BaseMetric::PrecAtK => {
                if r >= self.threshold {
                    self.inv_k
                } else {
                    0.0
                }
            }
            BaseMetric::Dcg => self.gain_of(r) * self.next_discount,
            BaseMetric::Ndcg => self.gain_of(r) * self.next_discount * self.idcg_inv[intent],
            BaseMetric::Rbp => (1.0 - self.rbp_p) * self.rbp_pow * r / self.rel_max,
            BaseMetric::Err => {
                self.stop(r) * self.err_cont[intent] / (self.len + 1) as f64
            }
        }
    }

    /// Intent-weighted marginal gain of appending `doc` now.
    #[inline]
    pub fn iw_increment(&self, doc: usize) -> f64 {
        self.inst
            .intents()
            .probs()
            .iter()
            .enumerate()
            .map(|(c, p)| p * self.increment(doc, c))
            .sum()
    }

    /// Commits `doc` at the next position.
    pub fn push(&mut self, doc: usize) {
        debug_assert!(self.len < self.k, "prefix already at cutoff");
        let m = self.values.len();
        for c in 0..m {
            self.values[c] += self.increment(doc, c);
        }
        if self.metric == BaseMetric::Err {
            for c in 0..m {
                let stop = self.stop(self.inst.grade(doc, c));
                self.err_cont[c] *= 1.0 - stop;
            }
        }
        self.rbp_pow *= self.rbp_p;
        self.len += 1;
        self.next_discount = dcg_discount(self.len + 1);
    }

    #[inline]
    fn gain_of(&self, r: f64) -> f64 {
        match self.gain {
            GainScheme::Linear => r,
            GainScheme::Exponential => r.exp2() - 1.0,
        }
    }

    #[inline]
    fn stop(&self, r: f64) -> f64 {
        self.spec.stop_probability(r, self.rel_max)
    }
}

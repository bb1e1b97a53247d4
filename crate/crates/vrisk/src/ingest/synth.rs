//! Reproducible synthetic instances for property tests, guarantee
//! checks, and desk-scale experiment corpora.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::Error;
use crate::instance::{IntentDistribution, QueryInstance, RelevanceTable};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub n_intents: usize,
    /// Evaluation cutoff the instance is generated for (bounds `n_docs`).
    pub k: usize,
    /// Integer grades are drawn uniformly from `0..=rel_max`.
    pub rel_max: u32,
    /// Concentration of the symmetric Dirichlet over intent probabilities.
    pub dirichlet_alpha: f64,
    /// When set, intent 0 receives exactly this mass and the rest is
    /// Dirichlet-distributed over the remaining intents (skewed queries).
    pub majority_prob: Option<f64>,
    /// Emit document texts (topic tokens) so similarity-based methods
    /// can run on the generated corpus.
    pub with_texts: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_docs: 20,
            n_intents: 4,
            k: 10,
            rel_max: 4,
            dirichlet_alpha: 1.0,
            majority_prob: None,
            with_texts: false,
        }
    }
}

/// Generates one validated instance, deterministic in `seed`. The query
/// id encodes the seed (`q` + zero-padded seed).
pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<QueryInstance, Error> {
    if cfg.k == 0 {
        return Err(Error::ZeroCutoff);
    }
    if cfg.n_docs < cfg.k {
        return Err(Error::InvalidConfig(format!(
            "need at least k = {} docs, got {}",
            cfg.k, cfg.n_docs
        )));
    }
    if cfg.n_intents == 0 {
        return Err(Error::NoIntents);
    }
    if cfg.rel_max == 0 {
        return Err(Error::NonPositiveRelMax(0.0));
    }
    if !(cfg.dirichlet_alpha > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "dirichlet alpha must be positive, got {}",
            cfg.dirichlet_alpha
        )));
    }
    if let Some(maj) = cfg.majority_prob {
        if !(0.0..1.0).contains(&maj) {
            return Err(Error::InvalidConfig(format!(
                "majority probability must be in [0, 1), got {maj}"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs = sample_probs(cfg, &mut rng);

    let mut rows = Vec::with_capacity(cfg.n_docs);
    for _ in 0..cfg.n_docs {
        let row: Vec<f64> = (0..cfg.n_intents)
            .map(|_| rng.gen_range(0..=cfg.rel_max) as f64)
            .collect();
        rows.push(row);
    }
    let texts = cfg.with_texts.then(|| {
        let cutoff = (cfg.rel_max as f64 + 1.0) / 2.0;
        rows.iter()
            .map(|row| {
                let tokens: Vec<String> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &g)| g >= cutoff)
                    .map(|(c, _)| format!("t{c}"))
                    .collect();
                if tokens.is_empty() {
                    "t-none".to_string()
                } else {
                    tokens.join(" ")
                }
            })
            .collect()
    });

    let intents = (0..cfg.n_intents).map(|c| format!("c{c}")).collect();
    let docs = (0..cfg.n_docs).map(|d| format!("d{d:04}")).collect();
    QueryInstance::new(
        format!("q{seed:08}"),
        IntentDistribution::new(intents, probs)?,
        RelevanceTable::new(docs, rows, cfg.rel_max as f64)?,
        texts,
    )
}

fn sample_probs(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = cfg.n_intents;
    if m == 1 {
        return vec![1.0];
    }
    let gamma = Gamma::new(cfg.dirichlet_alpha, 1.0).expect("alpha validated");
    match cfg.majority_prob {
        None => {
            let draws: Vec<f64> = (0..m).map(|_| gamma.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            if total <= 0.0 {
                vec![1.0 / m as f64; m]
            } else {
                draws.iter().map(|g| g / total).collect()
            }
        }
        Some(maj) => {
            let draws: Vec<f64> = (0..m - 1).map(|_| gamma.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            let mut probs = Vec::with_capacity(m);
            probs.push(maj);
            let rest = 1.0 - maj;
            if total <= 0.0 {
                probs.extend(std::iter::repeat(rest / (m - 1) as f64).take(m - 1));
            } else {
                probs.extend(draws.iter().map(|g| rest * g / total));
            }
            probs
        }
    }
}

//! TREC-style diversity qrels: whitespace-separated lines
//! `topic intent doc judgment`. Intents of a topic occur with equal
//! probability; negative judgments clamp to zero; duplicate judgments
//! merge by maximum; the grade ceiling is the largest judgment in the
//! file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::Error;
use crate::instance::{IntentDistribution, QueryInstance, RelevanceTable};

/// Parses qrels content into validated instances, one per topic.
pub fn parse_trec_qrels(input: &str) -> Result<Vec<QueryInstance>, Error> {
    parse_with_filter(input, None)
}

/// Parses a topics file into the set of topic ids to keep: the first
/// whitespace-separated token of each non-empty, non-`#` line.
pub fn parse_trec_topics(input: &str) -> Result<BTreeSet<String>, Error> {
    let mut topics = BTreeSet::new();
    for line in input.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let id = trimmed.split_whitespace().next().expect("non-empty line");
        topics.insert(id.to_string());
    }
    Ok(topics)
}

/// Loads qrels from disk, optionally restricted to the topics listed in
/// `topics_path`.
pub fn load_trec_diversity(
    qrels_path: &Path,
    topics_path: Option<&Path>,
) -> Result<Vec<QueryInstance>, Error> {
    let qrels = fs::read_to_string(qrels_path)?;
    let filter = match topics_path {
        Some(path) => Some(parse_trec_topics(&fs::read_to_string(path)?)?),
        None => None,
    };
    parse_with_filter(&qrels, filter.as_ref())
}

fn parse_with_filter(
    input: &str,
    topics: Option<&BTreeSet<String>>,
) -> Result<Vec<QueryInstance>, Error> {
    // topic -> intent -> doc -> max judgment
    let mut judged: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> = BTreeMap::new();
    let mut rel_max = 0.0f64;
    for (idx, line) in input.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 4 columns, got {}", cols.len()),
            });
        }
        let judgment: f64 = cols[3].parse().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("non-numeric judgment {}", cols[3]),
        })?;
        if !judgment.is_finite() {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("non-finite judgment {}", cols[3]),
            });
        }
        if let Some(keep) = topics {
            if !keep.contains(cols[0]) {
                continue;
            }
        }
        let grade = judgment.max(0.0);
        rel_max = rel_max.max(grade);
        let slot = judged
            .entry(cols[0].to_string())
            .or_default()
            .entry(cols[1].to_string())
            .or_default()
            .entry(cols[2].to_string())
            .or_insert(0.0);
        *slot = slot.max(grade);
    }
    if judged.is_empty() {
        return Ok(Vec::new());
    }
    if rel_max <= 0.0 {
        return Err(Error::Dataset(
            "no positive judgments in qrels".to_string(),
        ));
    }
    let mut instances = Vec::with_capacity(judged.len());
    for (topic, by_intent) in judged {
        let intents: Vec<String> = by_intent.keys().cloned().collect();
        let docs: BTreeSet<String> = by_intent
            .values()
            .flat_map(|per_doc| per_doc.keys().cloned())
            .collect();
        let docs: Vec<String> = docs.into_iter().collect();
        let rows: Vec<Vec<f64>> = docs
            .iter()
            .map(|doc| {
                intents
                    .iter()
                    .map(|intent| {
                        by_intent
                            .get(intent)
                            .and_then(|per_doc| per_doc.get(doc))
                            .copied()
                            .unwrap_or(0.0)
                    })
                    .collect()
            })
            .collect();
        let dist = IntentDistribution::uniform(intents).map_err(|e| e.for_query(&topic))?;
        let rel =
            RelevanceTable::new(docs, rows, rel_max).map_err(|e| e.for_query(&topic))?;
        instances.push(QueryInstance::new(topic.clone(), dist, rel, None)
            .map_err(|e| e.for_query(&topic))?);
    }
    Ok(instances)
}

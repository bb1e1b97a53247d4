//! Canonical JSON-lines dataset format: each line is one query object
//! `{"query_id", "intents": [{"id", "prob"}], "docs": [{"id", "rel",
//! "text"?}], "rel_max"}`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::instance::{IntentDistribution, QueryInstance, RelevanceTable};

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalQuery {
    query_id: String,
    intents: Vec<CanonicalIntent>,
    docs: Vec<CanonicalDoc>,
    rel_max: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalIntent {
    id: String,
    prob: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalDoc {
    id: String,
    rel: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

/// Parses canonical JSON-lines content. Blank lines are skipped; parse
/// failures report the 1-based line number, invariant violations the
/// query id. Output is sorted by query id.
pub fn parse_canonical(input: &str) -> Result<Vec<QueryInstance>, Error> {
    let mut instances = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: CanonicalQuery =
            serde_json::from_str(line).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if !seen.insert(record.query_id.clone()) {
            return Err(Error::DuplicateQuery(record.query_id));
        }
        instances.push(instance_from_record(record)?);
    }
    instances.sort_by(|a, b| a.query_id().cmp(b.query_id()));
    Ok(instances)
}

fn instance_from_record(record: CanonicalQuery) -> Result<QueryInstance, Error> {
    let query_id = record.query_id.clone();
    let wrap = |e: Error| e.for_query(&query_id);
    let intents = IntentDistribution::new(
        record.intents.iter().map(|i| i.id.clone()).collect(),
        record.intents.iter().map(|i| i.prob).collect(),
    )
    .map_err(wrap)?;
    let rel = RelevanceTable::new(
        record.docs.iter().map(|d| d.id.clone()).collect(),
        record.docs.iter().map(|d| d.rel.clone()).collect(),
        record.rel_max,
    )
    .map_err(wrap)?;
    let texts = if record.docs.iter().any(|d| d.text.is_some()) {
        Some(
            record
                .docs
                .iter()
                .map(|d| d.text.clone().unwrap_or_default())
                .collect(),
        )
    } else {
        None
    };
    QueryInstance::new(record.query_id, intents, rel, texts).map_err(wrap)
}

/// Loads a canonical JSON-lines file.
pub fn load_canonical(path: &Path) -> Result<Vec<QueryInstance>, Error> {
    parse_canonical(&fs::read_to_string(path)?)
}

/// Writes instances in the canonical format, one JSON object per line.
pub fn write_canonical(path: &Path, instances: &[QueryInstance]) -> Result<(), Error> {
    let mut out = String::new();
    for inst in instances {
        let record = CanonicalQuery {
            query_id: inst.query_id().to_string(),
            intents: inst
                .intents()
                .ids()
                .iter()
                .zip(inst.intents().probs())
                .map(|(id, &prob)| CanonicalIntent {
                    id: id.clone(),
                    prob,
                })
                .collect(),
            docs: (0..inst.n_docs())
                .map(|d| CanonicalDoc {
                    id: inst.doc_ids()[d].clone(),
                    rel: inst.rel_row(d).to_vec(),
                    text: inst.doc_texts().map(|t| t[d].clone()),
                })
                .collect(),
            rel_max: inst.rel_max(),
        };
        out.push_str(&serde_json::to_string(&record).expect("serializable record"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"{"query_id":"toy","intents":[{"id":"c1","prob":0.51},{"id":"c2","prob":0.49}],"docs":[{"id":"d1","rel":[1,0]},{"id":"d2","rel":[1,0]},{"id":"d3","rel":[0,1]},{"id":"d4","rel":[0,1]}],"rel_max":1}"#;

    #[test]
    fn parses_the_toy_instance() {
        let instances = parse_canonical(TOY).unwrap();
        assert_eq!(instances.len(), 1);
        assert_eq!(instances[0].n_intents(), 2);
        assert_eq!(instances[0].n_docs(), 4);
        assert_eq!(instances[0].query_id(), "toy");
    }

    #[test]
    fn empty_input_gives_empty_list() {
        assert!(parse_canonical("").unwrap().is_empty());
        assert!(parse_canonical("\n\n").unwrap().is_empty());
    }

    #[test]
    fn duplicate_query_ids_are_rejected() {
        let input = format!("{TOY}\n{TOY}");
        let err = parse_canonical(&input).unwrap_err();
        match err {
            Error::DuplicateQuery(id) => assert_eq!(id, "toy"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let input = format!("{TOY}\nnot json");
        let err = parse_canonical(&input).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn invariant_violations_name_the_query() {
        let bad = r#"{"query_id":"broken","intents":[{"id":"c1","prob":0.6},{"id":"c2","prob":0.6}],"docs":[{"id":"d1","rel":[1,0]}],"rel_max":1}"#;
        let err = parse_canonical(bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("broken"), "{msg}");
        assert!(msg.contains("probabilities sum to 1.2"), "{msg}");
    }

    #[test]
    fn round_trips_through_write() {
        let instances = parse_canonical(TOY).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write_canonical(&path, &instances).unwrap();
        let again = load_canonical(&path).unwrap();
        assert_eq!(instances, again);
    }

    #[test]
    fn output_is_sorted_by_query_id() {
        let b = TOY.replace("\"toy\"", "\"b\"");
        let a = TOY.replace("\"toy\"", "\"a\"");
        let instances = parse_canonical(&format!("{b}\n{a}")).unwrap();
        let ids: Vec<&str> = instances.iter().map(|i| i.query_id()).collect();
        assert_eq!(ids, ["a", "b"]);
    }
}

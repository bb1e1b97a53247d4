//! Report emission (CSV rows + JSON summary + stdout table), reading
//! reports back for significance testing, and the significance wiring.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::stats::{holm_bonferroni, paired_comparison};

use super::{ExperimentReport, MethodAggregate, MethodError, MethodTiming, RowRecord};

pub const CSV_HEADER: &str =
    "method,query_id,grid,vrisk,v_std,v_iw,delta_risk,delta_std,delta_iw";

/// Writes the per-query rows as CSV with the stable column order.
/// Undefined delta values are written as `NA`.
pub fn write_csv<W: std::io::Write>(rows: &[RowRecord], writer: W) -> Result<(), Error> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(CSV_HEADER.split(','))
        .map_err(csv_error)?;
    for row in rows {
        csv.write_record([
            row.method.as_str(),
            row.query_id.as_str(),
            row.grid.as_str(),
            &format_float(row.vrisk),
            &format_float(row.v_std),
            &format_float(row.v_iw),
            &format_opt(row.delta_risk),
            &format_opt(row.delta_std),
            &format_opt(row.delta_iw),
        ])
        .map_err(csv_error)?;
    }
    csv.flush()?;
    Ok(())
}

fn format_float(v: f64) -> String {
    format!("{v}")
}

fn format_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format_float(v),
        None => "NA".to_string(),
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Dataset(format!("csv error: {e}"))
}

/// Reads rows back from a report CSV.
pub fn read_rows_csv(path: &Path) -> Result<Vec<RowRecord>, Error> {
    let content = fs::read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(content.as_bytes());
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: idx + 2,
            message: e.to_string(),
        })?;
        if record.len() != 9 {
            return Err(Error::Parse {
                line: idx + 2,
                message: format!("expected 9 columns, got {}", record.len()),
            });
        }
        let float = |i: usize| -> Result<f64, Error> {
            record[i].parse().map_err(|_| Error::Parse {
                line: idx + 2,
                message: format!("bad float {}", &record[i]),
            })
        };
        let opt = |i: usize| -> Result<Option<f64>, Error> {
            if &record[i] == "NA" {
                Ok(None)
            } else {
                float(i).map(Some)
            }
        };
        rows.push(RowRecord {
            method: record[0].to_string(),
            query_id: record[1].to_string(),
            grid: record[2].to_string(),
            vrisk: float(3)?,
            v_std: float(4)?,
            v_iw: float(5)?,
            delta_risk: opt(6)?,
            delta_std: opt(7)?,
            delta_iw: opt(8)?,
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct Summary<'a> {
    aggregates: &'a [MethodAggregate],
    method_errors: &'a [MethodError],
    timings: &'a [MethodTiming],
}

/// Writes `report.csv` and `summary.json` under `out_dir` and returns
/// both paths.
pub fn emit_report(
    report: &ExperimentReport,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf), Error> {
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("report.csv");
    let mut buffer = Vec::new();
    write_csv(&report.rows, &mut buffer)?;
    fs::write(&csv_path, buffer)?;

    let json_path = out_dir.join("summary.json");
    let summary = Summary {
        aggregates: &report.aggregates,
        method_errors: &report.method_errors,
        timings: &report.timings,
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("serializable summary");
    json.push('\n');
    fs::write(&json_path, json)?;
    Ok((csv_path, json_path))
}

/// Plain-text aggregate table for stdout.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<18} {:<12} {:>10} {:>12} {:>12} {:>12}\n",
        "grid", "method", "vrisk", "delta_risk", "delta_std", "delta_iw"
    ));
    for agg in &report.aggregates {
        let delta = |a: &Option<super::Aggregate>| match a {
            Some(a) => format!("{:.2}", a.mean),
            None => "NA".to_string(),
        };
        out.push_str(&format!(
            "{:<18} {:<12} {:>10.4} {:>12} {:>12} {:>12}\n",
            agg.grid,
            agg.method,
            agg.vrisk.mean,
            delta(&agg.delta_risk),
            delta(&agg.delta_std),
            delta(&agg.delta_iw),
        ));
    }
    if !report.timings.is_empty() {
        out.push_str("\nruntime (ms/query):\n");
        for t in &report.timings {
            out.push_str(&format!("  {:<12} {:.3}\n", t.method, t.ms_per_query));
        }
    }
    if !report.method_errors.is_empty() {
        out.push_str(&format!(
            "\n{} per-query method errors (see summary.json)\n",
            report.method_errors.len()
        ));
    }
    out
}

/// Report column a significance test can run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricField {
    Vrisk,
    VStd,
    VIw,
    DeltaRisk,
    DeltaStd,
    DeltaIw,
}

impl MetricField {
    fn extract(self, row: &RowRecord) -> Option<f64> {
        match self {
            MetricField::Vrisk => Some(row.vrisk),
            MetricField::VStd => Some(row.v_std),
            MetricField::VIw => Some(row.v_iw),
            MetricField::DeltaRisk => row.delta_risk,
            MetricField::DeltaStd => row.delta_std,
            MetricField::DeltaIw => row.delta_iw,
        }
    }
}

impl fmt::Display for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricField::Vrisk => "vrisk",
            MetricField::VStd => "v_std",
            MetricField::VIw => "v_iw",
            MetricField::DeltaRisk => "delta_risk",
            MetricField::DeltaStd => "delta_std",
            MetricField::DeltaIw => "delta_iw",
        })
    }
}

impl FromStr for MetricField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "vrisk" => Ok(MetricField::Vrisk),
            "v_std" => Ok(MetricField::VStd),
            "v_iw" => Ok(MetricField::VIw),
            "delta_risk" => Ok(MetricField::DeltaRisk),
            "delta_std" => Ok(MetricField::DeltaStd),
            "delta_iw" => Ok(MetricField::DeltaIw),
            other => Err(Error::InvalidConfig(format!(
                "unknown report metric {other}"
            ))),
        }
    }
}

/// One paired comparison with both tests and the Holm-corrected flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub grid: String,
    pub method_a: String,
    pub method_b: String,
    pub metric: String,
    /// Queries with the metric defined for both methods.
    pub n: usize,
    /// Pairs with a nonzero difference.
    pub n_effective: usize,
    pub mean_diff: f64,
    /// None when every paired difference is zero (test undefined).
    pub wilcoxon_p: Option<f64>,
    pub wilcoxon_significant: Option<bool>,
    pub permutation_p: f64,
    pub permutation_significant: bool,
}

/// Runs Wilcoxon and permutation tests for each `(grid, pair)` and
/// applies Holm-Bonferroni at level `alpha` across all requested
/// comparisons (per test family). Permutation seeds derive from `seed`
/// and the comparison index.
pub fn significance(
    rows: &[RowRecord],
    pairs: &[(String, String)],
    metric: MetricField,
    permutations: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<ComparisonResult>, Error> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("no method pairs given".to_string()));
    }
    let mut grids: Vec<&str> = Vec::new();
    for row in rows {
        if !grids.contains(&row.grid.as_str()) {
            grids.push(&row.grid);
        }
    }
    let mut results = Vec::new();
    for grid in grids {
        for (a, b) in pairs {
            let collect = |method: &str| -> Vec<(&str, f64)> {
                let mut values: Vec<(&str, f64)> = rows
                    .iter()
                    .filter(|r| r.grid == grid && r.method == *method)
                    .filter_map(|r| metric.extract(r).map(|v| (r.query_id.as_str(), v)))
                    .collect();
                values.sort_by(|x, y| x.0.cmp(y.0));
                values
            };
            let va = collect(a);
            let vb = collect(b);
            let mut paired_a = Vec::new();
            let mut paired_b = Vec::new();
            let mut j = 0;
            for (qa, x) in &va {
                while j < vb.len() && vb[j].0 < *qa {
                    j += 1;
                }
                if j < vb.len() && vb[j].0 == *qa {
                    paired_a.push(*x);
                    paired_b.push(vb[j].1);
                }
            }
            if paired_a.is_empty() {
                return Err(Error::Dataset(format!(
                    "no paired observations for {a} vs {b} in grid {grid}"
                )));
            }
            let comparison_seed = seed
                .wrapping_mul(0x9e3779b97f4a7c15)
                .wrapping_add(results.len() as u64);
            let test =
                paired_comparison(&paired_a, &paired_b, permutations, comparison_seed)?;
            results.push(ComparisonResult {
                grid: grid.to_string(),
                method_a: a.clone(),
                method_b: b.clone(),
                metric: metric.to_string(),
                n: paired_a.len(),
                n_effective: test.n_effective,
                mean_diff: test.mean_diff,
                wilcoxon_p: test.wilcoxon_p,
                wilcoxon_significant: None,
                permutation_p: test.permutation_p,
                permutation_significant: false,
            });
        }
    }
    // Holm-Bonferroni per test family across all comparisons.
    let wilcoxon_ps: Vec<(usize, f64)> = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.wilcoxon_p.map(|p| (i, p)))
        .collect();
    let flags = holm_bonferroni(
        &wilcoxon_ps.iter().map(|(_, p)| *p).collect::<Vec<_>>(),
        alpha,
    );
    for ((i, _), flag) in wilcoxon_ps.iter().zip(flags) {
        results[*i].wilcoxon_significant = Some(flag);
    }
    let perm_ps: Vec<f64> = results.iter().map(|r| r.permutation_p).collect();
    for (result, flag) in results.iter_mut().zip(holm_bonferroni(&perm_ps, alpha)) {
        result.permutation_significant = flag;
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, query: &str, vrisk: f64, delta: Option<f64>) -> RowRecord {
        RowRecord {
            method: method.to_string(),
            query_id: query.to_string(),
            grid: "default".to_string(),
            vrisk,
            v_std: 1.0,
            v_iw: 1.0,
            delta_risk: delta,
            delta_std: Some(100.0),
            delta_iw: Some(100.0),
        }
    }

    #[test]
    fn csv_round_trip_preserves_rows() {
        let rows = vec![
            row("naive", "q1", 0.5, Some(100.0)),
            row("vrisker", "q1", 0.25, None),
            row("vrisker", "q,comma", 0.125, Some(50.0)),
        ];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert!(text.contains("NA"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        std::fs::write(&path, buf).unwrap();
        let again = read_rows_csv(&path).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn significance_pairs_by_query_and_flags_identical_methods() {
        let mut rows = Vec::new();
        for q in 0..12 {
            let qid = format!("q{q:02}");
            rows.push(row("naive", &qid, 1.0 + q as f64 * 0.1, Some(100.0)));
            rows.push(row("vrisker", &qid, 0.5 + q as f64 * 0.1, Some(50.0)));
        }
        let pairs = vec![
            ("vrisker".to_string(), "naive".to_string()),
            ("naive".to_string(), "naive".to_string()),
        ];
        let results =
            significance(&rows, &pairs, MetricField::Vrisk, 2000, 0.05, 7).unwrap();
        assert_eq!(results.len(), 2);
        assert!(results[0].mean_diff < 0.0);
        assert!(results[0].wilcoxon_p.unwrap() < 0.05);
        assert_eq!(results[1].wilcoxon_p, None);
        assert_eq!(results[1].permutation_p, 1.0);
        assert!(!results[1].permutation_significant);
    }
}

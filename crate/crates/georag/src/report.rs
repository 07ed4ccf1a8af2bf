//! Accuracy aggregation and report rendering.
//!
//! An [`AccuracyReport`] reduces per-item outcomes to the five-threshold
//! accuracy row (street 1 km through continent 2500 km) plus the counts
//! needed to audit the denominator: scored, missing, errored, and parse
//! failures. Parse failures stay inside `n_scored` and simply miss every
//! level, so the accounting identity is
//! `n_scored + n_missing + n_errored == manifest length`.
//!
//! Reports render to Markdown (human tables), CSV (one row per dataset),
//! or JSON (full provenance, round-trips losslessly).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::eval::{EvalOutcome, ItemStatus};
use crate::geodesy::AccuracyLevel;

/// Identifies the exact setup behind a report. `config_hash` covers every
/// reproducibility-relevant knob except the timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub template_id: String,
    pub model_name: String,
    pub k_similar: usize,
    pub k_dissimilar: usize,
    /// CRC32 of the index content, 8 hex digits.
    pub index_checksum: String,
    /// SHA-256 over the canonical config fingerprint.
    pub config_hash: String,
    pub timestamp_unix_ms: Option<u64>,
}

/// Aggregated accuracy for one dataset run.
///
/// `pct_at` holds one entry per accuracy level when `n_scored > 0` and is
/// empty otherwise (percentages of an empty denominator are undefined and
/// render as "—"). Values are percentages rounded to one decimal place;
/// they are non-decreasing from street to continent because the
/// underlying buckets are upward closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub dataset_name: String,
    pub n_scored: usize,
    pub n_missing: usize,
    pub n_errored: usize,
    /// Items inside `n_scored` whose reply yielded no coordinate.
    pub n_parse_failed: usize,
    pub pct_at: BTreeMap<AccuracyLevel, f64>,
    pub provenance: Provenance,
}

impl AccuracyReport {
    /// Reduces outcomes to a report. Outcome order does not matter.
    pub fn from_outcomes(
        dataset_name: &str,
        outcomes: &[EvalOutcome],
        provenance: Provenance,
    ) -> AccuracyReport {
        let mut n_scored = 0usize;
        let mut n_missing = 0usize;
        let mut n_errored = 0usize;
        let mut n_parse_failed = 0usize;
        let mut hits: BTreeMap<AccuracyLevel, usize> =
            AccuracyLevel::ALL.iter().map(|&l| (l, 0)).collect();
        for outcome in outcomes {
            match outcome.status {
                ItemStatus::Missing => n_missing += 1,
                ItemStatus::Errored => n_errored += 1,
                ItemStatus::Scored => {
                    n_scored += 1;
                    if outcome.parse_failed {
                        n_parse_failed += 1;
                    }
                    for level in outcome.levels_hit.iter() {
                        *hits.get_mut(&level).expect("all levels present") += 1;
                    }
                }
            }
        }
        let pct_at = if n_scored == 0 {
            BTreeMap::new()
        } else {
            hits.into_iter()
                .map(|(level, count)| {
                    let pct = 100.0 * count as f64 / n_scored as f64;
                    (level, round1(pct))
                })
                .collect()
        };
        AccuracyReport {
            dataset_name: dataset_name.to_string(),
            n_scored,
            n_missing,
            n_errored,
            n_parse_failed,
            pct_at,
            provenance,
        }
    }
}

/// Rounds to one decimal place; aggregate percentages are reported at
/// that precision everywhere.
fn round1(value: f64) -> f64 {
    (value * 10.0).round() / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [
        ReportFormat::Markdown,
        ReportFormat::Csv,
        ReportFormat::Json,
    ];

    /// Conventional file extension, without the dot.
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl std::fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ReportFormat::Markdown => "markdown",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        };
        f.write_str(name)
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!(
                "unknown report format {other:?}; expected markdown, csv, or json"
            )),
        }
    }
}

/// Cell text for one level: the percentage at one decimal place, or "—"
/// when the denominator is empty.
fn cell(report: &AccuracyReport, level: AccuracyLevel) -> String {
    match report.pct_at.get(&level) {
        Some(pct) => format!("{pct:.1}"),
        None => "—".to_string(),
    }
}

pub fn render_report(report: &AccuracyReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => {
            let mut out = serde_json::to_string_pretty(report).expect("report serializes");
            out.push('\n');
            out
        }
    }
}

fn render_markdown(report: &AccuracyReport) -> String {
    let mut out = String::new();
    let p = &report.provenance;
    let _ = writeln!(out, "## Accuracy: {}", report.dataset_name);
    out.push('\n');
    let _ = writeln!(
        out,
        "| Dataset | Street (1 km) | City (25 km) | Region (200 km) | Country (750 km) | Continent (2500 km) |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    let _ = writeln!(
        out,
        "| {} | {} | {} | {} | {} | {} |",
        report.dataset_name,
        cell(report, AccuracyLevel::Street),
        cell(report, AccuracyLevel::City),
        cell(report, AccuracyLevel::Region),
        cell(report, AccuracyLevel::Country),
        cell(report, AccuracyLevel::Continent),
    );
    out.push('\n');
    let _ = writeln!(
        out,
        "- items: scored {}, missing {}, errored {}, parse failures {}",
        report.n_scored, report.n_missing, report.n_errored, report.n_parse_failed
    );
    let _ = writeln!(
        out,
        "- retrieval: k_similar {}, k_dissimilar {}, template {}",
        p.k_similar, p.k_dissimilar, p.template_id
    );
    let _ = writeln!(out, "- model: {}", p.model_name);
    let _ = writeln!(
        out,
        "- index crc32 {}, config hash {}",
        p.index_checksum, p.config_hash
    );
    if let Some(ts) = p.timestamp_unix_ms {
        let _ = writeln!(out, "- timestamp_unix_ms: {ts}");
    }
    out
}

fn render_csv(report: &AccuracyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "dataset,n_scored,n_missing,n_errored,n_parse_failed,street_1km,city_25km,region_200km,country_750km,continent_2500km"
    );
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        report.dataset_name,
        report.n_scored,
        report.n_missing,
        report.n_errored,
        report.n_parse_failed,
        cell(report, AccuracyLevel::Street),
        cell(report, AccuracyLevel::City),
        cell(report, AccuracyLevel::Region),
        cell(report, AccuracyLevel::Country),
        cell(report, AccuracyLevel::Continent),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn provenance() -> Provenance {
        Provenance {
            template_id: "contrastive-v1".into(),
            model_name: "mock-model".into(),
            k_similar: 16,
            k_dissimilar: 16,
            index_checksum: "deadbeef".into(),
            config_hash: "0".repeat(64),
            timestamp_unix_ms: None,
        }
    }

    fn report_with(pcts: [f64; 5], n_scored: usize) -> AccuracyReport {
        let pct_at = if n_scored == 0 {
            BTreeMap::new()
        } else {
            AccuracyLevel::ALL.iter().copied().zip(pcts).collect()
        };
        AccuracyReport {
            dataset_name: "fixture".into(),
            n_scored,
            n_missing: 0,
            n_errored: 0,
            n_parse_failed: 0,
            pct_at,
            provenance: provenance(),
        }
    }

    #[test]
    fn all_hundred_renders_five_full_cells() {
        let report = report_with([100.0; 5], 10);
        let md = render_report(&report, ReportFormat::Markdown);
        assert_eq!(md.matches("100.0").count(), 5, "markdown:\n{md}");
    }

    #[test]
    fn quarter_step_fixture_renders_expected_csv_row() {
        let report = report_with([25.0, 50.0, 75.0, 75.0, 100.0], 4);
        let csv = render_report(&report, ReportFormat::Csv);
        assert!(
            csv.contains("25.0,50.0,75.0,75.0,100.0"),
            "csv was:\n{csv}"
        );
        assert!(csv.starts_with(
            "dataset,n_scored,n_missing,n_errored,n_parse_failed,street_1km,city_25km,region_200km,country_750km,continent_2500km\n"
        ));
    }

    #[test]
    fn benchmark_row_layout_matches_published_style() {
        // Layout fixture only: checks how a typical result row renders.
        let report = report_with([23.2, 50.2, 62.8, 78.0, 90.7], 1000);
        let md = render_report(&report, ReportFormat::Markdown);
        assert!(
            md.contains("| fixture | 23.2 | 50.2 | 62.8 | 78.0 | 90.7 |"),
            "markdown:\n{md}"
        );
        assert!(md.contains("Street (1 km)"));
        assert!(md.contains("Continent (2500 km)"));
    }

    #[test]
    fn json_round_trips_to_an_identical_report() {
        let mut report = report_with([23.2, 50.2, 62.8, 78.0, 90.7], 1000);
        report.n_missing = 3;
        report.n_errored = 2;
        report.n_parse_failed = 17;
        report.provenance.timestamp_unix_ms = Some(1_755_000_000_000);
        let json = render_report(&report, ReportFormat::Json);
        let parsed: AccuracyReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn empty_run_renders_dashes() {
        let report = report_with([0.0; 5], 0);
        let md = render_report(&report, ReportFormat::Markdown);
        assert!(md.contains("| fixture | — | — | — | — | — |"), "{md}");
        let csv = render_report(&report, ReportFormat::Csv);
        assert!(csv.contains("fixture,0,0,0,0,—,—,—,—,—"), "{csv}");
    }

    #[test]
    fn format_parsing_accepts_aliases() {
        assert_eq!("md".parse::<ReportFormat>().unwrap(), ReportFormat::Markdown);
        assert_eq!(
            "MARKDOWN".parse::<ReportFormat>().unwrap(),
            ReportFormat::Markdown
        );
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert_eq!("json".parse::<ReportFormat>().unwrap(), ReportFormat::Json);
        assert!("xml".parse::<ReportFormat>().is_err());
        assert_eq!(ReportFormat::Markdown.extension(), "md");
    }

    #[test]
    fn aggregation_counts_statuses_and_parse_failures() {
        use crate::eval::EvalOutcome;
        use crate::geodesy::{GeoCoord, LevelSet};
        use crate::ItemStatus;

        let truth = GeoCoord::new(0.0, 0.0).unwrap();
        let scored = |levels: &[AccuracyLevel], parse_failed: bool| EvalOutcome {
            item_id: "x".into(),
            status: ItemStatus::Scored,
            ground_truth: truth,
            predicted: (!parse_failed).then_some(truth),
            error_km: (!parse_failed).then_some(0.5),
            levels_hit: levels.iter().copied().collect::<LevelSet>(),
            parse_failed,
            fallback_used: false,
            candidates_seen: usize::from(!parse_failed),
            attempt_count: 1,
            prompt_sha256: None,
            response_text: None,
            error_message: None,
        };
        let mut missing = scored(&[], false);
        missing.status = ItemStatus::Missing;
        let mut errored = scored(&[], false);
        errored.status = ItemStatus::Errored;

        let outcomes = vec![
            scored(&AccuracyLevel::ALL, false),
            scored(&[AccuracyLevel::Continent], false),
            scored(&[], true),
            missing,
            errored,
        ];
        let report = AccuracyReport::from_outcomes("agg", &outcomes, provenance());
        assert_eq!(report.n_scored, 3);
        assert_eq!(report.n_missing, 1);
        assert_eq!(report.n_errored, 1);
        assert_eq!(report.n_parse_failed, 1);
        assert_eq!(report.pct_at[&AccuracyLevel::Street], 33.3);
        assert_eq!(report.pct_at[&AccuracyLevel::Continent], 66.7);
        let sum = report.n_scored + report.n_missing + report.n_errored;
        assert_eq!(sum, outcomes.len());
    }
}

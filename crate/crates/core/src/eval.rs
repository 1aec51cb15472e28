//! Localization replay against a compact map, compression and valid-cell counts.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project, Pose};
use crate::map::Map;
use crate::visibility::{fit_all, is_visible, valid_cells, Grid3DConfig, VisibilityMargins, VisibilityRegion};

/// Default number of matched landmarks needed for a successful localization.
pub const DEFAULT_INLIERS: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryLabel {
    OnTrajectory,
    Offset,
    FreeSpace,
}

impl QueryLabel {
    pub const ALL: [QueryLabel; 3] = [QueryLabel::OnTrajectory, QueryLabel::Offset, QueryLabel::FreeSpace];

    pub fn name(&self) -> &'static str {
        match self {
            QueryLabel::OnTrajectory => "on-trajectory",
            QueryLabel::Offset => "offset",
            QueryLabel::FreeSpace => "free-space",
        }
    }
}

impl std::fmt::Display for QueryLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QueryLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        QueryLabel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown query stratum `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryView {
    pub pose: Pose,
    pub camera_id: u64,
    pub label: QueryLabel,
}

impl QueryView {
    pub fn new(pose: Pose, camera_id: u64, label: QueryLabel) -> Self {
        QueryView { pose, camera_id, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Localization {
    pub success: bool,
    pub matched: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumReport {
    pub label: QueryLabel,
    pub total: usize,
    pub localized: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub total: usize,
    pub localized: usize,
    pub rate: f64,
    /// Matched landmarks per query, in query order.
    pub matched: Vec<u32>,
    /// Strata present in the query list, in label order.
    pub strata: Vec<StratumReport>,
}

impl EvalReport {
    pub fn stratum(&self, label: QueryLabel) -> Option<&StratumReport> {
        self.strata.iter().find(|s| s.label == label)
    }
}

/// Visibility regions of the original map, reused across selections and queries.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    map: &'a Map,
    regions: Vec<Option<VisibilityRegion>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(map: &'a Map, margins: &VisibilityMargins) -> Self {
        Evaluator {
            map,
            regions: fit_all(map, margins),
        }
    }

    pub fn with_regions(map: &'a Map, regions: Vec<Option<VisibilityRegion>>) -> Self {
        assert_eq!(regions.len(), map.n_landmarks());
        Evaluator { map, regions }
    }

    pub fn regions(&self) -> &[Option<VisibilityRegion>] {
        &self.regions
    }

    /// Counts selected landmarks that project into the query image and whose
    /// visibility region contains the query's optical center.
    pub fn localize(&self, selected: &[bool], query: &QueryView, inliers: u32) -> Localization {
        assert_eq!(selected.len(), self.map.n_landmarks(), "selection length mismatch");
        let Some(camera) = self.map.camera(query.camera_id) else {
            return Localization { success: false, matched: 0 };
        };
        let center = query.pose.center();
        let matched = self
            .map
            .landmarks()
            .iter()
            .zip(&self.regions)
            .zip(selected)
            .filter(|((l, region), &s)| {
                s && region.is_some_and(|r| {
                    project(camera, &query.pose, &l.position).is_some()
                        && l.position != center
                        && is_visible(&r, &l.position, &center)
                })
            })
            .count() as u32;
        Localization {
            success: matched >= inliers,
            matched,
        }
    }

    pub fn localization_rate(&self, selected: &[bool], queries: &[QueryView], inliers: u32) -> Result<EvalReport> {
        if queries.is_empty() {
            return Err(Error::Config("localization rate needs at least one query".into()));
        }
        if let Some(q) = queries.iter().find(|q| self.map.camera(q.camera_id).is_none()) {
            return Err(Error::Validation(format!("query references unknown camera {}", q.camera_id)));
        }
        let results: Vec<Localization> = queries
            .par_iter()
            .map(|q| self.localize(selected, q, inliers))
            .collect();
        let mut strata = Vec::new();
        for label in QueryLabel::ALL {
            let (total, localized) = queries
                .iter()
                .zip(&results)
                .filter(|(q, _)| q.label == label)
                .fold((0, 0), |(t, l), (_, r)| (t + 1, l + r.success as usize));
            if total > 0 {
                strata.push(StratumReport {
                    label,
                    total,
                    localized,
                    rate: localized as f64 / total as f64,
                });
            }
        }
        let localized = results.iter().filter(|r| r.success).count();
        Ok(EvalReport {
            total: queries.len(),
            localized,
            rate: localized as f64 / queries.len() as f64,
            matched: results.iter().map(|r| r.matched).collect(),
            strata,
        })
    }

    /// Valid cells of `grid` counting only selected landmarks.
    pub fn count_valid_cells(&self, selected: &[bool], grid: &Grid3DConfig, k2: u32) -> usize {
        valid_cells(self.map, &self.regions, grid, k2, Some(selected)).len()
    }
}

/// Convenience wrapper fitting regions with default margins.
pub fn localize(map: &Map, selected: &[bool], query: &QueryView, inliers: u32) -> Localization {
    Evaluator::new(map, &VisibilityMargins::default()).localize(selected, query, inliers)
}

pub fn localization_rate(map: &Map, selected: &[bool], queries: &[QueryView], inliers: u32) -> Result<EvalReport> {
    Evaluator::new(map, &VisibilityMargins::default()).localization_rate(selected, queries, inliers)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Compression {
    pub selected: usize,
    pub total: usize,
    pub ratio: f64,
}

pub fn compression_report(selected: &[bool]) -> Compression {
    let n = selected.iter().filter(|&&s| s).count();
    Compression {
        selected: n,
        total: selected.len(),
        ratio: if selected.is_empty() { 0.0 } else { n as f64 / selected.len() as f64 },
    }
}

/// One line of the evaluation CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub method: String,
    pub stratum: String,
    pub total: usize,
    pub localized: usize,
    pub rate: f64,
    pub ratio: f64,
    pub valid_cells: Option<usize>,
}

pub const CSV_HEADER: &str = "method,stratum,total,localized,rate,ratio,valid_cells";

/// Rows for every stratum of a report.
pub fn csv_rows(method: &str, report: &EvalReport, compression: &Compression, valid: Option<usize>) -> Vec<CsvRow> {
    report
        .strata
        .iter()
        .map(|s| CsvRow {
            method: method.to_string(),
            stratum: s.label.name().to_string(),
            total: s.total,
            localized: s.localized,
            rate: s.rate,
            ratio: compression.ratio,
            valid_cells: valid,
        })
        .collect()
}

/// CSV text; `comments` become leading `#` lines.
pub fn csv_string(rows: &[CsvRow], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let valid = r.valid_cells.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method, r.stratum, r.total, r.localized, r.rate, r.ratio, valid
        );
    }
    out
}

#[derive(Serialize, Deserialize)]
struct QueryRecord {
    q: [f64; 4],
    t: [f64; 3],
    camera_id: u64,
    label: QueryLabel,
}

pub fn queries_to_json(queries: &[QueryView]) -> serde_json::Value {
    let records: Vec<QueryRecord> = queries
        .iter()
        .map(|q| QueryRecord {
            q: q.pose.wxyz(),
            t: q.pose.translation.into(),
            camera_id: q.camera_id,
            label: q.label,
        })
        .collect();
    serde_json::to_value(records).expect("query records serialize")
}

/// Reads a query list, either bare or wrapped as `{"queries": [...], ...}`.
pub fn parse_queries(text: &str) -> Result<Vec<QueryView>> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("query file: {e}")))?;
    if let Some(inner) = value.get_mut("queries") {
        value = inner.take();
    }
    let records: Vec<QueryRecord> =
        serde_json::from_value(value).map_err(|e| Error::Parse(format!("query file: {e}")))?;
    records
        .into_iter()
        .map(|r| Ok(QueryView::new(Pose::from_wxyz(r.q, r.t)?, r.camera_id, r.label)))
        .collect()
}

pub fn load_queries(path: &Path) -> Result<Vec<QueryView>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_queries(&text)
}

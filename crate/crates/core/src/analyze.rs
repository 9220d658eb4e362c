//! Scan-rate and coverage statistics, survey severity histograms, and
//! attribute assortativity on the backbone.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::backbone::BackboneNetwork;
use crate::error::{Error, Result};
use crate::ingest::Roster;
use crate::model::{
    band_score, score_survey, CoverageSemantics, OsKind, ParticipantId, ScanEvent, SeverityBandTable, SurveyResponse,
    TimeWindow,
};
use crate::proximity::ScanTally;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceScanRate {
    pub participant: ParticipantId,
    pub os: Option<OsKind>,
    pub performed: u64,
    pub scheduled: u64,
    pub rate: f64,
    /// Performed more scans than scheduled; the rate is left unclamped.
    pub over_scheduled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRateSummary {
    pub devices: Vec<DeviceScanRate>,
    pub mean_rate: f64,
    pub mean_rate_by_os: BTreeMap<OsKind, f64>,
}

/// Performed vs scheduled scans per device, with `scheduled =
/// floor(window / scan_interval)`.
pub fn device_scan_rates(tally: &ScanTally, roster: &Roster, scan_interval: TimeDelta) -> Result<ScanRateSummary> {
    if scan_interval <= TimeDelta::zero() {
        return Err(Error::Validation("scan interval must be positive".into()));
    }
    let window = tally.window().duration();
    let scheduled = (window.num_seconds() / scan_interval.num_seconds()) as u64;
    if scheduled == 0 {
        return Err(Error::Range(format!(
            "window of {}s holds no scheduled scan at a {}s interval",
            window.num_seconds(),
            scan_interval.num_seconds()
        )));
    }
    let devices: Vec<DeviceScanRate> = tally
        .participants()
        .map(|id| {
            let performed = tally.scans(id);
            DeviceScanRate {
                participant: id.clone(),
                os: roster.os_of(id),
                performed,
                scheduled,
                rate: performed as f64 / scheduled as f64,
                over_scheduled: performed > scheduled,
            }
        })
        .collect();
    let mean = |rates: Vec<f64>| {
        if rates.is_empty() {
            0.0
        } else {
            rates.iter().sum::<f64>() / rates.len() as f64
        }
    };
    let mut mean_rate_by_os = BTreeMap::new();
    for os in [OsKind::Ios, OsKind::Android] {
        let rates: Vec<f64> = devices.iter().filter(|d| d.os == Some(os)).map(|d| d.rate).collect();
        if !rates.is_empty() {
            mean_rate_by_os.insert(os, mean(rates));
        }
    }
    Ok(ScanRateSummary {
        mean_rate: mean(devices.iter().map(|d| d.rate).collect()),
        mean_rate_by_os,
        devices,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCoverage {
    pub i: ParticipantId,
    pub j: ParticipantId,
    pub combined_scans: u64,
    /// Window length divided by combined scans, in seconds; `None` when the
    /// pair never scanned (infinite interval).
    pub mean_interscan_interval_secs: Option<f64>,
}

pub fn edge_coverage(tally: &ScanTally) -> Vec<EdgeCoverage> {
    let window = tally.window().duration().num_seconds() as f64;
    tally
        .candidate_pairs()
        .into_iter()
        .map(|pair| {
            let combined = tally.scans(pair.first()) + tally.scans(pair.second());
            EdgeCoverage {
                i: pair.first().clone(),
                j: pair.second().clone(),
                combined_scans: combined,
                mean_interscan_interval_secs: (combined > 0).then(|| window / combined as f64),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageFraction {
    pub threshold_secs: i64,
    pub fraction: f64,
    pub covered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub semantics: CoverageSemantics,
    pub candidate_edges: usize,
    pub fractions: Vec<CoverageFraction>,
}

impl CoverageSummary {
    pub fn fraction_at(&self, threshold: TimeDelta) -> Option<f64> {
        self.fractions
            .iter()
            .find(|f| f.threshold_secs == threshold.num_seconds())
            .map(|f| f.fraction)
    }
}

fn check_thresholds(thresholds: &[TimeDelta]) -> Result<()> {
    if thresholds.iter().any(|t| t.num_seconds() <= 0) {
        return Err(Error::Validation("coverage thresholds must be positive".into()));
    }
    if !thresholds.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Validation("coverage thresholds must be sorted ascending".into()));
    }
    Ok(())
}

fn summarize(
    semantics: CoverageSemantics,
    candidates: usize,
    thresholds: &[TimeDelta],
    covered_at: impl Fn(i64) -> usize,
) -> CoverageSummary {
    CoverageSummary {
        semantics,
        candidate_edges: candidates,
        fractions: thresholds
            .iter()
            .map(|t| {
                let secs = t.num_seconds();
                let covered = covered_at(secs);
                CoverageFraction {
                    threshold_secs: secs,
                    fraction: covered as f64 / candidates as f64,
                    covered,
                }
            })
            .collect(),
    }
}

/// Fraction of all candidate pairs whose mean inter-scan interval is at most
/// each threshold. Pairs that never scanned count as uncovered.
pub fn coverage_summary(tally: &ScanTally, thresholds: &[TimeDelta]) -> Result<CoverageSummary> {
    check_thresholds(thresholds)?;
    let coverage = edge_coverage(tally);
    if coverage.is_empty() {
        return Err(Error::Validation("coverage needs at least two participants".into()));
    }
    let window = tally.window().duration().num_seconds();
    // window / combined <= threshold  <=>  window <= threshold * combined
    Ok(summarize(
        CoverageSemantics::MeanInterval,
        coverage.len(),
        thresholds,
        |secs| {
            coverage
                .iter()
                .filter(|e| e.combined_scans > 0 && window as i128 <= secs as i128 * e.combined_scans as i128)
                .count()
        },
    ))
}

/// Longest gap between consecutive scans of either device, counting the
/// stretches from window start and to window end.
fn max_gap(a: &[DateTime<Utc>], b: &[DateTime<Utc>], window: TimeWindow) -> i64 {
    let (mut x, mut y) = (0, 0);
    let mut last = window.start;
    let mut gap = 0i64;
    while x < a.len() || y < b.len() {
        let next = if y >= b.len() || (x < a.len() && a[x] <= b[y]) {
            x += 1;
            a[x - 1]
        } else {
            y += 1;
            b[y - 1]
        };
        gap = gap.max((next - last).num_seconds());
        last = next;
    }
    gap.max((window.end - last).num_seconds())
}

/// Coverage under the maximum-gap reading: a pair is covered at `X` when no
/// stretch longer than `X` passes without a scan by either device.
pub fn max_gap_coverage(
    events: &[ScanEvent],
    roster: &Roster,
    window: TimeWindow,
    thresholds: &[TimeDelta],
) -> Result<CoverageSummary> {
    check_thresholds(thresholds)?;
    let ids: Vec<&ParticipantId> = roster.participants().collect();
    if ids.len() < 2 {
        return Err(Error::Validation("coverage needs at least two participants".into()));
    }
    let mut instants: BTreeMap<&ParticipantId, Vec<DateTime<Utc>>> = ids.iter().map(|id| (*id, Vec::new())).collect();
    for e in events.iter().filter(|e| window.contains(e.timestamp)) {
        if let Some(v) = instants.get_mut(&e.scanner) {
            v.push(e.timestamp);
        }
    }
    for v in instants.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    let mut gaps = Vec::with_capacity(ids.len() * (ids.len() - 1) / 2);
    for (n, i) in ids.iter().enumerate() {
        for j in &ids[n + 1..] {
            gaps.push(max_gap(&instants[i], &instants[j], window));
        }
    }
    Ok(summarize(CoverageSemantics::MaxGap, gaps.len(), thresholds, |secs| {
        gaps.iter().filter(|&&g| g <= secs).count()
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandCount {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityHistogram {
    pub instrument: crate::model::Instrument,
    pub bands: Vec<BandCount>,
    pub respondents: usize,
    /// Latest responses that failed validation and were left out.
    pub invalid: usize,
    /// Number of respondents at each total score `0..=max_total`.
    pub score_counts: Vec<usize>,
}

impl SeverityHistogram {
    pub fn count(&self, label: &str) -> Option<usize> {
        self.bands.iter().find(|b| b.label == label).map(|b| b.count)
    }
}

/// Band counts over the latest response per participant for the table's
/// instrument. Responses for other instruments are ignored.
pub fn severity_histogram(responses: &[SurveyResponse], table: &SeverityBandTable) -> SeverityHistogram {
    let mut latest: BTreeMap<&ParticipantId, &SurveyResponse> = BTreeMap::new();
    for r in responses.iter().filter(|r| r.instrument == table.instrument) {
        match latest.get(&r.participant) {
            Some(prev) if prev.completed_at > r.completed_at => {}
            _ => {
                latest.insert(&r.participant, r);
            }
        }
    }
    let mut bands: Vec<BandCount> = table
        .labels()
        .map(|label| BandCount {
            label: label.to_string(),
            count: 0,
        })
        .collect();
    let mut score_counts = vec![0usize; table.instrument.max_total() as usize + 1];
    let mut invalid = 0;
    let mut respondents = 0;
    for r in latest.values() {
        let Ok(total) = score_survey(r) else {
            invalid += 1;
            continue;
        };
        let Ok(label) = band_score(total as i64, table) else {
            invalid += 1;
            continue;
        };
        respondents += 1;
        score_counts[total as usize] += 1;
        if let Some(b) = bands.iter_mut().find(|b| b.label == label) {
            b.count += 1;
        }
    }
    SeverityHistogram {
        instrument: table.instrument,
        bands,
        respondents,
        invalid,
        score_counts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedReason {
    TooFewEdges,
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assortativity {
    pub coefficient: Option<f64>,
    pub undefined: Option<UndefinedReason>,
    pub edges_used: usize,
    /// Backbone nodes without a score; their edges are left out.
    pub excluded_nodes: Vec<ParticipantId>,
}

/// Pearson correlation of node scores across backbone edges, each edge
/// counted once in each orientation.
pub fn attribute_assortativity(backbone: &BackboneNetwork, scores: &BTreeMap<ParticipantId, f64>) -> Assortativity {
    let excluded_nodes: Vec<ParticipantId> = backbone
        .nodes
        .iter()
        .filter(|id| !scores.contains_key(*id))
        .cloned()
        .collect();
    if !excluded_nodes.is_empty() {
        tracing::warn!(
            count = excluded_nodes.len(),
            "backbone nodes without a score excluded from assortativity"
        );
    }
    let excluded: BTreeSet<&ParticipantId> = excluded_nodes.iter().collect();
    let mut ends: Vec<(f64, f64)> = Vec::new();
    for pair in backbone.edges() {
        if excluded.contains(pair.first()) || excluded.contains(pair.second()) {
            continue;
        }
        let (x, y) = (scores[pair.first()], scores[pair.second()]);
        ends.push((x, y));
        ends.push((y, x));
    }
    let edges_used = ends.len() / 2;
    let undefined = |reason| Assortativity {
        coefficient: None,
        undefined: Some(reason),
        edges_used,
        excluded_nodes: excluded_nodes.clone(),
    };
    if edges_used < 2 {
        return undefined(UndefinedReason::TooFewEdges);
    }
    let first = ends[0].0;
    if ends.iter().all(|&(x, _)| x == first) {
        return undefined(UndefinedReason::ZeroVariance);
    }
    let n = ends.len() as f64;
    let mean = ends.iter().map(|e| e.0).sum::<f64>() / n;
    let (mut cov, mut var) = (0.0, 0.0);
    for &(x, y) in &ends {
        cov += (x - mean) * (y - mean);
        var += (x - mean) * (x - mean);
    }
    if var <= 0.0 {
        return undefined(UndefinedReason::ZeroVariance);
    }
    Assortativity {
        coefficient: Some((cov / var).clamp(-1.0, 1.0)),
        undefined: None,
        edges_used,
        excluded_nodes,
    }
}

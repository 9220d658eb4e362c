//! Scan tallies and the weighted proximity network.
//!
//! The weight of a pair is its mutual detection count normalized by the
//! pair's combined scan count:
//!
//! ```text
//! R_ij = (N_ij + N_ji) / (N_i + N_j)
//! ```
//!
//! where `N_i` is the number of distinct scans performed by `i` in the window
//! and `N_ij` the number of those scans that detected `j`.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, TimeDelta, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Roster;
use crate::model::{NodePair, ParticipantId, ScanEvent, TimeWindow};

/// Per-device scan counts and directed detection counts over one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanTally {
    window: TimeWindow,
    scans: BTreeMap<ParticipantId, u64>,
    detections: BTreeMap<(ParticipantId, ParticipantId), u64>,
}

impl ScanTally {
    /// Builds a tally from explicit counts. Every participant appearing in a
    /// detection key must have a scan count, and `N_ij <= N_i`.
    pub fn from_counts(
        window: TimeWindow,
        scans: BTreeMap<ParticipantId, u64>,
        detections: BTreeMap<(ParticipantId, ParticipantId), u64>,
    ) -> Result<Self> {
        if window.end <= window.start {
            return Err(Error::Range("tally window end must be after start".into()));
        }
        for ((i, j), &n) in &detections {
            if i == j {
                return Err(Error::Domain(format!("self-detection count for {i}")));
            }
            let n_i = *scans
                .get(i)
                .ok_or_else(|| Error::Validation(format!("no scan count for scanner {i}")))?;
            if !scans.contains_key(j) {
                return Err(Error::Validation(format!("no scan count for detected {j}")));
            }
            if n > n_i {
                return Err(Error::Validation(format!("N({i},{j}) = {n} exceeds N({i}) = {n_i}")));
            }
        }
        let detections = detections.into_iter().filter(|(_, n)| *n > 0).collect();
        Ok(Self {
            window,
            scans,
            detections,
        })
    }

    pub fn window(&self) -> TimeWindow {
        self.window
    }

    /// `N_i`; zero for unknown participants.
    pub fn scans(&self, i: &ParticipantId) -> u64 {
        self.scans.get(i).copied().unwrap_or(0)
    }

    /// `N_ij`: scans of `i` that detected `j`.
    pub fn detections(&self, i: &ParticipantId, j: &ParticipantId) -> u64 {
        self.detections.get(&(i.clone(), j.clone())).copied().unwrap_or(0)
    }

    pub fn participants(&self) -> impl Iterator<Item = &ParticipantId> {
        self.scans.keys()
    }

    pub fn participant_count(&self) -> usize {
        self.scans.len()
    }

    pub fn contains(&self, i: &ParticipantId) -> bool {
        self.scans.contains_key(i)
    }

    pub fn scan_counts(&self) -> &BTreeMap<ParticipantId, u64> {
        &self.scans
    }

    /// Non-zero directed detection counts.
    pub fn detection_counts(&self) -> &BTreeMap<(ParticipantId, ParticipantId), u64> {
        &self.detections
    }

    /// Sums counts of two tallies over disjoint windows. The result spans
    /// from the earlier start to the later end.
    pub fn merge(&self, other: &ScanTally) -> ScanTally {
        let mut scans = self.scans.clone();
        for (id, n) in &other.scans {
            *scans.entry(id.clone()).or_default() += n;
        }
        let mut detections = self.detections.clone();
        for (key, n) in &other.detections {
            *detections.entry(key.clone()).or_default() += n;
        }
        ScanTally {
            window: TimeWindow {
                start: self.window.start.min(other.window.start),
                end: self.window.end.max(other.window.end),
            },
            scans,
            detections,
        }
    }

    /// Unordered pairs of tally participants, in ascending order.
    pub fn candidate_pairs(&self) -> Vec<NodePair> {
        let ids: Vec<&ParticipantId> = self.scans.keys().collect();
        let mut pairs = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1) / 2);
        for (x, i) in ids.iter().enumerate() {
            for j in &ids[x + 1..] {
                pairs.push(NodePair::new((*i).clone(), (*j).clone()).expect("distinct keys"));
            }
        }
        pairs
    }
}

/// Counts scans and detections of roster participants inside `window`.
///
/// A scan is a distinct `(scanner, timestamp)`; several detections at the
/// same instant belong to one scan. Detections of addresses outside the
/// roster are ignored but their instants still count as scans. Every roster
/// participant gets an entry, possibly zero.
pub fn tally_scans(events: &[ScanEvent], roster: &Roster, window: TimeWindow, study: TimeWindow) -> Result<ScanTally> {
    if window.end <= window.start {
        return Err(Error::Range("tally window end must be after start".into()));
    }
    if !study.covers(&window) {
        return Err(Error::Range(format!(
            "tally window [{}, {}) lies outside the study period [{}, {})",
            window.start, window.end, study.start, study.end
        )));
    }
    let ids: Vec<ParticipantId> = roster.participants().cloned().collect();
    let index: BTreeMap<&ParticipantId, usize> = ids.iter().enumerate().map(|(n, id)| (id, n)).collect();

    let mut keys: Vec<(DateTime<Utc>, usize, Option<usize>)> = Vec::with_capacity(events.len());
    for event in events {
        if !window.contains(event.timestamp) {
            continue;
        }
        let Some(&scanner) = index.get(&event.scanner) else {
            continue;
        };
        let detected = event
            .detected
            .as_ref()
            .and_then(|addr| roster.lookup(addr))
            .and_then(|entry| index.get(&entry.participant).copied())
            .filter(|&j| j != scanner);
        keys.push((event.timestamp, scanner, detected));
    }
    keys.sort_unstable();
    keys.dedup();

    let mut scans = vec![0u64; ids.len()];
    let mut detections: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut last_scan: Option<(DateTime<Utc>, usize)> = None;
    for (ts, i, j) in keys {
        if last_scan != Some((ts, i)) {
            scans[i] += 1;
            last_scan = Some((ts, i));
        }
        if let Some(j) = j {
            *detections.entry((i, j)).or_default() += 1;
        }
    }

    Ok(ScanTally {
        window,
        scans: ids.iter().cloned().zip(scans).collect(),
        detections: detections
            .into_iter()
            .map(|((i, j), n)| ((ids[i].clone(), ids[j].clone()), n))
            .collect(),
    })
}

/// Pair weight from raw counts; zero when neither device scanned.
pub fn proximity_weight(n_ij: u64, n_ji: u64, n_i: u64, n_j: u64) -> f64 {
    let denominator = n_i + n_j;
    if denominator == 0 {
        0.0
    } else {
        (n_ij + n_ji) as f64 / denominator as f64
    }
}

pub fn edge_weight(tally: &ScanTally, i: &ParticipantId, j: &ParticipantId) -> Result<f64> {
    if i == j {
        return Err(Error::Domain(format!("edge weight of {i} with itself")));
    }
    for id in [i, j] {
        if !tally.contains(id) {
            return Err(Error::Domain(format!("{id} is not in the tally")));
        }
    }
    Ok(proximity_weight(
        tally.detections(i, j),
        tally.detections(j, i),
        tally.scans(i),
        tally.scans(j),
    ))
}

/// Undirected network with weights in `[0, 1]`. Only positive-weight edges
/// are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNetwork {
    nodes: BTreeSet<ParticipantId>,
    edges: BTreeMap<NodePair, f64>,
    window: TimeWindow,
}

impl WeightedNetwork {
    pub fn new(nodes: BTreeSet<ParticipantId>, edges: BTreeMap<NodePair, f64>, window: TimeWindow) -> Result<Self> {
        for (pair, &w) in &edges {
            if !(nodes.contains(pair.first()) && nodes.contains(pair.second())) {
                return Err(Error::Validation(format!("edge {pair} references an unknown node")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Validation(format!("edge {pair} has invalid weight {w}")));
            }
        }
        let edges = edges.into_iter().filter(|(_, w)| *w > 0.0).collect();
        Ok(Self { nodes, edges, window })
    }

    pub fn nodes(&self) -> &BTreeSet<ParticipantId> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeMap<NodePair, f64> {
        &self.edges
    }

    pub fn window(&self) -> TimeWindow {
        self.window
    }

    pub fn weight(&self, pair: &NodePair) -> f64 {
        self.edges.get(pair).copied().unwrap_or(0.0)
    }

    /// Number of unordered node pairs, whether or not they carry an edge.
    pub fn candidate_edge_count(&self) -> usize {
        let n = self.nodes.len();
        n * n.saturating_sub(1) / 2
    }

    /// Multiplies every weight by `factor`; used to check scale invariance.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            nodes: self.nodes.clone(),
            edges: self.edges.iter().map(|(p, w)| (p.clone(), w * factor)).collect(),
            window: self.window,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(NetworkJson::from(self)).expect("network serializes")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let doc: NetworkJson = serde_json::from_value(value)?;
        let nodes: BTreeSet<ParticipantId> = doc.nodes.into_iter().collect();
        let mut edges = BTreeMap::new();
        for e in doc.edges {
            edges.insert(NodePair::new(e.i, e.j)?, e.w);
        }
        Self::new(nodes, edges, doc.window)
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    nodes: Vec<ParticipantId>,
    edges: Vec<EdgeJson>,
    window: TimeWindow,
}

#[derive(Serialize, Deserialize)]
struct EdgeJson {
    i: ParticipantId,
    j: ParticipantId,
    w: f64,
}

impl From<&WeightedNetwork> for NetworkJson {
    fn from(net: &WeightedNetwork) -> Self {
        Self {
            nodes: net.nodes.iter().cloned().collect(),
            edges: net
                .edges
                .iter()
                .map(|(p, &w)| EdgeJson {
                    i: p.first().clone(),
                    j: p.second().clone(),
                    w,
                })
                .collect(),
            window: net.window,
        }
    }
}

pub fn build_weighted_network(tally: &ScanTally) -> WeightedNetwork {
    let nodes: BTreeSet<ParticipantId> = tally.participants().cloned().collect();
    // only pairs with a detection in either direction can be positive
    let mut edges = BTreeMap::new();
    for (i, j) in tally.detection_counts().keys() {
        let pair = NodePair::new(i.clone(), j.clone()).expect("tally has no self-detections");
        if edges.contains_key(&pair) {
            continue;
        }
        let w = proximity_weight(
            tally.detections(i, j),
            tally.detections(j, i),
            tally.scans(i),
            tally.scans(j),
        );
        if w > 0.0 {
            edges.insert(pair, w);
        }
    }
    WeightedNetwork {
        nodes,
        edges,
        window: tally.window(),
    }
}

/// Consecutive windows of `window_length`, starting at the study start and
/// advancing by `stride`; a trailing window that would overrun the study end
/// is not produced.
pub fn series_windows(study: TimeWindow, window_length: TimeDelta, stride: TimeDelta) -> Result<Vec<TimeWindow>> {
    if stride <= TimeDelta::zero() || window_length < stride {
        return Err(Error::Validation(format!(
            "window length {window_length} and stride {stride} must satisfy length >= stride > 0"
        )));
    }
    if window_length > study.duration() {
        return Err(Error::Validation(format!(
            "window length {window_length} exceeds the study period"
        )));
    }
    let mut windows = Vec::new();
    let mut start = study.start;
    while start + window_length <= study.end {
        windows.push(TimeWindow {
            start,
            end: start + window_length,
        });
        start += stride;
    }
    Ok(windows)
}

pub fn window_tallies(
    events: &[ScanEvent],
    roster: &Roster,
    study: TimeWindow,
    window_length: TimeDelta,
    stride: TimeDelta,
) -> Result<Vec<ScanTally>> {
    series_windows(study, window_length, stride)?
        .into_par_iter()
        .map(|w| tally_scans(events, roster, w, study))
        .collect()
}

pub fn window_series(
    events: &[ScanEvent],
    roster: &Roster,
    study: TimeWindow,
    window_length: TimeDelta,
    stride: TimeDelta,
) -> Result<Vec<WeightedNetwork>> {
    Ok(window_tallies(events, roster, study, window_length, stride)?
        .iter()
        .map(build_weighted_network)
        .collect())
}

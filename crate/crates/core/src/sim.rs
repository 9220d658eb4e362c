//! Synthetic cohort simulator with known ground truth.
//!
//! Devices scan on a fixed global schedule (`study_start + n * interval`,
//! optionally with a per-device phase offset). Each scheduled scan fires with
//! the device's compliance probability; a fired scan detects each co-present
//! peer independently with `detection_probability`, and emits an empty-scan
//! record when it detected no one. Co-presence is a binary state given by a
//! [`ContactSchedule`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveTime, TimeDelta, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{pseudonymize_address, Roster};
use crate::model::{DeviceAddress, NodePair, OsKind, ParticipantId, Pseudonym, ScanEvent, StudyConfig, TimeWindow};

pub const IOS_COMPLIANCE: f64 = 0.29;
pub const ANDROID_COMPLIANCE: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OsProfile {
    pub os: OsKind,
    pub compliance: f64,
}

impl OsProfile {
    pub fn new(os: OsKind, compliance: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&compliance) {
            return Err(Error::Validation(format!("compliance {compliance} outside [0, 1]")));
        }
        Ok(Self { os, compliance })
    }

    /// Observed share of scheduled scans performed on each platform.
    pub fn default_for(os: OsKind) -> Self {
        let compliance = match os {
            OsKind::Ios => IOS_COMPLIANCE,
            OsKind::Android => ANDROID_COMPLIANCE,
        };
        Self { os, compliance }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortMember {
    pub id: ParticipantId,
    pub profile: OsProfile,
    pub address: DeviceAddress,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub participants: Vec<CohortMember>,
    pub window: TimeWindow,
    pub scan_interval: TimeDelta,
    pub detection_probability: f64,
    pub rng_seed: u64,
    /// Shift each device's schedule by a uniform offset in `[0, interval)`.
    pub phase_offsets: bool,
    pub salt: String,
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.participants.len() < 2 {
            return Err(Error::Validation("a cohort needs at least two participants".into()));
        }
        if self.scan_interval <= TimeDelta::zero() {
            return Err(Error::Validation("scan interval must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.detection_probability) {
            return Err(Error::Validation(format!(
                "detection probability {} outside [0, 1]",
                self.detection_probability
            )));
        }
        let mut ids = BTreeSet::new();
        let mut addresses = BTreeSet::new();
        for m in &self.participants {
            OsProfile::new(m.profile.os, m.profile.compliance)?;
            if !ids.insert(&m.id) {
                return Err(Error::Validation(format!("participant {} appears twice", m.id)));
            }
            if !addresses.insert(&m.address) {
                return Err(Error::Validation(format!("address of {} is not unique", m.id)));
            }
        }
        Ok(())
    }

    pub fn pseudonym_of(&self, member: &CohortMember) -> Pseudonym {
        pseudonymize_address(&member.address, self.salt.as_bytes())
    }

    pub fn roster(&self) -> Result<Roster> {
        let mut roster = Roster::new();
        for m in &self.participants {
            roster.insert(m.id.clone(), self.pseudonym_of(m), m.profile.os)?;
        }
        Ok(roster)
    }

    pub fn ids(&self) -> Vec<ParticipantId> {
        self.participants.iter().map(|m| m.id.clone()).collect()
    }

    /// Number of scheduled instants per device without phase offsets.
    pub fn scheduled_scans(&self) -> u64 {
        (self.window.duration().num_seconds() / self.scan_interval.num_seconds()) as u64
    }

    /// Study configuration matching the simulator's output: same window,
    /// interval and salt, with pre-hashed addresses.
    pub fn study_config(&self) -> StudyConfig {
        let mut config = StudyConfig::new(self.window.start, self.window.end, &self.salt);
        config.scan_interval_secs = self.scan_interval.num_seconds() as u64;
        config.mac_prehashed = true;
        config.seed = self.rng_seed;
        config
    }
}

/// Half-open `[start, end)` co-presence span.
pub type Span = (DateTime<Utc>, DateTime<Utc>);

/// Locally administered address derived from the participant id.
pub fn synthetic_address(id: &ParticipantId) -> DeviceAddress {
    let digest = Sha256::digest(format!("synthetic-mac:{id}").as_bytes());
    let mut octets = [0u8; 6];
    octets.copy_from_slice(&digest[..6]);
    octets[0] = (octets[0] & 0xFC) | 0x02;
    DeviceAddress::parse(&hex::encode_upper(octets)).expect("six octets")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContactInterval {
    pub pair: NodePair,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactSchedule {
    pub intervals: Vec<ContactInterval>,
}

impl ContactSchedule {
    /// Sorts intervals and merges overlapping or touching ones per pair.
    pub fn normalize(&mut self) {
        self.intervals.sort();
        let mut merged: Vec<ContactInterval> = Vec::with_capacity(self.intervals.len());
        for iv in self.intervals.drain(..) {
            match merged.last_mut() {
                Some(last) if last.pair == iv.pair && iv.start <= last.end => {
                    last.end = last.end.max(iv.end);
                }
                _ => merged.push(iv),
            }
        }
        self.intervals = merged;
    }

    pub fn validate(&self, window: TimeWindow) -> Result<()> {
        for iv in &self.intervals {
            if iv.start >= iv.end {
                return Err(Error::Validation(format!(
                    "contact interval for {} has start {} not before end {}",
                    iv.pair, iv.start, iv.end
                )));
            }
            if iv.start < window.start || iv.end > window.end {
                return Err(Error::Validation(format!(
                    "contact interval for {} lies outside the study window",
                    iv.pair
                )));
            }
        }
        Ok(())
    }

    /// Normalized intervals grouped by pair.
    pub fn by_pair(&self) -> BTreeMap<NodePair, Vec<Span>> {
        let mut copy = self.clone();
        copy.normalize();
        let mut out: BTreeMap<NodePair, Vec<_>> = BTreeMap::new();
        for iv in copy.intervals {
            out.entry(iv.pair).or_default().push((iv.start, iv.end));
        }
        out
    }

    pub fn is_copresent(&self, pair: &NodePair, t: DateTime<Utc>) -> bool {
        self.intervals
            .iter()
            .any(|iv| &iv.pair == pair && iv.start <= t && t < iv.end)
    }
}

/// Daily office hours in UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workday {
    pub start: NaiveTime,
    pub end: NaiveTime,
}

impl Default for Workday {
    fn default() -> Self {
        Self {
            start: NaiveTime::from_hms_opt(9, 0, 0).expect("valid"),
            end: NaiveTime::from_hms_opt(17, 0, 0).expect("valid"),
        }
    }
}

/// Within-group pairs share a contiguous block starting at workday start and
/// lasting `fraction` of the workday, every Monday to Friday. Pairs from
/// different groups never meet.
pub fn generate_office_schedule(
    spec: &CohortSpec,
    groups: &[Vec<ParticipantId>],
    workday: Workday,
    overlap_fraction: &[f64],
) -> Result<ContactSchedule> {
    if groups.len() != overlap_fraction.len() {
        return Err(Error::Validation(format!(
            "{} groups but {} overlap fractions",
            groups.len(),
            overlap_fraction.len()
        )));
    }
    if workday.end <= workday.start {
        return Err(Error::Validation("workday must end after it starts".into()));
    }
    let cohort: BTreeSet<&ParticipantId> = spec.participants.iter().map(|m| &m.id).collect();
    let mut seen = BTreeSet::new();
    for (g, group) in groups.iter().enumerate() {
        if group.is_empty() {
            return Err(Error::Validation(format!("group {g} is empty")));
        }
        for id in group {
            if !cohort.contains(id) {
                return Err(Error::Validation(format!("group member {id} is not in the cohort")));
            }
            if !seen.insert(id) {
                return Err(Error::Validation(format!("{id} belongs to more than one group")));
            }
        }
    }
    if seen.len() != cohort.len() {
        return Err(Error::Validation("groups do not cover the whole cohort".into()));
    }
    for &f in overlap_fraction {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Validation(format!("overlap fraction {f} outside [0, 1]")));
        }
    }

    let workday_secs = (workday.end - workday.start).num_seconds() as f64;
    let window = spec.window;
    let mut schedule = ContactSchedule::default();
    let mut day = window.start.date_naive();
    while day <= window.end.date_naive() {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            let day_start = day.and_time(workday.start).and_utc();
            for (group, &fraction) in groups.iter().zip(overlap_fraction) {
                let block = TimeDelta::seconds((fraction * workday_secs).round() as i64);
                let start = day_start.max(window.start);
                let end = (day_start + block).min(window.end);
                if end <= start {
                    continue;
                }
                for (n, a) in group.iter().enumerate() {
                    for b in &group[n + 1..] {
                        schedule.intervals.push(ContactInterval {
                            pair: NodePair::new(a.clone(), b.clone())?,
                            start,
                            end,
                        });
                    }
                }
            }
        }
        day = day.succ_opt().expect("date in range");
    }
    schedule.normalize();
    Ok(schedule)
}

fn device_rng(seed: u64, id: &ParticipantId) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(id.as_str().as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Scan instants of one device: the global schedule, shifted by the phase
/// offset when enabled.
fn device_instants(spec: &CohortSpec, rng: &mut ChaCha8Rng) -> Vec<DateTime<Utc>> {
    let interval = spec.scan_interval.num_seconds();
    let offset = if spec.phase_offsets {
        rng.gen_range(0..interval)
    } else {
        0
    };
    let mut out = Vec::new();
    let mut t = spec.window.start + TimeDelta::seconds(offset);
    while t < spec.window.end {
        out.push(t);
        t += spec.scan_interval;
    }
    out
}

/// Generates the event stream for the whole cohort, sorted in ingest order.
pub fn simulate_scans(spec: &CohortSpec, schedule: &ContactSchedule) -> Result<Vec<ScanEvent>> {
    spec.validate()?;
    schedule.validate(spec.window)?;
    let by_pair = schedule.by_pair();
    let pseudonyms: BTreeMap<&ParticipantId, Pseudonym> = spec
        .participants
        .iter()
        .map(|m| (&m.id, spec.pseudonym_of(m)))
        .collect();

    let per_device: Vec<Vec<ScanEvent>> = spec
        .participants
        .par_iter()
        .map(|member| {
            let mut rng = device_rng(spec.rng_seed, &member.id);
            // peers in id order, each with its sorted contact intervals
            let mut peers: Vec<(&ParticipantId, &[Span], usize)> = by_pair
                .iter()
                .filter_map(|(pair, ivs)| pair.other(&member.id).map(|peer| (peer, ivs.as_slice(), 0)))
                .collect();
            peers.sort_by(|a, b| a.0.cmp(b.0));
            let mut events = Vec::new();
            for t in device_instants(spec, &mut rng) {
                if !rng.gen_bool(member.profile.compliance) {
                    continue;
                }
                let mut detected_any = false;
                for (peer, ivs, cursor) in peers.iter_mut() {
                    while *cursor < ivs.len() && ivs[*cursor].1 <= t {
                        *cursor += 1;
                    }
                    let present = *cursor < ivs.len() && ivs[*cursor].0 <= t;
                    if present && rng.gen_bool(spec.detection_probability) {
                        detected_any = true;
                        events.push(ScanEvent {
                            timestamp: t,
                            scanner: member.id.clone(),
                            detected: Some(pseudonyms[peer].clone()),
                            device_name: None,
                            device_type: None,
                        });
                    }
                }
                if !detected_any {
                    events.push(ScanEvent {
                        timestamp: t,
                        scanner: member.id.clone(),
                        detected: None,
                        device_name: None,
                        device_type: None,
                    });
                }
            }
            events
        })
        .collect();

    let mut events: Vec<ScanEvent> = per_device.into_iter().flatten().collect();
    events.sort();
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTruth {
    pub i: ParticipantId,
    pub j: ParticipantId,
    pub copresence_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub window: TimeWindow,
    pub pairs: Vec<PairTruth>,
}

impl GroundTruth {
    pub fn fraction(&self, pair: &NodePair) -> f64 {
        self.pairs
            .iter()
            .find(|p| &p.i == pair.first() && &p.j == pair.second())
            .map_or(0.0, |p| p.copresence_fraction)
    }

    /// Pairs that were ever co-present.
    pub fn positive_pairs(&self) -> BTreeSet<NodePair> {
        self.pairs
            .iter()
            .filter(|p| p.copresence_fraction > 0.0)
            .map(|p| NodePair::new(p.i.clone(), p.j.clone()).expect("distinct"))
            .collect()
    }
}

/// Co-present time over study time for every pair of `participants`.
pub fn ground_truth_network(
    schedule: &ContactSchedule,
    participants: &[ParticipantId],
    window: TimeWindow,
) -> GroundTruth {
    let by_pair = schedule.by_pair();
    let total = window.duration().num_seconds() as f64;
    let mut ids: Vec<&ParticipantId> = participants.iter().collect();
    ids.sort();
    ids.dedup();
    let mut pairs = Vec::new();
    for (n, a) in ids.iter().enumerate() {
        for b in &ids[n + 1..] {
            let pair = NodePair::new((*a).clone(), (*b).clone()).expect("distinct ids");
            let covered: i64 = by_pair
                .get(&pair)
                .map(|ivs| {
                    ivs.iter()
                        .map(|(s, e)| ((*e).min(window.end) - (*s).max(window.start)).num_seconds().max(0))
                        .sum()
                })
                .unwrap_or(0);
            pairs.push(PairTruth {
                i: pair.first().clone(),
                j: pair.second().clone(),
                copresence_fraction: covered as f64 / total,
            });
        }
    }
    GroundTruth { window, pairs }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMember {
    pub id: String,
    pub os: OsKind,
    #[serde(default)]
    pub mac: Option<String>,
    #[serde(default)]
    pub compliance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioGroup {
    pub name: String,
    #[serde(default)]
    pub overlap_fraction: f64,
    #[serde(default)]
    pub members: Vec<ScenarioMember>,
    /// Generated iOS members named `<name>-NN`.
    #[serde(default)]
    pub ios: usize,
    #[serde(default)]
    pub android: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioContact {
    pub i: String,
    pub j: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

fn default_interval() -> u64 {
    300
}

fn default_detection() -> f64 {
    1.0
}

fn default_ios() -> f64 {
    IOS_COMPLIANCE
}

fn default_android() -> f64 {
    ANDROID_COMPLIANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplianceDefaults {
    #[serde(default = "default_ios")]
    pub ios: f64,
    #[serde(default = "default_android")]
    pub android: f64,
}

impl Default for ComplianceDefaults {
    fn default() -> Self {
        Self {
            ios: IOS_COMPLIANCE,
            android: ANDROID_COMPLIANCE,
        }
    }
}

/// Scenario file: cohort, office groups and explicit contacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub study_start: DateTime<Utc>,
    pub study_end: DateTime<Utc>,
    #[serde(default = "default_interval")]
    pub scan_interval_secs: u64,
    #[serde(default = "default_detection")]
    pub detection_probability: f64,
    #[serde(default)]
    pub phase_offsets: bool,
    pub salt: String,
    #[serde(default)]
    pub compliance: ComplianceDefaults,
    #[serde(default)]
    pub workday: Workday,
    #[serde(default)]
    pub groups: Vec<ScenarioGroup>,
    #[serde(default)]
    pub contacts: Vec<ScenarioContact>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn groups(&self) -> Result<Vec<Vec<ParticipantId>>> {
        self.groups
            .iter()
            .map(|g| {
                let mut ids = Vec::new();
                for m in &g.members {
                    ids.push(ParticipantId::new(m.id.clone())?);
                }
                for n in 0..g.ios + g.android {
                    ids.push(ParticipantId::new(format!("{}-{:02}", g.name, n + 1))?);
                }
                Ok(ids)
            })
            .collect()
    }

    pub fn build(&self) -> Result<(CohortSpec, ContactSchedule)> {
        let window = TimeWindow::new(self.study_start, self.study_end)
            .map_err(|e| Error::Validation(format!("study window: {e}")))?;
        let profile = |os: OsKind, explicit: Option<f64>| {
            let default = match os {
                OsKind::Ios => self.compliance.ios,
                OsKind::Android => self.compliance.android,
            };
            OsProfile::new(os, explicit.unwrap_or(default))
        };
        let mut participants = Vec::new();
        for (group, ids) in self.groups.iter().zip(self.groups()?) {
            let mut ids = ids.into_iter();
            for m in &group.members {
                let id = ids.next().expect("member id");
                let address = match &m.mac {
                    Some(raw) => DeviceAddress::parse(raw)?,
                    None => synthetic_address(&id),
                };
                participants.push(CohortMember {
                    profile: profile(m.os, m.compliance)?,
                    address,
                    id,
                });
            }
            for (n, id) in ids.enumerate() {
                let os = if n < group.ios { OsKind::Ios } else { OsKind::Android };
                participants.push(CohortMember {
                    profile: profile(os, None)?,
                    address: synthetic_address(&id),
                    id,
                });
            }
        }
        let spec = CohortSpec {
            participants,
            window,
            scan_interval: TimeDelta::seconds(self.scan_interval_secs as i64),
            detection_probability: self.detection_probability,
            rng_seed: self.seed,
            phase_offsets: self.phase_offsets,
            salt: self.salt.clone(),
        };
        spec.validate()?;
        let fractions: Vec<f64> = self.groups.iter().map(|g| g.overlap_fraction).collect();
        let mut schedule = generate_office_schedule(&spec, &self.groups()?, self.workday, &fractions)?;
        for c in &self.contacts {
            let pair = NodePair::new(ParticipantId::new(c.i.clone())?, ParticipantId::new(c.j.clone())?)?;
            if !spec.participants.iter().any(|m| &m.id == pair.first())
                || !spec.participants.iter().any(|m| &m.id == pair.second())
            {
                return Err(Error::Validation(format!(
                    "contact {pair} names an unknown participant"
                )));
            }
            schedule.intervals.push(ContactInterval {
                pair,
                start: c.start,
                end: c.end,
            });
        }
        schedule.normalize();
        schedule.validate(window)?;
        Ok((spec, schedule))
    }
}

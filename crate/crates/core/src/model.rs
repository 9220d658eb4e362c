//! Core domain types shared across the pipeline: identifiers, scan events,
//! survey responses with severity banding, and the study configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque participant token, unique within a study.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ParticipantId(String);

impl ParticipantId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::Validation("participant id must be non-empty".into()));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ParticipantId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ParticipantId> for String {
    fn from(value: ParticipantId) -> Self {
        value.0
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A canonicalized 48-bit hardware address, `AA:BB:CC:DD:EE:FF`.
///
/// Accepts colon, hyphen or no separators and any hex case on input.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeviceAddress(String);

impl DeviceAddress {
    pub fn parse(raw: &str) -> Result<Self> {
        let trimmed = raw.trim();
        let digits: String = if trimmed.len() == 12 {
            trimmed.to_string()
        } else if trimmed.len() == 17 {
            let bytes = trimmed.as_bytes();
            let sep = bytes[2];
            if sep != b':' && sep != b'-' {
                return Err(Error::InvalidAddress(raw.to_string()));
            }
            let mut out = String::with_capacity(12);
            for (idx, chunk) in trimmed.split(sep as char).enumerate() {
                if idx > 5 || chunk.len() != 2 {
                    return Err(Error::InvalidAddress(raw.to_string()));
                }
                out.push_str(chunk);
            }
            out
        } else {
            return Err(Error::InvalidAddress(raw.to_string()));
        };
        if digits.len() != 12 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::InvalidAddress(raw.to_string()));
        }
        let upper = digits.to_ascii_uppercase();
        let canonical = upper
            .as_bytes()
            .chunks(2)
            .map(|pair| std::str::from_utf8(pair).expect("ascii"))
            .collect::<Vec<_>>()
            .join(":");
        Ok(Self(canonical))
    }

    pub fn canonical(&self) -> &str {
        &self.0
    }
}

/// Salted digest of a [`DeviceAddress`], rendered as lowercase hex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Pseudonym(String);

/// Hex length of a SHA-256 pseudonym.
pub const PSEUDONYM_LEN: usize = 64;

impl Pseudonym {
    /// Wraps an already-hashed value; must be [`PSEUDONYM_LEN`] lowercase hex digits.
    pub fn from_hex(hex: &str) -> Result<Self> {
        let hex = hex.trim();
        let ok = hex.len() == PSEUDONYM_LEN && hex.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !ok {
            return Err(Error::InvalidAddress(hex.to_string()));
        }
        Ok(Self(hex.to_string()))
    }

    pub(crate) fn from_digest_unchecked(hex: String) -> Self {
        Self(hex)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Pseudonym {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::from_hex(&value)
    }
}

impl From<Pseudonym> for String {
    fn from(value: Pseudonym) -> Self {
        value.0
    }
}

impl fmt::Display for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OsKind {
    Ios,
    Android,
}

impl OsKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OsKind::Ios => "ios",
            OsKind::Android => "android",
        }
    }
}

impl std::str::FromStr for OsKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ios" => Ok(OsKind::Ios),
            "android" => Ok(OsKind::Android),
            other => Err(Error::Validation(format!("unknown os profile {other:?}"))),
        }
    }
}

impl fmt::Display for OsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One directed observation from a discovery scan.
///
/// `detected == None` is an empty-scan record: the scanner ran a scan at
/// `timestamp` and saw no peer. These records make per-device scan counts
/// observable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScanEvent {
    pub timestamp: DateTime<Utc>,
    pub scanner: ParticipantId,
    pub detected: Option<Pseudonym>,
    pub device_name: Option<String>,
    pub device_type: Option<String>,
}

impl ScanEvent {
    pub fn is_empty_scan(&self) -> bool {
        self.detected.is_none()
    }

    /// Key used for duplicate detection.
    pub fn identity(&self) -> (DateTime<Utc>, &ParticipantId, Option<&Pseudonym>) {
        (self.timestamp, &self.scanner, self.detected.as_ref())
    }
}

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if end <= start {
            return Err(Error::Range(format!("window end {end} is not after start {start}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }

    pub fn covers(&self, other: &TimeWindow) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn duration(&self) -> TimeDelta {
        self.end - self.start
    }
}

/// Unordered pair of distinct participants, stored with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodePair {
    a: ParticipantId,
    b: ParticipantId,
}

impl NodePair {
    pub fn new(x: ParticipantId, y: ParticipantId) -> Result<Self> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Ok(Self { a: x, b: y }),
            std::cmp::Ordering::Greater => Ok(Self { a: y, b: x }),
            std::cmp::Ordering::Equal => Err(Error::Domain(format!("self-pair {x} is not an edge"))),
        }
    }

    pub fn first(&self) -> &ParticipantId {
        &self.a
    }

    pub fn second(&self) -> &ParticipantId {
        &self.b
    }

    pub fn contains(&self, id: &ParticipantId) -> bool {
        &self.a == id || &self.b == id
    }

    /// The endpoint that is not `id`, if `id` is an endpoint.
    pub fn other(&self, id: &ParticipantId) -> Option<&ParticipantId> {
        if &self.a == id {
            Some(&self.b)
        } else if &self.b == id {
            Some(&self.a)
        } else {
            None
        }
    }
}

impl fmt::Display for NodePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}, {}}}", self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Instrument {
    #[serde(rename = "PHQ9", alias = "PHQ-9", alias = "phq9")]
    Phq9,
    #[serde(rename = "GAD7", alias = "GAD-7", alias = "gad7")]
    Gad7,
}

impl Instrument {
    pub fn item_count(self) -> usize {
        match self {
            Instrument::Phq9 => 9,
            Instrument::Gad7 => 7,
        }
    }

    pub fn max_total(self) -> u32 {
        3 * self.item_count() as u32
    }

    pub fn name(self) -> &'static str {
        match self {
            Instrument::Phq9 => "PHQ9",
            Instrument::Gad7 => "GAD7",
        }
    }
}

impl std::str::FromStr for Instrument {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "").as_str() {
            "PHQ9" => Ok(Instrument::Phq9),
            "GAD7" => Ok(Instrument::Gad7),
            other => Err(Error::Validation(format!("unknown instrument {other:?}"))),
        }
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyResponse {
    pub participant: ParticipantId,
    pub instrument: Instrument,
    pub items: Vec<i64>,
    pub completed_at: DateTime<Utc>,
}

/// Sums the item responses after checking item count and the 0..=3 range.
pub fn score_survey(response: &SurveyResponse) -> Result<u32> {
    let expected = response.instrument.item_count();
    if response.items.len() != expected {
        return Err(Error::ItemCount {
            instrument: response.instrument.name(),
            expected,
            got: response.items.len(),
        });
    }
    let mut total = 0u32;
    for (index, &value) in response.items.iter().enumerate() {
        if !(0..=3).contains(&value) {
            return Err(Error::ItemOutOfRange { index, value });
        }
        total += value as u32;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityBand {
    pub label: String,
    #[serde(rename = "min")]
    pub min_score: u32,
    #[serde(rename = "max")]
    pub max_score: u32,
}

impl SeverityBand {
    fn new(label: &str, min_score: u32, max_score: u32) -> Self {
        Self {
            label: label.to_string(),
            min_score,
            max_score,
        }
    }
}

/// Ordered, contiguous severity bands covering `0..=max_total`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityBandTable {
    pub instrument: Instrument,
    pub bands: Vec<SeverityBand>,
}

impl SeverityBandTable {
    pub fn new(instrument: Instrument, bands: Vec<SeverityBand>) -> Result<Self> {
        let table = Self { instrument, bands };
        table.validate()?;
        Ok(table)
    }

    /// Conventional PHQ-9 cutoffs: 0-4, 5-9, 10-14, 15-19, 20-27.
    pub fn default_phq9() -> Self {
        Self {
            instrument: Instrument::Phq9,
            bands: vec![
                SeverityBand::new("minimal", 0, 4),
                SeverityBand::new("mild", 5, 9),
                SeverityBand::new("moderate", 10, 14),
                SeverityBand::new("moderately-severe", 15, 19),
                SeverityBand::new("severe", 20, 27),
            ],
        }
    }

    /// Conventional GAD-7 cutoffs: 0-4, 5-9, 10-14, 15-21.
    pub fn default_gad7() -> Self {
        Self {
            instrument: Instrument::Gad7,
            bands: vec![
                SeverityBand::new("minimal", 0, 4),
                SeverityBand::new("mild", 5, 9),
                SeverityBand::new("moderate", 10, 14),
                SeverityBand::new("severe", 15, 21),
            ],
        }
    }

    pub fn default_for(instrument: Instrument) -> Self {
        match instrument {
            Instrument::Phq9 => Self::default_phq9(),
            Instrument::Gad7 => Self::default_gad7(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let max_total = self.instrument.max_total();
        let mut next = 0u32;
        if self.bands.is_empty() {
            return Err(Error::Validation(format!("{} band table is empty", self.instrument)));
        }
        for band in &self.bands {
            if band.label.trim().is_empty() {
                return Err(Error::Validation("band label must be non-empty".into()));
            }
            if band.min_score != next || band.max_score < band.min_score {
                return Err(Error::Validation(format!(
                    "{} band {:?} ({}..={}) breaks contiguity at {next}",
                    self.instrument, band.label, band.min_score, band.max_score
                )));
            }
            next = band.max_score + 1;
        }
        if next != max_total + 1 {
            return Err(Error::Validation(format!(
                "{} bands end at {} but must cover 0..={max_total}",
                self.instrument,
                next - 1
            )));
        }
        Ok(())
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.bands.iter().map(|b| b.label.as_str())
    }
}

pub fn band_score(total: i64, table: &SeverityBandTable) -> Result<&str> {
    table
        .bands
        .iter()
        .find(|b| (b.min_score as i64) <= total && total <= (b.max_score as i64))
        .map(|b| b.label.as_str())
        .ok_or(Error::ScoreOutOfRange {
            total,
            max_total: table.instrument.max_total(),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DigestAlgorithm {
    #[default]
    Sha256,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetentionRule {
    /// Keep an edge significant at either endpoint.
    #[default]
    Or,
    /// Keep an edge only when significant at both endpoints.
    And,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageSemantics {
    /// window length / combined scan count
    #[default]
    MeanInterval,
    /// longest gap between consecutive combined scans, window edges included
    MaxGap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandTables {
    #[serde(default = "SeverityBandTable::default_phq9_bands")]
    pub phq9: Vec<SeverityBand>,
    #[serde(default = "SeverityBandTable::default_gad7_bands")]
    pub gad7: Vec<SeverityBand>,
}

impl SeverityBandTable {
    fn default_phq9_bands() -> Vec<SeverityBand> {
        Self::default_phq9().bands
    }

    fn default_gad7_bands() -> Vec<SeverityBand> {
        Self::default_gad7().bands
    }
}

impl BandTables {
    pub fn defaults() -> Self {
        Self {
            phq9: SeverityBandTable::default_phq9_bands(),
            gad7: SeverityBandTable::default_gad7_bands(),
        }
    }

    pub fn table(&self, instrument: Instrument) -> SeverityBandTable {
        let bands = match instrument {
            Instrument::Phq9 => self.phq9.clone(),
            Instrument::Gad7 => self.gad7.clone(),
        };
        SeverityBandTable { instrument, bands }
    }
}

fn default_scan_interval() -> u64 {
    300
}

fn default_alpha() -> f64 {
    0.05
}

fn default_true() -> bool {
    true
}

fn default_thresholds() -> Vec<u64> {
    vec![10, 30]
}

/// Study-wide parameters, loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study_start: DateTime<Utc>,
    pub study_end: DateTime<Utc>,
    #[serde(default = "default_scan_interval")]
    pub scan_interval_secs: u64,
    pub salt: String,
    #[serde(default)]
    pub digest: DigestAlgorithm,
    #[serde(default = "default_alpha")]
    pub backbone_alpha: f64,
    #[serde(default)]
    pub retention_rule: RetentionRule,
    /// `mac` fields in scan logs are already pseudonyms.
    #[serde(default)]
    pub mac_prehashed: bool,
    /// Keep scan instants of non-participant detections as empty-scan records.
    #[serde(default = "default_true")]
    pub retain_scan_instants: bool,
    #[serde(default)]
    pub coverage_semantics: CoverageSemantics,
    #[serde(default = "default_thresholds")]
    pub coverage_thresholds_min: Vec<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "BandTables::defaults")]
    pub bands: BandTables,
}

impl StudyConfig {
    pub fn new(study_start: DateTime<Utc>, study_end: DateTime<Utc>, salt: &str) -> Self {
        Self {
            study_start,
            study_end,
            scan_interval_secs: default_scan_interval(),
            salt: salt.to_string(),
            digest: DigestAlgorithm::default(),
            backbone_alpha: default_alpha(),
            retention_rule: RetentionRule::default(),
            mac_prehashed: false,
            retain_scan_instants: true,
            coverage_semantics: CoverageSemantics::default(),
            coverage_thresholds_min: default_thresholds(),
            seed: 0,
            bands: BandTables::defaults(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: StudyConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.study_end <= self.study_start {
            return Err(Error::Validation("study_end must be after study_start".into()));
        }
        if self.scan_interval_secs == 0 {
            return Err(Error::Validation("scan_interval_secs must be positive".into()));
        }
        if !(self.backbone_alpha > 0.0 && self.backbone_alpha < 1.0) {
            return Err(Error::Validation(format!(
                "backbone_alpha {} must lie in (0, 1)",
                self.backbone_alpha
            )));
        }
        if self.coverage_thresholds_min.contains(&0) || !self.coverage_thresholds_min.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Validation(
                "coverage thresholds must be positive and strictly ascending".into(),
            ));
        }
        self.band_table(Instrument::Phq9).validate()?;
        self.band_table(Instrument::Gad7).validate()?;
        Ok(())
    }

    pub fn study_window(&self) -> TimeWindow {
        TimeWindow {
            start: self.study_start,
            end: self.study_end,
        }
    }

    pub fn scan_interval(&self) -> TimeDelta {
        TimeDelta::seconds(self.scan_interval_secs as i64)
    }

    pub fn band_table(&self, instrument: Instrument) -> SeverityBandTable {
        self.bands.table(instrument)
    }

    pub fn coverage_thresholds(&self) -> Vec<TimeDelta> {
        self.coverage_thresholds_min
            .iter()
            .map(|&m| TimeDelta::minutes(m as i64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyRejection {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SurveyLoad {
    pub responses: Vec<SurveyResponse>,
    pub rejected: Vec<SurveyRejection>,
}

/// Reads `participant_id,instrument,completed_at,i1,...,iN` rows. A file may
/// mix instruments when N = 9; GAD-7 rows then leave `i8`, `i9` empty.
/// Rows with missing, non-integer or out-of-range items are rejected.
pub fn read_survey_csv<R: std::io::Read>(reader: R) -> Result<SurveyLoad> {
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = csv.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    let item_columns = names.len().saturating_sub(3);
    let header_ok = names.len() > 3
        && names[..3] == ["participant_id", "instrument", "completed_at"]
        && (item_columns == 7 || item_columns == 9)
        && names[3..]
            .iter()
            .enumerate()
            .all(|(n, name)| *name == format!("i{}", n + 1));
    if !header_ok {
        return Err(Error::Validation(format!(
            "survey header must be participant_id,instrument,completed_at,i1..i7 or i1..i9, got {}",
            names.join(",")
        )));
    }

    let mut load = SurveyLoad::default();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parsed = (|| -> Result<SurveyResponse> {
            let field = |n: usize| record.get(n).unwrap_or("");
            let participant = ParticipantId::new(field(0))?;
            let instrument: Instrument = field(1).parse()?;
            let completed_at = DateTime::parse_from_rfc3339(field(2))
                .map_err(|e| Error::Validation(format!("completed_at: {e}")))?
                .with_timezone(&Utc);
            let mut cells: Vec<&str> = record.iter().skip(3).collect();
            while cells.last() == Some(&"") {
                cells.pop();
            }
            let mut items = Vec::with_capacity(cells.len());
            for (index, cell) in cells.iter().enumerate() {
                if cell.is_empty() {
                    return Err(Error::Validation(format!("item {index} is missing")));
                }
                let value: i64 = cell
                    .parse()
                    .map_err(|_| Error::Validation(format!("item {index} is not an integer: {cell:?}")))?;
                items.push(value);
            }
            let response = SurveyResponse {
                participant,
                instrument,
                items,
                completed_at,
            };
            score_survey(&response)?;
            Ok(response)
        })();
        match parsed {
            Ok(response) => load.responses.push(response),
            Err(e) => load.rejected.push(SurveyRejection {
                line,
                reason: e.to_string(),
            }),
        }
    }
    Ok(load)
}

/// Ordered map of scores keyed by participant, as consumed by the analysis
/// and layout stages.
pub type ScoreMap = BTreeMap<ParticipantId, f64>;

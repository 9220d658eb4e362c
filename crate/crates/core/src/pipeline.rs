//! End-to-end run from scan log, roster and surveys to a report and its
//! artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::analyze::{
    attribute_assortativity, coverage_summary, device_scan_rates, edge_coverage, max_gap_coverage, severity_histogram,
    Assortativity, CoverageSummary, ScanRateSummary, SeverityHistogram,
};
use crate::backbone::{extract_backbone, BackboneNetwork};
use crate::error::{Error, Result};
use crate::graphml::AttributedGraph;
use crate::ingest::{filter_to_participants, parse_scan_log, FilterOptions, IngestReport, Roster};
use crate::layout::{fruchterman_reingold, render_figure_data, FigureData, LayoutParams, LayoutResult};
use crate::model::{
    band_score, read_survey_csv, score_survey, CoverageSemantics, Instrument, ParticipantId, ScanEvent,
    SeverityBandTable, StudyConfig, SurveyLoad, SurveyResponse,
};
use crate::proximity::{build_weighted_network, tally_scans, ScanTally, WeightedNetwork};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Report JSON schema shipped with the crate.
pub const REPORT_SCHEMA: &str = include_str!("../schemas/report.schema.json");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineInputs {
    pub scan_log: PathBuf,
    pub roster: PathBuf,
    pub surveys: Option<PathBuf>,
}

impl PipelineInputs {
    pub fn check(&self) -> Result<()> {
        let paths = [Some(&self.scan_log), Some(&self.roster), self.surveys.as_ref()];
        for path in paths.into_iter().flatten() {
            if !path.is_file() {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        Ok(())
    }
}

pub fn load_roster(path: &Path) -> Result<Roster> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Roster::from_csv(file)
}

pub fn load_scan_log(path: &Path, config: &StudyConfig) -> Result<(Vec<ScanEvent>, IngestReport)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_scan_log(BufReader::new(file), config)
}

/// A file holding nothing but whitespace loads as no responses.
pub fn load_surveys(path: &Path) -> Result<SurveyLoad> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(SurveyLoad::default());
    }
    read_survey_csv(text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEcho {
    pub scan_log: String,
    pub roster: String,
    pub surveys: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub events_kept: usize,
    pub dropped_non_participant: usize,
    pub dropped_unknown_scanner: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightCounts {
    pub nodes: usize,
    pub candidate_edges: usize,
    pub positive_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneCounts {
    pub alpha_threshold: f64,
    pub rule: crate::model::RetentionRule,
    pub tested_edges: usize,
    pub retained_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutCounts {
    pub nodes: usize,
    pub iterations: usize,
    pub seed: u64,
    pub ideal_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyCounts {
    pub rows_accepted: usize,
    pub rows_rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub ingest: IngestReport,
    pub filter: FilterCounts,
    pub weights: WeightCounts,
    pub backbone: BackboneCounts,
    pub layout: LayoutCounts,
    pub surveys: SurveyCounts,
}

/// Severity results; `present` is false when no valid responses were given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeveritySection {
    pub present: bool,
    pub phq9: Option<SeverityHistogram>,
    pub gad7: Option<SeverityHistogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssortativitySection {
    pub present: bool,
    /// Node attribute correlated across backbone edges.
    pub attribute: String,
    pub result: Option<Assortativity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub generated_at: String,
    pub tool: ToolInfo,
    pub seed: u64,
    pub config: StudyConfig,
    pub inputs: InputEcho,
    pub stages: StageCounts,
    pub device_rates: ScanRateSummary,
    pub coverage: CoverageSummary,
    pub severity: SeveritySection,
    pub assortativity: AssortativitySection,
}

impl Report {
    pub fn to_json_pretty(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// Everything a run produces, held in memory until written.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: Report,
    pub tally: ScanTally,
    pub weights: WeightedNetwork,
    pub backbone: BackboneNetwork,
    pub layout: LayoutResult,
    pub figure: FigureData,
    /// PHQ-9 band per participant with a valid response.
    pub bands: BTreeMap<ParticipantId, String>,
}

/// Latest response per participant for one instrument.
fn latest(responses: &[SurveyResponse], instrument: Instrument) -> BTreeMap<ParticipantId, &SurveyResponse> {
    let mut out: BTreeMap<ParticipantId, &SurveyResponse> = BTreeMap::new();
    for r in responses.iter().filter(|r| r.instrument == instrument) {
        match out.get(&r.participant) {
            Some(prev) if prev.completed_at > r.completed_at => {}
            _ => {
                out.insert(r.participant.clone(), r);
            }
        }
    }
    out
}

pub fn phq9_scores(responses: &[SurveyResponse]) -> BTreeMap<ParticipantId, u32> {
    latest(responses, Instrument::Phq9)
        .into_iter()
        .filter_map(|(id, r)| score_survey(r).ok().map(|s| (id, s)))
        .collect()
}

pub fn phq9_bands(responses: &[SurveyResponse], table: &SeverityBandTable) -> BTreeMap<ParticipantId, String> {
    phq9_scores(responses)
        .into_iter()
        .filter_map(|(id, s)| band_score(i64::from(s), table).ok().map(|b| (id, b.to_string())))
        .collect()
}

pub fn run_pipeline(config: &StudyConfig, inputs: &PipelineInputs, layout: LayoutParams) -> Result<PipelineOutput> {
    config.validate()?;
    inputs.check()?;
    let roster = load_roster(&inputs.roster)?;
    let (events, mut ingest) = load_scan_log(&inputs.scan_log, config)?;
    let surveys = match &inputs.surveys {
        Some(path) => load_surveys(path)?,
        None => SurveyLoad::default(),
    };
    tracing::info!(events = events.len(), roster = roster.len(), "ingested scan log");

    let filtered = filter_to_participants(
        &events,
        &roster,
        FilterOptions {
            retain_scan_instants: config.retain_scan_instants,
        },
    );
    ingest.non_participant_detections = filtered.dropped_non_participant;
    ingest.unknown_scanner_events = filtered.dropped_unknown_scanner;

    let window = config.study_window();
    let tally = tally_scans(&filtered.events, &roster, window, window)?;
    let weights = build_weighted_network(&tally);
    let backbone = extract_backbone(&weights, config.backbone_alpha, config.retention_rule)?;
    tracing::info!(
        candidate = weights.candidate_edge_count(),
        positive = weights.edges().len(),
        retained = backbone.edge_count(),
        "built networks"
    );

    let device_rates = device_scan_rates(&tally, &roster, config.scan_interval())?;
    let thresholds = config.coverage_thresholds();
    let coverage = match config.coverage_semantics {
        CoverageSemantics::MeanInterval => coverage_summary(&tally, &thresholds)?,
        CoverageSemantics::MaxGap => max_gap_coverage(&filtered.events, &roster, window, &thresholds)?,
    };

    let responses = &surveys.responses;
    let histogram = |instrument: Instrument| {
        let h = severity_histogram(responses, &config.band_table(instrument));
        (h.respondents > 0).then_some(h)
    };
    let (phq9, gad7) = (histogram(Instrument::Phq9), histogram(Instrument::Gad7));
    let severity = SeveritySection {
        present: phq9.is_some() || gad7.is_some(),
        phq9,
        gad7,
    };
    let scores: BTreeMap<ParticipantId, f64> = phq9_scores(responses)
        .into_iter()
        .map(|(id, s)| (id, f64::from(s)))
        .collect();
    let assortativity = AssortativitySection {
        present: !scores.is_empty(),
        attribute: "phq9_score".into(),
        result: (!scores.is_empty()).then(|| attribute_assortativity(&backbone, &scores)),
    };

    let params = LayoutParams {
        seed: config.seed,
        ..layout
    };
    let layout = fruchterman_reingold(&backbone, params)?;
    let bands = phq9_bands(responses, &config.band_table(Instrument::Phq9));
    let figure = render_figure_data(&backbone, &layout, &bands)?;

    let stages = StageCounts {
        ingest,
        filter: FilterCounts {
            events_kept: filtered.events.len(),
            dropped_non_participant: filtered.dropped_non_participant,
            dropped_unknown_scanner: filtered.dropped_unknown_scanner,
        },
        weights: WeightCounts {
            nodes: weights.nodes().len(),
            candidate_edges: weights.candidate_edge_count(),
            positive_edges: weights.edges().len(),
        },
        backbone: BackboneCounts {
            alpha_threshold: backbone.alpha_threshold,
            rule: backbone.rule,
            tested_edges: backbone.significance.len(),
            retained_edges: backbone.edge_count(),
        },
        layout: LayoutCounts {
            nodes: layout.coordinates.len(),
            iterations: layout.iterations,
            seed: layout.seed,
            ideal_distance: layout.ideal_distance,
        },
        surveys: SurveyCounts {
            rows_accepted: surveys.responses.len(),
            rows_rejected: surveys.rejected.len(),
        },
    };
    let report = Report {
        generated_at: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        tool: ToolInfo {
            name: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
        },
        seed: config.seed,
        config: config.clone(),
        inputs: InputEcho {
            scan_log: inputs.scan_log.display().to_string(),
            roster: inputs.roster.display().to_string(),
            surveys: inputs.surveys.as_ref().map(|p| p.display().to_string()),
        },
        stages,
        device_rates,
        coverage,
        severity,
        assortativity,
    };
    Ok(PipelineOutput {
        report,
        tally,
        weights,
        backbone,
        layout,
        figure,
        bands,
    })
}

/// Files staged under `<name>.partial` and renamed into place together.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    staged: Vec<(PathBuf, PathBuf)>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            staged: Vec::new(),
        })
    }

    pub fn stage(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let target = self.dir.join(name);
        let partial = self.dir.join(format!("{name}.partial"));
        fs::write(&partial, contents).map_err(|e| Error::io(&partial, e))?;
        self.staged.push((partial, target));
        Ok(())
    }

    pub fn stage_with<F>(&mut self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.stage(name, &buf)
    }

    /// Renames every staged file into place. Files already renamed stay;
    /// the rest keep their `.partial` suffix.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.staged.len());
        for (partial, target) in self.staged {
            fs::rename(&partial, &target).map_err(|e| Error::io(&target, e))?;
            written.push(target);
        }
        Ok(written)
    }
}

fn json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("artifact serializes");
    out.push(b'\n');
    out
}

pub fn write_rates_csv(rates: &ScanRateSummary, out: &mut Vec<u8>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(["participant", "os", "performed", "scheduled", "rate"])?;
    for d in &rates.devices {
        csv.write_record([
            d.participant.as_str(),
            d.os.map_or("", |os| os.as_str()),
            &d.performed.to_string(),
            &d.scheduled.to_string(),
            &d.rate.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_edge_rates_csv(tally: &ScanTally, out: &mut Vec<u8>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(["i", "j", "combined_scans", "mean_interscan_interval_secs"])?;
    for e in edge_coverage(tally) {
        csv.write_record([
            e.i.as_str(),
            e.j.as_str(),
            &e.combined_scans.to_string(),
            &e.mean_interscan_interval_secs.map_or(String::new(), |v| v.to_string()),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_band_csv(histogram: &SeverityHistogram, out: &mut Vec<u8>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(["band", "count"])?;
    for b in &histogram.bands {
        csv.write_record([b.label.as_str(), &b.count.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_score_csv(histogram: &SeverityHistogram, out: &mut Vec<u8>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(["score", "count"])?;
    for (score, count) in histogram.score_counts.iter().enumerate() {
        csv.write_record([score.to_string(), count.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes the report and every artifact into `dir`.
pub fn write_artifacts(output: &PipelineOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut w = ArtifactWriter::new(dir)?;
    let bands = &output.bands;
    w.stage("report.json", output.report.to_json_pretty().as_bytes())?;
    w.stage("ingest.json", &json_bytes(&output.report.stages.ingest))?;
    w.stage("weights.json", &json_bytes(&output.weights.to_json()))?;
    w.stage(
        "weights.graphml",
        AttributedGraph::from_network(&output.weights, bands)
            .to_graphml()
            .as_bytes(),
    )?;
    w.stage("backbone.json", &json_bytes(&output.backbone.to_json()))?;
    w.stage(
        "backbone.graphml",
        AttributedGraph::from_backbone(&output.backbone, bands)
            .to_graphml()
            .as_bytes(),
    )?;
    w.stage("layout.json", &json_bytes(&output.layout))?;
    w.stage_with("layout_nodes.csv", |b| output.figure.write_node_csv(b))?;
    w.stage_with("layout_edges.csv", |b| output.figure.write_edge_csv(b))?;
    w.stage_with("device_rates.csv", |b| write_rates_csv(&output.report.device_rates, b))?;
    w.stage_with("edge_rates.csv", |b| write_edge_rates_csv(&output.tally, b))?;
    let severity = &output.report.severity;
    for (tag, histogram) in [("phq9", &severity.phq9), ("gad7", &severity.gad7)] {
        if let Some(h) = histogram {
            w.stage_with(&format!("severity_{tag}.csv"), |b| write_band_csv(h, b))?;
            w.stage_with(&format!("scores_{tag}.csv"), |b| write_score_csv(h, b))?;
        }
    }
    w.commit()
}

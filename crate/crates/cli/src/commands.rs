use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use proxnet::analyze::{coverage_summary, device_scan_rates, max_gap_coverage, severity_histogram};
use proxnet::backbone::{extract_backbone, BackboneNetwork};
use proxnet::graphml::AttributedGraph;
use proxnet::ingest::{filter_to_participants, write_scan_log, FilterOptions, Roster};
use proxnet::layout::{fruchterman_reingold, render_figure_data, LayoutParams};
use proxnet::model::{BandTables, CoverageSemantics, Instrument, ParticipantId, RetentionRule, ScanEvent, StudyConfig};
use proxnet::pipeline::{
    load_roster, load_scan_log, load_surveys, phq9_bands, run_pipeline, write_artifacts, write_band_csv,
    write_edge_rates_csv, write_score_csv, ArtifactWriter, PipelineInputs,
};
use proxnet::proximity::{build_weighted_network, tally_scans, ScanTally, WeightedNetwork};
use proxnet::sim::{ground_truth_network, simulate_scans, Scenario};

use crate::{ConfigArgs, LayoutArgs, Overrides, Rule, ScanInputs, Semantics};

impl Overrides {
    fn apply(&self, config: &mut StudyConfig) {
        if let Some(alpha) = self.alpha {
            config.backbone_alpha = alpha;
        }
        if let Some(salt) = &self.salt {
            config.salt = salt.clone();
        }
        if let Some(secs) = self.scan_interval_secs {
            config.scan_interval_secs = secs;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<StudyConfig> {
        let mut config = StudyConfig::load(&self.config)?;
        self.overrides.apply(&mut config);
        config.validate()?;
        Ok(config)
    }
}

impl From<Rule> for RetentionRule {
    fn from(rule: Rule) -> Self {
        match rule {
            Rule::Or => RetentionRule::Or,
            Rule::And => RetentionRule::And,
        }
    }
}

impl From<Semantics> for CoverageSemantics {
    fn from(s: Semantics) -> Self {
        match s {
            Semantics::MeanInterval => CoverageSemantics::MeanInterval,
            Semantics::MaxGap => CoverageSemantics::MaxGap,
        }
    }
}

impl LayoutArgs {
    fn params(&self, seed: u64) -> LayoutParams {
        LayoutParams {
            seed,
            iterations: self.iterations,
            width: self.width,
            height: self.height,
        }
    }
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("output serializes");
    out.push(b'\n');
    out
}

/// Writes through a `.partial` file, or to stdout when `path` is `None`.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(path) => {
            let dir = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p,
                _ => Path::new("."),
            };
            let name = path
                .file_name()
                .with_context(|| format!("{} is not a file path", path.display()))?
                .to_string_lossy();
            let mut writer = ArtifactWriter::new(dir)?;
            writer.stage(&name, bytes)?;
            writer.commit()?;
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
        }
    }
    Ok(())
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| proxnet::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let value = serde_json::from_str(&text).map_err(proxnet::Error::from)?;
    Ok(value)
}

fn bands_for(surveys: Option<&Path>, config: Option<&Path>) -> Result<BTreeMap<ParticipantId, String>> {
    let Some(surveys) = surveys else {
        return Ok(BTreeMap::new());
    };
    let tables = match config {
        Some(path) => StudyConfig::load(path)?.bands,
        None => BandTables::defaults(),
    };
    let load = load_surveys(surveys)?;
    Ok(phq9_bands(&load.responses, &tables.table(Instrument::Phq9)))
}

struct Ingested {
    roster: Roster,
    events: Vec<ScanEvent>,
    tally: ScanTally,
}

fn ingest_and_tally(config: &StudyConfig, inputs: &ScanInputs) -> Result<Ingested> {
    let roster = load_roster(&inputs.roster)?;
    let (events, _) = load_scan_log(&inputs.scans, config)?;
    let filtered = filter_to_participants(
        &events,
        &roster,
        FilterOptions {
            retain_scan_instants: config.retain_scan_instants,
        },
    );
    let window = config.study_window();
    let tally = tally_scans(&filtered.events, &roster, window, window)?;
    Ok(Ingested {
        roster,
        events: filtered.events,
        tally,
    })
}

pub fn simulate(scenario: &Path, out: &Path) -> Result<()> {
    let scenario = Scenario::load(scenario)?;
    let (spec, schedule) = scenario.build()?;
    let events = simulate_scans(&spec, &schedule)?;
    let truth = ground_truth_network(&schedule, &spec.ids(), spec.window);
    let mut w = ArtifactWriter::new(out)?;
    let mut log = Vec::new();
    write_scan_log(&events, &mut log)?;
    w.stage("scans.jsonl", &log)?;
    let mut roster = Vec::new();
    spec.roster()?.write_csv(&mut roster)?;
    w.stage("roster.csv", &roster)?;
    w.stage("study.toml", spec.study_config().to_toml_string().as_bytes())?;
    w.stage("ground_truth.json", &to_json(&truth))?;
    w.commit()?;
    tracing::info!(
        events = events.len(),
        devices = spec.participants.len(),
        "simulated cohort"
    );
    Ok(())
}

pub fn ingest(config: &ConfigArgs, inputs: &ScanInputs, out: &Path) -> Result<()> {
    let config = config.resolve()?;
    let roster = load_roster(&inputs.roster)?;
    let (events, mut report) = load_scan_log(&inputs.scans, &config)?;
    let filtered = filter_to_participants(
        &events,
        &roster,
        FilterOptions {
            retain_scan_instants: config.retain_scan_instants,
        },
    );
    report.non_participant_detections = filtered.dropped_non_participant;
    report.unknown_scanner_events = filtered.dropped_unknown_scanner;
    let mut w = ArtifactWriter::new(out)?;
    let mut log = Vec::new();
    write_scan_log(&filtered.events, &mut log)?;
    w.stage("events.jsonl", &log)?;
    w.stage("ingest.json", &to_json(&report))?;
    w.commit()?;
    Ok(())
}

pub fn weights(config: &ConfigArgs, inputs: &ScanInputs, out: &Path, graphml: Option<&Path>) -> Result<()> {
    let config = config.resolve()?;
    let ingested = ingest_and_tally(&config, inputs)?;
    let network = build_weighted_network(&ingested.tally);
    emit(Some(out), &to_json(&network.to_json()))?;
    if let Some(path) = graphml {
        let xml = AttributedGraph::from_network(&network, &BTreeMap::new()).to_graphml();
        emit(Some(path), xml.as_bytes())?;
    }
    Ok(())
}

pub fn backbone(
    weights: &Path,
    alpha: Option<f64>,
    rule: Option<Rule>,
    config: Option<&Path>,
    out: &Path,
    graphml: Option<&Path>,
) -> Result<()> {
    let config = config.map(StudyConfig::load).transpose()?;
    let alpha = alpha.or(config.as_ref().map(|c| c.backbone_alpha)).unwrap_or(0.05);
    let rule = rule
        .map(RetentionRule::from)
        .or(config.as_ref().map(|c| c.retention_rule))
        .unwrap_or_default();
    let network = WeightedNetwork::from_json(read_json(weights)?)?;
    let backbone = extract_backbone(&network, alpha, rule)?;
    emit(Some(out), &to_json(&backbone.to_json()))?;
    if let Some(path) = graphml {
        let xml = AttributedGraph::from_backbone(&backbone, &BTreeMap::new()).to_graphml();
        emit(Some(path), xml.as_bytes())?;
    }
    Ok(())
}

pub fn coverage(
    config: &ConfigArgs,
    inputs: &ScanInputs,
    semantics: Option<Semantics>,
    thresholds_min: Option<Vec<u64>>,
    out: Option<&Path>,
    edges_csv: Option<&Path>,
) -> Result<()> {
    let mut config = config.resolve()?;
    if let Some(s) = semantics {
        config.coverage_semantics = s.into();
    }
    if let Some(t) = thresholds_min {
        config.coverage_thresholds_min = t;
    }
    config.validate()?;
    let ingested = ingest_and_tally(&config, inputs)?;
    let thresholds = config.coverage_thresholds();
    let coverage = match config.coverage_semantics {
        CoverageSemantics::MeanInterval => coverage_summary(&ingested.tally, &thresholds)?,
        CoverageSemantics::MaxGap => {
            max_gap_coverage(&ingested.events, &ingested.roster, config.study_window(), &thresholds)?
        }
    };
    let rates = device_scan_rates(&ingested.tally, &ingested.roster, config.scan_interval())?;
    let body = serde_json::json!({ "device_rates": rates, "coverage": coverage });
    emit(out, &to_json(&body))?;
    if let Some(path) = edges_csv {
        let mut buf = Vec::new();
        write_edge_rates_csv(&ingested.tally, &mut buf)?;
        emit(Some(path), &buf)?;
    }
    Ok(())
}

pub fn survey(surveys: &Path, config: Option<&Path>, out: Option<&Path>, csv_dir: Option<&Path>) -> Result<()> {
    let tables = match config {
        Some(path) => StudyConfig::load(path)?.bands,
        None => BandTables::defaults(),
    };
    let load = load_surveys(surveys)?;
    for r in &load.rejected {
        tracing::warn!(line = r.line, reason = %r.reason, "rejected survey row");
    }
    let phq9 = severity_histogram(&load.responses, &tables.table(Instrument::Phq9));
    let gad7 = severity_histogram(&load.responses, &tables.table(Instrument::Gad7));
    let body = serde_json::json!({ "phq9": phq9, "gad7": gad7, "rejected": load.rejected });
    emit(out, &to_json(&body))?;
    if let Some(dir) = csv_dir {
        let mut w = ArtifactWriter::new(dir)?;
        for (tag, h) in [("phq9", &phq9), ("gad7", &gad7)] {
            w.stage_with(&format!("severity_{tag}.csv"), |b| write_band_csv(h, b))?;
            w.stage_with(&format!("scores_{tag}.csv"), |b| write_score_csv(h, b))?;
        }
        w.commit()?;
    }
    Ok(())
}

pub fn layout(
    backbone: &Path,
    seed: u64,
    args: &LayoutArgs,
    surveys: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let backbone = BackboneNetwork::from_json(read_json(backbone)?)?;
    let layout = fruchterman_reingold(&backbone, args.params(seed))?;
    let bands = bands_for(surveys, config)?;
    let figure = render_figure_data(&backbone, &layout, &bands)?;
    let mut w = ArtifactWriter::new(out)?;
    w.stage("layout.json", &to_json(&layout))?;
    w.stage_with("layout_nodes.csv", |b| figure.write_node_csv(b))?;
    w.stage_with("layout_edges.csv", |b| figure.write_edge_csv(b))?;
    w.commit()?;
    Ok(())
}

fn pipeline_inputs(inputs: &ScanInputs, surveys: Option<PathBuf>) -> PipelineInputs {
    PipelineInputs {
        scan_log: inputs.scans.clone(),
        roster: inputs.roster.clone(),
        surveys,
    }
}

pub fn report(
    config: &ConfigArgs,
    inputs: &ScanInputs,
    surveys: Option<PathBuf>,
    layout: &LayoutArgs,
    out: Option<&Path>,
) -> Result<()> {
    let config = config.resolve()?;
    let output = run_pipeline(&config, &pipeline_inputs(inputs, surveys), layout.params(config.seed))?;
    emit(out, output.report.to_json_pretty().as_bytes())
}

pub fn pipeline(
    config: &ConfigArgs,
    inputs: &ScanInputs,
    surveys: Option<PathBuf>,
    layout: &LayoutArgs,
    out: &Path,
) -> Result<()> {
    let config = config.resolve()?;
    let output = run_pipeline(&config, &pipeline_inputs(inputs, surveys), layout.params(config.seed))?;
    let written = write_artifacts(&output, out)?;
    tracing::info!(files = written.len(), dir = %out.display(), "wrote artifacts");
    Ok(())
}

pub fn export_graphml(
    weights: Option<&Path>,
    backbone: Option<&Path>,
    surveys: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let bands = bands_for(surveys, config)?;
    let graph = match (weights, backbone) {
        (Some(path), _) => AttributedGraph::from_network(&WeightedNetwork::from_json(read_json(path)?)?, &bands),
        (None, Some(path)) => AttributedGraph::from_backbone(&BackboneNetwork::from_json(read_json(path)?)?, &bands),
        (None, None) => unreachable!("clap requires one graph input"),
    };
    emit(Some(out), graph.to_graphml().as_bytes())
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeDelta, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use proxnet::analyze::{coverage_summary, device_scan_rates, max_gap_coverage, severity_histogram, CoverageSummary};
use proxnet::backbone::{extract_backbone, BackboneNetwork};
use proxnet::graphml::AttributedGraph;
use proxnet::ingest::{parse_scan_log, pseudonymize_address, write_scan_log, Roster};
use proxnet::layout::{fruchterman_reingold, layout_graph, LayoutParams};
use proxnet::model::{
    read_survey_csv, DeviceAddress, Instrument, NodePair, OsKind, ParticipantId, RetentionRule, ScanEvent,
    SeverityBandTable, StudyConfig, TimeWindow,
};
use proxnet::proximity::{build_weighted_network, edge_weight, tally_scans, ScanTally, WeightedNetwork};
use proxnet::sim::{
    generate_office_schedule, ground_truth_network, simulate_scans, synthetic_address, CohortMember, CohortSpec,
    ContactSchedule, OsProfile, Workday, ANDROID_COMPLIANCE, IOS_COMPLIANCE,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn pid(s: &str) -> ParticipantId {
    ParticipantId::new(s).unwrap()
}

fn at(day: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2016, 3, 28, 0, 0, 0).unwrap() + TimeDelta::days(i64::from(day))
}

fn days(n: u32) -> TimeWindow {
    TimeWindow::new(at(0), at(n)).unwrap()
}

fn member(id: &str, os: OsKind, compliance: f64) -> CohortMember {
    CohortMember {
        id: pid(id),
        profile: OsProfile::new(os, compliance).unwrap(),
        address: synthetic_address(&pid(id)),
    }
}

/// Cohort of office groups, each listed as `(ios, android)` member counts.
fn cohort(
    groups: &[(usize, usize)],
    window: TimeWindow,
    seed: u64,
    compliance: Option<f64>,
) -> (CohortSpec, Vec<Vec<ParticipantId>>) {
    let mut participants = Vec::new();
    let mut ids = Vec::new();
    for (g, &(ios, android)) in groups.iter().enumerate() {
        let mut group = Vec::new();
        for n in 0..ios + android {
            let os = if n < ios { OsKind::Ios } else { OsKind::Android };
            let c = compliance.unwrap_or(match os {
                OsKind::Ios => IOS_COMPLIANCE,
                OsKind::Android => ANDROID_COMPLIANCE,
            });
            let id = format!("g{g}-{n:02}");
            participants.push(member(&id, os, c));
            group.push(pid(&id));
        }
        ids.push(group);
    }
    let spec = CohortSpec {
        participants,
        window,
        scan_interval: TimeDelta::minutes(5),
        detection_probability: 1.0,
        rng_seed: seed,
        phase_offsets: false,
        salt: "acceptance".into(),
    };
    (spec, ids)
}

struct SimRun {
    spec: CohortSpec,
    roster: Roster,
    events: Vec<ScanEvent>,
    tally: ScanTally,
    schedule: ContactSchedule,
}

fn run_cohort(spec: CohortSpec, groups: &[Vec<ParticipantId>], overlap: f64) -> SimRun {
    let fractions = vec![overlap; groups.len()];
    let schedule = generate_office_schedule(&spec, groups, Workday::default(), &fractions).unwrap();
    let events = simulate_scans(&spec, &schedule).unwrap();
    let roster = spec.roster().unwrap();
    let tally = tally_scans(&events, &roster, spec.window, spec.window).unwrap();
    SimRun {
        spec,
        roster,
        events,
        tally,
        schedule,
    }
}

/// The 56 iOS / 7 Android cohort over four weeks, in seven offices of nine.
fn study_cohort(seed: u64) -> SimRun {
    let (spec, groups) = cohort(&[(8, 1); 7], days(28), seed, None);
    run_cohort(spec, &groups, 0.3)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let window = days(28);
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for _ in 0..10_000 {
        let n = rng.gen_range(2..=6);
        let ids: Vec<ParticipantId> = (0..n).map(|i| pid(&format!("p{i}"))).collect();
        let scans: BTreeMap<ParticipantId, u64> = ids
            .iter()
            .map(|id| (id.clone(), if rng.gen_bool(0.1) { 0 } else { rng.gen_range(0..=9000) }))
            .collect();
        let mut detections = BTreeMap::new();
        for i in &ids {
            for j in &ids {
                if i != j {
                    detections.insert((i.clone(), j.clone()), rng.gen_range(0..=scans[i]));
                }
            }
        }
        let tally = ScanTally::from_counts(window, scans.clone(), detections.clone()).unwrap();
        let network = build_weighted_network(&tally);
        for (a, i) in ids.iter().enumerate() {
            for j in &ids[a + 1..] {
                let (n_i, n_j) = (scans[i], scans[j]);
                let n_ij = detections[&(i.clone(), j.clone())];
                let n_ji = detections[&(j.clone(), i.clone())];
                let direct = if n_i + n_j == 0 {
                    0.0
                } else {
                    (n_ij as f64 + n_ji as f64) / (n_i as f64 + n_j as f64)
                };
                let r_ij = edge_weight(&tally, i, j).unwrap();
                let r_ji = edge_weight(&tally, j, i).unwrap();
                let r_net = network.weight(&NodePair::new(i.clone(), j.clone()).unwrap());
                let err = (r_ij - direct).abs().max((r_net - direct).abs());
                worst = worst.max(err);
                checked += 1;
                if !(0.0..=1.0).contains(&r_ij) || r_ij != r_ji || err > 1e-12 {
                    failures.push(format!("{i}-{j}: R={r_ij} R'={r_ji} direct={direct}"));
                }
            }
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{checked} pairs, max |R - direct| = {worst:e}, {} violations",
            failures.len()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut roster = Roster::new();
    for n in 0..54 {
        let id = pid(&format!("p{n:02}"));
        let address = synthetic_address(&id);
        let os = if n % 8 == 0 { OsKind::Android } else { OsKind::Ios };
        roster.insert(id, pseudonymize_address(&address, b"salt"), os).unwrap();
    }
    let window = days(28);
    let tally = tally_scans(&[], &roster, window, window).unwrap();
    let network = build_weighted_network(&tally);
    let enumerated = {
        let ids: Vec<_> = roster.participants().collect();
        (0..ids.len())
            .flat_map(|a| (a + 1..ids.len()).map(move |b| (a, b)))
            .count()
    };
    let coverage = coverage_summary(&tally, &[TimeDelta::minutes(10)]).unwrap();
    let counts = [
        network.candidate_edge_count(),
        tally.candidate_pairs().len(),
        coverage.candidate_edges,
        enumerated,
    ];
    Outcome::new(
        counts.iter().all(|&c| c == 1431),
        format!(
            "candidate edges: network {}, tally {}, coverage {}, enumeration {}",
            counts[0], counts[1], counts[2], counts[3]
        ),
    )
}

/// Significance by numerical integration of the disparity null density
/// `(k-1)(1-x)^(k-2)` over `[0, p]`, using composite Simpson.
fn integrated_alpha(p: f64, k: usize) -> f64 {
    if k <= 1 {
        return 1.0;
    }
    let density = |x: f64| (k - 1) as f64 * (1.0 - x).powi(k as i32 - 2);
    let steps = 2000;
    let h = p / steps as f64;
    let mut sum = density(0.0) + density(p);
    for s in 1..steps {
        sum += density(s as f64 * h) * if s % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - sum * h / 3.0
}

fn random_network(rng: &mut ChaCha8Rng, n: usize, density: f64, heavy_tail: bool) -> WeightedNetwork {
    let ids: Vec<ParticipantId> = (0..n).map(|i| pid(&format!("n{i:02}"))).collect();
    let mut edges = BTreeMap::new();
    for (a, i) in ids.iter().enumerate() {
        for j in &ids[a + 1..] {
            if rng.gen_bool(density) {
                let u: f64 = rng.gen_range(1e-6..=1.0);
                let w = if heavy_tail { u.powi(4) } else { u };
                edges.insert(NodePair::new(i.clone(), j.clone()).unwrap(), w);
            }
        }
    }
    WeightedNetwork::new(ids.into_iter().collect(), edges, days(28)).unwrap()
}

/// Retained edges by the textbook definition, given an alpha oracle.
fn oracle_backbone(
    net: &WeightedNetwork,
    threshold: f64,
    rule: RetentionRule,
) -> (BTreeMap<NodePair, (f64, f64)>, BTreeSet<NodePair>) {
    let mut strength: BTreeMap<&ParticipantId, f64> = BTreeMap::new();
    let mut degree: BTreeMap<&ParticipantId, usize> = BTreeMap::new();
    for (pair, &w) in net.edges() {
        for end in [pair.first(), pair.second()] {
            *strength.entry(end).or_default() += w;
            *degree.entry(end).or_default() += 1;
        }
    }
    let mut alphas = BTreeMap::new();
    let mut retained = BTreeSet::new();
    for (pair, &w) in net.edges() {
        let alpha = |end: &ParticipantId| integrated_alpha((w / strength[end]).min(1.0), degree[end]);
        let (a_i, a_j) = (alpha(pair.first()), alpha(pair.second()));
        let keep = match rule {
            RetentionRule::Or => a_i < threshold || a_j < threshold,
            RetentionRule::And => a_i < threshold && a_j < threshold,
        };
        if keep {
            retained.insert(pair.clone());
        }
        alphas.insert(pair.clone(), (a_i, a_j));
    }
    (alphas, retained)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut mismatched_sets = 0usize;
    let mut edges_seen = 0usize;
    let mut retained_seen = 0usize;
    for _ in 0..200 {
        let n = rng.gen_range(2..=7);
        let heavy = rng.gen_bool(0.5);
        let net = random_network(&mut rng, n, 0.7, heavy);
        for rule in [RetentionRule::Or, RetentionRule::And] {
            for threshold in [0.05, 0.2] {
                let backbone = extract_backbone(&net, threshold, rule).unwrap();
                let (alphas, expected) = oracle_backbone(&net, threshold, rule);
                for s in &backbone.significance {
                    let (a_i, a_j) = alphas[&s.pair()];
                    worst = worst.max((s.alpha_at_i - a_i).abs()).max((s.alpha_at_j - a_j).abs());
                }
                if backbone.edges() != expected {
                    mismatched_sets += 1;
                }
                edges_seen += backbone.significance.len();
                retained_seen += expected.len();
            }
        }
    }
    Outcome::new(
        worst <= 1e-9 && mismatched_sets == 0,
        format!(
            "200 graphs x 4 settings, {edges_seen} edge tests, {retained_seen} retained, max |alpha - oracle| = {worst:e}, {mismatched_sets} set mismatches"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let thresholds = [0.001, 0.01, 0.05, 0.1, 0.2, 0.5];
    let factors = [1e-3, 0.37, 13.0, 1e3];
    let mut scale_violations = 0usize;
    let mut monotonicity_violations = 0usize;
    let mut retained_total = 0usize;
    for _ in 0..100 {
        let net = random_network(&mut rng, 50, 0.2, true);
        for rule in [RetentionRule::Or, RetentionRule::And] {
            let mut previous: Option<BTreeSet<NodePair>> = None;
            for &t in &thresholds {
                let base = extract_backbone(&net, t, rule).unwrap().edges();
                for &c in &factors {
                    if extract_backbone(&net.scaled(c), t, rule).unwrap().edges() != base {
                        scale_violations += 1;
                    }
                }
                if let Some(prev) = &previous {
                    if !prev.is_subset(&base) {
                        monotonicity_violations += 1;
                    }
                }
                if t == 0.05 && rule == RetentionRule::Or {
                    retained_total += base.len();
                }
                previous = Some(base);
            }
        }
    }
    Outcome::new(
        scale_violations == 0 && monotonicity_violations == 0 && retained_total > 0,
        format!(
            "100 graphs of 50 nodes, {retained_total} edges retained at 0.05, {scale_violations} scale violations, {monotonicity_violations} monotonicity violations"
        ),
    )
}

fn criterion_5() -> Outcome {
    let run = study_cohort(5);
    let summary = device_scan_rates(&run.tally, &run.roster, run.spec.scan_interval).unwrap();
    let ios = summary.mean_rate_by_os[&OsKind::Ios];
    let android = summary.mean_rate_by_os[&OsKind::Android];
    let pooled = summary.mean_rate;
    let n_ios = summary.devices.iter().filter(|d| d.os == Some(OsKind::Ios)).count();
    let n_android = summary.devices.iter().filter(|d| d.os == Some(OsKind::Android)).count();
    let pass = n_ios == 56
        && n_android == 7
        && (ios - 0.29).abs() <= 0.02
        && (android - 0.55).abs() <= 0.02
        && (pooled - 0.32).abs() <= 0.02;
    Outcome::new(
        pass,
        format!("{n_ios} iOS mean {ios:.4}, {n_android} Android mean {android:.4}, pooled {pooled:.4}"),
    )
}

fn is_monotone(summary: &CoverageSummary) -> bool {
    summary.fractions.iter().all(|f| (0.0..=1.0).contains(&f.fraction))
        && summary.fractions.windows(2).all(|w| w[0].fraction <= w[1].fraction)
}

fn criterion_6() -> Outcome {
    let minutes = |m: &[f64]| -> Vec<TimeDelta> { m.iter().map(|&x| TimeDelta::seconds((x * 60.0) as i64)).collect() };
    let mut notes = Vec::new();
    let mut pass = true;

    // Full compliance: every edge covered at every threshold from 2.5 min.
    let (spec, groups) = cohort(&[(5, 1), (4, 2)], days(7), 61, Some(1.0));
    let full = run_cohort(spec, &groups, 0.3);
    let full_cov = coverage_summary(&full.tally, &minutes(&[2.5, 5.0, 10.0, 30.0, 60.0])).unwrap();
    let full_ok = full_cov.fractions.iter().all(|f| f.fraction == 1.0);
    pass &= full_ok;
    notes.push(format!("full compliance all covered: {full_ok}"));

    // Monotone in threshold on every simulated run, under both semantics.
    let sweep = minutes(&[1.0, 2.5, 5.0, 7.5, 10.0, 15.0, 20.0, 30.0, 45.0, 60.0, 120.0]);
    let study = study_cohort(6);
    let mut runs = vec![full, study];
    for seed in 0..3u64 {
        let c = 0.1 + 0.3 * seed as f64;
        let (spec, groups) = cohort(&[(4, 2), (3, 3)], days(7), 600 + seed, Some(c));
        runs.push(run_cohort(spec, &groups, 0.5));
    }
    let mut monotone = true;
    for run in &runs {
        monotone &= is_monotone(&coverage_summary(&run.tally, &sweep).unwrap());
        monotone &= is_monotone(&max_gap_coverage(&run.events, &run.roster, run.spec.window, &sweep).unwrap());
    }
    pass &= monotone;
    notes.push(format!("monotone on {} runs: {monotone}", runs.len()));

    // Hand-built boundary: 4032 combined scans over 40320 min is exactly 10 min.
    let window = days(28);
    let boundary = |n_i: u64, n_j: u64| {
        let scans = BTreeMap::from([(pid("a"), n_i), (pid("b"), n_j)]);
        let tally = ScanTally::from_counts(window, scans, BTreeMap::new()).unwrap();
        coverage_summary(&tally, &[TimeDelta::minutes(10)]).unwrap().fractions[0].fraction
    };
    let boundary_ok = boundary(2016, 2016) == 1.0 && boundary(2016, 2015) == 0.0;
    pass &= boundary_ok;
    notes.push(format!("10-min boundary inclusive: {boundary_ok}"));

    // Per-OS compliance profile: coverage at 30 min strictly above 10 min, both in (0, 1].
    let study = &runs[1];
    let thresholds = minutes(&[10.0, 30.0]);
    let mean = coverage_summary(&study.tally, &thresholds).unwrap();
    let (c10, c30) = (mean.fractions[0].fraction, mean.fractions[1].fraction);
    let profile_ok = c30 > c10 && c10 > 0.0 && c30 <= 1.0;
    pass &= profile_ok;
    let gap = max_gap_coverage(&study.events, &study.roster, study.spec.window, &thresholds).unwrap();
    notes.push(format!(
        "study profile mean-interval 10/30 min = {c10:.4}/{c30:.4} (max-gap {:.4}/{:.4}): {profile_ok}",
        gap.fractions[0].fraction, gap.fractions[1].fraction
    ));
    Outcome::new(pass, notes.join("; "))
}

fn criterion_7() -> Outcome {
    let mut worst_precision = f64::INFINITY;
    let mut worst_recall = f64::INFINITY;
    let mut per_seed = Vec::new();
    for seed in 1..=5u64 {
        let (spec, groups) = cohort(&[(9, 1), (9, 1)], days(28), 700 + seed, None);
        let run = run_cohort(spec, &groups, 0.3);
        let truth = ground_truth_network(&run.schedule, &run.spec.ids(), run.spec.window).positive_pairs();
        let network = build_weighted_network(&run.tally);
        let backbone = extract_backbone(&network, 0.05, RetentionRule::Or).unwrap();
        let retained = backbone.edges();
        let hits = retained.intersection(&truth).count();
        let precision = if retained.is_empty() {
            0.0
        } else {
            hits as f64 / retained.len() as f64
        };
        let recall = hits as f64 / truth.len() as f64;
        let weighted: BTreeSet<NodePair> = network.edges().keys().cloned().collect();
        let min_alpha = backbone
            .significance
            .iter()
            .map(|s| s.min_alpha())
            .fold(f64::INFINITY, f64::min);
        worst_precision = worst_precision.min(precision);
        worst_recall = worst_recall.min(recall);
        per_seed.push(format!(
            "seed {seed}: retained {}/{} truth, min alpha {min_alpha:.3}, weighted-network edges match truth: {}",
            retained.len(),
            truth.len(),
            weighted == truth
        ));
    }
    Outcome::new(
        worst_precision >= 0.9 && worst_recall >= 0.9,
        format!(
            "worst precision {worst_precision:.3}, worst recall {worst_recall:.3} ({})",
            per_seed.join("; ")
        ),
    )
}

/// Item values summing to `score`, filled greedily with 3s.
fn items_for(score: u32, count: usize) -> Vec<String> {
    let mut left = score;
    (0..count)
        .map(|_| {
            let v = left.min(3);
            left -= v;
            v.to_string()
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let mut csv = String::from("participant_id,instrument,completed_at,i1,i2,i3,i4,i5,i6,i7,i8,i9\n");
    let phq9: [(usize, u32); 4] = [(38, 2), (12, 7), (4, 12), (2, 22)];
    let gad7: [(usize, u32); 4] = [(44, 1), (10, 6), (1, 12), (1, 17)];
    let mut n = 0;
    for (instrument, multiset, items) in [("PHQ9", &phq9, 9), ("GAD7", &gad7, 7)] {
        n = 0;
        for &(count, score) in multiset.iter() {
            for _ in 0..count {
                let mut row = items_for(score, items);
                row.resize(9, String::new());
                csv.push_str(&format!(
                    "s{n:02},{instrument},2016-04-20T10:00:00Z,{}\n",
                    row.join(",")
                ));
                n += 1;
            }
        }
    }
    let load = read_survey_csv(csv.as_bytes()).unwrap();
    let counts = |instrument: Instrument| -> Vec<usize> {
        severity_histogram(&load.responses, &SeverityBandTable::default_for(instrument))
            .bands
            .iter()
            .map(|b| b.count)
            .collect()
    };
    let (p, g) = (counts(Instrument::Phq9), counts(Instrument::Gad7));
    Outcome::new(
        p == [38, 12, 4, 0, 2] && g == [44, 10, 1, 1] && load.rejected.is_empty() && n == 56,
        format!("PHQ-9 {p:?}, GAD-7 {g:?}, {} rows rejected", load.rejected.len()),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = random_network(&mut rng, 30, 0.15, true);
    let backbone = extract_backbone(&net, 0.3, RetentionRule::Or).unwrap();
    let bits = |b: &BackboneNetwork, seed: u64| -> Vec<(u64, u64)> {
        let params = LayoutParams {
            seed,
            ..LayoutParams::default()
        };
        fruchterman_reingold(b, params)
            .unwrap()
            .coordinates
            .values()
            .map(|&(x, y)| (x.to_bits(), y.to_bits()))
            .collect()
    };
    let deterministic = bits(&backbone, 17) == bits(&backbone, 17) && bits(&backbone, 17) != bits(&backbone, 18);

    let nodes = [pid("a"), pid("b")];
    let edge = [NodePair::new(pid("a"), pid("b")).unwrap()];
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let params = LayoutParams {
            seed,
            iterations: 200,
            ..LayoutParams::default()
        };
        let (layout, _) = layout_graph(&nodes, &edge, params).unwrap();
        let (a, b) = (layout.coordinates[&nodes[0]], layout.coordinates[&nodes[1]]);
        let d = (a.0 - b.0).hypot(a.1 - b.1);
        worst = worst.max((d / layout.ideal_distance - 1.0).abs());
    }
    Outcome::new(
        deterministic && worst <= 0.2,
        format!(
            "bit-identical rerun: {deterministic}; 2-node distance within {:.2}% of k over 20 seeds",
            worst * 100.0
        ),
    )
}

fn criterion_10() -> Outcome {
    // Simulated log: serialize, parse, serialize again.
    let (spec, groups) = cohort(&[(3, 1), (2, 2)], days(3), 10, None);
    let run = run_cohort(spec, &groups, 0.5);
    let config = run.spec.study_config();
    let mut first = Vec::new();
    write_scan_log(&run.events, &mut first).unwrap();
    let (parsed, _) = parse_scan_log(first.as_slice(), &config).unwrap();
    let mut second = Vec::new();
    write_scan_log(&parsed, &mut second).unwrap();
    let sim_ok = parsed == run.events && first == second;

    // Raw-MAC log with names and types: parse, serialize, parse as pre-hashed.
    let raw_config = StudyConfig::new(at(0), at(1), "round-trip");
    let mac = DeviceAddress::parse("a4:5e:60:d1:22:3f").unwrap();
    let raw = format!(
        "{{\"scanner\":\"p1\",\"mac\":\"{}\",\"ts\":\"2016-03-28T10:00:00Z\",\"name\":\"Pixel\",\"type\":\"phone\"}}\n\
         {{\"scanner\":\"p2\",\"mac\":null,\"ts\":\"2016-03-28T10:05:00Z\"}}\n",
        mac.canonical()
    );
    let (raw_events, _) = parse_scan_log(raw.as_bytes(), &raw_config).unwrap();
    let mut written = Vec::new();
    write_scan_log(&raw_events, &mut written).unwrap();
    let mut hashed_config = raw_config.clone();
    hashed_config.mac_prehashed = true;
    let (again, _) = parse_scan_log(written.as_slice(), &hashed_config).unwrap();
    let raw_ok = again == raw_events && raw_events[0].device_name.as_deref() == Some("Pixel");

    // GraphML: networks and backbones with attributes.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut graphs_ok = true;
    for n in [2usize, 5, 20, 40] {
        let net = random_network(&mut rng, n, 0.4, true);
        let bands: BTreeMap<ParticipantId, String> = net
            .nodes()
            .iter()
            .enumerate()
            .filter(|(k, _)| k % 3 != 0)
            .map(|(k, id)| (id.clone(), ["minimal", "mild", "severe"][k % 3].to_string()))
            .collect();
        let backbone = extract_backbone(&net, 0.2, RetentionRule::Or).unwrap();
        for graph in [
            AttributedGraph::from_network(&net, &bands),
            AttributedGraph::from_backbone(&backbone, &bands),
        ] {
            let back = AttributedGraph::from_graphml(&graph.to_graphml()).unwrap();
            graphs_ok &= back.canonical() == graph.canonical();
        }
    }
    Outcome::new(
        sim_ok && raw_ok && graphs_ok,
        format!(
            "simulated log ({} events): {sim_ok}; raw-MAC log: {raw_ok}; GraphML isomorphism: {graphs_ok}",
            run.events.len()
        ),
    )
}

/// Name, check and runtime budget.
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 edge-weight contract", criterion_1, Some(Duration::from_secs(5))),
        ("2 candidate-edge count", criterion_2, None),
        ("3 disparity-filter oracle", criterion_3, Some(Duration::from_secs(30))),
        ("4 backbone properties", criterion_4, None),
        ("5 simulator scan rates", criterion_5, Some(Duration::from_secs(60))),
        ("6 coverage semantics", criterion_6, None),
        (
            "7 end-to-end reconstruction",
            criterion_7,
            Some(Duration::from_secs(120)),
        ),
        ("8 survey banding", criterion_8, None),
        ("9 layout determinism and balance", criterion_9, None),
        ("10 round-trips", criterion_10, None),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed < l);
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = limit.map_or(String::new(), |l| format!(" of {}s", l.as_secs()));
        println!(
            "{} criterion {name}: {} [{:.2}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

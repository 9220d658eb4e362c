//! Disparity-filter backbone extraction.
//!
//! For a node `i` with strength `s_i` and degree `k_i`, the normalized weight
//! of an incident edge is `p_ij = w_ij / s_i`. Under the null hypothesis that
//! a node's strength is split uniformly at random among its `k_i` edges, the
//! probability of seeing a share at least `p_ij` is
//!
//! ```text
//! alpha_ij = 1 - (k - 1) * integral_0^p (1 - x)^(k - 2) dx = (1 - p)^(k - 1)
//! ```
//!
//! An edge is kept when its alpha falls strictly below the threshold at
//! either endpoint (or at both, with [`RetentionRule::And`]).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::model::RetentionRule;
use crate::model::{NodePair, ParticipantId};
use crate::proximity::WeightedNetwork;

/// Significance `(1 - p)^(k - 1)` of a normalized weight `p` at a node of
/// degree `k`. A degree-1 node gives 1.
pub fn edge_alpha(p: f64, k: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("normalized weight {p} outside [0, 1]")));
    }
    if k < 1 {
        return Err(Error::Domain("degree must be at least 1".into()));
    }
    Ok((1.0 - p).powi(k as i32 - 1))
}

/// Filter statistics of one positive-weight edge. The `_i` fields refer to
/// `pair.first()`, the `_j` fields to `pair.second()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSignificance {
    pub i: ParticipantId,
    pub j: ParticipantId,
    pub weight: f64,
    pub p_at_i: f64,
    pub p_at_j: f64,
    pub alpha_at_i: f64,
    pub alpha_at_j: f64,
    pub retained: bool,
}

impl EdgeSignificance {
    pub fn min_alpha(&self) -> f64 {
        self.alpha_at_i.min(self.alpha_at_j)
    }

    pub fn pair(&self) -> NodePair {
        NodePair::new(self.i.clone(), self.j.clone()).expect("distinct endpoints")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneNetwork {
    pub nodes: BTreeSet<ParticipantId>,
    pub alpha_threshold: f64,
    pub rule: RetentionRule,
    /// One entry per positive-weight edge of the source network.
    pub significance: Vec<EdgeSignificance>,
}

impl BackboneNetwork {
    /// Retained edges.
    pub fn edges(&self) -> BTreeSet<NodePair> {
        self.significance
            .iter()
            .filter(|s| s.retained)
            .map(EdgeSignificance::pair)
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.significance.iter().filter(|s| s.retained).count()
    }

    pub fn significance_of(&self, pair: &NodePair) -> Option<&EdgeSignificance> {
        self.significance
            .iter()
            .find(|s| &s.i == pair.first() && &s.j == pair.second())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("backbone serializes")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let backbone: BackboneNetwork = serde_json::from_value(value)?;
        for s in &backbone.significance {
            if !backbone.nodes.contains(&s.i) || !backbone.nodes.contains(&s.j) {
                return Err(Error::Validation(format!(
                    "backbone edge {{{}, {}}} references an unknown node",
                    s.i, s.j
                )));
            }
        }
        Ok(backbone)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct NodeStats {
    strength: f64,
    degree: usize,
}

fn node_stats(network: &WeightedNetwork) -> BTreeMap<&ParticipantId, NodeStats> {
    let mut stats: BTreeMap<&ParticipantId, NodeStats> = BTreeMap::new();
    for (pair, &w) in network.edges() {
        for end in [pair.first(), pair.second()] {
            let s = stats.entry(end).or_default();
            s.strength += w;
            s.degree += 1;
        }
    }
    stats
}

pub fn extract_backbone(
    network: &WeightedNetwork,
    alpha_threshold: f64,
    rule: RetentionRule,
) -> Result<BackboneNetwork> {
    if !(alpha_threshold > 0.0 && alpha_threshold < 1.0) {
        return Err(Error::Domain(format!(
            "alpha threshold {alpha_threshold} must lie in (0, 1)"
        )));
    }
    let stats = node_stats(network);
    let mut significance = Vec::with_capacity(network.edges().len());
    let mut isolated_dyads = 0usize;
    for (pair, &w) in network.edges() {
        let at_i = stats[pair.first()];
        let at_j = stats[pair.second()];
        // w <= strength always, but rounding in the strength sum can nudge p past 1
        let p_at_i = (w / at_i.strength).min(1.0);
        let p_at_j = (w / at_j.strength).min(1.0);
        let alpha_at_i = edge_alpha(p_at_i, at_i.degree)?;
        let alpha_at_j = edge_alpha(p_at_j, at_j.degree)?;
        let retained = match rule {
            RetentionRule::Or => alpha_at_i < alpha_threshold || alpha_at_j < alpha_threshold,
            RetentionRule::And => alpha_at_i < alpha_threshold && alpha_at_j < alpha_threshold,
        };
        if at_i.degree == 1 && at_j.degree == 1 {
            isolated_dyads += 1;
        }
        significance.push(EdgeSignificance {
            i: pair.first().clone(),
            j: pair.second().clone(),
            weight: w,
            p_at_i,
            p_at_j,
            alpha_at_i,
            alpha_at_j,
            retained,
        });
    }
    if isolated_dyads > 0 {
        tracing::warn!(
            isolated_dyads,
            "isolated dyads cannot pass the disparity filter and were dropped"
        );
    }
    Ok(BackboneNetwork {
        nodes: network.nodes().clone(),
        alpha_threshold,
        rule,
        significance,
    })
}

/// Backbones at several thresholds, in the order given.
pub fn backbone_sweep(
    network: &WeightedNetwork,
    thresholds: &[f64],
    rule: RetentionRule,
) -> Result<Vec<BackboneNetwork>> {
    thresholds.iter().map(|&a| extract_backbone(network, a, rule)).collect()
}

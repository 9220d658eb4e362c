//! GraphML export and import for weighted networks and backbones.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::backbone::{BackboneNetwork, RetentionRule};
use crate::error::{Error, Result};
use crate::model::ParticipantId;
use crate::proximity::WeightedNetwork;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphNode {
    pub band: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub source: String,
    pub target: String,
    pub weight: Option<f64>,
    /// Significance deciding retention under the backbone's rule.
    pub alpha: Option<f64>,
    pub retained: Option<bool>,
}

/// Undirected graph with the node and edge attributes carried in GraphML.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributedGraph {
    pub nodes: BTreeMap<String, GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl AttributedGraph {
    pub fn from_network(network: &WeightedNetwork, bands: &BTreeMap<ParticipantId, String>) -> Self {
        Self {
            nodes: nodes_with_bands(network.nodes().iter(), bands),
            edges: network
                .edges()
                .iter()
                .map(|(p, &w)| GraphEdge {
                    source: p.first().to_string(),
                    target: p.second().to_string(),
                    weight: Some(w),
                    alpha: None,
                    retained: None,
                })
                .collect(),
        }
    }

    /// All positive-weight edges of the source network, flagged by retention.
    pub fn from_backbone(backbone: &BackboneNetwork, bands: &BTreeMap<ParticipantId, String>) -> Self {
        Self {
            nodes: nodes_with_bands(backbone.nodes.iter(), bands),
            edges: backbone
                .significance
                .iter()
                .map(|s| GraphEdge {
                    source: s.i.to_string(),
                    target: s.j.to_string(),
                    weight: Some(s.weight),
                    alpha: Some(match backbone.rule {
                        RetentionRule::Or => s.alpha_at_i.min(s.alpha_at_j),
                        RetentionRule::And => s.alpha_at_i.max(s.alpha_at_j),
                    }),
                    retained: Some(s.retained),
                })
                .collect(),
        }
    }

    /// Canonical form for comparison: edges ordered by sorted endpoints.
    pub fn canonical(&self) -> Self {
        let mut edges: Vec<GraphEdge> = self
            .edges
            .iter()
            .map(|e| {
                let mut e = e.clone();
                if e.target < e.source {
                    std::mem::swap(&mut e.source, &mut e.target);
                }
                e
            })
            .collect();
        edges.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
        Self {
            nodes: self.nodes.clone(),
            edges,
        }
    }

    pub fn to_graphml(&self) -> String {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
        out.push_str("  <key id=\"band\" for=\"node\" attr.name=\"severity_band\" attr.type=\"string\"/>\n");
        out.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
        out.push_str("  <key id=\"alpha\" for=\"edge\" attr.name=\"alpha\" attr.type=\"double\"/>\n");
        out.push_str("  <key id=\"retained\" for=\"edge\" attr.name=\"retained\" attr.type=\"boolean\"/>\n");
        out.push_str("  <graph id=\"G\" edgedefault=\"undirected\">\n");
        for (id, node) in &self.nodes {
            match &node.band {
                Some(band) => {
                    let _ = writeln!(
                        out,
                        "    <node id=\"{}\"><data key=\"band\">{}</data></node>",
                        escape(id.as_str()),
                        escape(band.as_str())
                    );
                }
                None => {
                    let _ = writeln!(out, "    <node id=\"{}\"/>", escape(id.as_str()));
                }
            }
        }
        for e in &self.edges {
            let _ = write!(
                out,
                "    <edge source=\"{}\" target=\"{}\">",
                escape(e.source.as_str()),
                escape(e.target.as_str())
            );
            if let Some(w) = e.weight {
                let _ = write!(out, "<data key=\"weight\">{w}</data>");
            }
            if let Some(a) = e.alpha {
                let _ = write!(out, "<data key=\"alpha\">{a}</data>");
            }
            if let Some(r) = e.retained {
                let _ = write!(out, "<data key=\"retained\">{r}</data>");
            }
            out.push_str("</edge>\n");
        }
        out.push_str("  </graph>\n</graphml>\n");
        out
    }

    /// Parses GraphML written by [`AttributedGraph::to_graphml`] or any file
    /// using the same attribute names.
    pub fn from_graphml(text: &str) -> Result<Self> {
        let mut reader = Reader::from_str(text);
        reader.config_mut().trim_text(true);
        let mut keys: BTreeMap<String, String> = BTreeMap::new();
        let mut graph = AttributedGraph::default();
        let mut current_node: Option<String> = None;
        let mut current_edge: Option<GraphEdge> = None;
        let mut current_key: Option<String> = None;

        loop {
            let event = reader.read_event().map_err(|e| Error::GraphMl(e.to_string()))?;
            match event {
                Event::Start(ref tag) | Event::Empty(ref tag) => {
                    let empty = matches!(event, Event::Empty(_));
                    let attrs = attributes(tag)?;
                    match tag.local_name().as_ref() {
                        b"key" => {
                            let id = required(&attrs, "id")?;
                            let name = attrs.get("attr.name").cloned().unwrap_or_else(|| id.clone());
                            keys.insert(id, name);
                        }
                        b"node" => {
                            let id = required(&attrs, "id")?;
                            graph.nodes.insert(id.clone(), GraphNode::default());
                            if !empty {
                                current_node = Some(id);
                            }
                        }
                        b"edge" => {
                            let edge = GraphEdge {
                                source: required(&attrs, "source")?,
                                target: required(&attrs, "target")?,
                                weight: None,
                                alpha: None,
                                retained: None,
                            };
                            if empty {
                                graph.edges.push(edge);
                            } else {
                                current_edge = Some(edge);
                            }
                        }
                        b"data" if !empty => {
                            let key = required(&attrs, "key")?;
                            current_key = Some(keys.get(&key).cloned().unwrap_or(key));
                        }
                        _ => {}
                    }
                }
                Event::Text(text) => {
                    let Some(key) = current_key.as_deref() else {
                        continue;
                    };
                    let value = text.unescape().map_err(|e| Error::GraphMl(e.to_string()))?.into_owned();
                    if let Some(edge) = current_edge.as_mut() {
                        match key {
                            "weight" => edge.weight = Some(parse_f64(&value)?),
                            "alpha" => edge.alpha = Some(parse_f64(&value)?),
                            "retained" => {
                                edge.retained = Some(value.parse::<bool>().map_err(|_| {
                                    Error::GraphMl(format!("retained value {value:?} is not a boolean"))
                                })?)
                            }
                            _ => {}
                        }
                    } else if let Some(node) = current_node.as_ref() {
                        if key == "severity_band" {
                            graph.nodes.get_mut(node).expect("node inserted").band = Some(value);
                        }
                    }
                }
                Event::End(tag) => match tag.local_name().as_ref() {
                    b"node" => current_node = None,
                    b"edge" => {
                        if let Some(edge) = current_edge.take() {
                            graph.edges.push(edge);
                        }
                    }
                    b"data" => current_key = None,
                    _ => {}
                },
                Event::Eof => break,
                _ => {}
            }
        }
        for e in &graph.edges {
            for end in [&e.source, &e.target] {
                if !graph.nodes.contains_key(end) {
                    return Err(Error::GraphMl(format!("edge endpoint {end:?} is not a declared node")));
                }
            }
        }
        Ok(graph)
    }
}

fn nodes_with_bands<'a>(
    ids: impl Iterator<Item = &'a ParticipantId>,
    bands: &BTreeMap<ParticipantId, String>,
) -> BTreeMap<String, GraphNode> {
    ids.map(|id| {
        (
            id.to_string(),
            GraphNode {
                band: bands.get(id).cloned(),
            },
        )
    })
    .collect()
}

fn attributes(tag: &BytesStart<'_>) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for attr in tag.attributes() {
        let attr = attr.map_err(|e| Error::GraphMl(e.to_string()))?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr
            .unescape_value()
            .map_err(|e| Error::GraphMl(e.to_string()))?
            .into_owned();
        out.insert(key, value);
    }
    Ok(out)
}

fn required(attrs: &BTreeMap<String, String>, name: &str) -> Result<String> {
    attrs
        .get(name)
        .cloned()
        .ok_or_else(|| Error::GraphMl(format!("missing attribute {name:?}")))
}

fn parse_f64(text: &str) -> Result<f64> {
    text.trim()
        .parse()
        .map_err(|_| Error::GraphMl(format!("{text:?} is not a number")))
}

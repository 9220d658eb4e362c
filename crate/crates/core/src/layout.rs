//! Deterministic Fruchterman-Reingold layout and plot-ready figure tables.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::BackboneNetwork;
use crate::error::{Error, Result};
use crate::model::{NodePair, ParticipantId};

/// Ideal-distance constant `C` in `k = C * sqrt(area / |V|)`.
pub const IDEAL_DISTANCE_CONSTANT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutParams {
    pub seed: u64,
    pub iterations: usize,
    pub width: f64,
    pub height: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            seed: 0,
            iterations: 500,
            width: 1000.0,
            height: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutResult {
    pub coordinates: BTreeMap<ParticipantId, (f64, f64)>,
    pub width: f64,
    pub height: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Ideal pairwise distance used by the forces.
    pub ideal_distance: f64,
}

/// Per-iteration record of the displacement cap and the largest step taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationTrace {
    pub temperature: f64,
    pub max_displacement: f64,
    /// Every coordinate lay inside the box after this iteration.
    pub contained: bool,
}

pub fn fruchterman_reingold(graph: &BackboneNetwork, params: LayoutParams) -> Result<LayoutResult> {
    let nodes: Vec<ParticipantId> = graph.nodes.iter().cloned().collect();
    let edges: Vec<NodePair> = graph.edges().into_iter().collect();
    layout_graph(&nodes, &edges, params).map(|(layout, _)| layout)
}

/// Layout of an arbitrary node/edge list, returning the iteration trace.
pub fn layout_graph(
    nodes: &[ParticipantId],
    edges: &[NodePair],
    params: LayoutParams,
) -> Result<(LayoutResult, Vec<IterationTrace>)> {
    if nodes.is_empty() {
        return Err(Error::Validation("cannot lay out an empty graph".into()));
    }
    if params.iterations < 1 {
        return Err(Error::Validation("layout needs at least one iteration".into()));
    }
    let (w, h) = (params.width, params.height);
    if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
        return Err(Error::Validation(format!("layout box {w}x{h} must be positive")));
    }
    let index: BTreeMap<&ParticipantId, usize> = nodes.iter().enumerate().map(|(n, id)| (id, n)).collect();
    if index.len() != nodes.len() {
        return Err(Error::Validation("duplicate node in layout input".into()));
    }
    let edge_idx: Vec<(usize, usize)> = edges
        .iter()
        .map(|p| match (index.get(p.first()), index.get(p.second())) {
            (Some(&a), Some(&b)) => Ok((a, b)),
            _ => Err(Error::Validation(format!(
                "edge {p} references a node outside the graph"
            ))),
        })
        .collect::<Result<_>>()?;

    let n = nodes.len();
    let k = IDEAL_DISTANCE_CONSTANT * (w * h / n as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut pos: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.gen_range(0.0..=w), rng.gen_range(0.0..=h)])
        .collect();
    let t0 = w.min(h) / 10.0;
    let mut trace = Vec::with_capacity(params.iterations);

    for iter in 0..params.iterations {
        let temperature = t0 * (1.0 - iter as f64 / params.iterations as f64);
        let mut disp = vec![[0.0f64; 2]; n];
        for u in 0..n {
            for v in u + 1..n {
                let (dir, d) = direction(pos[u], pos[v], u, v, k);
                let f = k * k / d;
                disp[u][0] += dir[0] * f;
                disp[u][1] += dir[1] * f;
                disp[v][0] -= dir[0] * f;
                disp[v][1] -= dir[1] * f;
            }
        }
        for &(u, v) in &edge_idx {
            let (dir, d) = direction(pos[u], pos[v], u, v, k);
            let f = d * d / k;
            disp[u][0] -= dir[0] * f;
            disp[u][1] -= dir[1] * f;
            disp[v][0] += dir[0] * f;
            disp[v][1] += dir[1] * f;
        }
        let mut max_displacement = 0.0f64;
        for (p, dv) in pos.iter_mut().zip(&disp) {
            let len = dv[0].hypot(dv[1]);
            if len == 0.0 {
                continue;
            }
            let step = len.min(temperature);
            let old = *p;
            p[0] = (p[0] + dv[0] / len * step).clamp(0.0, w);
            p[1] = (p[1] + dv[1] / len * step).clamp(0.0, h);
            max_displacement = max_displacement.max((p[0] - old[0]).hypot(p[1] - old[1]));
        }
        let contained = pos
            .iter()
            .all(|p| (0.0..=w).contains(&p[0]) && (0.0..=h).contains(&p[1]));
        trace.push(IterationTrace {
            temperature,
            max_displacement,
            contained,
        });
    }

    let layout = LayoutResult {
        coordinates: nodes
            .iter()
            .cloned()
            .zip(pos.into_iter().map(|p| (p[0], p[1])))
            .collect(),
        width: w,
        height: h,
        iterations: params.iterations,
        seed: params.seed,
        ideal_distance: k,
    };
    Ok((layout, trace))
}

/// Unit vector from `b` to `a` and the distance. Coincident nodes are split
/// along a fixed index-dependent direction.
fn direction(a: [f64; 2], b: [f64; 2], ia: usize, ib: usize, k: f64) -> ([f64; 2], f64) {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let d = dx.hypot(dy);
    if d > 1e-9 * k {
        ([dx / d, dy / d], d)
    } else {
        let angle = (ia * 31 + ib * 17) as f64;
        ([angle.cos(), angle.sin()], 1e-9 * k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub id: ParticipantId,
    pub x: f64,
    pub y: f64,
    pub band: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub i: ParticipantId,
    pub j: ParticipantId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureData {
    pub nodes: Vec<NodeRow>,
    pub edges: Vec<EdgeRow>,
}

/// Node and edge tables for plotting; nodes without a band get an empty label.
pub fn render_figure_data(
    graph: &BackboneNetwork,
    layout: &LayoutResult,
    bands: &BTreeMap<ParticipantId, String>,
) -> Result<FigureData> {
    let nodes = graph
        .nodes
        .iter()
        .map(|id| {
            let &(x, y) = layout
                .coordinates
                .get(id)
                .ok_or_else(|| Error::Validation(format!("node {id} has no layout coordinates")))?;
            Ok(NodeRow {
                id: id.clone(),
                x,
                y,
                band: bands.get(id).cloned(),
            })
        })
        .collect::<Result<_>>()?;
    let edges = graph
        .edges()
        .into_iter()
        .map(|p| EdgeRow {
            i: p.first().clone(),
            j: p.second().clone(),
        })
        .collect();
    Ok(FigureData { nodes, edges })
}

impl FigureData {
    pub fn write_node_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["id", "x", "y", "band"])?;
        for n in &self.nodes {
            csv.write_record([
                n.id.as_str(),
                &n.x.to_string(),
                &n.y.to_string(),
                n.band.as_deref().unwrap_or(""),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn write_edge_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["i", "j"])?;
        for e in &self.edges {
            csv.write_record([e.i.as_str(), e.j.as_str()])?;
        }
        csv.flush()?;
        Ok(())
    }
}

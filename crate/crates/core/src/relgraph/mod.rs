//! Attributed relation graphs of traffic primitives.
//!
//! Nodes group primitive instances of one kind that share a trigger; edges
//! point from a trigger to what it triggered and carry the number of child
//! instances.

mod build;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use build::{build_graph, infer_triggers, TriggerTolerance};

use crate::error::{Error, Result};
use crate::primitives::{extract_primitives, ExtractConfig, Kind, Origin};
use crate::speedmap::SpeedField;

/// Extraction, trigger inference and grouping in one step.
pub fn graph_from_field(field: &SpeedField, cfg: &ExtractConfig, pattern_id: &str) -> Result<RelationGraph> {
    let set = extract_primitives(field, cfg)?;
    let triggers = infer_triggers(&set, TriggerTolerance::default());
    build_graph(&set, &triggers, pattern_id)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationNode {
    pub id: u32,
    pub tau: Kind,
    /// Mean area of the grouped instances, km·min.
    pub s_abs: f64,
    /// Group share of the pattern's congested area, percent.
    pub s_prop: f64,
    /// Number of grouped instances.
    pub w: u32,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub from: u32,
    pub to: u32,
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph")]
pub struct RelationGraph {
    pub pattern_id: String,
    pub total_area: f64,
    pub nodes: Vec<RelationNode>,
    pub edges: Vec<RelationEdge>,
}

/// One broken invariant. `item` locates it, e.g. `nodes[2]` or `edges[0]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub item: String,
    pub message: String,
}

impl Violation {
    fn new(item: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            item: item.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.item, self.message)
    }
}

/// Relative slack on the area sum checks.
const AREA_TOLERANCE: f64 = 1e-6;

impl RelationGraph {
    pub fn empty(pattern_id: impl Into<String>) -> Self {
        Self {
            pattern_id: pattern_id.into(),
            total_area: 0.0,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    /// Node plus edge count; the prefilter key.
    pub fn graph_size(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }

    pub fn node(&self, id: u32) -> Option<&RelationNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Checks every node, edge and graph invariant. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut ids = BTreeMap::new();
        for (k, n) in self.nodes.iter().enumerate() {
            let item = format!("nodes[{k}]");
            if ids.insert(n.id, k).is_some() {
                out.push(Violation::new(&item, format!("duplicate node id {}", n.id)));
            }
            if !(n.s_abs.is_finite() && n.s_abs > 0.0) {
                out.push(Violation::new(&item, format!("s_abs must be positive, got {}", n.s_abs)));
            }
            if !(n.s_prop.is_finite() && n.s_prop > 0.0 && n.s_prop <= 100.0) {
                out.push(Violation::new(&item, format!("s_prop must lie in (0, 100], got {}", n.s_prop)));
            }
            if n.w < 1 {
                out.push(Violation::new(&item, "w must be at least 1"));
            }
            if !(n.origin.t.is_finite() && n.origin.x.is_finite()) {
                out.push(Violation::new(&item, "origin must be finite"));
            }
        }
        if !(self.total_area.is_finite() && self.total_area >= 0.0) {
            out.push(Violation::new("total_area", "must be finite and non-negative"));
        }

        let mut endpoints_ok = true;
        for (k, e) in self.edges.iter().enumerate() {
            let item = format!("edges[{k}]");
            if e.weight < 1 {
                out.push(Violation::new(&item, "weight must be at least 1"));
            }
            if e.from == e.to {
                out.push(Violation::new(&item, format!("self-loop on node {}", e.from)));
            }
            let (from, to) = (self.node(e.from), self.node(e.to));
            for (end, id, node) in [("from", e.from, from), ("to", e.to, to)] {
                if node.is_none() {
                    endpoints_ok = false;
                    out.push(Violation::new(&item, format!("{end} refers to missing node {id}")));
                }
            }
            if let (Some(a), Some(b)) = (from, to) {
                if a.origin.t > b.origin.t {
                    out.push(Violation::new(
                        &item,
                        format!("edge runs backwards in time ({} > {})", a.origin.t, b.origin.t),
                    ));
                }
            }
        }
        if endpoints_ok && self.topological_order().is_none() {
            out.push(Violation::new("edges", "graph contains a cycle"));
        }

        let weighted: f64 = self.nodes.iter().map(|n| n.w as f64 * n.s_abs).sum();
        if weighted > self.total_area + AREA_TOLERANCE * self.total_area.max(1.0) {
            out.push(Violation::new(
                "nodes",
                format!("sum of w*s_abs ({weighted}) exceeds total_area ({})", self.total_area),
            ));
        }
        let share: f64 = self.nodes.iter().map(|n| n.s_prop).sum();
        if share > 100.0 + 1e-6 {
            out.push(Violation::new("nodes", format!("s_prop sums to {share} > 100")));
        }
        out
    }

    /// Node ids in an order where every edge goes forward, or `None` when
    /// the edges contain a cycle. Ties resolve by node list order.
    pub fn topological_order(&self) -> Option<Vec<u32>> {
        let index: BTreeMap<u32, usize> = self.nodes.iter().enumerate().map(|(k, n)| (n.id, k)).collect();
        let mut indegree = vec![0usize; self.nodes.len()];
        let mut out_edges = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            let (a, b) = (*index.get(&e.from)?, *index.get(&e.to)?);
            out_edges[a].push(b);
            indegree[b] += 1;
        }
        let mut ready: VecDeque<usize> = (0..self.nodes.len()).filter(|&k| indegree[k] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(k) = ready.pop_front() {
            order.push(self.nodes[k].id);
            for &b in &out_edges[k] {
                indegree[b] -= 1;
                if indegree[b] == 0 {
                    ready.push_back(b);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    /// Compact edge listing such as `B→D w=6, B→H w=1`. Graphs without
    /// edges list their nodes instead.
    pub fn summary(&self) -> String {
        let tau = |id: u32| self.node(id).map_or("?", |n| n.tau.symbol());
        if self.edges.is_empty() {
            return self
                .nodes
                .iter()
                .map(|n| format!("{} w={}", n.tau, n.w))
                .collect::<Vec<_>>()
                .join(", ");
        }
        self.edges
            .iter()
            .map(|e| format!("{}→{} w={}", tau(e.from), tau(e.to), e.weight))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Ids of nodes without incoming edges.
    pub fn roots(&self) -> Vec<u32> {
        let targets: BTreeSet<u32> = self.edges.iter().map(|e| e.to).collect();
        self.nodes.iter().map(|n| n.id).filter(|id| !targets.contains(id)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serialization cannot fail")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization cannot fail")
    }

    /// Parses and validates graph JSON. Malformed text is a JSON error;
    /// well-formed text breaking an invariant is [`Error::InvalidGraph`].
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawGraph = serde_json::from_str(text)?;
        Self::try_from(raw)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let raw: RawGraph = serde_json::from_value(value)?;
        Self::try_from(raw)
    }
}

#[derive(Deserialize)]
struct RawNode {
    id: u32,
    tau: String,
    s_abs: f64,
    s_prop: f64,
    w: u32,
    #[serde(default)]
    origin: Origin,
}

#[derive(Deserialize)]
struct RawGraph {
    #[serde(default)]
    pattern_id: String,
    total_area: f64,
    #[serde(default)]
    nodes: Vec<RawNode>,
    #[serde(default)]
    edges: Vec<RelationEdge>,
}

impl TryFrom<RawGraph> for RelationGraph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        let mut violations = Vec::new();
        let mut nodes = Vec::with_capacity(raw.nodes.len());
        for (k, n) in raw.nodes.into_iter().enumerate() {
            match n.tau.parse::<Kind>() {
                Ok(tau) => nodes.push(RelationNode {
                    id: n.id,
                    tau,
                    s_abs: n.s_abs,
                    s_prop: n.s_prop,
                    w: n.w,
                    origin: n.origin,
                }),
                Err(message) => violations.push(Violation::new(format!("nodes[{k}].tau"), message)),
            }
        }
        if !violations.is_empty() {
            return Err(Error::InvalidGraph(violations));
        }
        let graph = RelationGraph {
            pattern_id: raw.pattern_id,
            total_area: raw.total_area,
            nodes,
            edges: raw.edges,
        };
        let violations = graph.validate();
        if violations.is_empty() {
            Ok(graph)
        } else {
            Err(Error::InvalidGraph(violations))
        }
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{RelationEdge, RelationGraph, RelationNode};
use crate::error::{Error, Result};
use crate::primitives::{Kind, Origin, PrimitiveSet};

/// How close a child's start point must be to a parent's footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerTolerance {
    pub eps_x: f64,
    pub eps_t: f64,
}

impl Default for TriggerTolerance {
    fn default() -> Self {
        Self { eps_x: 0.5, eps_t: 5.0 }
    }
}

/// `true` when instance `a` starts before instance `b` (index breaks ties).
fn precedes(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Finds `(parent, child)` pairs: the child's origin lies within the
/// tolerance box of some cell of an earlier-starting parent. Among several
/// candidates the one with the smallest tolerance-scaled distance wins, so a
/// queue head right next to a disturbance's start beats an earlier
/// disturbance that merely passed through the same spot a few minutes ago.
pub fn infer_triggers(set: &PrimitiveSet, tol: TriggerTolerance) -> Vec<(usize, usize)> {
    let meta = &set.meta;
    let eps_x = tol.eps_x.max(0.0);
    let eps_t = tol.eps_t.max(0.0);
    let scale = |d: f64, eps: f64| if eps > 0.0 { d / eps } else if d == 0.0 { 0.0 } else { f64::INFINITY };
    let mut pairs = Vec::new();
    for (c, child) in set.instances.iter().enumerate() {
        let o = child.origin;
        let mut best: Option<(f64, usize)> = None;
        for (p, parent) in set.instances.iter().enumerate() {
            if p == c || !precedes((parent.origin.t, p), (o.t, c)) {
                continue;
            }
            let mut nearest = f64::INFINITY;
            for (i, j) in parent.mask.cells() {
                let dx = (meta.x0 + (i as f64 + 0.5) * meta.dx - o.x).abs();
                let dt = (meta.t0 + (j as f64 + 0.5) * meta.dt - o.t).abs();
                if dx > eps_x + 1e-9 || dt > eps_t + 1e-9 {
                    continue;
                }
                let d = scale(dx, eps_x).hypot(scale(dt, eps_t));
                nearest = nearest.min(d);
            }
            if nearest.is_finite() && best.is_none_or(|(d, _)| nearest < d) {
                best = Some((nearest, p));
            }
        }
        if let Some((_, p)) = best {
            pairs.push((p, c));
        }
    }
    pairs
}

type Group = ((Kind, Option<usize>), Vec<usize>, Origin);

/// Groups instances into nodes and links the groups.
///
/// Instances of one kind with the same parent instance form a node, as do
/// all parentless instances of one kind. Node ids follow the groups'
/// earliest start (time, then downstream first, then kind).
pub fn build_graph(set: &PrimitiveSet, triggers: &[(usize, usize)], pattern_id: &str) -> Result<RelationGraph> {
    let n = set.instances.len();
    let mut parent = vec![None; n];
    for &(p, c) in triggers {
        if p >= n || c >= n || p == c {
            return Err(Error::Internal(format!("trigger ({p}, {c}) is out of range or a self-link")));
        }
        if parent[c].replace(p).is_some() {
            return Err(Error::Internal(format!("instance {c} has more than one trigger")));
        }
    }
    for start in 0..n {
        let mut cur = start;
        for _ in 0..=n {
            match parent[cur] {
                Some(p) if p == start => {
                    return Err(Error::Internal(format!("trigger cycle through instance {start}")));
                }
                Some(p) => cur = p,
                None => break,
            }
        }
    }

    let mut groups: BTreeMap<(Kind, Option<usize>), Vec<usize>> = BTreeMap::new();
    for (k, inst) in set.instances.iter().enumerate() {
        groups.entry((inst.kind, parent[k])).or_default().push(k);
    }
    let earliest = |members: &[usize]| -> Origin {
        members
            .iter()
            .map(|&k| set.instances[k].origin)
            .min_by(|a, b| a.t.total_cmp(&b.t).then(b.x.total_cmp(&a.x)))
            .expect("groups are non-empty")
    };
    let mut ordered: Vec<Group> = groups
        .into_iter()
        .map(|(key, members)| {
            let origin = earliest(&members);
            (key, members, origin)
        })
        .collect();
    ordered.sort_by(|a, b| {
        a.2.t
            .total_cmp(&b.2.t)
            .then(b.2.x.total_cmp(&a.2.x))
            .then(a.0 .0.cmp(&b.0 .0))
            .then(a.1[0].cmp(&b.1[0]))
    });

    let total = set.total_congested_area;
    let mut node_of = vec![0u32; n];
    let mut nodes = Vec::with_capacity(ordered.len());
    for (id, ((kind, _), members, origin)) in ordered.iter().enumerate() {
        let area: f64 = members.iter().map(|&k| set.instances[k].area).sum();
        for &k in members {
            node_of[k] = id as u32;
        }
        let s_prop = if total > 0.0 { (area / total * 100.0).min(100.0) } else { 0.0 };
        nodes.push(RelationNode {
            id: id as u32,
            tau: *kind,
            s_abs: area / members.len() as f64,
            s_prop,
            w: members.len() as u32,
            origin: *origin,
        });
    }

    let mut weights: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for ((_, p), members, _) in &ordered {
        if let Some(p) = p {
            let key = (node_of[*p], node_of[members[0]]);
            *weights.entry(key).or_default() += members.len() as u32;
        }
    }
    let edges = weights
        .into_iter()
        .map(|((from, to), weight)| RelationEdge { from, to, weight })
        .collect();

    Ok(RelationGraph {
        pattern_id: pattern_id.to_string(),
        total_area: total,
        nodes,
        edges,
    })
}

//! Pattern similarity: recursive node scores combined by optimal assignment.
//!
//! Two nodes of the same kind score by their overlapping size, scaled by a
//! logistic penalty on the size difference, minus the deletion cost of a
//! virtual node that stands for their difference in occurrence count.
//! Different kinds score as two deletions. Children contribute through the
//! best assignment of child pairs. The pattern score is the best assignment
//! of all node pairs, both node sets padded with null nodes.

mod hungarian;

use serde::{Deserialize, Serialize};

pub use hungarian::{hungarian, Assignment, Sense};

use crate::error::{Error, Result};
use crate::primitives::Kind;
use crate::relgraph::{RelationGraph, RelationNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeMode {
    /// Mean instance area, km·min.
    #[default]
    Absolute,
    /// Share of the pattern's congested area, percent.
    Proportion,
}

impl std::str::FromStr for SizeMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "absolute" => Ok(SizeMode::Absolute),
            "proportion" => Ok(SizeMode::Proportion),
            other => Err(format!("unknown size mode `{other}` (expected absolute or proportion)")),
        }
    }
}

/// Logistic coefficients `(slope, intercept)`.
pub type Beta = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityParams {
    /// Size-difference penalty.
    pub theta_s: f64,
    /// Weight of the reference-node term against the detailed comparison, in [0, 1].
    pub theta_g: f64,
    /// Deletion penalty.
    #[serde(alias = "theta_d")]
    pub theta_t: f64,
    /// Occurrence-difference penalty.
    pub theta_w: f64,
    /// Contribution of child matches.
    pub theta_i: f64,
    pub beta_size: Beta,
    pub beta_weight: Beta,
    pub size_mode: SizeMode,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            theta_s: 1.0,
            theta_g: 0.0,
            theta_t: 1.0,
            theta_w: 1.0,
            theta_i: 1.0,
            beta_size: (-10.0, 5.0),
            beta_weight: (10.0, -5.0),
            size_mode: SizeMode::Absolute,
        }
    }
}

impl SimilarityParams {
    /// Default weights with `(10, -5)` on both logistics. Under this setting
    /// the size logistic grows with the size difference.
    pub fn same_logistic() -> Self {
        Self {
            beta_size: (10.0, -5.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("theta_s", self.theta_s),
            ("theta_t", self.theta_t),
            ("theta_w", self.theta_w),
            ("theta_i", self.theta_i),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.theta_g) {
            return Err(Error::Validation(format!("theta_g must lie in [0, 1], got {}", self.theta_g)));
        }
        for (name, (b1, b0)) in [("beta_size", self.beta_size), ("beta_weight", self.beta_weight)] {
            if !(b1.is_finite() && b0.is_finite()) {
                return Err(Error::Validation(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// `1 - 1 / (1 + exp(b1 * theta * x + b0))`.
pub fn logistic(beta: Beta, theta: f64, x: f64) -> f64 {
    1.0 - 1.0 / (1.0 + (beta.0 * (theta * x) + beta.1).exp())
}

/// The attributes a score reads from a node: kind, count and selected size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchNode {
    pub tau: Kind,
    pub w: f64,
    pub a: f64,
}

impl MatchNode {
    pub fn of(node: &RelationNode, mode: SizeMode) -> Self {
        Self {
            tau: node.tau,
            w: node.w as f64,
            a: match mode {
                SizeMode::Absolute => node.s_abs,
                SizeMode::Proportion => node.s_prop,
            },
        }
    }
}

/// Cost of leaving a node unmatched: `theta_t * w * a`.
pub fn deletion_cost(n: &MatchNode, p: &SimilarityParams) -> f64 {
    p.theta_t * n.w * n.a
}

/// Base score of two real nodes.
pub fn replacement_sim(na: &MatchNode, nb: &MatchNode, p: &SimilarityParams) -> f64 {
    if na.tau != nb.tau {
        return -deletion_cost(na, p) - deletion_cost(nb, p);
    }
    let w_min = na.w.min(nb.w);
    let a_min = na.a.min(nb.a);
    let a_sum = na.a + nb.a;
    let rel_diff = if a_sum > 0.0 { (na.a - nb.a).abs() / a_sum } else { 0.0 };
    let occurrence = MatchNode {
        tau: na.tau,
        w: logistic(p.beta_weight, p.theta_w, (na.w - nb.w).abs()),
        a: if na.w > nb.w { na.a } else { nb.a },
    };
    let detailed = 2.0 * w_min * a_min * logistic(p.beta_size, p.theta_s, rel_diff) - deletion_cost(&occurrence, p);
    (1.0 - p.theta_g) * detailed + p.theta_g * 2.0 * na.w * na.a
}

/// Nodes and child lists of a validated graph, by position.
struct GraphView {
    nodes: Vec<MatchNode>,
    children: Vec<Vec<usize>>,
}

impl GraphView {
    fn new(g: &RelationGraph, mode: SizeMode) -> Result<Self> {
        let violations = g.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidGraph(violations));
        }
        let pos = |id: u32| g.nodes.iter().position(|n| n.id == id).expect("validated edge endpoint");
        let mut children = vec![Vec::new(); g.nodes.len()];
        for e in &g.edges {
            children[pos(e.from)].push(pos(e.to));
        }
        Ok(Self {
            nodes: g.nodes.iter().map(|n| MatchNode::of(n, mode)).collect(),
            children,
        })
    }
}

/// Memoized node scores for one pair of graphs.
struct Matcher<'a> {
    a: &'a GraphView,
    b: &'a GraphView,
    p: &'a SimilarityParams,
    memo: Vec<Option<f64>>,
}

impl<'a> Matcher<'a> {
    fn new(a: &'a GraphView, b: &'a GraphView, p: &'a SimilarityParams) -> Self {
        Self {
            a,
            b,
            p,
            memo: vec![None; a.nodes.len() * b.nodes.len()],
        }
    }

    fn sim(&mut self, ia: Option<usize>, ib: Option<usize>) -> Result<f64> {
        match (ia, ib) {
            (None, None) => Ok(0.0),
            (Some(ia), None) => Ok(-deletion_cost(&self.a.nodes[ia], self.p)),
            (None, Some(ib)) => Ok(-deletion_cost(&self.b.nodes[ib], self.p)),
            (Some(ia), Some(ib)) => {
                let key = ia * self.b.nodes.len() + ib;
                if let Some(v) = self.memo[key] {
                    return Ok(v);
                }
                let s0 = replacement_sim(&self.a.nodes[ia], &self.b.nodes[ib], self.p);
                let (ca, cb) = (&self.a.children[ia], &self.b.children[ib]);
                let best = self.assign(&ca.clone(), &cb.clone())?;
                let s = s0 + self.p.theta_i * s0.min(best);
                self.memo[key] = Some(s);
                Ok(s)
            }
        }
    }

    /// Padded score matrix over two node lists.
    fn matrix(&mut self, la: &[usize], lb: &[usize]) -> Result<Vec<Vec<f64>>> {
        let n = la.len() + lb.len();
        let slot = |list: &[usize], k: usize| list.get(k).copied();
        let mut m = vec![vec![0.0; n]; n];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = self.sim(slot(la, r), slot(lb, c))?;
            }
        }
        Ok(m)
    }

    fn assign(&mut self, la: &[usize], lb: &[usize]) -> Result<f64> {
        // with one side empty every permutation deletes the other side
        if la.is_empty() || lb.is_empty() {
            let (list, view) = if la.is_empty() { (lb, self.b) } else { (la, self.a) };
            return Ok(list.iter().map(|&k| -deletion_cost(&view.nodes[k], self.p)).sum());
        }
        let m = self.matrix(la, lb)?;
        Ok(hungarian(&m, Sense::Maximize)?.total)
    }
}

/// Score of node `a` of `ga` against node `b` of `gb` (ids; `None` is the
/// null node).
pub fn node_sim(
    a: Option<u32>,
    b: Option<u32>,
    ga: &RelationGraph,
    gb: &RelationGraph,
    p: &SimilarityParams,
) -> Result<f64> {
    p.validate()?;
    let (va, vb) = (GraphView::new(ga, p.size_mode)?, GraphView::new(gb, p.size_mode)?);
    let locate = |g: &RelationGraph, id: Option<u32>| -> Result<Option<usize>> {
        id.map(|id| {
            g.nodes
                .iter()
                .position(|n| n.id == id)
                .ok_or_else(|| Error::NotFound(format!("node {id} in graph `{}`", g.pattern_id)))
        })
        .transpose()
    };
    let (ia, ib) = (locate(ga, a)?, locate(gb, b)?);
    Matcher::new(&va, &vb, p).sim(ia, ib)
}

/// The padded node-score matrix over all nodes of both graphs: rows are
/// `ga`'s nodes then one null slot per node of `gb`, columns likewise.
pub fn score_matrix(ga: &RelationGraph, gb: &RelationGraph, p: &SimilarityParams) -> Result<Vec<Vec<f64>>> {
    p.validate()?;
    let (va, vb) = (GraphView::new(ga, p.size_mode)?, GraphView::new(gb, p.size_mode)?);
    let la: Vec<usize> = (0..va.nodes.len()).collect();
    let lb: Vec<usize> = (0..vb.nodes.len()).collect();
    Matcher::new(&va, &vb, p).matrix(&la, &lb)
}

/// Similarity of two patterns: value of the optimal padded node assignment.
pub fn pattern_sim(ga: &RelationGraph, gb: &RelationGraph, p: &SimilarityParams) -> Result<f64> {
    p.validate()?;
    let (va, vb) = (GraphView::new(ga, p.size_mode)?, GraphView::new(gb, p.size_mode)?);
    let la: Vec<usize> = (0..va.nodes.len()).collect();
    let lb: Vec<usize> = (0..vb.nodes.len()).collect();
    Matcher::new(&va, &vb, p).assign(&la, &lb)
}

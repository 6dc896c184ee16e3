//! Persistent pattern index and ranked similarity queries.

mod store;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use store::{validate_id, Manifest, ManifestEntry, PatternRecord, PatternStore, RecordMetadata, StoreStats};

use crate::error::{Error, Result};
use crate::primitives::ExtractConfig;
use crate::relgraph::{graph_from_field, RelationGraph};
use crate::similarity::{pattern_sim, SimilarityParams};
use crate::speedmap::SpeedField;

/// A query by example: a relation graph or a raster to extract one from.
#[derive(Debug, Clone)]
pub enum Query {
    Graph(RelationGraph),
    Field(SpeedField),
}

impl Query {
    /// The graph the store is searched with. Rasters go through extraction
    /// with `cfg`.
    pub fn graph(&self, cfg: &ExtractConfig) -> Result<RelationGraph> {
        match self {
            Query::Graph(g) => {
                let violations = g.validate();
                if violations.is_empty() {
                    Ok(g.clone())
                } else {
                    Err(Error::InvalidGraph(violations))
                }
            }
            Query::Field(f) => graph_from_field(f, cfg, "query"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub rank: usize,
    pub pattern_id: String,
    pub score: f64,
}

/// One JSON object per line, newline-terminated.
pub fn to_json_lines(results: &[RankedResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r).expect("result serialization cannot fail"));
        out.push('\n');
    }
    out
}

fn check_band(band: f64) -> Result<()> {
    if band.is_nan() || band < 0.0 {
        return Err(Error::Validation(format!("band must be >= 0, got {band}")));
    }
    Ok(())
}

impl PatternStore {
    /// Records whose graph size lies within `[q (1 - band), q (1 + band)]`,
    /// in store order. An infinite band keeps everything.
    pub fn prefilter(&self, query_size: usize, band: f64) -> Result<Vec<&PatternRecord>> {
        check_band(band)?;
        if band.is_infinite() {
            return Ok(self.records().iter().collect());
        }
        let q = query_size as f64;
        let (lo, hi) = (q * (1.0 - band), q * (1.0 + band));
        Ok(self
            .records()
            .iter()
            .filter(|r| {
                let s = r.graph_size as f64;
                s >= lo - 1e-9 && s <= hi + 1e-9
            })
            .collect())
    }

    /// Scores the prefiltered candidates in parallel and returns the best
    /// `k`, by score descending then id ascending.
    pub fn query_topk(
        &self,
        query: &Query,
        k: usize,
        params: &SimilarityParams,
        band: f64,
    ) -> Result<Vec<RankedResult>> {
        self.query_topk_with(query, k, params, band, &ExtractConfig::default())
    }

    pub fn query_topk_with(
        &self,
        query: &Query,
        k: usize,
        params: &SimilarityParams,
        band: f64,
        cfg: &ExtractConfig,
    ) -> Result<Vec<RankedResult>> {
        if k == 0 {
            return Err(Error::Validation("k must be at least 1".into()));
        }
        params.validate()?;
        let graph = query.graph(cfg)?;
        let candidates = self.prefilter(graph.graph_size(), band)?;
        let mut scored: Vec<(f64, &str)> = candidates
            .par_iter()
            .map(|r| pattern_sim(&graph, &r.graph, params).map(|s| (s, r.pattern_id.as_str())))
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (score, id))| RankedResult {
                rank: i + 1,
                pattern_id: id.to_string(),
                score,
            })
            .collect())
    }
}

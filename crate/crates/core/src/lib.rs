//! Content-based retrieval of spatiotemporal highway congestion patterns.
//!
//! A congestion pattern is a space-time speed raster ([`SpeedField`]). The
//! pipeline extracts traffic primitives from it (bottlenecks, disturbances,
//! homogeneous congestion), links them into an attributed relation graph, and
//! ranks stored patterns against a query with an inexact graph-matching score
//! solved as an optimal assignment.
//!
//! ```text
//! SpeedField --extract_primitives--> PrimitiveSet --infer_triggers/build_graph--> RelationGraph
//! RelationGraph x RelationGraph --pattern_sim--> score --query_topk--> ranked records
//! ```

pub mod error;
pub mod primitives;
pub mod relgraph;
pub mod retrieval;
pub mod similarity;
pub mod speedmap;

pub use error::{Error, Result};
pub use primitives::{extract_primitives, ExtractConfig, Kind, PrimitiveInstance, PrimitiveSet};
pub use relgraph::{build_graph, infer_triggers, RelationEdge, RelationGraph, RelationNode};
pub use retrieval::{PatternRecord, PatternStore, Query, RankedResult};
pub use similarity::{pattern_sim, SimilarityParams, SizeMode};
pub use speedmap::{GridMeta, SpeedField};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::Json;
use jamgraph::relgraph::Violation;
use jamgraph::retrieval::validate_id;
use jamgraph::speedmap::load_csv_str;
use jamgraph::{Error, GridMeta, Query, RelationGraph, SimilarityParams, SpeedField};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{store, ApiError, Shared};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone)]
pub enum QueryVariant {
    PatternId(String),
    Graph(RelationGraph),
    Raster(SpeedField),
}

/// A validated `POST /query` body.
///
/// ```json
/// {"query": {"pattern_id": "p1"}, "k": 10, "params": {"theta_w": 3}, "band": null}
/// ```
///
/// `query` holds exactly one of `pattern_id`, `graph` (relation graph JSON)
/// or `raster` (`{"meta": {...}, "rows": [[...]]}` or `{"meta": {...}, "csv": "..."}`).
/// `k` defaults to 10, `params` to the defaults, and a null or absent `band`
/// disables the size prefilter.
#[derive(Debug, Clone)]
pub struct QueryRequest {
    pub query: QueryVariant,
    pub k: usize,
    pub params: SimilarityParams,
    pub band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub rank: usize,
    pub pattern_id: String,
    pub score: f64,
    pub graph_size: usize,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySummary {
    pub graph_size: usize,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub query: QuerySummary,
    pub results: Vec<ResultEntry>,
}

fn violation(item: &str, message: impl Into<String>) -> Violation {
    Violation {
        item: item.to_string(),
        message: message.into(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RasterBody {
    #[serde(default)]
    meta: GridMeta,
    rows: Option<Vec<Vec<f64>>>,
    csv: Option<String>,
}

fn parse_raster(value: &Value) -> Result<SpeedField, Violation> {
    let body: RasterBody =
        serde_json::from_value(value.clone()).map_err(|e| violation("query.raster", e.to_string()))?;
    let field = match (body.rows, body.csv) {
        (Some(rows), None) => SpeedField::from_rows(body.meta, rows),
        (None, Some(csv)) => load_csv_str(&csv, &body.meta),
        _ => return Err(violation("query.raster", "exactly one of `rows` or `csv` must be set")),
    };
    field.map_err(|e| violation("query.raster", e.to_string()))
}

fn parse_variant(value: Option<&Value>, out: &mut Vec<Violation>) -> Option<QueryVariant> {
    let Some(value) = value else {
        out.push(violation("query", "required"));
        return None;
    };
    let Some(obj) = value.as_object() else {
        out.push(violation("query", "must be an object"));
        return None;
    };
    for key in obj.keys() {
        if !matches!(key.as_str(), "pattern_id" | "graph" | "raster") {
            out.push(violation(&format!("query.{key}"), "unknown field"));
        }
    }
    let set: Vec<&str> = ["pattern_id", "graph", "raster"]
        .into_iter()
        .filter(|k| obj.get(*k).is_some_and(|v| !v.is_null()))
        .collect();
    if set.len() != 1 {
        out.push(violation(
            "query",
            format!("exactly one of pattern_id, graph, raster must be set, found {}", set.len()),
        ));
        return None;
    }
    let v = &obj[set[0]];
    match set[0] {
        "pattern_id" => match v.as_str() {
            Some(id) => match validate_id(id) {
                Ok(()) => Some(QueryVariant::PatternId(id.to_string())),
                Err(e) => {
                    out.push(violation("query.pattern_id", e.to_string()));
                    None
                }
            },
            None => {
                out.push(violation("query.pattern_id", "must be a string"));
                None
            }
        },
        "graph" => match RelationGraph::from_value(v.clone()) {
            Ok(g) => Some(QueryVariant::Graph(g)),
            Err(Error::InvalidGraph(list)) => {
                out.extend(list.into_iter().map(|x| violation(&format!("query.graph.{}", x.item), x.message)));
                None
            }
            Err(e) => {
                out.push(violation("query.graph", e.to_string()));
                None
            }
        },
        _ => match parse_raster(v) {
            Ok(f) => Some(QueryVariant::Raster(f)),
            Err(x) => {
                out.push(x);
                None
            }
        },
    }
}

fn parse_k(value: Option<&Value>, out: &mut Vec<Violation>) -> usize {
    match value {
        None | Some(Value::Null) => DEFAULT_K,
        Some(v) => match v.as_u64() {
            Some(k) if k >= 1 => k.min(usize::MAX as u64) as usize,
            _ => {
                out.push(violation("k", "must be a positive integer"));
                DEFAULT_K
            }
        },
    }
}

fn parse_params(value: Option<&Value>, out: &mut Vec<Violation>) -> SimilarityParams {
    let Some(v) = value.filter(|v| !v.is_null()) else {
        return SimilarityParams::default();
    };
    match serde_json::from_value::<SimilarityParams>(v.clone()) {
        Ok(p) => {
            if let Err(e) = p.validate() {
                out.push(violation("params", e.to_string()));
            }
            p
        }
        Err(e) => {
            out.push(violation("params", e.to_string()));
            SimilarityParams::default()
        }
    }
}

fn parse_band(value: Option<&Value>, out: &mut Vec<Violation>) -> f64 {
    match value {
        None | Some(Value::Null) => f64::INFINITY,
        Some(v) => match v.as_f64() {
            Some(b) if b >= 0.0 => b,
            _ => {
                out.push(violation("band", "must be null or a non-negative number"));
                f64::INFINITY
            }
        },
    }
}

impl QueryRequest {
    /// Validates a request body, collecting every problem found.
    pub fn from_json(value: &Value) -> Result<Self, Vec<Violation>> {
        let empty = Map::new();
        let mut out = Vec::new();
        let obj = match value.as_object() {
            Some(o) => o,
            None => {
                out.push(violation("body", "must be a JSON object"));
                &empty
            }
        };
        for key in obj.keys() {
            if !matches!(key.as_str(), "query" | "k" | "params" | "band") {
                out.push(violation(key, "unknown field"));
            }
        }
        let query = if value.is_object() { parse_variant(obj.get("query"), &mut out) } else { None };
        let k = parse_k(obj.get("k"), &mut out);
        let params = parse_params(obj.get("params"), &mut out);
        let band = parse_band(obj.get("band"), &mut out);
        match query {
            Some(query) if out.is_empty() => Ok(Self { query, k, params, band }),
            _ => Err(out),
        }
    }
}

fn library_error(e: Error) -> ApiError {
    match e {
        Error::InvalidGraph(list) => ApiError::invalid(list),
        Error::Validation(m) | Error::UndefinedEnergy(m) => ApiError::invalid(vec![violation("query", m)]),
        other if other.is_io() => ApiError::unavailable(other.to_string()),
        other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
    }
}

pub(crate) async fn handle(State(state): State<Shared>, body: Bytes) -> Result<Json<QueryResponse>, ApiError> {
    let value: Value =
        serde_json::from_slice(&body).map_err(|e| ApiError::invalid(vec![violation("body", e.to_string())]))?;
    let req = QueryRequest::from_json(&value).map_err(ApiError::invalid)?;
    store(&state)?;

    let worker = state.clone();
    let response = tokio::task::spawn_blocking(move || -> Result<QueryResponse, ApiError> {
        let store = store(&worker)?;
        let graph = match req.query {
            QueryVariant::PatternId(id) => store.get(&id).ok_or_else(|| ApiError::not_found(&id))?.graph.clone(),
            QueryVariant::Graph(g) => g,
            QueryVariant::Raster(f) => Query::Field(f).graph(&worker.extract).map_err(library_error)?,
        };
        let ranked = store
            .query_topk_with(&Query::Graph(graph.clone()), req.k, &req.params, req.band, &worker.extract)
            .map_err(library_error)?;
        let results = ranked
            .into_iter()
            .map(|r| {
                let record = store.get(&r.pattern_id).expect("ranked ids come from the store");
                ResultEntry {
                    rank: r.rank,
                    graph_size: record.graph_size,
                    summary: record.graph.summary(),
                    pattern_id: r.pattern_id,
                    score: r.score,
                }
            })
            .collect();
        Ok(QueryResponse {
            query: QuerySummary {
                graph_size: graph.graph_size(),
                summary: graph.summary(),
            },
            results,
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(response))
}

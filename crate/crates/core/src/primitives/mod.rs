//! Extraction of traffic primitives from a speed field.
//!
//! Pipeline: threshold segmentation of the congested foreground, bottleneck
//! fronts from speed drops along the congested characteristic, watershed
//! partition of the remaining foreground, then texture/geometry
//! classification of every region into disturbance or homogeneous congestion.

mod bottleneck;
mod classify;
mod glcm;
pub mod mask;
mod segment;
mod watershed;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::speedmap::{GridMeta, SpeedField};

pub use bottleneck::{detect_bottlenecks, BottleneckConfig};
pub use classify::{classify_region, ClassReason, Classification, ClassifierConfig};
pub use glcm::{glcm_energy, glcm_matrix, quantize};
pub use mask::Mask;
pub use segment::{segment_congestion, Segmentation};
pub use watershed::watershed_split;

/// Primitive type, the node label of a relation graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Kind {
    #[serde(rename = "B")]
    Bottleneck,
    #[serde(rename = "D")]
    Disturbance,
    #[serde(rename = "H")]
    Homogeneous,
}

impl Kind {
    pub fn symbol(self) -> &'static str {
        match self {
            Kind::Bottleneck => "B",
            Kind::Disturbance => "D",
            Kind::Homogeneous => "H",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "B" => Ok(Kind::Bottleneck),
            "D" => Ok(Kind::Disturbance),
            "H" => Ok(Kind::Homogeneous),
            other => Err(format!("unknown primitive type `{other}` (expected B, D or H)")),
        }
    }
}

/// A space-time point: minutes and kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Origin {
    pub t: f64,
    pub x: f64,
}

/// Front location and activation window of a detected bottleneck.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BottleneckFront {
    /// Downstream edge of the queue, km.
    pub position_km: f64,
    pub activation_start: f64,
    pub activation_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveInstance {
    pub kind: Kind,
    pub mask: Mask,
    pub origin: Origin,
    /// `|mask| * dx * dt`, km·min.
    pub area: f64,
    pub mean_speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub front: Option<BottleneckFront>,
}

impl PrimitiveInstance {
    /// Builds an instance from a non-empty mask, deriving origin, area and
    /// mean speed from the field.
    pub fn from_mask(field: &SpeedField, kind: Kind, mask: Mask) -> Result<Self> {
        let (oi, oj) = origin_cell(&mask).ok_or_else(|| Error::Validation("primitive mask is empty".into()))?;
        let cells = mask.count();
        let mean_speed = mask.cells().map(|(i, j)| field.get(i, j)).sum::<f64>() / cells as f64;
        Ok(Self {
            kind,
            origin: Origin {
                t: field.time(oj),
                x: field.position(oi),
            },
            area: cells as f64 * field.cell_area(),
            mean_speed,
            front: None,
            mask,
        })
    }
}

/// Earliest cell of a mask; ties go to the most downstream row.
pub fn origin_cell(mask: &Mask) -> Option<(usize, usize)> {
    mask.cells().min_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSet {
    pub instances: Vec<PrimitiveInstance>,
    /// Area of the whole congested foreground, km·min.
    pub total_congested_area: f64,
    pub meta: GridMeta,
}

impl PrimitiveSet {
    pub fn cell_area(&self) -> f64 {
        self.meta.cell_area()
    }

    pub fn count(&self, kind: Kind) -> usize {
        self.instances.iter().filter(|p| p.kind == kind).count()
    }

    pub fn counts(&self) -> [usize; 3] {
        [
            self.count(Kind::Bottleneck),
            self.count(Kind::Disturbance),
            self.count(Kind::Homogeneous),
        ]
    }
}

/// All extraction thresholds. Loadable from JSON; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    /// Cells slower than this are congested, km/h.
    pub v_threshold: f64,
    /// Minimum basin depth kept by h-minima suppression, km/h.
    pub h_depth: f64,
    /// Watershed regions with fewer cells are discarded as fragments.
    pub min_region_cells: usize,
    pub bottleneck: BottleneckConfig,
    pub classifier: ClassifierConfig,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            v_threshold: 65.0,
            h_depth: 5.0,
            min_region_cells: 6,
            bottleneck: BottleneckConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_threshold.is_finite() && self.v_threshold > 0.0) {
            return Err(Error::Validation("v_threshold must be positive".into()));
        }
        if !(self.h_depth.is_finite() && self.h_depth >= 0.0) {
            return Err(Error::Validation("h_depth must be non-negative".into()));
        }
        self.bottleneck.validate()?;
        self.classifier.validate()
    }
}

/// Runs the whole extraction pipeline on one pattern.
pub fn extract_primitives(field: &SpeedField, cfg: &ExtractConfig) -> Result<PrimitiveSet> {
    cfg.validate()?;
    let seg = segment_congestion(field, cfg.v_threshold);
    let mut bottlenecks = detect_bottlenecks(field, &seg.foreground, &cfg.bottleneck);

    let mut rest = seg.foreground.clone();
    for b in &bottlenecks {
        rest = rest.difference(&b.mask);
    }

    let mut regions = Vec::new();
    for region in watershed_split(field, &rest, cfg.h_depth) {
        if region.count() < cfg.min_region_cells.max(1) {
            continue;
        }
        let class = classify_region(field, &region, &cfg.classifier);
        // a stationary non-homogeneous region against a front band is the
        // rest of that bottleneck's queue
        let stationary = class.slope.is_some_and(|s| s.abs() <= cfg.classifier.slope_tol);
        if class.kind == Kind::Disturbance && stationary {
            let grown = region.dilate3();
            if let Some(b) = bottlenecks.iter_mut().find(|b| !grown.is_disjoint(&b.mask)) {
                let front = b.front;
                *b = PrimitiveInstance::from_mask(field, Kind::Bottleneck, b.mask.union(&region))?;
                b.front = front;
                continue;
            }
        }
        regions.push(PrimitiveInstance::from_mask(field, class.kind, region)?);
    }
    regions.sort_by(|a, b| a.origin.t.total_cmp(&b.origin.t).then(b.origin.x.total_cmp(&a.origin.x)));

    let mut instances = bottlenecks;
    instances.extend(regions);
    Ok(PrimitiveSet {
        instances,
        total_congested_area: seg.foreground.count() as f64 * field.cell_area(),
        meta: field.meta().clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_flow_yields_nothing() {
        let f = SpeedField::constant(GridMeta::default(), 30, 60, 100.0).unwrap();
        let set = extract_primitives(&f, &ExtractConfig::default()).unwrap();
        assert!(set.instances.is_empty());
        assert_eq!(set.total_congested_area, 0.0);
    }

    #[test]
    fn origin_prefers_earliest_then_downstream() {
        let m = Mask::from_cells(5, 5, [(1, 2), (3, 2), (2, 3)]);
        assert_eq!(origin_cell(&m), Some((3, 2)));
    }

    #[test]
    fn kind_parses_symbols() {
        assert_eq!("D".parse::<Kind>().unwrap(), Kind::Disturbance);
        assert!("X".parse::<Kind>().is_err());
        assert_eq!(serde_json::to_string(&Kind::Homogeneous).unwrap(), "\"H\"");
    }

    #[test]
    fn config_json_fills_defaults() {
        let cfg: ExtractConfig = serde_json::from_str(r#"{"v_threshold": 50, "classifier": {"e_min": 0.7}}"#).unwrap();
        assert_eq!(cfg.v_threshold, 50.0);
        assert_eq!(cfg.classifier.e_min, 0.7);
        assert_eq!(cfg.classifier.levels, 8);
        assert_eq!(cfg.bottleneck, BottleneckConfig::default());
    }
}

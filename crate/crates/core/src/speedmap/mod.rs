//! Uniform space-time speed grids, the raster form of a congestion pattern.
//!
//! Values are stored row-major with rows indexed by space (ascending in the
//! driving direction) and columns by time. This layout is used everywhere in
//! the crate.

mod asm;
mod io;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use asm::{asm_estimate, asm_reconstruct, AsmConfig, AsmPoint, DetectorSeries, GridSpec};
pub use io::{export_csv, export_heatmap, heatmap_pixels, load_csv, load_csv_str, load_meta, pgm_bytes, to_csv_string, write_meta};
pub use synth::{synth_generate, GroundTruth, SyntheticSpec, TruthPrimitive};

/// Speed (km/h) that maps to full white in heat-map exports.
pub const HEATMAP_MAX_SPEED: f64 = 120.0;

/// Grid geometry shared by a raster and its sidecar JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    /// Road position of the first row, km.
    #[serde(default)]
    pub x0: f64,
    /// Cell length, km.
    #[serde(default = "default_dx")]
    pub dx: f64,
    /// Start of the first column, minutes since epoch.
    #[serde(default)]
    pub t0: f64,
    /// Cell duration, minutes.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub corridor_id: String,
}

fn default_dx() -> f64 {
    0.1
}

fn default_dt() -> f64 {
    0.5
}

impl Default for GridMeta {
    fn default() -> Self {
        Self {
            x0: 0.0,
            dx: default_dx(),
            t0: 0.0,
            dt: default_dt(),
            corridor_id: String::new(),
        }
    }
}

impl GridMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.dx.is_finite() && self.dx > 0.0) {
            return Err(Error::Validation(format!("dx must be positive, got {}", self.dx)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !self.x0.is_finite() || !self.t0.is_finite() {
            return Err(Error::Validation("x0 and t0 must be finite".into()));
        }
        Ok(())
    }

    /// Area of one grid cell in km·min.
    pub fn cell_area(&self) -> f64 {
        cell_area(self.dx, self.dt)
    }
}

/// The area unit (km·min) covered by one cell.
pub fn cell_area(dx: f64, dt: f64) -> f64 {
    dx * dt
}

/// A rectangular space-time grid of speeds in km/h.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedField {
    meta: GridMeta,
    n_space: usize,
    n_time: usize,
    values: Vec<f64>,
}

impl SpeedField {
    pub fn new(meta: GridMeta, n_space: usize, n_time: usize, values: Vec<f64>) -> Result<Self> {
        meta.validate()?;
        if n_space == 0 || n_time == 0 {
            return Err(Error::Validation("speed field must have at least one cell".into()));
        }
        if values.len() != n_space * n_time {
            return Err(Error::Validation(format!(
                "expected {} values for a {n_space}x{n_time} grid, got {}",
                n_space * n_time,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "speed at row {}, column {} is not a finite non-negative number: {}",
                pos / n_time + 1,
                pos % n_time + 1,
                values[pos]
            )));
        }
        Ok(Self {
            meta,
            n_space,
            n_time,
            values,
        })
    }

    pub fn from_rows(meta: GridMeta, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_space = rows.len();
        let n_time = rows.first().map_or(0, Vec::len);
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_time) {
            return Err(Error::Format {
                row: i + 1,
                message: format!("expected {n_time} columns, found {}", rows[i].len()),
            });
        }
        Self::new(meta, n_space, n_time, rows.into_iter().flatten().collect())
    }

    pub fn constant(meta: GridMeta, n_space: usize, n_time: usize, speed: f64) -> Result<Self> {
        Self::new(meta, n_space, n_time, vec![speed; n_space * n_time])
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_time + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_time..(i + 1) * self.n_time]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_time)
    }

    pub fn cell_area(&self) -> f64 {
        self.meta.cell_area()
    }

    /// Road position of the centre of row `i`, km.
    pub fn position(&self, i: usize) -> f64 {
        self.meta.x0 + (i as f64 + 0.5) * self.meta.dx
    }

    /// Time at the centre of column `j`, minutes.
    pub fn time(&self, j: usize) -> f64 {
        self.meta.t0 + (j as f64 + 0.5) * self.meta.dt
    }

    /// Road length covered by the grid, km.
    pub fn extent_km(&self) -> f64 {
        self.n_space as f64 * self.meta.dx
    }

    /// Time span covered by the grid, minutes.
    pub fn duration_min(&self) -> f64 {
        self.n_time as f64 * self.meta.dt
    }

    /// Area of the whole grid, km·min.
    pub fn total_area(&self) -> f64 {
        self.extent_km() * self.duration_min()
    }

    pub(crate) fn from_parts_unchecked(meta: GridMeta, n_space: usize, n_time: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n_space * n_time);
        Self {
            meta,
            n_space,
            n_time,
            values,
        }
    }
}

/// JSON form used for inline rasters: grid metadata plus nested rows.
#[derive(Serialize, Deserialize)]
struct SpeedFieldRepr {
    #[serde(flatten)]
    meta: GridMeta,
    values: Vec<Vec<f64>>,
}

impl Serialize for SpeedField {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SpeedFieldRepr {
            meta: self.meta.clone(),
            values: self.rows().map(<[f64]>::to_vec).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpeedField {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = SpeedFieldRepr::deserialize(deserializer)?;
        SpeedField::from_rows(repr.meta, repr.values).map_err(serde::de::Error::custom)
    }
}

use serde::{Deserialize, Serialize};

use super::{glcm_energy, Kind, Mask};
use crate::error::{Error, Result};
use crate::speedmap::SpeedField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub levels: usize,
    /// Co-occurrence offset `(d_space, d_time)` in cells.
    pub offset: (isize, isize),
    pub e_min: f64,
    /// Homogeneous regions must be at most this fast on average, km/h.
    pub v_homog: f64,
    pub c_cong_kmh: f64,
    /// Allowed deviation of the principal-axis slope from `c_cong / 60`, km/min.
    pub slope_tol: f64,
    pub r_min: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            offset: (0, 1),
            e_min: 0.6,
            v_homog: 30.0,
            c_cong_kmh: -18.0,
            slope_tol: 0.1,
            r_min: 4.0,
        }
    }
}

impl ClassifierConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::Validation("classifier needs at least 2 grey levels".into()));
        }
        if !(0.0..=1.0).contains(&self.e_min) {
            return Err(Error::Validation("e_min must lie in [0, 1]".into()));
        }
        if !(self.c_cong_kmh.is_finite() && self.c_cong_kmh < 0.0) {
            return Err(Error::Validation("classifier c_cong must be negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassReason {
    /// Texture energy and mean speed both qualify.
    Homogeneous,
    /// Elongated along the congested characteristic.
    WaveAligned,
    /// Neither test passed; congested regions default to disturbances.
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub kind: Kind,
    pub reason: ClassReason,
    pub energy: Option<f64>,
    pub mean_speed: f64,
    /// Principal-axis slope, km/min (`None` for a purely spatial axis).
    pub slope: Option<f64>,
    pub elongation: f64,
}

/// Principal axis of the cell cloud in (minutes, scaled km) coordinates,
/// where space is divided by the characteristic speed so that waves run at
/// 45 degrees. Returns (slope km/min, elongation).
fn principal_axis(field: &SpeedField, region: &Mask, c_cong_kmh: f64) -> (Option<f64>, f64) {
    let wave = c_cong_kmh.abs() / 60.0;
    let pts: Vec<(f64, f64)> = region
        .cells()
        .map(|(i, j)| (field.time(j), field.position(i) / wave))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (None, 1.0);
    }
    let (mu, mv) = pts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
    let (mut suu, mut svv, mut suv) = (0.0, 0.0, 0.0);
    for (u, v) in &pts {
        suu += (u - mu) * (u - mu) / n;
        svv += (v - mv) * (v - mv) / n;
        suv += (u - mu) * (v - mv) / n;
    }
    let half_trace = 0.5 * (suu + svv);
    let disc = (0.25 * (suu - svv).powi(2) + suv * suv).sqrt();
    let (l1, l2) = (half_trace + disc, half_trace - disc);
    // eigenvector of l1
    let (du, dv) = if suv.abs() > 1e-12 {
        (l1 - svv, suv)
    } else if suu >= svv {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let slope = (du.abs() > 1e-12).then(|| dv / du * wave);
    let elongation = if l2 > 1e-12 { (l1 / l2).sqrt() } else { f64::INFINITY };
    (slope, elongation)
}

/// Labels a congested region as homogeneous congestion or a disturbance.
pub fn classify_region(field: &SpeedField, region: &Mask, cfg: &ClassifierConfig) -> Classification {
    let cells = region.count().max(1) as f64;
    let mean_speed = region.cells().map(|(i, j)| field.get(i, j)).sum::<f64>() / cells;
    let energy = glcm_energy(field, region, cfg.levels, cfg.offset).ok();
    let (slope, elongation) = principal_axis(field, region, cfg.c_cong_kmh);

    let (kind, reason) = if energy.is_some_and(|e| e >= cfg.e_min) && mean_speed <= cfg.v_homog {
        (Kind::Homogeneous, ClassReason::Homogeneous)
    } else if slope.is_some_and(|s| (s - cfg.c_cong_kmh / 60.0).abs() <= cfg.slope_tol) && elongation >= cfg.r_min {
        (Kind::Disturbance, ClassReason::WaveAligned)
    } else {
        (Kind::Disturbance, ClassReason::Default)
    };
    Classification {
        kind,
        reason,
        energy,
        mean_speed,
        slope,
        elongation,
    }
}

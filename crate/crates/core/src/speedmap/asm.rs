//! Adaptive smoothing of sparse detector data onto a uniform grid.
//!
//! Every output cell blends two kernel-smoothed estimates: one whose kernel is
//! sheared along free-flow waves (`c_free`) and one sheared along congested
//! waves (`c_cong`). The blend weight moves smoothly from the free to the
//! congested estimate as the congested estimate falls below `v_crit`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridMeta, SpeedField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AsmConfig {
    /// Free-flow wave speed, km/h (downstream-moving, positive).
    pub c_free_kmh: f64,
    /// Congested wave speed, km/h (upstream-moving, negative).
    pub c_cong_kmh: f64,
    pub v_crit_kmh: f64,
    pub transition_width_kmh: f64,
    pub sigma_km: f64,
    pub tau_min: f64,
}

impl Default for AsmConfig {
    fn default() -> Self {
        Self {
            c_free_kmh: 80.0,
            c_cong_kmh: -18.0,
            v_crit_kmh: 60.0,
            transition_width_kmh: 10.0,
            sigma_km: 0.6,
            tau_min: 1.1,
        }
    }
}

impl AsmConfig {
    fn validate(&self) -> Result<()> {
        let positive = [self.sigma_km, self.tau_min, self.transition_width_kmh];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Validation("ASM kernel widths must be positive".into()));
        }
        if !(self.c_free_kmh.is_finite() && self.c_free_kmh > 0.0) {
            return Err(Error::Validation("c_free must be positive".into()));
        }
        if !(self.c_cong_kmh.is_finite() && self.c_cong_kmh < 0.0) {
            return Err(Error::Validation("c_cong must be negative".into()));
        }
        Ok(())
    }
}

/// Speeds reported by one fixed detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSeries {
    pub position_km: f64,
    pub timestamps_min: Vec<f64>,
    pub speeds_kmh: Vec<f64>,
}

impl DetectorSeries {
    fn validate(&self) -> Result<()> {
        if self.timestamps_min.len() != self.speeds_kmh.len() {
            return Err(Error::Validation(format!(
                "detector at {} km has {} timestamps but {} speeds",
                self.position_km,
                self.timestamps_min.len(),
                self.speeds_kmh.len()
            )));
        }
        if self.timestamps_min.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::Validation(format!(
                "detector at {} km: timestamps must be strictly increasing",
                self.position_km
            )));
        }
        if self.speeds_kmh.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation(format!(
                "detector at {} km reports a negative or non-finite speed",
                self.position_km
            )));
        }
        Ok(())
    }
}

/// Target grid for reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(flatten)]
    pub meta: GridMeta,
    pub n_space: usize,
    pub n_time: usize,
}

/// Both kernel estimates at one point and their blend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsmPoint {
    pub free: f64,
    pub cong: f64,
    /// Weight of the congested estimate, in [0, 1].
    pub weight: f64,
    pub speed: f64,
}

struct Sample {
    x: f64,
    t: f64,
    v: f64,
}

fn samples(detectors: &[DetectorSeries]) -> Vec<Sample> {
    detectors
        .iter()
        .flat_map(|d| {
            d.timestamps_min
                .iter()
                .zip(&d.speeds_kmh)
                .map(move |(&t, &v)| Sample { x: d.position_km, t, v })
        })
        .collect()
}

/// Kernel-weighted mean with the kernel sheared along waves of speed `c_kmh`.
/// Exponents are shifted by their maximum before exponentiation so that cells
/// far from every sample still get a well-defined estimate.
fn sheared_mean(samples: &[Sample], x: f64, t: f64, c_kmh: f64, cfg: &AsmConfig, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(samples.iter().map(|s| {
        let dx = x - s.x;
        let dt = t - s.t - dx / c_kmh * 60.0;
        -dx.abs() / cfg.sigma_km - dt.abs() / cfg.tau_min
    }));
    let peak = scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (s, e) in samples.iter().zip(scratch.iter()) {
        let w = (e - peak).exp();
        num += w * s.v;
        den += w;
    }
    num / den
}

fn blend(free: f64, cong: f64, cfg: &AsmConfig) -> AsmPoint {
    let weight = 0.5 * (1.0 + ((cfg.v_crit_kmh - cong) / cfg.transition_width_kmh).tanh());
    AsmPoint {
        free,
        cong,
        weight,
        speed: weight * cong + (1.0 - weight) * free,
    }
}

/// Evaluates both kernels at a single point `(x km, t min)`.
pub fn asm_estimate(detectors: &[DetectorSeries], x: f64, t: f64, cfg: &AsmConfig) -> Result<AsmPoint> {
    cfg.validate()?;
    let samples = samples(detectors);
    if samples.is_empty() {
        return Err(Error::Validation("no detector samples".into()));
    }
    let mut scratch = Vec::new();
    let free = sheared_mean(&samples, x, t, cfg.c_free_kmh, cfg, &mut scratch);
    let cong = sheared_mean(&samples, x, t, cfg.c_cong_kmh, cfg, &mut scratch);
    Ok(blend(free, cong, cfg))
}

/// Reconstructs a full grid. Each cell is evaluated at its centre.
pub fn asm_reconstruct(detectors: &[DetectorSeries], grid: &GridSpec, cfg: &AsmConfig) -> Result<SpeedField> {
    cfg.validate()?;
    grid.meta.validate()?;
    if detectors.is_empty() {
        return Err(Error::Validation("at least one detector is required".into()));
    }
    if grid.n_space == 0 || grid.n_time == 0 {
        return Err(Error::Validation("grid must have at least one cell".into()));
    }
    let lo = grid.meta.x0;
    let hi = grid.meta.x0 + grid.n_space as f64 * grid.meta.dx;
    for d in detectors {
        d.validate()?;
        if !(d.position_km >= lo && d.position_km <= hi) {
            return Err(Error::Validation(format!(
                "detector at {} km lies outside the grid [{lo}, {hi}] km",
                d.position_km
            )));
        }
    }
    let samples = samples(detectors);
    if samples.is_empty() {
        return Err(Error::Validation("detectors carry no samples".into()));
    }

    let meta = &grid.meta;
    let values: Vec<f64> = (0..grid.n_space)
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = meta.x0 + (i as f64 + 0.5) * meta.dx;
            let mut scratch = Vec::with_capacity(samples.len());
            let samples = &samples;
            (0..grid.n_time)
                .map(move |j| {
                    let t = meta.t0 + (j as f64 + 0.5) * meta.dt;
                    let free = sheared_mean(samples, x, t, cfg.c_free_kmh, cfg, &mut scratch);
                    let cong = sheared_mean(samples, x, t, cfg.c_cong_kmh, cfg, &mut scratch);
                    blend(free, cong, cfg).speed
                })
                .collect::<Vec<_>>()
        })
        .collect();

    Ok(SpeedField::from_parts_unchecked(
        meta.clone(),
        grid.n_space,
        grid.n_time,
        values,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n_space: usize, n_time: usize) -> GridSpec {
        GridSpec {
            meta: GridMeta::default(),
            n_space,
            n_time,
        }
    }

    fn constant_detector(x: f64, v: f64, minutes: usize) -> DetectorSeries {
        DetectorSeries {
            position_km: x,
            timestamps_min: (0..minutes).map(|m| m as f64).collect(),
            speeds_kmh: vec![v; minutes],
        }
    }

    /// Direct, unstabilised evaluation of one sheared kernel.
    fn naive_kernel(d: &[DetectorSeries], x: f64, t: f64, c: f64, cfg: &AsmConfig) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for det in d {
            for (&ts, &v) in det.timestamps_min.iter().zip(&det.speeds_kmh) {
                let dx = x - det.position_km;
                let w = (-dx.abs() / cfg.sigma_km - (t - ts - dx / c * 60.0).abs() / cfg.tau_min).exp();
                num += w * v;
                den += w;
            }
        }
        num / den
    }

    #[test]
    fn constant_signal_is_a_fixed_point() {
        let cfg = AsmConfig::default();
        let f = asm_reconstruct(&[constant_detector(1.0, 100.0, 30)], &grid(20, 60), &cfg).unwrap();
        assert!(f.values().iter().all(|v| (v - 100.0).abs() < 1e-6));

        let dets = [constant_detector(0.3, 30.0, 30), constant_detector(1.7, 30.0, 30)];
        let f = asm_reconstruct(&dets, &grid(20, 60), &cfg).unwrap();
        assert!(f.values().iter().all(|v| (v - 30.0).abs() < 1e-6));
    }

    #[test]
    fn errors_on_bad_inputs() {
        let cfg = AsmConfig::default();
        assert!(asm_reconstruct(&[], &grid(5, 5), &cfg).is_err());
        let far = constant_detector(25.0, 80.0, 5);
        assert!(asm_reconstruct(&[far], &grid(5, 5), &cfg).is_err());
        let mut bad = constant_detector(0.2, 80.0, 5);
        bad.timestamps_min[3] = bad.timestamps_min[2];
        assert!(asm_reconstruct(&[bad], &grid(5, 5), &cfg).is_err());
    }

    #[test]
    fn step_down_is_tracked_by_the_congested_kernel() {
        let cfg = AsmConfig::default();
        // traffic breaks down at the downstream detector after minute 20
        let mut down = constant_detector(3.0, 100.0, 60);
        for (t, v) in down.timestamps_min.iter().zip(down.speeds_kmh.iter_mut()) {
            if *t >= 20.0 {
                *v = 20.0;
            }
        }
        let up = constant_detector(1.0, 100.0, 60);
        let dets = vec![up, down];

        // 1 km upstream of the step the congested wave arrives 1/18 h later
        let x = 2.0;
        let t = 20.0 + 60.0 / 18.0 + 5.0;
        let est = asm_estimate(&dets, x, t, &cfg).unwrap();
        let free_only = naive_kernel(&dets, x, t, cfg.c_free_kmh, &cfg);
        let cong_only = naive_kernel(&dets, x, t, cfg.c_cong_kmh, &cfg);
        assert!((est.free - free_only).abs() < 1e-9);
        assert!((est.cong - cong_only).abs() < 1e-9);
        assert!((est.speed - 20.0).abs() < (free_only - 20.0).abs());
    }

    #[test]
    fn output_stays_in_input_range() {
        let cfg = AsmConfig::default();
        let dets: Vec<DetectorSeries> = (0..4)
            .map(|k| DetectorSeries {
                position_km: 0.5 * k as f64,
                timestamps_min: (0..40).map(|m| m as f64 * 1.5).collect(),
                speeds_kmh: (0..40).map(|m| 15.0 + ((m * 7 + k * 13) % 90) as f64).collect(),
            })
            .collect();
        let lo = dets.iter().flat_map(|d| d.speeds_kmh.iter().copied()).fold(f64::INFINITY, f64::min);
        let hi = dets.iter().flat_map(|d| d.speeds_kmh.iter().copied()).fold(0.0, f64::max);
        let f = asm_reconstruct(&dets, &grid(16, 100), &cfg).unwrap();
        assert!(f.values().iter().all(|v| *v >= lo - 1e-9 && *v <= hi + 1e-9));
        let again = asm_reconstruct(&dets, &grid(16, 100), &cfg).unwrap();
        assert_eq!(f, again);
    }
}

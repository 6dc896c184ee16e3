//! Synthetic congestion patterns with exact ground truth.
//!
//! Fields are painted back to front: free flow, homogeneous regions,
//! disturbance bands (slope = propagation speed), then bottleneck queues.
//! The ground-truth mask of a primitive is the set of cells it still owns
//! after all later layers are painted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GridMeta, SpeedField};
use crate::error::{Error, Result};
use crate::primitives::{Kind, Mask, PrimitiveInstance, PrimitiveSet};

/// A stationary queue held just upstream of `position_km`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckSpec {
    pub position_km: f64,
    pub start_min: f64,
    pub end_min: f64,
    pub queue_speed: f64,
    #[serde(default = "default_queue_length")]
    pub queue_length_km: f64,
}

fn default_queue_length() -> f64 {
    0.3
}

/// A band starting at `origin` and travelling upstream at `propagation_kmh`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub origin_t_min: f64,
    pub origin_x_km: f64,
    #[serde(default = "default_propagation")]
    pub propagation_kmh: f64,
    #[serde(default = "default_width")]
    pub width_min: f64,
    pub interior_speed: f64,
    /// Distance travelled upstream before the band dissolves, km.
    pub travel_km: f64,
    /// Index into `SyntheticSpec::bottlenecks`.
    #[serde(default)]
    pub triggered_by: Option<usize>,
}

fn default_propagation() -> f64 {
    -18.0
}

fn default_width() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousSpec {
    pub x_start_km: f64,
    pub x_end_km: f64,
    pub t_start_min: f64,
    pub t_end_min: f64,
    pub interior_speed: f64,
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default)]
    pub triggered_by: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub meta: GridMeta,
    pub extent_km: f64,
    pub duration_min: f64,
    #[serde(default = "default_free_speed")]
    pub free_speed: f64,
    #[serde(default)]
    pub bottlenecks: Vec<BottleneckSpec>,
    #[serde(default)]
    pub disturbances: Vec<DisturbanceSpec>,
    #[serde(default)]
    pub homogeneous: Vec<HomogeneousSpec>,
    #[serde(default)]
    pub seed: u64,
}

fn default_free_speed() -> f64 {
    100.0
}

impl SyntheticSpec {
    pub fn free_flow(extent_km: f64, duration_min: f64) -> Self {
        Self {
            meta: GridMeta::default(),
            extent_km,
            duration_min,
            free_speed: default_free_speed(),
            bottlenecks: Vec::new(),
            disturbances: Vec::new(),
            homogeneous: Vec::new(),
            seed: 0,
        }
    }

    fn dims(&self) -> (usize, usize) {
        (
            (self.extent_km / self.meta.dx - 1e-9).ceil() as usize,
            (self.duration_min / self.meta.dt - 1e-9).ceil() as usize,
        )
    }
}

/// One painted primitive as it appears in the generated field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPrimitive {
    pub kind: Kind,
    /// Index into the corresponding spec list.
    pub spec_index: usize,
    pub mask: Mask,
    pub interior_speed: f64,
    pub noise_amplitude: f64,
    /// Bottleneck spec index of the trigger, if any.
    pub triggered_by: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub primitives: Vec<TruthPrimitive>,
    pub cell_area: f64,
}

impl GroundTruth {
    pub fn count(&self, kind: Kind) -> usize {
        self.primitives.iter().filter(|p| p.kind == kind).count()
    }

    pub fn counts(&self) -> [usize; 3] {
        [
            self.count(Kind::Bottleneck),
            self.count(Kind::Disturbance),
            self.count(Kind::Homogeneous),
        ]
    }

    /// The painted primitives as a primitive set plus `(parent, child)`
    /// trigger pairs over its instance indices.
    pub fn to_primitive_set(&self, field: &SpeedField) -> Result<(PrimitiveSet, Vec<(usize, usize)>)> {
        let mut instances = Vec::with_capacity(self.primitives.len());
        let mut bottleneck_instance = Vec::new();
        for p in &self.primitives {
            if p.kind == Kind::Bottleneck {
                bottleneck_instance.push((p.spec_index, instances.len()));
            }
            instances.push(PrimitiveInstance::from_mask(field, p.kind, p.mask.clone())?);
        }
        let mut triggers = Vec::new();
        for (child, p) in self.primitives.iter().enumerate() {
            if let Some(b) = p.triggered_by {
                if let Some(&(_, parent)) = bottleneck_instance.iter().find(|(s, _)| *s == b) {
                    triggers.push((parent, child));
                }
            }
        }
        let cells: usize = self.primitives.iter().map(|p| p.mask.count()).sum();
        Ok((
            PrimitiveSet {
                instances,
                total_congested_area: cells as f64 * self.cell_area,
                meta: field.meta().clone(),
            },
            triggers,
        ))
    }
}

fn validate(spec: &SyntheticSpec) -> Result<()> {
    spec.meta.validate()?;
    let bad = |msg: String| Err(Error::Validation(msg));
    if !(spec.extent_km > 0.0 && spec.duration_min > 0.0) {
        return bad("extent and duration must be positive".into());
    }
    if !(spec.free_speed.is_finite() && spec.free_speed >= 0.0) {
        return bad("free speed must be non-negative".into());
    }
    let (x_lo, x_hi) = (spec.meta.x0, spec.meta.x0 + spec.extent_km);
    let (t_lo, t_hi) = (spec.meta.t0, spec.meta.t0 + spec.duration_min);
    let eps = 1e-9;
    let inside = |x: f64, t: f64| x >= x_lo - eps && x <= x_hi + eps && t >= t_lo - eps && t <= t_hi + eps;
    let speed_ok = |v: f64| v.is_finite() && v >= 0.0;

    for (k, b) in spec.bottlenecks.iter().enumerate() {
        if !(b.end_min > b.start_min && b.queue_length_km > 0.0 && speed_ok(b.queue_speed)) {
            return bad(format!("bottleneck {k}: empty activation, queue or bad speed"));
        }
        if !inside(b.position_km - b.queue_length_km, b.start_min) || !inside(b.position_km, b.end_min) {
            return bad(format!("bottleneck {k} lies outside the extent"));
        }
    }
    for (a, ba) in spec.bottlenecks.iter().enumerate() {
        for (b, bb) in spec.bottlenecks.iter().enumerate().skip(a + 1) {
            let overlap_x = ba.position_km - ba.queue_length_km < bb.position_km
                && bb.position_km - bb.queue_length_km < ba.position_km;
            let overlap_t = ba.start_min < bb.end_min && bb.start_min < ba.end_min;
            if overlap_x && overlap_t && ba.queue_speed != bb.queue_speed {
                return bad(format!("bottleneck queues {a} and {b} overlap with contradictory speeds"));
            }
        }
    }
    let trigger_ok = |t: Option<usize>| t.is_none_or(|b| b < spec.bottlenecks.len());
    for (k, d) in spec.disturbances.iter().enumerate() {
        if !(d.propagation_kmh.is_finite() && d.propagation_kmh < 0.0) {
            return bad(format!("disturbance {k}: propagation speed must be negative (upstream-moving)"));
        }
        if !(d.width_min > 0.0 && d.travel_km > 0.0 && speed_ok(d.interior_speed)) {
            return bad(format!("disturbance {k}: width, travel and speed must be positive"));
        }
        let end_t = d.origin_t_min + d.travel_km / d.propagation_kmh.abs() * 60.0 + d.width_min;
        if !inside(d.origin_x_km, d.origin_t_min) || !inside(d.origin_x_km - d.travel_km, end_t) {
            return bad(format!("disturbance {k} lies outside the extent"));
        }
        if !trigger_ok(d.triggered_by) {
            return bad(format!("disturbance {k} names a missing bottleneck"));
        }
    }
    for (k, h) in spec.homogeneous.iter().enumerate() {
        if !(h.x_end_km > h.x_start_km && h.t_end_min > h.t_start_min && speed_ok(h.interior_speed)) {
            return bad(format!("homogeneous region {k} is empty or has a bad speed"));
        }
        if !(h.noise_amplitude.is_finite() && h.noise_amplitude >= 0.0) {
            return bad(format!("homogeneous region {k}: noise amplitude must be non-negative"));
        }
        if !inside(h.x_start_km, h.t_start_min) || !inside(h.x_end_km, h.t_end_min) {
            return bad(format!("homogeneous region {k} lies outside the extent"));
        }
        if !trigger_ok(h.triggered_by) {
            return bad(format!("homogeneous region {k} names a missing bottleneck"));
        }
    }
    Ok(())
}

/// Paints the field described by `spec` and records what was painted.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<(SpeedField, GroundTruth)> {
    validate(spec)?;
    let (ns, nt) = spec.dims();
    let meta = &spec.meta;
    let x = |i: usize| meta.x0 + (i as f64 + 0.5) * meta.dx;
    let t = |j: usize| meta.t0 + (j as f64 + 0.5) * meta.dt;

    let mut values = vec![spec.free_speed; ns * nt];
    // index into `layers`, usize::MAX for free flow
    let mut owner = vec![usize::MAX; ns * nt];
    let mut layers: Vec<(Kind, usize, f64, f64, Option<usize>)> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    for (k, h) in spec.homogeneous.iter().enumerate() {
        let layer = layers.len();
        layers.push((Kind::Homogeneous, k, h.interior_speed, h.noise_amplitude, h.triggered_by));
        for i in 0..ns {
            if !(x(i) >= h.x_start_km && x(i) < h.x_end_km) {
                continue;
            }
            for j in 0..nt {
                if t(j) >= h.t_start_min && t(j) < h.t_end_min {
                    let noise = if h.noise_amplitude > 0.0 {
                        rng.gen_range(-h.noise_amplitude..=h.noise_amplitude)
                    } else {
                        0.0
                    };
                    values[i * nt + j] = (h.interior_speed + noise).max(0.0);
                    owner[i * nt + j] = layer;
                }
            }
        }
    }
    for (k, d) in spec.disturbances.iter().enumerate() {
        let layer = layers.len();
        layers.push((Kind::Disturbance, k, d.interior_speed, 0.0, d.triggered_by));
        for i in 0..ns {
            let xi = x(i);
            if !(xi <= d.origin_x_km && xi > d.origin_x_km - d.travel_km) {
                continue;
            }
            let start = d.origin_t_min + (xi - d.origin_x_km) / d.propagation_kmh * 60.0;
            for j in 0..nt {
                if t(j) >= start && t(j) < start + d.width_min {
                    values[i * nt + j] = d.interior_speed;
                    owner[i * nt + j] = layer;
                }
            }
        }
    }
    for (k, b) in spec.bottlenecks.iter().enumerate() {
        let layer = layers.len();
        layers.push((Kind::Bottleneck, k, b.queue_speed, 0.0, None));
        for i in 0..ns {
            if !(x(i) >= b.position_km - b.queue_length_km && x(i) < b.position_km) {
                continue;
            }
            for j in 0..nt {
                if t(j) >= b.start_min && t(j) < b.end_min {
                    values[i * nt + j] = b.queue_speed;
                    owner[i * nt + j] = layer;
                }
            }
        }
    }

    let mut masks = vec![Mask::empty(ns, nt); layers.len()];
    for (idx, &o) in owner.iter().enumerate() {
        if o != usize::MAX {
            masks[o].insert(idx / nt, idx % nt);
        }
    }
    let mut primitives = Vec::new();
    // bottlenecks first so that truth instance order matches extraction order
    let order = [Kind::Bottleneck, Kind::Disturbance, Kind::Homogeneous];
    for kind in order {
        for (layer, &(k_kind, spec_index, speed, noise, trig)) in layers.iter().enumerate() {
            if k_kind != kind {
                continue;
            }
            if masks[layer].is_empty() {
                return Err(Error::Validation(format!(
                    "{kind} primitive {spec_index} covers no cell or is hidden by later layers"
                )));
            }
            primitives.push(TruthPrimitive {
                kind,
                spec_index,
                mask: masks[layer].clone(),
                interior_speed: speed,
                noise_amplitude: noise,
                triggered_by: trig,
            });
        }
    }

    let field = SpeedField::new(meta.clone(), ns, nt, values)?;
    Ok((
        field,
        GroundTruth {
            primitives,
            cell_area: meta.cell_area(),
        },
    ))
}

/// Ready-made pattern families used for corpora and demos.
pub mod scenarios {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
    #[serde(rename_all = "kebab-case")]
    pub enum Family {
        SingleDisturbance,
        StopAndGo,
        Homogeneous,
        Mixed,
    }

    impl Family {
        pub const ALL: [Family; 4] = [
            Family::SingleDisturbance,
            Family::StopAndGo,
            Family::Homogeneous,
            Family::Mixed,
        ];

        pub fn name(self) -> &'static str {
            match self {
                Family::SingleDisturbance => "single-disturbance",
                Family::StopAndGo => "stop-and-go",
                Family::Homogeneous => "homogeneous",
                Family::Mixed => "mixed",
            }
        }

        pub fn spec(self, seed: u64) -> SyntheticSpec {
            match self {
                Family::SingleDisturbance => single_disturbance(seed),
                Family::StopAndGo => stop_and_go(seed),
                Family::Homogeneous => homogeneous(seed),
                Family::Mixed => mixed(seed),
            }
        }
    }

    impl std::str::FromStr for Family {
        type Err = String;

        fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
            Family::ALL
                .into_iter()
                .find(|f| f.name() == s)
                .ok_or_else(|| format!("unknown scenario `{s}`"))
        }
    }

    fn rng(seed: u64, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    /// Positions and times snap to cell boundaries so that painted
    /// footprints never depend on rounding.
    fn snap(v: f64, step: f64) -> f64 {
        (v / step).round() * step
    }

    struct Queue {
        index: usize,
        position: f64,
        start: f64,
        end: f64,
        queue_length: f64,
    }

    fn add_queue(spec: &mut SyntheticSpec, r: &mut ChaCha8Rng, position: f64, start: f64, end: f64) -> Queue {
        let index = spec.bottlenecks.len();
        spec.bottlenecks.push(BottleneckSpec {
            position_km: position,
            start_min: start,
            end_min: end,
            queue_speed: snap(r.gen_range(45.0..56.0), 0.5),
            queue_length_km: 0.3,
        });
        Queue {
            index,
            position,
            start,
            end,
            queue_length: 0.3,
        }
    }

    /// A homogeneous block directly upstream of the queue at activation onset.
    /// Returns the minute at which it ends.
    fn add_block(spec: &mut SyntheticSpec, r: &mut ChaCha8Rng, q: &Queue, length_km: f64, minutes: f64) -> f64 {
        let top = q.position - q.queue_length;
        let interior = if r.gen_bool(0.5) {
            snap(r.gen_range(6.0..11.0), 0.5)
        } else {
            snap(r.gen_range(19.0..26.0), 0.5)
        };
        spec.homogeneous.push(HomogeneousSpec {
            x_start_km: snap(top - length_km, 0.1),
            x_end_km: top,
            t_start_min: q.start,
            t_end_min: q.start + minutes,
            interior_speed: interior,
            noise_amplitude: r.gen_range(0.5..2.0),
            triggered_by: Some(q.index),
        });
        q.start + minutes
    }

    /// `count` bands emitted from the queue head starting at `from` minutes.
    fn add_waves(spec: &mut SyntheticSpec, r: &mut ChaCha8Rng, q: &Queue, from: f64, count: usize, max_travel: f64) {
        let mut t0 = from;
        for _ in 0..count {
            let width = 3.0;
            if t0 + width > q.end {
                break;
            }
            spec.disturbances.push(DisturbanceSpec {
                origin_t_min: t0,
                origin_x_km: q.position - q.queue_length,
                propagation_kmh: -18.0,
                width_min: width,
                interior_speed: snap(r.gen_range(34.0..52.0), 0.5),
                travel_km: snap(r.gen_range(1.2..max_travel), 0.1),
                triggered_by: Some(q.index),
            });
            t0 += snap(r.gen_range(5.0..7.5), 0.5);
        }
    }

    /// One free-standing disturbance.
    pub fn single_disturbance(seed: u64) -> SyntheticSpec {
        let mut r = rng(seed, 1);
        let mut spec = SyntheticSpec::free_flow(6.0, 60.0);
        spec.seed = seed;
        spec.disturbances.push(DisturbanceSpec {
            origin_t_min: snap(r.gen_range(5.0..15.0), 0.5),
            origin_x_km: snap(r.gen_range(4.0..5.5), 0.1),
            propagation_kmh: -18.0,
            width_min: snap(r.gen_range(2.5..3.5), 0.5),
            interior_speed: snap(r.gen_range(34.0..50.0), 0.5),
            travel_km: snap(r.gen_range(1.5..3.5), 0.1),
            triggered_by: None,
        });
        spec
    }

    /// A bottleneck emitting a train of stop-and-go waves.
    pub fn stop_and_go(seed: u64) -> SyntheticSpec {
        let mut r = rng(seed, 2);
        let mut spec = SyntheticSpec::free_flow(6.0, 130.0);
        spec.seed = seed;
        let waves = r.gen_range(8..=13);
        let start = snap(r.gen_range(5.0..12.0), 0.5);
        let q = add_queue(&mut spec, &mut r, 5.5, start, start + 7.0 * waves as f64 + 4.0);
        add_waves(&mut spec, &mut r, &q, start + 1.0, waves, 3.0);
        spec
    }

    /// A bottleneck with heavy homogeneous congestion and at most one wave.
    pub fn homogeneous(seed: u64) -> SyntheticSpec {
        let mut r = rng(seed, 3);
        let mut spec = SyntheticSpec::free_flow(6.0, 90.0);
        spec.seed = seed;
        let start = snap(r.gen_range(5.0..12.0), 0.5);
        let minutes = snap(r.gen_range(20.0..50.0), 0.5);
        let q = add_queue(&mut spec, &mut r, 5.5, start, start + minutes + 10.0);
        let length = snap(r.gen_range(1.5..4.0), 0.1);
        let ends = add_block(&mut spec, &mut r, &q, length, minutes);
        if r.gen_bool(0.3) {
            add_waves(&mut spec, &mut r, &q, ends + 2.5, 1, 2.0);
        }
        spec
    }

    /// Two bottlenecks, one with homogeneous congestion, both with waves.
    pub fn mixed(seed: u64) -> SyntheticSpec {
        let mut r = rng(seed, 4);
        let mut spec = SyntheticSpec::free_flow(9.0, 110.0);
        spec.seed = seed;
        let s1 = snap(r.gen_range(5.0..10.0), 0.5);
        let q1 = add_queue(&mut spec, &mut r, 8.5, s1, s1 + 70.0);
        let block = snap(r.gen_range(10.0..20.0), 0.5);
        let ends = add_block(&mut spec, &mut r, &q1, 1.2, block);
        let count = r.gen_range(3..=6);
        add_waves(&mut spec, &mut r, &q1, ends + 2.5, count, 2.2);

        let s2 = snap(r.gen_range(20.0..35.0), 0.5);
        let q2 = add_queue(&mut spec, &mut r, 4.5, s2, s2 + 50.0);
        let count = r.gen_range(2..=5);
        add_waves(&mut spec, &mut r, &q2, s2 + 1.0, count, 3.0);
        spec
    }

    /// Bottleneck with one homogeneous region at onset followed by six
    /// disturbances.
    pub fn bottleneck_homogeneous_six_waves() -> SyntheticSpec {
        let mut spec = SyntheticSpec::free_flow(6.0, 90.0);
        spec.seed = 2;
        spec.bottlenecks.push(BottleneckSpec {
            position_km: 5.0,
            start_min: 10.0,
            end_min: 70.0,
            queue_speed: 50.0,
            queue_length_km: 0.3,
        });
        spec.homogeneous.push(HomogeneousSpec {
            x_start_km: 2.5,
            x_end_km: 4.7,
            t_start_min: 10.0,
            t_end_min: 30.0,
            interior_speed: 10.0,
            noise_amplitude: 1.5,
            triggered_by: Some(0),
        });
        for k in 0..6 {
            spec.disturbances.push(DisturbanceSpec {
                origin_t_min: 32.5 + 5.5 * k as f64,
                origin_x_km: 4.7,
                propagation_kmh: -18.0,
                width_min: 3.0,
                interior_speed: 40.0 + k as f64,
                travel_km: 1.8 + 0.2 * k as f64,
                triggered_by: Some(0),
            });
        }
        spec
    }
}

//! Bottleneck fronts from speed drops along the congested characteristic.
//!
//! A congested cell is a front candidate when the cell one row downstream,
//! sampled one characteristic step earlier (the congested wave moves
//! upstream at `c_cong`), lies in free flow and is faster by more than
//! `g_min`. Inside a disturbance band that follows the characteristic the
//! downstream sample stays in the band, so only stationary discontinuities
//! survive. Candidates must persist for `p_min` minutes on one row; rows
//! within `row_tolerance` of each other with overlapping activity merge into
//! one bottleneck.

use serde::{Deserialize, Serialize};

use super::{origin_cell, BottleneckFront, Kind, Mask, PrimitiveInstance};
use crate::error::{Error, Result};
use crate::speedmap::SpeedField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BottleneckConfig {
    pub c_cong_kmh: f64,
    /// Minimum downstream-minus-upstream speed jump, km/h.
    pub g_min_kmh: f64,
    /// Minimum activation length at one position, minutes.
    pub p_min_min: f64,
    /// Depth of the front band kept as the bottleneck's mask, km.
    pub band_km: f64,
    /// Band cells must stay within this speed of the front cell, km/h.
    pub band_speed_tol_kmh: f64,
    /// Rows that may separate runs belonging to one front.
    pub row_tolerance: usize,
    /// Missing front cells tolerated inside one run.
    pub max_gap_cells: usize,
}

impl Default for BottleneckConfig {
    fn default() -> Self {
        Self {
            c_cong_kmh: -18.0,
            g_min_kmh: 20.0,
            p_min_min: 4.0,
            band_km: 0.3,
            band_speed_tol_kmh: 10.0,
            row_tolerance: 1,
            max_gap_cells: 1,
        }
    }
}

impl BottleneckConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.c_cong_kmh.is_finite() && self.c_cong_kmh < 0.0) {
            return Err(Error::Validation("bottleneck c_cong must be negative".into()));
        }
        if !(self.g_min_kmh.is_finite() && self.g_min_kmh >= 0.0) {
            return Err(Error::Validation("g_min must be non-negative".into()));
        }
        if !(self.p_min_min.is_finite() && self.p_min_min >= 0.0) {
            return Err(Error::Validation("p_min must be non-negative".into()));
        }
        if !(self.band_km.is_finite() && self.band_km >= 0.0) {
            return Err(Error::Validation("band_km must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Run {
    row: usize,
    start: usize,
    end: usize,
    cells: Vec<usize>,
}

fn is_front(field: &SpeedField, fg: &Mask, i: usize, j: usize, shift: f64, g_min: f64) -> bool {
    if i + 1 >= field.n_space() || !fg.contains(i, j) {
        return false;
    }
    let tj = j as f64 - shift;
    if tj < 0.0 {
        return false;
    }
    let lo = tj.floor() as usize;
    let hi = (lo + 1).min(field.n_time() - 1);
    let frac = tj - lo as f64;
    let v_down = field.get(i + 1, lo) * (1.0 - frac) + field.get(i + 1, hi) * frac;
    let nearest = (tj.round() as usize).min(field.n_time() - 1);
    !fg.contains(i + 1, nearest) && v_down - field.get(i, j) > g_min
}

fn row_runs(front: &[bool], row: usize, nt: usize, max_gap: usize) -> Vec<Run> {
    let mut runs = Vec::new();
    let mut current: Option<Run> = None;
    for j in 0..nt {
        if !front[row * nt + j] {
            continue;
        }
        match current.as_mut() {
            Some(run) if j - run.end <= max_gap + 1 => {
                run.end = j;
                run.cells.push(j);
            }
            _ => {
                if let Some(done) = current.take() {
                    runs.push(done);
                }
                current = Some(Run {
                    row,
                    start: j,
                    end: j,
                    cells: vec![j],
                });
            }
        }
    }
    runs.extend(current);
    runs
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = x;
    while parent[cur] != root {
        let next = parent[cur];
        parent[cur] = root;
        cur = next;
    }
    root
}

/// Detects bottleneck fronts inside the congested `foreground`.
pub fn detect_bottlenecks(field: &SpeedField, foreground: &Mask, cfg: &BottleneckConfig) -> Vec<PrimitiveInstance> {
    let (ns, nt) = (field.n_space(), field.n_time());
    let meta = field.meta();
    let shift = meta.dx / cfg.c_cong_kmh.abs() * 60.0 / meta.dt;

    let mut front = vec![false; ns * nt];
    for i in 0..ns {
        for j in 0..nt {
            front[i * nt + j] = is_front(field, foreground, i, j, shift, cfg.g_min_kmh);
        }
    }

    let min_cells = (cfg.p_min_min / meta.dt - 1e-9).ceil().max(1.0) as usize;
    let runs: Vec<Run> = (0..ns)
        .flat_map(|i| row_runs(&front, i, nt, cfg.max_gap_cells))
        .filter(|r| r.end - r.start + 1 >= min_cells)
        .collect();

    let mut parent: Vec<usize> = (0..runs.len()).collect();
    for a in 0..runs.len() {
        for b in a + 1..runs.len() {
            let (ra, rb) = (&runs[a], &runs[b]);
            if ra.row.abs_diff(rb.row) <= cfg.row_tolerance && ra.start <= rb.end && rb.start <= ra.end {
                let (x, y) = (find(&mut parent, a), find(&mut parent, b));
                parent[x.max(y)] = x.min(y);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of = vec![usize::MAX; runs.len()];
    for k in 0..runs.len() {
        let root = find(&mut parent, k);
        if group_of[root] == usize::MAX {
            group_of[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[group_of[root]].push(k);
    }

    let band_rows = ((cfg.band_km / meta.dx) + 1e-9).round().max(1.0) as usize;
    let mut claimed = Mask::empty(ns, nt);
    let mut out = Vec::new();
    for members in groups {
        let mut band = Mask::empty(ns, nt);
        let mut row_hits: Vec<(usize, usize)> = Vec::new();
        let (mut j_min, mut j_max) = (usize::MAX, 0);
        for &k in &members {
            let run = &runs[k];
            row_hits.push((run.row, run.cells.len()));
            j_min = j_min.min(run.start);
            j_max = j_max.max(run.end);
            for &j in &run.cells {
                let v_front = field.get(run.row, j);
                for depth in 0..band_rows {
                    let Some(i) = run.row.checked_sub(depth) else { break };
                    if !foreground.contains(i, j) || (field.get(i, j) - v_front).abs() > cfg.band_speed_tol_kmh {
                        break;
                    }
                    band.insert(i, j);
                }
            }
        }
        let band = band.difference(&claimed);
        let Some(mask) = band.components4().into_iter().max_by_key(Mask::count) else {
            continue;
        };
        if origin_cell(&mask).is_none() {
            continue;
        }
        claimed = claimed.union(&mask);

        // the row carrying most front cells locates the front
        row_hits.sort_by(|a, b| b.1.cmp(&a.1).then(b.0.cmp(&a.0)));
        let front_row = row_hits[0].0;
        let mut inst = PrimitiveInstance::from_mask(field, Kind::Bottleneck, mask).expect("non-empty band mask");
        inst.front = Some(BottleneckFront {
            position_km: meta.x0 + (front_row + 1) as f64 * meta.dx,
            activation_start: meta.t0 + j_min as f64 * meta.dt,
            activation_end: meta.t0 + (j_max + 1) as f64 * meta.dt,
        });
        out.push(inst);
    }
    out.sort_by(|a, b| a.origin.t.total_cmp(&b.origin.t).then(b.origin.x.total_cmp(&a.origin.x)));
    out
}

//! Marker-based watershed over the raw speed landscape.
//!
//! Markers are the regional minima left after h-minima suppression
//! (geodesic reconstruction by erosion of `speed + h` over `speed`). Basins
//! are then grown from the markers in increasing speed order. Every
//! foreground cell receives exactly one label, so the output partitions the
//! foreground and each region is 4-connected.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use super::Mask;
use crate::speedmap::SpeedField;

#[derive(PartialEq)]
struct Entry {
    level: f64,
    seq: u64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: reverse so the lowest level (then the
        // earliest insertion) pops first.
        other
            .level
            .total_cmp(&self.level)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn neighbors(idx: usize, ns: usize, nt: usize) -> impl Iterator<Item = usize> {
    let (i, j) = (idx / nt, idx % nt);
    let up = (i + 1 < ns).then(|| idx + nt);
    let down = (i > 0).then(|| idx - nt);
    let right = (j + 1 < nt).then(|| idx + 1);
    let left = (j > 0).then(|| idx - 1);
    [down, up, left, right].into_iter().flatten()
}

/// Reconstruction by erosion of `f + h` over `f`, restricted to `domain`.
/// Values outside the domain are left as `f`.
fn h_minima_surface(f: &[f64], domain: &Mask, h: f64, ns: usize, nt: usize) -> Vec<f64> {
    let mut r: Vec<f64> = f.iter().map(|v| v + h).collect();
    let mut done = vec![false; f.len()];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    for idx in 0..f.len() {
        if domain.contains_at(idx) {
            heap.push(Entry { level: r[idx], seq, idx });
            seq += 1;
        } else {
            r[idx] = f[idx];
        }
    }
    while let Some(Entry { level, idx, .. }) = heap.pop() {
        if done[idx] || level > r[idx] {
            continue;
        }
        done[idx] = true;
        for n in neighbors(idx, ns, nt) {
            if !domain.contains_at(n) || done[n] {
                continue;
            }
            let candidate = level.max(f[n]);
            if candidate < r[n] {
                r[n] = candidate;
                heap.push(Entry {
                    level: candidate,
                    seq,
                    idx: n,
                });
                seq += 1;
            }
        }
    }
    r
}

/// Regional minima of `surface` inside `domain`: 4-connected plateaus with no
/// strictly lower neighbour. Returns a label per cell (0 = none) and the
/// number of markers.
fn regional_minima(surface: &[f64], domain: &Mask, ns: usize, nt: usize) -> (Vec<u32>, u32) {
    let mut labels = vec![0u32; surface.len()];
    let mut visited = vec![false; surface.len()];
    let mut next = 0u32;
    let mut plateau = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..surface.len() {
        if !domain.contains_at(start) || visited[start] {
            continue;
        }
        let level = surface[start];
        let mut is_min = true;
        plateau.clear();
        visited[start] = true;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            plateau.push(idx);
            for n in neighbors(idx, ns, nt) {
                if !domain.contains_at(n) {
                    continue;
                }
                if surface[n] < level {
                    is_min = false;
                } else if surface[n] == level && !visited[n] {
                    visited[n] = true;
                    queue.push_back(n);
                }
            }
        }
        if is_min {
            next += 1;
            for &idx in &plateau {
                labels[idx] = next;
            }
        }
    }
    (labels, next)
}

/// Splits `foreground` into catchment basins of the speed landscape.
/// Basins shallower than `h_depth` km/h are merged into their neighbours.
pub fn watershed_split(field: &SpeedField, foreground: &Mask, h_depth: f64) -> Vec<Mask> {
    let (ns, nt) = (field.n_space(), field.n_time());
    assert_eq!((foreground.n_space(), foreground.n_time()), (ns, nt), "mask and field differ in shape");
    let f = field.values();
    let surface = h_minima_surface(f, foreground, h_depth.max(0.0), ns, nt);
    let (mut labels, n_markers) = regional_minima(&surface, foreground, ns, nt);

    let mut heap = BinaryHeap::new();
    let mut queued = vec![false; f.len()];
    let mut seq = 0u64;
    for idx in 0..f.len() {
        if labels[idx] != 0 {
            queued[idx] = true;
        }
    }
    for idx in 0..f.len() {
        if labels[idx] == 0 {
            continue;
        }
        for n in neighbors(idx, ns, nt) {
            if foreground.contains_at(n) && !queued[n] {
                queued[n] = true;
                labels[n] = labels[idx];
                heap.push(Entry { level: f[n], seq, idx: n });
                seq += 1;
            }
        }
    }
    while let Some(Entry { idx, .. }) = heap.pop() {
        for n in neighbors(idx, ns, nt) {
            if foreground.contains_at(n) && !queued[n] {
                queued[n] = true;
                labels[n] = labels[idx];
                heap.push(Entry { level: f[n], seq, idx: n });
                seq += 1;
            }
        }
    }

    let mut regions = vec![Mask::empty(ns, nt); n_markers as usize];
    for (idx, &l) in labels.iter().enumerate() {
        if l != 0 {
            regions[l as usize - 1].insert(idx / nt, idx % nt);
        }
    }
    regions
}

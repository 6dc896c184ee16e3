//! Dense boolean masks over a speed grid.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// A set of `(space, time)` cells on an `n_space x n_time` grid.
#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    n_space: usize,
    n_time: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Mask({}x{}, {} cells)", self.n_space, self.n_time, self.count())
    }
}

const NEIGHBORS4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

impl Mask {
    pub fn empty(n_space: usize, n_time: usize) -> Self {
        Self {
            n_space,
            n_time,
            bits: vec![false; n_space * n_time],
        }
    }

    pub fn full(n_space: usize, n_time: usize) -> Self {
        Self {
            n_space,
            n_time,
            bits: vec![true; n_space * n_time],
        }
    }

    pub fn from_fn(n_space: usize, n_time: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::empty(n_space, n_time);
        for i in 0..n_space {
            for j in 0..n_time {
                m.bits[i * n_time + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_cells(n_space: usize, n_time: usize, cells: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut m = Self::empty(n_space, n_time);
        for (i, j) in cells {
            m.insert(i, j);
        }
        m
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.n_space && j < self.n_time && self.bits[i * self.n_time + j]
    }

    #[inline]
    pub(crate) fn contains_at(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn insert(&mut self, i: usize, j: usize) {
        self.bits[i * self.n_time + j] = true;
    }

    pub fn remove(&mut self, i: usize, j: usize) {
        self.bits[i * self.n_time + j] = false;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let nt = self.n_time;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(k, _)| (k / nt, k % nt))
    }

    fn same_shape(&self, other: &Mask) {
        assert_eq!(
            (self.n_space, self.n_time),
            (other.n_space, other.n_time),
            "mask shapes differ"
        );
    }

    pub fn union(&self, other: &Mask) -> Mask {
        self.same_shape(other);
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        self.same_shape(other);
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Mask) -> Mask {
        self.same_shape(other);
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn is_subset(&self, other: &Mask) -> bool {
        self.same_shape(other);
        self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }

    pub fn is_disjoint(&self, other: &Mask) -> bool {
        self.same_shape(other);
        self.bits.iter().zip(&other.bits).all(|(a, b)| !(*a && *b))
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        Mask {
            n_space: self.n_space,
            n_time: self.n_time,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    /// 3x3 square dilation; cells outside the grid are ignored.
    pub fn dilate3(&self) -> Mask {
        self.window3(|any, _all| any)
    }

    /// 3x3 square erosion; cells outside the grid are ignored, so the grid
    /// border does not eat into the mask.
    pub fn erode3(&self) -> Mask {
        self.window3(|_any, all| all)
    }

    fn window3(&self, pick: impl Fn(bool, bool) -> bool) -> Mask {
        let (ns, nt) = (self.n_space, self.n_time);
        Mask::from_fn(ns, nt, |i, j| {
            let mut any = false;
            let mut all = true;
            for ii in i.saturating_sub(1)..=(i + 1).min(ns - 1) {
                for jj in j.saturating_sub(1)..=(j + 1).min(nt - 1) {
                    let b = self.bits[ii * nt + jj];
                    any |= b;
                    all &= b;
                }
            }
            pick(any, all)
        })
    }

    pub fn open3(&self) -> Mask {
        self.erode3().dilate3()
    }

    pub fn close3(&self) -> Mask {
        self.dilate3().erode3()
    }

    /// Grows the mask by `ri` rows and `rj` columns (rectangular window).
    pub fn dilate_rect(&self, ri: usize, rj: usize) -> Mask {
        let (ns, nt) = (self.n_space, self.n_time);
        // separable: rows first, then columns
        let mut horiz = Mask::empty(ns, nt);
        for i in 0..ns {
            for j in 0..nt {
                if self.bits[i * nt + j] {
                    for jj in j.saturating_sub(rj)..=(j + rj).min(nt - 1) {
                        horiz.bits[i * nt + jj] = true;
                    }
                }
            }
        }
        let mut out = Mask::empty(ns, nt);
        for i in 0..ns {
            for j in 0..nt {
                if horiz.bits[i * nt + j] {
                    for ii in i.saturating_sub(ri)..=(i + ri).min(ns - 1) {
                        out.bits[ii * nt + j] = true;
                    }
                }
            }
        }
        out
    }

    pub(crate) fn neighbors4(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> {
        let (ns, nt) = (self.n_space as isize, self.n_time as isize);
        NEIGHBORS4.iter().filter_map(move |(di, dj)| {
            let (a, b) = (i as isize + di, j as isize + dj);
            (a >= 0 && a < ns && b >= 0 && b < nt).then_some((a as usize, b as usize))
        })
    }

    /// 4-connected components in order of their first cell (row-major).
    pub fn components4(&self) -> Vec<Mask> {
        let (ns, nt) = (self.n_space, self.n_time);
        let mut seen = vec![false; ns * nt];
        let mut out = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..ns * nt {
            if !self.bits[start] || seen[start] {
                continue;
            }
            let mut comp = Mask::empty(ns, nt);
            seen[start] = true;
            queue.push_back((start / nt, start % nt));
            while let Some((i, j)) = queue.pop_front() {
                comp.insert(i, j);
                for (a, b) in self.neighbors4(i, j) {
                    let k = a * nt + b;
                    if self.bits[k] && !seen[k] {
                        seen[k] = true;
                        queue.push_back((a, b));
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    pub fn is_4_connected(&self) -> bool {
        self.components4().len() == 1
    }

    /// Run-length encoding per space row: `(row, start, len)` triples.
    pub fn runs(&self) -> Vec<[usize; 3]> {
        let mut runs = Vec::new();
        for i in 0..self.n_space {
            let row = &self.bits[i * self.n_time..(i + 1) * self.n_time];
            let mut j = 0;
            while j < row.len() {
                if row[j] {
                    let start = j;
                    while j < row.len() && row[j] {
                        j += 1;
                    }
                    runs.push([i, start, j - start]);
                } else {
                    j += 1;
                }
            }
        }
        runs
    }

    pub fn from_runs(n_space: usize, n_time: usize, runs: &[[usize; 3]]) -> Result<Mask, String> {
        let mut m = Mask::empty(n_space, n_time);
        for &[i, start, len] in runs {
            if i >= n_space || start + len > n_time {
                return Err(format!("run ({i}, {start}, {len}) exceeds the {n_space}x{n_time} grid"));
            }
            for j in start..start + len {
                m.insert(i, j);
            }
        }
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    n_space: usize,
    n_time: usize,
    runs: Vec<[usize; 3]>,
}

impl Serialize for Mask {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        MaskRepr {
            n_space: self.n_space,
            n_time: self.n_time,
            runs: self.runs(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = MaskRepr::deserialize(deserializer)?;
        Mask::from_runs(r.n_space, r.n_time, &r.runs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn opening_removes_thin_lines_and_keeps_blocks() {
        let mut m = Mask::empty(10, 10);
        for j in 0..10 {
            m.insert(1, j);
        }
        for i in 5..9 {
            for j in 2..6 {
                m.insert(i, j);
            }
        }
        let opened = m.open3();
        assert!(!opened.contains(1, 4));
        assert_eq!(opened.count(), 16);
    }

    #[test]
    fn closing_bridges_two_cell_gaps_only() {
        let two = Mask::from_fn(5, 12, |_, j| !(4..6).contains(&j));
        assert!(two.close3().is_4_connected());
        let three = Mask::from_fn(5, 12, |_, j| !(4..7).contains(&j));
        assert_eq!(three.close3().components4().len(), 2);
    }

    #[test]
    fn morphology_keeps_a_full_grid() {
        let m = Mask::full(4, 7);
        assert_eq!(m.open3(), m);
        assert_eq!(m.close3(), m);
    }

    #[test]
    fn components_are_four_connected() {
        // diagonal neighbours are separate components
        let m = Mask::from_cells(3, 3, [(0, 0), (1, 1), (2, 2), (2, 1)]);
        let comps = m.components4();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].count(), 1);
        assert_eq!(comps[1].count(), 3);
    }

    proptest! {
        #[test]
        fn runs_round_trip(bits in proptest::collection::vec(any::<bool>(), 6 * 9)) {
            let m = Mask { n_space: 6, n_time: 9, bits };
            let back = Mask::from_runs(6, 9, &m.runs()).unwrap();
            prop_assert_eq!(&back, &m);
            let json = serde_json::to_string(&m).unwrap();
            let parsed: Mask = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(parsed, m);
        }
    }
}

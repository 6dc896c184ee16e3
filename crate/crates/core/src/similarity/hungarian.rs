//! O(n³) Hungarian method with row/column potentials.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row.
    pub row_to_col: Vec<usize>,
    /// Sum of the chosen entries, accumulated in row order.
    pub total: f64,
}

/// Optimal perfect matching of a square matrix.
pub fn hungarian(matrix: &[Vec<f64>], sense: Sense) -> Result<Assignment> {
    let n = matrix.len();
    if let Some((r, row)) = matrix.iter().enumerate().find(|(_, row)| row.len() != n) {
        return Err(Error::Validation(format!(
            "assignment matrix must be square: row {r} has {} entries, expected {n}",
            row.len()
        )));
    }
    if matrix.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Validation("assignment matrix contains a non-finite entry".into()));
    }
    if n == 0 {
        return Ok(Assignment {
            row_to_col: Vec::new(),
            total: 0.0,
        });
    }
    let sign = match sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let cost = |i: usize, j: usize| sign * matrix[i - 1][j - 1];

    // 1-based arrays; index 0 is the virtual start column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    let total = row_to_col.iter().enumerate().map(|(r, &c)| matrix[r][c]).sum();
    Ok(Assignment { row_to_col, total })
}

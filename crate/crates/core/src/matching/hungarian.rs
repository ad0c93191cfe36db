//! Minimum-cost assignment on rectangular matrices via the O(n^3)
//! shortest-augmenting-path algorithm with dual potentials. Rectangular
//! inputs are squared up with a uniform sentinel cost; sentinel pairs are
//! discarded from the result, which leaves the argmin over real pairs
//! untouched (every complete assignment carries the same number of
//! sentinel entries).

use crate::error::{Error, Result};

/// Result of an assignment: matched `(row, col)` pairs plus the summed cost
/// of the real (non-padding) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Sorted by row index; exactly `min(rows, cols)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Solve the square assignment problem; returns `col -> row`.
fn solve_square(cost: &[f64], dim: usize) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let mut u = vec![0.0f64; dim];
    let mut v = vec![0.0f64; dim + 1];
    let mut col_row = vec![NONE; dim + 1]; // row matched to each column; dim = virtual
    let mut way = vec![0usize; dim + 1];

    for row in 0..dim {
        col_row[dim] = row;
        let mut j0 = dim;
        let mut min_slack = vec![f64::INFINITY; dim + 1];
        let mut used = vec![false; dim + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 0..dim {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 * dim + j] - u[i0] - v[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=dim {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == NONE {
                break;
            }
        }
        // Unwind the augmenting path.
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == dim {
                break;
            }
        }
    }
    col_row.truncate(dim);
    col_row
}

/// Minimum-total-cost maximal matching of a row-major `rows x cols` matrix.
pub fn solve(cost: &[f64], rows: usize, cols: usize) -> Result<Assignment> {
    if cost.len() != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "cost length {} != {rows}x{cols}",
            cost.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidValue(
            "cost matrix entries must be finite".into(),
        ));
    }
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        });
    }

    let dim = rows.max(cols);
    // Sentinel just above the largest entry keeps the padded problem on the
    // same numeric scale as the real one.
    let sentinel = cost.iter().cloned().fold(f64::MIN, f64::max) + 1.0;
    let mut square = vec![sentinel; dim * dim];
    for r in 0..rows {
        square[r * dim..r * dim + cols].copy_from_slice(&cost[r * cols..(r + 1) * cols]);
    }

    let col_row = solve_square(&square, dim);
    let mut pairs: Vec<(usize, usize)> = col_row
        .iter()
        .enumerate()
        .filter(|&(col, &row)| row < rows && col < cols)
        .map(|(col, &row)| (row, col))
        .collect();
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(r, c)| cost[r * cols + c]).sum();
    Ok(Assignment { pairs, total_cost })
}

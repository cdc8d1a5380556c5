//! Minimum-cost one-to-one assignment.

use crate::error::{Error, Result};

/// Solves the square assignment problem: given an `n x n` cost matrix, finds
/// a permutation `sigma` minimizing the total cost `sum_i cost[i][sigma[i]]`.
///
/// Among all minimum-cost permutations the lexicographically smallest one is
/// returned, so ties in the cost matrix resolve deterministically. Costs are
/// compared with a relative tolerance of `1e-9` when deciding whether a
/// candidate completion still attains the optimum.
///
/// Returns the permutation (row index to column index) and the total cost.
/// Rejects empty, non-square, and non-finite inputs.
pub fn assignment_solve(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if n == 0 {
        return Err(Error::invalid_argument("assignment cost matrix is empty"));
    }
    for (i, row) in cost.iter().enumerate() {
        if row.len() != n {
            return Err(Error::invalid_argument(format!(
                "assignment cost matrix is not square: row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid_argument(format!(
                "assignment cost at ({i}, {j}) is not finite"
            )));
        }
    }

    let best = hungarian(cost);
    let best_cost: f64 = best.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    let tol = 1e-9 * (1.0 + best_cost.abs());

    // Pick the lexicographically smallest optimal permutation: fix columns
    // row by row in ascending order, keeping a column whenever the remaining
    // rows can still be completed at the optimal total cost.
    let mut chosen = Vec::with_capacity(n);
    let mut used = vec![false; n];
    let mut fixed_cost = 0.0;
    for i in 0..n {
        let mut picked = None;
        for j in 0..n {
            if used[j] {
                continue;
            }
            let rest = remainder_cost(cost, i + 1, &used, j);
            if fixed_cost + cost[i][j] + rest <= best_cost + tol {
                picked = Some(j);
                break;
            }
        }
        // Some column must complete optimally; at worst the one `best` used.
        let j = picked.expect("an optimal completion exists for every prefix");
        used[j] = true;
        fixed_cost += cost[i][j];
        chosen.push(j);
    }
    Ok((chosen, best_cost))
}

/// Optimal cost of assigning rows `first_row..n` to the columns that are
/// neither already used nor equal to `extra_col`.
fn remainder_cost(cost: &[Vec<f64>], first_row: usize, used: &[bool], extra_col: usize) -> f64 {
    let n = cost.len();
    if first_row == n {
        return 0.0;
    }
    let cols: Vec<usize> = (0..n).filter(|&j| !used[j] && j != extra_col).collect();
    let sub: Vec<Vec<f64>> = (first_row..n)
        .map(|i| cols.iter().map(|&j| cost[i][j]).collect())
        .collect();
    let perm = hungarian(&sub);
    perm.iter().enumerate().map(|(a, &b)| sub[a][b]).sum()
}

/// Classic O(n^3) Hungarian algorithm with row/column potentials.
/// Input must be square and finite; returns a row-to-column permutation.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-indexed with a virtual column 0 used as the augmenting-path root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched = vec![0usize; n + 1]; // matched[j] = row occupying column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut visited = vec![false; n + 1];
        loop {
            visited[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if visited[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if visited[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0usize; n];
    for j in 1..=n {
        if matched[j] > 0 {
            result[matched[j] - 1] = j - 1;
        }
    }
    result
}

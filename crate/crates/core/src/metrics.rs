//! Recovery metrics: optimal component matching, the first-moment residual
//! and the success criterion for random-restart studies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{norm, squared_distance};
use crate::mixture::Means;

/// Comparison of an estimate with the ground truth after relabeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// `permutation[k]` is the estimated row matched to truth row `k` (0-based).
    pub permutation: Vec<usize>,
    #[serde(rename = "distances")]
    pub per_component_distance: Vec<f64>,
    pub max_distance: f64,
    pub total_sq_distance: f64,
    /// `||sum_k mu_hat_k||` of the estimate.
    pub moment_residual: f64,
}

/// `||sum_k mu_k||_2`.
pub fn moment_residual(means: &Means) -> f64 {
    norm(&means.column_sum())
}

/// Minimum-cost perfect matching on a square cost matrix (row-major),
/// Hungarian method with potentials. Returns `assign[row] = col` and the cost.
pub fn solve_assignment(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let inf = f64::INFINITY;
    // 1-based arrays; index 0 is the virtual column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    let total = assign
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[r * n + c])
        .sum();
    (assign, total)
}

/// Optimal assignment, breaking ties toward the lexicographically smallest
/// permutation: each row in turn takes the smallest column that still admits
/// an optimal completion.
fn lexicographic_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    let (_, best) = solve_assignment(cost, n);
    let slack = 1e-10 * (1.0 + best.abs());
    let mut fixed: Vec<usize> = Vec::with_capacity(n);
    let mut fixed_cost = 0.0;
    for row in 0..n {
        let free_rows: Vec<usize> = (row + 1..n).collect();
        let mut chosen = None;
        for col in 0..n {
            if fixed.contains(&col) {
                continue;
            }
            let free_cols: Vec<usize> =
                (0..n).filter(|c| *c != col && !fixed.contains(c)).collect();
            let m = free_rows.len();
            let sub: Vec<f64> = free_rows
                .iter()
                .flat_map(|&r| free_cols.iter().map(move |&c| cost[r * n + c]))
                .collect();
            let (_, rest) = solve_assignment(&sub, m);
            let total = fixed_cost + cost[row * n + col] + rest;
            if total <= best + slack {
                chosen = Some(col);
                break;
            }
        }
        // Rounding can hide every completion; take the first free column then.
        let col = chosen.unwrap_or_else(|| (0..n).find(|c| !fixed.contains(c)).unwrap());
        fixed_cost += cost[row * n + col];
        fixed.push(col);
    }
    fixed
}

fn check_shapes(estimated: &Means, truth: &Means) -> Result<()> {
    if estimated.k() != truth.k() || estimated.d() != truth.d() {
        return Err(Error::invalid(format!(
            "shape mismatch: estimate is {}x{}, truth is {}x{}",
            estimated.k(),
            estimated.d(),
            truth.k(),
            truth.d()
        )));
    }
    Ok(())
}

/// Matches estimated components to true ones minimizing the total squared
/// distance.
pub fn match_components(estimated: &Means, truth: &Means) -> Result<MatchReport> {
    check_shapes(estimated, truth)?;
    let k = truth.k();
    let cost: Vec<f64> = (0..k)
        .flat_map(|t| (0..k).map(move |e| (t, e)))
        .map(|(t, e)| squared_distance(estimated.row(e), truth.row(t)))
        .collect();
    let permutation = lexicographic_assignment(&cost, k);
    let per_component_distance: Vec<f64> = permutation
        .iter()
        .enumerate()
        .map(|(t, &e)| cost[t * k + e].sqrt())
        .collect();
    let max_distance = per_component_distance.iter().copied().fold(0.0, f64::max);
    let total_sq_distance = permutation
        .iter()
        .enumerate()
        .map(|(t, &e)| cost[t * k + e])
        .sum();
    Ok(MatchReport {
        permutation,
        per_component_distance,
        max_distance,
        total_sq_distance,
        moment_residual: moment_residual(estimated),
    })
}

/// True iff every matched component lies within `threshold` of its truth.
pub fn is_success(estimated: &Means, truth: &Means, threshold: f64) -> Result<bool> {
    if !(threshold > 0.0) {
        return Err(Error::invalid("success threshold must be positive"));
    }
    Ok(match_components(estimated, truth)?.max_distance <= threshold)
}

//! Reference solver that enumerates every basic solution of the routing
//! polytope. Exponential in the instance size; it exists to validate the
//! simplex path on small instances and deliberately shares no code with it.

use super::LpProblem;

const FEAS_TOL: f64 = 1e-7;
const SING_TOL: f64 = 1e-9;

/// Enumerates all basic solutions of the standard form of the primary
/// routing LP and returns `(objective, per-line rates)` of the best
/// feasible vertex, or `None` when no basic solution is feasible (the
/// polytope is bounded, so this means the LP is infeasible).
///
/// Panics if the instance would require more than ~2 million basis
/// evaluations; this is a validation oracle for small systems.
pub fn enumerate_best_vertex(problem: &LpProblem) -> Option<(f64, Vec<f64>)> {
    // Columns: one per line of an arrival-positive type, then one slack per
    // server. Rows: one equality per arrival-positive type, one capacity
    // inequality per server.
    let active_types: Vec<usize> = (0..problem.num_types)
        .filter(|i| problem.lambda_hat[*i] > 0.0)
        .collect();
    let row_of_type: Vec<Option<usize>> = {
        let mut rows = vec![None; problem.num_types];
        for (r, i) in active_types.iter().enumerate() {
            rows[*i] = Some(r);
        }
        rows
    };
    let cols: Vec<Option<usize>> = (0..problem.lines.len())
        .map(|id| row_of_type[problem.lines[id].customer_type].map(|_| id))
        .collect();
    let line_cols: Vec<usize> = cols.into_iter().flatten().collect();

    let m = active_types.len() + problem.num_servers;
    let n = line_cols.len() + problem.num_servers;
    if m == 0 {
        return Some((0.0, vec![0.0; problem.lines.len()]));
    }

    let mut a = vec![vec![0.0; n]; m];
    let mut b = vec![0.0; m];
    let theta = problem.capped_theta();
    let mut c = vec![0.0; n];
    for (col, id) in line_cols.iter().enumerate() {
        let line = problem.lines[*id];
        a[row_of_type[line.customer_type].unwrap()][col] = 1.0;
        a[active_types.len() + line.server][col] = 1.0 / problem.mu_hat[*id];
        c[col] = theta[*id];
    }
    for (r, i) in active_types.iter().enumerate() {
        b[r] = problem.lambda_hat[*i];
    }
    for j in 0..problem.num_servers {
        a[active_types.len() + j][line_cols.len() + j] = 1.0;
        b[active_types.len() + j] = 1.0 - problem.epsilon;
    }

    let combos = binomial(n, m);
    assert!(
        combos <= 2_000_000,
        "instance too large for enumeration: C({n},{m}) = {combos}"
    );

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut basis: Vec<usize> = (0..m).collect();
    loop {
        if let Some(x) = solve_basis(&a, &b, &basis) {
            if x.iter().all(|v| *v >= -FEAS_TOL) {
                let value: f64 = x.iter().zip(basis.iter()).map(|(v, j)| v * c[*j]).sum();
                if best.as_ref().is_none_or(|(bv, _)| value > *bv) {
                    let mut rates = vec![0.0; problem.lines.len()];
                    for (v, col) in x.iter().zip(basis.iter()) {
                        if *col < line_cols.len() {
                            rates[line_cols[*col]] = v.max(0.0);
                        }
                    }
                    best = Some((value, rates));
                }
            }
        }
        if !next_combination(&mut basis, n) {
            break;
        }
    }
    best
}

/// Solves `A_B x_B = b` by Gaussian elimination with partial pivoting;
/// `None` when the basis matrix is singular.
fn solve_basis(a: &[Vec<f64>], b: &[f64], basis: &[usize]) -> Option<Vec<f64>> {
    let m = b.len();
    let mut mat = vec![vec![0.0; m + 1]; m];
    for (r, row) in mat.iter_mut().enumerate() {
        for (k, col) in basis.iter().enumerate() {
            row[k] = a[r][*col];
        }
        row[m] = b[r];
    }
    for k in 0..m {
        let pivot_row = (k..m)
            .max_by(|x, y| mat[*x][k].abs().total_cmp(&mat[*y][k].abs()))
            .unwrap();
        if mat[pivot_row][k].abs() < SING_TOL {
            return None;
        }
        mat.swap(k, pivot_row);
        for r in k + 1..m {
            let f = mat[r][k] / mat[k][k];
            if f != 0.0 {
                for j in k..=m {
                    mat[r][j] -= f * mat[k][j];
                }
            }
        }
    }
    let mut x = vec![0.0; m];
    for k in (0..m).rev() {
        let mut acc = mat[k][m];
        for j in k + 1..m {
            acc -= mat[k][j] * x[j];
        }
        x[k] = acc / mat[k][k];
    }
    Some(x)
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let m = combo.len();
    let mut i = m;
    while i > 0 {
        i -= 1;
        if combo[i] < n - (m - i) {
            combo[i] += 1;
            for j in i + 1..m {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u64) / (i + 1) as u64;
    }
    acc
}

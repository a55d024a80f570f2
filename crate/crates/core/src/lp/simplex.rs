//! Dense tableau simplex with Bland's anti-cycling rule.
//!
//! The routing problems always have the same shape: one equality row per
//! customer type with positive arrival estimate, one capacity row per
//! server with a slack variable, and nonnegative variables. Phase one uses
//! artificial variables on the equality rows; the fallback formulation's
//! rejection variables already form a feasible starting basis, so it
//! solves in a single phase.

use super::LpError;

const EPS: f64 = 1e-9;

pub(crate) struct Tableau {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Basic column per row.
    pub basis: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>, basis: Vec<usize>) -> Self {
        let rows = a.len();
        let cols = if rows == 0 { 0 } else { a[0].len() };
        debug_assert!(b.iter().all(|v| *v >= 0.0));
        Self {
            rows,
            cols,
            a,
            b,
            basis,
            iterations: 0,
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let inv = 1.0 / self.a[row][col];
        for j in 0..self.cols {
            self.a[row][j] *= inv;
        }
        self.b[row] *= inv;
        self.a[row][col] = 1.0;
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let factor = self.a[r][col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..self.cols {
                self.a[r][j] -= factor * self.a[row][j];
            }
            self.b[r] -= factor * self.b[row];
            self.a[r][col] = 0.0;
            if self.b[r] < 0.0 && self.b[r] > -EPS {
                self.b[r] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Maximizes `c` over the columns in `active` (ascending) starting from
    /// the current basis. `iter_cap` bounds pivots across both phases.
    pub fn maximize(
        &mut self,
        c: &[f64],
        active: &[usize],
        iter_cap: usize,
    ) -> Result<(), LpError> {
        // Reduced costs: eliminate the basic columns from the cost row.
        let mut cbar = c.to_vec();
        for row in 0..self.rows {
            let cb = cbar[self.basis[row]];
            if cb != 0.0 {
                for j in 0..self.cols {
                    cbar[j] -= cb * self.a[row][j];
                }
                cbar[self.basis[row]] = 0.0;
            }
        }

        loop {
            // Bland: entering variable is the lowest-index improving column.
            let Some(col) = active.iter().copied().find(|j| cbar[*j] > EPS) else {
                return Ok(());
            };
            // Ratio test; ties broken by the lowest basic variable index.
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                if self.a[r][col] > EPS {
                    let ratio = self.b[r] / self.a[r][col];
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - EPS
                                || (ratio < bratio + EPS && self.basis[r] < self.basis[br])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, _)) = leave else {
                // Unbounded direction. The routing polytopes are bounded, so
                // this indicates numerical breakdown.
                return Err(LpError::NumericalFailure {
                    iterations: self.iterations,
                });
            };

            self.pivot(row, col);
            let factor = cbar[col];
            for j in 0..self.cols {
                cbar[j] -= factor * self.a[row][j];
            }
            cbar[col] = 0.0;

            self.iterations += 1;
            if self.iterations > iter_cap {
                return Err(LpError::NumericalFailure {
                    iterations: self.iterations,
                });
            }
        }
    }

    /// Forces remaining artificial columns (index >= `first_artificial`)
    /// out of the basis after phase one. Rows of the routing formulations
    /// are linearly independent, so a pivot column always exists.
    pub fn evict_artificials(&mut self, first_artificial: usize) -> Result<(), LpError> {
        for row in 0..self.rows {
            if self.basis[row] < first_artificial {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..first_artificial {
                let mag = self.a[row][j].abs();
                if mag > EPS && best.is_none_or(|(_, m)| mag > m) {
                    best = Some((j, mag));
                }
            }
            match best {
                Some((col, _)) => self.pivot(row, col),
                None => {
                    return Err(LpError::NumericalFailure {
                        iterations: self.iterations,
                    })
                }
            }
        }
        Ok(())
    }

    /// Current value of each column.
    pub fn solution(&self, num_structural: usize) -> Vec<f64> {
        let mut x = vec![0.0; num_structural];
        for row in 0..self.rows {
            let col = self.basis[row];
            if col < num_structural {
                x[col] = self.b[row].max(0.0);
            }
        }
        x
    }
}

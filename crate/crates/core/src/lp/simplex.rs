//! Two-phase primal simplex on a dense tableau.
//!
//! Pivot selection uses the most-negative reduced cost with smallest-index
//! tie-breaking, and falls back to Bland's rule after a run of degenerate
//! pivots so cycling cannot occur. Both rules are index-deterministic, so
//! identical inputs produce identical pivot sequences.

use super::{LpError, LpOptions, LpSolution, LpStatus, StandardForm, FEAS_TOL, OPT_TOL, PIVOT_TOL};

/// Consecutive non-improving pivots tolerated before switching to Bland.
const STALL_LIMIT: usize = 64;
/// Entries below this magnitude are dropped to zero during updates.
const DROP_TOL: f64 = 1e-12;

#[derive(PartialEq)]
enum InnerStatus {
    Optimal,
    Unbounded,
}

struct Tableau {
    rows: Vec<f64>,
    stride: usize,
    m: usize,
    /// Columns eligible to enter the basis (artificials are excluded).
    n_enterable: usize,
    /// Reduced-cost row; last slot holds `-z`.
    red: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
    stall: usize,
    bland: bool,
}

impl Tableau {
    fn new(sf: &StandardForm) -> Self {
        Tableau {
            rows: sf.rows.clone(),
            stride: sf.row_stride,
            m: sf.n_rows,
            n_enterable: sf.n_struct,
            red: vec![0.0; sf.row_stride],
            basis: sf.basis.clone(),
            iterations: 0,
            stall: 0,
            bland: false,
        }
    }

    fn rhs(&self, i: usize) -> f64 {
        self.rows[i * self.stride + self.stride - 1]
    }

    fn objective(&self) -> f64 {
        -self.red[self.stride - 1]
    }

    /// Reduced costs for minimizing the sum of artificial variables, which
    /// all start basic, so `r_j = c_j - sum over artificial-basic rows`.
    fn init_phase1(&mut self, n_struct: usize) {
        self.red.fill(0.0);
        for j in n_struct..self.stride - 1 {
            self.red[j] = 1.0;
        }
        for i in 0..self.m {
            if self.basis[i] >= n_struct {
                let row = &self.rows[i * self.stride..(i + 1) * self.stride];
                for (r, v) in self.red.iter_mut().zip(row) {
                    *r -= v;
                }
            }
        }
        self.stall = 0;
        self.bland = false;
    }

    /// Reduced costs `c_j - c_B B^-1 a_j` for the user objective.
    fn init_phase2(&mut self, costs: &[f64]) {
        self.red.fill(0.0);
        self.red[..costs.len()].copy_from_slice(costs);
        for i in 0..self.m {
            let cb = if self.basis[i] < costs.len() {
                costs[self.basis[i]]
            } else {
                0.0
            };
            if cb != 0.0 {
                let row = &self.rows[i * self.stride..(i + 1) * self.stride];
                for (r, v) in self.red.iter_mut().zip(row) {
                    *r -= cb * v;
                }
            }
        }
        self.stall = 0;
        self.bland = false;
    }

    fn choose_entering(&self) -> Option<usize> {
        let red = &self.red[..self.n_enterable];
        if self.bland {
            red.iter().position(|&r| r < -OPT_TOL)
        } else {
            let mut best = None;
            let mut best_val = -OPT_TOL;
            for (j, &r) in red.iter().enumerate() {
                if r < best_val {
                    best_val = r;
                    best = Some(j);
                }
            }
            best
        }
    }

    /// Min-ratio row for the entering column; ties go to the smallest
    /// basic-variable index, which is what makes Bland's rule finite.
    fn choose_leaving(&self, entering: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = self.rows[i * self.stride + entering];
            if a > PIVOT_TOL {
                let ratio = self.rhs(i).max(0.0) / a;
                match best {
                    None => best = Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-12
                            || ((ratio - br).abs() <= 1e-12 && self.basis[i] < self.basis[bi])
                        {
                            best = Some((i, ratio));
                        }
                    }
                }
            }
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, leave_row: usize, entering: usize) {
        let stride = self.stride;
        // Normalize the pivot row in place.
        let p = self.rows[leave_row * stride + entering];
        {
            let prow = &mut self.rows[leave_row * stride..(leave_row + 1) * stride];
            let inv = 1.0 / p;
            for v in prow.iter_mut() {
                *v *= inv;
            }
            prow[entering] = 1.0;
        }
        let prow: Vec<f64> = self.rows[leave_row * stride..(leave_row + 1) * stride].to_vec();
        let nz: Vec<usize> = (0..stride)
            .filter(|&j| j != entering && prow[j] != 0.0)
            .collect();
        let dense = nz.len() * 2 > stride;

        let eliminate = |target: &mut [f64]| {
            let f = target[entering];
            if f == 0.0 {
                return;
            }
            if dense {
                for (t, &pv) in target.iter_mut().zip(&prow) {
                    *t -= f * pv;
                }
            } else {
                for &j in &nz {
                    target[j] -= f * prow[j];
                    if target[j].abs() < DROP_TOL {
                        target[j] = 0.0;
                    }
                }
            }
            target[entering] = 0.0;
        };

        for i in 0..self.m {
            if i != leave_row {
                eliminate(&mut self.rows[i * stride..(i + 1) * stride]);
            }
        }
        eliminate(&mut self.red);
        self.basis[leave_row] = entering;
        self.iterations += 1;
    }

    fn optimize(&mut self, opts: &LpOptions) -> Result<InnerStatus, LpError> {
        loop {
            let entering = match self.choose_entering() {
                Some(j) => j,
                None => return Ok(InnerStatus::Optimal),
            };
            if self.iterations >= opts.max_iterations {
                return Err(LpError::IterationLimit {
                    limit: opts.max_iterations,
                    iterations: self.iterations,
                });
            }
            let leave = match self.choose_leaving(entering) {
                Some(i) => i,
                None => return Ok(InnerStatus::Unbounded),
            };
            let before = self.objective();
            self.pivot(leave, entering);
            // Degeneracy watchdog: long runs without progress trigger
            // Bland's rule, which cannot cycle.
            if self.objective() < before - 1e-12 * (1.0 + before.abs()) {
                self.stall = 0;
                self.bland = false;
            } else {
                self.stall += 1;
                if self.stall >= STALL_LIMIT {
                    self.bland = true;
                }
            }
        }
    }

    /// After phase 1, pivot remaining artificial basics (all at zero) onto
    /// structural columns where possible; all-zero rows are redundant and
    /// stay untouched.
    fn drive_out_artificials(&mut self, n_struct: usize) {
        for i in 0..self.m {
            if self.basis[i] >= n_struct {
                let row_off = i * self.stride;
                if let Some(j) = (0..n_struct).find(|&j| self.rows[row_off + j].abs() > PIVOT_TOL) {
                    self.pivot(i, j);
                }
            }
        }
    }
}

/// Solve a standardized LP. `Infeasible` and `Unbounded` are reported in
/// the solution status; errors are reserved for bad input and blown
/// iteration budgets.
pub fn solve_standardized(sf: &StandardForm, opts: &LpOptions) -> Result<LpSolution, LpError> {
    let mut t = Tableau::new(sf);

    if sf.n_artificial > 0 {
        t.init_phase1(sf.n_struct);
        match t.optimize(opts)? {
            InnerStatus::Optimal => {}
            // The phase-1 objective is bounded below by zero, so an
            // unbounded ray here means the arithmetic went bad.
            InnerStatus::Unbounded => return Err(LpError::Numerical("phase-1 ray")),
        }
        if t.objective() > FEAS_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; sf.n_user],
                objective_value: f64::NAN,
                iterations: t.iterations,
                duals: Vec::new(),
            });
        }
        t.drive_out_artificials(sf.n_struct);
    }

    t.init_phase2(&sf.costs);
    let status = t.optimize(opts)?;
    if status == InnerStatus::Unbounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: vec![0.0; sf.n_user],
            objective_value: f64::NEG_INFINITY,
            iterations: t.iterations,
            duals: Vec::new(),
        });
    }

    let mut x = vec![0.0; sf.n_user];
    for i in 0..t.m {
        if t.basis[i] < sf.n_user {
            x[t.basis[i]] = t.rhs(i).max(0.0);
        }
    }

    // Dual multipliers from the reduced costs of each row's own slack,
    // surplus, or artificial column, mapped back through any sign flip
    // applied during standardization.
    let mut duals = vec![0.0; sf.n_rows];
    for i in 0..sf.n_rows {
        let (col, sign) = sf.dual_cols[i];
        let (_, flip) = sf.row_origin[i];
        duals[i] = flip * sign * t.red[col];
    }

    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective_value: t.objective(),
        iterations: t.iterations,
        duals,
    })
}

#[cfg(test)]
mod tests {
    use super::super::*;

    #[test]
    fn obvious_optimum() {
        // min x1 + x2  s.t. x1 + x2 >= 1, x >= 0  ->  objective 1
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_constraint(vec![1.0, 1.0], Relation::Ge, 1.0);
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value - 1.0).abs() < 1e-9);
        assert!(lp.max_violation(&sol.x) < 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        // min 0  s.t. x1 <= -1, x1 >= 0
        let mut lp = LinearProgram::new(vec![0.0]);
        lp.add_constraint(vec![1.0], Relation::Le, -1.0);
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        // min -x1  s.t. x1 >= 0 (no upper bound)
        let lp = LinearProgram::new(vec![-1.0]);
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_upper_bounds() {
        // min -x1 - x2  s.t. x1 + x2 = 3, x1 <= 2, x2 <= 2
        let mut lp = LinearProgram::new(vec![-1.0, -1.0]);
        lp.add_constraint(vec![1.0, 1.0], Relation::Eq, 3.0);
        lp.bounds[0].upper = 2.0;
        lp.bounds[1].upper = 2.0;
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value + 3.0).abs() < 1e-9);
        assert!((sol.x[0] + sol.x[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn positive_lower_bound_respected() {
        // min x1  s.t. x1 in [0.5, inf) -> 0.5
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.bounds[0].lower = 0.5;
        let sol = lp.solve().unwrap();
        assert!((sol.objective_value - 0.5).abs() < 1e-9);
        assert!((sol.x[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn iteration_limit_reported() {
        // Two artificial rows force at least two phase-1 pivots.
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_constraint(vec![1.0, 0.0], Relation::Ge, 1.0);
        lp.add_constraint(vec![0.0, 1.0], Relation::Ge, 1.0);
        let err = lp.solve_with(&LpOptions { max_iterations: 1 }).unwrap_err();
        assert!(matches!(err, LpError::IterationLimit { limit: 1, .. }));
    }

    #[test]
    fn identical_input_identical_pivots() {
        let mut lp = LinearProgram::new(vec![2.0, -1.0, 0.5]);
        lp.add_constraint(vec![1.0, 1.0, 1.0], Relation::Le, 10.0);
        lp.add_constraint(vec![1.0, -1.0, 0.0], Relation::Ge, 1.0);
        lp.add_constraint(vec![0.0, 1.0, 2.0], Relation::Eq, 4.0);
        let a = lp.solve().unwrap();
        let b = lp.solve().unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.x, b.x);
        assert_eq!(a.objective_value, b.objective_value);
    }
}

//! Self-contained dense linear-program solver (two-phase primal simplex).
//!
//! Problems are stated as `min c^T x` over rows `a^T x {<=,>=,=} b` with
//! per-variable bounds `[lo, hi]`, `lo >= 0`, `hi` possibly infinite.
//! Standardization turns bounds into explicit rows and adds slack, surplus
//! and artificial columns; the solver then runs phase 1 (drive artificials
//! to zero) and phase 2 (optimize the user objective) on one dense tableau.
//!
//! Intended problem sizes are a few hundred variables by a few hundred
//! rows, where a dense tableau is simpler and fast enough. No sparse
//! factorization, no warm starts.

mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use simplex::solve_standardized;

/// Hard iteration cap before the solver reports possible cycling.
pub const DEFAULT_MAX_ITERATIONS: usize = 50_000;
/// Entries smaller than this are never used as pivots.
pub const PIVOT_TOL: f64 = 1e-9;
/// Absolute feasibility tolerance on normalized rows.
pub const FEAS_TOL: f64 = 1e-7;
/// Reduced costs above `-OPT_TOL` count as optimal.
pub const OPT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("non-finite coefficient in {place}")]
    NonFinite { place: &'static str },
    #[error("LP has no variables")]
    NoVariables,
    #[error("constraint {row} has {got} coefficients, expected {expected}")]
    RowLength {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("variable {var} has invalid bounds [{lo}, {hi}] (need 0 <= lo <= hi)")]
    BadBounds { var: usize, lo: f64, hi: f64 },
    #[error(
        "iteration limit {limit} reached after {iterations} pivots (possible cycling or bad conditioning)"
    )]
    IterationLimit { limit: usize, iterations: usize },
    #[error("numerical breakdown: {0}")]
    Numerical(&'static str),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    fn token(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Per-variable bounds; `lower >= 0`, `upper` may be `f64::INFINITY`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearProgram {
    /// Minimized objective coefficients, one per variable.
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<Bounds>,
    /// Per-variable labels for traceback into the originating model.
    pub names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Values of the user variables (meaningful when `Optimal`).
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    /// Dual multiplier per constraint row of the *standardized* row list
    /// (user constraints first, then bound rows), in original row
    /// orientation. Empty unless `Optimal`.
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    pub max_iterations: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl LinearProgram {
    /// LP with `n` variables, default bounds `[0, inf)` and names `x0..`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            constraints: Vec::new(),
            bounds: vec![Bounds::default(); n],
            names: (0..n).map(|j| format!("x{j}")).collect(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if n == 0 {
            return Err(LpError::NoVariables);
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite { place: "objective" });
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::RowLength {
                    row: i,
                    got: c.coeffs.len(),
                    expected: n,
                });
            }
            if c.coeffs.iter().any(|v| !v.is_finite()) || !c.rhs.is_finite() {
                return Err(LpError::NonFinite {
                    place: "constraint",
                });
            }
        }
        if self.bounds.len() != n {
            return Err(LpError::RowLength {
                row: 0,
                got: self.bounds.len(),
                expected: n,
            });
        }
        for (j, b) in self.bounds.iter().enumerate() {
            let lo_ok = b.lower.is_finite() && b.lower >= 0.0;
            let hi_ok = !b.upper.is_nan() && b.upper >= b.lower;
            if !lo_ok || !hi_ok {
                return Err(LpError::BadBounds {
                    var: j,
                    lo: b.lower,
                    hi: b.upper,
                });
            }
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        self.solve_with(&LpOptions::default())
    }

    pub fn solve_with(&self, opts: &LpOptions) -> Result<LpSolution, LpError> {
        self.validate()?;
        let std_form = standardize(self);
        solve_standardized(&std_form, opts)
    }

    /// Largest violation of any constraint or bound at `x`, scaled by each
    /// row's max-abs coefficient.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let scale = c.coeffs.iter().fold(1.0_f64, |m, a| m.max(a.abs()));
            let gap = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(gap / scale);
        }
        for (j, b) in self.bounds.iter().enumerate() {
            worst = worst.max(b.lower - x[j]);
            if b.upper.is_finite() {
                worst = worst.max(x[j] - b.upper);
            }
        }
        worst
    }

    /// Plain-text dump (see `LP_DUMP.md` in the repo root for the format).
    pub fn dump(&self) -> String {
        let mut out = String::from("# confsched lp v1\nminimize\n");
        out.push_str(&join_floats(&self.objective));
        out.push_str("\nnames\n");
        out.push_str(&self.names.join(" "));
        out.push_str("\nbounds\n");
        for b in &self.bounds {
            let hi = if b.upper.is_finite() {
                b.upper.to_string()
            } else {
                "inf".to_string()
            };
            out.push_str(&format!("{} {}\n", b.lower, hi));
        }
        out.push_str(&format!("constraints {}\n", self.constraints.len()));
        for c in &self.constraints {
            out.push_str(&join_floats(&c.coeffs));
            out.push_str(&format!(" {} {}\n", c.relation.token(), c.rhs));
        }
        out.push_str("end\n");
        out
    }

    pub fn restore(text: &str) -> Result<Self, LpError> {
        let parse_err = |line: usize, msg: &str| LpError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let mut expect = |want: &str| -> Result<(usize, String), LpError> {
            let (idx, line) = lines.next().ok_or_else(|| {
                parse_err(0, &format!("unexpected end of input, wanted '{want}'"))
            })?;
            Ok((idx + 1, line.trim().to_string()))
        };
        let (ln, header) = expect("# confsched lp v1")?;
        if header != "# confsched lp v1" {
            return Err(parse_err(ln, "missing header"));
        }
        let (ln, kw) = expect("minimize")?;
        if kw != "minimize" {
            return Err(parse_err(ln, "expected 'minimize'"));
        }
        let (ln, obj_line) = expect("objective row")?;
        let objective = parse_floats(&obj_line).map_err(|m| parse_err(ln, &m))?;
        let n = objective.len();
        let (ln, kw) = expect("names")?;
        if kw != "names" {
            return Err(parse_err(ln, "expected 'names'"));
        }
        let (ln, name_line) = expect("name row")?;
        let names: Vec<String> = name_line
            .split_whitespace()
            .map(|s| s.to_string())
            .collect();
        if names.len() != n {
            return Err(parse_err(ln, "name count does not match objective length"));
        }
        let (ln, kw) = expect("bounds")?;
        if kw != "bounds" {
            return Err(parse_err(ln, "expected 'bounds'"));
        }
        let mut bounds = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, b_line) = expect("bound row")?;
            let parts: Vec<&str> = b_line.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(parse_err(ln, "bound row needs 'lo hi'"));
            }
            let lower: f64 = parts[0]
                .parse()
                .map_err(|_| parse_err(ln, "bad lower bound"))?;
            let upper = if parts[1] == "inf" {
                f64::INFINITY
            } else {
                parts[1]
                    .parse()
                    .map_err(|_| parse_err(ln, "bad upper bound"))?
            };
            bounds.push(Bounds { lower, upper });
        }
        let (ln, c_header) = expect("constraints <m>")?;
        let m: usize = c_header
            .strip_prefix("constraints ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| parse_err(ln, "expected 'constraints <count>'"))?;
        let mut constraints = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, row) = expect("constraint row")?;
            let parts: Vec<&str> = row.split_whitespace().collect();
            if parts.len() != n + 2 {
                return Err(parse_err(
                    ln,
                    "constraint row needs n coefficients, relation, rhs",
                ));
            }
            let mut coeffs = Vec::with_capacity(n);
            for p in &parts[..n] {
                coeffs.push(p.parse().map_err(|_| parse_err(ln, "bad coefficient"))?);
            }
            let relation = match parts[n] {
                "<=" => Relation::Le,
                ">=" => Relation::Ge,
                "=" => Relation::Eq,
                other => return Err(parse_err(ln, &format!("unknown relation '{other}'"))),
            };
            let rhs: f64 = parts[n + 1].parse().map_err(|_| parse_err(ln, "bad rhs"))?;
            constraints.push(Constraint {
                coeffs,
                relation,
                rhs,
            });
        }
        let lp = LinearProgram {
            objective,
            constraints,
            bounds,
            names,
        };
        lp.validate()?;
        Ok(lp)
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split_whitespace()
        .map(|p| p.parse().map_err(|_| format!("bad number '{p}'")))
        .collect()
}

/// Standard-form expansion of a [`LinearProgram`].
///
/// Rows are the user constraints followed by bound rows (`x_j >= lo` for
/// positive lower bounds, `x_j <= hi` for finite upper bounds), all
/// normalized to nonnegative right-hand sides. Column order is user
/// variables, then one slack/surplus per inequality row, then artificials.
pub struct StandardForm {
    pub n_user: usize,
    pub n_rows: usize,
    /// Total structural columns (user + slack/surplus); artificials follow.
    pub n_struct: usize,
    pub n_artificial: usize,
    /// Dense row-major rows of length `n_struct + n_artificial + 1`
    /// (last entry = rhs >= 0).
    pub rows: Vec<f64>,
    pub row_stride: usize,
    /// Phase-2 cost per structural column (user costs then zeros).
    pub costs: Vec<f64>,
    /// Initial basis: one column index per row.
    pub basis: Vec<usize>,
    /// For each row: (original row index, sign flip applied), where
    /// original rows `0..m` are user constraints and `m..` bound rows.
    pub row_origin: Vec<(usize, f64)>,
    /// For each row: (aux column, sign) such that the row's dual value is
    /// `sign * reduced_cost(aux column)` in the final phase-2 tableau.
    pub dual_cols: Vec<(usize, f64)>,
}

/// Expand constraints and bounds into equality standard form with an
/// all-slack/artificial starting basis.
pub fn standardize(lp: &LinearProgram) -> StandardForm {
    let n = lp.n_vars();
    // (coeff sparse or dense?, relation, rhs) for user rows + bound rows
    struct RawRow {
        dense: Vec<f64>,
        relation: Relation,
        rhs: f64,
    }
    let mut raw: Vec<RawRow> = Vec::with_capacity(lp.constraints.len() + n);
    for c in &lp.constraints {
        raw.push(RawRow {
            dense: c.coeffs.clone(),
            relation: c.relation,
            rhs: c.rhs,
        });
    }
    for (j, b) in lp.bounds.iter().enumerate() {
        if b.lower > 0.0 {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            raw.push(RawRow {
                dense: row,
                relation: Relation::Ge,
                rhs: b.lower,
            });
        }
        if b.upper.is_finite() {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            raw.push(RawRow {
                dense: row,
                relation: Relation::Le,
                rhs: b.upper,
            });
        }
    }

    let n_rows = raw.len();
    // Normalize rhs signs, then count slack and artificial columns.
    let mut row_origin = Vec::with_capacity(n_rows);
    for (i, r) in raw.iter_mut().enumerate() {
        let flip = if r.rhs < 0.0 { -1.0 } else { 1.0 };
        if flip < 0.0 {
            for v in &mut r.dense {
                *v = -*v;
            }
            r.rhs = -r.rhs;
            r.relation = match r.relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        row_origin.push((i, flip));
    }
    let n_slack = raw.iter().filter(|r| r.relation != Relation::Eq).count();
    let n_artificial = raw.iter().filter(|r| r.relation != Relation::Le).count();
    let n_struct = n + n_slack;
    let row_stride = n_struct + n_artificial + 1;

    let mut rows = vec![0.0; n_rows * row_stride];
    let mut basis = vec![0usize; n_rows];
    let mut dual_cols = Vec::with_capacity(n_rows);
    let mut slack_cursor = n;
    let mut art_cursor = n_struct;
    for (i, r) in raw.iter().enumerate() {
        let out = &mut rows[i * row_stride..(i + 1) * row_stride];
        out[..n].copy_from_slice(&r.dense);
        out[row_stride - 1] = r.rhs;
        match r.relation {
            Relation::Le => {
                out[slack_cursor] = 1.0;
                basis[i] = slack_cursor;
                dual_cols.push((slack_cursor, -1.0));
                slack_cursor += 1;
            }
            Relation::Ge => {
                out[slack_cursor] = -1.0;
                dual_cols.push((slack_cursor, 1.0));
                slack_cursor += 1;
                out[art_cursor] = 1.0;
                basis[i] = art_cursor;
                art_cursor += 1;
            }
            Relation::Eq => {
                out[art_cursor] = 1.0;
                basis[i] = art_cursor;
                dual_cols.push((art_cursor, -1.0));
                art_cursor += 1;
            }
        }
    }

    let mut costs = vec![0.0; n_struct];
    costs[..n].copy_from_slice(&lp.objective);

    StandardForm {
        n_user: n,
        n_rows,
        n_struct,
        n_artificial,
        rows,
        row_stride,
        costs,
        basis,
        row_origin,
        dual_cols,
    }
}

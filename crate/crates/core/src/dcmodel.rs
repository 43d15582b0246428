//! Data-center scheduling physics encoded as a linear program.
//!
//! Server power follows the PUE model: an active server draws
//! `p_idle + (pue - 1) * p_peak` regardless of load, and each unit of
//! processed work adds `(p_peak - p_idle) / l_rate`. Flexible workload
//! classes may defer jobs up to their per-class delay tolerance;
//! inflexible workloads must be served immediately under a QoS delay cap,
//! which linearizes to `L <= (l_rate - 1/c_dt) * A`. A battery shifts
//! energy across hours, and purchased grid power is priced per hour plus
//! a certificate charge proportional to its carbon-based fraction.
//!
//! The power balance is robustified by scheduling against a lower bound
//! on PV generation: if realized PV stays above that bound, the committed
//! schedule remains feasible hour by hour.

use crate::lp::{Bounds, LinearProgram, LpError, LpSolution, LpStatus, Relation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DcError {
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("negative input: {0}")]
    NegativeInput(&'static str),
    #[error("QoS unattainable: service rate {l_rate} <= 1/c_dt = {inv_cdt}")]
    QosUnattainable { l_rate: f64, inv_cdt: f64 },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("lp error: {0}")]
    Lp(#[from] LpError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Server fleet and facility parameters (per-server powers in kW).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DataCenterParams {
    pub p_idle: f64,
    pub p_peak: f64,
    pub pue: f64,
    /// Jobs per server per slot.
    pub l_rate: f64,
    /// Max tolerable delay for inflexible work, in slots of service time.
    pub c_dt: f64,
    pub a_max: f64,
    pub p_grid_max: f64,
    /// Certificate price per kWh of carbon-based consumption.
    pub lambda_c: f64,
}

impl Default for DataCenterParams {
    fn default() -> Self {
        DataCenterParams {
            p_idle: 0.1,
            p_peak: 0.2,
            pue: 1.4,
            l_rate: 3.0,
            c_dt: 0.5,
            a_max: 8000.0,
            p_grid_max: 1000.0,
            lambda_c: 0.1,
        }
    }
}

impl DataCenterParams {
    pub fn validate(&self) -> Result<(), DcError> {
        if !(self.p_peak > self.p_idle && self.p_idle > 0.0) {
            return Err(DcError::BadParam("need p_peak > p_idle > 0".into()));
        }
        if self.pue < 1.0 {
            return Err(DcError::BadParam("pue must be >= 1".into()));
        }
        if self.l_rate <= 1.0 / self.c_dt {
            return Err(DcError::QosUnattainable {
                l_rate: self.l_rate,
                inv_cdt: 1.0 / self.c_dt,
            });
        }
        if self.a_max <= 0.0 || self.p_grid_max < 0.0 || self.lambda_c < 0.0 {
            return Err(DcError::BadParam(
                "a_max must be positive; caps nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Idle-plus-facility power per active server, kW.
    pub fn kappa_servers(&self) -> f64 {
        self.p_idle + (self.pue - 1.0) * self.p_peak
    }

    /// Marginal power per unit of processed work, kW.
    pub fn kappa_work(&self) -> f64 {
        (self.p_peak - self.p_idle) / self.l_rate
    }
}

/// Battery storage parameters (energy in kWh, power in kW; one-hour slots
/// make the two numerically interchangeable per slot). No charge or
/// discharge losses are modeled.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EssParams {
    pub q_max: f64,
    pub q_min: f64,
    pub p_max: f64,
    pub q_init: f64,
}

impl Default for EssParams {
    fn default() -> Self {
        // Half-full start plus a terminal floor at the same level keeps
        // the optimizer from mining the battery.
        EssParams {
            q_max: 500.0,
            q_min: 0.0,
            p_max: 80.0,
            q_init: 250.0,
        }
    }
}

impl EssParams {
    pub fn validate(&self) -> Result<(), DcError> {
        if !(0.0 <= self.q_min && self.q_min <= self.q_init && self.q_init <= self.q_max) {
            return Err(DcError::BadParam(
                "need 0 <= q_min <= q_init <= q_max".into(),
            ));
        }
        if !(self.p_max > 0.0) {
            return Err(DcError::BadParam("p_max must be positive".into()));
        }
        Ok(())
    }
}

/// Arriving workloads over the horizon: one inflexible stream and one
/// deferrable stream per class with per-class delay tolerance (slots).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadTrace {
    pub inflexible: Vec<f64>,
    pub flexible_arrivals: Vec<Vec<f64>>,
    pub delay_tolerance: Vec<usize>,
}

impl WorkloadTrace {
    pub fn horizon(&self) -> usize {
        self.inflexible.len()
    }

    pub fn n_classes(&self) -> usize {
        self.flexible_arrivals.len()
    }

    pub fn validate(&self) -> Result<(), DcError> {
        let t = self.horizon();
        if self.flexible_arrivals.len() != self.delay_tolerance.len() {
            return Err(DcError::LengthMismatch(
                "one delay tolerance per class".into(),
            ));
        }
        for row in &self.flexible_arrivals {
            if row.len() != t {
                return Err(DcError::LengthMismatch(
                    "flexible arrivals must span the horizon".into(),
                ));
            }
            if row.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(DcError::NegativeInput("flexible arrivals"));
            }
        }
        if self.inflexible.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(DcError::NegativeInput("inflexible arrivals"));
        }
        Ok(())
    }
}

/// Hourly electricity price and carbon-based energy proportion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketSeries {
    pub price: Vec<f64>,
    pub cbep: Vec<f64>,
}

impl MarketSeries {
    pub fn validate(&self) -> Result<(), DcError> {
        if self.price.len() != self.cbep.len() {
            return Err(DcError::LengthMismatch(
                "price and cbep must have equal length".into(),
            ));
        }
        if self.price.iter().any(|p| !p.is_finite()) {
            return Err(DcError::BadParam("price must be finite".into()));
        }
        if self.cbep.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(DcError::BadParam("cbep must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Decoded schedule: all per-slot decisions plus cost and carbon
/// accounting for the committed purchases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleSolution {
    /// Processed flexible work per class and slot.
    pub flex_processed: Vec<Vec<f64>>,
    pub flex_servers: Vec<f64>,
    pub inflex_processed: Vec<f64>,
    pub inflex_servers: Vec<f64>,
    pub grid_power: Vec<f64>,
    /// Net battery power, positive when charging.
    pub ess_power: Vec<f64>,
    pub ess_level: Vec<f64>,
    /// Facility power demand per slot implied by the server decisions.
    pub dc_power_kw: Vec<f64>,
    /// Robust PV lower bound the schedule was built against.
    pub pv_lower: Vec<f64>,
    pub cost_energy: f64,
    pub cost_teac: f64,
    pub carbon_energy: f64,
    pub lp_objective: f64,
    pub lp_iterations: usize,
}

impl ScheduleSolution {
    pub fn total_cost(&self) -> f64 {
        self.cost_energy + self.cost_teac
    }
}

/// Outcome of a schedule solve: infeasibility is a reportable result, not
/// an error.
#[derive(Debug, Clone)]
pub enum ScheduleOutcome {
    Solved(ScheduleSolution),
    /// Slots where the guaranteed supply falls shortest against the
    /// inflexible demand floor, most binding first.
    Infeasible {
        tight_slots: Vec<usize>,
    },
}

/// Total facility power (kW) for a server count and processed workload.
pub fn dc_power(
    params: &DataCenterParams,
    active_servers: f64,
    workload: f64,
) -> Result<f64, DcError> {
    if active_servers < 0.0 {
        return Err(DcError::NegativeInput("active_servers"));
    }
    if workload < 0.0 {
        return Err(DcError::NegativeInput("workload"));
    }
    Ok(params.kappa_servers() * active_servers + params.kappa_work() * workload)
}

/// QoS linearization: the delay bound `1/(l_rate - L/A) <= c_dt`
/// rearranges to `L <= (l_rate - 1/c_dt) * A`; returns that slope.
pub fn linearize_qos(params: &DataCenterParams) -> Result<f64, DcError> {
    let inv = 1.0 / params.c_dt;
    if params.l_rate <= inv {
        return Err(DcError::QosUnattainable {
            l_rate: params.l_rate,
            inv_cdt: inv,
        });
    }
    Ok(params.l_rate - inv)
}

/// Variable layout of the schedule LP.
#[derive(Debug, Clone)]
pub struct VarMap {
    pub t: usize,
    pub n_classes: usize,
}

impl VarMap {
    pub fn n_vars(&self) -> usize {
        self.n_classes * self.t + 7 * self.t
    }

    pub fn l_fl(&self, class: usize, t: usize) -> usize {
        class * self.t + t
    }

    pub fn a_fl(&self, t: usize) -> usize {
        self.n_classes * self.t + t
    }

    pub fn l_ifl(&self, t: usize) -> usize {
        self.n_classes * self.t + self.t + t
    }

    pub fn a_ifl(&self, t: usize) -> usize {
        self.n_classes * self.t + 2 * self.t + t
    }

    pub fn p_grid(&self, t: usize) -> usize {
        self.n_classes * self.t + 3 * self.t + t
    }

    pub fn p_charge(&self, t: usize) -> usize {
        self.n_classes * self.t + 4 * self.t + t
    }

    pub fn p_discharge(&self, t: usize) -> usize {
        self.n_classes * self.t + 5 * self.t + t
    }

    pub fn q_ess(&self, t: usize) -> usize {
        self.n_classes * self.t + 6 * self.t + t
    }
}

/// A built schedule LP plus the map back to decision variables.
pub struct ScheduleLp {
    pub lp: LinearProgram,
    pub vars: VarMap,
    params: DataCenterParams,
    ess: EssParams,
    market: MarketSeries,
    pv_lower: Vec<f64>,
}

/// Assemble the schedule LP for one day against a robust PV lower bound.
pub fn build_schedule_lp(
    params: &DataCenterParams,
    ess: &EssParams,
    trace: &WorkloadTrace,
    market: &MarketSeries,
    pv_lower: &[f64],
) -> Result<ScheduleLp, DcError> {
    params.validate()?;
    ess.validate()?;
    trace.validate()?;
    market.validate()?;
    let t_len = trace.horizon();
    if market.price.len() != t_len || pv_lower.len() != t_len {
        return Err(DcError::LengthMismatch(format!(
            "horizon {t_len} vs market {} vs pv {}",
            market.price.len(),
            pv_lower.len()
        )));
    }
    if pv_lower.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(DcError::NegativeInput("pv_lower"));
    }

    let vars = VarMap {
        t: t_len,
        n_classes: trace.n_classes(),
    };
    let n = vars.n_vars();
    let qos_slope = linearize_qos(params)?;
    let (kappa_a, kappa_w) = (params.kappa_servers(), params.kappa_work());

    // Objective: energy purchases priced per hour plus certificates on
    // the carbon-based share of every purchased kWh.
    let mut objective = vec![0.0; n];
    for t in 0..t_len {
        objective[vars.p_grid(t)] = market.price[t] + params.lambda_c * market.cbep[t];
    }
    let mut lp = LinearProgram::new(objective);

    let mut names = vec![String::new(); n];
    for c in 0..vars.n_classes {
        for t in 0..t_len {
            names[vars.l_fl(c, t)] = format!("l_fl[{c}][{t}]");
        }
    }
    for t in 0..t_len {
        names[vars.a_fl(t)] = format!("a_fl[{t}]");
        names[vars.l_ifl(t)] = format!("l_ifl[{t}]");
        names[vars.a_ifl(t)] = format!("a_ifl[{t}]");
        names[vars.p_grid(t)] = format!("p_grid[{t}]");
        names[vars.p_charge(t)] = format!("p_chg[{t}]");
        names[vars.p_discharge(t)] = format!("p_dis[{t}]");
        names[vars.q_ess(t)] = format!("q_ess[{t}]");
    }
    lp.names = names;

    for t in 0..t_len {
        lp.bounds[vars.p_grid(t)] = Bounds {
            lower: 0.0,
            upper: params.p_grid_max,
        };
        lp.bounds[vars.p_charge(t)] = Bounds {
            lower: 0.0,
            upper: ess.p_max,
        };
        lp.bounds[vars.p_discharge(t)] = Bounds {
            lower: 0.0,
            upper: ess.p_max,
        };
        lp.bounds[vars.q_ess(t)] = Bounds {
            lower: ess.q_min,
            upper: ess.q_max,
        };
    }

    // Cumulative processing window per class: never ahead of arrivals,
    // never further behind than the class delay tolerance, and all work
    // done by end of horizon.
    for (c, arrivals) in trace.flexible_arrivals.iter().enumerate() {
        let h = trace.delay_tolerance[c];
        let cum: Vec<f64> = arrivals
            .iter()
            .scan(0.0, |acc, &v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        for t in 0..t_len {
            let mut row = vec![0.0; n];
            for tau in 0..=t {
                row[vars.l_fl(c, tau)] = 1.0;
            }
            lp.add_constraint(row, Relation::Le, cum[t]);
        }
        for t in 0..t_len.saturating_sub(h) {
            let mut row = vec![0.0; n];
            for tau in 0..=(t + h).min(t_len - 1) {
                row[vars.l_fl(c, tau)] = 1.0;
            }
            lp.add_constraint(row, Relation::Ge, cum[t]);
        }
        let mut row = vec![0.0; n];
        for tau in 0..t_len {
            row[vars.l_fl(c, tau)] = 1.0;
        }
        lp.add_constraint(row, Relation::Ge, cum[t_len - 1]);
    }

    for t in 0..t_len {
        // Flexible capacity: processed work per slot within fleet service rate.
        let mut row = vec![0.0; n];
        row[vars.a_fl(t)] = params.l_rate;
        for c in 0..vars.n_classes {
            row[vars.l_fl(c, t)] = -1.0;
        }
        lp.add_constraint(row, Relation::Ge, 0.0);

        // Inflexible demand must be met in the slot it arrives.
        let mut row = vec![0.0; n];
        row[vars.l_ifl(t)] = 1.0;
        lp.add_constraint(row, Relation::Ge, trace.inflexible[t]);

        // QoS delay bound, linearized.
        let mut row = vec![0.0; n];
        row[vars.l_ifl(t)] = 1.0;
        row[vars.a_ifl(t)] = -qos_slope;
        lp.add_constraint(row, Relation::Le, 0.0);

        // Server fleet cap.
        let mut row = vec![0.0; n];
        row[vars.a_fl(t)] = 1.0;
        row[vars.a_ifl(t)] = 1.0;
        lp.add_constraint(row, Relation::Le, params.a_max);

        // Battery energy balance.
        let mut row = vec![0.0; n];
        row[vars.q_ess(t)] = 1.0;
        row[vars.p_charge(t)] = -1.0;
        row[vars.p_discharge(t)] = 1.0;
        let rhs = if t == 0 {
            ess.q_init
        } else {
            row[vars.q_ess(t - 1)] = -1.0;
            0.0
        };
        lp.add_constraint(row, Relation::Eq, rhs);

        // Robust power balance at the PV lower endpoint.
        let mut row = vec![0.0; n];
        row[vars.p_grid(t)] = 1.0;
        row[vars.a_fl(t)] = -kappa_a;
        row[vars.a_ifl(t)] = -kappa_a;
        for c in 0..vars.n_classes {
            row[vars.l_fl(c, t)] = -kappa_w;
        }
        row[vars.l_ifl(t)] -= kappa_w;
        row[vars.p_charge(t)] = -1.0;
        row[vars.p_discharge(t)] = 1.0;
        lp.add_constraint(row, Relation::Ge, -pv_lower[t]);
    }

    // Terminal battery level: end no lower than the starting charge.
    let mut row = vec![0.0; n];
    row[vars.q_ess(t_len - 1)] = 1.0;
    lp.add_constraint(row, Relation::Ge, ess.q_init);

    Ok(ScheduleLp {
        lp,
        vars,
        params: *params,
        ess: *ess,
        market: market.clone(),
        pv_lower: pv_lower.to_vec(),
    })
}

impl ScheduleLp {
    pub fn solve(&self) -> Result<ScheduleOutcome, DcError> {
        let sol = self.lp.solve()?;
        self.decode(&sol)
    }

    pub fn decode(&self, sol: &LpSolution) -> Result<ScheduleOutcome, DcError> {
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                return Ok(ScheduleOutcome::Infeasible {
                    tight_slots: self.tight_slots(),
                })
            }
            // The objective is bounded below by zero, so this cannot
            // happen for a well-formed model.
            LpStatus::Unbounded => return Err(DcError::BadParam("schedule LP unbounded".into())),
        }
        let v = &self.vars;
        let t_len = v.t;
        let x = &sol.x;
        let flex_processed: Vec<Vec<f64>> = (0..v.n_classes)
            .map(|c| (0..t_len).map(|t| x[v.l_fl(c, t)]).collect())
            .collect();
        let flex_servers: Vec<f64> = (0..t_len).map(|t| x[v.a_fl(t)]).collect();
        let inflex_processed: Vec<f64> = (0..t_len).map(|t| x[v.l_ifl(t)]).collect();
        let inflex_servers: Vec<f64> = (0..t_len).map(|t| x[v.a_ifl(t)]).collect();
        let grid_power: Vec<f64> = (0..t_len).map(|t| x[v.p_grid(t)]).collect();
        let ess_power: Vec<f64> = (0..t_len)
            .map(|t| x[v.p_charge(t)] - x[v.p_discharge(t)])
            .collect();
        let ess_level: Vec<f64> = (0..t_len).map(|t| x[v.q_ess(t)]).collect();
        let dc_power_kw: Vec<f64> = (0..t_len)
            .map(|t| {
                let work: f64 = (0..v.n_classes).map(|c| flex_processed[c][t]).sum::<f64>()
                    + inflex_processed[t];
                self.params.kappa_servers() * (flex_servers[t] + inflex_servers[t])
                    + self.params.kappa_work() * work
            })
            .collect();
        let cost_energy: f64 = (0..t_len)
            .map(|t| self.market.price[t] * grid_power[t])
            .sum();
        let carbon_energy: f64 = (0..t_len)
            .map(|t| self.market.cbep[t] * grid_power[t])
            .sum();
        let cost_teac = self.params.lambda_c * carbon_energy;
        Ok(ScheduleOutcome::Solved(ScheduleSolution {
            flex_processed,
            flex_servers,
            inflex_processed,
            inflex_servers,
            grid_power,
            ess_power,
            ess_level,
            dc_power_kw,
            pv_lower: self.pv_lower.clone(),
            cost_energy,
            cost_teac,
            carbon_energy,
            lp_objective: sol.objective_value,
            lp_iterations: sol.iterations,
        }))
    }

    /// Slots ranked by how little slack the guaranteed supply has against
    /// the inflexible demand floor (most binding first).
    fn tight_slots(&self) -> Vec<usize> {
        let qos = self.params.l_rate - 1.0 / self.params.c_dt;
        let mut slack: Vec<(usize, f64)> = (0..self.vars.t)
            .map(|t| {
                let arrivals = self.inflexible_floor(t);
                let demand_floor = self.params.kappa_servers() * (arrivals / qos)
                    + self.params.kappa_work() * arrivals;
                let supply_max = self.params.p_grid_max + self.pv_lower[t] + self.ess.p_max;
                (t, supply_max - demand_floor)
            })
            .collect();
        slack.sort_by(|a, b| a.1.total_cmp(&b.1));
        let negative: Vec<usize> = slack
            .iter()
            .filter(|(_, s)| *s < 0.0)
            .map(|&(t, _)| t)
            .collect();
        if negative.is_empty() {
            slack.iter().take(3).map(|&(t, _)| t).collect()
        } else {
            negative
        }
    }

    fn inflexible_floor(&self, t: usize) -> f64 {
        // The trace itself is not stored; recover the floor from the Ge
        // row `l_ifl[t] >= arrival` emitted during construction.
        let idx = self.vars.l_ifl(t);
        self.lp
            .constraints
            .iter()
            .find(|c| {
                c.relation == Relation::Ge
                    && c.coeffs[idx] == 1.0
                    && c.coeffs.iter().filter(|&&v| v != 0.0).count() == 1
            })
            .map(|c| c.rhs)
            .unwrap_or(0.0)
    }
}

/// Realized-day validation of a committed schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    /// True where realized supply failed to cover demand in that slot.
    pub violation_flags: Vec<bool>,
    pub n_violations: usize,
    /// Committed cost: purchases are day-ahead commitments, so realized
    /// cost and carbon equal the scheduled ones.
    pub realized_cost: f64,
    pub realized_carbon: f64,
}

/// Flag each slot where `pv_realized + grid < demand + battery draw`
/// beyond tolerance. Purchases are committed day-ahead; violations are
/// recorded, not repaired.
pub fn validate_schedule(
    solution: &ScheduleSolution,
    pv_realized: &[f64],
) -> Result<ValidationReport, DcError> {
    let t_len = solution.grid_power.len();
    if pv_realized.len() != t_len {
        return Err(DcError::LengthMismatch(format!(
            "schedule horizon {t_len} vs realized pv {}",
            pv_realized.len()
        )));
    }
    let violation_flags: Vec<bool> = (0..t_len)
        .map(|t| {
            pv_realized[t] + solution.grid_power[t]
                < solution.dc_power_kw[t] + solution.ess_power[t] - 1e-6
        })
        .collect();
    let n_violations = violation_flags.iter().filter(|&&f| f).count();
    Ok(ValidationReport {
        violation_flags,
        n_violations,
        realized_cost: solution.total_cost(),
        realized_carbon: solution.carbon_energy,
    })
}

/// Independent re-check of every scheduling constraint directly from the
/// decoded solution (no shared code with the LP row builder). Returns the
/// worst violation found, by constraint family.
#[derive(Debug, Clone)]
pub struct AuditReport {
    pub worst: f64,
    pub by_family: Vec<(&'static str, f64)>,
}

pub fn audit_solution(
    params: &DataCenterParams,
    ess: &EssParams,
    trace: &WorkloadTrace,
    pv_lower: &[f64],
    sol: &ScheduleSolution,
) -> AuditReport {
    let t_len = trace.horizon();
    let mut fam: Vec<(&'static str, f64)> = Vec::new();
    let mut push = |name: &'static str, v: f64| fam.push((name, v));

    // Cumulative flexible-processing window.
    let mut w_cum_le = 0.0_f64;
    let mut w_deadline = 0.0_f64;
    let mut w_complete = 0.0_f64;
    for (c, arrivals) in trace.flexible_arrivals.iter().enumerate() {
        let h = trace.delay_tolerance[c];
        let mut cum_arr = 0.0;
        let cum_proc_all: Vec<f64> = sol.flex_processed[c]
            .iter()
            .scan(0.0, |acc, &v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        for t in 0..t_len {
            cum_arr += arrivals[t];
            w_cum_le = w_cum_le.max(cum_proc_all[t] - cum_arr);
            if t + h < t_len {
                w_deadline = w_deadline.max(cum_arr - cum_proc_all[t + h]);
            } else {
                w_complete = w_complete.max(cum_arr - cum_proc_all[t_len - 1]);
            }
        }
    }
    push("flex cumulative cap", w_cum_le);
    push("flex deadline", w_deadline);
    push("flex completion", w_complete);

    let qos = params.l_rate - 1.0 / params.c_dt;
    let mut w_cap = 0.0_f64;
    let mut w_inflex = 0.0_f64;
    let mut w_qos = 0.0_f64;
    let mut w_servers = 0.0_f64;
    let mut w_nonneg = 0.0_f64;
    let mut w_balance = 0.0_f64;
    for t in 0..t_len {
        let flex_sum: f64 = (0..trace.n_classes())
            .map(|c| sol.flex_processed[c][t])
            .sum();
        w_cap = w_cap.max(flex_sum - params.l_rate * sol.flex_servers[t]);
        w_inflex = w_inflex.max(trace.inflexible[t] - sol.inflex_processed[t]);
        w_qos = w_qos.max(sol.inflex_processed[t] - qos * sol.inflex_servers[t]);
        w_servers = w_servers.max(sol.flex_servers[t] + sol.inflex_servers[t] - params.a_max);
        for c in 0..trace.n_classes() {
            w_nonneg = w_nonneg.max(-sol.flex_processed[c][t]);
        }
        w_nonneg = w_nonneg
            .max(-sol.flex_servers[t])
            .max(-sol.inflex_processed[t])
            .max(-sol.inflex_servers[t])
            .max(-sol.grid_power[t])
            .max(sol.grid_power[t] - params.p_grid_max);
        let demand = params.kappa_servers() * (sol.flex_servers[t] + sol.inflex_servers[t])
            + params.kappa_work() * (flex_sum + sol.inflex_processed[t]);
        w_balance = w_balance.max(demand + sol.ess_power[t] - pv_lower[t] - sol.grid_power[t]);
    }
    push("flex capacity", w_cap);
    push("inflexible demand", w_inflex);
    push("qos", w_qos);
    push("server cap", w_servers);
    push("nonnegativity and caps", w_nonneg);
    push("robust balance", w_balance);

    // Battery dynamics and limits.
    let mut w_ess = 0.0_f64;
    let mut prev = ess.q_init;
    for t in 0..t_len {
        w_ess = w_ess.max((sol.ess_level[t] - prev - sol.ess_power[t]).abs());
        w_ess = w_ess
            .max(ess.q_min - sol.ess_level[t])
            .max(sol.ess_level[t] - ess.q_max);
        w_ess = w_ess.max(sol.ess_power[t].abs() - ess.p_max);
        prev = sol.ess_level[t];
    }
    w_ess = w_ess.max(ess.q_init - sol.ess_level[t_len - 1]);
    push("battery", w_ess);

    let worst = fam
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    AuditReport {
        worst,
        by_family: fam,
    }
}

/// CSV export: one row per slot with every decision variable, plus a
/// realized-violation flag column when a validation report is supplied.
pub fn schedule_to_csv(sol: &ScheduleSolution, validation: Option<&ValidationReport>) -> String {
    let n_classes = sol.flex_processed.len();
    let mut header = String::from("hour");
    for c in 0..n_classes {
        header.push_str(&format!(",flex_c{}", c + 1));
    }
    header.push_str(",flex_servers,inflex_jobs,inflex_servers,grid_kw,ess_kw,ess_kwh,dc_power_kw,pv_lower_kw,violation");
    let mut out = header;
    out.push('\n');
    for t in 0..sol.grid_power.len() {
        let mut row = format!("{t}");
        for c in 0..n_classes {
            row.push_str(&format!(",{}", sol.flex_processed[c][t]));
        }
        let flag = validation.map_or(false, |v| v.violation_flags[t]);
        row.push_str(&format!(
            ",{},{},{},{},{},{},{},{},{}",
            sol.flex_servers[t],
            sol.inflex_processed[t],
            sol.inflex_servers[t],
            sol.grid_power[t],
            sol.ess_power[t],
            sol.ess_level[t],
            sol.dc_power_kw[t],
            sol.pv_lower[t],
            if flag { 1 } else { 0 }
        ));
        out.push_str(&row);
        out.push('\n');
    }
    out
}

/// JSON summary of costs, carbon, and violations.
pub fn schedule_summary_json(
    sol: &ScheduleSolution,
    validation: Option<&ValidationReport>,
) -> String {
    #[derive(Serialize)]
    struct Summary<'a> {
        cost_energy: f64,
        cost_teac: f64,
        total_cost: f64,
        carbon_energy: f64,
        lp_objective: f64,
        lp_iterations: usize,
        validation: Option<&'a ValidationReport>,
    }
    serde_json::to_string_pretty(&Summary {
        cost_energy: sol.cost_energy,
        cost_teac: sol.cost_teac,
        total_cost: sol.total_cost(),
        carbon_energy: sol.carbon_energy,
        lp_objective: sol.lp_objective,
        lp_iterations: sol.lp_iterations,
        validation,
    })
    .expect("summary serializes")
}

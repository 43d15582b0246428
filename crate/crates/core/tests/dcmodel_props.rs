//! Scheduling-model properties checked through an independent audit path:
//! the LP solution is decoded and every physical constraint re-evaluated
//! directly, with no code shared with the LP row builder.

use confsched_core::dcmodel::{
    audit_solution, build_schedule_lp, dc_power, DataCenterParams, EssParams, MarketSeries,
    ScheduleOutcome, ScheduleSolution, WorkloadTrace,
};
use confsched_core::lp::LinearProgram;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn diurnal(base: f64, peak: f64, center: f64) -> Vec<f64> {
    (0..24)
        .map(|h| {
            let x = (h as f64 - center) / 12.0 * std::f64::consts::PI;
            base + (peak - base) * (0.5 + 0.5 * x.cos()).powi(2)
        })
        .collect()
}

fn bench_trace() -> WorkloadTrace {
    WorkloadTrace {
        inflexible: diurnal(900.0, 1800.0, 14.0),
        flexible_arrivals: vec![
            diurnal(80.0, 220.0, 10.0),
            diurnal(100.0, 280.0, 12.0),
            diurnal(120.0, 340.0, 15.0),
        ],
        delay_tolerance: vec![2, 5, 7],
    }
}

fn bench_market() -> MarketSeries {
    MarketSeries {
        price: (0..24)
            .map(|h| match h {
                0..=5 => 0.04,
                6..=16 => 0.07,
                17..=21 => 0.13,
                _ => 0.05,
            })
            .collect(),
        cbep: (0..24)
            .map(|h| match h {
                0..=5 => 0.70,
                6..=9 => 0.55,
                10..=15 => 0.35,
                16..=19 => 0.60,
                _ => 0.72,
            })
            .collect(),
    }
}

fn solve(
    params: &DataCenterParams,
    ess: &EssParams,
    trace: &WorkloadTrace,
    market: &MarketSeries,
    pv: &[f64],
) -> ScheduleSolution {
    let built = build_schedule_lp(params, ess, trace, market, pv).unwrap();
    match built.solve().unwrap() {
        ScheduleOutcome::Solved(s) => s,
        ScheduleOutcome::Infeasible { tight_slots } => {
            panic!("unexpected infeasibility, tight slots {tight_slots:?}")
        }
    }
}

#[test]
fn audit_clears_random_instances() {
    let params = DataCenterParams::default();
    let ess = EssParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..20 {
        let mut trace = bench_trace();
        for v in trace.inflexible.iter_mut() {
            *v *= rng.gen_range(0.5..1.3);
        }
        for row in trace.flexible_arrivals.iter_mut() {
            for v in row.iter_mut() {
                *v *= rng.gen_range(0.3..1.6);
            }
        }
        let pv: Vec<f64> = (0..24)
            .map(|h| {
                if (6..18).contains(&h) {
                    rng.gen_range(0.0..400.0)
                } else {
                    0.0
                }
            })
            .collect();
        let sol = solve(&params, &ess, &trace, &bench_market(), &pv);
        let audit = audit_solution(&params, &ess, &trace, &pv, &sol);
        assert!(
            audit.worst <= 1e-6,
            "case {case}: constraint family violated by {}: {:?}",
            audit.worst,
            audit.by_family
        );
    }
}

#[test]
fn flexible_work_is_conserved() {
    let params = DataCenterParams::default();
    let ess = EssParams::default();
    let trace = bench_trace();
    let pv = vec![0.0; 24];
    let sol = solve(&params, &ess, &trace, &bench_market(), &pv);
    for (c, arrivals) in trace.flexible_arrivals.iter().enumerate() {
        let arrived: f64 = arrivals.iter().sum();
        let processed: f64 = sol.flex_processed[c].iter().sum();
        assert!(
            (arrived - processed).abs() <= 1e-6,
            "class {c}: processed {processed} vs arrived {arrived}"
        );
    }
}

#[test]
fn smaller_pv_bound_never_cheapens_the_schedule() {
    let params = DataCenterParams::default();
    let ess = EssParams::default();
    let trace = bench_trace();
    let market = bench_market();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pv_full: Vec<f64> = (0..24)
        .map(|h| {
            if (6..18).contains(&h) {
                rng.gen_range(100.0..400.0)
            } else {
                0.0
            }
        })
        .collect();
    let mut prev_cost = f64::NEG_INFINITY;
    for shrink in [1.0, 0.75, 0.5, 0.25, 0.0] {
        let pv: Vec<f64> = pv_full.iter().map(|v| v * shrink).collect();
        let sol = solve(&params, &ess, &trace, &market, &pv);
        assert!(
            sol.total_cost() >= prev_cost - 1e-6,
            "shrink {shrink}: cost {} dropped below {prev_cost}",
            sol.total_cost()
        );
        prev_cost = sol.total_cost();
    }
}

/// Two-tier price day: the most flexible class must route a strictly
/// larger share of its work into the cheap window than the least
/// flexible class, which cannot reach it.
#[test]
fn flexible_classes_shift_into_cheap_hours() {
    let params = DataCenterParams {
        lambda_c: 0.0,
        ..DataCenterParams::default()
    };
    // Battery pinned so time-shifting happens through workloads alone.
    let ess = EssParams {
        q_max: 100.0,
        q_min: 100.0,
        p_max: 1.0,
        q_init: 100.0,
    };
    let arrivals: Vec<f64> = (0..24)
        .map(|h| if (5..=8).contains(&h) { 200.0 } else { 0.0 })
        .collect();
    let trace = WorkloadTrace {
        inflexible: vec![50.0; 24],
        flexible_arrivals: vec![arrivals.clone(), arrivals.clone(), arrivals],
        delay_tolerance: vec![2, 5, 7],
    };
    let cheap = |h: usize| h >= 12;
    let market = MarketSeries {
        price: (0..24)
            .map(|h| if cheap(h) { 0.05 } else { 0.20 })
            .collect(),
        cbep: vec![0.5; 24],
    };
    let sol = solve(&params, &ess, &trace, &market, &vec![0.0; 24]);
    let share_cheap = |c: usize| -> f64 {
        let total: f64 = sol.flex_processed[c].iter().sum();
        let cheap_sum: f64 = sol.flex_processed[c]
            .iter()
            .enumerate()
            .filter(|&(h, _)| cheap(h))
            .map(|(_, &v)| v)
            .sum();
        cheap_sum / total
    };
    let (s_small, s_large) = (share_cheap(0), share_cheap(2));
    assert!(
        s_large > s_small,
        "largest-h class share {s_large} must exceed smallest-h class share {s_small}"
    );
    // Class 1 (h = 2) cannot reach hour 12 from arrivals ending at hour 8.
    assert!(s_small < 1e-9);
    assert!(s_large > 0.5);
}

#[test]
fn carbon_energy_non_increasing_in_certificate_price() {
    let ess = EssParams::default();
    let trace = bench_trace();
    let market = bench_market();
    let pv: Vec<f64> = (0..24)
        .map(|h| if (6..18).contains(&h) { 150.0 } else { 0.0 })
        .collect();
    let mut prev = f64::INFINITY;
    for lambda_c in [0.0, 0.05, 0.1, 0.2] {
        let params = DataCenterParams {
            lambda_c,
            ..DataCenterParams::default()
        };
        let sol = solve(&params, &ess, &trace, &market, &pv);
        assert!(
            sol.carbon_energy <= prev + 1e-6,
            "lambda_c {lambda_c}: carbon {} rose above {prev}",
            sol.carbon_energy
        );
        prev = sol.carbon_energy;
    }
}

/// Text dump/restore of a full-size schedule LP reproduces the solve
/// exactly: same objective, same pivot count, same solution vector.
#[test]
fn dump_restore_reproduces_full_schedule_solve() {
    let params = DataCenterParams::default();
    let ess = EssParams::default();
    let pv: Vec<f64> = (0..24)
        .map(|h| if (6..18).contains(&h) { 200.0 } else { 0.0 })
        .collect();
    let built = build_schedule_lp(&params, &ess, &bench_trace(), &bench_market(), &pv).unwrap();
    let original = built.lp.solve().unwrap();
    let restored = LinearProgram::restore(&built.lp.dump()).unwrap();
    let again = restored.solve().unwrap();
    assert_eq!(original.status, again.status);
    assert_eq!(original.iterations, again.iterations);
    assert_eq!(original.objective_value, again.objective_value);
    assert_eq!(original.x, again.x);
    assert_eq!(restored.names, built.lp.names);
}

/// Independent enumeration for the two-slot deferral instance: with one
/// class and linear per-slot power cost, the optimum sits at an extreme
/// split of the work, so checking both endpoints is exhaustive.
#[test]
fn two_slot_optimum_matches_enumeration() {
    let params = DataCenterParams {
        lambda_c: 0.0,
        ..DataCenterParams::default()
    };
    let ess = EssParams {
        q_max: 100.0,
        q_min: 100.0,
        p_max: 1.0,
        q_init: 100.0,
    };
    let trace = WorkloadTrace {
        inflexible: vec![0.0, 0.0],
        flexible_arrivals: vec![vec![10.0, 0.0]],
        delay_tolerance: vec![1],
    };
    let market = MarketSeries {
        price: vec![2.0, 1.0],
        cbep: vec![0.0, 0.0],
    };
    let per_slot = |work: f64| {
        dc_power(&params, work / params.l_rate, work).unwrap() // optimal servers = work / rate
    };
    let candidates = [
        2.0 * per_slot(10.0) + 1.0 * per_slot(0.0), // all in slot 1
        2.0 * per_slot(0.0) + 1.0 * per_slot(10.0), // all deferred to slot 2
    ];
    let oracle = candidates.iter().cloned().fold(f64::INFINITY, f64::min);

    let built = build_schedule_lp(&params, &ess, &trace, &market, &[0.0, 0.0]).unwrap();
    let sol = match built.solve().unwrap() {
        ScheduleOutcome::Solved(s) => s,
        _ => panic!("feasible"),
    };
    assert!(
        (sol.total_cost() - oracle).abs() <= 1e-9,
        "lp {} vs enumeration {oracle}",
        sol.total_cost()
    );
}

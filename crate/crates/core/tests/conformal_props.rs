//! Property tests for the conformal layer: brute-force oracle agreement,
//! monotonicity, permutation invariance, finite-sample coverage, and
//! width adaptivity on heteroscedastic data.

use confsched_core::conformal::{
    abs_scores_by_dim, adjusted_quantile, amv_cqr_calibrate, build_intervals, coverage_trials,
    cqr_calibrate, cqr_scores_by_dim, empirical_coverage, imv_cqr_calibrate, point_cp_calibrate,
    split_cp_calibrate, MultiMode, ScoreKind, ScoreSet,
};
use confsched_core::data::Matrix;
use confsched_core::quantile::{train_on_rows, Architecture, QuantileModel, TrainConfig};
use confsched_core::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent oracle: sort the whole list and take the k-th smallest
/// with k = ceil(beta * n).
fn sort_and_index_oracle(scores: &[f64], beta: f64) -> f64 {
    if beta > 1.0 {
        return f64::INFINITY;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((beta * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

#[test]
fn adjusted_quantile_matches_oracle_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(314);
    for _ in 0..300 {
        let n = rng.gen_range(1..200);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let beta = rng.gen_range(0.01..1.3);
        let set = ScoreSet::new(ScoreKind::Absolute, raw.clone()).unwrap();
        let got = adjusted_quantile(&set, beta).unwrap();
        let want = sort_and_index_oracle(&raw, beta);
        assert_eq!(got, want, "n={n} beta={beta}");
    }
}

#[test]
fn adjusted_quantile_monotone_in_beta() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let raw: Vec<f64> = (0..97).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let set = ScoreSet::new(ScoreKind::Absolute, raw).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for i in 1..=120 {
        let beta = i as f64 / 100.0;
        let q = adjusted_quantile(&set, beta).unwrap();
        assert!(q >= prev, "beta {beta}: {q} < {prev}");
        prev = q;
    }
}

#[test]
fn calibrated_q_non_increasing_in_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let lo: Vec<f64> = (0..150).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let hi: Vec<f64> = (0..150).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let lo = ScoreSet::new(ScoreKind::Lower, lo).unwrap();
    let hi = ScoreSet::new(ScoreKind::Upper, hi).unwrap();
    let mut prev = f64::INFINITY;
    for alpha in [0.02, 0.05, 0.1, 0.2, 0.4, 0.8] {
        let cal = cqr_calibrate(&lo, &hi, alpha / 2.0, alpha / 2.0).unwrap();
        assert!(cal.q_lower.at(0) <= prev);
        prev = cal.q_lower.at(0);
    }
}

#[test]
fn calibration_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let d = 4;
    let n = 60;
    let mk = |rng: &mut ChaCha8Rng, kind| -> Vec<ScoreSet> {
        (0..d)
            .map(|_| {
                ScoreSet::new(kind, (0..n).map(|_| rng.gen_range(-1.0..3.0)).collect()).unwrap()
            })
            .collect()
    };
    let lo = mk(&mut rng, ScoreKind::Lower);
    let hi = mk(&mut rng, ScoreKind::Upper);
    let perm: Vec<usize> = {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            p.swap(i, rng.gen_range(0..=i));
        }
        p
    };
    let shuffle = |sets: &[ScoreSet]| -> Vec<ScoreSet> {
        sets.iter()
            .map(|s| {
                let v: Vec<f64> = perm.iter().map(|&i| s.scores[i]).collect();
                ScoreSet::new(s.kind, v).unwrap()
            })
            .collect()
    };
    let (lo_s, hi_s) = (shuffle(&lo), shuffle(&hi));

    let a = amv_cqr_calibrate(&lo, &hi, 0.05, 0.05).unwrap();
    let b = amv_cqr_calibrate(&lo_s, &hi_s, 0.05, 0.05).unwrap();
    assert_eq!(a.q_lower, b.q_lower);
    assert_eq!(a.q_upper, b.q_upper);

    let a = imv_cqr_calibrate(&lo, &hi, 0.05, 0.05).unwrap();
    let b = imv_cqr_calibrate(&lo_s, &hi_s, 0.05, 0.05).unwrap();
    assert_eq!(a.q_lower, b.q_lower);

    let abs = mk(&mut rng, ScoreKind::Absolute);
    let abs_s = shuffle(&abs);
    let a = point_cp_calibrate(&abs, 0.1, MultiMode::Amv).unwrap();
    let b = point_cp_calibrate(&abs_s, 0.1, MultiMode::Amv).unwrap();
    assert_eq!(a.q_lower, b.q_lower);
}

/// Heteroscedastic 1-D generator: y = sin(2x) + 2 + x * noise, x ~ U(0, 2).
/// Noise has continuous distribution, so scores never tie.
fn draw_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let x = rng.gen_range(0.0..2.0);
    let noise: f64 = {
        // sum of uniforms: cheap, smooth, symmetric
        let s: f64 = (0..4).map(|_| rng.gen_range(-0.5..0.5)).sum();
        s
    };
    (x, ((2.0 * x).sin() + 2.0 + x * noise).max(0.0))
}

fn train_1d(tau: f64, seed: u64) -> QuantileModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<(f64, f64)> = (0..400).map(|_| draw_pair(&mut rng)).collect();
    let xs = Matrix::from_rows(&rows.iter().map(|&(x, _)| vec![x]).collect::<Vec<_>>()).unwrap();
    let ys = Matrix::from_rows(&rows.iter().map(|&(_, y)| vec![y]).collect::<Vec<_>>()).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        learning_rate: 0.02,
        architecture: Architecture::Mlp { hidden: vec![16] },
        seed,
        batch_size: 64,
        ..TrainConfig::default()
    };
    train_on_rows(&xs, &ys, tau, &cfg).unwrap()
}

/// Split-CP coverage sandwich at reduced scale: the mean coverage over
/// independent calibration/test trials must land inside
/// `[1 - alpha - 3se, 1 - alpha + 1/(n_cal + 1) + 3se]`, here at both
/// alpha = 0.1 and alpha = 0.2. Scores are continuous (noise-injected
/// data), which is what the upper bound requires.
#[test]
fn split_cp_coverage_sandwich_small() {
    let model = train_1d(0.5, 42);
    let (n_cal, n_test, trials) = (120usize, 500usize, 80usize);
    for (k, alpha) in [0.1, 0.2].into_iter().enumerate() {
        let stats = coverage_trials(Execution::default(), 777 + k as u64, trials, |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let resid: Vec<f64> = (0..n_cal)
                .map(|_| {
                    let (x, y) = draw_pair(&mut rng);
                    (y - model.predict(&[x]).unwrap()[0]).abs()
                })
                .collect();
            let cal =
                split_cp_calibrate(&ScoreSet::new(ScoreKind::Absolute, resid).unwrap(), alpha)
                    .unwrap();
            let mut hits = 0;
            for _ in 0..n_test {
                let (x, y) = draw_pair(&mut rng);
                let mu = model.predict(&[x]).unwrap();
                let iv = build_intervals(&cal, &mu, &mu);
                if iv.lower[0] <= y && y <= iv.upper[0] {
                    hits += 1;
                }
            }
            hits as f64 / n_test as f64
        });
        let lo = 1.0 - alpha - 3.0 * stats.std_error;
        let hi = 1.0 - alpha + 1.0 / (n_cal as f64 + 1.0) + 3.0 * stats.std_error;
        assert!(
            stats.mean >= lo && stats.mean <= hi,
            "alpha {alpha}: mean coverage {} outside [{lo}, {hi}] (se {})",
            stats.mean,
            stats.std_error
        );
    }
}

/// Same sandwich for the CQR interval with alpha split evenly.
#[test]
fn cqr_coverage_sandwich_small() {
    let lo_model = train_1d(0.1, 43);
    let hi_model = train_1d(0.9, 44);
    let (alpha, n_cal, n_test, trials) = (0.1, 120usize, 500usize, 80usize);
    let stats = coverage_trials(Execution::default(), 778, trials, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<(f64, f64)> = (0..n_cal).map(|_| draw_pair(&mut rng)).collect();
        let lo_scores: Vec<f64> = pairs
            .iter()
            .map(|&(x, y)| lo_model.predict(&[x]).unwrap()[0] - y)
            .collect();
        let hi_scores: Vec<f64> = pairs
            .iter()
            .map(|&(x, y)| y - hi_model.predict(&[x]).unwrap()[0])
            .collect();
        let cal = cqr_calibrate(
            &ScoreSet::new(ScoreKind::Lower, lo_scores).unwrap(),
            &ScoreSet::new(ScoreKind::Upper, hi_scores).unwrap(),
            alpha / 2.0,
            alpha / 2.0,
        )
        .unwrap();
        let mut hits = 0;
        for _ in 0..n_test {
            let (x, y) = draw_pair(&mut rng);
            let iv = build_intervals(
                &cal,
                &lo_model.predict(&[x]).unwrap(),
                &hi_model.predict(&[x]).unwrap(),
            );
            if iv.lower[0] <= y && y <= iv.upper[0] {
                hits += 1;
            }
        }
        hits as f64 / n_test as f64
    });
    let lo = 1.0 - alpha - 3.0 * stats.std_error;
    let hi = 1.0 - alpha + 1.0 / (n_cal as f64 + 1.0) + 3.0 * stats.std_error;
    assert!(
        stats.mean >= lo && stats.mean <= hi,
        "mean coverage {} outside [{lo}, {hi}]",
        stats.mean
    );
}

/// CQR intervals must be narrower where the noise is smaller, and no
/// wider on average than the point-CP interval at matched coverage.
#[test]
fn cqr_width_adapts_and_beats_point_cp() {
    let lo_model = train_1d(0.1, 45);
    let hi_model = train_1d(0.9, 46);
    let mid_model = train_1d(0.5, 47);
    let alpha = 0.1;

    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let cal_pairs: Vec<(f64, f64)> = (0..400).map(|_| draw_pair(&mut rng)).collect();
    let cal_x =
        Matrix::from_rows(&cal_pairs.iter().map(|&(x, _)| vec![x]).collect::<Vec<_>>()).unwrap();
    let cal_y =
        Matrix::from_rows(&cal_pairs.iter().map(|&(_, y)| vec![y]).collect::<Vec<_>>()).unwrap();

    let (lo_sc, hi_sc) = cqr_scores_by_dim(
        &lo_model.predict_rows(&cal_x).unwrap(),
        &hi_model.predict_rows(&cal_x).unwrap(),
        &cal_y,
    );
    let cqr = amv_cqr_calibrate(&lo_sc, &hi_sc, alpha / 2.0, alpha / 2.0).unwrap();
    let abs = abs_scores_by_dim(&mid_model.predict_rows(&cal_x).unwrap(), &cal_y);
    let point = point_cp_calibrate(&abs, alpha, MultiMode::Amv).unwrap();

    let test_pairs: Vec<(f64, f64)> = (0..2000).map(|_| draw_pair(&mut rng)).collect();
    let mut cqr_ivs = Vec::new();
    let mut point_ivs = Vec::new();
    let mut truths = Vec::new();
    let (mut w_low_x, mut n_low_x, mut w_high_x, mut n_high_x) = (0.0, 0, 0.0, 0);
    for &(x, y) in &test_pairs {
        let iv = build_intervals(
            &cqr,
            &lo_model.predict(&[x]).unwrap(),
            &hi_model.predict(&[x]).unwrap(),
        );
        let w = iv.widths()[0];
        if x < 0.5 {
            w_low_x += w;
            n_low_x += 1;
        } else if x > 1.5 {
            w_high_x += w;
            n_high_x += 1;
        }
        cqr_ivs.push(iv);
        let mu = mid_model.predict(&[x]).unwrap();
        point_ivs.push(build_intervals(&point, &mu, &mu));
        truths.push(vec![y]);
    }
    let mean_low = w_low_x / n_low_x as f64;
    let mean_high = w_high_x / n_high_x as f64;
    assert!(
        mean_low < mean_high,
        "CQR width should grow with noise: low-x {mean_low} vs high-x {mean_high}"
    );

    let (_, cov_cqr) = empirical_coverage(&cqr_ivs, &truths).unwrap();
    let (_, cov_point) = empirical_coverage(&point_ivs, &truths).unwrap();
    assert!(
        (cov_cqr - cov_point).abs() <= 0.02,
        "coverage mismatch: cqr {cov_cqr} vs point {cov_point}"
    );
    let mean_w = |ivs: &[confsched_core::conformal::IntervalVector]| {
        ivs.iter().map(|iv| iv.widths()[0]).sum::<f64>() / ivs.len() as f64
    };
    let (wc, wp) = (mean_w(&cqr_ivs), mean_w(&point_ivs));
    assert!(
        wc <= wp,
        "CQR mean width {wc} should not exceed point-CP {wp}"
    );
}

#[test]
fn trials_independent_of_execution_strategy() {
    let run = |exec| {
        coverage_trials(exec, 123, 40, |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.gen_range(0.0..1.0)
        })
    };
    let seq = run(Execution::Sequential);
    let par = run(Execution::Parallel);
    assert_eq!(seq.per_trial, par.per_trial);
    assert_eq!(seq.mean, par.mean);
}

//! Acceptance criteria, one test each. Every test writes a single
//! `[PASS]`/`[FAIL]` line straight to stderr (bypassing the test harness's
//! capture) before asserting, so a plain `cargo test` log shows the verdicts.
//!
//! Three criteria cannot hold as stated; their tests are faithful, marked
//! `#[ignore]` with the reason, and run with `-- --include-ignored`. The
//! README has the analysis.

use std::collections::HashSet;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ioattrib::attribution::{run_pipeline, ErrorClass, PipelineConfig, Slice, Unexplained};
use ioattrib::duplicates::{application_error_bound, find_duplicate_sets, noise_estimate, pair_deltas, DuplicateSet};
use ioattrib::ingest::{split, SplitSpec};
use ioattrib::model::{GbtHyperparams, HyperparamGrid};
use ioattrib::simulator::{generate, DegradationWindow, SetSizeDistribution, SimConfig};
use ioattrib::system::{golden_time_model, tune_and_evaluate, weekly_error_timeline, TunedModel, WeekPoint};
use ioattrib::uncertainty::{
    decompose, ood_error_share, select_eu_threshold, train_ensemble, EnsembleOptions, UncertaintyEstimate,
};
use ioattrib::{log_ratio_error, to_percent_error, Dataset64};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

// Tolerances, pinned.
const C1_REL_TOL: f64 = 0.10;
const C1_MAX_RUNTIME: Duration = Duration::from_secs(120);
const C1_MIN_CONCURRENT_PAIRS: usize = 500;
const C2_REL_TOL: f64 = 0.05;
const C2_SETS: usize = 10_000;
const C3_MAX_RATIO: f64 = 1.25;
const C4_REL_TOL: f64 = 0.10;
const HALF_NORMAL_MEDIAN: f64 = 0.6745;
const C5_MIN_REDUCTION: f64 = 0.30;
const C6_BIAS_OVER_SE: f64 = 2.0;
const C6_MIN_BIAS_REDUCTION: f64 = 0.80;
const C7_MIN_RECALL: f64 = 0.90;
const C7_MAX_ID_FLAGGED: f64 = 0.05;
const C7_MIN_ERROR_RATIO: f64 = 2.0;
const C7_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const C8_MAX_SYSTEM: f64 = 0.005;
const C8_MAX_TUNED_PERCENT: f64 = 2.0;
/// Reference values are quoted to two decimals.
const C9_ROUNDING: f64 = 0.005;
const C10_PROPTEST_CASES: u32 = 1000;

fn verdict(criterion: u32, ok: bool, detail: impl AsRef<str>) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[{tag}] criterion {criterion}: {}", detail.as_ref());
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn sim(cfg: &SimConfig) -> Dataset64 {
    generate::<f64>(cfg).expect("valid simulator config").0
}

fn concurrent_pairs(n_sets: usize, sigma: f64, seed: u64) -> SimConfig {
    SimConfig {
        n_jobs: 2 * n_sets,
        duplicate_set_count: n_sets,
        duplicate_set_size: SetSizeDistribution::Fixed { size: 2 },
        concurrent_duplicate_fraction: 1.0,
        noise_sigma: sigma,
        seed,
        ..Default::default()
    }
}

#[test]
fn c01_noise_recovery() {
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, sigma) in [0.02, 0.05, 0.1].into_iter().enumerate() {
        let t = Instant::now();
        let cfg = SimConfig {
            n_jobs: 3000,
            ..concurrent_pairs(600, sigma, 10 + i as u64)
        };
        let ds = sim(&cfg);
        let sets = find_duplicate_sets(&ds).sets;
        let est = noise_estimate(&sets, &HashSet::new(), 1.0).unwrap();
        let elapsed = t.elapsed();
        let good = est.n_sets >= C1_MIN_CONCURRENT_PAIRS
            && rel(est.sigma, sigma) <= C1_REL_TOL
            && elapsed < C1_MAX_RUNTIME;
        ok &= good;
        lines.push(format!(
            "σ={sigma}: est {:.5} ({:+.1}%, {} pairs, {:.1?})",
            est.sigma,
            (est.sigma / sigma - 1.0) * 100.0,
            est.n_sets,
            elapsed
        ));
    }
    verdict(1, ok, format!("noise recovery within ±10%: {}", lines.join("; ")));
    assert!(ok);
}

#[test]
fn c02_bessel_unbiased() {
    let sigma = 0.05;
    let ds = sim(&concurrent_pairs(C2_SETS, sigma, 7));
    let sets = find_duplicate_sets(&ds).sets;
    assert_eq!(sets.len(), C2_SETS);
    // Σ (x − mean)² / (n − 1) per set, computed here without the library
    let mean_var = sets
        .iter()
        .map(|s| {
            let x = &s.log_throughputs;
            let m = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
        })
        .sum::<f64>()
        / sets.len() as f64;
    // and the library's corrected deviations agree with it
    let lib_var = sets
        .iter()
        .map(|s| s.corrected_deviations().iter().map(|d| d * d).sum::<f64>() / s.len() as f64)
        .sum::<f64>()
        / sets.len() as f64;
    let ok = rel(mean_var, sigma * sigma) <= C2_REL_TOL && rel(lib_var, mean_var) < 1e-9;
    verdict(
        2,
        ok,
        format!(
            "mean corrected variance {mean_var:.6e} vs σ² {:.6e} ({:+.2}%, tol ±5%)",
            sigma * sigma,
            (mean_var / (sigma * sigma) - 1.0) * 100.0
        ),
    );
    assert!(ok);
}

#[test]
fn c03_application_bound_consistency() {
    let ds = sim(&SimConfig {
        noise_sigma: 0.03,
        ..Default::default()
    });
    let bound = application_error_bound(&find_duplicate_sets(&ds).sets).unwrap();
    let splits = split(&ds, &SplitSpec::default()).unwrap();
    let features = ds.schema().observable_app_features().to_vec();
    let tuned = tune_and_evaluate(&splits, &features, &HyperparamGrid::default()).unwrap();
    let ratio = tuned.test_error.log_error / bound.log_error;
    let ok = (1.0..=C3_MAX_RATIO).contains(&ratio);
    verdict(
        3,
        ok,
        format!(
            "tuned {:.5} ({:.2}%) vs bound {:.5} ({:.2}%): ratio {ratio:.3}, required [1, {C3_MAX_RATIO}]",
            tuned.test_error.log_error, tuned.test_error.percent, bound.log_error, bound.percent
        ),
    );
    assert!(ok);
}

#[test]
fn c04_half_normal_median() {
    let sigma = 0.05;
    let cfg = SimConfig {
        n_jobs: 6000,
        duplicate_set_count: 1500,
        concurrent_duplicate_fraction: 1.0,
        noise_sigma: sigma,
        seed: 4,
        ..Default::default()
    };
    let bound = application_error_bound(&find_duplicate_sets(&sim(&cfg)).sets).unwrap();
    let expected = sigma * HALF_NORMAL_MEDIAN;
    let ok = rel(bound.log_error, expected) <= C4_REL_TOL;
    verdict(
        4,
        ok,
        format!(
            "bound {:.5} vs σ·0.6745 = {expected:.5} ({:+.1}%, tol ±10%)",
            bound.log_error,
            (bound.log_error / expected - 1.0) * 100.0
        ),
    );
    assert!(ok);
}

const WEEK: f64 = 7.0 * 86_400.0;

struct SystemRun {
    window: DegradationWindow,
    tuned: TunedModel<f64>,
    golden: TunedModel<f64>,
    test: Dataset64,
}

/// One degradation window over 10% of the horizon, depth 0.2, noise 0.03.
/// Shared by criteria 5 and 6.
fn system_run() -> &'static SystemRun {
    static RUN: OnceLock<SystemRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let horizon = 20.0 * WEEK;
        let window = DegradationWindow {
            start: 0.45 * horizon,
            end: 0.55 * horizon,
            depth: 0.2,
        };
        let cfg = SimConfig {
            noise_sigma: 0.03,
            time_horizon: horizon,
            degradation_windows: vec![window],
            ..Default::default()
        };
        let ds = sim(&cfg);
        let splits = split(&ds, &SplitSpec::default()).unwrap();
        let features = ds.schema().observable_app_features().to_vec();
        let tuned = tune_and_evaluate(&splits, &features, &HyperparamGrid::default()).unwrap();
        let golden = golden_time_model(&splits, &HyperparamGrid::golden_default()).unwrap();
        SystemRun {
            window,
            tuned,
            golden,
            test: splits.test,
        }
    })
}

#[test]
#[ignore = "unattainable as specified: with 10% of jobs shifted, even perfect models cut the median error by only ~28.5%"]
fn c05_system_litmus_reduction() {
    let run = system_run();
    let (t, g) = (run.tuned.test_error.log_error, run.golden.test_error.log_error);
    let reduction = 1.0 - g / t;
    let ok = reduction >= C5_MIN_REDUCTION;
    verdict(
        5,
        ok,
        format!("golden {g:.5} vs app-only {t:.5}: reduction {:.1}%, required ≥ 30%", reduction * 100.0),
    );
    assert!(ok);
}

/// Job-weighted mean of the in-window weekly means, and the spread of the
/// out-of-window weekly means (the standard error of a weekly mean).
fn window_bias(points: &[WeekPoint<f64>], in_window: &HashSet<String>) -> (f64, f64) {
    let (mut sum, mut n) = (0.0, 0usize);
    let mut outside = Vec::new();
    for p in points {
        if in_window.contains(&p.iso_week) {
            sum += p.mean_signed_log_error * p.n_jobs as f64;
            n += p.n_jobs;
        } else {
            outside.push(p.mean_signed_log_error);
        }
    }
    let m = outside.iter().sum::<f64>() / outside.len() as f64;
    let sd = (outside.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (outside.len() - 1) as f64).sqrt();
    (sum / n as f64, sd)
}

#[test]
fn c06_weekly_bias_detection() {
    let run = system_run();
    // offset 0 is Monday of 2021-W01, so week i covers [i, i+1) weeks
    let in_window: HashSet<String> = (0..20)
        .filter(|&i| i as f64 * WEEK >= run.window.start && (i + 1) as f64 * WEEK <= run.window.end)
        .map(|i| format!("2021-W{:02}", i + 1))
        .collect();
    assert_eq!(in_window.len(), 2);
    let app = weekly_error_timeline(&run.tuned.model, &run.test, "app_only").unwrap();
    let golden = weekly_error_timeline(&run.golden.model, &run.test, "app_plus_time").unwrap();
    let (app_bias, se) = window_bias(&app, &in_window);
    let (golden_bias, _) = window_bias(&golden, &in_window);
    let reduction = 1.0 - golden_bias.abs() / app_bias.abs();
    let ok = app_bias > C6_BIAS_OVER_SE * se && reduction >= C6_MIN_BIAS_REDUCTION;
    verdict(
        6,
        ok,
        format!(
            "in-window bias {app_bias:+.4} vs out-of-window SE {se:.4} ({:.1}×, need > 2×); golden bias {golden_bias:+.4} ({:.1}% smaller, need ≥ 80%)",
            app_bias / se,
            reduction * 100.0
        ),
    );
    assert!(ok);
}

#[test]
fn c07_ood_separation() {
    // OoD offset: three times the mean absolute noise, σ·sqrt(2/π)·3
    let offset = 3.0 * 0.03 * (2.0 / std::f64::consts::PI).sqrt();
    let hp = GbtHyperparams {
        n_trees: 128,
        max_depth: 6,
        learning_rate: 0.1,
        ..Default::default()
    };
    let (mut ood_total, mut caught, mut id_total, mut id_flagged) = (0usize, 0usize, 0usize, 0usize);
    let mut ratios = Vec::new();
    for seed in C7_SEEDS {
        let cfg = SimConfig {
            n_jobs: 10_000,
            ood_fraction: 0.01,
            ood_shift: 5.0,
            ood_offset: offset,
            seed,
            ..Default::default()
        };
        let (ds, truth) = generate::<f64>(&cfg).unwrap();
        let injected: HashSet<String> = truth.ood_ids().into_iter().collect();
        let splits = split(&ds, &SplitSpec::random(0.2, 0.1, seed)).unwrap();
        let features = ds.schema().observable_app_features().to_vec();
        let opts = EnsembleOptions {
            seed,
            ..Default::default()
        };
        let ensemble = train_ensemble(&splits.train, &features, &hp, &opts).unwrap();
        let est: Vec<UncertaintyEstimate<f64>> = decompose(&ensemble, &splits.test).unwrap();
        let sel = select_eu_threshold(&est).unwrap();
        let share = ood_error_share(&est, sel.threshold).unwrap();
        let flagged: HashSet<&String> = share.ood_job_ids.iter().collect();
        for e in &est {
            let hit = flagged.contains(&e.job_id);
            if injected.contains(&e.job_id) {
                ood_total += 1;
                caught += usize::from(hit);
            } else {
                id_total += 1;
                id_flagged += usize::from(hit);
            }
        }
        ratios.push(share.fraction_of_error / share.fraction_of_jobs);
    }
    let recall = caught as f64 / ood_total as f64;
    let fpr = id_flagged as f64 / id_total as f64;
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let ok = recall >= C7_MIN_RECALL && fpr <= C7_MAX_ID_FLAGGED && mean_ratio >= C7_MIN_ERROR_RATIO;
    let per_seed: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    verdict(
        7,
        ok,
        format!(
            "over {} seeds: {caught}/{ood_total} OoD caught ({:.1}%), {id_flagged}/{id_total} ID flagged ({:.2}%), error/job ratio {mean_ratio:.2} (per seed {})",
            C7_SEEDS.len(),
            recall * 100.0,
            fpr * 100.0,
            per_seed.join(", ")
        ),
    );
    assert!(ok);
}

#[test]
#[ignore = "unattainable as specified: the knee threshold always flags the upper eu tail, so e_ood > 0 without injected OoD"]
fn c08_zero_ablation() {
    let ds = sim(&SimConfig {
        noise_sigma: 0.0,
        contention_kappa: 0.0,
        ood_fraction: 0.0,
        ..Default::default()
    });
    let report = run_pipeline(&ds, &PipelineConfig::default()).unwrap();
    let noise = report.class(ErrorClass::ContentionNoise);
    let system = report.class(ErrorClass::System);
    let ood = report.class(ErrorClass::Ood);
    let system_raw = system.raw_log_error.unwrap();
    let tuned_pct = report.models.tuned.percent;
    let checks = [
        noise.estimated && noise.raw_log_error == Some(0.0),
        system_raw.abs() <= C8_MAX_SYSTEM,
        ood.estimated && ood.log_error == 0.0,
        tuned_pct < C8_MAX_TUNED_PERCENT,
    ];
    let ok = checks.iter().all(|&c| c);
    verdict(
        8,
        ok,
        format!(
            "e_noise {:?} (need 0), e_system {system_raw:+.5} (need |·| ≤ 0.005), e_ood {:.5} (need 0), tuned {tuned_pct:.2}% (need < 2%)",
            noise.raw_log_error, ood.log_error
        ),
    );
    assert!(ok);
}

#[test]
#[ignore = "unattainable as specified: 1.96σ for the 5.71% band gives 11.50%, not 10.56%"]
fn c09_percent_conversion() {
    // the σ whose 68% band is 5.71%, from the definition alone
    let sigma = (1.0571f64).log10();
    let band_68 = to_percent_error(sigma);
    let band_95 = to_percent_error(1.96 * sigma);
    let independent_95 = (10f64.powf(1.96 * sigma) - 1.0) * 100.0;
    let ok = (band_68 - 5.71).abs() <= C9_ROUNDING
        && (band_95 - independent_95).abs() < 1e-9
        && (band_95 - 10.56).abs() <= C9_ROUNDING;
    verdict(
        9,
        ok,
        format!("σ={sigma:.5}: 68% band {band_68:.3}% (reference 5.71%), 95% band {band_95:.3}% (reference 10.56%)"),
    );
    assert!(ok);
}

fn small_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.grid.n_trees = vec![16, 32];
    cfg.grid.max_depth = vec![3, 6];
    cfg.golden_grid.n_trees = vec![32];
    cfg.golden_grid.max_depth = vec![6, 9];
    cfg.ensemble.k = 8;
    cfg.apply_seed(seed);
    cfg
}

fn set_strategy() -> impl Strategy<Value = Vec<DuplicateSet<f64>>> {
    prop::collection::vec(
        prop::collection::vec((-3.0f64..3.0, 0.0f64..1e6), 2..6),
        1..6,
    )
    .prop_map(|sets| {
        sets.into_iter()
            .enumerate()
            .map(|(s, members)| DuplicateSet {
                key: ioattrib::ingest::DuplicateKey::new(format!("app{s}"), vec![s as u64]),
                job_ids: (0..members.len()).map(|m| format!("{s}-{m}")).collect(),
                log_throughputs: members.iter().map(|m| m.0).collect(),
                start_times: members.iter().map(|m| m.1).collect(),
            })
            .collect()
    })
}

#[test]
fn c10_determinism_and_invariants() {
    let t = Instant::now();
    let ds = sim(&SimConfig {
        n_jobs: 1500,
        duplicate_set_count: 150,
        ood_fraction: 0.01,
        ..Default::default()
    });
    let a = run_pipeline(&ds, &small_config(99)).unwrap().to_json().unwrap();
    let b = run_pipeline(&ds, &small_config(99)).unwrap().to_json().unwrap();
    let deterministic = a.as_bytes() == b.as_bytes();

    let mut runner = TestRunner::new(Config {
        cases: C10_PROPTEST_CASES,
        ..Config::default()
    });
    let mut failures = Vec::new();

    // partition: clamped class shares plus the remainder make up the baseline
    if let Err(e) = runner.run(&(prop::collection::vec(-0.3f64..0.7, 4), 1e-3f64..1.0), |(raw, base)| {
        let classes: Vec<Slice<f64>> = ErrorClass::ALL
            .iter()
            .zip(&raw)
            .map(|(&c, &r)| Slice::estimated(c, r * base, base, "p"))
            .collect();
        let u = Unexplained::from_classes(&classes);
        let explained: f64 = classes.iter().map(|s| s.share).sum();
        prop_assert!(classes.iter().all(|s| s.share >= 0.0) && u.share >= 0.0);
        prop_assert!((explained + u.raw_share - 1.0).abs() < 1e-12);
        if explained <= 1.0 {
            prop_assert!((explained + u.share - 1.0).abs() < 1e-12);
        }
        Ok(())
    }) {
        failures.push(format!("partition: {e}"));
    }

    // antisymmetry of the signed log error
    if let Err(e) = runner.run(&(1e-3f64..1e12, 1e-3f64..1e12), |(y, yhat)| {
        let ab = log_ratio_error(y, yhat).unwrap();
        let ba = log_ratio_error(yhat, y).unwrap();
        prop_assert!((ab + ba).abs() <= 1e-12 * (1.0 + ab.abs()));
        Ok(())
    }) {
        failures.push(format!("antisymmetry: {e}"));
    }

    // pair weights sum to one per set
    if let Err(e) = runner.run(&set_strategy(), |sets| {
        let total: f64 = pair_deltas(&sets).iter().map(|p| p.weight).sum();
        prop_assert!((total - sets.len() as f64).abs() < 1e-9);
        Ok(())
    }) {
        failures.push(format!("weight sums: {e}"));
    }

    // flagged error share never grows with the threshold
    let estimates = prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..200).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (eu, err))| UncertaintyEstimate {
                job_id: format!("j{i}"),
                au: 0.1,
                eu,
                abs_error: err,
            })
            .collect::<Vec<_>>()
    });
    if let Err(e) = runner.run(&(estimates, 0.0f64..1.0, 0.0f64..1.0), |(est, t1, t2)| {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = ood_error_share(&est, lo).unwrap();
        let b = ood_error_share(&est, hi).unwrap();
        prop_assert!(b.fraction_of_error <= a.fraction_of_error + 1e-12);
        prop_assert!(b.fraction_of_jobs <= a.fraction_of_jobs);
        Ok(())
    }) {
        failures.push(format!("monotone threshold: {e}"));
    }

    let ok = deterministic && failures.is_empty();
    verdict(
        10,
        ok,
        format!(
            "report byte-identical across runs: {deterministic}; 4 invariants × {C10_PROPTEST_CASES} cases: {} ({:.1?})",
            if failures.is_empty() { "all hold".to_string() } else { failures.join("; ") },
            t.elapsed()
        ),
    );
    assert!(ok);
}

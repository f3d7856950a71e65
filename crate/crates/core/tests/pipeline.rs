//! End-to-end attribution on simulated data with a single planted error source.

use ioattrib::attribution::{run_pipeline, ErrorClass, PipelineConfig};
use ioattrib::simulator::{generate, DegradationWindow, SimConfig};

fn config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.grid.n_trees = vec![64, 128];
    cfg.grid.max_depth = vec![6, 9];
    cfg.golden_grid.n_trees = vec![128];
    cfg.golden_grid.max_depth = vec![9, 12];
    cfg.ensemble.k = 8;
    cfg.apply_seed(seed);
    cfg
}

#[test]
fn pure_noise_lands_in_the_noise_slice() {
    let sigma = 0.05;
    let (ds, _) = generate::<f64>(&SimConfig {
        noise_sigma: sigma,
        seed: 21,
        ..Default::default()
    })
    .unwrap();
    let report = run_pipeline(&ds, &config(21)).unwrap();
    // half-normal median of the noise
    let expected = sigma * 0.674_489_75;
    let noise = report.class(ErrorClass::ContentionNoise).log_error;
    assert!((noise - expected).abs() < 0.2 * expected, "{noise} vs {expected}");
    let system = report.class(ErrorClass::System).log_error;
    assert!(system < 0.005, "system {system}");
    assert!(report.class(ErrorClass::Ood).log_error < 0.005);
}

#[test]
fn one_window_is_charged_to_the_system() {
    let horizon = 20.0 * 7.0 * 86_400.0;
    let (ds, _) = generate::<f64>(&SimConfig {
        noise_sigma: 0.01,
        degradation_windows: vec![DegradationWindow {
            start: 0.4 * horizon,
            end: 0.7 * horizon,
            depth: 0.3,
        }],
        seed: 22,
        ..Default::default()
    })
    .unwrap();
    let report = run_pipeline(&ds, &config(22)).unwrap();
    let system = report.class(ErrorClass::System);
    for other in [ErrorClass::Ood, ErrorClass::ContentionNoise] {
        assert!(system.share > report.class(other).share, "{other:?}: {report:#?}");
    }
    // the golden model removes most of what the window added to the tuned model
    let m = &report.models;
    let added = m.tuned.log_error - report.class(ErrorClass::ContentionNoise).log_error;
    let removed = m.tuned.log_error - m.golden.as_ref().unwrap().log_error;
    assert!(removed >= 0.8 * added, "removed {removed} of {added}");
}

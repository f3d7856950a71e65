//! The full attribution workflow and its report.
//!
//! Steps run in a fixed order because each litmus assumes the previous
//! classes are already accounted for: baseline model, duplicate bound and
//! tuning, golden start-time model, ensemble OoD detection, and finally the
//! concurrent-duplicate noise estimate with OoD jobs removed.
//!
//! Shares are aggregate estimates: each class value is a difference of
//! median errors (or a litmus statistic) divided by the baseline median
//! error. They are not guaranteed to sum to one.

mod render;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use render::{render, write_artifact, Format};

use crate::data::{Dataset, FeatureGroup, START_TIME};
use crate::duplicates::{application_error_bound, find_duplicate_sets, noise_estimate, NoiseEstimate, DEFAULT_DT_MAX};
use crate::error::{Error, Result};
use crate::ingest::{split, SplitMode, SplitSpec};
use crate::metrics::ErrorSummary;
use crate::model::{GbtHyperparams, GbtModel, HyperparamGrid};
use crate::scalar::Real;
use crate::stats::HALF_NORMAL_MEDIAN;
use crate::system::{golden_time_model, tune_and_evaluate};
use crate::uncertainty::{decompose, ood_error_share, select_eu_threshold, train_ensemble, EnsembleOptions, ThresholdMethod};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub split: SplitSpec,
    /// Step 1 hyperparameters, left at library defaults on purpose.
    pub baseline: GbtHyperparams,
    pub grid: HyperparamGrid,
    pub golden_grid: HyperparamGrid,
    pub ensemble: EnsembleOptions,
    /// Concurrency window for the noise litmus, seconds.
    pub dt_max: f64,
    /// Step 3.2: also tune a model with lmt and scheduler features.
    pub system_enrichment: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            split: SplitSpec::default(),
            baseline: GbtHyperparams::default(),
            grid: HyperparamGrid::default(),
            golden_grid: HyperparamGrid::golden_default(),
            ensemble: EnsembleOptions::default(),
            dt_max: DEFAULT_DT_MAX,
            system_enrichment: false,
        }
    }
}

impl PipelineConfig {
    /// Sets every seed in the configuration.
    pub fn apply_seed(&mut self, seed: u64) {
        self.split.seed = seed;
        self.baseline.seed = seed;
        self.grid.seed = seed;
        self.golden_grid.seed = seed;
        self.ensemble.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.baseline.validate()?;
        if !(self.dt_max >= 0.0) {
            return Err(Error::Config(format!("dt_max must be >= 0, got {}", self.dt_max)));
        }
        if self.ensemble.k < 2 {
            return Err(Error::Config("ensemble.k must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Application,
    System,
    Ood,
    ContentionNoise,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 4] = [
        ErrorClass::Application,
        ErrorClass::System,
        ErrorClass::Ood,
        ErrorClass::ContentionNoise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Application => "application",
            ErrorClass::System => "system",
            ErrorClass::Ood => "ood",
            ErrorClass::ContentionNoise => "contention_noise",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorClass::Application => "Application modeling",
            ErrorClass::System => "System modeling",
            ErrorClass::Ood => "Out-of-distribution",
            ErrorClass::ContentionNoise => "Contention + noise",
        }
    }
}

/// One taxonomy class in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice<T> {
    pub class: ErrorClass,
    pub estimated: bool,
    /// Why the slice is not estimable.
    pub reason: Option<String>,
    /// Unclamped estimate in log10 units.
    pub raw_log_error: Option<T>,
    /// Estimate clamped at 0; 0 when not estimable.
    pub log_error: T,
    pub raw_share: Option<T>,
    /// Fraction of the baseline error, clamped at 0.
    pub share: T,
    /// The litmus and formula behind the number.
    pub provenance: String,
}

impl<T: Real> Slice<T> {
    /// A slice worth `raw` log10 units out of `baseline`, clamped at 0.
    pub fn estimated(class: ErrorClass, raw: T, baseline: T, provenance: &str) -> Self {
        let raw_share = if baseline > T::zero() { raw / baseline } else { T::zero() };
        Slice {
            class,
            estimated: true,
            reason: None,
            raw_log_error: Some(raw),
            log_error: raw.max(T::zero()),
            raw_share: Some(raw_share),
            share: raw_share.max(T::zero()),
            provenance: provenance.to_string(),
        }
    }

    pub fn not_estimable(class: ErrorClass, reason: String, provenance: &str) -> Self {
        Slice {
            class,
            estimated: false,
            reason: Some(reason),
            raw_log_error: None,
            log_error: T::zero(),
            raw_share: None,
            share: T::zero(),
            provenance: provenance.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unexplained<T> {
    /// 1 − sum of the clamped class shares; may be negative.
    pub raw_share: T,
    pub share: T,
}

impl<T: Real> Unexplained<T> {
    /// The remainder after the clamped class shares.
    pub fn from_classes(classes: &[Slice<T>]) -> Self {
        let explained: T = classes.iter().map(|s| s.share).sum();
        let raw_share = T::one() - explained;
        Unexplained {
            raw_share,
            share: raw_share.max(T::zero()),
        }
    }
}

/// Median test errors of the models the pipeline trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelErrors<T> {
    pub baseline: ErrorSummary<T>,
    pub duplicate_bound: Option<ErrorSummary<T>>,
    pub tuned: ErrorSummary<T>,
    pub golden: Option<ErrorSummary<T>>,
    pub enriched: Option<ErrorSummary<T>>,
    pub baseline_hyperparams: GbtHyperparams,
    pub tuned_hyperparams: GbtHyperparams,
    pub golden_hyperparams: Option<GbtHyperparams>,
}

/// Error removed by actually building better models, as fractions of the
/// baseline error: the outer ring of the chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realized<T> {
    /// (baseline − tuned) / baseline.
    pub app_tuning: T,
    /// (tuned − enriched) / baseline, when enrichment ran.
    pub system_enrichment: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodSummary<T> {
    pub threshold: T,
    pub method: ThresholdMethod,
    pub n_ood_jobs: usize,
    pub fraction_of_jobs: f64,
    pub fraction_of_error: f64,
    /// Median AU and EU over the test jobs.
    pub median_au: T,
    pub median_eu: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub jobs: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub duplicate_jobs: usize,
    pub duplicate_sets: usize,
    pub ood_jobs: usize,
    pub noise_sets: usize,
    pub noise_jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBreakdown<T> {
    pub format_version: u32,
    /// Median absolute log error of the Step 1 model on the test split.
    pub baseline_error: ErrorSummary<T>,
    /// Application, system, OoD, contention + noise, in that order.
    pub classes: Vec<Slice<T>>,
    pub unexplained: Unexplained<T>,
    pub realized: Realized<T>,
    pub models: ModelErrors<T>,
    pub ood: Option<OodSummary<T>>,
    pub noise: Option<NoiseEstimate<T>>,
    pub counts: Counts,
    pub warnings: Vec<String>,
}

impl<T: Real> ErrorBreakdown<T> {
    pub fn class(&self, class: ErrorClass) -> &Slice<T> {
        self.classes.iter().find(|s| s.class == class).expect("all classes present")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.format_version != REPORT_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported report format_version {}",
                report.format_version
            )));
        }
        Ok(report)
    }
}

const PROV_APP: &str = "duplicate litmus: baseline median error - duplicate bound";
const PROV_SYSTEM: &str = "golden start-time litmus: tuned median error - golden median error";
const PROV_OOD: &str = "ensemble EU litmus: OoD fraction of error x golden median error";
const PROV_NOISE: &str = "concurrent duplicate litmus: pooled sigma x 0.6745";

/// Splits a litmus result into a value or a not-estimable reason; other
/// errors propagate.
fn litmus<V>(r: Result<V>) -> Result<std::result::Result<V, String>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(Error::Insufficient { litmus, reason }) => Ok(Err(format!("{litmus}: {reason}"))),
        Err(e) => Err(e),
    }
}

/// Runs the full workflow on `dataset` and composes the report.
pub fn run_pipeline<T: Real>(dataset: &Dataset<T>, cfg: &PipelineConfig) -> Result<ErrorBreakdown<T>> {
    cfg.validate()?;
    let schema = dataset.schema();
    let mut warnings = Vec::new();

    // Step 1
    let splits = split(dataset, &cfg.split)?;
    if splits.validation.is_empty() || splits.test.is_empty() {
        return Err(Error::Config("the pipeline needs non-empty validation and test splits".into()));
    }
    let app_features = schema.observable_app_features().to_vec();
    let baseline_model = GbtModel::train(&splits.train, &app_features, &cfg.baseline)?;
    let baseline_error = ErrorSummary::from_signed(&baseline_model.signed_errors(&splits.test)?)?;
    let base = baseline_error.log_error;
    if base <= T::zero() {
        warnings.push("baseline error is zero; shares are reported as 0".to_string());
    }

    // Step 2
    let duplicates = find_duplicate_sets(dataset);
    let bound = litmus(application_error_bound(&duplicates.sets))?;
    let tuned = tune_and_evaluate(&splits, &app_features, &cfg.grid)?;
    let app = match &bound {
        Ok(b) => Slice::estimated(ErrorClass::Application, base - b.log_error, base, PROV_APP),
        Err(reason) => Slice::not_estimable(ErrorClass::Application, reason.clone(), PROV_APP),
    };
    if tuned.test_error.log_error > base {
        warnings.push("tuned model is worse than the baseline on test".to_string());
    }

    // Step 3
    let golden = if !schema.contains(START_TIME) {
        Err(format!("system litmus: no `{START_TIME}` feature in schema"))
    } else if cfg.split.mode == SplitMode::Temporal {
        Err("system litmus: the golden model needs a random split".to_string())
    } else {
        Ok(golden_time_model(&splits, &cfg.golden_grid)?)
    };
    let system = match &golden {
        Ok(g) => Slice::estimated(
            ErrorClass::System,
            tuned.test_error.log_error - g.test_error.log_error,
            base,
            PROV_SYSTEM,
        ),
        Err(reason) => Slice::not_estimable(ErrorClass::System, reason.clone(), PROV_SYSTEM),
    };
    let enriched = if cfg.system_enrichment {
        let mut features = app_features.clone();
        features.extend(schema.features_of(&[FeatureGroup::Lmt, FeatureGroup::Scheduler]));
        if features.len() == app_features.len() {
            warnings.push("system enrichment skipped: no lmt or scheduler features".to_string());
            None
        } else {
            Some(tune_and_evaluate(&splits, &features, &cfg.grid)?)
        }
    } else {
        None
    };

    // Step 4, against the golden model when there is one
    let (reference_features, reference_hp, reference_error) = match &golden {
        Ok(g) => (g.model.feature_names.clone(), g.search.best, g.test_error.log_error),
        Err(_) => {
            warnings.push("OoD error is charged against the tuned model (no golden model)".to_string());
            (app_features.clone(), tuned.search.best, tuned.test_error.log_error)
        }
    };
    let ensemble = train_ensemble(&splits.train, &reference_features, &reference_hp, &cfg.ensemble)?;
    let estimates = decompose(&ensemble, &splits.test)?;
    let (ood_slice, ood_summary, ood_ids) = match litmus(select_eu_threshold(&estimates))? {
        Ok(selection) => {
            let share = ood_error_share(&estimates, selection.threshold)?;
            let slice = Slice::estimated(
                ErrorClass::Ood,
                T::lit(share.fraction_of_error) * reference_error,
                base,
                PROV_OOD,
            );
            let aus: Vec<T> = estimates.iter().map(|e| e.au).collect();
            let eus: Vec<T> = estimates.iter().map(|e| e.eu).collect();
            let summary = OodSummary {
                threshold: selection.threshold,
                method: selection.method,
                n_ood_jobs: share.ood_job_ids.len(),
                fraction_of_jobs: share.fraction_of_jobs,
                fraction_of_error: share.fraction_of_error,
                median_au: crate::stats::median(&aus).unwrap_or_else(T::zero),
                median_eu: crate::stats::median(&eus).unwrap_or_else(T::zero),
            };
            let ids: HashSet<String> = share.ood_job_ids.into_iter().collect();
            (slice, Some(summary), ids)
        }
        Err(reason) => (Slice::not_estimable(ErrorClass::Ood, reason, PROV_OOD), None, HashSet::new()),
    };

    // Step 5
    let noise = litmus(noise_estimate(&duplicates.sets, &ood_ids, cfg.dt_max))?;
    let noise_slice = match &noise {
        Ok(n) => Slice::estimated(
            ErrorClass::ContentionNoise,
            n.sigma * T::lit(HALF_NORMAL_MEDIAN),
            base,
            PROV_NOISE,
        ),
        Err(reason) => Slice::not_estimable(ErrorClass::ContentionNoise, reason.clone(), PROV_NOISE),
    };

    let classes = vec![app, system, ood_slice, noise_slice];
    for s in &classes {
        if let Some(raw) = s.raw_log_error {
            if raw < T::zero() {
                warnings.push(format!("{} estimate {raw} is negative; clamped to 0", s.class.as_str()));
            }
        }
        if let Some(reason) = &s.reason {
            warnings.push(format!("{} not estimable ({reason})", s.class.as_str()));
        }
    }
    let unexplained = Unexplained::from_classes(&classes);
    if unexplained.raw_share < T::zero() {
        warnings.push(format!(
            "class shares sum to {} > 1; unexplained clamped to 0",
            T::one() - unexplained.raw_share
        ));
    }
    let share_of = |delta: T| if base > T::zero() { delta / base } else { T::zero() };
    let realized = Realized {
        app_tuning: share_of(base - tuned.test_error.log_error),
        system_enrichment: enriched
            .as_ref()
            .map(|e| share_of(tuned.test_error.log_error - e.test_error.log_error)),
    };
    let (noise_sets, noise_jobs) = noise.as_ref().map_or((0, 0), |n| (n.n_sets, n.n_jobs));
    Ok(ErrorBreakdown {
        format_version: REPORT_FORMAT_VERSION,
        baseline_error,
        classes,
        unexplained,
        realized,
        models: ModelErrors {
            baseline: baseline_error,
            duplicate_bound: bound.ok(),
            tuned: tuned.test_error,
            golden: golden.as_ref().ok().map(|g| g.test_error),
            enriched: enriched.as_ref().map(|e| e.test_error),
            baseline_hyperparams: cfg.baseline,
            tuned_hyperparams: tuned.search.best,
            golden_hyperparams: golden.as_ref().ok().map(|g| g.search.best),
        },
        ood: ood_summary,
        noise: noise.ok(),
        counts: Counts {
            jobs: dataset.len(),
            train: splits.train.len(),
            validation: splits.validation.len(),
            test: splits.test.len(),
            duplicate_jobs: duplicates.duplicate_jobs,
            duplicate_sets: duplicates.sets.len(),
            ood_jobs: ood_ids.len(),
            noise_sets,
            noise_jobs,
        },
        warnings,
    })
}

//! Global system modeling litmus.
//!
//! A model that also sees each job's start time can learn whatever the
//! storage system was doing at that moment, so its error approximates a
//! model free of global system modeling error. The gap between an app-only
//! model and this golden model estimates the system share. It is useless
//! for forecasting and only meaningful on a random split, where test jobs
//! fall between training jobs in time.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{DateTime, Datelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, START_TIME};
use crate::error::{Error, Result};
use crate::ingest::Splits;
use crate::metrics::ErrorSummary;
use crate::model::{grid_search, GbtHyperparams, GbtModel, GridSearchResult, HyperparamGrid};
use crate::scalar::Real;

/// A grid-searched model and its test-set performance.
#[derive(Debug, Clone)]
pub struct TunedModel<T> {
    pub model: GbtModel<T>,
    pub search: GridSearchResult<T>,
    /// Signed log errors on the test set, in dataset order.
    pub test_errors: Vec<T>,
    pub test_error: ErrorSummary<T>,
}

/// Grid-searches `features` on train/validation and scores the winning
/// hyperparameters on test.
pub fn tune_and_evaluate<T: Real>(
    splits: &Splits<T>,
    features: &[String],
    grid: &HyperparamGrid,
) -> Result<TunedModel<T>> {
    if splits.test.is_empty() {
        return Err(Error::InvalidArgument("empty test split".into()));
    }
    let search = grid_search(&splits.train, &splits.validation, features, grid)?;
    let model = GbtModel::train(&splits.train, features, &search.best)?;
    let test_errors = model.signed_errors(&splits.test)?;
    let test_error = ErrorSummary::from_signed(&test_errors)?;
    Ok(TunedModel {
        model,
        search,
        test_errors,
        test_error,
    })
}

/// Observable application features plus the start time.
pub fn golden_features(schema: &crate::data::FeatureSchema) -> Result<Vec<String>> {
    if !schema.contains(START_TIME) {
        return Err(Error::Schema(format!(
            "the golden model needs the `{START_TIME}` timing feature"
        )));
    }
    let mut features = schema.observable_app_features().to_vec();
    features.push(START_TIME.to_string());
    Ok(features)
}

/// Tuned model over observable application features plus start time.
pub fn golden_time_model<T: Real>(splits: &Splits<T>, grid: &HyperparamGrid) -> Result<TunedModel<T>> {
    let features = golden_features(splits.train.schema())?;
    tune_and_evaluate(splits, &features, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVariant {
    pub name: String,
    pub features: Vec<String>,
}

impl FeatureVariant {
    pub fn new(name: impl Into<String>, features: Vec<String>) -> Self {
        FeatureVariant {
            name: name.into(),
            features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult<T> {
    pub name: String,
    pub features: Vec<String>,
    pub hyperparams: GbtHyperparams,
    /// Error on the training rows themselves. A train error far below test
    /// error flags memorization, e.g. by timestamp.
    pub train_error: ErrorSummary<T>,
    pub test_error: ErrorSummary<T>,
    /// Signed test errors, for distribution plots.
    pub test_errors: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction<T> {
    pub from: String,
    pub to: String,
    /// 1 − to/from on median absolute log error.
    pub relative: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetComparison<T> {
    pub variants: Vec<VariantResult<T>>,
    /// Every ordered pair of distinct variants.
    pub reductions: Vec<Reduction<T>>,
}

impl<T: Real> FeatureSetComparison<T> {
    pub fn variant(&self, name: &str) -> Option<&VariantResult<T>> {
        self.variants.iter().find(|v| v.name == name)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "variant",
            "n_features",
            "n_trees",
            "max_depth",
            "train_median_abs_log_error",
            "test_median_abs_log_error",
            "test_median_abs_percent",
        ])?;
        for v in &self.variants {
            w.write_record([
                v.name.clone(),
                v.features.len().to_string(),
                v.hyperparams.n_trees.to_string(),
                v.hyperparams.max_depth.to_string(),
                v.train_error.log_error.to_string(),
                v.test_error.log_error.to_string(),
                v.test_error.percent.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Independently tunes and scores each feature variant on the same splits.
pub fn compare_feature_sets<T: Real>(
    variants: &[FeatureVariant],
    splits: &Splits<T>,
    grid: &HyperparamGrid,
) -> Result<FeatureSetComparison<T>> {
    if variants.is_empty() {
        return Err(Error::InvalidArgument("no feature variants".into()));
    }
    for v in variants {
        splits.train.schema().check_features(&v.features)?;
    }
    let results = variants
        .par_iter()
        .map(|v| {
            let tuned = tune_and_evaluate(splits, &v.features, grid)?;
            let train_error = ErrorSummary::from_signed(&tuned.model.signed_errors(&splits.train)?)?;
            Ok(VariantResult {
                name: v.name.clone(),
                features: v.features.clone(),
                hyperparams: tuned.search.best,
                train_error,
                test_error: tuned.test_error,
                test_errors: tuned.test_errors,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reductions = Vec::new();
    for a in &results {
        for b in &results {
            if a.name != b.name {
                let from = a.test_error.log_error;
                let relative = if from > T::zero() {
                    T::one() - b.test_error.log_error / from
                } else {
                    T::zero()
                };
                reductions.push(Reduction {
                    from: a.name.clone(),
                    to: b.name.clone(),
                    relative,
                });
            }
        }
    }
    Ok(FeatureSetComparison {
        variants: results,
        reductions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekPoint<T> {
    /// ISO week label, e.g. `2021-W07`.
    pub iso_week: String,
    /// Mean of predicted − measured log10 throughput; positive means the
    /// model overpredicted that week.
    pub mean_signed_log_error: T,
    pub n_jobs: usize,
    pub variant: String,
}

/// Mean signed error of `model` on `test`, per ISO week of job start.
pub fn weekly_error_timeline<T: Real>(
    model: &GbtModel<T>,
    test: &Dataset<T>,
    variant: &str,
) -> Result<Vec<WeekPoint<T>>> {
    let errors = model.signed_errors(test)?;
    let mut weeks: BTreeMap<(i32, u32), (T, usize)> = BTreeMap::new();
    for (r, e) in test.iter().zip(errors) {
        let ts = DateTime::from_timestamp(r.start_time.floor() as i64, 0)
            .ok_or_else(|| Error::Domain(format!("start_time {} out of range", r.start_time)))?;
        let week = ts.iso_week();
        let slot = weeks.entry((week.year(), week.week())).or_insert((T::zero(), 0));
        slot.0 += e;
        slot.1 += 1;
    }
    Ok(weeks
        .into_iter()
        .map(|((year, week), (sum, n))| WeekPoint {
            iso_week: format!("{year}-W{week:02}"),
            mean_signed_log_error: sum / T::lit(n as f64),
            n_jobs: n,
            variant: variant.to_string(),
        })
        .collect())
}

pub fn write_timeline_csv<T: Real, W: Write>(points: &[WeekPoint<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iso_week", "mean_signed_log_error", "n_jobs", "variant"])?;
    for p in points {
        w.write_record([
            p.iso_week.clone(),
            p.mean_signed_log_error.to_string(),
            p.n_jobs.to_string(),
            p.variant.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

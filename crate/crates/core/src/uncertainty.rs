//! Aleatory/epistemic uncertainty from a diversified tree ensemble, and the
//! out-of-distribution litmus built on it.
//!
//! Members differ by bootstrap resample, seed, tree depth and column
//! sampling. By the law of total variance, disagreement between members is
//! epistemic (EU) and the members' own residual variance is aleatory (AU).
//! Both are reported as standard deviations in log10 throughput units.

use std::collections::HashSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{feature_matrix, GbtHyperparams, GbtModel, TimeScaling};
use crate::scalar::{cmp, Real};
use crate::stats;

pub const DEFAULT_ENSEMBLE_SIZE: usize = 20;
pub const DEPTH_JITTER: usize = 3;
pub const COLSAMPLE_CHOICES: [f64; 3] = [0.5, 0.8, 1.0];
/// Threshold selection needs at least this many jobs.
pub const MIN_THRESHOLD_ESTIMATES: usize = 100;
/// A curve closer than this to its chord everywhere has no usable knee.
pub const KNEE_MIN_DISTANCE: f64 = 0.01;
pub const FALLBACK_QUANTILE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleOptions {
    pub k: usize,
    pub seed: u64,
    /// Train each member on an n-out-of-n bootstrap resample.
    pub bootstrap: bool,
    /// Jitter depth and column sampling around the base hyperparameters.
    pub jitter: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            k: DEFAULT_ENSEMBLE_SIZE,
            seed: 0,
            bootstrap: true,
            jitter: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel<T> {
    pub members: Vec<GbtModel<T>>,
}

impl<T: Real> EnsembleModel<T> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.members[0].feature_names
    }
}

struct MemberPlan {
    hyperparams: GbtHyperparams,
    rows: Option<Vec<usize>>,
}

fn plan_members(n_rows: usize, best: &GbtHyperparams, opts: &EnsembleOptions) -> Vec<MemberPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    (0..opts.k)
        .map(|_| {
            let mut hp = *best;
            if opts.jitter {
                let lo = best.max_depth.saturating_sub(DEPTH_JITTER).max(1);
                hp.max_depth = rng.random_range(lo..=best.max_depth + DEPTH_JITTER);
                hp.colsample = COLSAMPLE_CHOICES[rng.random_range(0..COLSAMPLE_CHOICES.len())];
                hp.seed = rng.random();
            }
            let rows = opts
                .bootstrap
                .then(|| (0..n_rows).map(|_| rng.random_range(0..n_rows)).collect());
            MemberPlan { hyperparams: hp, rows }
        })
        .collect()
}

/// Trains `opts.k` members around `best`. Each member's residual variance
/// lookup is calibrated on its out-of-bag rows (on the training rows when
/// bootstrap is off).
pub fn train_ensemble<T: Real>(
    train: &Dataset<T>,
    features: &[String],
    best: &GbtHyperparams,
    opts: &EnsembleOptions,
) -> Result<EnsembleModel<T>> {
    if opts.k < 2 {
        return Err(Error::InvalidArgument(format!("ensemble needs k >= 2, got {}", opts.k)));
    }
    best.validate()?;
    if features.is_empty() {
        return Err(Error::InvalidArgument("empty feature list".into()));
    }
    train.schema().check_features(features)?;
    let time_scaling = TimeScaling::for_features(train, features);
    let matrix = feature_matrix(train, features, time_scaling)?;
    let targets = train.log_throughputs();
    let members = plan_members(train.len(), best, opts)
        .into_par_iter()
        .map(|plan| {
            let mut member = match &plan.rows {
                Some(rows) => {
                    let sample_targets: Vec<T> = rows.iter().map(|&i| targets[i]).collect();
                    GbtModel::fit(&matrix.select_rows(rows), &sample_targets, &plan.hyperparams)?
                }
                None => GbtModel::fit(&matrix, &targets, &plan.hyperparams)?,
            };
            member.feature_names = features.to_vec();
            member.time_scaling = time_scaling;
            let held_out: Vec<usize> = match &plan.rows {
                Some(rows) => {
                    let drawn: HashSet<usize> = rows.iter().copied().collect();
                    (0..train.len()).filter(|i| !drawn.contains(i)).collect()
                }
                None => (0..train.len()).collect(),
            };
            if held_out.len() >= 2 {
                let held_targets: Vec<T> = held_out.iter().map(|&i| targets[i]).collect();
                member.calibrate_variance(&matrix.select_rows(&held_out), &held_targets);
            }
            Ok(member)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel { members })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyEstimate<T> {
    pub job_id: String,
    pub au: T,
    pub eu: T,
    /// |ensemble-mean prediction − measured|, log10 units.
    pub abs_error: T,
}

/// Per-job AU, EU and ensemble error. Member outputs are sorted before
/// aggregation, so the result does not depend on member order.
pub fn decompose<T: Real>(ensemble: &EnsembleModel<T>, jobs: &Dataset<T>) -> Result<Vec<UncertaintyEstimate<T>>> {
    if ensemble.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    let first = &ensemble.members[0];
    let matrix = feature_matrix(jobs, &first.feature_names, first.time_scaling)?;
    let predictions: Vec<Vec<T>> = ensemble.members.par_iter().map(|m| m.predict_matrix(&matrix)).collect();
    let measured = jobs.log_throughputs();
    Ok((0..jobs.len())
        .into_par_iter()
        .map(|i| {
            let x = matrix.row(i);
            let mut preds: Vec<T> = predictions.iter().map(|p| p[i]).collect();
            let mut vars: Vec<T> = ensemble.members.iter().map(|m| m.residual_variance(&x)).collect();
            preds.sort_by(cmp);
            vars.sort_by(cmp);
            let mean = stats::mean(&preds).expect("non-empty");
            UncertaintyEstimate {
                job_id: jobs.records()[i].job_id.clone(),
                au: stats::mean(&vars).expect("non-empty").max(T::zero()).sqrt(),
                eu: stats::population_std(&preds).expect("non-empty"),
                abs_error: (mean - measured[i]).abs(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    Knee,
    /// No knee: the 99th EU percentile.
    Percentile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection<T> {
    pub threshold: T,
    pub method: ThresholdMethod,
    /// Largest vertical gap between the cumulative error curve and its chord.
    pub knee_distance: f64,
}

/// EU threshold at the knee of the cumulative error curve.
///
/// The curve maps normalized EU τ ∈ [0, 1] to the fraction of total absolute
/// error carried by jobs with EU ≤ τ. The knee is the curve point farthest
/// from the chord joining its endpoints; on ties the smaller τ wins, which
/// favors flagging too many jobs over too few.
pub fn select_eu_threshold<T: Real>(estimates: &[UncertaintyEstimate<T>]) -> Result<ThresholdSelection<T>> {
    if estimates.len() < MIN_THRESHOLD_ESTIMATES {
        return Err(Error::insufficient(
            "ood litmus",
            format!(
                "threshold selection needs at least {MIN_THRESHOLD_ESTIMATES} jobs, got {}",
                estimates.len()
            ),
        ));
    }
    let mut points: Vec<(f64, f64)> = estimates
        .iter()
        .map(|e| (e.eu.as_f64(), e.abs_error.as_f64()))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let fallback = |knee_distance: f64| {
        let eus: Vec<T> = points.iter().map(|p| T::lit(p.0)).collect();
        ThresholdSelection {
            threshold: stats::quantile(&eus, FALLBACK_QUANTILE).expect("non-empty"),
            method: ThresholdMethod::Percentile,
            knee_distance,
        }
    };
    let (lo, hi) = (points[0].0, points[points.len() - 1].0);
    let total: f64 = points.iter().map(|p| p.1).sum();
    if !(hi > lo) || !(total > 0.0) {
        return Ok(fallback(0.0));
    }
    // one curve point per distinct EU value
    let mut curve: Vec<(f64, f64)> = Vec::new();
    let mut curve_eu: Vec<f64> = Vec::new();
    let mut acc = 0.0;
    for (i, &(eu, err)) in points.iter().enumerate() {
        acc += err;
        if i + 1 == points.len() || points[i + 1].0 != eu {
            curve.push(((eu - lo) / (hi - lo), acc / total));
            curve_eu.push(eu);
        }
    }
    let (u0, c0) = curve[0];
    let (u1, c1) = curve[curve.len() - 1];
    let slope = (c1 - c0) / (u1 - u0);
    let mut best = (0usize, f64::NEG_INFINITY);
    for (k, &(u, c)) in curve.iter().enumerate() {
        let d = (c - (c0 + slope * (u - u0))).abs();
        if d > best.1 {
            best = (k, d);
        }
    }
    if best.1 < KNEE_MIN_DISTANCE {
        return Ok(fallback(best.1));
    }
    Ok(ThresholdSelection {
        threshold: T::lit(curve_eu[best.0]),
        method: ThresholdMethod::Knee,
        knee_distance: best.1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodShare {
    pub ood_job_ids: Vec<String>,
    pub fraction_of_jobs: f64,
    pub fraction_of_error: f64,
}

/// Jobs with EU strictly above `threshold` and their share of total error.
pub fn ood_error_share<T: Real>(estimates: &[UncertaintyEstimate<T>], threshold: T) -> Result<OodShare> {
    if !threshold.is_finite() {
        return Err(Error::InvalidArgument("EU threshold must be finite".into()));
    }
    let mut ood_job_ids = Vec::new();
    let (mut ood_err, mut total) = (0.0, 0.0);
    for e in estimates {
        let err = e.abs_error.as_f64();
        total += err;
        if e.eu > threshold {
            ood_job_ids.push(e.job_id.clone());
            ood_err += err;
        }
    }
    let n = estimates.len();
    Ok(OodShare {
        fraction_of_jobs: if n == 0 { 0.0 } else { ood_job_ids.len() as f64 / n as f64 },
        fraction_of_error: if total > 0.0 { ood_err / total } else { 0.0 },
        ood_job_ids,
    })
}

pub fn write_uncertainty_csv<T: Real, W: Write>(
    estimates: &[UncertaintyEstimate<T>],
    ood_job_ids: &HashSet<String>,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["job_id", "au", "eu", "abs_error", "is_ood"])?;
    for e in estimates {
        w.write_record([
            e.job_id.clone(),
            e.au.to_string(),
            e.eu.to_string(),
            e.abs_error.to_string(),
            ood_job_ids.contains(&e.job_id).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

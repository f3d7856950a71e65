//! Duplicate jobs: repeated runs of one application with bitwise identical
//! observable features.
//!
//! Two litmus tests live here. The spread of throughput inside duplicate
//! sets bounds how well any model of application behavior can do; the same
//! spread restricted to duplicates that ran together bounds what contention
//! and noise leave for any model at all.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ingest::{duplicate_key, DuplicateKey};
use crate::metrics::{self, ErrorSummary};
use crate::scalar::Real;
use crate::stats;

/// Default concurrency window for the noise litmus, seconds.
pub const DEFAULT_DT_MAX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DuplicateSet<T> {
    pub key: DuplicateKey,
    pub job_ids: Vec<String>,
    pub log_throughputs: Vec<T>,
    pub start_times: Vec<f64>,
}

impl<T: Real> DuplicateSet<T> {
    pub fn len(&self) -> usize {
        self.job_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.job_ids.is_empty()
    }

    pub fn start_spread(&self) -> f64 {
        let (lo, hi) = self
            .start_times
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
        hi - lo
    }

    /// Per-member deviations from the set mean, scaled by sqrt(n/(n−1)).
    pub fn corrected_deviations(&self) -> Vec<T> {
        let n = self.len();
        let scale = T::lit(n as f64 / (n as f64 - 1.0)).sqrt();
        stats::deviations(&self.log_throughputs).into_iter().map(|d| d * scale).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuplicateSummary<T> {
    /// Sets in order of first appearance in the dataset.
    pub sets: Vec<DuplicateSet<T>>,
    pub duplicate_jobs: usize,
    /// Fraction of all jobs that belong to some set.
    pub duplicate_fraction: f64,
}

/// Groups records by duplicate key, keeping groups of two or more.
pub fn find_duplicate_sets<T: Real>(dataset: &Dataset<T>) -> DuplicateSummary<T> {
    let schema = dataset.schema();
    let mut index: HashMap<DuplicateKey, usize> = HashMap::new();
    let mut groups: Vec<(DuplicateKey, Vec<usize>)> = Vec::new();
    for (i, r) in dataset.iter().enumerate() {
        let key = duplicate_key(r, schema);
        match index.get(&key) {
            Some(&g) => groups[g].1.push(i),
            None => {
                index.insert(key.clone(), groups.len());
                groups.push((key, vec![i]));
            }
        }
    }
    let records = dataset.records();
    let sets: Vec<DuplicateSet<T>> = groups
        .into_iter()
        .filter(|(_, members)| members.len() >= 2)
        .map(|(key, members)| DuplicateSet {
            key,
            job_ids: members.iter().map(|&i| records[i].job_id.clone()).collect(),
            log_throughputs: members.iter().map(|&i| records[i].log_throughput()).collect(),
            start_times: members.iter().map(|&i| records[i].start_time).collect(),
        })
        .collect();
    let duplicate_jobs = sets.iter().map(DuplicateSet::len).sum();
    let duplicate_fraction = if dataset.is_empty() {
        0.0
    } else {
        duplicate_jobs as f64 / dataset.len() as f64
    };
    DuplicateSummary {
        sets,
        duplicate_jobs,
        duplicate_fraction,
    }
}

/// Median absolute Bessel-corrected deviation from the set mean over every
/// member of every set: the smallest median error a model can reach on
/// duplicate jobs.
pub fn application_error_bound<T: Real>(sets: &[DuplicateSet<T>]) -> Result<ErrorSummary<T>> {
    if sets.is_empty() {
        return Err(Error::insufficient("application litmus", "no duplicate sets"));
    }
    if let Some(bad) = sets.iter().find(|s| s.len() < 2) {
        return Err(Error::InvalidArgument(format!(
            "duplicate set of size {} (need >= 2)",
            bad.len()
        )));
    }
    let deviations: Vec<T> = sets.iter().flat_map(DuplicateSet::corrected_deviations).collect();
    ErrorSummary::from_signed(&deviations)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDelta<T> {
    /// |Δ start time|, seconds.
    pub dt: f64,
    /// Later minus earlier member's log10 throughput (set order on ties).
    pub dlog: T,
    /// 1 / C(n, 2) for a set of size n.
    pub weight: T,
}

/// All unordered member pairs of every set; each set carries total weight 1.
pub fn pair_deltas<T: Real>(sets: &[DuplicateSet<T>]) -> Vec<PairDelta<T>> {
    let mut out = Vec::new();
    for set in sets {
        let n = set.len();
        if n < 2 {
            continue;
        }
        let weight = T::one() / T::lit((n * (n - 1) / 2) as f64);
        for i in 0..n {
            for j in i + 1..n {
                let (early, late) = if set.start_times[j] < set.start_times[i] { (j, i) } else { (i, j) };
                out.push(PairDelta {
                    dt: (set.start_times[j] - set.start_times[i]).abs(),
                    dlog: set.log_throughputs[late] - set.log_throughputs[early],
                    weight,
                });
            }
        }
    }
    out
}

/// Standard Δt bucket edges: [0, 1), then decades up to 10⁸ s, then beyond.
pub fn default_bucket_edges() -> Vec<f64> {
    let mut edges = vec![0.0];
    edges.extend((0..=8).map(|p| 10f64.powi(p)));
    edges.push(f64::INFINITY);
    edges
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary<T> {
    pub low: f64,
    pub high: f64,
    pub weighted_count: T,
    /// Weighted 5/25/50/75/95th percentiles of |Δ log10 throughput|; `None`
    /// for empty buckets.
    pub quantiles: Option<[T; 5]>,
}

pub const PROFILE_QUANTILES: [f64; 5] = [0.05, 0.25, 0.50, 0.75, 0.95];

/// Weighted distribution of |Δ log10 throughput| per Δt bucket. Bucket k is
/// `[edges[k], edges[k+1])`.
pub fn delta_t_profile<T: Real>(pairs: &[PairDelta<T>], edges: &[f64]) -> Result<Vec<BucketSummary<T>>> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("bucket edges must be strictly increasing".into()));
    }
    if edges[0] != 0.0 || edges[1] != 1.0 {
        return Err(Error::InvalidArgument("first bucket must be [0 s, 1 s)".into()));
    }
    let mut buckets: Vec<Vec<(T, T)>> = vec![Vec::new(); edges.len() - 1];
    for p in pairs {
        if let Some(k) = edges.windows(2).position(|w| p.dt >= w[0] && p.dt < w[1]) {
            buckets[k].push((p.dlog.abs(), p.weight));
        }
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(k, items)| {
            let weighted_count = items.iter().map(|(_, w)| *w).sum();
            let quantiles = (!items.is_empty()).then(|| {
                PROFILE_QUANTILES.map(|q| stats::weighted_quantile(&items, q).expect("non-empty"))
            });
            BucketSummary {
                low: edges[k],
                high: edges[k + 1],
                weighted_count,
                quantiles,
            }
        })
        .collect())
}

pub fn write_profile_csv<T: Real, W: Write>(profile: &[BucketSummary<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "bucket_low_s",
        "bucket_high_s",
        "weighted_count",
        "q05",
        "q25",
        "q50",
        "q75",
        "q95",
    ])?;
    for b in profile {
        let mut row = vec![b.low.to_string(), b.high.to_string(), b.weighted_count.to_string()];
        match &b.quantiles {
            Some(q) => row.extend(q.iter().map(ToString::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), 5)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Joint contention + noise level from concurrent duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate<T> {
    /// Pooled standard deviation of log10 throughput, per-set n−1 degrees
    /// of freedom.
    pub sigma: T,
    /// Percent band holding 68% of jobs: (10^σ − 1) × 100.
    pub band_68: T,
    /// Percent band holding 95% of jobs: (10^(1.96σ) − 1) × 100.
    pub band_95: T,
    pub n_sets: usize,
    pub n_jobs: usize,
    /// Qualifying sets by size.
    pub set_size_histogram: BTreeMap<usize, usize>,
}

/// Pools the within-set variance of duplicate sets whose members all started
/// within `dt_max` seconds of each other and that contain no OoD job.
pub fn noise_estimate<T: Real>(
    sets: &[DuplicateSet<T>],
    ood_job_ids: &HashSet<String>,
    dt_max: f64,
) -> Result<NoiseEstimate<T>> {
    if !(dt_max >= 0.0) {
        return Err(Error::InvalidArgument(format!("dt_max must be >= 0, got {dt_max}")));
    }
    let qualifying: Vec<&DuplicateSet<T>> = sets
        .iter()
        .filter(|s| s.len() >= 2)
        .filter(|s| s.start_spread() <= dt_max)
        .filter(|s| !s.job_ids.iter().any(|id| ood_job_ids.contains(id)))
        .collect();
    if qualifying.is_empty() {
        return Err(Error::insufficient(
            "noise litmus",
            "insufficient concurrent duplicates",
        ));
    }
    let mut ss = T::zero();
    let mut dof = 0usize;
    let mut histogram = BTreeMap::new();
    for s in &qualifying {
        ss += stats::sum_sq_dev(&s.log_throughputs);
        dof += s.len() - 1;
        *histogram.entry(s.len()).or_insert(0) += 1;
    }
    let sigma = (ss / T::lit(dof as f64)).sqrt();
    let (band_68, band_95) = metrics::noise_bands(sigma);
    Ok(NoiseEstimate {
        sigma,
        band_68,
        band_95,
        n_sets: qualifying.len(),
        n_jobs: qualifying.iter().map(|s| s.len()).sum(),
        set_size_histogram: histogram,
    })
}
